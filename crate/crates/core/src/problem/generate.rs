use rand::Rng;

use super::{Network, RoutingMatrix, UtilitySpec};
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

/// Curvature used by the quadratic experiment family.
pub const QUADRATIC_SIGMA: f64 = 0.1;

fn check_dims(m: usize, n: usize) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::Validation(format!("dimensions must be positive, got m={m}, n={n}")));
    }
    Ok(())
}

/// Every user crosses every link and all capacities equal `b_value`.
pub fn generate_uniform_network(m: usize, n: usize, b_value: f64) -> Result<Network> {
    check_dims(m, n)?;
    Network::new(RoutingMatrix::full(m, n)?, vec![b_value; m])
}

/// Capacities uniform on [1, 6], routing entries Bernoulli(1/2).
///
/// An empty column gets a single uniformly chosen link so that every user
/// has a route.
pub fn generate_random_network(m: usize, n: usize, seed: u64) -> Result<Network> {
    check_dims(m, n)?;
    let mut cap_rng = stream(seed, Stream::Capacities);
    let capacities: Vec<f64> = (0..m).map(|_| cap_rng.random_range(1.0..=6.0)).collect();

    let mut route_rng = stream(seed, Stream::Routing);
    let mut repair_rng = stream(seed, Stream::ColumnRepair);
    let columns = (0..n)
        .map(|_| {
            let mut col: Vec<usize> = (0..m).filter(|_| route_rng.random_bool(0.5)).collect();
            if col.is_empty() {
                col.push(repair_rng.random_range(0..m));
            }
            col
        })
        .collect();
    Network::new(RoutingMatrix::from_columns(m, columns)?, capacities)
}

/// Quadratic utilities with `a_k` uniform on (0, 100] and `σ = 0.1`.
pub fn make_quadratic_utilities(n: usize, seed: u64) -> UtilitySpec {
    let mut rng = stream(seed, Stream::UtilityCoefficients);
    // 1 - U[0,1) lies in (0, 1].
    let a = (0..n).map(|_| 100.0 * (1.0 - rng.random::<f64>())).collect();
    UtilitySpec::Quadratic { a, sigma: QUADRATIC_SIGMA }
}
