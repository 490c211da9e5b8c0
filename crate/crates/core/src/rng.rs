//! Seeded random streams.
//!
//! Every random array (capacities, routing entries, utility coefficients,
//! solver draws) reads from its own ChaCha8 stream derived from the same
//! seed, so adding a new array never shifts the values of the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream identifiers. Values are part of the reproducibility contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Capacities = 1,
    Routing = 2,
    ColumnRepair = 3,
    UtilityCoefficients = 4,
    SolverDraws = 5,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
