//! Network utility maximization instances.
//!
//! A problem is a routing matrix `C` (links × users, entries in {0,1}), a
//! vector of link capacities `b` and a utility family. Users pay the sum of
//! the prices on their route, `(Cᵀλ)_k`, and links carry the load `(Cx)_j`.

mod file;
mod generate;

pub use file::{load_problem, save_problem, save_problem_with, MatrixFormat};
pub use generate::{generate_random_network, generate_uniform_network, make_quadratic_utilities};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse {0,1} routing matrix stored both by column (user routes) and by
/// row (users crossing each link). Both index lists are sorted.
#[derive(Debug, Clone)]
pub struct RoutingMatrix {
    m: usize,
    n: usize,
    columns: Vec<Vec<usize>>,
    rows: Vec<Vec<usize>>,
}

impl PartialEq for RoutingMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.m == other.m && self.n == other.n && self.columns == other.columns
    }
}

impl RoutingMatrix {
    /// Builds the matrix from per-user link lists. Duplicates are merged.
    pub fn from_columns(m: usize, mut columns: Vec<Vec<usize>>) -> Result<Self> {
        if m == 0 || columns.is_empty() {
            return Err(Error::Validation("routing matrix needs at least one link and one user".into()));
        }
        let n = columns.len();
        let mut rows = vec![Vec::new(); m];
        for (k, col) in columns.iter_mut().enumerate() {
            col.sort_unstable();
            col.dedup();
            for &j in col.iter() {
                if j >= m {
                    return Err(Error::IndexOutOfRange { what: "link", index: j, size: m });
                }
                rows[j].push(k);
            }
        }
        Ok(Self { m, n, columns, rows })
    }

    /// Builds the matrix from a dense row-major {0,1} table with `m` rows.
    pub fn from_dense(rows: &[Vec<u8>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        let mut columns = vec![Vec::new(); n];
        for (j, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Validation(format!("routing row {j} has {} entries, expected {n}", row.len())));
            }
            for (k, &v) in row.iter().enumerate() {
                match v {
                    0 => {}
                    1 => columns[k].push(j),
                    _ => return Err(Error::Validation(format!("routing entry ({j}, {k}) must be 0 or 1, got {v}"))),
                }
            }
        }
        Self::from_columns(m, columns)
    }

    /// An `m × n` matrix of ones.
    pub fn full(m: usize, n: usize) -> Result<Self> {
        Self::from_columns(m, vec![(0..m).collect(); n])
    }

    pub fn links(&self) -> usize {
        self.m
    }

    pub fn users(&self) -> usize {
        self.n
    }

    /// Links used by user `k`, ascending.
    #[inline]
    pub fn column(&self, k: usize) -> &[usize] {
        &self.columns[k]
    }

    /// Users crossing link `j`, ascending.
    #[inline]
    pub fn row(&self, j: usize) -> &[usize] {
        &self.rows[j]
    }

    pub fn contains(&self, j: usize, k: usize) -> bool {
        k < self.n && self.columns[k].binary_search(&j).is_ok()
    }

    pub fn nnz(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }

    pub fn density(&self) -> f64 {
        self.nnz() as f64 / (self.m * self.n) as f64
    }

    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        let mut out = vec![vec![0u8; self.n]; self.m];
        for (k, col) in self.columns.iter().enumerate() {
            for &j in col {
                out[j][k] = 1;
            }
        }
        out
    }

    /// `Cx`, each link summing its users in ascending order.
    pub fn loads(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|users| users.iter().map(|&k| x[k]).sum()).collect()
    }

    /// `Cᵀλ`, each user summing its links in ascending order.
    pub fn prices(&self, lambda: &[f64]) -> Vec<f64> {
        self.columns.iter().map(|col| route_price(col, lambda)).collect()
    }
}

/// Price seen by a user whose route is `col`.
#[inline]
pub fn route_price(col: &[usize], lambda: &[f64]) -> f64 {
    col.iter().map(|&j| lambda[j]).sum()
}

/// Utility family shared by all users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum UtilitySpec {
    /// `u_k(x) = a_k x − (σn/2) x²`.
    Quadratic { a: Vec<f64>, sigma: f64 },
    /// `u_k(x) = ln x` on the box `[x_lo, x_hi]`.
    Logarithmic { x_lo: f64, x_hi: f64 },
}

/// Lower end of the default logarithmic box.
pub const DEFAULT_LOG_FLOOR: f64 = 1e-6;

impl UtilitySpec {
    /// Logarithmic utilities with the default box `[1e-6, max_j b_j]`.
    pub fn logarithmic_for(network: &Network) -> Self {
        let x_hi = network.capacities.iter().copied().fold(f64::MIN, f64::max);
        UtilitySpec::Logarithmic { x_lo: DEFAULT_LOG_FLOOR, x_hi }
    }

    pub fn is_strongly_concave(&self) -> bool {
        matches!(self, UtilitySpec::Quadratic { .. })
    }

    /// Curvature modulus `σn` of the quadratic family.
    pub fn strong_concavity(&self, n: usize) -> Option<f64> {
        match self {
            UtilitySpec::Quadratic { sigma, .. } => Some(sigma * n as f64),
            UtilitySpec::Logarithmic { .. } => None,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        match self {
            UtilitySpec::Quadratic { a, sigma } => {
                if a.len() != n {
                    return Err(Error::Validation(format!(
                        "utility coefficients have length {}, expected {n}",
                        a.len()
                    )));
                }
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(Error::Validation(format!("sigma must be positive, got {sigma}")));
                }
                if let Some((k, v)) = a.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
                    return Err(Error::Validation(format!("utility coefficient must be positive (a[{k}] = {v})")));
                }
            }
            UtilitySpec::Logarithmic { x_lo, x_hi } => {
                if !(x_lo.is_finite() && x_hi.is_finite() && *x_lo > 0.0 && x_lo < x_hi) {
                    return Err(Error::Validation(format!("log box needs 0 < x_lo < x_hi, got [{x_lo}, {x_hi}]")));
                }
            }
        }
        Ok(())
    }
}

/// Routing and capacities without utilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub routing: RoutingMatrix,
    pub capacities: Vec<f64>,
}

impl Network {
    pub fn new(routing: RoutingMatrix, capacities: Vec<f64>) -> Result<Self> {
        let net = Self { routing, capacities };
        net.validate()?;
        Ok(net)
    }

    pub fn links(&self) -> usize {
        self.routing.links()
    }

    pub fn users(&self) -> usize {
        self.routing.users()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.routing.links();
        if self.capacities.len() != m {
            return Err(Error::Validation(format!(
                "capacity vector has length {}, expected {m}",
                self.capacities.len()
            )));
        }
        if let Some((j, b)) = self.capacities.iter().enumerate().find(|(_, b)| !(b.is_finite() && **b > 0.0)) {
            return Err(Error::Validation(format!("capacity must be positive (b[{j}] = {b})")));
        }
        if let Some(k) = (0..self.routing.users()).find(|&k| self.routing.column(k).is_empty()) {
            return Err(Error::Validation(format!("user {k} has an empty route (zero column)")));
        }
        Ok(())
    }
}

/// A complete instance: maximize `Σ u_k(x_k)` subject to `Cx ≤ b`, `x ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkProblem {
    pub network: Network,
    pub utilities: UtilitySpec,
}

impl NetworkProblem {
    pub fn new(network: Network, utilities: UtilitySpec) -> Result<Self> {
        let p = Self { network, utilities };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.utilities.validate(self.users())
    }

    #[inline]
    pub fn links(&self) -> usize {
        self.network.links()
    }

    #[inline]
    pub fn users(&self) -> usize {
        self.network.users()
    }

    #[inline]
    pub fn routing(&self) -> &RoutingMatrix {
        &self.network.routing
    }

    #[inline]
    pub fn capacities(&self) -> &[f64] {
        &self.network.capacities
    }

    /// Utility of user `k` at rate `x`.
    #[inline]
    pub fn user_utility(&self, k: usize, x: f64) -> f64 {
        match &self.utilities {
            UtilitySpec::Quadratic { a, sigma } => a[k] * x - 0.5 * sigma * self.users() as f64 * x * x,
            UtilitySpec::Logarithmic { .. } => x.ln(),
        }
    }

    /// Largest rate any best response of user `k` can take.
    pub fn max_rate(&self, k: usize) -> f64 {
        match &self.utilities {
            UtilitySpec::Quadratic { a, sigma } => a[k] / (sigma * self.users() as f64),
            UtilitySpec::Logarithmic { x_hi, .. } => *x_hi,
        }
    }
}

/// Run-level parameters shared by the solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    /// Bound on the norm of an optimal dual point.
    #[serde(rename = "R")]
    pub radius: f64,
    pub seed: u64,
    pub eps: f64,
}

impl ProblemConfig {
    pub fn new(radius: f64, seed: u64, eps: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Config(format!("R must be positive, got {radius}")));
        }
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::Config(format!("eps must be positive, got {eps}")));
        }
        Ok(Self { radius, seed, eps })
    }
}
