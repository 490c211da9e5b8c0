//! Solution quality measures and reference solvers for small instances.

mod grid;
mod kkt;

pub use grid::grid_solve;
pub use kkt::{kkt_solve, KktSolution, KKT_MAX_LINKS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{dual_value, PrimalPoint};
use crate::problem::{NetworkProblem, UtilitySpec};

pub use crate::oracle::utility;

/// `‖[Cx − b]_+‖₂`.
pub fn feasibility_violation(problem: &NetworkProblem, x: &[f64]) -> f64 {
    problem
        .routing()
        .loads(x)
        .iter()
        .zip(problem.capacities())
        .map(|(l, b)| (l - b).max(0.0).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// `φ(λ) − U(x)`.
pub fn duality_gap(problem: &NetworkProblem, lambda: &[f64], x: &[f64]) -> f64 {
    dual_value(problem, lambda) - utility(problem, x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityAssessment {
    pub duality_gap: f64,
    pub feasibility: f64,
    /// `U(x*) − U(x̂)` when the optimum is known.
    pub utility_gap: Option<f64>,
}

pub fn assess(problem: &NetworkProblem, lambda: &[f64], x: &[f64], optimum: Option<f64>) -> QualityAssessment {
    let u = utility(problem, x);
    QualityAssessment {
        duality_gap: dual_value(problem, lambda) - u,
        feasibility: feasibility_violation(problem, x),
        utility_gap: optimum.map(|opt| opt - u),
    }
}

/// Maximizer of `U` over `{x ≥ 0, Cx ≤ b}` and its value.
///
/// Quadratic problems with at most [`KKT_MAX_LINKS`] links are solved
/// exactly by active-set enumeration; otherwise a refined grid search is
/// used, which needs `n ≤ 4`.
pub fn brute_force_solve(problem: &NetworkProblem, grid_points_per_dim: usize) -> Result<(PrimalPoint, f64)> {
    match problem.utilities {
        UtilitySpec::Quadratic { .. } if problem.links() <= KKT_MAX_LINKS => {
            let s = kkt_solve(problem)?;
            Ok((s.x, s.value))
        }
        _ if problem.users() <= grid::MAX_USERS => grid_solve(problem, grid_points_per_dim),
        _ => Err(Error::Unsupported(format!(
            "no reference solver for m={}, n={} with these utilities",
            problem.links(),
            problem.users()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::generate_uniform_network;

    fn tiny() -> NetworkProblem {
        let net = generate_uniform_network(1, 2, 5.0).unwrap();
        NetworkProblem::new(net, UtilitySpec::Quadratic { a: vec![10.0, 10.0], sigma: 0.1 }).unwrap()
    }

    #[test]
    fn feasibility_examples() {
        let p = tiny();
        assert_eq!(feasibility_violation(&p, &[1.0, 2.0]), 0.0);
        assert_eq!(feasibility_violation(&p, &[50.0, 50.0]), 95.0);
        let mut last = f64::INFINITY;
        for i in 0..=20 {
            let t = 1.0 - i as f64 / 20.0;
            let v = feasibility_violation(&p, &[50.0 * t, 50.0 * t]);
            assert!(v <= last);
            last = v;
        }
    }

    #[test]
    fn gap_at_unconstrained_response_is_zero() {
        let p = tiny();
        assert_eq!(duality_gap(&p, &[0.0], &[50.0, 50.0]), 0.0);
    }

    #[test]
    fn tiny_optimum_and_strong_duality() {
        let p = tiny();
        let (x, value) = brute_force_solve(&p, 41).unwrap();
        assert!((x[0] - 2.5).abs() < 1e-12 && (x[1] - 2.5).abs() < 1e-12);
        let s = kkt_solve(&p).unwrap();
        assert!(duality_gap(&p, &s.multipliers, &s.x).abs() < 1e-9);
        assert!((value - utility(&p, &[2.5, 2.5])).abs() < 1e-12);
        let q = assess(&p, &s.multipliers, &s.x, Some(value));
        assert_eq!(q.feasibility, 0.0);
        assert!(q.utility_gap.unwrap().abs() < 1e-12);
    }

    #[test]
    fn huge_capacity_gives_unconstrained_maximizer() {
        let net = generate_uniform_network(1, 2, 1e6).unwrap();
        let p = NetworkProblem::new(net, UtilitySpec::Quadratic { a: vec![10.0, 20.0], sigma: 0.1 }).unwrap();
        let (x, _) = brute_force_solve(&p, 11).unwrap();
        assert_eq!(&*x, &[50.0, 100.0]);
    }
}
