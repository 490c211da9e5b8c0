//! Dual function, gradients and user best responses.
//!
//! For prices `λ ≥ 0` each user picks `x_k(λ) = argmax u_k(x) − p_k x` with
//! `p = Cᵀλ`. The dual function is
//! `φ(λ) = ⟨λ, b⟩ + Σ_k (u_k(x_k(λ)) − p_k x_k(λ))` and its gradient is
//! `b − Cx(λ)`.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{route_price, NetworkProblem, UtilitySpec};

/// Nonnegative link prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DualPoint(Vec<f64>);

/// Nonnegative user rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PrimalPoint(Vec<f64>);

macro_rules! nonneg_point {
    ($ty:ident, $what:literal) => {
        impl $ty {
            pub fn new(v: Vec<f64>) -> Result<Self> {
                if let Some((i, x)) = v.iter().enumerate().find(|(_, x)| x.is_nan() || **x < 0.0) {
                    return Err(Error::Validation(format!(
                        concat!($what, " component {} must be nonnegative, got {}"),
                        i, x
                    )));
                }
                Ok(Self(v))
            }

            pub fn zeros(len: usize) -> Self {
                Self(vec![0.0; len])
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }

            /// Wraps a vector produced by a projection or a best response.
            pub(crate) fn from_vec_unchecked(v: Vec<f64>) -> Self {
                debug_assert!(v.iter().all(|x| *x >= 0.0));
                Self(v)
            }
        }

        impl Deref for $ty {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }
    };
}

nonneg_point!(DualPoint, "price");
nonneg_point!(PrimalPoint, "rate");

/// Best response of user `k` to the route price `price`.
pub fn best_response(problem: &NetworkProblem, k: usize, price: f64) -> Result<f64> {
    check_user(problem, k)?;
    Ok(response(problem, k, price))
}

fn check_user(problem: &NetworkProblem, k: usize) -> Result<()> {
    let n = problem.users();
    if k >= n {
        return Err(Error::IndexOutOfRange { what: "user", index: k, size: n });
    }
    Ok(())
}

#[inline]
pub(crate) fn response(problem: &NetworkProblem, k: usize, price: f64) -> f64 {
    match &problem.utilities {
        UtilitySpec::Quadratic { a, sigma } => (a[k] - price).max(0.0) / (sigma * problem.users() as f64),
        UtilitySpec::Logarithmic { x_lo, x_hi } => {
            if price > 0.0 {
                (1.0 / price).clamp(*x_lo, *x_hi)
            } else {
                *x_hi
            }
        }
    }
}

/// `x(λ)`.
pub fn primal_response(problem: &NetworkProblem, lambda: &[f64]) -> PrimalPoint {
    let c = problem.routing();
    PrimalPoint::from_vec_unchecked(
        (0..problem.users()).map(|k| response(problem, k, route_price(c.column(k), lambda))).collect(),
    )
}

/// `U(x) = Σ_k u_k(x_k)`.
pub fn utility(problem: &NetworkProblem, x: &[f64]) -> f64 {
    x.iter().enumerate().map(|(k, &xk)| problem.user_utility(k, xk)).sum()
}

/// `φ(λ)` given the already computed response `x = x(λ)`.
pub(crate) fn dual_value_at(problem: &NetworkProblem, lambda: &[f64], x: &[f64]) -> f64 {
    let c = problem.routing();
    let linear: f64 = lambda.iter().zip(problem.capacities()).map(|(l, b)| l * b).sum();
    let users: f64 = (0..problem.users())
        .map(|k| {
            let p = route_price(c.column(k), lambda);
            problem.user_utility(k, x[k]) - p * x[k]
        })
        .sum();
    linear + users
}

pub fn dual_value(problem: &NetworkProblem, lambda: &[f64]) -> f64 {
    let x = primal_response(problem, lambda);
    dual_value_at(problem, lambda, &x)
}

/// `b − Cx`.
pub(crate) fn gradient_at(problem: &NetworkProblem, x: &[f64]) -> Vec<f64> {
    let loads = problem.routing().loads(x);
    problem.capacities().iter().zip(loads).map(|(b, l)| b - l).collect()
}

pub fn dual_gradient(problem: &NetworkProblem, lambda: &[f64]) -> Vec<f64> {
    gradient_at(problem, &primal_response(problem, lambda))
}

/// One-user estimate `b − n C_k x_k(λ)` of the gradient.
pub fn stochastic_gradient(problem: &NetworkProblem, lambda: &[f64], k: usize) -> Result<Vec<f64>> {
    check_user(problem, k)?;
    let col = problem.routing().column(k);
    let xk = response(problem, k, route_price(col, lambda));
    let mut g = problem.capacities().to_vec();
    let n = problem.users() as f64;
    for &j in col {
        g[j] -= n * xk;
    }
    Ok(g)
}

/// `φ(λ) + (δ/2)‖λ‖²`.
pub fn regularized_value(problem: &NetworkProblem, lambda: &[f64], delta: f64) -> f64 {
    dual_value(problem, lambda) + 0.5 * delta * sq_norm(lambda)
}

/// `∇φ(λ) + δλ`.
pub fn regularized_gradient(problem: &NetworkProblem, lambda: &[f64], delta: f64) -> Vec<f64> {
    let mut g = dual_gradient(problem, lambda);
    for (gj, lj) in g.iter_mut().zip(lambda) {
        *gj += delta * lj;
    }
    g
}

/// Problem constants used by step sizes and iteration counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConstants {
    /// Lipschitz constant of `∇φ`; absent without strong concavity.
    #[serde(rename = "L")]
    pub lipschitz: Option<f64>,
    /// Bound on the (stochastic) subgradient norm.
    #[serde(rename = "M")]
    pub subgradient_bound: f64,
    pub mu: Option<f64>,
}

pub fn oracle_constants(problem: &NetworkProblem) -> OracleConstants {
    let m = problem.links() as f64;
    let n = problem.users();
    let mu = problem.utilities.strong_concavity(n);
    let lipschitz = mu.map(|mu| n as f64 * m * m / mu);
    let worst =
        (0..n).map(|k| (problem.routing().column(k).len() as f64).sqrt() * problem.max_rate(k)).fold(0.0, f64::max);
    OracleConstants { lipschitz, subgradient_bound: norm(problem.capacities()) + n as f64 * worst, mu }
}

#[inline]
pub(crate) fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

#[inline]
pub(crate) fn norm(v: &[f64]) -> f64 {
    sq_norm(v).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{generate_uniform_network, Network, RoutingMatrix};

    fn tiny() -> NetworkProblem {
        let net = generate_uniform_network(1, 2, 5.0).unwrap();
        NetworkProblem::new(net, UtilitySpec::Quadratic { a: vec![10.0, 10.0], sigma: 0.1 }).unwrap()
    }

    fn log_box(hi: f64) -> NetworkProblem {
        let net = generate_uniform_network(1, 1, 1.0).unwrap();
        NetworkProblem::new(net, UtilitySpec::Logarithmic { x_lo: 1e-6, x_hi: hi }).unwrap()
    }

    #[test]
    fn best_responses() {
        let p = tiny();
        assert_eq!(best_response(&p, 0, 0.0).unwrap(), 50.0);
        assert_eq!(best_response(&p, 0, 10.0).unwrap(), 0.0);
        assert!(matches!(best_response(&p, 2, 0.0), Err(Error::IndexOutOfRange { .. })));
        let p = log_box(1e3);
        assert_eq!(best_response(&p, 0, 0.5).unwrap(), 2.0);
        assert_eq!(best_response(&p, 0, 0.0).unwrap(), 1e3);
        assert_eq!(best_response(&p, 0, 1e9).unwrap(), 1e-6);
    }

    #[test]
    fn tiny_instance_values() {
        let p = tiny();
        assert_eq!(&*primal_response(&p, &[0.0]), &[50.0, 50.0]);
        assert_eq!(dual_value(&p, &[0.0]), 500.0);
        assert_eq!(dual_gradient(&p, &[0.0]), vec![-95.0]);
        assert_eq!(stochastic_gradient(&p, &[0.0], 0).unwrap(), vec![-95.0]);
        assert!(stochastic_gradient(&p, &[0.0], 5).is_err());
        assert_eq!(&*primal_response(&p, &[12.0]), &[0.0, 0.0]);
        assert_eq!(dual_value(&p, &[12.0]), 60.0);
        assert_eq!(dual_gradient(&p, &[12.0]), vec![5.0]);
    }

    #[test]
    fn off_route_component_is_capacity() {
        let c = RoutingMatrix::from_columns(2, vec![vec![0], vec![0, 1]]).unwrap();
        let net = Network::new(c, vec![3.0, 4.0]).unwrap();
        let p = NetworkProblem::new(net, UtilitySpec::Quadratic { a: vec![10.0, 10.0], sigma: 0.1 }).unwrap();
        let g = stochastic_gradient(&p, &[1.0, 1.0], 0).unwrap();
        assert_eq!(g[1], 4.0);
    }

    #[test]
    fn regularizer_vanishes_at_zero() {
        let p = tiny();
        assert_eq!(regularized_value(&p, &[0.0], 0.3), dual_value(&p, &[0.0]));
        assert_eq!(regularized_gradient(&p, &[0.0], 0.3), dual_gradient(&p, &[0.0]));
        let g = regularized_gradient(&p, &[2.0], 0.25);
        assert_eq!(g[0] - dual_gradient(&p, &[2.0])[0], 0.5);
    }

    #[test]
    fn constants() {
        let net = generate_uniform_network(2, 1500, 5.0).unwrap();
        let p = NetworkProblem::new(net, UtilitySpec::Quadratic { a: vec![1.0; 1500], sigma: 0.1 }).unwrap();
        let c = oracle_constants(&p);
        assert!((c.lipschitz.unwrap() - 40.0).abs() < 1e-9);
        assert_eq!(c.mu, Some(150.0));

        let net = generate_uniform_network(1, 1, 1.0).unwrap();
        let p = NetworkProblem::new(net, UtilitySpec::Quadratic { a: vec![1.0], sigma: 1.0 }).unwrap();
        assert_eq!(oracle_constants(&p).lipschitz, Some(1.0));

        let c = oracle_constants(&log_box(5.0));
        assert_eq!(c.lipschitz, None);
        assert_eq!(c.mu, None);
        assert_eq!(c.subgradient_bound, 1.0 + 5.0);
    }

    #[test]
    fn points_reject_negatives() {
        assert!(DualPoint::new(vec![0.0, -1.0]).is_err());
        assert!(PrimalPoint::new(vec![f64::NAN]).is_err());
        assert_eq!(&*DualPoint::new(vec![1.0]).unwrap(), &[1.0]);
    }
}
