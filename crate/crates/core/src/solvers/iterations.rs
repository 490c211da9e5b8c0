//! Scheduled iteration counts.

use super::Method;
use crate::error::{Error, Result};

/// Constants the iteration formulas depend on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryInputs {
    pub links: usize,
    pub users: usize,
    pub lipschitz: Option<f64>,
    pub subgradient_bound: f64,
    pub radius: f64,
    pub eps: f64,
    /// Failure probability for the stochastic estimate.
    pub confidence_delta: f64,
    /// `‖b‖₂²`.
    pub capacity_sq_norm: f64,
}

fn count(x: f64) -> usize {
    if x.is_nan() || x >= usize::MAX as f64 {
        usize::MAX
    } else {
        (x.ceil() as usize).max(1)
    }
}

/// `⌈(2R̂/3)√(37L/ε)⌉` with `R̂ = 3R`.
pub fn fgm_iterations(lipschitz: f64, eps: f64, radius: f64) -> usize {
    let r_hat = 3.0 * radius;
    count(2.0 * r_hat / 3.0 * (37.0 * lipschitz / eps).sqrt())
}

/// Order-of-magnitude count `⌈(A/ε)² ln(MR/(εδ))⌉` with unit constant and
/// `A = 2.5RM`, the only term of the stochastic bound that does not depend
/// on unknown noise constants. A heuristic, not a guarantee.
pub fn sgm_iterations(subgradient_bound: f64, radius: f64, eps: f64, delta: f64) -> usize {
    let a = 2.5 * radius * subgradient_bound;
    let log = (subgradient_bound * radius / (eps * delta)).ln().max(1.0);
    count((a / eps).powi(2) * log)
}

/// `2m(m+1)⌈ln(128MR/ε)⌉`.
pub fn ellipsoid_iterations(links: usize, subgradient_bound: f64, radius: f64, eps: f64) -> usize {
    let m = links as f64;
    let rounds = (128.0 * subgradient_bound * radius / eps).ln().ceil().max(1.0);
    count(2.0 * m * (m + 1.0) * rounds)
}

/// `⌈2(n + √(n² + 128nLR²/ε)) ln(4RA/ε)⌉` with
/// `A = 2(LR + ε/(8R))√(6 + (16LR²n + 8B)/(nε))`, `B = ‖b‖²`.
pub fn rgem_iterations(users: usize, lipschitz: f64, radius: f64, eps: f64, capacity_sq_norm: f64) -> usize {
    let n = users as f64;
    let (l, r) = (lipschitz, radius);
    let a =
        2.0 * (l * r + eps / (8.0 * r)) * (6.0 + (16.0 * l * r * r * n + 8.0 * capacity_sq_norm) / (n * eps)).sqrt();
    let log = (4.0 * r * a / eps).ln().max(0.0);
    count(2.0 * (n + (n * n + 128.0 * n * l * r * r / eps).sqrt()) * log)
}

pub fn theoretical_iterations(method: Method, c: &TheoryInputs) -> Result<usize> {
    let need_l = || {
        c.lipschitz.ok_or_else(|| Error::Unsupported(format!("{method} iteration count needs a Lipschitz constant")))
    };
    Ok(match method {
        Method::Fgm => fgm_iterations(need_l()?, c.eps, c.radius),
        Method::Sgm1 | Method::Sgm2 => sgm_iterations(c.subgradient_bound, c.radius, c.eps, c.confidence_delta),
        Method::Ellipsoid => ellipsoid_iterations(c.links, c.subgradient_bound, c.radius, c.eps),
        Method::Rgem => rgem_iterations(c.users, need_l()?, c.radius, c.eps, c.capacity_sq_norm),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fgm_examples() {
        assert_eq!(fgm_iterations(37.0, 1.0, 1.0), 74);
        assert_eq!(fgm_iterations(37.0, 4.0, 1.0), 37);
    }

    #[test]
    fn ellipsoid_example() {
        let eps = 1.0;
        let mr = std::f64::consts::E / 128.0;
        assert_eq!(ellipsoid_iterations(2, mr, 1.0, eps), 12);
    }

    #[test]
    fn dispatcher_reports_missing_constants() {
        let inputs = TheoryInputs {
            links: 2,
            users: 3,
            lipschitz: None,
            subgradient_bound: 10.0,
            radius: 1.0,
            eps: 0.1,
            confidence_delta: 0.05,
            capacity_sq_norm: 2.0,
        };
        assert!(theoretical_iterations(Method::Fgm, &inputs).is_err());
        assert!(theoretical_iterations(Method::Rgem, &inputs).is_err());
        assert!(theoretical_iterations(Method::Ellipsoid, &inputs).is_ok());
        assert!(theoretical_iterations(Method::Sgm2, &inputs).unwrap() > 1000);
    }

    #[test]
    fn rgem_grows_with_accuracy() {
        let coarse = rgem_iterations(50, 250.0, 10.0, 0.1, 100.0);
        let fine = rgem_iterations(50, 250.0, 10.0, 0.01, 100.0);
        assert!(fine > coarse);
    }
}
