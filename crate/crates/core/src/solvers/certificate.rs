//! Accuracy certificates for the ellipsoid method.
//!
//! The final ellipsoid is narrowest along the left singular vector of its
//! smallest singular value. Both sides of that strip are written as a
//! nonnegative combination of the cuts, walking the trace backwards; the
//! coefficients on the interior steps, normalized, are the certificate.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ellipsoid::{EllipsoidStep, EllipsoidTrace};
use crate::error::{Error, Result};
use crate::oracle::PrimalPoint;

/// Convex weights over the interior steps of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateWeights {
    pub weights: BTreeMap<usize, f64>,
}

impl CertificateWeights {
    pub fn total(&self) -> f64 {
        self.weights.values().sum()
    }
}

pub fn build_certificate(trace: &EllipsoidTrace) -> Result<CertificateWeights> {
    certificate_from(&trace.steps, &trace.final_shape)
}

pub fn recover_primal_from_certificate(trace: &EllipsoidTrace, xi: &CertificateWeights) -> Result<PrimalPoint> {
    recover_from(&trace.steps, xi)
}

pub(crate) fn certificate_from(steps: &[EllipsoidStep], final_shape: &DMatrix<f64>) -> Result<CertificateWeights> {
    let last = steps.last().ok_or_else(|| Error::DegenerateCertificate("empty trace".into()))?;
    if !steps.iter().any(|s| s.in_domain) {
        return Err(Error::EmptyDomainSet);
    }
    if last.in_domain && last.cut.iter().all(|&g| g == 0.0) {
        let weights = BTreeMap::from([(steps.len() - 1, 1.0)]);
        return Ok(CertificateWeights { weights });
    }

    let svd = final_shape.clone().svd(true, false);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let mut i_star = 0;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s < svd.singular_values[i_star] {
            i_star = i;
        }
    }
    let sigma = svd.singular_values[i_star];
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::DegenerateCertificate("final ellipsoid is flat".into()));
    }
    let h: DVector<f64> = u.column(i_star) / (2.0 * sigma);
    let mut g_nu = h.clone();
    let mut g_mu = -h;

    let mut coeff = vec![0.0; steps.len()];
    for (t, step) in steps.iter().enumerate().rev() {
        let g = DVector::from_column_slice(&step.cut);
        let q = step.shape.transpose() * &g;
        let qq = q.norm_squared();
        if qq == 0.0 {
            continue;
        }
        let bq = &step.shape * &q;
        let nu = g_nu.dot(&bq).max(0.0) / qq;
        let mu = g_mu.dot(&bq).max(0.0) / qq;
        g_nu -= &g * nu;
        g_mu -= &g * mu;
        coeff[t] = nu + mu;
    }

    let total: f64 = (0..steps.len()).filter(|&t| steps[t].in_domain).map(|t| coeff[t]).sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::DegenerateCertificate(format!("interior coefficients sum to {total}")));
    }
    let weights = (0..steps.len()).filter(|&t| steps[t].in_domain).map(|t| (t, coeff[t] / total)).collect();
    Ok(CertificateWeights { weights })
}

pub(crate) fn recover_from(steps: &[EllipsoidStep], xi: &CertificateWeights) -> Result<PrimalPoint> {
    if xi.weights.is_empty() {
        return Err(Error::EmptyDomainSet);
    }
    let mut x: Vec<f64> = Vec::new();
    for (&t, &w) in &xi.weights {
        let resp = steps
            .get(t)
            .and_then(|s| s.response.as_ref())
            .ok_or_else(|| Error::Validation(format!("step {t} is not an interior step of the trace")))?;
        if x.is_empty() {
            x = vec![0.0; resp.len()];
        }
        for (xk, rk) in x.iter_mut().zip(resp) {
            *xk += w * rk;
        }
    }
    Ok(PrimalPoint::from_vec_unchecked(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::StopReason;

    fn step(center: Vec<f64>, cut: Vec<f64>, response: Option<Vec<f64>>) -> EllipsoidStep {
        EllipsoidStep { shape: DMatrix::identity(2, 2), center, cut, in_domain: response.is_some(), response }
    }

    fn trace(steps: Vec<EllipsoidStep>) -> EllipsoidTrace {
        EllipsoidTrace { radius: 1.0, steps, final_shape: DMatrix::identity(2, 2) * 0.5, stop: StopReason::Scheduled }
    }

    #[test]
    fn zero_gradient_puts_all_weight_on_last_step() {
        let t = trace(vec![
            step(vec![0.0, 0.0], vec![-1.0, 0.0], None),
            step(vec![0.5, 0.5], vec![1.0, 1.0], Some(vec![1.0])),
            step(vec![0.4, 0.4], vec![0.0, 0.0], Some(vec![2.0])),
        ]);
        let w = build_certificate(&t).unwrap();
        assert_eq!(w.weights, BTreeMap::from([(2, 1.0)]));
        assert_eq!(&*recover_primal_from_certificate(&t, &w).unwrap(), &[2.0]);
    }

    #[test]
    fn no_interior_step_is_an_error() {
        let t = trace(vec![step(vec![0.0, 0.0], vec![-1.0, 0.0], None)]);
        assert!(matches!(build_certificate(&t), Err(Error::EmptyDomainSet)));
        let empty = CertificateWeights { weights: BTreeMap::new() };
        assert!(matches!(recover_primal_from_certificate(&t, &empty), Err(Error::EmptyDomainSet)));
    }

    #[test]
    fn opposite_cuts_give_a_probability_vector() {
        let t = trace(vec![
            step(vec![0.5, 0.5], vec![1.0, 0.0], Some(vec![1.0, 3.0])),
            step(vec![0.2, 0.5], vec![-1.0, 0.0], Some(vec![3.0, 1.0])),
        ]);
        let w = build_certificate(&t).unwrap();
        assert!((w.total() - 1.0).abs() < 1e-12);
        assert!(w.weights.values().all(|&v| v >= 0.0));
        let x = recover_primal_from_certificate(&t, &w).unwrap();
        assert!(x.iter().all(|&v| (1.0..=3.0).contains(&v)));
    }

    #[test]
    fn single_interior_step_recovers_its_response() {
        let t = trace(vec![step(vec![0.5, 0.5], vec![1.0, 0.0], Some(vec![4.0, 5.0]))]);
        let w = CertificateWeights { weights: BTreeMap::from([(0, 1.0)]) };
        assert_eq!(&*recover_primal_from_certificate(&t, &w).unwrap(), &[4.0, 5.0]);
        let outside = CertificateWeights { weights: BTreeMap::from([(3, 1.0)]) };
        assert!(recover_primal_from_certificate(&t, &outside).is_err());
    }
}
