use nalgebra::{DMatrix, DVector};

use super::certificate::{certificate_from, recover_from};
use super::{Method, Recorder, SolverConfig, SolverReport, StopReason};
use crate::error::{Error, Result};
use crate::oracle::{dual_value_at, gradient_at, norm, primal_response, DualPoint};
use crate::problem::NetworkProblem;
use crate::solvers::ellipsoid_iterations;

/// State of one ellipsoid step, as consumed by the certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidStep {
    /// `B_t`; the ellipsoid is `{λ^t + B_t u : ‖u‖ ≤ 1}`.
    pub shape: DMatrix<f64>,
    /// `λ^t`.
    pub center: Vec<f64>,
    /// Cut used at this step: `∇φ(λ^t)` inside the domain, a separator of
    /// `{λ ≥ 0, ‖λ‖ ≤ 2R}` outside.
    pub cut: Vec<f64>,
    /// Whether `λ^t` lies in the interior of the domain.
    pub in_domain: bool,
    /// `x(λ^t)` for interior steps.
    pub response: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidTrace {
    pub radius: f64,
    pub steps: Vec<EllipsoidStep>,
    /// `B_N` after the last step.
    pub final_shape: DMatrix<f64>,
    pub stop: StopReason,
}

impl EllipsoidTrace {
    /// Indices of the interior steps.
    pub fn domain_steps(&self) -> Vec<usize> {
        (0..self.steps.len()).filter(|&t| self.steps[t].in_domain).collect()
    }
}

/// `det B_{t+1} / det B_t`, the same at every step.
pub fn volume_ratio(links: usize) -> f64 {
    if links == 1 {
        return 0.5;
    }
    let m = links as f64;
    (m / (m * m - 1.0).sqrt()).powi(links as i32 - 1) * m / (m + 1.0)
}

fn classify(problem: &NetworkProblem, center: &[f64], radius: f64) -> (Vec<f64>, Option<(Vec<f64>, f64)>) {
    let m = center.len();
    let (jmin, vmin) =
        center.iter().copied().enumerate().fold((0, f64::INFINITY), |acc, (j, v)| if v < acc.1 { (j, v) } else { acc });
    if vmin <= 0.0 {
        let mut cut = vec![0.0; m];
        cut[jmin] = -1.0;
        return (cut, None);
    }
    let r = norm(center);
    if r >= 2.0 * radius {
        return (center.iter().map(|v| v / r).collect(), None);
    }
    let x = primal_response(problem, center).into_inner();
    let phi = dual_value_at(problem, center, &x);
    (gradient_at(problem, &x), Some((x, phi)))
}

/// Smallest ellipsoid containing the half of `{c + Bu : ‖u‖ ≤ 1}` where
/// `g·(λ − c) ≤ 0`. In one dimension the interval is halved. Returns
/// `None` when the cut is degenerate for the current shape.
pub(crate) fn cut_step(shape: &DMatrix<f64>, center: &[f64], cut: &[f64]) -> Option<(DMatrix<f64>, Vec<f64>)> {
    let m = center.len();
    if m == 1 {
        if cut[0] == 0.0 {
            return None;
        }
        let half = 0.5 * shape[(0, 0)];
        let next = DMatrix::from_element(1, 1, half);
        return Some((next, vec![center[0] - cut[0].signum() * half]));
    }
    let mf = m as f64;
    let grow = mf / (mf * mf - 1.0).sqrt();
    let shrink = mf / (mf + 1.0);
    let q = shape.transpose() * DVector::from_column_slice(cut);
    let qn = q.norm();
    if !(qn > 0.0 && qn.is_finite()) {
        return None;
    }
    let p = q / qn;
    let bp = shape * &p;
    let moved = center.iter().zip(bp.iter()).map(|(c, d)| c - d / (mf + 1.0)).collect();
    let next = shape * grow + (bp * p.transpose()) * (shrink - grow);
    Some((next, moved))
}

/// Ellipsoid method on the dual over `{λ ≥ 0, ‖λ‖ ≤ 2R}`, started from the
/// ball of radius `2R` around `λ⁰ = 0`. The primal point comes from the
/// accuracy certificate of the full trace.
pub fn solve_ellipsoid(problem: &NetworkProblem, config: &SolverConfig) -> Result<(SolverReport, EllipsoidTrace)> {
    config.validate()?;
    let constants = config.constants(problem);
    let m = problem.links();
    let radius = config.radius;
    let theory = ellipsoid_iterations(m, constants.subgradient_bound, radius, config.eps);
    let scheduled = theory.min(config.max_iter);

    let mut rec = Recorder::new(config);
    let mut shape = DMatrix::<f64>::identity(m, m) * (2.0 * radius);
    let mut center = vec![0.0; m];
    let mut steps: Vec<EllipsoidStep> = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut stop = StopReason::Scheduled;

    for t in 0..scheduled {
        let (cut, inner) = classify(problem, &center, radius);
        let in_domain = inner.is_some();
        let exact = in_domain && cut.iter().all(|&g| g == 0.0);
        let response = inner.map(|(x, phi)| {
            if best.as_ref().is_none_or(|(bp, _)| phi < *bp) {
                best = Some((phi, center.clone()));
            }
            x
        });
        steps.push(EllipsoidStep {
            shape: shape.clone(),
            center: center.clone(),
            cut: cut.clone(),
            in_domain,
            response,
        });
        if exact {
            stop = StopReason::ExactOptimum;
            break;
        }

        match cut_step(&shape, &center, &cut) {
            Some((next, moved)) => {
                shape = next;
                center = moved;
            }
            None => {
                stop = StopReason::Collapsed;
                break;
            }
        }

        let iter = t + 1;
        if rec.due(iter, scheduled) {
            if let Some((phi, out)) = &best {
                let x_hat = match certificate_from(&steps, &shape) {
                    Ok(w) => recover_from(&steps, &w)?,
                    Err(_) => primal_response(problem, out),
                };
                if rec.record(problem, iter, out, *phi, &x_hat) {
                    stop = StopReason::EarlyExit;
                    break;
                }
            }
        }
    }

    let trace = EllipsoidTrace { radius, final_shape: shape, steps, stop };
    let (phi, out) = best.ok_or(Error::EmptyDomainSet)?;
    let mut warnings = Vec::new();
    let x_hat = match certificate_from(&trace.steps, &trace.final_shape) {
        Ok(weights) => recover_from(&trace.steps, &weights)?,
        Err(e @ Error::DegenerateCertificate(_)) => {
            warnings.push(format!("{e}; primal point is x(λ) at the best interior center"));
            primal_response(problem, &out)
        }
        Err(e) => return Err(e),
    };
    let iterations = trace.steps.len();
    if rec.last_iter().is_none_or(|i| i < iterations) {
        rec.record(problem, iterations, &out, phi, &x_hat);
    }

    let (history, wall_ms) = rec.finish();
    let report = SolverReport {
        method: Method::Ellipsoid,
        dual: DualPoint::from_vec_unchecked(out),
        primal: x_hat,
        iterations,
        theoretical_iterations: theory,
        stop,
        history,
        config: *config,
        constants,
        wall_ms,
        warnings,
    };
    Ok((report, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{generate_uniform_network, Network, RoutingMatrix, UtilitySpec};

    #[test]
    fn hand_evaluated_first_step() {
        let shape = DMatrix::<f64>::identity(2, 2) * 2.0;
        let (next, center) = cut_step(&shape, &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((center[0] + 2.0 / 3.0).abs() < 1e-15 && center[1] == 0.0);
        assert!((next[(0, 0)] - 4.0 / 3.0).abs() < 1e-15);
        assert!((next[(1, 1)] - 4.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!(next[(0, 1)].abs() < 1e-15 && next[(1, 0)].abs() < 1e-15);
        assert!((next.determinant() / shape.determinant() - volume_ratio(2)).abs() < 1e-12);
        assert!(cut_step(&shape, &[0.0, 0.0], &[0.0, 0.0]).is_none());
    }

    fn triangle() -> NetworkProblem {
        let c = RoutingMatrix::from_dense(&[vec![1, 1, 0], vec![0, 1, 1]]).unwrap();
        let net = Network::new(c, vec![1.0, 1.0]).unwrap();
        NetworkProblem::new(net.clone(), UtilitySpec::logarithmic_for(&net)).unwrap()
    }

    #[test]
    fn volume_shrinks_by_fixed_factor() {
        let p = triangle();
        let cfg = SolverConfig { radius: 1.5 * 2f64.sqrt(), eps: 1e-2, ..Default::default() };
        let (_, trace) = solve_ellipsoid(&p, &cfg).unwrap();
        let mut dets: Vec<f64> = trace.steps.iter().map(|s| s.shape.determinant()).collect();
        dets.push(trace.final_shape.determinant());
        for w in dets.windows(2) {
            assert!((w[1] / w[0] - volume_ratio(2)).abs() < 1e-10);
        }
    }

    #[test]
    fn optimum_is_never_cut_off() {
        let p = triangle();
        let star = DVector::from_vec(vec![1.5, 1.5]);
        let cfg = SolverConfig { radius: 1.5 * 2f64.sqrt(), eps: 1e-2, ..Default::default() };
        let (_, trace) = solve_ellipsoid(&p, &cfg).unwrap();
        for s in &trace.steps {
            let inv = s.shape.clone().try_inverse().unwrap();
            let u = inv * (&star - DVector::from_vec(s.center.clone()));
            assert!(u.norm() <= 1.0 + 1e-9);
        }
        for t in trace.domain_steps() {
            let c = &trace.steps[t].center;
            assert!(c.iter().all(|&v| v > 0.0) && norm(c) < 2.0 * trace.radius);
        }
    }

    #[test]
    fn one_link_bisects() {
        let net = generate_uniform_network(1, 2, 5.0).unwrap();
        let p = NetworkProblem::new(net, UtilitySpec::Quadratic { a: vec![10.0, 10.0], sigma: 0.1 }).unwrap();
        let cfg = SolverConfig { radius: 10.0, eps: 1e-3, ..Default::default() };
        let (report, trace) = solve_ellipsoid(&p, &cfg).unwrap();
        for w in trace.steps.windows(2) {
            assert_eq!(w[1].shape[(0, 0)], 0.5 * w[0].shape[(0, 0)]);
        }
        assert!((report.dual[0] - 9.5).abs() < 1e-3);
    }
}
