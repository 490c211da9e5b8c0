use super::{project, require_lipschitz, Method, Recorder, SolverConfig, SolverReport, StopReason};
use crate::error::Result;
use crate::oracle::{dual_value_at, gradient_at, primal_response, DualPoint, OracleConstants, PrimalPoint};
use crate::problem::NetworkProblem;
use crate::solvers::fgm_iterations;

/// `(α_t, A_t, τ_t) = ((t+1)/2, (t+1)(t+2)/4, 2/(t+3))`.
pub fn fgm_coefficients(t: usize) -> (f64, f64, f64) {
    let t = t as f64;
    ((t + 1.0) / 2.0, (t + 1.0) * (t + 2.0) / 4.0, 2.0 / (t + 3.0))
}

pub(crate) struct FgmSchedule {
    pub constants: OracleConstants,
    pub lipschitz: f64,
    pub theory: usize,
    pub scheduled: usize,
}

impl FgmSchedule {
    pub fn new(problem: &NetworkProblem, config: &SolverConfig) -> Result<Self> {
        config.validate()?;
        let constants = config.constants(problem);
        let lipschitz = require_lipschitz(&constants, Method::Fgm)?;
        let theory = fgm_iterations(lipschitz, config.eps, config.radius);
        Ok(Self { constants, lipschitz, theory, scheduled: theory.min(config.max_iter) })
    }
}

/// Fast gradient method on the dual, started at `λ⁰ = 0`.
///
/// Each step takes a projected gradient point `y` and a point `z` built
/// from the weighted sum of all past gradients, and mixes them. The primal
/// estimate is the `α`-weighted average of the responses `x(λ^t)`.
pub fn solve_fgm(problem: &NetworkProblem, config: &SolverConfig) -> Result<SolverReport> {
    let FgmSchedule { constants, lipschitz: l, theory, scheduled } = FgmSchedule::new(problem, config)?;
    let (m, n) = (problem.links(), problem.users());

    let mut rec = Recorder::new(config);
    let lambda0 = vec![0.0; m];
    let mut lambda = lambda0.clone();
    let mut x = primal_response(problem, &lambda).into_inner();
    let mut x_hat = x.clone();
    let mut grad_sum = vec![0.0; m];
    let mut a_t = fgm_coefficients(0).1;
    rec.record(problem, 0, &lambda, dual_value_at(problem, &lambda, &x), &x_hat);

    let mut done = scheduled;
    let mut stop = StopReason::Scheduled;
    for t in 0..scheduled {
        let (alpha, _, tau) = fgm_coefficients(t);
        let g = gradient_at(problem, &x);
        for j in 0..m {
            let y = project(lambda[j] - g[j] / l);
            grad_sum[j] += alpha * g[j];
            let z = project(lambda0[j] - grad_sum[j] / l);
            lambda[j] = tau * z + (1.0 - tau) * y;
        }
        x = primal_response(problem, &lambda).into_inner();
        let (alpha_next, a_next, _) = fgm_coefficients(t + 1);
        for k in 0..n {
            x_hat[k] = (a_t * x_hat[k] + alpha_next * x[k]) / a_next;
        }
        a_t = a_next;

        if rec.due(t + 1, scheduled) {
            let phi = dual_value_at(problem, &lambda, &x);
            if rec.record(problem, t + 1, &lambda, phi, &x_hat) {
                done = t + 1;
                stop = StopReason::EarlyExit;
                break;
            }
        }
    }

    let (history, wall_ms) = rec.finish();
    Ok(SolverReport {
        method: Method::Fgm,
        dual: DualPoint::from_vec_unchecked(lambda),
        primal: PrimalPoint::from_vec_unchecked(x_hat),
        iterations: done,
        theoretical_iterations: theory,
        stop,
        history,
        config: *config,
        constants,
        wall_ms,
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::problem::{generate_uniform_network, UtilitySpec};

    #[test]
    fn coefficient_examples() {
        assert_eq!(fgm_coefficients(0), (0.5, 0.5, 2.0 / 3.0));
        assert_eq!(fgm_coefficients(1), (1.0, 1.5, 0.5));
        for t in 1..=100 {
            let (alpha, a, _) = fgm_coefficients(t);
            assert!((a - fgm_coefficients(t - 1).1 - alpha).abs() < 1e-12);
        }
    }

    #[test]
    fn slack_capacity_pins_prices_at_zero() {
        let net = generate_uniform_network(1, 2, 1e6).unwrap();
        let p = NetworkProblem::new(net, UtilitySpec::Quadratic { a: vec![10.0, 10.0], sigma: 0.1 }).unwrap();
        let cfg = SolverConfig { eps: 1e-2, radius: 1.0, ..Default::default() };
        let r = solve_fgm(&p, &cfg).unwrap();
        assert!(r.history.iter().all(|h| h.lambda == vec![0.0]));
        assert_eq!(&*r.primal, &[50.0, 50.0]);
    }

    #[test]
    fn refuses_log_utilities() {
        let net = generate_uniform_network(1, 2, 1.0).unwrap();
        let p = NetworkProblem::new(net.clone(), UtilitySpec::logarithmic_for(&net)).unwrap();
        assert!(matches!(solve_fgm(&p, &SolverConfig::default()), Err(Error::Unsupported(_))));
    }

    #[test]
    fn max_iter_caps_schedule() {
        let net = generate_uniform_network(1, 2, 5.0).unwrap();
        let p = NetworkProblem::new(net, UtilitySpec::Quadratic { a: vec![10.0, 10.0], sigma: 0.1 }).unwrap();
        let cfg = SolverConfig { max_iter: 7, record_every: 3, ..Default::default() };
        let r = solve_fgm(&p, &cfg).unwrap();
        assert_eq!(r.iterations, 7);
        let iters: Vec<usize> = r.history.iter().map(|h| h.iter).collect();
        assert_eq!(iters, vec![0, 3, 6, 7]);
    }
}
