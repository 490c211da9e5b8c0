use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{project, Method, Recorder, SolverConfig, SolverReport, StopReason};
use crate::error::Result;
use crate::oracle::{dual_value, primal_response, response, DualPoint, OracleConstants, PrimalPoint};
use crate::problem::{route_price, NetworkProblem};
use crate::rng::{stream, Stream};
use crate::solvers::sgm_iterations;

/// Primal averaging scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SgmVariant {
    /// Average of the full responses `x(λ^t)`; costs a full oracle call per step.
    V1,
    /// Average of the one-user estimates `n e_ξ x_ξ(λ^t)`.
    V2,
}

impl SgmVariant {
    pub fn method(self) -> Method {
        match self {
            SgmVariant::V1 => Method::Sgm1,
            SgmVariant::V2 => Method::Sgm2,
        }
    }
}

pub(crate) struct SgmSchedule {
    pub constants: OracleConstants,
    pub theory: usize,
    pub scheduled: usize,
    /// Step `R/(M√N)`.
    pub beta: f64,
}

impl SgmSchedule {
    pub fn new(problem: &NetworkProblem, config: &SolverConfig) -> Result<Self> {
        config.validate()?;
        let constants = config.constants(problem);
        let m_bound = constants.subgradient_bound;
        let theory = sgm_iterations(m_bound, config.radius, config.eps, config.confidence_delta);
        let scheduled = theory.min(config.max_iter);
        Ok(Self { constants, theory, scheduled, beta: config.radius / (m_bound * (scheduled as f64).sqrt()) })
    }
}

/// Stochastic projected subgradient method from `λ⁰ = 0`.
///
/// Step `t` draws a user `ξ` uniformly and moves along `b − n C_ξ x_ξ(λ^t)`
/// with step `β = R/(M√N)`. The output is the averaged dual point and the
/// averaged primal estimate of the chosen variant. Both variants consume
/// the random stream identically, so their dual iterates coincide.
pub fn solve_sgm(problem: &NetworkProblem, config: &SolverConfig, variant: SgmVariant) -> Result<SolverReport> {
    let SgmSchedule { constants, theory, scheduled, beta } = SgmSchedule::new(problem, config)?;
    let (m, n) = (problem.links(), problem.users());
    let nf = n as f64;
    let b = problem.capacities();
    let c = problem.routing();

    let mut rng = stream(config.seed, Stream::SolverDraws);
    let mut rec = Recorder::new(config);
    let mut lambda = vec![0.0; m];
    let mut lambda_sum = vec![0.0; m];
    let mut x_sum = vec![0.0; n];
    let mut grad = vec![0.0; m];
    let mut lambda_hat = vec![0.0; m];
    let mut x_hat = vec![0.0; n];

    let mut done = scheduled;
    let mut stop = StopReason::Scheduled;
    for t in 0..scheduled {
        let k = rng.random_range(0..n);
        let col = c.column(k);
        let r = response(problem, k, route_price(col, &lambda));
        match variant {
            SgmVariant::V1 => {
                let full = primal_response(problem, &lambda);
                for (s, v) in x_sum.iter_mut().zip(full.iter()) {
                    *s += v;
                }
            }
            SgmVariant::V2 => x_sum[k] += nf * r,
        }
        for (s, l) in lambda_sum.iter_mut().zip(&lambda) {
            *s += l;
        }
        grad.copy_from_slice(b);
        for &j in col {
            grad[j] -= nf * r;
        }
        for j in 0..m {
            lambda[j] = project(lambda[j] - beta * grad[j]);
        }

        let steps = t + 1;
        if rec.due(steps, scheduled) {
            average(&lambda_sum, steps, &mut lambda_hat);
            average(&x_sum, steps, &mut x_hat);
            let phi = dual_value(problem, &lambda_hat);
            if rec.record(problem, steps, &lambda, phi, &x_hat) {
                done = steps;
                stop = StopReason::EarlyExit;
                break;
            }
        }
    }
    average(&lambda_sum, done, &mut lambda_hat);
    average(&x_sum, done, &mut x_hat);

    let (history, wall_ms) = rec.finish();
    Ok(SolverReport {
        method: variant.method(),
        dual: DualPoint::from_vec_unchecked(lambda_hat),
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

#[inline]
pub(crate) fn average(sum: &[f64], count: usize, out: &mut [f64]) {
    for (o, s) in out.iter_mut().zip(sum) {
        *o = s / count as f64;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{generate_random_network, make_quadratic_utilities};

    fn problem() -> NetworkProblem {
        let net = generate_random_network(3, 8, 2).unwrap();
        NetworkProblem::new(net, make_quadratic_utilities(8, 2)).unwrap()
    }

    #[test]
    fn variants_share_dual_iterates() {
        let p = problem();
        let cfg = SolverConfig { max_iter: 500, seed: 4, record_every: 7, ..Default::default() };
        let a = solve_sgm(&p, &cfg, SgmVariant::V1).unwrap();
        let b = solve_sgm(&p, &cfg, SgmVariant::V2).unwrap();
        assert_eq!(a.dual, b.dual);
        for (ra, rb) in a.history.iter().zip(&b.history) {
            assert_eq!(ra.lambda, rb.lambda);
        }
        assert_ne!(a.primal, b.primal);
    }

    #[test]
    fn seeds_change_the_run() {
        let p = problem();
        let cfg = SolverConfig { max_iter: 200, ..Default::default() };
        let a = solve_sgm(&p, &cfg, SgmVariant::V2).unwrap();
        let b = solve_sgm(&p, &SolverConfig { seed: 1, ..cfg }, SgmVariant::V2).unwrap();
        assert_ne!(a.dual, b.dual);
    }

    #[test]
    fn iterates_stay_nonnegative() {
        let p = problem();
        let cfg = SolverConfig { max_iter: 300, radius: 50.0, ..Default::default() };
        let r = solve_sgm(&p, &cfg, SgmVariant::V2).unwrap();
        assert!(r.history.iter().all(|h| h.lambda.iter().all(|&l| l >= 0.0)));
        assert_eq!(r.iterations, 300);
    }
}
