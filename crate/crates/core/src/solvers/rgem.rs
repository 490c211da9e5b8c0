use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{project, require_lipschitz, Method, Recorder, SolverConfig, SolverReport, StopReason};
use crate::error::Result;
use crate::oracle::{dual_value_at, primal_response, response, sq_norm, DualPoint, OracleConstants};
use crate::problem::NetworkProblem;
use crate::rng::{stream, Stream};
use crate::solvers::rgem_iterations;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RgemParameters {
    pub alpha_bar: f64,
    pub alpha: f64,
    pub eta: f64,
    pub tau: f64,
}

impl RgemParameters {
    /// Averaging weight `θ_t = ᾱ^{-t}`.
    pub fn theta(&self, t: usize) -> f64 {
        self.alpha_bar.powi(-(t as i32))
    }
}

/// `ᾱ = 1 − 1/(n + √(n² + 16nL/δ))`, `α = nᾱ`, `η = δᾱ/(1−ᾱ)`,
/// `τ = 1/(n(1−ᾱ)) − 1`.
pub fn rgem_parameters(users: usize, lipschitz: f64, delta: f64) -> RgemParameters {
    let n = users as f64;
    let alpha_bar = 1.0 - 1.0 / (n + (n * n + 16.0 * n * lipschitz / delta).sqrt());
    RgemParameters {
        alpha_bar,
        alpha: n * alpha_bar,
        eta: delta * alpha_bar / (1.0 - alpha_bar),
        tau: 1.0 / (n * (1.0 - alpha_bar)) - 1.0,
    }
}

/// Regularization weight `δ = ε/(8R²)`.
pub fn rgem_regularization(eps: f64, radius: f64) -> f64 {
    eps / (8.0 * radius * radius)
}

pub(crate) struct RgemSchedule {
    pub constants: OracleConstants,
    /// Regularization weight `δ`.
    pub reg: f64,
    pub prm: RgemParameters,
    pub theory: usize,
    pub scheduled: usize,
}

impl RgemSchedule {
    pub fn new(problem: &NetworkProblem, config: &SolverConfig) -> Result<Self> {
        config.validate()?;
        let constants = config.constants(problem);
        let l = require_lipschitz(&constants, Method::Rgem)?;
        let n = problem.users();
        let reg = rgem_regularization(config.eps, config.radius);
        let theory = rgem_iterations(n, l, config.radius, config.eps, sq_norm(problem.capacities()));
        Ok(Self { constants, reg, prm: rgem_parameters(n, l, reg), theory, scheduled: theory.min(config.max_iter) })
    }
}

/// Randomized gradient extrapolation on `φ_δ = φ + (δ/2)‖λ‖²`.
///
/// Every step refreshes the gradient contribution `y_k = b − n C_k x_k` of
/// one random user, evaluated at that user's private smoothed prices. The
/// prices are updated from the extrapolated sum of all contributions. The
/// output is the `θ`-weighted average `λ̄` of the iterates and `x(λ̄)`.
pub fn solve_rgem(problem: &NetworkProblem, config: &SolverConfig) -> Result<SolverReport> {
    let RgemSchedule { constants, reg, prm, theory, scheduled } = RgemSchedule::new(problem, config)?;
    let (m, n) = (problem.links(), problem.users());
    let nf = n as f64;
    let b = problem.capacities();
    let c = problem.routing();

    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    for k in 0..n {
        offsets.push(offsets[k] + c.column(k).len());
    }
    let mut local = vec![0.0; offsets[n]];
    let mut touched = vec![false; n];
    let mut last_x = vec![0.0; n];

    let mut rng = stream(config.seed, Stream::SolverDraws);
    let mut rec = Recorder::new(config);
    let mut lambda = vec![0.0; m];
    let mut y_sum = vec![0.0; m];
    let mut y_step = vec![0.0; m];
    let mut lambda_bar = vec![0.0; m];
    let mut weight = 0.0;
    let inv_n = 1.0 / nf;
    let inv_den = 1.0 / (reg + prm.eta);

    let mut done = scheduled;
    let mut stop = StopReason::Scheduled;
    for t in 1..=scheduled {
        let k = rng.random_range(0..n);
        for j in 0..m {
            let extrapolated = y_sum[j] + prm.alpha * y_step[j];
            lambda[j] = project(prm.eta * lambda[j] - extrapolated * inv_n) * inv_den;
        }

        let col = c.column(k);
        let mine = &mut local[offsets[k]..offsets[k + 1]];
        let mut price = 0.0;
        for (lp, &j) in mine.iter_mut().zip(col) {
            *lp = (lambda[j] + prm.tau * *lp) / (1.0 + prm.tau);
            price += *lp;
        }
        let x = response(problem, k, price);

        let first = !touched[k];
        if first {
            y_step.copy_from_slice(b);
        } else {
            y_step.fill(0.0);
        }
        for &j in col {
            let old = if first { 0.0 } else { b[j] - nf * last_x[k] };
            y_step[j] = (b[j] - nf * x) - old;
        }
        for (s, d) in y_sum.iter_mut().zip(&y_step) {
            *s += d;
        }
        touched[k] = true;
        last_x[k] = x;

        weight = 1.0 + prm.alpha_bar * weight;
        let step = 1.0 / weight;
        for (lb, lj) in lambda_bar.iter_mut().zip(&lambda) {
            *lb += (lj - *lb) * step;
        }

        if rec.due(t, scheduled) {
            let x_hat = primal_response(problem, &lambda_bar);
            let phi = dual_value_at(problem, &lambda_bar, &x_hat);
            if rec.record(problem, t, &lambda, phi, &x_hat) {
                done = t;
                stop = StopReason::EarlyExit;
                break;
            }
        }
    }

    let x_hat = primal_response(problem, &lambda_bar);
    let (history, wall_ms) = rec.finish();
    Ok(SolverReport {
        method: Method::Rgem,
        dual: DualPoint::from_vec_unchecked(lambda_bar),
        primal: x_hat,
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
    use crate::problem::{generate_uniform_network, UtilitySpec};

    #[test]
    fn parameter_examples() {
        let p = rgem_parameters(1, 0.0, 0.3);
        assert_eq!((p.alpha_bar, p.alpha, p.eta, p.tau), (0.5, 0.5, 0.3, 1.0));

        let delta = 0.4;
        let p = rgem_parameters(1, 3.0 * delta / 16.0, delta);
        assert!((p.alpha_bar - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.alpha - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.eta - 2.0 * delta).abs() < 1e-15);
        assert!((p.tau - 2.0).abs() < 1e-12);
        assert!((p.theta(2) - 2.25).abs() < 1e-12);

        assert!((rgem_regularization(0.8, 1.0) - 0.1).abs() < 1e-16);
    }

    #[test]
    fn single_user_is_deterministic() {
        let net = generate_uniform_network(2, 1, 3.0).unwrap();
        let p = NetworkProblem::new(net, UtilitySpec::Quadratic { a: vec![20.0], sigma: 1.0 }).unwrap();
        let cfg = SolverConfig { max_iter: 400, eps: 0.1, radius: 20.0, record_every: 50, ..Default::default() };
        let a = solve_rgem(&p, &cfg).unwrap();
        let b = solve_rgem(&p, &SolverConfig { seed: 99, ..cfg }).unwrap();
        assert!(a.same_trajectory(&b));
        assert_eq!(a.dual, b.dual);
    }
}
