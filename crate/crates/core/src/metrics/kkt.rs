//! Exact solver for quadratic utilities by enumeration of tight link sets.
//!
//! For a candidate set `S` of tight links the multipliers solve
//! `(Cx(λ))_j = b_j` for `j ∈ S` with `λ_j = 0` off `S`. A candidate is
//! accepted when `λ_S ≥ 0` and the links outside `S` are not overloaded,
//! which are exactly the optimality conditions. The rates are unique; among
//! accepted multipliers the one of smallest norm is returned.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::oracle::{primal_response, utility, DualPoint, PrimalPoint};
use crate::problem::{NetworkProblem, UtilitySpec};

/// Largest link count accepted by [`kkt_solve`].
pub const KKT_MAX_LINKS: usize = 10;

const NEWTON_ITERS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct KktSolution {
    pub x: PrimalPoint,
    pub value: f64,
    pub multipliers: DualPoint,
}

pub fn kkt_solve(problem: &NetworkProblem) -> Result<KktSolution> {
    let UtilitySpec::Quadratic { a, sigma } = &problem.utilities else {
        return Err(Error::Unsupported("active-set solver needs quadratic utilities".into()));
    };
    let m = problem.links();
    if m > KKT_MAX_LINKS {
        return Err(Error::Unsupported(format!("active-set enumeration limited to {KKT_MAX_LINKS} links, got {m}")));
    }
    let ctx = Restricted { problem, a, curvature: sigma * problem.users() as f64 };
    let scale = 1.0 + problem.capacities().iter().copied().fold(0.0, f64::max);
    let tol = 1e-9 * scale;

    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << m) {
        let set: Vec<usize> = (0..m).filter(|j| mask & (1 << j) != 0).collect();
        for cand in ctx.candidates(&set) {
            if ctx.verify(&set, &cand, tol) {
                let clipped: Vec<f64> = cand.iter().map(|v| v.max(0.0)).collect();
                let lambda = ctx.embed(&set, &clipped);
                let nrm: f64 = lambda.iter().map(|v| v * v).sum();
                if best.as_ref().is_none_or(|(b, _)| nrm < *b) {
                    best = Some((nrm, lambda));
                }
            }
        }
    }
    let (_, lambda) =
        best.ok_or_else(|| Error::Unsupported("no tight-set candidate satisfied the optimality conditions".into()))?;
    let x = primal_response(problem, &lambda);
    let value = utility(problem, &x);
    Ok(KktSolution { x, value, multipliers: DualPoint::from_vec_unchecked(lambda) })
}

struct Restricted<'a> {
    problem: &'a NetworkProblem,
    a: &'a [f64],
    curvature: f64,
}

impl Restricted<'_> {
    fn embed(&self, set: &[usize], ls: &[f64]) -> Vec<f64> {
        let mut lambda = vec![0.0; self.problem.links()];
        for (&j, &v) in set.iter().zip(ls) {
            lambda[j] = v;
        }
        lambda
    }

    /// Rates and route prices for multipliers supported on `set`.
    /// Negative multipliers are allowed here.
    fn rates(&self, lambda: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let c = self.problem.routing();
        let prices = c.prices(lambda);
        let x = prices.iter().zip(self.a).map(|(p, a)| (a - p).max(0.0) / self.curvature).collect();
        (x, prices)
    }

    /// Convex function whose stationary points solve the tight-set equations.
    fn psi(&self, set: &[usize], ls: &[f64]) -> f64 {
        let lambda = self.embed(set, ls);
        let (x, _) = self.rates(&lambda);
        let b = self.problem.capacities();
        let lin: f64 = set.iter().zip(ls).map(|(&j, v)| v * b[j]).sum();
        lin + x.iter().map(|xk| 0.5 * self.curvature * xk * xk).sum::<f64>()
    }

    fn residual(&self, set: &[usize], x: &[f64]) -> DVector<f64> {
        let loads = self.problem.routing().loads(x);
        let b = self.problem.capacities();
        DVector::from_iterator(set.len(), set.iter().map(|&j| b[j] - loads[j]))
    }

    /// Generalized Hessian of `psi` on the users with positive rate.
    fn hessian(&self, set: &[usize], x: &[f64]) -> DMatrix<f64> {
        let c = self.problem.routing();
        let s = set.len();
        let mut h = DMatrix::zeros(s, s);
        for (k, &xk) in x.iter().enumerate() {
            if xk <= 0.0 {
                continue;
            }
            let idx: Vec<usize> = (0..s).filter(|&i| c.contains(set[i], k)).collect();
            for &i in &idx {
                for &l in &idx {
                    h[(i, l)] += 1.0 / self.curvature;
                }
            }
        }
        h
    }

    fn candidates(&self, set: &[usize]) -> Vec<Vec<f64>> {
        if set.is_empty() {
            return vec![Vec::new()];
        }
        let s = set.len();
        let mut ls = vec![0.0; s];
        for _ in 0..NEWTON_ITERS {
            let lambda = self.embed(set, &ls);
            let (x, _) = self.rates(&lambda);
            let g = self.residual(set, &x);
            if g.amax() <= 1e-14 * (1.0 + g.len() as f64) {
                break;
            }
            let mut h = self.hessian(set, &x);
            let gamma = 1e-10 * (1.0 + h.trace());
            for i in 0..s {
                h[(i, i)] += gamma;
            }
            let Some(d) = h.lu().solve(&(-&g)) else {
                break;
            };
            let slope = g.dot(&d);
            let base = self.psi(set, &ls);
            let mut t = 1.0;
            let mut moved = false;
            while t > 1e-20 {
                let trial: Vec<f64> = ls.iter().zip(d.iter()).map(|(l, di)| l + t * di).collect();
                if self.psi(set, &trial) <= base + 1e-4 * t * slope {
                    ls = trial;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }

        // Exact solve on the final active user set; the pseudo-inverse picks
        // the smallest multipliers when several satisfy the equations.
        let lambda = self.embed(set, &ls);
        let (x, _) = self.rates(&lambda);
        let h = self.hessian(set, &x);
        let c = self.problem.routing();
        let b = self.problem.capacities();
        let rhs = DVector::from_iterator(
            s,
            set.iter().map(|&j| {
                let pull: f64 = c.row(j).iter().filter(|&&k| x[k] > 0.0).map(|&k| self.a[k] / self.curvature).sum();
                pull - b[j]
            }),
        );
        let mut out = vec![ls];
        if let Ok(pinv) = h.pseudo_inverse(1e-12) {
            out.push((pinv * rhs).iter().copied().collect());
        }
        out
    }

    fn verify(&self, set: &[usize], ls: &[f64], tol: f64) -> bool {
        if ls.iter().any(|v| !v.is_finite() || *v < -tol) {
            return false;
        }
        let clipped: Vec<f64> = ls.iter().map(|v| v.max(0.0)).collect();
        let lambda = self.embed(set, &clipped);
        let (x, _) = self.rates(&lambda);
        let loads = self.problem.routing().loads(&x);
        let b = self.problem.capacities();
        (0..self.problem.links()).all(|j| {
            if set.contains(&j) {
                (loads[j] - b[j]).abs() <= tol
            } else {
                loads[j] <= b[j] + tol
            }
        })
    }
}
