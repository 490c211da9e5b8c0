//! Grid search over the feasible rates of a few users.
//!
//! Each level scans a uniform grid over a box, keeps the best feasible
//! point and shrinks the box around it. A coordinate pass at the end moves
//! every user to its best rate given the others.

use crate::error::{Error, Result};
use crate::oracle::{utility, PrimalPoint};
use crate::problem::{NetworkProblem, UtilitySpec};

pub(crate) const MAX_USERS: usize = 4;

const LEVELS: usize = 60;
/// Half-width of the next box, in cells of the current grid.
const ZOOM_CELLS: f64 = 4.0;
const POLISH_SWEEPS: usize = 100;

pub fn grid_solve(problem: &NetworkProblem, points_per_dim: usize) -> Result<(PrimalPoint, f64)> {
    let n = problem.users();
    if n > MAX_USERS {
        return Err(Error::Unsupported(format!("grid search limited to {MAX_USERS} users, got {n}")));
    }
    if points_per_dim < 2 {
        return Err(Error::Config("grid needs at least 2 points per dimension".into()));
    }
    let c = problem.routing();
    let b = problem.capacities();
    let lo: Vec<f64> = (0..n)
        .map(|_| match problem.utilities {
            UtilitySpec::Quadratic { .. } => 0.0,
            UtilitySpec::Logarithmic { x_lo, .. } => x_lo,
        })
        .collect();
    let hi: Vec<f64> = (0..n)
        .map(|k| {
            let cap = c.column(k).iter().map(|&j| b[j]).fold(f64::INFINITY, f64::min);
            problem.max_rate(k).min(cap)
        })
        .collect();
    if (0..n).any(|k| hi[k] < lo[k]) {
        return Ok(infeasible(problem));
    }

    let feasible = |x: &[f64]| c.loads(x).iter().zip(b).all(|(l, bj)| l <= bj);
    let mut box_lo = lo.clone();
    let mut box_hi = hi.clone();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut point = vec![0.0; n];
    let mut index = vec![0usize; n];
    let steps = (points_per_dim - 1) as f64;

    for _ in 0..LEVELS {
        index.iter_mut().for_each(|i| *i = 0);
        loop {
            for k in 0..n {
                point[k] = box_lo[k] + (box_hi[k] - box_lo[k]) * index[k] as f64 / steps;
            }
            if feasible(&point) {
                let u = utility(problem, &point);
                if best.as_ref().is_none_or(|(_, bu)| u > *bu) {
                    best = Some((point.clone(), u));
                }
            }
            // Odometer increment; the first coordinate varies fastest.
            let mut k = 0;
            while k < n {
                index[k] += 1;
                if index[k] < points_per_dim {
                    break;
                }
                index[k] = 0;
                k += 1;
            }
            if k == n {
                break;
            }
        }
        let Some((centre, _)) = &best else {
            return Ok(infeasible(problem));
        };
        let mut shrunk = false;
        for k in 0..n {
            let half = ZOOM_CELLS * (box_hi[k] - box_lo[k]) / steps;
            let (l, h) = ((centre[k] - half).max(lo[k]), (centre[k] + half).min(hi[k]));
            shrunk |= l > box_lo[k] || h < box_hi[k];
            box_lo[k] = l;
            box_hi[k] = h;
        }
        if !shrunk {
            break;
        }
    }

    let (mut x, mut u) = best.expect("checked above");
    for _ in 0..POLISH_SWEEPS {
        let mut improved = false;
        for k in 0..n {
            let loads = c.loads(&x);
            let slack = c.column(k).iter().map(|&j| b[j] - loads[j] + x[k]).fold(f64::INFINITY, f64::min);
            let target = problem.max_rate(k).min(slack);
            if target < lo[k] {
                continue;
            }
            let mut trial = x.clone();
            trial[k] = target;
            let tu = utility(problem, &trial);
            if tu > u && feasible(&trial) {
                x = trial;
                u = tu;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    Ok((PrimalPoint::from_vec_unchecked(x), u))
}

fn infeasible(problem: &NetworkProblem) -> (PrimalPoint, f64) {
    let x = vec![0.0; problem.users()];
    let u = utility(problem, &x);
    (PrimalPoint::from_vec_unchecked(x), u)
}
