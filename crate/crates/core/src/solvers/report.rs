use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Method, SolverConfig};
use crate::error::{Error, Result};
use crate::metrics::feasibility_violation;
use crate::oracle::{utility, DualPoint, OracleConstants, PrimalPoint};
use crate::problem::NetworkProblem;

/// One sample of the convergence history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub iter: usize,
    /// Dual value at the method's current output point.
    pub phi: f64,
    /// Reference value minus `U(x̂)`.
    pub gap: Option<f64>,
    /// `‖[Cx̂ − b]_+‖₂`.
    pub feas: f64,
    /// Raw dual iterate at this step.
    pub lambda: Vec<f64>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Ran the full scheduled number of iterations.
    Scheduled,
    /// Gap and violation targets met before the schedule ended.
    EarlyExit,
    /// A zero gradient was met: the current point is optimal.
    ExactOptimum,
    /// The ellipsoid became numerically flat.
    Collapsed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub method: Method,
    /// Output dual point.
    pub dual: DualPoint,
    /// Recovered primal point.
    pub primal: PrimalPoint,
    pub iterations: usize,
    pub theoretical_iterations: usize,
    pub stop: StopReason,
    pub history: Vec<HistoryRecord>,
    pub config: SolverConfig,
    pub constants: OracleConstants,
    pub wall_ms: f64,
    /// Conditions that changed how the output was produced.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SolverReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse { field: String::new(), message: e.to_string() })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Parse { field: e.path().to_string(), message: e.inner().to_string() })
    }

    /// Convergence history as CSV with header `iter,phi,gap,feas,elapsed_ms`.
    ///
    /// With `timing = false` the elapsed column is left empty, which makes
    /// the output a pure function of the problem and the configuration.
    pub fn history_csv(&self, timing: bool) -> String {
        let mut out = String::from("iter,phi,gap,feas,elapsed_ms\n");
        for r in &self.history {
            let gap = r.gap.map(|g| g.to_string()).unwrap_or_default();
            let elapsed = if timing { r.elapsed_ms.to_string() } else { String::new() };
            let _ = writeln!(out, "{},{},{},{},{}", r.iter, r.phi, gap, r.feas, elapsed);
        }
        out
    }

    /// Equal outputs and histories, ignoring timings.
    pub fn same_trajectory(&self, other: &SolverReport) -> bool {
        self.dual == other.dual
            && self.primal == other.primal
            && self.history.len() == other.history.len()
            && self.history.iter().zip(&other.history).all(|(a, b)| {
                a.iter == b.iter
                    && a.phi.to_bits() == b.phi.to_bits()
                    && a.gap.map(f64::to_bits) == b.gap.map(f64::to_bits)
                    && a.feas.to_bits() == b.feas.to_bits()
                    && a.lambda == b.lambda
            })
    }

    pub fn final_record(&self) -> Option<&HistoryRecord> {
        self.history.last()
    }
}

/// Collects history samples and checks the early-exit rule.
pub(crate) struct Recorder {
    reference: Option<f64>,
    every: usize,
    next_due: usize,
    eps: f64,
    feas_target: f64,
    early_exit: bool,
    start: Instant,
    best_dual: f64,
    history: Vec<HistoryRecord>,
}

impl Recorder {
    pub fn new(config: &SolverConfig) -> Self {
        Self {
            reference: config.reference_value,
            every: config.record_every,
            next_due: 0,
            eps: config.eps,
            feas_target: config.eps / config.radius,
            early_exit: config.early_exit,
            start: Instant::now(),
            best_dual: f64::INFINITY,
            history: Vec::new(),
        }
    }

    /// True when `t` is a multiple of the sampling interval or the last
    /// iteration. Must be called with increasing `t`.
    #[inline]
    pub fn due(&mut self, t: usize, last: usize) -> bool {
        if t < self.next_due {
            return t == last;
        }
        self.next_due = (t - t % self.every).saturating_add(self.every);
        t.is_multiple_of(self.every) || t == last
    }

    /// Stores a sample. Returns true when the early-exit targets are met.
    pub fn record(&mut self, problem: &NetworkProblem, t: usize, lambda: &[f64], phi: f64, x_hat: &[f64]) -> bool {
        if self.history.last().is_some_and(|r| r.iter >= t) {
            return false;
        }
        if phi.is_finite() {
            self.best_dual = self.best_dual.min(phi);
        }
        let bound = self.reference.or(self.best_dual.is_finite().then_some(self.best_dual));
        let gap = bound.map(|v| v - utility(problem, x_hat));
        let feas = feasibility_violation(problem, x_hat);
        self.history.push(HistoryRecord {
            iter: t,
            phi,
            gap,
            feas,
            lambda: lambda.to_vec(),
            elapsed_ms: self.elapsed_ms(),
        });
        self.early_exit && gap.is_some_and(|g| g <= self.eps) && feas <= self.feas_target
    }

    pub fn last_iter(&self) -> Option<usize> {
        self.history.last().map(|r| r.iter)
    }

    pub fn elapsed_ms(&self) -> f64 {
        self.start.elapsed().as_secs_f64() * 1e3
    }

    pub fn finish(self) -> (Vec<HistoryRecord>, f64) {
        let ms = self.elapsed_ms();
        (self.history, ms)
    }
}
