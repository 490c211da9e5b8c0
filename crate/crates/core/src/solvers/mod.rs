//! Dual methods with primal recovery.
//!
//! * [`solve_fgm`]: fast gradient method, primal point from weighted averages.
//! * [`solve_sgm`]: stochastic projected subgradient with one random user per step.
//! * [`solve_ellipsoid`]: ellipsoid method, primal point from an accuracy certificate.
//! * [`solve_rgem`]: randomized gradient extrapolation on the regularized dual.

mod certificate;
mod ellipsoid;
mod fgm;
mod iterations;
mod report;
mod rgem;
mod sgm;

pub use certificate::{build_certificate, recover_primal_from_certificate, CertificateWeights};
pub use ellipsoid::{solve_ellipsoid, volume_ratio, EllipsoidStep, EllipsoidTrace};
pub use fgm::{fgm_coefficients, solve_fgm};
pub use iterations::{
    ellipsoid_iterations, fgm_iterations, rgem_iterations, sgm_iterations, theoretical_iterations, TheoryInputs,
};
pub use report::{HistoryRecord, SolverReport, StopReason};
pub use rgem::{rgem_parameters, rgem_regularization, solve_rgem, RgemParameters};
pub use sgm::{solve_sgm, SgmVariant};

pub(crate) use fgm::FgmSchedule;
pub(crate) use report::Recorder;
pub(crate) use rgem::RgemSchedule;
pub(crate) use sgm::{average, SgmSchedule};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{oracle_constants, OracleConstants};
use crate::problem::NetworkProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fgm,
    Sgm1,
    Sgm2,
    Ellipsoid,
    Rgem,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Fgm, Method::Sgm1, Method::Sgm2, Method::Ellipsoid, Method::Rgem];

    pub fn name(self) -> &'static str {
        match self {
            Method::Fgm => "fgm",
            Method::Sgm1 => "sgm1",
            Method::Sgm2 => "sgm2",
            Method::Ellipsoid => "ellipsoid",
            Method::Rgem => "rgem",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Method::Sgm1 | Method::Sgm2 | Method::Rgem)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Run parameters shared by all methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub eps: f64,
    /// Bound on the norm of an optimal dual point.
    #[serde(rename = "R")]
    pub radius: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub record_every: usize,
    /// Failure probability used by the stochastic iteration estimate.
    pub confidence_delta: f64,
    /// Replaces the default subgradient bound `M`.
    #[serde(rename = "M")]
    pub subgradient_bound: Option<f64>,
    /// Known optimal utility; gaps are measured against the best dual
    /// value seen when absent.
    pub reference_value: Option<f64>,
    /// Stop once the gap is below `eps` and the violation below `eps / R`.
    pub early_exit: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps: 1e-2,
            radius: 1.0,
            max_iter: 1_000_000,
            seed: 0,
            record_every: 1,
            confidence_delta: 0.05,
            subgradient_bound: None,
            reference_value: None,
            early_exit: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::Config(format!("R must be positive, got {}", self.radius)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        if !(self.confidence_delta > 0.0 && self.confidence_delta < 1.0) {
            return Err(Error::Config(format!("confidence_delta must lie in (0, 1), got {}", self.confidence_delta)));
        }
        if let Some(m) = self.subgradient_bound {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::Config(format!("M must be positive, got {m}")));
            }
        }
        Ok(())
    }

    /// Problem constants with the configured override of `M` applied.
    pub fn constants(&self, problem: &NetworkProblem) -> OracleConstants {
        let mut c = oracle_constants(problem);
        if let Some(m) = self.subgradient_bound {
            c.subgradient_bound = m;
        }
        c
    }
}

/// Runs `method` with its default settings.
pub fn solve(problem: &NetworkProblem, method: Method, config: &SolverConfig) -> Result<SolverReport> {
    match method {
        Method::Fgm => solve_fgm(problem, config),
        Method::Sgm1 => solve_sgm(problem, config, SgmVariant::V1),
        Method::Sgm2 => solve_sgm(problem, config, SgmVariant::V2),
        Method::Ellipsoid => solve_ellipsoid(problem, config).map(|(r, _)| r),
        Method::Rgem => solve_rgem(problem, config),
    }
}

pub(crate) fn require_lipschitz(constants: &OracleConstants, method: Method) -> Result<f64> {
    constants.lipschitz.ok_or_else(|| {
        Error::Unsupported(format!("{method} needs strongly concave utilities (a Lipschitz dual gradient)"))
    })
}

#[inline]
pub(crate) fn project(v: f64) -> f64 {
    v.max(0.0)
}
