//! Message-passing execution of the decomposable methods.
//!
//! Links and users are in-memory actors that only talk along the edges of
//! the routing matrix. One tick is one iteration of the algorithm; within a
//! tick, messages are delivered in ascending (link, user) order. The dual
//! iterates match the centralized solvers exactly.

mod actors;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{NetworkProblem, RoutingMatrix};
use crate::solvers::{Method, SolverConfig, SolverReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActorId {
    Link(usize),
    User(usize),
}

impl fmt::Display for ActorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActorId::Link(j) => write!(f, "link:{j}"),
            ActorId::User(k) => write!(f, "user:{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    /// Link price `λ_j`, from a link to a user on it.
    PriceUpdate,
    /// User rate `x_k`, from a user to a link on its route.
    RateReport,
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MessageKind::PriceUpdate => "price_update",
            MessageKind::RateReport => "rate_report",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub kind: MessageKind,
    pub from: ActorId,
    pub to: ActorId,
    pub payload: f64,
    pub tick: usize,
}

impl Message {
    /// The `(link, user)` edge the message travels on, if the endpoints
    /// fit its kind.
    pub fn edge(&self) -> Option<(usize, usize)> {
        match (self.kind, self.from, self.to) {
            (MessageKind::PriceUpdate, ActorId::Link(j), ActorId::User(k)) => Some((j, k)),
            (MessageKind::RateReport, ActorId::User(k), ActorId::Link(j)) => Some((j, k)),
            _ => None,
        }
    }

    /// True when the message follows an edge of `routing`.
    pub fn is_local(&self, routing: &RoutingMatrix) -> bool {
        match self.edge() {
            Some((j, k)) => j < routing.links() && k < routing.users() && routing.contains(j, k),
            None => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistributedMethod {
    Fgm,
    Sgm,
    Rgem,
}

impl DistributedMethod {
    pub const ALL: [DistributedMethod; 3] = [DistributedMethod::Fgm, DistributedMethod::Sgm, DistributedMethod::Rgem];

    /// Centralized counterpart with the same dual iterates.
    pub fn centralized(self) -> Method {
        match self {
            DistributedMethod::Fgm => Method::Fgm,
            DistributedMethod::Sgm => Method::Sgm2,
            DistributedMethod::Rgem => Method::Rgem,
        }
    }
}

impl TryFrom<Method> for DistributedMethod {
    type Error = Error;
    fn try_from(m: Method) -> Result<Self> {
        match m {
            Method::Fgm => Ok(DistributedMethod::Fgm),
            Method::Sgm2 => Ok(DistributedMethod::Sgm),
            Method::Rgem => Ok(DistributedMethod::Rgem),
            other => Err(Error::Unsupported(format!("{other} has no distributed form"))),
        }
    }
}

impl fmt::Display for DistributedMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistributedMethod::Fgm => "fgm",
            DistributedMethod::Sgm => "sgm",
            DistributedMethod::Rgem => "rgem",
        })
    }
}

impl FromStr for DistributedMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fgm" => Ok(DistributedMethod::Fgm),
            "sgm" | "sgm2" => Ok(DistributedMethod::Sgm),
            "rgem" => Ok(DistributedMethod::Rgem),
            _ => Err(Error::Config(format!("unknown distributed method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DistributedRun {
    pub report: SolverReport,
    pub message_count: u64,
    /// Every delivered message, when requested.
    pub messages: Option<Vec<Message>>,
}

pub fn run_distributed(
    method: DistributedMethod,
    problem: &NetworkProblem,
    config: &SolverConfig,
) -> Result<(SolverReport, u64)> {
    let run = simulate(method, problem, config, false)?;
    Ok((run.report, run.message_count))
}

/// Like [`run_distributed`], optionally keeping the full message log.
pub fn simulate(
    method: DistributedMethod,
    problem: &NetworkProblem,
    config: &SolverConfig,
    keep_messages: bool,
) -> Result<DistributedRun> {
    problem.validate()?;
    let mut bus = Bus::new(problem.routing(), keep_messages);
    let report = match method {
        DistributedMethod::Fgm => actors::fgm(problem, config, &mut bus)?,
        DistributedMethod::Sgm => actors::sgm(problem, config, &mut bus)?,
        DistributedMethod::Rgem => actors::rgem(problem, config, &mut bus)?,
    };
    Ok(DistributedRun { report, message_count: bus.count, messages: bus.log })
}

/// Largest componentwise difference of the recorded dual iterates.
pub fn compare_traces(a: &SolverReport, b: &SolverReport) -> Result<f64> {
    if a.history.len() != b.history.len() {
        return Err(Error::MismatchedTraces(format!("{} records against {}", a.history.len(), b.history.len())));
    }
    let mut worst = 0.0_f64;
    for (ra, rb) in a.history.iter().zip(&b.history) {
        if ra.iter != rb.iter || ra.lambda.len() != rb.lambda.len() {
            return Err(Error::MismatchedTraces(format!(
                "record at iteration {} (m = {}) against iteration {} (m = {})",
                ra.iter,
                ra.lambda.len(),
                rb.iter,
                rb.lambda.len()
            )));
        }
        for (x, y) in ra.lambda.iter().zip(&rb.lambda) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}

/// Writes `tick,kind,from,to,payload` rows.
pub fn write_messages_csv<W: Write>(messages: &[Message], mut out: W) -> Result<()> {
    writeln!(out, "tick,kind,from,to,payload")?;
    for m in messages {
        writeln!(out, "{},{},{},{},{}", m.tick, m.kind, m.from, m.to, m.payload)?;
    }
    Ok(())
}

/// Synchronous delivery with a locality check on every post.
pub(crate) struct Bus<'a> {
    routing: &'a RoutingMatrix,
    pending: Vec<Message>,
    count: u64,
    log: Option<Vec<Message>>,
}

impl<'a> Bus<'a> {
    fn new(routing: &'a RoutingMatrix, keep: bool) -> Self {
        Self { routing, pending: Vec::new(), count: 0, log: keep.then(Vec::new) }
    }

    pub fn post(&mut self, kind: MessageKind, from: ActorId, to: ActorId, payload: f64, tick: usize) -> Result<()> {
        let msg = Message { kind, from, to, payload, tick };
        if !msg.is_local(self.routing) {
            return Err(Error::Validation(format!("{kind} from {from} to {to} does not follow a route")));
        }
        self.pending.push(msg);
        Ok(())
    }

    /// Hands out everything posted since the last delivery.
    pub fn deliver(&mut self) -> Vec<Message> {
        let mut batch = std::mem::take(&mut self.pending);
        batch.sort_by_key(|m| m.edge());
        self.count += batch.len() as u64;
        if let Some(log) = &mut self.log {
            log.extend_from_slice(&batch);
        }
        batch
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{generate_random_network, make_quadratic_utilities};
    use crate::solvers::solve;

    fn problem(m: usize, n: usize, seed: u64) -> NetworkProblem {
        let net = generate_random_network(m, n, seed).unwrap();
        NetworkProblem::new(net, make_quadratic_utilities(n, seed)).unwrap()
    }

    fn config() -> SolverConfig {
        SolverConfig { max_iter: 150, seed: 3, record_every: 1, eps: 0.5, radius: 40.0, ..Default::default() }
    }

    #[test]
    fn iterates_match_centralized() {
        let p = problem(3, 10, 7);
        let cfg = config();
        for method in DistributedMethod::ALL {
            let central = solve(&p, method.centralized(), &cfg).unwrap();
            let (dist, _) = run_distributed(method, &p, &cfg).unwrap();
            assert!(central.same_trajectory(&dist), "{method}");
            assert_eq!(compare_traces(&central, &dist).unwrap(), 0.0);
            assert_eq!(central.dual, dist.dual);
            assert_eq!(central.primal, dist.primal);
        }
    }

    #[test]
    fn message_counts() {
        let p = problem(4, 9, 2);
        let cfg = config();
        let (r, count) = run_distributed(DistributedMethod::Fgm, &p, &cfg).unwrap();
        assert_eq!(count, 2 * p.routing().nnz() as u64 * r.iterations as u64);

        for method in [DistributedMethod::Sgm, DistributedMethod::Rgem] {
            let run = simulate(method, &p, &cfg, true).unwrap();
            let log = run.messages.unwrap();
            assert_eq!(log.len() as u64, run.message_count);
            for tick in 0..run.report.iterations {
                let here: Vec<&Message> = log.iter().filter(|m| m.tick == tick).collect();
                let ActorId::User(k) = here[0].to else { panic!("tick starts with prices") };
                assert_eq!(here.len(), 2 * p.routing().column(k).len());
            }
        }
    }

    #[test]
    fn every_message_is_local_and_ordered() {
        let p = problem(5, 12, 11);
        let run = simulate(DistributedMethod::Fgm, &p, &config(), true).unwrap();
        let log = run.messages.unwrap();
        assert!(log.iter().all(|m| m.is_local(p.routing())));
        for w in log.windows(2) {
            if w[0].tick == w[1].tick && w[0].kind == w[1].kind {
                assert!(w[0].edge() < w[1].edge());
            }
        }
    }

    #[test]
    fn sgm_moves_route_prices_and_drifts_the_rest() {
        let p = problem(4, 6, 5);
        let cfg = SolverConfig { max_iter: 60, ..config() };
        let run = simulate(DistributedMethod::Sgm, &p, &cfg, true).unwrap();
        let log = run.messages.unwrap();
        let sched = crate::solvers::SgmSchedule::new(&p, &cfg).unwrap();
        let hist = &run.report.history;
        for t in 1..hist.len() {
            let k = match log.iter().find(|m| m.tick == t).unwrap().to {
                ActorId::User(k) => k,
                ActorId::Link(_) => unreachable!(),
            };
            for j in 0..p.links() {
                let (before, after) = (hist[t - 1].lambda[j], hist[t].lambda[j]);
                if !p.routing().contains(j, k) {
                    let drift = (before - sched.beta * p.capacities()[j]).max(0.0);
                    assert_eq!(after, drift);
                }
            }
        }
    }

    #[test]
    fn locality_violation_is_rejected() {
        let routing = RoutingMatrix::from_dense(&[vec![1, 0], vec![0, 1]]).unwrap();
        let mut bus = Bus::new(&routing, false);
        assert!(bus.post(MessageKind::PriceUpdate, ActorId::Link(0), ActorId::User(1), 1.0, 0).is_err());
        assert!(bus.post(MessageKind::RateReport, ActorId::Link(0), ActorId::User(0), 1.0, 0).is_err());
        bus.post(MessageKind::PriceUpdate, ActorId::Link(1), ActorId::User(1), 1.0, 0).unwrap();
        bus.post(MessageKind::PriceUpdate, ActorId::Link(0), ActorId::User(0), 1.0, 0).unwrap();
        let batch = bus.deliver();
        assert_eq!(batch[0].edge(), Some((0, 0)));
        assert_eq!(bus.count, 2);
    }

    #[test]
    fn compare_rejects_different_grids() {
        let p = problem(3, 5, 1);
        let a = solve(&p, Method::Fgm, &config()).unwrap();
        let b = solve(&p, Method::Fgm, &SolverConfig { record_every: 2, ..config() }).unwrap();
        assert!(matches!(compare_traces(&a, &b), Err(Error::MismatchedTraces(_))));
        assert_eq!(compare_traces(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn sgm_seeds_differ() {
        let p = problem(3, 10, 4);
        let (a, _) = run_distributed(DistributedMethod::Sgm, &p, &config()).unwrap();
        let (b, _) = run_distributed(DistributedMethod::Sgm, &p, &SolverConfig { seed: 8, ..config() }).unwrap();
        assert!(compare_traces(&a, &b).unwrap() > 0.0);
    }

    #[test]
    fn csv_dump() {
        let p = problem(2, 3, 1);
        let run = simulate(DistributedMethod::Rgem, &p, &SolverConfig { max_iter: 2, ..config() }, true).unwrap();
        let mut buf = Vec::new();
        write_messages_csv(run.messages.as_deref().unwrap(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("tick,kind,from,to,payload"));
        assert!(lines.next().unwrap().starts_with("0,price_update,link:"));
    }
}
