//! Link and user state machines for each protocol.

use rand::Rng;

use super::{ActorId, Bus, Message, MessageKind};
use crate::error::{Error, Result};
use crate::oracle::{dual_value, dual_value_at, primal_response, response, DualPoint, PrimalPoint};
use crate::problem::NetworkProblem;
use crate::rng::{stream, Stream};
use crate::solvers::{
    average, fgm_coefficients, project, FgmSchedule, Method, Recorder, RgemSchedule, SgmSchedule, SolverConfig,
    SolverReport, StopReason,
};

/// A link sees only its own users.
struct Link {
    id: usize,
    capacity: f64,
    users: Vec<usize>,
    lambda: f64,
}

/// A user sees only the links on its route.
struct User {
    id: usize,
    links: Vec<usize>,
    prices: Vec<f64>,
}

fn links_of(problem: &NetworkProblem) -> Vec<Link> {
    (0..problem.links())
        .map(|j| Link {
            id: j,
            capacity: problem.capacities()[j],
            users: problem.routing().row(j).to_vec(),
            lambda: 0.0,
        })
        .collect()
}

fn users_of(problem: &NetworkProblem) -> Vec<User> {
    (0..problem.users())
        .map(|k| {
            let links = problem.routing().column(k).to_vec();
            User { id: k, prices: vec![0.0; links.len()], links }
        })
        .collect()
}

fn slot(ids: &[usize], id: usize) -> Result<usize> {
    ids.binary_search(&id).map_err(|_| Error::Validation(format!("actor {id} is not a neighbour")))
}

impl Link {
    fn send_price(&self, bus: &mut Bus, tick: usize) -> Result<()> {
        for &k in &self.users {
            bus.post(MessageKind::PriceUpdate, ActorId::Link(self.id), ActorId::User(k), self.lambda, tick)?;
        }
        Ok(())
    }
}

impl User {
    fn receive(&mut self, msg: &Message) -> Result<usize> {
        let ActorId::Link(j) = msg.from else {
            return Err(Error::Validation(format!("user {} got a message from {}", self.id, msg.from)));
        };
        let pos = slot(&self.links, j)?;
        self.prices[pos] = msg.payload;
        Ok(pos)
    }

    fn price(&self) -> f64 {
        self.prices.iter().sum()
    }

    fn report(&self, rate: f64, bus: &mut Bus, tick: usize) -> Result<()> {
        for &j in &self.links {
            bus.post(MessageKind::RateReport, ActorId::User(self.id), ActorId::Link(j), rate, tick)?;
        }
        Ok(())
    }
}

fn target(msg: &Message) -> usize {
    match msg.to {
        ActorId::Link(i) | ActorId::User(i) => i,
    }
}

fn sender(msg: &Message) -> usize {
    match msg.from {
        ActorId::Link(i) | ActorId::User(i) => i,
    }
}

fn prices(links: &[Link]) -> Vec<f64> {
    links.iter().map(|l| l.lambda).collect()
}

pub(super) fn fgm(problem: &NetworkProblem, config: &SolverConfig, bus: &mut Bus) -> Result<SolverReport> {
    let FgmSchedule { constants, lipschitz: l, theory, scheduled } = FgmSchedule::new(problem, config)?;
    let mut links = links_of(problem);
    let mut users = users_of(problem);
    let mut rates: Vec<Vec<f64>> = links.iter().map(|l| vec![0.0; l.users.len()]).collect();
    let mut grad_sum = vec![0.0; links.len()];

    let mut x: Vec<f64> = users.iter().map(|u| response(problem, u.id, u.price())).collect();
    let mut x_hat = x.clone();
    let mut a_t = fgm_coefficients(0).1;
    let mut rec = Recorder::new(config);
    let lambda = prices(&links);
    rec.record(problem, 0, &lambda, dual_value_at(problem, &lambda, &x), &x_hat);

    let mut done = scheduled;
    let mut stop = StopReason::Scheduled;
    for t in 0..scheduled {
        for u in &users {
            u.report(x[u.id], bus, t)?;
        }
        for msg in bus.deliver() {
            let link = target(&msg);
            rates[link][slot(&links[link].users, sender(&msg))?] = msg.payload;
        }

        let (alpha, _, tau) = fgm_coefficients(t);
        for link in &mut links {
            let j = link.id;
            let load: f64 = rates[j].iter().sum();
            let g = link.capacity - load;
            let y = project(link.lambda - g / l);
            grad_sum[j] += alpha * g;
            let z = project(0.0 - grad_sum[j] / l);
            link.lambda = tau * z + (1.0 - tau) * y;
            link.send_price(bus, t)?;
        }
        for msg in bus.deliver() {
            users[target(&msg)].receive(&msg)?;
        }

        let (alpha_next, a_next, _) = fgm_coefficients(t + 1);
        for u in &users {
            let k = u.id;
            x[k] = response(problem, k, u.price());
            x_hat[k] = (a_t * x_hat[k] + alpha_next * x[k]) / a_next;
        }
        a_t = a_next;

        if rec.due(t + 1, scheduled) {
            let lambda = prices(&links);
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
        dual: DualPoint::from_vec_unchecked(prices(&links)),
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

pub(super) fn sgm(problem: &NetworkProblem, config: &SolverConfig, bus: &mut Bus) -> Result<SolverReport> {
    let SgmSchedule { constants, theory, scheduled, beta } = SgmSchedule::new(problem, config)?;
    let (m, n) = (problem.links(), problem.users());
    let nf = n as f64;
    let mut links = links_of(problem);
    let mut users = users_of(problem);
    let mut lambda_sum = vec![0.0; m];
    let mut x_sum = vec![0.0; n];
    let mut reported: Vec<Option<f64>> = vec![None; m];

    let mut rng = stream(config.seed, Stream::SolverDraws);
    let mut rec = Recorder::new(config);
    let mut lambda_hat = vec![0.0; m];
    let mut x_hat = vec![0.0; n];

    let mut done = scheduled;
    let mut stop = StopReason::Scheduled;
    for t in 0..scheduled {
        let k = rng.random_range(0..n);
        for &j in &users[k].links {
            let link = &links[j];
            bus.post(MessageKind::PriceUpdate, ActorId::Link(j), ActorId::User(k), link.lambda, t)?;
        }
        for msg in bus.deliver() {
            users[k].receive(&msg)?;
        }
        let r = response(problem, k, users[k].price());
        x_sum[k] += nf * r;
        users[k].report(r, bus, t)?;
        for msg in bus.deliver() {
            reported[target(&msg)] = Some(msg.payload);
        }

        for link in &mut links {
            let j = link.id;
            lambda_sum[j] += link.lambda;
            let g = match reported[j].take() {
                Some(rate) => link.capacity - nf * rate,
                None => link.capacity,
            };
            link.lambda = project(link.lambda - beta * g);
        }

        let steps = t + 1;
        if rec.due(steps, scheduled) {
            average(&lambda_sum, steps, &mut lambda_hat);
            average(&x_sum, steps, &mut x_hat);
            let phi = dual_value(problem, &lambda_hat);
            if rec.record(problem, steps, &prices(&links), phi, &x_hat) {
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
        method: Method::Sgm2,
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

/// Per-link state of the extrapolated method.
struct RgemLink {
    y_sum: f64,
    y_step: f64,
    lambda_bar: f64,
    /// Last rate reported by each user on the link.
    last: Vec<Option<f64>>,
}

pub(super) fn rgem(problem: &NetworkProblem, config: &SolverConfig, bus: &mut Bus) -> Result<SolverReport> {
    let RgemSchedule { constants, reg, prm, theory, scheduled } = RgemSchedule::new(problem, config)?;
    let n = problem.users();
    let nf = n as f64;
    let mut links = links_of(problem);
    let mut users = users_of(problem);
    let mut state: Vec<RgemLink> = links
        .iter()
        .map(|l| RgemLink { y_sum: 0.0, y_step: 0.0, lambda_bar: 0.0, last: vec![None; l.users.len()] })
        .collect();
    let mut touched = vec![false; n];
    let mut reported: Vec<Option<f64>> = vec![None; links.len()];
    let mut weight = 0.0;
    let inv_n = 1.0 / nf;
    let inv_den = 1.0 / (reg + prm.eta);

    let mut rng = stream(config.seed, Stream::SolverDraws);
    let mut rec = Recorder::new(config);

    let mut done = scheduled;
    let mut stop = StopReason::Scheduled;
    for t in 1..=scheduled {
        // The clock announces the chosen user and whether it has reported before.
        let k = rng.random_range(0..n);
        let first = !touched[k];
        for (link, s) in links.iter_mut().zip(&state) {
            let extrapolated = s.y_sum + prm.alpha * s.y_step;
            link.lambda = project(prm.eta * link.lambda - extrapolated * inv_n) * inv_den;
        }

        for &j in &users[k].links {
            bus.post(MessageKind::PriceUpdate, ActorId::Link(j), ActorId::User(k), links[j].lambda, t - 1)?;
        }
        let user = &mut users[k];
        let mut price = 0.0;
        for msg in bus.deliver() {
            let pos = slot(&user.links, sender(&msg))?;
            let lp = &mut user.prices[pos];
            *lp = (msg.payload + prm.tau * *lp) / (1.0 + prm.tau);
            price += *lp;
        }
        let x = response(problem, k, price);
        user.report(x, bus, t - 1)?;
        for msg in bus.deliver() {
            reported[target(&msg)] = Some(msg.payload);
        }
        touched[k] = true;

        weight = 1.0 + prm.alpha_bar * weight;
        let step = 1.0 / weight;
        for (link, s) in links.iter().zip(&mut state) {
            let b = link.capacity;
            s.y_step = match reported[link.id].take() {
                Some(rate) => {
                    let pos = slot(&link.users, k)?;
                    let old = match s.last[pos] {
                        None => 0.0,
                        Some(prev) => b - nf * prev,
                    };
                    s.last[pos] = Some(rate);
                    (b - nf * rate) - old
                }
                None if first => b,
                None => 0.0,
            };
            s.y_sum += s.y_step;
            s.lambda_bar += (link.lambda - s.lambda_bar) * step;
        }

        if rec.due(t, scheduled) {
            let lambda_bar: Vec<f64> = state.iter().map(|s| s.lambda_bar).collect();
            let x_hat = primal_response(problem, &lambda_bar);
            let phi = dual_value_at(problem, &lambda_bar, &x_hat);
            if rec.record(problem, t, &prices(&links), phi, &x_hat) {
                done = t;
                stop = StopReason::EarlyExit;
                break;
            }
        }
    }

    let lambda_bar: Vec<f64> = state.iter().map(|s| s.lambda_bar).collect();
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
