//! Event-driven simulation of the unscaled network.
//!
//! Every arrival stream and every service clock is an independent Poisson
//! process. The run merges them as competing exponential clocks: each clock
//! keeps its next jump time, and the earliest one fires. An arrival joins
//! the admissible queue with the smallest weighted length `Q_k / w_km`,
//! compared exactly on integers. A service tick removes a customer if the
//! queue is nonempty and is recorded either way.
//!
//! Randomness: clock `c` (streams first, then servers) draws from ChaCha8
//! keyed by `(seed, replication)` on stream `c`; random tie-breaking uses
//! stream `M + K`.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::path::PiecewisePath;
use crate::topology::{Topology, Weight};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("scale n must be at least 1")]
    BadScale,
    #[error("horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("initial scaled queue lengths must be nonnegative and finite")]
    BadInitialState,
    #[error("initial state has {found} queues, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("grid step must be positive and finite, got {0}")]
    BadGrid(f64),
    #[error("unknown tie rule `{0}` (expected `lowest` or `uniform`)")]
    UnknownTieRule(String),
    #[error("audit failed at event {event}: {reason}")]
    Audit { event: usize, reason: String },
}

/// How an arrival picks among queues tied for the weighted minimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieRule {
    LowestIndex,
    UniformRandom,
}

impl FromStr for TieRule {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "lowest" | "lowest-index" => Ok(TieRule::LowestIndex),
            "uniform" | "uniform-random" => Ok(TieRule::UniformRandom),
            other => Err(SimError::UnknownTieRule(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: u64,
    /// Horizon in scaled time; the run covers `[0, n·horizon]`.
    pub horizon: f64,
    pub seed: u64,
    pub tie: TieRule,
    pub q0_scaled: Vec<f64>,
}

impl SimConfig {
    fn initial_queue(&self, topology: &Topology) -> Result<Vec<u64>, SimError> {
        if self.n == 0 {
            return Err(SimError::BadScale);
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(SimError::BadHorizon(self.horizon));
        }
        if self.q0_scaled.len() != topology.num_servers() {
            return Err(SimError::DimensionMismatch {
                expected: topology.num_servers(),
                found: self.q0_scaled.len(),
            });
        }
        if self.q0_scaled.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(SimError::BadInitialState);
        }
        Ok(self
            .q0_scaled
            .iter()
            .map(|&v| (v * self.n as f64).floor() as u64)
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimEvent {
    Arrival { stream: usize, queue: usize },
    Service { server: usize, departed: bool },
}

/// A recorded run. Row `i` holds the state right after event `i − 1`; row 0
/// is the initial state at time 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    n: u64,
    seed: u64,
    replication: u64,
    horizon: f64,
    num_servers: usize,
    num_streams: usize,
    times: Vec<f64>,
    events: Vec<SimEvent>,
    queue: Vec<u64>,
    arrivals: Vec<u64>,
    service: Vec<u64>,
    departures: Vec<u64>,
    routed: Vec<u64>,
}

impl SamplePath {
    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replication(&self) -> u64 {
        self.replication
    }

    /// Scaled horizon.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn num_servers(&self) -> usize {
        self.num_servers
    }

    pub fn num_streams(&self) -> usize {
        self.num_streams
    }

    pub fn num_events(&self) -> usize {
        self.events.len()
    }

    /// Unscaled time of row `i`.
    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn event(&self, i: usize) -> SimEvent {
        self.events[i]
    }

    pub fn queue(&self, i: usize) -> &[u64] {
        let k = self.num_servers;
        &self.queue[i * k..(i + 1) * k]
    }

    pub fn arrivals(&self, i: usize) -> &[u64] {
        let m = self.num_streams;
        &self.arrivals[i * m..(i + 1) * m]
    }

    pub fn service(&self, i: usize) -> &[u64] {
        let k = self.num_servers;
        &self.service[i * k..(i + 1) * k]
    }

    pub fn departures(&self, i: usize) -> &[u64] {
        let k = self.num_servers;
        &self.departures[i * k..(i + 1) * k]
    }

    /// Routed counts, entry `k·M + m`.
    pub fn routed(&self, i: usize) -> &[u64] {
        let km = self.num_servers * self.num_streams;
        &self.routed[i * km..(i + 1) * km]
    }

    /// Row in force at unscaled time `t` (right-continuous).
    pub fn row_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).max(1) - 1
    }

    /// Scaled state at scaled time `t`, laid out as `Q, A, B, D, E`.
    pub fn scaled_state(&self, t: f64) -> Vec<f64> {
        let i = self.row_at(t * self.n as f64);
        let n = self.n as f64;
        self.queue(i)
            .iter()
            .chain(self.arrivals(i))
            .chain(self.service(i))
            .chain(self.departures(i))
            .chain(self.routed(i))
            .map(|&c| c as f64 / n)
            .collect()
    }

    /// Exact `sup_t max_k |Q̄_k(t) − q_k(t)|` over `t` up to the shorter
    /// horizon, against a continuous piecewise-linear `q`.
    pub fn queue_sup_distance(&self, q: &PiecewisePath) -> f64 {
        let n = self.n as f64;
        let horizon = self.horizon.min(q.horizon());
        let k_count = self.num_servers;
        let mut fluid = vec![0.0; q.dim()];
        let mut worst = 0.0f64;
        let mut compare = |t: f64, row: usize, fluid: &mut Vec<f64>| {
            q.eval_into(t, fluid);
            for k in 0..k_count {
                worst = worst.max((self.queue(row)[k] as f64 / n - fluid[k]).abs());
            }
        };
        // Q̄ is constant between jumps, q is linear between its breakpoints:
        // the sup is attained at a jump (both sides) or at a breakpoint.
        let mut row = 0;
        let mut fluid_idx = 0;
        let fluid_times = q.times();
        loop {
            let next_jump = self.times.get(row + 1).map(|&s| s / n);
            let next_break = fluid_times.get(fluid_idx).copied();
            let t = match (next_jump, next_break) {
                (Some(a), Some(b)) => a.min(b),
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => break,
            };
            if t > horizon {
                break;
            }
            if next_break == Some(t) {
                fluid_idx += 1;
            }
            compare(t, row, &mut fluid);
            if next_jump == Some(t) {
                row += 1;
                compare(t, row, &mut fluid);
            }
        }
        compare(horizon, self.row_at(horizon * n), &mut fluid);
        worst
    }
}

fn clock_rng(seed: u64, replication: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&replication.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

struct Engine {
    routes: Vec<Vec<(usize, Weight)>>,
    rates: Vec<f64>,
    clocks: Vec<ChaCha8Rng>,
    tie_rng: ChaCha8Rng,
    next: Vec<f64>,
    q: Vec<u64>,
    end: f64,
    tie: TieRule,
    tied: Vec<usize>,
}

impl Engine {
    fn new(topology: &Topology, cfg: &SimConfig, replication: u64, q0: Vec<u64>) -> Self {
        let (k_count, m_count) = (topology.num_servers(), topology.num_streams());
        let routes = (0..m_count)
            .map(|m| {
                let mut r: Vec<(usize, Weight)> = topology
                    .admissible(m)
                    .iter()
                    .map(|&k| (k, topology.weight(k, m).unwrap_or(Weight::ONE)))
                    .collect();
                r.sort_by_key(|&(k, _)| k);
                r
            })
            .collect();
        let rates: Vec<f64> = topology.lambda().iter().chain(topology.mu()).copied().collect();
        let mut clocks: Vec<ChaCha8Rng> = (0..rates.len())
            .map(|c| clock_rng(cfg.seed, replication, c as u64))
            .collect();
        let next = rates
            .iter()
            .zip(clocks.iter_mut())
            .map(|(&rate, rng)| {
                if rate > 0.0 {
                    rng.sample::<f64, _>(Exp1) / rate
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        Engine {
            routes,
            rates,
            clocks,
            tie_rng: clock_rng(cfg.seed, replication, (m_count + k_count) as u64),
            next,
            q: q0,
            end: cfg.n as f64 * cfg.horizon,
            tie: cfg.tie,
            tied: Vec::new(),
        }
    }

    fn choose(&mut self, m: usize) -> usize {
        let route = &self.routes[m];
        self.tied.clear();
        let (mut best_k, mut best_w) = route[0];
        self.tied.push(best_k);
        for &(k, w) in &route[1..] {
            match Weight::cmp_weighted(self.q[k], w, self.q[best_k], best_w) {
                std::cmp::Ordering::Less => {
                    best_k = k;
                    best_w = w;
                    self.tied.clear();
                    self.tied.push(k);
                }
                std::cmp::Ordering::Equal => self.tied.push(k),
                std::cmp::Ordering::Greater => {}
            }
        }
        match self.tie {
            TieRule::LowestIndex => self.tied[0],
            TieRule::UniformRandom if self.tied.len() > 1 => {
                self.tied[self.tie_rng.random_range(0..self.tied.len())]
            }
            TieRule::UniformRandom => self.tied[0],
        }
    }

    fn step(&mut self) -> Option<(f64, SimEvent)> {
        let (c, &t) = self
            .next
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))?;
        if t > self.end {
            return None;
        }
        let gap: f64 = self.clocks[c].sample(Exp1);
        self.next[c] = t + gap / self.rates[c];
        let m_count = self.routes.len();
        let event = if c < m_count {
            let queue = self.choose(c);
            self.q[queue] += 1;
            SimEvent::Arrival { stream: c, queue }
        } else {
            let server = c - m_count;
            let departed = self.q[server] > 0;
            if departed {
                self.q[server] -= 1;
            }
            SimEvent::Service { server, departed }
        };
        Some((t, event))
    }
}

/// Runs replication 0 of `cfg`.
pub fn simulate(topology: &Topology, cfg: &SimConfig) -> Result<SamplePath, SimError> {
    simulate_replication(topology, cfg, 0)
}

/// Runs one replication; distinct replications of the same seed are
/// independent.
pub fn simulate_replication(
    topology: &Topology,
    cfg: &SimConfig,
    replication: u64,
) -> Result<SamplePath, SimError> {
    let q0 = cfg.initial_queue(topology)?;
    let (k_count, m_count) = (topology.num_servers(), topology.num_streams());
    let mut path = SamplePath {
        n: cfg.n,
        seed: cfg.seed,
        replication,
        horizon: cfg.horizon,
        num_servers: k_count,
        num_streams: m_count,
        times: vec![0.0],
        events: Vec::new(),
        queue: q0.clone(),
        arrivals: vec![0; m_count],
        service: vec![0; k_count],
        departures: vec![0; k_count],
        routed: vec![0; k_count * m_count],
    };
    let mut engine = Engine::new(topology, cfg, replication, q0);
    let mut arrivals = vec![0u64; m_count];
    let mut service = vec![0u64; k_count];
    let mut departures = vec![0u64; k_count];
    let mut routed = vec![0u64; k_count * m_count];
    while let Some((t, event)) = engine.step() {
        match event {
            SimEvent::Arrival { stream, queue } => {
                arrivals[stream] += 1;
                routed[queue * m_count + stream] += 1;
            }
            SimEvent::Service { server, departed } => {
                service[server] += 1;
                departures[server] += departed as u64;
            }
        }
        path.times.push(t);
        path.events.push(event);
        path.queue.extend_from_slice(&engine.q);
        path.arrivals.extend_from_slice(&arrivals);
        path.service.extend_from_slice(&service);
        path.departures.extend_from_slice(&departures);
        path.routed.extend_from_slice(&routed);
    }
    Ok(path)
}

/// Final and running-maximum queue lengths of one replication, without
/// recording the path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueueExtremes {
    pub terminal: Vec<u64>,
    pub maximum: Vec<u64>,
}

pub fn simulate_extremes(
    topology: &Topology,
    cfg: &SimConfig,
    replication: u64,
) -> Result<QueueExtremes, SimError> {
    let q0 = cfg.initial_queue(topology)?;
    let mut maximum = q0.clone();
    let mut engine = Engine::new(topology, cfg, replication, q0);
    while let Some((_, event)) = engine.step() {
        if let SimEvent::Arrival { queue, .. } = event {
            maximum[queue] = maximum[queue].max(engine.q[queue]);
        }
    }
    Ok(QueueExtremes {
        terminal: engine.q,
        maximum,
    })
}

/// Samples the scaled right-continuous path at `0, h, 2h, …` and at the
/// horizon. Components are laid out as `Q̄, Ā, B̄, D̄, Ē` (the last with
/// index `k·M + m`).
pub fn scale_path(path: &SamplePath, grid_step: f64) -> Result<PiecewisePath, SimError> {
    if !(grid_step > 0.0 && grid_step.is_finite()) {
        return Err(SimError::BadGrid(grid_step));
    }
    let steps = ((path.horizon / grid_step) - 1e-9).ceil().max(1.0) as usize;
    let times: Vec<f64> = (0..=steps)
        .map(|j| if j == steps { path.horizon } else { j as f64 * grid_step })
        .collect();
    let values = times.iter().map(|&t| path.scaled_state(t)).collect();
    Ok(PiecewisePath::new(times, values).expect("grid is strictly increasing"))
}

fn audit_error(event: usize, reason: impl Into<String>) -> SimError {
    SimError::Audit {
        event,
        reason: reason.into(),
    }
}

/// Replays a path and checks it event by event:
///
/// * queue balance `Q_k = Q_k(0) + Σ_m E_km − D_k` and stream balance
///   `A_m = Σ_k E_km` on every row;
/// * each event moves exactly the counters it names, by one;
/// * arrivals join an admissible queue of least weighted length;
/// * a service tick departs a customer iff the queue was nonempty.
pub fn audit(topology: &Topology, path: &SamplePath) -> Result<(), SimError> {
    let (k_count, m_count) = (path.num_servers, path.num_streams);
    if k_count != topology.num_servers() || m_count != topology.num_streams() {
        return Err(SimError::DimensionMismatch {
            expected: topology.num_servers(),
            found: k_count,
        });
    }
    let rows = path.times.len();
    if path.events.len() + 1 != rows
        || path.queue.len() != rows * k_count
        || path.arrivals.len() != rows * m_count
        || path.service.len() != rows * k_count
        || path.departures.len() != rows * k_count
        || path.routed.len() != rows * k_count * m_count
    {
        return Err(audit_error(0, "inconsistent record lengths"));
    }
    if path.arrivals(0).iter().chain(path.service(0)).chain(path.departures(0)).chain(path.routed(0)).any(|&c| c != 0) {
        return Err(audit_error(0, "counters do not start at zero"));
    }
    let q0 = path.queue(0);
    let end = path.n as f64 * path.horizon;
    for i in 0..rows {
        let event = i.saturating_sub(1);
        let e = path.routed(i);
        for k in 0..k_count {
            let inflow: u64 = (0..m_count).map(|m| e[k * m_count + m]).sum();
            if q0[k] + inflow != path.queue(i)[k] + path.departures(i)[k] {
                return Err(audit_error(event, format!("queue balance broken at server {}", k + 1)));
            }
        }
        for m in 0..m_count {
            let routed: u64 = (0..k_count).map(|k| e[k * m_count + m]).sum();
            if routed != path.arrivals(i)[m] {
                return Err(audit_error(event, format!("stream balance broken for stream {}", m + 1)));
            }
            for k in 0..k_count {
                if e[k * m_count + m] > 0 && !topology.is_admissible(k, m) {
                    return Err(audit_error(event, "mass routed outside the admissible set"));
                }
            }
        }
        if i == 0 {
            continue;
        }
        let (t0, t1) = (path.times[i - 1], path.times[i]);
        if !(t1 > t0) || t1 > end {
            return Err(audit_error(event, "event times out of order or past the horizon"));
        }
        let before = path.queue(i - 1);
        let mut expect_a = path.arrivals(i - 1).to_vec();
        let mut expect_b = path.service(i - 1).to_vec();
        let mut expect_d = path.departures(i - 1).to_vec();
        let mut expect_e = path.routed(i - 1).to_vec();
        match path.events[event] {
            SimEvent::Arrival { stream, queue } => {
                if stream >= m_count || queue >= k_count || !topology.is_admissible(queue, stream) {
                    return Err(audit_error(event, "arrival routed to an inadmissible queue"));
                }
                let w = topology.weight(queue, stream).unwrap_or(Weight::ONE);
                for &l in topology.admissible(stream) {
                    let wl = topology.weight(l, stream).unwrap_or(Weight::ONE);
                    if Weight::cmp_weighted(before[l], wl, before[queue], w).is_lt() {
                        return Err(audit_error(event, "arrival did not join a shortest weighted queue"));
                    }
                }
                expect_a[stream] += 1;
                expect_e[queue * m_count + stream] += 1;
            }
            SimEvent::Service { server, departed } => {
                if server >= k_count {
                    return Err(audit_error(event, "unknown server"));
                }
                if departed != (before[server] > 0) {
                    return Err(audit_error(event, "departure does not match queue occupancy"));
                }
                expect_b[server] += 1;
                expect_d[server] += departed as u64;
            }
        }
        if expect_a != path.arrivals(i)
            || expect_b != path.service(i)
            || expect_d != path.departures(i)
            || expect_e != path.routed(i)
        {
            return Err(audit_error(event, "counters moved inconsistently with the event"));
        }
    }
    Ok(())
}
