//! The local rate function `L(x, y)`.
//!
//! `L(x, y)` is the least cost `ψ(a, b)` over arrival rates `a`, service
//! rates `b`, routing rates `e` and departure rates `d` such that
//!
//! * `y = e·1 − d` (queue velocity is inflow minus outflow),
//! * `eᵀ1 = a` (every arrival is routed somewhere),
//! * `d ≤ b`, with `d_k = b_k` whenever `x_k > 0`,
//! * `e_km = 0` unless `k ∈ S_m` attains `min_{l∈S_m} x_l / w_lm`.
//!
//! [`local_rate`] solves this program with a log-barrier Newton method on the
//! routing rates (and the spare service rates of empty queues). [`psi_ij`]
//! solves the reduced program of a constant-dynamics domain, where the
//! service rates are eliminated in closed form. [`local_rate_bruteforce`] is
//! an exhaustive grid search kept as an independent check of both.

mod bruteforce;
mod reduced;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::cost::CostModel;
use crate::linalg::{self, BarrierFailure, BarrierOptions, Inequalities, Smooth};
use crate::topology::Topology;

pub use bruteforce::local_rate_bruteforce;
pub use reduced::psi_ij;

/// Relative tolerance used to decide that two weighted queue lengths tie.
pub const TIE_RELATIVE_TOLERANCE: f64 = 1e-12;

pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("queue length {value} at server {server} is negative or not finite")]
    BadState { server: usize, value: f64 },
    #[error("velocity component {server} is not finite")]
    BadVelocity { server: usize },
    #[error("expected {expected} components, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("solver did not converge within {steps} Newton steps")]
    NonConvergence { steps: usize },
    #[error("invalid label: {0}")]
    InvalidLabel(String),
    #[error("cost model is not separable")]
    NonSeparable,
    #[error("{dims} grid dimensions exceed the budget of {limit}")]
    DimensionBudget { dims: usize, limit: usize },
    #[error("grid of {points:e} points is too large")]
    GridTooLarge { points: f64 },
    #[error("grid step and box radius must be positive")]
    BadGrid,
}

/// The domain `F_IJ` containing a point: `I` is the set of empty queues and
/// `J_m` the queues attaining the weighted minimum for stream `m`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DomainLabel {
    pub zero_set: Vec<usize>,
    pub argmin: Vec<Vec<usize>>,
}

fn weighted_argmin(x: &[f64], topology: &Topology, m: usize) -> Vec<usize> {
    let set = topology.admissible(m);
    let level = |k: usize| x[k] / topology.w(k, m);
    let min = set.iter().map(|&k| level(k)).fold(f64::INFINITY, f64::min);
    let cutoff = min + TIE_RELATIVE_TOLERANCE * min;
    set.iter().copied().filter(|&k| level(k) <= cutoff).collect()
}

fn check_state(x: &[f64], topology: &Topology) -> Result<(), RateError> {
    if x.len() != topology.num_servers() {
        return Err(RateError::DimensionMismatch {
            expected: topology.num_servers(),
            found: x.len(),
        });
    }
    for (k, &v) in x.iter().enumerate() {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(RateError::BadState { server: k, value: v });
        }
    }
    Ok(())
}

fn check_velocity(y: &[f64], topology: &Topology) -> Result<(), RateError> {
    if y.len() != topology.num_servers() {
        return Err(RateError::DimensionMismatch {
            expected: topology.num_servers(),
            found: y.len(),
        });
    }
    if let Some(k) = y.iter().position(|v| !v.is_finite()) {
        return Err(RateError::BadVelocity { server: k });
    }
    Ok(())
}

/// Assigns `x` to its constant-dynamics domain.
pub fn classify_domain(x: &[f64], topology: &Topology) -> Result<DomainLabel, RateError> {
    check_state(x, topology)?;
    Ok(DomainLabel {
        zero_set: (0..x.len()).filter(|&k| x[k] == 0.0).collect(),
        argmin: (0..topology.num_streams())
            .map(|m| weighted_argmin(x, topology, m))
            .collect(),
    })
}

impl DomainLabel {
    /// Checks that each `J_m` is a nonempty subset of `S_m` lying either
    /// inside `I` or outside it.
    pub fn validate(&self, topology: &Topology) -> Result<(), RateError> {
        let k_count = topology.num_servers();
        if self.argmin.len() != topology.num_streams() {
            return Err(RateError::InvalidLabel(format!(
                "expected {} argmin sets, found {}",
                topology.num_streams(),
                self.argmin.len()
            )));
        }
        if let Some(&k) = self.zero_set.iter().find(|&&k| k >= k_count) {
            return Err(RateError::InvalidLabel(format!("server {k} out of range")));
        }
        for (m, set) in self.argmin.iter().enumerate() {
            if set.is_empty() {
                return Err(RateError::InvalidLabel(format!("empty J for stream {m}")));
            }
            if let Some(&k) = set.iter().find(|&&k| k >= k_count || !topology.is_admissible(k, m)) {
                return Err(RateError::InvalidLabel(format!(
                    "server {k} not admissible for stream {m}"
                )));
            }
            let inside = set.iter().filter(|k| self.zero_set.contains(k)).count();
            if inside != 0 && inside != set.len() {
                return Err(RateError::InvalidLabel(format!(
                    "J for stream {m} straddles the zero set"
                )));
            }
        }
        Ok(())
    }

    /// Membership of `x` in `F_IJ`, checked directly from the domain's
    /// defining equalities and inequalities.
    pub fn contains(&self, x: &[f64], topology: &Topology) -> bool {
        let zero_ok = (0..x.len()).all(|k| (x[k] == 0.0) == self.zero_set.contains(&k));
        zero_ok
            && self.argmin.iter().enumerate().all(|(m, set)| {
                let s = topology.admissible(m);
                let min = s
                    .iter()
                    .map(|&k| x[k] / topology.w(k, m))
                    .fold(f64::INFINITY, f64::min);
                s.iter().all(|&k| {
                    let level = x[k] / topology.w(k, m);
                    let at_min = level <= min * (1.0 + TIE_RELATIVE_TOLERANCE);
                    at_min == set.contains(&k)
                })
            })
    }

    /// All valid labels of a topology.
    pub fn enumerate(topology: &Topology) -> Vec<DomainLabel> {
        let k_count = topology.num_servers();
        let mut out = Vec::new();
        for mask in 0u64..(1 << k_count) {
            let zero_set: Vec<usize> = (0..k_count).filter(|k| mask >> k & 1 == 1).collect();
            let choices: Vec<Vec<Vec<usize>>> = (0..topology.num_streams())
                .map(|m| {
                    let s = topology.admissible(m);
                    (1u64..(1 << s.len()))
                        .map(|sub| {
                            (0..s.len())
                                .filter(|i| sub >> i & 1 == 1)
                                .map(|i| s[i])
                                .collect::<Vec<_>>()
                        })
                        .filter(|j| {
                            let inside = j.iter().filter(|k| zero_set.contains(k)).count();
                            inside == 0 || inside == j.len()
                        })
                        .collect()
                })
                .collect();
            let mut idx = vec![0usize; choices.len()];
            'outer: loop {
                out.push(DomainLabel {
                    zero_set: zero_set.clone(),
                    argmin: idx.iter().zip(&choices).map(|(&i, c)| c[i].clone()).collect(),
                });
                for p in 0..idx.len() {
                    idx[p] += 1;
                    if idx[p] < choices[p].len() {
                        continue 'outer;
                    }
                    idx[p] = 0;
                }
                break;
            }
        }
        out
    }
}

/// Structure of the feasible set `N(x, y)` at a given state.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleSetSpec {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `allowed[k][m]`: stream `m` may route to `k` at this state.
    pub allowed: Vec<Vec<bool>>,
    /// `busy[k]`: queue `k` is nonempty, so `d_k = b_k`.
    pub busy: Vec<bool>,
}

impl FeasibleSetSpec {
    pub fn new(x: &[f64], y: &[f64], topology: &Topology) -> Result<Self, RateError> {
        let label = classify_domain(x, topology)?;
        check_velocity(y, topology)?;
        Ok(Self::from_parts(x.to_vec(), y.to_vec(), &label, topology))
    }

    fn from_parts(x: Vec<f64>, y: Vec<f64>, label: &DomainLabel, topology: &Topology) -> Self {
        let (k_count, m_count) = (topology.num_servers(), topology.num_streams());
        let mut allowed = vec![vec![false; m_count]; k_count];
        for (m, set) in label.argmin.iter().enumerate() {
            for &k in set {
                allowed[k][m] = true;
            }
        }
        let busy = (0..k_count).map(|k| !label.zero_set.contains(&k)).collect();
        FeasibleSetSpec {
            x,
            y,
            allowed,
            busy,
        }
    }

    /// Largest violation of the constraints of `N(x, y)` at `(a, b, e, d)`.
    pub fn violation(&self, a: &[f64], b: &[f64], e: &[Vec<f64>], d: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        let mut bump = |v: f64| worst = worst.max(v);
        for (k, row) in e.iter().enumerate() {
            let inflow: f64 = row.iter().sum();
            bump((self.y[k] - (inflow - d[k])).abs());
            bump(-d[k]);
            bump(d[k] - b[k]);
            bump(-b[k]);
            if self.busy[k] {
                bump((d[k] - b[k]).abs());
            }
            for (m, &v) in row.iter().enumerate() {
                bump(-v);
                if !self.allowed[k][m] {
                    bump(v.abs());
                }
            }
        }
        for (m, &am) in a.iter().enumerate() {
            let routed: f64 = e.iter().map(|row| row[m]).sum();
            bump((routed - am).abs());
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateStatus {
    /// The infimum is finite and attained at the witness.
    Optimal,
    /// `N(x, y)` is empty: `queue` receives no admissible inflow but
    /// `y_queue > 0`, whereas its velocity is `−d_queue ≤ 0`.
    Infeasible { queue: usize },
    /// `N(x, y)` is nonempty but every point routes mass from a stream whose
    /// arrival rate cannot be positive at finite cost.
    InfiniteCost,
}

/// The value `L(x, y)` with an optimal `(a, b, e, d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateWitness {
    pub value: f64,
    pub status: RateStatus,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// `e[k][m]`
    pub e: Vec<Vec<f64>>,
    pub d: Vec<f64>,
    pub label: DomainLabel,
    pub kkt_residual: f64,
    pub newton_steps: usize,
}

impl RateWitness {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateOptions {
    /// Accuracy of the returned value.
    pub tol: f64,
    pub max_newton_steps: usize,
}

impl Default for RateOptions {
    fn default() -> Self {
        RateOptions {
            tol: DEFAULT_TOL,
            max_newton_steps: 5_000,
        }
    }
}

impl RateOptions {
    pub fn with_tol(tol: f64) -> Self {
        RateOptions {
            tol,
            ..Default::default()
        }
    }
}

/// Decision variables shared by both solvers: routing rates on the free
/// pairs, listed per queue.
struct Routing {
    /// `(k, m)` pairs that may carry mass at finite cost.
    free: Vec<(usize, usize)>,
    /// `free_of_queue[k]`: positions in `free` of pairs into queue `k`.
    free_of_queue: Vec<Vec<usize>>,
}

impl Routing {
    fn new(allowed: &[Vec<bool>], support: &[bool]) -> Self {
        let mut free = Vec::new();
        let mut free_of_queue = vec![Vec::new(); allowed.len()];
        for (k, row) in allowed.iter().enumerate() {
            for (m, &ok) in row.iter().enumerate() {
                if ok && support[m] {
                    free_of_queue[k].push(free.len());
                    free.push((k, m));
                }
            }
        }
        Routing {
            free,
            free_of_queue,
        }
    }

    /// Phase one. The system `y = e·1 − d`, `e, d ≥ 0` decouples by queue
    /// and `e` is unbounded, so it is solvable iff every queue without an
    /// admissible inflow has `y_k ≤ 0`.
    fn infeasible_queue(allowed: &[Vec<bool>], y: &[f64]) -> Option<usize> {
        (0..y.len()).find(|&k| !allowed[k].iter().any(|&a| a) && y[k] > 0.0)
    }

    fn starting_point(&self, y: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.free.len()];
        for (k, idx) in self.free_of_queue.iter().enumerate() {
            for &i in idx {
                z[i] = (y[k].max(0.0) + 1.0) / idx.len() as f64;
            }
        }
        z
    }

    fn inflow(&self, k: usize, z: &[f64]) -> f64 {
        self.free_of_queue[k].iter().map(|&i| z[i]).sum()
    }

    /// Rows `e ≥ 0` and `Σ_m e_km ≥ y_k` for queues with free inflow.
    fn push_constraints(&self, y: &[f64], n: usize, rows: &mut Vec<(Vec<f64>, f64)>) {
        for i in 0..self.free.len() {
            let mut g = vec![0.0; n];
            g[i] = 1.0;
            rows.push((g, 0.0));
        }
        for idx in self.free_of_queue.iter().filter(|idx| !idx.is_empty()) {
            let k = self.free[idx[0]].0;
            let mut g = vec![0.0; n];
            for &i in idx {
                g[i] = 1.0;
            }
            rows.push((g, y[k]));
        }
    }
}

fn inequalities(rows: Vec<(Vec<f64>, f64)>, n: usize) -> Inequalities {
    let m = rows.len();
    Inequalities {
        g: DMatrix::from_fn(m, n, |i, j| rows[i].0[j]),
        h: nalgebra::DVector::from_fn(m, |i, _| rows[i].1),
    }
}

/// The full program over `(e, b_idle)` with `a = eᵀ1`, `d = e·1 − y` and
/// `b_k = d_k` on busy queues.
struct FullProgram<'a> {
    cost: &'a dyn CostModel,
    spec: &'a FeasibleSetSpec,
    routing: &'a Routing,
    /// `idle_var[k]`: index of `b_k` in `z` for empty queues.
    idle_var: Vec<Option<usize>>,
    active: Vec<bool>,
    n: usize,
}

impl<'a> FullProgram<'a> {
    fn new(cost: &'a dyn CostModel, spec: &'a FeasibleSetSpec, routing: &'a Routing) -> Self {
        let (k_count, m_count) = (spec.busy.len(), cost.num_arrivals());
        let mut n = routing.free.len();
        let mut idle_var = vec![None; k_count];
        for k in 0..k_count {
            if !spec.busy[k] {
                idle_var[k] = Some(n);
                n += 1;
            }
        }
        let mut active = vec![false; m_count + k_count];
        for &(k, m) in &routing.free {
            active[m] = true;
            if spec.busy[k] {
                active[m_count + k] = true;
            }
        }
        for k in 0..k_count {
            if idle_var[k].is_some() {
                active[m_count + k] = true;
            }
        }
        FullProgram {
            cost,
            spec,
            routing,
            idle_var,
            active,
            n,
        }
    }

    fn rates(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut a = vec![0.0; self.cost.num_arrivals()];
        for (i, &(_, m)) in self.routing.free.iter().enumerate() {
            a[m] += z[i];
        }
        let d: Vec<f64> = (0..self.spec.busy.len())
            .map(|k| self.routing.inflow(k, z) - self.spec.y[k])
            .collect();
        let b = (0..d.len())
            .map(|k| match self.idle_var[k] {
                Some(i) => z[i],
                None => d[k],
            })
            .collect();
        (a, b, d)
    }

    fn constraints(&self) -> Inequalities {
        let mut rows = Vec::new();
        self.routing.push_constraints(&self.spec.y, self.n, &mut rows);
        for (k, var) in self.idle_var.iter().enumerate() {
            if let Some(i) = *var {
                // b_k − Σ_m e_km ≥ −y_k
                let mut g = vec![0.0; self.n];
                g[i] = 1.0;
                for &j in &self.routing.free_of_queue[k] {
                    g[j] = -1.0;
                }
                rows.push((g, -self.spec.y[k]));
            }
        }
        inequalities(rows, self.n)
    }

    fn starting_point(&self) -> Vec<f64> {
        let mut z = self.routing.starting_point(&self.spec.y);
        z.resize(self.n, 0.0);
        for (k, var) in self.idle_var.iter().enumerate() {
            if let Some(i) = *var {
                z[i] = self.routing.inflow(k, &z) - self.spec.y[k] + 1.0;
            }
        }
        z
    }

    /// Columns of the linear map `z ↦ (a, b)`.
    fn jacobian(&self) -> DMatrix<f64> {
        let m_count = self.cost.num_arrivals();
        let rows = m_count + self.spec.busy.len();
        let mut p = DMatrix::zeros(rows, self.n);
        for (i, &(k, m)) in self.routing.free.iter().enumerate() {
            p[(m, i)] = 1.0;
            if self.spec.busy[k] {
                p[(m_count + k, i)] = 1.0;
            }
        }
        for (k, var) in self.idle_var.iter().enumerate() {
            if let Some(i) = *var {
                p[(m_count + k, i)] = 1.0;
            }
        }
        p
    }
}

impl Smooth for FullProgram<'_> {
    fn value(&self, z: &[f64]) -> f64 {
        let (a, b, _) = self.rates(z);
        self.cost.eval(&a, &b)
    }

    fn gradient(&self, z: &[f64], grad: &mut [f64]) {
        let (a, b, _) = self.rates(z);
        let m_count = a.len();
        let mut g = vec![0.0; m_count + b.len()];
        self.cost.subgradient(&a, &b, &mut g);
        for (i, &(k, m)) in self.routing.free.iter().enumerate() {
            grad[i] = g[m] + if self.spec.busy[k] { g[m_count + k] } else { 0.0 };
        }
        for (k, var) in self.idle_var.iter().enumerate() {
            if let Some(i) = *var {
                grad[i] = g[m_count + k];
            }
        }
    }

    fn hessian(&self, z: &[f64]) -> DMatrix<f64> {
        let (a, b, _) = self.rates(z);
        let h = self.cost.hessian(&a, &b, &self.active);
        let p = self.jacobian();
        p.transpose() * h * p
    }
}

fn barrier_options(opts: &RateOptions) -> BarrierOptions {
    BarrierOptions {
        gap: opts.tol / 10.0,
        max_newton_steps: opts.max_newton_steps,
    }
}

fn map_failure(f: BarrierFailure) -> RateError {
    match f {
        BarrierFailure::IterationLimit { steps } => RateError::NonConvergence { steps },
        // the starting points are interior by construction
        BarrierFailure::NotInterior => unreachable!("starting point not interior"),
    }
}

/// Computes `L(x, y)` together with an optimal `(a, b, e, d)`.
pub fn local_rate(
    x: &[f64],
    y: &[f64],
    topology: &Topology,
    cost: &dyn CostModel,
    opts: &RateOptions,
) -> Result<RateWitness, RateError> {
    if !(opts.tol > 0.0) {
        return Err(RateError::BadTolerance(opts.tol));
    }
    let label = classify_domain(x, topology)?;
    check_velocity(y, topology)?;
    if cost.num_arrivals() != topology.num_streams() || cost.num_servers() != topology.num_servers() {
        return Err(RateError::DimensionMismatch {
            expected: topology.num_streams() + topology.num_servers(),
            found: cost.num_arrivals() + cost.num_servers(),
        });
    }
    let spec = FeasibleSetSpec::from_parts(x.to_vec(), y.to_vec(), &label, topology);
    let (k_count, m_count) = (topology.num_servers(), topology.num_streams());

    let infinite = |status| RateWitness {
        value: f64::INFINITY,
        status,
        a: Vec::new(),
        b: Vec::new(),
        e: Vec::new(),
        d: Vec::new(),
        label: label.clone(),
        kkt_residual: 0.0,
        newton_steps: 0,
    };
    if let Some(queue) = Routing::infeasible_queue(&spec.allowed, y) {
        return Ok(infinite(RateStatus::Infeasible { queue }));
    }
    let routing = Routing::new(&spec.allowed, &cost.arrival_support());
    if Routing::infeasible_queue(
        &(0..k_count)
            .map(|k| (0..m_count).map(|m| routing.free.contains(&(k, m))).collect())
            .collect::<Vec<Vec<bool>>>(),
        y,
    )
    .is_some()
    {
        return Ok(infinite(RateStatus::InfiniteCost));
    }

    let program = FullProgram::new(cost, &spec, &routing);
    let result = linalg::minimize(
        &program,
        &program.constraints(),
        program.starting_point(),
        barrier_options(opts),
    )
    .map_err(map_failure)?;

    let (a, b, d) = program.rates(&result.z);
    let mut e = vec![vec![0.0; m_count]; k_count];
    for (i, &(k, m)) in routing.free.iter().enumerate() {
        e[k][m] = result.z[i];
    }
    let value = cost.eval(&a, &b);
    Ok(RateWitness {
        value,
        status: if value.is_finite() {
            RateStatus::Optimal
        } else {
            RateStatus::InfiniteCost
        },
        a,
        b,
        e,
        d,
        label,
        kkt_residual: result.kkt_residual,
        newton_steps: result.newton_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{pi, PoissonCost};
    use proptest::prelude::*;

    pub(crate) fn mm1() -> Topology {
        Topology::unit_weights(vec![vec![0]], vec![1.0], vec![1.0]).unwrap()
    }

    pub(crate) fn two_queue(lambda: f64) -> Topology {
        Topology::unit_weights(vec![vec![0, 1]], vec![lambda], vec![1.0, 1.0]).unwrap()
    }

    /// Minimises `π(a) + π(a − 1)` over `a > 1` by bisection on the
    /// stationarity condition `log a + log(a − 1) = 0`.
    pub(crate) fn unit_velocity_oracle() -> f64 {
        let (mut lo, mut hi) = (1.0 + 1e-12, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * (mid - 1.0) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let a = 0.5 * (lo + hi);
        pi(a).unwrap() + pi(a - 1.0).unwrap()
    }

    #[test]
    fn oracle_value() {
        let v = unit_velocity_oracle();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((v - (pi(phi).unwrap() + pi(phi - 1.0).unwrap())).abs() < 1e-14);
        assert!((v - 0.2451438).abs() < 1e-7, "{v}");
        // the commonly quoted 0.245122 is a rounding of this within 1e-4
        assert!((v - 0.245122).abs() < 1e-4);
    }

    #[test]
    fn classify_examples() {
        let t = two_queue(1.0);
        let l = classify_domain(&[0.0, 0.0], &t).unwrap();
        assert_eq!(l.zero_set, vec![0, 1]);
        assert_eq!(l.argmin, vec![vec![0, 1]]);
        let l = classify_domain(&[1.0, 2.0], &t).unwrap();
        assert!(l.zero_set.is_empty());
        assert_eq!(l.argmin, vec![vec![0]]);
        let l = classify_domain(&[0.0, 2.0], &t).unwrap();
        assert_eq!(l.zero_set, vec![0]);
        assert_eq!(l.argmin, vec![vec![0]]);
        assert!(matches!(
            classify_domain(&[-1.0, 2.0], &t),
            Err(RateError::BadState { server: 0, .. })
        ));
    }

    #[test]
    fn nominal_point_costs_nothing() {
        let t = mm1();
        let c = PoissonCost::new(&t);
        let w = local_rate(&[1.0], &[0.0], &t, &c, &RateOptions::default()).unwrap();
        assert!(w.value.abs() < 1e-8);
        for v in [w.a[0], w.b[0], w.e[0][0], w.d[0]] {
            assert!((v - 1.0).abs() < 1e-4, "{w:?}");
        }
    }

    #[test]
    fn unit_velocity_matches_oracle() {
        let t = mm1();
        let c = PoissonCost::new(&t);
        let w = local_rate(&[1.0], &[1.0], &t, &c, &RateOptions::default()).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((w.value - unit_velocity_oracle()).abs() < 1e-8);
        assert!((w.a[0] - phi).abs() < 1e-4);
        assert!((w.b[0] - (phi - 1.0)).abs() < 1e-4);
        assert_eq!(w.e[0][0], w.a[0]);
        assert_eq!(w.d[0], w.b[0]);
        assert!(w.kkt_residual < 1e-6);
    }

    #[test]
    fn blocked_queue_cannot_grow() {
        let t = two_queue(1.0);
        let c = PoissonCost::new(&t);
        let w = local_rate(&[1.0, 2.0], &[0.0, 1.0], &t, &c, &RateOptions::default()).unwrap();
        assert_eq!(w.value, f64::INFINITY);
        assert_eq!(w.status, RateStatus::Infeasible { queue: 1 });
    }

    #[test]
    fn zero_rate_stream_gives_infinite_cost() {
        let t = Topology::unit_weights(vec![vec![0]], vec![0.0], vec![1.0]).unwrap();
        let c = PoissonCost::new(&t);
        let w = local_rate(&[1.0], &[0.5], &t, &c, &RateOptions::default()).unwrap();
        assert_eq!(w.status, RateStatus::InfiniteCost);
        let w = local_rate(&[1.0], &[-1.0], &t, &c, &RateOptions::default()).unwrap();
        assert!(w.value.abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_inputs() {
        let t = mm1();
        let c = PoissonCost::new(&t);
        assert!(matches!(
            local_rate(&[1.0], &[0.0], &t, &c, &RateOptions::with_tol(0.0)),
            Err(RateError::BadTolerance(_))
        ));
        assert!(matches!(
            local_rate(&[1.0, 2.0], &[0.0], &t, &c, &RateOptions::default()),
            Err(RateError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            local_rate(&[1.0], &[f64::NAN], &t, &c, &RateOptions::default()),
            Err(RateError::BadVelocity { .. })
        ));
    }

    #[test]
    fn idle_queue_drift_is_free_below_capacity() {
        // x = 0, y = 0: a = d = λ ≤ b = μ
        let t = mm1();
        let c = PoissonCost::new(&t);
        let w = local_rate(&[0.0], &[0.0], &t, &c, &RateOptions::default()).unwrap();
        assert!(w.value.abs() < 1e-8);
    }

    #[test]
    fn enumerated_labels_are_valid() {
        let t = Topology::unit_weights(vec![vec![0, 1], vec![1, 2]], vec![1.0, 1.0], vec![1.0; 3])
            .unwrap();
        let labels = DomainLabel::enumerate(&t);
        assert!(labels.iter().all(|l| l.validate(&t).is_ok()));
        let bad = DomainLabel {
            zero_set: vec![0],
            argmin: vec![vec![0, 1], vec![1]],
        };
        assert!(matches!(bad.validate(&t), Err(RateError::InvalidLabel(_))));
    }

    fn arb_point() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        let coord = prop_oneof![Just(0.0), Just(1.0), 0.0f64..3.0];
        (
            prop::collection::vec(coord, 2),
            prop::collection::vec(-2.0f64..2.0, 2),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn witness_is_feasible((x, y) in arb_point()) {
            let t = two_queue(1.5);
            let c = PoissonCost::new(&t);
            let w = local_rate(&x, &y, &t, &c, &RateOptions::default()).unwrap();
            if w.is_finite() {
                let spec = FeasibleSetSpec::new(&x, &y, &t).unwrap();
                prop_assert!(spec.violation(&w.a, &w.b, &w.e, &w.d) <= 1e-9);
                prop_assert!((c.eval(&w.a, &w.b) - w.value).abs() < 1e-12);
            }
        }

        #[test]
        fn lower_semicontinuous_along_sequences((x, y) in arb_point(), dir in prop::collection::vec(-1.0f64..1.0, 2)) {
            let t = two_queue(1.5);
            let c = PoissonCost::new(&t);
            let opts = RateOptions::default();
            let at = local_rate(&x, &y, &t, &c, &opts).unwrap().value;
            prop_assume!(at.is_finite());
            let mut tail = f64::INFINITY;
            for j in 20..=24 {
                let eps = 2f64.powi(-j);
                let yj = [y[0] + eps * dir[0], y[1] + eps * dir[1]];
                tail = tail.min(local_rate(&x, &yj, &t, &c, &opts).unwrap().value);
            }
            prop_assert!(tail >= at - 1e-5 - opts.tol, "tail {tail} at {at}");
        }
    }
}
