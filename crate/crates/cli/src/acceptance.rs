//! The acceptance suite: ten numbered checks, each with pinned tolerances.

use std::time::{Duration, Instant};

use jsq_core::{
    audit, classify_domain, estimate_rare_event, extrapolate_rate, fluid_solve, local_rate,
    local_rate_bruteforce, lyapunov_check, minimize_action, nominal_inputs, path_action, pi,
    psi_ij, simulate, CostModel, DomainLabel, EventTarget, InitialCost, PiecewisePath,
    PoissonCost, RareEventSpec, RateOptions, SimConfig, TieRule, Topology,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::simulate_csv;

pub mod tolerances {
    // 1: solver against grid search
    pub const ORACLE_POINTS_PER_TOPOLOGY: usize = 50;
    pub const ORACLE_GRID_STEP: f64 = 1e-3;
    pub const ORACLE_BOX_RADIUS: f64 = 5.0;
    pub const ORACLE_ABS_TOL: f64 = 1e-2;
    pub const ORACLE_RUNTIME_SECS: u64 = 300;

    // 2: single-queue unit climb
    pub const GOLDEN_VALUE: f64 = 0.245122;
    pub const GOLDEN_TOL: f64 = 1e-4;
    pub const GOLDEN_RUNTIME_SECS: u64 = 1;

    // 3: reduced program against the full one
    pub const PSI_POINTS: usize = 100;
    pub const PSI_TOL: f64 = 2e-8;

    // 4: domain partition
    pub const PARTITION_POINTS: usize = 10_000;

    // 5: fluid worked example
    pub const FLUID_STEPS: [f64; 2] = [1e-2, 1e-3];
    pub const FLUID_SUP_FACTOR: f64 = 3.0;
    pub const FLUID_HALVING_RATIO: f64 = 1.8;

    // 6: contraction
    pub const LYAPUNOV_PAIRS: usize = 20;
    pub const LYAPUNOV_STEP: f64 = 1e-3;
    pub const LYAPUNOV_FACTOR: f64 = 5.0;

    // 7: law of large numbers and zero cost of the fluid path
    pub const LLN_SCALE: u64 = 10_000;
    pub const LLN_SEEDS: u64 = 20;
    pub const LLN_REQUIRED: usize = 18;
    pub const LLN_SUP: f64 = 0.05;
    /// Breakpoints of the reference fluid path; the regime switch at 1/3
    /// falls on one of them.
    pub const LLN_FLUID_STEP: f64 = 1.0 / 3000.0;
    pub const ZERO_COST_TOL: f64 = 1e-6;

    // 8: Monte Carlo against the variational value
    pub const LDP_SCALES: [u64; 3] = [10, 20, 40];
    pub const LDP_REPLICATIONS: [u64; 3] = [1_000_000, 1_000_000, 1_000_000];
    pub const LDP_SEGMENTS: usize = 4;
    pub const LDP_REL_TOL: f64 = 0.15;
    pub const LDP_RUNTIME_SECS: u64 = 1800;

    // 9: simulator audit
    pub const AUDIT_RUNS: u64 = 100;
    pub const REPRO_RUNS: u64 = 10;

    // 10: cost properties
    pub const CONVEXITY_TRIPLES: usize = 1000;
    pub const SUBGRADIENT_POINTS: usize = 100;
    pub const SUBGRADIENT_REL_TOL: f64 = 1e-6;
}

use tolerances::*;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

pub struct Criterion {
    pub id: u8,
    pub group: &'static str,
    pub name: &'static str,
    run: fn() -> (bool, String),
}

impl Criterion {
    pub fn run(&self) -> Outcome {
        let start = Instant::now();
        let (passed, detail) = (self.run)();
        Outcome {
            passed,
            detail,
            elapsed: start.elapsed(),
        }
    }

    pub fn line(&self, outcome: &Outcome) -> String {
        format!(
            "[{}] {:>2} {:<6} {:<28} {:>8.2}s  {}",
            if outcome.passed { "PASS" } else { "FAIL" },
            self.id,
            self.group,
            self.name,
            outcome.elapsed.as_secs_f64(),
            outcome.detail
        )
    }

    /// Matches a group name, a criterion number or the criterion name.
    pub fn selected_by(&self, filter: &str) -> bool {
        filter.split(',').map(str::trim).any(|f| {
            f == self.group || f == self.name || f.parse::<u8>().map(|n| n == self.id).unwrap_or(false)
        })
    }
}

pub const CRITERIA: [Criterion; 10] = [
    Criterion { id: 1, group: "rate", name: "solver-vs-grid-search", run: solver_vs_grid_search },
    Criterion { id: 2, group: "rate", name: "unit-climb-value", run: unit_climb_value },
    Criterion { id: 3, group: "rate", name: "reduced-program", run: reduced_program },
    Criterion { id: 4, group: "rate", name: "domain-partition", run: domain_partition },
    Criterion { id: 5, group: "fluid", name: "fluid-worked-example", run: fluid_worked_example },
    Criterion { id: 6, group: "fluid", name: "fluid-contraction", run: fluid_contraction },
    Criterion { id: 7, group: "fluid", name: "fluid-limit", run: fluid_limit },
    Criterion { id: 8, group: "ldp", name: "rare-event-rate", run: rare_event_rate },
    Criterion { id: 9, group: "sim", name: "simulator-audit", run: simulator_audit },
    Criterion { id: 10, group: "cost", name: "cost-properties", run: cost_properties },
];

pub fn criterion(id: u8) -> &'static Criterion {
    CRITERIA.iter().find(|c| c.id == id).expect("criterion id")
}

fn mm1() -> Topology {
    Topology::unit_weights(vec![vec![0]], vec![1.0], vec![1.0]).unwrap()
}

fn symmetric_pair(lambda: f64) -> Topology {
    Topology::unit_weights(vec![vec![0, 1]], vec![lambda], vec![1.0, 1.0]).unwrap()
}

fn weighted_triple() -> Topology {
    Topology::from_toml_str(
        "servers = 3\nstreams = 2\nlambda = [1.0, 2.0]\nmu = [1.0, 1.5, 2.0]\n\
         admissible = [[1, 2], [2, 3]]\n\
         [[weight]]\nserver = 2\nstream = 1\nvalue = \"3/2\"\n\
         [[weight]]\nserver = 3\nstream = 2\nvalue = 2\n",
    )
    .unwrap()
}

/// States on `[0, 3]^K` with zeros and ties mixed in.
fn random_state(rng: &mut ChaCha8Rng, topology: &Topology) -> Vec<f64> {
    let k_count = topology.num_servers();
    let mut x: Vec<f64> = (0..k_count)
        .map(|_| if rng.random_bool(0.2) { 0.0 } else { 3.0 * rng.random::<f64>() })
        .collect();
    for m in 0..topology.num_streams() {
        let set = topology.admissible(m);
        if set.len() > 1 && rng.random_bool(0.25) {
            let (k, l) = (set[0], set[1]);
            x[l] = x[k] / topology.w(k, m) * topology.w(l, m);
        }
    }
    x
}

fn random_velocity(rng: &mut ChaCha8Rng, k_count: usize) -> Vec<f64> {
    (0..k_count).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect()
}

fn solver_vs_grid_search() -> (bool, String) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let opts = RateOptions::default();
    let (mut worst, mut verdict_mismatch, mut finite, mut errors) = (0.0f64, 0, 0, 0);
    for t in [mm1(), symmetric_pair(1.0)] {
        let c = PoissonCost::new(&t);
        for _ in 0..ORACLE_POINTS_PER_TOPOLOGY {
            let x = random_state(&mut rng, &t);
            let y = random_velocity(&mut rng, t.num_servers());
            let solved = local_rate(&x, &y, &t, &c, &opts).map(|w| w.value);
            let grid = local_rate_bruteforce(&x, &y, &t, &c, ORACLE_GRID_STEP, ORACLE_BOX_RADIUS);
            match (solved, grid) {
                (Ok(s), Ok(g)) => {
                    if s.is_finite() != g.is_finite() {
                        verdict_mismatch += 1;
                    } else if s.is_finite() {
                        finite += 1;
                        worst = worst.max((s - g).abs());
                    }
                }
                _ => errors += 1,
            }
        }
    }
    let secs = start.elapsed().as_secs();
    let passed = verdict_mismatch == 0 && errors == 0 && worst <= ORACLE_ABS_TOL && secs <= ORACLE_RUNTIME_SECS;
    (
        passed,
        format!("max |diff| {worst:.3e} over {finite} finite points, {verdict_mismatch} verdict mismatches, {errors} errors"),
    )
}

fn unit_climb_value() -> (bool, String) {
    let start = Instant::now();
    let t = mm1();
    let w = local_rate(&[1.0], &[1.0], &t, &PoissonCost::new(&t), &RateOptions::default());
    let elapsed = start.elapsed();
    match w {
        Ok(w) => (
            (w.value - GOLDEN_VALUE).abs() <= GOLDEN_TOL && elapsed.as_secs_f64() <= GOLDEN_RUNTIME_SECS as f64,
            format!("L(1, 1) = {:.9}", w.value),
        ),
        Err(e) => (false, e.to_string()),
    }
}

fn reduced_program() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let opts = RateOptions::default();
    let (mut worst, mut checked, mut errors) = (0.0f64, 0, 0);
    for t in [mm1(), symmetric_pair(1.0)] {
        let c = PoissonCost::new(&t);
        let mut attempts = 0;
        let mut here = 0;
        while here < PSI_POINTS / 2 && attempts < 100 * PSI_POINTS {
            attempts += 1;
            let x = random_state(&mut rng, &t);
            let y = random_velocity(&mut rng, t.num_servers());
            let full = match local_rate(&x, &y, &t, &c, &opts) {
                Ok(w) if w.is_finite() => w.value,
                Ok(_) => continue,
                Err(_) => {
                    errors += 1;
                    continue;
                }
            };
            let reduced = classify_domain(&x, &t).and_then(|l| psi_ij(&l, &y, &t, &c, &opts));
            match reduced {
                Ok(r) => worst = worst.max((r - full).abs()),
                Err(_) => errors += 1,
            }
            here += 1;
        }
        checked += here;
    }
    (
        checked == PSI_POINTS && errors == 0 && worst <= PSI_TOL,
        format!("max |diff| {worst:.3e} over {checked} points, {errors} errors"),
    )
}

fn domain_partition() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut failures = 0;
    let mut total = 0;
    for t in [mm1(), symmetric_pair(1.0), weighted_triple()] {
        let labels = DomainLabel::enumerate(&t);
        for _ in 0..PARTITION_POINTS {
            let x = random_state(&mut rng, &t);
            total += 1;
            let Ok(label) = classify_domain(&x, &t) else {
                failures += 1;
                continue;
            };
            let holders: Vec<&DomainLabel> = labels.iter().filter(|l| l.contains(&x, &t)).collect();
            if holders.len() != 1 || holders[0] != &label {
                failures += 1;
            }
        }
    }
    (failures == 0, format!("{failures} of {total} states not in exactly one domain"))
}

fn worked_example_exact() -> PiecewisePath {
    PiecewisePath::new(
        vec![0.0, 1.0 / 3.0, 1.0],
        vec![vec![1.0, 0.0], vec![2.0 / 3.0, 2.0 / 3.0], vec![1.0, 1.0]],
    )
    .unwrap()
}

fn fluid_worked_example() -> (bool, String) {
    let t = symmetric_pair(3.0);
    let (a, b) = nominal_inputs(&t, 1.0).unwrap();
    let exact = worked_example_exact();
    let err = |h: f64| -> f64 {
        fluid_solve(&t, &[1.0, 0.0], &a, &b, 1.0, h)
            .map(|s| s.q.sup_distance(&exact))
            .unwrap_or(f64::INFINITY)
    };
    let mut passed = true;
    let mut parts = Vec::new();
    for h in FLUID_STEPS {
        let (e, e_half) = (err(h), err(h / 2.0));
        let ratio = e / e_half;
        passed &= e <= FLUID_SUP_FACTOR * h && ratio >= FLUID_HALVING_RATIO;
        parts.push(format!("h={h:e}: err {:.3}h, ratio {ratio:.3}", e / h));
    }
    (passed, parts.join("; "))
}

fn random_inputs(rng: &mut ChaCha8Rng, topology: &Topology, horizon: f64) -> (PiecewisePath, PiecewisePath) {
    let segments = 8;
    let times: Vec<f64> = (0..=segments).map(|j| horizon * j as f64 / segments as f64).collect();
    let mut walk = |dim: usize, max_rate: f64| {
        let mut v = vec![0.0; dim];
        let mut values = vec![v.clone()];
        for _ in 0..segments {
            for x in v.iter_mut() {
                *x += max_rate * rng.random::<f64>() * horizon / segments as f64;
            }
            values.push(v.clone());
        }
        PiecewisePath::new(times.clone(), values).unwrap()
    };
    let a = walk(topology.num_streams(), 5.0);
    let b = walk(topology.num_servers(), 2.0);
    (a, b)
}

fn fluid_contraction() -> (bool, String) {
    let t = symmetric_pair(3.0);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let horizon = 2.0;
    let mut worst = 0.0f64;
    for _ in 0..LYAPUNOV_PAIRS {
        let (a, b) = random_inputs(&mut rng, &t, horizon);
        let q0: Vec<f64> = (0..2).map(|_| 2.0 * rng.random::<f64>()).collect();
        let q1: Vec<f64> = (0..2).map(|_| 2.0 * rng.random::<f64>()).collect();
        let increment = fluid_solve(&t, &q0, &a, &b, horizon, LYAPUNOV_STEP)
            .and_then(|s0| {
                let s1 = fluid_solve(&t, &q1, &a, &b, horizon, LYAPUNOV_STEP)?;
                lyapunov_check(&s0, &s1)
            })
            .unwrap_or(f64::INFINITY);
        worst = worst.max(increment);
    }
    (
        worst <= LYAPUNOV_FACTOR * LYAPUNOV_STEP,
        format!("max increment {worst:.3e} (bound {:.1e})", LYAPUNOV_FACTOR * LYAPUNOV_STEP),
    )
}

fn fluid_limit() -> (bool, String) {
    let t = symmetric_pair(3.0);
    let (a, b) = nominal_inputs(&t, 1.0).unwrap();
    let fluid = match fluid_solve(&t, &[1.0, 0.0], &a, &b, 1.0, LLN_FLUID_STEP) {
        Ok(f) => f,
        Err(e) => return (false, e.to_string()),
    };
    let mut close = 0;
    let mut worst = 0.0f64;
    for seed in 0..LLN_SEEDS {
        let cfg = SimConfig {
            n: LLN_SCALE,
            horizon: 1.0,
            seed,
            tie: TieRule::LowestIndex,
            q0_scaled: vec![1.0, 0.0],
        };
        if let Ok(p) = simulate(&t, &cfg) {
            let d = p.queue_sup_distance(&fluid.q);
            worst = worst.max(d);
            close += (d <= LLN_SUP) as usize;
        }
    }
    let c = PoissonCost::new(&t);
    let action = path_action(&fluid.q, &t, &c, &InitialCost::Free, &RateOptions::default())
        .map(|r| r.total)
        .unwrap_or(f64::INFINITY);
    (
        close >= LLN_REQUIRED && action <= ZERO_COST_TOL,
        format!("{close}/{LLN_SEEDS} seeds within {LLN_SUP} (worst {worst:.4}); fluid path action {action:.3e}"),
    )
}

fn rare_event_rate() -> (bool, String) {
    let start = Instant::now();
    let t = Topology::unit_weights(vec![vec![0]], vec![1.0], vec![2.0]).unwrap();
    let c = PoissonCost::new(&t);
    let target = EventTarget::Terminal {
        queue: 0,
        threshold: 1.0,
    };
    let value = match minimize_action(&target, &[0.0], 1.0, &t, &c, LDP_SEGMENTS, &RateOptions::default()) {
        Ok(o) => o.value,
        Err(e) => return (false, e.to_string()),
    };
    let spec = RareEventSpec {
        target,
        horizon: 1.0,
        q0_scaled: vec![0.0],
        scales: LDP_SCALES.to_vec(),
        replications: LDP_REPLICATIONS.to_vec(),
        seed: 7,
        tie: TieRule::LowestIndex,
    };
    let table = match estimate_rare_event(&spec, &t) {
        Ok(t) => t,
        Err(e) => return (false, e.to_string()),
    };
    let hits: Vec<String> = table.iter().map(|e| format!("n={}:{}", e.n, e.hits)).collect();
    let all_hit = table.iter().all(|e| e.hits > 0);
    let fit = extrapolate_rate(&table);
    let within_time = start.elapsed().as_secs() <= LDP_RUNTIME_SECS;
    match fit {
        Ok(fit) => {
            let rel = (fit.rate - value).abs() / value;
            (
                all_hit && rel <= LDP_REL_TOL && within_time,
                format!(
                    "variational {value:.4}, extrapolated {:.4} from {} of {} scales (rel {rel:.3}); hits {}",
                    fit.rate,
                    fit.points,
                    table.len(),
                    hits.join(" ")
                ),
            )
        }
        Err(e) => (
            false,
            format!("variational {value:.4}; {e}; hits {}", hits.join(" ")),
        ),
    }
}

fn simulator_audit() -> (bool, String) {
    let topologies = [symmetric_pair(3.0), weighted_triple(), mm1()];
    let mut failures = Vec::new();
    let mut events = 0;
    for run in 0..AUDIT_RUNS {
        let t = &topologies[(run % 3) as usize];
        let cfg = SimConfig {
            n: if run % 2 == 0 { 50 } else { 200 },
            horizon: 1.0,
            seed: run,
            tie: if run % 4 < 2 { TieRule::LowestIndex } else { TieRule::UniformRandom },
            q0_scaled: vec![0.1; t.num_servers()],
        };
        match simulate(t, &cfg).map_err(|e| e.to_string()).and_then(|p| {
            events += p.num_events();
            audit(t, &p).map_err(|e| e.to_string())
        }) {
            Ok(()) => {}
            Err(e) => failures.push(format!("run {run}: {e}")),
        }
    }
    let mut mismatched = 0;
    for seed in 0..REPRO_RUNS {
        let t = &topologies[(seed % 3) as usize];
        let cfg = SimConfig {
            n: 100,
            horizon: 1.0,
            seed,
            tie: TieRule::UniformRandom,
            q0_scaled: vec![0.0; t.num_servers()],
        };
        let (Ok(p), Ok(q)) = (simulate(t, &cfg), simulate(t, &cfg)) else {
            mismatched += 1;
            continue;
        };
        if p != q || simulate_csv(&p, None).ok() != simulate_csv(&q, None).ok() {
            mismatched += 1;
        }
    }
    (
        failures.is_empty() && mismatched == 0,
        format!(
            "{} of {AUDIT_RUNS} runs failed audit over {events} events{}; {mismatched} of {REPRO_RUNS} reruns differ",
            failures.len(),
            failures.first().map(|f| format!(" (first: {f})")).unwrap_or_default()
        ),
    )
}

fn cost_properties() -> (bool, String) {
    let mut notes = Vec::new();
    let mut passed = true;
    let (p1, p0) = (pi(1.0).unwrap(), pi(0.0).unwrap());
    if p1 != 0.0 || p0 != 1.0 {
        passed = false;
        notes.push(format!("pi(1) = {p1}, pi(0) = {p0}"));
    }

    let t = Topology::unit_weights(vec![vec![0, 1], vec![1]], vec![3.0, 0.5], vec![1.0, 2.0]).unwrap();
    let c = PoissonCost::new(&t);
    let dim = t.num_streams() + t.num_servers();
    let eval = |z: &[f64]| c.eval(&z[..2], &z[2..]);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut convexity_violations = 0;
    for _ in 0..CONVEXITY_TRIPLES {
        let p: Vec<f64> = (0..dim).map(|_| 5.0 * rng.random::<f64>()).collect();
        let q: Vec<f64> = (0..dim).map(|_| 5.0 * rng.random::<f64>()).collect();
        let theta: f64 = rng.random();
        let mix: Vec<f64> = p.iter().zip(&q).map(|(a, b)| theta * a + (1.0 - theta) * b).collect();
        let rhs = theta * eval(&p) + (1.0 - theta) * eval(&q);
        if eval(&mix) > rhs + 1e-12 * (1.0 + rhs.abs()) {
            convexity_violations += 1;
        }
    }
    if convexity_violations > 0 {
        passed = false;
    }
    notes.push(format!("{convexity_violations} convexity violations"));

    let mut worst = 0.0f64;
    let mut grad = vec![0.0; dim];
    for _ in 0..SUBGRADIENT_POINTS {
        let z: Vec<f64> = (0..dim).map(|_| 0.1 + 4.9 * rng.random::<f64>()).collect();
        c.subgradient(&z[..2], &z[2..], &mut grad);
        for i in 0..dim {
            let h = 1e-5;
            let (mut up, mut down) = (z.clone(), z.clone());
            up[i] += h;
            down[i] -= h;
            let fd = (eval(&up) - eval(&down)) / (2.0 * h);
            worst = worst.max((grad[i] - fd).abs() / grad[i].abs().max(1.0));
        }
    }
    if worst > SUBGRADIENT_REL_TOL {
        passed = false;
    }
    notes.push(format!("max relative gradient error {worst:.2e}"));
    (passed, notes.join("; "))
}

/// Runs the selected criteria, printing one line each.
pub fn run_selected(filter: Option<&str>, mut print: impl FnMut(&str)) -> bool {
    let mut all = true;
    let mut any = false;
    for c in CRITERIA.iter().filter(|c| filter.is_none_or(|f| c.selected_by(f))) {
        any = true;
        let outcome = c.run();
        all &= outcome.passed;
        print(&c.line(&outcome));
    }
    any && all
}
