//! The fluid model: given cumulative arrivals `a(t)` and cumulative service
//! capacity `b(t)`, find queue contents `q`, cumulative routed mass `e` and
//! cumulative departures `d` with
//!
//! * `q_k = q_k(0) + Σ_{m∈C_k} e_km − d_k`,
//! * `ȧ_m = Σ_k ė_km`, with `ė_km > 0` only on the weighted argmin of `S_m`,
//! * `ḋ_k ≤ ḃ_k`, with equality while `q_k > 0`.
//!
//! The solution is unique, so a fixed-step scheme converging to it is
//! enough. Each step routes the arrival increment by water-filling the
//! weighted levels, then serves what the queue holds.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use thiserror::Error;

use crate::path::{PathError, PiecewisePath};
use crate::rate::TIE_RELATIVE_TOLERANCE;
use crate::topology::Topology;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FluidError {
    #[error("initial queue lengths must be nonnegative and finite")]
    BadInitialState,
    #[error("{what} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("cumulative {0} input is decreasing")]
    Decreasing(&'static str),
    #[error("{what} input ends at {end}, before the horizon {horizon}")]
    ShortInput {
        what: &'static str,
        end: f64,
        horizon: f64,
    },
    #[error("horizon and step must be positive and finite")]
    BadStep,
    #[error("solutions were computed from different inputs")]
    MismatchedInputs,
    #[error(transparent)]
    Path(#[from] PathError),
}

/// Result of one fluid step.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteStep {
    /// `e[k][m]`: mass of stream `m` routed to queue `k` during the step.
    pub e: Vec<Vec<f64>>,
    pub d: Vec<f64>,
    pub q_next: Vec<f64>,
}

/// Routes arrival increments `da` by water-filling and serves up to `db`.
///
/// Streams are filled in index order. For stream `m` the weighted levels
/// `(q_k + inflow_k) / w_km`, `k ∈ S_m`, of the lowest queues are raised
/// together, and a queue joins the rising set once the common level reaches
/// its own. Departures are `min(db_k, q_k + inflow_k)`.
pub fn fluid_route_step(topology: &Topology, q: &[f64], da: &[f64], db: &[f64]) -> RouteStep {
    let (k_count, m_count) = (topology.num_servers(), topology.num_streams());
    let mut inflow = vec![0.0; k_count];
    let mut e = vec![vec![0.0; m_count]; k_count];
    for m in 0..m_count {
        let mass = da[m];
        if mass <= 0.0 {
            continue;
        }
        let set = topology.admissible(m);
        let base: Vec<f64> = set.iter().map(|&k| q[k] + inflow[k]).collect();
        let w: Vec<f64> = set.iter().map(|&k| topology.w(k, m)).collect();
        let level: Vec<f64> = base.iter().zip(&w).map(|(b, w)| b / w).collect();
        let mut order: Vec<usize> = (0..set.len()).collect();
        order.sort_by(|&i, &j| level[i].total_cmp(&level[j]).then(i.cmp(&j)));

        let reached = |lvl: f64, theta: f64| lvl <= theta + TIE_RELATIVE_TOLERANCE * theta;
        let mut theta = level[order[0]];
        let mut active = 0;
        while active < order.len() && reached(level[order[active]], theta) {
            active += 1;
        }
        let mut remaining = mass;
        loop {
            let width: f64 = order[..active].iter().map(|&i| w[i]).sum();
            let next = order.get(active).map(|&i| level[i]);
            match next {
                Some(next) if width * (next - theta) < remaining => {
                    remaining -= width * (next - theta);
                    theta = next;
                    while active < order.len() && reached(level[order[active]], theta) {
                        active += 1;
                    }
                }
                _ => {
                    theta += remaining / width;
                    break;
                }
            }
        }
        let mut given = 0.0;
        for (pos, &i) in order[..active].iter().enumerate() {
            let share = if pos + 1 == active {
                (mass - given).max(0.0)
            } else {
                (w[i] * theta - base[i]).max(0.0)
            };
            given += share;
            let k = set[i];
            e[k][m] += share;
            inflow[k] += share;
        }
    }
    let mut d = vec![0.0; k_count];
    let mut q_next = vec![0.0; k_count];
    for k in 0..k_count {
        let content = q[k] + inflow[k];
        d[k] = db[k].min(content);
        q_next[k] = content - d[k];
    }
    RouteStep { e, d, q_next }
}

/// A time-discretised fluid solution.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidSolution {
    pub q: PiecewisePath,
    /// Cumulative routed mass, component `k·M + m`.
    pub e: PiecewisePath,
    pub d: PiecewisePath,
    pub step: f64,
    num_streams: usize,
    input_digest: u64,
}

impl FluidSolution {
    pub fn e_index(&self, k: usize, m: usize) -> usize {
        k * self.num_streams + m
    }

    pub fn num_streams(&self) -> usize {
        self.num_streams
    }
}

fn digest(a: &PiecewisePath, b: &PiecewisePath) -> u64 {
    let mut h = DefaultHasher::new();
    for p in [a, b] {
        for t in p.times() {
            t.to_bits().hash(&mut h);
        }
        for v in p.values().iter().flatten() {
            v.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

/// Nominal cumulative inputs `a(t) = λt`, `b(t) = μt` on `[0, horizon]`.
pub fn nominal_inputs(topology: &Topology, horizon: f64) -> Result<(PiecewisePath, PiecewisePath), PathError> {
    Ok((
        PiecewisePath::linear(vec![0.0; topology.num_streams()], topology.lambda(), horizon)?,
        PiecewisePath::linear(vec![0.0; topology.num_servers()], topology.mu(), horizon)?,
    ))
}

/// Solves the fluid model on `[0, horizon]` with steps of at most `step`.
pub fn fluid_solve(
    topology: &Topology,
    q0: &[f64],
    a: &PiecewisePath,
    b: &PiecewisePath,
    horizon: f64,
    step: f64,
) -> Result<FluidSolution, FluidError> {
    let (k_count, m_count) = (topology.num_servers(), topology.num_streams());
    if q0.len() != k_count {
        return Err(FluidError::DimensionMismatch {
            what: "q0",
            expected: k_count,
            found: q0.len(),
        });
    }
    if q0.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(FluidError::BadInitialState);
    }
    for (what, p, dim) in [("arrival", a, m_count), ("service", b, k_count)] {
        if p.dim() != dim {
            return Err(FluidError::DimensionMismatch {
                what,
                expected: dim,
                found: p.dim(),
            });
        }
        if !p.is_nondecreasing() {
            return Err(FluidError::Decreasing(what));
        }
        if p.horizon() < horizon {
            return Err(FluidError::ShortInput {
                what,
                end: p.horizon(),
                horizon,
            });
        }
    }
    if !(horizon > 0.0 && horizon.is_finite() && step > 0.0 && step.is_finite()) {
        return Err(FluidError::BadStep);
    }

    let steps = ((horizon / step) - 1e-9).ceil().max(1.0) as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut qs = Vec::with_capacity(steps + 1);
    let mut es = Vec::with_capacity(steps + 1);
    let mut ds = Vec::with_capacity(steps + 1);

    let mut q = q0.to_vec();
    let mut e_cum = vec![0.0; k_count * m_count];
    let mut d_cum = vec![0.0; k_count];
    times.push(0.0);
    qs.push(q.clone());
    es.push(e_cum.clone());
    ds.push(d_cum.clone());

    let mut a_prev = a.eval(0.0);
    let mut b_prev = b.eval(0.0);
    for j in 1..=steps {
        let t = if j == steps { horizon } else { j as f64 * step };
        let a_now = a.eval(t);
        let b_now = b.eval(t);
        let da: Vec<f64> = a_now.iter().zip(&a_prev).map(|(x, y)| x - y).collect();
        let db: Vec<f64> = b_now.iter().zip(&b_prev).map(|(x, y)| x - y).collect();
        let r = fluid_route_step(topology, &q, &da, &db);
        for k in 0..k_count {
            for m in 0..m_count {
                e_cum[k * m_count + m] += r.e[k][m];
            }
            d_cum[k] += r.d[k];
        }
        q = r.q_next;
        times.push(t);
        qs.push(q.clone());
        es.push(e_cum.clone());
        ds.push(d_cum.clone());
        a_prev = a_now;
        b_prev = b_now;
    }

    Ok(FluidSolution {
        q: PiecewisePath::new(times.clone(), qs)?,
        e: PiecewisePath::new(times.clone(), es)?,
        d: PiecewisePath::new(times, ds)?,
        step,
        num_streams: m_count,
        input_digest: digest(a, b),
    })
}

/// Largest increase of `V(t) = Σ_k |q_k(t) − q'_k(t)|` between consecutive
/// breakpoints, or 0 if `V` never increases.
pub fn lyapunov_check(first: &FluidSolution, second: &FluidSolution) -> Result<f64, FluidError> {
    if first.input_digest != second.input_digest
        || first.q.times() != second.q.times()
        || first.q.dim() != second.q.dim()
    {
        return Err(FluidError::MismatchedInputs);
    }
    let v: Vec<f64> = first
        .q
        .values()
        .iter()
        .zip(second.q.values())
        .map(|(p, q)| p.iter().zip(q).map(|(x, y)| (x - y).abs()).sum())
        .collect();
    Ok(v.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_queue() -> Topology {
        Topology::unit_weights(vec![vec![0, 1]], vec![3.0], vec![1.0, 1.0]).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn step_unique_argmin() {
        let r = fluid_route_step(&two_queue(), &[1.0, 0.0], &[0.3], &[0.0, 0.0]);
        assert_eq!(r.e, vec![vec![0.0], vec![0.3]]);
        assert_eq!(r.q_next, vec![1.0, 0.3]);
    }

    #[test]
    fn step_tied_split() {
        let r = fluid_route_step(&two_queue(), &[0.5, 0.5], &[0.4], &[0.0, 0.0]);
        assert!(close(&[r.e[0][0], r.e[1][0]], &[0.2, 0.2], 1e-15));
        assert!(close(&r.q_next, &[0.7, 0.7], 1e-15));
    }

    #[test]
    fn step_two_phase_fill() {
        let r = fluid_route_step(&two_queue(), &[0.1, 0.5], &[1.0], &[0.0, 0.0]);
        assert!(close(&[r.e[0][0], r.e[1][0]], &[0.7, 0.3], 1e-15), "{r:?}");
        assert!(close(&r.q_next, &[0.8, 0.8], 1e-15));
    }

    #[test]
    fn step_respects_weights() {
        // levels q/w: 0.5/1 and 0.5/2; raising both to θ needs 1·(θ−0.5) + 2·(θ−0.25)
        let t = Topology::from_toml_str(
            "servers = 2\nstreams = 1\nlambda = [1.0]\nmu = [1.0, 1.0]\nadmissible = [[1, 2]]\n\
             [[weight]]\nserver = 2\nstream = 1\nvalue = 2\n",
        )
        .unwrap();
        let r = fluid_route_step(&t, &[0.5, 0.5], &[1.0], &[0.0, 0.0]);
        // 0.5 lifts queue 2 to level 0.5, the remaining 0.5 splits 1:2
        assert!(close(&[r.e[0][0], r.e[1][0]], &[0.5 / 3.0, 0.5 + 1.0 / 3.0], 1e-15), "{r:?}");
    }

    #[test]
    fn departures_clip_at_content() {
        let r = fluid_route_step(&two_queue(), &[0.1, 0.0], &[0.0], &[0.5, 0.5]);
        assert_eq!(r.d, vec![0.1, 0.0]);
        assert_eq!(r.q_next, vec![0.0, 0.0]);
    }

    #[test]
    fn single_queue_drains() {
        let t = Topology::unit_weights(vec![vec![0]], vec![1.0], vec![2.0]).unwrap();
        let (a, b) = nominal_inputs(&t, 2.0).unwrap();
        for h in [1e-2, 1e-3] {
            let sol = fluid_solve(&t, &[1.0], &a, &b, 2.0, h).unwrap();
            let exact = PiecewisePath::new(vec![0.0, 1.0, 2.0], vec![vec![1.0], vec![0.0], vec![0.0]]).unwrap();
            assert!(sol.q.sup_distance(&exact) <= 2.0 * h);
        }
    }

    #[test]
    fn empty_system_stays_empty() {
        let t = Topology::unit_weights(vec![vec![0]], vec![0.0], vec![2.0]).unwrap();
        let (a, b) = nominal_inputs(&t, 1.0).unwrap();
        let sol = fluid_solve(&t, &[0.0], &a, &b, 1.0, 0.1).unwrap();
        assert!(sol.q.values().iter().all(|v| v[0] == 0.0));
        assert!(sol.d.values().iter().all(|v| v[0] == 0.0));
    }

    #[test]
    fn rejects_malformed_inputs() {
        let t = two_queue();
        let (a, b) = nominal_inputs(&t, 1.0).unwrap();
        assert_eq!(
            fluid_solve(&t, &[-1.0, 0.0], &a, &b, 1.0, 0.1),
            Err(FluidError::BadInitialState)
        );
        let down = PiecewisePath::new(vec![0.0, 1.0], vec![vec![1.0], vec![0.0]]).unwrap();
        assert_eq!(
            fluid_solve(&t, &[0.0, 0.0], &down, &b, 1.0, 0.1),
            Err(FluidError::Decreasing("arrival"))
        );
        assert!(matches!(
            fluid_solve(&t, &[0.0, 0.0], &a, &b, 2.0, 0.1),
            Err(FluidError::ShortInput { .. })
        ));
        assert_eq!(fluid_solve(&t, &[0.0, 0.0], &a, &b, 1.0, 0.0), Err(FluidError::BadStep));
    }

    #[test]
    fn lyapunov_identical_and_mismatched() {
        let t = two_queue();
        let (a, b) = nominal_inputs(&t, 1.0).unwrap();
        let s1 = fluid_solve(&t, &[1.0, 0.0], &a, &b, 1.0, 1e-2).unwrap();
        assert_eq!(lyapunov_check(&s1, &s1).unwrap(), 0.0);
        let (a2, b2) = nominal_inputs(&t.with_rates(vec![2.0], vec![1.0, 1.0]).unwrap(), 1.0).unwrap();
        let s2 = fluid_solve(&t, &[1.0, 0.0], &a2, &b2, 1.0, 1e-2).unwrap();
        assert_eq!(lyapunov_check(&s1, &s2), Err(FluidError::MismatchedInputs));
    }

    #[test]
    fn lyapunov_single_queue_pair() {
        let t = Topology::unit_weights(vec![vec![0]], vec![1.0], vec![2.0]).unwrap();
        let (a, b) = nominal_inputs(&t, 3.0).unwrap();
        let h = 1e-3;
        let s1 = fluid_solve(&t, &[1.0], &a, &b, 3.0, h).unwrap();
        let s2 = fluid_solve(&t, &[2.0], &a, &b, 3.0, h).unwrap();
        assert!(lyapunov_check(&s1, &s2).unwrap() <= 5.0 * h);
    }

    #[test]
    fn lyapunov_symmetric_pair() {
        let t = two_queue();
        let (a, b) = nominal_inputs(&t, 2.0).unwrap();
        let h = 1e-3;
        let s1 = fluid_solve(&t, &[1.0, 0.0], &a, &b, 2.0, h).unwrap();
        let s2 = fluid_solve(&t, &[0.0, 1.0], &a, &b, 2.0, h).unwrap();
        assert!(lyapunov_check(&s1, &s2).unwrap() <= 5.0 * h);
    }
}
