//! Exhaustive grid search over `N(x, y)`, used only to check the solvers.
//!
//! Routing rates `e_km` run over `{0, h, 2h, …}` up to `λ_m + r`. The
//! remaining variables follow from the constraints: `a = eᵀ1`,
//! `d = e·1 − y`, `b = d` on busy queues. On empty queues `b_k` runs over
//! the lattice `{d_k, d_k + h, …}` inside the box `[μ_k − r, μ_k + r]`.
//! Every rate must also sit inside its box around the nominal value. The
//! minimum over grid points is an upper bound on `L(x, y)`.

use super::{FeasibleSetSpec, RateError};
use crate::cost::CostModel;
use crate::topology::Topology;

const DIMENSION_LIMIT: usize = 8;
const MAX_GRID_POINTS: f64 = 4e9;

struct Grid {
    step: f64,
    free: Vec<(usize, usize)>,
    /// Largest index of each free entry.
    last: Vec<usize>,
}

impl Grid {
    fn points(&self) -> f64 {
        self.last.iter().map(|&n| (n + 1) as f64).product()
    }

    /// Calls `visit` with the per-stream and per-queue index sums of every
    /// grid point.
    fn for_each(&self, m_count: usize, k_count: usize, mut visit: impl FnMut(&[usize], &[usize])) {
        let mut idx = vec![0usize; self.free.len()];
        let mut stream_sum = vec![0usize; m_count];
        let mut queue_sum = vec![0usize; k_count];
        loop {
            visit(&stream_sum, &queue_sum);
            let mut p = self.free.len();
            loop {
                if p == 0 {
                    return;
                }
                p -= 1;
                let (k, m) = self.free[p];
                if idx[p] < self.last[p] {
                    idx[p] += 1;
                    stream_sum[m] += 1;
                    queue_sum[k] += 1;
                    break;
                }
                stream_sum[m] -= idx[p];
                queue_sum[k] -= idx[p];
                idx[p] = 0;
            }
        }
    }
}

fn in_box(v: f64, nominal: f64, radius: f64) -> bool {
    v >= 0.0 && v >= nominal - radius && v <= nominal + radius
}

/// Grid-search upper bound on `L(x, y)`; `f64::INFINITY` when no grid point
/// is feasible.
pub fn local_rate_bruteforce(
    x: &[f64],
    y: &[f64],
    topology: &Topology,
    cost: &dyn CostModel,
    grid_step: f64,
    box_radius: f64,
) -> Result<f64, RateError> {
    if !(grid_step > 0.0) || !(box_radius > 0.0) {
        return Err(RateError::BadGrid);
    }
    let (k_count, m_count) = (topology.num_servers(), topology.num_streams());
    let dims = k_count * m_count + m_count + 2 * k_count;
    if dims > DIMENSION_LIMIT {
        return Err(RateError::DimensionBudget {
            dims,
            limit: DIMENSION_LIMIT,
        });
    }
    let spec = FeasibleSetSpec::new(x, y, topology)?;
    let (lambda, mu) = (topology.lambda(), topology.mu());

    let mut free = Vec::new();
    let mut last = Vec::new();
    for k in 0..k_count {
        for m in 0..m_count {
            if spec.allowed[k][m] {
                free.push((k, m));
                last.push(((lambda[m] + box_radius) / grid_step).floor() as usize);
            }
        }
    }
    let grid = Grid {
        step: grid_step,
        free,
        last,
    };
    let max_queue_index: Vec<usize> = (0..k_count)
        .map(|k| {
            grid.free
                .iter()
                .zip(&grid.last)
                .filter(|((kk, _), _)| *kk == k)
                .map(|(_, &n)| n)
                .sum()
        })
        .collect();

    let d_of = |k: usize, s: usize| s as f64 * grid.step - spec.y[k];
    let b_lattice_end = |k: usize| ((mu[k] + box_radius + spec.y[k]) / grid.step).floor().max(0.0) as usize;

    let arrivals = |sums: &[usize], a: &mut [f64]| -> bool {
        for m in 0..m_count {
            a[m] = sums[m] as f64 * grid.step;
            if !in_box(a[m], lambda[m], box_radius) {
                return false;
            }
        }
        true
    };
    let d_ok = |k: usize, d: f64| d >= 0.0 && d <= mu[k] + box_radius;

    let mut best = f64::INFINITY;
    if let Some(sep) = cost.separable() {
        if grid.points() > MAX_GRID_POINTS {
            return Err(RateError::GridTooLarge {
                points: grid.points(),
            });
        }
        // Per queue: least service cost over the b-lattice given the index
        // sum of the routed mass.
        let tables: Vec<Vec<f64>> = (0..k_count)
            .map(|k| {
                let len = max_queue_index[k].max(b_lattice_end(k)) + 1;
                let service = |i: usize| {
                    let b = d_of(k, i);
                    if in_box(b, mu[k], box_radius) {
                        sep.service_cost(k, b)
                    } else {
                        f64::INFINITY
                    }
                };
                let mut table: Vec<f64> = (0..len).map(service).collect();
                if !spec.busy[k] {
                    for i in (0..len - 1).rev() {
                        table[i] = table[i].min(table[i + 1]);
                    }
                }
                for (s, v) in table.iter_mut().enumerate() {
                    if !d_ok(k, d_of(k, s)) {
                        *v = f64::INFINITY;
                    }
                }
                table
            })
            .collect();
        let mut a = vec![0.0; m_count];
        grid.for_each(m_count, k_count, |stream_sum, queue_sum| {
            let service: f64 = (0..k_count).map(|k| tables[k][queue_sum[k]]).sum();
            if service.is_finite() && arrivals(stream_sum, &mut a) {
                best = best.min(service + sep.arrival_cost(&a));
            }
        });
    } else {
        let idle: Vec<usize> = (0..k_count).filter(|&k| !spec.busy[k]).collect();
        let b_points: f64 = idle.iter().map(|&k| (b_lattice_end(k) + 1) as f64).product();
        if grid.points() * b_points > MAX_GRID_POINTS {
            return Err(RateError::GridTooLarge {
                points: grid.points() * b_points,
            });
        }
        let mut a = vec![0.0; m_count];
        let mut b = vec![0.0; k_count];
        grid.for_each(m_count, k_count, |stream_sum, queue_sum| {
            if !arrivals(stream_sum, &mut a) {
                return;
            }
            if (0..k_count).any(|k| !d_ok(k, d_of(k, queue_sum[k]))) {
                return;
            }
            for k in 0..k_count {
                b[k] = d_of(k, queue_sum[k]);
            }
            // odometer over b_k ≥ d_k on the idle queues
            let start: Vec<usize> = idle.iter().map(|&k| queue_sum[k]).collect();
            let mut off = start.clone();
            loop {
                for (i, &k) in idle.iter().enumerate() {
                    b[k] = d_of(k, off[i]);
                }
                if (0..k_count).all(|k| in_box(b[k], mu[k], box_radius)) {
                    best = best.min(cost.eval(&a, &b));
                }
                let mut p = idle.len();
                loop {
                    if p == 0 {
                        return;
                    }
                    p -= 1;
                    if off[p] < b_lattice_end(idle[p]) {
                        off[p] += 1;
                        break;
                    }
                    off[p] = start[p];
                }
            }
        });
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::super::tests::{mm1, two_queue, unit_velocity_oracle};
    use super::*;
    use crate::cost::PoissonCost;

    #[test]
    fn nominal_point_is_on_the_grid() {
        let t = mm1();
        let c = PoissonCost::new(&t);
        assert_eq!(local_rate_bruteforce(&[1.0], &[0.0], &t, &c, 0.01, 5.0).unwrap(), 0.0);
    }

    #[test]
    fn unit_velocity() {
        let t = mm1();
        let c = PoissonCost::new(&t);
        let v = local_rate_bruteforce(&[1.0], &[1.0], &t, &c, 0.001, 5.0).unwrap();
        let exact = unit_velocity_oracle();
        assert!((v - exact).abs() < 1e-3, "{v}");
        assert!(v >= exact - 1e-12);
    }

    #[test]
    fn empty_feasible_set() {
        let t = two_queue(1.0);
        let c = PoissonCost::new(&t);
        let v = local_rate_bruteforce(&[1.0, 2.0], &[0.0, 1.0], &t, &c, 0.01, 5.0).unwrap();
        assert_eq!(v, f64::INFINITY);
    }

    #[test]
    fn budget_and_grid_checks() {
        let t = Topology::unit_weights(vec![vec![0, 1], vec![0, 1]], vec![1.0; 2], vec![1.0; 2])
            .unwrap();
        let c = PoissonCost::new(&t);
        assert!(matches!(
            local_rate_bruteforce(&[1.0, 1.0], &[0.0, 0.0], &t, &c, 0.1, 1.0),
            Err(RateError::DimensionBudget { dims: 10, limit: 8 })
        ));
        let t = mm1();
        assert_eq!(
            local_rate_bruteforce(&[1.0], &[0.0], &t, &c, 0.0, 1.0),
            Err(RateError::BadGrid)
        );
    }

    #[test]
    fn generic_path_matches_separable_path() {
        struct Opaque(PoissonCost);
        impl CostModel for Opaque {
            fn num_arrivals(&self) -> usize {
                self.0.num_arrivals()
            }
            fn num_servers(&self) -> usize {
                self.0.num_servers()
            }
            fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
                self.0.eval(a, b)
            }
            fn subgradient(&self, a: &[f64], b: &[f64], g: &mut [f64]) {
                self.0.subgradient(a, b, g)
            }
        }
        let t = two_queue(1.0);
        let c = PoissonCost::new(&t);
        let o = Opaque(c.clone());
        for (x, y) in [([0.0, 0.0], [0.4, -0.3]), ([0.5, 0.5], [1.0, 0.2]), ([0.0, 1.0], [0.5, -1.0])] {
            let s = local_rate_bruteforce(&x, &y, &t, &c, 0.02, 3.0).unwrap();
            let g = local_rate_bruteforce(&x, &y, &t, &o, 0.02, 3.0).unwrap();
            assert!((s - g).abs() < 1e-12, "{s} vs {g}");
        }
    }
}
