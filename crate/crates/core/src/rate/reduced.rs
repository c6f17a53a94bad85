//! `Ψ_IJ(y)`: the rate function restricted to one constant-dynamics domain,
//! with service rates minimised out.
//!
//! For a separable cost, minimising `ψ^B_k(b_k)` over `b_k ≥ d_k` gives
//! `ψ^B_k(d_k)` when `d_k > μ_k` and zero otherwise; on busy queues
//! `b_k = d_k` is forced. What remains is a program over `(a, d)` through
//! the routing rates on `J`.

use nalgebra::DMatrix;

use super::{
    barrier_options, check_velocity, inequalities, map_failure, DomainLabel, RateError,
    RateOptions, Routing,
};
use crate::cost::{CostModel, SeparableCost};
use crate::linalg::{self, Smooth};
use crate::topology::Topology;

struct ReducedProgram<'a> {
    cost: &'a dyn SeparableCost,
    routing: &'a Routing,
    y: &'a [f64],
    idle: Vec<bool>,
    m_count: usize,
    active_streams: Vec<bool>,
}

impl ReducedProgram<'_> {
    fn arrivals(&self, z: &[f64]) -> Vec<f64> {
        let mut a = vec![0.0; self.m_count];
        for (i, &(_, m)) in self.routing.free.iter().enumerate() {
            a[m] += z[i];
        }
        a
    }

    fn departures(&self, z: &[f64]) -> Vec<f64> {
        (0..self.y.len())
            .map(|k| self.routing.inflow(k, z) - self.y[k])
            .collect()
    }

    fn service(&self, k: usize, d: f64) -> f64 {
        if self.idle[k] && d <= self.cost.zero_level(k) {
            0.0
        } else {
            self.cost.service_cost(k, d)
        }
    }

    fn service_slope(&self, k: usize, d: f64) -> (f64, f64) {
        if self.idle[k] && d <= self.cost.zero_level(k) {
            (0.0, 0.0)
        } else {
            (
                self.cost.service_derivative(k, d),
                self.cost.service_second_derivative(k, d),
            )
        }
    }
}

impl Smooth for ReducedProgram<'_> {
    fn value(&self, z: &[f64]) -> f64 {
        let d = self.departures(z);
        self.cost.arrival_cost(&self.arrivals(z))
            + d.iter()
                .enumerate()
                .map(|(k, &dk)| self.service(k, dk))
                .sum::<f64>()
    }

    fn gradient(&self, z: &[f64], grad: &mut [f64]) {
        let a = self.arrivals(z);
        let d = self.departures(z);
        let mut ga = vec![0.0; self.m_count];
        self.cost.arrival_gradient(&a, &mut ga);
        for (i, &(k, m)) in self.routing.free.iter().enumerate() {
            grad[i] = ga[m] + self.service_slope(k, d[k]).0;
        }
    }

    fn hessian(&self, z: &[f64]) -> DMatrix<f64> {
        let a = self.arrivals(z);
        let d = self.departures(z);
        let ha = self.cost.arrival_hessian(&a, &self.active_streams);
        let free = &self.routing.free;
        DMatrix::from_fn(free.len(), free.len(), |i, j| {
            let (ki, mi) = free[i];
            let (kj, mj) = free[j];
            let service = if ki == kj {
                self.service_slope(ki, d[ki]).1
            } else {
                0.0
            };
            ha[(mi, mj)] + service
        })
    }
}

/// Evaluates `Ψ_IJ(y)` for a valid label and a separable cost.
///
/// For any `x ∈ F_IJ` the result equals [`super::local_rate`] at `(x, y)`.
pub fn psi_ij(
    label: &DomainLabel,
    y: &[f64],
    topology: &Topology,
    cost: &dyn CostModel,
    opts: &RateOptions,
) -> Result<f64, RateError> {
    if !(opts.tol > 0.0) {
        return Err(RateError::BadTolerance(opts.tol));
    }
    label.validate(topology)?;
    check_velocity(y, topology)?;
    let sep = cost.separable().ok_or(RateError::NonSeparable)?;
    let (k_count, m_count) = (topology.num_servers(), topology.num_streams());

    // H_J: e_km = 0 unless k ∈ J_m
    let mut in_j = vec![vec![false; m_count]; k_count];
    for (m, set) in label.argmin.iter().enumerate() {
        for &k in set {
            in_j[k][m] = true;
        }
    }
    if Routing::infeasible_queue(&in_j, y).is_some() {
        return Ok(f64::INFINITY);
    }
    let support = cost.arrival_support();
    let routing = Routing::new(&in_j, &support);
    let has_inflow: Vec<Vec<bool>> = (0..k_count)
        .map(|k| vec![!routing.free_of_queue[k].is_empty()])
        .collect();
    if Routing::infeasible_queue(&has_inflow, y).is_some() {
        return Ok(f64::INFINITY);
    }

    let mut active_streams = vec![false; m_count];
    for &(_, m) in &routing.free {
        active_streams[m] = true;
    }
    let program = ReducedProgram {
        cost: sep,
        routing: &routing,
        y,
        idle: (0..k_count).map(|k| label.zero_set.contains(&k)).collect(),
        m_count,
        active_streams,
    };
    let n = routing.free.len();
    let mut rows = Vec::new();
    routing.push_constraints(y, n, &mut rows);
    let result = linalg::minimize(
        &program,
        &inequalities(rows, n),
        routing.starting_point(y),
        barrier_options(opts),
    )
    .map_err(map_failure)?;
    Ok(result.value)
}

#[cfg(test)]
mod tests {
    use super::super::tests::{mm1, two_queue, unit_velocity_oracle};
    use super::super::{classify_domain, local_rate};
    use super::*;
    use crate::cost::PoissonCost;

    #[test]
    fn single_queue_values() {
        let t = mm1();
        let c = PoissonCost::new(&t);
        let opts = RateOptions::default();
        let busy = DomainLabel {
            zero_set: vec![],
            argmin: vec![vec![0]],
        };
        let v = psi_ij(&busy, &[1.0], &t, &c, &opts).unwrap();
        assert!((v - unit_velocity_oracle()).abs() < 1e-7, "{v}");
        let idle = DomainLabel {
            zero_set: vec![0],
            argmin: vec![vec![0]],
        };
        assert!(psi_ij(&idle, &[0.0], &t, &c, &opts).unwrap().abs() < 1e-8);
    }

    #[test]
    fn straddling_label_is_invalid() {
        let t = two_queue(1.0);
        let c = PoissonCost::new(&t);
        let label = DomainLabel {
            zero_set: vec![0],
            argmin: vec![vec![0, 1]],
        };
        assert!(matches!(
            psi_ij(&label, &[0.0, 0.0], &t, &c, &RateOptions::default()),
            Err(RateError::InvalidLabel(_))
        ));
    }

    #[test]
    fn non_separable_cost_is_rejected() {
        struct Quadratic;
        impl CostModel for Quadratic {
            fn num_arrivals(&self) -> usize {
                1
            }
            fn num_servers(&self) -> usize {
                1
            }
            fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
                (a[0] - 1.0).powi(2) + (b[0] - 1.0).powi(2) + (a[0] - 1.0) * (b[0] - 1.0)
            }
            fn subgradient(&self, a: &[f64], b: &[f64], g: &mut [f64]) {
                g[0] = 2.0 * (a[0] - 1.0) + (b[0] - 1.0);
                g[1] = 2.0 * (b[0] - 1.0) + (a[0] - 1.0);
            }
        }
        let t = mm1();
        let label = classify_domain(&[1.0], &t).unwrap();
        assert_eq!(
            psi_ij(&label, &[0.5], &t, &Quadratic, &RateOptions::default()),
            Err(RateError::NonSeparable)
        );
        // the general solver still handles it: min over a − b = 0.5
        let w = local_rate(&[1.0], &[0.5], &t, &Quadratic, &RateOptions::default()).unwrap();
        // a = 1.25, b = 0.75 by symmetry: 0.0625 + 0.0625 − 0.0625
        assert!((w.value - 0.0625).abs() < 1e-7, "{}", w.value);
    }

    #[test]
    fn agrees_with_local_rate_at_a_tie() {
        let t = two_queue(1.0);
        let c = PoissonCost::new(&t);
        let opts = RateOptions::default();
        for (x, y) in [
            ([0.0, 0.0], [0.3, -0.2]),
            ([0.7, 0.7], [1.0, -0.5]),
            ([0.0, 0.0], [0.0, 0.0]),
            ([0.0, 0.0], [1.5, 1.5]),
        ] {
            let label = classify_domain(&x, &t).unwrap();
            let reduced = psi_ij(&label, &y, &t, &c, &opts).unwrap();
            let full = local_rate(&x, &y, &t, &c, &opts).unwrap().value;
            assert!((reduced - full).abs() < 2e-8, "{x:?} {y:?}: {reduced} vs {full}");
        }
    }
}
