//! Small dense log-barrier Newton method for smooth convex objectives under
//! linear inequality constraints `G z ≥ h`.

use nalgebra::{DMatrix, DVector};

pub(crate) trait Smooth {
    fn value(&self, z: &[f64]) -> f64;
    fn gradient(&self, z: &[f64], grad: &mut [f64]);
    fn hessian(&self, z: &[f64]) -> DMatrix<f64>;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BarrierOptions {
    /// Target duality gap `m / t`.
    pub gap: f64,
    pub max_newton_steps: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct BarrierResult {
    pub z: Vec<f64>,
    pub value: f64,
    /// `max(‖∇f − Gᵀν‖∞, max_i ν_i s_i)` at the returned point.
    pub kkt_residual: f64,
    pub newton_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum BarrierFailure {
    NotInterior,
    IterationLimit { steps: usize },
}

pub(crate) struct Inequalities {
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
}

impl Inequalities {
    fn slacks(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.g * z - &self.h
    }
}

fn solve_spd(mut h: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let n = h.nrows();
    let scale = (0..n).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut shift = 0.0;
    for _ in 0..12 {
        if let Some(ch) = h.clone().cholesky() {
            return Some(ch.solve(rhs));
        }
        let bump = if shift == 0.0 { 1e-14 * scale } else { shift * 100.0 };
        for i in 0..n {
            h[(i, i)] += bump - shift;
        }
        shift = bump;
    }
    h.lu().solve(rhs)
}

pub(crate) fn minimize(
    f: &dyn Smooth,
    cons: &Inequalities,
    z0: Vec<f64>,
    opts: BarrierOptions,
) -> Result<BarrierResult, BarrierFailure> {
    let n = z0.len();
    let m = cons.h.len();
    let mut z = DVector::from_vec(z0);
    if m > 0 && cons.slacks(&z).iter().any(|&s| s <= 0.0) {
        return Err(BarrierFailure::NotInterior);
    }
    if n == 0 {
        return Ok(BarrierResult {
            value: f.value(&[]),
            z: Vec::new(),
            kkt_residual: 0.0,
            newton_steps: 0,
        });
    }

    let phi = |t: f64, z: &DVector<f64>| -> f64 {
        let s = cons.slacks(z);
        if s.iter().any(|&v| v <= 0.0) {
            return f64::INFINITY;
        }
        let fv = f.value(z.as_slice());
        if !fv.is_finite() {
            return f64::INFINITY;
        }
        t * fv - s.iter().map(|v| v.ln()).sum::<f64>()
    };

    let mut t = 1.0;
    let mut steps = 0usize;
    let mut grad_f = vec![0.0; n];
    loop {
        // centering
        for _ in 0..200 {
            steps += 1;
            if steps > opts.max_newton_steps {
                return Err(BarrierFailure::IterationLimit { steps });
            }
            let s = cons.slacks(&z);
            f.gradient(z.as_slice(), &mut grad_f);
            let inv_s = s.map(|v| 1.0 / v);
            let grad = DVector::from_column_slice(&grad_f) * t - cons.g.transpose() * &inv_s;
            let mut hess = f.hessian(z.as_slice()) * t;
            if m > 0 {
                let gs = DMatrix::from_fn(m, n, |i, j| cons.g[(i, j)] * inv_s[i]);
                hess += gs.transpose() * gs;
            }
            let Some(dz) = solve_spd(hess, &(-&grad)) else {
                break;
            };
            let decrement = -grad.dot(&dz);
            if !(decrement > 1e-14) {
                break;
            }
            let phi0 = phi(t, &z);
            let mut alpha = 1.0;
            let mut moved = false;
            while alpha > 1e-14 {
                let trial = &z + &dz * alpha;
                let p = phi(t, &trial);
                if p.is_finite() && p <= phi0 - 0.25 * alpha * decrement {
                    z = trial;
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !moved || decrement < 1e-11 {
                break;
            }
        }
        if m == 0 || (m as f64) / t < opts.gap {
            break;
        }
        t *= 10.0;
    }

    let s = cons.slacks(&z);
    f.gradient(z.as_slice(), &mut grad_f);
    let duals = s.map(|v| 1.0 / (t * v));
    let stationarity = DVector::from_column_slice(&grad_f) - cons.g.transpose() * &duals;
    let stat = stationarity.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let comp = if m == 0 { 0.0 } else { 1.0 / t };
    Ok(BarrierResult {
        value: f.value(z.as_slice()),
        z: z.as_slice().to_vec(),
        kkt_residual: stat.max(comp),
        newton_steps: steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quad;
    impl Smooth for Quad {
        fn value(&self, z: &[f64]) -> f64 {
            (z[0] - 2.0).powi(2) + (z[1] + 1.0).powi(2)
        }
        fn gradient(&self, z: &[f64], g: &mut [f64]) {
            g[0] = 2.0 * (z[0] - 2.0);
            g[1] = 2.0 * (z[1] + 1.0);
        }
        fn hessian(&self, _z: &[f64]) -> DMatrix<f64> {
            DMatrix::identity(2, 2) * 2.0
        }
    }

    #[test]
    fn projects_onto_nonnegative_orthant() {
        let cons = Inequalities {
            g: DMatrix::identity(2, 2),
            h: DVector::zeros(2),
        };
        let opts = BarrierOptions {
            gap: 1e-12,
            max_newton_steps: 1000,
        };
        let r = minimize(&Quad, &cons, vec![1.0, 1.0], opts).unwrap();
        assert!((r.z[0] - 2.0).abs() < 1e-9);
        assert!(r.z[1].abs() < 1e-9);
        assert!((r.value - 1.0).abs() < 1e-10);
        assert!(r.kkt_residual < 1e-6, "{r:?}");
    }

    #[test]
    fn rejects_infeasible_start() {
        let cons = Inequalities {
            g: DMatrix::identity(2, 2),
            h: DVector::zeros(2),
        };
        let opts = BarrierOptions {
            gap: 1e-12,
            max_newton_steps: 1000,
        };
        assert_eq!(
            minimize(&Quad, &cons, vec![-1.0, 1.0], opts).unwrap_err(),
            BarrierFailure::NotInterior
        );
    }
}
