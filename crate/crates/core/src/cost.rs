//! Local cost densities `ψ(a, b)` for arrival rates `a ∈ ℝ₊^M` and service
//! rates `b ∈ ℝ₊^K`.
//!
//! Costs are extended reals: `f64::INFINITY` marks rate vectors the model
//! cannot produce, and it propagates through sums as usual.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::topology::Topology;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("negative argument {0} to the entropy cost")]
    NegativeArgument(f64),
    #[error("expected {expected} {what} rates, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
}

/// `α log α − α + 1` without argument checks; `0 log 0 = 0`.
#[inline]
pub(crate) fn entropy(alpha: f64) -> f64 {
    if alpha < 1e-300 {
        1.0
    } else {
        alpha * alpha.ln() - alpha + 1.0
    }
}

/// Relative-entropy cost of running a unit-rate Poisson process at rate `α`.
pub fn pi(alpha: f64) -> Result<f64, CostError> {
    if alpha < 0.0 || alpha.is_nan() {
        return Err(CostError::NegativeArgument(alpha));
    }
    Ok(entropy(alpha))
}

/// `rate · π(x / rate)`, with the `0/0 = 0` convention for a zero rate.
#[inline]
pub(crate) fn scaled_entropy(x: f64, rate: f64) -> f64 {
    if x < 0.0 {
        f64::INFINITY
    } else if rate == 0.0 {
        if x == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        rate * entropy(x / rate)
    }
}

/// A convex, lower semicontinuous, nonnegative local cost.
///
/// The rate solver relies on convexity; it does not search globally.
/// Gradients and Hessians are only requested at points where the cost is
/// finite, and only for the coordinates flagged active.
pub trait CostModel: Send + Sync {
    fn num_arrivals(&self) -> usize;

    fn num_servers(&self) -> usize;

    fn eval(&self, a: &[f64], b: &[f64]) -> f64;

    /// Gradient with respect to `(a, b)` written into `grad[..M+K]`.
    fn subgradient(&self, a: &[f64], b: &[f64], grad: &mut [f64]);

    /// Hessian over `(a, b)`. Rows and columns of inactive coordinates are
    /// left at zero. The default is a central difference of
    /// [`CostModel::subgradient`].
    fn hessian(&self, a: &[f64], b: &[f64], active: &[bool]) -> DMatrix<f64> {
        let (m, k) = (self.num_arrivals(), self.num_servers());
        let n = m + k;
        let mut h = DMatrix::zeros(n, n);
        let mut z: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
        let mut gp = vec![0.0; n];
        let mut gm = vec![0.0; n];
        for j in (0..n).filter(|&j| active[j]) {
            let base = z[j];
            let step = 1e-6 * base.abs().max(1e-3);
            z[j] = base + step;
            self.subgradient(&z[..m], &z[m..], &mut gp);
            z[j] = (base - step).max(0.5 * base);
            let back = base - z[j];
            self.subgradient(&z[..m], &z[m..], &mut gm);
            z[j] = base;
            for i in (0..n).filter(|&i| active[i]) {
                h[(i, j)] = (gp[i] - gm[i]) / (step + back);
            }
        }
        (&h + h.transpose()) * 0.5
    }

    /// Streams whose arrival rate can be positive at finite cost.
    fn arrival_support(&self) -> Vec<bool> {
        vec![true; self.num_arrivals()]
    }

    /// The separable view `ψ(a, b) = ψ^A(a) + Σ_k ψ^B_k(b_k)`, if the model
    /// has one.
    fn separable(&self) -> Option<&dyn SeparableCost> {
        None
    }
}

/// A cost of the form `ψ^A(a) + Σ_k ψ^B_k(b_k)` with each `ψ^B_k` convex,
/// lower semicontinuous and attaining zero.
pub trait SeparableCost: Send + Sync {
    fn arrival_cost(&self, a: &[f64]) -> f64;

    fn arrival_gradient(&self, a: &[f64], grad: &mut [f64]);

    /// Hessian of `ψ^A`; rows of inactive streams stay zero.
    fn arrival_hessian(&self, a: &[f64], active: &[bool]) -> DMatrix<f64>;

    fn service_cost(&self, k: usize, b: f64) -> f64;

    fn service_derivative(&self, k: usize, b: f64) -> f64;

    fn service_second_derivative(&self, k: usize, b: f64) -> f64;

    /// `μ_k = sup{b : ψ^B_k(b) = 0}`.
    fn zero_level(&self, k: usize) -> f64;
}

/// Cost of independent Poisson arrival and service processes:
/// `Σ_m λ_m π(a_m/λ_m) + Σ_k μ_k π(b_k/μ_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonCost {
    lambda: Vec<f64>,
    mu: Vec<f64>,
}

impl PoissonCost {
    pub fn new(topology: &Topology) -> Self {
        PoissonCost {
            lambda: topology.lambda().to_vec(),
            mu: topology.mu().to_vec(),
        }
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }
}

#[inline]
fn log_ratio(x: f64, rate: f64) -> f64 {
    if rate == 0.0 {
        0.0
    } else {
        (x / rate).ln()
    }
}

impl CostModel for PoissonCost {
    fn num_arrivals(&self) -> usize {
        self.lambda.len()
    }

    fn num_servers(&self) -> usize {
        self.mu.len()
    }

    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        self.arrival_cost(a)
            + b.iter()
                .zip(&self.mu)
                .map(|(&x, &r)| scaled_entropy(x, r))
                .sum::<f64>()
    }

    fn subgradient(&self, a: &[f64], b: &[f64], grad: &mut [f64]) {
        let m = a.len();
        for (g, (&x, &r)) in grad.iter_mut().zip(a.iter().zip(&self.lambda)) {
            *g = log_ratio(x, r);
        }
        for (g, (&x, &r)) in grad[m..].iter_mut().zip(b.iter().zip(&self.mu)) {
            *g = log_ratio(x, r);
        }
    }

    fn hessian(&self, a: &[f64], b: &[f64], active: &[bool]) -> DMatrix<f64> {
        let n = a.len() + b.len();
        let mut h = DMatrix::zeros(n, n);
        let rates = self.lambda.iter().chain(&self.mu);
        for (i, (x, &r)) in a.iter().chain(b).zip(rates).enumerate() {
            if active[i] && r > 0.0 {
                h[(i, i)] = 1.0 / x;
            }
        }
        h
    }

    fn arrival_support(&self) -> Vec<bool> {
        self.lambda.iter().map(|&l| l > 0.0).collect()
    }

    fn separable(&self) -> Option<&dyn SeparableCost> {
        Some(self)
    }
}

impl SeparableCost for PoissonCost {
    fn arrival_cost(&self, a: &[f64]) -> f64 {
        a.iter()
            .zip(&self.lambda)
            .map(|(&x, &r)| scaled_entropy(x, r))
            .sum()
    }

    fn arrival_gradient(&self, a: &[f64], grad: &mut [f64]) {
        for (g, (&x, &r)) in grad.iter_mut().zip(a.iter().zip(&self.lambda)) {
            *g = log_ratio(x, r);
        }
    }

    fn arrival_hessian(&self, a: &[f64], active: &[bool]) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(a.len(), a.len());
        for (i, (&x, &r)) in a.iter().zip(&self.lambda).enumerate() {
            if active[i] && r > 0.0 {
                h[(i, i)] = 1.0 / x;
            }
        }
        h
    }

    fn service_cost(&self, k: usize, b: f64) -> f64 {
        scaled_entropy(b, self.mu[k])
    }

    fn service_derivative(&self, k: usize, b: f64) -> f64 {
        log_ratio(b, self.mu[k])
    }

    fn service_second_derivative(&self, _k: usize, b: f64) -> f64 {
        1.0 / b
    }

    fn zero_level(&self, k: usize) -> f64 {
        self.mu[k]
    }
}

/// Evaluates the Poisson cost for the topology's nominal rates.
pub fn psi_poisson(a: &[f64], b: &[f64], topology: &Topology) -> Result<f64, CostError> {
    let check = |what, expected, found| {
        if expected != found {
            Err(CostError::DimensionMismatch {
                what,
                expected,
                found,
            })
        } else {
            Ok(())
        }
    };
    check("arrival", topology.num_streams(), a.len())?;
    check("service", topology.num_servers(), b.len())?;
    if let Some(&x) = a.iter().chain(b).find(|x| !(**x >= 0.0)) {
        return Err(CostError::NegativeArgument(x));
    }
    Ok(PoissonCost::new(topology).eval(a, b))
}
