use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("a path needs at least one breakpoint")]
    Empty,
    #[error("first breakpoint must be at t = 0, found {0}")]
    BadStart(f64),
    #[error("breakpoints must be finite and strictly increasing (at index {0})")]
    NotIncreasing(usize),
    #[error("value at breakpoint {index} has {found} components, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("value at breakpoint {0} is not finite")]
    NonFinite(usize),
}

/// A continuous, piecewise-linear trajectory `[0, t_N] → ℝ^ℓ` given by its
/// values at breakpoints `0 = t_0 < t_1 < … < t_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePath {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl PiecewisePath {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self, PathError> {
        if times.is_empty() {
            return Err(PathError::Empty);
        }
        if times[0] != 0.0 {
            return Err(PathError::BadStart(times[0]));
        }
        if times.len() != values.len() {
            return Err(PathError::DimensionMismatch {
                index: times.len().min(values.len()),
                expected: times.len(),
                found: values.len(),
            });
        }
        for i in 1..times.len() {
            if !(times[i] > times[i - 1]) || !times[i].is_finite() {
                return Err(PathError::NotIncreasing(i));
            }
        }
        let dim = values[0].len();
        for (i, v) in values.iter().enumerate() {
            if v.len() != dim {
                return Err(PathError::DimensionMismatch {
                    index: i,
                    expected: dim,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(PathError::NonFinite(i));
            }
        }
        Ok(PiecewisePath { times, values })
    }

    /// `t ↦ start + rate·t` on `[0, horizon]`.
    pub fn linear(start: Vec<f64>, rate: &[f64], horizon: f64) -> Result<Self, PathError> {
        let end = start.iter().zip(rate).map(|(s, r)| s + r * horizon).collect();
        Self::new(vec![0.0, horizon], vec![start, end])
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn num_segments(&self) -> usize {
        self.times.len() - 1
    }

    /// Linear interpolation; constant extension outside `[0, t_N]`.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let n = self.times.len();
        if t <= 0.0 || n == 1 {
            out.copy_from_slice(&self.values[0]);
            return;
        }
        if t >= self.times[n - 1] {
            out.copy_from_slice(&self.values[n - 1]);
            return;
        }
        // first breakpoint strictly after t
        let j = self.times.partition_point(|&s| s <= t);
        let (t0, t1) = (self.times[j - 1], self.times[j]);
        let w = (t - t0) / (t1 - t0);
        for (o, (a, b)) in out.iter_mut().zip(self.values[j - 1].iter().zip(&self.values[j])) {
            *o = a + w * (b - a);
        }
    }

    /// Componentwise nondecreasing along the breakpoints.
    pub fn is_nondecreasing(&self) -> bool {
        self.values
            .windows(2)
            .all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| b >= a))
    }

    /// Segment `i` as `(t_i, t_{i+1}, q(t_i), velocity)`.
    pub fn segment(&self, i: usize) -> (f64, f64, &[f64], Vec<f64>) {
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let v = self.values[i]
            .iter()
            .zip(&self.values[i + 1])
            .map(|(a, b)| (b - a) / (t1 - t0))
            .collect();
        (t0, t1, &self.values[i], v)
    }

    /// Largest `|p(t) − q(t)|` over all components and all `t` up to the
    /// shorter horizon. Exact for two piecewise-linear paths: the difference
    /// is linear between the union of their breakpoints.
    pub fn sup_distance(&self, other: &PiecewisePath) -> f64 {
        let horizon = self.horizon().min(other.horizon());
        let mut grid: Vec<f64> = self
            .times
            .iter()
            .chain(&other.times)
            .copied()
            .filter(|&t| t <= horizon)
            .collect();
        grid.push(horizon);
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let mut p = vec![0.0; self.dim()];
        let mut q = vec![0.0; other.dim()];
        grid.iter()
            .map(|&t| {
                self.eval_into(t, &mut p);
                other.eval_into(t, &mut q);
                p.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Keeps the listed components.
    pub fn project(&self, components: &[usize]) -> PiecewisePath {
        PiecewisePath {
            times: self.times.clone(),
            values: self
                .values
                .iter()
                .map(|v| components.iter().map(|&i| v[i]).collect())
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_and_extends() {
        let p = PiecewisePath::new(vec![0.0, 1.0, 3.0], vec![vec![0.0], vec![2.0], vec![0.0]]).unwrap();
        assert_eq!(p.eval(0.5), vec![1.0]);
        assert_eq!(p.eval(2.0), vec![1.0]);
        assert_eq!(p.eval(1.0), vec![2.0]);
        assert_eq!(p.eval(5.0), vec![0.0]);
        assert_eq!(p.horizon(), 3.0);
        let (_, _, q, v) = p.segment(1);
        assert_eq!(q, &[2.0]);
        assert_eq!(v, vec![-1.0]);
    }

    #[test]
    fn rejects_malformed() {
        assert_eq!(PiecewisePath::new(vec![], vec![]), Err(PathError::Empty));
        assert_eq!(
            PiecewisePath::new(vec![0.0, 0.0], vec![vec![0.0], vec![1.0]]),
            Err(PathError::NotIncreasing(1))
        );
        assert!(matches!(
            PiecewisePath::new(vec![0.0, 1.0], vec![vec![0.0], vec![1.0, 2.0]]),
            Err(PathError::DimensionMismatch { .. })
        ));
        assert_eq!(
            PiecewisePath::new(vec![0.5], vec![vec![0.0]]),
            Err(PathError::BadStart(0.5))
        );
    }

    #[test]
    fn sup_distance_sees_interior_kinks() {
        let p = PiecewisePath::new(vec![0.0, 0.5, 1.0], vec![vec![0.0], vec![1.0], vec![0.0]]).unwrap();
        let q = PiecewisePath::new(vec![0.0, 1.0], vec![vec![0.0], vec![0.0]]).unwrap();
        assert_eq!(p.sup_distance(&q), 1.0);
    }
}
