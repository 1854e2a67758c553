//! Grid-sampled functions and the small amount of numerical machinery shared
//! by the estimators: linear interpolation, cumulative trapezoid integration,
//! sup-norm distances and order-statistic quantiles.

use crate::error::{Error, Result};

/// A real function known at strictly increasing abscissae and interpolated
/// linearly in between. Outside the knot range it is clamped to the boundary
/// values.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl GridFunction {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::arg(format!(
                "abscissae and values differ in length ({} vs {})",
                xs.len(),
                ys.len()
            )));
        }
        if xs.len() < 2 {
            return Err(Error::arg("a grid function needs at least two knots"));
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(Error::arg("grid function contains non-finite values"));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::arg("abscissae must be strictly increasing"));
        }
        Ok(Self { xs, ys })
    }

    /// Samples `f` at the given abscissae.
    pub fn from_fn(xs: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let ys = xs.iter().map(|&x| f(x)).collect();
        Self::new(xs, ys)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn first_x(&self) -> f64 {
        self.xs[0]
    }

    pub fn last_x(&self) -> f64 {
        self.xs[self.xs.len() - 1]
    }

    pub fn last_y(&self) -> f64 {
        self.ys[self.ys.len() - 1]
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::arg(format!("cannot evaluate at {x}")));
        }
        Ok(self.eval_finite(x))
    }

    pub(crate) fn eval_finite(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        // First knot strictly greater than x; guaranteed in 1..n.
        let j = self.xs.partition_point(|&k| k <= x);
        let (x0, x1) = (self.xs[j - 1], self.xs[j]);
        let (y0, y1) = (self.ys[j - 1], self.ys[j]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// Antiderivative from the first knot, exact for the piecewise-linear
    /// interpolant.
    pub fn cum_trapezoid(&self) -> GridFunction {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.len());
        out.push(0.0);
        for k in 1..self.len() {
            acc += 0.5 * (self.ys[k] + self.ys[k - 1]) * (self.xs[k] - self.xs[k - 1]);
            out.push(acc);
        }
        GridFunction {
            xs: self.xs.clone(),
            ys: out,
        }
    }

    /// Maximum absolute difference over the shared knots.
    pub fn sup_distance(&self, other: &GridFunction) -> Result<f64> {
        if self.xs != other.xs {
            return Err(Error::arg("sup distance needs identical grids"));
        }
        Ok(self
            .ys
            .iter()
            .zip(&other.ys)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn scaled(&self, factor: f64) -> GridFunction {
        GridFunction {
            xs: self.xs.clone(),
            ys: self.ys.iter().map(|y| y * factor).collect(),
        }
    }

    pub fn divided(&self, divisor: f64) -> GridFunction {
        GridFunction {
            xs: self.xs.clone(),
            ys: self.ys.iter().map(|y| y / divisor).collect(),
        }
    }

    /// Same function restricted to knots at or beyond `x0`, with an
    /// interpolated knot inserted at `x0` when needed.
    pub fn restrict_from(&self, x0: f64) -> Result<GridFunction> {
        if !x0.is_finite() || x0 < self.xs[0] || x0 >= self.last_x() {
            return Err(Error::arg(format!(
                "cannot restrict a grid on [{}, {}] to start at {x0}",
                self.xs[0],
                self.last_x()
            )));
        }
        let start = self.xs.partition_point(|&k| k < x0);
        let mut xs = Vec::with_capacity(self.len() - start + 1);
        let mut ys = Vec::with_capacity(self.len() - start + 1);
        if self.xs[start] != x0 {
            xs.push(x0);
            ys.push(self.eval_finite(x0));
        }
        xs.extend_from_slice(&self.xs[start..]);
        ys.extend_from_slice(&self.ys[start..]);
        GridFunction::new(xs, ys)
    }
}

/// Frequency cutoff and quadrature resolution for Fourier inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreqGrid {
    t_max: f64,
    n_nodes: usize,
}

impl FreqGrid {
    pub const MIN_NODES: usize = 16;

    pub fn new(t_max: f64, n_nodes: usize) -> Result<Self> {
        if !(t_max.is_finite() && t_max > 0.0) {
            return Err(Error::arg(format!("frequency cutoff must be positive, got {t_max}")));
        }
        if n_nodes < Self::MIN_NODES {
            return Err(Error::arg(format!(
                "need at least {} frequency nodes, got {n_nodes}",
                Self::MIN_NODES
            )));
        }
        Ok(Self { t_max, n_nodes })
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn step(&self) -> f64 {
        self.t_max / (self.n_nodes - 1) as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        if j + 1 == self.n_nodes {
            self.t_max
        } else {
            j as f64 * self.step()
        }
    }

    /// Trapezoid weight of node `j` (including the step).
    pub fn weight(&self, j: usize) -> f64 {
        if j == 0 || j + 1 == self.n_nodes {
            0.5 * self.step()
        } else {
            self.step()
        }
    }
}

/// `n` equally spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|k| if k + 1 == n { hi } else { lo + k as f64 * step })
        .collect()
}

/// The `ceil(level * N)`-th smallest value (1-based), without interpolation.
pub fn empirical_quantile(values: &[f64], level: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::arg("quantile of an empty sample"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::arg(format!("quantile level {level} outside (0, 1)")));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::arg("quantile of a sample containing NaN"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (level * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}
