//! Least concave majorant on `[0, inf)` of a grid-sampled function.
//!
//! The input is treated as constant beyond its last knot, so the majorant is
//! the upper concave hull of the knots up to the (first) global maximum and
//! constant at that maximum afterwards.

use crate::error::{Error, Result};
use crate::numerics::GridFunction;

#[derive(Debug, Clone, PartialEq)]
pub struct ConcaveEnvelope {
    knot_xs: Vec<f64>,
    knot_ys: Vec<f64>,
    /// `slopes[k]` is the slope between knots `k` and `k + 1`; all strictly
    /// positive and strictly decreasing.
    slopes: Vec<f64>,
}

impl ConcaveEnvelope {
    pub fn knot_xs(&self) -> &[f64] {
        &self.knot_xs
    }

    pub fn knot_ys(&self) -> &[f64] {
        &self.knot_ys
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    /// Abscissa of the first maximum, beyond which the envelope is flat.
    pub fn plateau_start(&self) -> f64 {
        self.knot_xs[self.knot_xs.len() - 1]
    }

    pub fn max_value(&self) -> f64 {
        self.knot_ys[self.knot_ys.len() - 1]
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.knot_xs.len();
        if x <= self.knot_xs[0] {
            return self.knot_ys[0];
        }
        if x >= self.knot_xs[n - 1] {
            return self.knot_ys[n - 1];
        }
        let j = self.knot_xs.partition_point(|&k| k <= x);
        let (x0, x1) = (self.knot_xs[j - 1], self.knot_xs[j]);
        let (y0, y1) = (self.knot_ys[j - 1], self.knot_ys[j]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// Right-hand slope at `x`; zero on the plateau.
    pub fn slope(&self, x: f64) -> f64 {
        if x >= self.plateau_start() {
            return 0.0;
        }
        let j = self.knot_xs.partition_point(|&k| k <= x);
        self.slopes[j.saturating_sub(1)]
    }

    /// Envelope sampled at the given abscissae.
    pub fn on_grid(&self, xs: &[f64]) -> Result<GridFunction> {
        GridFunction::new(xs.to_vec(), xs.iter().map(|&x| self.eval(x)).collect())
    }

    /// Rescales the ordinates by `1 / divisor`.
    pub fn divided(&self, divisor: f64) -> ConcaveEnvelope {
        ConcaveEnvelope {
            knot_xs: self.knot_xs.clone(),
            knot_ys: self.knot_ys.iter().map(|y| y / divisor).collect(),
            slopes: self.slopes.iter().map(|s| s / divisor).collect(),
        }
    }
}

/// Least concave majorant on `[0, inf)` of `g`, extended constant past its
/// last knot.
pub fn lcm(g: &GridFunction) -> ConcaveEnvelope {
    let (xs, ys) = (g.xs(), g.ys());
    let mut hull: Vec<usize> = Vec::with_capacity(xs.len());
    for k in 0..xs.len() {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // Drop b when it lies on or below the chord from a to k.
            let cross = (xs[b] - xs[a]) * (ys[k] - ys[a]) - (ys[b] - ys[a]) * (xs[k] - xs[a]);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(k);
    }
    let mut top = 0;
    for (i, &k) in hull.iter().enumerate() {
        if ys[k] > ys[hull[top]] {
            top = i;
        }
    }
    hull.truncate(top + 1);
    let knot_xs: Vec<f64> = hull.iter().map(|&k| xs[k]).collect();
    let knot_ys: Vec<f64> = hull.iter().map(|&k| ys[k]).collect();
    let slopes = knot_xs
        .windows(2)
        .zip(knot_ys.windows(2))
        .map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0]))
        .collect();
    ConcaveEnvelope {
        knot_xs,
        knot_ys,
        slopes,
    }
}

/// The majorant evaluated on `g`'s own grid.
pub fn lcm_on_grid(g: &GridFunction) -> GridFunction {
    lcm(g)
        .on_grid(g.xs())
        .expect("grid of a valid function is valid")
}

pub fn lcm_slope(env: &ConcaveEnvelope, x: f64) -> f64 {
    env.slope(x)
}

/// `(||M g1 - M g2||, ||g1 - g2||)`; the first never exceeds the second.
pub fn marshall_check(g1: &GridFunction, g2: &GridFunction) -> Result<(f64, f64)> {
    if g1.xs() != g2.xs() {
        return Err(Error::arg("Marshall check needs identical grids"));
    }
    let lhs = lcm_on_grid(g1).sup_distance(&lcm_on_grid(g2))?;
    let rhs = g1.sup_distance(g2)?;
    Ok((lhs, rhs))
}
