//! Fourier deconvolution estimators of the latent density and distribution
//! function, and a normal-reference bandwidth selector.
//!
//! With a kernel whose Fourier transform `FK` is supported on `[-1, 1]`, the
//! density estimator is the finite integral
//!
//! ```text
//! f(x) = (1/pi) int_0^{1/h} Re[ exp(-itx) FK(th) phi_n(t) / phi_eps(t) ] dt
//! ```
//!
//! evaluated here by the trapezoid rule on `[0, 1/h]` plus the leading
//! Euler-Maclaurin end correction. The integrand is even in `t`, so the only
//! non-vanishing first-order end term sits at `t = 1/h`, where `FK` has a
//! kink whenever `s = 1`.

use std::f64::consts::PI;

use num_complex::Complex64;
use statrs::function::erf::erfc;

use crate::distributions::ErrorModel;
use crate::error::{Error, Result};
use crate::numerics::{sample_variance, FreqGrid, GridFunction};

/// Smallest admissible `|phi_eps|` on the truncated frequency range.
pub const CHAR_FN_FLOOR: f64 = 1e-12;

/// Raw CDF limits at or below this value make the normalized estimate unusable.
pub const NORMALIZER_FLOOR: f64 = 0.1;

/// Kernel with Fourier transform `(1 - t^r)^s` on `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelSpec {
    r: u32,
    s: u32,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self { r: 6, s: 1 }
    }
}

impl KernelSpec {
    pub fn new(r: u32, s: u32) -> Result<Self> {
        if r < 2 || !r.is_multiple_of(2) {
            return Err(Error::arg(format!("kernel r must be an even integer >= 2, got {r}")));
        }
        if s < 1 {
            return Err(Error::arg("kernel s must be >= 1"));
        }
        Ok(Self { r, s })
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    pub fn s(&self) -> u32 {
        self.s
    }

    /// Fourier transform of the kernel.
    pub fn ft(&self, t: f64) -> f64 {
        let a = t.abs();
        if a >= 1.0 {
            0.0
        } else {
            (1.0 - a.powi(self.r as i32)).powi(self.s as i32)
        }
    }

    /// Left derivative of `ft` at `t = 1`.
    pub fn ft_edge_slope(&self) -> f64 {
        if self.s == 1 {
            -(self.r as f64)
        } else {
            0.0
        }
    }

    /// Highest order `L` such that the moments of order `1..=L` vanish.
    pub fn moment_order(&self) -> u32 {
        self.r - 1
    }
}

/// `(1/n) sum_i exp(i t Y_i)`.
pub fn empirical_char(data: &[f64], t: f64) -> Result<Complex64> {
    if data.is_empty() {
        return Err(Error::arg("empirical characteristic function of an empty sample"));
    }
    let sum = data
        .iter()
        .fold(Complex64::new(0.0, 0.0), |acc, &y| acc + Complex64::cis(t * y));
    Ok(sum / data.len() as f64)
}

/// Grid and quadrature resolution for one estimation run.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSettings {
    /// Number of spatial grid points when no explicit grid is given.
    pub grid_points: usize,
    /// Trapezoid nodes on `[0, 1/h]`.
    pub freq_nodes: usize,
    /// Explicit spatial grid; must be strictly increasing and reach past 0.
    pub grid: Option<Vec<f64>>,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self {
            grid_points: 1024,
            freq_nodes: 512,
            grid: None,
        }
    }
}

impl EstimatorSettings {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 16 {
            return Err(Error::arg(format!("need at least 16 grid points, got {}", self.grid_points)));
        }
        if self.freq_nodes < FreqGrid::MIN_NODES {
            return Err(Error::arg(format!(
                "need at least {} frequency nodes, got {}",
                FreqGrid::MIN_NODES,
                self.freq_nodes
            )));
        }
        if let Some(g) = &self.grid {
            if g.len() < 2 || g.windows(2).any(|w| w[1] <= w[0]) || g.iter().any(|x| !x.is_finite()) {
                return Err(Error::arg("explicit grid must be finite and strictly increasing"));
            }
            if g[g.len() - 1] <= 0.0 {
                return Err(Error::arg("explicit grid must extend into x > 0"));
            }
        }
        Ok(())
    }
}

/// Default spatial grid: `points` uniform knots covering
/// `[min(0, min Y - 2 S_Y), max Y + 2 S_Y]`, shifted so that 0 is a knot.
pub fn default_grid(data: &[f64], points: usize) -> Result<Vec<f64>> {
    if data.len() < 2 {
        return Err(Error::arg("default grid needs at least two observations"));
    }
    if points < 3 {
        return Err(Error::arg("default grid needs at least three points"));
    }
    let sd = sample_variance(data).sqrt();
    let (min, max) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
    let lo = (min - 2.0 * sd).min(0.0);
    let hi = (max + 2.0 * sd).max(lo + 1e-8);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::arg("observations must be finite"));
    }
    let step = (hi - lo) / (points - 2) as f64;
    let below = (-lo / step).ceil() as i64;
    Ok((0..points as i64).map(|k| (k - below) as f64 * step).collect())
}

/// Frequency-domain weights `w_j FK(t_j h) phi_n(t_j) / phi_eps(t_j)` on a
/// trapezoid grid, plus the end-correction coefficient.
struct Spectrum {
    freq: FreqGrid,
    re: Vec<f64>,
    im: Vec<f64>,
    edge: Complex64,
}

fn spectrum(data: &[f64], em: &ErrorModel, kernel: &KernelSpec, h: f64, nodes: usize) -> Result<Spectrum> {
    if data.is_empty() {
        return Err(Error::arg("no observations"));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::arg(format!("bandwidth must be positive, got {h}")));
    }
    let freq = FreqGrid::new(1.0 / h, nodes)?;
    let dt = freq.step();
    let mut re = vec![0.0; nodes];
    let mut im = vec![0.0; nodes];
    // phi_n on the grid via the phasor recurrence exp(i j dt y) = exp(i dt y)^j.
    for &y in data {
        let (s, c) = (dt * y).sin_cos();
        let (mut zr, mut zi) = (1.0, 0.0);
        for j in 0..nodes {
            re[j] += zr;
            im[j] += zi;
            let nr = zr * c - zi * s;
            zi = zr * s + zi * c;
            zr = nr;
        }
    }
    let inv_n = 1.0 / data.len() as f64;
    for j in 0..nodes {
        let t = freq.node(j);
        let phi_eps = em.char_fn_re(t);
        if !(phi_eps.abs() >= CHAR_FN_FLOOR) {
            return Err(Error::IllPosed { t, modulus: phi_eps.abs() });
        }
        let w = freq.weight(j) * kernel.ft(t * h) * inv_n / phi_eps;
        re[j] *= w;
        im[j] *= w;
    }
    let t_max = freq.t_max();
    let phi_n_edge = empirical_char(data, t_max)?;
    let edge = phi_n_edge * (h * kernel.ft_edge_slope() / em.char_fn_re(t_max));
    Ok(Spectrum { freq, re, im, edge })
}

const BLOCK: usize = 64;

fn is_uniform(xs: &[f64]) -> Option<f64> {
    if xs.len() < 3 {
        return None;
    }
    let step = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
    let tol = 1e-9 * step;
    xs.windows(2)
        .all(|w| ((w[1] - w[0]) - step).abs() <= tol)
        .then_some(step)
}

fn invert(sp: &Spectrum, xs: &[f64]) -> Vec<f64> {
    let n = sp.re.len();
    let dt = sp.freq.step();
    let t_max = sp.freq.t_max();
    let correction = dt * dt / 12.0;
    let nodes: Vec<f64> = (0..n).map(|j| sp.freq.node(j)).collect();
    let mut out = Vec::with_capacity(xs.len());
    let mut cos = vec![0.0; n];
    let mut sin = vec![0.0; n];

    let dot = |cos: &[f64], sin: &[f64]| -> f64 {
        let mut acc = [0.0f64; 4];
        let chunks = n / 4;
        for c in 0..chunks {
            for l in 0..4 {
                let j = 4 * c + l;
                acc[l] += cos[j] * sp.re[j] + sin[j] * sp.im[j];
            }
        }
        let mut tail = 0.0;
        for j in 4 * chunks..n {
            tail += cos[j] * sp.re[j] + sin[j] * sp.im[j];
        }
        (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
    };
    let finish = |x: f64, sum: f64| -> f64 {
        let e = Complex64::cis(-t_max * x) * sp.edge;
        (sum - correction * e.re) / PI
    };

    match is_uniform(xs) {
        Some(step) => {
            let rot: Vec<(f64, f64)> = nodes.iter().map(|t| (t * step).sin_cos()).collect();
            for (b, block) in xs.chunks(BLOCK).enumerate() {
                let x0 = xs[b * BLOCK];
                for j in 0..n {
                    let (s, c) = (nodes[j] * x0).sin_cos();
                    cos[j] = c;
                    sin[j] = s;
                }
                for (k, &x) in block.iter().enumerate() {
                    if k > 0 {
                        for j in 0..n {
                            let (rs, rc) = rot[j];
                            let c = cos[j] * rc - sin[j] * rs;
                            sin[j] = sin[j] * rc + cos[j] * rs;
                            cos[j] = c;
                        }
                    }
                    out.push(finish(x, dot(&cos, &sin)));
                }
            }
        }
        None => {
            for &x in xs {
                for j in 0..n {
                    let (s, c) = (nodes[j] * x).sin_cos();
                    cos[j] = c;
                    sin[j] = s;
                }
                out.push(finish(x, dot(&cos, &sin)));
            }
        }
    }
    out
}

/// Deconvolution density estimate at the abscissae `xs`.
pub fn estimate_density(
    data: &[f64],
    em: &ErrorModel,
    kernel: &KernelSpec,
    h: f64,
    xs: &[f64],
    freq_nodes: usize,
) -> Result<GridFunction> {
    let sp = spectrum(data, em, kernel, h, freq_nodes)?;
    GridFunction::new(xs.to_vec(), invert(&sp, xs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdfEstimate {
    /// Integral of the density from 0.
    pub cdf_raw: GridFunction,
    /// `cdf_raw / limit_value`.
    pub cdf_norm: GridFunction,
    /// `cdf_raw` at the right end of the grid.
    pub limit_value: f64,
}

/// Integrates a density estimate from 0 and normalizes by its value at the
/// right end of the grid.
pub fn estimate_cdf(dens: &GridFunction) -> Result<CdfEstimate> {
    let cdf_raw = dens.restrict_from(0.0)?.cum_trapezoid();
    let limit_value = cdf_raw.last_y();
    if !(limit_value > NORMALIZER_FLOOR) {
        return Err(Error::DegenerateNormalizer {
            limit: limit_value,
            floor: NORMALIZER_FLOOR,
        });
    }
    let cdf_norm = cdf_raw.divided(limit_value);
    Ok(CdfEstimate {
        cdf_raw,
        cdf_norm,
        limit_value,
    })
}

/// Everything one estimation run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct DeconvEstimate {
    pub density: GridFunction,
    pub cdf_raw: GridFunction,
    pub cdf_norm: GridFunction,
    pub limit_value: f64,
    pub bandwidth: f64,
    pub n: usize,
}

/// Bundles the known error law, the kernel and the grid settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Deconvolver {
    pub error: ErrorModel,
    pub kernel: KernelSpec,
    pub settings: EstimatorSettings,
}

impl Deconvolver {
    pub fn new(error: ErrorModel, kernel: KernelSpec, settings: EstimatorSettings) -> Result<Self> {
        error.validate()?;
        settings.validate()?;
        Ok(Self {
            error,
            kernel,
            settings,
        })
    }

    pub fn grid_for(&self, data: &[f64]) -> Result<Vec<f64>> {
        match &self.settings.grid {
            Some(g) => Ok(g.clone()),
            None => default_grid(data, self.settings.grid_points),
        }
    }

    pub fn select_bandwidth(&self, data: &[f64]) -> Result<f64> {
        select_bandwidth(data, &self.error, &self.kernel)
    }

    /// Full estimate; selects the bandwidth when none is given.
    pub fn estimate(&self, data: &[f64], bandwidth: Option<f64>) -> Result<DeconvEstimate> {
        let h = match bandwidth {
            Some(h) => h,
            None => self.select_bandwidth(data)?,
        };
        let xs = self.grid_for(data)?;
        let density = estimate_density(data, &self.error, &self.kernel, h, &xs, self.settings.freq_nodes)?;
        let cdf = estimate_cdf(&density)?;
        Ok(DeconvEstimate {
            density,
            cdf_raw: cdf.cdf_raw,
            cdf_norm: cdf.cdf_norm,
            limit_value: cdf.limit_value,
            bandwidth: h,
            n: data.len(),
        })
    }

    /// Unnormalized CDF estimate on the non-negative part of the grid only;
    /// never fails on a small normalizer.
    pub fn raw_cdf(&self, data: &[f64], h: f64) -> Result<GridFunction> {
        let xs = self.grid_for(data)?;
        let start = xs.partition_point(|&x| x < 0.0);
        let mut pos = Vec::with_capacity(xs.len() - start + 1);
        if xs.get(start) != Some(&0.0) {
            pos.push(0.0);
        }
        pos.extend_from_slice(&xs[start..]);
        if pos.len() < 2 {
            return Err(Error::arg("grid has no positive part"));
        }
        let dens = estimate_density(data, &self.error, &self.kernel, h, &pos, self.settings.freq_nodes)?;
        Ok(dens.cum_trapezoid())
    }
}

const BANDWIDTH_GRID: usize = 301;
const QUAD_NODES: usize = 513;

/// Composite Simpson rule on `[0, 1]` with `QUAD_NODES` nodes.
fn simpson_unit(f: impl Fn(f64) -> f64) -> f64 {
    let m = QUAD_NODES - 1;
    let h = 1.0 / m as f64;
    let mut acc = f(0.0) + f(1.0);
    for k in 1..m {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(k as f64 * h);
    }
    acc * h / 3.0
}

/// Variance-free part of the AMISE surrogate, `(1/2pi) int |FK(th)|^2 / |phi_eps(t)|^2 dt`.
fn amise_variance(h: f64, em: &ErrorModel, kernel: &KernelSpec) -> f64 {
    simpson_unit(|u| {
        let k = kernel.ft(u);
        let p = em.char_fn_re(u / h);
        k * k / (p * p)
    }) / (PI * h)
}

/// Squared-bias part under a normal reference with variance `ref_var`.
fn amise_bias(h: f64, kernel: &KernelSpec, ref_var: f64) -> f64 {
    let inner = simpson_unit(|u| {
        let d = 1.0 - kernel.ft(u);
        d * d * (-ref_var * u * u / (h * h)).exp()
    }) / h;
    let sd = ref_var.sqrt();
    let tail = PI.sqrt() / (2.0 * sd) * erfc(sd / h);
    (inner + tail) / PI
}

/// Normal-reference AMISE surrogate
/// `A(h) = V(h)/n + (1/2pi) int |1 - FK(th)|^2 |phi_ref(t)|^2 dt`.
pub fn amise_surrogate(h: f64, n: usize, em: &ErrorModel, kernel: &KernelSpec, ref_var: f64) -> f64 {
    amise_variance(h, em, kernel) / n as f64 + amise_bias(h, kernel, ref_var)
}

/// Reference variance for the latent variable: `S_Y^2 - Var(eps)`, floored at
/// `0.05 S_Y^2`.
pub fn reference_variance(data: &[f64], em: &ErrorModel) -> f64 {
    let s2 = sample_variance(data);
    (s2 - em.variance()).max(0.05 * s2)
}

/// Logarithmic search grid for `h`, scaled by the reference standard deviation.
pub fn bandwidth_search_grid(ref_sd: f64) -> Vec<f64> {
    let (lo, hi) = (-2.5f64, 0.7f64);
    (0..BANDWIDTH_GRID)
        .map(|k| ref_sd * 10f64.powf(lo + (hi - lo) * k as f64 / (BANDWIDTH_GRID - 1) as f64))
        .collect()
}

pub fn select_bandwidth(data: &[f64], em: &ErrorModel, kernel: &KernelSpec) -> Result<f64> {
    select_bandwidth_for_size(data, em, kernel, data.len())
}

/// Minimizes the AMISE surrogate with the variance term computed for an
/// effective sample size `n_eff` (used for bootstrap subsamples).
pub fn select_bandwidth_for_size(
    data: &[f64],
    em: &ErrorModel,
    kernel: &KernelSpec,
    n_eff: usize,
) -> Result<f64> {
    if data.len() < 10 {
        return Err(Error::arg(format!(
            "bandwidth selection needs at least 10 observations, got {}",
            data.len()
        )));
    }
    if n_eff == 0 {
        return Err(Error::arg("effective sample size must be positive"));
    }
    let ref_var = reference_variance(data, em);
    if !(ref_var.is_finite() && ref_var > 0.0) {
        return Err(Error::arg("observations have zero or non-finite variance"));
    }
    let mut best = (f64::INFINITY, f64::NAN);
    for h in bandwidth_search_grid(ref_var.sqrt()) {
        let a = amise_surrogate(h, n_eff, em, kernel, ref_var);
        if a < best.0 {
            best = (a, h);
        }
    }
    if !best.1.is_finite() {
        return Err(Error::arg("AMISE surrogate is not finite on the search grid"));
    }
    Ok(best.1)
}
