//! Ground-truth laws for the latent variable and the known measurement-error
//! laws, with closed-form characteristic functions, densities and exact
//! samplers.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Beta as BetaDist, Distribution, Exp1, Gamma, Weibull as WeibullDist};
use statrs::function::beta::{beta_reg, ln_beta};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

impl Moments {
    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Law of the non-negative latent variable in simulations.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetSpec {
    Weibull { shape: f64, scale: f64 },
    Beta { a: f64, b: f64 },
    /// `w * U[0,1] + (1 - w) * (shift + Exp(1))`.
    ShiftedExpUniformMix { uniform_weight: f64, shift: f64 },
    Mixture {
        weights: [f64; 2],
        components: Box<[TargetSpec; 2]>,
    },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::arg(format!("{name} must be positive and finite, got {v}")))
    }
}

fn probability(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::arg(format!("{name} must lie in [0, 1], got {v}")))
    }
}

impl TargetSpec {
    pub fn weibull(shape: f64, scale: f64) -> Self {
        TargetSpec::Weibull { shape, scale }
    }

    pub fn beta(a: f64, b: f64) -> Self {
        TargetSpec::Beta { a, b }
    }

    pub fn mixture(w1: f64, first: TargetSpec, w2: f64, second: TargetSpec) -> Self {
        TargetSpec::Mixture {
            weights: [w1, w2],
            components: Box::new([first, second]),
        }
    }

    /// `0.5 U[0,1] + 0.5 (1 + Exp(1))`: affine on `[0,1]`, strictly concave after.
    pub fn weak_concave_mix() -> Self {
        TargetSpec::ShiftedExpUniformMix {
            uniform_weight: 0.5,
            shift: 1.0,
        }
    }

    /// `0.2 W(3,1) + 0.8 B(0.5,0.75)`: not concave, but looks concave once blurred.
    pub fn misleading_mix() -> Self {
        TargetSpec::mixture(0.2, TargetSpec::weibull(3.0, 1.0), 0.8, TargetSpec::beta(0.5, 0.75))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TargetSpec::Weibull { shape, scale } => {
                positive("Weibull shape", *shape)?;
                positive("Weibull scale", *scale)
            }
            TargetSpec::Beta { a, b } => {
                positive("Beta a", *a)?;
                positive("Beta b", *b)
            }
            TargetSpec::ShiftedExpUniformMix {
                uniform_weight,
                shift,
            } => {
                probability("uniform weight", *uniform_weight)?;
                if !(shift.is_finite() && *shift >= 0.0) {
                    return Err(Error::arg(format!("shift must be non-negative, got {shift}")));
                }
                Ok(())
            }
            TargetSpec::Mixture {
                weights,
                components,
            } => {
                probability("mixture weight", weights[0])?;
                probability("mixture weight", weights[1])?;
                if (weights[0] + weights[1] - 1.0).abs() > 1e-12 {
                    return Err(Error::arg(format!(
                        "mixture weights must sum to one, got {} + {}",
                        weights[0], weights[1]
                    )));
                }
                components[0].validate()?;
                components[1].validate()
            }
        }
    }

    /// Replaces the first shape parameter (Weibull shape, Beta `a`); used by
    /// parameter sweeps.
    pub fn with_shape(&self, a: f64) -> Result<Self> {
        match self {
            TargetSpec::Weibull { scale, .. } => Ok(TargetSpec::Weibull { shape: a, scale: *scale }),
            TargetSpec::Beta { b, .. } => Ok(TargetSpec::Beta { a, b: *b }),
            _ => Err(Error::arg("shape sweeps apply to Weibull and Beta targets only")),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match self {
            TargetSpec::Weibull { shape, scale } => {
                if x == 0.0 {
                    return match shape.partial_cmp(&1.0) {
                        Some(std::cmp::Ordering::Less) => f64::INFINITY,
                        Some(std::cmp::Ordering::Equal) => 1.0 / scale,
                        _ => 0.0,
                    };
                }
                let z = x / scale;
                shape / scale * z.powf(shape - 1.0) * (-z.powf(*shape)).exp()
            }
            TargetSpec::Beta { a, b } => {
                if x > 1.0 {
                    return 0.0;
                }
                if x == 0.0 || x == 1.0 {
                    let (p, q) = if x == 0.0 { (*a, *b) } else { (*b, *a) };
                    return if p < 1.0 {
                        f64::INFINITY
                    } else if p == 1.0 {
                        (-ln_beta(*a, *b)).exp() * if q == 1.0 { 1.0 } else { 0.0f64.powf(q - 1.0) }
                    } else {
                        0.0
                    };
                }
                ((a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta(*a, *b)).exp()
            }
            TargetSpec::ShiftedExpUniformMix {
                uniform_weight,
                shift,
            } => {
                let u = if x <= 1.0 { 1.0 } else { 0.0 };
                let e = if x >= *shift { (-(x - shift)).exp() } else { 0.0 };
                uniform_weight * u + (1.0 - uniform_weight) * e
            }
            TargetSpec::Mixture {
                weights,
                components,
            } => weights[0] * components[0].pdf(x) + weights[1] * components[1].pdf(x),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self {
            TargetSpec::Weibull { shape, scale } => -(-(x / scale).powf(*shape)).exp_m1(),
            TargetSpec::Beta { a, b } => {
                if x >= 1.0 {
                    1.0
                } else {
                    beta_reg(*a, *b, x)
                }
            }
            TargetSpec::ShiftedExpUniformMix {
                uniform_weight,
                shift,
            } => {
                let e = if x > *shift { -(-(x - shift)).exp_m1() } else { 0.0 };
                uniform_weight * x.min(1.0) + (1.0 - uniform_weight) * e
            }
            TargetSpec::Mixture {
                weights,
                components,
            } => weights[0] * components[0].cdf(x) + weights[1] * components[1].cdf(x),
        }
    }

    fn support_upper(&self) -> Option<f64> {
        match self {
            TargetSpec::Beta { .. } => Some(1.0),
            TargetSpec::Mixture { components, .. } => {
                match (components[0].support_upper(), components[1].support_upper()) {
                    (Some(a), Some(b)) => Some(a.max(b)),
                    _ => None,
                }
            }
            _ => None,
        }
    }

    /// Generalized inverse of the distribution function.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::arg(format!("quantile level {u} outside [0, 1]")));
        }
        if u == 0.0 {
            return Ok(0.0);
        }
        if let TargetSpec::Weibull { shape, scale } = self {
            return Ok(if u == 1.0 {
                f64::INFINITY
            } else {
                scale * (-(-u).ln_1p()).powf(1.0 / shape)
            });
        }
        let mut hi = match self.support_upper() {
            Some(h) => h,
            None => {
                if u == 1.0 {
                    return Ok(f64::INFINITY);
                }
                let mut h = 1.0;
                while self.cdf(h) < u {
                    h *= 2.0;
                }
                h
            }
        };
        let mut lo = 0.0;
        // Bisection to the resolution of f64.
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(hi)
    }

    pub fn moments(&self) -> Moments {
        match self {
            TargetSpec::Weibull { shape, scale } => {
                let g1 = gamma(1.0 + 1.0 / shape);
                let g2 = gamma(1.0 + 2.0 / shape);
                Moments {
                    mean: scale * g1,
                    variance: scale * scale * (g2 - g1 * g1),
                }
            }
            TargetSpec::Beta { a, b } => {
                let s = a + b;
                Moments {
                    mean: a / s,
                    variance: a * b / (s * s * (s + 1.0)),
                }
            }
            TargetSpec::ShiftedExpUniformMix {
                uniform_weight,
                shift,
            } => mix_moments(
                [*uniform_weight, 1.0 - uniform_weight],
                [
                    Moments {
                        mean: 0.5,
                        variance: 1.0 / 12.0,
                    },
                    Moments {
                        mean: shift + 1.0,
                        variance: 1.0,
                    },
                ],
            ),
            TargetSpec::Mixture {
                weights,
                components,
            } => mix_moments(*weights, [components[0].moments(), components[1].moments()]),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, k: usize) -> Vec<f64> {
        let sampler = TargetSampler::new(self);
        (0..k).map(|_| sampler.draw(rng)).collect()
    }

    /// Short human-readable form, e.g. `weibull(0.75,1)`.
    pub fn label(&self) -> String {
        match self {
            TargetSpec::Weibull { shape, scale } => format!("weibull({shape},{scale})"),
            TargetSpec::Beta { a, b } => format!("beta({a},{b})"),
            TargetSpec::ShiftedExpUniformMix {
                uniform_weight,
                shift,
            } => format!("{uniform_weight}*uniform(0,1)+{}*({shift}+exp(1))", 1.0 - uniform_weight),
            TargetSpec::Mixture {
                weights,
                components,
            } => format!(
                "{}*{}+{}*{}",
                weights[0],
                components[0].label(),
                weights[1],
                components[1].label()
            ),
        }
    }
}

fn mix_moments(w: [f64; 2], m: [Moments; 2]) -> Moments {
    let mean = w[0] * m[0].mean + w[1] * m[1].mean;
    let second = w[0] * (m[0].variance + m[0].mean * m[0].mean)
        + w[1] * (m[1].variance + m[1].mean * m[1].mean);
    Moments {
        mean,
        variance: second - mean * mean,
    }
}

enum TargetSampler {
    Weibull(WeibullDist<f64>),
    Beta(BetaDist<f64>),
    ShiftedExp { uniform_weight: f64, shift: f64 },
    Mixture(f64, Box<[TargetSampler; 2]>),
}

impl TargetSampler {
    fn new(spec: &TargetSpec) -> Self {
        match spec {
            TargetSpec::Weibull { shape, scale } => {
                TargetSampler::Weibull(WeibullDist::new(*scale, *shape).expect("validated Weibull"))
            }
            TargetSpec::Beta { a, b } => {
                TargetSampler::Beta(BetaDist::new(*a, *b).expect("validated Beta"))
            }
            TargetSpec::ShiftedExpUniformMix {
                uniform_weight,
                shift,
            } => TargetSampler::ShiftedExp {
                uniform_weight: *uniform_weight,
                shift: *shift,
            },
            TargetSpec::Mixture {
                weights,
                components,
            } => TargetSampler::Mixture(
                weights[0],
                Box::new([TargetSampler::new(&components[0]), TargetSampler::new(&components[1])]),
            ),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            TargetSampler::Weibull(d) => d.sample(rng),
            TargetSampler::Beta(d) => d.sample(rng),
            TargetSampler::ShiftedExp {
                uniform_weight,
                shift,
            } => {
                if rng.random::<f64>() < *uniform_weight {
                    rng.random::<f64>()
                } else {
                    let e: f64 = Exp1.sample(rng);
                    shift + e
                }
            }
            TargetSampler::Mixture(w, parts) => {
                if rng.random::<f64>() < *w {
                    parts[0].draw(rng)
                } else {
                    parts[1].draw(rng)
                }
            }
        }
    }
}

/// Known law of the additive measurement error. All members are symmetric
/// about zero, so their characteristic functions are real and even.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorModel {
    /// Degenerate at zero; reduces deconvolution to ordinary kernel smoothing.
    NoError,
    /// Laplace law parameterized by its standard deviation.
    Laplace { sd: f64 },
    /// Symmetric gamma `SG(shape, scale)` with characteristic function
    /// `(1 + scale t^2)^(-shape)`.
    SymmetricGamma { shape: f64, scale: f64 },
    /// `p SG(shape, scale) + (1 - p) Laplace(b = lap_scale)`, where
    /// `lap_scale` is the Laplace scale (variance `2 lap_scale^2`).
    LapSgMixture {
        p: f64,
        shape: f64,
        scale: f64,
        lap_scale: f64,
    },
}

impl ErrorModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ErrorModel::NoError => Ok(()),
            ErrorModel::Laplace { sd } => positive("Laplace sd", sd),
            ErrorModel::SymmetricGamma { shape, scale } => {
                positive("symmetric gamma shape", shape)?;
                positive("symmetric gamma scale", scale)
            }
            ErrorModel::LapSgMixture {
                p,
                shape,
                scale,
                lap_scale,
            } => {
                probability("mixture p", p)?;
                positive("symmetric gamma shape", shape)?;
                positive("symmetric gamma scale", scale)?;
                positive("Laplace scale", lap_scale)
            }
        }
    }

    /// Real part of the characteristic function; the imaginary part is zero
    /// for every supported model.
    pub fn char_fn_re(&self, t: f64) -> f64 {
        match *self {
            ErrorModel::NoError => 1.0,
            ErrorModel::Laplace { sd } => 1.0 / (1.0 + 0.5 * sd * sd * t * t),
            ErrorModel::SymmetricGamma { shape, scale } => sg_char_fn(shape, scale, t),
            ErrorModel::LapSgMixture {
                p,
                shape,
                scale,
                lap_scale,
            } => {
                p * sg_char_fn(shape, scale, t)
                    + (1.0 - p) / (1.0 + lap_scale * lap_scale * t * t)
            }
        }
    }

    pub fn char_fn(&self, t: f64) -> Complex64 {
        Complex64::new(self.char_fn_re(t), 0.0)
    }

    pub fn inv_char_fn(&self, t: f64) -> Complex64 {
        Complex64::new(1.0 / self.char_fn_re(t), 0.0)
    }

    /// Density; `NoError` has none and reports zero away from the origin and
    /// infinity at it.
    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            ErrorModel::NoError => {
                if x == 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            ErrorModel::Laplace { sd } => laplace_pdf(sd / SQRT_2, x),
            ErrorModel::SymmetricGamma { shape, scale } => sg_pdf(shape, scale, x),
            ErrorModel::LapSgMixture {
                p,
                shape,
                scale,
                lap_scale,
            } => p * sg_pdf(shape, scale, x) + (1.0 - p) * laplace_pdf(lap_scale, x),
        }
    }

    /// Variance implied by the characteristic function (minus its second
    /// derivative at zero). For `SG(beta, theta)` this is `2 beta theta`.
    pub fn variance(&self) -> f64 {
        match *self {
            ErrorModel::NoError => 0.0,
            ErrorModel::Laplace { sd } => sd * sd,
            ErrorModel::SymmetricGamma { shape, scale } => 2.0 * shape * scale,
            ErrorModel::LapSgMixture {
                p,
                shape,
                scale,
                lap_scale,
            } => p * 2.0 * shape * scale + (1.0 - p) * 2.0 * lap_scale * lap_scale,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, k: usize) -> Vec<f64> {
        match *self {
            ErrorModel::NoError => vec![0.0; k],
            ErrorModel::Laplace { sd } => {
                let b = sd / SQRT_2;
                (0..k).map(|_| laplace_draw(rng, b)).collect()
            }
            ErrorModel::SymmetricGamma { shape, scale } => {
                let g = Gamma::new(shape, scale.sqrt()).expect("validated SG");
                (0..k).map(|_| g.sample(rng) - g.sample(rng)).collect()
            }
            ErrorModel::LapSgMixture {
                p,
                shape,
                scale,
                lap_scale,
            } => {
                let g = Gamma::new(shape, scale.sqrt()).expect("validated SG");
                (0..k)
                    .map(|_| {
                        if rng.random::<f64>() < p {
                            g.sample(rng) - g.sample(rng)
                        } else {
                            laplace_draw(rng, lap_scale)
                        }
                    })
                    .collect()
            }
        }
    }

    pub fn label(&self) -> String {
        match *self {
            ErrorModel::NoError => "none".to_string(),
            ErrorModel::Laplace { sd } => format!("laplace(sd={sd})"),
            ErrorModel::SymmetricGamma { shape, scale } => format!("sg({shape},{scale})"),
            ErrorModel::LapSgMixture {
                p,
                shape,
                scale,
                lap_scale,
            } => format!("{p}*sg({shape},{scale})+{}*laplace(b={lap_scale})", 1.0 - p),
        }
    }

    /// Pure Laplace error with `sd = nsr * sd(X)`.
    pub fn laplace_for_nsr(target: &TargetSpec, nsr: f64) -> Result<Self> {
        positive("NSR", nsr)?;
        Ok(ErrorModel::Laplace {
            sd: nsr * target.moments().sd(),
        })
    }
}

fn sg_char_fn(shape: f64, scale: f64, t: f64) -> f64 {
    (1.0 + scale * t * t).powf(-shape)
}

fn laplace_pdf(b: f64, x: f64) -> f64 {
    (-x.abs() / b).exp() / (2.0 * b)
}

fn laplace_draw<R: Rng + ?Sized>(rng: &mut R, b: f64) -> f64 {
    let e1: f64 = Exp1.sample(rng);
    let e2: f64 = Exp1.sample(rng);
    b * (e1 - e2)
}

/// Density of `G1 - G2` with `G1, G2` iid Gamma(shape, sqrt(scale)):
/// the symmetric variance-gamma law.
fn sg_pdf(shape: f64, scale: f64, x: f64) -> f64 {
    let s = scale.sqrt();
    let ax = x.abs();
    let nu = shape - 0.5;
    if ax == 0.0 {
        return if shape <= 0.5 {
            f64::INFINITY
        } else {
            (ln_gamma(nu) - ln_gamma(shape) - 0.5 * PI.ln() - s.ln()).exp() / 2.0
        };
    }
    let z = ax / s;
    let log_pref = -s.ln() - 0.5 * PI.ln() - ln_gamma(shape) + nu * (z / 2.0).ln();
    log_pref.exp() * bessel_k(nu, z)
}

/// Modified Bessel function of the second kind for real order and `z > 0`,
/// from `K_nu(z) = int_0^inf exp(-z cosh u) cosh(nu u) du`. The integrand is
/// smooth, even and double-exponentially decaying, so the trapezoid rule is
/// spectrally accurate.
pub(crate) fn bessel_k(nu: f64, z: f64) -> f64 {
    debug_assert!(z > 0.0);
    let step = 0.01;
    let mut sum = 0.5 * (-z).exp();
    let mut k = 1;
    loop {
        let u = k as f64 * step;
        let term = (-z * u.cosh() + nu.abs() * u).exp() * 0.5 * (1.0 + (-2.0 * nu.abs() * u).exp());
        sum += term;
        if term < 1e-18 * sum || k > 200_000 {
            break;
        }
        k += 1;
    }
    sum * step
}

/// The noise model used by the rejection-rate studies: a symmetric-gamma /
/// Laplace mixture whose Laplace scale is solved from a target NSR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureTemplate {
    pub p: f64,
    pub shape: f64,
    pub scale: f64,
}

impl Default for MixtureTemplate {
    fn default() -> Self {
        Self {
            p: 0.01,
            shape: 0.24,
            scale: 0.25,
        }
    }
}

impl MixtureTemplate {
    /// Solves `p * 2 beta theta + (1 - p) * 2 b^2 = (nsr * sd_x)^2` for the
    /// Laplace scale `b`.
    pub fn calibrate_sd(&self, sd_x: f64, nsr: f64) -> Result<ErrorModel> {
        positive("NSR", nsr)?;
        positive("sd of X", sd_x)?;
        probability("mixture p", self.p)?;
        positive("symmetric gamma shape", self.shape)?;
        positive("symmetric gamma scale", self.scale)?;
        let target = (nsr * sd_x).powi(2);
        let sg_share = self.p * 2.0 * self.shape * self.scale;
        let lap_share = target - sg_share;
        if self.p >= 1.0 || lap_share <= 0.0 {
            return Err(Error::Calibration(format!(
                "symmetric gamma share {sg_share} leaves no room for target variance {target}"
            )));
        }
        Ok(ErrorModel::LapSgMixture {
            p: self.p,
            shape: self.shape,
            scale: self.scale,
            lap_scale: (lap_share / (2.0 * (1.0 - self.p))).sqrt(),
        })
    }

    pub fn calibrate(&self, target: &TargetSpec, nsr: f64) -> Result<ErrorModel> {
        self.calibrate_sd(target.moments().sd(), nsr)
    }

    /// Like [`calibrate_sd`](Self::calibrate_sd), but when the symmetric
    /// gamma part alone exceeds the target variance its scale is shrunk so
    /// that it carries half of it. The flag reports whether that happened.
    pub fn calibrate_sd_or_shrink(&self, sd_x: f64, nsr: f64) -> Result<(ErrorModel, bool)> {
        match self.calibrate_sd(sd_x, nsr) {
            Ok(em) => Ok((em, false)),
            Err(Error::Calibration(_)) if self.p > 0.0 && self.p < 1.0 => {
                let target = (nsr * sd_x).powi(2);
                let shrunk = Self {
                    scale: 0.5 * target / (self.p * 2.0 * self.shape),
                    ..*self
                };
                Ok((shrunk.calibrate_sd(sd_x, nsr)?, true))
            }
            Err(e) => Err(e),
        }
    }

    pub fn calibrate_or_shrink(&self, target: &TargetSpec, nsr: f64) -> Result<(ErrorModel, bool)> {
        self.calibrate_sd_or_shrink(target.moments().sd(), nsr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{mean, sample_variance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn targets() -> Vec<TargetSpec> {
        vec![
            TargetSpec::weibull(0.75, 1.0),
            TargetSpec::weibull(1.6, 1.0),
            TargetSpec::weibull(3.0, 2.0),
            TargetSpec::beta(0.75, 1.0),
            TargetSpec::beta(0.5, 0.75),
            TargetSpec::beta(1.0, 1.0),
            TargetSpec::weak_concave_mix(),
            TargetSpec::misleading_mix(),
        ]
    }

    fn errors() -> Vec<ErrorModel> {
        vec![
            ErrorModel::NoError,
            ErrorModel::Laplace { sd: 0.7 },
            ErrorModel::SymmetricGamma {
                shape: 0.24,
                scale: 0.25,
            },
            MixtureTemplate::default().calibrate_sd(1.0, 0.2).unwrap(),
        ]
    }

    #[test]
    fn shrinking_calibration_hits_the_target_variance() {
        let t = MixtureTemplate::default();
        let (em, shrunk) = t.calibrate_sd_or_shrink(1.0, 0.2).unwrap();
        assert!(!shrunk);
        assert_eq!(em, t.calibrate_sd(1.0, 0.2).unwrap());
        let beta = TargetSpec::beta(0.75, 1.0);
        assert!(t.calibrate(&beta, 0.1).is_err());
        let (em, shrunk) = t.calibrate_or_shrink(&beta, 0.1).unwrap();
        assert!(shrunk);
        let want = (0.1 * beta.moments().sd()).powi(2);
        assert!((em.variance() - want).abs() < 1e-15 * want.max(1.0));
        if let ErrorModel::LapSgMixture { p, shape, scale, .. } = em {
            assert!((p * 2.0 * shape * scale - 0.5 * want).abs() < 1e-15);
        } else {
            panic!("{em:?}");
        }
    }

    #[test]
    fn char_fn_examples() {
        let sg = ErrorModel::SymmetricGamma {
            shape: 1.0,
            scale: 1.0,
        };
        assert!((sg.char_fn_re(1.0) - 0.5).abs() < 1e-15);
        let lap = ErrorModel::Laplace { sd: SQRT_2 };
        assert!((lap.char_fn_re(1.0) - 0.5).abs() < 1e-15);
        for e in errors() {
            assert_eq!(e.char_fn(0.0), Complex64::new(1.0, 0.0));
            for t in [-7.5, -1.0, 0.3, 2.0, 40.0] {
                assert_eq!(e.char_fn(t), e.char_fn(-t));
                assert_eq!(e.char_fn(t).im, 0.0);
                assert!(e.char_fn_re(t) > 0.0);
                assert!((e.char_fn(t) * e.inv_char_fn(t) - 1.0).norm() < 1e-14);
            }
        }
    }

    /// Oracle: numerically integrate `cos(tx) f(x)` for the Laplace density.
    #[test]
    fn laplace_char_fn_matches_fourier_integral_of_density() {
        let lap = ErrorModel::Laplace { sd: SQRT_2 };
        let (a, n) = (40.0, 400_000);
        let h = 2.0 * a / n as f64;
        let mut acc = 0.0;
        for k in 0..=n {
            let x = -a + k as f64 * h;
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            acc += w * x.cos() * lap.pdf(x);
        }
        assert!((acc * h - 0.5).abs() < 1e-6, "{}", acc * h);
    }

    #[test]
    fn sg_pdf_reduces_to_laplace_and_integrates_to_one() {
        // SG(1, s^2) is Laplace with scale s.
        let sg = ErrorModel::SymmetricGamma {
            shape: 1.0,
            scale: 0.49,
        };
        for x in [-2.0, -0.3, 0.1, 1.7] {
            assert!((sg.pdf(x) - laplace_pdf(0.7, x)).abs() < 1e-10);
        }
        let sg = ErrorModel::SymmetricGamma {
            shape: 1.7,
            scale: 0.25,
        };
        let (n, a) = (200_000, 20.0);
        let h = 2.0 * a / n as f64;
        let total: f64 = (0..n).map(|k| sg.pdf(-a + (k as f64 + 0.5) * h)).sum::<f64>() * h;
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn bessel_k_half_order_closed_form() {
        for z in [0.05, 0.5, 2.0, 10.0] {
            let exact = (PI / (2.0 * z)).sqrt() * (-z).exp();
            assert!((bessel_k(0.5, z) / exact - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sampler_variances() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(ErrorModel::NoError.sample(&mut rng, 3), vec![0.0; 3]);
        let lap = ErrorModel::Laplace { sd: 1.0 }.sample(&mut rng, 1_000_000);
        assert!((sample_variance(&lap) - 1.0).abs() < 0.01);
        // Gamma-difference realization has variance 2 beta theta, matching the
        // characteristic function; beta(1 + beta) theta^2 does not.
        let sg = ErrorModel::SymmetricGamma {
            shape: 0.24,
            scale: 0.25,
        };
        let draws = sg.sample(&mut rng, 1_000_000);
        let v = sample_variance(&draws);
        assert!((v - 0.12).abs() < 0.002, "{v}");
        assert!((v - 0.24 * 1.24 * 0.0625).abs() > 0.05);
    }

    #[test]
    fn sg_empirical_char_fn_matches_closed_form() {
        let sg = ErrorModel::SymmetricGamma {
            shape: 0.24,
            scale: 0.25,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = sg.sample(&mut rng, 100_000);
        let mut worst = 0.0_f64;
        for k in 0..=100 {
            let t = -5.0 + 0.1 * k as f64;
            let re = draws.iter().map(|d| (t * d).cos()).sum::<f64>() / draws.len() as f64;
            let im = draws.iter().map(|d| (t * d).sin()).sum::<f64>() / draws.len() as f64;
            worst = worst.max((Complex64::new(re, im) - sg.char_fn(t)).norm());
        }
        assert!(worst < 0.02, "{worst}");
    }

    #[test]
    fn calibration_examples() {
        let t = MixtureTemplate::default();
        let ErrorModel::LapSgMixture { lap_scale, .. } = t.calibrate_sd(1.0, 0.2).unwrap() else {
            panic!()
        };
        let expected = ((0.04_f64 - 0.01 * 2.0 * 0.24 * 0.25) / (2.0 * 0.99)).sqrt();
        assert!((lap_scale - expected).abs() < 1e-15);
        assert!((lap_scale - 0.139_985_569).abs() < 1e-8);
        assert!(matches!(t.calibrate_sd(1.0, 0.03), Err(Error::Calibration(_))));
        let lap_only = MixtureTemplate { p: 0.0, ..t };
        let ErrorModel::LapSgMixture { lap_scale, .. } = lap_only.calibrate_sd(2.0, 0.3).unwrap() else {
            panic!()
        };
        assert!((lap_scale - 0.6 / SQRT_2).abs() < 1e-15);
        for nsr in [0.1, 0.2, 0.5] {
            for target in targets() {
                let sd = target.moments().sd();
                let e = t.calibrate(&target, nsr).unwrap_or_else(|_| {
                    // Tiny-variance targets cannot absorb the SG share.
                    ErrorModel::NoError
                });
                if e != ErrorModel::NoError {
                    let want = (nsr * sd).powi(2);
                    assert!((e.variance() - want).abs() <= 1e-14 * want.max(1.0));
                }
            }
        }
    }

    #[test]
    fn moment_examples() {
        let m = TargetSpec::beta(0.75, 1.0).moments();
        assert!((m.variance - 0.75 / (1.75 * 1.75 * 2.75)).abs() < 1e-15);
        assert!((m.variance - 0.089053).abs() < 1e-6);
        let u = TargetSpec::beta(1.0, 1.0).moments();
        assert!((u.mean - 0.5).abs() < 1e-15 && (u.variance - 1.0 / 12.0).abs() < 1e-15);
        assert!((TargetSpec::weak_concave_mix().moments().mean - 1.25).abs() < 1e-15);
    }

    #[test]
    fn quantile_cdf_round_trip() {
        for t in targets() {
            t.validate().unwrap();
            for k in 1..40 {
                let u = k as f64 / 40.0;
                let x = t.quantile(u).unwrap();
                assert!((t.cdf(x) - u).abs() < 1e-8, "{} at {u}", t.label());
            }
            let upper = t.quantile(0.999).unwrap();
            for k in 1..40 {
                let x = upper * k as f64 / 40.0;
                let back = t.quantile(t.cdf(x)).unwrap();
                assert!((back - x).abs() < 1e-8, "{} at {x}: {back}", t.label());
            }
        }
    }

    #[test]
    fn pdf_is_derivative_of_cdf() {
        for t in targets() {
            for x in [0.13, 0.41, 0.77, 1.3, 2.2] {
                if (x - 1.0f64).abs() < 0.05 {
                    continue;
                }
                let h = 1e-6;
                let fd = (t.cdf(x + h) - t.cdf(x - h)) / (2.0 * h);
                assert!((fd - t.pdf(x)).abs() < 1e-5 * t.pdf(x).max(1.0), "{}", t.label());
            }
        }
    }

    #[test]
    fn sample_moments_within_four_standard_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        for t in targets() {
            let draws = t.sample(&mut rng, n);
            assert!(draws.iter().all(|&x| x >= 0.0));
            let m = t.moments();
            let se_mean = (m.variance / n as f64).sqrt();
            assert!((mean(&draws) - m.mean).abs() < 4.0 * se_mean, "{}", t.label());
            let centered: Vec<f64> = draws.iter().map(|x| (x - m.mean).powi(2)).collect();
            let se_var = (sample_variance(&centered) / n as f64).sqrt();
            assert!((sample_variance(&draws) - m.variance).abs() < 4.0 * se_var, "{}", t.label());
        }
    }

    #[test]
    fn validation_rejects_bad_specs() {
        assert!(TargetSpec::weibull(0.0, 1.0).validate().is_err());
        assert!(TargetSpec::mixture(0.3, TargetSpec::beta(1.0, 1.0), 0.3, TargetSpec::beta(1.0, 1.0))
            .validate()
            .is_err());
        assert!(ErrorModel::Laplace { sd: -1.0 }.validate().is_err());
        assert!(TargetSpec::weak_concave_mix().with_shape(2.0).is_err());
        assert_eq!(
            TargetSpec::beta(0.75, 1.0).with_shape(1.2).unwrap(),
            TargetSpec::beta(1.2, 1.0)
        );
    }
}
