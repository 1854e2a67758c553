//! TOML run configuration. Every validated value carries its source span so
//! that errors point at the offending line.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use concave_deconv::concavity_test::{Calibration, TestConfig};
use concave_deconv::deconv::{EstimatorSettings, KernelSpec};
use concave_deconv::distributions::{ErrorModel, MixtureTemplate, TargetSpec};
use concave_deconv::experiments::{ExperimentPlan, Study};
use concave_deconv::numerics::linspace;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config line {l}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Latent-variable law in config form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetConfig {
    Weibull {
        shape: f64,
        scale: f64,
    },
    Beta {
        a: f64,
        b: f64,
    },
    ShiftedExpUniform {
        uniform_weight: f64,
        shift: f64,
    },
    Mixture {
        weights: [f64; 2],
        components: Vec<TargetConfig>,
    },
}

impl TargetConfig {
    pub fn to_spec(&self) -> Result<TargetSpec, String> {
        let spec = match self {
            TargetConfig::Weibull { shape, scale } => TargetSpec::weibull(*shape, *scale),
            TargetConfig::Beta { a, b } => TargetSpec::beta(*a, *b),
            TargetConfig::ShiftedExpUniform {
                uniform_weight,
                shift,
            } => TargetSpec::ShiftedExpUniformMix {
                uniform_weight: *uniform_weight,
                shift: *shift,
            },
            TargetConfig::Mixture {
                weights,
                components,
            } => {
                if components.len() != 2 {
                    return Err(format!(
                        "a mixture needs exactly 2 components, got {}",
                        components.len()
                    ));
                }
                TargetSpec::mixture(
                    weights[0],
                    components[0].to_spec()?,
                    weights[1],
                    components[1].to_spec()?,
                )
            }
        };
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }
}

impl From<&TargetSpec> for TargetConfig {
    fn from(spec: &TargetSpec) -> Self {
        match spec {
            TargetSpec::Weibull { shape, scale } => TargetConfig::Weibull {
                shape: *shape,
                scale: *scale,
            },
            TargetSpec::Beta { a, b } => TargetConfig::Beta { a: *a, b: *b },
            TargetSpec::ShiftedExpUniformMix {
                uniform_weight,
                shift,
            } => TargetConfig::ShiftedExpUniform {
                uniform_weight: *uniform_weight,
                shift: *shift,
            },
            TargetSpec::Mixture {
                weights,
                components,
            } => TargetConfig::Mixture {
                weights: *weights,
                components: components.iter().map(TargetConfig::from).collect(),
            },
        }
    }
}

/// Measurement-error law in config form. Laplace is given by its standard
/// deviation, the mixture's Laplace part by its scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ErrorConfig {
    None,
    Laplace {
        sd: f64,
    },
    SymmetricGamma {
        shape: f64,
        scale: f64,
    },
    LapSgMixture {
        p: f64,
        shape: f64,
        scale: f64,
        lap_scale: f64,
    },
}

impl ErrorConfig {
    pub fn to_model(self) -> Result<ErrorModel, String> {
        let em = match self {
            ErrorConfig::None => ErrorModel::NoError,
            ErrorConfig::Laplace { sd } => ErrorModel::Laplace { sd },
            ErrorConfig::SymmetricGamma { shape, scale } => {
                ErrorModel::SymmetricGamma { shape, scale }
            }
            ErrorConfig::LapSgMixture {
                p,
                shape,
                scale,
                lap_scale,
            } => ErrorModel::LapSgMixture {
                p,
                shape,
                scale,
                lap_scale,
            },
        };
        em.validate().map_err(|e| e.to_string())?;
        Ok(em)
    }
}

impl From<&ErrorModel> for ErrorConfig {
    fn from(em: &ErrorModel) -> Self {
        match *em {
            ErrorModel::NoError => ErrorConfig::None,
            ErrorModel::Laplace { sd } => ErrorConfig::Laplace { sd },
            ErrorModel::SymmetricGamma { shape, scale } => {
                ErrorConfig::SymmetricGamma { shape, scale }
            }
            ErrorModel::LapSgMixture {
                p,
                shape,
                scale,
                lap_scale,
            } => ErrorConfig::LapSgMixture {
                p,
                shape,
                scale,
                lap_scale,
            },
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelSection {
    r: Spanned<i64>,
    s: Spanned<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimatorSection {
    grid_points: Option<Spanned<i64>>,
    freq_nodes: Option<Spanned<i64>>,
    grid_min: Option<Spanned<f64>>,
    grid_max: Option<Spanned<f64>>,
    bandwidth: Option<Spanned<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TestSection {
    gamma: Option<Spanned<f64>>,
    m_exponent: Option<Spanned<f64>>,
    replicates: Option<Spanned<i64>>,
    calibration: Option<Spanned<String>>,
    seed: Option<Spanned<i64>>,
    bootstrap_bandwidth: Option<Spanned<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MixtureSection {
    p: Spanned<f64>,
    shape: Spanned<f64>,
    scale: Spanned<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateSection {
    study: Spanned<String>,
    name: Option<Spanned<String>>,
    target: Spanned<TargetConfig>,
    shapes: Option<Spanned<Vec<f64>>>,
    nsr_levels: Spanned<Vec<f64>>,
    n_levels: Spanned<Vec<i64>>,
    replications: Option<Spanned<i64>>,
    quantile_levels: Option<Spanned<Vec<f64>>>,
    master_seed: Option<Spanned<i64>>,
    bandwidth: Option<Spanned<f64>>,
    mixture: Option<Spanned<MixtureSection>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    error: Option<Spanned<ErrorConfig>>,
    kernel: Option<Spanned<KernelSection>>,
    estimator: Option<EstimatorSection>,
    test: Option<TestSection>,
    simulate: Option<SimulateSection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateConfig {
    /// Output file stem.
    pub name: String,
    pub plan: ExperimentPlan,
}

/// Validated configuration for all commands.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub error: ErrorModel,
    /// Whether `[error]` was given explicitly.
    pub error_given: bool,
    pub kernel: KernelSpec,
    pub estimator: EstimatorSettings,
    pub bandwidth: Option<f64>,
    pub test: TestConfig,
    pub simulate: Option<SimulateConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            error: ErrorModel::NoError,
            error_given: false,
            kernel: KernelSpec::default(),
            estimator: EstimatorSettings::default(),
            bandwidth: None,
            test: TestConfig::default(),
            simulate: None,
        }
    }
}

struct Source<'a> {
    text: &'a str,
}

impl Source<'_> {
    fn line(&self, span: &Range<usize>) -> usize {
        let end = span.start.min(self.text.len());
        self.text[..end].bytes().filter(|&b| b == b'\n').count() + 1
    }

    fn err<T>(&self, span: &Range<usize>, message: impl Into<String>) -> Result<T, ConfigError> {
        Err(ConfigError {
            line: Some(self.line(span)),
            message: message.into(),
        })
    }

    fn check<T: Copy>(
        &self,
        v: &Spanned<T>,
        ok: impl Fn(T) -> bool,
        message: impl Fn(T) -> String,
    ) -> Result<T, ConfigError> {
        let x = *v.get_ref();
        if ok(x) {
            Ok(x)
        } else {
            self.err(&v.span(), message(x))
        }
    }

    fn positive(&self, name: &str, v: &Spanned<f64>) -> Result<f64, ConfigError> {
        self.check(
            v,
            |x| x.is_finite() && x > 0.0,
            |x| format!("{name} must be positive, got {x}"),
        )
    }

    fn count(&self, name: &str, v: &Spanned<i64>, min: i64) -> Result<usize, ConfigError> {
        self.check(
            v,
            |x| x >= min,
            |x| format!("{name} must be at least {min}, got {x}"),
        )
        .map(|x| x as usize)
    }

    fn seed(&self, v: &Spanned<i64>) -> Result<u64, ConfigError> {
        self.check(
            v,
            |x| x >= 0,
            |x| format!("seed must be non-negative, got {x}"),
        )
        .map(|x| x as u64)
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let src = Source { text };
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError {
            line: e.span().map(|s| src.line(&s)),
            message: e.message().trim().to_string(),
        })?;
        let mut cfg = RunConfig::default();

        if let Some(e) = &raw.error {
            cfg.error = e.get_ref().to_model().or_else(|m| src.err(&e.span(), m))?;
            cfg.error_given = true;
        }
        if let Some(k) = &raw.kernel {
            let (r, s) = (k.get_ref().r.get_ref(), k.get_ref().s.get_ref());
            cfg.kernel = match (u32::try_from(*r), u32::try_from(*s)) {
                (Ok(r), Ok(s)) => {
                    KernelSpec::new(r, s).or_else(|e| src.err(&k.span(), e.to_string()))?
                }
                _ => {
                    return src.err(
                        &k.span(),
                        "kernel exponents must be small non-negative integers",
                    )
                }
            };
        }
        if let Some(est) = &raw.estimator {
            if let Some(v) = &est.grid_points {
                cfg.estimator.grid_points = src.count("grid_points", v, 16)?;
            }
            if let Some(v) = &est.freq_nodes {
                cfg.estimator.freq_nodes = src.count("freq_nodes", v, 16)?;
            }
            match (&est.grid_min, &est.grid_max) {
                (Some(lo), Some(hi)) => {
                    let l = *lo.get_ref();
                    let h = src.check(
                        hi,
                        |h| h.is_finite() && h > 0.0 && h > l,
                        |h| format!("grid_max must be positive and exceed grid_min, got {h}"),
                    )?;
                    let l = src.check(
                        lo,
                        |l| l.is_finite() && l <= 0.0,
                        |l| format!("grid_min must not exceed 0, got {l}"),
                    )?;
                    cfg.estimator.grid = Some(linspace(l, h, cfg.estimator.grid_points));
                }
                (Some(v), None) | (None, Some(v)) => {
                    return src.err(&v.span(), "grid_min and grid_max must be given together");
                }
                (None, None) => {}
            }
            if let Some(v) = &est.bandwidth {
                cfg.bandwidth = Some(src.positive("bandwidth", v)?);
            }
        }
        if let Some(t) = &raw.test {
            if let Some(v) = &t.gamma {
                cfg.test.gamma = src.check(
                    v,
                    |g| g > 0.0 && g < 0.5,
                    |g| format!("gamma must lie in (0, 0.5), got {g}"),
                )?;
            }
            if let Some(v) = &t.m_exponent {
                cfg.test.m_exponent = src.check(
                    v,
                    |e| e > 0.0 && e < 1.0,
                    |e| format!("m_exponent must lie in (0, 1), got {e}"),
                )?;
            }
            if let Some(v) = &t.replicates {
                cfg.test.replicates = src.count(
                    "replicates",
                    v,
                    concave_deconv::concavity_test::MIN_REPLICATES as i64,
                )?;
            }
            if let Some(v) = &t.calibration {
                cfg.test.calibration = match Calibration::parse(v.get_ref()) {
                    Some(c) => c,
                    None => {
                        return src.err(
                            &v.span(),
                            format!(
                                "calibration must be 'bootstrap' or 'log_threshold', got '{}'",
                                v.get_ref()
                            ),
                        )
                    }
                };
            }
            if let Some(v) = &t.seed {
                cfg.test.seed = src.seed(v)?;
            }
            if let Some(v) = &t.bootstrap_bandwidth {
                cfg.test.bootstrap_bandwidth = Some(src.positive("bootstrap_bandwidth", v)?);
            }
        }
        cfg.test.bandwidth = cfg.bandwidth;
        if let Some(sim) = &raw.simulate {
            cfg.simulate = Some(parse_simulate(&src, sim, &cfg)?);
        }
        Ok(cfg)
    }
}

fn parse_simulate(
    src: &Source<'_>,
    sim: &SimulateSection,
    cfg: &RunConfig,
) -> Result<SimulateConfig, ConfigError> {
    let study = match sim.study.get_ref().as_str() {
        "mse_ratio" => Study::MseRatio,
        "rejection_rate" => Study::RejectionRate,
        other => {
            return src.err(
                &sim.study.span(),
                format!("study must be 'mse_ratio' or 'rejection_rate', got '{other}'"),
            )
        }
    };
    let target = sim
        .target
        .get_ref()
        .to_spec()
        .or_else(|m| src.err(&sim.target.span(), m))?;
    let mut plan = ExperimentPlan::new(study, target);
    plan.kernel = cfg.kernel;
    plan.estimator = cfg.estimator.clone();
    plan.test = cfg.test.clone();
    if let Some(v) = &sim.shapes {
        for &a in v.get_ref() {
            if let Err(e) = plan.target.with_shape(a) {
                return src.err(&v.span(), e.to_string());
            }
        }
        plan.shapes = v.get_ref().clone();
    }
    let levels = sim.nsr_levels.get_ref();
    if levels.is_empty() || levels.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
        return src.err(
            &sim.nsr_levels.span(),
            "nsr_levels must be a non-empty list of positive numbers",
        );
    }
    plan.nsr_levels = levels.clone();
    let min_n = match study {
        Study::MseRatio => 10,
        Study::RejectionRate => concave_deconv::concavity_test::MIN_SAMPLE as i64,
    };
    let ns = sim.n_levels.get_ref();
    if ns.is_empty() || ns.iter().any(|&n| n < min_n) {
        return src.err(
            &sim.n_levels.span(),
            format!("n_levels must be a non-empty list of sample sizes >= {min_n}"),
        );
    }
    plan.n_levels = ns.iter().map(|&n| n as usize).collect();
    if let Some(v) = &sim.replications {
        plan.replications = src.count(
            "replications",
            v,
            concave_deconv::experiments::MIN_REPLICATIONS as i64,
        )?;
    }
    if let Some(v) = &sim.quantile_levels {
        if study != Study::MseRatio {
            return src.err(
                &v.span(),
                "quantile_levels only apply to the mse_ratio study",
            );
        }
        let q = v.get_ref();
        if q.is_empty() || q.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
            return src.err(&v.span(), "quantile_levels must lie strictly inside (0, 1)");
        }
        plan.quantile_levels = q.clone();
    }
    if let Some(v) = &sim.master_seed {
        plan.master_seed = src.seed(v)?;
    }
    if let Some(v) = &sim.bandwidth {
        if study != Study::MseRatio {
            return src.err(&v.span(), "use [estimator] bandwidth and [test] bootstrap_bandwidth for rejection-rate studies");
        }
        plan.bandwidth = Some(src.positive("bandwidth", v)?);
    }
    if let Some(m) = &sim.mixture {
        let sec = m.get_ref();
        let p = src.check(
            &sec.p,
            |p| (0.0..1.0).contains(&p),
            |p| format!("p must lie in [0, 1), got {p}"),
        )?;
        plan.mixture = MixtureTemplate {
            p,
            shape: src.positive("shape", &sec.shape)?,
            scale: src.positive("scale", &sec.scale)?,
        };
    }
    let name = match &sim.name {
        Some(n) => {
            let s = n.get_ref();
            if s.is_empty()
                || !s
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return src.err(
                    &n.span(),
                    "name may only contain letters, digits, '_' and '-'",
                );
            }
            s.clone()
        }
        None => study.as_str().to_string(),
    };
    plan.validate().map_err(|e| ConfigError {
        line: Some(src.line(&sim.study.span())),
        message: e.to_string(),
    })?;
    Ok(SimulateConfig { name, plan })
}

/// Config text for a target law, e.g. for embedding under `[simulate.target]`.
pub fn target_to_toml(spec: &TargetSpec) -> String {
    toml::to_string(&TargetConfig::from(spec)).expect("target config serializes")
}

pub fn target_from_toml(text: &str) -> Result<TargetSpec, ConfigError> {
    let tc: TargetConfig = toml::from_str(text).map_err(|e| ConfigError {
        line: None,
        message: e.message().trim().to_string(),
    })?;
    tc.to_spec().map_err(|message| ConfigError {
        line: None,
        message,
    })
}

pub fn error_to_toml(em: &ErrorModel) -> String {
    toml::to_string(&ErrorConfig::from(em)).expect("error config serializes")
}

pub fn error_from_toml(text: &str) -> Result<ErrorModel, ConfigError> {
    let ec: ErrorConfig = toml::from_str(text).map_err(|e| ConfigError {
        line: None,
        message: e.message().trim().to_string(),
    })?;
    ec.to_model().map_err(|message| ConfigError {
        line: None,
        message,
    })
}
