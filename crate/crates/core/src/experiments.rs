//! Monte Carlo studies: MSE ratios of the concave versus the unconstrained
//! CDF estimate at true quantiles, and rejection rates of the concavity test.
//!
//! Every replicate draws its randomness from a stream keyed by the master
//! seed, the cell's parameter values and the replicate index, so results do
//! not depend on the order of cells in the plan or on thread scheduling.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::concavity_test::{run_test, TestConfig};
use crate::deconv::{Deconvolver, EstimatorSettings, KernelSpec};
use crate::distributions::{ErrorModel, MixtureTemplate, TargetSpec};
use crate::error::{Error, Result};
use crate::lcm::lcm;
use crate::seeding::{rng_for, seed_for};

/// Share of failed replicates above which a cell is marked invalid.
pub const MAX_FAILURE_SHARE: f64 = 0.1;
pub const MIN_REPLICATIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Study {
    MseRatio,
    RejectionRate,
}

impl Study {
    pub fn as_str(&self) -> &'static str {
        match self {
            Study::MseRatio => "mse_ratio",
            Study::RejectionRate => "rejection_rate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub study: Study,
    pub target: TargetSpec,
    /// Optional sweep over the target's shape parameter.
    pub shapes: Vec<f64>,
    pub nsr_levels: Vec<f64>,
    pub n_levels: Vec<usize>,
    /// Monte Carlo replications per cell.
    pub replications: usize,
    /// Only used by the MSE study.
    pub quantile_levels: Vec<f64>,
    /// Fixed bandwidth for the MSE study; selected per replicate when absent.
    pub bandwidth: Option<f64>,
    /// Only used by the rejection-rate study.
    pub test: TestConfig,
    pub mixture: MixtureTemplate,
    pub kernel: KernelSpec,
    pub estimator: EstimatorSettings,
    pub master_seed: u64,
}

impl ExperimentPlan {
    pub fn new(study: Study, target: TargetSpec) -> Self {
        Self {
            study,
            target,
            shapes: Vec::new(),
            nsr_levels: vec![0.1],
            n_levels: vec![100],
            replications: 200,
            quantile_levels: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            bandwidth: None,
            test: TestConfig::default(),
            mixture: MixtureTemplate::default(),
            kernel: KernelSpec::default(),
            estimator: EstimatorSettings::default(),
            master_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.target.validate()?;
        if self.replications < MIN_REPLICATIONS {
            return Err(Error::arg(format!(
                "need at least {MIN_REPLICATIONS} replications, got {}",
                self.replications
            )));
        }
        if self.nsr_levels.is_empty() || self.nsr_levels.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(Error::arg("NSR levels must be a non-empty list of positive numbers"));
        }
        let min_n = match self.study {
            Study::MseRatio => 10,
            Study::RejectionRate => crate::concavity_test::MIN_SAMPLE,
        };
        if self.n_levels.is_empty() || self.n_levels.iter().any(|&n| n < min_n) {
            return Err(Error::arg(format!("sample sizes must be a non-empty list of values >= {min_n}")));
        }
        for &a in &self.shapes {
            self.target.with_shape(a)?;
        }
        match self.study {
            Study::MseRatio => {
                if self.quantile_levels.is_empty() || self.quantile_levels.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
                    return Err(Error::arg("quantile levels must lie strictly inside (0, 1)"));
                }
                if let Some(h) = self.bandwidth {
                    if !(h.is_finite() && h > 0.0) {
                        return Err(Error::arg(format!("bandwidth must be positive, got {h}")));
                    }
                }
            }
            Study::RejectionRate => self.test.validate()?,
        }
        self.estimator.validate()
    }

    /// All cells in canonical order.
    pub fn cells(&self) -> Vec<Cell> {
        let shapes: Vec<Option<f64>> = if self.shapes.is_empty() {
            vec![None]
        } else {
            self.shapes.iter().map(|&a| Some(a)).collect()
        };
        let mut cells = Vec::new();
        for &shape in &shapes {
            for &n in &self.n_levels {
                for &nsr in &self.nsr_levels {
                    cells.push(Cell { shape, n, nsr });
                }
            }
        }
        cells.sort_by(|a, b| a.order(b));
        cells.dedup_by(|a, b| a.key() == b.key());
        cells
    }

    fn target_for(&self, cell: &Cell) -> Result<TargetSpec> {
        match cell.shape {
            Some(a) => self.target.with_shape(a),
            None => Ok(self.target.clone()),
        }
    }

    /// Flat `key = value` echo of the plan.
    pub fn echo(&self) -> String {
        let list = |v: Vec<String>| v.join(",");
        let mut s = String::new();
        let _ = writeln!(s, "study = {}", self.study.as_str());
        let _ = writeln!(s, "target = {}", self.target.label());
        let _ = writeln!(s, "shapes = {}", list(self.shapes.iter().map(|v| v.to_string()).collect()));
        let _ = writeln!(s, "nsr_levels = {}", list(self.nsr_levels.iter().map(|v| v.to_string()).collect()));
        let _ = writeln!(s, "n_levels = {}", list(self.n_levels.iter().map(|v| v.to_string()).collect()));
        let _ = writeln!(s, "replications = {}", self.replications);
        match self.study {
            Study::MseRatio => {
                let _ = writeln!(
                    s,
                    "quantile_levels = {}",
                    list(self.quantile_levels.iter().map(|v| v.to_string()).collect())
                );
                let _ = writeln!(s, "error = laplace");
                let _ = writeln!(s, "bandwidth = {}", self.bandwidth.map_or("selected".to_string(), |v| v.to_string()));
            }
            Study::RejectionRate => {
                let t = &self.test;
                let _ = writeln!(s, "gamma = {}", t.gamma);
                let _ = writeln!(s, "m_exponent = {}", t.m_exponent);
                let _ = writeln!(s, "bootstrap_replicates = {}", t.replicates);
                let _ = writeln!(s, "calibration = {}", t.calibration.as_str());
                let opt = |h: Option<f64>| h.map_or("selected".to_string(), |v| v.to_string());
                let _ = writeln!(s, "bandwidth = {}", opt(t.bandwidth));
                let _ = writeln!(s, "bootstrap_bandwidth = {}", opt(t.bootstrap_bandwidth));
                let m = &self.mixture;
                let _ = writeln!(s, "error = lap_sg_mixture(p={}, shape={}, scale={})", m.p, m.shape, m.scale);
            }
        }
        let _ = writeln!(s, "kernel = r={}, s={}", self.kernel.r(), self.kernel.s());
        let _ = writeln!(s, "grid_points = {}", self.estimator.grid_points);
        let _ = writeln!(s, "freq_nodes = {}", self.estimator.freq_nodes);
        let _ = writeln!(s, "master_seed = {}", self.master_seed);
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub shape: Option<f64>,
    pub n: usize,
    pub nsr: f64,
}

impl Cell {
    /// Stream key derived from the cell's values, not its position.
    pub fn key(&self) -> u64 {
        let shape = self.shape.map_or(u64::MAX, f64::to_bits);
        seed_for(self.nsr.to_bits(), self.n as u64, shape)
    }

    fn order(&self, other: &Self) -> std::cmp::Ordering {
        let sh = |c: &Cell| c.shape.unwrap_or(f64::NEG_INFINITY);
        sh(self)
            .total_cmp(&sh(other))
            .then(self.n.cmp(&other.n))
            .then(self.nsr.total_cmp(&other.nsr))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseRow {
    pub cell: Cell,
    pub quantile: f64,
    pub mse_constrained: f64,
    pub mse_unconstrained: f64,
    /// `None` when the unconstrained MSE is zero.
    pub ratio: Option<f64>,
    pub completed: usize,
    pub failures: usize,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub cell: Cell,
    pub rejection_rate: f64,
    /// `sqrt(p (1 - p) / completed)`.
    pub se: f64,
    pub rejections: usize,
    pub completed: usize,
    pub failures: usize,
    pub valid: bool,
    /// Whether the symmetric gamma scale had to be shrunk to reach the NSR.
    pub sg_scale_shrunk: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StudyResult {
    Mse(Vec<MseRow>),
    Rates(Vec<RateRow>),
}

fn is_valid(failures: usize, total: usize) -> bool {
    failures as f64 <= MAX_FAILURE_SHARE * total as f64
}

fn contaminated<R: Rng + ?Sized>(rng: &mut R, target: &TargetSpec, em: &ErrorModel, n: usize) -> Vec<f64> {
    let x = target.sample(rng, n);
    let e = em.sample(rng, n);
    x.iter().zip(&e).map(|(a, b)| a + b).collect()
}

pub fn run_mse_study(plan: &ExperimentPlan) -> Result<StudyResult> {
    if plan.study != Study::MseRatio {
        return Err(Error::arg("plan is not an MSE study"));
    }
    plan.validate()?;
    let mut rows = Vec::new();
    for cell in plan.cells() {
        let target = plan.target_for(&cell)?;
        let em = ErrorModel::laplace_for_nsr(&target, cell.nsr)?;
        let dv = Deconvolver::new(em, plan.kernel, plan.estimator.clone())?;
        let xq: Vec<f64> = plan
            .quantile_levels
            .iter()
            .map(|&q| target.quantile(q))
            .collect::<Result<_>>()?;
        let key = cell.key();
        // Per replicate: squared errors of (constrained, unconstrained) per quantile.
        let per_rep: Vec<Option<Vec<(f64, f64)>>> = (0..plan.replications)
            .into_par_iter()
            .map(|r| {
                let mut rng = rng_for(plan.master_seed, key, r as u64);
                let y = contaminated(&mut rng, &target, &em, cell.n);
                let est = dv.estimate(&y, plan.bandwidth).ok()?;
                let env = lcm(&est.cdf_norm);
                Some(
                    plan.quantile_levels
                        .iter()
                        .zip(&xq)
                        .map(|(&q, &x)| {
                            let c = env.eval(x) - q;
                            let u = est.cdf_norm.eval_finite(x) - q;
                            (c * c, u * u)
                        })
                        .collect(),
                )
            })
            .collect();
        let done: Vec<&Vec<(f64, f64)>> = per_rep.iter().flatten().collect();
        let completed = done.len();
        let failures = plan.replications - completed;
        for (k, &q) in plan.quantile_levels.iter().enumerate() {
            let (mut sc, mut su) = (0.0, 0.0);
            for errs in &done {
                sc += errs[k].0;
                su += errs[k].1;
            }
            let denom = completed.max(1) as f64;
            let (mc, mu) = (sc / denom, su / denom);
            rows.push(MseRow {
                cell,
                quantile: q,
                mse_constrained: mc,
                mse_unconstrained: mu,
                ratio: (mu > 0.0).then(|| mc / mu),
                completed,
                failures,
                valid: completed > 0 && is_valid(failures, plan.replications),
            });
        }
    }
    rows.sort_by(|a, b| a.cell.order(&b.cell).then(a.quantile.total_cmp(&b.quantile)));
    Ok(StudyResult::Mse(rows))
}

pub fn run_power_study(plan: &ExperimentPlan) -> Result<StudyResult> {
    if plan.study != Study::RejectionRate {
        return Err(Error::arg("plan is not a rejection-rate study"));
    }
    plan.validate()?;
    let mut rows = Vec::new();
    for cell in plan.cells() {
        let target = plan.target_for(&cell)?;
        let (em, shrunk) = plan.mixture.calibrate_or_shrink(&target, cell.nsr)?;
        let dv = Deconvolver::new(em, plan.kernel, plan.estimator.clone())?;
        let key = cell.key();
        let outcomes: Vec<Option<bool>> = (0..plan.replications)
            .into_par_iter()
            .map(|r| {
                let mut rng = rng_for(plan.master_seed, key, r as u64);
                let y = contaminated(&mut rng, &target, &em, cell.n);
                let cfg = TestConfig {
                    seed: rng.random(),
                    ..plan.test.clone()
                };
                run_test(&y, &dv, &cfg).ok().map(|rep| rep.reject)
            })
            .collect();
        let completed = outcomes.iter().flatten().count();
        let rejections = outcomes.iter().flatten().filter(|&&r| r).count();
        let failures = plan.replications - completed;
        let p = if completed > 0 { rejections as f64 / completed as f64 } else { 0.0 };
        rows.push(RateRow {
            cell,
            rejection_rate: p,
            se: binomial_se(p, completed),
            rejections,
            completed,
            failures,
            valid: completed > 0 && is_valid(failures, plan.replications),
            sg_scale_shrunk: shrunk,
        });
    }
    Ok(StudyResult::Rates(rows))
}

pub fn run_study(plan: &ExperimentPlan) -> Result<StudyResult> {
    match plan.study {
        Study::MseRatio => run_mse_study(plan),
        Study::RejectionRate => run_power_study(plan),
    }
}

pub fn binomial_se(p: f64, m: usize) -> f64 {
    if m == 0 {
        return f64::NAN;
    }
    (p * (1.0 - p) / m as f64).sqrt()
}

/// `%g`-style formatting with six significant digits.
pub fn format_g6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        return format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt_shape(c: &Cell) -> String {
    c.shape.map_or(String::new(), format_g6)
}

impl StudyResult {
    pub fn header(&self) -> &'static [&'static str] {
        match self {
            StudyResult::Mse(_) => &[
                "shape",
                "n",
                "nsr",
                "quantile",
                "mse_constrained",
                "mse_unconstrained",
                "ratio",
                "completed",
                "failures",
                "valid",
            ],
            StudyResult::Rates(_) => &[
                "shape",
                "n",
                "nsr",
                "rejection_rate",
                "se",
                "rejections",
                "completed",
                "failures",
                "valid",
                "sg_scale_shrunk",
            ],
        }
    }

    pub fn records(&self) -> Vec<Vec<String>> {
        match self {
            StudyResult::Mse(rows) => rows
                .iter()
                .map(|r| {
                    vec![
                        opt_shape(&r.cell),
                        r.cell.n.to_string(),
                        format_g6(r.cell.nsr),
                        format_g6(r.quantile),
                        format_g6(r.mse_constrained),
                        format_g6(r.mse_unconstrained),
                        r.ratio.map_or(String::new(), format_g6),
                        r.completed.to_string(),
                        r.failures.to_string(),
                        r.valid.to_string(),
                    ]
                })
                .collect(),
            StudyResult::Rates(rows) => rows
                .iter()
                .map(|r| {
                    vec![
                        opt_shape(&r.cell),
                        r.cell.n.to_string(),
                        format_g6(r.cell.nsr),
                        format_g6(r.rejection_rate),
                        format_g6(r.se),
                        r.rejections.to_string(),
                        r.completed.to_string(),
                        r.failures.to_string(),
                        r.valid.to_string(),
                        r.sg_scale_shrunk.to_string(),
                    ]
                })
                .collect(),
        }
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        for rec in self.records() {
            w.write_record(&rec)?;
        }
        w.flush()
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }
}

/// Version string recorded in manifests.
pub fn version_string() -> String {
    match option_env!("CDECONV_GIT_DESCRIBE") {
        Some(d) if !d.is_empty() => format!("{} ({d})", env!("CARGO_PKG_VERSION")),
        _ => env!("CARGO_PKG_VERSION").to_string(),
    }
}

pub fn manifest(plan: &ExperimentPlan) -> String {
    format!("version = {}\n{}", version_string(), plan.echo())
}

/// Writes `<stem>.csv` and `<stem>.manifest.txt` into `dir`.
pub fn write_outputs(dir: &Path, stem: &str, plan: &ExperimentPlan, result: &StudyResult) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let file = std::fs::File::create(dir.join(format!("{stem}.csv")))?;
    result.write_csv(io::BufWriter::new(file))?;
    std::fs::write(dir.join(format!("{stem}.manifest.txt")), manifest(plan))
}
