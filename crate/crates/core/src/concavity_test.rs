//! Test of `H0: F is concave on [0, inf)` based on the sup-distance between
//! the raw deconvolution CDF and its least concave majorant, calibrated by an
//! m-out-of-n bootstrap from the concavified estimate or by the deterministic
//! threshold `log n`.

use rand::Rng;
use rayon::prelude::*;

use crate::deconv::{select_bandwidth_for_size, DeconvEstimate, Deconvolver};
use crate::error::{Error, Result};
use crate::lcm::{lcm, lcm_on_grid, ConcaveEnvelope};
use crate::numerics::{empirical_quantile, GridFunction};
use crate::seeding::rng_for;

/// Smallest sample the test accepts.
pub const MIN_SAMPLE: usize = 20;
pub const MIN_REPLICATES: usize = 50;

/// Reported p-value when the calibration does not produce one.
pub const NO_P_VALUE: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Calibration {
    Bootstrap,
    LogThreshold,
}

impl Calibration {
    pub fn as_str(&self) -> &'static str {
        match self {
            Calibration::Bootstrap => "bootstrap",
            Calibration::LogThreshold => "log_threshold",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bootstrap" => Some(Calibration::Bootstrap),
            "log_threshold" => Some(Calibration::LogThreshold),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestConfig {
    /// Significance level.
    pub gamma: f64,
    /// Bootstrap subsample size is `floor(n^m_exponent)`.
    pub m_exponent: f64,
    /// Number of bootstrap replicates `B`.
    pub replicates: usize,
    pub calibration: Calibration,
    pub seed: u64,
    /// Overrides the selected bandwidth for the full sample.
    pub bandwidth: Option<f64>,
    /// Overrides the bandwidth used for every bootstrap replicate.
    pub bootstrap_bandwidth: Option<f64>,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            m_exponent: 0.9,
            replicates: 300,
            calibration: Calibration::Bootstrap,
            seed: 0,
            bandwidth: None,
            bootstrap_bandwidth: None,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 0.5) {
            return Err(Error::arg(format!("gamma must lie in (0, 0.5), got {}", self.gamma)));
        }
        if !(self.m_exponent > 0.0 && self.m_exponent < 1.0) {
            return Err(Error::arg(format!(
                "subsample exponent must lie in (0, 1), got {}",
                self.m_exponent
            )));
        }
        if self.replicates < MIN_REPLICATES {
            return Err(Error::arg(format!(
                "need at least {MIN_REPLICATES} bootstrap replicates, got {}",
                self.replicates
            )));
        }
        for h in [self.bandwidth, self.bootstrap_bandwidth].into_iter().flatten() {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::arg(format!("bandwidth must be positive, got {h}")));
            }
        }
        Ok(())
    }

    /// `floor(n^m_exponent)`.
    pub fn subsample_size(&self, n: usize) -> usize {
        ((n as f64).powf(self.m_exponent).floor() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub n: usize,
    pub m: usize,
    pub replicates_requested: usize,
    pub gamma: f64,
    pub statistic: f64,
    pub critical_value: f64,
    /// `(1 + #{T* >= T}) / (B + 1)`, or [`NO_P_VALUE`] for the threshold test.
    pub p_value: f64,
    pub reject: bool,
    pub calibration: Calibration,
    pub seed: u64,
    pub bandwidth: f64,
    /// Bandwidth of the bootstrap estimates; NaN for the threshold test.
    pub bootstrap_bandwidth: f64,
    /// Bootstrap statistics indexed by replicate.
    pub replicates: Vec<f64>,
}

pub const REPORT_CSV_HEADER: [&str; 10] = [
    "n",
    "m",
    "B",
    "gamma",
    "statistic",
    "critical_value",
    "p_value",
    "reject",
    "calibration",
    "seed",
];

impl TestReport {
    /// One CSV row matching [`REPORT_CSV_HEADER`]. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            self.m.to_string(),
            self.replicates_requested.to_string(),
            self.gamma.to_string(),
            self.statistic.to_string(),
            self.critical_value.to_string(),
            self.p_value.to_string(),
            self.reject.to_string(),
            self.calibration.as_str().to_string(),
            self.seed.to_string(),
        ]
    }

    /// Flat `key = value` record; replicate values are not included.
    pub fn to_record(&self) -> String {
        let mut out = String::new();
        for (k, v) in REPORT_CSV_HEADER.iter().zip(self.csv_row()) {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out.push_str(&format!("bandwidth = {}\n", self.bandwidth));
        out.push_str(&format!("bootstrap_bandwidth = {}\n", self.bootstrap_bandwidth));
        out
    }

    /// Parses a record written by [`to_record`](Self::to_record).
    pub fn from_record(text: &str) -> Result<Self> {
        let mut map = std::collections::HashMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::arg(format!("malformed report line '{line}'")))?;
            map.insert(k.trim(), v.trim());
        }
        let get = |k: &str| map.get(k).copied().ok_or_else(|| Error::arg(format!("report lacks '{k}'")));
        let num = |k: &str| -> Result<f64> {
            get(k)?.parse().map_err(|_| Error::arg(format!("'{k}' is not a number")))
        };
        let int = |k: &str| -> Result<u64> {
            get(k)?.parse().map_err(|_| Error::arg(format!("'{k}' is not an integer")))
        };
        Ok(TestReport {
            n: int("n")? as usize,
            m: int("m")? as usize,
            replicates_requested: int("B")? as usize,
            gamma: num("gamma")?,
            statistic: num("statistic")?,
            critical_value: num("critical_value")?,
            p_value: num("p_value")?,
            reject: get("reject")?
                .parse()
                .map_err(|_| Error::arg("'reject' is not a boolean"))?,
            calibration: Calibration::parse(get("calibration")?)
                .ok_or_else(|| Error::arg("unknown calibration"))?,
            seed: int("seed")?,
            bandwidth: num("bandwidth")?,
            bootstrap_bandwidth: num("bootstrap_bandwidth")?,
            replicates: Vec::new(),
        })
    }
}

/// `sqrt(n) * sup |M F - F|` over the grid of `cdf_raw`.
pub fn statistic_from_cdf(cdf_raw: &GridFunction, n: usize) -> f64 {
    let gap = lcm_on_grid(cdf_raw)
        .sup_distance(cdf_raw)
        .expect("majorant shares the grid");
    (n as f64).sqrt() * gap
}

pub fn test_statistic(est: &DeconvEstimate) -> f64 {
    statistic_from_cdf(&est.cdf_raw, est.n)
}

/// Inverse of a normalized piecewise-linear envelope.
pub fn envelope_quantile(env: &ConcaveEnvelope, u: f64) -> f64 {
    let (xs, ys) = (env.knot_xs(), env.knot_ys());
    if u <= ys[0] {
        return xs[0];
    }
    let k = ys.partition_point(|&y| y < u);
    if k >= ys.len() {
        return xs[xs.len() - 1];
    }
    xs[k - 1] + (u - ys[k - 1]) / env.slopes()[k - 1]
}

/// `m` draws from the distribution function given by `env`, by inversion.
pub fn sample_bootstrap_x<R: Rng + ?Sized>(env: &ConcaveEnvelope, rng: &mut R, m: usize) -> Result<Vec<f64>> {
    if (env.max_value() - 1.0).abs() > 1e-9 {
        return Err(Error::NotADistribution(env.max_value()));
    }
    if m == 0 {
        return Err(Error::arg("bootstrap sample size must be positive"));
    }
    Ok((0..m).map(|_| envelope_quantile(env, rng.random::<f64>())).collect())
}

/// The concavified, normalized estimate used as bootstrap null law. It is
/// rescaled by its own plateau so that it is a distribution function even
/// when the raw CDF overshoots its right-end value.
pub fn bootstrap_envelope(est: &DeconvEstimate) -> Result<ConcaveEnvelope> {
    let env = lcm(&est.cdf_raw);
    let top = env.max_value();
    if !(top > 0.0) {
        return Err(Error::TestFailure(format!("concave majorant peaks at {top}")));
    }
    Ok(env.divided(top))
}

fn failure(e: Error) -> Error {
    match e {
        Error::DegenerateNormalizer { .. } | Error::IllPosed { .. } => {
            Error::TestFailure(format!("estimation on the full sample failed: {e}"))
        }
        other => other,
    }
}

pub fn run_test(data: &[f64], deconvolver: &Deconvolver, cfg: &TestConfig) -> Result<TestReport> {
    cfg.validate()?;
    let n = data.len();
    if n < MIN_SAMPLE {
        return Err(Error::arg(format!("the test needs at least {MIN_SAMPLE} observations, got {n}")));
    }
    if data.iter().any(|y| !y.is_finite()) {
        return Err(Error::arg("observations must be finite"));
    }
    let est = deconvolver.estimate(data, cfg.bandwidth).map_err(failure)?;
    let statistic = test_statistic(&est);
    let m = cfg.subsample_size(n);

    if cfg.calibration == Calibration::LogThreshold {
        let critical_value = (n as f64).ln();
        return Ok(TestReport {
            n,
            m,
            replicates_requested: cfg.replicates,
            gamma: cfg.gamma,
            statistic,
            critical_value,
            p_value: NO_P_VALUE,
            reject: statistic > critical_value,
            calibration: cfg.calibration,
            seed: cfg.seed,
            bandwidth: est.bandwidth,
            bootstrap_bandwidth: f64::NAN,
            replicates: Vec::new(),
        });
    }

    let h_m = match cfg.bootstrap_bandwidth {
        Some(h) => h,
        None => select_bandwidth_for_size(data, &deconvolver.error, &deconvolver.kernel, m)?,
    };
    let env = bootstrap_envelope(&est)?;
    let replicates = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_for(cfg.seed, 0, b as u64);
            let xs = sample_bootstrap_x(&env, &mut rng, m)?;
            let eps = deconvolver.error.sample(&mut rng, m);
            let ys: Vec<f64> = xs.iter().zip(&eps).map(|(x, e)| x + e).collect();
            let cdf = deconvolver.raw_cdf(&ys, h_m)?;
            Ok(statistic_from_cdf(&cdf, m))
        })
        .collect::<Result<Vec<f64>>>()?;
    let critical_value = empirical_quantile(&replicates, 1.0 - cfg.gamma)?;
    let exceed = replicates.iter().filter(|&&t| t >= statistic).count();
    Ok(TestReport {
        n,
        m,
        replicates_requested: cfg.replicates,
        gamma: cfg.gamma,
        statistic,
        critical_value,
        p_value: (1 + exceed) as f64 / (cfg.replicates + 1) as f64,
        reject: statistic > critical_value,
        calibration: cfg.calibration,
        seed: cfg.seed,
        bandwidth: est.bandwidth,
        bootstrap_bandwidth: h_m,
        replicates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deconv::{EstimatorSettings, KernelSpec};
    use crate::distributions::{ErrorModel, MixtureTemplate, TargetSpec};
    use crate::numerics::linspace;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_envelope() -> ConcaveEnvelope {
        lcm(&GridFunction::new(vec![0.0, 1.0, 3.0], vec![0.0, 0.5, 1.0]).unwrap())
    }

    fn estimate_with_cdf(cdf: GridFunction, n: usize) -> DeconvEstimate {
        DeconvEstimate {
            density: cdf.clone(),
            cdf_norm: cdf.clone(),
            cdf_raw: cdf,
            limit_value: 1.0,
            bandwidth: 1.0,
            n,
        }
    }

    #[test]
    fn statistic_examples() {
        let xs = linspace(0.0, 3.0, 301);
        let concave = GridFunction::from_fn(xs.clone(), |x| 1.0 - (-x).exp()).unwrap();
        assert_eq!(test_statistic(&estimate_with_cdf(concave, 100)), 0.0);
        let convex = GridFunction::from_fn(xs.clone(), |x| if x <= 1.0 { x * x } else { 1.0 }).unwrap();
        let t = test_statistic(&estimate_with_cdf(convex.clone(), 100));
        // Closed form 10 * max(x - x^2) = 2.5; the grid hits x = 0.5 exactly.
        assert!((t - 2.5).abs() < 10.0 * 0.01, "{t}");
        let shifted = GridFunction::new(xs, convex.ys().iter().map(|y| y + 0.7).collect()).unwrap();
        let ts = test_statistic(&estimate_with_cdf(shifted, 100));
        assert!((ts - t).abs() < 1e-12);
    }

    #[test]
    fn envelope_inversion_examples() {
        let env = toy_envelope();
        assert_eq!(envelope_quantile(&env, 0.25), 0.5);
        assert_eq!(envelope_quantile(&env, 0.75), 2.0);
        assert_eq!(envelope_quantile(&env, 1.0), 3.0);
    }

    #[test]
    fn sampler_rejects_unnormalized_envelope() {
        let env = lcm(&GridFunction::new(vec![0.0, 1.0], vec![0.0, 0.9]).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(sample_bootstrap_x(&env, &mut rng, 5), Err(Error::NotADistribution(_))));
    }

    #[test]
    fn sampler_passes_kolmogorov_smirnov() {
        let env = toy_envelope();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let mut draws = sample_bootstrap_x(&env, &mut rng, n).unwrap();
        draws.sort_by(f64::total_cmp);
        let mut ks = 0.0_f64;
        for (i, &x) in draws.iter().enumerate() {
            let f = env.eval(x);
            ks = ks.max((f - i as f64 / n as f64).abs()).max(((i + 1) as f64 / n as f64 - f).abs());
        }
        assert!(ks <= 1.36 / (n as f64).sqrt() * 1.5, "{ks}");
    }

    #[test]
    fn config_validation() {
        assert!(TestConfig::default().validate().is_ok());
        for bad in [
            TestConfig { gamma: 0.5, ..Default::default() },
            TestConfig { replicates: 49, ..Default::default() },
            TestConfig { m_exponent: 1.0, ..Default::default() },
            TestConfig { bandwidth: Some(0.0), ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
        let cfg = TestConfig::default();
        assert_eq!(cfg.subsample_size(500), 268);
        for n in 2..2000 {
            assert!(cfg.subsample_size(n) < n);
        }
    }

    fn sample_data(seed: u64, n: usize, target: &TargetSpec, em: &ErrorModel) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = target.sample(&mut rng, n);
        let e = em.sample(&mut rng, n);
        x.iter().zip(&e).map(|(a, b)| a + b).collect()
    }

    #[test]
    fn run_test_is_deterministic_and_consistent() {
        let target = TargetSpec::beta(0.75, 1.0);
        let em = MixtureTemplate::default().calibrate(&target, 0.2).unwrap();
        let dv = Deconvolver::new(em, KernelSpec::default(), EstimatorSettings::default()).unwrap();
        let data = sample_data(3, 200, &target, &em);
        let cfg = TestConfig { replicates: 60, seed: 42, ..Default::default() };
        let a = run_test(&data, &dv, &cfg).unwrap();
        let b = run_test(&data, &dv, &cfg).unwrap();
        assert_eq!(a.statistic.to_bits(), b.statistic.to_bits());
        assert_eq!(
            a.replicates.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.replicates.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(a.replicates.len(), 60);
        assert!(a.statistic >= 0.0 && a.replicates.iter().all(|&t| t >= 0.0));
        assert_eq!(a.reject, a.statistic > a.critical_value);
        assert!(a.p_value > 0.0 && a.p_value <= 1.0);
        if a.reject {
            assert!(a.p_value <= cfg.gamma + 1.0 / 61.0);
        } else {
            assert!(a.p_value > cfg.gamma - 1.0 / 61.0);
        }
        let thr = run_test(&data, &dv, &TestConfig { calibration: Calibration::LogThreshold, ..cfg.clone() }).unwrap();
        assert_eq!(thr.critical_value, (200f64).ln());
        assert_eq!(thr.p_value, NO_P_VALUE);
        assert!(thr.replicates.is_empty());
        assert_eq!(thr.statistic, a.statistic);
    }

    #[test]
    fn report_record_round_trips() {
        let rep = TestReport {
            n: 500,
            m: 268,
            replicates_requested: 300,
            gamma: 0.1,
            statistic: 0.123_456_789_012_345_6,
            critical_value: 1.0 / 3.0,
            p_value: 0.5,
            reject: false,
            calibration: Calibration::Bootstrap,
            seed: u64::MAX,
            bandwidth: 0.08,
            bootstrap_bandwidth: f64::NAN,
            replicates: vec![1.0],
        };
        let back = TestReport::from_record(&rep.to_record()).unwrap();
        assert_eq!(back.csv_row(), rep.csv_row());
        assert_eq!(back.statistic.to_bits(), rep.statistic.to_bits());
        assert!(back.bootstrap_bandwidth.is_nan());
        assert_eq!(rep.csv_row().len(), REPORT_CSV_HEADER.len());
        assert!(TestReport::from_record("n = 5").is_err());
    }

    #[test]
    fn run_test_refuses_small_samples() {
        let dv = Deconvolver::new(ErrorModel::NoError, KernelSpec::default(), EstimatorSettings::default()).unwrap();
        let data: Vec<f64> = (0..19).map(|k| k as f64 / 19.0).collect();
        assert!(matches!(run_test(&data, &dv, &TestConfig::default()), Err(Error::InvalidArgument(_))));
    }
}
