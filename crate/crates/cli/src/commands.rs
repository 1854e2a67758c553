use std::io;
use std::path::{Path, PathBuf};

use concave_deconv::concavity_test::{run_test, TestReport, REPORT_CSV_HEADER};
use concave_deconv::deconv::{DeconvEstimate, Deconvolver};
use concave_deconv::experiments::{format_g6, run_study, write_outputs, StudyResult};
use concave_deconv::lcm::lcm;

use crate::config::{RunConfig, SimulateConfig};
use crate::error::CliError;

pub const ESTIMATE_CSV: &str = "estimate.csv";
pub const ESTIMATE_SUMMARY_CSV: &str = "estimate_summary.csv";
pub const REPORT_CSV: &str = "test_report.csv";
pub const REPORT_TXT: &str = "test_report.txt";
pub const REPLICATES_CSV: &str = "test_replicates.csv";

pub const ESTIMATE_HEADER: [&str; 6] = [
    "x",
    "density",
    "cdf_raw",
    "cdf_norm",
    "lcm_cdf_norm",
    "lcm_slope",
];
pub const SUMMARY_HEADER: [&str; 3] = ["n", "h", "limit_value"];

/// Output directory: the flag, then `CDECONV_OUT_DIR`, then the working directory.
pub fn resolve_out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("CDECONV_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn write_err(path: PathBuf) -> impl FnOnce(io::Error) -> CliError {
    move |source| CliError::Write { path, source }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Write {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

fn write_table(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(write_err(path.to_path_buf()))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(write_err(dir.to_path_buf()))
}

fn deconvolver(cfg: &RunConfig) -> Result<Deconvolver, CliError> {
    if !cfg.error_given {
        return Err(CliError::Usage(
            "config must describe the measurement error in an [error] section".into(),
        ));
    }
    if cfg.simulate.is_some() {
        return Err(CliError::Usage(
            "config has a [simulate] section; run it with the simulate command".into(),
        ));
    }
    Ok(Deconvolver::new(
        cfg.error,
        cfg.kernel,
        cfg.estimator.clone(),
    )?)
}

/// Rows of the estimate table over the non-negative part of the grid.
pub fn estimate_rows(est: &DeconvEstimate) -> Vec<Vec<String>> {
    let env = lcm(&est.cdf_norm);
    est.cdf_raw
        .xs()
        .iter()
        .zip(est.cdf_raw.ys())
        .zip(est.cdf_norm.ys())
        .map(|((&x, &raw), &norm)| {
            let dens = est.density.eval(x).unwrap_or(f64::NAN);
            vec![
                format_g6(x),
                format_g6(dens),
                format_g6(raw),
                format_g6(norm),
                format_g6(env.eval(x)),
                format_g6(env.slope(x)),
            ]
        })
        .collect()
}

pub fn cmd_estimate(cfg: &RunConfig, data: &[f64], out: &Path) -> Result<DeconvEstimate, CliError> {
    let dv = deconvolver(cfg)?;
    let est = dv.estimate(data, cfg.bandwidth)?;
    create_dir(out)?;
    write_table(
        &out.join(ESTIMATE_CSV),
        &ESTIMATE_HEADER,
        estimate_rows(&est),
    )?;
    write_table(
        &out.join(ESTIMATE_SUMMARY_CSV),
        &SUMMARY_HEADER,
        [vec![
            est.n.to_string(),
            est.bandwidth.to_string(),
            est.limit_value.to_string(),
        ]],
    )?;
    Ok(est)
}

pub fn report_header() -> Vec<&'static str> {
    let mut h = REPORT_CSV_HEADER.to_vec();
    h.extend(["bandwidth", "bootstrap_bandwidth"]);
    h
}

pub fn report_row(r: &TestReport) -> Vec<String> {
    let mut row = r.csv_row();
    row.push(r.bandwidth.to_string());
    row.push(r.bootstrap_bandwidth.to_string());
    row
}

/// Runs the test; the decision is part of the report, not an error.
pub fn cmd_test(
    cfg: &RunConfig,
    data: &[f64],
    seed: Option<u64>,
    out: &Path,
) -> Result<TestReport, CliError> {
    let dv = deconvolver(cfg)?;
    let mut tc = cfg.test.clone();
    if let Some(s) = seed {
        tc.seed = s;
    }
    let report = run_test(data, &dv, &tc)?;
    create_dir(out)?;
    write_table(
        &out.join(REPORT_CSV),
        &report_header(),
        [report_row(&report)],
    )?;
    std::fs::write(out.join(REPORT_TXT), report.to_record())
        .map_err(write_err(out.join(REPORT_TXT)))?;
    write_table(
        &out.join(REPLICATES_CSV),
        &["replicate", "statistic"],
        report
            .replicates
            .iter()
            .enumerate()
            .map(|(b, t)| vec![b.to_string(), t.to_string()]),
    )?;
    Ok(report)
}

pub fn cmd_simulate(
    cfg: &RunConfig,
    seed: Option<u64>,
    out: &Path,
) -> Result<(SimulateConfig, StudyResult), CliError> {
    if cfg.error_given {
        return Err(CliError::Usage(
            "simulate derives the error law from the noise-to-signal levels; remove the [error] section".into(),
        ));
    }
    let mut sim = cfg
        .simulate
        .clone()
        .ok_or_else(|| CliError::Usage("config has no [simulate] section".into()))?;
    if let Some(s) = seed {
        sim.plan.master_seed = s;
    }
    let result = run_study(&sim.plan)?;
    write_outputs(out, &sim.name, &sim.plan, &result).map_err(write_err(out.to_path_buf()))?;
    Ok((sim, result))
}
