//! Readers for the CSV files the commands write.

use std::io;

use concave_deconv::concavity_test::{Calibration, TestReport};
use concave_deconv::experiments::{Cell, MseRow, RateRow, StudyResult};

use crate::commands::{report_header, ESTIMATE_HEADER, SUMMARY_HEADER};

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub x: f64,
    pub density: f64,
    pub cdf_raw: f64,
    pub cdf_norm: f64,
    pub lcm_cdf_norm: f64,
    pub lcm_slope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSummary {
    pub n: usize,
    pub h: f64,
    pub limit_value: f64,
}

fn bad(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

/// Header check plus the string fields of every row.
fn table(text: &str, header: &[&str]) -> io::Result<Vec<Vec<String>>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let got: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if got != header {
        return Err(bad(format!("unexpected header {got:?}")));
    }
    r.records()
        .map(|rec| Ok(rec?.iter().map(str::to_string).collect()))
        .collect()
}

fn num(s: &str) -> io::Result<f64> {
    s.parse().map_err(|_| bad(format!("'{s}' is not a number")))
}

fn int(s: &str) -> io::Result<usize> {
    s.parse().map_err(|_| bad(format!("'{s}' is not a count")))
}

fn flag(s: &str) -> io::Result<bool> {
    s.parse()
        .map_err(|_| bad(format!("'{s}' is not a boolean")))
}

pub fn parse_estimate_csv(text: &str) -> io::Result<Vec<EstimateRow>> {
    table(text, &ESTIMATE_HEADER)?
        .iter()
        .map(|f| {
            Ok(EstimateRow {
                x: num(&f[0])?,
                density: num(&f[1])?,
                cdf_raw: num(&f[2])?,
                cdf_norm: num(&f[3])?,
                lcm_cdf_norm: num(&f[4])?,
                lcm_slope: num(&f[5])?,
            })
        })
        .collect()
}

pub fn parse_summary_csv(text: &str) -> io::Result<EstimateSummary> {
    let rows = table(text, &SUMMARY_HEADER)?;
    let [f] = rows.as_slice() else {
        return Err(bad("summary must have exactly one row"));
    };
    Ok(EstimateSummary {
        n: int(&f[0])?,
        h: num(&f[1])?,
        limit_value: num(&f[2])?,
    })
}

/// Report row without the replicate vector.
pub fn parse_report_csv(text: &str) -> io::Result<TestReport> {
    let rows = table(text, &report_header())?;
    let [f] = rows.as_slice() else {
        return Err(bad("report must have exactly one row"));
    };
    Ok(TestReport {
        n: int(&f[0])?,
        m: int(&f[1])?,
        replicates_requested: int(&f[2])?,
        gamma: num(&f[3])?,
        statistic: num(&f[4])?,
        critical_value: num(&f[5])?,
        p_value: num(&f[6])?,
        reject: flag(&f[7])?,
        calibration: Calibration::parse(&f[8])
            .ok_or_else(|| bad(format!("unknown calibration '{}'", f[8])))?,
        seed: f[9].parse().map_err(|_| bad("seed is not an integer"))?,
        bandwidth: num(&f[10])?,
        bootstrap_bandwidth: num(&f[11])?,
        replicates: Vec::new(),
    })
}

pub fn parse_replicates_csv(text: &str) -> io::Result<Vec<f64>> {
    table(text, &["replicate", "statistic"])?
        .iter()
        .enumerate()
        .map(|(b, f)| {
            if int(&f[0])? != b {
                return Err(bad(format!("replicate {b} out of order")));
            }
            num(&f[1])
        })
        .collect()
}

fn cell(f: &[String]) -> io::Result<Cell> {
    Ok(Cell {
        shape: if f[0].is_empty() {
            None
        } else {
            Some(num(&f[0])?)
        },
        n: int(&f[1])?,
        nsr: num(&f[2])?,
    })
}

pub fn parse_study_csv(text: &str) -> io::Result<StudyResult> {
    let first = text.lines().next().unwrap_or_default();
    if first.contains("rejection_rate") {
        let header = StudyResult::Rates(Vec::new()).header();
        let rows = table(text, header)?
            .iter()
            .map(|f| {
                Ok(RateRow {
                    cell: cell(f)?,
                    rejection_rate: num(&f[3])?,
                    se: num(&f[4])?,
                    rejections: int(&f[5])?,
                    completed: int(&f[6])?,
                    failures: int(&f[7])?,
                    valid: flag(&f[8])?,
                    sg_scale_shrunk: flag(&f[9])?,
                })
            })
            .collect::<io::Result<_>>()?;
        Ok(StudyResult::Rates(rows))
    } else {
        let header = StudyResult::Mse(Vec::new()).header();
        let rows = table(text, header)?
            .iter()
            .map(|f| {
                Ok(MseRow {
                    cell: cell(f)?,
                    quantile: num(&f[3])?,
                    mse_constrained: num(&f[4])?,
                    mse_unconstrained: num(&f[5])?,
                    ratio: if f[6].is_empty() {
                        None
                    } else {
                        Some(num(&f[6])?)
                    },
                    completed: int(&f[7])?,
                    failures: int(&f[8])?,
                    valid: flag(&f[9])?,
                })
            })
            .collect::<io::Result<_>>()?;
        Ok(StudyResult::Mse(rows))
    }
}
