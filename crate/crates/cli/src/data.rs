use std::path::Path;

use crate::error::CliError;

/// Parses one observation per line. Blank lines and lines starting with `#`
/// are skipped.
pub fn parse_observations(text: &str) -> Result<Vec<f64>, (usize, String)> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let s = line.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            _ => {
                return Err((
                    i + 1,
                    format!("line {}: '{s}' is not a finite number", i + 1),
                ))
            }
        }
    }
    if out.is_empty() {
        return Err((0, "no observations".into()));
    }
    Ok(out)
}

pub fn read_observations(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_observations(&text).map_err(|(_, message)| CliError::Data {
        path: path.to_path_buf(),
        message,
    })
}
