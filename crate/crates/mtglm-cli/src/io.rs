//! CSV ingestion and float formatting for the CLI.

use std::path::Path;

use mtglm::{Dataset, MtError};
use nalgebra::DMatrix;

/// Formats a float with 17 significant digits; round-trips exactly.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Loads an RFC-4180 CSV with a header row into a dataset. The named
/// response column must hold nonnegative integer counts; every other column
/// becomes a covariate, in header order, behind the intercept.
pub fn load_csv(path: &Path, response: &str) -> Result<(Dataset, Vec<String>), MtError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| MtError::Config(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| MtError::Config(format!("missing or unreadable header row: {e}")))?
        .clone();
    let resp_idx = headers
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| {
            MtError::Config(format!(
                "response column '{response}' not found; header has [{}]",
                headers.iter().collect::<Vec<_>>().join(", ")
            ))
        })?;
    let covariate_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != resp_idx)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut y = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| MtError::Config(format!("row {}: {e}", line + 1)))?;
        if record.len() != headers.len() {
            return Err(MtError::Config(format!(
                "row {}: expected {} fields, found {}",
                line + 1,
                headers.len(),
                record.len()
            )));
        }
        let mut covs = Vec::with_capacity(headers.len() - 1);
        for (col, field) in record.iter().enumerate() {
            if field.is_empty() || field.eq_ignore_ascii_case("na") {
                return Err(MtError::Config(format!(
                    "row {}: missing value in column '{}'",
                    line + 1,
                    &headers[col]
                )));
            }
            if col == resp_idx {
                let v: f64 = field.parse().map_err(|_| {
                    MtError::Config(format!(
                        "row {}: response '{field}' is not a number",
                        line + 1
                    ))
                })?;
                if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
                    return Err(MtError::Config(format!(
                        "row {}: response must be a nonnegative integer, got {field}",
                        line + 1
                    )));
                }
                y.push(v);
            } else {
                let v: f64 = field.parse().map_err(|_| {
                    MtError::Config(format!(
                        "column '{}' row {}: '{field}' is not numeric",
                        &headers[col],
                        line + 1
                    ))
                })?;
                covs.push(v);
            }
        }
        rows.push(covs);
    }
    if rows.len() < 2 {
        return Err(MtError::Config("need at least two data rows".into()));
    }
    let p = rows[0].len();
    let mut z = DMatrix::zeros(rows.len(), p);
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            z[(i, j)] = *v;
        }
    }
    Ok((Dataset::from_covariates(z, y)?, covariate_names))
}

/// Re-emits a dataset as CSV with the response in the last column; floats
/// carry 17 significant digits.
#[cfg_attr(not(test), allow(dead_code))]
pub fn dataset_to_csv(data: &Dataset, covariate_names: &[String], response: &str) -> String {
    let mut out = String::new();
    for name in covariate_names {
        out.push_str(name);
        out.push(',');
    }
    out.push_str(response);
    out.push('\n');
    for i in 0..data.n() {
        for j in 1..=data.p() {
            out.push_str(&fmt_float(data.design()[(i, j)]));
            out.push(',');
        }
        out.push_str(&format!("{}", data.y()[i] as u64));
        out.push('\n');
    }
    out
}
