//! CSV ingestion with column roles, missing-value dropping and optional
//! tie-breaking jitter.

use std::path::Path;

use dirquant::geometry::Dataset;
use dirquant::seed::{derive_seed, rng_from_seed};
use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::error::{CliError, CliResult};

const JITTER_TAG: u64 = 0x717;

/// Tokens read as a missing value (besides an empty field).
const MISSING: [&str; 5] = ["NA", "na", "NaN", "nan", "."];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ColumnRoles {
    /// Empty means every column not listed as a covariate.
    pub responses: Vec<String>,
    pub covariates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_dropped: usize,
    pub responses: Vec<String>,
    pub covariates: Vec<String>,
    pub jitter: bool,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub data: Dataset,
    pub report: IngestReport,
}

pub fn ingest_csv(path: &Path, roles: &ColumnRoles, jitter: bool, seed: u64) -> CliResult<Ingested> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    ingest_str(&text, roles, jitter, seed)
}

pub fn ingest_str(text: &str, roles: &ColumnRoles, jitter: bool, seed: u64) -> CliResult<Ingested> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Data(format!("header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let index_of = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Config(format!("no column named `{name}`")))
    };
    let responses: Vec<String> = if roles.responses.is_empty() {
        header.iter().filter(|h| !roles.covariates.contains(h)).cloned().collect()
    } else {
        roles.responses.clone()
    };
    if responses.len() < 2 {
        return Err(CliError::Config(format!("need at least two response columns, found {}", responses.len())));
    }
    let cols: Vec<usize> = responses.iter().chain(&roles.covariates).map(|c| index_of(c)).collect::<CliResult<_>>()?;
    let k = responses.len();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut read = 0;
    let mut seen_value = vec![false; cols.len()];
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::Data(format!("line {line}: {e}"))
        })?;
        read += 1;
        let line = record.position().map_or(0, |p| p.line());
        let mut row = Vec::with_capacity(cols.len());
        let mut missing = false;
        for (slot, &c) in cols.iter().enumerate() {
            let field = record.get(c).unwrap_or("");
            if field.is_empty() || MISSING.contains(&field) {
                missing = true;
                continue;
            }
            let v: f64 = field
                .parse()
                .map_err(|_| CliError::Data(format!("line {line}: `{field}` in column `{}` is not numeric", header[c])))?;
            if !v.is_finite() {
                return Err(CliError::Data(format!("line {line}: non-finite value in column `{}`", header[c])));
            }
            seen_value[slot] = true;
            row.push(v);
        }
        if !missing {
            rows.push(row);
        }
    }
    if let Some(slot) = seen_value.iter().position(|s| !s) {
        return Err(CliError::Data(format!("column `{}` has no values", header[cols[slot]])));
    }
    if rows.is_empty() {
        return Err(CliError::Data("no complete rows".into()));
    }
    let n = rows.len();
    let mut y = DMatrix::from_fn(n, k, |i, j| rows[i][j]);
    let x = DMatrix::from_fn(n, cols.len() - k, |i, j| rows[i][k + j]);
    if jitter {
        let mut rng = rng_from_seed(derive_seed(seed, &[JITTER_TAG]));
        for v in y.iter_mut() {
            *v += rng.random::<f64>();
        }
    }
    let data = Dataset::new(y, x)?;
    Ok(Ingested {
        data,
        report: IngestReport {
            rows_read: read,
            rows_dropped: read - n,
            responses,
            covariates: roles.covariates.clone(),
            jitter,
        },
    })
}
