//! CSV ingestion.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::config::DataConfig;
use crate::error::{Error, Result};

/// Predictors (raw scale) and the transformed response.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub predictor_names: Vec<String>,
    pub response_name: String,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Indices of predictors configured as binary.
    pub binary: Vec<usize>,
    /// Predictors that take exactly two values.
    pub detected_binary: Vec<usize>,
    pub warnings: Vec<String>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Rows `idx` of this dataset, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let x = DMatrix::from_fn(idx.len(), self.p(), |i, j| self.x[(idx[i], j)]);
        let y = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.y[i]));
        Dataset { x, y, ..self.clone() }
    }
}

fn data_err<T>(msg: String) -> Result<T> {
    Err(Error::Data(msg))
}

fn distinct_count(col: impl Iterator<Item = f64>, cap: usize) -> usize {
    let mut seen: Vec<f64> = Vec::new();
    for v in col {
        if !seen.contains(&v) {
            seen.push(v);
            if seen.len() > cap {
                break;
            }
        }
    }
    seen.len()
}

/// Read a header-first CSV. Rows in error messages count data rows from 1.
pub fn ingest_csv(path: &Path, cfg: &DataConfig) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return data_err(format!("{}: no header row", path.display()));
    }
    let col_of = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("unknown column '{name}' (available: {})", header.join(", "))))
    };
    let resp = col_of(&cfg.response)?;
    let predictor_names: Vec<String> = match &cfg.predictors {
        Some(p) => p.clone(),
        None => header.iter().filter(|h| **h != cfg.response).cloned().collect(),
    };
    if predictor_names.is_empty() {
        return data_err("no predictor columns".into());
    }
    if predictor_names.contains(&cfg.response) {
        return data_err(format!("response '{}' also listed as a predictor", cfg.response));
    }
    let pred_cols = predictor_names.iter().map(|n| col_of(n)).collect::<Result<Vec<_>>>()?;

    let mut rows_x: Vec<f64> = Vec::new();
    let mut ys = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        let cell = |c: usize| -> Result<f64> {
            let name = &header[c];
            let raw = rec.get(c).unwrap_or("");
            if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
                return data_err(format!("missing value at row {row}, column '{name}'"));
            }
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => data_err(format!("non-numeric value '{raw}' at row {row}, column '{name}'")),
            }
        };
        for &c in &pred_cols {
            rows_x.push(cell(c)?);
        }
        let y = cell(resp)?;
        let ty = cfg.response_transform.apply(y).ok_or_else(|| {
            Error::Data(format!(
                "response {y} at row {row} is outside the domain of the {:?} transform",
                cfg.response_transform
            ))
        })?;
        ys.push(ty);
    }
    let n = ys.len();
    if n == 0 {
        return data_err(format!("{}: no data rows", path.display()));
    }
    let p = pred_cols.len();
    let x = DMatrix::from_row_slice(n, p, &rows_x);

    let detected_binary: Vec<usize> = (0..p).filter(|&j| distinct_count(x.column(j).iter().copied(), 2) == 2).collect();
    let mut binary = Vec::new();
    for name in &cfg.binary {
        let j = predictor_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Data(format!("binary column '{name}' is not a predictor")))?;
        if !detected_binary.contains(&j) {
            return data_err(format!("column '{name}' is configured as binary but does not take exactly two values"));
        }
        binary.push(j);
    }
    binary.sort_unstable();
    let warnings = detected_binary
        .iter()
        .filter(|j| !binary.contains(j))
        .map(|&j| format!("column '{}' takes two values but is not configured as binary", predictor_names[j]))
        .collect();

    Ok(Dataset {
        predictor_names,
        response_name: cfg.response.clone(),
        x,
        y: DVector::from_vec(ys),
        binary,
        detected_binary,
        warnings,
    })
}
