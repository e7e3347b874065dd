//! Stored draws, run manifest and mixing diagnostics.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChainConfig, Model, ModelPriors};
use crate::error::{Error, Result};
use crate::prior_graph::GraphDoc;

/// One stored draw of the untempered chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub iteration: usize,
    pub alpha: f64,
    pub sigma2: f64,
    pub d: f64,
    /// Shape per group.
    pub shapes: Vec<f64>,
    /// Per design column.
    pub beta: Vec<f64>,
    /// Per node.
    pub eta: Vec<f64>,
    pub psi: Vec<f64>,
    pub loglik: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetAcceptance {
    pub name: String,
    /// Mean acceptance probability after burn-in.
    pub rate: f64,
    pub log_proposal_var: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub seed: u64,
    pub config: ChainConfig,
    pub priors: ModelPriors,
    pub graph: GraphDoc,
    pub n: usize,
    pub p: usize,
    pub data_digest: String,
}

impl RunManifest {
    pub fn new(model: &Model, config: &ChainConfig) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config: config.clone(),
            priors: model.priors().clone(),
            graph: model.graph().clone().into(),
            n: model.n(),
            p: model.n_coef(),
            data_digest: data_digest(model.x(), model.y()),
        }
    }
}

/// SHA-256 over the dimensions and little-endian bytes of `X` (column-major) and `y`.
pub fn data_digest(x: &DMatrix<f64>, y: &DVector<f64>) -> String {
    let mut h = Sha256::new();
    h.update((x.nrows() as u64).to_le_bytes());
    h.update((x.ncols() as u64).to_le_bytes());
    for v in x.iter().chain(y.iter()) {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Scalar series that can be pulled out of a store.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scalar {
    Alpha,
    Sigma2,
    D,
    Shape(usize),
    Beta(usize),
    Eta(usize),
    Psi(usize),
}

#[derive(Clone, Debug)]
pub struct SampleStore {
    pub coef_names: Vec<String>,
    pub node_names: Vec<String>,
    pub group_names: Vec<String>,
    pub draws: Vec<Draw>,
    pub acceptance: Vec<TargetAcceptance>,
    /// Post-burn-in mean swap acceptance per adjacent temperature pair.
    pub swap_acceptance: Vec<f64>,
    pub inverse_temperatures: Vec<f64>,
    pub manifest: RunManifest,
}

impl SampleStore {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn series(&self, s: Scalar) -> Vec<f64> {
        self.draws
            .iter()
            .map(|d| match s {
                Scalar::Alpha => d.alpha,
                Scalar::Sigma2 => d.sigma2,
                Scalar::D => d.d,
                Scalar::Shape(g) => d.shapes[g],
                Scalar::Beta(c) => d.beta[c],
                Scalar::Eta(j) => d.eta[j],
                Scalar::Psi(j) => d.psi[j],
            })
            .collect()
    }

    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.group_names.iter().position(|g| g == name)
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.node_names.iter().position(|g| g == name)
    }

    pub fn ess(&self, s: Scalar) -> f64 {
        effective_sample_size(&self.series(s))
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["iteration", "loglik", "alpha", "sigma2", "d"].iter().map(|s| s.to_string()).collect();
        h.extend(self.group_names.iter().cloned());
        h.extend(self.coef_names.iter().map(|n| format!("beta:{n}")));
        h.extend(self.node_names.iter().map(|n| format!("eta:{n}")));
        h.extend(self.node_names.iter().map(|n| format!("psi:{n}")));
        h
    }

    /// One row per stored draw, named columns.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.header())?;
        for d in &self.draws {
            let mut row = vec![d.iteration.to_string(), d.loglik.to_string(), d.alpha.to_string()];
            row.push(d.sigma2.to_string());
            row.push(d.d.to_string());
            row.extend(d.shapes.iter().chain(&d.beta).chain(&d.eta).chain(&d.psi).map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(Error::from)
    }

    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Effective sample size from the initial monotone sequence estimator of
/// the integrated autocorrelation time.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let gamma = |lag: usize| -> f64 { c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64 };
    let g0 = gamma(0);
    if g0 <= 0.0 {
        return n as f64;
    }
    let mut tau = -1.0;
    let mut prev = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = (gamma(lag) + gamma(lag + 1)) / g0;
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        tau += 2.0 * pair;
        prev = pair;
        lag += 2;
    }
    n as f64 / tau.max(1.0 / n as f64)
}
