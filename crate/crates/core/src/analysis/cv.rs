//! K-fold cross-validation with the posterior predictive median and the
//! log predictive score.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::config::RunConfig;
use super::data::{ingest_csv, Dataset};
use super::fit::prepare;
use crate::design::build_design;
use crate::error::{config, Error, Result};
use crate::sampler::{run_chain, ChainConfig, SampleStore};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Shuffle `0..n` with `seed` and cut it into `folds` contiguous blocks
/// whose sizes differ by at most one.
pub fn fold_assignments(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return config(format!("cross-validation needs at least 2 folds, got {folds}"));
    }
    if n < folds {
        return config(format!("{n} observations cannot fill {folds} folds"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / folds, n % folds);
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        out.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Median of the equal-weight normal mixture with the given means and
/// standard deviations, by bisection on the mixture CDF.
pub fn mixture_median(means: &[f64], sds: &[f64]) -> f64 {
    let cdf = |y: f64| means.iter().zip(sds).map(|(m, s)| normal_cdf((y - m) / s)).sum::<f64>() / means.len() as f64;
    let mut lo = means.iter().zip(sds).map(|(m, s)| m - 10.0 * s).fold(f64::INFINITY, f64::min);
    let mut hi = means.iter().zip(sds).map(|(m, s)| m + 10.0 * s).fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * (1.0 + mid.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// `log` of the equal-weight normal mixture density at `y`.
pub fn mixture_log_density(y: f64, means: &[f64], sds: &[f64]) -> f64 {
    let terms: Vec<f64> = means
        .iter()
        .zip(sds)
        .map(|(m, s)| {
            let z = (y - m) / s;
            -0.5 * z * z - s.ln() - LN_SQRT_2PI
        })
        .collect();
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    top + (terms.iter().map(|t| (t - top).exp()).sum::<f64>() / terms.len() as f64).ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub row: usize,
    pub fold: usize,
    pub y: f64,
    pub median: f64,
    pub log_density: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub rmse: f64,
    pub lps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: usize,
    /// Over all held-out points.
    pub rmse: f64,
    pub lps: f64,
    pub per_fold: Vec<FoldResult>,
    pub predictions: Vec<Prediction>,
}

/// RMSE against the predictive median and the log predictive score.
pub fn score(predictions: &[Prediction]) -> (f64, f64) {
    let n = predictions.len() as f64;
    let mse = predictions.iter().map(|p| (p.y - p.median).powi(2)).sum::<f64>() / n;
    let lps = -predictions.iter().map(|p| p.log_density).sum::<f64>() / n;
    (mse.sqrt(), lps)
}

/// Predictions for `test` from a store fitted on a training set.
pub fn predict(store: &SampleStore, x_test: &nalgebra::DMatrix<f64>, y_test: &[f64]) -> Vec<(f64, f64)> {
    let sds: Vec<f64> = store.draws.iter().map(|d| d.sigma2.sqrt()).collect();
    (0..x_test.nrows())
        .map(|i| {
            let row = x_test.row(i);
            let means: Vec<f64> = store
                .draws
                .iter()
                .map(|d| d.alpha + row.iter().zip(&d.beta).map(|(x, b)| x * b).sum::<f64>())
                .collect();
            (mixture_median(&means, &sds), mixture_log_density(y_test[i], &means, &sds))
        })
        .collect()
}

fn run_fold(cfg: &RunConfig, data: &Dataset, fold: usize, test: &[usize], chain: &ChainConfig) -> Result<(FoldResult, Vec<Prediction>)> {
    let train: Vec<usize> = (0..data.n()).filter(|i| !test.contains(i)).collect();
    let train_data = data.subset(&train);
    let first = train_data.y[0];
    if train_data.y.iter().all(|&v| v == first) {
        return Err(Error::DegenerateFold {
            fold,
            reason: "training response is constant".into(),
        });
    }
    let prep = prepare(cfg, &train_data).map_err(|e| match e {
        Error::DegenerateColumn(c) => Error::DegenerateFold {
            fold,
            reason: format!("predictor '{c}' is constant in the training rows"),
        },
        other => other,
    })?;
    let test_data = data.subset(test);
    let x_test = build_design(&prep.preprocessor.apply(&test_data.x)?, &prep.spec)?.values;
    let store = run_chain(&prep.model, chain)?;
    let preds: Vec<Prediction> = predict(&store, &x_test, test_data.y.as_slice())
        .into_iter()
        .zip(test)
        .map(|((median, log_density), &row)| Prediction {
            row,
            fold,
            y: data.y[row],
            median,
            log_density,
        })
        .collect();
    let (rmse, lps) = score(&preds);
    Ok((
        FoldResult {
            fold,
            n_train: train.len(),
            n_test: test.len(),
            rmse,
            lps,
        },
        preds,
    ))
}

/// Cross-validate on the data named in `cfg` using `cfg.cv`.
pub fn cross_validate(cfg: &RunConfig, folds: usize) -> Result<CvReport> {
    cfg.validate()?;
    let data = ingest_csv(&cfg.data.path, &cfg.data)?;
    cross_validate_dataset(cfg, &data, folds)
}

/// Fold `f` samples with seed `chain.seed + f`.
pub fn cross_validate_dataset(cfg: &RunConfig, data: &Dataset, folds: usize) -> Result<CvReport> {
    let split = fold_assignments(data.n(), folds, cfg.cv.seed)?;
    let results = split
        .par_iter()
        .enumerate()
        .map(|(f, test)| {
            let chain = ChainConfig {
                seed: cfg.cv.chain.seed.wrapping_add(f as u64),
                ..cfg.cv.chain.clone()
            };
            run_fold(cfg, data, f, test, &chain)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut per_fold = Vec::with_capacity(folds);
    let mut predictions = Vec::with_capacity(data.n());
    for (r, p) in results {
        per_fold.push(r);
        predictions.extend(p);
    }
    predictions.sort_by_key(|p| p.row);
    let (rmse, lps) = score(&predictions);
    Ok(CvReport {
        folds,
        rmse,
        lps,
        per_fold,
        predictions,
    })
}

/// `cv_summary.json` plus `cv_predictions.csv` in `dir`.
pub fn write_cv(report: &CvReport, dir: &Path, label: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        label: &'a str,
        folds: usize,
        rmse: f64,
        lps: f64,
        per_fold: &'a [FoldResult],
    }
    let s = Summary {
        label,
        folds: report.folds,
        rmse: report.rmse,
        lps: report.lps,
        per_fold: &report.per_fold,
    };
    std::fs::write(dir.join(format!("cv_summary_{label}.json")), serde_json::to_string_pretty(&s)?)?;
    let mut w = csv::Writer::from_path(dir.join(format!("cv_predictions_{label}.csv")))?;
    w.write_record(["row", "fold", "y", "median", "log_density"])?;
    for p in &report.predictions {
        w.write_record([
            p.row.to_string(),
            p.fold.to_string(),
            p.y.to_string(),
            p.median.to_string(),
            p.log_density.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn folds_partition_indices() {
        let f = fold_assignments(23, 5, 9).unwrap();
        let sizes: Vec<usize> = f.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![5, 5, 5, 4, 4]);
        let mut all: Vec<usize> = f.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert_eq!(f, fold_assignments(23, 5, 9).unwrap());
        assert_ne!(f, fold_assignments(23, 5, 10).unwrap());
    }

    #[test]
    fn too_few_rows() {
        assert!(fold_assignments(3, 5, 1).is_err());
        assert!(fold_assignments(10, 1, 1).is_err());
    }

    #[test]
    fn single_component_mixture() {
        assert_abs_diff_eq!(mixture_median(&[1.5], &[2.0]), 1.5, epsilon = 1e-9);
        let ld = mixture_log_density(1.0, &[0.0], &[1.0]);
        assert_abs_diff_eq!(ld, -0.5 - LN_SQRT_2PI, epsilon = 1e-12);
    }

    #[test]
    fn symmetric_mixture_median() {
        let m = mixture_median(&[-3.0, 1.0, 5.0], &[1.0, 1.0, 1.0]);
        assert_abs_diff_eq!(m, 1.0, epsilon = 1e-9);
        // skewed mixture: the median sits where half the mass is below
        let (means, sds) = ([0.0, 0.0, 10.0], [1.0, 1.0, 1.0]);
        let med = mixture_median(&means, &sds);
        let cdf: f64 = means.iter().zip(&sds).map(|(mu, s)| normal_cdf((med - mu) / s)).sum::<f64>() / 3.0;
        assert_abs_diff_eq!(cdf, 0.5, epsilon = 1e-10);
    }

    #[test]
    fn log_density_is_log_of_mean() {
        let (means, sds) = ([0.0, 2.0], [1.0, 0.5]);
        let direct = means
            .iter()
            .zip(&sds)
            .map(|(m, s): (&f64, &f64)| (-(0.7 - m).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt()))
            .sum::<f64>()
            / 2.0;
        assert_abs_diff_eq!(mixture_log_density(0.7, &means, &sds), direct.ln(), epsilon = 1e-12);
    }
}
