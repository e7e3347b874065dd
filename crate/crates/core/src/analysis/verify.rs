//! Monte-Carlo checks of the sparsity-shape results for products and sums
//! of independent scales, and of the product-of-gammas density.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{estimate_sparsity_shape_quantile, product_two_gammas_logdensity, GammaGammaParams, GammaGammaSampler};
use crate::error::Result;
use crate::quadrature::{integrate, QuadOptions};
use crate::special::ln_gamma;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorLaw {
    /// `Ga(shape, 1)`.
    Gamma,
    /// `GG(shape, tail, 1)`.
    GammaGamma { tail: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combine {
    Product,
    Sum,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapeCase {
    pub combine: Combine,
    pub law: FactorLaw,
    pub shapes: Vec<f64>,
}

impl ShapeCase {
    pub fn expected(&self) -> f64 {
        match self.combine {
            Combine::Product => self.shapes.iter().copied().fold(f64::INFINITY, f64::min),
            Combine::Sum => self.shapes.iter().sum(),
        }
    }

    pub fn tolerance(&self) -> f64 {
        match self.combine {
            Combine::Product => 0.05,
            Combine::Sum => 0.1 * self.expected(),
        }
    }

    pub fn label(&self) -> String {
        let law = match self.law {
            FactorLaw::Gamma => "Ga".to_string(),
            FactorLaw::GammaGamma { tail } => format!("GG[c={tail}]"),
        };
        let op = match self.combine {
            Combine::Product => " * ",
            Combine::Sum => " + ",
        };
        self.shapes.iter().map(|s| format!("{law}({s})")).collect::<Vec<_>>().join(op)
    }
}

enum Factor {
    Gamma(Gamma<f64>),
    Gg(GammaGammaSampler),
}

impl Factor {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Factor::Gamma(g) => g.sample(rng),
            Factor::Gg(g) => g.sample(rng),
        }
    }
}

/// The cases run by `verify`: products keep their smallest shape well
/// separated from the next one so the leading power dominates at 1e7 draws.
pub fn default_cases() -> Vec<ShapeCase> {
    let gg = FactorLaw::GammaGamma { tail: 2.0 };
    let case = |combine, law, shapes: &[f64]| ShapeCase {
        combine,
        law,
        shapes: shapes.to_vec(),
    };
    vec![
        case(Combine::Product, FactorLaw::Gamma, &[0.3, 1.5]),
        case(Combine::Product, FactorLaw::Gamma, &[0.5, 2.0]),
        case(Combine::Product, FactorLaw::Gamma, &[0.3, 1.0, 2.0]),
        case(Combine::Product, gg, &[0.5, 2.0]),
        case(Combine::Product, gg, &[0.3, 1.0, 2.0]),
        case(Combine::Sum, FactorLaw::Gamma, &[0.5, 0.7]),
        case(Combine::Sum, FactorLaw::Gamma, &[0.3, 0.5, 1.0]),
        case(Combine::Sum, gg, &[0.3, 0.5]),
        case(Combine::Sum, gg, &[0.3, 0.5, 1.0]),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyRow {
    pub check: String,
    pub expected: f64,
    pub estimate: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub draws: usize,
    pub seed: u64,
    /// Quantile band of the draws used for the log-CDF fit.
    pub q_lo: f64,
    pub q_hi: f64,
    pub grid_points: usize,
    /// Shapes of the two gamma factors in the density check.
    pub density_shapes: (f64, f64),
    pub histogram_bins: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            draws: 10_000_000,
            seed: 1,
            q_lo: 1e-5,
            q_hi: 1e-3,
            grid_points: 8,
            density_shapes: (1.0, 3.0),
            histogram_bins: 20,
        }
    }
}

fn factor(law: FactorLaw, shape: f64) -> Result<Factor> {
    Ok(match law {
        FactorLaw::Gamma => Factor::Gamma(Gamma::new(shape, 1.0).expect("positive shape")),
        FactorLaw::GammaGamma { tail } => Factor::Gg(GammaGammaSampler::new(&GammaGammaParams::new(shape, tail, 1.0)?)),
    })
}

pub fn run_shape_case(case: &ShapeCase, opts: &VerifyOptions, stream: u64) -> Result<VerifyRow> {
    let factors = case.shapes.iter().map(|&s| factor(case.law, s)).collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(stream);
    let draw = || match case.combine {
        Combine::Product => factors.iter().map(|f| f.sample(&mut rng)).product(),
        Combine::Sum => factors.iter().map(|f| f.sample(&mut rng)).sum(),
    };
    let est = estimate_sparsity_shape_quantile(draw, opts.draws, opts.q_lo, opts.q_hi, opts.grid_points)?;
    let expected = case.expected();
    let tolerance = case.tolerance();
    Ok(VerifyRow {
        check: format!("sparsity shape of {}", case.label()),
        expected,
        estimate: est.shape,
        tolerance,
        pass: (est.shape - expected).abs() <= tolerance,
        note: format!("fit over eps in [{:.3e}, {:.3e}]", est.eps_used[0], est.eps_used[est.eps_used.len() - 1]),
    })
}

/// Sup relative error between the binned probabilities of the product of
/// two gamma draws and the integrated closed-form density, on log-spaced
/// bins covering [0.1, 5].
pub fn density_histogram_check(opts: &VerifyOptions, stream: u64) -> Result<VerifyRow> {
    let (l1, l2) = opts.density_shapes;
    let (a, b) = (Gamma::new(l1, 1.0).expect("positive"), Gamma::new(l2, 1.0).expect("positive"));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(stream);
    let m = opts.histogram_bins;
    let (lo, hi) = (0.1f64, 5.0f64);
    let edges: Vec<f64> = (0..=m).map(|i| (lo.ln() + (hi / lo).ln() * i as f64 / m as f64).exp()).collect();
    let mut counts = vec![0usize; m];
    for _ in 0..opts.draws {
        let z = a.sample(&mut rng) * b.sample(&mut rng);
        if (lo..hi).contains(&z) {
            let k = edges.partition_point(|&e| e <= z) - 1;
            counts[k] += 1;
        }
    }
    let q = QuadOptions::default();
    let mut worst: f64 = 0.0;
    let mut min_count = usize::MAX;
    for k in 0..m {
        let p = integrate(
            |x| product_two_gammas_logdensity(x, l1, l2).map(f64::exp).unwrap_or(0.0),
            edges[k],
            edges[k + 1],
            &q,
        )?
        .value;
        let freq = counts[k] as f64 / opts.draws as f64;
        worst = worst.max((freq / p - 1.0).abs());
        min_count = min_count.min(counts[k]);
    }
    Ok(VerifyRow {
        check: format!("product density Ga({l1})*Ga({l2}) vs histogram on [0.1, 5]"),
        expected: 0.0,
        estimate: worst,
        tolerance: 0.02,
        pass: worst < 0.02,
        note: format!("{m} log-spaced bins, smallest bin count {min_count}"),
    })
}

/// `g(Psi) / Psi^(min - 1)` at `Psi = 1e-8` against its limit.
pub fn density_small_value_check(opts: &VerifyOptions) -> Result<VerifyRow> {
    let (l1, l2) = opts.density_shapes;
    let psi = 1e-8f64;
    let ratio = (product_two_gammas_logdensity(psi, l1, l2)? - (l1.min(l2) - 1.0) * psi.ln()).exp();
    let limit = (ln_gamma((l1 - l2).abs()) - ln_gamma(l1) - ln_gamma(l2)).exp();
    Ok(VerifyRow {
        check: format!("product density Ga({l1})*Ga({l2}) near zero"),
        expected: limit,
        estimate: ratio,
        tolerance: 1e-3,
        pass: (ratio - limit).abs() <= 1e-3,
        note: "g(psi) / psi^(min shape - 1) at psi = 1e-8".into(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub draws: usize,
    pub seed: u64,
    pub rows: Vec<VerifyRow>,
}

impl VerificationReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

/// Run every default case; estimator failures become failed rows.
pub fn verify_theorems(opts: &VerifyOptions) -> VerificationReport {
    let cases = default_cases();
    let mut rows: Vec<VerifyRow> = cases
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            run_shape_case(c, opts, i as u64).unwrap_or_else(|e| VerifyRow {
                check: format!("sparsity shape of {}", c.label()),
                expected: c.expected(),
                estimate: f64::NAN,
                tolerance: c.tolerance(),
                pass: false,
                note: e.to_string(),
            })
        })
        .collect();
    let failed = |check: &str, e: crate::Error| VerifyRow {
        check: check.into(),
        expected: f64::NAN,
        estimate: f64::NAN,
        tolerance: f64::NAN,
        pass: false,
        note: e.to_string(),
    };
    rows.push(density_histogram_check(opts, cases.len() as u64).unwrap_or_else(|e| failed("product density histogram", e)));
    rows.push(density_small_value_check(opts).unwrap_or_else(|e| failed("product density near zero", e)));
    VerificationReport {
        draws: opts.draws,
        seed: opts.seed,
        rows,
    }
}

pub fn write_verification(report: &VerificationReport, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["check", "expected", "estimate", "tolerance", "pass", "note"])?;
    for r in &report.rows {
        w.write_record([
            r.check.clone(),
            r.expected.to_string(),
            r.estimate.to_string(),
            r.tolerance.to_string(),
            r.pass.to_string(),
            r.note.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
