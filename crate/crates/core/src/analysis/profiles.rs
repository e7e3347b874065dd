//! Shrinkage-profile tables for the product priors and the two ways of
//! making second-level coefficients sparser.

use crate::error::{config, Result};
use crate::shrinkage::{default_t_grid, level_one_profile, profile, shis_vs_scis, ShrinkagePrior, ShrinkageProfile, VariancePrior};

#[derive(Clone, Debug, PartialEq)]
pub struct ProfileOptions {
    /// Marginal shapes; one panel each.
    pub lambda2: Vec<f64>,
    /// Ratios `lambda1 / lambda2` of the product priors.
    pub ratios: Vec<f64>,
    /// Tail parameters for the gamma-gamma products (each > 1).
    pub tails: Vec<f64>,
    /// Ratio used for the shape- versus scale-induced comparison.
    pub shis_ratio: f64,
    pub se: f64,
    pub t_grid: Vec<f64>,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            lambda2: vec![0.1, 0.5],
            ratios: vec![1.0, 5.0, 10.0],
            tails: vec![2.0, 5.0],
            shis_ratio: 10.0,
            se: 1.0,
            t_grid: default_t_grid(),
        }
    }
}

pub type NamedProfiles = Vec<(String, ShrinkageProfile)>;

fn check(opts: &ProfileOptions) -> Result<f64> {
    if !(opts.se > 0.0 && opts.se.is_finite()) {
        return config(format!("standard error must be positive, got {}", opts.se));
    }
    if opts.lambda2.iter().chain(&opts.ratios).any(|v| !(*v > 0.0)) {
        return config("shapes and ratios must be positive");
    }
    if opts.tails.iter().any(|c| !(*c > 1.0)) {
        return config("tail parameters must exceed 1");
    }
    // prior scale matched to the sampling variance
    Ok(1.0 / (opts.se * opts.se))
}

/// Products of two unit-mean gammas against the single normal-gamma prior
/// with the same marginal shape and variance.
pub fn product_ng_profiles(opts: &ProfileOptions) -> Result<NamedProfiles> {
    let d = check(opts)?;
    let mut out = Vec::new();
    for &l2 in &opts.lambda2 {
        for &r in &opts.ratios {
            let prior = ShrinkagePrior::new(VariancePrior::ProductNg { lambda1: r * l2, lambda2: l2, d }, opts.se)?;
            out.push((format!("product_ng[lambda2={l2},ratio={r}]"), profile(&prior, &opts.t_grid)?));
        }
        let single = ShrinkagePrior::new(VariancePrior::matched_ng(l2, d), opts.se)?;
        out.push((format!("ng[lambda2={l2}]"), profile(&single, &opts.t_grid)?));
    }
    Ok(out)
}

/// Gamma-gamma version of [`product_ng_profiles`], one block per tail value.
pub fn product_ngg_profiles(opts: &ProfileOptions) -> Result<NamedProfiles> {
    let d = check(opts)?;
    let mut out = Vec::new();
    for &c in &opts.tails {
        for &l2 in &opts.lambda2 {
            for &r in &opts.ratios {
                let prior = ShrinkagePrior::new(VariancePrior::ProductNgg { lambda1: r * l2, lambda2: l2, c, d }, opts.se)?;
                out.push((format!("product_ngg[c={c},lambda2={l2},ratio={r}]"), profile(&prior, &opts.t_grid)?));
            }
            let single = ShrinkagePrior::new(VariancePrior::matched_ngg(l2, c, d), opts.se)?;
            out.push((format!("ngg[c={c},lambda2={l2}]"), profile(&single, &opts.t_grid)?));
        }
    }
    Ok(out)
}

/// Second-level profiles under shape- and scale-induced shrinkage plus the
/// first-level profile they share.
pub fn shis_scis_profiles(opts: &ProfileOptions) -> Result<NamedProfiles> {
    let d = check(opts)?;
    let mut out = Vec::new();
    for &l2 in &opts.lambda2 {
        let l1 = opts.shis_ratio * l2;
        let (shis, scis) = shis_vs_scis(l1, l2, d, opts.se, &opts.t_grid)?;
        out.push((format!("shis[lambda1={l1},lambda2={l2}]"), shis));
        out.push((format!("scis[lambda1={l1},lambda2={l2}]"), scis));
        out.push((format!("level_one[lambda1={l1}]"), level_one_profile(l1, d, opts.se, &opts.t_grid)?));
    }
    Ok(out)
}
