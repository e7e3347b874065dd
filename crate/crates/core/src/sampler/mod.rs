//! Posterior simulation for the hierarchical sparsity model.
//!
//! One sweep updates, in this order: `sigma^2` (conjugate), `(alpha, beta)`
//! (conjugate Gaussian block), every free latent scale `eta_j`, the global
//! scale `d`, and the free shape hyperparameters. The last three use
//! one-at-a-time random-walk Metropolis on the log scale with adaptive
//! proposal variances. Several copies of the chain run at tempered
//! likelihoods and exchange states between sweeps.

mod geweke;
mod linalg;
mod store;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp, Gamma, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::GammaParams;
use crate::error::{config, domain, Error, Result};
use crate::prior_graph::PriorGraph;
use crate::special::ln_beta;

pub use geweke::{geweke_test, GewekeMoment};
pub use linalg::{cholesky_jittered, RidgeProblem};
pub use store::{data_digest, effective_sample_size, Draw, RunManifest, SampleStore, Scalar, TargetAcceptance};

pub const DEFAULT_UPPER_BOUND: f64 = 1e8;
/// Variances below this are treated as numerically zero and rejected.
const PSI_FLOOR: f64 = 1e-300;
const LOG_VAR_RANGE: (f64, f64) = (-40.0, 15.0);
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    /// Total sweeps including burn-in.
    pub n_iter: usize,
    pub n_burn: usize,
    pub thin: usize,
    /// Adaptation decay exponent.
    pub a: f64,
    /// Target acceptance rate for the random-walk steps.
    pub tau_target: f64,
    pub upper_bound: f64,
    pub n_temperatures: usize,
    /// Ratio of adjacent temperatures (> 1); adapted during burn-in.
    pub ladder_ratio: f64,
    pub swap_target: f64,
    pub adapt_ladder: bool,
    pub seed: u64,
    /// Stop adapting proposal variances after this sweep.
    pub freeze_adaptation_after: Option<usize>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_iter: 20_000,
            n_burn: 5_000,
            thin: 10,
            a: 0.55,
            tau_target: 0.3,
            upper_bound: DEFAULT_UPPER_BOUND,
            n_temperatures: 4,
            ladder_ratio: 1.5,
            swap_target: 0.23,
            adapt_ladder: true,
            seed: 1,
            freeze_adaptation_after: None,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.5 && self.a <= 1.0) {
            return config(format!("adaptation exponent must lie in (1/2, 1], got {}", self.a));
        }
        if !(self.tau_target > 0.0 && self.tau_target < 1.0) {
            return config(format!("target acceptance must lie in (0, 1), got {}", self.tau_target));
        }
        if !(self.swap_target > 0.0 && self.swap_target < 1.0) {
            return config(format!("swap target must lie in (0, 1), got {}", self.swap_target));
        }
        if self.thin == 0 || self.n_temperatures == 0 {
            return config("thin and n_temperatures must be at least 1");
        }
        if self.n_burn >= self.n_iter {
            return config(format!("burn-in {} leaves no draws out of {}", self.n_burn, self.n_iter));
        }
        if !(self.upper_bound > 0.0) {
            return config("upper_bound must be positive");
        }
        if !(self.ladder_ratio > 1.0 && self.ladder_ratio.is_finite()) {
            return config(format!("ladder_ratio must exceed 1, got {}", self.ladder_ratio));
        }
        Ok(())
    }
}

/// Prior law for a scalar hyperparameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum HyperPrior {
    Gamma { shape: f64, rate: f64 },
    Exponential { rate: f64 },
    /// On a ratio in (0, 1).
    Beta { a: f64, b: f64 },
    /// Density `(1 + x)^-2` on (0, inf).
    HeavyTailScale,
}

impl HyperPrior {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            HyperPrior::Gamma { shape, rate } => shape > 0.0 && rate > 0.0,
            HyperPrior::Exponential { rate } => rate > 0.0,
            HyperPrior::Beta { a, b } => a > 0.0 && b > 0.0,
            HyperPrior::HeavyTailScale => true,
        };
        if ok {
            Ok(())
        } else {
            config(format!("invalid hyperprior {self:?}"))
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            HyperPrior::Gamma { shape, rate } => GammaParams { shape, rate }.ln_pdf(x),
            HyperPrior::Exponential { rate } => {
                if x < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    rate.ln() - rate * x
                }
            }
            HyperPrior::Beta { a, b } => {
                if x <= 0.0 || x >= 1.0 {
                    f64::NEG_INFINITY
                } else {
                    (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta(a, b)
                }
            }
            HyperPrior::HeavyTailScale => {
                if x < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    -2.0 * x.ln_1p()
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            HyperPrior::Gamma { shape, rate } => GammaParams { shape, rate }.sampler().sample(rng),
            HyperPrior::Exponential { rate } => Exp::new(rate).expect("validated").sample(rng),
            HyperPrior::Beta { a, b } => Beta::new(a, b).expect("validated").sample(rng),
            HyperPrior::HeavyTailScale => {
                let u: f64 = rng.random();
                u / (1.0 - u)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlphaPrior {
    /// Improper flat prior on the intercept.
    #[default]
    Flat,
    Normal { mean: f64, var: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sigma2Prior {
    /// `p(sigma^2) ∝ 1 / sigma^2`.
    #[default]
    Jeffreys,
    InverseGamma { shape: f64, scale: f64 },
}

/// How a shape group is treated by the sampler.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "update", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeUpdate {
    #[default]
    Fixed,
    /// Updated on the log scale under `prior`.
    Free { prior: HyperPrior },
    /// Shape equals `r` times the shape of group `of`; `r` in (0, 1) is
    /// updated on the logit scale under `prior`.
    Ratio { of: String, prior: HyperPrior },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelPriors {
    pub alpha: AlphaPrior,
    pub sigma2: Sigma2Prior,
    pub d: HyperPrior,
    /// Keyed by shape-group name. A key `name[*]` applies to every group
    /// whose name starts with `name[`. Unlisted groups stay fixed.
    pub shapes: BTreeMap<String, ShapeUpdate>,
}

impl Default for ModelPriors {
    fn default() -> Self {
        Self {
            alpha: AlphaPrior::Flat,
            sigma2: Sigma2Prior::Jeffreys,
            d: HyperPrior::HeavyTailScale,
            shapes: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum ShapeRule {
    Fixed,
    Free(HyperPrior),
    Ratio { of: usize, prior: HyperPrior },
}

/// Scalar updated by random-walk Metropolis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Eta(usize),
    D,
    Phi(usize),
}

/// Graph, data and priors; immutable during sampling.
#[derive(Clone, Debug)]
pub struct Model {
    graph: PriorGraph,
    x: DMatrix<f64>,
    y: DVector<f64>,
    priors: ModelPriors,
    rules: Vec<ShapeRule>,
    /// Groups whose shapes change when group `g` changes (including `g`).
    dependents: Vec<Vec<usize>>,
    ridge: RidgeProblem,
    x_means: DVector<f64>,
    y_mean: f64,
    node_to_coef: Vec<usize>,
    targets: Vec<Target>,
}

impl Model {
    pub fn new(graph: PriorGraph, x: DMatrix<f64>, y: DVector<f64>, priors: ModelPriors) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 {
            return Err(Error::InsufficientData {
                what: "observations".into(),
                observed: 0,
                needed: 1,
            });
        }
        if y.len() != n {
            return config(format!("response has {} rows, design has {n}", y.len()));
        }
        if p != graph.len() {
            return config(format!("design has {p} columns, prior graph has {} coefficients", graph.len()));
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return domain("data contain non-finite values");
        }
        priors.d.validate()?;
        match priors.alpha {
            AlphaPrior::Normal { var, .. } if !(var > 0.0) => return config("alpha prior variance must be positive"),
            _ => {}
        }
        match priors.sigma2 {
            Sigma2Prior::InverseGamma { shape, scale } if !(shape > 0.0 && scale > 0.0) => {
                return config("sigma2 prior parameters must be positive")
            }
            _ => {}
        }
        let rules = resolve_rules(&graph, &priors)?;
        let ng = rules.len();
        let mut dependents: Vec<Vec<usize>> = (0..ng).map(|g| vec![g]).collect();
        for (h, r) in rules.iter().enumerate() {
            if let ShapeRule::Ratio { of, .. } = r {
                dependents[*of].push(h);
            }
        }
        let mut node_to_coef = vec![0; p];
        for (c, &node) in graph.coeff_map().iter().enumerate() {
            node_to_coef[node] = c;
        }
        let mut targets: Vec<Target> = (0..graph.len())
            .filter(|&j| !graph.nodes()[j].law.is_fixed())
            .map(Target::Eta)
            .collect();
        targets.push(Target::D);
        targets.extend((0..ng).filter(|&g| rules[g] != ShapeRule::Fixed).map(Target::Phi));

        let y_mean = y.mean();
        let x_means = DVector::from_iterator(p, x.column_iter().map(|c| c.mean()));
        let ridge = build_ridge(&x, &y, &x_means, y_mean, priors.alpha);
        Ok(Self {
            graph,
            x,
            y,
            priors,
            rules,
            dependents,
            ridge,
            x_means,
            y_mean,
            node_to_coef,
            targets,
        })
    }

    /// Same model with a new response vector.
    pub fn with_response(&self, y: DVector<f64>) -> Result<Self> {
        Model::new(self.graph.clone(), self.x.clone(), y, self.priors.clone())
    }

    pub fn graph(&self) -> &PriorGraph {
        &self.graph
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn priors(&self) -> &ModelPriors {
        &self.priors
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_coef(&self) -> usize {
        self.x.ncols()
    }

    pub fn targets(&self) -> &[Target] {
        &self.targets
    }

    pub fn target_name(&self, t: Target) -> String {
        match t {
            Target::Eta(j) => format!("eta:{}", self.graph.nodes()[j].name),
            Target::D => "d".to_string(),
            Target::Phi(g) => format!("phi:{}", self.graph.shape_groups()[g].name),
        }
    }

    pub fn coef_names(&self) -> Vec<String> {
        self.graph
            .coeff_map()
            .iter()
            .map(|&node| self.graph.nodes()[node].name.clone())
            .collect()
    }

    /// Whether group `g` holds a ratio rather than a shape in `phi`.
    pub fn is_ratio_group(&self, g: usize) -> bool {
        matches!(self.rules[g], ShapeRule::Ratio { .. })
    }

    /// Shape of every group given the sampler coordinates `phi`.
    pub fn resolve_shapes(&self, phi: &[f64]) -> Vec<f64> {
        self.rules
            .iter()
            .enumerate()
            .map(|(g, r)| match r {
                ShapeRule::Ratio { of, .. } => phi[g] * phi[*of],
                _ => phi[g],
            })
            .collect()
    }

    /// Starting point: prior-mean latent scales, `d = 1`, least-squares-free
    /// regression block at zero.
    pub fn initial_state(&self) -> Result<ModelState> {
        let shapes0 = self.graph.default_shapes();
        let mut phi = shapes0.clone();
        for (g, r) in self.rules.iter().enumerate() {
            if let ShapeRule::Ratio { of, .. } = r {
                let ratio = shapes0[g] / shapes0[*of];
                if !(ratio > 0.0 && ratio < 1.0) {
                    return config(format!(
                        "group '{}' starts at ratio {ratio} of '{}', which is outside (0, 1)",
                        self.graph.shape_groups()[g].name,
                        self.graph.shape_groups()[*of].name
                    ));
                }
                phi[g] = ratio;
            }
        }
        let eta: Vec<f64> = self
            .graph
            .nodes()
            .iter()
            .map(|node| node.law.mean().unwrap_or(1.0))
            .collect();
        let n = self.n() as f64;
        let var_y = self.y.iter().map(|v| (v - self.y_mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let sigma2 = if var_y > 0.0 { var_y } else { 1.0 };
        let beta = DVector::zeros(self.n_coef());
        Ok(self.assemble(self.y_mean, beta, sigma2, eta, 1.0, phi))
    }

    /// Draw every parameter from the prior; requires proper priors throughout.
    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ModelState> {
        let alpha = match self.priors.alpha {
            AlphaPrior::Normal { mean, var } => mean + var.sqrt() * rng.sample::<f64, _>(StandardNormal),
            AlphaPrior::Flat => return config("prior simulation needs a proper intercept prior"),
        };
        let sigma2 = match self.priors.sigma2 {
            Sigma2Prior::InverseGamma { shape, scale } => 1.0 / GammaParams { shape, rate: scale }.sampler().sample(rng),
            Sigma2Prior::Jeffreys => return config("prior simulation needs a proper sigma2 prior"),
        };
        let d = self.priors.d.sample(rng);
        let mut phi = self.graph.default_shapes();
        for (g, r) in self.rules.iter().enumerate() {
            match r {
                ShapeRule::Fixed => {}
                ShapeRule::Free(pr) | ShapeRule::Ratio { prior: pr, .. } => phi[g] = pr.sample(rng),
            }
        }
        let shapes = self.resolve_shapes(&phi);
        let eta: Vec<f64> = (0..self.graph.len())
            .map(|j| self.graph.law_with_shapes(j, &shapes).sample(rng))
            .collect();
        let psi = self.graph.psi_with_shapes(&eta, d, &shapes);
        let beta = DVector::from_iterator(
            self.n_coef(),
            self.graph
                .coeff_map()
                .iter()
                .map(|&node| psi[node].sqrt() * rng.sample::<f64, _>(StandardNormal)),
        );
        Ok(self.assemble(alpha, beta, sigma2, eta, d, phi))
    }

    /// `y = alpha + X beta + e`, `e ~ N(0, sigma^2)`.
    pub fn simulate_response<R: Rng + ?Sized>(&self, state: &ModelState, rng: &mut R) -> DVector<f64> {
        let noise = Normal::new(0.0, state.sigma2.sqrt()).expect("positive variance");
        let mut y = &self.x * &state.beta;
        for v in y.iter_mut() {
            *v += state.alpha + noise.sample(rng);
        }
        y
    }

    fn assemble(&self, alpha: f64, beta: DVector<f64>, sigma2: f64, eta: Vec<f64>, d: f64, phi: Vec<f64>) -> ModelState {
        let shapes = self.resolve_shapes(&phi);
        let psi = self.graph.psi_with_shapes(&eta, d, &shapes);
        let mut state = ModelState {
            alpha,
            beta,
            sigma2,
            eta,
            d,
            phi,
            shapes,
            psi,
            resid: DVector::zeros(self.n()),
            rss: 0.0,
            loglik: 0.0,
        };
        self.refresh_residuals(&mut state);
        state
    }

    /// Recompute residuals, RSS and log-likelihood from `(alpha, beta, sigma^2)`.
    pub fn refresh_residuals(&self, state: &mut ModelState) {
        let fitted = &self.x * &state.beta;
        state.resid = DVector::from_iterator(
            self.n(),
            self.y.iter().zip(fitted.iter()).map(|(y, f)| y - state.alpha - f),
        );
        state.rss = state.resid.norm_squared();
        state.loglik = log_likelihood(state.rss, state.sigma2, self.n());
    }

    fn prior_var(&self, psi: &[f64]) -> Vec<f64> {
        self.graph.coeff_map().iter().map(|&node| psi[node]).collect()
    }

    fn beta_of_node(&self, state: &ModelState, node: usize) -> f64 {
        state.beta[self.node_to_coef[node]]
    }
}

fn resolve_rules(graph: &PriorGraph, priors: &ModelPriors) -> Result<Vec<ShapeRule>> {
    let groups = graph.shape_groups();
    let mut specs: Vec<Option<&ShapeUpdate>> = vec![None; groups.len()];
    for (key, upd) in &priors.shapes {
        let matched: Vec<usize> = match key.strip_suffix("[*]") {
            Some(stem) => {
                let prefix = format!("{stem}[");
                (0..groups.len()).filter(|&g| groups[g].name.starts_with(&prefix)).collect()
            }
            None => graph.group_index(key).into_iter().collect(),
        };
        if matched.is_empty() {
            return config(format!("shape prior '{key}' matches no shape group"));
        }
        for g in matched {
            if specs[g].is_some() {
                return config(format!("shape group '{}' has two prior entries", groups[g].name));
            }
            specs[g] = Some(upd);
        }
    }
    let mut rules = Vec::with_capacity(groups.len());
    for (g, spec) in specs.iter().enumerate() {
        rules.push(match spec {
            None | Some(ShapeUpdate::Fixed) => ShapeRule::Fixed,
            Some(ShapeUpdate::Free { prior }) => {
                prior.validate()?;
                ShapeRule::Free(*prior)
            }
            Some(ShapeUpdate::Ratio { of, prior }) => {
                prior.validate()?;
                let base = graph
                    .group_index(of)
                    .ok_or_else(|| Error::Config(format!("group '{}' is a ratio of unknown group '{of}'", groups[g].name)))?;
                if base == g {
                    return config(format!("group '{of}' cannot be a ratio of itself"));
                }
                ShapeRule::Ratio { of: base, prior: *prior }
            }
        });
    }
    for (g, r) in rules.iter().enumerate() {
        if let ShapeRule::Ratio { of, .. } = r {
            if matches!(rules[*of], ShapeRule::Ratio { .. }) {
                return config(format!("group '{}' is a ratio of another ratio group", groups[g].name));
            }
        }
    }
    Ok(rules)
}

fn build_ridge(x: &DMatrix<f64>, y: &DVector<f64>, x_means: &DVector<f64>, y_mean: f64, alpha: AlphaPrior) -> RidgeProblem {
    let (n, p) = x.shape();
    match alpha {
        AlphaPrior::Flat => {
            // integrating out a flat intercept leaves the centred problem
            let mut xc = x.clone();
            for (j, mut col) in xc.column_iter_mut().enumerate() {
                col.add_scalar_mut(-x_means[j]);
            }
            let yc = y.add_scalar(-y_mean);
            RidgeProblem::new(xc, yc)
        }
        AlphaPrior::Normal { mean, .. } => {
            let mut z = DMatrix::from_element(n, p + 1, 1.0);
            z.columns_mut(1, p).copy_from(x);
            RidgeProblem::new(z, y.add_scalar(-mean))
        }
    }
}

/// Full parameter vector plus derived caches.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub alpha: f64,
    /// Indexed by design column.
    pub beta: DVector<f64>,
    pub sigma2: f64,
    /// Indexed by node.
    pub eta: Vec<f64>,
    pub d: f64,
    /// Sampler coordinates per shape group: the shape itself, or the ratio
    /// for ratio groups.
    pub phi: Vec<f64>,
    /// Resolved shape per group.
    pub shapes: Vec<f64>,
    /// Cached `Psi` per node.
    pub psi: Vec<f64>,
    pub resid: DVector<f64>,
    pub rss: f64,
    /// Untempered Gaussian log-likelihood.
    pub loglik: f64,
}

pub fn log_likelihood(rss: f64, sigma2: f64, n: usize) -> f64 {
    -0.5 * n as f64 * (LN_2PI + sigma2.ln()) - 0.5 * rss / sigma2
}

fn ln_normal0(beta: f64, var: f64) -> f64 {
    if !(var > PSI_FLOOR && var.is_finite()) {
        return f64::NEG_INFINITY;
    }
    -0.5 * (LN_2PI + var.ln() + beta * beta / var)
}

/// Conjugate draw of `sigma^2` at inverse temperature `b`.
pub fn gibbs_sigma2<R: Rng + ?Sized>(model: &Model, state: &mut ModelState, b: f64, rng: &mut R) -> Result<()> {
    let n = model.n();
    if n == 0 {
        return domain("sigma2 update needs at least one observation");
    }
    let (a0, b0) = match model.priors.sigma2 {
        Sigma2Prior::Jeffreys => (0.0, 0.0),
        Sigma2Prior::InverseGamma { shape, scale } => (shape, scale),
    };
    let shape = a0 + 0.5 * n as f64 * b;
    let scale = b0 + 0.5 * b * state.rss;
    if !(scale > 0.0 && scale.is_finite()) {
        return domain(format!("inverse-gamma scale must be positive, got {scale}"));
    }
    let g: f64 = Gamma::new(shape, 1.0 / scale)
        .map_err(|e| Error::Domain(e.to_string()))?
        .sample(rng);
    state.sigma2 = 1.0 / g;
    state.loglik = log_likelihood(state.rss, state.sigma2, n);
    Ok(())
}

/// Joint draw of `(alpha, beta)` from their Gaussian full conditional at
/// inverse temperature `b`.
pub fn gibbs_regression_block<R: Rng + ?Sized>(model: &Model, state: &mut ModelState, b: f64, rng: &mut R) -> Result<()> {
    let s2 = state.sigma2 / b;
    let n = model.n() as f64;
    match model.priors.alpha {
        AlphaPrior::Flat => {
            let pv = model.prior_var(&state.psi);
            let beta = model.ridge.draw(s2, &pv, rng)?;
            let centre = model.y_mean - model.x_means.dot(&beta);
            state.alpha = centre + (s2 / n).sqrt() * rng.sample::<f64, _>(StandardNormal);
            state.beta = beta;
        }
        AlphaPrior::Normal { mean, var } => {
            let mut pv = Vec::with_capacity(model.n_coef() + 1);
            pv.push(var);
            pv.extend(model.prior_var(&state.psi));
            let theta = model.ridge.draw(s2, &pv, rng)?;
            state.alpha = theta[0] + mean;
            state.beta = theta.rows(1, model.n_coef()).into_owned();
        }
    }
    model.refresh_residuals(state);
    Ok(())
}

/// `log v + i^-a (accept - tau)`, kept within a finite range.
pub fn adapt_proposal(log_var: f64, accept_prob: f64, i: usize, a: f64, tau: f64) -> f64 {
    let next = log_var + (i.max(1) as f64).powf(-a) * (accept_prob - tau);
    next.clamp(LOG_VAR_RANGE.0, LOG_VAR_RANGE.1)
}

/// Log acceptance ratio for exchanging states between inverse temperatures.
pub fn swap_log_ratio(b_i: f64, b_j: f64, loglik_i: f64, loglik_j: f64) -> f64 {
    (b_i - b_j) * (loglik_j - loglik_i)
}

/// Proposal variances and acceptance bookkeeping, one entry per target.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptState {
    pub log_var: Vec<f64>,
    pub iteration: usize,
    pub accept_sum: Vec<f64>,
    pub accept_count: Vec<usize>,
    /// Post-burn-in acceptance only.
    pub window_sum: Vec<f64>,
    pub window_count: Vec<usize>,
}

impl AdaptState {
    pub fn new(n_targets: usize) -> Self {
        Self {
            log_var: vec![0.0; n_targets],
            iteration: 0,
            accept_sum: vec![0.0; n_targets],
            accept_count: vec![0; n_targets],
            window_sum: vec![0.0; n_targets],
            window_count: vec![0; n_targets],
        }
    }

    pub fn window_rate(&self, t: usize) -> f64 {
        self.window_sum[t] / self.window_count[t].max(1) as f64
    }
}

/// Log full-conditional pieces touched by a move, before and after.
fn eta_terms(model: &Model, state: &ModelState, j: usize, eta_j: f64, psi: &[(usize, f64)]) -> f64 {
    let law = model.graph.law_with_shapes(j, &state.shapes);
    let mut lt = law.ln_pdf(eta_j) + eta_j.ln();
    for &(k, v) in psi {
        lt += ln_normal0(model.beta_of_node(state, k), v);
    }
    lt
}

/// One random-walk Metropolis step for target `t`; returns the acceptance
/// probability. Proposal variance is not adapted here.
pub fn amh_update_scalar<R: Rng + ?Sized>(
    model: &Model,
    state: &mut ModelState,
    target: Target,
    log_var: f64,
    upper_bound: f64,
    rng: &mut R,
) -> f64 {
    let eps = (0.5 * log_var).exp() * rng.sample::<f64, _>(StandardNormal);
    let u: f64 = rng.random();
    match target {
        Target::Eta(j) => {
            let cur = state.eta[j];
            let prop = cur * eps.exp();
            if !(prop >= f64::MIN_POSITIVE && prop <= upper_bound) {
                return 0.0;
            }
            let g = &model.graph;
            let affected: Vec<usize> = std::iter::once(j).chain(g.children(j).iter().copied()).collect();
            let before: Vec<(usize, f64)> = affected.iter().map(|&k| (k, state.psi[k])).collect();
            let lt0 = eta_terms(model, state, j, cur, &before);
            state.eta[j] = prop;
            let after: Vec<(usize, f64)> = affected
                .iter()
                .map(|&k| (k, g.psi_node(k, &state.eta, state.d, &state.shapes)))
                .collect();
            let lt1 = eta_terms(model, state, j, prop, &after);
            let log_r = lt1 - lt0;
            let acc = accept_prob(log_r);
            if u.ln() < log_r {
                for (k, v) in after {
                    state.psi[k] = v;
                }
            } else {
                state.eta[j] = cur;
            }
            acc
        }
        Target::D => {
            let cur = state.d;
            let prop = cur * eps.exp();
            if !(prop >= f64::MIN_POSITIVE && prop <= upper_bound) {
                return 0.0;
            }
            let new_psi = model.graph.psi_with_shapes(&state.eta, prop, &state.shapes);
            let lik = |psi: &[f64]| -> f64 { (0..psi.len()).map(|k| ln_normal0(model.beta_of_node(state, k), psi[k])).sum() };
            let lt0 = model.priors.d.ln_pdf(cur) + cur.ln() + lik(&state.psi);
            let lt1 = model.priors.d.ln_pdf(prop) + prop.ln() + lik(&new_psi);
            let log_r = lt1 - lt0;
            let acc = accept_prob(log_r);
            if u.ln() < log_r {
                state.d = prop;
                state.psi = new_psi;
            }
            acc
        }
        Target::Phi(g) => {
            let cur = state.phi[g];
            let (prop, prior, jac) = match model.rules[g] {
                ShapeRule::Fixed => return 0.0,
                ShapeRule::Free(prior) => {
                    let prop = cur * eps.exp();
                    if !(prop >= f64::MIN_POSITIVE && prop <= upper_bound) {
                        return 0.0;
                    }
                    (prop, prior, f64::ln as fn(f64) -> f64)
                }
                ShapeRule::Ratio { prior, .. } => {
                    let logit = (cur / (1.0 - cur)).ln() + eps;
                    let prop = 1.0 / (1.0 + (-logit).exp());
                    if !(prop > 0.0 && prop < 1.0) {
                        return 0.0;
                    }
                    (prop, prior, (|r: f64| r.ln() + (-r).ln_1p()) as fn(f64) -> f64)
                }
            };
            let mut phi = state.phi.clone();
            phi[g] = prop;
            let shapes = model.resolve_shapes(&phi);
            if model.dependents[g].iter().any(|&h| !(shapes[h] <= upper_bound && shapes[h] > 0.0)) {
                return 0.0;
            }
            let gr = &model.graph;
            let mut lt0 = prior.ln_pdf(cur) + jac(cur);
            let mut lt1 = prior.ln_pdf(prop) + jac(prop);
            let mut updates = Vec::new();
            for &h in &model.dependents[g] {
                for &k in gr.group_members(h) {
                    let b = model.beta_of_node(state, k);
                    lt0 += gr.law_with_shapes(k, &state.shapes).ln_pdf(state.eta[k]) + ln_normal0(b, state.psi[k]);
                    let v = gr.psi_node(k, &state.eta, state.d, &shapes);
                    lt1 += gr.law_with_shapes(k, &shapes).ln_pdf(state.eta[k]) + ln_normal0(b, v);
                    updates.push((k, v));
                }
            }
            let log_r = lt1 - lt0;
            let acc = accept_prob(log_r);
            if u.ln() < log_r {
                state.phi = phi;
                state.shapes = shapes;
                for (k, v) in updates {
                    state.psi[k] = v;
                }
            }
            acc
        }
    }
}

fn accept_prob(log_r: f64) -> f64 {
    if log_r.is_nan() {
        0.0
    } else {
        log_r.min(0.0).exp()
    }
}

/// One chain at a fixed inverse temperature with its own random stream.
#[derive(Clone, Debug)]
pub struct Chain {
    pub state: ModelState,
    pub adapt: AdaptState,
    pub inv_temp: f64,
    pub rng: ChaCha8Rng,
}

impl Chain {
    /// Chain seeded from `config.seed` on stream `stream`, started at
    /// [`Model::initial_state`].
    pub fn new(model: &Model, config: &ChainConfig, stream: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(stream);
        Ok(Self {
            state: model.initial_state()?,
            adapt: AdaptState::new(model.targets.len()),
            inv_temp: 1.0,
            rng,
        })
    }

    /// One full sweep; `iteration` starts at 1.
    pub fn sweep(&mut self, model: &Model, config: &ChainConfig, iteration: usize) -> Result<()> {
        gibbs_sigma2(model, &mut self.state, self.inv_temp, &mut self.rng)?;
        gibbs_regression_block(model, &mut self.state, self.inv_temp, &mut self.rng)?;
        let adapting = config.freeze_adaptation_after.is_none_or(|f| iteration <= f);
        let in_window = iteration > config.n_burn;
        self.adapt.iteration = iteration;
        for (t, &target) in model.targets.iter().enumerate() {
            let acc = amh_update_scalar(
                model,
                &mut self.state,
                target,
                self.adapt.log_var[t],
                config.upper_bound,
                &mut self.rng,
            );
            self.adapt.accept_sum[t] += acc;
            self.adapt.accept_count[t] += 1;
            if in_window {
                self.adapt.window_sum[t] += acc;
                self.adapt.window_count[t] += 1;
            }
            if adapting {
                self.adapt.log_var[t] = adapt_proposal(self.adapt.log_var[t], acc, iteration, config.a, config.tau_target);
            }
        }
        Ok(())
    }
}

/// Inverse temperatures `ratio^-t`, `t = 0..n`.
pub fn geometric_ladder(n: usize, ratio: f64) -> Vec<f64> {
    (0..n).map(|t| ratio.powi(-(t as i32))).collect()
}

/// Run the tempered sampler and return thinned post-burn-in draws of the
/// untempered chain.
pub fn run_chain(model: &Model, config: &ChainConfig) -> Result<SampleStore> {
    config.validate()?;
    let nt = config.n_temperatures;
    let mut chains = (0..nt)
        .map(|t| Chain::new(model, config, t as u64))
        .collect::<Result<Vec<_>>>()?;
    let mut swap_rng = ChaCha8Rng::seed_from_u64(config.seed);
    swap_rng.set_stream(nt as u64);
    let mut log_ln_ratio = config.ladder_ratio.ln().ln();
    let mut swap_sum = vec![0.0; nt.saturating_sub(1)];
    let mut swap_count = 0usize;
    let mut draws = Vec::new();

    for i in 1..=config.n_iter {
        let ladder = geometric_ladder(nt, log_ln_ratio.exp().exp());
        for (c, &b) in chains.iter_mut().zip(&ladder) {
            c.inv_temp = b;
        }
        if nt == 1 {
            chains[0].sweep(model, config, i)?;
        } else {
            chains.par_iter_mut().try_for_each(|c| c.sweep(model, config, i))?;
            let mut mean_acc = 0.0;
            for t in 0..nt - 1 {
                let log_r = swap_log_ratio(ladder[t], ladder[t + 1], chains[t].state.loglik, chains[t + 1].state.loglik);
                let acc = accept_prob(log_r);
                mean_acc += acc / (nt - 1) as f64;
                if i > config.n_burn {
                    swap_sum[t] += acc;
                }
                let u: f64 = swap_rng.random();
                if u.ln() < log_r {
                    let (lo, hi) = chains.split_at_mut(t + 1);
                    std::mem::swap(&mut lo[t].state, &mut hi[0].state);
                }
            }
            if i > config.n_burn {
                swap_count += 1;
            }
            if config.adapt_ladder && i <= config.n_burn {
                let step = (i as f64).powf(-config.a) * (mean_acc - config.swap_target);
                log_ln_ratio = (log_ln_ratio + step).clamp(-7.0, 1.6);
            }
        }
        if i > config.n_burn && (i - config.n_burn - 1).is_multiple_of(config.thin) {
            let s = &chains[0].state;
            draws.push(Draw {
                iteration: i,
                alpha: s.alpha,
                sigma2: s.sigma2,
                d: s.d,
                shapes: s.shapes.clone(),
                beta: s.beta.iter().copied().collect(),
                eta: s.eta.clone(),
                psi: s.psi.clone(),
                loglik: s.loglik,
            });
        }
    }

    let cold = &chains[0].adapt;
    let acceptance = model
        .targets
        .iter()
        .enumerate()
        .map(|(t, &target)| TargetAcceptance {
            name: model.target_name(target),
            rate: cold.window_rate(t),
            log_proposal_var: cold.log_var[t],
        })
        .collect();
    let ladder = geometric_ladder(nt, log_ln_ratio.exp().exp());
    Ok(SampleStore {
        coef_names: model.coef_names(),
        node_names: model.graph.nodes().iter().map(|n| n.name.clone()).collect(),
        group_names: model.graph.shape_groups().iter().map(|g| g.name.clone()).collect(),
        draws,
        acceptance,
        swap_acceptance: swap_sum.iter().map(|s| s / swap_count.max(1) as f64).collect(),
        inverse_temperatures: ladder,
        manifest: RunManifest::new(model, config),
    })
}
