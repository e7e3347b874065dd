//! Gamma, gamma-gamma and product-of-gammas laws for the mixing variance,
//! plus the empirical sparsity-shape estimator.
//!
//! The gamma-gamma law `GG(shape, tail, scale)` is the marginal law of
//! `Psi ~ Ga(shape, g)` with `g ~ Ga(tail, scale)`. Its density is
//!
//! ```text
//! g(psi) = scale^-shape * B(shape, tail)^-1 * psi^(shape-1) * (1 + psi/scale)^-(shape+tail)
//! ```
//!
//! and `psi / (psi + scale)` is `Beta(shape, tail)`, which is how it is sampled.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::special::{ln_bessel_k, ln_beta, ln_gamma};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub shape: f64,
    pub rate: f64,
}

impl GammaParams {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite() && rate > 0.0 && rate.is_finite()) {
            return domain(format!("gamma parameters must be positive, got shape={shape}, rate={rate}"));
        }
        Ok(Self { shape, rate })
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.shape * self.rate.ln() - ln_gamma(self.shape) + (self.shape - 1.0) * x.ln() - self.rate * x
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn sampler(&self) -> Gamma<f64> {
        Gamma::new(self.shape, 1.0 / self.rate).expect("validated gamma parameters")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaGammaParams {
    pub shape: f64,
    pub tail: f64,
    pub scale: f64,
}

impl GammaGammaParams {
    pub fn new(shape: f64, tail: f64, scale: f64) -> Result<Self> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !(ok(shape) && ok(tail) && ok(scale)) {
            return domain(format!(
                "gamma-gamma parameters must be positive, got shape={shape}, tail={tail}, scale={scale}"
            ));
        }
        Ok(Self { shape, tail, scale })
    }

    /// The mean-one member with the given shape: `GG(shape, tail, (tail-1)/shape)`.
    pub fn unit_mean(shape: f64, tail: f64) -> Result<Self> {
        if !(tail > 1.0) {
            return config(format!("a unit-mean gamma-gamma law needs tail > 1, got {tail}"));
        }
        Self::new(shape, tail, (tail - 1.0) / shape)
    }

    /// `shape * scale / (tail - 1)`, defined for `tail > 1`.
    pub fn mean(&self) -> Option<f64> {
        (self.tail > 1.0).then(|| self.shape * self.scale / (self.tail - 1.0))
    }

    pub fn ln_pdf(&self, psi: f64) -> f64 {
        if psi <= 0.0 || !psi.is_finite() {
            return f64::NEG_INFINITY;
        }
        -self.shape * self.scale.ln() - ln_beta(self.shape, self.tail) + (self.shape - 1.0) * psi.ln()
            - (self.shape + self.tail) * (psi / self.scale).ln_1p()
    }
}

/// Log-density of `GG(shape, tail, scale)` at `psi`.
pub fn gg_logdensity(psi: f64, p: &GammaGammaParams) -> Result<f64> {
    if !(psi > 0.0) || !psi.is_finite() {
        return domain(format!("gamma-gamma density needs finite psi > 0, got {psi}"));
    }
    GammaGammaParams::new(p.shape, p.tail, p.scale)?;
    Ok(p.ln_pdf(psi))
}

/// Reusable sampler for `GG(shape, tail, scale)`.
#[derive(Clone, Debug)]
pub struct GammaGammaSampler {
    num: Gamma<f64>,
    den: Gamma<f64>,
    scale: f64,
}

impl GammaGammaSampler {
    pub fn new(p: &GammaGammaParams) -> Self {
        Self {
            num: Gamma::new(p.shape, 1.0).expect("validated"),
            den: Gamma::new(p.tail, 1.0).expect("validated"),
            scale: p.scale,
        }
    }
}

impl Distribution<f64> for GammaGammaSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // B = a/(a+b) ~ Beta(shape, tail), and scale * B/(1-B) = scale * a/b.
        let a = self.num.sample(rng);
        let b = self.den.sample(rng);
        self.scale * a / b
    }
}

/// One draw from `GG(shape, tail, scale)`.
pub fn gg_sample<R: Rng + ?Sized>(p: &GammaGammaParams, rng: &mut R) -> f64 {
    GammaGammaSampler::new(p).sample(rng)
}

/// Log-density of the product of independent `Ga(lambda1, 1)` and
/// `Ga(lambda2, 1)` variables (the K-distribution):
/// `2 / (G(l1) G(l2)) * psi^((l1+l2)/2 - 1) * K_|l1-l2|(2 sqrt(psi))`.
pub fn product_two_gammas_logdensity(psi: f64, lambda1: f64, lambda2: f64) -> Result<f64> {
    if !(psi > 0.0) || !psi.is_finite() {
        return domain(format!("product density needs finite psi > 0, got {psi}"));
    }
    if !(lambda1 > 0.0 && lambda2 > 0.0) {
        return domain(format!("shapes must be positive, got {lambda1}, {lambda2}"));
    }
    let k = ln_bessel_k((lambda1 - lambda2).abs(), 2.0 * psi.sqrt())?;
    Ok(std::f64::consts::LN_2 - ln_gamma(lambda1) - ln_gamma(lambda2)
        + (0.5 * (lambda1 + lambda2) - 1.0) * psi.ln()
        + k)
}

/// Mixing distribution for a latent scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum MixingLaw {
    Gamma(GammaParams),
    GammaGamma(GammaGammaParams),
    PointMass { value: f64 },
}

impl MixingLaw {
    pub fn point_mass(value: f64) -> Result<Self> {
        if !(value > 0.0 && value.is_finite()) {
            return domain(format!("point mass must be positive, got {value}"));
        }
        Ok(MixingLaw::PointMass { value })
    }

    /// Log-density (w.r.t. Lebesgue measure; a point mass contributes 0 at its atom).
    pub fn ln_pdf(&self, x: f64) -> f64 {
        match self {
            MixingLaw::Gamma(g) => g.ln_pdf(x),
            MixingLaw::GammaGamma(g) => g.ln_pdf(x),
            MixingLaw::PointMass { value } => {
                if x == *value {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn mean(&self) -> Option<f64> {
        match self {
            MixingLaw::Gamma(g) => Some(g.mean()),
            MixingLaw::GammaGamma(g) => g.mean(),
            MixingLaw::PointMass { value } => Some(*value),
        }
    }

    /// Shape parameter controlling behaviour near zero; `None` for a point mass.
    pub fn shape(&self) -> Option<f64> {
        match self {
            MixingLaw::Gamma(g) => Some(g.shape),
            MixingLaw::GammaGamma(g) => Some(g.shape),
            MixingLaw::PointMass { .. } => None,
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, MixingLaw::PointMass { .. })
    }

    /// Same family with a new shape, rescaled so the mean stays one.
    pub fn with_unit_mean_shape(&self, shape: f64) -> Self {
        match self {
            MixingLaw::Gamma(_) => MixingLaw::Gamma(GammaParams { shape, rate: shape }),
            MixingLaw::GammaGamma(g) => MixingLaw::GammaGamma(GammaGammaParams {
                shape,
                tail: g.tail,
                scale: (g.tail - 1.0) / shape,
            }),
            MixingLaw::PointMass { .. } => *self,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            MixingLaw::Gamma(g) => g.sampler().sample(rng),
            MixingLaw::GammaGamma(g) => gg_sample(g, rng),
            MixingLaw::PointMass { value } => *value,
        }
    }
}

/// Fitted power law of the empirical CDF near zero.
#[derive(Clone, Debug)]
pub struct SparsityEstimate {
    /// Fitted exponent `z` in `F(eps) ~ eps^z`.
    pub shape: f64,
    pub intercept: f64,
    /// Grid points actually used (those with enough mass below them).
    pub eps_used: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Minimum number of draws below a grid point for it to enter the fit.
pub const MIN_COUNT_PER_POINT: usize = 20;

/// Default grid: 12 log-spaced points from 1e-2 down to 1e-5.
pub fn default_eps_grid() -> Vec<f64> {
    log_grid_desc(1e-2, 1e-5, 12)
}

fn log_grid_desc(hi: f64, lo: f64, m: usize) -> Vec<f64> {
    let (lh, ll) = (hi.ln(), lo.ln());
    (0..m)
        .map(|i| (lh + (ll - lh) * i as f64 / (m - 1) as f64).exp())
        .collect()
}

/// Estimate the sparsity shape of the law sampled by `draw`: the slope of
/// `log F(eps)` against `log eps` over a strictly decreasing grid in
/// `(0, 0.1]`, weighted by the counts below each point.
pub fn estimate_sparsity_shape<F: FnMut() -> f64>(
    mut draw: F,
    n: usize,
    eps_grid: &[f64],
) -> Result<SparsityEstimate> {
    if n < 1_000_000 {
        return config(format!("sparsity-shape estimation needs at least 1e6 draws, got {n}"));
    }
    validate_grid(eps_grid, Some(0.1))?;
    let mut asc: Vec<f64> = eps_grid.to_vec();
    asc.reverse();
    let mut counts = vec![0usize; asc.len()];
    let top = asc[asc.len() - 1];
    for _ in 0..n {
        let x = draw();
        if x < top {
            // first grid index with eps > x
            let k = asc.partition_point(|&e| e <= x);
            counts[k] += 1;
        }
    }
    for k in 1..counts.len() {
        counts[k] += counts[k - 1];
    }
    fit_power_law(&asc, &counts, n)
}

/// Variant that places the grid between two empirical quantiles of the
/// draws, so the fit always sits where the law has mass near zero.
pub fn estimate_sparsity_shape_quantile<F: FnMut() -> f64>(
    mut draw: F,
    n: usize,
    q_lo: f64,
    q_hi: f64,
    points: usize,
) -> Result<SparsityEstimate> {
    if !(0.0 < q_lo && q_lo < q_hi && q_hi < 1.0) || points < 3 {
        return config(format!("need 0 < q_lo < q_hi < 1 and >= 3 points (got {q_lo}, {q_hi}, {points})"));
    }
    let mut xs: Vec<f64> = (0..n).map(|_| draw()).collect();
    let k_hi = ((q_hi * n as f64) as usize).min(n - 1);
    let k_lo = (q_lo * n as f64) as usize;
    if k_lo < MIN_COUNT_PER_POINT {
        return Err(Error::InsufficientData {
            what: "draws below the lower quantile".into(),
            observed: k_lo,
            needed: MIN_COUNT_PER_POINT,
        });
    }
    let (lower, hi, _) = xs.select_nth_unstable_by(k_hi, f64::total_cmp);
    let hi = *hi;
    let (_, lo, _) = lower.select_nth_unstable_by(k_lo, f64::total_cmp);
    let lo = *lo;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InsufficientData {
            what: "distinct positive quantiles".into(),
            observed: 0,
            needed: 2,
        });
    }
    let grid = log_grid_desc(hi, lo, points);
    let asc: Vec<f64> = grid.iter().rev().copied().collect();
    let counts: Vec<usize> = asc
        .iter()
        .map(|&e| xs.iter().filter(|&&x| x < e).count())
        .collect();
    fit_power_law(&asc, &counts, n)
}

fn validate_grid(eps_grid: &[f64], cap: Option<f64>) -> Result<()> {
    if eps_grid.len() < 3 {
        return config("eps grid needs at least 3 points");
    }
    for w in eps_grid.windows(2) {
        if !(w[1] < w[0]) {
            return config("eps grid must be strictly decreasing");
        }
    }
    let max = eps_grid[0];
    let min = eps_grid[eps_grid.len() - 1];
    if !(min > 0.0) || cap.is_some_and(|c| max > c) {
        return config(format!("eps grid values must lie in (0, {}]", cap.unwrap_or(f64::INFINITY)));
    }
    Ok(())
}

fn fit_power_law(eps_asc: &[f64], counts: &[usize], n: usize) -> Result<SparsityEstimate> {
    let below_max = *counts.last().unwrap_or(&0);
    let usable: Vec<(f64, usize)> = eps_asc
        .iter()
        .zip(counts)
        .filter(|(_, &c)| c >= MIN_COUNT_PER_POINT)
        .map(|(&e, &c)| (e, c))
        .collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientData {
            what: format!(
                "grid points with >= {MIN_COUNT_PER_POINT} draws below them ({below_max} draws below the largest eps)"
            ),
            observed: usable.len(),
            needed: 3,
        });
    }
    // weighted least squares: var(log F_hat) ~ 1/count
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(e, c) in &usable {
        let w = c as f64;
        let x = e.ln();
        let y = (c as f64 / n as f64).ln();
        sw += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    let slope = (sw * sxy - sx * sy) / (sw * sxx - sx * sx);
    let intercept = (sy - slope * sx) / sw;
    Ok(SparsityEstimate {
        shape: slope,
        intercept,
        eps_used: usable.iter().map(|u| u.0).collect(),
        counts: usable.iter().map(|u| u.1).collect(),
    })
}
