//! Shrinkage profiles `S(t)` for a single centred regressor.
//!
//! With least-squares estimate `b`, standard error `SE` and `t = b / SE`,
//! the posterior mean is `(1 - S(t)) b` where
//!
//! ```text
//! S(t) = E[1 / (1 + w) | t],   w = v / SE^2,
//! ```
//!
//! `v` is the prior variance of the coefficient and the posterior weight of
//! `w` is proportional to `N(t; 0, 1 + w) g(w)`. Equivalently
//! `S(t) = -(1/t) d/ds log h(s)` at `s = t`, with `h(s) = E_g[N(s; 0, 1 + w)]`.
//!
//! Every law is handled through the density of `u = log w`, which is smooth
//! on the whole real line even when `g` has a pole at zero.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{gg_sample, GammaGammaParams};
use crate::error::{config, domain, Error, Result};
use crate::quadrature::{integrate, QuadOptions};
use crate::special::{ln_bessel_k, ln_beta, ln_gamma};

/// Lowest and highest `log w` scanned for the bulk of the posterior weight.
const U_RANGE: (f64, f64) = (-740.0, 700.0);
/// Integrand values below `peak - TAIL_DROP` (in log units) are negligible.
const TAIL_DROP: f64 = 36.0;

/// Law of the prior variance `v` of a coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VariancePrior {
    /// `v = psi0` (ridge).
    FixedVariance { psi0: f64 },
    /// `v = scale * Psi`, `Psi ~ Ga(shape, rate)`.
    Ng { shape: f64, rate: f64, scale: f64 },
    /// `v ~ GG(shape, tail, scale)`.
    Ngg { shape: f64, tail: f64, scale: f64 },
    /// `v = lambda2 d Psi1 Psi2`, `Psi_i ~ Ga(lambda_i, lambda_i)`.
    ProductNg { lambda1: f64, lambda2: f64, d: f64 },
    /// As `ProductNg` with unit-mean gamma-gamma factors of tail `c`.
    ProductNgg { lambda1: f64, lambda2: f64, c: f64, d: f64 },
    /// Shape-induced shrinkage; same law as `ProductNg`.
    Shis { lambda1: f64, lambda2: f64, d: f64 },
    /// Scale-induced shrinkage: `v = lambda2 d Psi1 Psi2`, both `Ga(lambda1, lambda1)`.
    Scis { lambda1: f64, lambda2: f64, d: f64 },
}

impl VariancePrior {
    /// Single normal-gamma prior with shape `lambda` and variance `lambda d`.
    pub fn matched_ng(lambda: f64, d: f64) -> Self {
        VariancePrior::Ng {
            shape: lambda,
            rate: lambda,
            scale: lambda * d,
        }
    }

    /// Single normal-gamma-gamma prior with shape `lambda`, tail `c` and mean variance `lambda d`.
    pub fn matched_ngg(lambda: f64, c: f64, d: f64) -> Self {
        VariancePrior::Ngg {
            shape: lambda,
            tail: c,
            scale: d * (c - 1.0),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            VariancePrior::FixedVariance { psi0 } => format!("fixed(psi0={psi0})"),
            VariancePrior::Ng { shape, rate, scale } => format!("ng(shape={shape},rate={rate},scale={scale})"),
            VariancePrior::Ngg { shape, tail, scale } => format!("ngg(shape={shape},tail={tail},scale={scale})"),
            VariancePrior::ProductNg { lambda1, lambda2, d } => format!("product_ng(l1={lambda1},l2={lambda2},d={d})"),
            VariancePrior::ProductNgg { lambda1, lambda2, c, d } => {
                format!("product_ngg(l1={lambda1},l2={lambda2},c={c},d={d})")
            }
            VariancePrior::Shis { lambda1, lambda2, d } => format!("shis(l1={lambda1},l2={lambda2},d={d})"),
            VariancePrior::Scis { lambda1, lambda2, d } => format!("scis(l1={lambda1},l2={lambda2},d={d})"),
        }
    }

    fn params(&self) -> Vec<f64> {
        match *self {
            VariancePrior::FixedVariance { psi0 } => vec![psi0],
            VariancePrior::Ng { shape, rate, scale } => vec![shape, rate, scale],
            VariancePrior::Ngg { shape, tail, scale } => vec![shape, tail, scale],
            VariancePrior::ProductNg { lambda1, lambda2, d }
            | VariancePrior::Shis { lambda1, lambda2, d }
            | VariancePrior::Scis { lambda1, lambda2, d } => vec![lambda1, lambda2, d],
            VariancePrior::ProductNgg { lambda1, lambda2, c, d } => vec![lambda1, lambda2, c, d],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.params().iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return domain(format!("prior parameters must be positive: {}", self.label()));
        }
        if let VariancePrior::ProductNgg { c, .. } = self {
            if *c <= 1.0 {
                return domain("unit-mean gamma-gamma factors need c > 1");
            }
        }
        Ok(())
    }

    /// Mean of `v`, when finite.
    pub fn mean_variance(&self) -> Option<f64> {
        match *self {
            VariancePrior::FixedVariance { psi0 } => Some(psi0),
            VariancePrior::Ng { shape, rate, scale } => Some(scale * shape / rate),
            VariancePrior::Ngg { shape, tail, scale } => (tail > 1.0).then(|| shape * scale / (tail - 1.0)),
            VariancePrior::ProductNg { lambda2, d, .. }
            | VariancePrior::ProductNgg { lambda2, d, .. }
            | VariancePrior::Shis { lambda2, d, .. }
            | VariancePrior::Scis { lambda2, d, .. } => Some(lambda2 * d),
        }
    }

    /// One draw of `v`.
    pub fn sample_variance<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let ga = |shape: f64, rate: f64, rng: &mut R| Gamma::new(shape, 1.0 / rate).expect("validated").sample(rng);
        match *self {
            VariancePrior::FixedVariance { psi0 } => psi0,
            VariancePrior::Ng { shape, rate, scale } => scale * ga(shape, rate, rng),
            VariancePrior::Ngg { shape, tail, scale } => gg_sample(&GammaGammaParams { shape, tail, scale }, rng),
            VariancePrior::ProductNg { lambda1, lambda2, d } | VariancePrior::Shis { lambda1, lambda2, d } => {
                lambda2 * d * ga(lambda1, lambda1, rng) * ga(lambda2, lambda2, rng)
            }
            VariancePrior::Scis { lambda1, lambda2, d } => lambda2 * d * ga(lambda1, lambda1, rng) * ga(lambda1, lambda1, rng),
            VariancePrior::ProductNgg { lambda1, lambda2, c, d } => {
                let p1 = GammaGammaParams { shape: lambda1, tail: c, scale: (c - 1.0) / lambda1 };
                let p2 = GammaGammaParams { shape: lambda2, tail: c, scale: (c - 1.0) / lambda2 };
                lambda2 * d * gg_sample(&p1, rng) * gg_sample(&p2, rng)
            }
        }
    }
}

/// A prior together with the standard error of the least-squares estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShrinkagePrior {
    pub prior: VariancePrior,
    pub se: f64,
}

impl ShrinkagePrior {
    pub fn new(prior: VariancePrior, se: f64) -> Result<Self> {
        prior.validate()?;
        if !(se.is_finite() && se > 0.0) {
            return domain(format!("standard error must be positive, got {se}"));
        }
        Ok(Self { prior, se })
    }

    fn law(&self) -> LogLaw {
        let se2 = self.se * self.se;
        match self.prior {
            VariancePrior::FixedVariance { psi0 } => LogLaw::Point(psi0 / se2),
            VariancePrior::Ng { shape, rate, scale } => LogLaw::Gamma {
                shape,
                ln_scale: (scale / (rate * se2)).ln(),
            },
            VariancePrior::Ngg { shape, tail, scale } => LogLaw::GammaGamma {
                shape,
                tail,
                ln_scale: (scale / se2).ln(),
            },
            VariancePrior::ProductNg { lambda1, lambda2, d } | VariancePrior::Shis { lambda1, lambda2, d } => {
                LogLaw::GammaProduct {
                    a: lambda1,
                    b: lambda2,
                    ln_scale: (d / (se2 * lambda1)).ln(),
                }
            }
            VariancePrior::Scis { lambda1, lambda2, d } => LogLaw::GammaProduct {
                a: lambda1,
                b: lambda1,
                ln_scale: (lambda2 * d / (se2 * lambda1 * lambda1)).ln(),
            },
            VariancePrior::ProductNgg { lambda1, lambda2, c, d } => LogLaw::GgProduct {
                a: lambda1,
                b: lambda2,
                c,
                ln_scale_a: ((c - 1.0) / lambda1).ln(),
                ln_scale_b: ((c - 1.0) / lambda2).ln(),
                ln_k: (lambda2 * d / se2).ln(),
            },
        }
    }
}

/// Law of `w = v / SE^2`, described by the log-density of `u = log w`.
#[derive(Clone, Copy, Debug)]
enum LogLaw {
    Point(f64),
    /// `w = e^ln_scale * G`, `G ~ Ga(shape, 1)`.
    Gamma { shape: f64, ln_scale: f64 },
    /// `w ~ GG(shape, tail, e^ln_scale)`.
    GammaGamma { shape: f64, tail: f64, ln_scale: f64 },
    /// `w = e^ln_scale * G_a * G_b` with standard gammas.
    GammaProduct { a: f64, b: f64, ln_scale: f64 },
    /// `w = e^ln_k * X_a * X_b`, `X ~ GG(shape, c, e^ln_scale_*)`.
    GgProduct { a: f64, b: f64, c: f64, ln_scale_a: f64, ln_scale_b: f64, ln_k: f64 },
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Log-density of `log X` for `X ~ GG(shape, tail, e^ln_scale)`.
fn ln_gg_log(u: f64, shape: f64, tail: f64, ln_scale: f64) -> f64 {
    let z = u - ln_scale;
    shape * z - ln_beta(shape, tail) - (shape + tail) * softplus(z)
}

fn ln_gamma_log(u: f64, shape: f64, ln_scale: f64) -> f64 {
    let z = u - ln_scale;
    shape * z - z.exp() - ln_gamma(shape)
}

impl LogLaw {
    fn ln_density(&self, u: f64) -> f64 {
        match *self {
            LogLaw::Point(_) => unreachable!("point mass has no density"),
            LogLaw::Gamma { shape, ln_scale } => ln_gamma_log(u, shape, ln_scale),
            LogLaw::GammaGamma { shape, tail, ln_scale } => ln_gg_log(u, shape, tail, ln_scale),
            LogLaw::GammaProduct { a, b, ln_scale } => {
                // density of log P for P = G_a G_b is p g(p) with the Bessel form of g
                let lp = u - ln_scale;
                let x = 2.0 * (0.5 * lp).exp();
                let lk = if x > 0.0 {
                    ln_bessel_k((a - b).abs(), x).unwrap_or(f64::NEG_INFINITY)
                } else {
                    f64::NEG_INFINITY
                };
                std::f64::consts::LN_2 - ln_gamma(a) - ln_gamma(b) + 0.5 * (a + b) * lp + lk
            }
            LogLaw::GgProduct { a, b, c, ln_scale_a, ln_scale_b, ln_k } => {
                // convolution of the two log-densities; the integrand is concave in v
                let z = u - ln_k;
                let phi = |v: f64| ln_gg_log(v, a, c, ln_scale_a) + ln_gg_log(z - v, b, c, ln_scale_b);
                // modes of log X_a and of z - log X_b bracket the joint mode
                log_integral_concave(phi, ln_scale_a + (a / c).ln(), z - ln_scale_b - (b / c).ln())
            }
        }
    }
}

/// `log ∫ exp(phi(v)) dv` for concave `phi`, using a mode search between the
/// two hints and a bracket out to where `phi` has fallen by `TAIL_DROP`.
fn log_integral_concave<F: Fn(f64) -> f64>(phi: F, hint_a: f64, hint_b: f64) -> f64 {
    let (mut lo, mut hi) = (hint_a.min(hint_b) - 1.0, hint_a.max(hint_b) + 1.0);
    // widen until the mode is interior
    let mut step = 1.0;
    while phi(lo) > phi(lo + 1e-3) {
        lo -= step;
        step *= 2.0;
        if step > 1e4 {
            break;
        }
    }
    step = 1.0;
    while phi(hi) > phi(hi - 1e-3) {
        hi += step;
        step *= 2.0;
        if step > 1e4 {
            break;
        }
    }
    // golden-section search for the mode
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - gr * (b - a);
    let mut d = a + gr * (b - a);
    let (mut fc, mut fd) = (phi(c), phi(d));
    while b - a > 1e-7 * (1.0 + a.abs().max(b.abs())) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = phi(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = phi(d);
        }
    }
    let mode = 0.5 * (a + b);
    let peak = phi(mode);
    if !peak.is_finite() {
        return f64::NEG_INFINITY;
    }
    let reach = |dir: f64| {
        let mut s = 0.5;
        while phi(mode + dir * s) > peak - TAIL_DROP && s < 1e4 {
            s *= 2.0;
        }
        mode + dir * s
    };
    let (left, right) = (reach(-1.0), reach(1.0));
    let opts = QuadOptions {
        abs_tol: 0.0,
        rel_tol: 1e-11,
        max_intervals: 400,
    };
    let f = |v: f64| (phi(v) - peak).exp();
    let lhs = integrate(f, left, mode, &opts).map(|r| r.value).unwrap_or(f64::NAN);
    let rhs = integrate(f, mode, right, &opts).map(|r| r.value).unwrap_or(f64::NAN);
    peak + (lhs + rhs).ln()
}

/// Bulk of an integrand in `u`: peak value and the range within `TAIL_DROP`
/// of it. Ends touching the scan limits are returned as infinite.
fn bulk<F: Fn(f64) -> f64>(f: &F) -> (f64, f64, f64, f64) {
    let step = 0.5;
    let n = ((U_RANGE.1 - U_RANGE.0) / step) as usize;
    let vals: Vec<(f64, f64)> = (0..=n)
        .map(|i| {
            let u = U_RANGE.0 + i as f64 * step;
            (u, f(u))
        })
        .collect();
    let (peak_u, peak) = vals
        .iter()
        .copied()
        .filter(|(_, v)| v.is_finite())
        .fold((0.0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    let keep: Vec<f64> = vals.iter().filter(|(_, v)| *v > peak - TAIL_DROP).map(|(u, _)| *u).collect();
    let lo = keep.first().copied().unwrap_or(peak_u) - step;
    let hi = keep.last().copied().unwrap_or(peak_u) + step;
    let lo = if lo <= U_RANGE.0 { f64::NEG_INFINITY } else { lo };
    let hi = if hi >= U_RANGE.1 { f64::INFINITY } else { hi };
    (peak, peak_u, lo, hi)
}

fn quad_opts() -> QuadOptions {
    QuadOptions {
        abs_tol: 0.0,
        rel_tol: 1e-11,
        max_intervals: 2000,
    }
}

/// `∫ exp(f(u) - peak) du` over the bulk of `f`, split at the peak, with its error.
fn integrate_bulk<F: Fn(f64) -> f64>(f: &F, peak: f64, peak_u: f64, lo: f64, hi: f64) -> Result<(f64, f64)> {
    let g = |u: f64| {
        let v = (f(u) - peak).exp();
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let opts = quad_opts();
    let a = integrate(g, lo, peak_u, &opts)?;
    let b = integrate(g, peak_u, hi, &opts)?;
    Ok((a.value + b.value, a.abs_error + b.abs_error))
}

/// Log-weight of `u = log w` given `t`, up to a constant.
fn ln_weight(law: &LogLaw, t: f64, u: f64) -> f64 {
    let l1w = softplus(u);
    law.ln_density(u) - 0.5 * l1w - 0.5 * t * t * (-l1w).exp()
}

/// `S(t)` with an estimate of its absolute numerical error.
pub fn shrinkage_with_error(prior: &ShrinkagePrior, t: f64) -> Result<(f64, f64)> {
    prior.prior.validate()?;
    let law = prior.law();
    if let LogLaw::Point(w) = law {
        return Ok((1.0 / (1.0 + w), 0.0));
    }
    let den = |u: f64| ln_weight(&law, t, u);
    let (peak, peak_u, lo, hi) = bulk(&den);
    if !peak.is_finite() {
        return Err(Error::Quadrature {
            achieved: f64::INFINITY,
            requested: 1e-11,
        });
    }
    let num = |u: f64| den(u) - softplus(u);
    let (d, de) = integrate_bulk(&den, peak, peak_u, lo, hi)?;
    let (n, ne) = integrate_bulk(&num, peak, peak_u, lo, hi)?;
    let s = n / d;
    let err = (ne + s * de) / d;
    Ok((s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON), err))
}

/// `S(t) = E[1 / (1 + v / SE^2) | t]`.
pub fn shrinkage_at(prior: &ShrinkagePrior, t: f64) -> Result<f64> {
    shrinkage_with_error(prior, t).map(|(s, _)| s)
}

/// `log h(s)` up to an additive constant common to all `s`.
pub fn log_marginal(prior: &ShrinkagePrior, s: f64) -> Result<f64> {
    let law = prior.law();
    if let LogLaw::Point(w) = law {
        return Ok(-0.5 * (1.0 + w).ln() - 0.5 * s * s / (1.0 + w));
    }
    let f = |u: f64| ln_weight(&law, s, u);
    let (peak, peak_u, lo, hi) = bulk(&f);
    let (v, _) = integrate_bulk(&f, peak, peak_u, lo, hi)?;
    Ok(peak + v.ln())
}

/// `S(t)` from a five-point derivative of `log h`.
pub fn shrinkage_by_derivative(prior: &ShrinkagePrior, t: f64) -> Result<f64> {
    if t == 0.0 {
        return domain("the log-derivative form is undefined at t = 0");
    }
    let h = 1e-2 * t.abs().max(0.1);
    let f = |s: f64| log_marginal(prior, s);
    let d = (-f(t + 2.0 * h)? + 8.0 * f(t + h)? - 8.0 * f(t - h)? + f(t - 2.0 * h)?) / (12.0 * h);
    Ok(-d / t)
}

/// Monte-Carlo estimate of `S(t)` on a grid with common random draws of
/// `v`; returns `(S, standard error)` per grid point.
pub fn shrinkage_monte_carlo(prior: &ShrinkagePrior, t_grid: &[f64], n_draws: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    prior.prior.validate()?;
    if n_draws < 2 {
        return Err(Error::InsufficientData {
            what: "Monte-Carlo draws".into(),
            observed: n_draws,
            needed: 2,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let se2 = prior.se * prior.se;
    let ws: Vec<f64> = (0..n_draws).map(|_| prior.prior.sample_variance(&mut rng) / se2).collect();
    Ok(t_grid
        .par_iter()
        .map(|&t| {
            // ratio estimator sum(a_i) / sum(b_i) with delta-method error
            let mut sa = 0.0;
            let mut sb = 0.0;
            let pairs: Vec<(f64, f64)> = ws
                .iter()
                .map(|&w| {
                    let b = (-0.5 * (1.0 + w).ln() - 0.5 * t * t / (1.0 + w)).exp();
                    let a = b / (1.0 + w);
                    sa += a;
                    sb += b;
                    (a, b)
                })
                .collect();
            let r = sa / sb;
            let mb = sb / n_draws as f64;
            let var = pairs.iter().map(|(a, b)| (a - r * b).powi(2)).sum::<f64>() / (n_draws as f64 - 1.0);
            (r, (var / n_draws as f64).sqrt() / mb)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageProfile {
    pub t_grid: Vec<f64>,
    pub s_values: Vec<f64>,
    pub prior: ShrinkagePrior,
    /// Largest estimated absolute error over the grid.
    pub numerical_error: f64,
}

/// 60 equally spaced points on [0.1, 10].
pub fn default_t_grid() -> Vec<f64> {
    (0..60).map(|i| 0.1 + 9.9 * i as f64 / 59.0).collect()
}

pub fn profile(prior: &ShrinkagePrior, t_grid: &[f64]) -> Result<ShrinkageProfile> {
    if t_grid.is_empty() {
        return config("t grid is empty");
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) || t_grid.iter().any(|t| !t.is_finite()) {
        return config("t grid must be finite and strictly increasing");
    }
    let vals = t_grid
        .par_iter()
        .map(|&t| shrinkage_with_error(prior, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(ShrinkageProfile {
        t_grid: t_grid.to_vec(),
        s_values: vals.iter().map(|v| v.0).collect(),
        prior: *prior,
        numerical_error: vals.iter().map(|v| v.1).fold(0.0, f64::max),
    })
}

/// Level-2 profiles under shape-induced and scale-induced shrinkage, both
/// with prior variance `lambda2 d` for the level-2 coefficient.
pub fn shis_vs_scis(lambda1: f64, lambda2: f64, d: f64, se: f64, t_grid: &[f64]) -> Result<(ShrinkageProfile, ShrinkageProfile)> {
    if !(lambda2 < lambda1) {
        return config(format!("shape-induced shrinkage needs lambda2 < lambda1, got {lambda2} >= {lambda1}"));
    }
    let shis = ShrinkagePrior::new(VariancePrior::Shis { lambda1, lambda2, d }, se)?;
    let scis = ShrinkagePrior::new(VariancePrior::Scis { lambda1, lambda2, d }, se)?;
    Ok((profile(&shis, t_grid)?, profile(&scis, t_grid)?))
}

/// Level-1 profile shared by both models.
pub fn level_one_profile(lambda1: f64, d: f64, se: f64, t_grid: &[f64]) -> Result<ShrinkageProfile> {
    profile(&ShrinkagePrior::new(VariancePrior::matched_ng(lambda1, d), se)?, t_grid)
}

/// Largest absolute difference between two profiles on the same grid,
/// restricted to `t` in `[lo, hi]`.
pub fn sup_gap(a: &ShrinkageProfile, b: &ShrinkageProfile, lo: f64, hi: f64) -> Result<f64> {
    if a.t_grid != b.t_grid {
        return config("profiles use different grids");
    }
    Ok(a.t_grid
        .iter()
        .zip(a.s_values.iter().zip(&b.s_values))
        .filter(|(t, _)| **t >= lo && **t <= hi)
        .map(|(_, (x, y))| (x - y).abs())
        .fold(0.0, f64::max))
}

/// Columns `t, S, prior_id, est_error`; one row per grid point per profile.
pub fn write_profiles_csv(path: &Path, profiles: &[(String, ShrinkageProfile)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "S", "prior_id", "est_error"])?;
    for (id, p) in profiles {
        for (t, s) in p.t_grid.iter().zip(&p.s_values) {
            w.write_record([t.to_string(), s.to_string(), id.clone(), p.numerical_error.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
