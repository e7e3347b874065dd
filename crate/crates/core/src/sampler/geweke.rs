//! Joint-distribution check of the sampler: prior simulation against
//! alternating data simulation and posterior sweeps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{effective_sample_size, Chain, ChainConfig, Model, ModelState};
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct GewekeMoment {
    pub name: String,
    pub prior_mean: f64,
    pub chain_mean: f64,
    pub z: f64,
}

fn summaries(model: &Model, s: &ModelState) -> Vec<(String, f64)> {
    let mut v = vec![("sigma2".to_string(), s.sigma2), ("d".to_string(), s.d)];
    for (g, grp) in model.graph().shape_groups().iter().enumerate() {
        if model.targets().contains(&super::Target::Phi(g)) {
            v.push((grp.name.clone(), s.shapes[g]));
        }
    }
    v.push(("beta[0]".to_string(), s.beta[0]));
    v
}

/// Compare first and second moments under the prior (`n_prior` independent
/// draws) and under the successive-conditional simulator (`n_sweeps`
/// recorded sweeps after `warmup` adaptive ones). Proposal adaptation is
/// frozen once warm-up ends. Needs proper priors on every parameter.
pub fn geweke_test(model: &Model, config: &ChainConfig, n_prior: usize, warmup: usize, n_sweeps: usize) -> Result<Vec<GewekeMoment>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1_000);
    let mut prior: Vec<Vec<f64>> = Vec::new();
    let mut names = Vec::new();
    for _ in 0..n_prior {
        let s = model.sample_prior(&mut rng)?;
        let row = summaries(model, &s);
        if names.is_empty() {
            names = row.iter().map(|(n, _)| n.clone()).collect();
        }
        prior.push(row.into_iter().map(|(_, v)| v).collect());
    }

    let mut cfg = config.clone();
    cfg.n_burn = 0;
    cfg.freeze_adaptation_after = Some(warmup);
    let mut chain = Chain::new(model, &cfg, 0)?;
    chain.state = model.sample_prior(&mut chain.rng)?;
    let mut sc: Vec<Vec<f64>> = Vec::with_capacity(n_sweeps);
    let mut current = model.clone();
    for i in 1..=warmup + n_sweeps {
        let y = current.simulate_response(&chain.state, &mut chain.rng);
        current = current.with_response(y)?;
        current.refresh_residuals(&mut chain.state);
        chain.sweep(&current, &cfg, i)?;
        if i > warmup {
            sc.push(summaries(model, &chain.state).into_iter().map(|(_, v)| v).collect());
        }
    }

    let mut out = Vec::new();
    for (k, name) in names.iter().enumerate() {
        for power in [1, 2] {
            let a: Vec<f64> = prior.iter().map(|r| r[k].powi(power)).collect();
            let b: Vec<f64> = sc.iter().map(|r| r[k].powi(power)).collect();
            let (ma, va) = mean_var(&a);
            let (mb, vb) = mean_var(&b);
            let ess = effective_sample_size(&b);
            let z = (ma - mb) / (va / a.len() as f64 + vb / ess).sqrt();
            out.push(GewekeMoment {
                name: if power == 1 { name.clone() } else { format!("{name}^2") },
                prior_mean: ma,
                chain_mean: mb,
                z,
            });
        }
    }
    Ok(out)
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}
