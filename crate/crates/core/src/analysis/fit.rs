//! Full-data fit: design, sampling, and the summary tables.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::data::{ingest_csv, Dataset};
use super::summary::{posterior_summary, PosteriorSummary};
use crate::design::{build_design, knots, ColumnRole, DesignMatrix, DesignSpec, Preprocessor};
use crate::error::{Error, Result};
use crate::sampler::{run_chain, ChainConfig, Model, SampleStore, Scalar};

/// Below this design-scale value the ratio `f(x) / x` is not reported.
pub const RATIO_CUTOFF: f64 = 0.01;

/// Everything needed to sample from one training set.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub spec: DesignSpec,
    pub preprocessor: Preprocessor,
    pub design: DesignMatrix,
    /// Predictors after transform and scaling.
    pub inputs: DMatrix<f64>,
    pub model: Model,
    pub warnings: Vec<String>,
}

/// Build design and model from `data`; scaling is fitted on `data` alone.
pub fn prepare(cfg: &RunConfig, data: &Dataset) -> Result<Prepared> {
    let spec = cfg.design_spec(&data.predictor_names, &data.binary)?;
    let preprocessor = Preprocessor::fit(&data.x, &spec, &data.predictor_names)?;
    let inputs = preprocessor.apply(&data.x)?;
    let design = build_design(&inputs, &spec)?;
    let graph = cfg.build_graph(&spec, data.p(), design.ncols())?;
    let mut warnings = data.warnings.clone();
    warnings.extend(graph.warnings().iter().cloned());
    let model = Model::new(graph, design.values.clone(), data.y.clone(), cfg.priors.clone())?;
    Ok(Prepared {
        spec,
        preprocessor,
        design,
        inputs,
        model,
        warnings,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedSummary {
    pub name: String,
    #[serde(flatten)]
    pub summary: PosteriorSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub node: String,
    pub level: usize,
    #[serde(flatten)]
    pub summary: PosteriorSummary,
}

/// One grid point of a main-effect curve.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectPoint {
    pub variable: String,
    /// Design-scale input.
    pub u: f64,
    /// Same point on the original scale.
    pub x: f64,
    pub f: PosteriorSummary,
    /// `f(u) / u`, only for `u >= RATIO_CUTOFF`.
    pub ratio: Option<PosteriorSummary>,
}

/// One grid point of a pairwise interaction surface (interaction terms only).
#[derive(Clone, Debug, PartialEq)]
pub struct SurfacePoint {
    pub first: String,
    pub second: String,
    pub u: f64,
    pub v: f64,
    pub f: PosteriorSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub n: usize,
    pub predictors: Vec<String>,
    pub n_coef: usize,
    pub n_draws: usize,
    pub hyperparameters: Vec<NamedSummary>,
    pub effective_sample_size: Vec<(String, f64)>,
    pub acceptance_min: f64,
    pub acceptance_max: f64,
    pub swap_acceptance: Vec<f64>,
    pub inverse_temperatures: Vec<f64>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct FitOutput {
    pub config: RunConfig,
    pub store: SampleStore,
    pub report: FitReport,
    pub psi: Vec<NodeSummary>,
    pub effects: Vec<EffectPoint>,
    pub surfaces: Vec<SurfacePoint>,
}

impl FitOutput {
    pub fn hyper(&self, name: &str) -> Option<&PosteriorSummary> {
        self.report.hyperparameters.iter().find(|h| h.name == name).map(|h| &h.summary)
    }

    pub fn psi_node(&self, node: &str) -> Option<&NodeSummary> {
        self.psi.iter().find(|p| p.node == node)
    }
}

/// Read the data named in `cfg`, sample with `cfg.chain`, and summarise.
pub fn fit(cfg: &RunConfig) -> Result<FitOutput> {
    cfg.validate()?;
    let data = ingest_csv(&cfg.data.path, &cfg.data)?;
    fit_dataset(cfg, &data, &cfg.chain)
}

pub fn fit_dataset(cfg: &RunConfig, data: &Dataset, chain: &ChainConfig) -> Result<FitOutput> {
    let prep = prepare(cfg, data)?;
    let store = run_chain(&prep.model, chain)?;
    summarise(cfg, data, &prep, store)
}

fn grid(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect()
}

fn hinge(u: f64, tau: Option<f64>) -> f64 {
    match tau {
        None => u,
        Some(t) => (u - t).max(0.0),
    }
}

fn input_range(prep: &Prepared, j: usize) -> (f64, f64) {
    if prep.spec.normalize {
        (0.0, 1.0)
    } else {
        let col = prep.inputs.column(j);
        (col.min(), col.max())
    }
}

fn summarise(cfg: &RunConfig, data: &Dataset, prep: &Prepared, store: SampleStore) -> Result<FitOutput> {
    let model = &prep.model;
    let mut hyper = Vec::new();
    let mut push = |name: String, s: Scalar| -> Result<()> {
        hyper.push(NamedSummary {
            name,
            summary: posterior_summary(&store.series(s))?,
        });
        Ok(())
    };
    push("alpha".into(), Scalar::Alpha)?;
    push("sigma2".into(), Scalar::Sigma2)?;
    push("d".into(), Scalar::D)?;
    for (g, name) in store.group_names.iter().enumerate() {
        push(name.clone(), Scalar::Shape(g))?;
    }

    let mut ess = vec![
        ("sigma2".to_string(), store.ess(Scalar::Sigma2)),
        ("d".to_string(), store.ess(Scalar::D)),
    ];
    for (g, name) in store.group_names.iter().enumerate() {
        ess.push((name.clone(), store.ess(Scalar::Shape(g))));
    }

    let psi = model
        .graph()
        .nodes()
        .iter()
        .map(|node| {
            Ok(NodeSummary {
                node: node.name.clone(),
                level: node.level,
                summary: posterior_summary(&store.series(Scalar::Psi(node.id)))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let taus = knots(prep.spec.knots.max(2));
    let roles = &prep.design.column_roles;
    let names = &data.predictor_names;
    let mut effects = Vec::new();
    for (j, name) in names.iter().enumerate() {
        let terms: Vec<(usize, Option<f64>)> = roles
            .iter()
            .enumerate()
            .filter_map(|(c, r)| match *r {
                ColumnRole::MainLinear { var } if var == j => Some((c, None)),
                ColumnRole::MainBasis { var, knot } if var == j => Some((c, Some(taus[knot]))),
                _ => None,
            })
            .collect();
        let (lo, hi) = input_range(prep, j);
        for u in grid(lo, hi, cfg.output.effect_grid) {
            let f: Vec<f64> = store
                .draws
                .iter()
                .map(|d| terms.iter().map(|&(c, t)| d.beta[c] * hinge(u, t)).sum())
                .collect();
            let ratio = if u >= RATIO_CUTOFF {
                let r: Vec<f64> = f.iter().map(|v| v / u).collect();
                Some(posterior_summary(&r)?)
            } else {
                None
            };
            effects.push(EffectPoint {
                variable: name.clone(),
                u,
                x: prep.preprocessor.unscale(j, u),
                f: posterior_summary(&f)?,
                ratio,
            });
        }
    }

    let mut surfaces = Vec::new();
    let p = names.len();
    for j in 0..p {
        for k in 0..j {
            let terms: Vec<(usize, Option<(f64, f64)>)> = roles
                .iter()
                .enumerate()
                .filter_map(|(c, r)| match *r {
                    ColumnRole::InteractionLinear { j: a, k: b } if (a, b) == (j, k) => Some((c, None)),
                    ColumnRole::InteractionBasis { j: a, k: b, l, m } if (a, b) == (j, k) => {
                        Some((c, Some((taus[l], taus[m]))))
                    }
                    _ => None,
                })
                .collect();
            if terms.is_empty() {
                continue;
            }
            let (lo_j, hi_j) = input_range(prep, j);
            let (lo_k, hi_k) = input_range(prep, k);
            for u in grid(lo_j, hi_j, cfg.output.surface_grid) {
                for v in grid(lo_k, hi_k, cfg.output.surface_grid) {
                    let f: Vec<f64> = store
                        .draws
                        .iter()
                        .map(|d| {
                            terms
                                .iter()
                                .map(|&(c, t)| {
                                    let basis = match t {
                                        None => u * v,
                                        Some((tl, tm)) => (u - tl).max(0.0) * (v - tm).max(0.0),
                                    };
                                    d.beta[c] * basis
                                })
                                .sum()
                        })
                        .collect();
                    surfaces.push(SurfacePoint {
                        first: names[j].clone(),
                        second: names[k].clone(),
                        u,
                        v,
                        f: posterior_summary(&f)?,
                    });
                }
            }
        }
    }

    let rates: Vec<f64> = store.acceptance.iter().map(|a| a.rate).collect();
    let report = FitReport {
        n: data.n(),
        predictors: names.clone(),
        n_coef: model.n_coef(),
        n_draws: store.len(),
        hyperparameters: hyper,
        effective_sample_size: ess,
        acceptance_min: rates.iter().copied().fold(f64::INFINITY, f64::min),
        acceptance_max: rates.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        swap_acceptance: store.swap_acceptance.clone(),
        inverse_temperatures: store.inverse_temperatures.clone(),
        warnings: prep.warnings.clone(),
    };
    Ok(FitOutput {
        config: cfg.clone(),
        store,
        report,
        psi,
        effects,
        surfaces,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn summary_cells(s: &PosteriorSummary) -> [String; 3] {
    [s.median.to_string(), s.ci_low.to_string(), s.ci_high.to_string()]
}

/// Write the run's files into `dir` and return their paths.
pub fn write_fit(out: &FitOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut path = |name: &str| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };

    out.store.write_csv(&path("samples.csv"))?;
    out.store.write_manifest(&path("manifest.json"))?;
    fs::write(path("config.toml"), out.config.to_toml_string()?)?;
    fs::write(path("fit_summary.json"), serde_json::to_string_pretty(&out.report)?)?;

    let mut w = csv::Writer::from_path(path("hyperparameters.csv"))?;
    w.write_record(["quantity", "median", "ci_low", "ci_high"])?;
    for h in &out.report.hyperparameters {
        let [m, l, u] = summary_cells(&h.summary);
        w.write_record([h.name.as_str(), &m, &l, &u])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(path("psi_summary.csv"))?;
    w.write_record(["node", "level", "median", "ci_low", "ci_high"])?;
    for p in &out.psi {
        let [m, l, u] = summary_cells(&p.summary);
        w.write_record([p.node.as_str(), &p.level.to_string(), &m, &l, &u])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(path("effects.csv"))?;
    w.write_record([
        "variable", "u", "x", "f_median", "f_low", "f_high", "ratio_median", "ratio_low", "ratio_high",
    ])?;
    for e in &out.effects {
        let [m, l, u] = summary_cells(&e.f);
        w.write_record([
            e.variable.clone(),
            e.u.to_string(),
            e.x.to_string(),
            m,
            l,
            u,
            opt(e.ratio.map(|r| r.median)),
            opt(e.ratio.map(|r| r.ci_low)),
            opt(e.ratio.map(|r| r.ci_high)),
        ])?;
    }
    w.flush()?;

    if !out.surfaces.is_empty() {
        let mut w = csv::Writer::from_path(path("interactions.csv"))?;
        w.write_record(["first", "second", "u", "v", "f_median", "f_low", "f_high"])?;
        for s in &out.surfaces {
            let [m, l, h] = summary_cells(&s.f);
            w.write_record([s.first.clone(), s.second.clone(), s.u.to_string(), s.v.to_string(), m, l, h])?;
        }
        w.flush()?;
    }

    let mut w = csv::Writer::from_path(path("acceptance.csv"))?;
    w.write_record(["target", "rate", "log_proposal_var"])?;
    for a in &out.store.acceptance {
        w.write_record([a.name.clone(), a.rate.to_string(), a.log_proposal_var.to_string()])?;
    }
    w.flush()?;
    Ok(written)
}

/// Summarise every column of a samples file written by [`write_fit`].
pub fn summarize_samples(path: &Path) -> Result<Vec<NamedSummary>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::Data(format!("non-numeric value '{cell}' at row {}, column '{}'", r + 1, header[c])))?;
            cols[c].push(v);
        }
    }
    header
        .into_iter()
        .zip(cols)
        .filter(|(h, _)| h != "iteration")
        .map(|(name, c)| Ok(NamedSummary { name, summary: posterior_summary(&c)? }))
        .collect()
}

pub fn write_summaries(rows: &[NamedSummary], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["quantity", "median", "ci_low", "ci_high"])?;
    for h in rows {
        let [m, l, u] = summary_cells(&h.summary);
        w.write_record([h.name.as_str(), &m, &l, &u])?;
    }
    w.flush()?;
    Ok(())
}
