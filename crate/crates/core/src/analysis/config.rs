//! Run configuration read from TOML.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::design::{DesignSpec, ModelFamily, VarTransform};
use crate::error::{config, Result};
use crate::prior_graph::{
    build_gam_interactions, build_gam_masked, build_independent, build_strong_heredity, build_weak_heredity,
    PriorGraph,
};
use crate::sampler::{ChainConfig, ModelPriors};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseTransform {
    #[default]
    None,
    /// Natural log; the response must be positive.
    Log,
}

impl ResponseTransform {
    pub fn apply(self, y: f64) -> Option<f64> {
        match self {
            ResponseTransform::None => Some(y),
            ResponseTransform::Log => (y > 0.0).then(|| y.ln()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// CSV with a header row.
    pub path: PathBuf,
    pub response: String,
    /// Predictor columns in order; defaults to every other column.
    #[serde(default)]
    pub predictors: Option<Vec<String>>,
    #[serde(default)]
    pub response_transform: ResponseTransform,
    /// Two-valued predictors that get only a linear term.
    #[serde(default)]
    pub binary: Vec<String>,
}

fn default_knots() -> usize {
    10
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub family: ModelFamily,
    #[serde(default = "default_knots")]
    pub knots: usize,
    /// Transform applied to every predictor unless overridden.
    #[serde(default)]
    pub transform: VarTransform,
    #[serde(default)]
    pub transform_overrides: BTreeMap<String, VarTransform>,
    #[serde(default = "yes")]
    pub normalize: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorConstructor {
    StrongHeredity,
    WeakHeredity,
    Gam,
    GamInteractions,
    /// One shape shared by every coefficient (normal-gamma-gamma baseline).
    Independent,
}

impl PriorConstructor {
    pub fn compatible_with(self, family: ModelFamily) -> bool {
        use PriorConstructor::*;
        match family {
            ModelFamily::LinearInteractions => matches!(self, StrongHeredity | WeakHeredity | Independent),
            ModelFamily::Gam => matches!(self, Gam | Independent),
            ModelFamily::GamInteractions => matches!(self, GamInteractions | Independent),
        }
    }
}

fn d_lambda1() -> f64 {
    1.0
}
fn d_lambda2() -> f64 {
    0.5
}
fn d_lambda3() -> f64 {
    0.1
}
fn d_lambda4() -> f64 {
    0.01
}
fn d_tail() -> f64 {
    3.0
}

/// Constructor plus starting (or fixed) values of its shape groups.
/// `lambda3` and `lambda4` apply to every group of that family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub constructor: PriorConstructor,
    #[serde(default = "d_lambda1")]
    pub lambda1: f64,
    #[serde(default = "d_lambda2")]
    pub lambda2: f64,
    #[serde(default = "d_lambda3")]
    pub lambda3: f64,
    #[serde(default = "d_lambda4")]
    pub lambda4: f64,
    /// Tail parameter of every gamma-gamma latent scale.
    #[serde(default = "d_tail")]
    pub c: f64,
}

fn d_folds() -> usize {
    5
}

fn cv_chain_default() -> ChainConfig {
    ChainConfig {
        n_iter: 50_000,
        n_burn: 10_000,
        thin: 10,
        ..ChainConfig::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    #[serde(default = "d_folds")]
    pub folds: usize,
    /// Seed of the fold shuffle.
    #[serde(default = "d_seed")]
    pub seed: u64,
    #[serde(default = "cv_chain_default")]
    pub chain: ChainConfig,
}

fn d_seed() -> u64 {
    1
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: d_folds(),
            seed: d_seed(),
            chain: cv_chain_default(),
        }
    }
}

fn d_out() -> PathBuf {
    PathBuf::from("out")
}
fn d_grid() -> usize {
    101
}
fn d_surface() -> usize {
    21
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Relative paths in a config file are resolved against its directory;
    /// the `--out` flag is taken as given.
    #[serde(default = "d_out")]
    pub dir: PathBuf,
    /// Points on [0, 1] for main-effect curves.
    #[serde(default = "d_grid")]
    pub effect_grid: usize,
    /// Points per axis for interaction surfaces.
    #[serde(default = "d_surface")]
    pub surface_grid: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: d_out(),
            effect_grid: d_grid(),
            surface_grid: d_surface(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub design: DesignConfig,
    pub prior: PriorConfig,
    #[serde(default)]
    pub priors: ModelPriors,
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default)]
    pub cv: CvConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse a file and resolve relative data and output paths against its
    /// directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(dir) = path.parent() {
            for p in [&mut cfg.data.path, &mut cfg.output.dir] {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Checks that do not need the data.
    pub fn validate(&self) -> Result<()> {
        if !self.prior.constructor.compatible_with(self.design.family) {
            return config(format!(
                "prior constructor {:?} does not fit model family {:?}",
                self.prior.constructor, self.design.family
            ));
        }
        let p = &self.prior;
        for (name, v) in [("lambda1", p.lambda1), ("lambda2", p.lambda2), ("lambda3", p.lambda3), ("lambda4", p.lambda4)] {
            if !(v > 0.0 && v.is_finite()) {
                return config(format!("{name} must be positive, got {v}"));
            }
        }
        if !(p.c > 1.0 && p.c.is_finite()) {
            return config(format!("tail parameter c must exceed 1 for unit-mean scales, got {}", p.c));
        }
        self.chain.validate()?;
        self.cv.chain.validate()?;
        if self.cv.folds < 2 {
            return config(format!("cross-validation needs at least 2 folds, got {}", self.cv.folds));
        }
        if self.output.effect_grid < 2 || self.output.surface_grid < 2 {
            return config("effect grids need at least 2 points");
        }
        self.priors.d.validate()?;
        Ok(())
    }

    /// Design recipe for predictors `names`; `binary` are indices into `names`.
    pub fn design_spec(&self, names: &[String], binary: &[usize]) -> Result<DesignSpec> {
        for key in self.design.transform_overrides.keys() {
            if !names.contains(key) {
                return config(format!("transform override for unknown predictor '{key}'"));
            }
        }
        let transforms = names
            .iter()
            .map(|n| self.design.transform_overrides.get(n).copied().unwrap_or(self.design.transform))
            .collect();
        let spec = DesignSpec {
            family: self.design.family,
            knots: self.design.knots,
            transforms,
            normalize: self.design.normalize,
            binary_columns: binary.to_vec(),
        };
        spec.validate(names.len())?;
        Ok(spec)
    }

    /// Prior graph matching the design built from `spec` over `p` predictors
    /// with `n_cols` design columns.
    pub fn build_graph(&self, spec: &DesignSpec, p: usize, n_cols: usize) -> Result<PriorGraph> {
        let pc = &self.prior;
        let k = spec.knots;
        let graph = match pc.constructor {
            PriorConstructor::StrongHeredity => build_strong_heredity(p, pc.lambda1, pc.lambda2, pc.c)?,
            PriorConstructor::WeakHeredity => build_weak_heredity(p, pc.lambda1, pc.lambda2, pc.c)?,
            PriorConstructor::Gam => build_gam_masked(p, k, pc.lambda1, &vec![pc.lambda2; p], pc.c, &spec.has_basis(p))?,
            PriorConstructor::GamInteractions => build_gam_interactions(
                p,
                k,
                pc.lambda1,
                pc.lambda2,
                &vec![pc.lambda3; p],
                &vec![pc.lambda4; p * (p - 1) / 2],
                pc.c,
            )?,
            PriorConstructor::Independent => build_independent(n_cols, pc.lambda1, pc.c)?,
        };
        if graph.coeff_map().len() != n_cols {
            return config(format!(
                "prior graph covers {} coefficients but the design has {n_cols} columns",
                graph.coeff_map().len()
            ));
        }
        Ok(graph)
    }

    /// Same run with the single-shape baseline prior. Shape hyperpriors are
    /// reduced to the one applying to `lambda1`.
    pub fn independent_baseline(&self) -> Self {
        let mut cfg = self.clone();
        cfg.prior.constructor = PriorConstructor::Independent;
        cfg.priors.shapes.retain(|k, _| k == "lambda1");
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[data]
path = "x.csv"
response = "y"

[design]
family = "gam"

[prior]
constructor = "gam"
"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.design.knots, 10);
        assert!(cfg.design.normalize);
        assert_eq!(cfg.cv.folds, 5);
        assert_eq!(cfg.cv.chain.n_iter, 50_000);
        assert_eq!(cfg.output.effect_grid, 101);
        assert_eq!(cfg.chain, ChainConfig::default());
    }

    #[test]
    fn incompatible_constructor_rejected() {
        let text = MINIMAL.replace("constructor = \"gam\"", "constructor = \"strong_heredity\"");
        let err = RunConfig::from_toml_str(&text).unwrap_err();
        assert_eq!(err.kind(), "config");
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = format!("{MINIMAL}\n[chain]\nn_iterations = 5\n");
        assert!(RunConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn round_trip() {
        let cfg = RunConfig::from_toml_str(MINIMAL).unwrap();
        let again = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn overrides_must_name_predictors() {
        let mut cfg = RunConfig::from_toml_str(MINIMAL).unwrap();
        cfg.design.transform_overrides.insert("zz".into(), VarTransform::Log1p);
        let names = vec!["a".to_string()];
        assert!(cfg.design_spec(&names, &[]).is_err());
        cfg.design.transform_overrides.clear();
        cfg.design.transform_overrides.insert("a".into(), VarTransform::Log1p);
        assert_eq!(cfg.design_spec(&names, &[]).unwrap().transforms, vec![VarTransform::Log1p]);
    }
}
