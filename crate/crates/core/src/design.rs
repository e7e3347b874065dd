//! Design matrices for the three model families and the variable
//! transforms applied before expansion.
//!
//! Column order always equals the node order of the matching prior-graph
//! constructor, so the column -> node map is the identity.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    /// Main effects plus all pairwise products.
    LinearInteractions,
    /// Linear term plus hinge basis per continuous variable.
    Gam,
    /// Additive model plus tensor-product hinge surfaces for every pair.
    GamInteractions,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarTransform {
    #[default]
    None,
    /// `log(1 + x)`; needs `x > -1`.
    Log1p,
}

impl VarTransform {
    pub fn apply(self, x: f64) -> Result<f64> {
        match self {
            VarTransform::None => Ok(x),
            VarTransform::Log1p => {
                if x <= -1.0 {
                    return Err(Error::Domain(format!("log1p transform needs x > -1, got {x}")));
                }
                Ok(x.ln_1p())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub family: ModelFamily,
    /// Number of knots K.
    pub knots: usize,
    /// Per-variable transform.
    pub transforms: Vec<VarTransform>,
    /// Min-max scale every variable to [0, 1] on the training data.
    pub normalize: bool,
    /// Variables that only get a linear column.
    pub binary_columns: Vec<usize>,
}

impl DesignSpec {
    pub fn validate(&self, p: usize) -> Result<()> {
        if self.transforms.len() != p {
            return config(format!("{} transforms given for {p} variables", self.transforms.len()));
        }
        if matches!(self.family, ModelFamily::Gam | ModelFamily::GamInteractions) && self.knots < 2 {
            return config(format!("spline families need K >= 2, got {}", self.knots));
        }
        if let Some(&b) = self.binary_columns.iter().find(|&&b| b >= p) {
            return config(format!("binary column index {b} out of range for {p} variables"));
        }
        if self.family == ModelFamily::GamInteractions && !self.binary_columns.is_empty() {
            return config("binary variables are not supported in the interaction additive model");
        }
        if self.family != ModelFamily::Gam && p < 2 {
            return config(format!("interaction families need p >= 2, got {p}"));
        }
        Ok(())
    }

    pub fn has_basis(&self, p: usize) -> Vec<bool> {
        (0..p).map(|j| !self.binary_columns.contains(&j)).collect()
    }
}

/// Observed range used for min-max scaling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    /// `(x - min) / (max - min)`; values outside the training range are not clamped.
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn invert(&self, u: f64) -> f64 {
        self.min + u * (self.max - self.min)
    }
}

/// Scale a column to [0, 1]; returns the scaled values and the range used.
pub fn normalize_minmax(x: &[f64]) -> Result<(Vec<f64>, MinMax)> {
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return Err(Error::DegenerateColumn(format!("range [{min}, {max}]")));
    }
    let mm = MinMax { min, max };
    let mut out: Vec<f64> = x.iter().map(|&v| mm.apply(v)).collect();
    // pin the extremes so training data hits 0 and 1 exactly
    for (o, &v) in out.iter_mut().zip(x) {
        if v == min {
            *o = 0.0;
        } else if v == max {
            *o = 1.0;
        }
    }
    Ok((out, mm))
}

/// Knot `tau_k = (k-1)/(K-1)`, k = 1..K.
pub fn knots(k: usize) -> Vec<f64> {
    (0..k).map(|i| i as f64 / (k - 1) as f64).collect()
}

/// Hinge basis `((x - tau_k)_+ for k = 1..K)`.
pub fn spline_basis(x: f64, k: usize) -> Vec<f64> {
    knots(k).into_iter().map(|t| (x - t).max(0.0)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum ColumnRole {
    MainLinear { var: usize },
    InteractionLinear { j: usize, k: usize },
    MainBasis { var: usize, knot: usize },
    InteractionBasis { j: usize, k: usize, l: usize, m: usize },
}

#[derive(Clone, Debug)]
pub struct DesignMatrix {
    pub values: DMatrix<f64>,
    pub column_roles: Vec<ColumnRole>,
    pub node_ids: Vec<usize>,
}

impl DesignMatrix {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    fn from_columns(n: usize, cols: Vec<(ColumnRole, Vec<f64>)>) -> Self {
        let p = cols.len();
        let mut values = DMatrix::zeros(n, p);
        let mut roles = Vec::with_capacity(p);
        for (c, (role, col)) in cols.into_iter().enumerate() {
            values.column_mut(c).copy_from_slice(&col);
            roles.push(role);
        }
        DesignMatrix {
            values,
            column_roles: roles,
            node_ids: (0..p).collect(),
        }
    }
}

fn column(x: &DMatrix<f64>, j: usize) -> Vec<f64> {
    x.column(j).iter().copied().collect()
}

fn hinge(col: &[f64], tau: f64) -> Vec<f64> {
    col.iter().map(|&v| (v - tau).max(0.0)).collect()
}

/// Mains followed by products `X_j X_k` for `k < j`.
pub fn build_linear_interactions(x: &DMatrix<f64>) -> Result<DesignMatrix> {
    let (n, p) = x.shape();
    if p < 2 {
        return config(format!("interaction design needs p >= 2, got {p}"));
    }
    let mut cols = Vec::with_capacity(p + p * (p - 1) / 2);
    for j in 0..p {
        cols.push((ColumnRole::MainLinear { var: j }, column(x, j)));
    }
    for j in 0..p {
        for k in 0..j {
            let prod = x.column(j).iter().zip(x.column(k).iter()).map(|(a, b)| a * b).collect();
            cols.push((ColumnRole::InteractionLinear { j, k }, prod));
        }
    }
    Ok(DesignMatrix::from_columns(n, cols))
}

/// Linear column for every variable, then `K` hinge columns for each
/// non-binary variable.
pub fn build_gam_design(x: &DMatrix<f64>, k: usize, binary_columns: &[usize]) -> Result<DesignMatrix> {
    let (n, p) = x.shape();
    if k < 2 {
        return config(format!("spline basis needs K >= 2, got {k}"));
    }
    let taus = knots(k);
    let mut cols = Vec::new();
    for j in 0..p {
        cols.push((ColumnRole::MainLinear { var: j }, column(x, j)));
    }
    for j in 0..p {
        if binary_columns.contains(&j) {
            continue;
        }
        let xj = column(x, j);
        for (l, &t) in taus.iter().enumerate() {
            cols.push((ColumnRole::MainBasis { var: j, knot: l }, hinge(&xj, t)));
        }
    }
    Ok(DesignMatrix::from_columns(n, cols))
}

/// Mains, pairwise products, main hinge bases, then for every pair the
/// `K x K` products of hinges.
pub fn build_gam_interaction_design(x: &DMatrix<f64>, k: usize) -> Result<DesignMatrix> {
    let (n, p) = x.shape();
    if p < 2 || k < 2 {
        return config(format!("interaction additive design needs p >= 2 and K >= 2, got p={p}, K={k}"));
    }
    let taus = knots(k);
    let hinges: Vec<Vec<Vec<f64>>> = (0..p)
        .map(|j| {
            let xj = column(x, j);
            taus.iter().map(|&t| hinge(&xj, t)).collect()
        })
        .collect();
    let mut cols = Vec::with_capacity(p + p * (p - 1) / 2 + p * k + p * (p - 1) / 2 * k * k);
    for j in 0..p {
        cols.push((ColumnRole::MainLinear { var: j }, column(x, j)));
    }
    for j in 0..p {
        for kk in 0..j {
            let prod = x.column(j).iter().zip(x.column(kk).iter()).map(|(a, b)| a * b).collect();
            cols.push((ColumnRole::InteractionLinear { j, k: kk }, prod));
        }
    }
    for j in 0..p {
        for l in 0..k {
            cols.push((ColumnRole::MainBasis { var: j, knot: l }, hinges[j][l].clone()));
        }
    }
    for j in 0..p {
        for kk in 0..j {
            for l in 0..k {
                for m in 0..k {
                    let prod = hinges[j][l].iter().zip(&hinges[kk][m]).map(|(a, b)| a * b).collect();
                    cols.push((ColumnRole::InteractionBasis { j, k: kk, l, m }, prod));
                }
            }
        }
    }
    Ok(DesignMatrix::from_columns(n, cols))
}

/// Transform + scaling fitted on training rows and reusable on test rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub transforms: Vec<VarTransform>,
    pub ranges: Option<Vec<MinMax>>,
}

impl Preprocessor {
    /// Fit on raw training predictors (n x p).
    pub fn fit(raw: &DMatrix<f64>, spec: &DesignSpec, names: &[String]) -> Result<Self> {
        let p = raw.ncols();
        spec.validate(p)?;
        let transformed = apply_transforms(raw, &spec.transforms)?;
        let ranges = if spec.normalize {
            let mut r = Vec::with_capacity(p);
            for j in 0..p {
                let (_, mm) = normalize_minmax(&column(&transformed, j)).map_err(|_| {
                    Error::DegenerateColumn(names.get(j).cloned().unwrap_or_else(|| format!("x{j}")))
                })?;
                r.push(mm);
            }
            Some(r)
        } else {
            None
        };
        Ok(Self {
            transforms: spec.transforms.clone(),
            ranges,
        })
    }

    pub fn apply(&self, raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut x = apply_transforms(raw, &self.transforms)?;
        if let Some(ranges) = &self.ranges {
            for (j, mm) in ranges.iter().enumerate() {
                for v in x.column_mut(j).iter_mut() {
                    let orig = *v;
                    *v = if orig == mm.min {
                        0.0
                    } else if orig == mm.max {
                        1.0
                    } else {
                        mm.apply(orig)
                    };
                }
            }
        }
        Ok(x)
    }

    /// Map a point of the scaled axis back to the raw variable scale.
    pub fn unscale(&self, var: usize, u: f64) -> f64 {
        let t = match &self.ranges {
            Some(r) => r[var].invert(u),
            None => u,
        };
        match self.transforms[var] {
            VarTransform::None => t,
            VarTransform::Log1p => t.exp_m1(),
        }
    }
}

fn apply_transforms(raw: &DMatrix<f64>, transforms: &[VarTransform]) -> Result<DMatrix<f64>> {
    let mut x = raw.clone();
    for (j, t) in transforms.iter().enumerate() {
        for v in x.column_mut(j).iter_mut() {
            *v = t.apply(*v)?;
        }
    }
    Ok(x)
}

/// Build the design for a family from already-preprocessed predictors.
pub fn build_design(x: &DMatrix<f64>, spec: &DesignSpec) -> Result<DesignMatrix> {
    spec.validate(x.ncols())?;
    match spec.family {
        ModelFamily::LinearInteractions => build_linear_interactions(x),
        ModelFamily::Gam => build_gam_design(x, spec.knots, &spec.binary_columns),
        ModelFamily::GamInteractions => build_gam_interaction_design(x, spec.knots),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior_graph::{build_gam_interactions, build_gam_masked, build_strong_heredity};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn minmax_basic() {
        let (v, mm) = normalize_minmax(&[2.0, 4.0, 6.0]).unwrap();
        assert_eq!(v, vec![0.0, 0.5, 1.0]);
        assert_eq!(mm.apply(1.0), -0.25);
        let (v, _) = normalize_minmax(&[0.0, 0.25, 1.0]).unwrap();
        assert_eq!(v, vec![0.0, 0.25, 1.0]);
        assert!(matches!(normalize_minmax(&[3.0, 3.0]), Err(Error::DegenerateColumn(_))));
    }

    #[test]
    fn minmax_hits_exact_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..57).map(|_| rng.random::<f64>() * 13.7 - 2.1).collect();
        let (v, _) = normalize_minmax(&x).unwrap();
        assert_eq!(v.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
        assert_eq!(v.iter().copied().fold(f64::NEG_INFINITY, f64::max), 1.0);
    }

    #[test]
    fn hinge_basis_values() {
        assert!(spline_basis(0.0, 7).iter().all(|&v| v == 0.0));
        assert_eq!(spline_basis(1.0, 3), vec![1.0, 0.5, 0.0]);
        let b = spline_basis(0.3, 60);
        for (k, v) in b.iter().enumerate() {
            assert_eq!(*v, (0.3 - k as f64 / 59.0).max(0.0));
        }
    }

    #[test]
    fn linear_interaction_columns() {
        let x = DMatrix::from_row_slice(1, 2, &[3.0, 5.0]);
        let d = build_linear_interactions(&x).unwrap();
        assert_eq!(d.values.row(0).iter().copied().collect::<Vec<_>>(), vec![3.0, 5.0, 15.0]);
        let x8 = DMatrix::from_element(4, 8, 0.5);
        let d8 = build_linear_interactions(&x8).unwrap();
        assert_eq!(d8.ncols(), 36);
        let g = build_strong_heredity(8, 1.0, 0.5, 3.0).unwrap();
        for (c, role) in d8.column_roles.iter().enumerate() {
            let node = &g.nodes()[d8.node_ids[c]];
            match role {
                ColumnRole::MainLinear { var } => assert_eq!(node.name, format!("main[{var}]")),
                ColumnRole::InteractionLinear { j, k } => assert_eq!(node.name, format!("int[{j},{k}]")),
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn gam_counts_and_alignment() {
        let x = DMatrix::from_fn(10, 8, |i, j| ((i + j) % 5) as f64 / 4.0);
        let d = build_gam_design(&x, 60, &[4]).unwrap();
        assert_eq!(d.ncols(), 8 + 7 * 60);
        let mut has = vec![true; 8];
        has[4] = false;
        let g = build_gam_masked(8, 60, 1.0, &[0.1; 8], 3.0, &has).unwrap();
        assert_eq!(g.len(), d.ncols());
        for (c, role) in d.column_roles.iter().enumerate() {
            let node = &g.nodes()[d.node_ids[c]];
            match role {
                ColumnRole::MainLinear { var } => assert_eq!(node.name, format!("var[{var}]")),
                ColumnRole::MainBasis { var, knot } => assert_eq!(node.name, format!("basis[{var},{knot}]")),
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn gam_interaction_counts_and_alignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = DMatrix::from_fn(12, 5, |_, _| rng.random::<f64>());
        let d = build_gam_interaction_design(&x, 10).unwrap();
        assert_eq!(d.ncols(), 5 + 50 + 10 + 1000);
        let g = build_gam_interactions(5, 10, 1.0, 0.5, &[0.1; 5], &[0.01; 10], 3.0).unwrap();
        assert_eq!(g.len(), d.ncols());
        let mut seen = vec![false; g.len()];
        for (c, role) in d.column_roles.iter().enumerate() {
            let id = d.node_ids[c];
            assert!(!seen[id]);
            seen[id] = true;
            let name = &g.nodes()[id].name;
            let expect = match role {
                ColumnRole::MainLinear { var } => format!("main[{var}]"),
                ColumnRole::InteractionLinear { j, k } => format!("int[{j},{k}]"),
                ColumnRole::MainBasis { var, knot } => format!("main_basis[{var},{knot}]"),
                ColumnRole::InteractionBasis { j, k, l, m } => format!("int_basis[{j},{k},{l},{m}]"),
            };
            assert_eq!(name, &expect);
        }
    }

    #[test]
    fn interaction_basis_vanishes_at_zero() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 0.7, 0.4, 0.0]);
        let d = build_gam_interaction_design(&x, 4).unwrap();
        for (c, role) in d.column_roles.iter().enumerate() {
            if let ColumnRole::InteractionBasis { .. } = role {
                assert_eq!(d.values[(0, c)], 0.0);
                assert_eq!(d.values[(1, c)], 0.0);
            }
        }
    }

    #[test]
    fn zero_spline_coefficients_reduce_to_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(20, 3, |_, _| rng.random::<f64>());
        let lin = build_linear_interactions(&x).unwrap();
        let full = build_gam_interaction_design(&x, 5).unwrap();
        let beta_lin: Vec<f64> = (0..lin.ncols()).map(|i| 0.3 * i as f64 - 0.5).collect();
        let mut beta_full = vec![0.0; full.ncols()];
        beta_full[..lin.ncols()].copy_from_slice(&beta_lin);
        let a = &lin.values * nalgebra::DVector::from_vec(beta_lin);
        let b = &full.values * nalgebra::DVector::from_vec(beta_full);
        assert!((a - b).amax() < 1e-15);
    }

    #[test]
    fn hinges_reproduce_piecewise_linear_functions() {
        let k = 8;
        let taus = knots(k);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5 {
            // random values at the knots define the function
            let vals: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let f = |x: f64| {
                let seg = ((x * (k - 1) as f64).floor() as usize).min(k - 2);
                let w = (x - taus[seg]) / (taus[seg + 1] - taus[seg]);
                vals[seg] * (1.0 - w) + vals[seg + 1] * w
            };
            let xs: Vec<f64> = (0..200).map(|i| i as f64 / 199.0).collect();
            let xm = DMatrix::from_column_slice(200, 1, &xs);
            let d = build_gam_design(&xm, k, &[]).unwrap();
            // intercept is separate in the model; add it here for the fit
            let design = d.values.clone().insert_column(0, 1.0);
            let y = nalgebra::DVector::from_iterator(200, xs.iter().map(|&x| f(x)));
            let svd = design.clone().svd(true, true);
            let coef = svd.solve(&y, 1e-12).unwrap();
            let resid = (&design * coef - &y).amax();
            assert!(resid < 1e-10, "{resid}");
        }
    }

    #[test]
    fn preprocessor_reuses_training_ranges() {
        let raw = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 9.0, 2.0, 99.0, 3.0]);
        let spec = DesignSpec {
            family: ModelFamily::LinearInteractions,
            knots: 2,
            transforms: vec![VarTransform::Log1p, VarTransform::None],
            normalize: true,
            binary_columns: vec![],
        };
        let names = vec!["a".to_string(), "b".to_string()];
        let pre = Preprocessor::fit(&raw, &spec, &names).unwrap();
        let x = pre.apply(&raw).unwrap();
        assert_eq!(x[(0, 0)], 0.0);
        assert_eq!(x[(2, 0)], 1.0);
        assert!((x[(1, 0)] - 0.5).abs() < 1e-12);
        let test = DMatrix::from_row_slice(1, 2, &[0.0, 0.0]);
        let xt = pre.apply(&test).unwrap();
        assert_eq!(xt[(0, 1)], -0.5);
        assert!((pre.unscale(0, 0.5) - 9.0).abs() < 1e-9);
        let constant = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 1.0]);
        assert!(matches!(
            Preprocessor::fit(&constant, &spec, &names),
            Err(Error::DegenerateColumn(name)) if name == "b"
        ));
    }
}
