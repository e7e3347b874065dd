//! Hierarchical sparsity prior as a DAG over mean-one latent scales.
//!
//! Every regression coefficient `beta_j` has conditional variance
//!
//! ```text
//! Psi_j = s_j * d * f_j(eta of parents) / E[f_j] * eta_j
//! ```
//!
//! where `eta_j` has a mean-one mixing law with shape `s_j`, `d` is a global
//! scale shared by all coefficients and `f_j` is either the product or the
//! mean of the parents' latent scales. The `eta` are the free variables;
//! `Psi` is always derived from them.

use serde::{Deserialize, Serialize};

use crate::distributions::{GammaGammaParams, MixingLaw};
use crate::error::{config, domain, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combinator {
    /// `f = prod(parent eta)`; with no parents `f = 1`.
    ProductOfParents,
    /// `f = mean(parent eta)`; needs at least one parent.
    MeanOfParents,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaNode {
    pub id: usize,
    pub name: String,
    pub level: usize,
    pub parents: Vec<usize>,
    pub law: MixingLaw,
    pub cond_shape: f64,
    pub combinator: Combinator,
    /// Hyperparameter group supplying this node's shape, if it is shared.
    #[serde(default)]
    pub shape_group: Option<usize>,
}

/// A named hyperparameter holding the shape of one or more nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeGroup {
    pub name: String,
    pub value: f64,
}

/// Serialised form of a [`PriorGraph`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphDoc {
    pub nodes: Vec<EtaNode>,
    pub coeff_map: Vec<usize>,
    #[serde(default)]
    pub shape_groups: Vec<ShapeGroup>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "GraphDoc", into = "GraphDoc")]
pub struct PriorGraph {
    nodes: Vec<EtaNode>,
    coeff_map: Vec<usize>,
    shape_groups: Vec<ShapeGroup>,
    levels: usize,
    children: Vec<Vec<usize>>,
    group_members: Vec<Vec<usize>>,
    f_norm: Vec<f64>,
    warnings: Vec<String>,
}

impl From<PriorGraph> for GraphDoc {
    fn from(g: PriorGraph) -> Self {
        GraphDoc {
            nodes: g.nodes,
            coeff_map: g.coeff_map,
            shape_groups: g.shape_groups,
        }
    }
}

impl TryFrom<GraphDoc> for PriorGraph {
    type Error = Error;
    fn try_from(doc: GraphDoc) -> Result<Self> {
        PriorGraph::new(doc.nodes, doc.coeff_map, doc.shape_groups)
    }
}

const MEAN_TOL: f64 = 1e-9;

impl PriorGraph {
    /// Validates and indexes a node list given in topological order.
    pub fn new(nodes: Vec<EtaNode>, coeff_map: Vec<usize>, shape_groups: Vec<ShapeGroup>) -> Result<Self> {
        if nodes.is_empty() {
            return config("prior graph has no nodes");
        }
        let n = nodes.len();
        let mut children = vec![Vec::new(); n];
        let mut group_members = vec![Vec::new(); shape_groups.len()];
        let mut levels = 0;
        for (i, node) in nodes.iter().enumerate() {
            if node.id != i {
                return config(format!("node '{}' has id {} at position {i}", node.name, node.id));
            }
            if node.level < 1 {
                return config(format!("node '{}' has level 0", node.name));
            }
            levels = levels.max(node.level);
            if node.combinator == Combinator::MeanOfParents && node.parents.is_empty() {
                return config(format!("node '{}' averages over an empty parent set", node.name));
            }
            for &p in &node.parents {
                if p >= i {
                    return config(format!("node '{}' lists parent {p} that is not earlier in topological order", node.name));
                }
                if nodes[p].level >= node.level {
                    return config(format!(
                        "node '{}' (level {}) has parent '{}' at level {}",
                        node.name, node.level, nodes[p].name, nodes[p].level
                    ));
                }
                children[p].push(i);
            }
            let mean = node
                .law
                .mean()
                .ok_or_else(|| Error::Config(format!("node '{}' has a law without a mean", node.name)))?;
            if (mean - 1.0).abs() > MEAN_TOL {
                return config(format!("node '{}' law has mean {mean}, expected 1", node.name));
            }
            if !(node.cond_shape > 0.0) {
                return config(format!("node '{}' has non-positive shape", node.name));
            }
            if let Some(s) = node.law.shape() {
                if (s - node.cond_shape).abs() > 1e-12 * s.max(1.0) {
                    return config(format!(
                        "node '{}' shape {} differs from its law's shape {s}",
                        node.name, node.cond_shape
                    ));
                }
            }
            if let Some(g) = node.shape_group {
                let grp = shape_groups
                    .get(g)
                    .ok_or_else(|| Error::Config(format!("node '{}' refers to missing shape group {g}", node.name)))?;
                if (grp.value - node.cond_shape).abs() > 1e-12 * grp.value.max(1.0) {
                    return config(format!("node '{}' shape disagrees with group '{}'", node.name, grp.name));
                }
                group_members[g].push(i);
            }
        }
        if coeff_map.len() != n {
            return config(format!("coefficient map has {} entries for {n} nodes", coeff_map.len()));
        }
        let mut seen = vec![false; n];
        for &c in &coeff_map {
            if c >= n || seen[c] {
                return config("coefficient map is not a bijection onto nodes");
            }
            seen[c] = true;
        }
        // E[f] over independent unit-mean parents
        let f_norm = nodes.iter().map(|_| 1.0).collect();
        Ok(Self {
            nodes,
            coeff_map,
            shape_groups,
            levels,
            children,
            group_members,
            f_norm,
            warnings: Vec::new(),
        })
    }

    pub fn nodes(&self) -> &[EtaNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Design column -> node id.
    pub fn coeff_map(&self) -> &[usize] {
        &self.coeff_map
    }

    pub fn shape_groups(&self) -> &[ShapeGroup] {
        &self.shape_groups
    }

    /// Current shape values of every group, in group order.
    pub fn default_shapes(&self) -> Vec<f64> {
        self.shape_groups.iter().map(|g| g.value).collect()
    }

    pub fn group_members(&self, group: usize) -> &[usize] {
        &self.group_members[group]
    }

    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.shape_groups.iter().position(|g| g.name == name)
    }

    /// Nodes whose `Psi` depends directly on node `j`'s latent scale.
    pub fn children(&self, j: usize) -> &[usize] {
        &self.children[j]
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn nodes_at_level(&self, level: usize) -> impl Iterator<Item = &EtaNode> {
        self.nodes.iter().filter(move |n| n.level == level)
    }

    fn shape_of(&self, j: usize, shapes: &[f64]) -> f64 {
        match self.nodes[j].shape_group {
            Some(g) => shapes[g],
            None => self.nodes[j].cond_shape,
        }
    }

    /// Parent factor `f_j / E[f_j]` for node `j`.
    pub fn parent_factor(&self, j: usize, eta: &[f64]) -> f64 {
        let node = &self.nodes[j];
        let f = match node.combinator {
            Combinator::ProductOfParents => node.parents.iter().map(|&p| eta[p]).product::<f64>(),
            Combinator::MeanOfParents => {
                node.parents.iter().map(|&p| eta[p]).sum::<f64>() / node.parents.len() as f64
            }
        };
        f / self.f_norm[j]
    }

    /// `Psi_j` for a single node under the given group shapes.
    pub fn psi_node(&self, j: usize, eta: &[f64], d: f64, shapes: &[f64]) -> f64 {
        self.shape_of(j, shapes) * d * self.parent_factor(j, eta) * eta[j]
    }

    /// All `Psi` under explicit group shapes, in node order.
    pub fn psi_with_shapes(&self, eta: &[f64], d: f64, shapes: &[f64]) -> Vec<f64> {
        (0..self.nodes.len()).map(|j| self.psi_node(j, eta, d, shapes)).collect()
    }

    /// Law of node `j` when its group has the given shapes.
    pub fn law_with_shapes(&self, j: usize, shapes: &[f64]) -> MixingLaw {
        let node = &self.nodes[j];
        match node.shape_group {
            Some(g) => node.law.with_unit_mean_shape(shapes[g]),
            None => node.law,
        }
    }

    fn check_eta(&self, eta: &[f64]) -> Result<()> {
        if eta.len() != self.nodes.len() {
            return config(format!("expected {} latent scales, got {}", self.nodes.len(), eta.len()));
        }
        if let Some(bad) = eta.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return domain(format!("latent scales must be finite and positive, got {bad}"));
        }
        Ok(())
    }
}

/// `Psi` for every node, using the graph's own shapes.
pub fn compute_psi(graph: &PriorGraph, eta: &[f64], d: f64) -> Result<Vec<f64>> {
    graph.check_eta(eta)?;
    if !(d.is_finite() && d > 0.0) {
        return domain(format!("global scale must be finite and positive, got {d}"));
    }
    Ok(graph.psi_with_shapes(eta, d, &graph.default_shapes()))
}

/// Sum of the independent log-densities of the latent scales.
pub fn prior_logdensity(graph: &PriorGraph, eta: &[f64]) -> Result<f64> {
    graph.check_eta(eta)?;
    Ok(prior_logdensity_with_shapes(graph, eta, &graph.default_shapes()))
}

pub fn prior_logdensity_with_shapes(graph: &PriorGraph, eta: &[f64], shapes: &[f64]) -> f64 {
    (0..graph.len()).map(|j| graph.law_with_shapes(j, shapes).ln_pdf(eta[j])).sum()
}

/// Accumulates nodes and groups for the built-in constructors.
struct Builder {
    nodes: Vec<EtaNode>,
    groups: Vec<ShapeGroup>,
    tail: f64,
}

impl Builder {
    fn new(tail: f64) -> Result<Self> {
        if !(tail > 1.0 && tail.is_finite()) {
            return config(format!("tail parameter c must exceed 1 for mean-one scales, got {tail}"));
        }
        Ok(Self {
            nodes: Vec::new(),
            groups: Vec::new(),
            tail,
        })
    }

    fn group(&mut self, name: impl Into<String>, value: f64) -> Result<usize> {
        let name = name.into();
        if !(value > 0.0 && value.is_finite()) {
            return config(format!("shape '{name}' must be positive, got {value}"));
        }
        self.groups.push(ShapeGroup { name, value });
        Ok(self.groups.len() - 1)
    }

    fn node(&mut self, name: String, level: usize, parents: Vec<usize>, combinator: Combinator, group: usize) -> Result<usize> {
        let shape = self.groups[group].value;
        let id = self.nodes.len();
        self.nodes.push(EtaNode {
            id,
            name,
            level,
            parents,
            law: MixingLaw::GammaGamma(GammaGammaParams::unit_mean(shape, self.tail)?),
            cond_shape: shape,
            combinator,
            shape_group: Some(group),
        });
        Ok(id)
    }

    fn finish(self) -> Result<PriorGraph> {
        let n = self.nodes.len();
        PriorGraph::new(self.nodes, (0..n).collect(), self.groups)
    }
}

fn heredity(p: usize, lambda1: f64, lambda2: f64, c: f64, combinator: Combinator) -> Result<PriorGraph> {
    if p < 2 {
        return config(format!("interaction models need p >= 2, got {p}"));
    }
    let mut b = Builder::new(c)?;
    let g1 = b.group("lambda1", lambda1)?;
    let g2 = b.group("lambda2", lambda2)?;
    for j in 0..p {
        b.node(format!("main[{j}]"), 1, vec![], Combinator::ProductOfParents, g1)?;
    }
    for j in 0..p {
        for k in 0..j {
            b.node(format!("int[{j},{k}]"), 2, vec![j, k], combinator, g2)?;
        }
    }
    let mut graph = b.finish()?;
    if lambda2 >= lambda1 {
        graph.warnings.push(format!(
            "lambda2 ({lambda2}) >= lambda1 ({lambda1}): interactions are usually taken to be sparser than main effects"
        ));
    }
    Ok(graph)
}

/// Main effects at level 1; each interaction's scale is the product of its
/// two parents' scales, so it is small if either main effect is small.
pub fn build_strong_heredity(p: usize, lambda1: f64, lambda2: f64, c: f64) -> Result<PriorGraph> {
    heredity(p, lambda1, lambda2, c, Combinator::ProductOfParents)
}

/// As strong heredity, but interactions use the mean of the parents'
/// scales: small only if both main effects are small.
pub fn build_weak_heredity(p: usize, lambda1: f64, lambda2: f64, c: f64) -> Result<PriorGraph> {
    heredity(p, lambda1, lambda2, c, Combinator::MeanOfParents)
}

/// Additive model with `k` basis coefficients per variable.
pub fn build_gam(p: usize, k: usize, lambda1: f64, lambda2: &[f64], c: f64) -> Result<PriorGraph> {
    build_gam_masked(p, k, lambda1, lambda2, c, &vec![true; p])
}

/// Additive model where only variables with `has_basis[j]` get spline
/// coefficients (binary variables keep just the linear term).
/// `lambda2` is indexed by variable; entries for basis-free variables are unused.
pub fn build_gam_masked(
    p: usize,
    k: usize,
    lambda1: f64,
    lambda2: &[f64],
    c: f64,
    has_basis: &[bool],
) -> Result<PriorGraph> {
    if p < 1 || k < 1 {
        return config(format!("additive model needs p >= 1 and K >= 1, got p={p}, K={k}"));
    }
    if lambda2.len() != p || has_basis.len() != p {
        return config(format!(
            "expected {p} basis shapes and flags, got {} and {}",
            lambda2.len(),
            has_basis.len()
        ));
    }
    let mut b = Builder::new(c)?;
    let g1 = b.group("lambda1", lambda1)?;
    let mut g2 = vec![None; p];
    for j in 0..p {
        if has_basis[j] {
            g2[j] = Some(b.group(format!("lambda2[{j}]"), lambda2[j])?);
        }
    }
    for j in 0..p {
        b.node(format!("var[{j}]"), 1, vec![], Combinator::ProductOfParents, g1)?;
    }
    for j in 0..p {
        if let Some(g) = g2[j] {
            for kk in 0..k {
                b.node(format!("basis[{j},{kk}]"), 2, vec![j], Combinator::ProductOfParents, g)?;
            }
        }
    }
    b.finish()
}

/// Four-level prior for an additive model with pairwise interaction
/// surfaces: main effects, interactions (strong heredity), main-effect
/// bases, and tensor-product interaction bases whose scale multiplies the
/// interaction's and both main effects' latent scales.
pub fn build_gam_interactions(
    p: usize,
    k: usize,
    lambda1: f64,
    lambda2: f64,
    lambda3: &[f64],
    lambda4: &[f64],
    c: f64,
) -> Result<PriorGraph> {
    if p < 2 || k < 1 {
        return config(format!("interaction additive model needs p >= 2 and K >= 1, got p={p}, K={k}"));
    }
    let pairs = p * (p - 1) / 2;
    if lambda3.len() != p || lambda4.len() != pairs {
        return config(format!(
            "expected {p} main-basis shapes and {pairs} pair-basis shapes, got {} and {}",
            lambda3.len(),
            lambda4.len()
        ));
    }
    let mut b = Builder::new(c)?;
    let g1 = b.group("lambda1", lambda1)?;
    let g2 = b.group("lambda2", lambda2)?;
    let g3: Vec<usize> = (0..p)
        .map(|j| b.group(format!("lambda3[{j}]"), lambda3[j]))
        .collect::<Result<_>>()?;
    let mut g4 = Vec::with_capacity(pairs);
    let mut idx = 0;
    for j in 0..p {
        for kk in 0..j {
            g4.push(b.group(format!("lambda4[{j},{kk}]"), lambda4[idx])?);
            idx += 1;
        }
    }
    for j in 0..p {
        b.node(format!("main[{j}]"), 1, vec![], Combinator::ProductOfParents, g1)?;
    }
    let mut pair_nodes = Vec::with_capacity(pairs);
    for j in 0..p {
        for kk in 0..j {
            pair_nodes.push((j, kk, b.node(format!("int[{j},{kk}]"), 2, vec![j, kk], Combinator::ProductOfParents, g2)?));
        }
    }
    for j in 0..p {
        for l in 0..k {
            b.node(format!("main_basis[{j},{l}]"), 3, vec![j], Combinator::ProductOfParents, g3[j])?;
        }
    }
    for (pi, &(j, kk, node)) in pair_nodes.iter().enumerate() {
        for l in 0..k {
            for m in 0..k {
                b.node(
                    format!("int_basis[{j},{kk},{l},{m}]"),
                    4,
                    vec![node, j, kk],
                    Combinator::ProductOfParents,
                    g4[pi],
                )?;
            }
        }
    }
    let mut graph = b.finish()?;
    if lambda2 >= lambda1 {
        graph.warnings.push(format!(
            "lambda2 ({lambda2}) >= lambda1 ({lambda1}): interactions are usually taken to be sparser than main effects"
        ));
    }
    Ok(graph)
}

/// Single level of independent coefficients sharing one shape: the usual
/// normal-gamma-gamma prior, used as a baseline.
pub fn build_independent(n_coef: usize, lambda: f64, c: f64) -> Result<PriorGraph> {
    if n_coef < 1 {
        return config("independent prior needs at least one coefficient");
    }
    let mut b = Builder::new(c)?;
    let g = b.group("lambda1", lambda)?;
    for j in 0..n_coef {
        b.node(format!("coef[{j}]"), 1, vec![], Combinator::ProductOfParents, g)?;
    }
    b.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{gg_logdensity, GammaParams};

    #[test]
    fn node_counts() {
        assert_eq!(build_strong_heredity(3, 1.0, 0.5, 3.0).unwrap().len(), 6);
        assert_eq!(build_strong_heredity(8, 1.0, 0.5, 3.0).unwrap().len(), 36);
        let w = build_weak_heredity(3, 1.0, 0.5, 3.0).unwrap();
        assert_eq!(w.len(), 6);
        assert!(w.nodes_at_level(2).all(|n| n.combinator == Combinator::MeanOfParents));
        assert_eq!(build_gam(7, 60, 1.0, &[0.1; 7], 3.0).unwrap().len(), 7 + 420);
        let gi = build_gam_interactions(5, 10, 1.0, 0.5, &[0.1; 5], &[0.01; 10], 3.0).unwrap();
        assert_eq!(gi.len(), 5 + 10 + 50 + 1000);
        assert_eq!(gi.levels(), 4);
    }

    #[test]
    fn config_errors() {
        assert!(build_strong_heredity(1, 1.0, 0.5, 3.0).is_err());
        assert!(build_gam(3, 5, 1.0, &[0.1; 2], 3.0).is_err());
        assert!(build_gam_interactions(3, 2, 1.0, 0.5, &[0.1; 3], &[0.1; 2], 3.0).is_err());
        assert!(build_strong_heredity(3, 1.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn lambda_order_warns_but_builds() {
        let g = build_strong_heredity(3, 0.5, 1.0, 3.0).unwrap();
        assert_eq!(g.warnings().len(), 1);
        assert!(build_strong_heredity(3, 1.0, 0.5, 3.0).unwrap().warnings().is_empty());
    }

    #[test]
    fn unit_eta_gives_shape_times_scale() {
        let graphs = vec![
            build_strong_heredity(4, 1.0, 0.3, 3.0).unwrap(),
            build_weak_heredity(4, 1.0, 0.3, 3.0).unwrap(),
            build_gam(3, 4, 0.8, &[0.1, 0.2, 0.3], 3.0).unwrap(),
            build_gam_interactions(3, 2, 1.0, 0.4, &[0.1, 0.2, 0.3], &[0.01, 0.02, 0.03], 3.0).unwrap(),
            build_independent(5, 0.7, 3.0).unwrap(),
        ];
        for g in graphs {
            let psi = compute_psi(&g, &vec![1.0; g.len()], 2.0).unwrap();
            for (node, v) in g.nodes().iter().zip(&psi) {
                assert!((v - 2.0 * node.cond_shape).abs() < 1e-14, "{}", node.name);
            }
        }
    }

    #[test]
    fn heredity_arithmetic() {
        let strong = build_strong_heredity(2, 1.0, 0.5, 3.0).unwrap();
        let eta = [4.0, 0.25, 1.0];
        assert!((compute_psi(&strong, &eta, 1.0).unwrap()[2] - 0.5).abs() < 1e-15);
        let weak = build_weak_heredity(2, 1.0, 0.5, 3.0).unwrap();
        assert!((compute_psi(&weak, &eta, 1.0).unwrap()[2] - 1.0625).abs() < 1e-15);
        // weak heredity keeps a non-vanishing factor when one parent is tiny
        let psi = compute_psi(&weak, &[1e-300, 4.0, 1.0], 1.0).unwrap();
        assert!((psi[2] - 0.5 * 2.0).abs() < 1e-12);
    }

    #[test]
    fn gam_unit_eta_basis_scale() {
        let g = build_gam(2, 3, 1.0, &[0.2, 0.05], 3.0).unwrap();
        let psi = compute_psi(&g, &vec![1.0; g.len()], 1.5).unwrap();
        assert!((psi[2] - 0.2 * 1.5).abs() < 1e-15);
        assert!((psi[5] - 0.05 * 1.5).abs() < 1e-15);
    }

    #[test]
    fn gam_interaction_basis_unit_eta() {
        let l4 = [0.011, 0.012, 0.013];
        let g = build_gam_interactions(3, 2, 1.0, 0.4, &[0.1, 0.2, 0.3], &l4, 3.0).unwrap();
        let psi = compute_psi(&g, &vec![1.0; g.len()], 1.0).unwrap();
        for node in g.nodes_at_level(4) {
            let pair = g.nodes()[node.parents[0]].name.clone();
            let expected = match pair.as_str() {
                "int[1,0]" => l4[0],
                "int[2,0]" => l4[1],
                "int[2,1]" => l4[2],
                _ => unreachable!(),
            };
            assert!((psi[node.id] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn strong_heredity_monotone_and_vanishing() {
        let g = build_strong_heredity(2, 1.0, 0.5, 3.0).unwrap();
        let psi = |a: f64, b: f64| compute_psi(&g, &[a, b, 0.7], 1.0).unwrap()[2];
        let mut prev = 0.0;
        for a in [0.01, 0.1, 1.0, 10.0] {
            let v = psi(a, 2.0);
            assert!(v > prev);
            prev = v;
        }
        assert!(psi(1e-12, 5.0) < 1e-11);
        let w = build_weak_heredity(2, 1.0, 0.5, 3.0).unwrap();
        let wpsi = |a: f64, b: f64| compute_psi(&w, &[a, b, 0.7], 1.0).unwrap()[2];
        assert!(wpsi(1e-12, 5.0) > 0.5);
        assert!(wpsi(1e-12, 1e-12) < 1e-11);
    }

    #[test]
    fn prior_logdensity_is_sum_of_nodes() {
        let g = build_gam(2, 2, 0.9, &[0.3, 0.2], 3.0).unwrap();
        let eta: Vec<f64> = (0..g.len()).map(|i| 0.3 + 0.4 * i as f64).collect();
        let total = prior_logdensity(&g, &eta).unwrap();
        let by_node: f64 = g
            .nodes()
            .iter()
            .map(|n| match n.law {
                MixingLaw::GammaGamma(p) => gg_logdensity(eta[n.id], &p).unwrap(),
                _ => unreachable!(),
            })
            .sum();
        assert!((total - by_node).abs() < 1e-12);
        assert!(prior_logdensity(&g, &[1.0, -1.0, 1.0, 1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn single_exponential_node() {
        let node = EtaNode {
            id: 0,
            name: "x".into(),
            level: 1,
            parents: vec![],
            law: MixingLaw::Gamma(GammaParams::new(1.0, 1.0).unwrap()),
            cond_shape: 1.0,
            combinator: Combinator::ProductOfParents,
            shape_group: None,
        };
        let g = PriorGraph::new(vec![node], vec![0], vec![]).unwrap();
        assert!((prior_logdensity(&g, &[1.0]).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_malformed_graphs() {
        let mut g: GraphDoc = build_strong_heredity(2, 1.0, 0.5, 3.0).unwrap().into();
        g.nodes[0].parents = vec![2];
        assert!(PriorGraph::try_from(g).is_err());
        let mut g: GraphDoc = build_strong_heredity(2, 1.0, 0.5, 3.0).unwrap().into();
        g.coeff_map = vec![0, 0, 1];
        assert!(PriorGraph::try_from(g).is_err());
        let mut g: GraphDoc = build_strong_heredity(2, 1.0, 0.5, 3.0).unwrap().into();
        g.nodes[2].combinator = Combinator::MeanOfParents;
        g.nodes[2].parents.clear();
        assert!(PriorGraph::try_from(g).is_err());
        let mut g: GraphDoc = build_strong_heredity(2, 1.0, 0.5, 3.0).unwrap().into();
        g.nodes[1].law = MixingLaw::GammaGamma(GammaGammaParams::new(1.0, 3.0, 1.0).unwrap());
        assert!(PriorGraph::try_from(g).is_err());
    }

    #[test]
    fn json_round_trip() {
        let g = build_gam_interactions(3, 2, 1.0, 0.4, &[0.1, 0.2, 0.3], &[0.01, 0.02, 0.03], 3.0).unwrap();
        let text = serde_json::to_string(&g).unwrap();
        let back: PriorGraph = serde_json::from_str(&text).unwrap();
        assert_eq!(back.nodes(), g.nodes());
        assert_eq!(back.coeff_map(), g.coeff_map());
        assert_eq!(back.children(0), g.children(0));
    }
}
