//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test --test acceptance`. Set `HSPRIOR_CRITERIA=1,4` to
//! run a subset, `HSPRIOR_PROSTATE_CSV` (or place `data/prostate.csv`) to
//! enable the prostate criterion, and `HSPRIOR_ACCEPTANCE_STRICT=1` to exit
//! nonzero when any criterion fails.

use std::path::{Path, PathBuf};
use std::time::Instant;

use hsprior::analysis::verify::{
    default_cases, density_histogram_check, density_small_value_check, run_shape_case, VerifyOptions,
};
use hsprior::analysis::{cross_validate, fit, write_fit, RunConfig};
use hsprior::design::{ColumnRole, DesignSpec, ModelFamily, VarTransform};
use hsprior::prior_graph::{
    build_gam, build_gam_interactions, build_independent, build_strong_heredity, build_weak_heredity, compute_psi,
    PriorGraph,
};
use hsprior::sampler::{
    geweke_test, run_chain, AlphaPrior, ChainConfig, HyperPrior, Model, ModelPriors, RidgeProblem, ShapeUpdate,
    Sigma2Prior,
};
use hsprior::shrinkage::{
    default_t_grid, profile, shis_vs_scis, shrinkage_at, shrinkage_by_derivative, sup_gap, ShrinkagePrior,
    VariancePrior,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

enum Status {
    Pass,
    Fail,
    Skip,
}

struct Outcome {
    status: Status,
    detail: String,
}

fn judge(ok: bool, detail: String) -> Outcome {
    Outcome {
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
    }
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

// ---------------------------------------------------------------- 1 and 2

fn sparsity_shapes() -> Outcome {
    let start = Instant::now();
    let opts = VerifyOptions::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, case) in default_cases().iter().enumerate() {
        match run_shape_case(case, &opts, i as u64) {
            Ok(row) => {
                ok &= row.pass;
                parts.push(format!("{}: {:.3} (want {} ± {:.3})", case.label(), row.estimate, row.expected, row.tolerance));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{}: error {e}", case.label()));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 300.0;
    judge(ok, format!("1e7 draws per case, {secs:.0}s (limit 300s); {}", parts.join("; ")))
}

fn product_density() -> Outcome {
    let opts = VerifyOptions::default();
    let hist = density_histogram_check(&opts, 99);
    let small = density_small_value_check(&opts);
    match (hist, small) {
        (Ok(h), Ok(s)) => judge(
            h.pass && s.pass,
            format!(
                "sup relative error {:.4} (limit 0.02, {}); ratio at 1e-8 = {:.7} vs {:.7} (limit 1e-3)",
                h.estimate, h.note, s.estimate, s.expected
            ),
        ),
        (h, s) => judge(false, format!("error: {:?} / {:?}", h.err(), s.err())),
    }
}

// ---------------------------------------------------------------- 3

fn toy_xy(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>());
    let y = DVector::from_fn(n, |i, _| 1.0 + 2.0 * x[(i, 0)] + 0.3 * rng.sample::<f64, _>(StandardNormal));
    (x, y)
}

fn geweke() -> (bool, String) {
    let (x, y) = toy_xy(20, 2, 21);
    let mut priors = ModelPriors {
        alpha: AlphaPrior::Normal { mean: 0.0, var: 1.0 },
        sigma2: Sigma2Prior::InverseGamma { shape: 6.0, scale: 5.0 },
        d: HyperPrior::Gamma { shape: 3.0, rate: 3.0 },
        ..ModelPriors::default()
    };
    priors.shapes.insert(
        "lambda1".into(),
        ShapeUpdate::Free {
            prior: HyperPrior::Gamma { shape: 4.0, rate: 4.0 },
        },
    );
    let model = Model::new(build_independent(2, 1.0, 6.0).unwrap(), x, y, priors).unwrap();
    let cfg = ChainConfig {
        n_temperatures: 1,
        seed: 3,
        ..ChainConfig::default()
    };
    match geweke_test(&model, &cfg, 100_000, 2_000, 100_000) {
        Ok(moments) => {
            let worst = moments.iter().map(|m| m.z.abs()).fold(0.0, f64::max);
            let names: Vec<String> = moments.iter().map(|m| format!("{} z={:.2}", m.name, m.z)).collect();
            (worst < 4.0, format!("Geweke max |z| {worst:.2} (limit 4) over [{}]", names.join(", ")))
        }
        Err(e) => (false, format!("Geweke error {e}")),
    }
}

/// Monte-Carlo moments of the ridge block against the closed form, each
/// entry within 3 standard errors.
fn conjugate_block(n: usize, p: usize, seed: u64) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let r = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let prior_var: Vec<f64> = (0..p).map(|_| 0.1 + 3.0 * rng.random::<f64>()).collect();
    let s2 = 0.7;
    let mut a = z.tr_mul(&z) / s2;
    for i in 0..p {
        a[(i, i)] += 1.0 / prior_var[i];
    }
    let cov = a.try_inverse().expect("positive definite");
    let mean = &cov * (z.tr_mul(&r) / s2);

    let prob = RidgeProblem::new(z, r);
    let draws = 200_000;
    let mut sum = DVector::zeros(p);
    let mut outer = DMatrix::zeros(p, p);
    for _ in 0..draws {
        let th = prob.draw(s2, &prior_var, &mut rng).unwrap();
        sum += &th;
        outer += &th * th.transpose();
    }
    let m_hat = sum / draws as f64;
    let c_hat = outer / draws as f64 - &m_hat * m_hat.transpose();
    let nd = draws as f64;
    let mut worst: f64 = 0.0;
    for i in 0..p {
        worst = worst.max((m_hat[i] - mean[i]).abs() / (cov[(i, i)] / nd).sqrt());
        for j in 0..=i {
            let se = ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)].powi(2)) / nd).sqrt();
            worst = worst.max((c_hat[(i, j)] - cov[(i, j)]).abs() / se);
        }
    }
    (worst < 3.0, format!("ridge block n={n} p={p}: worst entry {worst:.2} SE"))
}

fn adapted_rates() -> (bool, String) {
    let mut out = Vec::new();
    let mut ok = true;
    let (x, y) = toy_xy(40, 4, 14);
    let mut pr = ModelPriors::default();
    pr.shapes.insert("lambda1".into(), ShapeUpdate::Free { prior: HyperPrior::Gamma { shape: 1.0, rate: 1.0 } });
    let independent = Model::new(build_independent(4, 1.0, 3.0).unwrap(), x, y, pr).unwrap();

    let (x, y) = toy_xy(50, 6, 15);
    let mut pr = ModelPriors::default();
    pr.shapes.insert("lambda1".into(), ShapeUpdate::Free { prior: HyperPrior::Exponential { rate: 1.0 } });
    pr.shapes.insert(
        "lambda2".into(),
        ShapeUpdate::Ratio {
            of: "lambda1".into(),
            prior: HyperPrior::Beta { a: 2.0, b: 6.0 },
        },
    );
    let heredity = Model::new(build_strong_heredity(3, 1.0, 0.3, 3.0).unwrap(), x.columns(0, 6).into_owned(), y, pr);
    // strong heredity over 3 variables has 6 coefficients
    let heredity = heredity.unwrap();

    for (label, model) in [("independent", independent), ("heredity", heredity)] {
        let cfg = ChainConfig {
            n_iter: 30_000,
            n_burn: 20_000,
            thin: 10,
            n_temperatures: 1,
            seed: 3,
            ..ChainConfig::default()
        };
        let store = run_chain(&model, &cfg).unwrap();
        let (lo, hi) = store
            .acceptance
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), a| (l.min(a.rate), h.max(a.rate)));
        ok &= lo >= 0.25 && hi <= 0.35;
        out.push(format!("{label}: {} scalars in [{lo:.3}, {hi:.3}]", store.acceptance.len()));
    }
    (ok, format!("acceptance (target 0.30 ± 0.05) {}", out.join(", ")))
}

fn sampler_correctness() -> Outcome {
    let start = Instant::now();
    let (g_ok, g) = geweke();
    let (c1_ok, c1) = conjugate_block(30, 3, 41);
    let (c2_ok, c2) = conjugate_block(4, 6, 42);
    let (a_ok, a) = adapted_rates();
    let secs = start.elapsed().as_secs_f64();
    judge(
        g_ok && c1_ok && c2_ok && a_ok && secs < 600.0,
        format!("{g}; {c1}; {c2}; {a}; {secs:.0}s (limit 600s)"),
    )
}

// ---------------------------------------------------------------- 4

fn shrinkage_reproduction() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();

    let mut ridge_err: f64 = 0.0;
    for psi0 in [0.1, 1.0, 10.0] {
        for se in [0.5, 1.0, 2.0] {
            let prior = ShrinkagePrior::new(VariancePrior::FixedVariance { psi0 }, se).unwrap();
            for t in [0.0, 0.5, 2.0, 8.0] {
                let exact = 1.0 / (1.0 + psi0 / (se * se));
                ridge_err = ridge_err.max((shrinkage_at(&prior, t).unwrap() - exact).abs());
            }
        }
    }
    ok &= ridge_err <= 1e-12;
    parts.push(format!("ridge max error {ridge_err:.1e} (limit 1e-12)"));

    let mut route_gap: f64 = 0.0;
    for vp in [
        VariancePrior::Ng { shape: 0.5, rate: 0.5, scale: 0.5 },
        VariancePrior::Ngg { shape: 0.5, tail: 0.5, scale: 1.0 },
        VariancePrior::ProductNg { lambda1: 5.0, lambda2: 0.5, d: 1.0 },
        VariancePrior::ProductNgg { lambda1: 1.0, lambda2: 0.2, c: 3.0, d: 1.0 },
        VariancePrior::Shis { lambda1: 1.0, lambda2: 0.1, d: 1.0 },
        VariancePrior::Scis { lambda1: 1.0, lambda2: 0.1, d: 1.0 },
    ] {
        let prior = ShrinkagePrior::new(vp, 1.0).unwrap();
        for t in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let a = shrinkage_at(&prior, t).unwrap();
            let b = shrinkage_by_derivative(&prior, t).unwrap();
            route_gap = route_gap.max((a - b).abs());
        }
    }
    ok &= route_gap <= 1e-4;
    parts.push(format!("two routes max gap {route_gap:.1e} (limit 1e-4)"));

    let grid = default_t_grid();
    for l2 in [0.05, 0.1, 0.5] {
        let (shis, scis) = shis_vs_scis(10.0 * l2, l2, 1.0, 1.0, &[0.5, 8.0]).unwrap();
        let (lo, hi) = (shis.s_values[0] - scis.s_values[0], shis.s_values[1] - scis.s_values[1]);
        ok &= lo > 0.0 && hi < 0.0;
        parts.push(format!("lambda2={l2}: S_ShIS-S_ScIS = {lo:+.3} at t=0.5, {hi:+.3} at t=8"));
    }

    for l2 in [0.1, 0.2, 0.5, 1.0] {
        let single = profile(&ShrinkagePrior::new(VariancePrior::matched_ng(l2, 1.0), 1.0).unwrap(), &grid).unwrap();
        let prod = profile(
            &ShrinkagePrior::new(VariancePrior::ProductNg { lambda1: 10.0 * l2, lambda2: l2, d: 1.0 }, 1.0).unwrap(),
            &grid,
        )
        .unwrap();
        let gap = sup_gap(&prod, &single, 0.5, 8.0).unwrap();
        ok &= gap < 0.1;
        parts.push(format!("product gap lambda1=10*lambda2, lambda2={l2}: {gap:.3} (limit 0.1)"));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 300.0;
    parts.push(format!("{secs:.0}s (limit 300s)"));
    judge(ok, parts.join("; "))
}

// ---------------------------------------------------------------- 5

fn prostate() -> Outcome {
    let csv = std::env::var_os("HSPRIOR_PROSTATE_CSV")
        .map(PathBuf::from)
        .unwrap_or_else(|| root().join("data/prostate.csv"));
    if !csv.exists() {
        return Outcome {
            status: Status::Skip,
            detail: format!("prostate data not supplied ({} missing)", csv.display()),
        };
    }
    let mut cfg = RunConfig::from_file(&root().join("configs/prostate.toml")).unwrap();
    cfg.data.path = csv;
    let fitted = match fit(&cfg) {
        Ok(f) => f,
        Err(e) => return judge(false, format!("fit failed: {e}")),
    };
    let l1 = fitted.hyper("lambda1").unwrap().median;
    let (model, base) = match (cross_validate(&cfg, 5), cross_validate(&cfg.independent_baseline(), 5)) {
        (Ok(m), Ok(b)) => (m, b),
        (m, b) => return judge(false, format!("cv failed: {:?} / {:?}", m.err(), b.err())),
    };
    judge(
        (0.75..=0.90).contains(&model.rmse) && model.lps < base.lps && (0.5..=2.0).contains(&l1),
        format!(
            "rmse {:.4} (band [0.75, 0.90]); lps {:.4} vs baseline {:.4}; lambda1 median {l1:.3} (band [0.5, 2.0])",
            model.rmse, model.lps, base.lps
        ),
    )
}

// ---------------------------------------------------------------- 6

fn cpu() -> Outcome {
    let start = Instant::now();
    let cfg = RunConfig::from_file(&root().join("configs/cpu.toml")).unwrap();
    let out = match fit(&cfg) {
        Ok(o) => o,
        Err(e) => return judge(false, format!("fit failed: {e}")),
    };
    let l1 = out.hyper("lambda1").unwrap().median;
    let l2 = out.hyper("lambda2").unwrap().median;
    let mut ints: Vec<(String, f64)> = out
        .psi
        .iter()
        .filter(|p| p.level == 2)
        .map(|p| (p.node.clone(), p.summary.median))
        .collect();
    ints.sort_by(|a, b| b.1.total_cmp(&a.1));
    // predictors are A..E in order, so B x C is the pair (2, 1)
    let top = &ints[0].0;
    let secs = start.elapsed().as_secs_f64();
    judge(
        l2 < l1 && top == "int[2,1]" && secs < 3600.0,
        format!(
            "median lambda1 {l1:.3}, lambda2 {l2:.3}; largest interaction scale {top} ({:.3e}), next {} ({:.3e}); {} draws, {secs:.0}s (limit 3600s)",
            ints[0].1,
            ints[1].0,
            ints[1].1,
            out.report.n_draws
        ),
    )
}

// ---------------------------------------------------------------- 7

fn built_in_graphs(l1: f64, l2: f64, l3: f64, l4: f64, c: f64) -> Vec<(&'static str, PriorGraph)> {
    vec![
        ("strong", build_strong_heredity(3, l1, l2, c).unwrap()),
        ("weak", build_weak_heredity(3, l1, l2, c).unwrap()),
        ("gam", build_gam(2, 3, l1, &[l3, l3], c).unwrap()),
        ("gam_interactions", build_gam_interactions(3, 2, l1, l2, &[l3; 3], &[l4; 3], c).unwrap()),
        ("independent", build_independent(4, l1, c).unwrap()),
    ]
}

fn role_matches(role: ColumnRole, name: &str) -> bool {
    match role {
        ColumnRole::MainLinear { var } => name == format!("main[{var}]") || name == format!("var[{var}]"),
        ColumnRole::InteractionLinear { j, k } => name == format!("int[{j},{k}]"),
        ColumnRole::MainBasis { var, knot } => {
            name == format!("basis[{var},{knot}]") || name == format!("main_basis[{var},{knot}]")
        }
        ColumnRole::InteractionBasis { j, k, l, m } => name == format!("int_basis[{j},{k},{l},{m}]"),
    }
}

fn structural() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();

    let mut worst_unit: f64 = 0.0;
    for (_, g) in built_in_graphs(1.3, 0.4, 0.2, 0.05, 3.0) {
        for d in [0.3, 2.0] {
            let psi = compute_psi(&g, &vec![1.0; g.len()], d).unwrap();
            for (node, v) in g.nodes().iter().zip(&psi) {
                worst_unit = worst_unit.max((v / (node.cond_shape * d) - 1.0).abs());
            }
        }
    }
    ok &= worst_unit < 1e-12;
    parts.push(format!("unit-eta max relative error {worst_unit:.1e}"));

    // moderate shapes and c = 10 keep the Monte-Carlo error of the mean near 0.3%
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let d = 1.7;
    let n = 1_000_000;
    let mut worst_mean: f64 = 0.0;
    for (_, g) in built_in_graphs(2.0, 1.5, 1.0, 1.0, 10.0) {
        let mut sums = vec![0.0; g.len()];
        let mut eta = vec![0.0; g.len()];
        for _ in 0..n {
            for (e, node) in eta.iter_mut().zip(g.nodes()) {
                *e = node.law.sample(&mut rng);
            }
            for (s, v) in sums.iter_mut().zip(compute_psi(&g, &eta, d).unwrap()) {
                *s += v;
            }
        }
        for (node, s) in g.nodes().iter().zip(&sums) {
            worst_mean = worst_mean.max((s / n as f64 / (node.cond_shape * d) - 1.0).abs());
        }
    }
    ok &= worst_mean < 0.02;
    parts.push(format!("E[Psi]/(s d) max deviation {worst_mean:.4} (limit 0.02)"));

    let x = DMatrix::from_fn(12, 3, |i, j| ((i * 5 + j * 3) % 7) as f64 / 6.0);
    let mut bijection = true;
    for family in [ModelFamily::LinearInteractions, ModelFamily::Gam, ModelFamily::GamInteractions] {
        let spec = DesignSpec {
            family,
            knots: 4,
            transforms: vec![VarTransform::None; 3],
            normalize: false,
            binary_columns: vec![],
        };
        let dm = hsprior::design::build_design(&x, &spec).unwrap();
        let g = match family {
            ModelFamily::LinearInteractions => build_strong_heredity(3, 1.0, 0.5, 3.0),
            ModelFamily::Gam => build_gam(3, 4, 1.0, &[0.5; 3], 3.0),
            ModelFamily::GamInteractions => build_gam_interactions(3, 4, 1.0, 0.5, &[0.5; 3], &[0.5; 3], 3.0),
        }
        .unwrap();
        let map = g.coeff_map();
        let mut sorted = map.to_vec();
        sorted.sort_unstable();
        bijection &= dm.ncols() == g.len() && sorted == (0..g.len()).collect::<Vec<_>>();
        bijection &= dm.column_roles.iter().enumerate().all(|(c, &r)| role_matches(r, &g.nodes()[map[c]].name));
    }
    ok &= bijection;
    parts.push(format!("column/node bijection for three families: {bijection}"));

    let cfg_text = format!(
        r#"
[data]
path = {:?}
response = "perf"
response_transform = "log"
[design]
family = "gam_interactions"
knots = 3
transform = "log1p"
[prior]
constructor = "gam_interactions"
lambda2 = 0.3
[priors.shapes.lambda1]
update = "free"
prior = {{ law = "exponential", rate = 1.0 }}
[chain]
n_iter = 700
n_burn = 200
thin = 5
n_temperatures = 2
seed = 9
"#,
        root().join("data/cpus.csv").to_str().unwrap()
    );
    let cfg = RunConfig::from_toml_str(&cfg_text).unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let out = fit(&cfg).unwrap();
        write_fit(&out, dir.path()).unwrap();
    }
    let mut identical = true;
    let mut count = 0;
    for entry in std::fs::read_dir(dirs[0].path()).unwrap() {
        let name = entry.unwrap().file_name();
        let a = std::fs::read(dirs[0].path().join(&name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(&name)).unwrap();
        identical &= a == b;
        count += 1;
    }
    ok &= identical && count >= 8;
    parts.push(format!("repeat fit byte-identical across {count} files: {identical}"));
    judge(ok, parts.join("; "))
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() {
    let selected: Option<Vec<u32>> = std::env::var("HSPRIOR_CRITERIA")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: [Criterion; 7] = [
        (1, "sparsity shapes of products and sums", sparsity_shapes),
        (2, "product-of-gammas density", product_density),
        (3, "sampler correctness", sampler_correctness),
        (4, "shrinkage profiles", shrinkage_reproduction),
        (5, "prostate desk-scale reproduction", prostate),
        (6, "CPU desk-scale reproduction", cpu),
        (7, "structural invariants", structural),
    ];
    let (mut passed, mut failed, mut skipped) = (0, 0, 0);
    for (id, name, run) in criteria {
        if selected.as_ref().is_some_and(|s| !s.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let tag = match out.status {
            Status::Pass => {
                passed += 1;
                "PASS"
            }
            Status::Fail => {
                failed += 1;
                "FAIL"
            }
            Status::Skip => {
                skipped += 1;
                "SKIP"
            }
        };
        println!("criterion {id} ({name}): {tag} [{:.1}s] {}", start.elapsed().as_secs_f64(), out.detail);
    }
    println!("acceptance: {passed} passed, {failed} failed, {skipped} skipped");
    if failed > 0 && std::env::var_os("HSPRIOR_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
