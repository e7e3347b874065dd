use std::io::Write;
use std::path::Path;

use hsprior::analysis::{cross_validate, fit, RunConfig};
use hsprior::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn write_csv(dir: &Path, header: &str, rows: &[Vec<f64>]) -> std::path::PathBuf {
    let path = dir.join("data.csv");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "{header}").unwrap();
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        writeln!(f, "{}", cells.join(",")).unwrap();
    }
    path
}

fn config(data: &Path, body: &str) -> RunConfig {
    let text = format!("[data]\npath = {:?}\nresponse = \"y\"\n{body}", data.to_str().unwrap());
    RunConfig::from_toml_str(&text).unwrap()
}

#[test]
fn additive_fit_ranks_the_active_variable_first() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<Vec<f64>> = (0..120)
        .map(|_| {
            let x: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            let y = 2.0 * (3.0 * x[0]).sin() + 0.2 * rng.sample::<f64, _>(StandardNormal);
            vec![x[0], x[1], x[2], y]
        })
        .collect();
    let data = write_csv(dir.path(), "a,b,c,y", &rows);
    let cfg = config(
        &data,
        r#"
[design]
family = "gam"
knots = 10

[prior]
constructor = "gam"
lambda2 = 0.1

[priors.shapes.lambda1]
update = "free"
prior = { law = "gamma", shape = 1.0, rate = 1.0 }

[priors.shapes."lambda2[*]"]
update = "free"
prior = { law = "gamma", shape = 1.0, rate = 10.0 }

[chain]
n_iter = 6000
n_burn = 2000
thin = 4
n_temperatures = 2
seed = 3
"#,
    );
    let out = fit(&cfg).unwrap();
    let medians: Vec<f64> = (0..3).map(|j| out.psi_node(&format!("var[{j}]")).unwrap().summary.median).collect();
    assert!(medians[0] > medians[1] && medians[0] > medians[2], "{medians:?}");

    assert_eq!(out.effects.len(), 3 * 101);
    for e in &out.effects {
        assert!(e.f.ci_low <= e.f.median && e.f.median <= e.f.ci_high);
        assert_eq!(e.ratio.is_some(), e.u >= 0.01);
    }
    for h in &out.report.hyperparameters {
        assert!(h.summary.ci_low <= h.summary.median && h.summary.median <= h.summary.ci_high, "{}", h.name);
    }
}

fn linear_rows(n: usize, noise: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let (a, b): (f64, f64) = (rng.random(), rng.random());
            vec![a, b, 1.0 + 2.0 * a - b + noise * rng.sample::<f64, _>(StandardNormal)]
        })
        .collect()
}

const LINEAR_MODEL: &str = r#"
[design]
family = "linear_interactions"

[prior]
constructor = "strong_heredity"
lambda2 = 0.3

[cv]
folds = 5
seed = 2

[cv.chain]
n_iter = 2000
n_burn = 500
thin = 2
n_temperatures = 1
"#;

#[test]
fn near_noiseless_linear_data_cross_validates_almost_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_csv(dir.path(), "a,b,y", &linear_rows(60, 1e-3, 8));
    let report = cross_validate(&config(&data, LINEAR_MODEL), 5).unwrap();
    assert_eq!(report.predictions.len(), 60);
    assert!(report.rmse < 0.01, "rmse {}", report.rmse);
    assert!(report.lps < -3.0, "lps {}", report.lps);
    let rows: Vec<usize> = report.predictions.iter().map(|p| p.row).collect();
    assert_eq!(rows, (0..60).collect::<Vec<_>>());
}

#[test]
fn constant_response_is_a_degenerate_fold() {
    let dir = tempfile::tempdir().unwrap();
    let mut rows = linear_rows(20, 0.1, 1);
    for r in &mut rows {
        r[2] = 4.0;
    }
    let data = write_csv(dir.path(), "a,b,y", &rows);
    match cross_validate(&config(&data, LINEAR_MODEL), 5) {
        Err(Error::DegenerateFold { reason, .. }) => assert!(reason.contains("constant")),
        other => panic!("expected a degenerate fold, got {other:?}"),
    }
}

#[test]
fn constant_training_predictor_is_a_degenerate_fold() {
    let dir = tempfile::tempdir().unwrap();
    let mut rows = linear_rows(10, 0.1, 2);
    for (i, r) in rows.iter_mut().enumerate() {
        r[1] = if i == 0 { 1.0 } else { 0.0 };
    }
    let data = write_csv(dir.path(), "a,b,y", &rows);
    // one fold holds out the only non-zero value of b
    assert!(matches!(
        cross_validate(&config(&data, LINEAR_MODEL), 10),
        Err(Error::DegenerateFold { .. })
    ));
}

#[test]
fn config_errors_surface_before_sampling() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_csv(dir.path(), "a,b,y", &linear_rows(10, 0.1, 3));
    let mut cfg = config(&data, LINEAR_MODEL);
    cfg.data.predictors = Some(vec!["a".into(), "zz".into()]);
    assert!(matches!(fit(&cfg), Err(Error::Data(m)) if m.contains("zz")));
}
