use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use hsprior::analysis::profiles::{product_ng_profiles, product_ngg_profiles, shis_scis_profiles, ProfileOptions};
use hsprior::analysis::{
    cross_validate, fit, summarize_samples, verify_theorems, write_cv, write_fit, write_summaries, write_verification,
    RunConfig, VerifyOptions,
};
use hsprior::shrinkage::write_profiles_csv;
use hsprior::{Error, Result};

#[derive(Parser)]
#[command(name = "hsprior", version, about = "Hierarchical sparsity priors for Bayesian regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the sampler seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the posterior on the full data and write summaries.
    Fit(RunArgs),
    /// K-fold cross-validation (RMSE of the predictive median, log predictive score).
    Cv {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        folds: Option<usize>,
        /// Also cross-validate the single-shape baseline prior.
        #[arg(long)]
        baseline: bool,
    },
    /// Write shrinkage-profile tables.
    Shrink {
        #[arg(long, default_value = "shrinkage")]
        out: PathBuf,
        /// Marginal shape; repeat for several panels.
        #[arg(long, num_args = 1..)]
        lambda2: Option<Vec<f64>>,
        /// Tail parameter of the gamma-gamma products; repeatable.
        #[arg(long, num_args = 1..)]
        tail: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1.0)]
        se: f64,
    },
    /// Monte-Carlo checks of the sparsity-shape results and the product density.
    Verify {
        #[arg(long, default_value = "verification.csv")]
        out: PathBuf,
        #[arg(long, default_value_t = 10_000_000)]
        draws: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Median and 95% interval of every column of a samples file.
    Summarize {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(run: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_file(&run.config)?;
    if let Some(seed) = run.seed {
        cfg.chain.seed = seed;
        cfg.cv.chain.seed = seed;
    }
    if let Some(out) = &run.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn execute(cmd: Command) -> Result<serde_json::Value> {
    match cmd {
        Command::Fit(run) => {
            let cfg = load(&run)?;
            let out = fit(&cfg)?;
            let files = write_fit(&out, &cfg.output.dir)?;
            Ok(json!({
                "command": "fit",
                "draws": out.report.n_draws,
                "hyperparameters": out.report.hyperparameters,
                "acceptance_range": [out.report.acceptance_min, out.report.acceptance_max],
                "warnings": out.report.warnings,
                "files": files,
            }))
        }
        Command::Cv { run, folds, baseline } => {
            let cfg = load(&run)?;
            let k = folds.unwrap_or(cfg.cv.folds);
            let report = cross_validate(&cfg, k)?;
            write_cv(&report, &cfg.output.dir, "model")?;
            let mut value = json!({
                "command": "cv",
                "folds": k,
                "model": {"rmse": report.rmse, "lps": report.lps},
            });
            if baseline {
                let base = cross_validate(&cfg.independent_baseline(), k)?;
                write_cv(&base, &cfg.output.dir, "baseline")?;
                value["baseline"] = json!({"rmse": base.rmse, "lps": base.lps});
            }
            Ok(value)
        }
        Command::Shrink { out, lambda2, tail, se } => {
            let mut opts = ProfileOptions { se, ..ProfileOptions::default() };
            if let Some(l) = lambda2 {
                opts.lambda2 = l;
            }
            if let Some(c) = tail {
                opts.tails = c;
            }
            std::fs::create_dir_all(&out)?;
            let mut files = Vec::new();
            for (name, profiles) in [
                ("products_ng.csv", product_ng_profiles(&opts)?),
                ("products_ngg.csv", product_ngg_profiles(&opts)?),
                ("shis_scis.csv", shis_scis_profiles(&opts)?),
            ] {
                let path = out.join(name);
                write_profiles_csv(&path, &profiles)?;
                files.push(path);
            }
            Ok(json!({"command": "shrink", "files": files}))
        }
        Command::Verify { out, draws, seed } => {
            let opts = VerifyOptions {
                draws,
                seed,
                ..VerifyOptions::default()
            };
            let report = verify_theorems(&opts);
            write_verification(&report, &out)?;
            let failed: Vec<&str> = report.rows.iter().filter(|r| !r.pass).map(|r| r.check.as_str()).collect();
            Ok(json!({
                "command": "verify",
                "rows": report.rows.len(),
                "failed": failed,
                "report": out,
            }))
        }
        Command::Summarize { samples, out } => {
            let rows = summarize_samples(&samples)?;
            match &out {
                Some(path) => {
                    write_summaries(&rows, path)?;
                    Ok(json!({"command": "summarize", "quantities": rows.len(), "file": path}))
                }
                None => {
                    println!("quantity,median,ci_low,ci_high");
                    for r in &rows {
                        println!("{},{},{},{}", r.name, r.summary.median, r.summary.ci_low, r.summary.ci_high);
                    }
                    Ok(serde_json::Value::Null)
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let verify = matches!(cli.command, Command::Verify { .. });
    match execute(cli.command) {
        Ok(value) => {
            let failed = verify && value["failed"].as_array().is_some_and(|f| !f.is_empty());
            if !value.is_null() {
                println!("{value}");
            }
            if failed {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            let record = json!({"error": {"kind": e.kind(), "message": e.to_string()}});
            eprintln!("{record}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Toml(_) | Error::Data(_) | Error::Csv(_) | Error::Io(_) => 2,
        _ => 1,
    }
}
