//! Data ingestion, fitting, posterior summaries, cross-validation and the
//! verification and profile reports behind the command-line tool.

pub mod config;
pub mod cv;
pub mod data;
pub mod fit;
pub mod profiles;
pub mod summary;
pub mod verify;

pub use config::{CvConfig, DataConfig, DesignConfig, OutputConfig, PriorConfig, PriorConstructor, ResponseTransform, RunConfig};
pub use cv::{cross_validate, cross_validate_dataset, fold_assignments, write_cv, CvReport, FoldResult, Prediction};
pub use data::{ingest_csv, Dataset};
pub use fit::{fit, fit_dataset, prepare, summarize_samples, write_fit, write_summaries, FitOutput, FitReport, NamedSummary, NodeSummary, Prepared};
pub use summary::{posterior_summary, quantile_sorted, PosteriorSummary, MIN_SUMMARY_DRAWS};
pub use verify::{verify_theorems, write_verification, VerificationReport, VerifyOptions, VerifyRow};
