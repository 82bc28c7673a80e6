//! The outer active-learning loop, evaluation, replication and export.

mod auc;
mod export;
mod replicate;
mod run;
mod toy;

pub use auc::auc;
pub use export::{export_results, import_results, ExportFormat, CSV_HEADER};
pub use replicate::{median_curve, replicate, ReplicateResult, StrategyCurves};
pub use run::{
    fit_round, prepare, run_active_learning, run_active_learning_observed, CurveMetadata,
    CurvePoint, ExperimentConfig, LearningCurve, PreparedData, Schedule,
};
pub use toy::{purity, toy_region_demo, PurityReport, PurityRow, Representation, ToyDemoConfig};
