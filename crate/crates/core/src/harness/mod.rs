//! Experiment plumbing: configuration, training loop, evaluation, trajectory
//! records with audit replay, and CSV/SVG output.

pub mod config;
pub mod csv;
pub mod eval;
pub mod records;
pub mod svg;
pub mod train;

pub use config::{ExperimentConfig, OUTPUT_ENV};
pub use eval::{evaluate, evaluate_tasks, Decoding, EvalSummary};
pub use records::{audit_records, read_records, write_records, AuditReport, TrajectoryRecord};
pub use train::{run_training, seed_dir, train_seed, SeedRun, StepMetrics};
