//! Experiment harness: synthetic data, cost-config ingestion, the staged
//! pipeline, and report emission.

pub mod artifacts;
pub mod config;
pub mod pipeline;
pub mod report;
pub mod synthetic;

pub use config::{load_csv, load_csv_file, CostConfig, FeatureConfig, LoadedData};
pub use pipeline::{
    evaluate_model, load_data, merged_name, run_pipeline, train_test_split, DataSource, ExperimentSpec, Model,
    RunSeeds, Stage, DEFAULT_EPS, EPS_GRID, MERGE_PERCENTILES,
};
pub use report::{emit_report, Report, ReportFormat, ReportRow, RunReport, CSV_HEADER};
pub use synthetic::{gen_synthetic, Synthetic, SyntheticSpec};
