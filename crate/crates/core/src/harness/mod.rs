//! Metrics, latency measurement and experiment grids.

mod grid;
mod latency;
mod metrics;

pub use grid::{
    column_name, member_seed, run_experiment_grid, ExperimentReport, GridCell, GridConfig,
    RunRecord, SeedRun,
};
pub use latency::{bench, mean_sd, measure_latency, BenchReport, Classifier, LatencyStats, MIN_WARMUP};
pub use metrics::{
    compute_metrics, confusion_matrix, f1_score, write_class_metrics_csv, write_confusion_csv,
    ClassMetrics, Metrics,
};
