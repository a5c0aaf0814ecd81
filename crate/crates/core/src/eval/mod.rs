//! Feature-domain metrics, per-condition reports and the ablation harness.

mod ablation;
mod metrics;
mod report;

pub use ablation::{
    ablation_run, AblationGrid, AblationRow, AblationTable, CellMean, CellSpec, TrainerVariant, ABLATION_CSV_HEADER,
};
pub use metrics::{log_spectral_distance, mfcc_mse};
pub use report::{enhance_features, evaluate, no_enhancement, t60_bucket, MetricReport, Summary, UtteranceMetrics};
