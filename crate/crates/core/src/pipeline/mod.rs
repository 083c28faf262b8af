//! The training and prediction pipelines behind the command-line tool:
//! configuration, on-disk dataset layout, and one function per subcommand.

mod commands;
mod config;
mod dataset;
mod report;

pub use commands::{
    cmd_augment, cmd_phantom, cmd_predict, cmd_preprocess, cmd_train, predict_volume, scan_id, AugmentSummary,
    PredictOutput, PredictionMetrics, PredictionResult, PreprocessOutput, PreprocessRecord, SplitMembership,
    TrainManifest, TrainOutput, VolumeFormat, CHECKPOINT_FILE, CURVES_FILE, MANIFEST_FILE, MASK_THRESHOLD,
};
pub use config::{DataConfig, PredictConfig, RunConfig};
pub use dataset::AugmentedTree;
pub use report::{cmd_count_params, cmd_describe, cmd_gradcheck, CountRow, GradcheckRow};
