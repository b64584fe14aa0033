//! Training, evaluation and analysis.
//!
//! - [`train_classifier`], [`train_ensemble`] and [`train_autoencoder`] share
//!   one mini-batch Adam loop with a cosine or constant schedule and early
//!   stopping on validation loss.
//! - [`evaluate`] thresholds probabilities and scores them per class.
//! - [`random_search`] samples hyperparameter grids.
//! - [`predict_timeline`] and [`smooth`] produce and clean per-timestamp
//!   decisions.
//! - [`pca_fit`] projects learned features to two dimensions.

mod metrics;
mod pca;
pub mod report;
mod search;
mod timeline;
mod trainer;

pub use metrics::{decide, evaluate, score, ClassMetrics, ConfusionMatrix, Metrics, DEFAULT_THRESHOLD};
pub use pca::{pca_fit, pca_project, PcaModel, PCA_MAX_ITERATIONS, PCA_TOLERANCE};
pub use search::{
    apply_sample, best_index, random_search, tune, ParamGrid, Sample, SearchResult, SearchSpace, TrialMeta, TrialResult,
};
pub use timeline::{predict_timeline, smooth, smooth_run_lengths, PredictionTrack, TimelineOptions};
pub use trainer::{
    reconstruction_mse, train_autoencoder, train_classifier, train_ensemble, EarlyStopping, EpochRecord, History,
    RunMeta, Schedule, TrainConfig,
};
