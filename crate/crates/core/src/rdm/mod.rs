//! Learned denoising: labelling against a reference, the point classifier,
//! focal loss, training, checkpoints and temporal Kalman fusion.

mod focal;
mod label;
mod net;

pub use focal::{focal_loss, sigmoid, softplus, Focal, LOG_CLAMP};
pub use label::{knn_graph, label_points, KnnGraph};
pub use net::{ClassifierModel, EdgeConv, Linear, Network, Normalization, Topology, LEAK};
mod train;
pub use train::{
    evaluate_clouds, f1_score, train, train_with_progress, write_metrics_csv, write_metrics_csv_to, EpochMetrics,
    TrainConfig, TrainOutcome,
};
mod checkpoint;
mod denoise;
mod kalman;
pub use checkpoint::{read_checkpoint, read_checkpoint_from, write_checkpoint, write_checkpoint_to, CHECKPOINT_VERSION};
pub use denoise::{denoise, DenoiseParams, DenoisedFrame, Denoiser, TrackSet};
pub use kalman::{filter_sequence, kalman_fuse, KalmanParams, ScalarKalman};
