//! Training loop, ablation variants, configuration and checkpoints.

pub mod checkpoint;
mod config;
mod fit;
mod model;
mod variant;

pub use config::{TrainConfig, CONFIG_KEYS, RATE_SWITCH};
pub use fit::{
    initial_model, penalty_rate, step_seed, train, validation_score, STREAM_CALIBRATE, STREAM_INIT, STREAM_ITER,
    STREAM_SHUFFLE, STREAM_VALID,
};
pub use model::{
    Decoder, Encoder, HistoryRow, PriorParams, StepStreams, TrainedModel, Trainer, CALIBRATION_ROWS, HISTORY_COLUMNS,
    PREDICT_CHUNK,
};
pub use variant::{DecoderKind, EncoderKind, PriorKind, VariantSpec, PRESET_NAMES};
