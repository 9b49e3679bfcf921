//! Mask/PSD estimator: features, network, optimizer, training and
//! checkpoints.

pub mod checkpoint;
pub mod features;
pub mod network;
pub mod optim;
pub mod train;

pub use checkpoint::Checkpoint;
pub use features::{extract_features, network_input, stack_context, FeatureBlock, NormMode};
pub use network::{forward, init_params, LayerKind, ModelConfig, ModelParams, NamedTensor};
pub use optim::{Adam, PlateauSchedule};
pub use train::{
    eval_loss, predict, prepare_example, run_epoch, run_epoch_segments, train_step, EpochLog, Example, TrainConfig,
    TrainState, Utterance,
};
