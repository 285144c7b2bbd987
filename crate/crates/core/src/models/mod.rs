//! Network definitions and the supervised training loop.

pub mod arch;
pub mod classifier;
pub mod train;

pub use arch::{LayerSpec, Stack};
pub use classifier::{argmax, l2_normalize, ClassifierArch, ClassifierModel, NEW_HEAD_GAIN};
pub use train::{
    train_classifier, AccessCounts, AccessLog, LossSelector, Origin, TrainConfig, TrainItem, TrainSummary,
    TrainingSet,
};
