//! Demonic pretraining, representation selection and the alternating
//! critic/classifier training loop.

mod config;
mod demonic;
mod wfc;

pub use config::{DemonicConfig, DemonicMode, LayerSelector, NetworkSpec, TrainConfig};
pub use demonic::{
    extract_representation, hidden_index, one_hot_argmax, pretrain_demonic, representation_dim, DemonicModel,
};
pub use wfc::{
    classifier_objective, classifier_step, critic_step, train_ce, train_wfc, validation_scores, EpochRecord,
    StepLoss, TrainHistory, TrainOutcome,
};
