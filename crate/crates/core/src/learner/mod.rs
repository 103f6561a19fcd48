//! Small softmax classifiers over fixed featurizers, their losses and a
//! deterministic minibatch SGD driver.

mod features;
mod loss;
mod model;
mod train;

pub use features::{featurize, featurize_all, ngram_hash, FeatureSpec, Features, PairMode};
pub use loss::{dfl_loss, dfl_weights, poe_loss, weighted_ce_loss, Batch, PoeVariant};
pub use model::{argmax, log_softmax_at, softmax, HiddenLayer, LinearModel};
pub use train::{
    accuracy, epoch_order, train, train_inputs, train_poe, Inputs, OptConfig, TrainLog,
    SHUFFLE_STREAM,
};
