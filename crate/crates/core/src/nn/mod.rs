//! Minimal backprop engine for the 1D ResNet backbone.
//!
//! Everything is generic over [`Scalar`] so the same code runs in `f32` for
//! training and in `f64` for finite-difference gradient checks.

mod adam;
pub mod gradcheck;
mod io;
mod loss;
mod ops;
mod resnet;
mod scalar;
mod tensor;
mod train;

pub use adam::{AdamConfig, AdamState};
pub use io::{load_model, read_model, save_model, write_model, ModelDescriptor, MODEL_MAGIC, MODEL_VERSION};
pub use loss::{
    argmax, cross_entropy, cross_entropy_backward, kl_divergence, kl_divergence_backward,
    log_t_softmax, t_softmax, t_softmax_backward, LOG_CLAMP,
};
pub(crate) use loss::softmax_unchecked;
pub use ops::{
    batch_norm_backward, batch_norm_eval, batch_norm_train, conv1d, conv1d_backward,
    conv1d_forward, conv1d_grad, BatchNormCache, Conv1dGrads, Conv1dSpec,
};
pub use resnet::{
    pack_batch, Forward, Mode, ParamInfo, Resnet1d, Resnet1dConfig, StemConfig, Trace, BN_EPS,
    BN_MOMENTUM,
};
pub use scalar::Scalar;
pub use tensor::Tensor;
pub use train::{
    accuracy, predict, predict_logits, predict_proba, train, train_with, CrossEntropy,
    EpochRecord, History, Objective, Samples, TrainConfig,
};
