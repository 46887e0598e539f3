//! Minimal dense-network engine: layers, backbones, losses, optimizer, and
//! the shared training loop.

pub mod layer;
pub mod loss;
pub mod net;
pub mod optim;
pub mod train;

pub use layer::{BatchNormState, DenseLayer};
pub use loss::{
    evidential_alpha, evidential_loss, evidential_loss_grad, gauss_reg_loss, softmax_rows,
    Targets, TrainLoss,
};
pub use net::{ArchDescriptor, Backbone, ForwardOutput, Mode};
pub use optim::OptimizerConfig;
pub use train::{
    accuracy, predict_probabilities, train_classifier, train_regressor, train_with_loss,
    EpochStats, TargetBuffer, TrainOutcome,
};
