//! Feed-forward network engine: parameters, forward pass with cached
//! activations, analytic backpropagation, optimizers and weight clamping.

mod checkpoint;
mod fit;
mod loss;
mod mlp;
mod optim;

pub use checkpoint::{load_model, read_model, save_model, write_model, MODEL_MAGIC};
pub use fit::{accuracy_percent, fit_classifier, predict_labels, FitConfig, FitOutcome};
pub use loss::cross_entropy;
pub use mlp::{init_limit, Activation, Backprop, ForwardTrace, Gradients, Mlp};
pub use optim::{OptimizerKind, OptimizerSpec, OptimizerState};
