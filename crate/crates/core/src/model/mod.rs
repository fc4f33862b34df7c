//! The trainable network and its exact backward pass.

mod adam;
pub mod checkpoint;
pub mod fusion;
mod gradcheck;
pub mod mlp;
mod network;
mod params;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gradcheck::{compare_gradients, grad_check, grad_check_with_step, numeric_gradients};
pub use network::{
    backward, backward_from_logits, batch_targets, check_inputs, cross_entropy, forward,
    logit_gradient, loss, loss_and_grad, split_fused, ForwardCache, FusionCache, Mode,
};
pub use params::{
    init_params, FusionMode, FusionParams, Gradients, InputSpec, ModelConfig, ModelParams,
};

use crate::metapath::SemanticMatrix;

/// Input specs matching a list of semantic matrices, in order.
pub fn input_specs(matrices: &[SemanticMatrix]) -> Vec<InputSpec> {
    matrices
        .iter()
        .map(|m| InputSpec {
            metapath: m.metapath.clone(),
            dim: m.matrix.cols(),
        })
        .collect()
}
