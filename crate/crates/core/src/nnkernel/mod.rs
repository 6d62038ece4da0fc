//! Minimal differentiable network kernel.
//!
//! A [`ModelGraph`] is a fixed stack of layers ([`LayerSpec`]) over
//! per-sample `[channels, height, width]` activations. Parameters are `f32`;
//! activations, gradients and reductions run in `f64`. Batched tensors have
//! shape `[n, c, h, w]`.

mod gradcheck;
mod graph;
mod layer;
mod ops;
mod optim;
pub mod persist;
mod tensor;

pub use gradcheck::{gradient_check, input_gradient_check, numeric_gradient, probe_points, relative_error, Loss, MAX_PROBES};
pub use graph::{BackwardOptions, ForwardCache, Gradients, Layer, Mode, ModelGraph};
pub use layer::{volume, Dims, LayerSpec, Padding};
pub use ops::mix_seed;
pub use optim::{update, OptimizerKind, OptimizerState};
pub use tensor::Tensor;

/// Splits `n` rows into consecutive chunks of at most `chunk` rows.
pub fn chunk_ranges(n: usize, chunk: usize) -> Vec<std::ops::Range<usize>> {
    (0..n.div_ceil(chunk)).map(|i| i * chunk..((i + 1) * chunk).min(n)).collect()
}

/// Inference over a large batch in fixed-size chunks (parallel when enabled).
pub fn predict_batched(model: &ModelGraph, inputs: &Tensor, chunk: usize) -> crate::Result<Tensor> {
    if inputs.rows() == 0 {
        let mut shape = vec![0];
        shape.extend_from_slice(&model.output_dims());
        return Ok(Tensor::zeros(shape));
    }
    let parts = crate::exec::try_map(&chunk_ranges(inputs.rows(), chunk), |r| {
        model.predict(&inputs.slice_rows(r.clone()))
    })?;
    Tensor::concat_rows(&parts)
}
