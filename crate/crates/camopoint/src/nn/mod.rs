//! Minimal f64 tensor/layer substrate for the candidate scorer.
//!
//! Everything runs on the CPU in deterministic loop order, so seeded runs are
//! bit-reproducible and analytic gradients can be checked against central
//! finite differences. Layers cache nothing themselves; forward passes return
//! whatever the matching backward pass needs.

mod adam;
mod layers;
mod tensor;

pub use adam::Adam;
pub use layers::{
    block_bounds, block_max_pool, block_max_pool_backward, concat_channels, global_avg_pool,
    global_avg_pool_backward, relu, relu_backward, relu_vec, relu_vec_backward, resize_bilinear,
    resize_bilinear_backward, sigmoid, split_channels, BlockPool, Conv2d, Linear,
};
pub use tensor::{Param, Tensor};
