//! Tensor operators with hand-derived backward passes.

pub mod activation;
pub mod conv;
pub mod linear;
pub mod pool;

pub use activation::{activation, activation_backward, mish, sigmoid, softplus, Activation};
pub use conv::{conv2d_backward, conv2d_forward, conv_out_size, ConvGrads, ConvSpec};
pub use linear::{fully_connected, fully_connected_backward, LinearGrads, LinearSpec, Matrix};
pub use pool::{
    global_pool, global_pool_backward, spatial_stats, spatial_stats_backward, spp, spp_backward,
    PoolKind,
};
