//! Partial convolution, the FasterNet block, and CBAM attention.

pub mod cbam;
pub mod fasternet;
pub mod pconv;

pub use cbam::{
    cbam_backward, cbam_forward, channel_attention, channel_attention_backward, spatial_attention,
    spatial_attention_backward, CbamParams, CbamSpec, ChannelAttentionParams, ChannelMlp, Composition,
    SpatialAttentionParams,
};
pub use fasternet::{
    fasternet_block_backward, fasternet_block_forward, fasternet_block_forward_cached, he_uniform,
    FasterNetBlockSpec, FasterNetCache, FasterNetParams,
};
pub use pconv::{pconv_backward, pconv_forward, PConvSpec};
