//! Transformer building blocks and modality gating.

mod amf;
mod attention;
mod cbt;
mod dropout;
mod params;

pub use amf::{amf_gate, amf_mask, AmfParams};
pub use attention::{init_attention, multi_head_self_attention, AttentionParams};
pub use cbt::{cbt_forward, init_cbt, CbtBlockParams};
pub(crate) use dropout::check_rate as check_dropout_rate;
pub use dropout::Dropout;
pub use params::{init_layer_norm, init_linear, linear, Bound, ParamSet};
