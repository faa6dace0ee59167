//! Minimal differentiable encoder-decoder network family: explicit
//! forward/backward passes, Adam optimization, and per-group freeze masks.

mod adam;
mod backward;
mod forward;
mod loss;
mod params;
pub mod presets;
mod spec;

pub use adam::{adam_step, Moments, OptimizerState};
pub use backward::backward;
pub(crate) use backward::earliest_trainable;
pub use forward::{forward, Tape};
pub use loss::{add_prox_grads, loss_and_grad, ProxTerm};
pub use params::{
    build_model, derive_round_seed, FreezeMask, GradMap, LayerGrads, LayerParams, ParamSet,
};
pub use spec::{Group, GroupSel, LayerKind, LayerShape, LayerSpec, ModelConfig};
