//! Dense neural-network core.
//!
//! Everything here is a pure function over immutable inputs: forward pass,
//! backpropagation for cross-entropy and KL-to-target losses,
//! temperature-scaled softmax, KL divergence, and mixup. All arithmetic is
//! `f64`; there is no internal shared state, so callers may invoke these from
//! parallel workers freely.

mod net;
mod params;
mod tensor;

pub use net::{
    backprop, forward_logits, kl_divergence, mixup, mixup_with_lambdas, softmax_temp, Activation,
    LossKind, MlpSpec,
};
pub use params::{ParamLayout, ParamVector, Segment};
pub use tensor::{Batch, Tensor};
