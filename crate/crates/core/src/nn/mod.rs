//! Differentiable kernel: parameters, a reverse-mode tape, recurrent and
//! attention layers, Adam and a finite-difference checker.

mod checkpoint;
mod gradcheck;
mod layers;
mod optim;
mod params;
mod tape;

pub use checkpoint::{Checkpoint, MAGIC, VERSION};
pub use gradcheck::{grad_check, GradCheck, DEFAULT_EPS};
pub use layers::{Attended, Attention, Gru, GruLayer, Mlp};
pub use optim::{Adam, AdamSlot};
pub use params::{Grads, ParamId, ParamStore, Tensor, INIT_RANGE};
pub use tape::{log_softmax, sigmoid, softmax, softmax_xent, NodeId, Tape};
