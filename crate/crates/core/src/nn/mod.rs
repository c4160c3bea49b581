//! Small deterministic neural-network engine: conv/pool/dense forward pass,
//! reverse-mode gradients, weighted cross-entropy and Adam.

pub mod gradcheck;
pub mod loss;
pub mod network;
pub mod optim;

pub use loss::{checked_softmax, log_softmax, softmax, weighted_ce_grad, weighted_ce_terms};
pub use network::{Architecture, LayerSpec, Network};
pub use optim::{lr_schedule, Adam, AdamConfig};
