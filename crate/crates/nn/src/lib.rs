//! Minimal dense neural-network toolkit: `f64` tensors, a tape-based
//! reverse-mode autodiff, a handful of layers, a linear-chain CRF and Adam.
//!
//! Everything is single-threaded and deterministic for a fixed seed.

pub mod crf;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tensor;

pub use gradcheck::{check_gradients, check_gradients_sampled, GradCheckReport};
pub use graph::{Gradients, Graph, Var};
pub use layers::{Activation, AttentionBlock, BiLstm, FeedForward, Linear, Lstm};
pub use optim::{Adam, AdamConfig};
pub use params::{Init, ParamId, ParamStore};
pub use tensor::Tensor;
