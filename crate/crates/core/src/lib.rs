//! Neural CCG supertagging with dynamically gated context windows.
//!
//! The crate implements a family of sequence taggers (window MLP, Elman and
//! Jordan RNNs, a forward LSTM, and a stacked bidirectional LSTM) that share
//! one input pipeline: token features are gathered over a context window and
//! each window slot is scaled by a learned logistic gate before entering the
//! network. Training is plain online SGD with word-level dropout on the
//! gates; every backward pass is validated against finite differences.

pub mod categories;
pub mod corpus;
pub mod dynwin;
pub mod error;
pub mod features;
pub mod gradcheck;
pub mod model_io;
pub mod networks;
pub mod numerics;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
