//! Multiple template learning for structured prediction.
//!
//! Features instantiated by each extraction template form one group. Training
//! learns the per-group block weights together with a simplex-constrained
//! importance weight per template, using a 1-slack cutting-plane solver whose
//! restricted subproblem is a small quadratically constrained QP.
//!
//! Two structured tasks are provided on top of the generic trainer:
//!
//! * linear-chain sequence labeling ([`sequence`]) with Viterbi decoding, and
//! * edge-factored dependency parsing ([`dependency`]) with Eisner
//!   (projective) and Chu-Liu-Edmonds (non-projective) decoding.

pub mod corpus;
pub mod dependency;
pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod sequence;
pub mod solver;
pub mod template;

pub use error::{Error, Result};
