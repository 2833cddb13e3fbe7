//! Behavioral-similarity metrics for finite MDPs and what they buy you:
//! contrastive metric embeddings for zero-shot generalization, nearest-
//! neighbor policy transfer with a verified suboptimality bound, and two
//! desk-scale generalization experiments (a pixel jumping task and LQR with
//! distractor observations).

pub mod embed;
pub mod envs;
pub mod error;
pub mod io;
pub mod linalg;
pub mod lqr_gen;
pub mod mdp;
pub mod metrics;
pub mod rng;
pub mod transfer;

pub use error::{Error, Result};
