//! Markov-chain embedding of ranked unlabelled trees.
//!
//! A ranked unlabelled tree with `n` leaves is encoded by its F-matrix, and
//! the columns of that matrix, read right to left, form a sample path of an
//! absorbing, feed-forward Markov chain (the *ranked coalescent*). This crate
//! builds that chain and the machinery that rides on it:
//!
//! - [`statespace`]: the state space `X_n`, its tiers and the binary
//!   decremental encoding of states.
//! - [`kingman`]: the Kingman transition kernel as sparse tier-to-tier blocks,
//!   path sampling, path probabilities and exhaustive path enumeration.
//! - [`fmatrix`]: F-matrices, the path/F-matrix bijection, tree
//!   reconstruction, distances and balance indices.
//! - [`frechet`]: all Fréchet mean trees by dynamic programming with
//!   set-valued backtracking.
//! - [`phasetype`]: discrete phase-type distributions, reward transforms and
//!   multivariate reward moments.
//! - [`feedforward`]: tier-exploiting left/right products for the moments of
//!   non-fixed F-matrix entries at large `n`.
//! - [`bcp`]: the jump chain of the block-counting process.
//! - [`betasplit`]: Blum-François beta-splitting sampler for ranked shapes.
//! - [`neutrality`]: the G_E, W_F, W_SE and Hotelling tests plus a power
//!   harness.
//!
//! Probabilities are generic over [`Scalar`], implemented for exact
//! [`Rational`] arithmetic and for `f64`.

pub mod bcp;
pub mod betasplit;
pub mod error;
pub mod feedforward;
pub mod fmatrix;
pub mod frechet;
pub mod io;
pub mod kingman;
pub mod linalg;
pub mod neutrality;
pub mod phasetype;
pub mod scalar;
pub mod statespace;

pub use error::{Error, Result};
pub use scalar::{Rational, Scalar};
