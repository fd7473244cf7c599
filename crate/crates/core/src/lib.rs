//! MMSE-receiver mutual information of correlated MIMO channels: Monte
//! Carlo reference, large-system approximations and precoder optimization.

// `!(x < tol)` is used on purpose so that NaN counts as a failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod experiments;
pub mod largesys;
pub mod matcore;
pub mod mcsim;
pub mod optimize;
pub mod selftest;

pub use error::{Error, Result};
