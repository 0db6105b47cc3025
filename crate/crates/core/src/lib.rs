//! Key agreement by mutual learning of tree parity machines.
//!
//! Two endpoints exchange public inputs and parity outputs until their
//! integer weight vectors coincide, derive a 128-bit session key from the
//! shared weights, then prove pre-shared codes to each other under that key.
//!
//! Weights and inputs are `i8`. Real-valued quantities are generic over
//! [`num::Real`] (`f32` or `f64`); the aliases below fix `f64` or `f32`.

pub mod channel;
pub mod codec;
pub mod error;
pub mod frame;
pub mod lab;
pub mod num;
pub mod protocol;
pub mod rng;
pub mod session;
pub mod tpm;

pub use error::{Error, Result};

pub type Evaluation64 = tpm::Evaluation<f64>;
pub type Evaluation32 = tpm::Evaluation<f32>;
pub type OrderParams64 = tpm::OrderParams<f64>;
pub type OrderParams32 = tpm::OrderParams<f32>;
