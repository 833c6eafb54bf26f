// Validation writes `!(a < b)` so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod continuation;
pub mod error;
pub mod exec;
pub mod fiber;
pub mod field;
pub mod geometry;
pub mod higgs;
pub mod instances;
pub mod pair;
pub mod serde_float;
pub mod sweep;
pub mod verify;

pub use error::{Error, Result};
