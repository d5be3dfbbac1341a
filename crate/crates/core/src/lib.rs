// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acsalg;
pub mod cli;
pub mod detbundle;
pub mod error;
pub mod jlo;
pub mod linalg;
pub mod renorm;
pub mod specops;
pub mod traces;

pub use error::{Error, Result};
