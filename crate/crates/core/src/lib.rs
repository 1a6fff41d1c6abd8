#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
extern crate alloc;

pub mod detect;
pub mod env;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod policy;

pub use error::{Error, Result};
