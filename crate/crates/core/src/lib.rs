#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod cli;
pub mod error;
pub mod fdata;
pub mod linalg;
pub mod ffrm;
pub mod pls;
pub mod simlab;

pub use error::{Error, Result};
