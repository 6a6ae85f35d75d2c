#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod direct_fill;
pub mod error;
pub mod experiments;
pub mod implicit_fill;
pub mod lattice;
pub mod fill_policy;
pub mod stencil;
pub mod testdata;
pub mod theory;
pub mod walk_oracle;

pub use error::{Error, Result};
