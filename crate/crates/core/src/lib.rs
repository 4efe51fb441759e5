//! Level-set ensemble Kalman inversion for multi-frequency acoustic source
//! identification on a disk.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod enkf;
pub mod error;
pub mod experiment;
pub mod field;
pub mod forward;
pub mod level_set;
pub mod mesh;
pub mod metrics;
pub mod pgm;
pub mod phantom;
pub mod prior;
pub mod sparse;
pub mod special;

pub use error::{Error, Result};
