#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod error;
pub mod explore;
pub mod grid;
pub mod guidance;
pub mod perception;
pub mod prompt;
pub mod sim;
pub mod splat;
pub mod verify;
pub mod viewpoint;

pub use error::{Error, Result};
pub use grid::Grid;
