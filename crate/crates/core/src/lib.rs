pub mod cli;
pub mod error;
pub mod grid;
pub mod io;
pub mod kernels;
pub mod prediction;
pub mod quadrature;
pub mod simulation;
pub mod special_fn;
pub mod stats;
pub mod transfer_ops;
pub mod verify;
pub mod wiener_integral;

pub use error::{Error, Result};
pub use grid::{Grid, GridFunction};
