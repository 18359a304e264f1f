//! Statistical dynamics of continuum birth-and-death particle systems.
//!
//! Everything lives on a periodic grid discretization of the torus `[0,L)^d`:
//! functions on finite configurations are stored level by level
//! ([`gamma::TruncatedGammaFunction`]), rates carry closed-form inverse
//! K-transforms ([`rates`]), and the hierarchy operators, Glauber
//! approximation chains and Kirkwood–Salzburg solvers are built on top.
//! The [`sim`] module is a continuum Monte Carlo oracle that shares none of
//! the grid machinery.
//!
//! The crate is `no_std` (with `alloc`); IO, CLI and file formats live in the
//! `gammadyn` companion crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod bounds;
pub mod ergodicity;
pub mod error;
pub mod evolution;
pub mod gamma;
pub mod glauber;
pub mod grid;
pub mod hierarchy;
pub mod kernel;
pub mod math;
pub mod presets;
pub mod rates;
pub mod sim;
pub mod stationary;
pub mod subsets;

pub use error::{Error, Result};
pub use gamma::TruncatedGammaFunction;
pub use grid::{Cell, GridGeometry};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
