//! Resolution machinery for `7x(x² + 12r²) = yᵖ`, the sum of the cubes of a
//! seven-term arithmetic progression `x − 3r, …, x + 3r` equated to a perfect
//! power.
//!
//! The crate is organised as a set of stages that can be used on their own
//! (see the `examples/` directory) or chained by [`pipeline::run`].

pub mod arith;
pub mod bounds;
pub mod cases;
pub mod germain;
pub mod lattice;
pub mod lehmer;
pub mod localsolve;
pub mod quadfield;
pub mod selmer;
pub mod pipeline;
pub mod thue;
pub mod error;

pub use error::{Error, Result};
