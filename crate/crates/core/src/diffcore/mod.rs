//! Self-contained reverse-mode autodiff: arrays, special functions, compute
//! kernels, the operation tape, and a finite-difference checking harness.

pub mod array;
pub mod gradcheck;
pub mod kernels;
pub mod scalar;
pub mod special;
pub mod tape;

pub use array::Array;
pub use scalar::Real;
pub use tape::{DiffValue, Gradients, Tape};
