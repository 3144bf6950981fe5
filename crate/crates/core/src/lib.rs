//! Cross-supervised dual-classifier training for semi-supervised 2-D
//! segmentation.
//!
//! One shared convolutional encoder feeds two pixel classifiers: an
//! *evidential* head that maps evidence to a Dirichlet distribution (giving
//! calibrated per-pixel uncertainty) and a *vanilla* softmax head. Each head
//! supervises the other on unlabeled data through an uncertainty-weighted
//! consistency loss, so confident pixels teach and ambiguous pixels are
//! discounted.
//!
//! The crate is layered bottom-up:
//!
//! - [`diffcore`] — arrays, gamma-family special functions, conv/softmax
//!   kernels, a define-by-run reverse-mode tape, and a finite-difference
//!   gradient-check harness;
//! - [`heads`] — evidence activations and the Dirichlet head outputs
//!   (probabilities, uncertainty, confidence), plus prediction fusion;
//! - [`losses`] — supervised cross-entropy, the evidential risk with its
//!   annealed regulariser, and the uncertainty-weighted consistency pair;
//! - [`netmodel`] — the shared-encoder/two-head network, initialisation,
//!   inference and checkpointing;
//! - [`synthdata`] — the deterministic synthetic shape benchmark;
//! - [`metrics`] — overlap and surface-distance evaluation;
//! - [`trainer`] — the optimisation loop, ablation grid, label-budget sweep
//!   and uncertainty-map export.
//!
//! Numeric code is generic over the scalar (`f32`/`f64`) through
//! [`diffcore::Real`]; the training pipeline itself runs in `f64`, for which
//! the crate root exports concrete aliases.

pub mod diffcore;
pub mod error;
pub mod heads;
pub mod losses;
pub mod metrics;
pub mod netmodel;
pub mod synthdata;
pub mod trainer;

pub use error::{Error, Result};

pub use diffcore::{Array, DiffValue, Gradients, Real, Tape};

/// Dense `f64` array, the pipeline's working precision.
pub type Array64 = Array<f64>;
/// Operation tape over `f64`.
pub type Tape64 = Tape<f64>;
/// Recorded `f64` value.
pub type Value64<'t> = DiffValue<'t, f64>;
/// Gradient set over `f64`.
pub type Gradients64 = Gradients<f64>;
