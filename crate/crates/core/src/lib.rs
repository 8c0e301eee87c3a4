//! Force-aware reactive manipulation, desk scale.
//!
//! This crate holds everything that is pure computation and needs nothing
//! beyond `alloc`:
//!
//! - [`numeric`]: dense tensors, a reverse-mode tape, network blocks, the
//!   optimizer, the learning-rate schedule and finite-difference checking.
//! - [`sim`]: a seeded contact-rich simulator with a noisy six-axis
//!   force/torque sensor, a scripted expert and disturbance injection.
//! - [`demo`]: contact-label extraction, normalization, augmentation and
//!   training-sample assembly.
//! - [`policy`]: scene and force encoders, the future contact predictor,
//!   gated fusion, the diffusion action head, the combined loss and training.
//! - [`runtime`]: the reactive deployment controller with dual temporal
//!   ensemble buffers.
//! - [`eval`]: trial scoring, action success rates and segment statistics.
//!
//! File formats, the command line and the evaluation driver live in the
//! companion `foar` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod demo;
pub mod eval;
pub mod geom;
pub mod numeric;
pub mod policy;
pub mod rng;
pub mod runtime;
pub mod sim;

pub use numeric::{Graph, NumericError, ParamStore, Precision, Tensor, Var};
