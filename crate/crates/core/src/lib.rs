//! Core algorithms for identifying elastic material parameters from indirect
//! observations of a contact-constrained elastodynamic body.
//!
//! The crate is organised as a pipeline:
//!
//! * [`geometry`] — structured triangulations of rectangular domains with
//!   tagged boundaries,
//! * [`elastic`] — the time-dependent linear-elasticity forward solver with a
//!   penalty-consistent contact boundary term,
//! * [`observe`] — point, vertical-mean and von-Mises observation operators
//!   that condense a forward solution into a fixed-length vector,
//! * [`network`] — dense feed-forward surrogates trained to reproduce the
//!   parameter-to-observation map,
//! * [`ingrad`] — reverse-mode differentiation of a trained surrogate with
//!   respect to its *inputs*,
//! * [`estimator`] — gradient-descent and BFGS identification loops driven by
//!   the surrogate, plus objective-surface scans.
//!
//! Everything here is `no_std` + `alloc`; file formats, CLI plumbing and
//! parallel sweeps live in the companion `elastid-cli` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod elastic;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod ingrad;
pub mod linalg;
pub mod network;
pub mod observe;

pub use error::{Error, Result};
