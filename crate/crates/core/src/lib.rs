//! Desk-scale inverse synthetic aperture radar imaging.
//!
//! A stationary monostatic UWB radar observes a rotating scene. This crate
//! simulates range-profile sinograms of point-target scenes, forms images by
//! time-domain backprojection, and reconstructs the scattering field by
//! fitting a hash-encoded neural field through a differentiable radar
//! renderer (analysis through synthesis).

// `!(x > 0.0)` style checks are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod field;
pub mod forward;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod recon;
pub mod signal;
pub mod sim;

pub use error::{IsarError, Result};
