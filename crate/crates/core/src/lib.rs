#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Forward model and inference for resonant photoluminescence-excitation
//! spectroscopy of erbium ensembles with single-photon detection.

pub mod analysis;
pub mod cavity;
pub mod dynamics;
pub mod error;
pub mod fit;
pub mod model;
pub mod reproduce;
pub mod synth;

pub use error::{Error, Result};
pub use model::{Catalog, DetectorModel, FitParameter, FitResult, ScanProtocol, SiteResonance};
pub use synth::Spectrum;
