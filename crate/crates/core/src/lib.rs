//! Physics-guided unrolled MRI reconstruction with multi-mask self-supervised
//! training, together with supervised, single-mask and CG-SENSE baselines and
//! a synthetic multi-coil phantom benchmark.

pub mod container;
pub mod error;
pub mod experiment;
pub mod kspace;
pub mod metrics;
pub mod nn;
pub mod phantom;
pub mod rng;
pub mod sampling;
pub mod solver;
pub mod training;

pub use error::{Error, FormatError, Result};
