//! Pointwise dynamic speckle analysis of JPEG / JPEG2000 compressed image
//! sequences.
//!
//! The crate covers the whole desk-scale pipeline:
//!
//! * [`synth`] generates temporally correlated speckle frames from a map of
//!   correlation radii (random phase screen, 4f imaging, 2×2 pixel binning,
//!   8-bit quantization).
//! * [`estimators`] computes activity maps (MSF `S1`, normalized `S2`,
//!   σ-normalized `S1'`) and the mean normalized temporal correlation.
//! * [`codec`] round-trips frames through BMP, JPEG and JPEG2000.
//! * [`metrics`] compares maps (structural similarity), builds estimate
//!   histograms and ROI time series.
//! * [`pipeline`] ties everything to on-disk frame trees; it backs the `dsm`
//!   command-line tool.

pub mod codec;
pub mod error;
pub mod estimators;
pub mod export;
pub mod frames;
pub mod glyphs;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod scenario;
pub mod synth;

pub use error::{DsmError, Result};
