//! Simulation toolkit for single-lens infrared computational imaging.
//!
//! - [`optics`]: field- and wavelength-dependent PSFs from pupil wavefronts.
//! - [`degrade`]: patchwise spatially varying blur plus quantization and noise.
//! - [`blurmap`]: per-region blur factors, blur-index maps and branch gates.
//! - [`bridge`]: reference forward pass of the PSF-gated large/small bridge block.
//! - [`dataset`]: paired clean/degraded dataset generation and fidelity metrics.
//! - [`config`] and [`psf_io`]: pipeline configuration and the PSF grid container.

mod binio;
pub mod blurmap;
pub mod bridge;
pub mod config;
pub mod dataset;
pub mod degrade;
pub mod error;
pub mod fft;
pub mod optics;
pub mod plane;
pub mod psf_io;

pub use error::{ConfigError, Error, FormatError, Result};
pub use plane::ImagePlane;
