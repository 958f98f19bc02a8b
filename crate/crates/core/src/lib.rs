//! Spatial upsampling of spherical microphone array captures.
//!
//! The crate is organised bottom-up:
//!
//! * [`specfun`] - Legendre, spherical Bessel/Hankel and spherical harmonics.
//! * [`sma`] - array geometry, spherical-harmonics encoding/expansion and the
//!   order-limited interpolation baseline.
//! * [`synth`] - analytic and image-source ground-truth fields.
//! * [`pinn`] - the sinusoidal Rowdy network, its Laplacian/gradient engine
//!   and the Helmholtz-regularised trainer.
//! * [`evalkit`] - NMSE metrics, Helmholtz residual probes and DFT bridges.
//! * [`io`] and [`cli`] - file formats and the experiment driver.

pub mod cli;
pub mod error;
pub mod evalkit;
pub mod io;
pub mod pinn;
pub mod sma;
pub mod specfun;
pub mod synth;

pub use error::{Error, Result};
pub use num_complex::Complex64;
