//! Tuning-free plug-and-play ADMM deconvolution of hyperspectral cubes.
//!
//! The observation model is `y = Hx + n` with a per-band circular blur `H`
//! and white Gaussian noise. [`solver::deconvolve`] alternates a closed-form
//! Fourier-domain least-squares step with a pluggable blind denoiser. Instead
//! of hand-tuned penalties and iteration counts, the penalty is re-chosen each
//! iteration to make the residual `Hx − y` as white as possible, and the loop
//! stops once that whiteness stops improving.
//!
//! Modules:
//! - [`cube`], [`spectral`]: cube storage, FFTs, PSF→OTF, circular convolution.
//! - [`degradation`]: benchmark kernels and synthetic observations.
//! - [`whiteness`]: the residual whiteness measure.
//! - [`solver`]: golden-section penalty search and the ADMM loop.
//! - [`denoiser`]: the `Denoiser` trait, a spectral-shrinkage baseline and the
//!   3D CNN denoiser with its trainer.
//! - [`metrics`]: RMSE, PSNR, SSIM, ERGAS.
//! - [`io`], [`config`], [`bench`]: file formats, run configuration and the
//!   scenario benchmark.

pub mod bench;
pub mod config;
pub mod cube;
pub mod degradation;
pub mod denoiser;
pub mod error;
pub mod io;
pub mod metrics;
pub mod solver;
pub mod spectral;
pub mod whiteness;

pub use cube::{HsiCube, KernelStack};
pub use error::{Error, Result};
