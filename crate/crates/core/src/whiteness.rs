//! Scale-free whiteness of 3D residual cubes.
//!
//! For a residual `R` with `L = N·P·Q` voxels the circular autocorrelation is
//! `A = (R ⋆ R) / L`, and the whiteness measure is the squared Frobenius norm
//! of the autocorrelation normalized by its zero lag:
//!
//! ```text
//! W(R) = ‖R ⋆ R‖²_F / ‖R‖⁴_F
//! ```
//!
//! The zero lag always contributes exactly 1, so `W ≥ 1` with equality for a
//! perfectly white (impulse-like) residual. Both quantities come straight
//! from the 3D spectrum: `DFT(R ⋆ R) = |R̂|²`, hence
//! `W = L·Σ|R̂|⁴ / (Σ|R̂|²)²` without any inverse transform.

use num_complex::Complex64;

use crate::cube::HsiCube;
use crate::error::{Error, Result};
use crate::spectral::Spectral;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhitenessReport {
    /// The whiteness measure `W(R)`.
    pub w: f64,
    /// Zero-lag autocorrelation `‖R‖²_F / L`.
    pub zero_lag: f64,
    /// Voxel count `L`.
    pub l: usize,
}

/// Full circular 3D autocorrelation `(R ⋆ R) / L` over every lag.
pub fn autocorr3d(r: &HsiCube) -> Result<HsiCube> {
    let plan = Spectral::for_cube(r);
    let mut f = plan.fft3(r)?;
    let l = r.len() as f64;
    for v in f.data_mut() {
        *v = Complex64::new(v.norm_sqr() / l, 0.0);
    }
    plan.ifft3(&f)
}

/// Whiteness of a residual given its full 3D spectrum.
pub fn whiteness_from_spectrum(spectrum: &[Complex64]) -> Result<f64> {
    let (mut s2, mut s4) = (0.0, 0.0);
    for v in spectrum {
        let p = v.norm_sqr();
        s2 += p;
        s4 += p * p;
    }
    if s2 == 0.0 || !s2.is_finite() {
        return Err(Error::DegenerateResidual);
    }
    Ok(spectrum.len() as f64 * (s4 / s2) / s2)
}

/// Computes `W(R)` through the 3D DFT.
pub fn whiteness_measure(r: &HsiCube) -> Result<WhitenessReport> {
    let energy = r.norm_sq();
    if energy == 0.0 {
        return Err(Error::DegenerateResidual);
    }
    let plan = Spectral::for_cube(r);
    let f = plan.fft3(r)?;
    let w = whiteness_from_spectrum(f.data())?;
    Ok(WhitenessReport {
        w,
        zero_lag: energy / r.len() as f64,
        l: r.len(),
    })
}
