//! Plug-in priors for the z-update.
//!
//! Any map from a cube to a cube of the same shape can act as the prior. The
//! solver never passes a noise level: denoisers are blind.

mod b3ddn;
mod train;

pub use b3ddn::{b3ddn_denoise, b3ddn_forward, B3ddn, B3ddnWeights, BatchNorm, Conv3d, Layer};
pub use train::{
    l1_loss_and_gradients, random_patch_pairs, smooth_cube, train_b3ddn, PatchPair, TrainOptions,
    TrainReport,
};

use crate::cube::HsiCube;
use crate::error::{Error, Result};
use crate::spectral::Spectral;

/// A blind denoising operator.
pub trait Denoiser: Sync {
    fn denoise(&self, z: &HsiCube) -> Result<HsiCube>;
}

/// Returns its input unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityDenoiser;

impl Denoiser for IdentityDenoiser {
    fn denoise(&self, z: &HsiCube) -> Result<HsiCube> {
        Ok(z.clone())
    }
}

/// `z / (1 + alpha)`: the proximal map of `(alpha/2)‖z‖²`.
#[derive(Debug, Clone, Copy)]
pub struct ShrinkageDenoiser {
    pub alpha: f64,
}

impl Denoiser for ShrinkageDenoiser {
    fn denoise(&self, z: &HsiCube) -> Result<HsiCube> {
        Ok(z.scale(1.0 / (1.0 + self.alpha)))
    }
}

/// Classical fallback: soft shrinkage of 3D spectral magnitudes.
#[derive(Debug, Clone, Copy)]
pub struct BaselineDenoiser {
    pub strength: f64,
}

impl Denoiser for BaselineDenoiser {
    fn denoise(&self, z: &HsiCube) -> Result<HsiCube> {
        baseline_denoise(z, self.strength)
    }
}

/// Soft-thresholds the magnitudes of the 3D DFT of `z` by
/// `strength × median(|ẑ|)` and transforms back. Zero strength is the identity.
pub fn baseline_denoise(z: &HsiCube, strength: f64) -> Result<HsiCube> {
    if !(strength >= 0.0 && strength.is_finite()) {
        return Err(Error::spec(format!(
            "denoising strength must be finite and non-negative, got {strength}"
        )));
    }
    if strength == 0.0 {
        return Ok(z.clone());
    }
    let plan = Spectral::for_cube(z);
    let mut f = plan.fft3(z)?;
    let mut mags: Vec<f64> = f.data().iter().map(|v| v.norm()).collect();
    let mid = mags.len() / 2;
    let (_, median, _) = mags.select_nth_unstable_by(mid, f64::total_cmp);
    let tau = strength * *median;
    for v in f.data_mut() {
        let m = v.norm();
        *v *= if m > tau { 1.0 - tau / m } else { 0.0 };
    }
    plan.ifft3(&f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degradation::gaussian_samples;

    fn rmse(a: &HsiCube, b: &HsiCube) -> f64 {
        (a.sub(b).unwrap().norm_sq() / a.len() as f64).sqrt()
    }

    #[test]
    fn zero_strength_is_identity() {
        let z = HsiCube::from_vec(3, 8, 8, gaussian_samples(1, 192)).unwrap();
        let out = baseline_denoise(&z, 0.0).unwrap();
        assert!(out.max_abs_diff(&z).unwrap() < 1e-12);
        assert!(baseline_denoise(&z, -1.0).is_err());
    }

    #[test]
    fn shrinkage_reduces_noise_energy() {
        let z = HsiCube::from_vec(4, 16, 16, gaussian_samples(2, 1024)).unwrap();
        let out = baseline_denoise(&z, 3.0).unwrap();
        assert!(out.norm_sq() < z.norm_sq());
        assert_eq!(out.shape(), z.shape());
    }

    #[test]
    fn improves_noisy_smooth_cube() {
        let clean = smooth_cube(8, 32, 32, 5);
        let noise = gaussian_samples(6, clean.len());
        let noisy = HsiCube::from_vec(
            8,
            32,
            32,
            clean
                .data()
                .iter()
                .zip(&noise)
                .map(|(c, n)| c + 0.05 * n)
                .collect(),
        )
        .unwrap();
        let before = rmse(&noisy, &clean);
        let best = [0.5, 1.0, 2.0, 3.0]
            .iter()
            .map(|&s| rmse(&baseline_denoise(&noisy, s).unwrap(), &clean))
            .fold(f64::INFINITY, f64::min);
        assert!(best < before, "{best} >= {before}");
    }

    #[test]
    fn simple_denoisers() {
        let z = HsiCube::filled(1, 2, 2, 3.0).unwrap();
        assert_eq!(IdentityDenoiser.denoise(&z).unwrap(), z);
        let s = ShrinkageDenoiser { alpha: 2.0 }.denoise(&z).unwrap();
        assert!(s.data().iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }
}
