//! Reconstruction quality metrics. All of them work on 255-scaled intensities.

use crate::cube::HsiCube;
use crate::error::{Error, Result};

pub const PSNR_CAP_DB: f64 = 100.0;
const SCALE: f64 = 255.0;
pub const SSIM_C1: f64 = (0.01 * SCALE) * (0.01 * SCALE);
pub const SSIM_C2: f64 = (0.03 * SCALE) * (0.03 * SCALE);

/// Which band mean normalizes the ERGAS error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErgasMean {
    #[default]
    Reference,
    Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub rmse: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub ergas: f64,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "rmse,psnr,ssim,ergas";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6}",
            self.rmse, self.psnr, self.ssim, self.ergas
        )
    }
}

fn check(x_hat: &HsiCube, x: &HsiCube) -> Result<()> {
    x_hat.ensure_same_shape(x)
}

fn band_sq_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| {
            let d = (p - q) * SCALE;
            d * d
        })
        .sum()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() * SCALE / v.len() as f64
}

/// `√(Σ‖X̂ − X‖² / L)` on the 0–255 scale.
pub fn rmse(x_hat: &HsiCube, x: &HsiCube) -> Result<f64> {
    check(x_hat, x)?;
    Ok((band_sq_err(x_hat.data(), x.data()) / x.len() as f64).sqrt())
}

/// Band-averaged `10·log₁₀(PQ·max(X_i)² / ‖X̂_i − X_i‖²)`, capped at 100 dB per band.
pub fn psnr(x_hat: &HsiCube, x: &HsiCube) -> Result<f64> {
    check(x_hat, x)?;
    let mut total = 0.0;
    for b in 0..x.bands() {
        let (est, reference) = (x_hat.band(b), x.band(b));
        let peak = reference.iter().cloned().fold(f64::MIN, f64::max) * SCALE;
        if peak <= 0.0 {
            return Err(Error::Metric(format!(
                "reference band {b} has no positive maximum"
            )));
        }
        let err = band_sq_err(est, reference);
        let v = if err == 0.0 {
            PSNR_CAP_DB
        } else {
            (10.0 * (reference.len() as f64 * peak * peak / err).log10()).min(PSNR_CAP_DB)
        };
        total += v;
    }
    Ok(total / x.bands() as f64)
}

/// SSIM of one band from global statistics.
fn ssim_band(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (mean(a), mean(b));
    let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
    for (p, q) in a.iter().zip(b) {
        let (da, db) = (p * SCALE - ma, q * SCALE - mb);
        va += da * da;
        vb += db * db;
        cov += da * db;
    }
    let (va, vb, cov) = (va / n, vb / n, cov / n);
    ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
        / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2))
}

/// Band-averaged SSIM computed from whole-band means, variances and covariance.
pub fn ssim(x_hat: &HsiCube, x: &HsiCube) -> Result<f64> {
    check(x_hat, x)?;
    let total: f64 = (0..x.bands())
        .map(|b| ssim_band(x_hat.band(b), x.band(b)))
        .sum();
    Ok(total / x.bands() as f64)
}

/// `100·√(mean_i (MSE_i / mean_i²))` with the reference band mean by default.
pub fn ergas(x_hat: &HsiCube, x: &HsiCube) -> Result<f64> {
    ergas_with(x_hat, x, ErgasMean::Reference)
}

pub fn ergas_with(x_hat: &HsiCube, x: &HsiCube, denom: ErgasMean) -> Result<f64> {
    check(x_hat, x)?;
    let mut total = 0.0;
    for b in 0..x.bands() {
        let (est, reference) = (x_hat.band(b), x.band(b));
        let mu = match denom {
            ErgasMean::Reference => mean(reference),
            ErgasMean::Estimate => mean(est),
        };
        if mu == 0.0 {
            return Err(Error::Metric(format!("band {b} has zero mean")));
        }
        total += band_sq_err(est, reference) / reference.len() as f64 / (mu * mu);
    }
    Ok(100.0 * (total / x.bands() as f64).sqrt())
}

pub fn evaluate(x_hat: &HsiCube, x: &HsiCube) -> Result<MetricReport> {
    Ok(MetricReport {
        rmse: rmse(x_hat, x)?,
        psnr: psnr(x_hat, x)?,
        ssim: ssim(x_hat, x)?,
        ergas: ergas(x_hat, x)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degradation::gaussian_samples;

    fn random(seed: u64, n: usize, p: usize, q: usize) -> HsiCube {
        let v = gaussian_samples(seed, n * p * q);
        HsiCube::from_vec(n, p, q, v.iter().map(|e| 0.5 + 0.1 * e).collect()).unwrap()
    }

    #[test]
    fn identical_inputs_are_fixed_points() {
        let x = random(1, 3, 8, 8);
        let r = evaluate(&x, &x).unwrap();
        assert_eq!(r.rmse, 0.0);
        assert_eq!(r.psnr, PSNR_CAP_DB);
        assert!((r.ssim - 1.0).abs() < 1e-15);
        assert_eq!(r.ergas, 0.0);
    }

    #[test]
    fn rmse_cases() {
        let x = random(2, 2, 4, 4);
        let shifted = x.map(|v| v + 1.0 / 255.0);
        assert!((rmse(&shifted, &x).unwrap() - 1.0).abs() < 1e-12);

        let x = HsiCube::zeros(2, 2, 2).unwrap();
        let mut y = x.clone();
        y.data_mut()[0] = 3.0 / 255.0;
        y.data_mut()[1] = 4.0 / 255.0;
        assert!((rmse(&y, &x).unwrap() - (25.0f64 / 8.0).sqrt()).abs() < 1e-12);
        assert_eq!(rmse(&y, &x).unwrap(), rmse(&x, &y).unwrap());
        assert!(rmse(&x, &HsiCube::zeros(1, 2, 2).unwrap()).is_err());
    }

    #[test]
    fn psnr_cases() {
        // max 1, per-pixel MSE 1e-4 → 40 dB.
        let x = HsiCube::from_fn(
            1,
            10,
            10,
            |_, r, c| if r == 0 && c == 0 { 1.0 } else { 0.5 },
        )
        .unwrap();
        let y = x.map(|v| v + 0.01);
        assert!((psnr(&y, &x).unwrap() - 40.0).abs() < 1e-9);
        let (x2, y2) = (x.scale(2.0), y.scale(2.0));
        assert!((psnr(&y2, &x2).unwrap() - psnr(&y, &x).unwrap()).abs() < 1e-12);
        let zero = HsiCube::zeros(1, 2, 2).unwrap();
        assert!(matches!(psnr(&zero, &zero), Err(Error::Metric(_))));
    }

    #[test]
    fn ssim_cases() {
        // constant estimate vs. zero-mean-variation band.
        let v = gaussian_samples(3, 64 * 64);
        let x = HsiCube::from_vec(1, 64, 64, v.iter().map(|e| 0.2 * e / 255.0).collect()).unwrap();
        let c = HsiCube::filled(1, 64, 64, 0.5).unwrap();
        assert!(ssim(&c, &x).unwrap().abs() < 0.05);

        // Shift by 10 on the 255 scale: only the luminance term changes.
        let x = random(4, 1, 16, 16);
        let y = x.map(|v| v + 10.0 / 255.0);
        let m = mean(x.data());
        let var = x
            .data()
            .iter()
            .map(|v| (v * 255.0 - m).powi(2))
            .sum::<f64>()
            / 256.0;
        let expect = ((2.0 * m * (m + 10.0) + SSIM_C1) * (2.0 * var + SSIM_C2))
            / ((m * m + (m + 10.0) * (m + 10.0) + SSIM_C1) * (2.0 * var + SSIM_C2));
        assert!((ssim(&y, &x).unwrap() - expect).abs() < 1e-10);
    }

    #[test]
    fn ergas_cases() {
        // Single band with per-pixel RMS error m and mean μ → 100·m/μ.
        let x = HsiCube::filled(1, 4, 4, 0.4).unwrap();
        let y = x.map(|v| v + 0.02);
        let expect = 100.0 * (0.02 * 255.0) / (0.4 * 255.0);
        assert!((ergas(&y, &x).unwrap() - expect).abs() < 1e-12);
        let expect_est = 100.0 * 0.02 / 0.42;
        assert!((ergas_with(&y, &x, ErgasMean::Estimate).unwrap() - expect_est).abs() < 1e-12);

        let x = random(5, 3, 8, 8);
        let y = random(6, 3, 8, 8);
        let e1 = ergas(&y, &x).unwrap();
        let e2 = ergas(&y.scale(2.0), &x.scale(2.0)).unwrap();
        assert!((e1 - e2).abs() < 1e-12);
        let zero = HsiCube::zeros(1, 2, 2).unwrap();
        assert!(matches!(ergas(&zero, &zero), Err(Error::Metric(_))));
    }

    #[test]
    fn rmse_ignores_common_permutations() {
        let x = random(7, 2, 4, 4);
        let y = random(8, 2, 4, 4);
        let perm: Vec<usize> = (0..32).map(|i| (i * 13 + 5) % 32).collect();
        let px = HsiCube::from_vec(2, 4, 4, perm.iter().map(|&i| x.data()[i]).collect()).unwrap();
        let py = HsiCube::from_vec(2, 4, 4, perm.iter().map(|&i| y.data()[i]).collect()).unwrap();
        assert!((rmse(&y, &x).unwrap() - rmse(&py, &px).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn csv_row_uses_decimal_point() {
        let r = MetricReport {
            rmse: 1.5,
            psnr: 30.25,
            ssim: 0.9,
            ergas: 12.0,
        };
        assert_eq!(r.to_csv_row(), "1.500000,30.250000,0.900000,12.000000");
    }
}
