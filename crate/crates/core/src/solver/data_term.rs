//! The quadratic data-fidelity subproblem solved per band and per frequency.

use num_complex::Complex64;

use crate::cube::{HsiCube, KernelStack};
use crate::error::{Error, Result};
use crate::spectral::{FreqCube, OtfStack, Spectral};
use crate::whiteness::whiteness_from_spectrum;

/// Precomputed transforms of an observation and its blur operator.
#[derive(Debug)]
pub struct DataTerm {
    plan: Spectral,
    otf: OtfStack,
    y: HsiCube,
    y_hat: FreqCube,
    hty_hat: FreqCube,
}

impl DataTerm {
    pub fn new(y: &HsiCube, kernels: &KernelStack) -> Result<Self> {
        let (n, p, q) = y.shape();
        let otf = OtfStack::new(kernels, n, p, q)?;
        let plan = Spectral::new(n, p, q);
        let y_hat = plan.fft2(y)?;
        let mut hty_hat = y_hat.clone();
        otf.apply(&mut hty_hat, true);
        Ok(Self {
            plan,
            otf,
            y: y.clone(),
            y_hat,
            hty_hat,
        })
    }

    pub fn observation(&self) -> &HsiCube {
        &self.y
    }

    pub fn plan(&self) -> &Spectral {
        &self.plan
    }

    pub fn transform(&self, cube: &HsiCube) -> Result<FreqCube> {
        self.y.ensure_same_shape(cube)?;
        self.plan.fft2(cube)
    }

    /// Spectrum of `(HᵀH + ρI)⁻¹(Hᵀy + ρx̃)` given the spectrum of `x̃`.
    pub fn solve_spectrum(&self, x_tilde_hat: &FreqCube, rho: f64) -> Result<FreqCube> {
        if !rho.is_finite() || rho < 0.0 {
            return Err(Error::spec(format!(
                "penalty must be finite and non-negative, got {rho}"
            )));
        }
        let n = self.otf.plane_len();
        let mut out = Vec::with_capacity(x_tilde_hat.data().len());
        for (b, (hty, xt)) in self
            .hty_hat
            .data()
            .chunks(n)
            .zip(x_tilde_hat.data().chunks(n))
            .enumerate()
        {
            let h = self.otf.for_band(b);
            for i in 0..n {
                let denom = h[i].norm_sqr() + rho;
                if denom == 0.0 {
                    return Err(Error::SingularSystem(format!(
                        "OTF vanishes at band {b}, frequency {i} with penalty {rho}"
                    )));
                }
                let v = (hty[i] + rho * xt[i]) / denom;
                if !(v.re.is_finite() && v.im.is_finite()) {
                    return Err(Error::SingularSystem("x-update overflowed".into()));
                }
                out.push(v);
            }
        }
        let (nb, p, q) = self.y.shape();
        FreqCube::from_vec(nb, p, q, out)
    }

    pub fn solve(&self, x_tilde: &HsiCube, rho: f64) -> Result<HsiCube> {
        let xt = self.transform(x_tilde)?;
        self.plan.ifft2(&self.solve_spectrum(&xt, rho)?)
    }

    /// Per-band 2D spectrum of the residual `Hx − y`.
    fn residual_spectrum(&self, x_hat: &FreqCube) -> FreqCube {
        let mut r = x_hat.clone();
        self.otf.apply(&mut r, false);
        for (v, y) in r.data_mut().iter_mut().zip(self.y_hat.data()) {
            *v -= y;
        }
        r
    }

    /// Whiteness of the residual `Hx − y` for `x` given by its 2D spectrum.
    pub fn whiteness_of_spectrum(&self, x_hat: &FreqCube) -> Result<f64> {
        let mut r = self.residual_spectrum(x_hat);
        self.plan.bands_forward(&mut r)?;
        whiteness_from_spectrum(r.data())
    }

    /// Whiteness of the residual produced by the x-update at penalty `rho`.
    pub fn whiteness_at(&self, x_tilde_hat: &FreqCube, rho: f64) -> Result<f64> {
        self.whiteness_of_spectrum(&self.solve_spectrum(x_tilde_hat, rho)?)
    }

    /// Residual `Hx − y` in the image domain.
    pub fn residual(&self, x: &HsiCube) -> Result<HsiCube> {
        let x_hat = self.transform(x)?;
        self.plan.ifft2(&self.residual_spectrum(&x_hat))
    }

    /// `‖Hx − y‖₂` evaluated by Parseval from the spectrum of `x`.
    pub fn fidelity_of_spectrum(&self, x_hat: &FreqCube) -> f64 {
        let r = self.residual_spectrum(x_hat);
        (r.data().iter().map(Complex64::norm_sqr).sum::<f64>() / self.otf.plane_len() as f64).sqrt()
    }
}

/// Closed-form x-update `(HᵀH + ρI)⁻¹(Hᵀy + ρx̃)`.
pub fn x_update(
    y: &HsiCube,
    kernels: &KernelStack,
    x_tilde: &HsiCube,
    rho: f64,
) -> Result<HsiCube> {
    DataTerm::new(y, kernels)?.solve(x_tilde, rho)
}
