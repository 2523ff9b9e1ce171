//! Per-band 2D and full 3D discrete Fourier transforms, PSF→OTF conversion
//! and circular convolution through the frequency domain.
//!
//! Every boundary is periodic. Under that model the per-band blur operator is
//! circulant-block-circulant and becomes a pointwise product after a 2D DFT,
//! so the blur matrix itself is never formed.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::cube::{HsiCube, KernelStack};
use crate::error::{Error, Result};

/// Complex spectrum of a cube, same layout as [`HsiCube`].
#[derive(Debug, Clone, PartialEq)]
pub struct FreqCube {
    bands: usize,
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl FreqCube {
    pub fn from_vec(bands: usize, rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != bands * rows * cols {
            return Err(Error::dim("frequency cube length does not match its shape"));
        }
        Ok(Self {
            bands,
            rows,
            cols,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.bands, self.rows, self.cols)
    }

    pub fn band_len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn band(&self, b: usize) -> &[Complex64] {
        let n = self.band_len();
        &self.data[b * n..(b + 1) * n]
    }
}

/// Planned transforms for one `rows × cols` plane geometry, optionally with a
/// band-axis transform for full 3D use.
pub struct Spectral {
    rows: usize,
    cols: usize,
    bands: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    band_fwd: Arc<dyn Fft<f64>>,
    band_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral")
            .field("bands", &self.bands)
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .finish()
    }
}

impl Spectral {
    pub fn new(bands: usize, rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::<f64>::new();
        Self {
            rows,
            cols,
            bands,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
            band_fwd: planner.plan_fft_forward(bands),
            band_inv: planner.plan_fft_inverse(bands),
        }
    }

    pub fn for_cube(cube: &HsiCube) -> Self {
        Self::new(cube.bands(), cube.rows(), cube.cols())
    }

    fn check(&self, shape: (usize, usize, usize)) -> Result<()> {
        if shape != (self.bands, self.rows, self.cols) {
            return Err(Error::dim(format!(
                "transform planned for {:?}, got {shape:?}",
                (self.bands, self.rows, self.cols)
            )));
        }
        Ok(())
    }

    /// Unnormalized in-place 2D DFT of one plane.
    pub fn forward_plane(&self, plane: &mut [Complex64]) {
        self.plane(plane, &self.row_fwd, &self.col_fwd);
    }

    /// Inverse 2D DFT of one plane, including the `1/(PQ)` factor.
    pub fn inverse_plane(&self, plane: &mut [Complex64]) {
        self.plane(plane, &self.row_inv, &self.col_inv);
        let s = 1.0 / (self.rows * self.cols) as f64;
        plane.iter_mut().for_each(|v| *v *= s);
    }

    fn plane(&self, plane: &mut [Complex64], row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        let (p, q) = (self.rows, self.cols);
        row.process(plane);
        if p > 1 {
            let mut t = vec![Complex64::default(); p * q];
            transpose(plane, &mut t, p, q);
            col.process(&mut t);
            transpose(&t, plane, q, p);
        }
    }

    /// In-place DFT along the band axis of a cube already in plane layout.
    fn along_bands(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.bands;
        if n == 1 {
            return;
        }
        let m = self.rows * self.cols;
        let mut t = vec![Complex64::default(); n * m];
        transpose(data, &mut t, n, m);
        if inverse {
            self.band_inv.process(&mut t);
            let s = 1.0 / n as f64;
            t.iter_mut().for_each(|v| *v *= s);
        } else {
            self.band_fwd.process(&mut t);
        }
        transpose(&t, data, m, n);
    }

    /// Per-band 2D DFT of a real cube.
    pub fn fft2(&self, cube: &HsiCube) -> Result<FreqCube> {
        self.check(cube.shape())?;
        let mut data: Vec<Complex64> = cube
            .data()
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        data.par_chunks_mut(self.rows * self.cols)
            .for_each(|plane| self.forward_plane(plane));
        FreqCube::from_vec(self.bands, self.rows, self.cols, data)
    }

    /// Inverse per-band 2D DFT, keeping the real part.
    pub fn ifft2(&self, freq: &FreqCube) -> Result<HsiCube> {
        self.check(freq.shape())?;
        let mut data = freq.data.clone();
        data.par_chunks_mut(self.rows * self.cols)
            .for_each(|plane| self.inverse_plane(plane));
        Ok(HsiCube::from_parts(
            self.bands,
            self.rows,
            self.cols,
            data.into_iter().map(|c| c.re).collect(),
        ))
    }

    /// Full 3D DFT of a real cube.
    pub fn fft3(&self, cube: &HsiCube) -> Result<FreqCube> {
        let mut f = self.fft2(cube)?;
        self.along_bands(&mut f.data, false);
        Ok(f)
    }

    /// Inverse 3D DFT, keeping the real part.
    pub fn ifft3(&self, freq: &FreqCube) -> Result<HsiCube> {
        self.check(freq.shape())?;
        let mut g = freq.clone();
        self.along_bands(&mut g.data, true);
        self.ifft2(&g)
    }

    /// Completes a per-band 2D spectrum into the 3D spectrum in place.
    pub fn bands_forward(&self, freq: &mut FreqCube) -> Result<()> {
        self.check(freq.shape())?;
        self.along_bands(&mut freq.data, false);
        Ok(())
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

/// Embeds a `kh × kw` kernel in a `rows × cols` plane with its centre moved
/// to index (0,0), then takes the 2D DFT.
///
/// Multiplying a band's spectrum by the returned plane equals circular
/// convolution with the kernel.
pub fn psf_to_otf(
    taps: &[f64],
    kh: usize,
    kw: usize,
    rows: usize,
    cols: usize,
) -> Result<Vec<Complex64>> {
    if kh.is_multiple_of(2) || kw.is_multiple_of(2) {
        return Err(Error::dim(format!(
            "kernel extents must be odd, got {kh}x{kw}"
        )));
    }
    if taps.len() != kh * kw {
        return Err(Error::dim("kernel tap count does not match its extents"));
    }
    if kh > rows || kw > cols {
        return Err(Error::dim(format!(
            "kernel {kh}x{kw} larger than plane {rows}x{cols}"
        )));
    }
    let (ch, cw) = ((kh - 1) / 2, (kw - 1) / 2);
    let mut plane = vec![Complex64::default(); rows * cols];
    for i in 0..kh {
        let r = (i + rows - ch) % rows;
        for j in 0..kw {
            let c = (j + cols - cw) % cols;
            plane[r * cols + c] += taps[i * kw + j];
        }
    }
    Spectral::new(1, rows, cols).forward_plane(&mut plane);
    Ok(plane)
}

/// Optical transfer functions of a kernel stack for one plane geometry.
#[derive(Debug, Clone)]
pub struct OtfStack {
    rows: usize,
    cols: usize,
    planes: Vec<Vec<Complex64>>,
}

impl OtfStack {
    pub fn new(kernels: &KernelStack, bands: usize, rows: usize, cols: usize) -> Result<Self> {
        kernels.check_compatible(bands, rows, cols)?;
        let planes = (0..kernels.count())
            .map(|i| psf_to_otf(kernels.kernel(i), kernels.kh(), kernels.kw(), rows, cols))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rows, cols, planes })
    }

    pub fn for_band(&self, band: usize) -> &[Complex64] {
        if self.planes.len() == 1 {
            &self.planes[0]
        } else {
            &self.planes[band]
        }
    }

    pub fn plane_len(&self) -> usize {
        self.rows * self.cols
    }

    /// Multiplies a per-band spectrum by the OTF (or its conjugate) in place.
    pub fn apply(&self, freq: &mut FreqCube, adjoint: bool) {
        let n = self.plane_len();
        for (b, plane) in freq.data.chunks_mut(n).enumerate() {
            let otf = self.for_band(b);
            for (v, h) in plane.iter_mut().zip(otf) {
                *v *= if adjoint { h.conj() } else { *h };
            }
        }
    }
}

fn filter(cube: &HsiCube, kernels: &KernelStack, adjoint: bool) -> Result<HsiCube> {
    let (n, p, q) = cube.shape();
    let otf = OtfStack::new(kernels, n, p, q)?;
    let plan = Spectral::new(n, p, q);
    let mut f = plan.fft2(cube)?;
    otf.apply(&mut f, adjoint);
    plan.ifft2(&f)
}

/// Per-band circular convolution `H_i * X_i`.
pub fn circ_convolve(cube: &HsiCube, kernels: &KernelStack) -> Result<HsiCube> {
    filter(cube, kernels, false)
}

/// Adjoint of [`circ_convolve`]: per-band circular correlation, `Hᵀ`.
pub fn apply_adjoint(cube: &HsiCube, kernels: &KernelStack) -> Result<HsiCube> {
    filter(cube, kernels, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cube(rng: &mut ChaCha8Rng, n: usize, p: usize, q: usize) -> HsiCube {
        HsiCube::from_fn(n, p, q, |_, _, _| rng.random_range(-1.0..1.0)).unwrap()
    }

    fn random_kernel(rng: &mut ChaCha8Rng, count: usize, k: usize) -> KernelStack {
        let taps = (0..count * k * k)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        KernelStack::new(count, k, k, taps).unwrap()
    }

    // Brute-force spatial circular convolution.
    fn naive_convolve(cube: &HsiCube, k: &KernelStack) -> HsiCube {
        let (n, p, q) = cube.shape();
        let (ch, cw) = ((k.kh() - 1) / 2, (k.kw() - 1) / 2);
        HsiCube::from_fn(n, p, q, |b, r, c| {
            let taps = k.for_band(b);
            let mut acc = 0.0;
            for i in 0..k.kh() {
                for j in 0..k.kw() {
                    let rr = (r + p * 4 + ch - i) % p;
                    let cc = (c + q * 4 + cw - j) % q;
                    acc += taps[i * k.kw() + j] * cube[(b, rr, cc)];
                }
            }
            acc
        })
        .unwrap()
    }

    // O(P²Q²) DFT of a real plane.
    fn naive_dft(plane: &[f64], p: usize, q: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); p * q];
        for u in 0..p {
            for v in 0..q {
                let mut acc = Complex64::default();
                for r in 0..p {
                    for c in 0..q {
                        let ang = -2.0
                            * std::f64::consts::PI
                            * ((u * r) as f64 / p as f64 + (v * c) as f64 / q as f64);
                        acc += Complex64::from_polar(plane[r * q + c], ang);
                    }
                }
                out[u * q + v] = acc;
            }
        }
        out
    }

    #[test]
    fn delta_kernels_give_unit_otf() {
        let otf = psf_to_otf(&[1.0], 1, 1, 5, 7).unwrap();
        assert!(otf
            .iter()
            .all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        let mut centred = vec![0.0; 9];
        centred[4] = 1.0;
        let otf = psf_to_otf(&centred, 3, 3, 6, 4).unwrap();
        assert!(otf
            .iter()
            .all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn averaging_otf_matches_naive_dft() {
        let (p, q) = (8, 8);
        let otf = psf_to_otf(&[1.0 / 9.0; 9], 3, 3, p, q).unwrap();
        assert!((otf[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        let mut shifted = vec![0.0; p * q];
        for i in 0..3 {
            for j in 0..3 {
                shifted[((i + p - 1) % p) * q + (j + q - 1) % q] = 1.0 / 9.0;
            }
        }
        let oracle = naive_dft(&shifted, p, q);
        for (a, b) in otf.iter().zip(&oracle) {
            assert!((a - b).norm() < 1e-12);
        }
        let mut back = otf.clone();
        Spectral::new(1, p, q).inverse_plane(&mut back);
        for (a, b) in back.iter().zip(&shifted) {
            assert!((a.re - b).abs() < 1e-12 && a.im.abs() < 1e-12);
        }
    }

    #[test]
    fn oversized_or_even_kernel_is_rejected() {
        assert!(psf_to_otf(&[0.0; 25], 5, 5, 4, 8).is_err());
        assert!(psf_to_otf(&[0.0; 4], 2, 2, 8, 8).is_err());
        let cube = HsiCube::zeros(3, 8, 8).unwrap();
        let k = KernelStack::new(2, 3, 3, vec![0.0; 18]).unwrap();
        assert!(matches!(circ_convolve(&cube, &k), Err(Error::Dimension(_))));
        assert!(matches!(apply_adjoint(&cube, &k), Err(Error::Dimension(_))));
    }

    #[test]
    fn identity_and_dc_preservation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cube = random_cube(&mut rng, 3, 8, 8);
        let out = circ_convolve(&cube, &KernelStack::delta()).unwrap();
        assert!(out.max_abs_diff(&cube).unwrap() < 1e-12);
        let out = apply_adjoint(&cube, &KernelStack::delta()).unwrap();
        assert!(out.max_abs_diff(&cube).unwrap() < 1e-12);

        let ones = HsiCube::filled(2, 9, 9, 1.0).unwrap();
        let k = KernelStack::shared(5, 5, vec![1.0 / 25.0; 25]).unwrap();
        let out = circ_convolve(&ones, &k).unwrap();
        assert!(out.data().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn fft_matches_spatial_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cube = random_cube(&mut rng, 3, 8, 8);
        let k = random_kernel(&mut rng, 1, 3);
        let fast = circ_convolve(&cube, &k).unwrap();
        assert!(fast.max_abs_diff(&naive_convolve(&cube, &k)).unwrap() < 1e-10);

        let k = random_kernel(&mut rng, 3, 5);
        let cube = random_cube(&mut rng, 3, 7, 9);
        let fast = circ_convolve(&cube, &k).unwrap();
        assert!(fast.max_abs_diff(&naive_convolve(&cube, &k)).unwrap() < 1e-10);
    }

    #[test]
    fn adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_cube(&mut rng, 2, 8, 8);
        let b = random_cube(&mut rng, 2, 8, 8);
        let k = random_kernel(&mut rng, 1, 3);
        let lhs = circ_convolve(&a, &k).unwrap().dot(&b).unwrap();
        let rhs = a.dot(&apply_adjoint(&b, &k).unwrap()).unwrap();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn symmetric_kernel_is_self_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_cube(&mut rng, 2, 8, 8);
        let g: Vec<f64> = (0..25)
            .map(|i| {
                let (r, c) = ((i / 5) as f64 - 2.0, (i % 5) as f64 - 2.0);
                (-(r * r + c * c) / 2.0).exp()
            })
            .collect();
        let k = KernelStack::shared(5, 5, g).unwrap();
        let fwd = circ_convolve(&a, &k).unwrap();
        let adj = apply_adjoint(&a, &k).unwrap();
        assert!(fwd.max_abs_diff(&adj).unwrap() < 1e-10);
    }

    #[test]
    fn round_trips_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cube = random_cube(&mut rng, 4, 6, 10);
        let plan = Spectral::for_cube(&cube);
        let f2 = plan.fft2(&cube).unwrap();
        assert!(plan.ifft2(&f2).unwrap().max_abs_diff(&cube).unwrap() < 1e-10);
        let f3 = plan.fft3(&cube).unwrap();
        assert!(plan.ifft3(&f3).unwrap().max_abs_diff(&cube).unwrap() < 1e-10);

        for b in 0..cube.bands() {
            let spatial: f64 = cube.band(b).iter().map(|v| v * v).sum();
            let freq: f64 =
                f2.band(b).iter().map(|v| v.norm_sqr()).sum::<f64>() / cube.band_len() as f64;
            assert!((spatial - freq).abs() / spatial < 1e-10);
        }

        let mut g = plan.fft2(&cube).unwrap();
        plan.bands_forward(&mut g).unwrap();
        for (a, b) in g.data().iter().zip(f3.data()) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
