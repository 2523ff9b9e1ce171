//! Dense hyperspectral cubes and per-band blur kernels.
//!
//! Cubes are stored band-major, then row-major inside a band, so the voxel
//! `(band, row, col)` lives at `band * rows * cols + row * cols + col`.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// A dense `bands × rows × cols` cube of real intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    bands: usize,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl HsiCube {
    pub fn zeros(bands: usize, rows: usize, cols: usize) -> Result<Self> {
        Self::filled(bands, rows, cols, 0.0)
    }

    pub fn filled(bands: usize, rows: usize, cols: usize, value: f64) -> Result<Self> {
        check_shape(bands, rows, cols)?;
        let len = checked_len(bands, rows, cols)?;
        Ok(Self {
            bands,
            rows,
            cols,
            data: vec![value; len],
        })
    }

    pub fn from_vec(bands: usize, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_shape(bands, rows, cols)?;
        let len = checked_len(bands, rows, cols)?;
        if data.len() != len {
            return Err(Error::dim(format!(
                "cube {bands}x{rows}x{cols} needs {len} samples, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::dim("cube data contains non-finite values"));
        }
        Ok(Self {
            bands,
            rows,
            cols,
            data,
        })
    }

    pub fn from_fn(
        bands: usize,
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut cube = Self::zeros(bands, rows, cols)?;
        for b in 0..bands {
            for r in 0..rows {
                for c in 0..cols {
                    cube[(b, r, c)] = f(b, r, c);
                }
            }
        }
        Ok(cube)
    }

    /// Builds a cube without validating finiteness; shape must already be consistent.
    pub(crate) fn from_parts(bands: usize, rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), bands * rows * cols);
        Self {
            bands,
            rows,
            cols,
            data,
        }
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.bands, self.rows, self.cols)
    }

    /// Total voxel count `L = N·P·Q`.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn band_len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn band(&self, b: usize) -> &[f64] {
        let n = self.band_len();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn band_mut(&mut self, b: usize) -> &mut [f64] {
        let n = self.band_len();
        &mut self.data[b * n..(b + 1) * n]
    }

    pub fn same_shape(&self, other: &HsiCube) -> bool {
        self.shape() == other.shape()
    }

    pub fn ensure_same_shape(&self, other: &HsiCube) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::dim(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> HsiCube {
        HsiCube::from_parts(
            self.bands,
            self.rows,
            self.cols,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Elementwise combination of two equally shaped cubes.
    pub fn zip_map(&self, other: &HsiCube, f: impl Fn(f64, f64) -> f64) -> Result<HsiCube> {
        self.ensure_same_shape(other)?;
        Ok(HsiCube::from_parts(
            self.bands,
            self.rows,
            self.cols,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn add(&self, other: &HsiCube) -> Result<HsiCube> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &HsiCube) -> Result<HsiCube> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> HsiCube {
        self.map(|v| v * s)
    }

    pub fn dot(&self, other: &HsiCube) -> Result<f64> {
        self.ensure_same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs_diff(&self, other: &HsiCube) -> Result<f64> {
        self.ensure_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    #[inline]
    pub fn index_of(&self, band: usize, row: usize, col: usize) -> usize {
        (band * self.rows + row) * self.cols + col
    }
}

impl Index<(usize, usize, usize)> for HsiCube {
    type Output = f64;

    fn index(&self, (b, r, c): (usize, usize, usize)) -> &f64 {
        &self.data[self.index_of(b, r, c)]
    }
}

impl IndexMut<(usize, usize, usize)> for HsiCube {
    fn index_mut(&mut self, (b, r, c): (usize, usize, usize)) -> &mut f64 {
        let i = self.index_of(b, r, c);
        &mut self.data[i]
    }
}

fn check_shape(bands: usize, rows: usize, cols: usize) -> Result<()> {
    if bands == 0 || rows == 0 || cols == 0 {
        return Err(Error::dim(format!(
            "cube extents must be positive, got {bands}x{rows}x{cols}"
        )));
    }
    Ok(())
}

fn checked_len(bands: usize, rows: usize, cols: usize) -> Result<usize> {
    bands
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::dim("cube size overflows usize"))
}

/// Per-band 2D point-spread functions.
///
/// Either a single kernel shared by every band, or one kernel per band. The
/// kernel centre is at `((kh-1)/2, (kw-1)/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelStack {
    count: usize,
    kh: usize,
    kw: usize,
    taps: Vec<f64>,
}

impl KernelStack {
    pub fn new(count: usize, kh: usize, kw: usize, taps: Vec<f64>) -> Result<Self> {
        if count == 0 {
            return Err(Error::dim("kernel stack must hold at least one kernel"));
        }
        if kh == 0 || kw == 0 || kh.is_multiple_of(2) || kw.is_multiple_of(2) {
            return Err(Error::dim(format!(
                "kernel extents must be odd, got {kh}x{kw}"
            )));
        }
        if taps.len() != count * kh * kw {
            return Err(Error::dim(format!(
                "kernel stack {count}x{kh}x{kw} needs {} taps, got {}",
                count * kh * kw,
                taps.len()
            )));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::dim("kernel taps must be finite"));
        }
        Ok(Self {
            count,
            kh,
            kw,
            taps,
        })
    }

    /// One kernel applied to every band.
    pub fn shared(kh: usize, kw: usize, taps: Vec<f64>) -> Result<Self> {
        Self::new(1, kh, kw, taps)
    }

    /// The 1×1 identity kernel.
    pub fn delta() -> Self {
        Self {
            count: 1,
            kh: 1,
            kw: 1,
            taps: vec![1.0],
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn kh(&self) -> usize {
        self.kh
    }

    pub fn kw(&self) -> usize {
        self.kw
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn kernel(&self, i: usize) -> &[f64] {
        let n = self.kh * self.kw;
        &self.taps[i * n..(i + 1) * n]
    }

    /// Kernel that applies to `band`.
    pub fn for_band(&self, band: usize) -> &[f64] {
        if self.count == 1 {
            self.kernel(0)
        } else {
            self.kernel(band)
        }
    }

    /// Checks that the stack can be applied to a cube of the given shape.
    pub fn check_compatible(&self, bands: usize, rows: usize, cols: usize) -> Result<()> {
        if self.count != 1 && self.count != bands {
            return Err(Error::dim(format!(
                "kernel stack has {} kernels but the cube has {bands} bands",
                self.count
            )));
        }
        if self.kh > rows || self.kw > cols {
            return Err(Error::dim(format!(
                "kernel {}x{} larger than band {rows}x{cols}",
                self.kh, self.kw
            )));
        }
        Ok(())
    }
}
