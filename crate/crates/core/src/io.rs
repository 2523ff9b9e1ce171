//! Little-endian binary formats for cubes (`HSC1`), kernels (`PSF1`) and
//! network weights (`B3W1`).
//!
//! ```text
//! HSC1  magic | u32 N | u32 P | u32 Q | u32 dtype (0 = f32, 1 = f64) | samples
//! PSF1  magic | u32 count | u32 kh | u32 kw | f64 taps, kernel by kernel, row-major
//! B3W1  magic | u32 version | u32 B | u32 C | layers…
//!       layer = u32 type (0 conv, 1 batchnorm) | u32 in | u32 out | payload
//!       conv payload:      f64 taps [out][in][3][3][3], then f64 biases [out]
//!       batchnorm payload: f64 scale, shift, running mean, running var [C each], f64 eps
//! ```

use std::fs;
use std::path::Path;

use crate::cube::{HsiCube, KernelStack};
use crate::denoiser::{B3ddnWeights, BatchNorm, Conv3d, Layer};
use crate::error::{Error, Result};

pub const CUBE_MAGIC: &[u8; 4] = b"HSC1";
pub const KERNEL_MAGIC: &[u8; 4] = b"PSF1";
pub const WEIGHTS_MAGIC: &[u8; 4] = b"B3W1";
pub const WEIGHTS_VERSION: u32 = 1;

const LAYER_CONV: u32 = 0;
const LAYER_BATCHNORM: u32 = 1;

/// Sample precision of a cube file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32 = 0,
    F64 = 1,
}

impl DType {
    fn width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(self.pos, "truncated"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn magic(&mut self, expect: &[u8; 4]) -> Result<()> {
        if self.buf.len() < 4 || &self.buf[..4] != expect {
            return Err(Error::format(0, "bad magic"));
        }
        self.pos = 4;
        Ok(())
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| Error::format(self.pos, "size overflow"))?;
        let raw = self.take(bytes)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::format(self.pos, "trailing bytes after payload"));
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::format(out.len(), "size overflow"))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn encode_cube(cube: &HsiCube, dtype: DType) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(20 + cube.len() * dtype.width());
    out.extend_from_slice(CUBE_MAGIC);
    put_u32(&mut out, cube.bands())?;
    put_u32(&mut out, cube.rows())?;
    put_u32(&mut out, cube.cols())?;
    put_u32(&mut out, dtype as usize)?;
    match dtype {
        DType::F32 => cube
            .data()
            .iter()
            .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        DType::F64 => put_f64s(&mut out, cube.data()),
    }
    Ok(out)
}

pub fn decode_cube(buf: &[u8]) -> Result<HsiCube> {
    let mut r = Reader::new(buf);
    r.magic(CUBE_MAGIC)?;
    let (n, p, q) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let dtype_pos = r.pos;
    let dtype = match r.u32()? {
        0 => DType::F32,
        1 => DType::F64,
        other => return Err(Error::format(dtype_pos, format!("unknown dtype {other}"))),
    };
    if n == 0 || p == 0 || q == 0 {
        return Err(Error::format(4, "cube extents must be positive"));
    }
    let len = n
        .checked_mul(p)
        .and_then(|v| v.checked_mul(q))
        .ok_or_else(|| Error::format(4, "size overflow"))?;
    let bytes = len
        .checked_mul(dtype.width())
        .ok_or_else(|| Error::format(4, "size overflow"))?;
    let raw = r.take(bytes)?;
    r.finish()?;
    let data: Vec<f64> = match dtype {
        DType::F32 => raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        DType::F64 => raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::format(20 + i * dtype.width(), "non-finite sample"));
    }
    Ok(HsiCube::from_parts(n, p, q, data))
}

pub fn write_cube(cube: &HsiCube, path: impl AsRef<Path>, dtype: DType) -> Result<()> {
    fs::write(path, encode_cube(cube, dtype)?)?;
    Ok(())
}

pub fn read_cube(path: impl AsRef<Path>) -> Result<HsiCube> {
    decode_cube(&fs::read(path)?)
}

pub fn encode_kernels(k: &KernelStack) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + k.taps().len() * 8);
    out.extend_from_slice(KERNEL_MAGIC);
    put_u32(&mut out, k.count())?;
    put_u32(&mut out, k.kh())?;
    put_u32(&mut out, k.kw())?;
    put_f64s(&mut out, k.taps());
    Ok(out)
}

pub fn decode_kernels(buf: &[u8]) -> Result<KernelStack> {
    let mut r = Reader::new(buf);
    r.magic(KERNEL_MAGIC)?;
    let (count, kh, kw) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    if count == 0 || kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::format(
            4,
            "kernel count must be positive and extents odd",
        ));
    }
    let n = count
        .checked_mul(kh)
        .and_then(|v| v.checked_mul(kw))
        .ok_or_else(|| Error::format(4, "size overflow"))?;
    let taps = r.f64s(n)?;
    r.finish()?;
    KernelStack::new(count, kh, kw, taps).map_err(|e| Error::format(16, e.to_string()))
}

pub fn write_kernels(k: &KernelStack, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_kernels(k)?)?;
    Ok(())
}

pub fn read_kernels(path: impl AsRef<Path>) -> Result<KernelStack> {
    decode_kernels(&fs::read(path)?)
}

pub fn encode_weights(w: &B3ddnWeights) -> Result<Vec<u8>> {
    w.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHTS_MAGIC);
    put_u32(&mut out, WEIGHTS_VERSION as usize)?;
    put_u32(&mut out, w.num_blocks)?;
    put_u32(&mut out, w.channels)?;
    for layer in &w.layers {
        match layer {
            Layer::Conv(c) => {
                put_u32(&mut out, LAYER_CONV as usize)?;
                put_u32(&mut out, c.in_ch)?;
                put_u32(&mut out, c.out_ch)?;
                put_f64s(&mut out, &c.weights);
                put_f64s(&mut out, &c.bias);
            }
            Layer::BatchNorm(n) => {
                put_u32(&mut out, LAYER_BATCHNORM as usize)?;
                put_u32(&mut out, n.channels)?;
                put_u32(&mut out, n.channels)?;
                put_f64s(&mut out, &n.scale);
                put_f64s(&mut out, &n.shift);
                put_f64s(&mut out, &n.running_mean);
                put_f64s(&mut out, &n.running_var);
                put_f64s(&mut out, &[n.eps]);
            }
        }
    }
    Ok(out)
}

pub fn decode_weights(buf: &[u8]) -> Result<B3ddnWeights> {
    let mut r = Reader::new(buf);
    r.magic(WEIGHTS_MAGIC)?;
    let version = r.u32()?;
    if version != WEIGHTS_VERSION {
        return Err(Error::format(
            4,
            format!("unsupported weights version {version}"),
        ));
    }
    let num_blocks = r.u32()? as usize;
    let channels = r.u32()? as usize;
    let count = num_blocks
        .checked_mul(2)
        .and_then(|v| v.checked_add(2))
        .ok_or_else(|| Error::format(8, "size overflow"))?;
    let mut layers = Vec::new();
    for _ in 0..count {
        let at = r.pos;
        let kind = r.u32()?;
        let (i, o) = (r.u32()? as usize, r.u32()? as usize);
        match kind {
            LAYER_CONV => {
                let n = i
                    .checked_mul(o)
                    .and_then(|v| v.checked_mul(27))
                    .ok_or_else(|| Error::format(at, "size overflow"))?;
                let weights = r.f64s(n)?;
                let bias = r.f64s(o)?;
                layers.push(Layer::Conv(Conv3d {
                    in_ch: i,
                    out_ch: o,
                    weights,
                    bias,
                }));
            }
            LAYER_BATCHNORM => {
                if i != o {
                    return Err(Error::format(at, "batch norm must map C channels to C"));
                }
                let scale = r.f64s(i)?;
                let shift = r.f64s(i)?;
                let running_mean = r.f64s(i)?;
                let running_var = r.f64s(i)?;
                let eps = r.f64()?;
                layers.push(Layer::BatchNorm(BatchNorm {
                    channels: i,
                    scale,
                    shift,
                    running_mean,
                    running_var,
                    eps,
                }));
            }
            other => return Err(Error::format(at, format!("unknown layer type {other}"))),
        }
    }
    r.finish()?;
    let w = B3ddnWeights {
        num_blocks,
        channels,
        layers,
    };
    w.validate()?;
    Ok(w)
}

pub fn write_weights(w: &B3ddnWeights, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_weights(w)?)?;
    Ok(())
}

pub fn read_weights(path: impl AsRef<Path>) -> Result<B3ddnWeights> {
    decode_weights(&fs::read(path)?)
}
