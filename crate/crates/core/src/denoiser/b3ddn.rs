//! Blind 3D denoising network.
//!
//! Layout: `conv(1→C) → ReLU`, then `B × [conv(C→C) → BN → ReLU]`, then
//! `conv(C→1)`. Every convolution uses 3×3×3 taps over (band, row, col) with
//! periodic padding, so one set of weights runs on any band count. The
//! network predicts the noise; the denoised cube is `z − F(z)`.

use rayon::prelude::*;

use super::Denoiser;
use crate::cube::HsiCube;
use crate::error::{Error, Result};

pub(crate) const TAPS: usize = 27;

/// A 3×3×3 convolution. `weights` are ordered `[out][in][band][row][col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv3d {
    pub fn zeros(in_ch: usize, out_ch: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            weights: vec![0.0; in_ch * out_ch * TAPS],
            bias: vec![0.0; out_ch],
        }
    }

    #[inline]
    pub fn tap(&self, o: usize, i: usize) -> &[f64] {
        let base = (o * self.in_ch + i) * TAPS;
        &self.weights[base..base + TAPS]
    }

    fn validate(&self) -> Result<()> {
        if self.in_ch == 0 || self.out_ch == 0 {
            return Err(Error::Weights("convolution with zero channels".into()));
        }
        if self.weights.len() != self.in_ch * self.out_ch * TAPS || self.bias.len() != self.out_ch {
            return Err(Error::Weights(format!(
                "convolution {}→{} must hold {} taps and {} biases",
                self.in_ch,
                self.out_ch,
                self.in_ch * self.out_ch * TAPS,
                self.out_ch
            )));
        }
        if self
            .weights
            .iter()
            .chain(&self.bias)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Weights("non-finite convolution parameter".into()));
        }
        Ok(())
    }
}

/// Per-channel batch normalization with running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub channels: usize,
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
}

impl BatchNorm {
    pub fn identity(channels: usize) -> Self {
        Self {
            channels,
            scale: vec![1.0; channels],
            shift: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: 1e-5,
        }
    }

    fn validate(&self) -> Result<()> {
        let c = self.channels;
        if [
            &self.scale,
            &self.shift,
            &self.running_mean,
            &self.running_var,
        ]
        .iter()
        .any(|v| v.len() != c)
        {
            return Err(Error::Weights(format!(
                "batch norm vectors must have {c} entries"
            )));
        }
        if self
            .running_var
            .iter()
            .any(|&v| !(v > 0.0 && v.is_finite()))
        {
            return Err(Error::Weights("running variance must be positive".into()));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Weights("batch norm epsilon must be positive".into()));
        }
        if self
            .scale
            .iter()
            .chain(&self.shift)
            .chain(&self.running_mean)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Weights("non-finite batch norm parameter".into()));
        }
        Ok(())
    }

    /// Inference-mode affine map `(x − μ)/√(σ² + ε)·γ + β` for channel `c`.
    fn affine(&self, c: usize) -> (f64, f64) {
        let s = self.scale[c] / (self.running_var[c] + self.eps).sqrt();
        (s, self.shift[c] - s * self.running_mean[c])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv(Conv3d),
    BatchNorm(BatchNorm),
}

/// Parameters of the denoising network, in forward order.
#[derive(Debug, Clone, PartialEq)]
pub struct B3ddnWeights {
    pub num_blocks: usize,
    pub channels: usize,
    pub layers: Vec<Layer>,
}

impl B3ddnWeights {
    /// All-zero network (convolutions zero, batch norms identity).
    pub fn zeros(num_blocks: usize, channels: usize) -> Self {
        let mut layers = vec![Layer::Conv(Conv3d::zeros(1, channels))];
        for _ in 0..num_blocks {
            layers.push(Layer::Conv(Conv3d::zeros(channels, channels)));
            layers.push(Layer::BatchNorm(BatchNorm::identity(channels)));
        }
        layers.push(Layer::Conv(Conv3d::zeros(channels, 1)));
        Self {
            num_blocks,
            channels,
            layers,
        }
    }

    /// Checks the layer sequence, channel chain, and parameter values.
    pub fn validate(&self) -> Result<()> {
        let (b, c) = (self.num_blocks, self.channels);
        if c == 0 {
            return Err(Error::Weights("network needs at least one channel".into()));
        }
        if self.layers.len() != 2 * b + 2 {
            return Err(Error::Weights(format!(
                "{b} blocks need {} layers, found {}",
                2 * b + 2,
                self.layers.len()
            )));
        }
        for (idx, layer) in self.layers.iter().enumerate() {
            let last = idx == self.layers.len() - 1;
            match layer {
                Layer::Conv(conv) => {
                    let expect = match idx {
                        0 => (1, c),
                        _ if last => (c, 1),
                        _ if idx % 2 == 1 => (c, c),
                        _ => {
                            return Err(Error::Weights(format!("layer {idx} should be batch norm")))
                        }
                    };
                    if (conv.in_ch, conv.out_ch) != expect {
                        return Err(Error::Weights(format!(
                            "layer {idx} is {}→{}, expected {}→{}",
                            conv.in_ch, conv.out_ch, expect.0, expect.1
                        )));
                    }
                    conv.validate()?;
                }
                Layer::BatchNorm(bn) => {
                    if idx == 0 || last || idx % 2 == 1 {
                        return Err(Error::Weights(format!(
                            "layer {idx} should be a convolution"
                        )));
                    }
                    if bn.channels != c {
                        return Err(Error::Weights(format!(
                            "batch norm at layer {idx} has {} channels, expected {c}",
                            bn.channels
                        )));
                    }
                    bn.validate()?;
                }
            }
        }
        Ok(())
    }

    pub(crate) fn first(&self) -> &Conv3d {
        match &self.layers[0] {
            Layer::Conv(c) => c,
            _ => unreachable!("validated"),
        }
    }

    pub(crate) fn last(&self) -> &Conv3d {
        match self.layers.last() {
            Some(Layer::Conv(c)) => c,
            _ => unreachable!("validated"),
        }
    }

    pub(crate) fn block(&self, b: usize) -> (&Conv3d, &BatchNorm) {
        match (&self.layers[1 + 2 * b], &self.layers[2 + 2 * b]) {
            (Layer::Conv(c), Layer::BatchNorm(n)) => (c, n),
            _ => unreachable!("validated"),
        }
    }

    /// Number of trainable parameters (conv taps, biases, BN scale and shift).
    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => c.weights.len() + c.bias.len(),
                Layer::BatchNorm(n) => 2 * n.channels,
            })
            .sum()
    }

    /// Trainable parameters flattened in layer order.
    pub fn trainable(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            match l {
                Layer::Conv(c) => {
                    out.extend_from_slice(&c.weights);
                    out.extend_from_slice(&c.bias);
                }
                Layer::BatchNorm(n) => {
                    out.extend_from_slice(&n.scale);
                    out.extend_from_slice(&n.shift);
                }
            }
        }
        out
    }

    /// Inverse of [`trainable`](Self::trainable).
    pub fn set_trainable(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::Weights("trainable parameter count mismatch".into()));
        }
        let mut it = params.iter().copied();
        let mut fill = |dst: &mut [f64]| dst.iter_mut().for_each(|d| *d = it.next().unwrap());
        for l in &mut self.layers {
            match l {
                Layer::Conv(c) => {
                    fill(&mut c.weights);
                    fill(&mut c.bias);
                }
                Layer::BatchNorm(n) => {
                    fill(&mut n.scale);
                    fill(&mut n.shift);
                }
            }
        }
        Ok(())
    }
}

/// Contiguous row segments realizing a periodic shift of a cube.
///
/// For every one of the 27 offsets `(db, dr, dc) ∈ {−1,0,1}³`, the segments
/// `(dst, src, len)` map voxel `v` to voxel `v + offset` (wrapped).
#[derive(Debug)]
pub(crate) struct ShiftTable {
    pub voxels: usize,
    segments: Vec<Vec<(usize, usize, usize)>>,
}

impl ShiftTable {
    pub fn new(n: usize, p: usize, q: usize) -> Self {
        let mut segments = Vec::with_capacity(TAPS);
        for db in 0..3 {
            for dr in 0..3 {
                for dc in 0..3 {
                    let sh = (dc + q - 1) % q;
                    let mut segs = Vec::with_capacity(n * p * 2);
                    for b in 0..n {
                        let sb = (b + db + n - 1) % n;
                        for r in 0..p {
                            let sr = (r + dr + p - 1) % p;
                            let dst = (b * p + r) * q;
                            let src = (sb * p + sr) * q;
                            if q - sh > 0 {
                                segs.push((dst, src + sh, q - sh));
                            }
                            if sh > 0 {
                                segs.push((dst + q - sh, src, sh));
                            }
                        }
                    }
                    segments.push(segs);
                }
            }
        }
        Self {
            voxels: n * p * q,
            segments,
        }
    }

    #[inline]
    pub fn segments(&self, tap: usize) -> &[(usize, usize, usize)] {
        &self.segments[tap]
    }
}

/// `out[o] = bias[o] + Σ_i Σ_t w[o,i,t]·shift_t(input[i])`.
pub(crate) fn conv_forward(conv: &Conv3d, input: &[f64], table: &ShiftTable) -> Vec<f64> {
    let v = table.voxels;
    let mut out = vec![0.0; conv.out_ch * v];
    out.par_chunks_mut(v).enumerate().for_each(|(o, dst)| {
        dst.iter_mut().for_each(|d| *d = conv.bias[o]);
        for i in 0..conv.in_ch {
            let src = &input[i * v..(i + 1) * v];
            for (t, &w) in conv.tap(o, i).iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for &(d, s, len) in table.segments(t) {
                    for (a, b) in dst[d..d + len].iter_mut().zip(&src[s..s + len]) {
                        *a += w * b;
                    }
                }
            }
        }
    });
    out
}

pub(crate) fn relu_inplace(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Predicted noise `F(z)` using running batch-norm statistics.
pub fn b3ddn_forward(z: &HsiCube, weights: &B3ddnWeights) -> Result<HsiCube> {
    weights.validate()?;
    let (n, p, q) = z.shape();
    let table = ShiftTable::new(n, p, q);
    let v = table.voxels;
    let mut h = conv_forward(weights.first(), z.data(), &table);
    relu_inplace(&mut h);
    for b in 0..weights.num_blocks {
        let (conv, bn) = weights.block(b);
        h = conv_forward(conv, &h, &table);
        for (c, chunk) in h.chunks_mut(v).enumerate() {
            let (s, t) = bn.affine(c);
            chunk.iter_mut().for_each(|x| *x = (s * *x + t).max(0.0));
        }
    }
    let out = conv_forward(weights.last(), &h, &table);
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::Data("network produced non-finite output".into()));
    }
    Ok(HsiCube::from_parts(n, p, q, out))
}

/// Residual-learning denoiser `z − F(z)`.
pub fn b3ddn_denoise(z: &HsiCube, weights: &B3ddnWeights) -> Result<HsiCube> {
    z.sub(&b3ddn_forward(z, weights)?)
}

/// A validated network usable as a [`Denoiser`].
#[derive(Debug, Clone)]
pub struct B3ddn {
    weights: B3ddnWeights,
}

impl B3ddn {
    pub fn new(weights: B3ddnWeights) -> Result<Self> {
        weights.validate()?;
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &B3ddnWeights {
        &self.weights
    }
}

impl Denoiser for B3ddn {
    fn denoise(&self, z: &HsiCube) -> Result<HsiCube> {
        b3ddn_denoise(z, &self.weights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_weights(rng: &mut ChaCha8Rng, blocks: usize, channels: usize) -> B3ddnWeights {
        let mut w = B3ddnWeights::zeros(blocks, channels);
        for l in &mut w.layers {
            match l {
                Layer::Conv(c) => {
                    c.weights
                        .iter_mut()
                        .for_each(|x| *x = rng.random_range(-0.5..0.5));
                    c.bias
                        .iter_mut()
                        .for_each(|x| *x = rng.random_range(-0.2..0.2));
                }
                Layer::BatchNorm(n) => {
                    for c in 0..n.channels {
                        n.scale[c] = rng.random_range(0.5..1.5);
                        n.shift[c] = rng.random_range(-0.3..0.3);
                        n.running_mean[c] = rng.random_range(-0.2..0.2);
                        n.running_var[c] = rng.random_range(0.5..2.0);
                    }
                }
            }
        }
        w
    }

    // Direct nested-loop evaluation of one periodic 3×3×3 convolution.
    #[allow(clippy::needless_range_loop)]
    fn naive_conv(
        conv: &Conv3d,
        input: &[Vec<f64>],
        n: usize,
        p: usize,
        q: usize,
    ) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; n * p * q]; conv.out_ch];
        for o in 0..conv.out_ch {
            for b in 0..n {
                for r in 0..p {
                    for c in 0..q {
                        let mut acc = conv.bias[o];
                        for i in 0..conv.in_ch {
                            for db in 0..3 {
                                for dr in 0..3 {
                                    for dc in 0..3 {
                                        let sb = (b + db + n - 1) % n;
                                        let sr = (r + dr + p - 1) % p;
                                        let sc = (c + dc + q - 1) % q;
                                        acc += conv.tap(o, i)[db * 9 + dr * 3 + dc]
                                            * input[i][(sb * p + sr) * q + sc];
                                    }
                                }
                            }
                        }
                        out[o][(b * p + r) * q + c] = acc;
                    }
                }
            }
        }
        out
    }

    fn naive_forward(z: &HsiCube, w: &B3ddnWeights) -> Vec<f64> {
        let (n, p, q) = z.shape();
        let mut h = naive_conv(w.first(), &[z.data().to_vec()], n, p, q);
        h.iter_mut()
            .for_each(|c| c.iter_mut().for_each(|x| *x = x.max(0.0)));
        for b in 0..w.num_blocks {
            let (conv, bn) = w.block(b);
            h = naive_conv(conv, &h, n, p, q);
            for (c, ch) in h.iter_mut().enumerate() {
                for x in ch.iter_mut() {
                    let norm = (*x - bn.running_mean[c]) / (bn.running_var[c] + bn.eps).sqrt();
                    *x = (bn.scale[c] * norm + bn.shift[c]).max(0.0);
                }
            }
        }
        naive_conv(w.last(), &h, n, p, q).remove(0)
    }

    #[test]
    fn zero_network_predicts_zero() {
        let z = HsiCube::from_fn(3, 5, 5, |b, r, c| (b + r + c) as f64 * 0.1).unwrap();
        let w = B3ddnWeights::zeros(2, 4);
        let out = b3ddn_forward(&z, &w).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
        assert_eq!(b3ddn_denoise(&z, &w).unwrap(), z);
    }

    #[test]
    fn delta_network_copies_input() {
        let z =
            HsiCube::from_fn(4, 6, 5, |b, r, c| ((b * 3 + r * 5 + c) % 7) as f64 / 7.0).unwrap();
        let mut w = B3ddnWeights::zeros(0, 1);
        for l in &mut w.layers {
            if let Layer::Conv(c) = l {
                c.weights[13] = 1.0;
            }
        }
        let out = b3ddn_forward(&z, &w).unwrap();
        assert!(out.max_abs_diff(&z).unwrap() < 1e-15);
    }

    #[test]
    fn matches_naive_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = random_weights(&mut rng, 1, 3);
        let z = HsiCube::from_fn(3, 5, 5, |_, _, _| rng.random_range(0.0..1.0)).unwrap();
        let fast = b3ddn_forward(&z, &w).unwrap();
        let slow = naive_forward(&z, &w);
        for (a, b) in fast.data().iter().zip(&slow) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        let z = HsiCube::from_fn(1, 2, 7, |_, _, _| rng.random_range(0.0..1.0)).unwrap();
        let fast = b3ddn_forward(&z, &w).unwrap();
        let slow = naive_forward(&z, &w);
        for (a, b) in fast.data().iter().zip(&slow) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn any_band_count_and_residual_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w = random_weights(&mut rng, 2, 2);
        for bands in [3, 31, 45] {
            let z = HsiCube::from_fn(bands, 6, 6, |_, _, _| rng.random_range(0.0..1.0)).unwrap();
            let f = b3ddn_forward(&z, &w).unwrap();
            let d = b3ddn_denoise(&z, &w).unwrap();
            assert_eq!(d.shape(), z.shape());
            let sum = d.add(&f).unwrap();
            assert!(sum.max_abs_diff(&z).unwrap() < 1e-12);
        }
    }

    #[test]
    fn malformed_weights_are_rejected() {
        let mut w = B3ddnWeights::zeros(1, 2);
        if let Layer::BatchNorm(bn) = &mut w.layers[2] {
            bn.running_var[0] = 0.0;
        }
        assert!(matches!(w.validate(), Err(Error::Weights(_))));

        let mut w = B3ddnWeights::zeros(1, 2);
        w.layers[1] = Layer::Conv(Conv3d::zeros(3, 2));
        assert!(w.validate().is_err());

        let mut w = B3ddnWeights::zeros(1, 2);
        w.layers.swap(1, 2);
        assert!(w.validate().is_err());

        let mut w = B3ddnWeights::zeros(1, 2);
        w.layers.pop();
        assert!(w.validate().is_err());

        let z = HsiCube::zeros(1, 3, 3).unwrap();
        let mut w = B3ddnWeights::zeros(0, 2);
        if let Layer::Conv(c) = &mut w.layers[0] {
            c.bias.push(0.0);
        }
        assert!(b3ddn_forward(&z, &w).is_err());
    }

    #[test]
    fn trainable_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = random_weights(&mut rng, 2, 3);
        let flat = w.trainable();
        assert_eq!(flat.len(), w.parameter_count());
        let mut v = B3ddnWeights::zeros(2, 3);
        v.set_trainable(&flat).unwrap();
        assert_eq!(v.trainable(), flat);
    }
}
