//! Training of the denoising network on synthetic noisy/clean patch pairs.
//!
//! The loss is the mean absolute difference between the predicted residual
//! `F(z̃)` and the true noise `z̃ − z`. Batch normalization uses mini-batch
//! statistics while training and updates its running statistics with momentum
//! 0.1. Parameters are updated with Adam.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use super::b3ddn::{conv_forward, relu_inplace, B3ddnWeights, Conv3d, Layer, ShiftTable, TAPS};
use crate::cube::HsiCube;
use crate::error::{Error, Result};

const BN_MOMENTUM: f64 = 0.1;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    /// Spectral depth of a training patch.
    pub patch_bands: usize,
    /// Spatial side of a (square) training patch.
    pub patch_size: usize,
    /// Range of the per-patch noise std on the [0, 1] intensity scale.
    pub noise_range: (f64, f64),
    pub seed: u64,
    pub channels: usize,
    pub num_blocks: usize,
    /// Worker threads; 0 uses the global pool, 1 forces single-threaded training.
    pub threads: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            learning_rate: 0.0002,
            batch_size: 4,
            epochs: 200,
            steps_per_epoch: 1,
            patch_bands: 16,
            patch_size: 16,
            noise_range: (0.2 / 255.0, 10.0 / 255.0),
            seed: 0,
            channels: 8,
            num_blocks: 2,
            threads: 0,
        }
    }
}

impl TrainOptions {
    pub fn steps(&self) -> usize {
        self.epochs * self.steps_per_epoch
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::spec("learning rate must be finite and non-negative"));
        }
        if self.batch_size == 0 || self.patch_bands == 0 || self.patch_size == 0 {
            return Err(Error::spec("batch size and patch extents must be positive"));
        }
        let (lo, hi) = self.noise_range;
        if !(lo > 0.0 && lo <= hi && hi < 1.0) {
            return Err(Error::spec(format!(
                "noise range must satisfy 0 < lo <= hi < 1, got [{lo}, {hi}]"
            )));
        }
        if self.channels == 0 {
            return Err(Error::spec("network needs at least one channel"));
        }
        Ok(())
    }
}

/// A noisy patch and its clean counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    pub noisy: HsiCube,
    pub clean: HsiCube,
}

/// Loss history of a training run.
#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub losses: Vec<f64>,
}

impl TrainReport {
    /// Trailing moving average of the loss with the given window.
    pub fn smoothed(&self, window: usize) -> Vec<f64> {
        let w = window.max(1);
        (0..self.losses.len())
            .map(|i| {
                let lo = (i + 1).saturating_sub(w);
                let s = &self.losses[lo..=i];
                s.iter().sum::<f64>() / s.len() as f64
            })
            .collect()
    }

    pub fn to_csv(&self, window: usize) -> String {
        let mut out = String::from("step,loss,smoothed_loss\n");
        for (i, (l, s)) in self.losses.iter().zip(self.smoothed(window)).enumerate() {
            out.push_str(&format!("{},{:e},{:e}\n", i + 1, l, s));
        }
        out
    }
}

/// A smooth, band-limited synthetic cube with values in [0.1, 0.9].
///
/// It is a sum of cosines whose spatial periods are at least 8 pixels and
/// which vary slowly across bands.
pub fn smooth_cube(bands: usize, rows: usize, cols: usize, seed: u64) -> HsiCube {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let kr = (rows / 8).max(1) as i64;
    let kc = (cols / 8).max(1) as i64;
    let terms: Vec<_> = (0..12)
        .map(|_| {
            let fr = rng.random_range(-kr..=kr) as f64 / rows as f64;
            let fc = rng.random_range(-kc..=kc) as f64 / cols as f64;
            let fb = rng.random_range(0.0..0.08);
            let amp = rng.random_range(0.2..1.0) / (1.0 + 8.0 * (fr.abs() + fc.abs()));
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            (fb, fr, fc, amp, phase)
        })
        .collect();
    let mut cube = HsiCube::from_fn(bands, rows, cols, |b, r, c| {
        terms
            .iter()
            .map(|&(fb, fr, fc, amp, phase)| {
                amp * (std::f64::consts::TAU * (fb * b as f64 + fr * r as f64 + fc * c as f64)
                    + phase)
                    .cos()
            })
            .sum()
    })
    .expect("positive extents");
    let (lo, hi) = cube
        .data()
        .iter()
        .fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
    let span = (hi - lo).max(1e-12);
    cube.data_mut()
        .iter_mut()
        .for_each(|v| *v = 0.1 + 0.8 * (*v - lo) / span);
    cube
}

fn dihedral(cube: &HsiCube, mode: u8) -> HsiCube {
    let (n, s, _) = cube.shape();
    HsiCube::from_fn(n, s, s, |b, r, c| {
        let (mut rr, mut cc) = match mode % 4 {
            0 => (r, c),
            1 => (c, s - 1 - r),
            2 => (s - 1 - r, s - 1 - c),
            _ => (s - 1 - c, r),
        };
        if mode >= 4 {
            std::mem::swap(&mut rr, &mut cc);
        }
        cube[(b, rr, cc)]
    })
    .expect("same extents")
}

/// Draws `count` randomly cropped, rotated/flipped patches with per-patch
/// noise std drawn uniformly from `opts.noise_range`.
pub fn random_patch_pairs(
    dataset: &[HsiCube],
    opts: &TrainOptions,
    rng: &mut ChaCha20Rng,
    count: usize,
) -> Result<Vec<PatchPair>> {
    let (pb, ps) = (opts.patch_bands, opts.patch_size);
    let eligible: Vec<&HsiCube> = dataset
        .iter()
        .filter(|c| c.bands() >= pb && c.rows() >= ps && c.cols() >= ps)
        .collect();
    if eligible.is_empty() {
        return Err(Error::Data(format!(
            "no training cube is at least {pb}x{ps}x{ps}"
        )));
    }
    let (lo, hi) = opts.noise_range;
    (0..count)
        .map(|_| {
            let src = eligible[rng.random_range(0..eligible.len())];
            let b0 = rng.random_range(0..=src.bands() - pb);
            let r0 = rng.random_range(0..=src.rows() - ps);
            let c0 = rng.random_range(0..=src.cols() - ps);
            let crop = HsiCube::from_fn(pb, ps, ps, |b, r, c| src[(b0 + b, r0 + r, c0 + c)])?;
            let clean = dihedral(&crop, rng.random_range(0..8u8));
            let sigma = if hi > lo {
                rng.random_range(lo..=hi)
            } else {
                lo
            };
            let normal = Normal::new(0.0, sigma).map_err(|e| Error::spec(e.to_string()))?;
            let noise: Vec<f64> = (0..clean.len()).map(|_| normal.sample(rng)).collect();
            let noisy = HsiCube::from_vec(
                pb,
                ps,
                ps,
                clean
                    .data()
                    .iter()
                    .zip(&noise)
                    .map(|(v, e)| v + e)
                    .collect(),
            )?;
            Ok(PatchPair { noisy, clean })
        })
        .collect()
}

/// Weight gradients and (optionally) input gradient of one convolution.
fn conv_backward(
    conv: &Conv3d,
    input: &[f64],
    grad_out: &[f64],
    table: &ShiftTable,
    want_input: bool,
) -> (Vec<f64>, Vec<f64>, Option<Vec<f64>>) {
    let v = table.voxels;
    let gw: Vec<f64> = (0..conv.out_ch)
        .into_par_iter()
        .flat_map_iter(|o| {
            let go = &grad_out[o * v..(o + 1) * v];
            (0..conv.in_ch).flat_map(move |i| {
                let src = &input[i * v..(i + 1) * v];
                (0..TAPS).map(move |t| {
                    table
                        .segments(t)
                        .iter()
                        .map(|&(d, s, len)| {
                            go[d..d + len]
                                .iter()
                                .zip(&src[s..s + len])
                                .map(|(a, b)| a * b)
                                .sum::<f64>()
                        })
                        .sum::<f64>()
                })
            })
        })
        .collect();
    let gb: Vec<f64> = grad_out.chunks(v).map(|g| g.iter().sum()).collect();
    let gi = want_input.then(|| {
        let mut gi = vec![0.0; conv.in_ch * v];
        gi.par_chunks_mut(v).enumerate().for_each(|(i, dst)| {
            for o in 0..conv.out_ch {
                let go = &grad_out[o * v..(o + 1) * v];
                for (t, &w) in conv.tap(o, i).iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    for &(d, s, len) in table.segments(t) {
                        for (a, b) in dst[s..s + len].iter_mut().zip(&go[d..d + len]) {
                            *a += w * b;
                        }
                    }
                }
            }
        });
        gi
    });
    (gw, gb, gi)
}

fn add_into(acc: &mut [f64], x: &[f64]) {
    acc.iter_mut().zip(x).for_each(|(a, b)| *a += b);
}

/// Everything a training step needs from one forward/backward pass.
struct StepResult {
    loss: f64,
    grads: Vec<f64>,
    /// Per block: per-channel batch mean and biased variance.
    batch_stats: Vec<(Vec<f64>, Vec<f64>)>,
    /// Number of values per channel that entered the batch statistics.
    stat_count: usize,
    signature: Vec<i8>,
}

fn forward_backward(weights: &B3ddnWeights, batch: &[PatchPair]) -> Result<StepResult> {
    weights.validate()?;
    let first = batch
        .first()
        .ok_or_else(|| Error::Data("empty training batch".into()))?;
    let shape = first.noisy.shape();
    for p in batch {
        if p.noisy.shape() != shape || p.clean.shape() != shape {
            return Err(Error::dim("all patches in a batch must share one shape"));
        }
    }
    let table = ShiftTable::new(shape.0, shape.1, shape.2);
    let v = table.voxels;
    let c = weights.channels;
    let nb = weights.num_blocks;
    let s_count = batch.len();
    let m = (s_count * v) as f64;
    let mut signature = Vec::new();

    // Forward, keeping what the backward pass needs.
    let pre0: Vec<Vec<f64>> = batch
        .iter()
        .map(|p| conv_forward(weights.first(), p.noisy.data(), &table))
        .collect();
    let mut acts: Vec<Vec<Vec<f64>>> = vec![pre0
        .iter()
        .map(|a| {
            let mut h = a.clone();
            relu_inplace(&mut h);
            h
        })
        .collect()];
    for a in &pre0 {
        signature.extend(a.iter().map(|x| (*x > 0.0) as i8));
    }

    let mut xhats = Vec::with_capacity(nb);
    let mut bn_out = Vec::with_capacity(nb);
    let mut inv_stds = Vec::with_capacity(nb);
    let mut batch_stats = Vec::with_capacity(nb);
    for b in 0..nb {
        let (conv, bn) = weights.block(b);
        let pre: Vec<Vec<f64>> = acts[b]
            .iter()
            .map(|h| conv_forward(conv, h, &table))
            .collect();
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for ch in 0..c {
            let mu = pre
                .iter()
                .map(|x| x[ch * v..(ch + 1) * v].iter().sum::<f64>())
                .sum::<f64>()
                / m;
            let vr = pre
                .iter()
                .map(|x| {
                    x[ch * v..(ch + 1) * v]
                        .iter()
                        .map(|y| (y - mu) * (y - mu))
                        .sum::<f64>()
                })
                .sum::<f64>()
                / m;
            mean[ch] = mu;
            var[ch] = vr;
        }
        let inv: Vec<f64> = var.iter().map(|vr| 1.0 / (vr + bn.eps).sqrt()).collect();
        let xh: Vec<Vec<f64>> = pre
            .iter()
            .map(|x| {
                x.iter()
                    .enumerate()
                    .map(|(k, &y)| (y - mean[k / v]) * inv[k / v])
                    .collect()
            })
            .collect();
        let yb: Vec<Vec<f64>> = xh
            .iter()
            .map(|x| {
                x.iter()
                    .enumerate()
                    .map(|(k, &y)| bn.scale[k / v] * y + bn.shift[k / v])
                    .collect()
            })
            .collect();
        for y in &yb {
            signature.extend(y.iter().map(|x| (*x > 0.0) as i8));
        }
        acts.push(
            yb.iter()
                .map(|y| {
                    let mut h = y.clone();
                    relu_inplace(&mut h);
                    h
                })
                .collect(),
        );
        xhats.push(xh);
        bn_out.push(yb);
        inv_stds.push(inv);
        batch_stats.push((mean, var));
    }
    let outs: Vec<Vec<f64>> = acts[nb]
        .iter()
        .map(|h| conv_forward(weights.last(), h, &table))
        .collect();

    // Loss and its gradient; sign(0) = 0.
    let mut loss = 0.0;
    let mut grad_out: Vec<Vec<f64>> = Vec::with_capacity(s_count);
    for (o, p) in outs.iter().zip(batch) {
        let mut g = Vec::with_capacity(v);
        for ((&f, &zn), &zc) in o.iter().zip(p.noisy.data()).zip(p.clean.data()) {
            let d = f - (zn - zc);
            loss += d.abs();
            let sgn = if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            };
            signature.push(sgn as i8);
            g.push(sgn / m);
        }
        grad_out.push(g);
    }
    loss /= m;

    // Backward. Gradients are collected per layer and flattened at the end.
    let mut layer_grads: Vec<Vec<f64>> = vec![Vec::new(); weights.layers.len()];
    let last_idx = weights.layers.len() - 1;
    let mut dh: Vec<Vec<f64>> = Vec::with_capacity(s_count);
    {
        let mut gw = vec![0.0; weights.last().weights.len()];
        let mut gb = vec![0.0; 1];
        for (h, g) in acts[nb].iter().zip(&grad_out) {
            let (w, b, i) = conv_backward(weights.last(), h, g, &table, true);
            add_into(&mut gw, &w);
            add_into(&mut gb, &b);
            dh.push(i.expect("requested"));
        }
        gw.extend(gb);
        layer_grads[last_idx] = gw;
    }
    for b in (0..nb).rev() {
        let (conv, bn) = weights.block(b);
        // Through ReLU.
        for (d, y) in dh.iter_mut().zip(&bn_out[b]) {
            d.iter_mut().zip(y).for_each(|(g, &yv)| {
                if yv <= 0.0 {
                    *g = 0.0
                }
            });
        }
        // Through batch norm.
        let mut gscale = vec![0.0; c];
        let mut gshift = vec![0.0; c];
        let mut sum_dx = vec![0.0; c];
        let mut sum_dx_xh = vec![0.0; c];
        for (d, xh) in dh.iter().zip(&xhats[b]) {
            for ch in 0..c {
                let r = ch * v..(ch + 1) * v;
                for (&g, &x) in d[r.clone()].iter().zip(&xh[r]) {
                    gscale[ch] += g * x;
                    gshift[ch] += g;
                    sum_dx[ch] += g * bn.scale[ch];
                    sum_dx_xh[ch] += g * bn.scale[ch] * x;
                }
            }
        }
        let mut dpre: Vec<Vec<f64>> = Vec::with_capacity(s_count);
        for (d, xh) in dh.iter().zip(&xhats[b]) {
            dpre.push(
                d.iter()
                    .zip(xh)
                    .enumerate()
                    .map(|(k, (&g, &x))| {
                        let ch = k / v;
                        let dx = g * bn.scale[ch];
                        inv_stds[b][ch] / m * (m * dx - sum_dx[ch] - x * sum_dx_xh[ch])
                    })
                    .collect(),
            );
        }
        gscale.extend(gshift);
        layer_grads[2 + 2 * b] = gscale;
        // Through the block convolution.
        let mut gw = vec![0.0; conv.weights.len()];
        let mut gb = vec![0.0; conv.out_ch];
        let mut next = Vec::with_capacity(s_count);
        for (h, g) in acts[b].iter().zip(&dpre) {
            let (w, bb, i) = conv_backward(conv, h, g, &table, true);
            add_into(&mut gw, &w);
            add_into(&mut gb, &bb);
            next.push(i.expect("requested"));
        }
        gw.extend(gb);
        layer_grads[1 + 2 * b] = gw;
        dh = next;
    }
    {
        let conv = weights.first();
        let mut gw = vec![0.0; conv.weights.len()];
        let mut gb = vec![0.0; conv.out_ch];
        for ((d, a), p) in dh.iter_mut().zip(&pre0).zip(batch) {
            d.iter_mut().zip(a).for_each(|(g, &av)| {
                if av <= 0.0 {
                    *g = 0.0
                }
            });
            let (w, bb, _) = conv_backward(conv, p.noisy.data(), d, &table, false);
            add_into(&mut gw, &w);
            add_into(&mut gb, &bb);
        }
        gw.extend(gb);
        layer_grads[0] = gw;
    }

    Ok(StepResult {
        loss,
        grads: layer_grads.concat(),
        batch_stats,
        stat_count: s_count * v,
        signature,
    })
}

/// Mean L1 loss of the predicted residual on `batch`, with exact gradients
/// with respect to [`B3ddnWeights::trainable`]. Batch normalization uses the
/// statistics of `batch`.
pub fn l1_loss_and_gradients(
    weights: &B3ddnWeights,
    batch: &[PatchPair],
) -> Result<(f64, Vec<f64>)> {
    let r = forward_backward(weights, batch)?;
    Ok((r.loss, r.grads))
}

impl B3ddnWeights {
    /// Sign pattern of every ReLU input and loss residual in training mode.
    /// The loss is smooth around `self` while this pattern stays constant.
    pub fn training_signature(&self, batch: &[PatchPair]) -> Result<Vec<i8>> {
        Ok(forward_backward(self, batch)?.signature)
    }

    /// He-normal initialized network. The output conv starts at zero, so the
    /// untrained denoiser is the identity.
    pub fn he_init(num_blocks: usize, channels: usize, rng: &mut ChaCha20Rng) -> Self {
        let mut w = B3ddnWeights::zeros(num_blocks, channels);
        let last = w.layers.len() - 1;
        for l in &mut w.layers[..last] {
            if let Layer::Conv(conv) = l {
                let std = (2.0 / (conv.in_ch * TAPS) as f64).sqrt();
                for x in &mut conv.weights {
                    let e: f64 = StandardNormal.sample(rng);
                    *x = std * e;
                }
            }
        }
        w
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }
}

fn update_running_stats(weights: &mut B3ddnWeights, stats: &[(Vec<f64>, Vec<f64>)], count: usize) {
    let unbias = if count > 1 {
        count as f64 / (count - 1) as f64
    } else {
        1.0
    };
    for (b, (mean, var)) in stats.iter().enumerate() {
        if let Layer::BatchNorm(bn) = &mut weights.layers[2 + 2 * b] {
            for ch in 0..bn.channels {
                bn.running_mean[ch] =
                    (1.0 - BN_MOMENTUM) * bn.running_mean[ch] + BN_MOMENTUM * mean[ch];
                bn.running_var[ch] =
                    (1.0 - BN_MOMENTUM) * bn.running_var[ch] + BN_MOMENTUM * var[ch] * unbias;
            }
        }
    }
}

fn run_training(dataset: &[HsiCube], opts: &TrainOptions) -> Result<(B3ddnWeights, TrainReport)> {
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let mut weights = B3ddnWeights::he_init(opts.num_blocks, opts.channels, &mut rng);
    // Fail early on unusable data even when no step will run.
    random_patch_pairs(dataset, opts, &mut rng.clone(), 1)?;
    let mut params = weights.trainable();
    let mut adam = Adam::new(params.len());
    let mut report = TrainReport::default();
    for _ in 0..opts.steps() {
        let batch = random_patch_pairs(dataset, opts, &mut rng, opts.batch_size)?;
        let step = forward_backward(&weights, &batch)?;
        if !step.loss.is_finite() {
            return Err(Error::Data("training loss diverged".into()));
        }
        report.losses.push(step.loss);
        update_running_stats(&mut weights, &step.batch_stats, step.stat_count);
        adam.step(&mut params, &step.grads, opts.learning_rate);
        weights.set_trainable(&params)?;
    }
    Ok((weights, report))
}

/// Trains a fresh network on random patches of `dataset`.
pub fn train_b3ddn(
    dataset: &[HsiCube],
    opts: &TrainOptions,
) -> Result<(B3ddnWeights, TrainReport)> {
    opts.validate()?;
    if opts.threads == 0 {
        return run_training(dataset, opts);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| Error::Data(format!("cannot build thread pool: {e}")))?
        .install(|| run_training(dataset, opts))
}
