#![allow(dead_code)]

use hsi_deconv::degradation::gaussian_samples;
use hsi_deconv::denoiser::{
    l1_loss_and_gradients, random_patch_pairs, smooth_cube, B3ddnWeights, Layer, PatchPair,
    TrainOptions,
};
use hsi_deconv::{HsiCube, KernelStack};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub fn random_cube(seed: u64, n: usize, p: usize, q: usize) -> HsiCube {
    HsiCube::from_vec(n, p, q, gaussian_samples(seed, n * p * q)).unwrap()
}

/// The blur operator as an explicit `L × L` matrix, built from the spatial
/// definition with wrap-around indexing.
pub fn dense_blur(k: &KernelStack, n: usize, p: usize, q: usize) -> Vec<Vec<f64>> {
    let l = n * p * q;
    let (ch, cw) = ((k.kh() - 1) / 2, (k.kw() - 1) / 2);
    let mut h = vec![vec![0.0; l]; l];
    for b in 0..n {
        let taps = k.for_band(b);
        for r in 0..p {
            for c in 0..q {
                let row = b * p * q + r * q + c;
                for i in 0..k.kh() {
                    for j in 0..k.kw() {
                        let rr = (r + 4 * p + ch - i) % p;
                        let cc = (c + 4 * q + cw - j) % q;
                        h[row][b * p * q + rr * q + cc] += taps[i * k.kw() + j];
                    }
                }
            }
        }
    }
    h
}

pub fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(u, v)| u * v).sum())
        .collect()
}

pub fn transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    (0..n).map(|j| (0..n).map(|i| a[i][j]).collect()).collect()
}

/// `HᵀH + λI`.
pub fn normal_matrix(h: &[Vec<f64>], lambda: f64) -> Vec<Vec<f64>> {
    let n = h.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            out[i][j] = (0..n).map(|m| h[m][i] * h[m][j]).sum();
        }
        out[i][i] += lambda;
    }
    out
}

/// Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                let pivot_row = a[col].clone();
                for (dst, src) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                    *dst -= f * src;
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

pub fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v).abs())
        .fold(0.0, f64::max)
}

/// `(HᵀH + λI)⁻¹ (Hᵀy + c)`, the reference for both x-update and ridge solutions.
pub fn dense_ridge(k: &KernelStack, y: &HsiCube, lambda: f64, extra: Option<&[f64]>) -> Vec<f64> {
    let (n, p, q) = y.shape();
    let h = dense_blur(k, n, p, q);
    let mut rhs = mat_vec(&transpose(&h), y.data());
    if let Some(e) = extra {
        rhs.iter_mut().zip(e).for_each(|(r, v)| *r += v);
    }
    solve(normal_matrix(&h, lambda), rhs)
}

const TAPS: usize = 27;

pub fn tiny_batch(seed: u64) -> (B3ddnWeights, Vec<PatchPair>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut w = B3ddnWeights::he_init(1, 2, &mut rng);
    // The output conv starts at zero; give it weight so every layer sees gradient.
    if let Some(Layer::Conv(last)) = w.layers.last_mut() {
        for v in last.weights.iter_mut().chain(last.bias.iter_mut()) {
            *v = rng.random_range(-0.5..0.5);
        }
    }
    let opts = TrainOptions {
        patch_bands: 2,
        patch_size: 4,
        ..Default::default()
    };
    let data = vec![smooth_cube(3, 8, 8, seed)];
    let batch = random_patch_pairs(&data, &opts, &mut rng, 2).unwrap();
    (w, batch)
}

/// Relative errors of analytic vs. central-difference gradients at `count`
/// random parameters whose ±h neighbourhood keeps every ReLU and sign fixed.
pub fn gradient_check(seed: u64, count: usize) -> Vec<f64> {
    let (w, batch) = tiny_batch(seed);
    let (_, grads) = l1_loss_and_gradients(&w, &batch).unwrap();
    let params = w.trainable();
    // Conv bias feeding batch norm is cancelled by the mean subtraction.
    let pre_bn_bias = 2 * TAPS + 2 + 4 * TAPS;
    let base_sig = w.training_signature(&batch).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xabc);
    let h = 1e-6;
    let mut errors = Vec::new();
    let mut tries = 0;
    while errors.len() < count {
        tries += 1;
        assert!(tries < 100 * count, "too many kinks");
        let i = rng.random_range(0..params.len());
        if i == pre_bn_bias || i == pre_bn_bias + 1 {
            continue;
        }
        let eval = |delta: f64| {
            let mut p = params.clone();
            p[i] += delta;
            let mut wp = w.clone();
            wp.set_trainable(&p).unwrap();
            let sig = wp.training_signature(&batch).unwrap();
            (l1_loss_and_gradients(&wp, &batch).unwrap().0, sig)
        };
        let (lp, sp) = eval(h);
        let (lm, sm) = eval(-h);
        if sp != base_sig || sm != base_sig {
            continue;
        }
        let numeric = (lp - lm) / (2.0 * h);
        let scale = grads[i].abs().max(numeric.abs()).max(1e-6);
        errors.push((grads[i] - numeric).abs() / scale);
    }
    errors
}
