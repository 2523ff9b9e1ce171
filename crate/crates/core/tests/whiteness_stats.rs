mod common;

use common::random_cube;
use hsi_deconv::whiteness::{autocorr3d, whiteness_measure};

const DRAWS: u64 = 1000;

fn lag_samples(n: usize, p: usize, q: usize, seed0: u64) -> Vec<f64> {
    (0..DRAWS)
        .map(|d| {
            let r = random_cube(seed0 + d, n, p, q);
            autocorr3d(&r).unwrap()[(0, 0, 1)]
        })
        .collect()
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

#[test]
fn gaussian_whiteness_concentrates_near_two() {
    let mut ws: Vec<f64> = (0..DRAWS)
        .map(|d| {
            whiteness_measure(&random_cube(10_000 + d, 4, 32, 32))
                .unwrap()
                .w
        })
        .collect();
    let (m, _) = mean_std(&ws);
    assert!((m - 2.0).abs() < 0.05, "mean whiteness {m}");

    ws.sort_by(f64::total_cmp);
    let lo = ws[(0.005 * DRAWS as f64) as usize];
    let hi = ws[(0.995 * DRAWS as f64) as usize];
    let fresh = whiteness_measure(&random_cube(999_999, 4, 32, 32))
        .unwrap()
        .w;
    assert!(lo <= fresh && fresh <= hi, "{fresh} outside [{lo}, {hi}]");
}

#[test]
fn nonzero_lag_is_centred_and_shrinks_with_size() {
    let small = lag_samples(1, 32, 32, 0);
    let large = lag_samples(8, 32, 32, 50_000);
    let (m_s, sd_s) = mean_std(&small);
    let (m_l, sd_l) = mean_std(&large);
    let se = |sd: f64| sd / (DRAWS as f64).sqrt();
    assert!(m_s.abs() < 3.0 * se(sd_s), "mean {m_s}");
    assert!(m_l.abs() < 3.0 * se(sd_l), "mean {m_l}");
    assert!(sd_l < sd_s);
    // Unit-variance noise gives a lag std of 1/√L.
    for (sd, l) in [(sd_s, 1024.0), (sd_l, 8192.0)] {
        let expect = 1.0 / f64::sqrt(l);
        assert!((sd - expect).abs() < 0.2 * expect, "std {sd} vs {expect}");
    }
}
