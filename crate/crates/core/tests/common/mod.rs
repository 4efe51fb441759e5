//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `J_0(x), …, J_N(x)` by Miller's backward recurrence, normalised with
/// `J_0 + 2 Σ J_{2k} = 1`.
pub fn miller_bessel_j(x: f64) -> Vec<f64> {
    assert!(x > 0.0);
    let start = (x + 20.0 * x.cbrt() + 40.0).ceil() as usize;
    let start = start + start % 2;
    let mut f = vec![0.0f64; start + 2];
    f[start] = 1e-300;
    for n in (1..=start).rev() {
        f[n - 1] = 2.0 * n as f64 / x * f[n] - f[n + 1];
        if f[n - 1].abs() > 1e250 {
            for v in f.iter_mut().skip(n - 1) {
                *v *= 1e-250;
            }
        }
    }
    let mut norm = f[0];
    let mut k = 2;
    while k <= start {
        norm += 2.0 * f[k];
        k += 2;
    }
    f.truncate(start + 1);
    f.iter().map(|v| v / norm).collect()
}

/// `H_0^{(1)}(x) = J_0 + i Y_0` with `Y_0` from the Neumann series
/// `Y_0 = (2/π)(ln(x/2) + γ) J_0 − (4/π) Σ_{k≥1} (−1)^k J_{2k} / k`.
pub fn oracle_h0(x: f64) -> Complex64 {
    let j = miller_bessel_j(x);
    let mut sum = 0.0;
    let mut k = 1;
    while 2 * k < j.len() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * j[2 * k] / k as f64;
        k += 1;
    }
    let pi = std::f64::consts::PI;
    let y0 = 2.0 / pi * ((x / 2.0).ln() + EULER_GAMMA) * j[0] - 4.0 / pi * sum;
    Complex64::new(j[0], y0)
}

pub fn oracle_j1(x: f64) -> f64 {
    miller_bessel_j(x)[1]
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

pub fn normal_dvec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_vec(normal_vec(rng, n))
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Anomalies (columns minus their mean) of `m`.
pub fn centred(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = m.column_mean();
    let mut a = m.clone();
    for mut col in a.column_iter_mut() {
        col -= &mean;
    }
    a
}
