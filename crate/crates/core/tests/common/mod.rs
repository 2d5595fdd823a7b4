#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use gustrom::aerofoil::{AerofoilModel, AerofoilParams};
use gustrom::config::Config;
use gustrom::nmor::RomBuildOptions;
use gustrom::sim::TimeHistory;
use gustrom::test_models::LinearModel;

pub fn aerofoil() -> AerofoilModel {
    AerofoilModel::new(AerofoilParams::default()).unwrap()
}

/// Shipped aerofoil reduction settings with the given order and size.
pub fn aerofoil_rom_options(order: u8, modes: usize) -> RomBuildOptions {
    let mut o = Config::default().rom.build_options();
    o.order = order;
    o.selection.modes = modes;
    o
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect()
}

/// Random stable diagonalizable `A = V diag V^-1` with `pairs` complex pairs
/// and the remaining eigenvalues real, plus a random single-column `B`.
pub fn random_linear_model(seed: u64, n: usize, pairs: usize) -> LinearModel {
    let mut r = rng(seed);
    let mut d = DMatrix::<f64>::zeros(n, n);
    for p in 0..pairs {
        let sigma = -r.random_range(0.05..1.0);
        let omega = r.random_range(0.2..3.0);
        let i = 2 * p;
        d[(i, i)] = sigma;
        d[(i + 1, i + 1)] = sigma;
        d[(i, i + 1)] = omega;
        d[(i + 1, i)] = -omega;
    }
    for i in 2 * pairs..n {
        d[(i, i)] = -r.random_range(0.1..2.0);
    }
    let v = DMatrix::from_fn(n, n, |i, j| {
        let base: f64 = r.random_range(-0.5..0.5);
        if i == j {
            base + 2.0
        } else {
            base
        }
    });
    let vinv = v.clone().try_inverse().unwrap();
    let a = &v * d * vinv;
    let b = DMatrix::from_fn(n, 1, |_, _| r.random_range(-1.0..1.0));
    LinearModel::new(a, b).unwrap()
}

/// `||a - b||_2 / ||b||_2` over every sample of every channel.
pub fn rel_l2(a: &TimeHistory, b: &TimeHistory, n_channels: usize) -> f64 {
    assert_eq!(a.len(), b.len());
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..a.len() {
        for c in 0..n_channels {
            let (x, y) = (a.value(i, c), b.value(i, c));
            num += (x - y) * (x - y);
            den += y * y;
        }
    }
    (num / den).sqrt()
}

/// One-sided Welch PSD with a Hann window and 50% overlap.
pub fn welch(x: &[f64], fs: f64, nseg: usize) -> (Vec<f64>, Vec<f64>) {
    let window: Vec<f64> = (0..nseg)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / nseg as f64).cos())
        .collect();
    let wss: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(nseg);
    let mut acc = vec![0.0; nseg / 2 + 1];
    let mut count = 0;
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let mut start = 0;
    while start + nseg <= x.len() {
        let mut buf: Vec<Complex<f64>> = (0..nseg)
            .map(|i| Complex::new((x[start + i] - mean) * window[i], 0.0))
            .collect();
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            *a += buf[k].norm_sqr();
        }
        count += 1;
        start += nseg / 2;
    }
    let freqs = (0..=nseg / 2).map(|k| k as f64 * fs / nseg as f64).collect();
    let psd = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let one_sided = if k == 0 || k == nseg / 2 { 1.0 } else { 2.0 };
            one_sided * a / (count as f64 * fs * wss)
        })
        .collect();
    (freqs, psd)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
