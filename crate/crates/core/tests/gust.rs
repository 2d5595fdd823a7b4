mod common;

use gustrom::gust::{
    one_minus_cosine, von_karman_psd, von_karman_psd_temporal, von_karman_realization, DiscreteGustSpec,
    TurbulenceSpec, VonKarmanFilter,
};
use proptest::prelude::*;

fn turbulence(seed: u64) -> TurbulenceSpec {
    TurbulenceSpec {
        sigma_w: 0.3,
        l_w: 1.0,
        u_inf: 1.0,
        seed,
        sample_rate: 20.0,
        duration: 20_000.0,
    }
}

#[test]
fn landmark_values() {
    let g = DiscreteGustSpec::new(0.7, 12.0, 3.0, 2.0).unwrap();
    let len = 12.0 / 2.0;
    assert_eq!(one_minus_cosine(&g, 3.0), 0.0);
    assert!((one_minus_cosine(&g, 3.0 + len)).abs() < 1e-12);
    assert!((one_minus_cosine(&g, 3.0 + len / 2.0) - 0.7).abs() < 1e-12);
    assert!((one_minus_cosine(&g, 3.0 + len / 4.0) - 0.35).abs() < 1e-12);
    assert!((one_minus_cosine(&g, 3.0 + 3.0 * len / 4.0) - 0.35).abs() < 1e-12);
}

/// Composite Simpson over the support.
fn simpson_area(g: &DiscreteGustSpec, n: usize) -> f64 {
    let (a, b) = (g.t0, g.t0 + g.h_g / g.u_inf);
    let h = (b - a) / n as f64;
    let mut s = one_minus_cosine(g, a) + one_minus_cosine(g, b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * one_minus_cosine(g, a + k as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn impulse_area() {
    for (w0, h, u) in [(0.14, 0.1, 1.0), (0.14, 55.0, 1.0), (3.0, 250.0, 40.0)] {
        let g = DiscreteGustSpec::new(w0, h, 0.5, u).unwrap();
        let area = simpson_area(&g, 4000);
        let want = w0 * h / (2.0 * u);
        assert!((area - want).abs() <= 1e-8 * want, "{area} vs {want}");
    }
}

proptest! {
    #[test]
    fn zero_outside_support(w0 in 0.01f64..5.0, h in 0.1f64..200.0, u in 0.5f64..50.0, t0 in 0.0f64..10.0, s in 0.0f64..1.0) {
        let g = DiscreteGustSpec::new(w0, h, t0, u).unwrap();
        let end = t0 + h / u;
        prop_assert_eq!(one_minus_cosine(&g, t0 - s * 10.0 - 1e-9), 0.0);
        prop_assert_eq!(one_minus_cosine(&g, end + s * 10.0 + 1e-9 * end), 0.0);
        prop_assert!(one_minus_cosine(&g, t0 + s * (end - t0)) >= 0.0);
    }

    #[test]
    fn linear_in_amplitude(w0 in 0.01f64..5.0, h in 0.1f64..200.0, s in 0.0f64..1.0) {
        let a = DiscreteGustSpec::new(w0, h, 0.0, 1.0).unwrap();
        let b = DiscreteGustSpec::new(2.0 * w0, h, 0.0, 1.0).unwrap();
        let t = s * h;
        prop_assert_eq!(one_minus_cosine(&b, t), 2.0 * one_minus_cosine(&a, t));
    }
}

#[test]
fn psd_tail_slope() {
    let spec = turbulence(0);
    // a wide grid spanning five decades past the corner; slope over the last decade
    let omegas: Vec<f64> = (0..=100).map(|k| 10f64.powf(3.0 + k as f64 / 100.0)).collect();
    let psd: Vec<f64> = omegas.iter().map(|&w| von_karman_psd(&spec, w)).collect();
    let slope = common::loglog_slope(&omegas, &psd);
    assert!((slope + 5.0 / 3.0).abs() < 0.05, "slope {slope}");
}

#[test]
fn psd_integrates_to_variance() {
    let spec = turbulence(0);
    // substitution omega = e^s
    let (a, b, n) = (-12.0f64, 12.0f64, 200_000);
    let h = (b - a) / n as f64;
    let total: f64 = (0..n)
        .map(|k| {
            let s = a + (k as f64 + 0.5) * h;
            von_karman_psd(&spec, s.exp()) * s.exp() * h
        })
        .sum();
    assert!((total / 0.09 - 1.0).abs() < 2e-3, "{total}");
}

#[test]
fn filter_tracks_spectrum_in_band() {
    let spec = turbulence(0);
    let filter = VonKarmanFilter::new(&spec);
    for k in 0..=60 {
        let f = 10f64.powf(-3.0 + k as f64 / 20.0);
        let w = 2.0 * std::f64::consts::PI * f;
        // one-sided density per rad is |H|^2; per unit frequency it gains 2 pi
        let fit = 2.0 * std::f64::consts::PI * filter.gain_squared(w);
        let exact = von_karman_psd_temporal(&spec, f);
        let db = 10.0 * (fit / exact).log10();
        assert!(db.abs() < 1.0, "f {f}: {db} dB");
    }
}

#[test]
fn welch_estimate_matches_spectrum() {
    let spec = turbulence(11);
    let sig = von_karman_realization(&spec).unwrap();
    let var = sig.variance();
    assert!((var / 0.09 - 1.0).abs() < 0.03, "variance {var}");
    let (f, p) = common::welch(&sig.values, spec.sample_rate, 4096);
    for (fk, pk) in f.iter().zip(&p).filter(|(fk, _)| **fk >= 0.01 && **fk <= 4.0) {
        let db = 10.0 * (pk / von_karman_psd_temporal(&spec, *fk)).log10();
        assert!(db.abs() < 2.0, "f {fk}: {db} dB");
    }
}

#[test]
fn seeds_differ_and_repeat() {
    let mut s = turbulence(1);
    s.duration = 50.0;
    let a = von_karman_realization(&s).unwrap();
    assert_eq!(a, von_karman_realization(&s).unwrap());
    s.seed = 2;
    assert_ne!(a.values, von_karman_realization(&s).unwrap().values);
}
