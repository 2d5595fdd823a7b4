//! Disturbance inputs: "1-minus-cosine" discrete gusts, Von Kármán
//! continuous turbulence and spanwise penetration delays.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, Matrix3, SMatrix, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelDescriptor;

/// A disturbance source sampled by the time integrator.
pub trait Excitation: Send + Sync {
    fn n_channels(&self) -> usize;
    fn sample(&self, t: f64, out: &mut [f64]);
    /// Short identifier used in history metadata.
    fn id(&self) -> String;
    /// Times where the signal loses smoothness. Integrators land a step on
    /// each so that the kink does not degrade their order.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// No disturbance on any channel.
#[derive(Debug, Clone, Copy)]
pub struct Calm(pub usize);

impl Excitation for Calm {
    fn n_channels(&self) -> usize {
        self.0
    }
    fn sample(&self, _t: f64, out: &mut [f64]) {
        out.fill(0.0);
    }
    fn id(&self) -> String {
        "calm".into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteGustSpec {
    /// Peak gust velocity (or `w0/U` for nondimensional models).
    pub w0: f64,
    /// Gradient distance.
    pub h_g: f64,
    /// Onset time.
    pub t0: f64,
    pub u_inf: f64,
}

impl DiscreteGustSpec {
    pub fn new(w0: f64, h_g: f64, t0: f64, u_inf: f64) -> Result<Self> {
        let spec = DiscreteGustSpec { w0, h_g, t0, u_inf };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h_g > 0.0) || !self.h_g.is_finite() {
            return Err(Error::config("h_g", "gradient distance must be positive"));
        }
        if !(self.u_inf > 0.0) || !self.u_inf.is_finite() {
            return Err(Error::config("u_inf", "freestream velocity must be positive"));
        }
        if !(self.w0 >= 0.0) || !self.w0.is_finite() {
            return Err(Error::config("w0", "peak gust velocity must be non-negative"));
        }
        if !self.t0.is_finite() {
            return Err(Error::config("t0", "onset time must be finite"));
        }
        Ok(())
    }

    /// Time spent inside the gust, `H_g / U`.
    pub fn duration(&self) -> f64 {
        self.h_g / self.u_inf
    }

    pub fn end_time(&self) -> f64 {
        self.t0 + self.duration()
    }

    /// Same gust expressed in semichords and `tau = U t / b` with `U = 1`.
    pub fn nondimensionalize(&self, semichord: f64) -> DiscreteGustSpec {
        DiscreteGustSpec {
            w0: self.w0 / self.u_inf,
            h_g: self.h_g / semichord,
            t0: self.t0 * self.u_inf / semichord,
            u_inf: 1.0,
        }
    }
}

/// `(w0/2) (1 - cos(2 pi U (t - t0) / H_g))` inside the gust, zero outside.
pub fn one_minus_cosine(spec: &DiscreteGustSpec, t: f64) -> f64 {
    let s = t - spec.t0;
    if s < 0.0 || s > spec.duration() {
        return 0.0;
    }
    0.5 * spec.w0 * (1.0 - (2.0 * PI * spec.u_inf * s / spec.h_g).cos())
}

/// Centre frequency of the gust, `U / H_g`.
pub fn gust_frequency(spec: &DiscreteGustSpec) -> f64 {
    spec.u_inf / spec.h_g
}

impl Excitation for DiscreteGustSpec {
    fn n_channels(&self) -> usize {
        1
    }
    fn sample(&self, t: f64, out: &mut [f64]) {
        out[0] = one_minus_cosine(self, t);
    }
    fn id(&self) -> String {
        format!("1mc(w0={},H_g={})", self.w0, self.h_g)
    }
    fn breakpoints(&self) -> Vec<f64> {
        vec![self.t0, self.end_time()]
    }
}

/// Spanwise gust arrival delay for a swept wing, `y sin(Lambda) / U`.
pub fn penetration_delay(y: f64, sweep_angle: f64, u_inf: f64) -> Result<f64> {
    if !(u_inf > 0.0) {
        return Err(Error::config("u_inf", "freestream velocity must be positive"));
    }
    Ok(y * sweep_angle.sin() / u_inf)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurbulenceSpec {
    /// RMS gust velocity.
    pub sigma_w: f64,
    /// Turbulence scale length.
    pub l_w: f64,
    pub u_inf: f64,
    pub seed: u64,
    /// Samples per time unit.
    pub sample_rate: f64,
    pub duration: f64,
}

impl TurbulenceSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_w >= 0.0) {
            return Err(Error::config("sigma_w", "turbulence intensity must be non-negative"));
        }
        if !(self.l_w > 0.0) {
            return Err(Error::config("l_w", "scale length must be positive"));
        }
        if !(self.u_inf > 0.0) {
            return Err(Error::config("u_inf", "freestream velocity must be positive"));
        }
        if !(self.sample_rate > 0.0) {
            return Err(Error::config("sample_rate", "sample rate must be positive"));
        }
        if !(self.duration * self.sample_rate >= 1.0) {
            return Err(Error::config("duration", "realization needs at least two samples"));
        }
        Ok(())
    }

    /// Semichord/`tau` units: velocities over `U`, lengths over `b`.
    pub fn nondimensionalize(&self, semichord: f64) -> TurbulenceSpec {
        let time_scale = semichord / self.u_inf;
        TurbulenceSpec {
            sigma_w: self.sigma_w / self.u_inf,
            l_w: self.l_w / semichord,
            u_inf: 1.0,
            seed: self.seed,
            sample_rate: self.sample_rate * time_scale,
            duration: self.duration / time_scale,
        }
    }
}

const VK_SCALE: f64 = 1.339;

/// Von Kármán vertical-gust PSD over spatial frequency `omega` (rad per unit
/// length). One-sided: the integral over `[0, inf)` is `sigma_w^2`.
pub fn von_karman_psd(spec: &TurbulenceSpec, omega: f64) -> f64 {
    let x = VK_SCALE * spec.l_w * omega;
    let x2 = x * x;
    spec.sigma_w * spec.sigma_w * spec.l_w / PI * (1.0 + 8.0 / 3.0 * x2) / (1.0 + x2).powf(11.0 / 6.0)
}

/// The same PSD per unit temporal frequency (Hz-like, cycles per time unit).
pub fn von_karman_psd_temporal(spec: &TurbulenceSpec, f: f64) -> f64 {
    let omega = 2.0 * PI * f / spec.u_inf;
    von_karman_psd(spec, omega) * 2.0 * PI / spec.u_inf
}

/// Three-pole/two-zero rational fit of the Von Kármán shaping filter,
/// in powers of `s T` with `T = L_w / U`:
///
/// `H(s) = sigma sqrt(T / pi) (1 + 2.7478 sT + 0.3398 (sT)^2) / (1 + 2.9958 sT + 1.9754 (sT)^2 + 0.1539 (sT)^3)`
///
/// Driven by white noise of two-sided intensity `pi`, the output PSD matches
/// [`von_karman_psd`] up to the fit error.
#[derive(Debug, Clone, Copy)]
pub struct VonKarmanFilter {
    pub gain: f64,
    pub time_constant: f64,
    pub numerator: [f64; 3],
    pub denominator: [f64; 4],
}

impl VonKarmanFilter {
    pub fn new(spec: &TurbulenceSpec) -> Self {
        let t = spec.l_w / spec.u_inf;
        VonKarmanFilter {
            gain: spec.sigma_w * (t / PI).sqrt(),
            time_constant: t,
            numerator: [1.0, 2.7478, 0.3398],
            denominator: [1.0, 2.9958, 1.9754, 0.1539],
        }
    }

    /// `|H(j w)|^2` at angular frequency `w`.
    pub fn gain_squared(&self, w: f64) -> f64 {
        let x = w * self.time_constant;
        let [n0, n1, n2] = self.numerator;
        let [d0, d1, d2, d3] = self.denominator;
        let num_re = n0 - n2 * x * x;
        let num_im = n1 * x;
        let den_re = d0 - d2 * x * x;
        let den_im = d1 * x - d3 * x * x * x;
        self.gain * self.gain * (num_re * num_re + num_im * num_im) / (den_re * den_re + den_im * den_im)
    }

    /// Controllable canonical realization `(A, B, C)` in physical time.
    fn realization(&self) -> (Matrix3<f64>, Vector3<f64>, Vector3<f64>) {
        let t = self.time_constant;
        let [_, d1, d2, d3] = self.denominator;
        let [n0, n1, n2] = self.numerator;
        // monic denominator in s: s^3 + a2 s^2 + a1 s + a0
        let a2 = d2 / (d3 * t);
        let a1 = d1 / (d3 * t * t);
        let a0 = 1.0 / (d3 * t * t * t);
        let k = self.gain / (d3 * t * t * t);
        let a = Matrix3::new(0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -a0, -a1, -a2);
        let b = Vector3::new(0.0, 0.0, 1.0);
        let c = Vector3::new(k * n0, k * n1 * t, k * n2 * t * t);
        (a, b, c)
    }
}

/// Sampled gust velocity history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GustSignal {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl GustSignal {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::contract("times and values differ in length"));
        }
        if times.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::contract("gust signal times must be strictly increasing"));
        }
        Ok(GustSignal { times, values })
    }

    /// Samples a discrete gust on a uniform grid.
    pub fn from_discrete(spec: &DiscreteGustSpec, step: f64, end: f64) -> Result<Self> {
        if !(step > 0.0) || !(end > 0.0) {
            return Err(Error::contract("preview grid needs positive step and end time"));
        }
        let n = (end / step).round() as usize + 1;
        let times: Vec<f64> = (0..n).map(|k| k as f64 * step).collect();
        let values = times.iter().map(|&t| one_minus_cosine(spec, t)).collect();
        GustSignal::new(times, values)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Linear interpolation; zero outside the sampled window.
    pub fn value_at(&self, t: f64) -> f64 {
        let n = self.times.len();
        if n == 0 || t < self.times[0] || t > self.times[n - 1] {
            return 0.0;
        }
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 {
            return self.values[0];
        }
        if k >= n {
            return self.values[n - 1];
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let s = (t - t0) / (t1 - t0);
        self.values[k - 1] + s * (self.values[k] - self.values[k - 1])
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.values.len() as f64
    }

    /// Two-column `time,velocity` table.
    pub fn write_table<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "time,velocity")?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(out, "{t},{v}")?;
        }
        Ok(())
    }
}

impl Excitation for GustSignal {
    fn n_channels(&self) -> usize {
        1
    }
    fn sample(&self, t: f64, out: &mut [f64]) {
        out[0] = self.value_at(t);
    }
    fn id(&self) -> String {
        format!("signal({} samples)", self.times.len())
    }
}

/// Seeded time-domain realization of Von Kármán turbulence.
///
/// The shaping filter is discretized exactly for white-noise input (state
/// transition by matrix exponential, process noise covariance by Van Loan's
/// block exponential), and the initial state is drawn from the stationary
/// covariance. The output is scaled so the stationary variance is exactly
/// `sigma_w^2`.
pub fn von_karman_realization(spec: &TurbulenceSpec) -> Result<GustSignal> {
    spec.validate()?;
    let dt = 1.0 / spec.sample_rate;
    let n = (spec.duration * spec.sample_rate).floor() as usize + 1;
    let times: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
    if spec.sigma_w == 0.0 {
        return GustSignal::new(times, vec![0.0; n]);
    }

    let filter = VonKarmanFilter::new(spec);
    let (a, b, c) = filter.realization();
    let q = PI * b * b.transpose();

    // Van Loan: exp([[-A, Q], [0, A^T]] dt) = [[., F^-1 Qd], [0, F^T]]
    let mut block = SMatrix::<f64, 6, 6>::zeros();
    block.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-a * dt));
    block.fixed_view_mut::<3, 3>(0, 3).copy_from(&(q * dt));
    block.fixed_view_mut::<3, 3>(3, 3).copy_from(&(a.transpose() * dt));
    let e = block.exp();
    let phi: Matrix3<f64> = e.fixed_view::<3, 3>(3, 3).transpose();
    let qd: Matrix3<f64> = phi * e.fixed_view::<3, 3>(0, 3);
    let qd = 0.5 * (qd + qd.transpose());

    let p_inf = stationary_covariance(&a, &q)?;
    // the rational fit holds about 96% of sigma^2; restore the exact variance
    let c = c * (spec.sigma_w / c.dot(&(p_inf * c)).sqrt());
    let l_noise = psd_sqrt(&qd);
    let l_init = psd_sqrt(&p_inf);

    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let normal3 = |rng: &mut ChaCha20Rng| {
        Vector3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        )
    };
    let mut x = l_init * normal3(&mut rng);
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        values.push(c.dot(&x));
        x = phi * x + l_noise * normal3(&mut rng);
    }
    GustSignal::new(times, values)
}

/// Solves `A P + P A^T + Q = 0` through the Kronecker form.
fn stationary_covariance(a: &Matrix3<f64>, q: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let n = 3;
    let mut k = DMatrix::<f64>::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            for m in 0..n {
                // (A P)_ij = sum_m A_im P_mj ; (P A^T)_ij = sum_m P_im A_jm
                k[(row, m * n + j)] += a[(i, m)];
                k[(row, i * n + m)] += a[(j, m)];
            }
        }
    }
    let rhs = DMatrix::from_fn(n * n, 1, |r, _| -q[(r / n, r % n)]);
    let p = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Consistency("shaping filter is not asymptotically stable".into()))?;
    let p = Matrix3::from_fn(|i, j| p[(i * n + j, 0)]);
    Ok(0.5 * (p + p.transpose()))
}

/// Symmetric square root factor `L` with `L L^T = M` for positive
/// semidefinite `M`; tiny negative eigenvalues from round-off are clipped.
fn psd_sqrt(m: &Matrix3<f64>) -> Matrix3<f64> {
    let eig = m.symmetric_eigen();
    let d = Matrix3::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    eig.eigenvectors * d
}

/// Converts a discrete gust to the time/velocity units the model expects.
pub fn discrete_in_model_units(
    spec: &DiscreteGustSpec,
    desc: &ModelDescriptor,
    semichord: Option<f64>,
) -> DiscreteGustSpec {
    match (desc.nondimensional_time, semichord) {
        (true, Some(b)) => spec.nondimensionalize(b),
        _ => *spec,
    }
}

/// Converts a turbulence spec to the units the model expects.
pub fn turbulence_in_model_units(
    spec: &TurbulenceSpec,
    desc: &ModelDescriptor,
    semichord: Option<f64>,
) -> TurbulenceSpec {
    match (desc.nondimensional_time, semichord) {
        (true, Some(b)) => spec.nondimensionalize(b),
        _ => *spec,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec() -> DiscreteGustSpec {
        DiscreteGustSpec::new(2.0, 30.0, 1.0, 15.0).unwrap()
    }

    #[test]
    fn endpoints_peak_quarter() {
        let s = spec();
        let d = s.duration();
        assert_eq!(one_minus_cosine(&s, s.t0), 0.0);
        assert!(one_minus_cosine(&s, s.t0 + d).abs() < 1e-12);
        assert!((one_minus_cosine(&s, s.t0 + d / 2.0) - s.w0).abs() < 1e-12);
        assert!((one_minus_cosine(&s, s.t0 + d / 4.0) - s.w0 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_outside_support() {
        let s = spec();
        for t in [-5.0, 0.999, s.end_time() + 1e-9, 100.0] {
            assert_eq!(one_minus_cosine(&s, t), 0.0);
        }
    }

    #[test]
    fn frequency_ratios() {
        assert_eq!(gust_frequency(&DiscreteGustSpec::new(1.0, 100.0, 0.0, 50.0).unwrap()), 0.5);
        assert_eq!(gust_frequency(&DiscreteGustSpec::new(1.0, 59.0, 0.0, 59.0).unwrap()), 1.0);
        let a = gust_frequency(&DiscreteGustSpec::new(1.0, 20.0, 0.0, 7.0).unwrap());
        let b = gust_frequency(&DiscreteGustSpec::new(1.0, 40.0, 0.0, 7.0).unwrap());
        assert!((a - 2.0 * b).abs() < 1e-15);
    }

    #[test]
    fn invalid_specs() {
        assert!(DiscreteGustSpec::new(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(DiscreteGustSpec::new(1.0, 1.0, 0.0, 0.0).is_err());
        assert!(DiscreteGustSpec::new(-1.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn penetration() {
        assert_eq!(penetration_delay(12.0, 0.0, 50.0).unwrap(), 0.0);
        assert_eq!(penetration_delay(0.0, 0.5, 50.0).unwrap(), 0.0);
        let d = penetration_delay(10.0, 30f64.to_radians(), 50.0).unwrap();
        assert!((d - 0.1).abs() < 1e-15);
        assert!(penetration_delay(1.0, 0.1, 0.0).is_err());
    }

    fn turb(sigma_w: f64) -> TurbulenceSpec {
        TurbulenceSpec {
            sigma_w,
            l_w: 2.0,
            u_inf: 1.5,
            seed: 7,
            sample_rate: 20.0,
            duration: 50.0,
        }
    }

    #[test]
    fn psd_limits() {
        let s = turb(1.3);
        assert!((von_karman_psd(&s, 0.0) - 1.3 * 1.3 * 2.0 / PI).abs() < 1e-15);
        for om in [0.0, 0.3, 10.0] {
            assert_eq!(von_karman_psd(&turb(0.0), om), 0.0);
        }
    }

    #[test]
    fn filter_dc_gain_matches_psd() {
        let s = turb(0.7);
        let f = VonKarmanFilter::new(&s);
        // one-sided temporal PSD in rad/s is (1/pi) * pi * |H|^2 = |H|^2
        let want = von_karman_psd(&s, 0.0) / s.u_inf;
        assert!((f.gain_squared(0.0) - want).abs() < 1e-14);
    }

    #[test]
    fn realization_deterministic_and_zero() {
        let a = von_karman_realization(&turb(1.0)).unwrap();
        let b = von_karman_realization(&turb(1.0)).unwrap();
        assert_eq!(a, b);
        let other = von_karman_realization(&TurbulenceSpec { seed: 8, ..turb(1.0) }).unwrap();
        assert_ne!(a.values, other.values);
        let z = von_karman_realization(&turb(0.0)).unwrap();
        assert!(z.values.iter().all(|v| *v == 0.0));
        assert_eq!(z.len(), 1001);
    }

    #[test]
    fn signal_interpolation() {
        let s = GustSignal::new(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 0.0]).unwrap();
        assert_eq!(s.value_at(0.5), 1.0);
        assert_eq!(s.value_at(1.0), 2.0);
        assert_eq!(s.value_at(1.75), 0.5);
        assert_eq!(s.value_at(-0.1), 0.0);
        assert_eq!(s.value_at(2.1), 0.0);
        assert!(GustSignal::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn nondimensional_conversion() {
        let s = DiscreteGustSpec::new(7.0, 20.0, 0.5, 50.0).unwrap();
        let n = s.nondimensionalize(0.5);
        assert_eq!(n.w0, 0.14);
        assert_eq!(n.h_g, 40.0);
        assert_eq!(n.t0, 50.0);
        // the gust occupies the same number of semichords of travel
        assert!((n.duration() - s.duration() * s.u_inf / 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn linear_in_amplitude(w0 in 0.0..10.0f64, h in 0.1..100.0f64, t in -1.0..120.0f64) {
            let a = DiscreteGustSpec::new(w0, h, 0.0, 1.0).unwrap();
            let b = DiscreteGustSpec::new(2.0 * w0, h, 0.0, 1.0).unwrap();
            prop_assert_eq!(one_minus_cosine(&b, t), 2.0 * one_minus_cosine(&a, t));
        }

        #[test]
        fn bounded_and_non_negative(h in 0.1..100.0f64, t in -1.0..120.0f64) {
            let s = DiscreteGustSpec::new(1.0, h, 0.0, 1.0).unwrap();
            let v = one_minus_cosine(&s, t);
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
