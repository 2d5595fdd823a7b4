//! Fixed-step RK4 time marching of full-order models and ROMs, response
//! histories and peak metrics.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gust::Excitation;
use crate::model::{Model, StateVector};
use crate::nmor::rom::{FixedRom, RomSystem};

/// First-order system driven by disturbance inputs.
pub trait OdeRhs {
    /// State dimension when known at compile time.
    const DIM: Option<usize> = None;
    fn dim(&self) -> usize;
    fn n_inputs(&self) -> usize;
    fn eval(&mut self, y: &[f64], u: &[f64], dy: &mut [f64]);
}

/// Full-order model with control inputs held at zero.
pub struct FomRhs<'a, M: Model + ?Sized> {
    model: &'a M,
    u_c: Vec<f64>,
}

impl<'a, M: Model + ?Sized> FomRhs<'a, M> {
    pub fn new(model: &'a M) -> Self {
        FomRhs {
            model,
            u_c: vec![0.0; model.descriptor().n_control_inputs],
        }
    }
}

impl<M: Model + ?Sized> OdeRhs for FomRhs<'_, M> {
    fn dim(&self) -> usize {
        self.model.descriptor().n_states
    }
    fn n_inputs(&self) -> usize {
        self.model.descriptor().n_disturbance_inputs
    }
    #[inline]
    fn eval(&mut self, y: &[f64], u: &[f64], dy: &mut [f64]) {
        self.model.residual_into(y, u, &self.u_c, dy);
    }
}

/// Compiled ROM in packed real coordinates.
pub struct RomRhs<'a> {
    sys: &'a RomSystem,
    work: Vec<f64>,
}

impl<'a> RomRhs<'a> {
    pub fn new(sys: &'a RomSystem) -> Self {
        RomRhs {
            sys,
            work: sys.workspace(),
        }
    }
}

impl OdeRhs for RomRhs<'_> {
    fn dim(&self) -> usize {
        self.sys.dim()
    }
    fn n_inputs(&self) -> usize {
        self.sys.n_inputs()
    }
    #[inline]
    fn eval(&mut self, y: &[f64], u: &[f64], dy: &mut [f64]) {
        self.sys.eval(y, u, dy, &mut self.work);
    }
}

impl<const M: usize> OdeRhs for FixedRom<'_, M> {
    const DIM: Option<usize> = Some(M);
    fn dim(&self) -> usize {
        M
    }
    fn n_inputs(&self) -> usize {
        self.system().n_inputs()
    }
    #[inline]
    fn eval(&mut self, y: &[f64], u: &[f64], dy: &mut [f64]) {
        FixedRom::eval(self, y, u, dy);
    }
}

/// Generic operation on an [`OdeRhs`], used to hand a dimension-specialised
/// ROM right-hand side to code written once.
pub trait RhsVisitor {
    type Output;
    fn visit<R: OdeRhs>(self, rhs: &mut R) -> Self::Output;
}

/// Runs `visitor` on the fastest available right-hand side for `sys`.
pub fn with_rom_rhs<V: RhsVisitor>(sys: &RomSystem, visitor: V) -> V::Output {
    macro_rules! fixed {
        ($($n:literal)*) => {
            match sys.dim() {
                $($n => visitor.visit(&mut FixedRom::<$n>::new(sys).expect("dimension matches")),)*
                _ => visitor.visit(&mut RomRhs::new(sys)),
            }
        };
    }
    fixed!(1 2 3 4 5 6 7 8 9 10 11 12 13 14 15 16)
}

/// Marches `rhs` from `y0` over `[0, duration]` with uniform step `step`,
/// calling `observer(t, y)` at `t = 0` and after every step.
///
/// Gust breakpoints that fall strictly inside a step split it into sub-steps
/// so the recorded grid stays uniform while no RK4 stage straddles a kink.
/// Returns the number of recorded steps.
pub fn integrate_with<R, E, F>(
    rhs: &mut R,
    y0: &[f64],
    gust: &E,
    step: f64,
    duration: f64,
    mut observer: F,
) -> Result<usize>
where
    R: OdeRhs + ?Sized,
    E: Excitation + ?Sized,
    F: FnMut(f64, &[f64]),
{
    let n = R::DIM.unwrap_or_else(|| rhs.dim());
    if y0.len() != n {
        return Err(Error::contract(format!("initial state has {} entries, expected {n}", y0.len())));
    }
    if gust.n_channels() != rhs.n_inputs() {
        return Err(Error::contract(format!(
            "gust has {} channels, model expects {}",
            gust.n_channels(),
            rhs.n_inputs()
        )));
    }
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::contract("time step must be positive"));
    }
    if !(duration >= step) {
        return Err(Error::contract("duration must cover at least one step"));
    }
    let n_steps = (duration / step).round() as usize;
    let mut breaks = gust.breakpoints();
    breaks.sort_by(f64::total_cmp);
    let mut next_break = 0;

    let n_u = rhs.n_inputs();
    let mut y = y0.to_vec();
    let mut last = y0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut u0 = vec![0.0; n_u];
    let mut u_mid = vec![0.0; n_u];
    let mut u1 = vec![0.0; n_u];

    observer(0.0, &y);
    gust.sample(0.0, &mut u0);
    for k in 0..n_steps {
        let t_start = k as f64 * step;
        let t_end = (k + 1) as f64 * step;
        let mut a = t_start;
        loop {
            while next_break < breaks.len() && breaks[next_break] <= a {
                next_break += 1;
            }
            let b = if next_break < breaks.len() && breaks[next_break] < t_end {
                breaks[next_break]
            } else {
                t_end
            };
            let h = b - a;
            gust.sample(a + 0.5 * h, &mut u_mid);
            gust.sample(b, &mut u1);

            rhs.eval(&y, &u0, &mut k1);
            for ((t, yi), k) in tmp.iter_mut().zip(&y).zip(&k1) {
                *t = yi + 0.5 * h * k;
            }
            rhs.eval(&tmp, &u_mid, &mut k2);
            for ((t, yi), k) in tmp.iter_mut().zip(&y).zip(&k2) {
                *t = yi + 0.5 * h * k;
            }
            rhs.eval(&tmp, &u_mid, &mut k3);
            for ((t, yi), k) in tmp.iter_mut().zip(&y).zip(&k3) {
                *t = yi + h * k;
            }
            rhs.eval(&tmp, &u1, &mut k4);
            let h6 = h / 6.0;
            for i in 0..n {
                y[i] += h6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            std::mem::swap(&mut u0, &mut u1);
            if b >= t_end {
                break;
            }
            a = b;
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence {
                time: t_end,
                last_finite: last,
            });
        }
        last.copy_from_slice(&y);
        observer(t_end, &y);
    }
    Ok(n_steps)
}

/// Coordinates a history is stored in.
#[derive(Debug, Clone)]
pub enum StateSpace {
    Full { labels: Vec<String> },
    /// Packed reduced coordinates; physical channels are reconstructed on
    /// demand.
    Reduced(Arc<RomSystem>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryMetadata {
    pub model_id: String,
    pub gust_id: String,
    pub step: f64,
    /// Seconds spent integrating.
    pub wall_clock: f64,
}

/// Uniformly sampled trajectory.
#[derive(Debug, Clone)]
pub struct TimeHistory {
    pub times: Vec<f64>,
    dim: usize,
    data: Vec<f64>,
    pub space: StateSpace,
    pub metadata: HistoryMetadata,
}

impl TimeHistory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Stored state dimension (full `n` or packed `m`).
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Stored snapshot `i`.
    pub fn state(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> &[String] {
        match &self.space {
            StateSpace::Full { labels } => labels,
            StateSpace::Reduced(sys) => sys.labels(),
        }
    }

    pub fn channel_index(&self, label: &str) -> Result<usize> {
        self.labels()
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::contract(format!("unknown channel `{label}`")))
    }

    /// Physical value of state `index` at sample `i`.
    pub fn value(&self, i: usize, index: usize) -> f64 {
        match &self.space {
            StateSpace::Full { .. } => self.data[i * self.dim + index],
            StateSpace::Reduced(sys) => sys.reconstruct_entry(index, self.state(i)),
        }
    }

    pub fn channel(&self, label: &str) -> Result<Vec<f64>> {
        let idx = self.channel_index(label)?;
        Ok((0..self.len()).map(|i| self.value(i, idx)).collect())
    }

    /// Full physical state at sample `i`.
    pub fn physical_state(&self, i: usize) -> Result<StateVector> {
        match &self.space {
            StateSpace::Full { .. } => StateVector::new(self.state(i).to_vec()),
            StateSpace::Reduced(sys) => {
                let mut w = vec![0.0; sys.n_states()];
                sys.reconstruct_into(self.state(i), &mut w);
                StateVector::new(w)
            }
        }
    }

    /// Comma-separated table `time,<label>...` of physical channels.
    pub fn write_table<W: Write>(&self, mut out: W, labels: &[String]) -> Result<()> {
        let idx: Vec<usize> = labels.iter().map(|l| self.channel_index(l)).collect::<Result<_>>()?;
        let io = |e| Error::io("<history table>", e);
        write!(out, "time").map_err(io)?;
        for l in labels {
            write!(out, ",{l}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
        for i in 0..self.len() {
            write!(out, "{}", self.times[i]).map_err(io)?;
            for &c in &idx {
                write!(out, ",{}", self.value(i, c)).map_err(io)?;
            }
            writeln!(out).map_err(io)?;
        }
        Ok(())
    }
}

/// Simulation length and step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSettings {
    pub step: f64,
    /// Gust onset time.
    pub t0: f64,
    /// Decay margin after gust exit, in gust durations.
    pub decay_gusts: f64,
    /// Lower bound on the decay margin, in model time units.
    pub min_decay: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            step: 0.01,
            t0: 1.0,
            decay_gusts: 5.0,
            min_decay: 150.0,
        }
    }
}

impl SimSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) {
            return Err(Error::config("step", "time step must be positive"));
        }
        if !(self.t0 >= 0.0) {
            return Err(Error::config("t0", "gust onset must be non-negative"));
        }
        if !(self.decay_gusts >= 0.0) || !(self.min_decay >= 0.0) {
            return Err(Error::config("decay_gusts", "decay margins must be non-negative"));
        }
        Ok(())
    }

    /// Onset, gust passage, then `max(decay_gusts * gust duration, min_decay)`.
    pub fn duration_for(&self, gust_duration: f64) -> f64 {
        self.t0 + gust_duration + (self.decay_gusts * gust_duration).max(self.min_decay)
    }
}

fn record<R: OdeRhs + ?Sized, E: Excitation + ?Sized>(
    rhs: &mut R,
    y0: &[f64],
    gust: &E,
    step: f64,
    duration: f64,
    space: StateSpace,
    model_id: String,
) -> Result<TimeHistory> {
    let n = y0.len();
    let expected = if step > 0.0 && duration.is_finite() {
        (duration / step).round().min(1e8) as usize + 1
    } else {
        0
    };
    let mut times = Vec::with_capacity(expected);
    let mut data = Vec::with_capacity(expected * n);
    let start = Instant::now();
    integrate_with(rhs, y0, gust, step, duration, |t, y| {
        times.push(t);
        data.extend_from_slice(y);
    })?;
    let wall_clock = start.elapsed().as_secs_f64();
    Ok(TimeHistory {
        times,
        dim: n,
        data,
        space,
        metadata: HistoryMetadata {
            model_id,
            gust_id: gust.id(),
            step,
            wall_clock,
        },
    })
}

/// Full-order trajectory from `w_init`.
pub fn simulate_fom<M: Model + ?Sized, E: Excitation + ?Sized>(
    model: &M,
    w_init: &StateVector,
    gust: &E,
    step: f64,
    duration: f64,
) -> Result<TimeHistory> {
    let labels = model.descriptor().state_labels.clone();
    let id = format!("fom(n={})", labels.len());
    record(
        &mut FomRhs::new(model),
        w_init.as_slice(),
        gust,
        step,
        duration,
        StateSpace::Full { labels },
        id,
    )
}

/// ROM trajectory from packed reduced state `y0` (zeros start at trim).
pub fn simulate_rom<E: Excitation + ?Sized>(
    sys: &Arc<RomSystem>,
    y0: &[f64],
    gust: &E,
    step: f64,
    duration: f64,
) -> Result<TimeHistory> {
    struct Record<'a, E: ?Sized> {
        sys: &'a Arc<RomSystem>,
        y0: &'a [f64],
        gust: &'a E,
        step: f64,
        duration: f64,
    }
    impl<E: Excitation + ?Sized> RhsVisitor for Record<'_, E> {
        type Output = Result<TimeHistory>;
        fn visit<R: OdeRhs>(self, rhs: &mut R) -> Self::Output {
            record(
                rhs,
                self.y0,
                self.gust,
                self.step,
                self.duration,
                StateSpace::Reduced(Arc::clone(self.sys)),
                format!("rom(m={})", self.sys.dim()),
            )
        }
    }
    with_rom_rhs(
        sys,
        Record {
            sys,
            y0,
            gust,
            step,
            duration,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelPeak {
    pub label: String,
    pub peak_abs: f64,
    pub time_of_peak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseMetrics {
    pub channels: Vec<ChannelPeak>,
    /// Every channel's amplitude over the final tenth of the record is at
    /// most 5% of its peak.
    pub settled: bool,
}

impl ResponseMetrics {
    pub fn get(&self, label: &str) -> Option<&ChannelPeak> {
        self.channels.iter().find(|c| c.label == label)
    }
}

/// Running `max |value|` per channel, earliest time on ties.
#[derive(Debug, Clone)]
pub struct PeakTracker {
    pub peaks: Vec<f64>,
    pub times: Vec<f64>,
}

impl PeakTracker {
    pub fn new(n: usize) -> Self {
        PeakTracker {
            peaks: vec![f64::NEG_INFINITY; n],
            times: vec![0.0; n],
        }
    }

    #[inline]
    pub fn observe(&mut self, c: usize, t: f64, value: f64) {
        let a = value.abs();
        if a > self.peaks[c] {
            self.peaks[c] = a;
            self.times[c] = t;
        }
    }
}

/// Peaks of the named physical channels. Reduced histories are
/// reconstructed here.
pub fn extract_metrics(history: &TimeHistory, channels: &[String]) -> Result<ResponseMetrics> {
    let idx: Vec<usize> = channels.iter().map(|l| history.channel_index(l)).collect::<Result<_>>()?;
    if history.is_empty() {
        return Err(Error::contract("empty history"));
    }
    let mut tracker = PeakTracker::new(idx.len());
    let tail_start = history.len() - (history.len() / 10).max(1);
    let mut tail = vec![0.0_f64; idx.len()];
    for i in 0..history.len() {
        for (c, &s) in idx.iter().enumerate() {
            let v = history.value(i, s);
            tracker.observe(c, history.times[i], v);
            if i >= tail_start {
                tail[c] = tail[c].max(v.abs());
            }
        }
    }
    let settled = tail
        .iter()
        .zip(&tracker.peaks)
        .all(|(t, p)| *t <= 0.05 * p || *p == 0.0);
    Ok(ResponseMetrics {
        channels: channels
            .iter()
            .zip(tracker.peaks.iter().zip(&tracker.times))
            .map(|(l, (&p, &t))| ChannelPeak {
                label: l.clone(),
                peak_abs: p,
                time_of_peak: t,
            })
            .collect(),
        settled,
    })
}

/// Outcome of a step-halving self-convergence test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepCheck {
    pub step: f64,
    /// `max |y_h - y_(h/2)|` on the shared grid.
    pub coarse_change: f64,
    /// `max |y_(h/2) - y_(h/4)|` on the shared grid.
    pub fine_change: f64,
    /// `coarse_change / fine_change`, about 16 for a fourth-order scheme.
    pub ratio: f64,
    /// Error estimate of the `h` solution, `coarse_change * 16 / 15`.
    pub error_estimate: f64,
}

/// Runs `simulate` at `h`, `h/2`, `h/4` and compares channel `index` on the
/// coarse grid.
pub fn step_self_convergence<F>(simulate: F, step: f64, index: usize) -> Result<StepCheck>
where
    F: Fn(f64) -> Result<TimeHistory>,
{
    let h1 = simulate(step)?;
    let h2 = simulate(step / 2.0)?;
    let h4 = simulate(step / 4.0)?;
    let mut coarse: f64 = 0.0;
    let mut fine: f64 = 0.0;
    for i in 0..h1.len() {
        if 4 * i >= h4.len() {
            break;
        }
        let a = h1.value(i, index);
        let b = h2.value(2 * i, index);
        let c = h4.value(4 * i, index);
        coarse = coarse.max((a - b).abs());
        fine = fine.max((b - c).abs());
    }
    Ok(StepCheck {
        step,
        coarse_change: coarse,
        fine_change: fine,
        ratio: if fine > 0.0 { coarse / fine } else { f64::INFINITY },
        error_estimate: coarse * 16.0 / 15.0,
    })
}
