//! Worst-case discrete-gust search over the gradient distance.
//!
//! The pipeline builds the ROM once, time-marches it at every design site,
//! takes the argmax of the objective channel, and confirms the best
//! candidates with full-order runs.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gust::DiscreteGustSpec;
use crate::model::{Model, StateVector};
use crate::nmor::rom::{build_rom, check_rom_matches, RomBuildOptions, RomModel, RomSystem};
use crate::sim::{
    integrate_with, simulate_rom, step_self_convergence, with_rom_rhs, FomRhs, OdeRhs, PeakTracker, RhsVisitor, SimSettings,
    StepCheck,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    Linear,
    Log,
}

/// Peak gust velocity as a function of gradient distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum VelocityLaw {
    /// `w0 = fraction * u_inf` for every gradient distance.
    ConstantFraction { fraction: f64, u_inf: f64 },
    /// `w0 = u_ref (H_g / h_ref)^exponent`, clipped to `[min, max]`.
    PowerLaw {
        u_ref: f64,
        h_ref: f64,
        #[serde(default = "sixth")]
        exponent: f64,
        #[serde(default)]
        min: Option<f64>,
        #[serde(default)]
        max: Option<f64>,
    },
}

fn sixth() -> f64 {
    1.0 / 6.0
}

impl Default for VelocityLaw {
    fn default() -> Self {
        VelocityLaw::ConstantFraction {
            fraction: 0.14,
            u_inf: 1.0,
        }
    }
}

pub fn design_gust_velocity(law: &VelocityLaw, h_g: f64) -> Result<f64> {
    if !(h_g > 0.0) {
        return Err(Error::config("h_g", "gradient distance must be positive"));
    }
    match *law {
        VelocityLaw::ConstantFraction { fraction, u_inf } => {
            if !(fraction >= 0.0) || !(u_inf > 0.0) {
                return Err(Error::config("velocity_law", "fraction must be >= 0 and u_inf > 0"));
            }
            Ok(fraction * u_inf)
        }
        VelocityLaw::PowerLaw {
            u_ref,
            h_ref,
            exponent,
            min,
            max,
        } => {
            if !(h_ref > 0.0) || !(u_ref >= 0.0) || !exponent.is_finite() {
                return Err(Error::config("velocity_law", "power law needs h_ref > 0 and u_ref >= 0"));
            }
            let mut w = u_ref * (h_g / h_ref).powf(exponent);
            if let Some(lo) = min {
                w = w.max(lo);
            }
            if let Some(hi) = max {
                w = w.min(hi);
            }
            Ok(w)
        }
    }
}

/// Search space and fidelity settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub hg_min: f64,
    pub hg_max: f64,
    pub n_sites: usize,
    pub spacing: Spacing,
    pub velocity_law: VelocityLaw,
    /// Freestream speed used to convert gradient distance to gust duration.
    pub u_inf: f64,
    /// Recorded channels; the first one is the search objective.
    pub metric_channels: Vec<String>,
    pub rom_order: u8,
    pub rom_modes: usize,
    pub validate_top_k: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            hg_min: 0.1,
            hg_max: 100.0,
            n_sites: 1000,
            spacing: Spacing::Log,
            velocity_law: VelocityLaw::default(),
            u_inf: 1.0,
            metric_channels: vec!["xi".into(), "alpha".into()],
            rom_order: 3,
            rom_modes: 4,
            validate_top_k: 3,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.hg_min > 0.0 && self.hg_min < self.hg_max) {
            return Err(Error::config("hg_min", "need 0 < hg_min < hg_max"));
        }
        if self.n_sites < 2 {
            return Err(Error::config("n_sites", "a sweep needs at least two sites"));
        }
        if self.validate_top_k < 1 {
            return Err(Error::config("validate_top_k", "at least one site must be validated"));
        }
        if self.metric_channels.is_empty() {
            return Err(Error::config("metric_channels", "at least one channel is required"));
        }
        if !(1..=3).contains(&self.rom_order) {
            return Err(Error::config("order", "ROM order must be 1, 2 or 3"));
        }
        if !(self.u_inf > 0.0) {
            return Err(Error::config("u_inf", "freestream velocity must be positive"));
        }
        design_gust_velocity(&self.velocity_law, self.hg_min)?;
        Ok(())
    }

    /// Gradient distances of every site, ascending.
    pub fn sites(&self) -> Vec<f64> {
        let n = self.n_sites;
        let mut v: Vec<f64> = (0..n)
            .map(|i| {
                let s = i as f64 / (n - 1) as f64;
                match self.spacing {
                    Spacing::Linear => self.hg_min + s * (self.hg_max - self.hg_min),
                    Spacing::Log => (self.hg_min.ln() + s * (self.hg_max.ln() - self.hg_min.ln())).exp(),
                }
            })
            .collect();
        v[0] = self.hg_min;
        v[n - 1] = self.hg_max;
        v
    }

    pub fn gust_at(&self, h_g: f64, sim: &SimSettings) -> Result<DiscreteGustSpec> {
        DiscreteGustSpec::new(design_gust_velocity(&self.velocity_law, h_g)?, h_g, sim.t0, self.u_inf)
    }
}

/// Execution settings shared by search and benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    pub sim: SimSettings,
    pub rom: RomBuildOptions,
    /// Worker threads for the per-site ROM runs; 0 uses all cores.
    pub workers: usize,
    /// Relative error bound for the automatic step check on the longest
    /// site; `None` skips the check.
    pub step_tolerance: Option<f64>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            sim: SimSettings::default(),
            rom: RomBuildOptions::default(),
            workers: 0,
            step_tolerance: Some(1e-6),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SiteStatus {
    Ok,
    Diverged { time: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteRecord {
    pub index: usize,
    pub h_g: f64,
    pub w0: f64,
    pub status: SiteStatus,
    /// `max |channel|`, in `metric_channels` order.
    pub peaks: Vec<f64>,
    pub peak_times: Vec<f64>,
    pub steps: usize,
    pub wall_clock: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub site: usize,
    pub h_g: f64,
    pub rom_peak: f64,
    pub fom_peak: f64,
    /// `|rom - fom| / |fom|` on the objective channel.
    pub rel_error: f64,
    pub fom_wall_clock: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub channels: Vec<String>,
    pub sites: Vec<SiteRecord>,
    pub worst_site: Option<usize>,
    pub rom_modes: usize,
    pub rom_order: u8,
    pub step: f64,
    pub step_check: Option<StepCheck>,
    pub rom_build_time: f64,
    /// Elapsed time of the per-site ROM stage.
    pub total_rom_time: f64,
    pub validation: Vec<ValidationRecord>,
    /// Mean validation FOM time x `n_sites` / (build + ROM stage).
    pub speedup: Option<f64>,
}

impl SweepResult {
    pub fn worst_h_g(&self) -> Option<f64> {
        self.worst_site.map(|i| self.sites[i].h_g)
    }

    pub fn divergent_sites(&self) -> Vec<usize> {
        self.sites
            .iter()
            .filter(|s| matches!(s.status, SiteStatus::Diverged { .. }))
            .map(|s| s.index)
            .collect()
    }

    /// Copy with every wall-clock field zeroed.
    pub fn without_timing(&self) -> SweepResult {
        let mut r = self.clone();
        for s in &mut r.sites {
            s.wall_clock = 0.0;
        }
        for v in &mut r.validation {
            v.fom_wall_clock = 0.0;
        }
        r.rom_build_time = 0.0;
        r.total_rom_time = 0.0;
        r.speedup = None;
        r
    }

    /// `site,h_g,w0,status,peak_<ch>...,t_peak_<ch>...,steps,wall_clock`
    pub fn write_sites_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "site,h_g,w0,status")?;
        for c in &self.channels {
            write!(out, ",peak_{c}")?;
        }
        for c in &self.channels {
            write!(out, ",t_peak_{c}")?;
        }
        writeln!(out, ",steps,wall_clock")?;
        for s in &self.sites {
            let status = match s.status {
                SiteStatus::Ok => "ok".to_string(),
                SiteStatus::Diverged { time } => format!("diverged@{time}"),
            };
            write!(out, "{},{},{},{}", s.index, s.h_g, s.w0, status)?;
            for p in &s.peaks {
                write!(out, ",{p}")?;
            }
            for t in &s.peak_times {
                write!(out, ",{t}")?;
            }
            writeln!(out, ",{},{}", s.steps, s.wall_clock)?;
        }
        Ok(())
    }

    pub fn write_validation_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "site,h_g,rom_peak,fom_peak,rel_error,fom_wall_clock")?;
        for v in &self.validation {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                v.site, v.h_g, v.rom_peak, v.fom_peak, v.rel_error, v.fom_wall_clock
            )?;
        }
        Ok(())
    }

    pub fn write_summary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let objective = &self.channels[0];
        writeln!(out, "worst-case gust search")?;
        writeln!(out, "sites: {}", self.sites.len())?;
        writeln!(
            out,
            "rom: order {}, {} modes, step {}",
            self.rom_order, self.rom_modes, self.step
        )?;
        if let Some(c) = &self.step_check {
            writeln!(
                out,
                "step check: error estimate {:.3e}, halving ratio {:.2}",
                c.error_estimate, c.ratio
            )?;
        }
        match self.worst_site {
            Some(i) => {
                let s = &self.sites[i];
                writeln!(out, "objective: max |{objective}|")?;
                writeln!(out, "H_g* = {} (site {i})", s.h_g)?;
                writeln!(out, "w0 = {}", s.w0)?;
                writeln!(out, "peak {objective} = {} at t = {}", s.peaks[0], s.peak_times[0])?;
            }
            None => writeln!(out, "H_g* = none (every site diverged)")?,
        }
        let div = self.divergent_sites();
        writeln!(out, "divergent sites: {}", div.len())?;
        if !div.is_empty() {
            writeln!(out, "  {div:?}")?;
        }
        writeln!(out, "validation ({objective}):")?;
        for v in &self.validation {
            writeln!(
                out,
                "  site {} H_g {}: rom {} fom {} rel. error {:.3e}",
                v.site, v.h_g, v.rom_peak, v.fom_peak, v.rel_error
            )?;
        }
        writeln!(out, "rom build time: {:.6} s", self.rom_build_time)?;
        writeln!(out, "rom sweep time: {:.6} s", self.total_rom_time)?;
        if let Some(s) = self.speedup {
            writeln!(out, "speedup vs full-order sweep (estimated): {s:.2}")?;
        }
        Ok(())
    }
}

/// Peaks of one site.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteOutcome {
    pub status: SiteStatus,
    pub peaks: Vec<f64>,
    pub peak_times: Vec<f64>,
    pub steps: usize,
    pub wall_clock: f64,
}

fn outcome(result: Result<usize>, tracker: PeakTracker, wall_clock: f64) -> Result<SiteOutcome> {
    match result {
        Ok(steps) => Ok(SiteOutcome {
            status: SiteStatus::Ok,
            peaks: tracker.peaks,
            peak_times: tracker.times,
            steps,
            wall_clock,
        }),
        Err(Error::Divergence { time, .. }) => Ok(SiteOutcome {
            status: SiteStatus::Diverged { time },
            peaks: tracker.peaks.iter().map(|_| f64::NAN).collect(),
            peak_times: tracker.times.iter().map(|_| f64::NAN).collect(),
            steps: 0,
            wall_clock,
        }),
        Err(e) => Err(e),
    }
}

/// Compiled ROM run of one gust, tracking the peaks of `channels`
/// (physical state indices).
pub fn run_site_rom(
    sys: &RomSystem,
    gust: &DiscreteGustSpec,
    sim: &SimSettings,
    channels: &[usize],
) -> Result<SiteOutcome> {
    let duration = sim.duration_for(gust.duration());
    struct Run<'a> {
        sys: &'a RomSystem,
        gust: &'a DiscreteGustSpec,
        step: f64,
        duration: f64,
        channels: &'a [usize],
    }
    impl RhsVisitor for Run<'_> {
        type Output = (Result<usize>, PeakTracker);
        fn visit<R: OdeRhs>(self, rhs: &mut R) -> Self::Output {
            let mut tracker = PeakTracker::new(self.channels.len());
            let y0 = vec![0.0; self.sys.dim()];
            let r = integrate_with(rhs, &y0, self.gust, self.step, self.duration, |t, y| {
                for (c, &idx) in self.channels.iter().enumerate() {
                    tracker.observe(c, t, self.sys.reconstruct_entry(idx, y));
                }
            });
            (r, tracker)
        }
    }
    let start = Instant::now();
    let (r, tracker) = with_rom_rhs(
        sys,
        Run {
            sys,
            gust,
            step: sim.step,
            duration,
            channels,
        },
    );
    outcome(r, tracker, start.elapsed().as_secs_f64())
}

/// Full-order run of one gust from `w0`, tracking the peaks of `channels`.
pub fn run_site_fom<M: Model + ?Sized>(
    model: &M,
    w0: &StateVector,
    gust: &DiscreteGustSpec,
    sim: &SimSettings,
    channels: &[usize],
) -> Result<SiteOutcome> {
    let duration = sim.duration_for(gust.duration());
    let mut tracker = PeakTracker::new(channels.len());
    let start = Instant::now();
    let r = integrate_with(&mut FomRhs::new(model), w0.as_slice(), gust, sim.step, duration, |t, y| {
        for (c, &idx) in channels.iter().enumerate() {
            tracker.observe(c, t, y[idx]);
        }
    });
    outcome(r, tracker, start.elapsed().as_secs_f64())
}

/// Index of the largest objective peak among non-divergent sites; ties go
/// to the smaller gradient distance.
pub fn argmax_site(sites: &[SiteRecord]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in sites.iter().enumerate() {
        if s.status != SiteStatus::Ok {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let (pb, pi) = (sites[b].peaks[0], s.peaks[0]);
                if pi > pb || (pi == pb && s.h_g < sites[b].h_g) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}

/// Builds the ROM (step 1) and runs [`run_search_with_rom`].
pub fn run_search<M: Model>(model: &M, spec: &SweepSpec, opts: &SearchOptions) -> Result<SweepResult> {
    spec.validate()?;
    let mut rom_opts = opts.rom.clone();
    rom_opts.order = spec.rom_order;
    rom_opts.selection.modes = spec.rom_modes;
    let build = build_rom(model, &rom_opts)?;
    log::info!(
        "ROM built in {:.3} s\n{}",
        build.build_time,
        build.rom.basis.report
    );
    run_search_with_rom(model, &build.rom, build.build_time, spec, opts)
}

/// Steps 2 to 4 with a ready ROM: per-site ROM runs, argmax, and full-order
/// confirmation of the `validate_top_k` best sites.
pub fn run_search_with_rom<M: Model>(
    model: &M,
    rom: &RomModel,
    rom_build_time: f64,
    spec: &SweepSpec,
    opts: &SearchOptions,
) -> Result<SweepResult> {
    spec.validate()?;
    opts.sim.validate()?;
    let desc = model.descriptor();
    check_rom_matches(model, rom)?;
    let channels = desc.channel_indices(&spec.metric_channels)?;
    let sys = Arc::new(RomSystem::compile(rom));
    let h_list = spec.sites();
    let gusts: Vec<DiscreteGustSpec> = h_list.iter().map(|&h| spec.gust_at(h, &opts.sim)).collect::<Result<_>>()?;

    let stage_start = Instant::now();
    let mut sim = opts.sim;
    let mut step_check = None;
    if let Some(tol) = opts.step_tolerance {
        let longest = gusts.last().expect("at least two sites");
        let duration = sim.duration_for(longest.duration());
        for _ in 0..4 {
            let check = step_self_convergence(
                |h| simulate_rom(&sys, &vec![0.0; sys.dim()], longest, h, duration),
                sim.step,
                channels[0],
            );
            let check = match check {
                Ok(c) => c,
                Err(Error::Divergence { .. }) => break,
                Err(e) => return Err(e),
            };
            let peak = run_site_rom(&sys, longest, &sim, &channels[..1])?.peaks[0];
            step_check = Some(check);
            if check.error_estimate <= tol * peak.abs().max(f64::MIN_POSITIVE) {
                break;
            }
            log::warn!(
                "step {} fails the self-convergence check (error {:.3e}); halving",
                sim.step,
                check.error_estimate
            );
            sim.step /= 2.0;
        }
    }

    let run = |i: usize| -> Result<SiteRecord> {
        let g = &gusts[i];
        let o = run_site_rom(&sys, g, &sim, &channels)?;
        Ok(SiteRecord {
            index: i,
            h_g: g.h_g,
            w0: g.w0,
            status: o.status,
            peaks: o.peaks,
            peak_times: o.peak_times,
            steps: o.steps,
            wall_clock: o.wall_clock,
        })
    };
    let sites: Vec<SiteRecord> = if opts.workers == 1 {
        (0..gusts.len()).map(run).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| Error::config("workers", e.to_string()))?;
        pool.install(|| (0..gusts.len()).into_par_iter().map(run).collect::<Result<_>>())?
    };
    let total_rom_time = stage_start.elapsed().as_secs_f64();

    for s in &sites {
        if let SiteStatus::Diverged { time } = s.status {
            log::warn!("site {} (H_g = {}) diverged at t = {time}", s.index, s.h_g);
        }
    }
    let worst_site = argmax_site(&sites);

    let mut ranked: Vec<usize> = sites
        .iter()
        .filter(|s| s.status == SiteStatus::Ok)
        .map(|s| s.index)
        .collect();
    ranked.sort_by(|&a, &b| {
        sites[b].peaks[0]
            .total_cmp(&sites[a].peaks[0])
            .then(sites[a].h_g.total_cmp(&sites[b].h_g))
    });
    let mut validation = Vec::new();
    for &i in ranked.iter().take(spec.validate_top_k) {
        let fom = run_site_fom(model, &rom.base_point, &gusts[i], &sim, &channels[..1])?;
        let rom_peak = sites[i].peaks[0];
        let fom_peak = fom.peaks[0];
        validation.push(ValidationRecord {
            site: i,
            h_g: sites[i].h_g,
            rom_peak,
            fom_peak,
            rel_error: if fom_peak != 0.0 {
                (rom_peak - fom_peak).abs() / fom_peak.abs()
            } else {
                (rom_peak - fom_peak).abs()
            },
            fom_wall_clock: fom.wall_clock,
        });
    }
    let speedup = if validation.is_empty() {
        None
    } else {
        let mean = validation.iter().map(|v| v.fom_wall_clock).sum::<f64>() / validation.len() as f64;
        Some(mean * sites.len() as f64 / (rom_build_time + total_rom_time))
    };

    Ok(SweepResult {
        channels: spec.metric_channels.clone(),
        sites,
        worst_site,
        rom_modes: rom.m(),
        rom_order: rom.order,
        step: sim.step,
        step_check,
        rom_build_time,
        total_rom_time,
        validation,
        speedup,
    })
}

/// Sequential cost comparison of a full ROM sweep against a full-order
/// sweep extrapolated from a few timed full-order runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n_sites: usize,
    pub rom_modes: usize,
    pub rom_order: u8,
    pub n_states: usize,
    pub step: f64,
    /// Site indices of the timed full-order runs.
    pub fom_sample_sites: Vec<usize>,
    pub fom_sample_time: f64,
    pub fom_sample_steps: usize,
    pub fom_time_per_step: f64,
    /// Integration steps over all sites.
    pub total_steps: usize,
    /// `fom_time_per_step * total_steps`.
    pub fom_extrapolated: f64,
    pub rom_build_time: f64,
    pub rom_sweep_time: f64,
    pub rom_time_per_step: f64,
    pub rom_total: f64,
    /// `fom_extrapolated / rom_total`.
    pub ratio: f64,
}

impl BenchReport {
    pub fn write_summary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "benchmark (sequential)")?;
        writeln!(out, "sites: {}, total steps: {}, step: {}", self.n_sites, self.total_steps, self.step)?;
        writeln!(
            out,
            "full order: {} states; {} timed runs, {:.3e} s per step",
            self.n_states,
            self.fom_sample_sites.len(),
            self.fom_time_per_step
        )?;
        writeln!(
            out,
            "rom: order {}, {} modes; {:.3e} s per step",
            self.rom_order, self.rom_modes, self.rom_time_per_step
        )?;
        writeln!(out, "extrapolated full-order sweep: {:.6} s", self.fom_extrapolated)?;
        writeln!(
            out,
            "rom sweep: build {:.6} s + runs {:.6} s = {:.6} s",
            self.rom_build_time, self.rom_sweep_time, self.rom_total
        )?;
        writeln!(out, "ratio: {:.3}", self.ratio)
    }
}

/// Benchmark mode: everything runs on the calling thread.
pub fn benchmark<M: Model>(model: &M, spec: &SweepSpec, opts: &SearchOptions, fom_runs: usize) -> Result<BenchReport> {
    spec.validate()?;
    opts.sim.validate()?;
    if fom_runs == 0 {
        return Err(Error::config("fom_runs", "at least one full-order run is needed"));
    }
    let desc = model.descriptor();
    let channels = desc.channel_indices(&spec.metric_channels)?;
    let sim = opts.sim;
    let h_list = spec.sites();
    let gusts: Vec<DiscreteGustSpec> = h_list.iter().map(|&h| spec.gust_at(h, &sim)).collect::<Result<_>>()?;

    let mut rom_opts = opts.rom.clone();
    rom_opts.order = spec.rom_order;
    rom_opts.selection.modes = spec.rom_modes;
    let build = build_rom(model, &rom_opts)?;
    let sys = RomSystem::compile(&build.rom);
    let rom_build_time = build.build_time;

    let start = Instant::now();
    let mut total_steps = 0;
    for g in &gusts {
        total_steps += run_site_rom(&sys, g, &sim, &channels)?.steps;
    }
    let rom_sweep_time = start.elapsed().as_secs_f64();

    let k = fom_runs.min(gusts.len());
    let sample: Vec<usize> = if k == 1 {
        vec![gusts.len() / 2]
    } else {
        (0..k).map(|i| (i * (gusts.len() - 1) + (k - 1) / 2) / (k - 1)).collect()
    };
    let mut fom_time = 0.0;
    let mut fom_steps = 0;
    for &i in &sample {
        let o = run_site_fom(model, &build.rom.base_point, &gusts[i], &sim, &channels)?;
        fom_time += o.wall_clock;
        fom_steps += o.steps.max(1);
    }
    let fom_time_per_step = fom_time / fom_steps as f64;
    let fom_extrapolated = fom_time_per_step * total_steps as f64;
    let rom_total = rom_build_time + rom_sweep_time;
    Ok(BenchReport {
        n_sites: gusts.len(),
        rom_modes: build.rom.m(),
        rom_order: build.rom.order,
        n_states: desc.n_states,
        step: sim.step,
        fom_sample_sites: sample,
        fom_sample_time: fom_time,
        fom_sample_steps: fom_steps,
        fom_time_per_step,
        total_steps,
        fom_extrapolated,
        rom_build_time,
        rom_sweep_time,
        rom_time_per_step: rom_sweep_time / total_steps.max(1) as f64,
        rom_total,
        ratio: fom_extrapolated / rom_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn velocity_laws() {
        let c = VelocityLaw::default();
        for h in [0.1, 1.0, 100.0] {
            assert_eq!(design_gust_velocity(&c, h).unwrap(), 0.14);
        }
        let p = VelocityLaw::PowerLaw {
            u_ref: 3.0,
            h_ref: 2.0,
            exponent: 1.0 / 6.0,
            min: None,
            max: Some(5.0),
        };
        assert!((design_gust_velocity(&p, 2.0).unwrap() - 3.0).abs() < 1e-15);
        assert!((design_gust_velocity(&p, 128.0).unwrap() - 5.0).abs() < 1e-15);
        let p = VelocityLaw::PowerLaw {
            u_ref: 3.0,
            h_ref: 2.0,
            exponent: 1.0 / 6.0,
            min: None,
            max: None,
        };
        assert!((design_gust_velocity(&p, 128.0).unwrap() - 6.0).abs() < 1e-12);
        assert!(design_gust_velocity(&c, 0.0).is_err());
    }

    #[test]
    fn site_grids() {
        let mut s = SweepSpec {
            hg_min: 1.0,
            hg_max: 100.0,
            n_sites: 3,
            ..Default::default()
        };
        assert_eq!(s.sites(), vec![1.0, 10.000000000000002, 100.0]);
        s.spacing = Spacing::Linear;
        assert_eq!(s.sites(), vec![1.0, 50.5, 100.0]);
        s.n_sites = 1;
        assert!(s.validate().is_err());
    }

    fn rec(i: usize, h: f64, p: f64, ok: bool) -> SiteRecord {
        SiteRecord {
            index: i,
            h_g: h,
            w0: 1.0,
            status: if ok { SiteStatus::Ok } else { SiteStatus::Diverged { time: 1.0 } },
            peaks: vec![p],
            peak_times: vec![0.0],
            steps: 1,
            wall_clock: 0.0,
        }
    }

    #[test]
    fn argmax_ties_and_divergence() {
        let sites = vec![rec(0, 1.0, 2.0, true), rec(1, 2.0, 2.0, true), rec(2, 3.0, 9.0, false)];
        assert_eq!(argmax_site(&sites), Some(0));
        assert_eq!(argmax_site(&sites[2..]), None);
    }
}
