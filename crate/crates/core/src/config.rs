//! TOML run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aerofoil::AerofoilParams;
use crate::error::{Error, Result};
use crate::gust::{DiscreteGustSpec, TurbulenceSpec};
use crate::model::TrimOptions;
use crate::nmor::eigen::SelectionCriteria;
use crate::nmor::rom::RomBuildOptions;
use crate::sim::SimSettings;
use crate::sweep::{SearchOptions, Spacing, SweepSpec, VelocityLaw};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GustKind {
    Discrete,
    Turbulence,
}

/// Single-gust settings for `simulate` and `gust-preview`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GustSection {
    pub kind: GustKind,
    pub w0: f64,
    pub h_g: f64,
    pub u_inf: f64,
    pub sigma_w: f64,
    pub l_w: f64,
    pub sample_rate: f64,
    pub duration: f64,
    pub seed: u64,
}

impl Default for GustSection {
    fn default() -> Self {
        GustSection {
            kind: GustKind::Discrete,
            w0: 0.14,
            h_g: 10.0,
            u_inf: 1.0,
            sigma_w: 0.05,
            l_w: 100.0,
            sample_rate: 20.0,
            duration: 500.0,
            seed: 0,
        }
    }
}

impl GustSection {
    pub fn discrete(&self, t0: f64) -> Result<DiscreteGustSpec> {
        DiscreteGustSpec::new(self.w0, self.h_g, t0, self.u_inf)
    }

    pub fn turbulence(&self) -> Result<TurbulenceSpec> {
        let s = TurbulenceSpec {
            sigma_w: self.sigma_w,
            l_w: self.l_w,
            u_inf: self.u_inf,
            seed: self.seed,
            sample_rate: self.sample_rate,
            duration: self.duration,
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub hg_min: f64,
    pub hg_max: f64,
    pub n_sites: usize,
    pub spacing: Spacing,
    pub velocity_law: VelocityLaw,
    pub u_inf: f64,
    pub metric_channels: Vec<String>,
    pub validate_top_k: usize,
    /// 0 uses every core.
    pub workers: usize,
    /// `None` disables the automatic step check.
    pub step_tolerance: Option<f64>,
    /// Timed full-order runs in benchmark mode.
    pub bench_fom_runs: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        let s = SweepSpec::default();
        SweepSection {
            hg_min: s.hg_min,
            hg_max: s.hg_max,
            n_sites: s.n_sites,
            spacing: s.spacing,
            velocity_law: s.velocity_law,
            u_inf: s.u_inf,
            metric_channels: s.metric_channels,
            validate_top_k: s.validate_top_k,
            workers: 0,
            step_tolerance: Some(1e-6),
            bench_fom_runs: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RomSection {
    pub order: u8,
    pub modes: usize,
    pub origin_radius: Option<f64>,
    pub max_damping: f64,
    pub max_frequency: Option<f64>,
    pub gust_coupling: bool,
    pub gust_coupling_min: f64,
    pub cluster_tol: f64,
    pub fd_step: f64,
    pub jacobian_step: f64,
    pub trim_tolerance: f64,
    pub trim_max_iterations: usize,
}

impl Default for RomSection {
    fn default() -> Self {
        let o = RomBuildOptions::default();
        RomSection {
            order: o.order,
            modes: 4,
            origin_radius: Some(0.0),
            max_damping: 0.25,
            max_frequency: Some(0.5),
            gust_coupling: o.gust_coupling,
            gust_coupling_min: o.selection.gust_coupling_min,
            cluster_tol: o.selection.cluster_tol,
            fd_step: o.fd_step,
            jacobian_step: o.jacobian_step,
            trim_tolerance: o.trim.tolerance,
            trim_max_iterations: o.trim.max_iterations,
        }
    }
}

impl RomSection {
    pub fn build_options(&self) -> RomBuildOptions {
        RomBuildOptions {
            order: self.order,
            selection: SelectionCriteria {
                modes: self.modes,
                origin_radius: self.origin_radius,
                max_damping: self.max_damping,
                max_frequency: self.max_frequency,
                gust_coupling_min: self.gust_coupling_min,
                cluster_tol: self.cluster_tol,
            },
            gust_coupling: self.gust_coupling,
            fd_step: self.fd_step,
            jacobian_step: self.jacobian_step,
            trim: TrimOptions {
                tolerance: self.trim_tolerance,
                max_iterations: self.trim_max_iterations,
                ..TrimOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub step: f64,
    pub t0: f64,
    pub decay_gusts: f64,
    pub min_decay: f64,
    pub flutter_u_min: f64,
    pub flutter_u_max: f64,
    pub flutter_points: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        let s = SimSettings::default();
        SimSection {
            step: s.step,
            t0: s.t0,
            decay_gusts: s.decay_gusts,
            min_decay: s.min_decay,
            flutter_u_min: 1.0,
            flutter_u_max: 10.0,
            flutter_points: 91,
        }
    }
}

impl SimSection {
    pub fn settings(&self) -> SimSettings {
        SimSettings {
            step: self.step,
            t0: self.t0,
            decay_gusts: self.decay_gusts,
            min_decay: self.min_decay,
        }
    }

    pub fn flutter_grid(&self) -> Vec<f64> {
        let n = self.flutter_points;
        (0..n)
            .map(|i| self.flutter_u_min + (self.flutter_u_max - self.flutter_u_min) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

/// Whole configuration file. Every section is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub model: AerofoilParams,
    pub gust: GustSection,
    pub sweep: SweepSection,
    pub rom: RomSection,
    pub sim: SimSection,
}

impl Config {
    pub fn from_toml_str(text: &str, path: &Path) -> Result<Config> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let location = e
                .span()
                .map(|s| {
                    let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
                    format!("line {line}: ")
                })
                .unwrap_or_default();
            Error::Parse {
                path: path.to_path_buf(),
                message: format!("{location}{}", e.message()),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::from_toml_str(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.sim.settings().validate()?;
        self.sweep_spec().validate()?;
        if self.sim.flutter_points < 2 || !(self.sim.flutter_u_min < self.sim.flutter_u_max) {
            return Err(Error::config("flutter_points", "flutter grid needs two or more increasing points"));
        }
        if !(self.rom.fd_step > 0.0) || !(self.rom.jacobian_step > 0.0) {
            return Err(Error::config("fd_step", "finite-difference steps must be positive"));
        }
        Ok(())
    }

    pub fn sweep_spec(&self) -> SweepSpec {
        SweepSpec {
            hg_min: self.sweep.hg_min,
            hg_max: self.sweep.hg_max,
            n_sites: self.sweep.n_sites,
            spacing: self.sweep.spacing,
            velocity_law: self.sweep.velocity_law.clone(),
            u_inf: self.sweep.u_inf,
            metric_channels: self.sweep.metric_channels.clone(),
            rom_order: self.rom.order,
            rom_modes: self.rom.modes,
            validate_top_k: self.sweep.validate_top_k,
        }
    }

    pub fn search_options(&self) -> SearchOptions {
        SearchOptions {
            sim: self.sim.settings(),
            rom: self.rom.build_options(),
            workers: self.sweep.workers,
            step_tolerance: self.sweep.step_tolerance,
        }
    }
}

/// `<dir>/<name>`, for output files.
pub fn output_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
