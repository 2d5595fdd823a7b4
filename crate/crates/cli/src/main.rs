//! `gustrom` command-line front end.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use gustrom::aerofoil::{flutter_trace, max_real_eigenvalue, AerofoilModel};
use gustrom::config::{output_path, Config, GustKind};
use gustrom::gust::{von_karman_realization, Excitation, GustSignal};
use gustrom::nmor::io::{content_hash, load_rom, save_rom};
use gustrom::nmor::{build_rom, check_rom_matches, RomModel, RomSystem};
use gustrom::sim::{extract_metrics, simulate_fom, simulate_rom, TimeHistory};
use gustrom::sweep::{benchmark, run_search, run_search_with_rom};
use gustrom::{find_equilibrium, Error, Model, Result, StateVector};

#[derive(Parser, Debug)]
#[command(name = "gustrom", version, about = "Reduced-order worst-case gust search for an aerofoil")]
struct Cli {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads for the sweep (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Turbulence seed, overriding `[gust] seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve for the equilibrium and report its stability margin.
    Trim,
    /// Scan U* for the linear flutter boundary.
    Flutter,
    /// Build the reduced model and write `rom.bin`.
    BuildRom,
    /// Full-order and reduced response to the configured gust.
    Simulate {
        #[arg(long)]
        rom: Option<PathBuf>,
    },
    /// Worst-case search over the gust gradient distance.
    Sweep {
        #[arg(long)]
        rom: Option<PathBuf>,
        /// Number of top ROM sites confirmed with the full model.
        #[arg(long)]
        validate_top: Option<usize>,
        /// Also write `history_<site>.csv` for this site index.
        #[arg(long)]
        history_site: Option<usize>,
    },
    /// Sequential timing of the ROM sweep against the full-order sweep.
    Bench,
    /// Sample the configured gust without running a model.
    GustPreview,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } | Error::Config { .. } => 2,
        Error::Io { .. } => 3,
        Error::Contract(_) => 4,
        Error::NonFinite { .. } | Error::Divergence { .. } => 5,
        Error::Solver { .. } | Error::Reduction(_) => 6,
        Error::Consistency(_) => 7,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(w) = cli.workers {
        cfg.sweep.workers = w;
    }
    if let Some(s) = cli.seed {
        cfg.gust.seed = s;
    }
    if let Command::Sweep {
        validate_top: Some(k), ..
    } = &cli.command
    {
        cfg.sweep.validate_top_k = *k;
    }
    cfg.validate()?;
    fs::create_dir_all(&cli.out).map_err(|e| Error::Io {
        path: cli.out.clone(),
        source: e,
    })?;
    let out = cli.out.as_path();

    match &cli.command {
        Command::Trim => trim(&cfg, out),
        Command::Flutter => flutter(&cfg, out),
        Command::BuildRom => build(&cfg, out),
        Command::Simulate { rom } => simulate(&cfg, out, rom.as_deref()),
        Command::Sweep { rom, history_site, .. } => sweep(&cfg, out, rom.as_deref(), *history_site),
        Command::Bench => bench(&cfg, out),
        Command::GustPreview => gust_preview(&cfg, out),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = output_path(dir, name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io { path, source: e })
}

fn write_with<F>(dir: &Path, name: &str, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut w = create(dir, name)?;
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::Io {
            path: output_path(dir, name),
            source: e,
        })
}

fn model(cfg: &Config) -> Result<AerofoilModel> {
    AerofoilModel::new(cfg.model.clone())
}

fn trim(cfg: &Config, out: &Path) -> Result<()> {
    let m = model(cfg)?;
    let desc = m.descriptor();
    let opts = cfg.rom.build_options().trim;
    let eq = find_equilibrium(
        &m,
        &StateVector::zeros(desc.n_states),
        &vec![0.0; desc.n_control_inputs],
        &opts,
    )?;
    let margin = max_real_eigenvalue(&m)?;
    let labels = desc.state_labels.clone();
    write_with(out, "trim.csv", |w| {
        writeln!(w, "state,value")?;
        for (l, v) in labels.iter().zip(eq.w0.as_slice()) {
            writeln!(w, "{l},{v}")?;
        }
        Ok(())
    })?;
    write_with(out, "summary.txt", |w| {
        writeln!(w, "trim at U* = {}", cfg.model.u_star)?;
        writeln!(w, "converged: {} after {} iterations", eq.converged, eq.iterations)?;
        writeln!(w, "residual: {:.3e}", eq.residual_norm)?;
        writeln!(w, "max Re(lambda): {margin:.6e}")?;
        writeln!(w, "stable: {}", margin < 0.0)
    })?;
    println!("trim residual {:.3e}, max Re(lambda) {margin:.6e}", eq.residual_norm);
    Ok(())
}

fn flutter(cfg: &Config, out: &Path) -> Result<()> {
    let trace = flutter_trace(&cfg.model, &cfg.sim.flutter_grid())?;
    write_with(out, "flutter.csv", |w| {
        writeln!(w, "u_star,max_real")?;
        for p in &trace.points {
            writeln!(w, "{},{}", p.u_star, p.max_real)?;
        }
        Ok(())
    })?;
    write_with(out, "summary.txt", |w| match trace.crossing {
        Some(u) => {
            writeln!(w, "flutter speed U* = {u:.6}")?;
            writeln!(w, "bracket width: {:.3e}", trace.bracket_width)
        }
        None => writeln!(w, "no flutter in [{}, {}]", cfg.sim.flutter_u_min, cfg.sim.flutter_u_max),
    })?;
    match trace.crossing {
        Some(u) => println!("flutter speed U* = {u:.6}"),
        None => println!("no flutter in the scanned range"),
    }
    Ok(())
}

fn build(cfg: &Config, out: &Path) -> Result<()> {
    let m = model(cfg)?;
    let b = build_rom(&m, &cfg.rom.build_options())?;
    let path = output_path(out, "rom.bin");
    save_rom(&b.rom, &path)?;
    let hash = content_hash(&b.rom)?;
    let report = b.rom.basis.report.to_string();
    write_with(out, "summary.txt", |w| {
        writeln!(w, "rom: order {}, {} modes", b.rom.order, b.rom.m())?;
        writeln!(w, "build time: {:.6} s", b.build_time)?;
        writeln!(w, "trim residual: {:.3e}", b.equilibrium.residual_norm)?;
        writeln!(w, "biorthonormality error: {:.3e}", b.rom.basis.biorthonormality_error())?;
        writeln!(w, "sha256: {hash}")?;
        writeln!(w, "{report}")
    })?;
    println!("wrote {} ({} modes, sha256 {hash})", path.display(), b.rom.m());
    Ok(())
}

fn obtain_rom(cfg: &Config, m: &AerofoilModel, path: Option<&Path>) -> Result<(RomModel, f64)> {
    match path {
        Some(p) => {
            let rom = load_rom(p)?;
            check_rom_matches(m, &rom).map_err(|e| match e {
                Error::Consistency(msg) => Error::Consistency(format!("{}: {msg}", p.display())),
                other => other,
            })?;
            Ok((rom, 0.0))
        }
        None => {
            let b = build_rom(m, &cfg.rom.build_options())?;
            Ok((b.rom, b.build_time))
        }
    }
}

fn excitation(cfg: &Config) -> Result<(Box<dyn Excitation>, f64)> {
    match cfg.gust.kind {
        GustKind::Discrete => {
            let g = cfg.gust.discrete(cfg.sim.t0)?;
            let duration = cfg.sim.settings().duration_for(g.duration());
            Ok((Box::new(g), duration))
        }
        GustKind::Turbulence => {
            let s = cfg.gust.turbulence()?;
            Ok((Box::new(von_karman_realization(&s)?), s.duration))
        }
    }
}

fn simulate(cfg: &Config, out: &Path, rom_path: Option<&Path>) -> Result<()> {
    let m = model(cfg)?;
    let (rom, _) = obtain_rom(cfg, &m, rom_path)?;
    let (gust, duration) = excitation(cfg)?;
    let step = cfg.sim.step;
    let channels = cfg.sweep.metric_channels.clone();
    let fom = simulate_fom(&m, &rom.base_point, gust.as_ref(), step, duration)?;
    let sys = Arc::new(RomSystem::compile(&rom));
    let red = simulate_rom(&sys, &vec![0.0; sys.dim()], gust.as_ref(), step, duration)?;
    write_history(out, "history_fom.csv", &fom, &channels)?;
    write_history(out, "history_rom.csv", &red, &channels)?;
    let mf = extract_metrics(&fom, &channels)?;
    let mr = extract_metrics(&red, &channels)?;
    write_with(out, "summary.txt", |w| {
        writeln!(w, "rom: order {}, {} modes; step {step}, duration {duration}", rom.order, rom.m())?;
        writeln!(w, "channel,fom_peak,rom_peak,rel_error")?;
        for c in &channels {
            let (f, r) = (mf.get(c).expect("channel").peak_abs, mr.get(c).expect("channel").peak_abs);
            writeln!(w, "{c},{f},{r},{}", (r - f).abs() / f.abs().max(f64::MIN_POSITIVE))?;
        }
        writeln!(w, "fom wall clock: {:.6} s", fom.metadata.wall_clock)?;
        writeln!(w, "rom wall clock: {:.6} s", red.metadata.wall_clock)
    })?;
    println!("wrote history_fom.csv and history_rom.csv to {}", out.display());
    Ok(())
}

fn write_history(out: &Path, name: &str, h: &TimeHistory, channels: &[String]) -> Result<()> {
    h.write_table(create(out, name)?, channels)
}

fn sweep(cfg: &Config, out: &Path, rom_path: Option<&Path>, history_site: Option<usize>) -> Result<()> {
    let m = model(cfg)?;
    let spec = cfg.sweep_spec();
    let opts = cfg.search_options();
    let (result, rom) = match rom_path {
        Some(_) => {
            let (rom, t) = obtain_rom(cfg, &m, rom_path)?;
            (run_search_with_rom(&m, &rom, t, &spec, &opts)?, Some(rom))
        }
        None => (run_search(&m, &spec, &opts)?, None),
    };
    write_with(out, "sweep.csv", |w| result.write_sites_csv(w))?;
    write_with(out, "validation.csv", |w| result.write_validation_csv(w))?;
    write_with(out, "summary.txt", |w| result.write_summary(w))?;

    if let Some(i) = history_site {
        if i >= result.sites.len() {
            return Err(Error::Config {
                field: "history-site".into(),
                message: format!("site {i} is out of range (0..{})", result.sites.len()),
            });
        }
        let rom = match rom {
            Some(r) => r,
            None => obtain_rom(cfg, &m, None)?.0,
        };
        let gust = spec.gust_at(result.sites[i].h_g, &opts.sim)?;
        let sys = Arc::new(RomSystem::compile(&rom));
        let h = simulate_rom(
            &sys,
            &vec![0.0; sys.dim()],
            &gust,
            result.step,
            opts.sim.duration_for(gust.duration()),
        )?;
        write_history(out, &format!("history_{i}.csv"), &h, &spec.metric_channels)?;
    }

    match result.worst_h_g() {
        Some(h) => println!("H_g* = {h} ({} sites)", result.sites.len()),
        None => println!("every site diverged"),
    }
    Ok(())
}

fn bench(cfg: &Config, out: &Path) -> Result<()> {
    let m = model(cfg)?;
    let report = benchmark(&m, &cfg.sweep_spec(), &cfg.search_options(), cfg.sweep.bench_fom_runs)?;
    write_with(out, "bench.txt", |w| report.write_summary(w))?;
    report
        .write_summary(std::io::stdout().lock())
        .map_err(|e| Error::Io {
            path: "<stdout>".into(),
            source: e,
        })
}

fn gust_preview(cfg: &Config, out: &Path) -> Result<()> {
    let signal = match cfg.gust.kind {
        GustKind::Discrete => {
            let g = cfg.gust.discrete(cfg.sim.t0)?;
            GustSignal::from_discrete(&g, cfg.sim.step, g.end_time() + cfg.sim.t0)?
        }
        GustKind::Turbulence => von_karman_realization(&cfg.gust.turbulence()?)?,
    };
    write_with(out, "gust.csv", |w| signal.write_table(w))?;
    println!("wrote {} samples to gust.csv", signal.len());
    Ok(())
}
