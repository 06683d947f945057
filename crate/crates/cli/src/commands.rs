//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use condensate_core::diagnostics::{self, condensate_size, decay_rate, TraceRecorder};
use condensate_core::harness::{
    self, exact_convergence_2d, self_convergence_1d, ExactConvergence2D, SelfConvergence1D, StudyMode,
};
use condensate_core::model::{critical_mass, entropy_minimizer};
use condensate_core::stepping::evolve;
use condensate_core::transform::{density_from_profile, minimizer_profile};
use condensate_core::{ConvergenceReport, InitialDatum, Integrator, PresetId, Profile, SolverConfig};

use crate::config::{parse_config, ConfigError};
use crate::output::{
    time_label, write_csv, CondensateSummary, DecayFit, ProfileFit, Report, RunSummary, Status,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_NONCONVERGENCE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "condensate-lab", version, about = "Lagrangian simulations of the bosonic Fokker-Planck equation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation and write traces, snapshots and report.json.
    Simulate(SimulateArgs),
    /// 1D self-convergence studies (final time and space-time).
    Validate1d(StudyArgs),
    /// 2D comparison with the exact solution (final time and space-time).
    Validate2d(StudyArgs),
    /// A single convergence study.
    Convergence(ConvergenceArgs),
    /// List the preset catalogue.
    Presets,
    /// Entropy minimiser of the same mass as a run.
    Minimizer(SourceArgs),
}

#[derive(Debug, Args)]
pub struct SourceArgs {
    /// Preset id (P1..P7, VAL1D, VAL2D-A, VAL2D-B).
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    pub preset: Option<String>,
    /// Configuration file with `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Steps between trace samples.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub cadence: u64,
    /// Extra snapshot times, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub snapshots: Vec<f64>,
    /// Entropy fit window `t1,t2` (default: the preset's, or T/8..7T/8).
    #[arg(long, value_delimiter = ',')]
    pub fit_window: Option<Vec<f64>>,
    /// Window in |v| for the blow-up profile fit (default: 0.02·R1..0.2·R1).
    #[arg(long, value_delimiter = ',')]
    pub profile_window: Option<Vec<f64>>,
    /// Override the time integrator.
    #[arg(long, value_enum)]
    pub integrator: Option<IntegratorArg>,
    /// Override the diffusion regularisation δ.
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum IntegratorArg {
    Be,
    Cn,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub levels: usize,
    /// Paper-scale 1D reference (12801 points, 1000 steps) instead of the reduced one.
    #[arg(long)]
    pub full: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StudyKind {
    Final1d,
    Spacetime1d,
    Cn1d,
    Final2d,
    Spacetime2d,
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    #[arg(long, value_enum)]
    pub mode: StudyKind,
    #[command(flatten)]
    pub study: StudyArgs,
}

/// Failure of a command, carrying its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn config(m: impl ToString) -> Self {
        Self { code: EXIT_CONFIG, message: m.to_string() }
    }

    fn io(e: std::io::Error) -> Self {
        Self { code: EXIT_FAILURE, message: e.to_string() }
    }

    fn run(e: condensate_core::Error) -> Self {
        let code = if e.is_nonconvergence() { EXIT_NONCONVERGENCE } else { EXIT_FAILURE };
        Self { code, message: e.to_string() }
    }

    fn status(&self) -> Status {
        match self.code {
            EXIT_CONFIG => Status::ConfigError,
            EXIT_NONCONVERGENCE => Status::Nonconvergence,
            _ => Status::Error,
        }
    }
}

/// Dispatches a parsed command line and returns the exit status.
pub fn run(cli: Cli) -> i32 {
    let (name, out) = match &cli.command {
        Command::Simulate(a) => ("simulate", Some(a.source.out.clone())),
        Command::Validate1d(a) => ("validate1d", Some(a.out.clone())),
        Command::Validate2d(a) => ("validate2d", Some(a.out.clone())),
        Command::Convergence(a) => ("convergence", Some(a.study.out.clone())),
        Command::Presets => ("presets", None),
        Command::Minimizer(a) => ("minimizer", Some(a.out.clone())),
    };
    let mut report = Report::new(name);
    let result = match cli.command {
        Command::Simulate(a) => simulate(&a, &mut report),
        Command::Validate1d(a) => {
            studies(&[StudyKind::Final1d, StudyKind::Spacetime1d, StudyKind::Cn1d], &a, &mut report)
        }
        Command::Validate2d(a) => studies(&[StudyKind::Final2d, StudyKind::Spacetime2d], &a, &mut report),
        Command::Convergence(a) => studies(&[a.mode], &a.study, &mut report),
        Command::Presets => {
            print!("{}", preset_table());
            Ok(())
        }
        Command::Minimizer(a) => minimizer(&a, &mut report),
    };
    let code = match &result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            report.status = f.status();
            report.error = Some(f.message.clone());
            f.code
        }
    };
    if let Some(dir) = out {
        if fs::create_dir_all(&dir).and_then(|_| report.write(&dir)).is_err() {
            eprintln!("error: cannot write report.json to {}", dir.display());
            return if code == EXIT_OK { EXIT_FAILURE } else { code };
        }
    }
    code
}

/// Resolved run description.
struct Source {
    preset: Option<PresetId>,
    config: SolverConfig,
    init: InitialDatum,
    decay_window: Option<(f64, f64)>,
}

fn load_source(a: &SourceArgs) -> Result<Source, Failure> {
    if let Some(name) = &a.preset {
        let id: PresetId = name.parse().map_err(Failure::config)?;
        let p = harness::preset(id).map_err(Failure::config)?;
        return Ok(Source { preset: Some(id), config: p.config, init: p.init, decay_window: Some(p.decay_window) });
    }
    let path = a.config.as_ref().ok_or_else(|| Failure::config("either --preset or --config is required"))?;
    let text = fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let parsed = parse_config(&text).map_err(|e: ConfigError| Failure::config(format!("{}: {e}", path.display())))?;
    Ok(Source { preset: None, config: parsed.solver, init: parsed.init, decay_window: None })
}

fn window(v: &Option<Vec<f64>>, default: (f64, f64)) -> Result<(f64, f64), Failure> {
    match v.as_deref() {
        None => Ok(default),
        Some([a, b]) if b > a => Ok((*a, *b)),
        Some(_) => Err(Failure::config("a window needs two increasing values")),
    }
}

fn echo_source(report: &mut Report, src: &Source) {
    report.preset = src.preset.map(|p| p.name().to_string());
    report.config = Some(src.config.clone());
    report.init = Some(src.init);
    report.critical_mass = Some(critical_mass(&src.config.params).value()).filter(|m| m.is_finite());
    report.warnings = src.config.params.warnings();
}

fn write_profile(dir: &Path, stem: &str, p: &Profile) -> Result<(), Failure> {
    let nodes = p.grid.nodes();
    write_csv(
        &dir.join(format!("{stem}.csv")),
        &["mass_coordinate", "value"],
        nodes.iter().zip(&p.values).map(|(&x, &u)| vec![x, u]),
    )
    .map_err(Failure::io)
}

fn write_density(dir: &Path, stem: &str, p: &Profile) -> Result<(), Failure> {
    write_csv(
        &dir.join(format!("{stem}.csv")),
        &["v", "f"],
        density_from_profile(p).into_iter().map(|(v, f)| vec![v, f]),
    )
    .map_err(Failure::io)
}

fn simulate(a: &SimulateArgs, report: &mut Report) -> Result<(), Failure> {
    let mut src = load_source(&a.source)?;
    if let Some(i) = a.integrator {
        src.config.integrator = match i {
            IntegratorArg::Be => Integrator::BackwardEuler,
            IntegratorArg::Cn => Integrator::CrankNicolson,
        };
    }
    if let Some(d) = a.delta {
        src.config.delta_reg = d;
        src.config.validate().map_err(Failure::config)?;
    }
    echo_source(report, &src);
    let cfg = &src.config;
    let t = cfg.t_final;
    let fit_window = window(&a.fit_window, src.decay_window.unwrap_or((t / 8.0, 7.0 * t / 8.0)))?;
    let r1 = cfg.params.r1;
    let profile_window = window(&a.profile_window, (0.02 * r1, 0.2 * r1))?;
    let dir = &a.source.out;
    fs::create_dir_all(dir).map_err(Failure::io)?;

    let u0 = src.init.profile_on(&cfg.params, &cfg.grid).map_err(Failure::config)?;
    let h_inf = diagnostics::h_infinity(&cfg.params, &cfg.grid).map_err(Failure::run)?;
    report.h_infinity = Some(h_inf);
    let mut rec = TraceRecorder::new(&cfg.params, cfg.tau, cfg.condensate_threshold, h_inf)
        .with_cadence(a.cadence as usize)
        .with_snapshots(a.snapshots.clone());
    let result = evolve(&u0, cfg, &mut [&mut rec]);

    let trace = &rec.trace;
    write_csv(
        &dir.join("entropy.csv"),
        &["t", "H", "H_relative"],
        trace.entropy.iter().map(|&(t, h)| vec![t, h, h - h_inf]),
    )
    .map_err(Failure::io)?;
    write_csv(&dir.join("condensate.csv"), &["t", "x_p"], trace.condensate.iter().map(|&(t, x)| vec![t, x]))
        .map_err(Failure::io)?;

    let mut snaps: Vec<(f64, &Profile)> = trace.snapshots.iter().map(|(t, p)| (*t, p)).collect();
    if let Ok(evo) = &result {
        if !snaps.iter().any(|(ts, _)| (ts - evo.time).abs() < 0.5 * cfg.tau) {
            snaps.push((evo.time, &evo.profile));
        }
    }
    for &(ts, p) in &snaps {
        let label = time_label(ts);
        write_profile(dir, &format!("profile_{label}"), p)?;
        write_density(dir, &format!("density_{label}"), p)?;
        if condensate_size(p, cfg.condensate_threshold) > 0.0 {
            if let Ok(fit) = diagnostics::blowup_profile_fit(p, profile_window) {
                report.profile_fits.push(ProfileFit { time: ts, window: profile_window, fit });
            }
        }
    }

    let fit = decay_rate(trace, fit_window);
    report.decay_fit = Some(DecayFit {
        window: fit_window,
        alpha: fit.as_ref().ok().copied(),
        error: fit.as_ref().err().map(|e| e.to_string()),
    });
    report.monotonicity = Some(rec.monotonicity);
    let final_size = match &result {
        Ok(evo) => condensate_size(&evo.profile, cfg.condensate_threshold),
        Err(_) => trace.condensate.last().map(|c| c.1).unwrap_or(0.0),
    };
    report.condensate = Some(CondensateSummary {
        onset: rec.condensate_onset,
        offset: rec.condensate_offset,
        max: rec.max_condensate,
        final_size,
    });
    let evo = result.map_err(Failure::run)?;
    report.run = Some(RunSummary {
        steps: evo.steps,
        final_time: evo.time,
        newton_iterations: evo.newton_iterations,
        rearrangements: evo.rearrangements,
        max_residual: evo.max_residual,
    });
    Ok(())
}

/// Runs one study at reduced or paper scale.
pub fn run_study(kind: StudyKind, levels: usize, full: bool) -> condensate_core::Result<ConvergenceReport> {
    let scale = if full { SelfConvergence1D::default() } else { SelfConvergence1D::reduced() };
    match kind {
        StudyKind::Final1d | StudyKind::Spacetime1d => {
            let p = harness::preset(PresetId::Val1D)?;
            let mode = if kind == StudyKind::Final1d { StudyMode::FinalTimeL2 } else { StudyMode::SpaceTimeL2 };
            self_convergence_1d(&p.config, &p.init, levels, mode, &scale)
        }
        StudyKind::Cn1d => {
            let p = harness::preset(PresetId::P3)?;
            let mut cfg = harness::with_integrator(p.config, Integrator::CrankNicolson);
            cfg.t_final = harness::preset(PresetId::Val1D)?.config.t_final;
            self_convergence_1d(&cfg, &p.init, levels, StudyMode::SpaceTimeL2, &scale)
        }
        StudyKind::Final2d => exact_convergence_2d(levels, StudyMode::FinalTimeL2, &ExactConvergence2D::default()),
        StudyKind::Spacetime2d => exact_convergence_2d(levels, StudyMode::SpaceTimeL2, &ExactConvergence2D::default()),
    }
}

fn studies(kinds: &[StudyKind], a: &StudyArgs, report: &mut Report) -> Result<(), Failure> {
    if a.levels == 0 {
        return Err(Failure::config("--levels must be at least 1"));
    }
    fs::create_dir_all(&a.out).map_err(Failure::io)?;
    for &kind in kinds {
        let rep = run_study(kind, a.levels, a.full).map_err(|e| match e {
            condensate_core::Error::InvalidParameter(_) => Failure::config(e),
            _ => Failure::run(e),
        })?;
        let name = kind.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
        write_csv(
            &a.out.join(format!("convergence_{name}.csv")),
            &["time_points", "mesh_size", "error", "rate"],
            rep.rows.iter().map(|r| vec![r.time_points as f64, r.mesh_size as f64, r.error, r.rate.unwrap_or(f64::NAN)]),
        )
        .map_err(Failure::io)?;
        println!("{name}");
        for r in &rep.rows {
            let rate = r.rate.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
            println!("  {:>6} {:>6} {:.4e} {rate}", r.time_points, r.mesh_size, r.error);
        }
        let failure = rep.failure.clone();
        report.convergence.push(rep);
        if let Some(msg) = failure {
            return Err(Failure { code: EXIT_NONCONVERGENCE, message: msg });
        }
    }
    Ok(())
}

fn minimizer(a: &SourceArgs, report: &mut Report) -> Result<(), Failure> {
    let src = load_source(a)?;
    echo_source(report, &src);
    let cfg = &src.config;
    let spec = entropy_minimizer(cfg.grid.mass_total, &cfg.params).map_err(Failure::run)?;
    let p = minimizer_profile(&spec, &cfg.grid).map_err(Failure::run)?;
    fs::create_dir_all(&a.out).map_err(Failure::io)?;
    write_profile(&a.out, "minimizer_profile", &p)?;
    write_density(&a.out, "minimizer_density", &p)?;
    report.h_infinity = diagnostics::h_infinity(&cfg.params, &cfg.grid).ok();
    report.minimizer = Some(spec);
    Ok(())
}

/// Human-readable listing of the presets.
pub fn preset_table() -> String {
    let mut s = String::new();
    for id in PresetId::ALL {
        if let Ok(p) = harness::preset(id) {
            let c = &p.config;
            s.push_str(&format!(
                "{:<8} gamma={} d={} R1={:.6} n={} tau={:e} T={} eps={:e} delta={:e} A={} sigma={} mass={:.6}  {}\n",
                id.name(),
                c.params.gamma,
                c.params.dim,
                c.params.r1,
                c.grid.n_points,
                c.tau,
                c.t_final,
                c.eps_reg,
                c.delta_reg,
                p.nominal_amp,
                p.init.sigma,
                c.grid.mass_total,
                p.description
            ));
        }
    }
    s
}
