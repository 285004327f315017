use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fermi_core::analysis::{compare_profiles, detect_plateaus};
use fermi_core::floquet::{build_floquet, quasi_spectrum};
use fermi_core::quantum::{write_checkpoint, Grid, Space};
use fermi_core::units::{localization_window, to_physical, Anchor};
use fermi_core::{Error, Result};
use fermi_cli::config::{self, ExperimentConfig, ParamsSource};
use fermi_cli::io::{read_profile, OutputDir};
use fermi_cli::recipes;

/// Driven atom-mirror experiments: classical, quantum and Floquet runs with
/// plateau analysis.
#[derive(Parser)]
#[command(name = "fermi", version)]
struct Cli {
    /// TOML config; the built-in defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: `output.dir` from the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for the classical ensemble (`initial.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, env = "FERMI_THREADS")]
    threads: Option<usize>,
    /// `section.key=value`, repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the parameters in both unit systems and the localization window.
    Convert,
    /// Poincaré section and resonance islands.
    Poincare,
    /// Classical ensemble run.
    Classical,
    /// Quantum wavepacket run; also writes the final state to psi.bin.
    Quantum,
    /// Floquet quasienergy spectrum.
    Floquet,
    /// Plateau analysis of a stored distribution.
    Analyze {
        #[arg(long, value_enum)]
        space: SpaceArg,
        /// `axis,prob` CSV to analyse (quantum side when comparing).
        #[arg(long)]
        profile: PathBuf,
        /// Classical `axis,prob` CSV to compare against.
        #[arg(long)]
        compare: Option<PathBuf>,
    },
    /// Figure pipelines.
    Reproduce {
        #[arg(value_enum)]
        figure: Figure,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SpaceArg {
    Position,
    Momentum,
}

#[derive(Clone, Copy, ValueEnum)]
enum Figure {
    Fig1,
    Fig2,
    Fig3,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config(vec!["`--threads` must be at least 1".into()]));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(vec![e.to_string()]))?;
    }
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("initial.seed={seed}"));
    }
    let (cfg, table) = config::load(cli.config.as_deref(), &overrides)?;
    let root = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let threads = rayon::current_num_threads();
    let name = command_name(&cli.command);

    if let Command::Convert = cli.command {
        print!("{}", convert(&cfg)?);
        return Ok(());
    }
    let mut out = OutputDir::create(&root)?;
    let report = match &cli.command {
        Command::Convert => unreachable!(),
        Command::Poincare => poincare(&cfg, &mut out)?,
        Command::Classical => classical(&cfg, &mut out)?,
        Command::Quantum => quantum(&cfg, &mut out)?,
        Command::Floquet => floquet(&cfg, &mut out)?,
        Command::Analyze { space, profile, compare } => analyze(&cfg, &mut out, *space, profile, compare.as_deref())?,
        Command::Reproduce { figure: Figure::Fig1 } => recipes::fig1(&cfg, &mut out)?,
        Command::Reproduce { figure: Figure::Fig2 } => recipes::fig2(&cfg, &mut out)?,
        Command::Reproduce { figure: Figure::Fig3 } => recipes::fig3(&cfg, &mut out)?,
    };
    out.manifest(&name, threads, &table)?;
    print!("{report}");
    println!("outputs in {}", root.display());
    Ok(())
}

fn command_name(c: &Command) -> String {
    match c {
        Command::Convert => "convert".into(),
        Command::Poincare => "poincare".into(),
        Command::Classical => "classical".into(),
        Command::Quantum => "quantum".into(),
        Command::Floquet => "floquet".into(),
        Command::Analyze { .. } => "analyze".into(),
        Command::Reproduce { figure } => match figure {
            Figure::Fig1 => "reproduce fig1".into(),
            Figure::Fig2 => "reproduce fig2".into(),
            Figure::Fig3 => "reproduce fig3".into(),
        },
    }
}

fn convert(cfg: &ExperimentConfig) -> Result<String> {
    let d = cfg.dimensionless()?;
    let p = match &cfg.params {
        ParamsSource::Physical(p) => *p,
        ParamsSource::Dimensionless(_) => to_physical(&d, &Anchor::cesium())?,
    };
    let w = localization_window(&d);
    let mut s = String::new();
    let _ = writeln!(s, "kbar = {:.6}", d.kbar);
    let _ = writeln!(s, "kappa = {:.6}", d.kappa);
    let _ = writeln!(s, "v0 = {:.6}", d.v0);
    let _ = writeln!(s, "lambda = {:.6}", d.lambda);
    let _ = writeln!(s, "mass = {:.6e} kg", p.mass);
    let _ = writeln!(s, "gravity = {:.6} m/s^2", p.gravity);
    let _ = writeln!(s, "rabi_eff = {:.6e} rad/s", p.rabi_eff);
    let _ = writeln!(s, "decay_length = {:.6e} m", 1.0 / p.decay_wavenumber);
    let _ = writeln!(s, "mod_frequency = {:.6e} rad/s", p.mod_frequency);
    let _ = writeln!(s, "mod_amplitude_eps = {:.6e}", p.mod_amplitude_eps);
    let _ = writeln!(
        s,
        "localization window: {} < lambda < {}{}",
        w.lambda_lower,
        w.lambda_upper,
        if w.is_empty { " (empty)" } else if w.contains(d.lambda) { " (lambda inside)" } else { " (lambda outside)" }
    );
    Ok(s)
}

fn poincare(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<String> {
    let d = cfg.dimensionless()?;
    let section = recipes::run_section(cfg, &d)?;
    out.section("poincare.csv", &section)?;
    let islands = recipes::islands(cfg, &d)?;
    out.islands("islands.csv", &islands)?;
    let mut s = format!(
        "{} section points from {} orbits, {} escaped\n",
        section.points.len(),
        section.n_orbits,
        section.escaped.len()
    );
    for i in &islands {
        if i.found {
            let _ = writeln!(s, "N={} center {:.3} half-width {:.3}", i.index, i.center_height, i.half_width);
        } else {
            let _ = writeln!(s, "N={} not found", i.index);
        }
    }
    Ok(s)
}

fn classical(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<String> {
    let d = cfg.dimensionless()?;
    let c = recipes::run_classical(cfg, &d)?;
    out.moments("moments.csv", &c.trace)?;
    out.profile("cl_pos_dist.csv", &c.position)?;
    out.profile("cl_mom_dist.csv", &c.momentum)?;
    let mut s = format!("{} particles, {} escaped\n", c.ensemble.len(), c.ensemble.escaped_count());
    if let Some(&v) = c.trace.var_p.last() {
        let _ = writeln!(s, "final var_p {v:.4}");
    }
    let f = recipes::full_fits(&c.momentum)?;
    for fit in f.all() {
        let _ = writeln!(s, "{:<10} r2 {:.4}", fit.model.as_str(), fit.r_squared);
    }
    out.fits("fits.csv", &f.all().map(|x| ("classical_momentum", x)))?;
    Ok(s)
}

fn quantum(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<String> {
    let d = cfg.dimensionless()?;
    let q = recipes::run_quantum(cfg, &d)?;
    out.trace("trace.csv", &q.trace)?;
    out.profile("pos_dist.csv", &q.position)?;
    out.profile("mom_dist.csv", &q.momentum)?;
    write_checkpoint(&out.path("psi.bin"), &q.psi)?;
    out.written.push("psi.bin".into());
    let mut s = format!("norm {:.6e}, absorbed {:.3e}\n", q.psi.norm(), q.psi.absorbed);
    if let Some((third, last, ok)) = q.saturation {
        let _ = writeln!(s, "<p^2> {third:.3} -> {last:.3}: {}", if ok { "saturated" } else { "growing" });
    }
    Ok(s)
}

fn floquet(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<String> {
    let d = cfg.dimensionless()?;
    let f = &cfg.floquet;
    let grid = Grid::new(f.grid_z_min, f.grid_z_max, f.grid_points)?;
    let op = build_floquet(&d, &grid, f.basis_dim, std::f64::consts::TAU / f.steps_per_period as f64)?;
    let spec = quasi_spectrum(&op, 1e-6)?;
    out.spectrum("spectrum.csv", &spec)?;
    let w = localization_window(&d);
    Ok(format!(
        "basis {} (core {}), unitarity deficit {:.3e}\nmean IPR {:.4}\nlocalization window ({}, {}), lambda = {}\n",
        op.dim,
        op.core,
        op.deficit,
        spec.mean_ipr(),
        w.lambda_lower,
        w.lambda_upper,
        d.lambda
    ))
}

fn analyze(
    cfg: &ExperimentConfig,
    out: &mut OutputDir,
    space: SpaceArg,
    profile: &Path,
    compare: Option<&Path>,
) -> Result<String> {
    let space = match space {
        SpaceArg::Position => Space::Position,
        SpaceArg::Momentum => Space::Momentum,
    };
    let d = cfg.dimensionless()?;
    let islands = recipes::islands(cfg, &d)?;
    let windows = recipes::windows(&islands, space);
    let params = recipes::plateau_params(cfg);
    let q = read_profile(profile, space)?;
    let mut s = String::new();
    if let Some(c) = compare {
        let c = read_profile(c, space)?;
        let cmp = compare_profiles(&c, &q, &windows, &params, cfg.analysis.width_tolerance)?;
        out.comparison("comparison.csv", &cmp)?;
        out.plateaus("plateaus_classical.csv", &cmp.classical)?;
        out.plateaus("plateaus_quantum.csv", &cmp.quantum)?;
        recipes::write_comparison(&mut s, &cmp);
    } else {
        let r = detect_plateaus(&q, &windows, &params)?;
        out.plateaus("plateaus.csv", &r)?;
        for p in &r.plateaus {
            let _ = writeln!(
                s,
                "N={} [{:.2}, {:.2}] level {:.2} width {:.2} detected {}",
                p.resonance_index, p.interval.0, p.interval.1, p.mean_log10_level, p.width, p.detected
            );
        }
    }
    Ok(s)
}
