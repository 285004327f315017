//! Building blocks shared by the subcommands and the figure recipes.

use std::fmt::Write as _;

use fermi_core::analysis::{
    compare_profiles, detect_plateaus, fit_decay, histogram_ensemble, kbar_scan_report, positive_tail_range,
    ComparisonReport, DecayFit, DecayModel, KbarScanReport, PlateauParams, PlateauReport, ResonanceWindow,
};
use fermi_core::classical::{
    evolve_ensemble, measure_island, poincare_section, sample_gaussian_ensemble, seed_line, Ensemble, Integrator,
    Island, IslandScan, MomentTrace, PoincareSection,
};
use fermi_core::quantum::{
    init_gaussian, momentum_distribution, position_distribution, propagate, Absorber, DistributionProfile, Grid,
    ObservableTrace, Propagation, Space, Wavefunction,
};
use fermi_core::{DimensionlessParams, Error, Result};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::io::OutputDir;

pub fn integrator(cfg: &ExperimentConfig) -> Integrator {
    Integrator { dt: cfg.run.dt(), scheme: cfg.run.integrator, ..Integrator::default() }
}

pub fn plateau_params(cfg: &ExperimentConfig) -> PlateauParams {
    PlateauParams { flatness: cfg.analysis.flatness, detection_level: cfg.analysis.detection_level, ..Default::default() }
}

pub fn grid(cfg: &ExperimentConfig) -> Result<Grid> {
    Grid::new(cfg.run.grid_z_min, cfg.run.grid_z_max, cfg.run.grid_points)
}

/// Islands of resonances 1..=n_max at the run's λ.
pub fn islands(cfg: &ExperimentConfig, d: &DimensionlessParams) -> Result<Vec<Island>> {
    let scan = IslandScan {
        n_phases: cfg.analysis.island_phases,
        n_heights: cfg.analysis.island_heights,
        n_bounces: cfg.analysis.island_bounces,
        ..IslandScan::default()
    };
    (1..=cfg.analysis.n_max).into_par_iter().map(|n| measure_island(n, d, &scan)).collect()
}

/// Windows of the found islands, ordered, with any overlap split at the
/// midpoint.
pub fn windows(islands: &[Island], space: Space) -> Vec<ResonanceWindow> {
    let mut w: Vec<ResonanceWindow> = islands.iter().filter_map(|i| ResonanceWindow::from_island(i, space)).collect();
    w.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    for i in 1..w.len() {
        if w[i].lo < w[i - 1].hi {
            let mid = 0.5 * (w[i].lo + w[i - 1].hi);
            w[i - 1].hi = mid;
            w[i].lo = mid;
        }
    }
    w
}

pub fn run_section(cfg: &ExperimentConfig, d: &DimensionlessParams) -> Result<PoincareSection> {
    let p = &cfg.poincare;
    let seeds = seed_line((p.z_min, 0.0), (p.z_max, 0.0), p.n_orbits);
    poincare_section(&seeds, p.n_periods, &integrator(cfg), d)
}

#[derive(Debug, Clone)]
pub struct QuantumRun {
    pub psi: Wavefunction,
    pub trace: ObservableTrace,
    pub position: DistributionProfile,
    pub momentum: DistributionProfile,
    pub saturation: Option<(f64, f64, bool)>,
}

pub fn run_quantum(cfg: &ExperimentConfig, d: &DimensionlessParams) -> Result<QuantumRun> {
    let g = grid(cfg)?;
    let i = &cfg.initial;
    let psi0 = init_gaussian(i.z0, i.p0, i.dz, d.kbar, &g)?;
    let settings = Propagation {
        dt: cfg.run.dt(),
        absorber: cfg.run.absorber.then_some(Absorber {
            fraction: cfg.run.absorber_fraction,
            strength: cfg.run.absorber_strength,
        }),
        ..Propagation::default()
    };
    let (psi, trace) = propagate(&psi0, cfg.run.t_final, &settings, d, cfg.run.record_every)?;
    let position = position_distribution(&psi)?.rebin(cfg.run.grid_points / cfg.analysis.position_bins)?;
    let full = momentum_distribution(&psi)?;
    let factor = ((cfg.analysis.momentum_bin / full.width).round() as usize).max(1);
    let momentum = full.rebin(factor)?;
    let saturation = trace.saturation(cfg.analysis.saturation_tolerance);
    Ok(QuantumRun { psi, trace, position, momentum, saturation })
}

#[derive(Debug, Clone)]
pub struct ClassicalRun {
    pub ensemble: Ensemble,
    pub trace: MomentTrace,
    pub position: DistributionProfile,
    pub momentum: DistributionProfile,
}

/// Ensemble drawn from the classical counterpart of the initial packet:
/// σ_z = Δz, σ_p = k̄/(2Δz).
pub fn run_classical(cfg: &ExperimentConfig, d: &DimensionlessParams) -> Result<ClassicalRun> {
    let i = &cfg.initial;
    let e0 = sample_gaussian_ensemble(i.z0, i.p0, i.dz, d.kbar / (2.0 * i.dz), i.ensemble_size, i.seed)?;
    let (ensemble, trace) = evolve_ensemble(&e0, cfg.run.t_final, &integrator(cfg), d, cfg.run.record_every)?;
    let position = histogram_ensemble(
        &ensemble,
        Space::Position,
        cfg.analysis.position_bins,
        Some((cfg.run.grid_z_min, cfg.run.grid_z_max)),
    )?;
    let r = cfg.analysis.momentum_range;
    let bins = (2.0 * r / cfg.analysis.momentum_bin).round() as usize;
    let momentum = histogram_ensemble(&ensemble, Space::Momentum, bins, Some((-r, r)))?;
    Ok(ClassicalRun { ensemble, trace, position, momentum })
}

/// The three decay laws fitted over one range.
#[derive(Debug, Clone, Copy)]
pub struct FitSet {
    pub range: (f64, f64),
    pub exp_linear: DecayFit,
    pub gaussian: DecayFit,
    pub exp_sqrt: DecayFit,
}

impl FitSet {
    pub fn over(profile: &DistributionProfile, range: (f64, f64), fold: bool) -> Result<Self> {
        Ok(FitSet {
            range,
            exp_linear: fit_decay(profile, range, DecayModel::ExpLinear, fold)?,
            gaussian: fit_decay(profile, range, DecayModel::Gaussian, fold)?,
            exp_sqrt: fit_decay(profile, range, DecayModel::ExpSqrt, fold)?,
        })
    }

    pub fn all(&self) -> [DecayFit; 3] {
        [self.exp_linear, self.gaussian, self.exp_sqrt]
    }

    /// The model with the highest r².
    pub fn best(&self) -> DecayModel {
        self.all().into_iter().max_by(|a, b| a.r_squared.total_cmp(&b.r_squared)).map(|f| f.model).unwrap()
    }
}

/// Start of the momentum tail: the configured value, or the upper momentum
/// edge of the lowest island.
pub fn tail_start(cfg: &ExperimentConfig, momentum_windows: &[ResonanceWindow]) -> Result<f64> {
    if cfg.analysis.tail_start.is_finite() {
        return Ok(cfg.analysis.tail_start);
    }
    momentum_windows
        .first()
        .map(|w| w.hi)
        .ok_or_else(|| Error::Analysis("no island found to anchor the momentum tail".into()))
}

/// Fits on the folded momentum tail from `start` until the density drops
/// below `floor` times the peak.
pub fn tail_fits(profile: &DistributionProfile, start: f64, floor: f64) -> Result<FitSet> {
    let range = positive_tail_range(profile, start, floor, true)
        .ok_or_else(|| Error::Analysis(format!("no positive tail beyond {start}")))?;
    FitSet::over(profile, range, true)
}

/// Fits over the whole populated part of a folded profile.
pub fn full_fits(profile: &DistributionProfile) -> Result<FitSet> {
    let range = positive_tail_range(profile, 0.0, 0.0, true)
        .ok_or_else(|| Error::Analysis("profile is empty near the origin".into()))?;
    FitSet::over(profile, range, true)
}

/// Square-root law on the position profile above the lowest island.
pub fn position_tail_fits(profile: &DistributionProfile, windows: &[ResonanceWindow], floor: f64) -> Result<FitSet> {
    let start = windows.first().map(|w| w.hi).unwrap_or(0.0).max(0.0);
    tail_fits_unfolded(profile, start, floor)
}

fn tail_fits_unfolded(profile: &DistributionProfile, start: f64, floor: f64) -> Result<FitSet> {
    let range = positive_tail_range(profile, start, floor, false)
        .ok_or_else(|| Error::Analysis(format!("no positive tail beyond {start}")))?;
    FitSet::over(profile, range, false)
}

/// Drops between consecutive detected plateau levels, in decades.
pub fn level_drops(r: &PlateauReport) -> Vec<(usize, usize, f64)> {
    let detected: Vec<_> = r.plateaus.iter().filter(|p| p.detected).collect();
    detected
        .windows(2)
        .map(|w| (w[0].resonance_index, w[1].resonance_index, w[0].mean_log10_level - w[1].mean_log10_level))
        .collect()
}

fn write_islands(s: &mut String, islands: &[Island]) {
    let _ = writeln!(s, "islands (turning height):");
    for i in islands {
        if i.found {
            let _ = writeln!(s, "  N={} center {:.3} half-width {:.3}", i.index, i.center_height, i.half_width);
        } else {
            let _ = writeln!(s, "  N={} not found", i.index);
        }
    }
}

fn write_plateaus(s: &mut String, label: &str, r: &PlateauReport) {
    let _ = writeln!(s, "{label} plateaus:");
    for p in &r.plateaus {
        let _ = writeln!(
            s,
            "  N={} [{:.2}, {:.2}] level {:.2} width {:.2}{}",
            p.resonance_index,
            p.interval.0,
            p.interval.1,
            p.mean_log10_level,
            p.width,
            if p.detected { "" } else { " (below detection level)" }
        );
    }
    for (i, why) in &r.skipped {
        let _ = writeln!(s, "  N={i} skipped: {why}");
    }
    for (a, b, drop) in level_drops(r) {
        let _ = writeln!(s, "  drop N={a} -> N={b}: {drop:.2} decades");
    }
}

fn write_fits(s: &mut String, label: &str, f: &FitSet) {
    let _ = writeln!(s, "{label} fits over [{:.2}, {:.2}]:", f.range.0, f.range.1);
    for fit in f.all() {
        let _ = writeln!(s, "  {:<10} coefficient {:.4} r2 {:.4}", fit.model.as_str(), fit.coefficient, fit.r_squared);
    }
    let _ = writeln!(s, "  preferred: {}", f.best().as_str());
}

fn write_saturation(s: &mut String, q: &QuantumRun) {
    match q.saturation {
        Some((third, last, ok)) => {
            let _ = writeln!(
                s,
                "<p^2> third-quarter mean {third:.3}, last-quarter mean {last:.3}: {}",
                if ok { "saturated" } else { "growing" }
            );
        }
        None => {
            let _ = writeln!(s, "<p^2> trace too short for the saturation test");
        }
    }
    let _ = writeln!(s, "absorbed probability {:.3e}", q.psi.absorbed);
}

fn header(s: &mut String, title: &str, d: &DimensionlessParams, cfg: &ExperimentConfig) {
    let _ = writeln!(s, "{title}");
    let _ = writeln!(
        s,
        "V0 = {} kappa = {} lambda = {} kbar = {}; z0 = {} p0 = {} dz = {}; t = {}",
        d.v0, d.kappa, d.lambda, d.kbar, cfg.initial.z0, cfg.initial.p0, cfg.initial.dz, cfg.run.t_final
    );
}

/// Writes both plot-ready CSV and, when enabled, SVG for a profile.
fn emit_profile(out: &mut OutputDir, cfg: &ExperimentConfig, stem: &str, title: &str, p: &DistributionProfile) -> Result<()> {
    out.profile(&format!("{stem}.csv"), p)?;
    if cfg.output.svg {
        out.svg_profiles(&format!("{stem}.svg"), title, &[(stem, p)])?;
    }
    Ok(())
}

/// Poincaré section, islands, the quantum run and its plateau and tail
/// analysis.
pub fn fig1(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<String> {
    let d = cfg.dimensionless()?;
    let section = run_section(cfg, &d)?;
    out.section("poincare.csv", &section)?;
    let isl = islands(cfg, &d)?;
    out.islands("islands.csv", &isl)?;
    let q = run_quantum(cfg, &d)?;
    out.trace("trace.csv", &q.trace)?;
    emit_profile(out, cfg, "pos_dist", "position distribution", &q.position)?;
    emit_profile(out, cfg, "mom_dist", "momentum distribution", &q.momentum)?;

    let wz = windows(&isl, Space::Position);
    let wp = windows(&isl, Space::Momentum);
    let params = plateau_params(cfg);
    let pz = detect_plateaus(&q.position, &wz, &params)?;
    let pp = detect_plateaus(&q.momentum, &wp, &params)?;
    out.plateaus("plateaus.csv", &pz)?;
    out.plateaus("plateaus_momentum.csv", &pp)?;

    let mut s = String::new();
    header(&mut s, "fig1: quantum distributions against the classical islands", &d, cfg);
    let _ = writeln!(s, "section: {} points from {} orbits ({} escaped)", section.points.len(), section.n_orbits, section.escaped.len());
    write_islands(&mut s, &isl);
    write_saturation(&mut s, &q);
    write_plateaus(&mut s, "position", &pz);
    write_plateaus(&mut s, "momentum", &pp);
    let mut fits = Vec::new();
    match tail_start(cfg, &wp).and_then(|start| tail_fits(&q.momentum, start, cfg.analysis.tail_floor)) {
        Ok(f) => {
            write_fits(&mut s, "momentum tail", &f);
            fits.extend(f.all().map(|x| ("momentum_tail", x)));
        }
        Err(e) => {
            let _ = writeln!(s, "momentum tail fit failed: {e}");
        }
    }
    match position_tail_fits(&q.position, &wz, cfg.analysis.tail_floor) {
        Ok(f) => {
            write_fits(&mut s, "position tail", &f);
            fits.extend(f.all().map(|x| ("position_tail", x)));
        }
        Err(e) => {
            let _ = writeln!(s, "position tail fit failed: {e}");
        }
    }
    out.fits("fits.csv", &fits)?;
    out.text("report.txt", &s)?;
    Ok(s)
}

/// The same pipeline at k̄ = 1 and k̄ = 4, compared plateau by plateau.
pub fn fig2(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<String> {
    let base = cfg.dimensionless()?;
    let (d1, d4) = (DimensionlessParams { kbar: 1.0, ..base }, DimensionlessParams { kbar: 4.0, ..base });
    let isl = islands(cfg, &base)?;
    out.islands("islands.csv", &isl)?;
    let q1 = run_quantum(cfg, &d1)?;
    let q4 = run_quantum(cfg, &d4)?;
    for (tag, q) in [("kbar1", &q1), ("kbar4", &q4)] {
        out.trace(&format!("trace_{tag}.csv"), &q.trace)?;
        out.profile(&format!("pos_dist_{tag}.csv"), &q.position)?;
        out.profile(&format!("mom_dist_{tag}.csv"), &q.momentum)?;
    }
    if cfg.output.svg {
        out.svg_profiles("pos_dist.svg", "position distribution", &[("kbar=1", &q1.position), ("kbar=4", &q4.position)])?;
        out.svg_profiles("mom_dist.svg", "momentum distribution", &[("kbar=1", &q1.momentum), ("kbar=4", &q4.momentum)])?;
    }
    let wz = windows(&isl, Space::Position);
    let report = kbar_scan_report(
        (&q1.position, 1.0),
        (&q4.position, 4.0),
        &wz,
        &plateau_params(cfg),
        cfg.analysis.kbar_width_tolerance,
        2,
    )?;
    out.plateaus("plateaus_kbar1.csv", &report.low)?;
    out.plateaus("plateaus_kbar4.csv", &report.high)?;
    out.text("kbar_scan.csv", &kbar_scan_csv(&report))?;

    let mut s = String::new();
    header(&mut s, "fig2: k̄ = 1 against k̄ = 4", &base, cfg);
    write_islands(&mut s, &isl);
    for (tag, q) in [("kbar = 1", &q1), ("kbar = 4", &q4)] {
        let _ = writeln!(s, "{tag}:");
        write_saturation(&mut s, q);
    }
    write_plateaus(&mut s, "kbar = 1 position", &report.low);
    write_plateaus(&mut s, "kbar = 4 position", &report.high);
    write_kbar_scan(&mut s, &report);
    out.text("report.txt", &s)?;
    Ok(s)
}

fn kbar_scan_csv(r: &KbarScanReport) -> String {
    let opt = |x: Option<f64>| x.map_or("nan".to_string(), crate::io::num);
    format!(
        "reference,width_ratio,widths_agree,level_low,level_high,higher_plateau,count_low,count_high,more_plateaus\n{},{},{},{},{},{},{},{},{}\n",
        r.reference,
        opt(r.width_ratio),
        r.widths_agree,
        opt(r.level_low),
        opt(r.level_high),
        r.higher_plateau,
        r.count_low,
        r.count_high,
        r.more_plateaus
    )
}

fn write_kbar_scan(s: &mut String, r: &KbarScanReport) {
    let _ = writeln!(s, "resonance {}:", r.reference);
    let _ = writeln!(s, "  width ratio (kbar 4 / kbar 1): {:?} agree: {}", r.width_ratio, r.widths_agree);
    let _ = writeln!(s, "  levels: {:?} -> {:?} higher: {}", r.level_low, r.level_high, r.higher_plateau);
    let _ = writeln!(s, "  detected plateaus: {} -> {} (at least as many: {})", r.count_low, r.count_high, r.more_plateaus);
}

/// Classical ensemble against the quantum run at the same parameters.
pub fn fig3(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<String> {
    let d = cfg.dimensionless()?;
    let isl = islands(cfg, &d)?;
    out.islands("islands.csv", &isl)?;
    let c = run_classical(cfg, &d)?;
    let q = run_quantum(cfg, &d)?;
    out.moments("moments.csv", &c.trace)?;
    out.trace("trace.csv", &q.trace)?;
    out.profile("cl_pos_dist.csv", &c.position)?;
    out.profile("cl_mom_dist.csv", &c.momentum)?;
    out.profile("q_pos_dist.csv", &q.position)?;
    out.profile("q_mom_dist.csv", &q.momentum)?;
    if cfg.output.svg {
        out.svg_profiles("pos_dist.svg", "position distribution", &[("classical", &c.position), ("quantum", &q.position)])?;
        out.svg_profiles("mom_dist.svg", "momentum distribution", &[("classical", &c.momentum), ("quantum", &q.momentum)])?;
    }
    let wz = windows(&isl, Space::Position);
    let cmp = compare_profiles(&c.position, &q.position, &wz, &plateau_params(cfg), cfg.analysis.width_tolerance)?;
    out.comparison("comparison.csv", &cmp)?;
    out.plateaus("plateaus_classical.csv", &cmp.classical)?;
    out.plateaus("plateaus_quantum.csv", &cmp.quantum)?;

    let mut s = String::new();
    header(&mut s, "fig3: classical ensemble against the quantum packet", &d, cfg);
    write_islands(&mut s, &isl);
    let _ = writeln!(s, "classical: {} particles, {} escaped", c.ensemble.len(), c.ensemble.escaped_count());
    for t in [cfg.run.t_final / 4.0, cfg.run.t_final] {
        if let Some(i) = c.trace.index_near(t) {
            let _ = writeln!(s, "  var_p at t = {:.1}: {:.4}", c.trace.times[i], c.trace.var_p[i]);
        }
    }
    write_saturation(&mut s, &q);
    write_comparison(&mut s, &cmp);
    let mut fits = Vec::new();
    let wp = windows(&isl, Space::Momentum);
    match full_fits(&c.momentum) {
        Ok(f) => {
            write_fits(&mut s, "classical momentum", &f);
            fits.extend(f.all().map(|x| ("classical_momentum", x)));
        }
        Err(e) => {
            let _ = writeln!(s, "classical momentum fit failed: {e}");
        }
    }
    match tail_start(cfg, &wp).and_then(|start| tail_fits(&q.momentum, start, cfg.analysis.tail_floor)) {
        Ok(f) => {
            write_fits(&mut s, "quantum momentum tail", &f);
            fits.extend(f.all().map(|x| ("quantum_momentum_tail", x)));
        }
        Err(e) => {
            let _ = writeln!(s, "quantum momentum tail fit failed: {e}");
        }
    }
    out.fits("fits.csv", &fits)?;
    out.text("report.txt", &s)?;
    Ok(s)
}

pub fn write_comparison(s: &mut String, c: &ComparisonReport) {
    write_plateaus(s, "classical position", &c.classical);
    write_plateaus(s, "quantum position", &c.quantum);
    let _ = writeln!(s, "comparison (tolerance {}):", c.tolerance);
    for r in &c.resonances {
        let _ = writeln!(
            s,
            "  N={} location {} width {} shift {:.3} width ratio {:.3} height ratio {:.3}",
            r.resonance_index,
            if r.location_match { "match" } else { "differ" },
            if r.width_match { "match" } else { "differ" },
            r.center_shift,
            r.width_ratio,
            r.height_ratio
        );
    }
}
