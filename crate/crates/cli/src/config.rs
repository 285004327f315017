//! Experiment configuration: a sectioned TOML file plus `section.key=value`
//! overrides. Validation reports every problem at once.

use std::f64::consts::TAU;
use std::path::Path;

use fermi_core::classical::Scheme;
use fermi_core::units::{to_dimensionless, PhysicalParams, HBAR, STANDARD_GRAVITY};
use fermi_core::{DimensionlessParams, Error, Result};
use toml::{Table, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum ParamsSource {
    Dimensionless(DimensionlessParams),
    Physical(PhysicalParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialConfig {
    pub z0: f64,
    pub p0: f64,
    pub dz: f64,
    pub ensemble_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub t_final: f64,
    pub steps_per_period: u64,
    pub record_every: f64,
    pub grid_z_min: f64,
    pub grid_z_max: f64,
    pub grid_points: usize,
    pub absorber: bool,
    pub absorber_fraction: f64,
    pub absorber_strength: f64,
    pub integrator: Scheme,
}

impl RunConfig {
    pub fn dt(&self) -> f64 {
        TAU / self.steps_per_period as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoincareConfig {
    pub n_orbits: usize,
    pub n_periods: u64,
    pub z_min: f64,
    pub z_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FloquetConfig {
    pub basis_dim: usize,
    pub grid_z_min: f64,
    pub grid_z_max: f64,
    pub grid_points: usize,
    pub steps_per_period: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub n_max: usize,
    /// Position bins over the run grid; must divide `run.grid_points`.
    pub position_bins: usize,
    pub momentum_bin: f64,
    /// Momentum histograms span ±this.
    pub momentum_range: f64,
    pub flatness: f64,
    pub detection_level: f64,
    pub width_tolerance: f64,
    pub kbar_width_tolerance: f64,
    pub saturation_tolerance: f64,
    /// Momentum tail fits start here; NaN means the upper momentum edge of
    /// the lowest measured island.
    pub tail_start: f64,
    pub tail_floor: f64,
    pub island_phases: usize,
    pub island_heights: usize,
    pub island_bounces: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: String,
    pub svg: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub params: ParamsSource,
    pub initial: InitialConfig,
    pub run: RunConfig,
    pub poincare: PoincareConfig,
    pub floquet: FloquetConfig,
    pub analysis: AnalysisConfig,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn dimensionless(&self) -> Result<DimensionlessParams> {
        match &self.params {
            ParamsSource::Dimensionless(d) => Ok(*d),
            ParamsSource::Physical(p) => to_dimensionless(p),
        }
    }
}

/// Built-in defaults (k̄ = 1, λ = 0.4, z0 = 20) as a config table, used by the
/// figure recipes when no file is given.
pub fn default_table() -> Table {
    let text = r#"
[dimensionless]
v0 = 4.0
kappa = 0.5
lambda = 0.4
kbar = 1.0

[initial]
z0 = 20.0
p0 = 0.0
dz = 0.5
ensemble_size = 60000
seed = 1

[run]
t_final = 1000.0
steps_per_period = 2000
record_every = 10.0
grid_z_min = -20.0
grid_z_max = 500.0
grid_points = 16384
absorber = true
absorber_fraction = 0.1
absorber_strength = 2.0
integrator = "verlet"

[poincare]
n_orbits = 60
n_periods = 300
z_min = 2.0
z_max = 80.0

[floquet]
basis_dim = 300
grid_z_min = -6.0
grid_z_max = 122.0
grid_points = 1024
steps_per_period = 2000

[analysis]
n_max = 4
position_bins = 512
momentum_bin = 0.25
momentum_range = 40.0
flatness = 0.5
detection_level = -20.0
width_tolerance = 0.2
kbar_width_tolerance = 0.25
saturation_tolerance = 0.25
tail_start = "auto"
tail_floor = 1e-20
island_phases = 24
island_heights = 64
island_bounces = 40

[output]
dir = "out"
svg = true
"#;
    text.parse().expect("built-in defaults parse")
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path)?;
    text.parse::<Table>()
        .map_err(|e| Error::Config(vec![format!("{}: {}", path.display(), e.message())]))
}

/// Applies `section.key=value` overrides. Values parse as TOML scalars and
/// fall back to plain strings.
pub fn apply_overrides(table: &mut Table, overrides: &[String]) -> Result<()> {
    let mut errors = Vec::new();
    for o in overrides {
        let Some((key, raw)) = o.split_once('=') else {
            errors.push(format!("override `{o}` is not of the form section.key=value"));
            continue;
        };
        let Some((section, name)) = key.trim().split_once('.') else {
            errors.push(format!("override key `{key}` must be section.key"));
            continue;
        };
        let value = parse_scalar(raw.trim());
        let entry = table.entry(section.to_string()).or_insert_with(|| Value::Table(Table::new()));
        match entry {
            Value::Table(t) => {
                t.insert(name.to_string(), value);
            }
            _ => errors.push(format!("`{section}` is not a section")),
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(errors))
    }
}

fn parse_scalar(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Fills keys and sections the file leaves out from the defaults. Parameter
/// sections are never filled in: the file names its physics.
pub fn with_defaults(mut table: Table) -> Table {
    for (section, value) in default_table() {
        if section == "dimensionless" || section == "physical" {
            continue;
        }
        match (table.get_mut(&section), value) {
            (Some(Value::Table(have)), Value::Table(def)) => {
                for (k, v) in def {
                    have.entry(k).or_insert(v);
                }
            }
            (None, v) => {
                table.insert(section, v);
            }
            _ => {}
        }
    }
    table
}

struct Reader<'a> {
    table: &'a Table,
    errors: Vec<String>,
}

impl<'a> Reader<'a> {
    fn section(&mut self, name: &str) -> Option<&'a Table> {
        match self.table.get(name) {
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                self.errors.push(format!("`{name}` must be a section"));
                None
            }
            None => None,
        }
    }

    fn raw(&mut self, sec: &str, key: &str) -> Option<&'a Value> {
        let v = self.section(sec).and_then(|t| t.get(key));
        if v.is_none() {
            self.errors.push(format!("missing key `{sec}.{key}`"));
        }
        v
    }

    fn f64(&mut self, sec: &str, key: &str) -> f64 {
        match self.raw(sec, key) {
            Some(Value::Float(x)) => *x,
            Some(Value::Integer(i)) => *i as f64,
            Some(v) => {
                self.errors.push(format!("`{sec}.{key}` must be a number, got {v}"));
                f64::NAN
            }
            None => f64::NAN,
        }
    }

    fn positive(&mut self, sec: &str, key: &str) -> f64 {
        let x = self.f64(sec, key);
        if !x.is_nan() && !(x.is_finite() && x > 0.0) {
            self.errors.push(format!("`{sec}.{key}` must be > 0, got {x}"));
        }
        x
    }

    fn finite(&mut self, sec: &str, key: &str) -> f64 {
        let x = self.f64(sec, key);
        if !x.is_nan() && !x.is_finite() {
            self.errors.push(format!("`{sec}.{key}` must be finite, got {x}"));
        }
        x
    }

    fn uint(&mut self, sec: &str, key: &str, min: u64) -> u64 {
        match self.raw(sec, key) {
            Some(Value::Integer(i)) if *i >= min as i64 => *i as u64,
            Some(v) => {
                self.errors.push(format!("`{sec}.{key}` must be an integer >= {min}, got {v}"));
                min
            }
            None => min,
        }
    }

    fn bool(&mut self, sec: &str, key: &str) -> bool {
        match self.raw(sec, key) {
            Some(Value::Boolean(b)) => *b,
            Some(v) => {
                self.errors.push(format!("`{sec}.{key}` must be true or false, got {v}"));
                false
            }
            None => false,
        }
    }

    fn string(&mut self, sec: &str, key: &str) -> String {
        match self.raw(sec, key) {
            Some(Value::String(s)) => s.clone(),
            Some(v) => {
                self.errors.push(format!("`{sec}.{key}` must be a string, got {v}"));
                String::new()
            }
            None => String::new(),
        }
    }

    fn optional_f64(&mut self, sec: &str, key: &str) -> Option<f64> {
        self.section(sec).and_then(|t| t.get(key)).map(|v| match v {
            Value::Float(x) => *x,
            Value::Integer(i) => *i as f64,
            _ => {
                self.errors.push(format!("`{sec}.{key}` must be a number"));
                f64::NAN
            }
        })
    }

    fn unknown_keys(&mut self, known: &[(&str, &[&str])]) {
        for (sec, value) in self.table {
            let Some((_, keys)) = known.iter().find(|(s, _)| s == sec) else {
                self.errors.push(format!("unknown section `{sec}`"));
                continue;
            };
            if let Value::Table(t) = value {
                for k in t.keys() {
                    if !keys.contains(&k.as_str()) {
                        self.errors.push(format!("unknown key `{sec}.{k}`"));
                    }
                }
            }
        }
    }
}

const KNOWN: &[(&str, &[&str])] = &[
    ("dimensionless", &["v0", "kappa", "lambda", "kbar"]),
    (
        "physical",
        &["mass", "gravity", "rabi_eff", "decay_wavenumber", "mod_frequency", "mod_amplitude_eps", "hbar"],
    ),
    ("initial", &["z0", "p0", "dz", "ensemble_size", "seed"]),
    (
        "run",
        &[
            "t_final",
            "steps_per_period",
            "record_every",
            "grid_z_min",
            "grid_z_max",
            "grid_points",
            "absorber",
            "absorber_fraction",
            "absorber_strength",
            "integrator",
        ],
    ),
    ("poincare", &["n_orbits", "n_periods", "z_min", "z_max"]),
    ("floquet", &["basis_dim", "grid_z_min", "grid_z_max", "grid_points", "steps_per_period"]),
    (
        "analysis",
        &[
            "n_max",
            "position_bins",
            "momentum_bin",
            "momentum_range",
            "flatness",
            "detection_level",
            "width_tolerance",
            "kbar_width_tolerance",
            "saturation_tolerance",
            "tail_start",
            "tail_floor",
            "island_phases",
            "island_heights",
            "island_bounces",
        ],
    ),
    ("output", &["dir", "svg"]),
];

/// Validates a complete table (defaults already merged) into a config.
pub fn parse_config(table: &Table) -> Result<ExperimentConfig> {
    let mut r = Reader { table, errors: Vec::new() };
    r.unknown_keys(KNOWN);

    let has_dim = table.contains_key("dimensionless");
    let has_phys = table.contains_key("physical");
    let params = match (has_dim, has_phys) {
        (true, false) => {
            let d = DimensionlessParams {
                v0: r.positive("dimensionless", "v0"),
                kappa: r.positive("dimensionless", "kappa"),
                lambda: r.f64("dimensionless", "lambda"),
                kbar: r.positive("dimensionless", "kbar"),
            };
            if d.lambda < 0.0 || !d.lambda.is_finite() && !d.lambda.is_nan() {
                r.errors.push(format!("`dimensionless.lambda` must be finite and >= 0, got {}", d.lambda));
            }
            ParamsSource::Dimensionless(d)
        }
        (false, true) => ParamsSource::Physical(PhysicalParams {
            mass: r.positive("physical", "mass"),
            gravity: r.optional_f64("physical", "gravity").unwrap_or(STANDARD_GRAVITY),
            rabi_eff: r.positive("physical", "rabi_eff"),
            decay_wavenumber: r.positive("physical", "decay_wavenumber"),
            mod_frequency: r.positive("physical", "mod_frequency"),
            mod_amplitude_eps: r.positive("physical", "mod_amplitude_eps"),
            hbar: r.optional_f64("physical", "hbar").unwrap_or(HBAR),
        }),
        (true, true) => {
            r.errors.push("give exactly one of [dimensionless] and [physical], not both".into());
            ParamsSource::Dimensionless(DimensionlessParams::mirror(0.0, 1.0))
        }
        (false, false) => {
            r.errors.push("missing section `dimensionless` (or `physical`)".into());
            ParamsSource::Dimensionless(DimensionlessParams::mirror(0.0, 1.0))
        }
    };
    if let ParamsSource::Physical(p) = &params {
        for (k, v) in [("gravity", p.gravity), ("hbar", p.hbar)] {
            if !(v.is_finite() && v > 0.0) {
                r.errors.push(format!("`physical.{k}` must be > 0, got {v}"));
            }
        }
    }

    let initial = InitialConfig {
        z0: r.finite("initial", "z0"),
        p0: r.finite("initial", "p0"),
        dz: r.positive("initial", "dz"),
        ensemble_size: r.uint("initial", "ensemble_size", 1) as usize,
        seed: r.uint("initial", "seed", 0),
    };

    let integrator = match r.string("run", "integrator").as_str() {
        "verlet" => Scheme::Verlet,
        "pefrl" => Scheme::Pefrl,
        other => {
            r.errors.push(format!("`run.integrator` must be \"verlet\" or \"pefrl\", got \"{other}\""));
            Scheme::Verlet
        }
    };
    let run = RunConfig {
        t_final: r.positive("run", "t_final"),
        steps_per_period: r.uint("run", "steps_per_period", 1),
        record_every: r.positive("run", "record_every"),
        grid_z_min: r.finite("run", "grid_z_min"),
        grid_z_max: r.finite("run", "grid_z_max"),
        grid_points: r.uint("run", "grid_points", 256) as usize,
        absorber: r.bool("run", "absorber"),
        absorber_fraction: r.positive("run", "absorber_fraction"),
        absorber_strength: r.positive("run", "absorber_strength"),
        integrator,
    };
    check_grid(&mut r.errors, "run", run.grid_z_min, run.grid_z_max, run.grid_points);
    if run.absorber_fraction >= 1.0 {
        r.errors.push("`run.absorber_fraction` must be < 1".into());
    }

    let poincare = PoincareConfig {
        n_orbits: r.uint("poincare", "n_orbits", 1) as usize,
        n_periods: r.uint("poincare", "n_periods", 1),
        z_min: r.finite("poincare", "z_min"),
        z_max: r.finite("poincare", "z_max"),
    };
    if poincare.z_max <= poincare.z_min {
        r.errors.push("`poincare.z_max` must exceed `poincare.z_min`".into());
    }

    let floquet = FloquetConfig {
        basis_dim: r.uint("floquet", "basis_dim", 1) as usize,
        grid_z_min: r.finite("floquet", "grid_z_min"),
        grid_z_max: r.finite("floquet", "grid_z_max"),
        grid_points: r.uint("floquet", "grid_points", 256) as usize,
        steps_per_period: r.uint("floquet", "steps_per_period", 1),
    };
    check_grid(&mut r.errors, "floquet", floquet.grid_z_min, floquet.grid_z_max, floquet.grid_points);
    if floquet.basis_dim > floquet.grid_points {
        r.errors.push("`floquet.basis_dim` must not exceed `floquet.grid_points`".into());
    }

    let tail_start = match r.section("analysis").and_then(|t| t.get("tail_start")) {
        Some(Value::String(s)) if s == "auto" => f64::NAN,
        Some(Value::Float(x)) if *x >= 0.0 => *x,
        Some(Value::Integer(i)) if *i >= 0 => *i as f64,
        Some(v) => {
            r.errors.push(format!("`analysis.tail_start` must be \"auto\" or a number >= 0, got {v}"));
            f64::NAN
        }
        None => {
            r.errors.push("missing key `analysis.tail_start`".into());
            f64::NAN
        }
    };
    let analysis = AnalysisConfig {
        n_max: r.uint("analysis", "n_max", 1) as usize,
        position_bins: r.uint("analysis", "position_bins", 16) as usize,
        momentum_bin: r.positive("analysis", "momentum_bin"),
        momentum_range: r.positive("analysis", "momentum_range"),
        flatness: r.positive("analysis", "flatness"),
        detection_level: r.finite("analysis", "detection_level"),
        width_tolerance: r.positive("analysis", "width_tolerance"),
        kbar_width_tolerance: r.positive("analysis", "kbar_width_tolerance"),
        saturation_tolerance: r.positive("analysis", "saturation_tolerance"),
        tail_start,
        tail_floor: r.positive("analysis", "tail_floor"),
        island_phases: r.uint("analysis", "island_phases", 1) as usize,
        island_heights: r.uint("analysis", "island_heights", 4) as usize,
        island_bounces: r.uint("analysis", "island_bounces", 2) as usize,
    };

    if analysis.position_bins > run.grid_points || !run.grid_points.is_multiple_of(analysis.position_bins) {
        r.errors.push("`analysis.position_bins` must divide `run.grid_points`".into());
    }
    if analysis.momentum_range.is_finite() && analysis.momentum_bin.is_finite()
        && (2.0 * analysis.momentum_range / analysis.momentum_bin).round() < 16.0
    {
        r.errors.push("`analysis.momentum_range` must span at least 16 momentum bins".into());
    }

    let output = OutputConfig { dir: r.string("output", "dir"), svg: r.bool("output", "svg") };

    if r.errors.is_empty() {
        Ok(ExperimentConfig { params, initial, run, poincare, floquet, analysis, output })
    } else {
        Err(Error::Config(r.errors))
    }
}

fn check_grid(errors: &mut Vec<String>, sec: &str, lo: f64, hi: f64, n: usize) {
    if lo.is_finite() && hi.is_finite() && hi <= lo {
        errors.push(format!("`{sec}.grid_z_max` must exceed `{sec}.grid_z_min`"));
    }
    if !n.is_power_of_two() {
        errors.push(format!("`{sec}.grid_points` must be a power of two, got {n}"));
    }
}

/// Loads a config: the file (or the built-in defaults), then overrides, then
/// defaults for untouched sections, then validation.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<(ExperimentConfig, Table)> {
    let mut table = match path {
        Some(p) => read_table(p)?,
        None => default_table(),
    };
    apply_overrides(&mut table, overrides)?;
    let table = with_defaults(table);
    let cfg = parse_config(&table)?;
    Ok((cfg, table))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let (cfg, _) = load(None, &[]).unwrap();
        let d = cfg.dimensionless().unwrap();
        assert_eq!((d.v0, d.kappa, d.lambda, d.kbar), (4.0, 0.5, 0.4, 1.0));
        assert_eq!(cfg.run.grid_points, 16384);
        assert!(cfg.analysis.tail_start.is_nan());
    }

    #[test]
    fn overrides_replace_values() {
        let o = vec!["dimensionless.kbar=4".to_string(), "output.dir=elsewhere".to_string()];
        let (cfg, table) = load(None, &o).unwrap();
        assert_eq!(cfg.dimensionless().unwrap().kbar, 4.0);
        assert_eq!(cfg.output.dir, "elsewhere");
        assert_eq!(table["dimensionless"]["kbar"].as_integer(), Some(4));
    }

    #[test]
    fn every_violation_is_listed() {
        let mut t = default_table();
        t["dimensionless"].as_table_mut().unwrap().remove("kappa");
        let o = vec![
            "run.grid_points=1000".to_string(),
            "initial.dz=-1".to_string(),
            "run.bogus=3".to_string(),
        ];
        apply_overrides(&mut t, &o).unwrap();
        let Err(Error::Config(errs)) = parse_config(&t) else { panic!("expected config error") };
        let all = errs.join("\n");
        for needle in ["dimensionless.kappa", "run.grid_points", "initial.dz", "run.bogus", "analysis.position_bins"] {
            assert!(all.contains(needle), "{needle} missing from {all}");
        }
        assert_eq!(errs.len(), 5, "{all}");
    }

    #[test]
    fn parameter_section_must_be_unique() {
        let mut t = default_table();
        t.insert("physical".into(), Value::Table(Table::new()));
        assert!(parse_config(&t).is_err());
        t.remove("physical");
        t.remove("dimensionless");
        let Err(Error::Config(errs)) = parse_config(&t) else { panic!() };
        assert!(errs[0].contains("dimensionless"));
    }

    #[test]
    fn malformed_override_rejected() {
        let mut t = default_table();
        assert!(apply_overrides(&mut t, &["nodot=1".into()]).is_err());
        assert!(apply_overrides(&mut t, &["run.t_final".into()]).is_err());
    }

    #[test]
    fn physical_section_converts() {
        let text = r#"
[physical]
mass = 2.21e-25
rabi_eff = 37070.8
decay_wavenumber = 2197802.2
mod_frequency = 9280.3
mod_amplitude_eps = 1.0
"#;
        let t = with_defaults(text.parse().unwrap());
        let cfg = parse_config(&t).unwrap();
        let d = cfg.dimensionless().unwrap();
        assert!((d.kbar - 4.0).abs() / 4.0 < 0.02, "{}", d.kbar);
    }
}
