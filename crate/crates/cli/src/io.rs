//! CSV, manifest and SVG writers. Numbers are written in Rust's shortest
//! round-trip form, so identical inputs give identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fermi_core::analysis::{ComparisonReport, DecayFit, PlateauReport};
use fermi_core::classical::{Island, MomentTrace, PoincareSection};
use fermi_core::floquet::QuasiSpectrum;
use fermi_core::quantum::{DistributionProfile, ObservableTrace, Space};
use fermi_core::{Error, Result};

/// Collects the files written into one output directory.
pub struct OutputDir {
    pub root: PathBuf,
    pub written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(OutputDir { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn csv<R: AsRef<[String]>>(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<()> {
        let mut w = csv::Writer::from_path(self.path(name))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r.as_ref())?;
        }
        w.flush()?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<()> {
        std::fs::write(self.path(name), body)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn bytes(&mut self, name: &str, body: &[u8]) -> Result<()> {
        std::fs::write(self.path(name), body)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn profile(&mut self, name: &str, p: &DistributionProfile) -> Result<()> {
        let rows = p.axis.iter().zip(&p.prob).map(|(x, y)| vec![num(*x), num(*y)]);
        self.csv(name, &["axis", "prob"], rows)
    }

    pub fn section(&mut self, name: &str, s: &PoincareSection) -> Result<()> {
        let rows = s.points.iter().map(|q| vec![q.n.to_string(), num(q.z), num(q.p)]);
        self.csv(name, &["n", "z", "p"], rows)
    }

    pub fn moments(&mut self, name: &str, m: &MomentTrace) -> Result<()> {
        let rows = (0..m.len())
            .map(|i| vec![num(m.times[i]), num(m.mean_z[i]), num(m.mean_p[i]), num(m.var_z[i]), num(m.var_p[i])]);
        self.csv(name, &["t", "mean_z", "mean_p", "var_z", "var_p"], rows)
    }

    pub fn trace(&mut self, name: &str, t: &ObservableTrace) -> Result<()> {
        let rows = (0..t.len()).map(|i| {
            vec![num(t.times[i]), num(t.norm[i]), num(t.mean_z[i]), num(t.mean_p[i]), num(t.mean_p2[i]), num(t.energy[i])]
        });
        self.csv(name, &["t", "norm", "mean_z", "mean_p", "mean_p2", "energy"], rows)
    }

    pub fn spectrum(&mut self, name: &str, s: &QuasiSpectrum) -> Result<()> {
        let rows = (0..s.eigenphases.len()).map(|i| vec![i.to_string(), num(s.eigenphases[i]), num(s.ipr[i])]);
        self.csv(name, &["index", "eigenphase", "ipr"], rows)
    }

    pub fn islands(&mut self, name: &str, islands: &[Island]) -> Result<()> {
        let rows = islands.iter().map(|i| {
            let (lo, hi) = if i.found { i.height_interval() } else { (f64::NAN, f64::NAN) };
            vec![i.index.to_string(), i.found.to_string(), num(i.center_height), num(i.half_width), num(lo), num(hi), num(i.phase)]
        });
        self.csv(name, &["index", "found", "center_height", "half_width", "z_lo", "z_hi", "phase"], rows)
    }

    pub fn plateaus(&mut self, name: &str, r: &PlateauReport) -> Result<()> {
        let rows = r.plateaus.iter().map(|p| {
            vec![
                p.resonance_index.to_string(),
                num(p.interval.0),
                num(p.interval.1),
                num(p.mean_log10_level),
                num(p.width),
                p.detected.to_string(),
            ]
        });
        self.csv(name, &["resonance", "lo", "hi", "mean_log10_level", "width", "detected"], rows)
    }

    pub fn fits(&mut self, name: &str, fits: &[(&str, DecayFit)]) -> Result<()> {
        let rows = fits.iter().map(|(label, f)| {
            vec![
                label.to_string(),
                f.model.as_str().to_string(),
                num(f.coefficient),
                num(f.intercept),
                num(f.r_squared),
                num(f.fit_range.0),
                num(f.fit_range.1),
                f.n_points.to_string(),
            ]
        });
        self.csv(name, &["profile", "model", "coefficient", "intercept", "r_squared", "lo", "hi", "n_points"], rows)
    }

    pub fn comparison(&mut self, name: &str, c: &ComparisonReport) -> Result<()> {
        let rows = c.resonances.iter().map(|r| {
            vec![
                r.resonance_index.to_string(),
                r.location_match.to_string(),
                r.width_match.to_string(),
                num(r.center_shift),
                num(r.width_ratio),
                num(r.height_ratio),
            ]
        });
        self.csv(name, &["resonance", "location_match", "width_match", "center_shift", "width_ratio", "height_ratio"], rows)
    }

    /// Log-scale plot of one or more profiles.
    pub fn svg_profiles(&mut self, name: &str, title: &str, profiles: &[(&str, &DistributionProfile)]) -> Result<()> {
        let body = svg_log_plot(title, profiles);
        self.text(name, &body)
    }

    /// Writes `manifest.toml`: the command, every resolved setting and the
    /// files produced, in a fixed order.
    pub fn manifest(&mut self, command: &str, threads: usize, resolved: &toml::Table) -> Result<()> {
        let mut m = toml::Table::new();
        let mut run = toml::Table::new();
        run.insert("command".into(), command.into());
        run.insert("threads".into(), (threads as i64).into());
        run.insert("version".into(), env!("CARGO_PKG_VERSION").into());
        m.insert("invocation".into(), run.into());
        m.insert("config".into(), resolved.clone().into());
        let mut files: Vec<String> = self.written.clone();
        files.sort();
        files.dedup();
        let mut out = toml::Table::new();
        for f in &files {
            let len = std::fs::metadata(self.path(f))?.len();
            out.insert(f.clone(), (len as i64).into());
        }
        m.insert("outputs".into(), out.into());
        let text = toml::to_string(&m).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(self.path("manifest.toml"), text)?;
        Ok(())
    }
}

pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:e}")
    }
}

/// Reads an `axis,prob` CSV back into a profile.
pub fn read_profile(path: &Path, space: Space) -> Result<DistributionProfile> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["axis", "prob"] {
        return Err(Error::Format(format!("{}: expected header axis,prob", path.display())));
    }
    let (mut axis, mut prob) = (Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Format(format!("{}: bad number on row {}", path.display(), line + 2)))
        };
        axis.push(parse(0)?);
        prob.push(parse(1)?);
    }
    if axis.len() < 2 {
        return Err(Error::Format(format!("{}: need at least two rows", path.display())));
    }
    let width = (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64;
    let uniform = axis.windows(2).all(|w| ((w[1] - w[0]) - width).abs() <= 1e-6 * width.abs());
    if !uniform {
        return Err(Error::Format(format!("{}: axis is not uniformly spaced", path.display())));
    }
    DistributionProfile::from_density(space, f64::NAN, axis, prob, width)
}

fn svg_log_plot(title: &str, profiles: &[(&str, &DistributionProfile)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 50.0;
    const COLORS: [&str; 4] = ["#1f4e9c", "#c0392b", "#2e8b57", "#8e44ad"];
    let floor: f64 = -30.0;
    let mut x_lo = f64::INFINITY;
    let mut x_hi = f64::NEG_INFINITY;
    let mut y_hi = floor + 1.0;
    for (_, p) in profiles {
        x_lo = x_lo.min(p.axis[0]);
        x_hi = x_hi.max(p.axis[p.axis.len() - 1]);
        for &v in &p.prob {
            if v > 0.0 {
                y_hi = y_hi.max(v.log10().ceil());
            }
        }
    }
    let sx = |x: f64| M + (x - x_lo) / (x_hi - x_lo) * (W - 2.0 * M);
    let sy = |y: f64| H - M - (y - floor) / (y_hi - floor) * (H - 2.0 * M);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, W / 2.0, title);
    let _ = writeln!(
        s,
        r#"<path d="M{M} {} V{} H{}" stroke="black" fill="none"/>"#,
        M,
        H - M,
        W - M
    );
    let mut y = floor;
    while y <= y_hi {
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">1e{}</text>"#, M - 4.0, sy(y) + 4.0, y);
        y += 5.0;
    }
    for k in 0..=4 {
        let x = x_lo + (x_hi - x_lo) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{:.1}</text>"#, sx(x), H - M + 16.0, x);
    }
    for (i, (label, p)) in profiles.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = String::new();
        for (x, v) in p.axis.iter().zip(&p.prob) {
            let ly = if *v > 0.0 { v.log10().max(floor) } else { floor };
            let _ = write!(d, "{}{:.1} {:.1}", if d.is_empty() { "M" } else { " L" }, sx(*x), sy(ly));
        }
        let _ = writeln!(s, r#"<path d="{d}" stroke="{color}" fill="none" stroke-width="1"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="{}" fill="{color}">{label}</text>"#, W - M - 120.0, M + 14.0 * i as f64);
    }
    s.push_str("</svg>\n");
    s
}
