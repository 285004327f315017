use std::f64::consts::{PI, TAU};

use rayon::prelude::*;

use super::{ClassicalState, Integrator, Scheme};
use crate::error::{Error, Result};
use crate::units::DimensionlessParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionPoint {
    pub orbit: usize,
    pub n: u64,
    pub z: f64,
    pub p: f64,
}

/// Stroboscopic samples at t = 2πn, n = 1..=n_periods.
#[derive(Debug, Clone, PartialEq)]
pub struct PoincareSection {
    pub points: Vec<SectionPoint>,
    pub n_orbits: usize,
    pub n_periods: u64,
    pub lambda: f64,
    /// Indices of seeds whose orbits escaped; their points are dropped.
    pub escaped: Vec<usize>,
}

/// Seeds evenly spaced on the segment from `from` to `to` (inclusive), at t = 0.
pub fn seed_line(from: (f64, f64), to: (f64, f64), n: usize) -> Vec<ClassicalState> {
    if n == 1 {
        return vec![ClassicalState::new(from.0, from.1, 0.0)];
    }
    (0..n)
        .map(|i| {
            let f = i as f64 / (n - 1) as f64;
            ClassicalState::new(from.0 + f * (to.0 - from.0), from.1 + f * (to.1 - from.1), 0.0)
        })
        .collect()
}

pub fn poincare_section(
    seeds: &[ClassicalState],
    n_periods: u64,
    integrator: &Integrator,
    d: &DimensionlessParams,
) -> Result<PoincareSection> {
    if n_periods == 0 {
        return Err(Error::param("n_periods", "must be >= 1"));
    }
    if seeds.is_empty() {
        return Err(Error::param("seeds", "no seeds given"));
    }
    if let Some(s) = seeds.iter().find(|s| s.t != 0.0) {
        return Err(Error::param("seeds", format!("seed at t = {} (must start at t = 0)", s.t)));
    }
    let orbits: Vec<Option<Vec<SectionPoint>>> = seeds
        .par_iter()
        .enumerate()
        .map(|(orbit, seed)| {
            let mut s = *seed;
            let mut pts = Vec::with_capacity(n_periods as usize);
            for n in 1..=n_periods {
                if integrator.advance(&mut s, 0.0, n as f64 * TAU, d).is_err() {
                    return None;
                }
                pts.push(SectionPoint { orbit, n, z: s.z, p: s.p });
            }
            Some(pts)
        })
        .collect();

    let mut points = Vec::new();
    let mut escaped = Vec::new();
    for (i, o) in orbits.into_iter().enumerate() {
        match o {
            Some(pts) => points.extend(pts),
            None => escaped.push(i),
        }
    }
    if escaped.len() == seeds.len() {
        return Err(Error::AllEscaped { n_orbits: seeds.len() });
    }
    Ok(PoincareSection { points, n_orbits: seeds.len(), n_periods, lambda: d.lambda, escaped })
}

/// Primary resonance N: the bounce period 2p equals N drive periods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonanceCenter {
    pub index: usize,
    /// Launch momentum πN.
    pub momentum: f64,
    /// Turning height (πN)²/2.
    pub height: f64,
}

pub fn resonance_centers(n_max: usize) -> Vec<ResonanceCenter> {
    (1..=n_max)
        .map(|n| {
            let p = PI * n as f64;
            ResonanceCenter { index: n, momentum: p, height: 0.5 * p * p }
        })
        .collect()
}

/// Bounce period of the undriven mirror for an orbit with turning height `h`,
/// twice the fall time from the apex to the lower turning point.
pub fn bounce_period(h: f64, d: &DimensionlessParams) -> Result<f64> {
    let floor = crate::model::equilibrium_height(d);
    if !(h > floor) {
        return Err(Error::param("h", format!("must exceed the equilibrium height {floor}")));
    }
    let d0 = d.with_lambda(0.0);
    let integ = Integrator::new(1e-3)?.with_scheme(Scheme::Pefrl);
    let mut s = ClassicalState::new(h, 0.0, 0.0);
    // Leave the apex before watching for the lower turning point.
    integ.advance(&mut s, 0.0, integ.dt, &d0)?;
    loop {
        let prev = s;
        integ.advance(&mut s, 0.0, prev.t + integ.dt, &d0)?;
        if prev.p < 0.0 && s.p >= 0.0 {
            let frac = -prev.p / (s.p - prev.p);
            return Ok(2.0 * (prev.t + frac * integ.dt));
        }
    }
}

/// Turning height at which the undriven bounce period equals N drive periods,
/// or `None` when N periods are shorter than the small-oscillation period.
pub fn soft_wall_resonance_height(index: usize, d: &DimensionlessParams) -> Result<Option<f64>> {
    let target = TAU * index as f64;
    let floor = crate::model::equilibrium_height(d);
    let mut lo = floor + 1e-6;
    if bounce_period(lo, d)? >= target {
        return Ok(None);
    }
    let mut hi = lo + 1.0;
    while bounce_period(hi, d)? < target {
        hi = lo + 2.0 * (hi - lo);
    }
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if bounce_period(mid, d)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// √(2H₀) with H₀ the undriven energy at (z, p): the speed a free fall with
/// that energy reaches at z = 0. Conserved when λ = 0.
pub fn launch_momentum(z: f64, p: f64, d: &DimensionlessParams) -> f64 {
    (2.0 * crate::model::energy(z, p, 0.0, &d.with_lambda(0.0))).max(0.0).sqrt()
}

/// Largest change of the launch momentum over `n_periods` stroboscopic
/// samples. Escaped orbits report infinity.
pub fn transport_extent(
    seed: ClassicalState,
    n_periods: u64,
    integrator: &Integrator,
    d: &DimensionlessParams,
) -> f64 {
    let start = launch_momentum(seed.z, seed.p, d);
    let mut s = seed;
    let mut worst: f64 = 0.0;
    let origin = seed.t;
    for n in 1..=n_periods {
        if integrator.advance(&mut s, origin, origin + n as f64 * TAU, d).is_err() {
            return f64::INFINITY;
        }
        worst = worst.max((launch_momentum(s.z, s.p, d) - start).abs());
    }
    worst
}

/// Largest `transport_extent` over apex seeds in the gap below the second
/// resonance: heights from π²/2 up to the midpoint between π²/2 and the
/// soft-wall N = 2 height, each launched at `n_phases` drive phases.
pub fn gap_transport(
    n_heights: usize,
    n_phases: usize,
    n_periods: u64,
    integrator: &Integrator,
    d: &DimensionlessParams,
) -> Result<f64> {
    if n_heights < 2 || n_phases == 0 {
        return Err(Error::param("seeds", "need at least two heights and one phase"));
    }
    let h1 = 0.5 * PI * PI;
    let h2 = soft_wall_resonance_height(2, d)?
        .ok_or_else(|| Error::Analysis("no second resonance for these parameters".into()))?;
    let top = 0.5 * (h1 + h2);
    let seeds: Vec<ClassicalState> = (0..n_heights)
        .flat_map(|i| {
            let h = h1 + (top - h1) * i as f64 / (n_heights - 1) as f64;
            (0..n_phases).map(move |j| ClassicalState::new(h, 0.0, TAU * j as f64 / n_phases as f64))
        })
        .collect();
    let extents: Vec<f64> =
        seeds.par_iter().map(|&s| transport_extent(s, n_periods, integrator, d)).collect();
    Ok(extents.into_iter().fold(0.0, f64::max))
}

/// Controls the search for a resonance island.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IslandScan {
    /// Number of seed phases tried over one drive period.
    pub n_phases: usize,
    /// Number of apex heights per phase.
    pub n_heights: usize,
    /// Bounces followed per seed.
    pub n_bounces: usize,
    /// Bisection steps used to sharpen each island edge.
    pub refine_steps: usize,
    pub integrator: Integrator,
}

impl Default for IslandScan {
    fn default() -> Self {
        IslandScan {
            n_phases: 24,
            n_heights: 64,
            n_bounces: 40,
            refine_steps: 12,
            integrator: Integrator { dt: TAU / 500.0, ..Integrator::default() },
        }
    }
}

/// Measured extent of a resonance island, in turning-height coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Island {
    pub index: usize,
    pub found: bool,
    /// Midpoint of the trapped apex heights along the widest cut.
    pub center_height: f64,
    pub half_width: f64,
    /// Drive phase of the apex for the widest cut.
    pub phase: f64,
}

impl Island {
    pub fn height_interval(&self) -> (f64, f64) {
        (self.center_height - self.half_width, self.center_height + self.half_width)
    }

    /// The same interval mapped to launch momentum √(2h).
    pub fn momentum_interval(&self) -> (f64, f64) {
        let (lo, hi) = self.height_interval();
        ((2.0 * lo.max(0.0)).sqrt(), (2.0 * hi).sqrt())
    }
}

/// Whether an orbit started at its apex (z = h, p = 0) at time `phase` stays
/// phase-locked to resonance `index`: its bounce times, shifted by 2πN per
/// bounce, span less than one drive period.
fn is_trapped(
    index: usize,
    h: f64,
    phase: f64,
    scan: &IslandScan,
    d: &DimensionlessParams,
) -> bool {
    let integ = &scan.integrator;
    let period = TAU * index as f64;
    let mut s = ClassicalState::new(h, 0.0, phase);
    let mut prev_p = s.p;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut bounces = 0usize;
    // A bounce is the sign change of p from negative to positive.
    let t_limit = phase + period * (scan.n_bounces as f64 + 2.0) * 1.5;
    while bounces < scan.n_bounces {
        let t_next = s.t + integ.dt;
        if t_next > t_limit || integ.advance(&mut s, phase, t_next, d).is_err() {
            return false;
        }
        if prev_p < 0.0 && s.p >= 0.0 {
            let shifted = s.t - period * bounces as f64;
            lo = lo.min(shifted);
            hi = hi.max(shifted);
            if hi - lo >= TAU {
                return false;
            }
            bounces += 1;
        }
        prev_p = s.p;
    }
    true
}

/// Locates the island of resonance `index` by scanning apex seeds around the
/// soft-wall resonance height, keeping the drive phase whose cut through the
/// trapped region is widest, and bisecting both edges of that cut.
pub fn measure_island(index: usize, d: &DimensionlessParams, scan: &IslandScan) -> Result<Island> {
    if index == 0 {
        return Err(Error::param("index", "resonance index starts at 1"));
    }
    let Some(hc) = soft_wall_resonance_height(index, d)? else {
        return Ok(Island { index, found: false, center_height: f64::NAN, half_width: 0.0, phase: 0.0 });
    };
    let below = match index {
        1 => None,
        _ => soft_wall_resonance_height(index - 1, d)?,
    };
    let above = soft_wall_resonance_height(index + 1, d)?.unwrap_or(f64::INFINITY);
    let span = match below {
        Some(b) => 0.5 * (hc - b).min(above - hc),
        None => 0.5 * (above - hc),
    };
    let h_lo = (hc - span).max(crate::model::equilibrium_height(d) + 1e-3);
    let h_hi = hc + span;
    let nh = scan.n_heights.max(2);
    let heights: Vec<f64> =
        (0..nh).map(|i| h_lo + (h_hi - h_lo) * i as f64 / (nh - 1) as f64).collect();
    let phases: Vec<f64> = (0..scan.n_phases).map(|i| TAU * i as f64 / scan.n_phases as f64).collect();

    let grid: Vec<Vec<bool>> = phases
        .par_iter()
        .map(|&ph| heights.iter().map(|&h| is_trapped(index, h, ph, scan, d)).collect())
        .collect();

    // Widest contiguous trapped run over all phases.
    let mut best: Option<(usize, usize, usize)> = None;
    for (pi, row) in grid.iter().enumerate() {
        let mut i = 0;
        while i < row.len() {
            if row[i] {
                let start = i;
                while i + 1 < row.len() && row[i + 1] {
                    i += 1;
                }
                let len = i - start + 1;
                if best.is_none_or(|(_, s, e)| len > e - s + 1) {
                    best = Some((pi, start, i));
                }
            }
            i += 1;
        }
    }
    let Some((pi, start, end)) = best else {
        return Ok(Island { index, found: false, center_height: hc, half_width: 0.0, phase: 0.0 });
    };
    let phase = phases[pi];
    let trapped = |h: f64| is_trapped(index, h, phase, scan, d);
    let bisect = |mut inside: f64, mut outside: f64| {
        for _ in 0..scan.refine_steps {
            let mid = 0.5 * (inside + outside);
            if trapped(mid) {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        0.5 * (inside + outside)
    };
    let lower = if start == 0 { heights[0] } else { bisect(heights[start], heights[start - 1]) };
    let upper = if end + 1 == nh { heights[nh - 1] } else { bisect(heights[end], heights[end + 1]) };
    Ok(Island {
        index,
        found: true,
        center_height: 0.5 * (lower + upper),
        half_width: 0.5 * (upper - lower),
        phase,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::energy;

    #[test]
    fn centers_follow_bounce_resonance() {
        let c = resonance_centers(3);
        assert_eq!(c.len(), 3);
        assert!((c[0].momentum - PI).abs() < 1e-15);
        assert!((c[0].height - PI * PI / 2.0).abs() < 1e-13);
        assert!((c[1].height - 2.0 * PI * PI).abs() < 1e-13);
        assert!((c[1].height - 19.74).abs() < 0.01);
        assert!((c[2].height - 44.41).abs() < 0.01);
    }

    #[test]
    fn unmodulated_section_points_stay_on_energy_contours() {
        let d = DimensionlessParams::mirror(0.0, 1.0);
        let seeds = seed_line((3.0, 0.0), (30.0, 0.0), 5);
        let integ = Integrator { dt: 1e-3, ..Integrator::default() };
        let sec = poincare_section(&seeds, 20, &integ, &d).unwrap();
        assert_eq!(sec.points.len(), 100);
        for pt in &sec.points {
            let s = seeds[pt.orbit];
            let h0 = energy(s.z, s.p, 0.0, &d);
            let h = energy(pt.z, pt.p, pt.n as f64 * TAU, &d);
            assert!(((h - h0) / h0).abs() < 1e-6);
        }
    }

    #[test]
    fn section_rejects_bad_input() {
        let d = DimensionlessParams::mirror(0.4, 1.0);
        let integ = Integrator::default();
        assert!(poincare_section(&[], 3, &integ, &d).is_err());
        let seeds = seed_line((3.0, 0.0), (30.0, 0.0), 2);
        assert!(poincare_section(&seeds, 0, &integ, &d).is_err());
        let late = [ClassicalState::new(5.0, 0.0, 1.0)];
        assert!(poincare_section(&late, 3, &integ, &d).is_err());
    }

    #[test]
    fn all_escaped_is_reported_distinctly() {
        let d = DimensionlessParams::mirror(0.4, 1.0);
        let integ = Integrator { dt: 0.01, ..Integrator::default() };
        let seeds = [ClassicalState::new(3999.0, 150.0, 0.0), ClassicalState::new(10.0, -199.95, 0.0)];
        let err = poincare_section(&seeds, 2, &integ, &d).unwrap_err();
        assert!(matches!(err, Error::AllEscaped { n_orbits: 2 }));
    }

    #[test]
    fn partial_escape_drops_orbit() {
        let d = DimensionlessParams::mirror(0.4, 1.0);
        let integ = Integrator { dt: 0.01, ..Integrator::default() };
        let seeds = [ClassicalState::new(10.0, 0.0, 0.0), ClassicalState::new(10.0, -199.95, 0.0)];
        let sec = poincare_section(&seeds, 2, &integ, &d).unwrap();
        assert_eq!(sec.escaped, vec![1]);
        assert!(sec.points.iter().all(|p| p.orbit == 0));
    }

    #[test]
    fn launch_momentum_of_apex() {
        let free = DimensionlessParams { v0: 0.0, kappa: 0.5, lambda: 0.3, kbar: 1.0 };
        assert!((launch_momentum(2.0 * PI * PI, 0.0, &free) - 2.0 * PI).abs() < 1e-12);
        let d = DimensionlessParams::mirror(0.3, 1.0);
        let inside = launch_momentum(-2.0, 0.1, &d);
        assert!((inside * inside / 2.0 - (0.005 - 2.0 + 4.0 * 1f64.exp())).abs() < 1e-12);
    }

    #[test]
    fn bounce_period_limits() {
        let d = DimensionlessParams::mirror(0.0, 1.0);
        let zs = crate::model::equilibrium_height(&d);
        // Small oscillations about the equilibrium have angular frequency √κ.
        let t_small = bounce_period(zs + 1e-4, &d).unwrap();
        assert!((t_small - TAU / 0.5f64.sqrt()).abs() < 1e-2, "{t_small}");
        assert!(bounce_period(zs - 0.1, &d).is_err());
    }

    #[test]
    fn soft_wall_resonances_sit_below_hard_wall_heights() {
        let d = DimensionlessParams::mirror(0.1, 1.0);
        assert_eq!(soft_wall_resonance_height(1, &d).unwrap(), None);
        let h2 = soft_wall_resonance_height(2, &d).unwrap().unwrap();
        let h3 = soft_wall_resonance_height(3, &d).unwrap().unwrap();
        // Apex energy h + V₀e^{−κh} = 13.4022 from direct quadrature of the period.
        assert!((h2 - 13.3972).abs() < 2e-3, "{h2}");
        assert!((h3 - 36.729).abs() < 2e-3, "{h3}");
        assert!((bounce_period(h2, &d).unwrap() - 2.0 * TAU).abs() < 1e-6);
    }
}
