use crate::classical::Island;
use crate::error::{Error, Result};
use crate::quantum::{DistributionProfile, Space};

/// Axis interval covered by a resonance island.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonanceWindow {
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
}

impl ResonanceWindow {
    /// The island's turning-height interval for position profiles, or its
    /// launch-momentum interval for momentum profiles. `None` if the island
    /// was not found.
    pub fn from_island(island: &Island, space: Space) -> Option<Self> {
        if !island.found {
            return None;
        }
        let (lo, hi) = match space {
            Space::Position => island.height_interval(),
            Space::Momentum => island.momentum_interval(),
        };
        Some(ResonanceWindow { index: island.index, lo, hi })
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateauParams {
    /// Largest deviation in decades from the plateau level.
    pub flatness: f64,
    /// Densities are floored here before taking logarithms.
    pub floor: f64,
    /// Plateaus whose level lies below this log10 density do not count as
    /// detected (numerical noise floor).
    pub detection_level: f64,
}

impl Default for PlateauParams {
    fn default() -> Self {
        PlateauParams { flatness: 0.5, floor: 1e-300, detection_level: -20.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plateau {
    pub resonance_index: usize,
    /// Island interval the level was averaged over.
    pub window: (f64, f64),
    /// Flat region around the island, in bin edges.
    pub interval: (f64, f64),
    /// Mean log10 density over the island window.
    pub mean_log10_level: f64,
    pub width: f64,
    pub detected: bool,
}

impl Plateau {
    pub fn center(&self) -> f64 {
        0.5 * (self.interval.0 + self.interval.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlateauReport {
    pub space: Space,
    /// Ordered by position on the axis, with disjoint intervals.
    pub plateaus: Vec<Plateau>,
    /// Resonances without a plateau, with the reason.
    pub skipped: Vec<(usize, String)>,
}

impl PlateauReport {
    pub fn get(&self, index: usize) -> Option<&Plateau> {
        self.plateaus.iter().find(|p| p.resonance_index == index)
    }

    pub fn detected_count(&self) -> usize {
        self.plateaus.iter().filter(|p| p.detected).count()
    }
}

/// For each resonance window, averages log10 density over the window and
/// grows the flat region around it: starting from the window bin nearest the
/// window centre that lies within `flatness` of the level, bins are added on
/// either side while they stay within `flatness`. Growth stops halfway
/// between neighbouring windows, which keeps the regions disjoint.
pub fn detect_plateaus(
    profile: &DistributionProfile,
    windows: &[ResonanceWindow],
    params: &PlateauParams,
) -> Result<PlateauReport> {
    if !(params.flatness > 0.0) || !(params.floor > 0.0) {
        return Err(Error::param("plateau", "flatness and floor must be positive"));
    }
    for w in windows {
        if !(w.hi > w.lo) {
            return Err(Error::param("windows", format!("resonance {} has an empty interval", w.index)));
        }
    }
    for pair in windows.windows(2) {
        if pair[1].lo < pair[0].hi {
            return Err(Error::param("windows", "resonance windows must be ordered and disjoint"));
        }
    }
    let logs: Vec<f64> = profile.prob.iter().map(|p| p.max(params.floor).log10()).collect();
    let axis = &profile.axis;
    let half = 0.5 * profile.width;
    let mut report = PlateauReport { space: profile.space, plateaus: Vec::new(), skipped: Vec::new() };

    for (i, w) in windows.iter().enumerate() {
        let inside: Vec<usize> = (0..axis.len()).filter(|&j| axis[j] >= w.lo && axis[j] <= w.hi).collect();
        if inside.is_empty() {
            report.skipped.push((w.index, "window outside the profile axis".into()));
            continue;
        }
        let level = inside.iter().map(|&j| logs[j]).sum::<f64>() / inside.len() as f64;
        let left = if i > 0 { 0.5 * (windows[i - 1].hi + w.lo) } else { f64::NEG_INFINITY };
        let right = if i + 1 < windows.len() { 0.5 * (w.hi + windows[i + 1].lo) } else { f64::INFINITY };
        let in_bounds = |j: usize| axis[j] >= left && axis[j] < right;
        let flat = |j: usize| (logs[j] - level).abs() < params.flatness;
        let center = w.center();
        let seed = inside
            .iter()
            .copied()
            .filter(|&j| flat(j) && in_bounds(j))
            .min_by(|&a, &b| (axis[a] - center).abs().total_cmp(&(axis[b] - center).abs()));
        let Some(seed) = seed else {
            report.skipped.push((w.index, "no bin within the flatness band".into()));
            continue;
        };
        let (mut l, mut r) = (seed, seed);
        while l > 0 && in_bounds(l - 1) && flat(l - 1) {
            l -= 1;
        }
        while r + 1 < axis.len() && in_bounds(r + 1) && flat(r + 1) {
            r += 1;
        }
        let interval = (axis[l] - half, axis[r] + half);
        report.plateaus.push(Plateau {
            resonance_index: w.index,
            window: (w.lo, w.hi),
            interval,
            mean_log10_level: level,
            width: interval.1 - interval.0,
            detected: level >= params.detection_level,
        });
    }
    Ok(report)
}
