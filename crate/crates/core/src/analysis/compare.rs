use super::plateau::{detect_plateaus, PlateauParams, PlateauReport, ResonanceWindow};
use crate::error::{Error, Result};
use crate::quantum::{DistributionProfile, Space};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonanceComparison {
    pub resonance_index: usize,
    /// Plateau centres differ by at most `tolerance` quantum plateau widths.
    pub location_match: bool,
    /// Plateau widths agree within `tolerance` (relative).
    pub width_match: bool,
    pub center_shift: f64,
    /// Classical width over quantum width.
    pub width_ratio: f64,
    /// Classical over quantum plateau density, 10^(level_c − level_q).
    pub height_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub space: Space,
    pub tolerance: f64,
    pub resonances: Vec<ResonanceComparison>,
    pub classical: PlateauReport,
    pub quantum: PlateauReport,
}

impl ComparisonReport {
    pub fn get(&self, index: usize) -> Option<&ResonanceComparison> {
        self.resonances.iter().find(|r| r.resonance_index == index)
    }
}

/// Detects plateaus in both profiles over the same resonance windows and
/// compares them resonance by resonance.
pub fn compare_profiles(
    classical: &DistributionProfile,
    quantum: &DistributionProfile,
    windows: &[ResonanceWindow],
    params: &PlateauParams,
    tolerance: f64,
) -> Result<ComparisonReport> {
    if classical.space != quantum.space {
        return Err(Error::Analysis(format!(
            "cannot compare a {} profile with a {} profile",
            classical.space.as_str(),
            quantum.space.as_str()
        )));
    }
    let (c_lo, c_hi) = extent(classical);
    let (q_lo, q_hi) = extent(quantum);
    if c_hi <= q_lo || q_hi <= c_lo {
        return Err(Error::Analysis("profile axes do not overlap".into()));
    }
    let c = detect_plateaus(classical, windows, params)?;
    let q = detect_plateaus(quantum, windows, params)?;
    let resonances = q
        .plateaus
        .iter()
        .filter_map(|pq| {
            let pc = c.get(pq.resonance_index)?;
            let shift = pc.center() - pq.center();
            let width_ratio = pc.width / pq.width;
            Some(ResonanceComparison {
                resonance_index: pq.resonance_index,
                location_match: shift.abs() <= tolerance * pq.width,
                width_match: (width_ratio - 1.0).abs() <= tolerance,
                center_shift: shift,
                width_ratio,
                height_ratio: 10f64.powf(pc.mean_log10_level - pq.mean_log10_level),
            })
        })
        .collect();
    Ok(ComparisonReport { space: quantum.space, tolerance, resonances, classical: c, quantum: q })
}

fn extent(p: &DistributionProfile) -> (f64, f64) {
    let h = 0.5 * p.width;
    (p.axis.first().map_or(0.0, |x| x - h), p.axis.last().map_or(0.0, |x| x + h))
}

/// Plateau structure of the same run at two values of k̄.
#[derive(Debug, Clone, PartialEq)]
pub struct KbarScanReport {
    pub kbar_low: f64,
    pub kbar_high: f64,
    pub low: PlateauReport,
    pub high: PlateauReport,
    pub reference: usize,
    /// Width ratio high/low at the reference resonance.
    pub width_ratio: Option<f64>,
    pub widths_agree: bool,
    /// Plateau levels (log10) at the reference resonance.
    pub level_low: Option<f64>,
    pub level_high: Option<f64>,
    pub higher_plateau: bool,
    pub count_low: usize,
    pub count_high: usize,
    pub more_plateaus: bool,
}

/// Compares plateau widths, heights and counts between a small and a large
/// k̄. Missing plateaus at the reference resonance leave its flags false.
pub fn kbar_scan_report(
    low: (&DistributionProfile, f64),
    high: (&DistributionProfile, f64),
    windows: &[ResonanceWindow],
    params: &PlateauParams,
    width_tolerance: f64,
    reference: usize,
) -> Result<KbarScanReport> {
    let rl = detect_plateaus(low.0, windows, params)?;
    let rh = detect_plateaus(high.0, windows, params)?;
    let pl = rl.get(reference).copied();
    let ph = rh.get(reference).copied();
    let width_ratio = pl.zip(ph).map(|(a, b)| b.width / a.width);
    let level_low = pl.map(|p| p.mean_log10_level);
    let level_high = ph.map(|p| p.mean_log10_level);
    let (count_low, count_high) = (rl.detected_count(), rh.detected_count());
    Ok(KbarScanReport {
        kbar_low: low.1,
        kbar_high: high.1,
        reference,
        width_ratio,
        widths_agree: width_ratio.is_some_and(|r| (r - 1.0).abs() <= width_tolerance),
        level_low,
        level_high,
        higher_plateau: level_low.zip(level_high).is_some_and(|(a, b)| b > a),
        count_low,
        count_high,
        more_plateaus: count_high >= count_low,
        low: rl,
        high: rh,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn steps(e1: f64, e2: f64) -> DistributionProfile {
        let axis: Vec<f64> = (0..240).map(|j| 0.125 + 0.25 * j as f64).collect();
        let density = axis
            .iter()
            .map(|&x| if x < e1 { 1e-1 } else if x < e2 { 1e-4 } else { 1e-9 })
            .collect();
        DistributionProfile::from_density(Space::Position, 0.0, axis, density, 0.25).unwrap()
    }

    fn windows() -> Vec<ResonanceWindow> {
        vec![
            ResonanceWindow { index: 2, lo: 14.0, hi: 18.0 },
            ResonanceWindow { index: 3, lo: 40.0, hi: 50.0 },
        ]
    }

    #[test]
    fn identical_inputs_match() {
        let p = steps(10.0, 30.0);
        let r = compare_profiles(&p, &p, &windows(), &PlateauParams::default(), 0.2).unwrap();
        assert_eq!(r.resonances.len(), 2);
        for c in &r.resonances {
            assert!(c.location_match && c.width_match);
            assert_eq!(c.width_ratio, 1.0);
            assert_eq!(c.height_ratio, 1.0);
        }
    }

    #[test]
    fn shifted_copy_fails_location() {
        // Quantum plateau (10, 29), classical (2, 19).
        let q = steps(10.0, 30.0);
        let c = steps(2.0, 19.0);
        let r = compare_profiles(&c, &q, &windows(), &PlateauParams::default(), 0.2).unwrap();
        let two = r.get(2).unwrap();
        assert!(!two.location_match);
        assert!((two.center_shift + 9.0).abs() < 1e-12);
        assert!((two.width_ratio - 17.0 / 19.0).abs() < 1e-12);
        assert!(r.get(3).unwrap().location_match);
    }

    #[test]
    fn mismatched_spaces_are_rejected() {
        let p = steps(10.0, 30.0);
        let mut m = p.clone();
        m.space = Space::Momentum;
        assert!(compare_profiles(&p, &m, &windows(), &PlateauParams::default(), 0.2).is_err());
    }

    #[test]
    fn kbar_scan_with_single_plateau() {
        let w = vec![ResonanceWindow { index: 2, lo: 14.0, hi: 18.0 }];
        let low = steps(10.0, 30.0);
        let r = kbar_scan_report((&low, 1.0), (&low, 4.0), &w, &PlateauParams::default(), 0.25, 2).unwrap();
        assert_eq!((r.count_low, r.count_high), (1, 1));
        assert!(r.more_plateaus && r.widths_agree);
        assert!(!r.higher_plateau);
    }
}
