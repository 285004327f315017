//! Diagnostics on distribution profiles: plateaus over resonance islands,
//! decay-law fits and classical/quantum comparisons.

mod compare;
mod fit;
mod plateau;

pub use compare::{compare_profiles, kbar_scan_report, ComparisonReport, KbarScanReport, ResonanceComparison};
pub use fit::{fit_decay, positive_tail_range, DecayFit, DecayModel};
pub use plateau::{detect_plateaus, Plateau, PlateauParams, PlateauReport, ResonanceWindow};

use crate::classical::Ensemble;
use crate::error::{Error, Result};
use crate::quantum::{DistributionProfile, Space};

/// Normalized histogram of the live particles' positions or momenta over
/// `bins` equal bins spanning `range` (default: the sample extent).
pub fn histogram_ensemble(
    e: &Ensemble,
    space: Space,
    bins: usize,
    range: Option<(f64, f64)>,
) -> Result<DistributionProfile> {
    if bins < 16 {
        return Err(Error::param("bins", format!("need at least 16 bins, got {bins}")));
    }
    let values: Vec<f64> = e
        .live()
        .map(|s| match space {
            Space::Position => s.z,
            Space::Momentum => s.p,
        })
        .collect();
    if values.is_empty() {
        return Err(Error::Analysis("ensemble has no live particles".into()));
    }
    let (lo, hi) = match range {
        Some(r) => r,
        None => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            // Widen degenerate or exact-edge samples so the maximum lands inside.
            let pad = 1e-9 * (hi - lo).abs().max(1.0);
            (lo - pad, hi + pad)
        }
    };
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::param("range", format!("invalid histogram range ({lo}, {hi})")));
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0.0; bins];
    for v in values {
        if v >= lo && v < hi {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1.0;
        }
    }
    let axis = (0..bins).map(|b| lo + (b as f64 + 0.5) * width).collect();
    let n = e.live().count() as f64;
    // Density relative to all live particles, then renormalized to the range.
    let density = counts.into_iter().map(|c| c / (n * width)).collect();
    DistributionProfile::from_density(space, e.time(), axis, density, width)
}

/// Bin edges of a uniform profile, one more than the bin count.
pub fn bin_edges(profile: &DistributionProfile) -> Vec<f64> {
    let h = 0.5 * profile.width;
    let mut edges: Vec<f64> = profile.axis.iter().map(|x| x - h).collect();
    if let Some(last) = profile.axis.last() {
        edges.push(last + h);
    }
    edges
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::{sample_gaussian_ensemble, ClassicalState};

    #[test]
    fn uniform_samples_give_flat_profile() {
        let n = 64_000;
        let states = (0..n).map(|i| ClassicalState::new((i as f64 + 0.5) / n as f64, 0.0, 0.0)).collect();
        let e = Ensemble::new(states, 0).unwrap();
        let h = histogram_ensemble(&e, Space::Position, 32, Some((0.0, 1.0))).unwrap();
        // Multinomial σ per bin of expected count 2000 is about √2000.
        let expected = 1.0;
        let sigma = (2000.0f64).sqrt() / 2000.0;
        assert!(h.prob.iter().all(|p| (p - expected).abs() < 4.0 * sigma));
        assert!((h.total() - 1.0).abs() < 1e-12);
        assert_eq!(bin_edges(&h).len(), 33);
    }

    #[test]
    fn gaussian_samples_match_moments() {
        let e = sample_gaussian_ensemble(0.0, 0.0, 1.0, 2.0, 50_000, 11).unwrap();
        let h = histogram_ensemble(&e, Space::Momentum, 200, Some((-12.0, 12.0))).unwrap();
        let (m, v) = h.moments();
        assert!(m.abs() < 5.0 * 2.0 / (50_000f64).sqrt());
        // Binning adds width²/12 to the variance.
        assert!((v - 4.0).abs() < 0.1, "{v}");
    }

    #[test]
    fn rejects_too_few_bins() {
        let e = sample_gaussian_ensemble(0.0, 0.0, 1.0, 1.0, 10, 1).unwrap();
        assert!(histogram_ensemble(&e, Space::Position, 8, None).is_err());
    }
}
