use crate::error::{Error, Result};
use crate::quantum::DistributionProfile;

/// Two-parameter decay laws, fitted as straight lines in ln ρ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayModel {
    /// ρ ∝ exp(−c·x); the localization length is 1/c.
    ExpLinear,
    /// ρ ∝ exp(−c·√x).
    ExpSqrt,
    /// ρ ∝ exp(−c·x²), a Gaussian centred at the origin.
    Gaussian,
}

impl DecayModel {
    pub fn as_str(&self) -> &'static str {
        match self {
            DecayModel::ExpLinear => "exp_linear",
            DecayModel::ExpSqrt => "exp_sqrt",
            DecayModel::Gaussian => "gaussian",
        }
    }

    fn regressor(&self, x: f64) -> f64 {
        match self {
            DecayModel::ExpLinear => x,
            DecayModel::ExpSqrt => x.sqrt(),
            DecayModel::Gaussian => x * x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub model: DecayModel,
    /// Decay rate c in ln ρ = intercept − c·g(x).
    pub coefficient: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub fit_range: (f64, f64),
    pub n_points: usize,
}

impl DecayFit {
    /// 1/c for the exp-linear model.
    pub fn localization_length(&self) -> Option<f64> {
        (self.model == DecayModel::ExpLinear && self.coefficient != 0.0).then(|| 1.0 / self.coefficient)
    }
}

/// Least-squares fit of ln ρ against g(x) over bins with x in `range`. With
/// `fold`, bins are placed at |x| so both tails of a symmetric profile
/// contribute.
pub fn fit_decay(
    profile: &DistributionProfile,
    range: (f64, f64),
    model: DecayModel,
    fold: bool,
) -> Result<DecayFit> {
    let (lo, hi) = range;
    if !(hi > lo) {
        return Err(Error::param("range", format!("empty fit range ({lo}, {hi})")));
    }
    if model == DecayModel::ExpSqrt && lo < 0.0 {
        return Err(Error::param("range", "square-root law needs x >= 0"));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&x, &p) in profile.axis.iter().zip(&profile.prob) {
        let x = if fold { x.abs() } else { x };
        if x < lo || x > hi {
            continue;
        }
        if !(p > 0.0) {
            return Err(Error::Fit(format!("non-positive density {p} at x = {x}")));
        }
        xs.push(model.regressor(x));
        ys.push(p.ln());
    }
    let n = xs.len();
    if n < 10 {
        return Err(Error::Fit(format!("{n} points in range, need at least 10")));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Fit("regressor has no spread in range".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) } else { 1.0 };
    Ok(DecayFit { model, coefficient: -slope, intercept, r_squared, fit_range: range, n_points: n })
}

/// From `start`, the largest range on the (folded) axis over which the
/// profile stays positive and above `floor` times its peak.
pub fn positive_tail_range(profile: &DistributionProfile, start: f64, floor: f64, fold: bool) -> Option<(f64, f64)> {
    let peak = profile.prob.iter().copied().fold(0.0, f64::max);
    let mut pts: Vec<(f64, f64)> = profile
        .axis
        .iter()
        .zip(&profile.prob)
        .map(|(&x, &p)| (if fold { x.abs() } else { x }, p))
        .filter(|(x, _)| *x >= start)
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Folded axes hold two points per |x|; the range stops before any |x|
    // where either side fails.
    let mut end = None;
    let mut below = None;
    for (x, p) in pts {
        if !(p > floor * peak) {
            if end == Some(x) {
                end = below;
            }
            break;
        }
        if end.is_some_and(|e| e < x) {
            below = end;
        }
        end = Some(x);
    }
    end.filter(|&e| e > start).map(|e| (start, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::Space;
    use rand::{Rng, SeedableRng};

    fn profile(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, n: usize) -> DistributionProfile {
        let w = (hi - lo) / n as f64;
        let axis: Vec<f64> = (0..n).map(|j| lo + (j as f64 + 0.5) * w).collect();
        let density = axis.iter().map(|&x| f(x)).collect();
        DistributionProfile::from_density(Space::Momentum, 0.0, axis, density, w).unwrap()
    }

    #[test]
    fn exact_exponential_gives_length() {
        let p = profile(|x| (-x.abs() / 2.0).exp(), -20.0, 20.0, 400);
        let f = fit_decay(&p, (2.0, 18.0), DecayModel::ExpLinear, true).unwrap();
        assert!((f.localization_length().unwrap() - 2.0).abs() < 0.02);
        assert!(f.r_squared > 0.999_999);
    }

    #[test]
    fn exact_square_root_law() {
        let p = profile(|x| (-3.0 * x.sqrt()).exp(), 0.0, 100.0, 500);
        let f = fit_decay(&p, (1.0, 90.0), DecayModel::ExpSqrt, false).unwrap();
        assert!((f.coefficient - 3.0).abs() < 0.03);
    }

    #[test]
    fn model_selection_separates_shapes() {
        let gauss = profile(|x| (-x * x / 8.0).exp(), -15.0, 15.0, 300);
        let expo = profile(|x| (-x.abs()).exp(), -15.0, 15.0, 300);
        let fit = |p: &DistributionProfile, m| fit_decay(p, (3.0, 12.0), m, true).unwrap().r_squared;
        assert!(fit(&gauss, DecayModel::Gaussian) > fit(&gauss, DecayModel::ExpLinear));
        assert!(fit(&expo, DecayModel::ExpLinear) > fit(&expo, DecayModel::Gaussian));
    }

    #[test]
    fn noisy_fit_degrades_gracefully() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let p = profile(
            |x| (-x.abs() / 2.0).exp() * (1.0 + 0.05 * (2.0 * rng.gen::<f64>() - 1.0)),
            -20.0,
            20.0,
            400,
        );
        let f = fit_decay(&p, (2.0, 18.0), DecayModel::ExpLinear, true).unwrap();
        assert!((f.localization_length().unwrap() - 2.0).abs() < 0.2);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let p = profile(|x| if x > 5.0 { 0.0 } else { 1.0 }, 0.0, 10.0, 100);
        assert!(matches!(fit_decay(&p, (1.0, 9.0), DecayModel::ExpLinear, false), Err(Error::Fit(_))));
        assert!(matches!(fit_decay(&p, (1.0, 1.5), DecayModel::ExpLinear, false), Err(Error::Fit(_))));
        assert!(fit_decay(&p, (3.0, 1.0), DecayModel::ExpLinear, false).is_err());
    }

    #[test]
    fn tail_range_stops_at_first_empty_bin() {
        let p = profile(|x| if x.abs() > 7.0 { 0.0 } else { 1.0 }, -10.0, 10.0, 40);
        let (a, b) = positive_tail_range(&p, 2.0, 1e-12, true).unwrap();
        assert_eq!(a, 2.0);
        assert!((b - 6.75).abs() < 1e-12);
    }

    #[test]
    fn folded_range_stops_where_one_side_is_empty() {
        let p = profile(|x| if (-4.0..=7.0).contains(&x) { 1.0 } else { 0.0 }, -10.0, 10.0, 40);
        let (_, b) = positive_tail_range(&p, 0.0, 1e-12, true).unwrap();
        assert!((b - 3.75).abs() < 1e-12, "{b}");
        assert!(fit_decay(&p, (0.0, b), DecayModel::Gaussian, true).is_ok());
    }
}
