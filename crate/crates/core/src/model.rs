//! The driven mirror Hamiltonian shared by the classical and quantum dynamics.

use crate::units::DimensionlessParams;

/// Upper bound on the wall exponent −κ(z − λ sin t) before exponentiation.
pub const EXPONENT_CLAMP: f64 = 700.0;

/// Clamped exponent of the evanescent wall and whether the clamp engaged.
#[inline]
pub fn wall_exponent(z: f64, t: f64, d: &DimensionlessParams) -> (f64, bool) {
    let arg = -d.kappa * (z - d.lambda * t.sin());
    if arg > EXPONENT_CLAMP {
        (EXPONENT_CLAMP, true)
    } else {
        (arg, false)
    }
}

/// V(z, t) = z + V₀ exp(−κ(z − λ sin t)).
#[inline]
pub fn potential(z: f64, t: f64, d: &DimensionlessParams) -> f64 {
    z + d.v0 * wall_exponent(z, t, d).0.exp()
}

/// −∂H/∂z = −1 + V₀κ exp(−κ(z − λ sin t)).
#[inline]
pub fn force(z: f64, t: f64, d: &DimensionlessParams) -> f64 {
    -1.0 + d.v0 * d.kappa * wall_exponent(z, t, d).0.exp()
}

#[inline]
pub fn energy(z: f64, p: f64, t: f64, d: &DimensionlessParams) -> f64 {
    0.5 * p * p + potential(z, t, d)
}

/// Height at which gravity balances the static wall, ln(V₀κ)/κ.
pub fn equilibrium_height(d: &DimensionlessParams) -> f64 {
    (d.v0 * d.kappa).ln() / d.kappa
}
