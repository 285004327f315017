//! SI experiment description, the dimensionless control parameters of the
//! modulated-mirror Hamiltonian and the conversions between them.
//!
//! With modulation frequency ω, gravity g and atomic mass m the scalings are
//! z = z̃ω²/g, p = p̃ω/(mg), t = ωt̃, which turn the SI Hamiltonian into
//!
//! ```text
//! H = p²/2 + z + V₀ exp(−κ(z − λ sin t))
//! ```
//!
//! with V₀ = ħω²Ω_eff/(4mg²), κ = 2kg/ω², λ = ω²ε/(2kg) and the effective
//! Planck constant k̄ = ħω³/(mg²).

use crate::error::{require_positive, Error, Result};

/// CODATA 2018 reduced Planck constant in J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Gravitational acceleration used when none is configured, m/s².
pub const STANDARD_GRAVITY: f64 = 9.81;

/// Modulation amplitude above which neighbouring resonances overlap and
/// classical diffusion sets in.
pub const LAMBDA_LOWER: f64 = 0.24;

/// Experimental parameters in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    /// Atomic mass, kg.
    pub mass: f64,
    /// Gravitational acceleration, m/s².
    pub gravity: f64,
    /// Effective Rabi frequency Ω_eff, rad/s.
    pub rabi_eff: f64,
    /// Inverse decay length k of the evanescent field, 1/m.
    pub decay_wavenumber: f64,
    /// Modulation angular frequency ω, rad/s.
    pub mod_frequency: f64,
    /// Modulation amplitude ε (dimensionless).
    pub mod_amplitude_eps: f64,
    /// Reduced Planck constant, J·s.
    pub hbar: f64,
}

impl PhysicalParams {
    /// Cesium atom with the standard gravity and CODATA ħ; frequencies are
    /// given in Hz and converted to rad/s.
    pub fn cesium(rabi_hz: f64, decay_length_m: f64, mod_hz: f64) -> Self {
        use std::f64::consts::TAU;
        PhysicalParams {
            mass: 2.21e-25,
            gravity: STANDARD_GRAVITY,
            rabi_eff: TAU * rabi_hz,
            decay_wavenumber: 1.0 / decay_length_m,
            mod_frequency: TAU * mod_hz,
            mod_amplitude_eps: 0.0,
            hbar: HBAR,
        }
    }

    /// Checks every field. The modulation amplitude may be zero (unmodulated
    /// mirror); everything else must be strictly positive.
    pub fn validate(&self) -> Result<()> {
        require_positive("mass", self.mass)?;
        require_positive("gravity", self.gravity)?;
        require_positive("rabi_eff", self.rabi_eff)?;
        require_positive("decay_wavenumber", self.decay_wavenumber)?;
        require_positive("mod_frequency", self.mod_frequency)?;
        require_positive("hbar", self.hbar)?;
        if !(self.mod_amplitude_eps.is_finite() && self.mod_amplitude_eps >= 0.0) {
            return Err(Error::param(
                "mod_amplitude_eps",
                format!("must be finite and >= 0, got {}", self.mod_amplitude_eps),
            ));
        }
        Ok(())
    }
}

/// The four dimensionless controls of the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionlessParams {
    /// Mirror intensity V₀.
    pub v0: f64,
    /// Steepness κ of the evanescent wave.
    pub kappa: f64,
    /// Modulation amplitude λ.
    pub lambda: f64,
    /// Effective Planck constant k̄.
    pub kbar: f64,
}

impl DimensionlessParams {
    pub fn new(v0: f64, kappa: f64, lambda: f64, kbar: f64) -> Result<Self> {
        let d = DimensionlessParams { v0, kappa, lambda, kbar };
        d.validate()?;
        Ok(d)
    }

    /// V₀ = 4, κ = 0.5 with the given modulation and Planck constant.
    pub fn mirror(lambda: f64, kbar: f64) -> Self {
        DimensionlessParams { v0: 4.0, kappa: 0.5, lambda, kbar }
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("v0", self.v0)?;
        require_positive("kappa", self.kappa)?;
        require_positive("kbar", self.kbar)?;
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::param("lambda", format!("must be finite and >= 0, got {}", self.lambda)));
        }
        Ok(())
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        DimensionlessParams { lambda, ..self }
    }

    pub fn with_kbar(self, kbar: f64) -> Self {
        DimensionlessParams { kbar, ..self }
    }
}

/// SI quantities held fixed when mapping dimensionless parameters back to an
/// experiment. The modulation frequency follows from k̄ = ħω³/(mg²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub mass: f64,
    pub gravity: f64,
    pub hbar: f64,
}

impl Anchor {
    pub fn cesium() -> Self {
        Anchor { mass: 2.21e-25, gravity: STANDARD_GRAVITY, hbar: HBAR }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationWindow {
    pub lambda_lower: f64,
    pub lambda_upper: f64,
    pub is_empty: bool,
}

impl LocalizationWindow {
    /// Whether `lambda` lies strictly inside the window.
    pub fn contains(&self, lambda: f64) -> bool {
        lambda > self.lambda_lower && lambda < self.lambda_upper
    }
}

pub fn to_dimensionless(p: &PhysicalParams) -> Result<DimensionlessParams> {
    p.validate()?;
    let w = p.mod_frequency;
    let g = p.gravity;
    let m = p.mass;
    let k = p.decay_wavenumber;
    Ok(DimensionlessParams {
        v0: p.hbar * w * w * p.rabi_eff / (4.0 * m * g * g),
        kappa: 2.0 * k * g / (w * w),
        lambda: w * w * p.mod_amplitude_eps / (2.0 * k * g),
        kbar: p.hbar * w * w * w / (m * g * g),
    })
}

/// Inverse of [`to_dimensionless`] for fixed mass, gravity and ħ.
pub fn to_physical(d: &DimensionlessParams, anchor: &Anchor) -> Result<PhysicalParams> {
    d.validate()?;
    require_positive("anchor.mass", anchor.mass)?;
    require_positive("anchor.gravity", anchor.gravity)?;
    require_positive("anchor.hbar", anchor.hbar)?;
    let (m, g, hbar) = (anchor.mass, anchor.gravity, anchor.hbar);
    let w = (d.kbar * m * g * g / hbar).cbrt();
    let k = d.kappa * w * w / (2.0 * g);
    Ok(PhysicalParams {
        mass: m,
        gravity: g,
        rabi_eff: 4.0 * m * g * g * d.v0 / (hbar * w * w),
        decay_wavenumber: k,
        mod_frequency: w,
        mod_amplitude_eps: 2.0 * k * g * d.lambda / (w * w),
        hbar,
    })
}

pub fn localization_window(d: &DimensionlessParams) -> LocalizationWindow {
    let upper = d.kbar.sqrt() / 2.0;
    LocalizationWindow {
        lambda_lower: LAMBDA_LOWER,
        lambda_upper: upper,
        is_empty: upper <= LAMBDA_LOWER,
    }
}
