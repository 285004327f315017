//! Classical dynamics of the driven mirror: symplectic orbit integration,
//! stroboscopic surfaces of section, resonance islands and ensembles.

mod ensemble;
mod section;

pub use ensemble::{evolve_ensemble, sample_gaussian_ensemble, Ensemble, MomentTrace};
pub use section::{
    bounce_period, gap_transport, launch_momentum, measure_island, poincare_section,
    resonance_centers, seed_line, soft_wall_resonance_height, transport_extent, Island, IslandScan, PoincareSection, ResonanceCenter, SectionPoint,
};

use std::f64::consts::TAU;

use crate::error::{require_finite, require_positive, Error, Result};
use crate::model::EXPONENT_CLAMP;
use crate::units::DimensionlessParams;

/// 2000 steps per modulation period.
pub const DEFAULT_DT: f64 = TAU / 2000.0;

/// Position and momentum at a given time, all in scaled units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalState {
    pub z: f64,
    pub p: f64,
    pub t: f64,
}

impl ClassicalState {
    pub fn new(z: f64, p: f64, t: f64) -> Self {
        ClassicalState { z, p, t }
    }

    pub fn energy(&self, d: &DimensionlessParams) -> f64 {
        crate::model::energy(self.z, self.p, self.t, d)
    }
}

/// Splitting scheme used by the [`Integrator`].
///
/// Both treat time as an extra coordinate advanced by the drifts, so the
/// explicitly time-dependent force is sampled at interior times of a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Second-order drift-kick-drift; one force evaluation at the step midpoint.
    #[default]
    Verlet,
    /// Fourth-order position-extended Forest-Ruth-like scheme (Omelyan,
    /// Mryglod & Folk 2002); four force evaluations per step.
    Pefrl,
}

impl Scheme {
    pub fn order(self) -> u32 {
        match self {
            Scheme::Verlet => 2,
            Scheme::Pefrl => 4,
        }
    }
}

/// Orbits outside these bounds are declared escaped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EscapeGuard {
    pub p_max: f64,
    pub z_max: f64,
}

impl Default for EscapeGuard {
    fn default() -> Self {
        EscapeGuard { p_max: 200.0, z_max: 4000.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integrator {
    pub dt: f64,
    pub scheme: Scheme,
    pub guard: EscapeGuard,
}

impl Default for Integrator {
    fn default() -> Self {
        Integrator { dt: DEFAULT_DT, scheme: Scheme::Verlet, guard: EscapeGuard::default() }
    }
}

const PEFRL_XI: f64 = 0.178_617_895_844_809_1;
const PEFRL_LAMBDA: f64 = -0.212_341_831_062_605_4;
const PEFRL_CHI: f64 = -0.066_264_582_669_818_5;

/// Force with the drive factor exp(κλ sin t) supplied by the caller, so that
/// ensembles can share it between particles.
#[inline]
fn force_with_drive(z: f64, drive: f64, d: &DimensionlessParams) -> f64 {
    -1.0 + d.v0 * d.kappa * (-d.kappa * z).exp() * drive
}

#[inline]
fn drive_factor(t: f64, d: &DimensionlessParams) -> f64 {
    (d.kappa * d.lambda * t.sin()).exp()
}

impl Integrator {
    pub fn new(dt: f64) -> Result<Self> {
        require_positive("dt", dt)?;
        Ok(Integrator { dt, ..Default::default() })
    }

    pub fn with_scheme(self, scheme: Scheme) -> Self {
        Integrator { scheme, ..self }
    }

    fn check(&self, s: &ClassicalState, d: &DimensionlessParams) -> Result<()> {
        let clamped = -d.kappa * s.z + d.kappa * d.lambda > EXPONENT_CLAMP;
        if !s.z.is_finite()
            || !s.p.is_finite()
            || s.p.abs() > self.guard.p_max
            || s.z > self.guard.z_max
            || clamped
        {
            return Err(Error::Escaped { t: s.t, z: s.z, p: s.p });
        }
        Ok(())
    }

    /// One step of length `h` starting at time `t0`. `s.t` is not touched.
    #[inline]
    fn step(&self, s: &mut ClassicalState, t0: f64, h: f64, d: &DimensionlessParams) {
        match self.scheme {
            Scheme::Verlet => {
                s.z += 0.5 * h * s.p;
                s.p += h * force_with_drive(s.z, drive_factor(t0 + 0.5 * h, d), d);
                s.z += 0.5 * h * s.p;
            }
            Scheme::Pefrl => {
                let (xi, lam, chi) = (PEFRL_XI, PEFRL_LAMBDA, PEFRL_CHI);
                let mid = 1.0 - 2.0 * (chi + xi);
                let kick_outer = 0.5 * (1.0 - 2.0 * lam);
                let mut tau = 0.0;
                s.z += xi * h * s.p;
                tau += xi;
                s.p += kick_outer * h * force_with_drive(s.z, drive_factor(t0 + tau * h, d), d);
                s.z += chi * h * s.p;
                tau += chi;
                s.p += lam * h * force_with_drive(s.z, drive_factor(t0 + tau * h, d), d);
                s.z += mid * h * s.p;
                tau += mid;
                s.p += lam * h * force_with_drive(s.z, drive_factor(t0 + tau * h, d), d);
                s.z += chi * h * s.p;
                tau += chi;
                s.p += kick_outer * h * force_with_drive(s.z, drive_factor(t0 + tau * h, d), d);
                s.z += xi * h * s.p;
            }
        }
    }

    /// Advances `s` to `t_final`.
    ///
    /// Full steps lie on the lattice `origin + k·dt`; an off-lattice start
    /// or end is reached with a partial step. Sharing the origin makes a run
    /// split at lattice times bit-identical to an unsplit one.
    pub fn advance(
        &self,
        s: &mut ClassicalState,
        origin: f64,
        t_final: f64,
        d: &DimensionlessParams,
    ) -> Result<()> {
        require_finite("t_final", t_final)?;
        let dt = self.dt;
        let tol = 1e-9;
        // A lattice time may round a hair past an intended end point.
        if t_final < s.t - tol * dt {
            return Err(Error::param("t_final", format!("{t_final} precedes state time {}", s.t)));
        }
        let pos = (s.t - origin) / dt;
        let mut k = pos.round();
        if (pos - k).abs() > tol {
            k = pos.ceil();
            let t_next = (origin + k * dt).min(t_final);
            let h = t_next - s.t;
            if h > 0.0 {
                self.step(s, s.t, h, d);
                s.t = t_next;
                self.check(s, d)?;
            }
            if t_next >= t_final {
                s.t = t_final;
                return Ok(());
            }
        }
        let k_end = ((t_final - origin) / dt + tol).floor();
        while k < k_end {
            self.step(s, origin + k * dt, dt, d);
            k += 1.0;
            s.t = origin + k * dt;
            self.check(s, d)?;
        }
        let h = t_final - s.t;
        if h > tol * dt {
            self.step(s, s.t, h, d);
            self.check(s, d)?;
        }
        s.t = t_final;
        Ok(())
    }
}

/// Verlet midpoint drive factors exp(κλ sin(t_k + dt/2)) for the lattice
/// steps k_start..k_end, shared read-only between the particles of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DriveTable {
    origin: f64,
    k_start: u64,
    values: Vec<f64>,
}

impl DriveTable {
    pub(crate) fn new(origin: f64, dt: f64, k_start: u64, k_end: u64, d: &DimensionlessParams) -> Self {
        let values = (k_start..k_end)
            .map(|k| drive_factor(origin + k as f64 * dt + 0.5 * dt, d))
            .collect();
        DriveTable { origin, k_start, values }
    }
}

/// Particles stepped together; independent orbits hide the latency of the
/// exponential in the force.
pub(crate) const BATCH: usize = 8;

impl Integrator {
    /// Runs every Verlet step of `table` on particles that sit on its first
    /// lattice point, with the same arithmetic as [`Integrator::advance`].
    /// Particles failing the escape check stop where `advance` would and are
    /// flagged.
    pub(crate) fn verlet_table_run(
        &self,
        states: &mut [ClassicalState],
        escaped: &mut [bool],
        table: &DriveTable,
        d: &DimensionlessParams,
    ) {
        debug_assert_eq!(self.scheme, Scheme::Verlet);
        let (dt, half) = (self.dt, 0.5 * self.dt);
        let c = d.v0 * d.kappa;
        let kl = d.kappa * d.lambda;
        let t_of = |i: usize| table.origin + (table.k_start + i as u64) as f64 * dt;
        for (chunk, esc) in states.chunks_mut(BATCH).zip(escaped.chunks_mut(BATCH)) {
            let n = chunk.len();
            let mut z = [0.0; BATCH];
            let mut p = [0.0; BATCH];
            let mut alive = [false; BATCH];
            let mut stop = [table.values.len(); BATCH];
            for j in 0..n {
                z[j] = chunk[j].z;
                p[j] = chunk[j].p;
                alive[j] = !esc[j];
            }
            let moving = alive;
            for (i, &drive) in table.values.iter().enumerate() {
                let mut any = false;
                for j in 0..BATCH {
                    // Dead lanes keep computing but never commit.
                    let zz = z[j] + half * p[j];
                    let pp = p[j] + dt * (-1.0 + c * (-d.kappa * zz).exp() * drive);
                    let zz = zz + half * pp;
                    let ok = pp.abs() <= self.guard.p_max
                        && zz <= self.guard.z_max
                        && -d.kappa * zz + kl <= EXPONENT_CLAMP;
                    if alive[j] {
                        z[j] = zz;
                        p[j] = pp;
                        if !ok {
                            alive[j] = false;
                            stop[j] = i + 1;
                        }
                    }
                    any |= alive[j];
                }
                if !any {
                    break;
                }
            }
            for j in 0..n {
                if moving[j] && !alive[j] {
                    esc[j] = true;
                }
            }
            for j in (0..n).filter(|&j| moving[j]) {
                chunk[j] = ClassicalState::new(z[j], p[j], t_of(stop[j]));
            }
        }
    }
}

/// Integrates a single orbit from `s.t` to `t_final` with the default
/// second-order scheme.
pub fn integrate_orbit(
    s: ClassicalState,
    t_final: f64,
    dt: f64,
    d: &DimensionlessParams,
) -> Result<ClassicalState> {
    Integrator::new(dt)?.integrate(s, t_final, d)
}

impl Integrator {
    pub fn integrate(
        &self,
        s: ClassicalState,
        t_final: f64,
        d: &DimensionlessParams,
    ) -> Result<ClassicalState> {
        require_positive("dt", self.dt)?;
        if !(t_final > s.t) {
            return Err(Error::param("t_final", format!("must exceed start time {}", s.t)));
        }
        let mut out = s;
        self.check(&out, d)?;
        self.advance(&mut out, s.t, t_final, d)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{energy, equilibrium_height};
    use approx::assert_relative_eq;

    #[test]
    fn free_fall_is_exact() {
        let d = DimensionlessParams { v0: 0.0, kappa: 0.5, lambda: 0.4, kbar: 1.0 };
        for scheme in [Scheme::Verlet, Scheme::Pefrl] {
            let integ = Integrator::new(0.01).unwrap().with_scheme(scheme);
            let end = integ.integrate(ClassicalState::new(10.0, 0.0, 0.0), 3.0, &d).unwrap();
            assert_relative_eq!(end.z, 10.0 - 4.5, max_relative = 1e-12);
            assert_relative_eq!(end.p, -3.0, max_relative = 1e-12);
            assert_eq!(end.t, 3.0);
        }
    }

    #[test]
    fn final_time_is_exact_with_partial_step() {
        let d = DimensionlessParams::mirror(0.4, 1.0);
        let end = integrate_orbit(ClassicalState::new(5.0, 1.0, 0.0), 1.2345, 0.1, &d).unwrap();
        assert_eq!(end.t, 1.2345);
    }

    #[test]
    fn split_run_matches_unsplit_run() {
        let d = DimensionlessParams::mirror(0.4, 1.0);
        let integ = Integrator::new(0.01).unwrap();
        let s0 = ClassicalState::new(12.0, 0.5, 0.0);
        let whole = integ.integrate(s0, 20.0, &d).unwrap();
        let mut split = s0;
        integ.advance(&mut split, 0.0, 7.0, &d).unwrap();
        integ.advance(&mut split, 0.0, 20.0, &d).unwrap();
        assert_eq!(whole, split);
    }

    #[test]
    fn small_oscillation_frequency_is_sqrt_kappa() {
        // Linearising −1 + V₀κe^{−κz} about z* gives ω² = κ·V₀κe^{−κz*} = κ.
        let d = DimensionlessParams::mirror(0.0, 1.0);
        let zs = equilibrium_height(&d);
        let integ = Integrator::new(1e-3).unwrap();
        let mut s = ClassicalState::new(zs + 1e-4, 0.0, 0.0);
        let mut crossings = Vec::new();
        let mut prev = s.z - zs;
        for k in 1..=40_000 {
            integ.advance(&mut s, 0.0, k as f64 * 1e-3, &d).unwrap();
            let cur = s.z - zs;
            if prev > 0.0 && cur <= 0.0 {
                crossings.push(s.t - 1e-3 * cur / (cur - prev));
            }
            prev = cur;
        }
        let period = (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64;
        assert_relative_eq!(TAU / period, 0.5f64.sqrt(), max_relative = 1e-4);
    }

    #[test]
    fn escape_guard_trips() {
        let d = DimensionlessParams::mirror(0.4, 1.0);
        let integ = Integrator::new(0.01).unwrap();
        let err = integ.integrate(ClassicalState::new(10.0, 250.0, 0.0), 1.0, &d).unwrap_err();
        assert!(matches!(err, Error::Escaped { .. }));
        let err = integ.integrate(ClassicalState::new(3990.0, 150.0, 0.0), 1.0, &d).unwrap_err();
        assert!(matches!(err, Error::Escaped { .. }));
    }

    #[test]
    fn rejects_bad_step_and_times() {
        let d = DimensionlessParams::mirror(0.4, 1.0);
        let s = ClassicalState::new(5.0, 0.0, 1.0);
        assert!(integrate_orbit(s, 2.0, 0.0, &d).is_err());
        assert!(integrate_orbit(s, 0.5, 0.01, &d).is_err());
    }

    #[test]
    fn energy_conserved_without_drive() {
        let d = DimensionlessParams::mirror(0.0, 1.0);
        let integ = Integrator::new(1e-3).unwrap();
        let mut s = ClassicalState::new(20.0, 0.0, 0.0);
        let h0 = energy(s.z, s.p, 0.0, &d);
        let mut worst: f64 = 0.0;
        for k in 1..=100 {
            integ.advance(&mut s, 0.0, k as f64, &d).unwrap();
            worst = worst.max(((s.energy(&d) - h0) / h0).abs());
        }
        // Verlet energy error is bounded at O(dt²).
        assert!(worst < 1e-6, "{worst}");
    }
}
