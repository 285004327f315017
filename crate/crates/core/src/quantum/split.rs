use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::Fft;

use super::{expectations_with, forward_plan, inverse_plan, Grid, Wavefunction};
use crate::error::{require_positive, Error, Result};
use crate::model;
use crate::units::DimensionlessParams;

/// Wall phases below this are dropped; they are far under double round-off.
const WALL_PHASE_FLOOR: f64 = 1e-18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PotentialMode {
    /// Gravity plus the modulated mirror.
    #[default]
    Full,
    /// V ≡ 0, for free-particle checks.
    Free,
}

/// Absorbing layer over the top `fraction` of the grid. Each step multiplies
/// ψ by exp(−η dt sin²(πx/2)), x running from 0 to 1 across the layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Absorber {
    pub fraction: f64,
    pub strength: f64,
}

impl Default for Absorber {
    fn default() -> Self {
        Absorber { fraction: 0.1, strength: 2.0 }
    }
}

impl Absorber {
    fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return Err(Error::param("absorber.fraction", "must lie in (0, 1)"));
        }
        require_positive("absorber.strength", self.strength)
    }

    /// Per-step damping factor at each grid point.
    pub fn mask(&self, grid: &Grid, dt: f64) -> Vec<f64> {
        let start = grid.z_max - self.fraction * grid.length();
        let width = self.fraction * grid.length();
        grid.positions()
            .into_iter()
            .map(|z| {
                if z <= start {
                    1.0
                } else {
                    let s = (FRAC_PI_2 * (z - start) / width).sin();
                    (-self.strength * dt * s * s).exp()
                }
            })
            .collect()
    }
}

/// Settings for a propagation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propagation {
    pub dt: f64,
    pub mode: PotentialMode,
    pub absorber: Option<Absorber>,
    /// Largest tolerated absorbed probability.
    pub absorb_limit: f64,
}

impl Default for Propagation {
    fn default() -> Self {
        Propagation {
            dt: std::f64::consts::TAU / 2000.0,
            mode: PotentialMode::Full,
            absorber: Some(Absorber::default()),
            absorb_limit: 0.2,
        }
    }
}

/// Strang splitting e^{−iT dt/2k̄} e^{−iV(t+dt/2) dt/k̄} e^{−iT dt/2k̄} with
/// precomputed phase tables. Consecutive half kinetic steps are fused.
pub struct SplitOperator {
    grid: Grid,
    dt: f64,
    d: DimensionlessParams,
    mode: PotentialMode,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// Half and full kinetic phases with the inverse-FFT 1/N folded in.
    half_kin: Vec<Complex64>,
    full_kin: Vec<Complex64>,
    /// exp(−i z dt/k̄) times the absorber mask.
    static_phase: Vec<Complex64>,
    /// V₀ e^{−κz} dt/k̄ on the leading points where the wall matters.
    wall: Vec<f64>,
    /// Leading points whose wall exponent may reach the clamp.
    n_clamped: usize,
    scratch: Vec<Complex64>,
}

impl SplitOperator {
    pub fn new(
        grid: &Grid,
        dt: f64,
        d: &DimensionlessParams,
        mode: PotentialMode,
        absorber: Option<Absorber>,
    ) -> Result<Self> {
        grid.validate()?;
        d.validate()?;
        require_positive("dt", dt)?;
        if let Some(a) = &absorber {
            a.validate()?;
        }
        let n = grid.n_points;
        let kbar = d.kbar;
        let inv_n = 1.0 / n as f64;
        let (half_kin, full_kin) = (0..n)
            .map(|j| {
                let p = grid.momentum_of_slot(j, kbar);
                let e = p * p / (2.0 * kbar);
                (
                    Complex64::from_polar(inv_n, -e * dt / 2.0),
                    Complex64::from_polar(inv_n, -e * dt),
                )
            })
            .unzip();
        let mask = absorber.map(|a| a.mask(grid, dt));
        let z = grid.positions();
        let static_phase = z
            .iter()
            .enumerate()
            .map(|(j, &zj)| {
                let r = mask.as_ref().map_or(1.0, |m| m[j]);
                match mode {
                    PotentialMode::Full => Complex64::from_polar(r, -zj * dt / kbar),
                    PotentialMode::Free => Complex64::new(r, 0.0),
                }
            })
            .collect();
        let (wall, n_clamped) = match mode {
            PotentialMode::Free => (Vec::new(), 0),
            PotentialMode::Full => {
                let lam = d.lambda.abs();
                let peak = (d.kappa * lam).exp();
                let n_clamped = z
                    .iter()
                    .take_while(|&&zj| -d.kappa * (zj - lam) > model::EXPONENT_CLAMP)
                    .count();
                let wall: Vec<f64> = z
                    .iter()
                    .map(|&zj| d.v0 * (-d.kappa * zj).exp() * dt / kbar)
                    .take_while(|w| w * peak >= WALL_PHASE_FLOOR)
                    .collect();
                (wall, n_clamped)
            }
        };
        let fwd = forward_plan(n);
        let inv = inverse_plan(n);
        let scratch_len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Ok(SplitOperator {
            grid: *grid,
            dt,
            d: *d,
            mode,
            fwd,
            inv,
            half_kin,
            full_kin,
            static_phase,
            wall,
            n_clamped,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn check(&self, psi: &Wavefunction) -> Result<()> {
        if psi.grid != self.grid {
            return Err(Error::param("grid", "wavefunction grid differs from the operator grid"));
        }
        if psi.kbar != self.d.kbar {
            return Err(Error::param(
                "kbar",
                format!("wavefunction has k̄ = {}, parameters have {}", psi.kbar, self.d.kbar),
            ));
        }
        Ok(())
    }

    fn kinetic(&mut self, amp: &mut [Complex64], phase: &[Complex64]) {
        self.fwd.process_with_scratch(amp, &mut self.scratch);
        for (a, k) in amp.iter_mut().zip(phase) {
            *a *= k;
        }
        self.inv.process_with_scratch(amp, &mut self.scratch);
    }

    fn potential(&self, amp: &mut [Complex64], t_mid: f64) {
        for (a, s) in amp.iter_mut().zip(&self.static_phase) {
            *a *= s;
        }
        if self.mode == PotentialMode::Free {
            return;
        }
        let drive = (self.d.kappa * self.d.lambda * t_mid.sin()).exp();
        let scale = self.dt / self.d.kbar;
        for (j, (a, w)) in amp.iter_mut().zip(&self.wall).enumerate() {
            let phase = if j < self.n_clamped {
                let z = self.grid.z(j);
                self.d.v0 * model::wall_exponent(z, t_mid, &self.d).0.exp() * scale
            } else {
                w * drive
            };
            *a *= Complex64::from_polar(1.0, -phase);
        }
    }

    /// Advances `psi` by `n` steps on the lattice origin + k·dt, where psi.t
    /// must be a lattice point.
    pub fn steps(&mut self, psi: &mut Wavefunction, origin: f64, n: u64) -> Result<()> {
        self.check(psi)?;
        if n == 0 {
            return Ok(());
        }
        let k0 = ((psi.t - origin) / self.dt).round();
        if (origin + k0 * self.dt - psi.t).abs() > 1e-9 * (1.0 + psi.t.abs()) {
            return Err(Error::param("t", "wavefunction time is not on the step lattice"));
        }
        let mut amp = std::mem::take(&mut psi.amp);
        let half = std::mem::take(&mut self.half_kin);
        let full = std::mem::take(&mut self.full_kin);
        self.kinetic(&mut amp, &half);
        for i in 0..n {
            let t_mid = origin + (k0 + i as f64 + 0.5) * self.dt;
            self.potential(&mut amp, t_mid);
            self.kinetic(&mut amp, if i + 1 == n { &half } else { &full });
        }
        self.half_kin = half;
        self.full_kin = full;
        psi.amp = amp;
        psi.t = origin + (k0 + n as f64) * self.dt;
        Ok(())
    }
}

/// One Strang step of the full Hamiltonian without absorber.
pub fn split_step(psi: &mut Wavefunction, dt: f64, d: &DimensionlessParams) -> Result<()> {
    let mut op = SplitOperator::new(&psi.grid, dt, d, PotentialMode::Full, None)?;
    let origin = psi.t;
    op.steps(psi, origin, 1)
}

/// Expectation values sampled along a propagation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservableTrace {
    pub times: Vec<f64>,
    pub norm: Vec<f64>,
    pub mean_z: Vec<f64>,
    pub mean_p: Vec<f64>,
    pub mean_p2: Vec<f64>,
    pub energy: Vec<f64>,
}

impl ObservableTrace {
    fn record(&mut self, psi: &Wavefunction, d: &DimensionlessParams, mode: PotentialMode, fft: &dyn Fft<f64>) {
        let e = expectations_with(psi, d, mode, fft);
        self.times.push(psi.t);
        self.norm.push(e.norm);
        self.mean_z.push(e.mean_z);
        self.mean_p.push(e.mean_p);
        self.mean_p2.push(e.mean_p2);
        self.energy.push(e.energy);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Mean of ⟨p²⟩ over samples with start ≤ t < end.
    pub fn window_mean_p2(&self, start: f64, end: f64) -> Option<f64> {
        let v: Vec<f64> = self
            .times
            .iter()
            .zip(&self.mean_p2)
            .filter(|(t, _)| **t >= start && **t < end)
            .map(|(_, p)| *p)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Saturation test: the last-quarter mean of ⟨p²⟩ lies within `tol`
    /// (relative) of the third-quarter mean. Returns (third, last, passed).
    pub fn saturation(&self, tol: f64) -> Option<(f64, f64, bool)> {
        let (t0, t1) = (*self.times.first()?, *self.times.last()?);
        let q = (t1 - t0) / 4.0;
        let third = self.window_mean_p2(t0 + 2.0 * q, t0 + 3.0 * q)?;
        // The last window includes the final sample.
        let last = self.window_mean_p2(t0 + 3.0 * q, f64::INFINITY)?;
        Some((third, last, ((last - third) / third).abs() <= tol))
    }
}

/// Propagates `psi` to `t_final`, recording expectation values at the start,
/// every `record_every` (snapped to whole steps) and at the end. A final
/// partial step lands exactly on `t_final`.
pub fn propagate(
    psi: &Wavefunction,
    t_final: f64,
    settings: &Propagation,
    d: &DimensionlessParams,
    record_every: f64,
) -> Result<(Wavefunction, ObservableTrace)> {
    require_positive("record_every", record_every)?;
    require_positive("absorb_limit", settings.absorb_limit)?;
    let dt = settings.dt;
    let mut op = SplitOperator::new(&psi.grid, dt, d, settings.mode, settings.absorber)?;
    op.check(psi)?;
    let origin = psi.t;
    if !(t_final > origin) {
        return Err(Error::param("t_final", format!("must exceed the wavefunction time {origin}")));
    }
    let span = t_final - origin;
    let mut n_total = (span / dt + 1e-9).floor() as u64;
    let mut rem = span - n_total as f64 * dt;
    if rem < 1e-9 * dt {
        rem = 0.0;
    }
    if n_total == 0 && rem == 0.0 {
        n_total = 1;
    }
    let per_record = ((record_every / dt).round() as u64).max(1);
    let fft = forward_plan(psi.grid.n_points);

    let mut out = psi.clone();
    let mut trace = ObservableTrace::default();
    trace.record(&out, d, settings.mode, fft.as_ref());
    let mut done = 0u64;
    let check_absorbed = |out: &mut Wavefunction, before: f64| -> Result<()> {
        let after = out.norm();
        out.absorbed += (before - after).max(0.0);
        if out.absorbed > settings.absorb_limit {
            return Err(Error::AbsorbedTooMuch {
                absorbed: out.absorbed,
                limit: settings.absorb_limit,
                t: out.t,
            });
        }
        Ok(())
    };
    while done < n_total {
        let n = per_record.min(n_total - done);
        let before = out.norm();
        op.steps(&mut out, origin, n)?;
        done += n;
        check_absorbed(&mut out, before)?;
        if done < n_total || rem == 0.0 {
            trace.record(&out, d, settings.mode, fft.as_ref());
        }
    }
    if rem > 0.0 {
        let before = out.norm();
        let mut last = SplitOperator::new(&psi.grid, rem, d, settings.mode, settings.absorber)?;
        let start = out.t;
        last.steps(&mut out, start, 1)?;
        check_absorbed(&mut out, before)?;
        out.t = t_final;
        trace.record(&out, d, settings.mode, fft.as_ref());
    }
    Ok((out, trace))
}
