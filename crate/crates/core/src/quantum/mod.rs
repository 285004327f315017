//! Wavepacket dynamics of the driven mirror with scaled Planck constant k̄,
//! propagated by Strang splitting on a periodic FFT grid.

mod checkpoint;
mod split;

pub use checkpoint::{from_bytes, read_checkpoint, to_bytes, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use split::{
    propagate, split_step, Absorber, ObservableTrace, PotentialMode, Propagation, SplitOperator,
};

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{require_finite, require_positive, Error, Result};
use crate::model;
use crate::units::DimensionlessParams;

/// Edge-to-peak amplitude ratio above which a packet counts as clipped.
pub const CLIP_RATIO: f64 = 1e-12;

/// Uniform periodic grid: points z_min + j·dz, j = 0..n_points, with
/// dz = (z_max − z_min)/n_points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub z_min: f64,
    pub z_max: f64,
    pub n_points: usize,
}

impl Grid {
    pub fn new(z_min: f64, z_max: f64, n_points: usize) -> Result<Self> {
        let g = Grid { z_min, z_max, n_points };
        g.validate()?;
        Ok(g)
    }

    /// z ∈ [−20, 500] with 2¹⁴ points.
    pub fn standard() -> Self {
        Grid { z_min: -20.0, z_max: 500.0, n_points: 1 << 14 }
    }

    pub fn validate(&self) -> Result<()> {
        require_finite("z_min", self.z_min)?;
        require_finite("z_max", self.z_max)?;
        if !(self.z_max > self.z_min) {
            return Err(Error::param("z_max", "must exceed z_min"));
        }
        if self.n_points < 256 || !self.n_points.is_power_of_two() {
            return Err(Error::param(
                "n_points",
                format!("must be a power of two >= 256, got {}", self.n_points),
            ));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.z_max - self.z_min
    }

    pub fn dz(&self) -> f64 {
        self.length() / self.n_points as f64
    }

    pub fn z(&self, j: usize) -> f64 {
        self.z_min + j as f64 * self.dz()
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.z(j)).collect()
    }

    /// Momentum spacing 2πk̄/L.
    pub fn dp(&self, kbar: f64) -> f64 {
        TAU * kbar / self.length()
    }

    /// Momentum of FFT output slot `j` (symmetric mode range −N/2..N/2).
    pub fn momentum_of_slot(&self, j: usize, kbar: f64) -> f64 {
        let n = self.n_points as i64;
        let m = if (j as i64) < n / 2 { j as i64 } else { j as i64 - n };
        m as f64 * self.dp(kbar)
    }

    /// Largest representable momentum magnitude, πk̄/dz.
    pub fn p_max(&self, kbar: f64) -> f64 {
        PI * kbar / self.dz()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Wavefunction {
    pub grid: Grid,
    pub amp: Vec<Complex64>,
    pub t: f64,
    pub kbar: f64,
    /// Probability removed by the absorber so far.
    pub absorbed: f64,
}

impl Wavefunction {
    pub fn norm(&self) -> f64 {
        self.amp.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.dz()
    }

    /// Overlap ⟨self|other⟩ on a common grid.
    pub fn inner(&self, other: &Wavefunction) -> Result<Complex64> {
        if self.grid != other.grid {
            return Err(Error::param("grid", "wavefunctions live on different grids"));
        }
        let s: Complex64 = self.amp.iter().zip(&other.amp).map(|(a, b)| a.conj() * b).sum();
        Ok(s * self.grid.dz())
    }

    /// Momentum amplitudes φ(p_j) = dz/√(2πk̄) Σ_n ψ(z_n) e^{−i p_j z_n / k̄},
    /// in FFT slot order.
    pub fn momentum_amplitudes(&self, fft: &dyn Fft<f64>) -> Vec<Complex64> {
        let mut buf = self.amp.clone();
        fft.process(&mut buf);
        let scale = self.grid.dz() / (TAU * self.kbar).sqrt();
        for (j, v) in buf.iter_mut().enumerate() {
            let p = self.grid.momentum_of_slot(j, self.kbar);
            *v *= Complex64::from_polar(scale, -p * self.grid.z_min / self.kbar);
        }
        buf
    }
}

pub(crate) fn forward_plan(n: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_forward(n)
}

pub(crate) fn inverse_plan(n: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_inverse(n)
}

/// Gaussian packet ψ ∝ exp(−(z−z0)²/(4Δz²)) exp(+i p0 z/k̄), normalized on the
/// grid, so that |ψ|² has mean z0 and variance Δz², ⟨p⟩ = p0 and Δp = k̄/(2Δz).
pub fn init_gaussian(z0: f64, p0: f64, dz_width: f64, kbar: f64, grid: &Grid) -> Result<Wavefunction> {
    grid.validate()?;
    require_finite("z0", z0)?;
    require_finite("p0", p0)?;
    require_positive("dz_width", dz_width)?;
    require_positive("kbar", kbar)?;

    let edge = (z0 - grid.z_min).abs().min((grid.z_max - z0).abs());
    let outside = z0 <= grid.z_min || z0 >= grid.z_max;
    let z_ratio = if outside { 1.0 } else { (-edge * edge / (4.0 * dz_width * dz_width)).exp() };
    let dp = kbar / (2.0 * dz_width);
    let p_room = grid.p_max(kbar) - p0.abs();
    let p_ratio = if p_room <= 0.0 { 1.0 } else { (-p_room * p_room / (4.0 * dp * dp)).exp() };
    let edge_ratio = z_ratio.max(p_ratio);
    if edge_ratio > CLIP_RATIO {
        return Err(Error::PacketClipped { edge_ratio });
    }

    let mut amp: Vec<Complex64> = grid
        .positions()
        .into_iter()
        .map(|z| {
            let x = z - z0;
            Complex64::from_polar((-x * x / (4.0 * dz_width * dz_width)).exp(), p0 * z / kbar)
        })
        .collect();
    let norm = amp.iter().map(|a| a.norm_sqr()).sum::<f64>() * grid.dz();
    let s = 1.0 / norm.sqrt();
    for a in amp.iter_mut() {
        *a *= s;
    }
    Ok(Wavefunction { grid: *grid, amp, t: 0.0, kbar, absorbed: 0.0 })
}

/// Quadrature expectation values. Momentum moments are taken in the
/// momentum representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expectations {
    pub norm: f64,
    pub mean_z: f64,
    pub mean_p: f64,
    pub mean_p2: f64,
    pub energy: f64,
    /// ⟨−∂V/∂z⟩ at the wavefunction's time.
    pub mean_force: f64,
}

pub fn expectations(psi: &Wavefunction, d: &DimensionlessParams) -> Expectations {
    expectations_with(psi, d, PotentialMode::Full, forward_plan(psi.grid.n_points).as_ref())
}

pub(crate) fn expectations_with(
    psi: &Wavefunction,
    d: &DimensionlessParams,
    mode: PotentialMode,
    fft: &dyn Fft<f64>,
) -> Expectations {
    let g = &psi.grid;
    let dz = g.dz();
    let (mut n, mut sz, mut sv, mut sf) = (0.0, 0.0, 0.0, 0.0);
    for (j, a) in psi.amp.iter().enumerate() {
        let w = a.norm_sqr();
        let z = g.z(j);
        n += w;
        sz += w * z;
        if mode == PotentialMode::Full {
            sv += w * model::potential(z, psi.t, d);
            sf += w * model::force(z, psi.t, d);
        }
    }
    let phi = psi.momentum_amplitudes(fft);
    let dp = g.dp(psi.kbar);
    let (mut np, mut sp, mut sp2) = (0.0, 0.0, 0.0);
    for (j, a) in phi.iter().enumerate() {
        let w = a.norm_sqr();
        let p = g.momentum_of_slot(j, psi.kbar);
        np += w;
        sp += w * p;
        sp2 += w * p * p;
    }
    let norm = n * dz;
    let (np, sp, sp2) = (np * dp, sp * dp, sp2 * dp);
    let mean_p2 = sp2 / np;
    Expectations {
        norm,
        mean_z: sz * dz / norm,
        mean_p: sp / np,
        mean_p2,
        energy: 0.5 * mean_p2 + sv * dz / norm,
        mean_force: sf * dz / norm,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Position,
    Momentum,
}

impl Space {
    pub fn as_str(&self) -> &'static str {
        match self {
            Space::Position => "position",
            Space::Momentum => "momentum",
        }
    }
}

/// Probability density on uniform bins, normalized so Σ prob·width = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionProfile {
    pub space: Space,
    pub t: f64,
    /// Bin centres, ascending.
    pub axis: Vec<f64>,
    pub prob: Vec<f64>,
    pub width: f64,
    /// Total probability before normalization.
    pub norm: f64,
}

impl DistributionProfile {
    /// Builds a profile from raw densities, normalizing them.
    pub fn from_density(space: Space, t: f64, axis: Vec<f64>, density: Vec<f64>, width: f64) -> Result<Self> {
        if axis.len() != density.len() || axis.is_empty() {
            return Err(Error::param("profile", "axis and density must be non-empty and equal length"));
        }
        require_positive("width", width)?;
        let norm = density.iter().sum::<f64>() * width;
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Analysis(format!("profile carries no probability (norm {norm})")));
        }
        let prob = density.into_iter().map(|v| v.max(0.0) / norm).collect();
        Ok(DistributionProfile { space, t, axis, prob, width, norm })
    }

    pub fn total(&self) -> f64 {
        self.prob.iter().sum::<f64>() * self.width
    }

    /// Sums groups of `factor` adjacent bins into one, keeping the density
    /// normalization. Trailing bins that do not fill a group are dropped.
    pub fn rebin(&self, factor: usize) -> Result<Self> {
        if factor == 0 || factor > self.axis.len() {
            return Err(Error::param("factor", "must be between 1 and the bin count"));
        }
        let groups = self.axis.len() / factor;
        let axis = (0..groups)
            .map(|g| self.axis[g * factor..(g + 1) * factor].iter().sum::<f64>() / factor as f64)
            .collect();
        let density = (0..groups)
            .map(|g| self.prob[g * factor..(g + 1) * factor].iter().sum::<f64>() / factor as f64)
            .collect();
        Self::from_density(self.space, self.t, axis, density, self.width * factor as f64)
    }

    /// Mean and variance of the axis under the profile.
    pub fn moments(&self) -> (f64, f64) {
        let m = self.axis.iter().zip(&self.prob).map(|(x, p)| x * p).sum::<f64>() * self.width;
        let v = self.axis.iter().zip(&self.prob).map(|(x, p)| (x - m).powi(2) * p).sum::<f64>()
            * self.width;
        (m, v)
    }
}

/// |ψ(z)|² on the grid points.
pub fn position_distribution(psi: &Wavefunction) -> Result<DistributionProfile> {
    let g = &psi.grid;
    let density = psi.amp.iter().map(|a| a.norm_sqr()).collect();
    DistributionProfile::from_density(Space::Position, psi.t, g.positions(), density, g.dz())
}

/// |φ(p)|² on the symmetric momentum axis −N/2·dp .. (N/2 − 1)·dp.
pub fn momentum_distribution(psi: &Wavefunction) -> Result<DistributionProfile> {
    let g = &psi.grid;
    let n = g.n_points;
    let phi = psi.momentum_amplitudes(forward_plan(n).as_ref());
    let half = n / 2;
    let order = (half..n).chain(0..half);
    let (axis, density): (Vec<f64>, Vec<f64>) =
        order.map(|j| (g.momentum_of_slot(j, psi.kbar), phi[j].norm_sqr())).unzip();
    DistributionProfile::from_density(Space::Momentum, psi.t, axis, density, g.dp(psi.kbar))
}
