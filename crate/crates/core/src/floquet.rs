//! One-period Floquet operator in the eigenbasis of the undriven mirror and
//! its quasi-energy spectrum.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, Schur, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{require_positive, Error, Result};
use crate::model;
use crate::quantum::{inverse_plan, Grid, PotentialMode, SplitOperator, Wavefunction};
use crate::units::DimensionlessParams;

/// Column norms may exceed one by at most this much (round-off); more means
/// the propagation is broken.
pub const NORM_EXCESS_LIMIT: f64 = 1e-6;

/// Lowest eigenstates of the undriven Hamiltonian on a grid, with the kinetic
/// term in the same spectral form the split-operator propagator uses.
#[derive(Debug, Clone)]
pub struct StaticBasis {
    pub grid: Grid,
    pub kbar: f64,
    pub energies: Vec<f64>,
    /// Real eigenvectors normalized so that Σ|φ|² dz = 1, one per entry.
    pub states: Vec<Vec<f64>>,
}

impl StaticBasis {
    pub fn new(d: &DimensionlessParams, grid: &Grid, basis_dim: usize) -> Result<Self> {
        d.validate()?;
        grid.validate()?;
        let n = grid.n_points;
        if basis_dim == 0 || basis_dim > n {
            return Err(Error::param("basis_dim", format!("must lie in 1..={n}, got {basis_dim}")));
        }
        let h = static_hamiltonian(d, grid);
        let eig = SymmetricEigen::try_new(h, 1e-14, 0)
            .ok_or_else(|| Error::Eigen("static Hamiltonian did not converge".into()))?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let scale = 1.0 / grid.dz().sqrt();
        let mut energies = Vec::with_capacity(basis_dim);
        let mut states = Vec::with_capacity(basis_dim);
        for &k in order.iter().take(basis_dim) {
            let col = eig.eigenvectors.column(k);
            // Fix the sign so the largest component is positive.
            let peak = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            let s = scale * peak.signum();
            energies.push(eig.eigenvalues[k]);
            states.push(col.iter().map(|v| v * s).collect());
        }
        Ok(StaticBasis { grid: *grid, kbar: d.kbar, energies, states })
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    fn wavefunction(&self, j: usize, t: f64) -> Wavefunction {
        let amp = self.states[j].iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Wavefunction { grid: self.grid, amp, t, kbar: self.kbar, absorbed: 0.0 }
    }

    /// Basis coefficients ⟨φ_i|ψ⟩.
    pub fn project(&self, psi: &Wavefunction) -> Vec<Complex64> {
        let dz = self.grid.dz();
        self.states
            .iter()
            .map(|phi| phi.iter().zip(&psi.amp).map(|(&f, a)| a * f).sum::<Complex64>() * dz)
            .collect()
    }
}

/// T + V with T_jk = (1/N) Σ_m p_m²/2 e^{i p_m (z_j − z_k)/k̄} and
/// V = z + V₀e^{−κz}, both in the split-operator discretization.
fn static_hamiltonian(d: &DimensionlessParams, grid: &Grid) -> DMatrix<f64> {
    let n = grid.n_points;
    let mut row: Vec<Complex64> = (0..n)
        .map(|m| {
            let p = grid.momentum_of_slot(m, d.kbar);
            Complex64::new(p * p / 2.0 / n as f64, 0.0)
        })
        .collect();
    inverse_plan(n).process(&mut row);
    let undriven = d.with_lambda(0.0);
    DMatrix::from_fn(n, n, |j, k| {
        let mut v = row[(j + n - k) % n].re;
        if j == k {
            v += model::potential(grid.z(j), 0.0, &undriven);
        }
        v
    })
}

#[derive(Debug, Clone)]
pub struct FloquetOperator {
    pub dim: usize,
    /// F_ij = ⟨φ_i|U(t0 + 2π, t0)|φ_j⟩.
    pub matrix: DMatrix<Complex64>,
    pub period: f64,
    /// Start of the period on the drive clock.
    pub t0: f64,
    /// Step actually used: 2π split into a whole number of steps.
    pub dt: f64,
    pub params: DimensionlessParams,
    /// Largest 1 − ‖F e_j‖² over the core columns.
    pub deficit: f64,
    /// Number of leading columns the deficit is taken over.
    pub core: usize,
}

impl FloquetOperator {
    pub fn identity(dim: usize, params: DimensionlessParams) -> Self {
        FloquetOperator {
            dim,
            matrix: DMatrix::identity(dim, dim),
            period: TAU,
            t0: 0.0,
            dt: TAU,
            params,
            deficit: 0.0,
            core: dim,
        }
    }

    /// max_j |1 − ‖F e_j‖²| over the first `k` columns.
    pub fn column_deficit(&self, k: usize) -> f64 {
        (0..k.min(self.dim))
            .map(|j| (1.0 - self.matrix.column(j).norm_squared()).abs())
            .fold(0.0, f64::max)
    }
}

/// Builds the Floquet operator over the period starting at t = 0. See
/// [`build_floquet_with`].
pub fn build_floquet(d: &DimensionlessParams, grid: &Grid, basis_dim: usize, dt: f64) -> Result<FloquetOperator> {
    let basis = StaticBasis::new(d, grid, basis_dim)?;
    build_floquet_with(&basis, d, dt, 0.0)
}

/// Propagates every basis state over one drive period starting at `t0`
/// (split-operator, no absorber) and projects back onto the basis. States
/// near the top of the basis leak out of it; the reported deficit covers the
/// lower half of the columns.
pub fn build_floquet_with(basis: &StaticBasis, d: &DimensionlessParams, dt: f64, t0: f64) -> Result<FloquetOperator> {
    d.validate()?;
    require_positive("dt", dt)?;
    if d.kbar != basis.kbar {
        return Err(Error::param("kbar", "basis was built for a different k̄"));
    }
    let n_steps = (TAU / dt - 1e-9).ceil().max(1.0) as u64;
    let step = TAU / n_steps as f64;
    let dim = basis.dim();
    let columns: Vec<Vec<Complex64>> = (0..dim)
        .into_par_iter()
        .map_init(
            || SplitOperator::new(&basis.grid, step, d, PotentialMode::Full, None),
            |op, j| {
                let op = op.as_mut().map_err(|e| Error::param("floquet", e.to_string()))?;
                let mut psi = basis.wavefunction(j, t0);
                op.steps(&mut psi, t0, n_steps)?;
                Ok(basis.project(&psi))
            },
        )
        .collect::<Result<_>>()?;
    let matrix = DMatrix::from_fn(dim, dim, |i, j| columns[j][i]);
    let excess = (0..dim)
        .map(|j| matrix.column(j).norm_squared() - 1.0)
        .fold(f64::NEG_INFINITY, f64::max);
    if excess > NORM_EXCESS_LIMIT {
        return Err(Error::NonUnitary { excess });
    }
    let mut f = FloquetOperator {
        dim,
        matrix,
        period: TAU,
        t0,
        dt: step,
        params: *d,
        deficit: 0.0,
        core: dim.div_ceil(2),
    };
    f.deficit = f.column_deficit(f.core);
    Ok(f)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuasiSpectrum {
    /// Eigenphases arg(μ) in [0, 2π), sorted.
    pub eigenphases: Vec<f64>,
    /// Σ|c_n|⁴ of each normalized eigenvector, aligned with `eigenphases`.
    pub ipr: Vec<f64>,
    /// |μ| of each eigenvalue; below one where the basis truncation leaks.
    pub moduli: Vec<f64>,
}

impl QuasiSpectrum {
    pub fn mean_ipr(&self) -> f64 {
        self.ipr.iter().sum::<f64>() / self.ipr.len() as f64
    }

    /// Mean IPR over eigenvectors whose eigenvalue modulus is at least
    /// `min_modulus`, which drops states that leak out of the basis.
    pub fn mean_ipr_above(&self, min_modulus: f64) -> Option<f64> {
        let v: Vec<f64> =
            self.ipr.iter().zip(&self.moduli).filter(|(_, &m)| m >= min_modulus).map(|(i, _)| *i).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Eigenphases and eigenvector IPRs via a complex Schur decomposition
/// F = Q T Q†, with eigenvectors from back substitution on T.
pub fn quasi_spectrum(f: &FloquetOperator, tolerance: f64) -> Result<QuasiSpectrum> {
    let excess = (0..f.dim)
        .map(|j| f.matrix.column(j).norm_squared() - 1.0)
        .fold(f64::NEG_INFINITY, f64::max);
    if excess > NORM_EXCESS_LIMIT || f.deficit > tolerance {
        return Err(Error::NonUnitary { excess: excess.max(f.deficit) });
    }
    let n = f.dim;
    let schur = Schur::try_new(f.matrix.clone(), 1e-15, 0)
        .ok_or_else(|| Error::Eigen("Schur decomposition did not converge".into()))?;
    let (q, t) = schur.unpack();
    let mut entries: Vec<(f64, f64, f64)> = Vec::with_capacity(n);
    let tiny = 1e-14;
    for k in 0..n {
        let mu = t[(k, k)];
        let mut y = vec![Complex64::new(0.0, 0.0); k + 1];
        y[k] = Complex64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let s: Complex64 = (i + 1..=k).map(|m| t[(i, m)] * y[m]).sum();
            let mut den = t[(i, i)] - mu;
            if den.norm() < tiny {
                den = Complex64::new(tiny, 0.0);
            }
            y[i] = -s / den;
        }
        let v: Vec<Complex64> = (0..n).map(|r| (0..=k).map(|m| q[(r, m)] * y[m]).sum()).collect();
        let norm2: f64 = v.iter().map(|c| c.norm_sqr()).sum();
        let ipr = v.iter().map(|c| c.norm_sqr().powi(2)).sum::<f64>() / (norm2 * norm2);
        entries.push((mu.arg().rem_euclid(TAU) % TAU, ipr.min(1.0), mu.norm()));
    }
    entries.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(QuasiSpectrum {
        eigenphases: entries.iter().map(|e| e.0).collect(),
        ipr: entries.iter().map(|e| e.1).collect(),
        moduli: entries.iter().map(|e| e.2).collect(),
    })
}

/// Expected λ = 0 eigenphase of level E: −E·2π/k̄ wrapped into [0, 2π).
pub fn static_phase(energy: f64, kbar: f64) -> f64 {
    (-energy * TAU / kbar).rem_euclid(TAU) % TAU
}

/// Distance between two phases on the circle.
pub fn phase_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Amplitudes of `psi` after one period computed two ways: directly, and by
/// applying F to its basis coefficients. Returns |⟨direct|via F⟩|² over the
/// product of the two norms.
pub fn floquet_consistency(basis: &StaticBasis, f: &FloquetOperator, psi: &Wavefunction, periods: u32) -> Result<f64> {
    let mut op = SplitOperator::new(&basis.grid, f.dt, &f.params, PotentialMode::Full, None)?;
    let n_steps = (f.period / f.dt).round() as u64 * periods as u64;
    let mut direct = psi.clone();
    op.steps(&mut direct, f.t0, n_steps)?;
    let a = nalgebra::DVector::from_vec(basis.project(&direct));
    let mut b = nalgebra::DVector::from_vec(basis.project(psi));
    for _ in 0..periods {
        b = &f.matrix * b;
    }
    let ov = a.dotc(&b);
    Ok(ov.norm_sqr() / (a.norm_squared() * b.norm_squared()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (DimensionlessParams, Grid) {
        (DimensionlessParams::mirror(0.0, 1.0), Grid::new(-6.0, 42.0, 256).unwrap())
    }

    #[test]
    fn static_basis_is_orthonormal() {
        let (d, g) = small();
        let b = StaticBasis::new(&d, &g, 20).unwrap();
        for i in 0..20 {
            let psi = b.wavefunction(i, 0.0);
            let c = b.project(&psi);
            for (j, cj) in c.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((cj.re - want).abs() < 1e-10 && cj.im.abs() < 1e-12);
            }
        }
        assert!(b.energies.windows(2).all(|w| w[1] > w[0]));
        assert!(b.energies[0] > model::equilibrium_height(&d));
    }

    #[test]
    fn identity_has_zero_phases() {
        let f = FloquetOperator::identity(5, DimensionlessParams::mirror(0.0, 1.0));
        let s = quasi_spectrum(&f, 1e-6).unwrap();
        assert!(s.eigenphases.iter().all(|&p| p.abs() < 1e-12));
        assert!(s.ipr.iter().all(|&p| (p - 1.0).abs() < 1e-12));
    }

    #[test]
    fn undriven_operator_is_diagonal() {
        let (d, g) = small();
        let b = StaticBasis::new(&d, &g, 24).unwrap();
        let f = build_floquet_with(&b, &d, TAU / 400.0, 0.0).unwrap();
        for j in 0..12 {
            let diag = f.matrix[(j, j)];
            assert!((diag.norm() - 1.0).abs() < 1e-6, "{j} {}", diag.norm());
            assert!(phase_distance(diag.arg(), static_phase(b.energies[j], d.kbar)) < 2e-2);
        }
        assert!(f.deficit < 1e-6);
    }

    #[test]
    fn non_unitary_input_rejected() {
        let mut f = FloquetOperator::identity(3, DimensionlessParams::mirror(0.0, 1.0));
        f.matrix[(0, 0)] = Complex64::new(1.1, 0.0);
        assert!(matches!(quasi_spectrum(&f, 1e-6), Err(Error::NonUnitary { .. })));
        let mut g = FloquetOperator::identity(3, DimensionlessParams::mirror(0.0, 1.0));
        g.deficit = 1e-3;
        assert!(quasi_spectrum(&g, 1e-6).is_err());
    }

    #[test]
    fn two_level_mixing_lowers_ipr() {
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let mut f = FloquetOperator::identity(2, DimensionlessParams::mirror(0.0, 1.0));
        // Rotation with eigenvalues e^{±iθ} and eigenvectors (1, ∓i)/√2.
        f.matrix = DMatrix::from_row_slice(2, 2, &[
            Complex64::new(c, 0.0), Complex64::new(-c, 0.0),
            Complex64::new(c, 0.0), Complex64::new(c, 0.0),
        ]);
        let s = quasi_spectrum(&f, 1e-6).unwrap();
        assert!(s.ipr.iter().all(|&p| (p - 0.5).abs() < 1e-12));
        assert!((s.eigenphases[0] - TAU / 8.0).abs() < 1e-12);
        assert!((s.eigenphases[1] - 7.0 * TAU / 8.0).abs() < 1e-12);
    }
}
