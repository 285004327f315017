use std::f64::consts::TAU;

use fermi_core::floquet::{
    build_floquet_with, floquet_consistency, phase_distance, quasi_spectrum, static_phase, QuasiSpectrum,
    StaticBasis,
};
use fermi_core::quantum::Grid;
use fermi_core::DimensionlessParams;

const CORE_MODULUS: f64 = 1.0 - 1e-9;

fn grid() -> Grid {
    Grid::new(-6.0, 90.0, 512).unwrap()
}

fn core_phases(s: &QuasiSpectrum) -> Vec<f64> {
    s.eigenphases.iter().zip(&s.moduli).filter(|(_, &m)| m > CORE_MODULUS).map(|(p, _)| *p).collect()
}

/// Largest distance from a phase in `a` to its nearest neighbour in `b`.
fn worst_match(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .map(|p| b.iter().map(|q| phase_distance(*p, *q)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

#[test]
fn undriven_phases_follow_static_energies_at_second_order() {
    let d = DimensionlessParams::mirror(0.0, 1.0);
    let b = StaticBasis::new(&d, &grid(), 60).unwrap();
    let err = |steps: f64| {
        let f = build_floquet_with(&b, &d, TAU / steps, 0.0).unwrap();
        (0..50).map(|j| phase_distance(f.matrix[(j, j)].arg(), static_phase(b.energies[j], 1.0))).fold(0.0, f64::max)
    };
    let (coarse, fine) = (err(500.0), err(1000.0));
    assert!(fine < 1e-3, "{fine}");
    let ratio = coarse / fine;
    assert!((3.6..=4.4).contains(&ratio), "{ratio}");

    let f = build_floquet_with(&b, &d, TAU / 1000.0, 0.0).unwrap();
    let s = quasi_spectrum(&f, 1e-6).unwrap();
    let core: Vec<f64> = s.ipr.iter().zip(&s.moduli).filter(|(_, &m)| m > CORE_MODULUS).map(|(i, _)| *i).collect();
    assert!(core.len() >= 50);
    assert!(core.iter().all(|&i| i > 1.0 - 1e-6));
}

#[test]
fn spectrum_does_not_depend_on_period_start() {
    let d = DimensionlessParams::mirror(0.4, 1.0);
    let b = StaticBasis::new(&d, &grid(), 100).unwrap();
    let s0 = quasi_spectrum(&build_floquet_with(&b, &d, TAU / 2000.0, 0.0).unwrap(), 1e-6).unwrap();
    let s1 = quasi_spectrum(&build_floquet_with(&b, &d, TAU / 2000.0, 1.3).unwrap(), 1e-5).unwrap();
    let (a, c) = (core_phases(&s0), core_phases(&s1));
    assert!(a.len() >= 10);
    assert_eq!(a.len(), c.len());
    assert!(worst_match(&a, &c) < 1e-6);
}

#[test]
fn doubling_the_basis_leaves_converged_phases() {
    let d = DimensionlessParams::mirror(0.4, 1.0);
    let small = StaticBasis::new(&d, &grid(), 100).unwrap();
    let large = StaticBasis::new(&d, &grid(), 200).unwrap();
    let f = |b: &StaticBasis| quasi_spectrum(&build_floquet_with(b, &d, TAU / 2000.0, 0.0).unwrap(), 1e-6).unwrap();
    let (a, c) = (core_phases(&f(&small)), core_phases(&f(&large)));
    assert!(worst_match(&a, &c) < 1e-6);
}

#[test]
fn two_periods_equal_operator_squared() {
    let d = DimensionlessParams::mirror(0.4, 1.0);
    let b = StaticBasis::new(&d, &grid(), 200).unwrap();
    let f = build_floquet_with(&b, &d, TAU / 2000.0, 0.0).unwrap();
    assert!(f.deficit < 1e-6);
    for j in [0, 5, 20] {
        let amp = b.states[j].iter().map(|&v| num_complex::Complex64::new(v, 0.0)).collect();
        let psi = fermi_core::quantum::Wavefunction { grid: b.grid, amp, t: 0.0, kbar: 1.0, absorbed: 0.0 };
        let overlap = floquet_consistency(&b, &f, &psi, 2).unwrap();
        assert!(overlap > 1.0 - 1e-8, "{j}: {overlap}");
    }
}

#[test]
fn stronger_drive_spreads_eigenvectors() {
    let d = DimensionlessParams::mirror(0.0, 1.0);
    let b = StaticBasis::new(&d, &grid(), 200).unwrap();
    let ipr = |lam: f64| {
        let d = d.with_lambda(lam);
        quasi_spectrum(&build_floquet_with(&b, &d, TAU / 2000.0, 0.0).unwrap(), 1e-6).unwrap().mean_ipr()
    };
    let (inside, above) = (ipr(0.4), ipr(0.7));
    assert!(inside > above, "{inside} vs {above}");
}
