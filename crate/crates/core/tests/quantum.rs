use std::f64::consts::TAU;

use fermi_core::analysis::{fit_decay, positive_tail_range, DecayModel};
use fermi_core::model::equilibrium_height;
use fermi_core::quantum::{
    expectations, init_gaussian, momentum_distribution, position_distribution, propagate, Absorber, Grid,
    PotentialMode, Propagation, SplitOperator, Wavefunction,
};
use fermi_core::DimensionlessParams;

fn variance_z(psi: &Wavefunction) -> (f64, f64) {
    let dz = psi.grid.dz();
    let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for (j, a) in psi.amp.iter().enumerate() {
        let (z, w) = (psi.grid.z(j), a.norm_sqr() * dz);
        m0 += w;
        m1 += w * z;
        m2 += w * z * z;
    }
    let mean = m1 / m0;
    (mean, m2 / m0 - mean * mean)
}

fn no_absorber(dt: f64) -> Propagation {
    Propagation { dt, absorber: None, ..Propagation::default() }
}

#[test]
fn free_packet_spreads_analytically() {
    let g = Grid::new(-60.0, 60.0, 4096).unwrap();
    let d = DimensionlessParams::mirror(0.4, 1.0);
    let (z0, p0, w) = (-10.0, 2.0, 0.5);
    let psi = init_gaussian(z0, p0, w, 1.0, &g).unwrap();
    let settings = Propagation { mode: PotentialMode::Free, ..no_absorber(0.01) };
    let t = 5.0;
    let (out, _) = propagate(&psi, t, &settings, &d, 1.0).unwrap();
    let (mean, var) = variance_z(&out);
    let want = w * w + (t / (2.0 * w)).powi(2);
    assert!(((var - want) / want).abs() < 1e-6, "{var} vs {want}");
    assert!((mean - (z0 + p0 * t)).abs() < 1e-6);
}

#[test]
fn norm_is_conserved_without_absorber() {
    let g = Grid::new(-20.0, 300.0, 4096).unwrap();
    let d = DimensionlessParams::mirror(0.4, 1.0);
    let psi = init_gaussian(20.0, 0.0, 0.5, 1.0, &g).unwrap();
    let (out, trace) = propagate(&psi, 1000.0, &no_absorber(TAU / 2000.0), &d, 50.0).unwrap();
    assert!(trace.norm.iter().all(|n| (n - 1.0).abs() < 1e-8));
    assert!((out.norm() - 1.0).abs() < 1e-8);
    let m = momentum_distribution(&out).unwrap();
    let x = position_distribution(&out).unwrap();
    assert!((m.norm - x.norm).abs() < 1e-10);
}

#[test]
fn ehrenfest_over_first_period() {
    let g = Grid::new(-20.0, 100.0, 2048).unwrap();
    let d = DimensionlessParams::mirror(0.4, 1.0);
    // Starts low enough to bounce within the period.
    let mut psi = init_gaussian(8.0, 0.0, 0.5, 1.0, &g).unwrap();
    let dt = TAU / 2000.0;
    let mut op = SplitOperator::new(&g, dt, &d, PotentialMode::Full, None).unwrap();
    let mut samples = vec![expectations(&psi, &d)];
    for _ in 0..2000 {
        op.steps(&mut psi, 0.0, 1).unwrap();
        samples.push(expectations(&psi, &d));
    }
    // Trapezoid integrals of ⟨p⟩ and ⟨F⟩ against the changes in ⟨z⟩ and ⟨p⟩.
    let integral = |f: &dyn Fn(usize) -> f64| (0..2000).map(|i| 0.5 * dt * (f(i) + f(i + 1))).sum::<f64>();
    let dz = samples[2000].mean_z - samples[0].mean_z;
    let dp = samples[2000].mean_p - samples[0].mean_p;
    let iz = integral(&|i| samples[i].mean_p);
    let ip = integral(&|i| samples[i].mean_force);
    let scale_z = samples.iter().map(|s| (s.mean_z - samples[0].mean_z).abs()).fold(0.0, f64::max);
    let scale_p = samples.iter().map(|s| (s.mean_p - samples[0].mean_p).abs()).fold(0.0, f64::max);
    assert!((dz - iz).abs() < 0.01 * scale_z, "{dz} vs {iz}");
    assert!((dp - ip).abs() < 0.01 * scale_p, "{dp} vs {ip}");
    // Pointwise finite differences at every tenth sample.
    for i in (10..1990).step_by(10) {
        let dpdt = (samples[i + 1].mean_p - samples[i - 1].mean_p) / (2.0 * dt);
        assert!((dpdt - samples[i].mean_force).abs() < 0.01 * samples[i].mean_force.abs().max(1.0));
    }
}

#[test]
fn halving_the_step_preserves_the_state() {
    let g = Grid::new(-20.0, 300.0, 4096).unwrap();
    let d = DimensionlessParams::mirror(0.4, 1.0);
    let psi = init_gaussian(20.0, 0.0, 0.5, 1.0, &g).unwrap();
    let (a, _) = propagate(&psi, 50.0, &no_absorber(TAU / 2000.0), &d, 10.0).unwrap();
    let (b, _) = propagate(&psi, 50.0, &no_absorber(TAU / 4000.0), &d, 10.0).unwrap();
    let overlap = a.inner(&b).unwrap().norm();
    assert!(overlap > 1.0 - 1e-6, "{overlap}");
}

#[test]
fn undriven_energy_drift_is_second_order() {
    let g = Grid::new(-20.0, 100.0, 2048).unwrap();
    let d = DimensionlessParams::mirror(0.0, 1.0);
    let psi = init_gaussian(20.0, 0.0, 0.5, 1.0, &g).unwrap();
    let e0 = expectations(&psi, &d).energy;
    let drift = |dt: f64| {
        let mut op = SplitOperator::new(&g, dt, &d, PotentialMode::Full, None).unwrap();
        let mut p = psi.clone();
        op.steps(&mut p, 0.0, (10.0 / dt).round() as u64).unwrap();
        (expectations(&p, &d).energy - e0).abs()
    };
    let (coarse, fine) = (drift(0.01), drift(0.005));
    assert!(coarse < 1e-2);
    assert!(coarse / fine > 3.0, "{coarse} {fine}");
}

#[test]
fn packet_at_equilibrium_breathes_at_harmonic_frequency() {
    let kbar = 0.05;
    let d = DimensionlessParams::mirror(0.0, kbar);
    let z_eq = equilibrium_height(&d);
    let omega = d.kappa.sqrt();
    let g = Grid::new(z_eq - 6.0, z_eq + 10.0, 2048).unwrap();
    // Coherent-state width of the local harmonic well, displaced slightly.
    let width = (kbar / (2.0 * omega)).sqrt();
    let psi = init_gaussian(z_eq + 0.1, 0.0, width, kbar, &g).unwrap();
    let (_, trace) = propagate(&psi, 60.0, &no_absorber(0.005), &d, 0.05).unwrap();
    // Downward crossings of ⟨z⟩ through the mean.
    let mean = trace.mean_z.iter().sum::<f64>() / trace.len() as f64;
    let mut crossings = Vec::new();
    for i in 1..trace.len() {
        let (a, b) = (trace.mean_z[i - 1] - mean, trace.mean_z[i] - mean);
        if a > 0.0 && b <= 0.0 {
            crossings.push(trace.times[i - 1] + (trace.times[i] - trace.times[i - 1]) * a / (a - b));
        }
    }
    assert!(crossings.len() >= 5);
    let period = (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64;
    let measured = TAU / period;
    assert!(((measured - omega) / omega).abs() < 0.02, "{measured} vs {omega}");
}

#[test]
fn absorber_barely_reflects() {
    // With V ≡ 0 the packet runs straight into the layer; anything that comes
    // back carries negative momentum.
    let g = Grid::new(-20.0, 300.0, 4096).unwrap();
    let d = DimensionlessParams::mirror(0.0, 1.0);
    for p0 in [3.0, 10.0] {
        let psi = init_gaussian(230.0, p0, 2.0, 1.0, &g).unwrap();
        let settings = Propagation {
            mode: PotentialMode::Free,
            absorber: Some(Absorber::default()),
            absorb_limit: 1.0,
            ..Propagation::default()
        };
        let (out, _) = propagate(&psi, 150.0 / p0, &settings, &d, 1.0).unwrap();
        let m = momentum_distribution(&out).unwrap();
        let back: f64 = m.axis.iter().zip(&m.prob).filter(|(p, _)| **p < 0.0).map(|(_, w)| w * m.width).sum();
        let reflected = back * m.norm;
        assert!(reflected < 1e-6, "p0 = {p0}: {reflected}");
        assert!(out.absorbed > 0.5);
    }
}

#[test]
fn doubling_grid_points_keeps_localization_length() {
    let d = DimensionlessParams::mirror(0.4, 1.0);
    let length = |n: usize| {
        let g = Grid::new(-20.0, 300.0, n).unwrap();
        let psi = init_gaussian(20.0, 0.0, 0.5, 1.0, &g).unwrap();
        let (out, _) = propagate(&psi, 300.0, &Propagation::default(), &d, 50.0).unwrap();
        let m = momentum_distribution(&out).unwrap().rebin(n / 1024).unwrap();
        let range = positive_tail_range(&m, 6.0, 1e-20, true).unwrap();
        fit_decay(&m, range, DecayModel::ExpLinear, true).unwrap().localization_length().unwrap()
    };
    let (a, b) = (length(4096), length(8192));
    assert!(((a - b) / a).abs() < 0.05, "{a} vs {b}");
}
