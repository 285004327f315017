use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{ClassicalState, DriveTable, Integrator, Scheme, BATCH};
use crate::error::{require_positive, Error, Result};
use crate::units::DimensionlessParams;

/// Particles sharing one clock. Escaped particles stay in place (flagged) so
/// that indices remain stable.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub states: Vec<ClassicalState>,
    pub escaped: Vec<bool>,
    pub rng_seed: u64,
}

impl Ensemble {
    pub fn new(states: Vec<ClassicalState>, rng_seed: u64) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::param("ensemble", "must contain at least one particle"));
        }
        let t = states[0].t;
        if states.iter().any(|s| s.t != t) {
            return Err(Error::param("ensemble", "particles must share one clock"));
        }
        let escaped = vec![false; states.len()];
        Ok(Ensemble { states, escaped, rng_seed })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self) -> f64 {
        self.states[0].t
    }

    pub fn escaped_count(&self) -> usize {
        self.escaped.iter().filter(|&&e| e).count()
    }

    /// States of particles that have not escaped, in index order.
    pub fn live(&self) -> impl Iterator<Item = &ClassicalState> {
        self.states.iter().zip(&self.escaped).filter(|(_, &e)| !e).map(|(s, _)| s)
    }
}

/// Mean and population variance of position and momentum over live particles.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MomentTrace {
    pub times: Vec<f64>,
    pub mean_z: Vec<f64>,
    pub mean_p: Vec<f64>,
    pub var_z: Vec<f64>,
    pub var_p: Vec<f64>,
}

impl MomentTrace {
    fn record(&mut self, t: f64, e: &Ensemble) {
        let (mut n, mut sz, mut sp) = (0.0, 0.0, 0.0);
        for s in e.live() {
            n += 1.0;
            sz += s.z;
            sp += s.p;
        }
        let (mz, mp) = (sz / n, sp / n);
        let (mut vz, mut vp) = (0.0, 0.0);
        for s in e.live() {
            vz += (s.z - mz) * (s.z - mz);
            vp += (s.p - mp) * (s.p - mp);
        }
        self.times.push(t);
        self.mean_z.push(mz);
        self.mean_p.push(mp);
        self.var_z.push(vz / n);
        self.var_p.push(vp / n);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Sample closest to time `t`.
    pub fn index_near(&self, t: f64) -> Option<usize> {
        (0..self.times.len()).min_by(|&a, &b| {
            (self.times[a] - t).abs().total_cmp(&(self.times[b] - t).abs())
        })
    }
}

/// Independent normal samples around (z0, p0) with standard deviations
/// (dz, dp), reproducible from `seed`.
pub fn sample_gaussian_ensemble(
    z0: f64,
    p0: f64,
    dz: f64,
    dp: f64,
    n: usize,
    seed: u64,
) -> Result<Ensemble> {
    require_positive("dz", dz)?;
    require_positive("dp", dp)?;
    if n == 0 {
        return Err(Error::param("n", "must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states = (0..n)
        .map(|_| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            ClassicalState::new(z0 + dz * a, p0 + dp * b, 0.0)
        })
        .collect();
    Ensemble::new(states, seed)
}

/// Integrates every particle to `t_final`, recording moments at the start and
/// every `record_every` time units thereafter (snapped to whole steps), plus
/// the final time.
///
/// Fails when more than half the particles escape.
pub fn evolve_ensemble(
    e: &Ensemble,
    t_final: f64,
    integrator: &Integrator,
    d: &DimensionlessParams,
    record_every: f64,
) -> Result<(Ensemble, MomentTrace)> {
    require_positive("t_final", t_final)?;
    require_positive("record_every", record_every)?;
    require_positive("dt", integrator.dt)?;
    if e.is_empty() {
        return Err(Error::param("ensemble", "empty"));
    }
    let origin = e.time();
    if !(t_final > origin) {
        return Err(Error::param("t_final", format!("must exceed ensemble time {origin}")));
    }
    let dt = integrator.dt;
    let steps_per_record = ((record_every / dt).round() as u64).max(1);
    let k_total = ((t_final - origin) / dt + 1e-9).floor() as u64;

    let mut out = e.clone();
    let mut trace = MomentTrace::default();
    trace.record(origin, &out);

    let mut m = 1u64;
    loop {
        let t_rec = origin + (m * steps_per_record) as f64 * dt;
        let target = if t_rec < t_final { t_rec } else { t_final };
        if integrator.scheme == Scheme::Verlet {
            let k_hi = (m * steps_per_record).min(k_total);
            let table = DriveTable::new(origin, dt, (m - 1) * steps_per_record, k_hi, d);
            out.states
                .par_chunks_mut(16 * BATCH)
                .zip(out.escaped.par_chunks_mut(16 * BATCH))
                .for_each(|(s, esc)| integrator.verlet_table_run(s, esc, &table, d));
        }
        // Remaining steps (all of them for other schemes) one particle at a time.
        out.states
            .par_iter_mut()
            .zip(out.escaped.par_iter_mut())
            .filter(|(_, esc)| !**esc)
            .for_each(|(s, esc)| {
                if integrator.advance(s, origin, target, d).is_err() {
                    *esc = true;
                }
            });
        // Escaped particles keep their last state but must share the clock.
        for s in out.states.iter_mut() {
            s.t = target;
        }
        let lost = out.escaped_count();
        if 2 * lost > out.len() {
            return Err(Error::EnsembleLost { escaped: lost, total: out.len() });
        }
        trace.record(target, &out);
        if target >= t_final {
            break;
        }
        m += 1;
    }
    Ok((out, trace))
}
