//! Time evolution of the coupled Hartree system by Strang splitting, and the
//! distance from a state to the gauge orbit of a ground state.
//!
//! The integrator solves
//!
//! ```text
//! i d/dt psi_j = Delta psi_j + (W * sum_k |psi_k|^p) |psi_j|^{p-2} psi_j,
//! ```
//!
//! the orientation for which `psi_j(t) = e^{-i lambda_j t} phi_j` is an exact
//! solution whenever `(phi, lambda)` solves the stationary system. Both
//! sub-flows are pointwise phase rotations (in real and in Fourier space), so
//! every component's mass is conserved to roundoff.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{MultiField, Spectral};
use crate::hartree::{mean_field_potential, total_energy, Kernel};
use crate::minimize::{argmax, GroundState};

/// Precomputed split-step propagator for a fixed time step.
#[derive(Debug, Clone)]
pub struct Propagator<'a> {
    kernel: &'a Kernel,
    power: f64,
    dt: f64,
    kinetic_phase: Vec<Complex64>,
}

impl<'a> Propagator<'a> {
    pub fn new(kernel: &'a Kernel, power: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "time step must be positive, got {dt}"
            )));
        }
        let kinetic_phase = kernel
            .spectral()
            .wavenumber_sq()
            .iter()
            .map(|k2| Complex64::from_polar(1.0, k2 * dt))
            .collect();
        Ok(Self {
            kernel,
            power,
            dt,
            kinetic_phase,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn potential_half_step(&self, mf: &mut MultiField) -> Result<()> {
        let v = mean_field_potential(mf, self.kernel, self.power)?;
        let half = 0.5 * self.dt;
        let p = self.power;
        for c in mf.components_mut() {
            for (z, vx) in c.data_mut().iter_mut().zip(&v) {
                let a = z.norm();
                let w = if p == 2.0 {
                    1.0
                } else if a == 0.0 {
                    0.0
                } else {
                    a.powf(p - 2.0)
                };
                *z *= Complex64::from_polar(1.0, -vx * w * half);
            }
        }
        Ok(())
    }

    fn kinetic_step(&self, mf: &mut MultiField) -> Result<()> {
        let sp = self.kernel.spectral();
        for c in mf.components_mut() {
            let buf = c.data_mut();
            sp.forward_in_place(buf)?;
            for (z, ph) in buf.iter_mut().zip(&self.kinetic_phase) {
                *z *= ph;
            }
            sp.inverse_in_place(buf)?;
        }
        Ok(())
    }

    /// Half potential, full kinetic, half potential; the potential is frozen
    /// within each half step, which is exact because `|psi|` does not change there.
    pub fn step(&self, mf: &mut MultiField) -> Result<()> {
        if mf.grid() != self.kernel.grid() {
            return Err(Error::GridMismatch);
        }
        self.potential_half_step(mf)?;
        self.kinetic_step(mf)?;
        self.potential_half_step(mf)?;
        if !mf.is_finite() {
            return Err(Error::NonFinite("state after split step".into()));
        }
        Ok(())
    }
}

/// One Strang step of length `dt`.
pub fn step(mf: &MultiField, dt: f64, kernel: &Kernel, p: f64) -> Result<MultiField> {
    let mut out = mf.clone();
    Propagator::new(kernel, p, dt)?.step(&mut out)?;
    Ok(out)
}

/// Called at every recorded time.
pub trait Observer {
    fn observe(&mut self, t: f64, state: &MultiField);
}

impl<F: FnMut(f64, &MultiField)> Observer for F {
    fn observe(&mut self, t: f64, state: &MultiField) {
        self(t, state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionOptions {
    pub t_final: f64,
    pub dt: f64,
    /// Record every this many steps (the initial state is always recorded).
    pub sample_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvolutionTrace {
    pub times: Vec<f64>,
    /// `masses[j][s]` is the mass of component `j` at sample `s`.
    pub masses: Vec<Vec<f64>>,
    pub energy: Vec<f64>,
    /// Empty when no reference ground state was supplied.
    pub orbit_distance: Vec<f64>,
    pub dt: f64,
    pub t_final: f64,
    /// `max_{s,j} |M_j(t_s) - M_j(0)| / M_j(0)`.
    pub mass_drift: f64,
    /// `max_s |E(t_s) - E(0)| / |E(0)|`.
    pub energy_drift: f64,
    /// Energy drifted by more than 10%.
    pub unstable: bool,
}

/// Integrate from `mf0` up to `t_final` with fixed steps.
pub fn evolve(
    mf0: &MultiField,
    opts: &EvolutionOptions,
    kernel: &Kernel,
    p: f64,
    reference: Option<&GroundState>,
    observers: &mut [&mut dyn Observer],
) -> Result<(MultiField, EvolutionTrace)> {
    if !(opts.t_final > 0.0) || !(opts.dt > 0.0) {
        return Err(Error::InvalidParameter(
            "t_final and dt must be positive".into(),
        ));
    }
    let steps = (opts.t_final / opts.dt).round() as usize;
    if steps == 0 {
        return Err(Error::InvalidParameter(
            "t_final shorter than one step".into(),
        ));
    }
    let sample_every = opts.sample_every.max(1);
    let prop = Propagator::new(kernel, p, opts.dt)?;
    let metric = reference
        .map(|gs| OrbitMetric::new(gs, kernel.spectral()))
        .transpose()?;

    let m = mf0.len();
    let mut trace = EvolutionTrace {
        times: Vec::new(),
        masses: vec![Vec::new(); m],
        energy: Vec::new(),
        orbit_distance: Vec::new(),
        dt: opts.dt,
        t_final: steps as f64 * opts.dt,
        mass_drift: 0.0,
        energy_drift: 0.0,
        unstable: false,
    };
    let mut record = |t: f64, state: &MultiField, trace: &mut EvolutionTrace| -> Result<()> {
        trace.times.push(t);
        for (series, mass) in trace.masses.iter_mut().zip(state.masses()) {
            series.push(mass);
        }
        trace.energy.push(total_energy(state, kernel, p)?.total);
        if let Some(metric) = &metric {
            trace.orbit_distance.push(metric.distance(state)?);
        }
        for obs in observers.iter_mut() {
            obs.observe(t, state);
        }
        Ok(())
    };

    let mut state = mf0.clone();
    record(0.0, &state, &mut trace)?;
    for s in 1..=steps {
        prop.step(&mut state)?;
        if s % sample_every == 0 || s == steps {
            record(s as f64 * opts.dt, &state, &mut trace)?;
        }
    }

    let m0: Vec<f64> = trace.masses.iter().map(|s| s[0]).collect();
    trace.mass_drift = trace
        .masses
        .iter()
        .zip(&m0)
        .flat_map(|(series, &m0)| series.iter().map(move |m| (m - m0).abs() / m0))
        .fold(0.0, f64::max);
    let e0 = trace.energy[0];
    trace.energy_drift = trace
        .energy
        .iter()
        .map(|e| (e - e0).abs() / e0.abs())
        .fold(0.0, f64::max);
    trace.unstable = !(trace.energy_drift <= 0.1);
    Ok((state, trace))
}

/// Distance to the orbit `{ e^{i theta_j} phi_j(. - tau) }` of one ground state
/// in the `H1` product norm, with the translation restricted to grid shifts.
#[derive(Debug, Clone)]
pub struct OrbitMetric {
    spectral: Spectral,
    reference: MultiField,
    density_spectrum: Vec<Complex64>,
}

impl OrbitMetric {
    pub fn new(gs: &GroundState, spectral: &Spectral) -> Result<Self> {
        if gs.fields.grid() != spectral.grid() {
            return Err(Error::GridMismatch);
        }
        let mut buf: Vec<Complex64> = gs
            .fields
            .total_density()
            .into_iter()
            .map(|r| Complex64::new(r, 0.0))
            .collect();
        spectral.forward_in_place(&mut buf)?;
        Ok(Self {
            spectral: spectral.clone(),
            reference: gs.fields.clone(),
            density_spectrum: buf,
        })
    }

    /// Grid shift `tau` maximizing `sum_x rho_psi(x) rho_phi(x - tau)`.
    pub fn best_shift(&self, mf: &MultiField) -> Result<Vec<usize>> {
        let mut buf: Vec<Complex64> = mf
            .total_density()
            .into_iter()
            .map(|r| Complex64::new(r, 0.0))
            .collect();
        self.spectral.forward_in_place(&mut buf)?;
        for (a, b) in buf.iter_mut().zip(&self.density_spectrum) {
            *a *= b.conj();
        }
        self.spectral.inverse_in_place(&mut buf)?;
        let corr: Vec<f64> = buf.iter().map(|z| z.re).collect();
        let g = self.spectral.grid();
        let mut idx = vec![0; g.dim()];
        g.multi_index(argmax(&corr), &mut idx);
        Ok(idx)
    }

    pub fn distance(&self, mf: &MultiField) -> Result<f64> {
        mf.ensure_same_grid(&self.reference)?;
        let shift = self.best_shift(mf)?;
        let moved = self.reference.shifted(&shift);
        let mut total = 0.0;
        for (psi, phi) in mf.components().iter().zip(moved.components()) {
            let theta = phi.inner(psi)?.arg();
            let mut diff = psi.clone();
            diff.axpy(-Complex64::from_polar(1.0, theta), phi)?;
            total += self.spectral.h1_norm_sq(&diff);
        }
        Ok(total.sqrt())
    }
}

/// `inf_{tau, theta} ( sum_j |psi_j - e^{i theta_j} phi_j(. - tau)|_{H1}^2 )^{1/2}`.
pub fn orbit_distance(mf: &MultiField, gs: &GroundState) -> Result<f64> {
    OrbitMetric::new(gs, &Spectral::new(*gs.fields.grid()))?.distance(mf)
}

/// Distance to the nearest of several ground-state orbits.
pub fn orbit_distance_to_set(mf: &MultiField, states: &[GroundState]) -> Result<f64> {
    let mut best = f64::INFINITY;
    for gs in states {
        best = best.min(orbit_distance(mf, gs)?);
    }
    if states.is_empty() {
        return Err(Error::InvalidParameter("empty ground-state set".into()));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Field, Grid};
    use crate::minimize::{ground_state, Init, SolverOptions};
    use crate::params::SystemParams;
    use std::sync::OnceLock;

    fn reference() -> &'static (Kernel, GroundState) {
        static CELL: OnceLock<(Kernel, GroundState)> = OnceLock::new();
        CELL.get_or_init(|| {
            let params = SystemParams {
                space_dim: 1,
                components: 2,
                power: 2.0,
                kernel_exponent: 0.5,
                masses: vec![1.0, 0.5],
                box_length: 30.0,
                points_per_dim: 128,
            };
            let kernel = Kernel::power_law(Grid::from_params(&params).unwrap(), 0.5).unwrap();
            let gs =
                ground_state(&params, &kernel, &Init::Gaussian, &SolverOptions::default()).unwrap();
            assert!(gs.converged);
            (kernel, gs)
        })
    }

    #[test]
    fn zero_state_stays_zero() {
        let g = Grid::new(1, 32, 10.0).unwrap();
        let k = Kernel::power_law(g, 0.5).unwrap();
        let out = step(&MultiField::zeros(g, 2), 0.01, &k, 2.0).unwrap();
        assert!(out.components().iter().all(|c| c.mass() == 0.0));
        assert!(step(&MultiField::zeros(g, 1), 0.0, &k, 2.0).is_err());
    }

    #[test]
    fn free_plane_wave_is_exact() {
        let g = Grid::new(1, 64, 10.0).unwrap();
        let k0 = Kernel::zero(g);
        let k = g.wavenumber(5);
        let wave = Field::from_fn(g, |x| Complex64::from_polar(1.0, k * x[0]));
        let mut mf = MultiField::new(vec![wave]).unwrap();
        let prop = Propagator::new(&k0, 2.0, 0.05).unwrap();
        for _ in 0..20 {
            prop.step(&mut mf).unwrap();
        }
        let t = 1.0;
        let exact = Field::from_fn(g, |x| Complex64::from_polar(1.0, k * x[0] + k * k * t));
        assert!(mf.component(0).sub(&exact).unwrap().l2_norm() < 1e-11);
    }

    #[test]
    fn mass_conserved_per_step() {
        let (kernel, gs) = reference();
        let mut mf = gs.fields.clone();
        mf.components_mut()[0].data_mut()[40] += Complex64::new(0.05, 0.02);
        let before = mf.masses();
        let prop = Propagator::new(kernel, 2.0, 0.01).unwrap();
        for _ in 0..10 {
            prop.step(&mut mf).unwrap();
            for (a, b) in mf.masses().iter().zip(&before) {
                assert!((a - b).abs() / b <= 1e-12);
            }
        }
    }

    #[test]
    fn short_free_evolution_records_every_step() {
        let g = Grid::new(1, 32, 10.0).unwrap();
        let k0 = Kernel::zero(g);
        let bump = Field::from_fn(g, |x| Complex64::new((-x[0] * x[0]).exp(), 0.0));
        let mf = MultiField::new(vec![bump]).unwrap();
        let opts = EvolutionOptions {
            t_final: 10.0 * 0.01,
            dt: 0.01,
            sample_every: 1,
        };
        let mut seen = 0;
        let mut count = |_: f64, _: &MultiField| seen += 1;
        let (_, trace) = evolve(&mf, &opts, &k0, 2.0, None, &mut [&mut count]).unwrap();
        assert_eq!(seen, 11);
        assert_eq!(trace.times.len(), 11);
        assert!(trace.times.windows(2).all(|w| w[1] > w[0]));
        assert!(trace.mass_drift <= 1e-12);
        assert!(trace.orbit_distance.is_empty());
    }

    #[test]
    fn standing_wave_modulus_is_stationary() {
        let (kernel, gs) = reference();
        let opts = EvolutionOptions {
            t_final: 1.0,
            dt: 1e-3,
            sample_every: 100,
        };
        let (end, trace) = evolve(&gs.fields, &opts, kernel, 2.0, Some(gs), &mut []).unwrap();
        for (a, b) in end.components().iter().zip(gs.fields.components()) {
            let da: Vec<f64> = a.modulus();
            let db: Vec<f64> = b.modulus();
            let d2: f64 = da
                .iter()
                .zip(&db)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                * a.grid().cell_volume();
            assert!(d2.sqrt() <= 1e-4);
        }
        assert!(trace.orbit_distance.iter().all(|d| *d <= 1e-4));
        assert!(!trace.unstable);
    }

    #[test]
    fn orbit_distance_gauge_invariance() {
        let (_, gs) = reference();
        assert!(orbit_distance(&gs.fields, gs).unwrap() <= 1e-10);
        let moved = gs.fields.shifted(&[7]);
        let comps = moved
            .components()
            .iter()
            .enumerate()
            .map(|(j, c)| c.scaled(Complex64::from_polar(1.0, 0.3 + j as f64)))
            .collect();
        let moved = MultiField::new(comps).unwrap();
        assert!(orbit_distance(&moved, gs).unwrap() <= 1e-8);
        let set = [gs.clone(), gs.clone()];
        assert!(orbit_distance_to_set(&moved, &set).unwrap() <= 1e-8);
    }

    #[test]
    fn orbit_distance_of_small_perturbation() {
        let (kernel, gs) = reference();
        let g = *gs.fields.grid();
        let eps = 1e-3;
        let pert = Field::from_fn(g, |x| {
            Complex64::new((-(x[0] - 1.0).powi(2)).exp(), 0.5 * (-x[0] * x[0]).exp())
        });
        let mut mf = gs.fields.clone();
        mf.components_mut()[0]
            .axpy(Complex64::new(eps, 0.0), &pert)
            .unwrap();
        let bound = eps * kernel.spectral().h1_norm_sq(&pert).sqrt();
        let d = orbit_distance(&mf, gs).unwrap();
        assert!(d > 0.0 && d <= bound * (1.0 + 1e-9), "{d} {bound}");
    }
}
