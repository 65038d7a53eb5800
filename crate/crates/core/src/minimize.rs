//! Mass-constrained ground states by projected L2 gradient flow.
//!
//! Each iteration takes `x <- P(x - tau grad I(x))`, where `P` rescales every
//! component back onto its mass sphere, and `tau` starts at
//! `1 / (max |k|^2 + 1)` and is halved until the energy does not increase.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, MultiField};
use crate::hartree::{evaluate, residuals_from_gradient, total_energy, EnergyBreakdown, Kernel};
use crate::params::SystemParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stop once `max_j |grad_j + lambda_j f_j| / |f_j|_{H1}` drops below this.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 500_000,
        }
    }
}

/// Starting point of a minimization.
#[derive(Debug, Clone)]
pub enum Init {
    /// Gaussians of width `L/10`, component `j` shifted by `j L / 80`.
    Gaussian,
    /// Gaussians with seeded random centers, widths and smooth modulation; with
    /// `complex` set, each component also gets a random phase ramp.
    Random {
        seed: u64,
        complex: bool,
    },
    Given(MultiField),
}

#[derive(Debug, Clone)]
pub struct GroundState {
    pub fields: MultiField,
    pub masses: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub energy: EnergyBreakdown,
    /// Relative residuals `|grad_j + lambda_j f_j| / |f_j|_{H1}`.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub seed: Option<u64>,
}

impl GroundState {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().cloned().fold(0.0, f64::max)
    }
}

/// Rescale each component onto `int |f_j|^2 = M_j`.
pub fn project_masses(mf: &MultiField, masses: &[f64]) -> Result<MultiField> {
    if masses.len() != mf.len() {
        return Err(Error::ComponentCount {
            expected: mf.len(),
            found: masses.len(),
        });
    }
    let mut out = mf.clone();
    for (j, (c, &m)) in out.components_mut().iter_mut().zip(masses).enumerate() {
        let cur = c.mass();
        if !(cur > 0.0) {
            return Err(Error::ZeroMass { component: j });
        }
        c.scale_mut((m / cur).sqrt());
    }
    Ok(out)
}

/// `lambda_j = (Re <V |f_j|^{p-2} f_j, f_j> - |grad f_j|^2) / M_j`.
pub fn extract_multipliers(mf: &MultiField, kernel: &Kernel, p: f64) -> Result<Vec<f64>> {
    let eval = evaluate(mf, kernel, p)?;
    multipliers_from(&eval.grad_norms, &eval.potential_pairings, &mf.masses())
}

fn multipliers_from(grad_norms: &[f64], pairings: &[f64], masses: &[f64]) -> Result<Vec<f64>> {
    grad_norms
        .iter()
        .zip(pairings)
        .zip(masses)
        .enumerate()
        .map(|(j, ((k, v), m))| {
            if *m > 0.0 {
                Ok((v - k) / m)
            } else {
                Err(Error::ZeroMass { component: j })
            }
        })
        .collect()
}

/// Default and seeded starting points, already projected onto the masses.
pub fn initial_guess(grid: Grid, masses: &[f64], init: &Init) -> Result<MultiField> {
    let l = grid.box_length();
    let sigma = l / 10.0;
    let raw = match init {
        Init::Given(mf) => {
            if mf.grid() != &grid {
                return Err(Error::GridMismatch);
            }
            mf.clone()
        }
        Init::Gaussian => {
            let comps = (0..masses.len())
                .map(|j| {
                    let shift = j as f64 * l / 80.0;
                    Field::from_fn(grid, |x| {
                        let r2: f64 = x
                            .iter()
                            .enumerate()
                            .map(|(a, v)| if a == 0 { (v - shift).powi(2) } else { v * v })
                            .sum();
                        Complex64::new((-r2 / (2.0 * sigma * sigma)).exp(), 0.0)
                    })
                })
                .collect();
            MultiField::new(comps)?
        }
        Init::Random { seed, complex } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let dim = grid.dim();
            let comps = (0..masses.len())
                .map(|_| {
                    let center: Vec<f64> = (0..dim)
                        .map(|_| rng.random_range(-l / 20.0..l / 20.0))
                        .collect();
                    let width = sigma * rng.random_range(0.6..1.4);
                    // a few low modes modulate the Gaussian without changing its sign
                    let modes: Vec<(Vec<f64>, f64, f64)> = (0..3)
                        .map(|_| {
                            let k: Vec<f64> = (0..dim)
                                .map(|_| 2.0 * PI / l * rng.random_range(-4i32..=4) as f64)
                                .collect();
                            (
                                k,
                                rng.random_range(0.0..0.1),
                                rng.random_range(0.0..2.0 * PI),
                            )
                        })
                        .collect();
                    let ramp: Vec<f64> = (0..dim)
                        .map(|_| 2.0 * PI / l * rng.random_range(-3i32..=3) as f64)
                        .collect();
                    let phase0 = rng.random_range(0.0..2.0 * PI);
                    let phase_noise: Vec<(Vec<f64>, f64, f64)> = (0..2)
                        .map(|_| {
                            let k: Vec<f64> = (0..dim)
                                .map(|_| 2.0 * PI / l * rng.random_range(1i32..=5) as f64)
                                .collect();
                            (
                                k,
                                rng.random_range(0.0..0.5),
                                rng.random_range(0.0..2.0 * PI),
                            )
                        })
                        .collect();
                    Field::from_fn(grid, |x| {
                        let r2: f64 = x.iter().zip(&center).map(|(v, c)| (v - c).powi(2)).sum();
                        let mut amp = (-r2 / (2.0 * width * width)).exp();
                        let dot = |k: &[f64]| x.iter().zip(k).map(|(a, b)| a * b).sum::<f64>();
                        for (k, a, ph) in &modes {
                            amp *= 1.0 + a * (dot(k) + ph).cos();
                        }
                        if *complex {
                            let mut phase = phase0 + dot(&ramp);
                            for (k, a, ph) in &phase_noise {
                                phase += a * (dot(k) + ph).sin();
                            }
                            Complex64::from_polar(amp, phase)
                        } else {
                            Complex64::new(amp, 0.0)
                        }
                    })
                })
                .collect();
            MultiField::new(comps)?
        }
    };
    if raw.len() != masses.len() {
        return Err(Error::ComponentCount {
            expected: masses.len(),
            found: raw.len(),
        });
    }
    project_masses(&raw, masses)
}

fn relative_residuals(
    mf: &MultiField,
    grad: &MultiField,
    lambda: &[f64],
    grad_norms: &[f64],
) -> Vec<f64> {
    residuals_from_gradient(mf, grad, lambda)
        .into_iter()
        .zip(mf.components())
        .zip(grad_norms)
        .map(|((r, f), k)| r / (f.mass() + k).sqrt())
        .collect()
}

/// Index of the largest entry; ties go to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Circular shift moving the peak of the total density to the origin.
fn center_on_peak(mf: &MultiField) -> MultiField {
    let g = *mf.grid();
    let peak = argmax(&mf.total_density());
    let mut idx = vec![0; g.dim()];
    g.multi_index(peak, &mut idx);
    let n = g.points_per_dim();
    let shift: Vec<usize> = idx.iter().map(|&i| (n / 2 + n - i) % n).collect();
    mf.shifted(&shift)
}

/// Minimize the energy on the product of mass spheres.
///
/// Running out of iterations yields `converged = false`, not an error.
pub fn ground_state(
    params: &SystemParams,
    kernel: &Kernel,
    init: &Init,
    opts: &SolverOptions,
) -> Result<GroundState> {
    params.check_structure()?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    let grid = *kernel.grid();
    if Grid::from_params(params)? != grid {
        return Err(Error::GridMismatch);
    }
    let p = params.power;
    let masses = &params.masses;
    let seed = match init {
        Init::Random { seed, .. } => Some(*seed),
        _ => None,
    };

    let tau0 = 1.0 / (grid.max_wavenumber_sq() + 1.0);
    let mut x = initial_guess(grid, masses, init)?;
    let mut eval = evaluate(&x, kernel, p)?;
    let mut iterations = 0;
    let mut converged = false;

    loop {
        let lambda = multipliers_from(&eval.grad_norms, &eval.potential_pairings, masses)?;
        let res = relative_residuals(&x, &eval.gradient, &lambda, &eval.grad_norms);
        if res.iter().all(|r| *r <= opts.tol) {
            converged = true;
            break;
        }
        if iterations >= opts.max_iters {
            break;
        }

        let mut tau = tau0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial = x.clone();
            trial.axpy(-tau, &eval.gradient)?;
            let trial = project_masses(&trial, masses)?;
            let e = total_energy(&trial, kernel, p)?;
            if e.total <= eval.energy.total {
                accepted = Some(trial);
                break;
            }
            tau *= 0.5;
        }
        let Some(next) = accepted else {
            // no step decreases the energy at working precision
            break;
        };
        let next_eval = evaluate(&next, kernel, p)?;
        if !next_eval.energy.total.is_finite() {
            return Err(Error::NonFinite(format!(
                "energy at iteration {iterations}"
            )));
        }
        debug_assert!(next_eval.energy.total <= eval.energy.total);
        x = next;
        eval = next_eval;
        iterations += 1;
    }

    let fields = center_on_peak(&x);
    let eval = evaluate(&fields, kernel, p)?;
    let multipliers = multipliers_from(&eval.grad_norms, &eval.potential_pairings, masses)?;
    let residuals = relative_residuals(&fields, &eval.gradient, &multipliers, &eval.grad_norms);
    Ok(GroundState {
        fields,
        masses: masses.clone(),
        multipliers,
        energy: eval.energy,
        residuals,
        iterations,
        converged,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseFactorization {
    /// `arg <|f|, f>`.
    pub theta: f64,
    /// `Re(e^{-i theta} f)`.
    pub aligned: Vec<f64>,
    /// `|f - e^{i theta}|f|| / |f|`, in `[0, 2]`.
    pub deviation: f64,
}

pub fn phase_factorize(f: &Field) -> Result<PhaseFactorization> {
    let norm = f.l2_norm();
    if !(norm > 0.0) {
        return Err(Error::ZeroField);
    }
    let s: Complex64 = f.data().iter().map(|z| z * z.norm()).sum();
    let theta = s.arg();
    let rot = Complex64::from_polar(1.0, -theta);
    let aligned = f.data().iter().map(|z| (z * rot).re).collect();
    let e = Complex64::from_polar(1.0, theta);
    let diff: f64 = f
        .data()
        .iter()
        .map(|z| (z - e * z.norm()).norm_sqr())
        .sum::<f64>()
        * f.grid().cell_volume();
    Ok(PhaseFactorization {
        theta,
        aligned,
        deviation: diff.sqrt() / norm,
    })
}

/// Minimum of `values` over grid points that are not on the `x_a = -L/2` faces.
pub fn interior_min(grid: &Grid, values: &[f64]) -> f64 {
    let mut idx = vec![0; grid.dim()];
    let mut best = f64::INFINITY;
    for (flat, v) in values.iter().enumerate() {
        grid.multi_index(flat, &mut idx);
        if idx.iter().all(|&i| i != 0) {
            best = best.min(*v);
        }
    }
    best
}

/// Single-field ground state at mass `mass`, returned with its global phase
/// removed so that the field is real and (up to roundoff) positive.
pub fn single_component_ground(
    mass: f64,
    params: &SystemParams,
    kernel: &Kernel,
    init: &Init,
    opts: &SolverOptions,
) -> Result<GroundState> {
    let reduced = params.with_masses(vec![mass]);
    let mut gs = ground_state(&reduced, kernel, init, opts)?;
    let phase = phase_factorize(gs.fields.component(0))?;
    let rot = Complex64::from_polar(1.0, -phase.theta);
    gs.fields = MultiField::new(vec![gs.fields.component(0).scaled(rot)])?;
    Ok(gs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hartree::el_residual;

    fn reference(m: usize, n: usize, l: f64) -> (SystemParams, Kernel) {
        let params = SystemParams {
            space_dim: 1,
            components: m,
            power: 2.0,
            kernel_exponent: 0.5,
            masses: vec![1.0; m],
            box_length: l,
            points_per_dim: n,
        };
        let kernel = Kernel::power_law(Grid::from_params(&params).unwrap(), 0.5).unwrap();
        (params, kernel)
    }

    #[test]
    fn projection_behaviour() {
        let g = Grid::new(1, 32, 10.0).unwrap();
        let mf = initial_guess(
            g,
            &[1.0, 2.0],
            &Init::Random {
                seed: 3,
                complex: true,
            },
        )
        .unwrap();
        let again = project_masses(&mf, &[1.0, 2.0]).unwrap();
        for (a, b) in again.components().iter().zip(mf.components()) {
            assert!(a.sub(b).unwrap().l2_norm() <= 1e-12);
        }
        let mut doubled = mf.clone();
        for c in doubled.components_mut() {
            c.scale_mut(2.0);
        }
        let back = project_masses(&doubled, &[1.0, 2.0]).unwrap();
        assert!(back.component(1).sub(mf.component(1)).unwrap().l2_norm() <= 1e-12);
        let m = back.masses();
        assert!((m[0] - 1.0).abs() <= 1e-12 && (m[1] - 2.0).abs() <= 1e-12);

        let zero = MultiField::new(vec![mf.component(0).clone(), Field::zeros(g)]).unwrap();
        assert_eq!(
            project_masses(&zero, &[1.0, 1.0]).unwrap_err(),
            Error::ZeroMass { component: 1 }
        );
    }

    #[test]
    fn multipliers_without_interaction() {
        let g = Grid::new(1, 64, 10.0).unwrap();
        let k0 = Kernel::zero(g);
        let k = g.wavenumber(3);
        let wave = Field::from_fn(g, |x| Complex64::from_polar(0.5, k * x[0]));
        let lam = extract_multipliers(&MultiField::new(vec![wave]).unwrap(), &k0, 2.0).unwrap();
        assert!((lam[0] + k * k).abs() < 1e-12);

        let bump = Field::from_fn(g, |x| Complex64::new((-x[0] * x[0]).exp(), 0.0));
        let lam =
            extract_multipliers(&MultiField::new(vec![bump.clone()]).unwrap(), &k0, 2.0).unwrap();
        let expect = -bump.grad_norm_sq() / bump.mass();
        assert!(lam[0] < 0.0 && (lam[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn phase_factorization_cases() {
        let g = Grid::new(1, 64, 10.0).unwrap();
        let gauss = Field::from_fn(g, |x| Complex64::new((-x[0] * x[0] / 2.0).exp(), 0.0));
        let pf = phase_factorize(&gauss).unwrap();
        assert_eq!(pf.theta, 0.0);
        assert!(pf.deviation <= 1e-12);

        let rotated = gauss.scaled(Complex64::from_polar(1.0, PI / 3.0));
        let pf = phase_factorize(&rotated).unwrap();
        assert!((pf.theta - PI / 3.0).abs() < 1e-12);
        assert!(pf.deviation <= 1e-12);
        for (a, b) in pf.aligned.iter().zip(gauss.data()) {
            assert!((a - b.re).abs() < 1e-12);
        }

        let ramp = Field::from_fn(g, |x| {
            Complex64::from_polar((-x[0] * x[0] / 2.0).exp(), x[0])
        });
        let pf = phase_factorize(&ramp).unwrap();
        assert!(pf.deviation > 0.1 && pf.deviation <= 2.0);
        assert_eq!(phase_factorize(&Field::zeros(g)), Err(Error::ZeroField));
    }

    #[test]
    fn converges_to_negative_energy_with_positive_multipliers() {
        let (params, kernel) = reference(2, 128, 30.0);
        let gs =
            ground_state(&params, &kernel, &Init::Gaussian, &SolverOptions::default()).unwrap();
        assert!(gs.converged, "residual {}", gs.max_residual());
        assert!(gs.energy.total < 0.0);
        assert!(gs.multipliers.iter().all(|l| *l > 0.0));
        for (m, t) in gs.fields.masses().iter().zip(&params.masses) {
            assert!((m - t).abs() / t <= 1e-10);
        }
        // restarting at the minimizer stops immediately
        let again = ground_state(
            &params,
            &kernel,
            &Init::Given(gs.fields.clone()),
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(again.iterations, 0);
        assert!(again.converged);

        let res = el_residual(&gs.fields, &gs.multipliers, &kernel, params.power).unwrap();
        let sp = kernel.spectral();
        for (r, f) in res.iter().zip(gs.fields.components()) {
            assert!(*r <= 1e-6 * sp.h1_norm_sq(f).sqrt());
        }
    }

    #[test]
    fn unconverged_run_is_flagged() {
        let (params, kernel) = reference(1, 64, 30.0);
        let opts = SolverOptions {
            tol: 1e-12,
            max_iters: 5,
        };
        let gs = ground_state(&params, &kernel, &Init::Gaussian, &opts).unwrap();
        assert!(!gs.converged);
        assert_eq!(gs.iterations, 5);
    }

    #[test]
    fn single_component_is_positive_after_alignment() {
        let (params, kernel) = reference(1, 128, 30.0);
        let gs = single_component_ground(
            1.0,
            &params,
            &kernel,
            &Init::Random {
                seed: 5,
                complex: true,
            },
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(gs.converged);
        assert!(gs.energy.total < 0.0);
        let re: Vec<f64> = gs.fields.component(0).data().iter().map(|z| z.re).collect();
        assert!(interior_min(kernel.grid(), &re) > 0.0);
    }

    #[test]
    fn bad_inputs() {
        let (params, kernel) = reference(1, 64, 30.0);
        let opts = SolverOptions {
            tol: 0.0,
            max_iters: 5,
        };
        assert!(ground_state(&params, &kernel, &Init::Gaussian, &opts).is_err());
        let mut zero_mass = params.clone();
        zero_mass.masses = vec![0.0];
        assert!(ground_state(
            &zero_mass,
            &kernel,
            &Init::Gaussian,
            &SolverOptions::default()
        )
        .is_err());
        let (other, _) = reference(1, 32, 30.0);
        assert_eq!(
            ground_state(&other, &kernel, &Init::Gaussian, &SolverOptions::default()).unwrap_err(),
            Error::GridMismatch
        );
    }
}
