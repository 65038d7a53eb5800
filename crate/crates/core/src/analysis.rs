//! Numerical experiments on ground states: concentration, scaling
//! inequalities, subadditivity of the minimal energy and orbital stability.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolve::{evolve, EvolutionOptions, Observer};
use crate::grid::{dilate, Field, Grid, MultiField, Spectral};
use crate::hartree::{pair_interaction, single_energy, total_energy, Kernel};
use crate::minimize::{ground_state, project_masses, GroundState, Init, SolverOptions};
use crate::params::SystemParams;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationProfile {
    pub radii: Vec<f64>,
    /// `q[i] = max_y int_{B(y, radii[i])} sum_j |u_j|^2`.
    pub q: Vec<f64>,
}

/// Concentration function of the total density, scanning every grid center.
pub fn concentration_profile(mf: &MultiField, radii: &[f64]) -> Result<ConcentrationProfile> {
    let g = *mf.grid();
    let half = 0.5 * g.box_length();
    if radii.is_empty() || radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter(
            "radii must be strictly increasing".into(),
        ));
    }
    if radii.iter().any(|r| !(*r >= 0.0) || *r > half) {
        return Err(Error::InvalidParameter(format!(
            "radii must lie in [0, {half}]"
        )));
    }
    let sp = Spectral::new(g);
    let mut rho: Vec<Complex64> = mf
        .total_density()
        .into_iter()
        .map(|r| Complex64::new(r, 0.0))
        .collect();
    sp.forward_in_place(&mut rho)?;

    let mut dist2 = vec![0.0; g.len()];
    let mut idx = vec![0; g.dim()];
    for (flat, d) in dist2.iter_mut().enumerate() {
        g.multi_index(flat, &mut idx);
        *d = idx.iter().map(|&i| g.periodic_offset(i).powi(2)).sum();
    }

    let dv = g.cell_volume();
    let mut q = Vec::with_capacity(radii.len());
    let mut running: f64 = 0.0;
    for &r in radii {
        let mut ball: Vec<Complex64> = dist2
            .iter()
            .map(|d| Complex64::new(if *d <= r * r { 1.0 } else { 0.0 }, 0.0))
            .collect();
        sp.forward_in_place(&mut ball)?;
        for (b, f) in ball.iter_mut().zip(&rho) {
            *b *= f;
        }
        sp.inverse_in_place(&mut ball)?;
        let best = ball.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max) * dv;
        // nested balls: monotone up to FFT roundoff
        running = running.max(best);
        q.push(running);
    }
    Ok(ConcentrationProfile {
        radii: radii.to_vec(),
        q,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingSample {
    pub theta: f64,
    pub energy: f64,
    pub kinetic: f64,
    /// Right-hand side of the dilation estimate at this `theta`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingNegativity {
    pub theta_star: f64,
    pub energy: f64,
    /// `(1/2p) (sum_j (M_j / M_1)^{p/2})^2`.
    pub omega: f64,
    pub samples: Vec<ScalingSample>,
}

/// `(1/2p) (sum_j (M_j/M_1)^{p/2})^2`.
pub fn omega(masses: &[f64], p: f64) -> f64 {
    let s: f64 = masses.iter().map(|m| (m / masses[0]).powf(0.5 * p)).sum();
    s * s / (2.0 * p)
}

/// Dilate the tuple `u_j = (M_j/M_1)^{1/2} u_1` by each `theta` and return the
/// largest `theta` giving negative energy.
pub fn scaling_negativity_test(
    params: &SystemParams,
    kernel: &Kernel,
    u1: &Field,
    thetas: &[f64],
) -> Result<ScalingNegativity> {
    params.check_structure()?;
    if u1.grid() != kernel.grid() {
        return Err(Error::GridMismatch);
    }
    if thetas.is_empty() || thetas.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
        return Err(Error::InvalidParameter(
            "theta grid must lie in (0, 1]".into(),
        ));
    }
    let m1 = u1.mass();
    if !(m1 > 0.0) {
        return Err(Error::ZeroField);
    }
    let p = params.power;
    let g = *kernel.grid();
    let dim = g.dim() as f64;
    let om = omega(&params.masses, p);
    let self_pair = p * pair_interaction(p, u1, u1, kernel, p)?;
    let kinetic0: f64 = params
        .masses
        .iter()
        .map(|m| m / m1 * kernel.spectral().grad_norm_sq(u1))
        .sum::<f64>();
    let decay = dim * p - 2.0 * dim + params.kernel_exponent;

    let mut samples = Vec::with_capacity(thetas.len());
    for &theta in thetas {
        let lost = mass_outside(u1, theta);
        if lost > 1e-6 {
            return Err(Error::ShrinkTheta { theta, lost });
        }
        let d = dilate(u1, theta)?;
        let comps = params
            .masses
            .iter()
            .map(|m| d.scaled(Complex64::new((m / m1).sqrt(), 0.0)))
            .collect();
        let e = total_energy(&MultiField::new(comps)?, kernel, p)?;
        samples.push(ScalingSample {
            theta,
            energy: e.total,
            kinetic: e.kinetic,
            bound: 0.5 * theta * theta * kinetic0 - om * theta.powf(decay) * self_pair,
        });
    }
    let best = samples
        .iter()
        .filter(|s| s.energy < 0.0)
        .max_by(|a, b| a.theta.total_cmp(&b.theta));
    match best {
        Some(s) => Ok(ScalingNegativity {
            theta_star: s.theta,
            energy: s.energy,
            omega: om,
            samples,
        }),
        None => Err(Error::NoNegativeTheta {
            smallest: thetas.iter().cloned().fold(f64::INFINITY, f64::min),
        }),
    }
}

/// Fraction of the mass of `u` outside the cube `|x_a| <= theta L / 2`, which
/// dilation by `theta < 1` would push out of the box.
fn mass_outside(u: &Field, theta: f64) -> f64 {
    if theta >= 1.0 {
        return 0.0;
    }
    let g = u.grid();
    let lim = 0.5 * theta * g.box_length();
    let mut idx = vec![0; g.dim()];
    let mut outside = 0.0;
    for (flat, z) in u.data().iter().enumerate() {
        g.multi_index(flat, &mut idx);
        if idx.iter().any(|&i| g.coordinate(i).abs() > lim) {
            outside += z.norm_sqr();
        }
    }
    outside * g.cell_volume() / u.mass()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingIdentity {
    pub gamma: f64,
    /// `E(Gamma^{1/2} u)`.
    pub scaled: f64,
    /// `Gamma E(u)`.
    pub linear: f64,
    /// `linear - scaled`.
    pub delta: f64,
    /// `(Gamma^p - Gamma) F_{2p}(u, u)`.
    pub predicted: f64,
}

pub fn strict_scaling_check(
    u: &Field,
    gamma: f64,
    kernel: &Kernel,
    p: f64,
) -> Result<ScalingIdentity> {
    if !(gamma > 1.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "scale must exceed 1, got {gamma}"
        )));
    }
    let scaled = single_energy(&u.scaled(Complex64::new(gamma.sqrt(), 0.0)), kernel, p)?;
    let linear = gamma * single_energy(u, kernel, p)?;
    let f2p = pair_interaction(2.0 * p, u, u, kernel, p)?;
    Ok(ScalingIdentity {
        gamma,
        scaled,
        linear,
        delta: linear - scaled,
        predicted: (gamma.powf(p) - gamma) * f2p,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossTerms {
    /// `E(phi_1) - F_p(phi_1, phi_2)`.
    pub first: f64,
    /// `E(phi_2) - F_p(phi_1, phi_2)`.
    pub second: f64,
    pub coupling: f64,
}

pub fn cross_term_check(gs: &GroundState, kernel: &Kernel, p: f64) -> Result<CrossTerms> {
    if gs.fields.len() != 2 {
        return Err(Error::ComponentCount {
            expected: 2,
            found: gs.fields.len(),
        });
    }
    if !gs.converged {
        return Err(Error::Unconverged);
    }
    let (a, b) = (gs.fields.component(0), gs.fields.component(1));
    let coupling = pair_interaction(p, a, b, kernel, p)?;
    Ok(CrossTerms {
        first: single_energy(a, kernel, p)? - coupling,
        second: single_energy(b, kernel, p)? - coupling,
        coupling,
    })
}

/// Options shared by scans and the stability experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanOptions {
    pub solver: SolverOptions,
    /// Every minimal energy is the best over these seeds.
    pub seeds: Vec<u64>,
    /// Zero means the rayon default.
    pub workers: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            seeds: vec![1, 2],
            workers: 0,
        }
    }
}

/// Summary of the best of several minimizations at one mass vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    /// Full mass vector, zeros included.
    pub masses: Vec<f64>,
    pub energy: f64,
    /// Multipliers of the nonzero components.
    pub multipliers: Vec<f64>,
    pub max_residual: f64,
    pub iterations: usize,
    pub seed: u64,
    pub converged: bool,
    /// `Q(L/4) / sum M`.
    pub concentration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubadditivityRecord {
    pub m: Vec<f64>,
    pub t: Vec<f64>,
    pub run_m: RunSummary,
    pub run_t: RunSummary,
    pub run_sum: RunSummary,
    /// `I_M + I_T - I_{M+T}`; `None` when a run did not converge.
    pub margin: Option<f64>,
}

impl SubadditivityRecord {
    pub fn converged(&self) -> bool {
        self.run_m.converged && self.run_t.converged && self.run_sum.converged
    }

    pub fn runs(&self) -> [&RunSummary; 3] {
        [&self.run_m, &self.run_t, &self.run_sum]
    }
}

fn with_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(job());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    Ok(pool.install(job))
}

fn mass_key(masses: &[f64]) -> Vec<u64> {
    masses.iter().map(|m| m.to_bits()).collect()
}

/// Minimal energy at `masses`; zero entries drop the component.
pub fn minimal_energy(
    template: &SystemParams,
    kernel: &Kernel,
    masses: &[f64],
    opts: &ScanOptions,
) -> Result<RunSummary> {
    let nonzero: Vec<f64> = masses.iter().cloned().filter(|m| *m != 0.0).collect();
    if nonzero.is_empty() || masses.iter().any(|m| !(*m >= 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "bad mass vector {masses:?}"
        )));
    }
    if opts.seeds.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one seed is required".into(),
        ));
    }
    let params = template.with_masses(nonzero);
    let mut best: Option<GroundState> = None;
    for &seed in &opts.seeds {
        let gs = ground_state(
            &params,
            kernel,
            &Init::Random {
                seed,
                complex: false,
            },
            &opts.solver,
        )?;
        let better = match &best {
            None => true,
            Some(b) => (gs.converged, -gs.energy.total) > (b.converged, -b.energy.total),
        };
        if better {
            best = Some(gs);
        }
    }
    let gs = best.expect("seed list is nonempty");
    let quarter = 0.25 * kernel.grid().box_length();
    let q = concentration_profile(&gs.fields, &[quarter])?.q[0];
    Ok(RunSummary {
        masses: masses.to_vec(),
        energy: gs.energy.total,
        max_residual: gs.max_residual(),
        multipliers: gs.multipliers,
        iterations: gs.iterations,
        seed: gs.seed.unwrap_or_default(),
        converged: gs.converged,
        concentration: q / params.total_mass(),
    })
}

/// Run every `(M, T)` pair. Distinct mass vectors are minimized once, in
/// parallel; records come back in input order.
pub fn subadditivity_scan(
    template: &SystemParams,
    kernel: &Kernel,
    pairs: &[(Vec<f64>, Vec<f64>)],
    opts: &ScanOptions,
) -> Result<Vec<SubadditivityRecord>> {
    let m = template.components;
    let mut needed: BTreeMap<Vec<u64>, Vec<f64>> = BTreeMap::new();
    for (a, b) in pairs {
        if a.len() != m || b.len() != m {
            return Err(Error::ComponentCount {
                expected: m,
                found: if a.len() != m { a.len() } else { b.len() },
            });
        }
        if a.iter().all(|v| *v == 0.0) || b.iter().all(|v| *v == 0.0) {
            return Err(Error::InvalidParameter(
                "M and T must both be nonzero".into(),
            ));
        }
        let s: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
        if s.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "M + T must be positive, got {s:?}"
            )));
        }
        for v in [a.clone(), b.clone(), s] {
            needed.insert(mass_key(&v), v);
        }
    }
    let jobs: Vec<Vec<f64>> = needed.into_values().collect();
    let results: Vec<Result<RunSummary>> = with_pool(opts.workers, || {
        jobs.par_iter()
            .map(|masses| minimal_energy(template, kernel, masses, opts))
            .collect()
    })?;
    let mut table = BTreeMap::new();
    for (masses, r) in jobs.iter().zip(results) {
        table.insert(mass_key(masses), r?);
    }

    Ok(pairs
        .iter()
        .map(|(a, b)| {
            let s: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
            let run_m = table[&mass_key(a)].clone();
            let run_t = table[&mass_key(b)].clone();
            let run_sum = table[&mass_key(&s)].clone();
            let ok = run_m.converged && run_t.converged && run_sum.converged;
            SubadditivityRecord {
                m: a.clone(),
                t: b.clone(),
                margin: ok.then_some(run_m.energy + run_t.energy - run_sum.energy),
                run_m,
                run_t,
                run_sum,
            }
        })
        .collect())
}

/// Two-component pairs with entries in `{0, 1/2, 1}`, `M`, `T` nonzero,
/// `M + T` positive, each unordered pair once.
pub fn default_pairs_m2() -> Vec<(Vec<f64>, Vec<f64>)> {
    let levels = [0.0, 0.5, 1.0];
    let vectors: Vec<Vec<f64>> = levels
        .iter()
        .flat_map(|a| levels.iter().map(move |b| vec![*a, *b]))
        .filter(|v| v.iter().any(|x| *x > 0.0))
        .collect();
    let mut out = Vec::new();
    for i in 0..vectors.len() {
        for j in i..vectors.len() {
            let (a, b) = (&vectors[i], &vectors[j]);
            if a.iter().zip(b).all(|(x, y)| x + y > 0.0) {
                out.push((a.clone(), b.clone()));
            }
        }
    }
    out
}

/// Representatives of the five three-component sign patterns that the other
/// patterns reduce to, plus two seeded pairs with all masses positive.
pub fn default_cases_m3(seed: u64) -> Vec<(String, Vec<f64>, Vec<f64>)> {
    let mut cases = vec![
        (
            "all positive".to_string(),
            vec![1.0, 0.5, 1.0],
            vec![0.5, 1.0, 0.5],
        ),
        (
            "M_2 = 0".to_string(),
            vec![1.0, 0.0, 1.0],
            vec![1.0, 1.0, 1.0],
        ),
        (
            "M_1 = T_2 = 0".to_string(),
            vec![0.0, 1.0, 1.0],
            vec![1.0, 0.0, 1.0],
        ),
        (
            "M_1 = M_2 = 0".to_string(),
            vec![0.0, 0.0, 1.0],
            vec![1.0, 1.0, 1.0],
        ),
        (
            "M_1 = T_2 = M_3 = 0".to_string(),
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 1.0],
        ),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..2 {
        let mut draw = || {
            (0..3)
                .map(|_| rng.random_range(0.25..1.0))
                .collect::<Vec<f64>>()
        };
        let (a, b) = (draw(), draw());
        cases.push((format!("random {}", k + 1), a, b));
    }
    cases
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityOptions {
    pub epsilons: Vec<f64>,
    pub t_final: f64,
    pub dt: f64,
    pub sample_every: usize,
    pub seed: u64,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityRow {
    pub epsilon: f64,
    pub initial_distance: f64,
    pub max_distance: f64,
    /// `max_distance / epsilon`, or `None` for `epsilon = 0`.
    pub ratio: Option<f64>,
    pub mass_drift: f64,
    pub energy_drift: f64,
    pub unstable: bool,
}

/// Smooth random perturbation with unit `H1` product norm.
pub fn random_perturbation(grid: Grid, m: usize, seed: u64) -> Result<MultiField> {
    let sp = Spectral::new(grid);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = grid.box_length();
    let cutoff = 2.0;
    let mut comps = Vec::with_capacity(m);
    for _ in 0..m {
        let noise: Vec<Complex64> = (0..grid.len())
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let mut spec = noise;
        sp.forward_in_place(&mut spec)?;
        for (z, k2) in spec.iter_mut().zip(sp.wavenumber_sq()) {
            *z *= (-k2 / (2.0 * cutoff * cutoff)).exp();
        }
        sp.inverse_in_place(&mut spec)?;
        // localize near the origin so the perturbation is not spread over the box
        let width = len / 8.0;
        let mut f = Field::from_data(grid, spec)?;
        let envelope = Field::from_fn(grid, |x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            Complex64::new((-r2 / (2.0 * width * width)).exp(), 0.0)
        });
        for (z, e) in f.data_mut().iter_mut().zip(envelope.data()) {
            *z *= e.re;
        }
        comps.push(f);
    }
    let norm: f64 = comps.iter().map(|c| sp.h1_norm_sq(c)).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::ZeroField);
    }
    for c in &mut comps {
        c.scale_mut(1.0 / norm);
    }
    MultiField::new(comps)
}

/// Evolve `gs + epsilon * perturbation` (mass-projected) for each epsilon and
/// record the largest distance to the ground-state orbit.
pub fn stability_experiment(
    gs: &GroundState,
    kernel: &Kernel,
    p: f64,
    opts: &StabilityOptions,
) -> Result<Vec<StabilityRow>> {
    if !gs.converged {
        return Err(Error::Unconverged);
    }
    if opts.epsilons.iter().any(|e| !(*e >= 0.0)) {
        return Err(Error::InvalidParameter(
            "epsilons must be nonnegative".into(),
        ));
    }
    let pert = random_perturbation(*gs.fields.grid(), gs.fields.len(), opts.seed)?;
    let evo = EvolutionOptions {
        t_final: opts.t_final,
        dt: opts.dt,
        sample_every: opts.sample_every,
    };
    let rows: Vec<Result<StabilityRow>> = with_pool(opts.workers, || {
        opts.epsilons
            .par_iter()
            .map(|&eps| {
                let mut start = gs.fields.clone();
                start.axpy(eps, &pert)?;
                let start = project_masses(&start, &gs.masses)?;
                let (_, trace) = evolve(&start, &evo, kernel, p, Some(gs), &mut [])?;
                let max_distance = trace.orbit_distance.iter().cloned().fold(0.0, f64::max);
                Ok(StabilityRow {
                    epsilon: eps,
                    initial_distance: trace.orbit_distance[0],
                    max_distance,
                    ratio: (eps > 0.0).then(|| max_distance / eps),
                    mass_drift: trace.mass_drift,
                    energy_drift: trace.energy_drift,
                    unstable: trace.unstable,
                })
            })
            .collect()
    })?;
    rows.into_iter().collect()
}

/// Records `<phi_j, psi_j(t)>` for every component.
#[derive(Debug, Clone)]
pub struct OverlapRecorder {
    reference: MultiField,
    pub times: Vec<f64>,
    /// `overlaps[j][s]`.
    pub overlaps: Vec<Vec<Complex64>>,
}

impl OverlapRecorder {
    pub fn new(reference: MultiField) -> Self {
        let m = reference.len();
        Self {
            reference,
            times: Vec::new(),
            overlaps: vec![Vec::new(); m],
        }
    }

    /// Least-squares slope of the unwrapped phase of each overlap.
    pub fn phase_rates(&self) -> Vec<f64> {
        self.overlaps
            .iter()
            .map(|series| {
                let mut phases = Vec::with_capacity(series.len());
                let mut offset = 0.0;
                let mut prev: Option<f64> = None;
                for z in series {
                    let raw = z.arg();
                    if let Some(pv) = prev {
                        let jump = raw - pv;
                        if jump > std::f64::consts::PI {
                            offset -= 2.0 * std::f64::consts::PI;
                        } else if jump < -std::f64::consts::PI {
                            offset += 2.0 * std::f64::consts::PI;
                        }
                    }
                    prev = Some(raw);
                    phases.push(raw + offset);
                }
                linear_slope(&self.times, &phases)
            })
            .collect()
    }
}

impl Observer for OverlapRecorder {
    fn observe(&mut self, t: f64, state: &MultiField) {
        self.times.push(t);
        for ((series, phi), psi) in self
            .overlaps
            .iter_mut()
            .zip(self.reference.components())
            .zip(state.components())
        {
            series.push(phi.inner(psi).unwrap_or(Complex64::new(f64::NAN, f64::NAN)));
        }
    }
}

fn linear_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
