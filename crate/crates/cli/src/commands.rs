//! One function per experiment. Each writes its artifacts through a
//! [`RunWriter`] and reports whether its assertions held.

use anyhow::{bail, Context, Result};
use hartree_core::analysis::{
    concentration_profile, cross_term_check, default_cases_m3, default_pairs_m2,
    random_perturbation, scaling_negativity_test, stability_experiment, strict_scaling_check,
    subadditivity_scan, ScanOptions, StabilityOptions, SubadditivityRecord,
};
use hartree_core::evolve::{evolve, EvolutionOptions};
use hartree_core::minimize::{interior_min, phase_factorize};
use hartree_core::{
    ground_state, project_masses, total_energy, validate_assumptions, Field, Grid, GroundState,
    Init, Kernel, MultiField,
};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{check_config, RunConfig};
use crate::output::{csv_bytes, num, RunWriter};
use crate::snapshot::{read_snapshot, snapshot_bytes};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Passed,
    AssertionFailed,
}

impl Status {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Passed
        } else {
            Status::AssertionFailed
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

fn print_assertions(list: &[Assertion]) {
    for a in list {
        println!(
            "[{}] {}: {}",
            if a.passed { "PASS" } else { "FAIL" },
            a.name,
            a.detail
        );
    }
}

fn kernel_for(cfg: &RunConfig) -> Result<Kernel> {
    let grid = Grid::from_params(&cfg.params)?;
    Ok(Kernel::power_law(grid, cfg.params.kernel_exponent)?)
}

/// Lowest-energy ground state over the configured seeds; converged runs win.
pub fn best_ground_state(cfg: &RunConfig, kernel: &Kernel, complex: bool) -> Result<GroundState> {
    let seeds = cfg.solver.seeds_or(cfg.seed);
    let opts = cfg.solver.options();
    let runs: Vec<GroundState> = seeds
        .par_iter()
        .map(|&seed| ground_state(&cfg.params, kernel, &Init::Random { seed, complex }, &opts))
        .collect::<hartree_core::Result<_>>()?;
    let best = runs
        .into_iter()
        .reduce(|a, b| {
            if (b.converged, -b.energy.total) > (a.converged, -a.energy.total) {
                b
            } else {
                a
            }
        })
        .expect("at least one seed");
    Ok(best)
}

#[derive(Serialize)]
struct Sidecar<'a> {
    masses: &'a [f64],
    lambda: &'a [f64],
    energy: f64,
    kinetic: f64,
    interaction: f64,
    residuals: &'a [f64],
    iterations: usize,
    converged: bool,
    seed: Option<u64>,
    params: &'a hartree_core::SystemParams,
}

fn write_ground_state(out: &mut RunWriter, cfg: &RunConfig, gs: &GroundState) -> Result<()> {
    out.write("ground_state.chfld", &snapshot_bytes(&gs.fields))?;
    out.write_json(
        "ground_state.json",
        &Sidecar {
            masses: &gs.masses,
            lambda: &gs.multipliers,
            energy: gs.energy.total,
            kinetic: gs.energy.kinetic,
            interaction: gs.energy.interaction,
            residuals: &gs.residuals,
            iterations: gs.iterations,
            converged: gs.converged,
            seed: gs.seed,
            params: &cfg.params,
        },
    )
}

pub fn validate(cfg: &RunConfig, out: &mut RunWriter) -> Result<Status> {
    let report = validate_assumptions(&cfg.params)?;
    for c in &report.clauses {
        println!(
            "[{}] {} {}: margin {:e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.description,
            c.margin
        );
    }
    out.write_json("validation.json", &report)?;
    if report.passed {
        check_config(cfg)?;
    }
    Ok(Status::from_bool(report.passed))
}

pub fn minimize(cfg: &RunConfig, out: &mut RunWriter) -> Result<Status> {
    let kernel = kernel_for(cfg)?;
    let gs = best_ground_state(cfg, &kernel, false)?;
    write_ground_state(out, cfg, &gs)?;
    println!(
        "energy {:.10e}, lambda {:?}, residual {:.2e}, iterations {}, converged {}",
        gs.energy.total,
        gs.multipliers,
        gs.max_residual(),
        gs.iterations,
        gs.converged
    );
    Ok(Status::from_bool(gs.converged))
}

#[derive(Serialize)]
struct EvolutionSummary {
    dt: f64,
    t_final: f64,
    samples: usize,
    perturbation: f64,
    mass_drift: f64,
    energy_drift: f64,
    max_orbit_distance: f64,
    unstable: bool,
}

pub fn evolve_run(cfg: &RunConfig, out: &mut RunWriter) -> Result<Status> {
    let kernel = kernel_for(cfg)?;
    let gs = best_ground_state(cfg, &kernel, false)?;
    if !gs.converged {
        bail!("ground state did not converge; evolution needs it as the orbit reference");
    }
    write_ground_state(out, cfg, &gs)?;
    let ev = &cfg.evolution;
    let mut start = match &ev.initial {
        Some(path) => {
            let bytes =
                std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            out.record_input(&path.display().to_string(), &bytes);
            let mf = read_snapshot(&bytes[..])?;
            mf.ensure_same_grid(&gs.fields)
                .context("initial snapshot grid differs from the config")?;
            mf
        }
        None => gs.fields.clone(),
    };
    if ev.perturbation > 0.0 {
        let pert = random_perturbation(*kernel.grid(), start.len(), cfg.seed)?;
        start.axpy(ev.perturbation, &pert)?;
        start = project_masses(&start, &gs.masses)?;
    }
    let opts = EvolutionOptions {
        t_final: ev.t_final,
        dt: ev.dt,
        sample_every: ev.sample_every,
    };
    let (end, trace) = evolve(&start, &opts, &kernel, cfg.params.power, Some(&gs), &mut [])?;

    let m = trace.masses.len();
    let mut header = vec!["t".to_string()];
    header.extend((1..=m).map(|j| format!("mass_{j}")));
    header.push("energy".into());
    header.push("orbit_distance".into());
    let rows = (0..trace.times.len()).map(|s| {
        let mut row = vec![num(trace.times[s])];
        row.extend(trace.masses.iter().map(|series| num(series[s])));
        row.push(num(trace.energy[s]));
        row.push(num(trace.orbit_distance[s]));
        row
    });
    out.write("trace.csv", &csv_bytes(&header, rows)?)?;
    out.write("final_state.chfld", &snapshot_bytes(&end))?;
    let summary = EvolutionSummary {
        dt: trace.dt,
        t_final: trace.t_final,
        samples: trace.times.len(),
        perturbation: ev.perturbation,
        mass_drift: trace.mass_drift,
        energy_drift: trace.energy_drift,
        max_orbit_distance: trace.orbit_distance.iter().cloned().fold(0.0, f64::max),
        unstable: trace.unstable,
    };
    println!(
        "mass drift {:.2e}, energy drift {:.2e}, max orbit distance {:.3e}, unstable {}",
        summary.mass_drift, summary.energy_drift, summary.max_orbit_distance, summary.unstable
    );
    out.write_json("evolution_summary.json", &summary)?;
    Ok(Status::from_bool(!trace.unstable))
}

fn default_pairs(m: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    match m {
        1 => vec![
            (vec![0.5], vec![0.5]),
            (vec![0.5], vec![1.0]),
            (vec![1.0], vec![1.0]),
        ],
        2 => default_pairs_m2(),
        _ => default_cases_m3(seed)
            .into_iter()
            .map(|(_, a, b)| (a, b))
            .collect(),
    }
}

#[derive(Serialize)]
struct ScanSummary {
    records: usize,
    unconverged: Vec<String>,
    min_margin: Option<f64>,
    margin_threshold: f64,
    assertions: Vec<Assertion>,
    passed: bool,
}

pub fn scan(cfg: &RunConfig, out: &mut RunWriter) -> Result<Status> {
    let kernel = kernel_for(cfg)?;
    let pairs = cfg
        .scan
        .pairs
        .clone()
        .unwrap_or_else(|| default_pairs(cfg.params.components, cfg.seed));
    let opts = ScanOptions {
        solver: cfg.solver.options(),
        seeds: cfg.solver.seeds_or(cfg.seed),
        workers: 0,
    };
    let records = subadditivity_scan(&cfg.params, &kernel, &pairs, &opts)?;
    out.write("scan.csv", &scan_csv(&records, cfg.params.components)?)?;

    let tol = cfg.solver.tol;
    let unconverged: Vec<String> = records
        .iter()
        .filter(|r| !r.converged())
        .map(|r| format!("{:?} + {:?}", r.m, r.t))
        .collect();
    let min_margin = records.iter().filter_map(|r| r.margin).reduce(f64::min);
    let runs = || {
        records
            .iter()
            .flat_map(|r| r.runs())
            .filter(|r| r.converged)
    };
    let max_energy = runs().map(|r| r.energy).fold(f64::NEG_INFINITY, f64::max);
    let min_lambda = runs()
        .flat_map(|r| r.multipliers.iter().cloned())
        .fold(f64::INFINITY, f64::min);
    let min_conc = runs()
        .map(|r| r.concentration)
        .fold(f64::INFINITY, f64::min);
    let assertions = vec![
        Assertion::new(
            "all runs converged",
            unconverged.is_empty(),
            format!("{} unconverged records", unconverged.len()),
        ),
        Assertion::new(
            "strict subadditivity",
            min_margin.is_some_and(|m| m > 10.0 * tol),
            format!("min margin {:?}, threshold {:e}", min_margin, 10.0 * tol),
        ),
        Assertion::new(
            "negative minimal energy",
            max_energy < -10.0 * tol,
            format!("largest energy {max_energy:e}"),
        ),
        Assertion::new(
            "positive multipliers",
            min_lambda > 0.0,
            format!("smallest {min_lambda:e}"),
        ),
        Assertion::new(
            "tight concentration",
            min_conc >= 0.99,
            format!("smallest Q(L/4) / sum M {min_conc}"),
        ),
    ];
    print_assertions(&assertions);
    let passed = assertions.iter().all(|a| a.passed);
    out.write_json(
        "scan_summary.json",
        &ScanSummary {
            records: records.len(),
            unconverged,
            min_margin,
            margin_threshold: 10.0 * tol,
            assertions,
            passed,
        },
    )?;
    Ok(Status::from_bool(passed))
}

fn scan_csv(records: &[SubadditivityRecord], m: usize) -> Result<Vec<u8>> {
    let mut header: Vec<String> = (1..=m).map(|j| format!("M_{j}")).collect();
    header.extend((1..=m).map(|j| format!("T_{j}")));
    header.extend(
        [
            "I_M",
            "I_T",
            "I_sum",
            "margin",
            "converged",
            "min_lambda",
            "min_concentration",
        ]
        .map(String::from),
    );
    let rows = records.iter().map(|r| {
        let mut row: Vec<String> = r.m.iter().chain(&r.t).map(|v| num(*v)).collect();
        row.push(num(r.run_m.energy));
        row.push(num(r.run_t.energy));
        row.push(num(r.run_sum.energy));
        row.push(num(r.margin.unwrap_or(f64::NAN)));
        row.push(r.converged().to_string());
        let runs = r.runs();
        row.push(num(runs
            .iter()
            .flat_map(|s| s.multipliers.iter().cloned())
            .fold(f64::INFINITY, f64::min)));
        row.push(num(runs
            .iter()
            .map(|s| s.concentration)
            .fold(f64::INFINITY, f64::min)));
        row
    });
    csv_bytes(&header, rows)
}

#[derive(Serialize)]
struct StabilitySummary {
    rows: Vec<hartree_core::analysis::StabilityRow>,
    assertions: Vec<Assertion>,
    passed: bool,
}

pub fn stability(cfg: &RunConfig, out: &mut RunWriter) -> Result<Status> {
    let kernel = kernel_for(cfg)?;
    let gs = best_ground_state(cfg, &kernel, false)?;
    write_ground_state(out, cfg, &gs)?;
    let opts = StabilityOptions {
        epsilons: cfg.stability.epsilons.clone(),
        t_final: cfg.stability.t_final,
        dt: cfg.evolution.dt,
        sample_every: cfg.evolution.sample_every,
        seed: cfg.seed,
        workers: 0,
    };
    let rows = stability_experiment(&gs, &kernel, cfg.params.power, &opts)?;
    let header: Vec<String> = [
        "epsilon",
        "initial_distance",
        "max_distance",
        "ratio",
        "mass_drift",
        "energy_drift",
        "unstable",
    ]
    .map(String::from)
    .to_vec();
    let csv_rows = rows.iter().map(|r| {
        vec![
            num(r.epsilon),
            num(r.initial_distance),
            num(r.max_distance),
            num(r.ratio.unwrap_or(f64::NAN)),
            num(r.mass_drift),
            num(r.energy_drift),
            r.unstable.to_string(),
        ]
    });
    out.write("stability.csv", &csv_bytes(&header, csv_rows)?)?;

    let mut by_eps: Vec<_> = rows.iter().collect();
    by_eps.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let ratios_ok = by_eps
        .windows(2)
        .all(|w| w[1].ratio.unwrap_or(0.0) <= 2.0 * w[0].ratio.unwrap_or(f64::INFINITY));
    let assertions = vec![
        Assertion::new(
            "distance bounded by 10 epsilon",
            rows.iter().all(|r| r.max_distance <= 10.0 * r.epsilon),
            rows.iter()
                .map(|r| format!("eps {:e}: {:.3e}", r.epsilon, r.max_distance))
                .collect::<Vec<_>>()
                .join(", "),
        ),
        Assertion::new(
            "ratio does not grow as epsilon shrinks",
            ratios_ok,
            format!("{:?}", by_eps.iter().map(|r| r.ratio).collect::<Vec<_>>()),
        ),
        Assertion::new(
            "integrator stable",
            rows.iter().all(|r| !r.unstable),
            format!(
                "max energy drift {:e}",
                rows.iter().map(|r| r.energy_drift).fold(0.0, f64::max)
            ),
        ),
    ];
    print_assertions(&assertions);
    let passed = assertions.iter().all(|a| a.passed);
    out.write_json(
        "stability_summary.json",
        &StabilitySummary {
            rows,
            assertions,
            passed,
        },
    )?;
    Ok(Status::from_bool(passed))
}

/// Single-run checks of the structural properties of the minimizer.
pub fn lemma_checks(cfg: &RunConfig, out: &mut RunWriter) -> Result<Status> {
    let kernel = kernel_for(cfg)?;
    let p = cfg.params.power;
    let tol = cfg.solver.tol;
    let gs = best_ground_state(cfg, &kernel, false)?;
    write_ground_state(out, cfg, &gs)?;
    let mut list = vec![Assertion::new(
        "ground state converged",
        gs.converged,
        format!(
            "residual {:e} after {} iterations",
            gs.max_residual(),
            gs.iterations
        ),
    )];
    list.push(Assertion::new(
        "negative minimal energy",
        gs.energy.total < -10.0 * tol,
        format!("energy {:e}", gs.energy.total),
    ));

    let g = *kernel.grid();
    // narrowest resolvable bump with positive energy, so the dilation has work to do
    let bump = |width: f64| {
        let mut u = Field::from_fn(g, |x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            Complex64::new((-r2 / (2.0 * width * width)).exp(), 0.0)
        });
        u.scale_mut((cfg.params.masses[0] / u.mass()).sqrt());
        u
    };
    let tuple_energy = |u: &Field| -> Result<f64> {
        let m1 = cfg.params.masses[0];
        let comps = cfg
            .params
            .masses
            .iter()
            .map(|m| u.scaled(Complex64::new((m / m1).sqrt(), 0.0)))
            .collect();
        Ok(total_energy(&MultiField::new(comps)?, &kernel, p)?.total)
    };
    let mut width = 4.0 * g.spacing();
    let mut u1 = bump(width);
    while tuple_energy(&u1)? < 0.0 && width > 1.5 * g.spacing() {
        width *= 0.8;
        u1 = bump(width);
    }
    let thetas: Vec<f64> = (0..25).map(|k| 0.8f64.powi(k)).collect();
    let mut acc = Vec::new();
    // stop at the first theta that would push mass out of the box
    for t in thetas {
        acc.push(t);
        if scaling_negativity_test(&cfg.params, &kernel, &u1, &acc)
            .is_err_and(|e| matches!(e, hartree_core::Error::ShrinkTheta { .. }))
        {
            acc.pop();
            break;
        }
    }
    list.push(
        match scaling_negativity_test(&cfg.params, &kernel, &u1, &acc) {
            Ok(s) => Assertion::new(
                "dilation reaches negative energy",
                true,
                format!(
                    "energy {:e} at theta = 1, theta* = {:.4} with energy {:e}, omega {:.4}",
                    s.samples[0].energy, s.theta_star, s.energy, s.omega
                ),
            ),
            Err(e) => Assertion::new("dilation reaches negative energy", false, e.to_string()),
        },
    );

    let min_lambda = gs.multipliers.iter().cloned().fold(f64::INFINITY, f64::min);
    list.push(Assertion::new(
        "positive multipliers",
        min_lambda > 0.0,
        format!("{:?}", gs.multipliers),
    ));

    let complex = best_ground_state(cfg, &kernel, true)?;
    let mut dev: f64 = 0.0;
    let mut low = f64::INFINITY;
    for c in complex.fields.components() {
        let ph = phase_factorize(c)?;
        dev = dev.max(ph.deviation);
        low = low.min(interior_min(c.grid(), &ph.aligned));
    }
    list.push(Assertion::new(
        "constant phase times positive profile",
        complex.converged && dev <= 1e-6 && low > 0.0,
        format!("deviation {dev:e}, smallest aligned value {low:e}"),
    ));

    let mut min_delta = f64::INFINITY;
    let mut worst_identity: f64 = 0.0;
    for c in gs.fields.components() {
        for gamma in [1.1, 1.5, 2.0] {
            let r = strict_scaling_check(c, gamma, &kernel, p)?;
            min_delta = min_delta.min(r.delta);
            worst_identity = worst_identity.max((r.delta - r.predicted).abs() / r.predicted.abs());
        }
    }
    let note = if p == 2.0 {
        " (p = 2: the gap is still (Gamma^2 - Gamma) F_4 > 0)"
    } else {
        ""
    };
    list.push(Assertion::new(
        "mass rescaling strictly beats linear",
        min_delta > 0.0 && worst_identity <= 1e-12,
        format!("min delta {min_delta:e}, identity error {worst_identity:e}{note}"),
    ));

    if gs.fields.len() == 2 {
        let c = cross_term_check(&gs, &kernel, p)?;
        list.push(Assertion::new(
            "cross terms negative",
            c.first < 0.0 && c.second < 0.0,
            format!("{:e}, {:e}", c.first, c.second),
        ));
    }

    let quarter = 0.25 * g.box_length();
    let q = concentration_profile(&gs.fields, &[quarter])?.q[0] / cfg.params.total_mass();
    list.push(Assertion::new(
        "tight concentration",
        q >= 0.99,
        format!("Q(L/4) / sum M = {q}"),
    ));

    print_assertions(&list);
    let passed = list.iter().all(|a| a.passed);
    out.write_json("lemma_checks.json", &list)?;
    Ok(Status::from_bool(passed))
}

/// Read a snapshot file from disk.
pub fn load_snapshot(path: &std::path::Path) -> Result<MultiField> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(read_snapshot(&bytes[..])?)
}
