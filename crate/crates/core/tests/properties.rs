use hartree_core::analysis::{concentration_profile, strict_scaling_check};
use hartree_core::evolve::{orbit_distance, Propagator};
use hartree_core::{
    dilate, pair_interaction, project_masses, total_energy, Field, Grid, GroundState, Kernel,
    MultiField, Spectral,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn field_from(g: Grid, values: &[(f64, f64)]) -> Field {
    Field::from_data(
        g,
        values.iter().map(|(a, b)| Complex64::new(*a, *b)).collect(),
    )
    .unwrap()
}

fn samples(len: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), len)
}

fn state(g: Grid, m: usize) -> impl Strategy<Value = MultiField> {
    prop::collection::vec(samples(g.len()), m)
        .prop_map(move |cs| MultiField::new(cs.iter().map(|c| field_from(g, c)).collect()).unwrap())
}

fn grid() -> Grid {
    Grid::new(1, 32, 10.0).unwrap()
}

fn fake_ground_state(mf: MultiField) -> GroundState {
    let k = Kernel::zero(*mf.grid());
    GroundState {
        masses: mf.masses(),
        multipliers: vec![1.0; mf.len()],
        energy: total_energy(&mf, &k, 2.0).unwrap(),
        residuals: vec![0.0; mf.len()],
        iterations: 0,
        converged: true,
        seed: None,
        fields: mf,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn parseval(mf in state(grid(), 1)) {
        let sp = Spectral::new(grid());
        let f = mf.component(0);
        let spec = sp.transform(f).unwrap();
        prop_assert!((sp.spectral_mass(&spec) - f.mass()).abs() <= 1e-12 * f.mass());
    }

    #[test]
    fn split_step_conserves_each_mass(mf in state(grid(), 2), dt in 1e-4f64..0.1, p in 2.0f64..3.0) {
        let k = Kernel::power_law(grid(), 0.5).unwrap();
        let before = mf.masses();
        let mut x = mf;
        Propagator::new(&k, p, dt).unwrap().step(&mut x).unwrap();
        for (a, b) in x.masses().iter().zip(&before) {
            prop_assert!((a - b).abs() <= 1e-12 * b);
        }
    }

    #[test]
    fn energy_is_gauge_invariant(mf in state(grid(), 3), shift in 0usize..32, phases in prop::collection::vec(0.0f64..6.3, 3)) {
        let k = Kernel::power_law(grid(), 0.5).unwrap();
        let e0 = total_energy(&mf, &k, 2.5).unwrap().total;
        let moved = mf.shifted(&[shift]);
        let comps = moved.components().iter().zip(&phases).map(|(c, t)| c.scaled(Complex64::from_polar(1.0, *t))).collect();
        let e1 = total_energy(&MultiField::new(comps).unwrap(), &k, 2.5).unwrap().total;
        prop_assert!((e0 - e1).abs() <= 1e-10 * e0.abs().max(1.0));
    }

    #[test]
    fn interaction_is_symmetric_and_positive(mf in state(grid(), 2), p in 2.0f64..3.0) {
        let k = Kernel::power_law(grid(), 0.7).unwrap();
        let (a, b) = (mf.component(0), mf.component(1));
        let ab = pair_interaction(p, a, b, &k, p).unwrap();
        let ba = pair_interaction(p, b, a, &k, p).unwrap();
        prop_assert!(ab > 0.0);
        prop_assert!((ab - ba).abs() <= 1e-12 * ab);
    }

    #[test]
    fn scaling_gap_identity(mf in state(grid(), 1), gamma in 1.01f64..3.0, p in 2.0f64..3.0) {
        let k = Kernel::power_law(grid(), 0.5).unwrap();
        let r = strict_scaling_check(mf.component(0), gamma, &k, p).unwrap();
        prop_assert!(r.delta > 0.0);
        prop_assert!((r.delta - r.predicted).abs() <= 1e-10 * r.predicted);
    }

    #[test]
    fn projection_hits_masses(mf in state(grid(), 3), masses in prop::collection::vec(0.1f64..3.0, 3)) {
        let x = project_masses(&mf, &masses).unwrap();
        for (a, b) in x.masses().iter().zip(&masses) {
            prop_assert!((a - b).abs() <= 1e-12 * b);
        }
    }

    #[test]
    fn concentration_is_monotone_and_exhaustive(mf in state(grid(), 2)) {
        let radii = [0.3, 1.0, 2.0, 3.5, 5.0];
        let prof = concentration_profile(&mf, &radii).unwrap();
        prop_assert!(prof.q.windows(2).all(|w| w[1] >= w[0]));
        let total: f64 = mf.masses().iter().sum();
        prop_assert!((prof.q[4] - total).abs() <= 1e-10 * total);
    }

    #[test]
    fn orbit_distance_vanishes_on_the_orbit(mf in state(grid(), 2), shift in 0usize..32, phase in 0.0f64..6.3) {
        let gs = fake_ground_state(mf.clone());
        let moved = mf.shifted(&[shift]);
        let comps = moved.components().iter().map(|c| c.scaled(Complex64::from_polar(1.0, phase))).collect();
        let d = orbit_distance(&MultiField::new(comps).unwrap(), &gs).unwrap();
        prop_assert!((0.0..=1e-8).contains(&d));
    }

    #[test]
    fn dilation_preserves_mass_of_localized_fields(width in 0.5f64..1.0, theta in 0.7f64..1.5) {
        let g = Grid::new(1, 128, 20.0).unwrap();
        let f = Field::from_fn(g, |x| Complex64::new((-x[0] * x[0] / (2.0 * width * width)).exp(), 0.0));
        let d = dilate(&f, theta).unwrap();
        prop_assert!((d.mass() - f.mass()).abs() <= 1e-8 * f.mass());
    }
}
