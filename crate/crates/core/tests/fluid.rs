use std::f64::consts::TAU;

use holderflow::fluid::{diagnostics, interpolate_state};
use holderflow::noise::{sample_fbm, NoiseSpec};
use holderflow::{Field, FluidSolver, FluidState, Grid, SigmaField, Spectral, VectorField};
use proptest::prelude::*;

fn wave_state(m: usize, d: usize, amp: f64) -> FluidState<f64> {
    let g = Grid::new(d, m, 1.0).unwrap();
    let rho = Field::from_fn(g.clone(), |x| 1.0 + amp * (TAU * x[0]).sin());
    let v = VectorField::from_fn(g, |x| [0.3 * (TAU * x[0]).cos(), if d == 2 { 0.1 * (TAU * x[1]).sin() } else { 0.0 }]);
    FluidState::new(rho, v, 0.0).unwrap()
}

#[test]
fn rest_state_with_unit_noise_follows_the_path() {
    let g = Grid::new(1, 32, 1.0).unwrap();
    let solver = FluidSolver::with_defaults(g.clone());
    let mut st = FluidState::new(Field::constant(g.clone(), 1.0), VectorField::zeros(g), 0.0).unwrap();
    let y = sample_fbm(&NoiseSpec {
        hurst: 0.7,
        dim: 1,
        horizon: 1.0,
        steps: 128,
        seed: 9,
    })
    .unwrap();
    let one = SigmaField::constant(vec![1.0]);
    for i in 0..128 {
        st = solver.step(&st, y.dt(), &[y.at(i + 1, 0) - y.at(i, 0)], &one).unwrap();
        let want = y.at(i + 1, 0);
        for &v in st.v.component(0) {
            let v: f64 = v;
            assert!((v - want).abs() <= 1e-14 * (i + 1) as f64, "step {i}: {v} vs {want}");
        }
        assert!(st.rho.values().iter().all(|&r| r == 1.0));
    }
}

#[test]
fn kick_adds_linearly_for_constant_sigma() {
    let solver = FluidSolver::with_defaults(Grid::new(1, 64, 1.0).unwrap());
    let s0 = wave_state(64, 1, 0.2);
    let sigma = SigmaField::constant(vec![0.5]);
    let a = solver.step(&s0, 1e-3, &[0.02], &sigma).unwrap();
    let b = solver.step(&s0, 1e-3, &[0.0], &sigma).unwrap();
    assert_eq!(a.rho, b.rho);
    for (x, y) in a.v.component(0).iter().zip(b.v.component(0)) {
        assert!((x - y - 0.01).abs() < 1e-15);
    }
}

#[test]
fn dealiasing_is_idempotent() {
    let g = Grid::new(2, 32, 1.0).unwrap();
    let sp = Spectral::new(g.clone());
    let f = Field::from_fn(g, |x| (TAU * 13.0 * x[0]).sin() * (TAU * 2.0 * x[1]).cos() + (TAU * x[1]).sin());
    let mut once = sp.forward(f.values());
    sp.dealias(&mut once);
    let mut twice = once.clone();
    sp.dealias(&mut twice);
    assert_eq!(once, twice);
    // mode 13 > 32/3 is removed, mode 1 survives
    let back = sp.inverse(once);
    let want = Field::from_fn(f.grid().clone(), |x| (TAU * x[1]).sin());
    for (a, b) in back.iter().zip(want.values()) {
        assert!((a - b).abs() < 1e-13);
    }
}

#[test]
fn momentum_drift_stays_small_without_noise() {
    let solver = FluidSolver::with_defaults(Grid::new(1, 128, 1.0).unwrap());
    let mut st = wave_state(128, 1, 0.1);
    let p0 = diagnostics(&st).momentum[0];
    let zero = SigmaField::zero(1);
    for _ in 0..200 {
        st = solver.step(&st, 1e-3, &[0.0], &zero).unwrap();
    }
    let p1 = diagnostics(&st).momentum[0];
    assert!((p1 - p0).abs() <= 1e-8, "{p0} -> {p1}");
}

#[test]
fn mass_is_conserved_in_two_dimensions() {
    let solver = FluidSolver::with_defaults(Grid::new(2, 32, 1.0).unwrap());
    let mut st = wave_state(32, 2, 0.2);
    let sigma = SigmaField::cosine(2, 0.2, 0.5, 1.0);
    for i in 0..40 {
        let dy = [0.01 * (i as f64).sin(), -0.005];
        st = solver.step(&st, 2e-3, &dy, &sigma).unwrap();
    }
    assert!((diagnostics(&st).mass - 1.0).abs() < 1e-12);
}

#[test]
fn interpolant_recovers_a_single_mode() {
    let st = wave_state(64, 1, 0.25);
    for &x in &[0.013, 0.37, 0.5, 0.999] {
        let p = interpolate_state(&st, &[x]);
        assert!((p.rho - (1.0 + 0.25 * (TAU * x).sin())).abs() < 1e-10);
        assert!((p.grad_rho[0] - 0.25 * TAU * (TAU * x).cos()).abs() < 1e-10);
        assert!((p.v[0] - 0.3 * (TAU * x).cos()).abs() < 1e-10);
        assert!((p.grad_v[0][0] + 0.3 * TAU * (TAU * x).sin()).abs() < 1e-10);
    }
}

#[test]
fn interpolant_reproduces_node_values_and_constants() {
    let g = Grid::<f64>::new(2, 16, 1.0).unwrap();
    let st = FluidState::new(
        Field::from_fn(g.clone(), |x| 2.0 + x[0] * x[1]),
        VectorField::from_fn(g.clone(), |_| [1.5, -0.5]),
        0.0,
    )
    .unwrap();
    for flat in [0, 17, 100, 255] {
        let x = g.node(flat);
        let p = interpolate_state(&st, &x);
        assert!((p.rho - st.rho.values()[flat]).abs() < 1e-12);
        assert!((p.v[0] - 1.5).abs() < 1e-14 && (p.v[1] + 0.5).abs() < 1e-14);
        assert!(p.grad_v.iter().flatten().all(|g: &f64| g.abs() < 1e-13));
    }
}

#[test]
fn diagnostics_of_simple_states() {
    let st = wave_state(64, 1, 0.4);
    let dg = diagnostics(&st);
    assert!((dg.mass - 1.0).abs() < 1e-14);
    assert!((dg.min_density - 0.6).abs() < 1e-3);
    let g = Grid::new(2, 8, 1.0).unwrap();
    let flat = FluidState::new(Field::constant(g.clone(), 0.7), VectorField::zeros(g), 0.0).unwrap();
    assert_eq!(diagnostics(&flat).min_density, 0.7);
}

#[test]
fn single_precision_smoke() {
    let g = Grid::<f32>::new(1, 32, 1.0).unwrap();
    let solver = FluidSolver::with_defaults(g.clone());
    let rho = Field::from_fn(g.clone(), |x| 1.0 + 0.1 * (std::f32::consts::TAU * x[0]).sin());
    let mut st = FluidState::new(rho, VectorField::zeros(g), 0.0).unwrap();
    for _ in 0..20 {
        st = solver.step(&st, 1e-3, &[0.001], &SigmaField::constant(vec![1.0f32])).unwrap();
    }
    assert!((diagnostics(&st).mass - 1.0).abs() < 1e-5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mass_is_conserved_for_random_waves(a in -0.5f64..0.5, b in -0.5f64..0.5, k in 1usize..5) {
        let g = Grid::new(1, 64, 1.0).unwrap();
        let solver = FluidSolver::with_defaults(g.clone());
        let rho = Field::from_fn(g.clone(), |x| 1.0 + a * (TAU * k as f64 * x[0]).cos());
        let v = VectorField::from_fn(g, |x| [b * (TAU * x[0]).sin(), 0.0]);
        let mut st = FluidState::new(rho, v, 0.0).unwrap();
        let dt = 0.5 * solver.stable_dt(&st);
        for _ in 0..10 {
            match solver.step(&st, dt, &[0.0], &SigmaField::zero(1)) {
                Ok(next) => st = next,
                Err(_) => break,
            }
        }
        prop_assert!((diagnostics(&st).mass - 1.0).abs() < 1e-12);
    }
}
