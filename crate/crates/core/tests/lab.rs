use std::f64::consts::TAU;

use holderflow::config::{BackendChoice, InitChoice, SigmaChoice};
use holderflow::lab::{
    diag_resolution_for, energy_q, gronwall_constant, initial_fields, kernel_for, rate_rows, run_seed,
};
use holderflow::particles::{empirical_density, init_from_fields};
use holderflow::{ExperimentConfig, Field, FluidState, Grid, InitStrategy, KernelFamily, ParticleEnsemble, Spectral, VectorField};
use proptest::prelude::*;

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        steps: 256,
        horizon: 0.25,
        seeds: vec![1, 2, 3],
        n_list: vec![64, 128, 256, 512],
        pde_resolution: 64,
        checkpoints: 8,
        ..ExperimentConfig::default()
    }
}

#[test]
fn matched_particles_and_fluid_give_zero_energy() {
    let k = KernelFamily::gaussian(0.6, 1, 0.3).unwrap();
    let n = 64;
    let g = Grid::new(1, 512, 1.0).unwrap();
    let sp = Spectral::new(g.clone());
    let pos: Vec<f64> = (0..n).map(|i| (i as f64 + 0.3) / n as f64).collect();
    let ens = ParticleEnsemble::new(1.0, 1, pos, vec![0.0; n], 0.0).unwrap();
    let rho = empirical_density(&ens, &k, &sp).unwrap();
    let fluid = FluidState::new(rho, VectorField::zeros(g), 0.0).unwrap();
    let e = energy_q(&ens, &fluid, &k, &sp).unwrap();
    assert_eq!((e.kinetic_term, e.density_term, e.q), (0.0, 0.0, 0.0));
}

#[test]
fn kinetic_term_of_uniform_velocity_against_rest() {
    let k = KernelFamily::gaussian(0.6, 2, 0.12).unwrap();
    let n = 50;
    let g = Grid::new(2, 128, 1.0).unwrap();
    let sp = Spectral::new(g.clone());
    let pos: Vec<f64> = (0..2 * n).map(|i| ((i * 37) % 101) as f64 / 101.0).collect();
    let vel: Vec<f64> = (0..n).flat_map(|_| [0.3, -0.4]).collect();
    let ens = ParticleEnsemble::new(1.0, 2, pos, vel, 0.0).unwrap();
    let fluid = FluidState::new(Field::constant(g.clone(), 1.0), VectorField::zeros(g), 0.0).unwrap();
    let e = energy_q(&ens, &fluid, &k, &sp).unwrap();
    assert!((e.kinetic_term - 0.25).abs() < 1e-15);
    assert_eq!(e.q, e.kinetic_term + e.density_term);
}

#[test]
fn time_mismatch_is_refused() {
    let k = KernelFamily::gaussian(0.6, 1, 0.3).unwrap();
    let g = Grid::new(1, 64, 1.0).unwrap();
    let sp = Spectral::new(g.clone());
    let ens = ParticleEnsemble::new(1.0, 1, vec![0.5], vec![0.0], 0.1).unwrap();
    let fluid = FluidState::new(Field::constant(g.clone(), 1.0), VectorField::zeros(g), 0.0).unwrap();
    assert!(energy_q(&ens, &fluid, &k, &sp).is_err());
}

#[test]
fn initial_energy_matches_dense_quadrature() {
    let cfg = ExperimentConfig {
        v_amplitude: 0.3,
        rho_amplitude: 0.2,
        ..ExperimentConfig::default()
    };
    let n = 1000;
    let k = kernel_for::<f64>(&cfg).unwrap();
    let g = Grid::new(1, cfg.pde_resolution, 1.0).unwrap();
    let (rho, v) = initial_fields(&cfg, &g);
    let ens = init_from_fields(&rho, &v, n, InitStrategy::Quantile).unwrap();
    let fluid = FluidState::new(rho, v, 0.0).unwrap();
    let diag = Spectral::new(Grid::new(1, diag_resolution_for(&cfg, n), 1.0).unwrap());
    let e = energy_q(&ens, &fluid, &k, &diag).unwrap();

    // independent evaluation: analytic fields, direct kernel sums, midpoint rule
    let kinetic: f64 = (0..n)
        .map(|i| {
            let x = ens.position(i)[0];
            let d = ens.velocity(i)[0] - 0.3 * (TAU * x).sin();
            d * d
        })
        .sum::<f64>()
        / n as f64;
    let m = 16384;
    let h = 1.0 / m as f64;
    let wrap = |x: f64| x - x.round();
    let density: f64 = (0..m)
        .map(|j| {
            let x = j as f64 * h;
            let s: f64 = ens.positions().iter().map(|&p| k.phi_r_n(n, &[wrap(x - p)])).sum::<f64>() / n as f64;
            let r = 1.0 + 0.2 * (TAU * x).sin();
            (s - r) * (s - r)
        })
        .sum::<f64>()
        * h;
    let want = kinetic + density;
    assert!((e.q - want).abs() <= 1e-6 * want, "{} vs {want}", e.q);
    // particles start on the velocity field, so this term is pure rounding
    assert!(kinetic < 1e-28 && e.kinetic_term < 1e-28, "{kinetic} {}", e.kinetic_term);
}

#[test]
fn stationary_coupled_system_keeps_its_floor() {
    let cfg = ExperimentConfig {
        sigma: SigmaChoice::Zero,
        rho_amplitude: 0.0,
        v_amplitude: 0.0,
        force_backend: BackendChoice::Direct,
        init: InitChoice::Quantile,
        seeds: vec![5],
        n_list: vec![128],
        ..small_config()
    };
    let run = run_seed::<f64>(&cfg, 5, 1.0).unwrap();
    let rows = &run.runs[0].rows;
    assert_eq!(rows.len(), cfg.checkpoints + 1);
    let floor = rows[0].energy.density_term;
    for r in rows {
        assert!(r.energy.kinetic_term < 1e-24, "{:?}", r.energy);
        assert!((r.energy.density_term - floor).abs() <= 1e-9 * floor.max(1e-30), "{:?}", r.energy);
    }
}

#[test]
fn doubling_the_fluid_resolution_barely_moves_q() {
    let base = ExperimentConfig {
        seeds: vec![1],
        n_list: vec![256],
        ..small_config()
    };
    let fine = ExperimentConfig {
        pde_resolution: 128,
        ..base.clone()
    };
    let sup = |cfg: &ExperimentConfig| {
        let run = run_seed::<f64>(cfg, 1, 1.0).unwrap();
        rate_rows(&run)[0].sup_q
    };
    let (a, b) = (sup(&base), sup(&fine));
    assert!((a - b).abs() <= 0.05 * a, "{a} vs {b}");
}

#[test]
fn gronwall_constant_is_stable_across_seeds() {
    let cfg = small_config();
    let cs: Vec<f64> = cfg
        .seeds
        .iter()
        .map(|&s| {
            let run = run_seed::<f64>(&cfg, s, 1.0).unwrap();
            gronwall_constant(&rate_rows(&run), cfg.beta, cfg.dim, cfg.horizon)
        })
        .collect();
    let mean = cs.iter().sum::<f64>() / cs.len() as f64;
    for c in &cs {
        assert!((c - mean).abs() <= 0.5 * mean.abs(), "{cs:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trips(
        hurst in 0.52f64..0.99,
        beta in 0.05f64..0.95,
        bw in 0.05f64..2.0,
        seeds in proptest::collection::vec(0u64..1_000_000, 1..5),
        n_list in proptest::collection::vec(1usize..10_000, 1..6),
        eta in 1.6f64..5.0,
        sigma in 0usize..3,
    ) {
        let cfg = ExperimentConfig {
            hurst,
            beta,
            bandwidth: bw,
            seeds,
            n_list,
            etas: vec![eta, eta + 1.0],
            sigma: [SigmaChoice::Zero, SigmaChoice::Constant, SigmaChoice::Cosine][sigma],
            ..ExperimentConfig::default()
        };
        let back = ExperimentConfig::parse(&cfg.emit()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.hash(), cfg.hash());
    }
}
