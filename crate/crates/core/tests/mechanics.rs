use std::f64::consts::{PI, TAU};

use holderflow::kernel::mollify;
use holderflow::lab::energy_q;
use holderflow::noise::{sample_fbm, NoiseSpec};
use holderflow::particles::{
    direct_accelerations, empirical_density, empirical_momentum, hamiltonian, init_from_fields, interaction_force,
};
use holderflow::{
    Field, FluidState, ForceBackend, Grid, InitStrategy, KernelFamily, ParticleEnsemble, ParticleStepper, SigmaField,
    Spectral, VectorField,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_ensemble(n: usize, d: usize, seed: u64) -> ParticleEnsemble<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos = (0..n * d).map(|_| rng.random::<f64>()).collect();
    let vel = (0..n * d).map(|_| rng.random::<f64>() - 0.5).collect();
    ParticleEnsemble::new(1.0, d, pos, vel, 0.0).unwrap()
}

fn permuted(ens: &ParticleEnsemble<f64>, perm: &[usize]) -> ParticleEnsemble<f64> {
    let d = ens.dim();
    let pos = perm.iter().flat_map(|&k| ens.position(k).to_vec()).collect();
    let vel = perm.iter().flat_map(|&k| ens.velocity(k).to_vec()).collect();
    ParticleEnsemble::new(ens.length(), d, pos, vel, ens.time()).unwrap()
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

#[test]
fn self_convolution_of_square_root() {
    let m = 2048;
    let g = Grid::new(1, m, 1.0).unwrap();
    let sp = Spectral::new(g.clone());
    let k = KernelFamily::<f64>::gaussian(0.6, 1, 0.05).unwrap();
    let n = 100;
    let periodic = |x: f64| if x > 0.5 { x - 1.0 } else { x };
    let r: Vec<f64> = (0..m).map(|i| k.phi_r_n(n, &[periodic(g.node(i)[0])])).collect();
    let conv = mollify(&r, &sp, &k, n).unwrap();
    for (i, c) in conv.iter().enumerate() {
        let want = k.phi_n(n, &[periodic(g.node(i)[0])]);
        assert!((c - want).abs() < 1e-8, "{i}: {c} vs {want}");
    }
}

#[test]
fn mollified_mode_is_scaled_by_the_transform() {
    let g = Grid::new(1, 256, 1.0).unwrap();
    let sp = Spectral::new(g.clone());
    let k = KernelFamily::<f64>::gaussian(0.6, 1, 0.1).unwrap();
    let f: Vec<f64> = (0..256).map(|i| (TAU * g.node(i)[0]).sin()).collect();
    for n in [64, 1024] {
        let amp = k.fourier_r(n, [TAU, 0.0]).unwrap();
        let eps = k.width(n);
        // Gaussian square root has transform exp(-eps^2 xi^2 / 2)
        assert!((amp - (-0.5 * eps * eps * TAU * TAU).exp()).abs() < 1e-14);
        let out = mollify(&f, &sp, &k, n).unwrap();
        for (a, b) in out.iter().zip(&f) {
            assert!((a - amp * b).abs() < 1e-13);
        }
    }
}

#[test]
fn momentum_is_conserved_without_noise() {
    for backend in [ForceBackend::Direct, ForceBackend::Grid { resolution: 512, order: 6 }] {
        let k = KernelFamily::gaussian(0.6, 1, 0.2).unwrap();
        let mut ens = random_ensemble(200, 1, 3);
        let p0: f64 = ens.velocities().iter().sum();
        let scale: f64 = ens.velocities().iter().map(|v| v.abs()).sum();
        let mut st = ParticleStepper::new(k, backend);
        for _ in 0..50 {
            st.step(&mut ens, 0.01, &[0.3], &SigmaField::zero(1)).unwrap();
        }
        let p1: f64 = ens.velocities().iter().sum();
        assert!((p1 - p0).abs() <= 1e-10 * scale, "{backend:?}: {p0} -> {p1}");
    }
}

#[test]
fn lattice_shift_moves_fields_and_keeps_forces() {
    let k = KernelFamily::gaussian(0.6, 1, 0.05).unwrap();
    let m = 4096;
    let sp = Spectral::new(Grid::new(1, m, 1.0).unwrap());
    let ens = random_ensemble(300, 1, 5);
    let shift = 37;
    let mut moved = ens.clone();
    moved.translate(&[shift as f64 / m as f64]);
    let a = direct_accelerations(&ens, &k).unwrap();
    let b = direct_accelerations(&moved, &k).unwrap();
    let scale = sup(&a);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-10 * scale);
    }
    let r0 = empirical_density(&ens, &k, &sp).unwrap();
    let r1 = empirical_density(&moved, &k, &sp).unwrap();
    let peak = sup(r0.values());
    for i in 0..m {
        assert!((r1.values()[(i + shift) % m] - r0.values()[i]).abs() <= 1e-10 * peak);
    }
}

#[test]
fn shared_constant_noise_moves_the_centre_of_mass() {
    let k = KernelFamily::gaussian(0.6, 2, 0.2).unwrap();
    let mut ens = random_ensemble(100, 2, 8);
    let v0 = ens.mean_velocity();
    let y = sample_fbm(&NoiseSpec {
        hurst: 0.75,
        dim: 2,
        horizon: 0.5,
        steps: 64,
        seed: 4,
    })
    .unwrap();
    let sigma = SigmaField::constant(vec![0.7, -0.3]);
    let mut st = ParticleStepper::new(k, ForceBackend::Direct);
    for i in 0..64 {
        let dy = [y.at(i + 1, 0) - y.at(i, 0), y.at(i + 1, 1) - y.at(i, 1)];
        st.step(&mut ens, y.dt(), &dy, &sigma).unwrap();
    }
    let v1 = ens.mean_velocity();
    assert!((v1[0] - v0[0] - 0.7 * y.at(64, 0)).abs() < 1e-12);
    assert!((v1[1] - v0[1] + 0.3 * y.at(64, 1)).abs() < 1e-12);
}

#[test]
fn free_particles_with_unit_noise_track_the_path() {
    let k = KernelFamily::gaussian(0.6, 1, 0.2).unwrap();
    let mut ens = ParticleEnsemble::new(1.0, 1, vec![0.1, 0.6, 0.9], vec![0.0; 3], 0.0).unwrap();
    let y = sample_fbm(&NoiseSpec {
        hurst: 0.75,
        dim: 1,
        horizon: 1.0,
        steps: 256,
        seed: 2,
    })
    .unwrap();
    let mut st = ParticleStepper::new(k, ForceBackend::Free);
    let one = SigmaField::constant(vec![1.0]);
    for i in 0..256 {
        st.step(&mut ens, y.dt(), &[y.at(i + 1, 0) - y.at(i, 0)], &one).unwrap();
        for &v in ens.velocities().iter() {
            let v: f64 = v;
            // telescoped increments, equal up to the rounding of the running sum
            assert!((v - y.at(i + 1, 0)).abs() <= 1e-14 * (i + 1) as f64);
        }
    }
}

#[test]
fn quantile_placement_matches_the_cdf() {
    let m = 256;
    let g = Grid::new(1, m, 1.0).unwrap();
    let rho = Field::from_fn(g.clone(), |x| 1.0 + 0.5 * (TAU * x[0]).sin());
    let v = VectorField::zeros(g);
    let n = 10_000;
    let ens = init_from_fields(&rho, &v, n, InitStrategy::Quantile).unwrap();
    let cdf = |x: f64| x + (1.0 - (TAU * x).cos()) / (4.0 * PI);
    let mut xs = ens.positions().to_vec();
    xs.sort_by(f64::total_cmp);
    let mut worst = 0.0f64;
    for (k, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        worst = worst.max((f - k as f64 / n as f64).abs()).max((f - (k + 1) as f64 / n as f64).abs());
    }
    assert!(worst <= 1e-3, "{worst}");
}

#[test]
fn mesh_and_direct_agree_at_512_particles() {
    let k = KernelFamily::gaussian(0.6, 1, 0.1).unwrap();
    let ens = random_ensemble(512, 1, 77);
    let a = interaction_force(&ens, &k, ForceBackend::Direct).unwrap();
    let b = interaction_force(&ens, &k, ForceBackend::Grid { resolution: 1024, order: 6 }).unwrap();
    let scale = sup(&a);
    let err = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(err <= 1e-3 * scale, "{err} / {scale}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn relabelling_changes_nothing(seed in 0u64..10_000, d in 1usize..=2) {
        let n = if d == 1 { 120 } else { 40 };
        let k = KernelFamily::gaussian(0.6, d, 0.2).unwrap();
        let sp = Spectral::new(Grid::new(d, if d == 1 { 512 } else { 64 }, 1.0).unwrap());
        let ens = random_ensemble(n, d, seed);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed + 1));
        let other = permuted(&ens, &perm);
        let (r0, r1) = (empirical_density(&ens, &k, &sp).unwrap(), empirical_density(&other, &k, &sp).unwrap());
        prop_assert_eq!(r0.values(), r1.values());
        let (m0, m1) = (empirical_momentum(&ens, &k, &sp).unwrap(), empirical_momentum(&other, &k, &sp).unwrap());
        prop_assert_eq!(m0.components(), m1.components());
        prop_assert_eq!(hamiltonian(&ens, &k).unwrap(), hamiltonian(&other, &k).unwrap());
        let g = sp.grid().clone();
        let fluid = FluidState::new(
            Field::constant(g.clone(), 1.0),
            VectorField::from_fn(g, |x| [(TAU * x[0]).sin(), 0.0]),
            0.0,
        ).unwrap();
        prop_assert_eq!(energy_q(&ens, &fluid, &k, &sp).unwrap(), energy_q(&other, &fluid, &k, &sp).unwrap());
    }

    #[test]
    fn forces_sum_to_zero(seed in 0u64..10_000, d in 1usize..=2, n in 2usize..300) {
        let k = KernelFamily::gaussian(0.6, d, 0.05).unwrap();
        let ens = random_ensemble(n, d, seed);
        let a = direct_accelerations(&ens, &k).unwrap();
        let scale = sup(&a);
        for q in 0..d {
            let total: f64 = a.iter().skip(q).step_by(d).sum();
            prop_assert!(total.abs() <= 1e-12 * n as f64 * scale);
        }
    }

    #[test]
    fn empirical_density_has_unit_mass(seed in 0u64..10_000, n in 1usize..400) {
        let k = KernelFamily::gaussian(0.6, 1, 0.2).unwrap();
        let sp = Spectral::new(Grid::new(1, 1024, 1.0).unwrap());
        let ens = random_ensemble(n, 1, seed);
        let rho = empirical_density(&ens, &k, &sp).unwrap();
        prop_assert!((rho.integral() - 1.0).abs() < 1e-12);
    }
}
