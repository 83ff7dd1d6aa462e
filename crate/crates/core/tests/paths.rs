use holderflow::noise::{
    fbm_covariance, holder_seminorm, sample_fbm, sample_fbm_with, FbmMethod, FbmSampler, NoiseSpec, SampledPath,
};
use holderflow::young::{
    check_chain_rule, check_integration_by_parts, check_ito_wentzell, young_integral, young_integral_with,
    young_loeve_defect, IntegrandPath, Tag, WentzellField,
};
use holderflow::Grid;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fbm(hurst: f64, steps: usize, seed: u64) -> SampledPath<f64> {
    sample_fbm(&NoiseSpec {
        hurst,
        dim: 1,
        horizon: 1.0,
        steps,
        seed,
    })
    .unwrap()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn brownian_covariance_is_min() {
    assert!((fbm_covariance(0.5, 0.25, 0.75) - 0.25).abs() < 1e-15);
}

#[test]
fn variance_scales_like_t_to_the_2h() {
    let n = 10_000;
    for h in [0.6, 0.75] {
        let sampler = FbmSampler::new(h, 16, 1.0, FbmMethod::CirculantEmbedding).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let paths: Vec<Vec<f64>> = (0..n).map(|_| sampler.sample(&mut rng).unwrap()).collect();
        for i in 1..=16 {
            let t = i as f64 / 16.0;
            let sq: Vec<f64> = paths.iter().map(|p| p[i] * p[i]).collect();
            let m = holderflow::stats::mean(&sq);
            let se = holderflow::stats::std_dev(&sq) / (n as f64).sqrt();
            assert!((m - t.powf(2.0 * h)).abs() <= 5.0 * se, "H={h} t={t}: {m}");
        }
    }
}

#[test]
fn identical_specs_give_identical_paths() {
    let spec = NoiseSpec {
        hurst: 0.7,
        dim: 2,
        horizon: 0.5,
        steps: 8192,
        seed: 77,
    };
    let a = sample_fbm_with(&spec, FbmMethod::CirculantEmbedding).unwrap();
    let b = sample_fbm_with(&spec, FbmMethod::CirculantEmbedding).unwrap();
    assert_eq!(a.values(), b.values());
    let c = sample_fbm(&spec).unwrap();
    assert_eq!(c.values(), sample_fbm(&spec).unwrap().values());
}

#[test]
fn single_precision_paths() {
    let p = sample_fbm(&NoiseSpec {
        hurst: 0.75f32,
        dim: 1,
        horizon: 1.0,
        steps: 512,
        seed: 3,
    })
    .unwrap();
    let q = fbm(0.75, 512, 3);
    for i in 0..=512 {
        assert!((p.at(i, 0) as f64 - q.at(i, 0)).abs() < 1e-5);
    }
}

#[test]
fn increment_queries() {
    let p = fbm(0.75, 64, 5);
    assert_eq!(p.increment(0.0, 0.0).unwrap(), vec![0.0]);
    let (s, t) = (p.times()[3], p.times()[40]);
    assert_eq!(p.increment(s, t).unwrap()[0], p.at(40, 0) - p.at(3, 0));
    let mid = 0.5 * (p.times()[7] + p.times()[8]);
    let want = 0.5 * (p.at(7, 0) + p.at(8, 0));
    assert!((p.value_at(mid).unwrap()[0] - want).abs() < 1e-15);
}

#[test]
fn seminorm_of_constant_and_linear_paths() {
    let c = SampledPath::from_fn(1.0, 64, 0.7, |_| 3.0).unwrap();
    assert_eq!(holder_seminorm(&c, 0.7), 0.0);
    let l = SampledPath::from_fn(1.0, 64, 1.0, |t| t).unwrap();
    assert!((holder_seminorm(&l, 1.0f64) - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn increments_are_additive(seed in 0u64..1000, a in 0usize..=256, b in 0usize..=256, c in 0usize..=256) {
        let p = fbm(0.75, 256, seed);
        let mut idx = [a, b, c];
        idx.sort();
        let [s, u, t] = idx.map(|i| p.times()[i]);
        let lhs = p.increment(s, u).unwrap()[0] + p.increment(u, t).unwrap()[0];
        let whole = p.increment(s, t).unwrap()[0];
        // (y_u - y_s) + (y_t - y_u) may round once more than y_t - y_s
        prop_assert!((lhs - whole).abs() <= 4.0 * f64::EPSILON * p.values().iter().fold(0.0f64, |m, v| m.max(v.abs())));
        prop_assert_eq!(p.increment(s, t).unwrap()[0], p.at(idx[2], 0) - p.at(idx[0], 0));
    }

    #[test]
    fn seminorm_never_grows_on_subgrids(seed in 0u64..1000, k in 1usize..5) {
        let p = fbm(0.7, 512, seed);
        let sub = p.restrict(1 << k).unwrap();
        prop_assert!(holder_seminorm(&sub, 0.69) <= holder_seminorm(&p, 0.69));
    }

    #[test]
    fn young_integral_is_bilinear(seed in 0u64..1000, a in -4.0f64..4.0, b in -4.0f64..4.0) {
        let y = fbm(0.75, 512, seed);
        let x1 = fbm(0.75, 512, seed + 5000);
        let x2 = fbm(0.8, 512, seed + 9000);
        let mix = SampledPath::new(
            1.0,
            1,
            x1.values().iter().zip(x2.values()).map(|(p, q)| a * p + b * q).collect(),
            x1.alpha().min(x2.alpha()),
        ).unwrap();
        let i = |x: &SampledPath<f64>| young_integral(&IntegrandPath::scalar(x).unwrap(), &y, 0.0, 1.0).unwrap()[0];
        let lhs = i(&mix);
        let rhs = a * i(&x1) + b * i(&x2);
        let scale = a.abs() * i(&x1).abs() + b.abs() * i(&x2).abs() + 1.0;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale, "{} vs {}", lhs, rhs);
        // linear in the driver as well
        let y2 = SampledPath::new(1.0, 1, y.values().iter().map(|v| a * v).collect(), y.alpha()).unwrap();
        let j = young_integral(&IntegrandPath::scalar(&x1).unwrap(), &y2, 0.0, 1.0).unwrap()[0];
        prop_assert!((j - a * i(&x1)).abs() <= 1e-12 * (a.abs() * i(&x1).abs() + 1.0));
    }

    #[test]
    fn young_integral_is_additive(seed in 0u64..1000, u in 1usize..512) {
        let y = fbm(0.75, 512, seed);
        let x = IntegrandPath::scalar(&fbm(0.75, 512, seed + 1)).unwrap();
        let tu = y.times()[u];
        let a = young_integral(&x, &y, 0.0, tu).unwrap()[0];
        let b = young_integral(&x, &y, tu, 1.0).unwrap()[0];
        let w = young_integral(&x, &y, 0.0, 1.0).unwrap()[0];
        // each sum is correctly rounded, so the split can differ by one rounding
        prop_assert!((a + b - w).abs() <= 2.0 * f64::EPSILON * (a.abs() + b.abs() + w.abs()));
    }
}

#[test]
fn constant_integrand_telescopes_and_has_no_defect() {
    let y = fbm(0.75, 1024, 2);
    let x = IntegrandPath::from_fn(&y, 1.0, |_| -0.5).unwrap();
    assert_eq!(young_integral(&x, &y, 0.0, 1.0).unwrap()[0], -0.5 * y.at(1024, 0));
    assert_eq!(young_loeve_defect(&x, &y, 0.125, 0.625).unwrap().defect, 0.0);
}

#[test]
fn self_integral_approaches_half_square() {
    let fine = fbm(0.75, 1 << 14, 4);
    let mut last = f64::INFINITY;
    for f in [16, 4, 1] {
        let y = fine.restrict(f).unwrap();
        let v = young_integral(&IntegrandPath::scalar(&y).unwrap(), &y, 0.0, 1.0).unwrap()[0];
        let err = (v - 0.5 * y.at(y.steps(), 0).powi(2)).abs();
        assert!(err < last, "{err} after {last}");
        last = err;
    }
}

#[test]
fn left_and_midpoint_sums_merge() {
    let y = fbm(0.75, 1 << 14, 6);
    let x = fbm(0.75, 1 << 14, 7);
    let gap = |f: usize| {
        let (xr, yr) = (x.restrict(f).unwrap(), y.restrict(f).unwrap());
        let xi = IntegrandPath::scalar(&xr).unwrap();
        let l = young_integral_with(&xi, &yr, 0.0, 1.0, Tag::Left).unwrap()[0];
        let m = young_integral_with(&xi, &yr, 0.0, 1.0, Tag::Midpoint).unwrap()[0];
        (l - m).abs()
    };
    let gaps: Vec<f64> = [64, 16, 4, 1].iter().map(|&f| gap(f)).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

#[test]
fn smooth_integration_by_parts() {
    let x = SampledPath::from_fn(1.0, 1 << 14, 1.0, f64::sin).unwrap();
    assert!(check_integration_by_parts(&x, &x, Tag::Midpoint).unwrap() < 1e-8);
}

#[test]
fn integration_by_parts_refines_for_independent_paths() {
    let fine_x = fbm(0.75, 1 << 12, 10);
    let fine_y = fbm(0.75, 1 << 12, 11);
    let r: Vec<f64> = [4, 2, 1]
        .iter()
        .map(|&f| check_integration_by_parts(&fine_x.restrict(f).unwrap(), &fine_y.restrict(f).unwrap(), Tag::Left).unwrap())
        .collect();
    // monotone within a factor two
    assert!(r[1] <= 2.0 * r[0] && r[2] <= 2.0 * r[1] && r[2] < r[0], "{r:?}");
}

#[test]
fn chain_rule_trivial_and_cubic() {
    let y = fbm(0.75, 1 << 12, 12);
    for tag in [Tag::Left, Tag::Midpoint] {
        assert_eq!(check_chain_rule(|_| 2.0, |_| 0.0, &y, tag).unwrap(), 0.0);
        assert_eq!(check_chain_rule(|v| v, |_| 1.0, &y, tag).unwrap(), 0.0);
    }
    let coarse = check_chain_rule(|v| v * v * v, |v| 3.0 * v * v, &y.restrict(8).unwrap(), Tag::Midpoint).unwrap();
    let fine = check_chain_rule(|v| v * v * v, |v| 3.0 * v * v, &y, Tag::Midpoint).unwrap();
    assert!(fine < coarse);
}

#[test]
fn ito_wentzell_smooth_field() {
    let grid = Grid::new(1, 16, std::f64::consts::TAU).unwrap();
    let nodes: Vec<f64> = (0..16).map(|i| grid.node(i)[0]).collect();
    let g0: Vec<f64> = nodes.iter().map(|x| x.sin()).collect();
    let y = fbm(0.75, 1 << 12, 13);
    let x = fbm(0.75, 1 << 12, 14);
    let field = WentzellField::build(grid, &g0, |_| nodes.iter().map(|x| x.cos()).collect(), &y, Tag::Midpoint).unwrap();
    let r = check_ito_wentzell(&field, &y, &x, Tag::Midpoint).unwrap();
    assert!(r < 1e-3, "{r}");
}

#[test]
fn constant_path_has_zero_seminorm_on_f32() {
    let c = SampledPath::<f32>::from_fn(1.0, 32, 0.7, |_| 1.5).unwrap();
    assert_eq!(holder_seminorm(&c, 0.7), 0.0);
}

#[test]
fn covariance_closed_form_is_symmetric() {
    for h in [0.55, 0.75, 0.95] {
        assert_eq!(fbm_covariance(h, 0.3, 0.8), fbm_covariance(h, 0.8, 0.3));
        assert!(close(fbm_covariance(h, 0.4, 0.4), 0.4f64.powf(2.0 * h), 1e-14));
    }
}
