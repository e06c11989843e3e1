mod common;

use std::f64::consts::PI;
use std::sync::OnceLock;

use fracflow::kernels::{
    build_fractional_heat_profile, eval_kernel, explicit_half_constant, gamma_limit_constant, gradient_bound,
    limit_constant, verify_kernel_bounds, KernelFamily, KernelSpec, RadialTable,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn heat(s: f64) -> &'static KernelSpec {
    static Q: OnceLock<KernelSpec> = OnceLock::new();
    static H: OnceLock<KernelSpec> = OnceLock::new();
    static T: OnceLock<KernelSpec> = OnceLock::new();
    let cell = match s {
        0.25 => &Q,
        0.5 => &H,
        0.75 => &T,
        _ => panic!("no cached kernel for s = {s}"),
    };
    cell.get_or_init(|| KernelSpec::fractional_heat(s, 2).unwrap())
}

fn all_kernels() -> Vec<KernelSpec> {
    vec![
        heat(0.25).clone(),
        heat(0.75).clone(),
        KernelSpec::explicit_half(2),
        KernelSpec::harmonic_extension(0.25, 2),
        KernelSpec::harmonic_extension(0.75, 2),
    ]
}

/// `int_{R^2} K(y, t) dy` by polar Gauss–Legendre in `log r` plus the kernel's own tail.
fn planar_mass(k: &KernelSpec, t: f64) -> f64 {
    let l = k.length_scale(t);
    let breaks = common::geometric(1e-8 * l, 1e3 * l, 400);
    let inner = common::integrate(|r| 2.0 * PI * r * k.eval_radial(r, t).unwrap(), &[0.0, 1e-8 * l], 8);
    inner + common::integrate(|r| 2.0 * PI * r * k.eval_radial(r, t).unwrap(), &breaks, 16) + k.tail_mass(1e3)
}

#[test]
fn explicit_half_closed_form() {
    let k = KernelSpec::explicit_half(2);
    let c = limit_constant(&k);
    assert!((eval_kernel(&k, &[0.0, 0.0], 1.0).unwrap() - c).abs() < 1e-15);
    for (y, t) in [([0.3, -0.4], 0.2), ([2.0, 1.0], 0.05), ([0.0, 0.0], 3.0)] {
        let r2: f64 = y[0] * y[0] + y[1] * y[1];
        let expected = c * t / (t * t + r2).powf(1.5);
        let got = eval_kernel(&k, &y, t).unwrap();
        assert!((got - expected).abs() <= 1e-14 * expected, "{got} vs {expected}");
    }
}

#[test]
fn unit_time_is_the_profile() {
    for k in all_kernels() {
        for r in [0.0, 0.3, 1.0, 7.5] {
            assert_eq!(eval_kernel(&k, &[r, 0.0], 1.0).unwrap(), k.profile_value(r));
        }
    }
}

#[test]
fn non_positive_time_is_rejected() {
    let k = KernelSpec::explicit_half(2);
    assert!(eval_kernel(&k, &[1.0, 0.0], 0.0).is_err());
    assert!(eval_kernel(&k, &[1.0, 0.0], -1.0).is_err());
}

#[test]
fn spectral_half_kernel_matches_explicit() {
    let spectral = heat(0.5);
    let explicit = KernelSpec::explicit_half(2);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let y = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let t = 10f64.powf(rng.gen_range(-3.0..1.0));
        let a = eval_kernel(spectral, &y, t).unwrap();
        let b = eval_kernel(&explicit, &y, t).unwrap();
        assert!((a - b).abs() <= 1e-4 * b, "y = {y:?}, t = {t}: {a} vs {b}");
    }
}

#[test]
fn half_order_table_matches_closed_form() {
    let table = build_fractional_heat_profile(0.5, 2, 1e3, 2048).unwrap();
    let c = 0.5 / PI;
    for r in [0.0, 1.0, 5.0] {
        let expected = c * (1.0f64 + r * r).powf(-1.5);
        assert!((table.eval(r) - expected).abs() <= 1e-4 * expected, "r = {r}");
    }
}

#[test]
fn table_mass_is_one() {
    for s in [0.25, 0.75] {
        let m = heat(s).mass();
        assert!((m - 1.0).abs() <= 1e-6, "s = {s}: mass {m}");
    }
}

#[test]
fn table_tail_approaches_limit_constant() {
    // r^{N+2s} P(r) -> C_{N,s}, the Gamma formula, independent of the table; the
    // next term of the expansion is smaller by r^{-2s}
    let k = heat(0.25);
    let c = gamma_limit_constant(0.25, 2);
    let errs: Vec<f64> = [10.0, 100.0, 1000.0]
        .iter()
        .map(|&r| (k.profile_value(r) * r.powf(2.5) / c - 1.0).abs())
        .collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2] && errs[2] < 0.05, "{errs:?}");
    let rate = errs[2] / errs[1];
    assert!((rate / 10f64.powf(-0.5) - 1.0).abs() < 0.1, "{errs:?}");
}

#[test]
fn table_invariants_and_text_round_trip() {
    let table = build_fractional_heat_profile(0.75, 2, 1e3, 512).unwrap();
    assert!(table.values().iter().all(|v| *v > 0.0));
    assert!(table.values().windows(2).all(|w| w[1] <= w[0]));
    assert!(table.splice_mismatch() < 0.01);
    assert_eq!(table.tail_exponent(), 2.0 + 1.5);
    let mut text = Vec::new();
    table.write_text(&mut text).unwrap();
    let header = String::from_utf8_lossy(&text).lines().next().unwrap().to_string();
    assert_eq!(header, "fracflow-kernel v1 s=0.75 N=2 family=fractional-heat");
    let back = RadialTable::read_text(&text[..]).unwrap();
    assert_eq!(back.values(), table.values());
    assert_eq!(back.radii(), table.radii());
    for r in [0.0, 0.37, 12.0, 5e3] {
        assert_eq!(back.eval(r), table.eval(r));
    }
    assert!(RadialTable::read_text(&b"fracflow-kernel v2 s=0.5 N=2 family=fractional-heat\n"[..]).is_err());
}

#[test]
fn table_rejects_bad_parameters() {
    assert!(build_fractional_heat_profile(1.2, 2, 1e3, 256).is_err());
    assert!(build_fractional_heat_profile(0.5, 1, 1e3, 256).is_err());
    assert!(build_fractional_heat_profile(0.5, 2, 1e3, 16).is_err());
}

#[test]
fn limit_constant_examples() {
    let c = gamma_limit_constant(0.5, 2);
    assert!((c - 1.0 / (2.0 * PI)).abs() < 1e-12);
    // Gamma(3/2) / pi^{3/2}
    assert!((explicit_half_constant(2) - 0.5 * PI.sqrt() / PI.powf(1.5)).abs() < 1e-15);
    assert!((limit_constant(heat(0.5)) - c).abs() < 1e-15);
    // p_{2,0.75} from the polar integral int_0^inf 2 pi r (1+r^2)^{-7/4} dr = pi / 0.75
    let p = KernelSpec::harmonic_extension(0.75, 2);
    let oracle = 1.0 / (2.0 * PI * common::algebraic_moment(1.0, 1.75));
    assert!((limit_constant(&p) - oracle).abs() <= 1e-10 * oracle);
    assert!((limit_constant(&p) - 0.75 / PI).abs() <= 1e-10);
    assert!((p.mass() - 1.0).abs() < 1e-10);
}

#[test]
fn far_field_limit_at_small_time() {
    for k in [heat(0.25).clone(), heat(0.75).clone(), KernelSpec::explicit_half(2), KernelSpec::harmonic_extension(0.75, 2)] {
        let e = 2.0 + 2.0 * k.s();
        let t = 1e-4;
        for i in 0..=32 {
            let r = 0.5 + 1.5 * i as f64 / 32.0;
            let ratio = k.eval_radial(r, t).unwrap() * r.powf(e) / (t * limit_constant(&k));
            assert!((ratio - 1.0).abs() <= 0.01, "{} s={} r={r}: {ratio}", k.family(), k.s());
        }
    }
}

#[test]
fn explicit_half_bounds() {
    let k = KernelSpec::explicit_half(2);
    let rep = verify_kernel_bounds(&k, &[0.0, 0.1, 1.0, 10.0, 100.0]);
    assert!(rep.pass && rep.constant <= 10.0, "{rep:?}");
}

#[test]
fn harmonic_bounds_match_closed_form() {
    // P (1 + r^a) = p (1 + r^a) / (1 + r^2)^{a/2}: equal to p at 0 and infinity, smallest at r = 1
    for s in [0.25, 0.75] {
        let k = KernelSpec::harmonic_extension(s, 2);
        let a = 2.0 + 2.0 * s;
        let p = limit_constant(&k);
        let rep = verify_kernel_bounds(&k, &[0.0, 0.5, 1.0, 2.0, 1e6]);
        assert!((rep.c_upper - p).abs() < 1e-12 * p);
        assert!((rep.c_lower - p * 2f64.powf(1.0 - 0.5 * a)).abs() < 1e-12 * p);
    }
}

#[test]
fn profiles_are_finite_at_origin_and_gradients_bounded() {
    let radii: Vec<f64> = (0..200).map(|i| 1e-3 * 1.07f64.powi(i)).collect();
    for k in all_kernels() {
        let p0 = k.profile_value(0.0);
        assert!(p0 > 0.0 && p0.is_finite());
        let g = gradient_bound(&k, &radii);
        assert!(g.is_finite() && g > 0.0);
    }
}

#[test]
fn mass_is_time_independent() {
    for k in [heat(0.75).clone(), KernelSpec::explicit_half(2), KernelSpec::harmonic_extension(0.25, 2)] {
        for t in [1e-2, 1.0, 1e2] {
            let m = planar_mass(&k, t);
            assert!((m - 1.0).abs() <= 1e-5, "{} s={} t={t}: {m}", k.family(), k.s());
        }
    }
}

#[test]
fn family_tags_round_trip() {
    for f in KernelFamily::ALL {
        assert_eq!(KernelFamily::from_tag(f.tag()), Some(f));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn radial_symmetry(x in -3.0f64..3.0, y in -3.0f64..3.0, angle in 0.0f64..6.3, log_t in -4.0f64..1.0, which in 0usize..5) {
        let k = &all_kernels()[which];
        let t = 10f64.powf(log_t);
        let (c, s) = (angle.cos(), angle.sin());
        let a = eval_kernel(k, &[x, y], t).unwrap();
        let b = eval_kernel(k, &[c * x - s * y, s * x + c * y], t).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn self_similarity(x in -3.0f64..3.0, y in -3.0f64..3.0, log_t in -3.0f64..0.0, grow in any::<bool>(), which in 0usize..5) {
        let k = &all_kernels()[which];
        let t = 10f64.powf(log_t);
        let lambda: f64 = if grow { 2.0 } else { 0.5 };
        let f = lambda.powf(0.5 / k.s());
        let lhs = eval_kernel(k, &[f * x, f * y], lambda * t).unwrap();
        let rhs = lambda.powf(-1.0 / k.s()) * eval_kernel(k, &[x, y], t).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs, "{lhs} vs {rhs}");
    }
}
