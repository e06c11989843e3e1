mod common;

use std::f64::consts::PI;

use fracflow::geometry::SetShape;
use fracflow::kernels::KernelSpec;
use fracflow::scaling::ScalingLaw;
use fracflow::velocity::{expansion_constants, measure_velocity, predicted_velocity, MeasureOptions};

#[test]
fn harmonic_second_moment_constant() {
    // c = I2 / (2 I0) with I2 / I0 = m2 / m0 for the profile (1 + q^2)^{-1-s} on a line
    let k = KernelSpec::harmonic_extension(0.75, 2);
    let consts = expansion_constants(&k, 1e-12).unwrap();
    let ratio = common::algebraic_moment(2.0, 1.75) / common::algebraic_moment(0.0, 1.75);
    let c = consts.c().unwrap();
    assert!((c - 0.5 * ratio).abs() < 1e-8, "{c} vs {}", 0.5 * ratio);
    assert!((c - 1.0).abs() < 1e-8);
}

#[test]
fn ellipse_velocities_follow_curvature_ratio() {
    // curvature a/b^2 at the end of the major axis, b/a^2 at the end of the minor one
    let (a, b) = (1.0, 0.5);
    let e = SetShape::ellipse(a, b);
    let k = KernelSpec::fractional_heat(0.75, 2).unwrap();
    let law = ScalingLaw::new(0.75).unwrap();
    let opts = MeasureOptions::default();
    let expected = (a / (b * b)) / (b / (a * a));
    // the correction decays like t^{s - 1/2}, so the ratio is approached slowly
    let ratio = |t: f64| {
        let major = measure_velocity(&e, &k, &law, &e.point_at_angle("major", 0.0).unwrap(), t, &opts).unwrap();
        let minor = measure_velocity(&e, &k, &law, &e.point_at_angle("minor", 0.5 * PI).unwrap(), t, &opts).unwrap();
        major.v_measured / minor.v_measured
    };
    let (coarse, fine) = (ratio(1e-4), ratio(1e-6));
    assert!((fine - expected).abs() < (coarse - expected).abs());
    assert!((fine / expected - 1.0).abs() < 0.1, "{fine} vs {expected}");
}

#[test]
fn balls_shrink_and_stay_in_the_window() {
    let b = SetShape::ball(2, 1.0);
    let p = b.point_at_angle("p", 0.7).unwrap();
    for k in [
        KernelSpec::harmonic_extension(0.25, 2),
        KernelSpec::fractional_heat(0.75, 2).unwrap(),
        KernelSpec::explicit_half(2),
    ] {
        let law = ScalingLaw::new(k.s()).unwrap();
        let t = if k.s() == 0.5 { (-6.0f64).exp() } else { 1e-3 };
        let r = measure_velocity(&b, &k, &law, &p, t, &MeasureOptions::default()).unwrap();
        let window = k.length_scale(r.sigma);
        assert!(r.delta > 0.0 && r.v_measured > 0.0 && r.v_predicted > 0.0, "{} s={}", k.family(), k.s());
        assert!(r.delta.abs() < window);
    }
}

#[test]
fn prediction_is_linear_in_curvature() {
    let k = KernelSpec::harmonic_extension(0.75, 2);
    let consts = expansion_constants(&k, 1e-12).unwrap();
    let one = predicted_velocity(&k, &consts, 1.0, 1e-3).unwrap();
    let three = predicted_velocity(&k, &consts, 3.0, 1e-3).unwrap();
    assert!((three - 3.0 * one).abs() < 1e-14);
    assert_eq!(predicted_velocity(&k, &consts, 0.0, 1e-3).unwrap(), 0.0);
}

#[test]
fn measurement_is_translation_invariant() {
    let k = KernelSpec::harmonic_extension(0.75, 2);
    let law = ScalingLaw::new(0.75).unwrap();
    let opts = MeasureOptions::default();
    let b = SetShape::ball(2, 1.0);
    let moved = b.translated(&[2.5, -1.25]).unwrap();
    let r0 = measure_velocity(&b, &k, &law, &b.point_at_angle("p", 1.1).unwrap(), 1e-3, &opts).unwrap();
    let r1 = measure_velocity(&moved, &k, &law, &moved.point_at_angle("p", 1.1).unwrap(), 1e-3, &opts).unwrap();
    let slack = 2.0 * r0.delta_tol / r0.t;
    assert!((r0.v_measured - r1.v_measured).abs() <= slack, "{} vs {}", r0.v_measured, r1.v_measured);
    assert!((r0.v_predicted - r1.v_predicted).abs() < 1e-12);
}

#[test]
fn measurement_is_rotation_invariant_on_a_ball() {
    let k = KernelSpec::fractional_heat(0.75, 2).unwrap();
    let law = ScalingLaw::new(0.75).unwrap();
    let opts = MeasureOptions::default();
    let b = SetShape::ball(2, 1.0);
    let rs: Vec<_> = (0..8)
        .map(|i| measure_velocity(&b, &k, &law, &b.point_at_angle("p", 0.3 + i as f64 * PI / 4.0).unwrap(), 1e-3, &opts).unwrap())
        .collect();
    let slack = 2.0 * rs[0].delta_tol / rs[0].t;
    for r in &rs {
        assert!((r.v_measured - rs[0].v_measured).abs() <= slack);
    }
}
