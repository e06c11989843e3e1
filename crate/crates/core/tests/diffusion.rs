mod common;

use std::f64::consts::PI;

use fracflow::diffusion::{
    diffuse_at, flat_interface_slope, normal_derivative_check, u_direct, u_grid, ConvolutionRequest,
    FreeSpaceConvolver, GridField, GridOptions,
};
use fracflow::geometry::SetShape;
use fracflow::kernels::KernelSpec;
use proptest::prelude::*;

fn kernels() -> Vec<KernelSpec> {
    vec![
        KernelSpec::fractional_heat(0.25, 2).unwrap(),
        KernelSpec::fractional_heat(0.75, 2).unwrap(),
        KernelSpec::explicit_half(2),
        KernelSpec::harmonic_extension(0.25, 2),
        KernelSpec::harmonic_extension(0.75, 2),
    ]
}

#[test]
fn ball_centre_matches_closed_form() {
    // the mass of p (1 + q^2)^{-1-s} outside q = Q is (1 + Q^2)^{-s} in the plane
    for s in [0.25, 0.75] {
        let k = KernelSpec::harmonic_extension(s, 2);
        let b = SetShape::ball(2, 1.0);
        for sigma in [1e-3, 0.05, 1.0] {
            let q = 1.0 / k.length_scale(sigma);
            let expected = 1.0 - 2.0 * (1.0 + q * q).powf(-s);
            let req = ConvolutionRequest { kernel: &k, shape: &b, sigma, x: vec![0.0, 0.0], tol: 1e-10 };
            let got = u_direct(&req).unwrap();
            assert!((got - expected).abs() < 1e-9, "s={s} sigma={sigma}: {got} vs {expected}");
        }
    }
}

#[test]
fn half_space_boundary_is_zero_and_field_is_odd() {
    let h = SetShape::half_space(2);
    let ks = kernels();
    for k in &ks {
        let sigma = 0.01;
        let l = k.length_scale(sigma);
        assert_eq!(diffuse_at(k, &h, sigma, &[1.7, 0.0], 1e-10).unwrap(), 0.0);
        for depth in [0.2, 1.0, 3.0] {
            let up = diffuse_at(k, &h, sigma, &[0.4, depth * l], 1e-10).unwrap();
            let down = diffuse_at(k, &h, sigma, &[0.4, -depth * l], 1e-10).unwrap();
            assert!(up > 0.0 && (up + down).abs() < 1e-9, "{} s={}", k.family(), k.s());
        }
    }
}

#[test]
fn half_space_profile_matches_poisson_closed_form() {
    let k = KernelSpec::explicit_half(2);
    let h = SetShape::half_space(2);
    let sigma = 0.2;
    for d in [0.05f64, 0.2, 1.0] {
        // closed form for the Poisson kernel: u = (2/pi) atan(d / sigma)
        let expected = 2.0 / PI * (d / sigma).atan();
        let got = diffuse_at(&k, &h, sigma, &[0.0, d], 1e-11).unwrap();
        assert!((got - expected).abs() < 1e-9, "d={d}: {got} vs {expected}");
    }
}

#[test]
fn constant_field_is_unchanged_on_grid() {
    for k in kernels() {
        for value in [1.0, -1.0] {
            let g = GridField::constant(2, 64, 8.0, value).unwrap();
            let u = u_grid(&g, &k, 0.02, GridOptions::default()).unwrap();
            assert!(u.values.iter().all(|v| (v - value).abs() < 1e-10));
        }
    }
}

#[test]
fn flat_slope_matches_closed_forms() {
    // Poisson kernel: du/dnu = 2 / (pi sigma)
    let k = KernelSpec::explicit_half(2);
    for sigma in [1e-3, 0.1] {
        let got = flat_interface_slope(&k, sigma);
        let expected = 2.0 / (PI * sigma);
        assert!((got / expected - 1.0).abs() < 1e-8);
    }
    // algebraic profile: 2 * 2 p int_0^inf (1 + q^2)^{-1-s} dq / l
    for s in [0.25, 0.75] {
        let k = KernelSpec::harmonic_extension(s, 2);
        let sigma = 0.01;
        let p = k.limit_constant();
        let expected = 4.0 * p * common::algebraic_moment(0.0, 1.0 + s) / k.length_scale(sigma);
        let got = flat_interface_slope(&k, sigma);
        assert!((got / expected - 1.0).abs() < 1e-8, "s={s}: {got} vs {expected}");
    }
    // finite differences of the direct path agree with the flat slope
    let h = SetShape::half_space(2);
    let p = h.anchor_point("o").unwrap();
    for k in kernels() {
        let rep = normal_derivative_check(&h, &k, 0.01, &p).unwrap();
        let centre = rep.probes[0].2;
        let flat = flat_interface_slope(&k, 0.01);
        assert!((centre / flat - 1.0).abs() < 1e-4, "{} s={}: {centre} vs {flat}", k.family(), k.s());
    }
}

#[test]
fn ellipse_field_has_the_right_sign() {
    let e = SetShape::ellipse(1.0, 0.5);
    let k = KernelSpec::fractional_heat(0.75, 2).unwrap();
    let sigma = 1e-3;
    let l = k.length_scale(sigma);
    for i in 0..8 {
        let p = e.point_at_angle("p", i as f64 * PI / 4.0 + 0.1).unwrap();
        let inside = diffuse_at(&k, &e, sigma, &p.along_normal(0.5 * l), 1e-9).unwrap();
        let outside = diffuse_at(&k, &e, sigma, &p.along_normal(-0.5 * l), 1e-9).unwrap();
        assert!(inside > 0.0 && outside < 0.0, "point {i}: {inside} {outside}");
    }
}

#[test]
fn field_saturates_far_from_interface() {
    let b = SetShape::ball(2, 1.0);
    for k in kernels() {
        let sigma = 1e-4;
        let l = k.length_scale(sigma);
        let inside = diffuse_at(&k, &b, sigma, &[0.0, 0.0], 1e-10).unwrap();
        let outside = diffuse_at(&k, &b, sigma, &[3.0, 0.0], 1e-10).unwrap();
        // the exterior mass seen from the centre is of order l^{2s}
        let slack = 10.0 * l.powf(2.0 * k.s());
        assert!(1.0 - inside < slack && outside + 1.0 < slack, "{} s={}: {inside} {outside}", k.family(), k.s());
        assert!(inside < 1.0 && outside > -1.0);
    }
}

#[test]
fn free_space_grid_matches_direct_quadrature() {
    let b = SetShape::ball(2, 1.0);
    let k = KernelSpec::harmonic_extension(0.25, 2);
    let sigma = 0.1f64.powf(0.5);
    let (n, extent) = (256, 4.0);
    let g = GridField::from_shape(&b, n, extent).unwrap();
    let conv = FreeSpaceConvolver::new(&k, sigma, 2, n, extent).unwrap();
    let u = conv.apply(&g).unwrap();
    assert_eq!(u.meta.wrap_bound, Some(0.0));
    let h = g.spacing();
    for x in [[0.0, 0.0], [0.5, 0.0], [1.5, 0.0], [0.0, -1.9]] {
        let cell = g.index(&[((x[0] + 0.5 * extent) / h) as usize, ((x[1] + 0.5 * extent) / h) as usize]);
        let centre = g.point(cell);
        let exact = diffuse_at(&k, &b, sigma, &centre, 1e-10).unwrap();
        assert!((u.values[cell] - exact).abs() < 2e-3, "{centre:?}: {} vs {exact}", u.values[cell]);
    }
}

#[test]
fn free_space_refuses_fields_touching_the_edge() {
    let k = KernelSpec::explicit_half(2);
    let conv = FreeSpaceConvolver::new(&k, 0.01, 2, 32, 4.0).unwrap();
    let mut g = GridField::constant(2, 32, 4.0, -1.0).unwrap();
    g.values[0] = 1.0;
    assert!(conv.apply(&g).is_err());
}

#[test]
fn ball_profile_tends_to_flat_profile() {
    // near a unit circle u(p + xi l nu) approaches the half-space value at depth xi l as sigma -> 0
    let b = SetShape::ball(2, 1.0);
    let h = SetShape::half_space(2);
    let k = KernelSpec::fractional_heat(0.75, 2).unwrap();
    let p = b.point_at_angle("p", 0.3).unwrap();
    let mut gaps = Vec::new();
    for sigma in [1e-2, 1e-3, 1e-4] {
        let l = k.length_scale(sigma);
        let gap = [-1.0, 0.5, 1.0]
            .iter()
            .map(|&xi| {
                let curved = diffuse_at(&k, &b, sigma, &p.along_normal(xi * l), 1e-11).unwrap();
                let flat = diffuse_at(&k, &h, sigma, &[0.0, xi * l], 1e-11).unwrap();
                (curved - flat).abs()
            })
            .fold(0.0, f64::max);
        gaps.push(gap);
    }
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2] && gaps[2] < 1e-2, "{gaps:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn field_is_bounded(x in -2.0f64..2.0, y in -2.0f64..2.0, log_sigma in -4.0f64..0.0, which in 0usize..5) {
        let k = &kernels()[which];
        let e = SetShape::ellipse(1.0, 0.6);
        let u = diffuse_at(k, &e, 10f64.powf(log_sigma), &[x, y], 1e-8).unwrap();
        prop_assert!((-1.0..=1.0).contains(&u));
    }

    #[test]
    fn translation_invariance(vx in -3.0f64..3.0, vy in -3.0f64..3.0, px in -1.5f64..1.5, py in -1.5f64..1.5) {
        let k = KernelSpec::harmonic_extension(0.75, 2);
        let b = SetShape::ball(2, 1.0);
        let moved = b.translated(&[vx, vy]).unwrap();
        let sigma = 0.01;
        let a = diffuse_at(&k, &b, sigma, &[px, py], 1e-11).unwrap();
        let c = diffuse_at(&k, &moved, sigma, &[px + vx, py + vy], 1e-11).unwrap();
        prop_assert!((a - c).abs() < 1e-8);
    }
}
