use fracflow::diffusion::GridField;
use fracflow::geometry::SetShape;
use fracflow::kernels::KernelSpec;
use fracflow::mbo::{mbo_step, run_flow, run_flow_from, step_for_length, Boundary, FlowOptions};
use fracflow::scaling::ScalingLaw;

fn options(n: usize) -> FlowOptions {
    FlowOptions { n, extent: 4.0, boundary: Boundary::FreeSpace, ..FlowOptions::default() }
}

fn mirrored(g: &GridField, f: impl Fn(usize, usize) -> (usize, usize)) -> Vec<f64> {
    let n = g.n();
    let mut out = vec![0.0; g.values.len()];
    for i in 0..n {
        for j in 0..n {
            let (a, b) = f(i, j);
            out[g.index(&[a, b])] = g.values[g.index(&[i, j])];
        }
    }
    out
}

#[test]
fn ball_keeps_its_symmetry() {
    let k = KernelSpec::harmonic_extension(0.75, 2);
    let law = ScalingLaw::new(0.75).unwrap();
    let opts = FlowOptions { snapshot_every: Some(1), ..options(128) };
    let h = step_for_length(&law, 4.0 * 4.0 / 128.0);
    let trace = run_flow(&SetShape::ball(2, 0.6), &k, &law, h, 6, &opts).unwrap();
    let n = 128;
    for (step, g) in &trace.snapshots {
        assert_eq!(mirrored(g, |i, j| (n - 1 - i, j)), g.values, "x reflection at step {step}");
        assert_eq!(mirrored(g, |i, j| (i, n - 1 - j)), g.values, "y reflection at step {step}");
        assert_eq!(mirrored(g, |i, j| (j, i)), g.values, "diagonal reflection at step {step}");
    }
}

#[test]
fn step_commutes_with_whole_cell_shifts() {
    let k = KernelSpec::harmonic_extension(0.75, 2);
    let law = ScalingLaw::new(0.75).unwrap();
    let opts = options(128);
    let h = step_for_length(&law, 4.0 * 4.0 / 128.0);
    let g = GridField::from_shape(&SetShape::ellipse(0.6, 0.4), 128, 4.0).unwrap();
    let shift = [5, -3];
    let a = mbo_step(&g.shifted(&shift), &k, &law, h, &opts).unwrap();
    let b = mbo_step(&g, &k, &law, h, &opts).unwrap().shifted(&shift);
    assert_eq!(a.values, b.values);
}

#[test]
fn ball_shrinks_monotonically() {
    // same cell size; the periodic box is larger to keep the wrap-around small
    for (k, boundary, n, extent) in [
        (KernelSpec::fractional_heat(0.75, 2).unwrap(), Boundary::Periodic, 256, 8.0),
        (KernelSpec::harmonic_extension(0.25, 2), Boundary::FreeSpace, 128, 4.0),
    ] {
        let law = ScalingLaw::new(k.s()).unwrap();
        let opts = FlowOptions { n, extent, boundary, ..FlowOptions::default() };
        let h = step_for_length(&law, 4.0 * 4.0 / 128.0);
        let trace = run_flow(&SetShape::ball(2, 0.6), &k, &law, h, 10, &opts).unwrap();
        let areas: Vec<f64> = trace.steps.iter().map(|s| s.area).collect();
        assert!(areas.windows(2).all(|w| w[1] <= w[0]), "s={}: {areas:?}", k.s());
        assert!(areas[areas.len() - 1] < areas[0]);
    }
}

#[test]
fn halving_the_step_changes_little() {
    let k = KernelSpec::harmonic_extension(0.75, 2);
    let law = ScalingLaw::new(0.75).unwrap();
    let opts = options(256);
    let cell = 4.0 / 256.0;
    let h = step_for_length(&law, 8.0 * cell);
    let g = GridField::from_shape(&SetShape::ball(2, 0.8), 256, 4.0).unwrap();
    let coarse = run_flow_from(g.clone(), &k, &law, h, 8, &opts).unwrap();
    let fine = run_flow_from(g, &k, &law, 0.5 * h, 16, &opts).unwrap();
    let (rc, rf) = (coarse.steps[8].radius, fine.steps[16].radius);
    let travelled = coarse.steps[0].radius - rc;
    assert!(travelled > 4.0 * cell, "{travelled}");
    assert!((rc - rf).abs() < 0.2 * travelled, "{rc} vs {rf}");
}
