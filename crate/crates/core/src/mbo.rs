//! Threshold dynamics on a grid: `E_{n+1} = {K(., sigma(h)) * tau_{E_n} > 0}`.

use std::io::Write;

use serde::Serialize;

use crate::diffusion::{u_grid, FreeSpaceConvolver, GridField, GridOptions};
use crate::error::{Error, Result};
use crate::geometry::SetShape;
use crate::kernels::{KernelFamily, KernelSpec};
use crate::scaling::{Branch, ScalingLaw};

/// How the box edge is treated by the convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Periodic FFT convolution, refused when the wrap-around bound is too large.
    #[default]
    Periodic,
    /// The field continues with its edge value outside the box.
    FreeSpace,
}

/// Grid and output settings of a flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    pub n: usize,
    pub extent: f64,
    pub boundary: Boundary,
    /// Keep a copy of the field every this many steps.
    pub snapshot_every: Option<usize>,
    pub wrap_limit: f64,
    /// Smallest accepted kernel length scale in cells.
    pub min_cells: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { n: 1024, extent: 4.0, boundary: Boundary::Periodic, snapshot_every: None, wrap_limit: 1e-3, min_cells: 3.0 }
    }
}

/// Observables after one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepSummary {
    pub step: usize,
    pub time: f64,
    pub area: f64,
    /// Radius of the ball with the same measure.
    pub radius: f64,
    pub interface: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrace {
    pub h: f64,
    pub s: f64,
    pub family: KernelFamily,
    pub n: usize,
    pub extent: f64,
    pub sigma: f64,
    pub steps: Vec<StepSummary>,
    pub snapshots: Vec<(usize, GridField)>,
    pub vanished: bool,
}

impl FlowTrace {
    /// `n,time,area,radius_equiv`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n,time,area,radius_equiv")?;
        for s in &self.steps {
            writeln!(out, "{},{:.12e},{:.12e},{:.12e}", s.step, s.time, s.area, s.radius)?;
        }
        Ok(())
    }
}

/// Time step whose kernel length scale equals `length` (inverse of the scaling law).
pub fn step_for_length(law: &ScalingLaw, length: f64) -> f64 {
    let sigma = length.powf(2.0 * law.s);
    match law.branch {
        Branch::SubHalf => sigma.powf((1.0 + 2.0 * law.s) / (2.0 * law.s)),
        Branch::SuperHalf => sigma.powf(1.0 / law.s),
        Branch::Half => sigma * sigma * sigma.ln().abs(),
    }
}

fn equivalent_radius(dim: usize, measure: f64) -> f64 {
    match dim {
        2 => (measure / std::f64::consts::PI).sqrt(),
        _ => (3.0 * measure / (4.0 * std::f64::consts::PI)).cbrt(),
    }
}

fn summary(field: &GridField, step: usize, time: f64) -> StepSummary {
    let area = field.positive_measure();
    StepSummary { step, time, area, radius: equivalent_radius(field.dim(), area), interface: field.interface_measure() }
}

/// One convolution and threshold; ties map outside.
pub fn mbo_step(field: &GridField, kernel: &KernelSpec, law: &ScalingLaw, h: f64, opts: &FlowOptions) -> Result<GridField> {
    let conv = convolver(field, kernel, law, h, opts)?;
    step_with(field, kernel, law, h, opts, conv.as_ref())
}

fn check_resolution(field: &GridField, kernel: &KernelSpec, law: &ScalingLaw, h: f64, opts: &FlowOptions) -> Result<f64> {
    let sigma = law.sigma(h)?;
    let l = kernel.length_scale(sigma);
    let cell = field.spacing();
    if l < opts.min_cells * cell {
        let need = step_for_length(law, opts.min_cells * cell);
        return Err(Error::Config(format!(
            "kernel length {l:.3e} is below {} cells of {cell:.3e}; use h >= {need:.3e}",
            opts.min_cells
        )));
    }
    Ok(sigma)
}

fn convolver(
    field: &GridField,
    kernel: &KernelSpec,
    law: &ScalingLaw,
    h: f64,
    opts: &FlowOptions,
) -> Result<Option<FreeSpaceConvolver>> {
    let sigma = check_resolution(field, kernel, law, h, opts)?;
    match opts.boundary {
        Boundary::Periodic => Ok(None),
        Boundary::FreeSpace => {
            Ok(Some(FreeSpaceConvolver::new(kernel, sigma, field.dim(), field.n(), field.extent())?))
        }
    }
}

fn step_with(
    field: &GridField,
    kernel: &KernelSpec,
    law: &ScalingLaw,
    h: f64,
    opts: &FlowOptions,
    conv: Option<&FreeSpaceConvolver>,
) -> Result<GridField> {
    let sigma = check_resolution(field, kernel, law, h, opts)?;
    let u = match conv {
        Some(c) => c.apply(field)?,
        None => u_grid(field, kernel, sigma, GridOptions { wrap_limit: opts.wrap_limit })?,
    };
    let mut next = field.clone();
    next.values = u.values.iter().map(|v| if *v > 0.0 { 1.0 } else { -1.0 }).collect();
    next.meta = u.meta;
    Ok(next)
}

/// Iterates the scheme from the grid sampling of `initial`.
pub fn run_flow(
    initial: &SetShape,
    kernel: &KernelSpec,
    law: &ScalingLaw,
    h: f64,
    n_steps: usize,
    opts: &FlowOptions,
) -> Result<FlowTrace> {
    let field = GridField::from_shape(initial, opts.n, opts.extent)?;
    run_flow_from(field, kernel, law, h, n_steps, opts)
}

pub fn run_flow_from(
    mut field: GridField,
    kernel: &KernelSpec,
    law: &ScalingLaw,
    h: f64,
    n_steps: usize,
    opts: &FlowOptions,
) -> Result<FlowTrace> {
    if law.s != kernel.s() {
        return Err(Error::Config("scaling law and kernel have different orders".into()));
    }
    let sigma = law.sigma(h)?;
    let conv = convolver(&field, kernel, law, h, opts)?;
    let mut trace = FlowTrace {
        h,
        s: kernel.s(),
        family: kernel.family(),
        n: field.n(),
        extent: field.extent(),
        sigma,
        steps: vec![summary(&field, 0, 0.0)],
        snapshots: Vec::new(),
        vanished: false,
    };
    let keep = |k: usize| opts.snapshot_every.is_some_and(|e| e > 0 && k % e == 0);
    if keep(0) {
        trace.snapshots.push((0, field.clone()));
    }
    for k in 1..=n_steps {
        field = step_with(&field, kernel, law, h, opts, conv.as_ref())?;
        let s = summary(&field, k, k as f64 * h);
        trace.steps.push(s);
        if keep(k) {
            trace.snapshots.push((k, field.clone()));
        }
        if s.area == 0.0 {
            trace.vanished = true;
            break;
        }
    }
    Ok(trace)
}

/// Classical law for a shrinking circle, `R^2 = R0^2 - 2 c t`.
pub fn classical_radius_squared(r0: f64, c: f64, t: f64) -> f64 {
    r0 * r0 - 2.0 * c * t
}

/// Classical fourth-order Runge–Kutta for a scalar autonomous ODE.
pub fn rk4<F: Fn(f64) -> f64>(f: F, y0: f64, t_end: f64, steps: usize) -> f64 {
    let dt = t_end / steps as f64;
    let mut y = y0;
    for _ in 0..steps {
        let k1 = f(y);
        let k2 = f(y + 0.5 * dt * k1);
        let k3 = f(y + 0.5 * dt * k2);
        let k4 = f(y + dt * k3);
        y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    y
}

/// Radius under `R' = -speed R^{-2s}`, the velocity law of a ball whose
/// fractional curvature scales like `R^{-2s}` (`speed` is the velocity at `R = 1`).
pub fn fractional_radius(r0: f64, speed: f64, s: f64, t: f64) -> f64 {
    let steps = ((t / 1e-4).ceil() as usize).max(16);
    rk4(|r: f64| -speed * r.max(1e-12).powf(-2.0 * s), r0, t, steps)
}

/// Reference law for the equivalent radius of a shrinking ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RadiusLaw {
    /// `R^2 = R0^2 - 2 c t`, compared through `|R^2 - R_law^2| / R0^2`.
    Classical { c: f64 },
    /// `R' = -speed R^{-2s}`, compared through `|R - R_law| / R_law`.
    Fractional { speed: f64, s: f64 },
}

impl RadiusLaw {
    pub fn deviation(&self, r0: f64, t: f64, r: f64) -> f64 {
        match *self {
            RadiusLaw::Classical { c } => (r * r - classical_radius_squared(r0, c, t)).abs() / (r0 * r0),
            RadiusLaw::Fractional { speed, s } => {
                let reference = fractional_radius(r0, speed, s, t);
                (r - reference).abs() / reference
            }
        }
    }
}

/// Largest deviation from `law` over the leading steps with radius at least `r_min`;
/// `None` unless at least two steps besides the initial one are compared.
pub fn worst_deviation(trace: &FlowTrace, law: &RadiusLaw, r_min: f64) -> Option<f64> {
    let r0 = trace.steps.first()?.radius;
    let compared: Vec<f64> = trace
        .steps
        .iter()
        .take_while(|st| st.radius >= r_min)
        .map(|st| law.deviation(r0, st.time, st.radius))
        .collect();
    (compared.len() >= 3).then(|| compared.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whole_box_is_fixed() {
        let k = KernelSpec::fractional_heat(0.75, 2).unwrap();
        let law = ScalingLaw::new(0.75).unwrap();
        let g = GridField::constant(2, 64, 4.0, 1.0).unwrap();
        let opts = FlowOptions { n: 64, ..FlowOptions::default() };
        let h = step_for_length(&law, 8.0 * g.spacing());
        let next = mbo_step(&g, &k, &law, h, &opts).unwrap();
        assert_eq!(next.values, g.values);
    }

    #[test]
    fn half_space_is_fixed_up_to_a_cell() {
        let k = KernelSpec::fractional_heat(0.75, 2).unwrap();
        let law = ScalingLaw::new(0.75).unwrap();
        let h_shape = SetShape::half_space(2);
        let opts = FlowOptions { n: 64, extent: 4.0, wrap_limit: 1.0, ..FlowOptions::default() };
        let g = GridField::from_shape(&h_shape, 64, 4.0).unwrap();
        let h = step_for_length(&law, 4.0 * g.spacing());
        let next = mbo_step(&g, &k, &law, h, &opts).unwrap();
        // away from the periodic seam the interface stays put
        let changed = (0..g.values.len())
            .filter(|&i| g.point(i)[1].abs() < 1.0 && g.values[i] != next.values[i])
            .count();
        assert_eq!(changed, 0);
    }

    #[test]
    fn under_resolved_step_is_refused() {
        let k = KernelSpec::fractional_heat(0.75, 2).unwrap();
        let law = ScalingLaw::new(0.75).unwrap();
        let g = GridField::constant(2, 64, 4.0, 1.0).unwrap();
        let err = mbo_step(&g, &k, &law, 1e-8, &FlowOptions::default()).unwrap_err();
        assert!(err.to_string().contains("use h >="));
    }

    #[test]
    fn zero_steps_keep_initial_summary() {
        let k = KernelSpec::fractional_heat(0.75, 2).unwrap();
        let law = ScalingLaw::new(0.75).unwrap();
        let opts = FlowOptions { n: 64, ..FlowOptions::default() };
        let h = step_for_length(&law, 4.0 * opts.extent / 64.0);
        let t = run_flow(&SetShape::ball(2, 1.0), &k, &law, h, 0, &opts).unwrap();
        assert_eq!(t.steps.len(), 1);
        assert!((t.steps[0].radius - 1.0).abs() < 0.05);
    }

    #[test]
    fn step_length_inverse() {
        for s in [0.25, 0.5, 0.75] {
            let law = ScalingLaw::new(s).unwrap();
            let h = step_for_length(&law, 0.03);
            let l = law.window(h).unwrap();
            assert!((l - 0.03).abs() < 1e-12, "s={s}: {l}");
        }
    }

    #[test]
    fn rk4_matches_closed_form() {
        // R' = -c/R has R^2 = R0^2 - 2ct
        let r = rk4(|r| -1.5 / r, 1.0, 0.2, 400);
        assert!((r * r - classical_radius_squared(1.0, 1.5, 0.2)).abs() < 1e-10);
        // s = 1/2 in the fractional law is the same ODE
        let f = fractional_radius(1.0, 1.5, 0.5, 0.2);
        assert!((f - r).abs() < 1e-10);
    }
}
