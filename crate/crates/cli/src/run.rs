//! One runner per experiment kind; each writes its artifacts and returns criteria.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use fracflow::diffusion::{
    diffuse_at, flat_interface_slope, u_grid, FreeSpaceConvolver, GridField, GridOptions,
};
use fracflow::error::{Error, Result};
use fracflow::geometry::{BoundaryPoint, SetShape, ShapeDescriptor};
use fracflow::kernels::{explicit_half_constant, gamma_limit_constant, verify_kernel_bounds, KernelFamily};
use fracflow::mbo::{run_flow, step_for_length, worst_deviation, Boundary, FlowOptions, RadiusLaw};
use fracflow::scaling::{sigma_inverse_check, Branch, ScalingLaw};
use fracflow::velocity::{
    default_ladder, expansion_constants, half_coefficient_limit, velocity_table, MeasureOptions, VelocityJob,
    FRACTIONAL_ORIENTATION,
};
use serde::Serialize;

use crate::config::{families_for, BoundaryMode, ExperimentConfig, GridConfig, PointSpec};
use crate::kernels::KernelStore;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criterion {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Criterion {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), pass, detail: detail.into() }
    }
}

#[derive(Debug, Default)]
pub struct RunReport {
    pub criteria: Vec<Criterion>,
    pub outputs: Vec<String>,
    /// Records that could not be computed; the batch continued without them.
    pub failures: usize,
}

impl RunReport {
    fn write(&mut self, out: &Path, name: &str, body: &[u8]) -> Result<()> {
        fs::write(out.join(name), body)?;
        self.outputs.push(name.into());
        Ok(())
    }
}

/// Probe points for `shape`: explicit specs, or one default point.
pub fn boundary_points(shape: &SetShape, specs: &[PointSpec]) -> Result<Vec<BoundaryPoint>> {
    let descriptor = shape.descriptor();
    let defaults;
    let specs = if specs.is_empty() {
        defaults = vec![match descriptor {
            ShapeDescriptor::HalfSpace { .. } | ShapeDescriptor::Graph { .. } => PointSpec::Anchor,
            ShapeDescriptor::Ball { dim, .. } if *dim != 2 => {
                let mut dir = vec![0.0; *dim];
                dir[0] = 1.0;
                PointSpec::Direction { dir }
            }
            _ => PointSpec::Angle { theta: 0.0 },
        }];
        &defaults
    } else {
        specs
    };
    specs
        .iter()
        .map(|p| match p {
            PointSpec::Anchor => shape.anchor_point("anchor"),
            PointSpec::Angle { theta } => shape.point_at_angle(&format!("theta={theta}"), *theta),
            PointSpec::Direction { dir } => shape.ball_point(&format!("dir={dir:?}"), dir),
        })
        .collect()
}

fn shapes(cfg: &ExperimentConfig) -> Result<Vec<SetShape>> {
    cfg.shapes.iter().map(SetShape::from_descriptor).collect()
}

fn orders(cfg: &ExperimentConfig) -> Vec<f64> {
    if cfg.s.is_empty() {
        vec![0.25, 0.5, 0.75]
    } else {
        cfg.s.clone()
    }
}

fn log_space(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| (a.ln() + (b.ln() - a.ln()) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Fills every default the runners would otherwise apply silently, so the
/// manifest shows the effective parameters.
pub fn resolve(cfg: &mut ExperimentConfig) -> Result<()> {
    if cfg.s.is_empty() {
        cfg.s = orders(cfg);
    }
    if cfg.families.is_empty() {
        cfg.families = if cfg.kind == "mbo" { vec![KernelFamily::FractionalHeat] } else { KernelFamily::ALL.to_vec() };
    }
    if cfg.t.is_empty() {
        cfg.t = match cfg.kind.as_str() {
            "kernel-check" => vec![1e-4],
            "scaling" => vec![1e-8, 1e-6, 1e-4, 1e-2],
            "velocity" if cfg.s.len() == 1 => default_ladder(cfg.s[0]),
            _ => Vec::new(),
        };
    }
    let sub_half = cfg.s.iter().any(|s| *s < 0.5);
    if cfg.tolerances.pv.is_none() && sub_half && matches!(cfg.kind.as_str(), "constants" | "velocity" | "mbo") {
        cfg.tolerances.pv = Some(MeasureOptions::default().pv_tol);
    }
    if cfg.kind == "mbo" {
        let shape = SetShape::from_descriptor(&cfg.shapes[0])?;
        let mut grid = cfg.grid.clone().unwrap_or_default();
        let extent = grid_extent(&grid, &shape, 0.0, 2.5);
        grid.extent = Some(extent);
        if cfg.h.is_none() {
            let law = ScalingLaw::new(cfg.s[0])?;
            cfg.h = Some(step_for_length(&law, grid.cells * extent / grid.n as f64));
        }
        cfg.grid = Some(grid);
        if cfg.tolerances.flow.is_none() && cfg.s[0] != 0.5 {
            cfg.tolerances.flow = Some(if sub_half { 0.10 } else { 0.05 });
        }
    }
    Ok(())
}

pub fn kernel_check(cfg: &ExperimentConfig, store: &mut KernelStore, out: &Path) -> Result<RunReport> {
    let mut rep = RunReport::default();
    let ts = if cfg.t.is_empty() { vec![1e-4] } else { cfg.t.clone() };
    let tol = &cfg.tolerances;
    let mut csv = String::from("family,s,dim,t,c_lower,c_upper,mass_error,limit_error,pass\n");
    let bound_radii = log_space(1e-3, 1e3, 200);
    let limit_radii: Vec<f64> = (0..64).map(|i| 0.5 + 1.5 * i as f64 / 63.0).collect();
    for s in orders(cfg) {
        for family in families_for(&cfg.families, s) {
            let k = store.get(family, s, cfg.dim)?;
            let bounds = verify_kernel_bounds(&k, &bound_radii);
            let mass_error = (k.mass() - 1.0).abs();
            let e = cfg.dim as f64 + 2.0 * s;
            let mut all = bounds.pass && mass_error <= tol.mass;
            for &t in &ts {
                let mut sup = 0.0f64;
                for &r in &limit_radii {
                    let ratio = k.eval_radial(r, t)? * r.powf(e) / (t * k.limit_constant());
                    sup = sup.max((ratio - 1.0).abs());
                }
                let pass = bounds.pass && mass_error <= tol.mass && sup <= tol.kernel_limit;
                all &= pass;
                writeln!(
                    csv,
                    "{family},{s},{},{t:e},{:.12e},{:.12e},{mass_error:.6e},{sup:.6e},{pass}",
                    cfg.dim, bounds.c_lower, bounds.c_upper
                )
                .unwrap();
            }
            rep.criteria.push(Criterion::new(
                format!("kernel:{family}:s={s}:N={}", cfg.dim),
                all,
                format!("mass error {mass_error:.2e}; bounds constant {:.4}", bounds.constant),
            ));
        }
        if s == 0.5 {
            let gamma = gamma_limit_constant(0.5, cfg.dim);
            let explicit = explicit_half_constant(cfg.dim);
            let mut pass = (gamma - explicit).abs() <= 1e-6;
            if cfg.dim == 2 {
                pass &= (gamma - 0.5 / std::f64::consts::PI).abs() <= 1e-6;
            }
            rep.criteria.push(Criterion::new(
                format!("half-constant:N={}", cfg.dim),
                pass,
                format!("gamma formula {gamma:.12}, explicit kernel {explicit:.12}"),
            ));
        }
    }
    rep.write(out, "kernel_check.csv", csv.as_bytes())?;
    Ok(rep)
}

pub fn scaling(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    let mut rep = RunReport::default();
    let ts = if cfg.t.is_empty() { vec![1e-8, 1e-6, 1e-4, 1e-2] } else { cfg.t.clone() };
    let mut csv = String::from("s,branch,t,sigma,length_scale,roundtrip_error\n");
    for s in orders(cfg) {
        let law = ScalingLaw::new(s)?;
        let mut worst = 0.0f64;
        let mut ok = true;
        for &t in &ts {
            match law.sigma(t) {
                Ok(sigma) => {
                    let back = sigma_inverse_check(&law, sigma)?;
                    let err = (back - t).abs() / t;
                    worst = worst.max(err);
                    writeln!(
                        csv,
                        "{s},{:?},{t:e},{sigma:.17e},{:.17e},{err:.3e}",
                        law.branch,
                        sigma.powf(0.5 / s)
                    )
                    .unwrap();
                }
                Err(e) => {
                    ok = false;
                    rep.failures += 1;
                    writeln!(csv, "{s},{:?},{t:e},,,\"{e}\"", law.branch).unwrap();
                }
            }
        }
        rep.criteria.push(Criterion::new(
            format!("scaling:s={s}"),
            ok && worst <= 1e-12,
            format!("largest relative round-trip error {worst:.3e}"),
        ));
    }
    rep.write(out, "scaling.csv", csv.as_bytes())?;
    Ok(rep)
}

pub fn constants(cfg: &ExperimentConfig, store: &mut KernelStore, out: &Path) -> Result<RunReport> {
    let mut rep = RunReport::default();
    let mut csv = String::from("family,s,dim,i0,i2,limit_constant,a,c,b_limit\n");
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.15e}")).unwrap_or_default();
    for s in orders(cfg) {
        for family in families_for(&cfg.families, s) {
            let k = store.get(family, s, cfg.dim)?;
            let c = expansion_constants(&k, 1e-10)?;
            let (a, cc) = (c.a().ok(), c.c().ok());
            let b = c.is_half().then(|| half_coefficient_limit(&c));
            writeln!(
                csv,
                "{family},{s},{},{:.15e},{},{:.15e},{},{},{}",
                cfg.dim,
                c.i0,
                fmt(c.i2),
                c.limit_constant,
                fmt(a),
                fmt(cc),
                fmt(b)
            )
            .unwrap();
            let coefficient = a.or(cc).or(b);
            rep.criteria.push(Criterion::new(
                format!("constants:{family}:s={s}:N={}", cfg.dim),
                coefficient.is_some_and(|v| v.is_finite() && v > 0.0),
                format!("velocity coefficient {}", fmt(coefficient)),
            ));
        }
    }
    rep.write(out, "constants.csv", csv.as_bytes())?;
    let shapes = shapes(cfg)?;
    if !shapes.is_empty() {
        let pv_tol = cfg.tolerances.pv.unwrap_or(1e-7);
        let mut curv = String::from("shape,point,s,mean_curvature,fractional_mean_curvature\n");
        for shape in &shapes {
            for p in boundary_points(shape, &cfg.points)? {
                let h = shape.mean_curvature(&p)?;
                for s in orders(cfg) {
                    let hs = if s < 0.5 {
                        match shape.fractional_mean_curvature(&p, s, pv_tol) {
                            Ok(v) => format!("{v:.12e}"),
                            Err(e) => {
                                rep.failures += 1;
                                format!("\"{e}\"")
                            }
                        }
                    } else {
                        String::new()
                    };
                    writeln!(curv, "{},{},{s},{h:.12e},{hs}", shape.label(), p.id).unwrap();
                }
            }
        }
        rep.write(out, "curvature.csv", curv.as_bytes())?;
    }
    Ok(rep)
}

fn grid_extent(grid: &GridConfig, shape: &SetShape, length: f64, factor: f64) -> f64 {
    grid.extent.unwrap_or_else(|| factor * shape.diameter().unwrap_or(1.0).max(length))
}

pub fn diffuse(cfg: &ExperimentConfig, store: &mut KernelStore, out: &Path) -> Result<RunReport> {
    let mut rep = RunReport::default();
    let tol = cfg.tolerances.direct;
    let mut csv = String::from("family,s,shape,sigma,point,x,u_direct,u_grid,difference,bound\n");
    for shape in shapes(cfg)? {
        for s in orders(cfg) {
            for family in families_for(&cfg.families, s) {
                let k = store.get(family, s, cfg.dim)?;
                for &sigma in &cfg.sigma {
                    let l = k.length_scale(sigma);
                    let mut probes: Vec<(String, Vec<f64>)> = Vec::new();
                    if cfg.x.is_empty() {
                        for p in boundary_points(&shape, &cfg.points)? {
                            for j in -2..=2 {
                                probes.push((format!("{}+{j}l", p.id), p.along_normal(j as f64 * l)));
                            }
                        }
                    } else {
                        probes.extend(cfg.x.iter().enumerate().map(|(i, x)| (format!("x{i}"), x.clone())));
                    }
                    let grid = match &cfg.grid {
                        Some(g) => {
                            let extent = grid_extent(g, &shape, l, 40.0);
                            let field = GridField::from_shape(&shape, g.n, extent)?;
                            let u = match g.boundary {
                                BoundaryMode::Periodic => {
                                    u_grid(&field, &k, sigma, GridOptions { wrap_limit: g.wrap_limit })?
                                }
                                BoundaryMode::FreeSpace => {
                                    FreeSpaceConvolver::new(&k, sigma, cfg.dim, g.n, extent)?.apply(&field)?
                                }
                            };
                            Some(u)
                        }
                        None => None,
                    };
                    let mut ok = true;
                    for (id, x) in &probes {
                        let direct = match diffuse_at(&k, &shape, sigma, x, tol) {
                            Ok(v) => v,
                            Err(e) => {
                                rep.failures += 1;
                                ok = false;
                                writeln!(csv, "{family},{s},{},{sigma:e},{id},\"{x:?}\",\"{e}\",,,", shape.label()).unwrap();
                                continue;
                            }
                        };
                        ok &= direct.abs() <= 1.0;
                        let (gv, diff, bound) = match &grid {
                            Some(u) => {
                                let v = u.interpolate(x);
                                let bound = (3.0 * tol).max(2.0 * u.spacing() * flat_interface_slope(&k, sigma));
                                let d = (v - direct).abs();
                                ok &= d <= bound;
                                (format!("{v:.12e}"), format!("{d:.3e}"), format!("{bound:.3e}"))
                            }
                            None => Default::default(),
                        };
                        writeln!(
                            csv,
                            "{family},{s},{},{sigma:e},{id},\"{x:?}\",{direct:.15e},{gv},{diff},{bound}",
                            shape.label()
                        )
                        .unwrap();
                    }
                    rep.criteria.push(Criterion::new(
                        format!("diffuse:{family}:s={s}:{}:sigma={sigma:e}", shape.label()),
                        ok,
                        if grid.is_some() { "range and grid agreement" } else { "range" },
                    ));
                }
            }
        }
    }
    rep.write(out, "diffuse.csv", csv.as_bytes())?;
    Ok(rep)
}

pub fn velocity(cfg: &ExperimentConfig, store: &mut KernelStore, out: &Path) -> Result<RunReport> {
    let mut rep = RunReport::default();
    let mut jobs = Vec::new();
    for shape in shapes(cfg)? {
        let points = boundary_points(&shape, &cfg.points)?;
        for s in orders(cfg) {
            for family in families_for(&cfg.families, s) {
                let kernel = store.get(family, s, cfg.dim)?;
                let ladder = if cfg.t.is_empty() { default_ladder(s) } else { cfg.t.clone() };
                jobs.push(VelocityJob { shape: shape.clone(), points: points.clone(), kernel, ladder });
            }
        }
    }
    let opts = MeasureOptions {
        pv_tol: cfg.tolerances.pv.unwrap_or(MeasureOptions::default().pv_tol),
        u_tol_factor: cfg.tolerances.u_factor,
        root_tol_factor: cfg.tolerances.root_factor,
    };
    let table = velocity_table(&jobs, &opts);
    let mut csv =
        String::from("s,family,shape,point,t,sigma,v_measured,v_predicted,residual,residual_scaled\n");
    for r in &table.records {
        writeln!(
            csv,
            "{},{},{},{},{:e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e}",
            r.s,
            r.family,
            r.shape,
            r.point,
            r.t,
            r.sigma,
            r.v_measured,
            r.v_predicted,
            r.residual,
            r.residual_scaled
        )
        .unwrap();
    }
    rep.write(out, "records.csv", csv.as_bytes())?;
    #[derive(Serialize)]
    struct Summary<'a> {
        fractional_orientation: f64,
        summaries: &'a [fracflow::velocity::LadderSummary],
        failures: &'a [fracflow::velocity::RecordFailure],
    }
    let summary = Summary {
        fractional_orientation: FRACTIONAL_ORIENTATION,
        summaries: &table.summaries,
        failures: &table.failures,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Parse(e.to_string()))?;
    rep.write(out, "summary.json", json.as_bytes())?;
    rep.failures += table.failures.len();
    for sm in &table.summaries {
        rep.criteria.push(Criterion::new(
            format!("velocity:{}:s={}:{}:{}", sm.family, sm.s, sm.shape, sm.point),
            sm.pass,
            format!(
                "residual slope {:?}, scaled slope {:?}, decreasing {}, relative error {:?}",
                sm.residual_slope, sm.scaled_slope, sm.decreasing, sm.relative_error_at_smallest_t
            ),
        ));
    }
    Ok(rep)
}

pub fn mbo(cfg: &ExperimentConfig, store: &mut KernelStore, out: &Path) -> Result<RunReport> {
    let mut rep = RunReport::default();
    let s = cfg.s[0];
    let family = cfg.families.first().copied().unwrap_or(KernelFamily::FractionalHeat);
    let shape = SetShape::from_descriptor(&cfg.shapes[0])?;
    let kernel = store.get(family, s, cfg.dim)?;
    let law = ScalingLaw::new(s)?;
    let grid = cfg.grid.clone().unwrap_or_default();
    let extent = grid_extent(&grid, &shape, 0.0, 2.5);
    let h = cfg.h.unwrap_or_else(|| step_for_length(&law, grid.cells * extent / grid.n as f64));
    let opts = FlowOptions {
        n: grid.n,
        extent,
        boundary: match grid.boundary {
            BoundaryMode::Periodic => Boundary::Periodic,
            BoundaryMode::FreeSpace => Boundary::FreeSpace,
        },
        snapshot_every: cfg.snapshot_every,
        wrap_limit: grid.wrap_limit,
        ..FlowOptions::default()
    };
    let trace = run_flow(&shape, &kernel, &law, h, cfg.n_steps.unwrap_or(0), &opts)?;
    let mut csv = Vec::new();
    trace.write_csv(&mut csv)?;
    rep.write(out, "trace.csv", &csv)?;
    for (step, field) in &trace.snapshots {
        let mut body = Vec::new();
        field.write_text(&mut body)?;
        rep.write(out, &format!("snapshot-{step:06}.txt"), &body)?;
    }
    let reference = match (&cfg.shapes[0], law.branch) {
        (ShapeDescriptor::Ball { dim: 2, radius, .. }, Branch::SuperHalf) => {
            let c = expansion_constants(&kernel, 1e-10)?.c()?;
            Some((RadiusLaw::Classical { c }, cfg.tolerances.flow.unwrap_or(0.05), 0.5 * radius))
        }
        (ShapeDescriptor::Ball { dim: 2, radius, .. }, Branch::SubHalf) => {
            let consts = expansion_constants(&kernel, 1e-10)?;
            let p = shape.point_at_angle("theta=0", 0.0)?;
            let hs = shape.fractional_mean_curvature(&p, s, cfg.tolerances.pv.unwrap_or(1e-8))?;
            // speed of the unit ball, by homogeneity of the fractional curvature
            let speed = consts.a()? * hs.abs() * radius.powf(2.0 * s);
            Some((RadiusLaw::Fractional { speed, s }, cfg.tolerances.flow.unwrap_or(0.10), 0.5 * radius))
        }
        _ => None,
    };
    let worst = reference.as_ref().and_then(|(law, _, r_min)| worst_deviation(&trace, law, *r_min));
    #[derive(Serialize)]
    struct Summary {
        h: f64,
        sigma: f64,
        n: usize,
        extent: f64,
        steps: usize,
        vanished: bool,
        reference: Option<RadiusLaw>,
        radius_floor: Option<f64>,
        worst_deviation: Option<f64>,
        tolerance: Option<f64>,
    }
    let summary = Summary {
        h,
        sigma: trace.sigma,
        n: trace.n,
        extent: trace.extent,
        steps: trace.steps.len() - 1,
        vanished: trace.vanished,
        reference: reference.map(|r| r.0),
        radius_floor: reference.map(|r| r.2),
        worst_deviation: worst,
        tolerance: reference.map(|r| r.1),
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Parse(e.to_string()))?;
    rep.write(out, "mbo_summary.json", json.as_bytes())?;
    if let Some((_, tol, r_min)) = reference {
        let (pass, detail) = match worst {
            Some(w) => (w <= tol, format!("worst deviation {w:.4} (tolerance {tol})")),
            None => (false, format!("fewer than two steps before the radius fell below {r_min}")),
        };
        rep.criteria.push(Criterion::new(format!("flow-law:{family}:s={s}"), pass, detail));
    }
    Ok(rep)
}
