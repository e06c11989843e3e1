//! Normal velocity of the thresholded set and the curvature expansions it is
//! compared against.
//!
//! With the normal pointing into the set, a shrinking convex set has positive
//! velocity. The classical curvature `Delta gamma(0)/(N-1)` is positive on convex
//! sets while the principal value of `tau_E / |x - y|^{N+2s}` is negative there,
//! so the sub-half prediction is `-a H_s` in this orientation.

use std::cell::RefCell;

use serde::Serialize;

use crate::diffusion::diffuse_at;
use crate::error::{domain, Error, Result};
use crate::geometry::{BoundaryPoint, SetShape};
use crate::kernels::{hyperplane_moment, KernelFamily, KernelSpec};
use crate::numerics::fit::{log_log_slope, theil_sen_slope};
use crate::numerics::roots::{brent, RootError};
use crate::scaling::{Branch, ScalingLaw};

/// Sign relating the principal-value curvature to the inward-normal velocity.
pub const FRACTIONAL_ORIENTATION: f64 = -1.0;

/// Hyperplane integrals of the profile and the constants built from them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionConstants {
    pub s: f64,
    pub dim: usize,
    pub family: KernelFamily,
    /// `int_{R^{N-1}} P(y', 0) dy'`.
    pub i0: f64,
    /// `int_{R^{N-1}} |y'|^2 P(y', 0) dy'`; finite only for `s > 1/2`.
    pub i2: Option<f64>,
    pub limit_constant: f64,
    a: Option<f64>,
    c: Option<f64>,
}

impl ExpansionConstants {
    pub fn a(&self) -> Result<f64> {
        self.a.ok_or_else(|| Error::Domain(format!("a is defined for s < 1/2, not s = {}", self.s)))
    }

    pub fn c(&self) -> Result<f64> {
        self.c.ok_or_else(|| {
            Error::Domain(format!("c needs a finite second moment (s > 1/2), not s = {}", self.s))
        })
    }

    pub fn is_half(&self) -> bool {
        self.s == 0.5
    }
}

pub fn expansion_constants(kernel: &KernelSpec, tol: f64) -> Result<ExpansionConstants> {
    let s = kernel.s();
    let i0 = hyperplane_moment(kernel, 0.0, 0.0, f64::INFINITY);
    if !(i0.is_finite() && i0 > 0.0) {
        return Err(Error::NonConvergence { what: "hyperplane mass".into(), estimate: tol });
    }
    let i2 = if s > 0.5 {
        let v = hyperplane_moment(kernel, 2.0, 0.0, f64::INFINITY);
        if !v.is_finite() {
            return Err(Error::NonConvergence { what: "hyperplane second moment".into(), estimate: tol });
        }
        Some(v)
    } else {
        None
    };
    let cst = kernel.limit_constant();
    Ok(ExpansionConstants {
        s,
        dim: kernel.dim(),
        family: kernel.family(),
        i0,
        i2,
        limit_constant: cst,
        a: (s < 0.5).then(|| cst / (2.0 * i0)),
        c: i2.map(|v| v / (2.0 * i0)),
    })
}

/// Truncated second moment `int_{|y'| < rho} |y'|^2 P(y', 0) dy'`.
pub fn truncated_second_moment(kernel: &KernelSpec, rho: f64) -> f64 {
    hyperplane_moment(kernel, 2.0, 0.0, rho)
}

/// `b(t) = I_2(1/sigma) / (2 |log sigma| I_0)` for the half branch.
pub fn half_coefficient(kernel: &KernelSpec, consts: &ExpansionConstants, t: f64) -> Result<f64> {
    if kernel.s() != 0.5 {
        return domain("b(t) is defined for s = 1/2");
    }
    let sigma = ScalingLaw::new(0.5)?.sigma(t)?;
    Ok(truncated_second_moment(kernel, 1.0 / sigma) / (2.0 * sigma.ln().abs() * consts.i0))
}

/// Large-time-scale limit of `b(t) |log sigma|`: `|S^{N-2}| C / (2 I_0)`.
pub fn half_coefficient_limit(consts: &ExpansionConstants) -> f64 {
    crate::numerics::special::sphere_area(consts.dim - 1) * consts.limit_constant / (2.0 * consts.i0)
}

/// One velocity measurement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VelocityRecord {
    pub s: f64,
    pub family: KernelFamily,
    pub shape: String,
    pub point: String,
    pub t: f64,
    pub sigma: f64,
    /// Interface displacement along the normal.
    pub delta: f64,
    /// Absolute tolerance of the displacement.
    pub delta_tol: f64,
    pub v_measured: f64,
    pub v_predicted: f64,
    pub residual: f64,
    pub residual_scaled: f64,
}

/// Settings of a measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureOptions {
    /// Relative tolerance of the principal-value curvature.
    pub pv_tol: f64,
    /// Absolute tolerance of `u` in units of `sigma`.
    pub u_tol_factor: f64,
    /// Root tolerance in units of `sigma^{(1+2s)/(2s)}`.
    pub root_tol_factor: f64,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        Self { pv_tol: 1e-7, u_tol_factor: 1e-6, root_tol_factor: 1e-3 }
    }
}

/// Curvature value the prediction multiplies (`H_s` below one half, `H` otherwise).
pub fn curvature_for(shape: &SetShape, p: &BoundaryPoint, s: f64, opts: &MeasureOptions) -> Result<f64> {
    if s < 0.5 {
        shape.fractional_mean_curvature(p, s, opts.pv_tol)
    } else {
        shape.mean_curvature(p)
    }
}

/// Predicted velocity at time `t` for a given curvature value.
pub fn predicted_velocity(kernel: &KernelSpec, consts: &ExpansionConstants, curvature: f64, t: f64) -> Result<f64> {
    let s = kernel.s();
    if s < 0.5 {
        Ok(FRACTIONAL_ORIENTATION * consts.a()? * curvature)
    } else if s == 0.5 {
        Ok(half_coefficient(kernel, consts, t)? * curvature)
    } else {
        Ok(consts.c()? * curvature)
    }
}

fn scaled_residual(law: &ScalingLaw, residual: f64, t: f64, sigma: f64) -> f64 {
    match law.branch {
        Branch::SuperHalf => residual * t.powf(-(2.0 * law.s - 1.0) / 2.0),
        Branch::Half => residual * sigma.ln().abs(),
        Branch::SubHalf => residual,
    }
}

/// Root of `delta -> u(p + delta nu, sigma(t))` in the window `|delta| < sigma^{1/(2s)}`.
pub fn measure_velocity(
    shape: &SetShape,
    kernel: &KernelSpec,
    law: &ScalingLaw,
    p: &BoundaryPoint,
    t: f64,
    opts: &MeasureOptions,
) -> Result<VelocityRecord> {
    let consts = expansion_constants(kernel, 1e-10)?;
    let curvature = curvature_for(shape, p, kernel.s(), opts)?;
    measure_with(shape, kernel, law, p, t, opts, &consts, curvature)
}

#[allow(clippy::too_many_arguments)]
fn measure_with(
    shape: &SetShape,
    kernel: &KernelSpec,
    law: &ScalingLaw,
    p: &BoundaryPoint,
    t: f64,
    opts: &MeasureOptions,
    consts: &ExpansionConstants,
    curvature: f64,
) -> Result<VelocityRecord> {
    if law.s != kernel.s() {
        return domain("scaling law and kernel have different orders");
    }
    let sigma = law.sigma(t)?;
    let window = kernel.length_scale(sigma);
    if window >= p.graph_radius {
        return domain(format!(
            "t = {t} too large: window {window:.3e} is not below the graph radius {}",
            p.graph_radius
        ));
    }
    let u_tol = opts.u_tol_factor * sigma;
    let delta_tol = opts.root_tol_factor * sigma * window;
    let failure = RefCell::new(None);
    let g = |d: f64| match diffuse_at(kernel, shape, sigma, &p.along_normal(d), u_tol) {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    };
    let lo = g(-window);
    let hi = g(window);
    if let Some(e) = failure.borrow_mut().take() {
        return Err(e);
    }
    if lo.signum() == hi.signum() {
        return Err(Error::NonConvergence {
            what: format!("interface left the search window at t = {t}"),
            estimate: lo.abs().min(hi.abs()),
        });
    }
    let root = brent(g, -window, window, delta_tol, 200);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let delta = match root {
        Ok(r) => r.x,
        Err(RootError::MaxIterations { width, .. }) => {
            return Err(Error::NonConvergence { what: "velocity root".into(), estimate: width })
        }
        Err(RootError::NotBracketed { fa, .. }) => {
            return Err(Error::NonConvergence { what: "velocity root bracket".into(), estimate: fa })
        }
    };
    let v = delta / t;
    let pred = predicted_velocity(kernel, consts, curvature, t)?;
    let residual = v - pred;
    Ok(VelocityRecord {
        s: kernel.s(),
        family: kernel.family(),
        shape: shape.label(),
        point: p.id.clone(),
        t,
        sigma,
        delta,
        delta_tol,
        v_measured: v,
        v_predicted: pred,
        residual,
        residual_scaled: scaled_residual(law, residual, t, sigma),
    })
}

/// Default ladder per regime.
pub fn default_ladder(s: f64) -> Vec<f64> {
    if s == 0.5 {
        vec![(-4.0f64).exp(), (-6.0f64).exp(), (-8.0f64).exp()]
    } else {
        vec![1e-2, 1e-3, 1e-4]
    }
}

/// One shape, kernel and list of boundary points measured over a ladder.
#[derive(Debug, Clone)]
pub struct VelocityJob {
    pub shape: SetShape,
    pub points: Vec<BoundaryPoint>,
    pub kernel: KernelSpec,
    pub ladder: Vec<f64>,
}

/// A record that could not be measured.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordFailure {
    pub s: f64,
    pub family: KernelFamily,
    pub shape: String,
    pub point: String,
    pub t: f64,
    pub error: String,
}

/// Convergence summary of one ladder.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderSummary {
    pub s: f64,
    pub family: KernelFamily,
    pub shape: String,
    pub point: String,
    pub points: usize,
    /// Log-log slope of `|residual|` against `t`.
    pub residual_slope: Option<f64>,
    /// Theil–Sen slope of the scaled residual against `log t`.
    pub scaled_slope: Option<f64>,
    /// `|residual|` strictly decreases as `t` decreases.
    pub decreasing: bool,
    pub relative_error_at_smallest_t: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VelocityTable {
    pub records: Vec<VelocityRecord>,
    pub failures: Vec<RecordFailure>,
    pub summaries: Vec<LadderSummary>,
}

/// Runs every job; failures are collected without stopping the batch.
pub fn velocity_table(jobs: &[VelocityJob], opts: &MeasureOptions) -> VelocityTable {
    use rayon::prelude::*;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut summaries = Vec::new();
    for job in jobs {
        let kernel = &job.kernel;
        let law = match ScalingLaw::new(kernel.s()) {
            Ok(l) => l,
            Err(e) => {
                failures.push(failure(job, "-", f64::NAN, &e));
                continue;
            }
        };
        let consts = match expansion_constants(kernel, 1e-10) {
            Ok(c) => c,
            Err(e) => {
                failures.push(failure(job, "-", f64::NAN, &e));
                continue;
            }
        };
        for p in &job.points {
            let curvature = match curvature_for(&job.shape, p, kernel.s(), opts) {
                Ok(c) => c,
                Err(e) => {
                    failures.push(failure(job, &p.id, f64::NAN, &e));
                    continue;
                }
            };
            let results: Vec<Result<VelocityRecord>> = job
                .ladder
                .par_iter()
                .map(|&t| measure_with(&job.shape, kernel, &law, p, t, opts, &consts, curvature))
                .collect();
            let mut ladder_records = Vec::new();
            for (t, r) in job.ladder.iter().zip(results) {
                match r {
                    Ok(rec) => ladder_records.push(rec),
                    Err(e) => failures.push(failure(job, &p.id, *t, &e)),
                }
            }
            if !ladder_records.is_empty() {
                summaries.push(summarize(&law, &ladder_records));
            }
            records.extend(ladder_records);
        }
    }
    VelocityTable { records, failures, summaries }
}

fn failure(job: &VelocityJob, point: &str, t: f64, e: &Error) -> RecordFailure {
    RecordFailure {
        s: job.kernel.s(),
        family: job.kernel.family(),
        shape: job.shape.label(),
        point: point.into(),
        t,
        error: e.to_string(),
    }
}

/// Regime-specific convergence check of a ladder of records.
pub fn summarize(law: &ScalingLaw, recs: &[VelocityRecord]) -> LadderSummary {
    let mut sorted: Vec<&VelocityRecord> = recs.iter().collect();
    sorted.sort_by(|a, b| b.t.total_cmp(&a.t));
    let ts: Vec<f64> = sorted.iter().map(|r| r.t).collect();
    let res: Vec<f64> = sorted.iter().map(|r| r.residual).collect();
    let scaled: Vec<f64> = sorted.iter().map(|r| r.residual_scaled).collect();
    let log_t: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let residual_slope = log_log_slope(&ts, &res);
    let scaled_slope = theil_sen_slope(&log_t, &scaled);
    let decreasing = res.windows(2).all(|w| w[1].abs() < w[0].abs());
    let last = sorted.last().expect("non-empty ladder");
    let rel = (last.v_predicted != 0.0).then(|| (last.residual / last.v_predicted).abs());
    let pass = match law.branch {
        Branch::SuperHalf => residual_slope.is_some_and(|k| k >= (2.0 * law.s - 1.0) / 2.0 - 0.15),
        Branch::Half => scaled_slope.is_some_and(|k| k.abs() <= 0.2),
        Branch::SubHalf => decreasing,
    } || res.iter().all(|r| r.abs() <= last.delta_tol / last.t);
    LadderSummary {
        s: last.s,
        family: last.family,
        shape: last.shape.clone(),
        point: last.point.clone(),
        points: sorted.len(),
        residual_slope,
        scaled_slope,
        decreasing,
        relative_error_at_smallest_t: rel,
        pass,
    }
}
