//! Fourier multipliers of radial kernels, `m(k) = int P(|y|) e^{-i k e_1 . y} dy`.
//!
//! When no closed form is used the radial transform
//! `m(k) = (2 pi)^{N/2} k^{1-N/2} int_0^inf P(r) r^{N/2} J_{N/2-1}(k r) dr`
//! is evaluated between Bessel zeros with epsilon acceleration and tabulated.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::accel::wynn_epsilon;
use crate::numerics::bessel::{bessel_j, bessel_j_zero_approx};
use crate::numerics::quad::Quadrature;
use crate::numerics::special::sphere_area;
use crate::numerics::spline::CubicSpline;

use super::profile::{moment_breaks, Profile};

/// Numerical radial Fourier transform of `profile` at frequency `k > 0`.
pub fn hankel_transform(profile: &Profile, dim: usize, k: f64) -> Result<f64> {
    let n = dim as f64;
    let nu = 0.5 * n - 1.0;
    let f = |r: f64| profile.value(r) * r.powf(0.5 * n) * bessel_j(nu, k * r);
    let q = Quadrature::new(1e-16, 1e-12).with_max_panels(4000);
    let first = bessel_j_zero_approx(nu, 1) / k;
    let head = q.integrate_with_breaks(f, &moment_breaks(0.0, first));
    let mut converged = head.converged;
    let mut partial = head.value;
    let mut sums = Vec::new();
    let mut lo = first;
    let mut result = None;
    for m in 2..20_000 {
        let hi = bessel_j_zero_approx(nu, m) / k;
        let piece = q.integrate(f, lo, hi);
        converged &= piece.converged;
        partial += piece.value;
        sums.push(partial);
        lo = hi;
        if sums.len() >= 20 && sums.len() % 5 == 0 {
            let window = &sums[sums.len() - 20..];
            let (est, change) = wynn_epsilon(window);
            if change < 1e-14 * est.abs() + 1e-17 {
                result = Some(est);
                break;
            }
        }
    }
    let value = match (result, converged) {
        (Some(v), true) => v,
        _ => {
            return Err(Error::NonConvergence {
                what: format!("radial Fourier transform at k = {k}"),
                estimate: (sums[sums.len() - 1] - sums[sums.len() - 2]).abs(),
            })
        }
    };
    Ok((2.0 * PI).powf(0.5 * n) * k.powf(1.0 - 0.5 * n) * value)
}

/// Spline table of a numerically transformed multiplier in `(log k, log m)`.
#[derive(Debug, Clone)]
pub struct MultiplierTable {
    k_min: f64,
    k_max: f64,
    /// `1 - m(k_min)`, used for the small-frequency model `1 - c k^{2s}`.
    defect_at_min: f64,
    s: f64,
    spline: CubicSpline,
}

impl MultiplierTable {
    pub fn build(profile: &Profile, dim: usize, s: f64) -> Result<Self> {
        let k_min: f64 = 1e-4;
        // the multipliers of interest decay at least like exp(-k)
        let k_max: f64 = 60.0;
        let n = 600;
        let ks: Vec<f64> = (0..n)
            .map(|i| k_min * (k_max / k_min).powf(i as f64 / (n - 1) as f64))
            .collect();
        let values: Vec<f64> = ks
            .par_iter()
            .map(|&k| hankel_transform(profile, dim, k))
            .collect::<Result<_>>()?;
        let cut = values.iter().position(|v| *v < 1e-30).unwrap_or(values.len());
        let mass = sphere_area(dim) * profile.radial_moment(dim as f64 - 1.0, 0.0, f64::INFINITY);
        let logs: Vec<f64> = ks[..cut].iter().map(|k| k.ln()).collect();
        let logm: Vec<f64> = values[..cut].iter().map(|v| (v / mass).ln()).collect();
        Ok(Self {
            k_min,
            k_max: ks[cut - 1],
            defect_at_min: 1.0 - values[0] / mass,
            s,
            spline: CubicSpline::natural(logs, logm),
        })
    }

    pub fn eval(&self, k: f64) -> f64 {
        if k <= 0.0 {
            return 1.0;
        }
        if k < self.k_min {
            return 1.0 - self.defect_at_min * (k / self.k_min).powf(2.0 * self.s);
        }
        if k > self.k_max {
            return 0.0;
        }
        self.spline.eval(k.ln()).exp()
    }
}
