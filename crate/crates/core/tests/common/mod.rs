//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        loop {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                let (mut q0, mut q1) = (1.0, z);
                for k in 2..=n {
                    let k = k as f64;
                    let q2 = ((2.0 * k - 1.0) * z * q1 - (k - 1.0) * q0) / k;
                    q0 = q1;
                    q1 = q2;
                }
                let dq = n as f64 * (z * q1 - q0) / (z * z - 1.0);
                x[i] = z;
                w[i] = 2.0 / ((1.0 - z * z) * dq * dq);
                break;
            }
        }
    }
    (x, w)
}

/// Composite Gauss–Legendre over the panels `breaks[i]..breaks[i+1]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, breaks: &[f64], order: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    let mut total = 0.0;
    for pair in breaks.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
        total += x.iter().zip(&w).map(|(xi, wi)| wi * f(m + h * xi)).sum::<f64>() * h;
    }
    total
}

pub fn geometric(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| a * (b / a).powf(i as f64 / n as f64)).collect()
}

/// Brute-force fractional curvature of a set at `p` in the plane: polar quadrature
/// of `tau(y) / |y - p|^{2+2s}` over `eps < |y - p| < outer`, with the angular
/// integral split at crossings found by bisection on `tau`, plus the exterior tail
/// where `tau = -1`.
pub fn planar_pv<T: Fn([f64; 2]) -> f64>(tau: T, p: [f64; 2], s: f64, eps: f64, outer: f64, reach: f64) -> f64 {
    let at = |rho: f64, phi: f64| tau([p[0] + rho * phi.cos(), p[1] + rho * phi.sin()]);
    let angular = |rho: f64| -> f64 {
        let m = 720;
        let dphi = 2.0 * PI / m as f64;
        let mut total = 0.0;
        let mut a = 0.0;
        let mut ta = at(rho, a);
        for k in 1..=m {
            let b = k as f64 * dphi;
            let tb = at(rho, b);
            if ta == tb {
                total += ta * (b - a);
            } else {
                let (mut lo, mut hi) = (a, b);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if at(rho, mid) == ta {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                total += ta * (lo - a) + tb * (b - lo);
            }
            a = b;
            ta = tb;
        }
        total
    };
    let f = |rho: f64| angular(rho) * rho.powf(-1.0 - 2.0 * s);
    // geometric panels from eps, then panels accumulating at `reach`, where the
    // angular measure has a square-root kink
    let mut breaks = geometric(eps, 0.5 * reach, 40);
    breaks.extend((1..=30).map(|k| reach - 0.5 * reach * 0.5f64.powi(k)));
    breaks.push(reach);
    let inner = integrate(f, &breaks, 20);
    // beyond `reach` the circle lies outside the set
    let between = -2.0 * PI * (reach.powf(-2.0 * s) - outer.powf(-2.0 * s)) / (2.0 * s);
    let tail = -2.0 * PI * outer.powf(-2.0 * s) / (2.0 * s);
    inner + between + tail
}

/// Richardson extrapolation in `eps` for a truncated principal value whose
/// defect behaves like `eps^{1-2s}` (ladder ratio 10).
pub fn richardson(values: &[f64], s: f64) -> f64 {
    let r = 10f64.powf(-(1.0 - 2.0 * s));
    let n = values.len();
    (values[n - 1] - r * values[n - 2]) / (1.0 - r)
}

/// `int_0^inf q^power (1 + q^2)^{-decay} dq` by the beta function.
pub fn algebraic_moment(power: f64, decay: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let a = 0.5 * (power + 1.0);
    let b = decay - a;
    0.5 * (ln_gamma(a) + ln_gamma(b) - ln_gamma(decay)).exp()
}
