//! Bessel functions of the first kind for integer and half-integer order.
//!
//! Integer orders use the periodic integral `J_n(z) = (1/pi) int_0^pi cos(n t - z sin t) dt`
//! with the trapezoidal rule (spectrally accurate) for moderate `z`, and the Hankel
//! asymptotic expansion beyond. Half-integer orders use the terminating Hankel
//! expansion (exact up to rounding) or the power series near the origin.

use std::f64::consts::PI;

use statrs::function::gamma::gamma;

const ASYMPTOTIC_FROM: f64 = 25.0;
const TRAPEZOID_POINTS: usize = 64;

fn is_half_integer(nu: f64) -> bool {
    (nu - nu.floor() - 0.5).abs() < 1e-12
}

/// `J_nu(z)` for `nu` a non-negative integer or half-integer, `z >= 0`.
pub fn bessel_j(nu: f64, z: f64) -> f64 {
    assert!(nu >= 0.0, "negative order");
    assert!(
        nu.fract() == 0.0 || is_half_integer(nu),
        "order must be an integer or half-integer"
    );
    if z == 0.0 {
        return if nu == 0.0 { 1.0 } else { 0.0 };
    }
    let z = z.abs();
    if is_half_integer(nu) {
        if z < 2.0 + nu {
            power_series(nu, z)
        } else {
            hankel_expansion(nu, z)
        }
    } else if z >= ASYMPTOTIC_FROM + nu * nu {
        hankel_expansion(nu, z)
    } else {
        trapezoid_integer(nu as u32, z)
    }
}

fn power_series(nu: f64, z: f64) -> f64 {
    let half = 0.5 * z;
    let mut term = half.powf(nu) / gamma(nu + 1.0);
    let mut sum = term;
    let q = -half * half;
    for m in 1..200 {
        let m = m as f64;
        term *= q / (m * (m + nu));
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

fn trapezoid_integer(n: u32, z: f64) -> f64 {
    // J_n(z) = (1/2pi) int_0^{2pi} cos(n t - z sin t) dt; the integrand is even about
    // t = pi so the trapezoid over the full period halves to [0, pi].
    let m = TRAPEZOID_POINTS;
    let h = PI / m as f64;
    let n = n as f64;
    let mut sum = 0.5 * ((0.0f64).cos() + (n * PI).cos());
    for k in 1..m {
        let t = k as f64 * h;
        sum += (n * t - z * t.sin()).cos();
    }
    sum / m as f64
}

fn hankel_expansion(nu: f64, z: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut last = f64::INFINITY;
    let eight_z = 8.0 * z;
    for k in 1..80 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        term *= (mu - odd * odd) / (kf * eight_z);
        if term == 0.0 {
            break;
        }
        if term.abs() > last {
            break;
        }
        last = term.abs();
        // k odd -> Q, k even -> P, alternating signs in pairs
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        if term.abs() < 1e-17 {
            break;
        }
    }
    let chi = z - (0.5 * nu + 0.25) * PI;
    (2.0 / (PI * z)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// McMahon's large-zero expansion without refinement; accurate to about `1e-9`
/// relative from the sixth zero on, which is ample for quadrature breakpoints.
pub fn bessel_j_zero_approx(nu: f64, m: usize) -> f64 {
    if m <= 5 {
        return bessel_j_zero(nu, m);
    }
    let beta = (m as f64 + 0.5 * nu - 0.25) * PI;
    let mu = 4.0 * nu * nu;
    let b8 = 8.0 * beta;
    beta - (mu - 1.0) / b8
        - 4.0 * (mu - 1.0) * (7.0 * mu - 31.0) / (3.0 * b8.powi(3))
        - 32.0 * (mu - 1.0) * (83.0 * mu * mu - 982.0 * mu + 3779.0) / (15.0 * b8.powi(5))
}

/// Positive zeros of `J_nu` are approximated by McMahon's expansion and polished
/// by Newton's method on `J_nu` with `J_nu' = (nu/z) J_nu - J_{nu+1}`.
pub fn bessel_j_zero(nu: f64, m: usize) -> f64 {
    assert!(m >= 1);
    let beta = (m as f64 + 0.5 * nu - 0.25) * PI;
    let mu = 4.0 * nu * nu;
    let mut z = beta - (mu - 1.0) / (8.0 * beta)
        - 4.0 * (mu - 1.0) * (7.0 * mu - 31.0) / (3.0 * (8.0 * beta).powi(3));
    if m == 1 && nu < 0.5 {
        // the expansion is poor for the first zero of low orders; this starts Newton
        // inside the basin
        z = 2.404_825_557_695_773 + 1.5 * nu;
    }
    for _ in 0..20 {
        let j = bessel_j(nu, z);
        let dj = nu / z * j - bessel_j(nu + 1.0, z);
        let step = j / dj;
        z -= step;
        if step.abs() < 1e-15 * z {
            break;
        }
    }
    z
}
