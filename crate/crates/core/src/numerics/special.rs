//! Small special-function helpers: sphere areas and spherical cap fractions.

use std::f64::consts::PI;

use statrs::function::beta::beta_reg;
use statrs::function::gamma::gamma;

/// Surface area `|S^{n-1}|` of the unit sphere in `R^n` (`|S^0| = 2`).
pub fn sphere_area(n: usize) -> f64 {
    assert!(n >= 1);
    let h = 0.5 * n as f64;
    2.0 * PI.powf(h) / gamma(h)
}

/// Fraction of the unit sphere `S^{n-1}` where the cosine to a fixed axis is below `kappa`.
pub fn cap_fraction_below(n: usize, kappa: f64) -> f64 {
    if kappa <= -1.0 {
        return 0.0;
    }
    if kappa >= 1.0 {
        return 1.0;
    }
    match n {
        2 => 1.0 - kappa.acos() / PI,
        3 => 0.5 * (1.0 + kappa),
        _ => {
            let a = 0.5 * (n as f64 - 1.0);
            beta_reg(a, a, 0.5 * (1.0 + kappa))
        }
    }
}

/// Spherical mean of a sign field equal to `+1` where the cosine to an axis is below
/// `kappa` and `-1` elsewhere.
pub fn signed_cap_mean(n: usize, kappa: f64) -> f64 {
    match n {
        2 => {
            // 1 - 2 acos(k)/pi = (2/pi) asin(k), which keeps accuracy near k = 0
            if kappa <= -1.0 {
                -1.0
            } else if kappa >= 1.0 {
                1.0
            } else {
                2.0 / PI * kappa.asin()
            }
        }
        3 => kappa.clamp(-1.0, 1.0),
        _ => 2.0 * cap_fraction_below(n, kappa) - 1.0,
    }
}
