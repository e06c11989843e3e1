//! Pointwise evaluation of the fractional heat profile, the radial inverse Fourier
//! transform of `exp(-|xi|^{2s})` in `R^N`.
//!
//! Three representations are combined: the power series at the origin (entire for
//! `s > 1/2`), the inverse-power series at infinity (convergent for `s < 1/2`,
//! asymptotic otherwise) and oscillatory quadrature of the Hankel integral.

use std::f64::consts::PI;

use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};
use crate::numerics::accel::wynn_epsilon;
use crate::numerics::bessel::{bessel_j, bessel_j_zero_approx};
use crate::numerics::quad::{geometric_breaks, Quadrature};
use crate::numerics::special::sphere_area;

/// Relative accuracy demanded of a series before it is trusted over quadrature.
const SERIES_TARGET: f64 = 1e-12;

/// Value at the origin: `(2 pi)^{-N} |S^{N-1}| Gamma(N/(2s)) / (2s)`.
pub fn profile_at_origin(s: f64, dim: usize) -> f64 {
    let n = dim as f64;
    (2.0 * PI).powf(-n) * sphere_area(dim) * gamma(n / (2.0 * s)) / (2.0 * s)
}

/// Coefficient of `r^{-N-2ks}` in the expansion at infinity.
pub fn far_coefficient(s: f64, dim: usize, k: usize) -> f64 {
    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
    sign * far_magnitude(s, dim, k) * (k as f64 * PI * s).sin()
}

/// `|far_coefficient|` with the sine factor replaced by one.
pub(crate) fn far_magnitude(s: f64, dim: usize, k: usize) -> f64 {
    let n = dim as f64;
    let kf = k as f64;
    let ks = kf * s;
    (ln_gamma(ks + 0.5 * n) + ln_gamma(ks + 1.0) - ln_gamma(kf + 1.0)
        + 2.0 * ks * std::f64::consts::LN_2)
        .exp()
        / PI.powf(0.5 * n + 1.0)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SeriesValue {
    pub value: f64,
    pub rel_error: f64,
    /// Number of terms summed; the expansion at infinity is truncated here.
    #[allow(dead_code)]
    pub terms: usize,
}

/// Sums the expansion at infinity. For `s >= 1/2` the series is asymptotic and
/// truncated at its smallest term.
pub(crate) fn far_series(s: f64, dim: usize, r: f64) -> SeriesValue {
    let n = dim as f64;
    let log_ratio = (2.0 / r).ln();
    let mut sum = 0.0;
    let mut largest: f64 = 0.0;
    let mut last_mag = f64::INFINITY;
    let mut terms = 0;
    let mut tail_mag = f64::INFINITY;
    for k in 1..4000 {
        let kf = k as f64;
        let ks = kf * s;
        let log_mag = ln_gamma(ks + 0.5 * n) + ln_gamma(ks + 1.0) - ln_gamma(kf + 1.0)
            + 2.0 * ks * log_ratio;
        if log_mag > 700.0 {
            return SeriesValue { value: f64::NAN, rel_error: f64::INFINITY, terms: k };
        }
        let mag = log_mag.exp();
        if s >= 0.5 && mag > last_mag && k > 2 {
            // asymptotic series: stop at the smallest term
            tail_mag = last_mag;
            break;
        }
        last_mag = mag;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        let term = sign * mag * (kf * PI * s).sin();
        sum += term;
        largest = largest.max(term.abs());
        terms = k;
        if mag < 1e-18 * sum.abs() && k > 3 {
            tail_mag = mag;
            break;
        }
    }
    let scale = 1.0 / (PI.powf(0.5 * n + 1.0) * r.powi(dim as i32));
    let rel_error = if sum == 0.0 {
        f64::INFINITY
    } else {
        (tail_mag + 1e-16 * largest * terms as f64) / sum.abs()
    };
    SeriesValue { value: sum * scale, rel_error, terms }
}

/// Power series about the origin; convergent for `s > 1/2`, asymptotic otherwise.
pub(crate) fn near_series(s: f64, dim: usize, r: f64) -> SeriesValue {
    let n = dim as f64;
    let log_half = (0.5 * r).ln();
    let mut sum = 0.0;
    let mut largest: f64 = 0.0;
    let mut last_mag = f64::INFINITY;
    let mut tail_mag = f64::INFINITY;
    let mut terms = 0;
    for m in 0..4000 {
        let mf = m as f64;
        let log_mag = ln_gamma((2.0 * mf + n) / (2.0 * s))
            - ln_gamma(mf + 1.0)
            - ln_gamma(mf + 0.5 * n)
            + 2.0 * mf * log_half;
        if log_mag > 700.0 {
            return SeriesValue { value: f64::NAN, rel_error: f64::INFINITY, terms: m };
        }
        let mag = log_mag.exp();
        if mag > last_mag && s <= 0.5 && m > 1 {
            tail_mag = last_mag;
            break;
        }
        last_mag = mag;
        let term = if m % 2 == 0 { mag } else { -mag };
        sum += term;
        largest = largest.max(mag);
        terms = m + 1;
        if mag < 1e-18 * sum.abs() && m > 2 {
            tail_mag = mag;
            break;
        }
    }
    let scale = (2.0 * PI).powf(-0.5 * n) * 2f64.powf(1.0 - 0.5 * n) / (2.0 * s);
    let rel_error = if sum == 0.0 {
        f64::INFINITY
    } else {
        (tail_mag + 1e-16 * largest * terms as f64) / sum.abs()
    };
    SeriesValue { value: sum * scale, rel_error, terms }
}

/// Frequency beyond which `k^{N/2} exp(-k^{2s})` is below `1e-18` of its scale.
fn frequency_cutoff(s: f64, dim: usize) -> f64 {
    let mut k: f64 = 1.0;
    for _ in 0..8 {
        k = (42.0 + 0.5 * dim as f64 * k.max(1.0).ln()).powf(0.5 / s);
    }
    k
}

/// Hankel-integral evaluation for `r > 0`, integrating between consecutive zeros of
/// the Bessel factor. When the oscillation count is large the alternating interval
/// sums are accelerated with the epsilon algorithm.
pub(crate) fn hankel_quadrature(s: f64, dim: usize, r: f64) -> Result<f64> {
    let n = dim as f64;
    let nu = 0.5 * n - 1.0;
    let f = |k: f64| {
        if k == 0.0 {
            return 0.0;
        }
        (-k.powf(2.0 * s)).exp() * k.powf(0.5 * n) * bessel_j(nu, k * r)
    };
    let k_max = frequency_cutoff(s, dim);
    let prefactor = (2.0 * PI).powf(-0.5 * n) * r.powf(1.0 - 0.5 * n);
    let first_zero = bessel_j_zero_approx(nu, 1) / r;
    // scale for absolute tolerances: the non-oscillatory integral of the envelope
    let envelope = gamma((0.5 * n + 1.0) / (2.0 * s)) / (2.0 * s);
    let q = Quadrature::new(1e-17 * envelope, 1e-13).with_max_panels(4000);
    if first_zero >= k_max {
        let pts = geometric_breaks(0.0, k_max, 1e-3, 3.0);
        let res = q.integrate_with_breaks(f, &pts);
        if !res.converged {
            return Err(Error::NonConvergence {
                what: format!("fractional heat profile at r = {r}"),
                estimate: res.error,
            });
        }
        return Ok(prefactor * res.value);
    }
    let head_pts = geometric_breaks(0.0, first_zero, 1e-3 * first_zero.min(1.0), 3.0);
    let head = q.integrate_with_breaks(f, &head_pts);
    let mut worst = head.error;
    let mut converged = head.converged;
    let mut partial = head.value;
    let mut sums = Vec::new();
    let mut lo = first_zero;
    let mut m = 1;
    let mut accelerated = None;
    while lo < k_max {
        m += 1;
        let hi = (bessel_j_zero_approx(nu, m) / r).min(k_max * 1.0001);
        let piece = q.integrate(f, lo, hi);
        worst += piece.error;
        converged &= piece.converged;
        partial += piece.value;
        sums.push(partial);
        lo = hi;
        if sums.len() >= 40 && sums.len() % 10 == 0 {
            let window = &sums[sums.len() - 30..];
            let (est, change) = wynn_epsilon(window);
            if change < 1e-15 * est.abs().max(1e-300) + 1e-18 * envelope {
                accelerated = Some(est);
                break;
            }
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            what: format!("fractional heat profile at r = {r}"),
            estimate: worst,
        });
    }
    Ok(prefactor * accelerated.unwrap_or(partial))
}

/// Best available value of the profile at `r`, choosing the representation by its
/// own error estimate.
pub fn fractional_heat_value(s: f64, dim: usize, r: f64) -> Result<f64> {
    if r == 0.0 {
        return Ok(profile_at_origin(s, dim));
    }
    let far = far_series(s, dim, r);
    if far.rel_error < SERIES_TARGET {
        return Ok(far.value);
    }
    let near = near_series(s, dim, r);
    if near.rel_error < SERIES_TARGET {
        return Ok(near.value);
    }
    hankel_quadrature(s, dim, r)
}

#[cfg(test)]
mod tests {
    use super::*;

    // extended-precision values of the inversion integral (quadrature between Bessel
    // zeros, and the inverse-power series where it converges)
    const REFERENCE: &[(f64, usize, f64, f64)] = &[
        (0.25, 2, 0.0, 1.909859317102744),
        (0.25, 2, 0.01, 1.8715787872508314),
        (0.25, 2, 0.1, 0.87518178557213866),
        (0.25, 2, 0.5, 0.10539153973193806),
        (0.25, 2, 1.0, 0.029450952113503081),
        (0.25, 2, 2.0, 0.0071512132219786741),
        (0.25, 2, 5.0, 0.00095199801084321801),
        (0.25, 2, 50.0, 4.1044415899050625e-6),
        (0.25, 2, 200.0, 1.3745721176754282e-7),
        (0.75, 2, 0.0, 0.094748068897354901),
        (0.75, 2, 0.01, 0.094744077986388056),
        (0.75, 2, 0.5, 0.085364425709448126),
        (0.75, 2, 1.0, 0.063184557589447795),
        (0.75, 2, 2.0, 0.022439557829258646),
        (0.75, 2, 5.0, 0.0008802660878791006),
        (0.75, 2, 10.0, 6.183344151308311e-5),
        (0.25, 3, 0.01, 11.592311440627371),
        (0.25, 3, 0.1, 2.7584681845644314),
        (0.25, 3, 1.0, 0.014665727830223273),
        (0.25, 3, 10.0, 1.0610821826442626e-5),
        (0.75, 3, 0.1, 0.033617759846174539),
        (0.75, 3, 2.0, 0.0067031840982486271),
        (0.75, 3, 10.0, 4.4255787560092263e-6),
    ];

    #[test]
    fn matches_reference_values() {
        for &(s, dim, r, want) in REFERENCE {
            let got = fractional_heat_value(s, dim, r).unwrap();
            assert!(((got - want) / want).abs() < 1e-9, "s={s} N={dim} r={r}: {got} vs {want}");
        }
    }

    #[test]
    fn quadrature_agrees_with_series_where_both_apply() {
        for &(s, dim, r) in &[(0.25, 2, 1.0), (0.25, 2, 3.0), (0.75, 2, 0.8), (0.6, 3, 1.5)] {
            let quad = hankel_quadrature(s, dim, r).unwrap();
            let series = fractional_heat_value(s, dim, r).unwrap();
            assert!(((quad - series) / series).abs() < 1e-9, "s={s} r={r}: {quad} vs {series}");
        }
    }

    #[test]
    fn half_order_has_closed_form() {
        // exp(-|xi|) inverts to Gamma((N+1)/2) pi^{-(N+1)/2} (1+r^2)^{-(N+1)/2}
        for dim in [2usize, 3] {
            let n = dim as f64;
            let c = gamma(0.5 * (n + 1.0)) / PI.powf(0.5 * (n + 1.0));
            for r in [0.0f64, 0.3, 1.0, 2.5, 7.0, 40.0] {
                let want = c * (1.0 + r * r).powf(-0.5 * (n + 1.0));
                let got = fractional_heat_value(0.5, dim, r).unwrap();
                assert!(((got - want) / want).abs() < 1e-10, "N={dim} r={r}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn leading_far_coefficient_is_the_limit_constant() {
        for s in [0.2, 0.5, 0.8] {
            let n = 2.0;
            let c = s * 4f64.powf(s) * (s * PI).sin() * gamma(0.5 * n + s) * gamma(s)
                / PI.powf(1.0 + 0.5 * n);
            assert!((far_coefficient(s, 2, 1) - c).abs() < 1e-13 * c);
        }
    }
}
