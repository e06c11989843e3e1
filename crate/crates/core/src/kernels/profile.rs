//! Radial profiles and their moments.

use std::sync::Arc;

use crate::numerics::quad::Quadrature;

use super::table::RadialTable;

/// One term `coef * r^{-exponent}` of a profile's expansion at infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailTerm {
    pub coef: f64,
    pub exponent: f64,
}

pub(crate) fn eval_tail(terms: &[TailTerm], r: f64) -> f64 {
    terms.iter().map(|t| t.coef * r.powf(-t.exponent)).sum()
}

/// Radial profile `P(r)` of a kernel at unit time.
#[derive(Debug, Clone)]
pub enum Profile {
    /// `amplitude * (1 + r^2)^{-decay}`
    Algebraic { amplitude: f64, decay: f64 },
    Tabulated(Arc<RadialTable>),
}

/// Start of the binomial tail expansion for algebraic profiles.
const ALGEBRAIC_TAIL_FROM: f64 = 10.0;

impl Profile {
    pub fn value(&self, r: f64) -> f64 {
        match self {
            Profile::Algebraic { amplitude, decay } => amplitude * (1.0 + r * r).powf(-decay),
            Profile::Tabulated(t) => t.eval(r),
        }
    }

    pub fn derivative(&self, r: f64) -> f64 {
        match self {
            Profile::Algebraic { amplitude, decay } => {
                -2.0 * decay * r * amplitude * (1.0 + r * r).powf(-decay - 1.0)
            }
            Profile::Tabulated(t) => t.derivative(r),
        }
    }

    /// Radius from which `tail_terms` represent the profile to double precision.
    pub fn tail_start(&self) -> f64 {
        match self {
            Profile::Algebraic { .. } => ALGEBRAIC_TAIL_FROM,
            Profile::Tabulated(t) => t.r_max(),
        }
    }

    pub fn tail_terms(&self) -> Vec<TailTerm> {
        match self {
            Profile::Algebraic { amplitude, decay } => {
                // (1+r^2)^{-d} = r^{-2d} sum_j binom(-d, j) r^{-2j}
                let mut terms = Vec::new();
                let mut coef = *amplitude;
                let r2 = ALGEBRAIC_TAIL_FROM * ALGEBRAIC_TAIL_FROM;
                for j in 0..60 {
                    let jf = j as f64;
                    terms.push(TailTerm { coef, exponent: 2.0 * decay + 2.0 * jf });
                    if (coef * r2.powf(-jf)).abs() < 1e-19 * amplitude.abs() {
                        break;
                    }
                    coef *= -(decay + jf) / (jf + 1.0);
                }
                terms
            }
            Profile::Tabulated(t) => t.tail_terms().to_vec(),
        }
    }

    /// `int_a^b q^power P(q) dq`, with `b = f64::INFINITY` allowed; returns infinity
    /// when the moment diverges.
    pub fn radial_moment(&self, power: f64, a: f64, b: f64) -> f64 {
        assert!(a >= 0.0 && b >= a);
        if a == b {
            return 0.0;
        }
        let r_tail = self.tail_start();
        let mut total = 0.0;
        let head_end = b.min(r_tail);
        if a < head_end {
            let f = |q: f64| q.powf(power) * self.value(q);
            let pts = moment_breaks(a, head_end);
            let q = Quadrature::new(1e-15, 1e-13).with_max_panels(20_000);
            total += q.integrate_with_breaks(f, &pts).value;
        }
        if b > r_tail {
            let lo = a.max(r_tail);
            for term in self.tail_terms() {
                let e = term.exponent - power - 1.0;
                if b.is_infinite() {
                    if e <= 0.0 {
                        return f64::INFINITY;
                    }
                    total += term.coef * lo.powf(-e) / e;
                } else if e == 0.0 {
                    total += term.coef * (b / lo).ln();
                } else {
                    total += term.coef * (lo.powf(-e) - b.powf(-e)) / e;
                }
            }
        }
        total
    }
}

/// Breakpoints for moment quadrature: dense near the origin, geometric outward.
pub(crate) fn moment_breaks(a: f64, b: f64) -> Vec<f64> {
    let mut pts = vec![a];
    let mut x = if a > 0.0 { a * 2.0 } else { 1e-3 };
    if a == 0.0 {
        for &p in &[1e-6, 1e-5, 1e-4] {
            if p < b {
                pts.push(p);
            }
        }
    }
    while x < b {
        pts.push(x);
        x *= 2.0;
    }
    pts.push(b);
    pts.dedup();
    pts
}
