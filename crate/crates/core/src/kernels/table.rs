//! Tabulated fractional heat profile with a spline interior and a series tail.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::spline::CubicSpline;

use super::heat::{far_coefficient, far_magnitude, fractional_heat_value};
use super::profile::{eval_tail, TailTerm};
use super::KernelFamily;

/// Build parameters for a fractional heat table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableOptions {
    pub r_max: f64,
    pub n_points: usize,
    /// Smallest positive radius; the grid is log-spaced from here to `r_max`.
    pub r_min: f64,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self { r_max: 1e3, n_points: 2048, r_min: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct RadialTable {
    s: f64,
    dim: usize,
    family: KernelFamily,
    radii: Vec<f64>,
    values: Vec<f64>,
    tail_exponent: f64,
    tail: Vec<TailTerm>,
    splice_mismatch: f64,
    log_spline: CubicSpline,
}

impl RadialTable {
    /// Assembles a table from samples at `0 = r_0 < r_1 < ... < r_max`.
    pub fn from_samples(
        s: f64,
        dim: usize,
        family: KernelFamily,
        radii: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if radii.len() != values.len() || radii.len() < 8 {
            return Err(Error::Parse("table needs at least 8 matching samples".into()));
        }
        if radii[0] != 0.0 || !radii.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::Parse("radii must start at 0 and increase strictly".into()));
        }
        if let Some(i) = values.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Parse(format!("non-positive profile value at r = {}", radii[i])));
        }
        let r_max = *radii.last().unwrap();
        let raw_tail = tail_series(s, dim, r_max);
        let tail_at_end = eval_tail(&raw_tail, r_max);
        let p_end = *values.last().unwrap();
        let (tail, splice_mismatch) = if tail_at_end > 0.0 {
            let scale = p_end / tail_at_end;
            let tail = raw_tail
                .iter()
                .map(|t| TailTerm { coef: t.coef * scale, exponent: t.exponent })
                .collect();
            (tail, (scale - 1.0).abs())
        } else {
            // fall back to the leading power matched at r_max
            let e = dim as f64 + 2.0 * s;
            (vec![TailTerm { coef: p_end * r_max.powf(e), exponent: e }], f64::INFINITY)
        };
        let log_r: Vec<f64> = radii[1..].iter().map(|r| r.ln()).collect();
        let log_p: Vec<f64> = values[1..].iter().map(|p| p.ln()).collect();
        Ok(Self {
            s,
            dim,
            family,
            tail_exponent: dim as f64 + 2.0 * s,
            radii,
            values,
            tail,
            splice_mismatch,
            log_spline: CubicSpline::natural(log_r, log_p),
        })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn r_max(&self) -> f64 {
        *self.radii.last().unwrap()
    }

    pub fn tail_exponent(&self) -> f64 {
        self.tail_exponent
    }

    pub fn tail_terms(&self) -> &[TailTerm] {
        &self.tail
    }

    /// Relative jump between the tabulated value at `r_max` and the raw series tail.
    pub fn splice_mismatch(&self) -> f64 {
        self.splice_mismatch
    }

    pub fn eval(&self, r: f64) -> f64 {
        let r = r.abs();
        let r1 = self.radii[1];
        if r < r1 {
            // even in r near the origin
            let p0 = self.values[0];
            return p0 + (self.values[1] - p0) * (r / r1).powi(2);
        }
        if r > self.r_max() {
            return eval_tail(&self.tail, r);
        }
        self.log_spline.eval(r.ln()).exp()
    }

    pub fn derivative(&self, r: f64) -> f64 {
        let r = r.abs();
        let r1 = self.radii[1];
        if r < r1 {
            return 2.0 * (self.values[1] - self.values[0]) * r / (r1 * r1);
        }
        if r > self.r_max() {
            return self.tail.iter().map(|t| -t.exponent * t.coef * r.powf(-t.exponent - 1.0)).sum();
        }
        let lr = r.ln();
        self.log_spline.eval(lr).exp() * self.log_spline.derivative(lr) / r
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::with_capacity(48 * self.radii.len());
        writeln!(
            buf,
            "fracflow-kernel v1 s={} N={} family={}",
            self.s,
            self.dim,
            self.family.tag()
        )
        .unwrap();
        for (r, v) in self.radii.iter().zip(&self.values) {
            writeln!(buf, "{r:.17e} {v:.17e}").unwrap();
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty kernel table".into()))??;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("fracflow-kernel") || fields.next() != Some("v1") {
            return Err(Error::Parse(format!("unrecognized kernel table header: {header}")));
        }
        let (mut s, mut dim, mut family) = (None, None, None);
        for f in fields {
            match f.split_once('=') {
                Some(("s", v)) => s = v.parse::<f64>().ok(),
                Some(("N", v)) => dim = v.parse::<usize>().ok(),
                Some(("family", v)) => family = KernelFamily::from_tag(v),
                _ => return Err(Error::Parse(format!("unexpected header field {f}"))),
            }
        }
        let (s, dim, family) = match (s, dim, family) {
            (Some(s), Some(d), Some(f)) => (s, d, f),
            _ => return Err(Error::Parse(format!("incomplete kernel table header: {header}"))),
        };
        let mut radii = Vec::new();
        let mut values = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let parse = |x: Option<&str>| {
                x.and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse(format!("bad kernel table line {}: {line}", i + 2)))
            };
            radii.push(parse(it.next())?);
            values.push(parse(it.next())?);
        }
        Self::from_samples(s, dim, family, radii, values)
    }
}

/// Expansion at infinity for the fractional heat profile, truncated where it stops
/// improving at `r_from`.
fn tail_series(s: f64, dim: usize, r_from: f64) -> Vec<TailTerm> {
    let n = dim as f64;
    let mut terms = Vec::new();
    let mut last = f64::INFINITY;
    for k in 1..400 {
        let c = far_coefficient(s, dim, k);
        let e = n + 2.0 * k as f64 * s;
        // magnitude without the sine so vanishing terms do not end the loop early
        let mag = far_magnitude(s, dim, k) * r_from.powf(-e);
        let lead = terms.first().map(|t: &TailTerm| t.coef.abs() * r_from.powf(-t.exponent));
        if s >= 0.5 && mag > last {
            break;
        }
        last = mag;
        if c.is_finite() && c != 0.0 {
            terms.push(TailTerm { coef: c, exponent: e });
        }
        if let Some(l) = lead {
            if mag < 1e-18 * l {
                break;
            }
        }
    }
    terms
}

/// Tabulates the fractional heat profile on `0` plus a log-spaced grid.
pub fn build_fractional_heat_profile(
    s: f64,
    dim: usize,
    r_max: f64,
    n_points: usize,
) -> Result<RadialTable> {
    build_with_options(s, dim, TableOptions { r_max, n_points, ..TableOptions::default() })
}

pub fn build_with_options(s: f64, dim: usize, opts: TableOptions) -> Result<RadialTable> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Domain(format!("fractional order s = {s} outside (0, 1)")));
    }
    if dim < 2 {
        return Err(Error::Domain(format!("dimension {dim} below 2")));
    }
    if !(opts.r_max > opts.r_min && opts.r_min > 0.0) || opts.n_points < 64 {
        return Err(Error::Domain("table needs r_max > r_min > 0 and at least 64 points".into()));
    }
    let m = opts.n_points - 1;
    let ratio = (opts.r_max / opts.r_min).ln() / (m - 1) as f64;
    let mut radii = vec![0.0];
    radii.extend((0..m).map(|i| {
        if i == m - 1 {
            opts.r_max
        } else {
            opts.r_min * (ratio * i as f64).exp()
        }
    }));
    let values: Vec<f64> = radii
        .par_iter()
        .map(|&r| fractional_heat_value(s, dim, r))
        .collect::<Result<_>>()?;
    RadialTable::from_samples(s, dim, KernelFamily::FractionalHeat, radii, values)
}
