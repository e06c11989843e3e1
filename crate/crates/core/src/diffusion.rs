//! The diffused signed indicator `u(x, sigma) = K(., sigma) * tau_E (x)`.
//!
//! Two paths: `u_direct` integrates pointwise over spheres around `x`
//! (`u = |S| int q^{N-1} P(q) m(l q) dq` with `m` the spherical mean of `tau_E`
//! and `l = sigma^{1/(2s)}`), and `u_grid` multiplies Fourier coefficients on a
//! periodic box.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::geometry::{BoundaryPoint, GraphProfile, SetShape};
use crate::kernels::{hyperplane_moment, KernelFamily, KernelSpec};
use crate::numerics::quad::{geometric_breaks, Quadrature};
use crate::numerics::special::sphere_area;

/// Inputs of a pointwise evaluation of `u`.
#[derive(Debug, Clone)]
pub struct ConvolutionRequest<'a> {
    pub kernel: &'a KernelSpec,
    pub shape: &'a SetShape,
    /// Time argument of the kernel.
    pub sigma: f64,
    pub x: Vec<f64>,
    /// Absolute error target (|u| <= 1).
    pub tol: f64,
}

pub fn u_direct(req: &ConvolutionRequest) -> Result<f64> {
    diffuse_at(req.kernel, req.shape, req.sigma, &req.x, req.tol)
}

/// `u(x, sigma)` by quadrature over spheres around `x`.
pub fn diffuse_at(kernel: &KernelSpec, shape: &SetShape, sigma: f64, x: &[f64], tol: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return domain(format!("sigma must be positive, got {sigma}"));
    }
    if x.len() != shape.dim() || kernel.dim() != shape.dim() {
        return domain("kernel, shape and point dimensions differ");
    }
    let n = shape.dim();
    let l = kernel.length_scale(sigma);
    let area = sphere_area(n);
    let f = |q: f64| q.powi(n as i32 - 1) * kernel.profile_value(q) * shape.spherical_mean(x, l * q);

    let outer = shape.outer_radius(x).map(|r| r / l);
    let crit: Vec<f64> = shape.critical_radii(x).into_iter().map(|r| r / l).collect();
    let far = match outer {
        Some(q) => q,
        None => {
            let c = crit.iter().cloned().fold(0.0, f64::max);
            (2.0 * c).max(1e3)
        }
    };
    let mut pts = geometric_breaks(0.0, far, 1e-3, 2.0);
    pts.extend(crit.iter().filter(|c| **c < far));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let q = Quadrature::new(0.1 * tol / area, 1e-14).with_max_panels(50_000);
    let head = q.integrate_with_breaks(f, &pts);
    let mut err = head.error;
    let tail = match outer {
        Some(q_out) => -kernel.tail_mass(q_out) / area,
        None => {
            let t = q.integrate_to_infinity(f, far, far);
            err += t.error;
            t.value
        }
    };
    // an exhausted panel budget is acceptable when the error estimate is met
    if !(area * err <= tol) {
        return Err(Error::NonConvergence { what: format!("u_direct at {x:?}"), estimate: area * err });
    }
    Ok((area * (head.value + tail)).clamp(-1.0, 1.0))
}

/// `u` at many points, in parallel, in input order.
pub fn diffuse_batch(
    kernel: &KernelSpec,
    shape: &SetShape,
    sigma: f64,
    points: &[Vec<f64>],
    tol: f64,
) -> Vec<Result<f64>> {
    points.par_iter().map(|x| diffuse_at(kernel, shape, sigma, x, tol)).collect()
}

/// Annotations carried by a grid field.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FieldMeta {
    pub s: Option<f64>,
    pub sigma: Option<f64>,
    pub family: Option<KernelFamily>,
    /// Bound on the periodic wrap-around error of `u` in the central region.
    pub wrap_bound: Option<f64>,
}

/// Samples on the cell centres of the periodic box `[-L/2, L/2)^N`, row-major
/// (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    dim: usize,
    n: usize,
    extent: f64,
    pub values: Vec<f64>,
    pub meta: FieldMeta,
}

impl GridField {
    pub fn new(dim: usize, n: usize, extent: f64) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return Err(Error::Config(format!("grid dimension must be 2 or 3, got {dim}")));
        }
        if !n.is_power_of_two() || n < 4 {
            return Err(Error::Config(format!("points per axis must be a power of two >= 4, got {n}")));
        }
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(Error::Config(format!("box extent must be positive, got {extent}")));
        }
        Ok(Self { dim, n, extent, values: vec![0.0; n.pow(dim as u32)], meta: FieldMeta::default() })
    }

    pub fn constant(dim: usize, n: usize, extent: f64, value: f64) -> Result<Self> {
        let mut g = Self::new(dim, n, extent)?;
        g.values.iter_mut().for_each(|v| *v = value);
        Ok(g)
    }

    /// Exact `tau_E` at the cell centres. Bounded shapes must sit inside the
    /// central half of the box.
    pub fn from_shape(shape: &SetShape, n: usize, extent: f64) -> Result<Self> {
        let mut g = Self::new(shape.dim(), n, extent)?;
        if let Some((c, r)) = shape.bounding_ball() {
            let reach = c.iter().map(|v| v.abs()).fold(0.0, f64::max) + r;
            if reach > 0.25 * extent {
                return Err(Error::Config(format!(
                    "shape reaches {reach} from the centre; the box needs extent >= {}",
                    4.0 * reach
                )));
            }
        }
        let dim = g.dim;
        let (n, h, l) = (g.n, g.spacing(), g.extent);
        g.values.par_iter_mut().enumerate().for_each(|(idx, v)| {
            let x = index_point(idx, dim, n, h, l);
            *v = shape.tau(&x) as f64;
        });
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn spacing(&self) -> f64 {
        self.extent / self.n as f64
    }

    /// Centre of cell `i` along any axis.
    pub fn coord(&self, i: usize) -> f64 {
        -0.5 * self.extent + (i as f64 + 0.5) * self.spacing()
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        index_point(idx, self.dim, self.n, self.spacing(), self.extent)
    }

    pub fn index(&self, cell: &[usize]) -> usize {
        cell.iter().fold(0, |acc, &i| acc * self.n + i)
    }

    /// Measure of `{value > 0}`.
    pub fn positive_measure(&self) -> f64 {
        let count = self.values.iter().filter(|v| **v > 0.0).count();
        count as f64 * self.spacing().powi(self.dim as i32)
    }

    /// Number of neighbouring cell pairs with different signs times the face measure.
    pub fn interface_measure(&self) -> f64 {
        let n = self.n;
        let mut faces = 0usize;
        for idx in 0..self.values.len() {
            let here = self.values[idx] > 0.0;
            let mut stride = 1;
            for _ in 0..self.dim {
                let i = (idx / stride) % n;
                let next = if i + 1 < n { idx + stride } else { idx + stride - n * stride };
                if (self.values[next] > 0.0) != here {
                    faces += 1;
                }
                stride *= n;
            }
        }
        faces as f64 * self.spacing().powi(self.dim as i32 - 1)
    }

    /// Value at the nearest cell centre.
    pub fn nearest(&self, x: &[f64]) -> f64 {
        let h = self.spacing();
        let cell: Vec<usize> = x
            .iter()
            .map(|v| (((v + 0.5 * self.extent) / h).floor() as i64).rem_euclid(self.n as i64) as usize)
            .collect();
        self.values[self.index(&cell)]
    }

    /// Multilinear interpolation between cell centres (periodic).
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let h = self.spacing();
        let n = self.n as i64;
        let mut base = Vec::with_capacity(self.dim);
        let mut frac = Vec::with_capacity(self.dim);
        for v in x {
            let u = (v + 0.5 * self.extent) / h - 0.5;
            let f = u.floor();
            base.push(f as i64);
            frac.push(u - f);
        }
        let mut total = 0.0;
        for corner in 0..(1usize << self.dim) {
            let mut w = 1.0;
            let mut cell = Vec::with_capacity(self.dim);
            for d in 0..self.dim {
                let bit = (corner >> d) & 1;
                w *= if bit == 1 { frac[d] } else { 1.0 - frac[d] };
                cell.push((base[d] + bit as i64).rem_euclid(n) as usize);
            }
            total += w * self.values[self.index(&cell)];
        }
        total
    }

    /// Field with every cell moved by `shift` cells along each axis (periodic).
    pub fn shifted(&self, shift: &[i64]) -> Self {
        let n = self.n as i64;
        let mut out = self.clone();
        for idx in 0..self.values.len() {
            let mut rest = idx;
            let mut cell = vec![0usize; self.dim];
            for d in (0..self.dim).rev() {
                cell[d] = rest % self.n;
                rest /= self.n;
            }
            let moved: Vec<usize> =
                cell.iter().zip(shift).map(|(c, s)| (*c as i64 + s).rem_euclid(n) as usize).collect();
            out.values[self.index(&moved)] = self.values[idx];
        }
        out
    }

    /// `fracflow-field v1` text: one header line, then one value per line.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "none".into());
        writeln!(
            out,
            "fracflow-field v1 dim={} n={} extent={} s={} sigma={} family={} wrap={}",
            self.dim,
            self.n,
            self.extent,
            opt(self.meta.s),
            opt(self.meta.sigma),
            self.meta.family.map(|f| f.tag().to_string()).unwrap_or_else(|| "none".into()),
            opt(self.meta.wrap_bound),
        )?;
        for v in &self.values {
            writeln!(out, "{v}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty field file".into()))??;
        let mut words = header.split_whitespace();
        if words.next() != Some("fracflow-field") || words.next() != Some("v1") {
            return Err(Error::Parse(format!("not a fracflow-field v1 header: {header}")));
        }
        let mut get = std::collections::HashMap::new();
        for w in words {
            let (k, v) = w.split_once('=').ok_or_else(|| Error::Parse(format!("bad header item {w}")))?;
            get.insert(k.to_string(), v.to_string());
        }
        let num = |k: &str| -> Result<Option<f64>> {
            match get.get(k).map(|s| s.as_str()) {
                None | Some("none") => Ok(None),
                Some(v) => v.parse().map(Some).map_err(|_| Error::Parse(format!("bad {k}={v}"))),
            }
        };
        let dim = num("dim")?.ok_or_else(|| Error::Parse("missing dim".into()))? as usize;
        let n = num("n")?.ok_or_else(|| Error::Parse("missing n".into()))? as usize;
        let extent = num("extent")?.ok_or_else(|| Error::Parse("missing extent".into()))?;
        let mut g = Self::new(dim, n, extent).map_err(|e| Error::Parse(e.to_string()))?;
        g.meta.s = num("s")?;
        g.meta.sigma = num("sigma")?;
        g.meta.wrap_bound = num("wrap")?;
        g.meta.family = match get.get("family").map(|s| s.as_str()) {
            None | Some("none") => None,
            Some(t) => Some(KernelFamily::from_tag(t).ok_or_else(|| Error::Parse(format!("unknown family {t}")))?),
        };
        let mut count = 0;
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if count >= g.values.len() {
                return Err(Error::Parse("more values than the header announces".into()));
            }
            g.values[count] = line
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad value {line:?}", i + 2)))?;
            count += 1;
        }
        if count != g.values.len() {
            return Err(Error::Parse(format!("expected {} values, found {count}", g.values.len())));
        }
        Ok(g)
    }

    /// CSV `x,y,value` of the plane `index` along the last axis (3D) or the whole field (2D).
    pub fn write_csv_plane<W: Write>(&self, mut out: W, index: usize) -> Result<()> {
        writeln!(out, "x,y,value")?;
        let n = self.n;
        for i in 0..n {
            for j in 0..n {
                let idx = if self.dim == 2 { i * n + j } else { (i * n + j) * n + index.min(n - 1) };
                writeln!(out, "{},{},{}", self.coord(i), self.coord(j), self.values[idx])?;
            }
        }
        Ok(())
    }
}

fn index_point(idx: usize, dim: usize, n: usize, h: f64, extent: f64) -> Vec<f64> {
    let mut x = vec![0.0; dim];
    let mut rest = idx;
    for d in (0..dim).rev() {
        x[d] = -0.5 * extent + ((rest % n) as f64 + 0.5) * h;
        rest /= n;
    }
    x
}

/// Options for the periodic convolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptions {
    /// Largest accepted wrap-around bound.
    pub wrap_limit: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self { wrap_limit: 1e-3 }
    }
}

/// Bound on `|u_periodic - u|` near the non-background part of the field.
///
/// Always available: twice the kernel mass outside radius `L/4`, valid within
/// `L/4` of the centre. When the field is constant on the outer shell of the box,
/// the error only comes from the periodic copies of the non-background cells; it
/// is then bounded on the ball that holds those cells (plus a margin of `L/16`)
/// by the kernel mass of a covering ball around each image.
pub fn wrap_bound(field: &GridField, kernel: &KernelSpec, sigma: f64) -> f64 {
    let l = kernel.length_scale(sigma);
    let big_l = field.extent;
    let generic = 2.0 * kernel.tail_mass(0.25 * big_l / l);
    match image_bound(field, kernel, sigma) {
        Some(b) => b.min(generic),
        None => generic,
    }
}

fn image_bound(field: &GridField, kernel: &KernelSpec, sigma: f64) -> Option<f64> {
    let (n, dim, big_l) = (field.n, field.dim, field.extent);
    let h = field.spacing();
    let outer = |x: &[f64]| x.iter().any(|v| v.abs() > 0.375 * big_l);
    let mut background = None;
    let mut any_defect = false;
    let mut reach = 0.0f64;
    for (idx, v) in field.values.iter().enumerate() {
        let x = index_point(idx, dim, n, h, big_l);
        let sign = *v > 0.0;
        if outer(&x) {
            match background {
                None => background = Some(sign),
                Some(b) if b != sign => return None,
                _ => {}
            }
        }
    }
    let b = background?;
    for (idx, v) in field.values.iter().enumerate() {
        if (*v > 0.0) != b {
            any_defect = true;
            let x = index_point(idx, dim, n, h, big_l);
            let r = x.iter().map(|c| c * c).sum::<f64>().sqrt() + 0.5 * h * (dim as f64).sqrt();
            reach = reach.max(r);
        }
    }
    if !any_defect {
        return Some(0.0);
    }
    let probe = reach + big_l / 16.0;
    let m: i64 = 6;
    let mut sum = 0.0;
    let mut cell = vec![-m; dim];
    loop {
        let norm = cell.iter().map(|c| (*c as f64).powi(2)).sum::<f64>().sqrt();
        let far = cell.iter().map(|c| c.abs()).max().unwrap_or(0);
        if norm > 0.0 {
            let d = norm * big_l - probe;
            if d <= reach {
                return None;
            }
            if far <= 2 {
                // exact kernel mass of the covering ball seen from the nearest probe point
                let mut centre = vec![0.0; dim];
                centre[0] = d;
                let ball = SetShape::ball_at(centre, reach);
                let u = diffuse_at(kernel, &ball, sigma, &vec![0.0; dim], 1e-12).ok()?;
                sum += 0.5 * (1.0 + u);
            } else {
                let vol = sphere_area(dim) * reach.powi(dim as i32) / dim as f64;
                sum += vol * kernel.eval_radial(d - reach, sigma).ok()?;
            }
        }
        let mut k = 0;
        loop {
            if k == dim {
                break;
            }
            cell[k] += 1;
            if cell[k] <= m {
                break;
            }
            cell[k] = -m;
            k += 1;
        }
        if k == dim {
            break;
        }
    }
    // lattice points beyond the summed block, counted by their volume
    let vol = sphere_area(dim) * reach.powi(dim as i32) / dim as f64;
    let rest_start = (m as f64 + 0.5) * big_l - probe - reach;
    let l = kernel.length_scale(sigma);
    sum += vol * kernel.tail_mass(rest_start / l) / big_l.powi(dim as i32);
    Some(2.0 * sum)
}

/// Periodic convolution of the field with `K(., sigma)` by FFT.
pub fn u_grid(field: &GridField, kernel: &KernelSpec, sigma: f64, opts: GridOptions) -> Result<GridField> {
    if !(sigma > 0.0) {
        return domain(format!("sigma must be positive, got {sigma}"));
    }
    if kernel.dim() != field.dim {
        return domain("kernel and grid dimensions differ");
    }
    let bound = wrap_bound(field, kernel, sigma);
    if bound > opts.wrap_limit {
        let need = required_extent(field, kernel, sigma, opts.wrap_limit);
        return Err(Error::Config(format!(
            "periodic box too small: wrap-around bound {bound:.3e} exceeds {:.1e}; use extent >= {need:.3}",
            opts.wrap_limit
        )));
    }
    let l = kernel.length_scale(sigma);
    let (n, dim) = (field.n, field.dim);
    let dk = 2.0 * PI / field.extent;
    let freq = |i: usize| -> f64 {
        let k = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
        k * dk
    };
    // multiplier values per axis-index combination
    kernel.multiplier(0.0)?;
    let mult: Vec<f64> = (0..field.values.len())
        .into_par_iter()
        .map(|idx| {
            let mut rest = idx;
            let mut k2 = 0.0;
            for _ in 0..dim {
                let f = freq(rest % n);
                k2 += f * f;
                rest /= n;
            }
            kernel.multiplier(l * k2.sqrt()).unwrap_or(0.0)
        })
        .collect();
    let mut data: Vec<Complex64> = field.values.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    fft_nd(&mut data, n, dim, false);
    data.par_iter_mut().zip(mult.par_iter()).for_each(|(c, m)| *c *= *m);
    fft_nd(&mut data, n, dim, true);
    let scale = 1.0 / field.values.len() as f64;
    let mut out = field.clone();
    out.values = data.iter().map(|c| c.re * scale).collect();
    out.meta = FieldMeta {
        s: Some(kernel.s()),
        sigma: Some(sigma),
        family: Some(kernel.family()),
        wrap_bound: Some(bound),
    };
    Ok(out)
}

/// Value of the field on the outer shell `|x|_inf > 3L/8`, when it is constant there.
pub fn shell_background(field: &GridField) -> Option<f64> {
    let (n, dim, big_l) = (field.n, field.dim, field.extent);
    let h = field.spacing();
    let mut background = None;
    for (idx, v) in field.values.iter().enumerate() {
        let x = index_point(idx, dim, n, h, big_l);
        if x.iter().any(|c| c.abs() > 0.375 * big_l) {
            match background {
                None => background = Some(*v),
                Some(b) if b != *v => return None,
                _ => {}
            }
        }
    }
    background
}

/// Free-space convolution of fields that extend their shell value beyond the box.
///
/// The field minus its background is zero-padded to `2n` per axis and convolved
/// with `K(., sigma)` sampled on the padded lattice, so no periodic copies enter.
/// The kernel transform is computed once and reused across calls.
#[derive(Debug, Clone)]
pub struct FreeSpaceConvolver {
    dim: usize,
    n: usize,
    extent: f64,
    sigma: f64,
    kernel_hat: Vec<Complex64>,
    meta: FieldMeta,
}

impl FreeSpaceConvolver {
    pub fn new(kernel: &KernelSpec, sigma: f64, dim: usize, n: usize, extent: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return domain(format!("sigma must be positive, got {sigma}"));
        }
        if kernel.dim() != dim {
            return domain("kernel and grid dimensions differ");
        }
        GridField::new(dim, n, extent)?;
        let m = 2 * n;
        let h = extent / n as f64;
        let cell = h.powi(dim as i32);
        let total = m.pow(dim as u32);
        let samples: Result<Vec<f64>> = (0..total)
            .into_par_iter()
            .map(|idx| {
                let mut rest = idx;
                let mut r2 = 0.0;
                for _ in 0..dim {
                    let j = rest % m;
                    let off = if j < n { j as f64 } else { j as f64 - m as f64 };
                    r2 += (off * h).powi(2);
                    rest /= m;
                }
                Ok(kernel.eval_radial(r2.sqrt(), sigma)? * cell)
            })
            .collect();
        let mut kernel_hat: Vec<Complex64> = samples?.into_iter().map(|v| Complex64::new(v, 0.0)).collect();
        fft_nd(&mut kernel_hat, m, dim, false);
        let meta = FieldMeta { s: Some(kernel.s()), sigma: Some(sigma), family: Some(kernel.family()), wrap_bound: Some(0.0) };
        Ok(Self { dim, n, extent, sigma, kernel_hat, meta })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `u` on the grid of `field`; refuses fields that are not constant near the box edge.
    pub fn apply(&self, field: &GridField) -> Result<GridField> {
        if field.dim != self.dim || field.n != self.n || field.extent != self.extent {
            return domain("field grid differs from the convolver grid");
        }
        let bg = shell_background(field).ok_or_else(|| {
            Error::Config("free-space convolution needs a field that is constant for |x|_inf > 3L/8".into())
        })?;
        let (n, m, dim) = (self.n, 2 * self.n, self.dim);
        let mut data = vec![Complex64::new(0.0, 0.0); m.pow(dim as u32)];
        let padded = |idx: usize| -> usize {
            let mut rest = idx;
            let mut out = 0;
            let mut stride = 1;
            for _ in 0..dim {
                out += (rest % n) * stride;
                rest /= n;
                stride *= m;
            }
            out
        };
        for (idx, v) in field.values.iter().enumerate() {
            data[padded(idx)] = Complex64::new(v - bg, 0.0);
        }
        fft_nd(&mut data, m, dim, false);
        data.par_iter_mut().zip(self.kernel_hat.par_iter()).for_each(|(c, k)| *c *= *k);
        fft_nd(&mut data, m, dim, true);
        let scale = 1.0 / data.len() as f64;
        let mut out = field.clone();
        for (idx, v) in out.values.iter_mut().enumerate() {
            *v = bg + data[padded(idx)].re * scale;
        }
        out.meta = self.meta.clone();
        Ok(out)
    }
}

fn required_extent(field: &GridField, kernel: &KernelSpec, sigma: f64, limit: f64) -> f64 {
    let mut extent = field.extent;
    for _ in 0..40 {
        extent *= 1.25;
        let probe = GridField { extent, ..field.clone() };
        // cell contents are kept; only distances between images grow
        let scaled = GridField { values: probe.values.clone(), ..probe };
        if wrap_bound(&scaled, kernel, sigma) <= limit {
            return extent;
        }
    }
    extent
}

/// In-place N-dimensional FFT (unnormalized) over a row-major cube.
fn fft_nd(data: &mut [Complex64], n: usize, dim: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    let total = data.len();
    let mut stride = 1;
    for _ in 0..dim {
        let block = stride * n;
        let fft = &fft;
        // each block holds `stride` interleaved lines of length n
        data.par_chunks_mut(block).for_each(|chunk| {
            let mut line = vec![Complex64::new(0.0, 0.0); n];
            for off in 0..stride {
                for (i, c) in line.iter_mut().enumerate() {
                    *c = chunk[off + i * stride];
                }
                fft.process(&mut line);
                for (i, c) in line.iter().enumerate() {
                    chunk[off + i * stride] = *c;
                }
            }
        });
        stride = block;
        debug_assert!(stride <= total);
    }
}

/// Directional derivatives of `u` along the normal at probes around a boundary point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeReport {
    pub sigma: f64,
    pub length_scale: f64,
    /// `(offset along normal, offset along first tangent, slope)` in units of the length scale.
    pub probes: Vec<(f64, f64, f64)>,
    pub min_slope: f64,
    /// `min_slope * length_scale`.
    pub scaled_min_slope: f64,
    pub pass: bool,
}

const PROBE_OFFSETS: [(f64, f64); 11] = [
    (0.0, 0.0),
    (0.5, 0.0),
    (-0.5, 0.0),
    (0.9, 0.0),
    (-0.9, 0.0),
    (0.0, 0.5),
    (0.0, -0.5),
    (0.0, 0.9),
    (0.6, 0.6),
    (-0.6, 0.6),
    (-0.6, -0.6),
];

/// Finite-difference derivative of `u` along `nu(p)` at probes inside `B(p, l)`.
pub fn normal_derivative_check(
    shape: &SetShape,
    kernel: &KernelSpec,
    sigma: f64,
    p: &BoundaryPoint,
) -> Result<SlopeReport> {
    let l = kernel.length_scale(sigma);
    let step = 1e-3 * l;
    let tol = 1e-11;
    let probes: Vec<(f64, f64, f64)> = PROBE_OFFSETS
        .par_iter()
        .map(|&(a, b)| {
            let mut yp = vec![0.0; shape.dim() - 1];
            yp[0] = b * l;
            let at = |d: f64| diffuse_at(kernel, shape, sigma, &p.to_ambient(&yp, a * l + d), tol);
            let slope = (at(step)? - at(-step)?) / (2.0 * step);
            Ok((a, b, slope))
        })
        .collect::<Result<_>>()?;
    let min_slope = probes.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
    Ok(SlopeReport {
        sigma,
        length_scale: l,
        probes,
        min_slope,
        scaled_min_slope: min_slope * l,
        pass: min_slope > 0.0,
    })
}

/// Slope checks over a sigma ladder (given in decreasing order).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeLadder {
    pub reports: Vec<SlopeReport>,
    /// Scaled slopes do not decrease as sigma decreases.
    pub non_decreasing: bool,
    pub pass: bool,
}

pub fn normal_derivative_ladder(
    shape: &SetShape,
    kernel: &KernelSpec,
    sigmas: &[f64],
    p: &BoundaryPoint,
) -> Result<SlopeLadder> {
    let reports: Vec<SlopeReport> =
        sigmas.iter().map(|&s| normal_derivative_check(shape, kernel, s, p)).collect::<Result<_>>()?;
    let non_decreasing = reports.windows(2).all(|w| w[1].scaled_min_slope >= w[0].scaled_min_slope);
    let pass = non_decreasing && reports.iter().all(|r| r.pass);
    Ok(SlopeLadder { reports, non_decreasing, pass })
}

/// `du/dnu` on a flat interface: `2 int_{R^{N-1}} K((y', 0), sigma) dy'`.
pub fn flat_interface_slope(kernel: &KernelSpec, sigma: f64) -> f64 {
    let l = kernel.length_scale(sigma);
    2.0 * hyperplane_moment(kernel, 0.0, 0.0, f64::INFINITY) / l
}

/// Kernel mass of `tau_E` over the cylinder `|y'| < r, |y_N| < r` for a planar
/// graph set: `-2 int_{|y'|<r} int_0^{gamma(y')} K(y, t) dy_N dy'`.
pub fn cylinder_integral(kernel: &KernelSpec, profile: GraphProfile, r: f64, t: f64) -> Result<f64> {
    if kernel.dim() != 2 {
        return domain("the cylinder integral is implemented for planar graphs");
    }
    if !(t > 0.0) {
        return domain("t must be positive");
    }
    let l = kernel.length_scale(t);
    if profile.value(r) >= r {
        return domain("the graph leaves the cylinder; decrease r");
    }
    let inner = |u: f64| {
        let g = profile.value(u);
        let f = |v: f64| kernel.eval_radial((u * u + v * v).sqrt(), t).unwrap_or(0.0);
        let brk = geometric_breaks(0.0, g, l.min(g), 4.0);
        Quadrature::new(0.0, 1e-12).integrate_with_breaks(f, &brk).value
    };
    let pts = geometric_breaks(0.0, r, 1e-3 * l, 2.0);
    let outer = Quadrature::new(0.0, 1e-10).with_max_panels(20_000).integrate_with_breaks(inner, &pts);
    if !outer.converged {
        return Err(Error::NonConvergence { what: "cylinder integral".into(), estimate: outer.error });
    }
    Ok(-4.0 * outer.value)
}

/// `int_{outside the cylinder} (K(y, t)/t - C |y|^{-N-2s}) tau_E(y) dy` for a planar graph set.
pub fn exterior_remainder(kernel: &KernelSpec, shape: &SetShape, r: f64, t: f64) -> Result<f64> {
    if shape.dim() != 2 || kernel.dim() != 2 {
        return domain("the exterior remainder is implemented in the plane");
    }
    if !(t > 0.0) {
        return domain("t must be positive");
    }
    let s = kernel.s();
    let c = kernel.limit_constant();
    let origin = [0.0, 0.0];
    let weight = |rho: f64| -> f64 {
        let k = kernel.eval_radial(rho, t).unwrap_or(0.0) / t;
        k - c * rho.powf(-2.0 - 2.0 * s)
    };
    // angular integral of tau over the part of the circle outside the square
    let angular = |rho: f64| -> f64 {
        let mut cuts = shape.circle_crossings(&origin, rho);
        if rho > r {
            let a = (r / rho).min(1.0).acos();
            let b = (r / rho).min(1.0).asin();
            for th in [a, -a, PI - a, PI + a, b, PI - b, PI + b, -b] {
                cuts.push(th.rem_euclid(2.0 * PI));
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        if cuts.is_empty() {
            cuts.push(0.0);
        }
        let k = cuts.len();
        let mut total = 0.0;
        for i in 0..k {
            let a = cuts[i];
            let b = if i + 1 < k { cuts[i + 1] } else { cuts[0] + 2.0 * PI };
            let m = 0.5 * (a + b);
            let y = [rho * m.cos(), rho * m.sin()];
            if y[0].abs() >= r || y[1].abs() >= r {
                total += shape.tau(&y) as f64 * (b - a);
            }
        }
        total
    };
    let corner = r * 2f64.sqrt();
    let f = |rho: f64| weight(rho) * rho * angular(rho);
    let q = Quadrature::new(0.0, 1e-9).with_max_panels(20_000);
    let near = q.integrate_with_breaks(f, &[r, 0.5 * (r + corner), corner]);
    let mid_end = 100.0 * corner;
    let mid = q.integrate_with_breaks(f, &geometric_breaks(corner, mid_end, 2.0 * corner, 2.0));
    let far = q.integrate_to_infinity(f, mid_end, mid_end);
    if !(near.converged && mid.converged && far.converged) {
        return Err(Error::NonConvergence {
            what: "exterior remainder".into(),
            estimate: near.error + mid.error + far.error,
        });
    }
    Ok(near.value + mid.value + far.value)
}
