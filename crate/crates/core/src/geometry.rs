//! Test sets, their signed indicators, boundary frames and curvatures.
//!
//! Every integral against the signed indicator is organized by spheres around the
//! evaluation point: `spherical_mean(x, rho)` is the average of `tau_E` over the
//! sphere of radius `rho` about `x`. For balls and half-spaces it is a closed-form
//! cap fraction; planar ellipses and graphs locate the circle crossings numerically.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::numerics::quad::Quadrature;
use crate::numerics::roots::brent;
use crate::numerics::special::{signed_cap_mean, sphere_area};

/// Profile of a graph set `E = {x_N > gamma(x')}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum GraphProfile {
    /// `gamma(y') = coef |y'|^exponent`, `exponent > 1`.
    Power { coef: f64, exponent: f64 },
    /// `gamma(y') = curvature |y'|^2 / 2`.
    Quadratic { curvature: f64 },
}

impl GraphProfile {
    pub fn value(&self, r: f64) -> f64 {
        match *self {
            GraphProfile::Power { coef, exponent } => coef * r.abs().powf(exponent),
            GraphProfile::Quadratic { curvature } => 0.5 * curvature * r * r,
        }
    }

    /// Derivative of the one-variable profile `u -> gamma(u)` (planar graphs).
    pub fn slope(&self, u: f64) -> f64 {
        match *self {
            GraphProfile::Power { coef, exponent } => {
                coef * exponent * u.abs().powf(exponent - 1.0) * u.signum()
            }
            GraphProfile::Quadratic { curvature } => curvature * u,
        }
    }
}

/// JSON form of a shape, e.g. `{"kind":"ball","radius":1.0,"dim":2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ShapeDescriptor {
    HalfSpace {
        dim: usize,
        /// Direction pointing into the set; defaults to `e_N`.
        #[serde(default)]
        normal: Option<Vec<f64>>,
        #[serde(default)]
        offset: f64,
    },
    Ball {
        dim: usize,
        radius: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    Ellipse {
        #[serde(default = "two")]
        dim: usize,
        a: f64,
        b: f64,
        #[serde(default)]
        center: Option<[f64; 2]>,
    },
    Graph {
        #[serde(default = "two")]
        dim: usize,
        profile: GraphProfile,
    },
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    HalfSpace { normal: Vec<f64>, offset: f64 },
    Ball { center: Vec<f64>, radius: f64 },
    Ellipse { center: [f64; 2], a: f64, b: f64 },
    Graph { profile: GraphProfile },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetShape {
    kind: Kind,
    dim: usize,
    descriptor: ShapeDescriptor,
}

/// A point of the boundary with the frame in which the set is locally a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPoint {
    pub id: String,
    pub position: Vec<f64>,
    /// `(-grad gamma, 1) / sqrt(1 + |grad gamma|^2)` at the origin of the local frame.
    pub normal: Vec<f64>,
    /// Orthonormal tangent vectors completing the frame.
    pub tangents: Vec<Vec<f64>>,
    /// Radius of the cylinder over which the local graph is used.
    pub graph_radius: f64,
}

impl BoundaryPoint {
    /// `position + offset * normal`.
    pub fn along_normal(&self, offset: f64) -> Vec<f64> {
        self.position.iter().zip(&self.normal).map(|(p, n)| p + offset * n).collect()
    }

    /// Maps frame coordinates `(y', y_N)` to ambient coordinates.
    pub fn to_ambient(&self, y_prime: &[f64], y_n: f64) -> Vec<f64> {
        let mut x = self.along_normal(y_n);
        for (c, t) in y_prime.iter().zip(&self.tangents) {
            for (xi, ti) in x.iter_mut().zip(t) {
                *xi += c * ti;
            }
        }
        x
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Completes a unit vector to an orthonormal basis (tangents first).
fn tangent_basis(normal: &[f64]) -> Vec<Vec<f64>> {
    let n = normal.len();
    let mut basis: Vec<Vec<f64>> = vec![normal.to_vec()];
    if n == 2 {
        // fixed orientation: (n_y, -n_x) so that (tangent, normal) is right-handed
        return vec![vec![normal[1], -normal[0]]];
    }
    for k in 0..n {
        if basis.len() == n {
            break;
        }
        let mut v = vec![0.0; n];
        v[k] = 1.0;
        for b in &basis {
            let c = dot(&v, b);
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= c * bi;
            }
        }
        let l = norm(&v);
        if l > 1e-8 {
            basis.push(v.iter().map(|x| x / l).collect());
        }
    }
    basis.split_off(1)
}

impl SetShape {
    pub fn from_descriptor(d: &ShapeDescriptor) -> Result<Self> {
        let (kind, dim) = match d.clone() {
            ShapeDescriptor::HalfSpace { dim, normal, offset } => {
                check_dim(dim)?;
                let normal = normal.unwrap_or_else(|| {
                    let mut e = vec![0.0; dim];
                    e[dim - 1] = 1.0;
                    e
                });
                if normal.len() != dim || !(norm(&normal) > 0.0) {
                    return Err(Error::Config("half-space normal must be a nonzero vector of length dim".into()));
                }
                let l = norm(&normal);
                (Kind::HalfSpace { normal: normal.iter().map(|x| x / l).collect(), offset }, dim)
            }
            ShapeDescriptor::Ball { dim, radius, center } => {
                check_dim(dim)?;
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(Error::Config(format!("ball radius must be positive, got {radius}")));
                }
                let center = center.unwrap_or_else(|| vec![0.0; dim]);
                if center.len() != dim {
                    return Err(Error::Config("ball center length differs from dim".into()));
                }
                (Kind::Ball { center, radius }, dim)
            }
            ShapeDescriptor::Ellipse { dim, a, b, center } => {
                if dim != 2 {
                    return Err(Error::Config("ellipses are planar (dim = 2)".into()));
                }
                if !(a > 0.0 && b > 0.0) {
                    return Err(Error::Config("ellipse semi-axes must be positive".into()));
                }
                (Kind::Ellipse { center: center.unwrap_or([0.0, 0.0]), a, b }, 2)
            }
            ShapeDescriptor::Graph { dim, profile } => {
                if dim != 2 {
                    return Err(Error::Config("graph sets are supported in the plane (dim = 2)".into()));
                }
                if let GraphProfile::Power { exponent, .. } = profile {
                    if !(exponent > 1.0) {
                        return Err(Error::Config("graph power must exceed 1 (C^1 boundary)".into()));
                    }
                }
                (Kind::Graph { profile }, 2)
            }
        };
        Ok(Self { kind, dim, descriptor: d.clone() })
    }

    pub fn ball(dim: usize, radius: f64) -> Self {
        Self::from_descriptor(&ShapeDescriptor::Ball { dim, radius, center: None }).expect("valid ball")
    }

    pub fn ball_at(center: Vec<f64>, radius: f64) -> Self {
        Self::from_descriptor(&ShapeDescriptor::Ball { dim: center.len(), radius, center: Some(center) })
            .expect("valid ball")
    }

    /// `{x_N > 0}`.
    pub fn half_space(dim: usize) -> Self {
        Self::from_descriptor(&ShapeDescriptor::HalfSpace { dim, normal: None, offset: 0.0 })
            .expect("valid half-space")
    }

    pub fn ellipse(a: f64, b: f64) -> Self {
        Self::from_descriptor(&ShapeDescriptor::Ellipse { dim: 2, a, b, center: None }).expect("valid ellipse")
    }

    pub fn graph(profile: GraphProfile) -> Self {
        Self::from_descriptor(&ShapeDescriptor::Graph { dim: 2, profile }).expect("valid graph")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn descriptor(&self) -> &ShapeDescriptor {
        &self.descriptor
    }

    /// Short identifier used in reports.
    pub fn label(&self) -> String {
        match &self.kind {
            Kind::HalfSpace { .. } => "half-space".into(),
            Kind::Ball { radius, .. } => format!("ball(R={radius})"),
            Kind::Ellipse { a, b, .. } => format!("ellipse(a={a},b={b})"),
            Kind::Graph { profile } => match profile {
                GraphProfile::Power { coef, exponent } => format!("graph({coef}|y|^{exponent})"),
                GraphProfile::Quadratic { curvature } => format!("graph(k={curvature})"),
            },
        }
    }

    /// Shape shifted by `v`.
    pub fn translated(&self, v: &[f64]) -> Result<Self> {
        let d = match self.descriptor.clone() {
            ShapeDescriptor::HalfSpace { dim, .. } => {
                let Kind::HalfSpace { normal, offset } = &self.kind else { unreachable!() };
                ShapeDescriptor::HalfSpace { dim, normal: Some(normal.clone()), offset: offset + dot(normal, v) }
            }
            ShapeDescriptor::Ball { dim, radius, .. } => {
                let Kind::Ball { center, .. } = &self.kind else { unreachable!() };
                ShapeDescriptor::Ball { dim, radius, center: Some(center.iter().zip(v).map(|(c, t)| c + t).collect()) }
            }
            ShapeDescriptor::Ellipse { dim, a, b, .. } => {
                let Kind::Ellipse { center, .. } = &self.kind else { unreachable!() };
                ShapeDescriptor::Ellipse { dim, a, b, center: Some([center[0] + v[0], center[1] + v[1]]) }
            }
            ShapeDescriptor::Graph { .. } => return domain("graph sets are anchored at the origin"),
        };
        Self::from_descriptor(&d)
    }

    /// Level function: positive inside, negative outside, zero on the boundary.
    pub fn level(&self, x: &[f64]) -> f64 {
        match &self.kind {
            Kind::HalfSpace { normal, offset } => dot(x, normal) - offset,
            Kind::Ball { center, radius } => radius - norm(&sub(x, center)),
            Kind::Ellipse { center, a, b } => {
                let (u, v) = ((x[0] - center[0]) / a, (x[1] - center[1]) / b);
                1.0 - u * u - v * v
            }
            Kind::Graph { profile } => x[1] - profile.value(x[0]),
        }
    }

    /// Gradient of the level function (planar shapes).
    fn level_gradient_2d(&self, x: &[f64]) -> [f64; 2] {
        match &self.kind {
            Kind::Ellipse { center, a, b } => {
                [-2.0 * (x[0] - center[0]) / (a * a), -2.0 * (x[1] - center[1]) / (b * b)]
            }
            Kind::Graph { profile } => [-profile.slope(x[0]), 1.0],
            Kind::HalfSpace { normal, .. } => [normal[0], normal[1]],
            Kind::Ball { center, .. } => {
                let d = sub(x, center);
                let l = norm(&d).max(f64::MIN_POSITIVE);
                [-d[0] / l, -d[1] / l]
            }
        }
    }

    /// `tau_E(x) = 1_E - 1_{complement of closure}`, zero on exact boundary hits.
    pub fn tau(&self, x: &[f64]) -> i8 {
        let l = self.level(x);
        if l > 0.0 {
            1
        } else if l < 0.0 {
            -1
        } else {
            0
        }
    }

    /// Ball `(center, radius)` containing the set, if bounded.
    pub fn bounding_ball(&self) -> Option<(Vec<f64>, f64)> {
        match &self.kind {
            Kind::Ball { center, radius } => Some((center.clone(), *radius)),
            Kind::Ellipse { center, a, b } => Some((center.to_vec(), a.max(*b))),
            _ => None,
        }
    }

    pub fn diameter(&self) -> Option<f64> {
        self.bounding_ball().map(|(_, r)| 2.0 * r)
    }

    /// Lebesgue measure of the set, if bounded.
    pub fn volume(&self) -> Option<f64> {
        match &self.kind {
            Kind::Ball { radius, .. } => {
                Some(sphere_area(self.dim) * radius.powi(self.dim as i32) / self.dim as f64)
            }
            Kind::Ellipse { a, b, .. } => Some(PI * a * b),
            _ => None,
        }
    }

    /// Radius beyond which the sphere about `x` lies outside the set.
    pub fn outer_radius(&self, x: &[f64]) -> Option<f64> {
        self.bounding_ball().map(|(c, r)| norm(&sub(x, &c)) + r)
    }

    /// Average of `tau_E` over the sphere of radius `rho` about `x`.
    pub fn spherical_mean(&self, x: &[f64], rho: f64) -> f64 {
        if rho <= 0.0 {
            return self.tau(x) as f64;
        }
        match &self.kind {
            Kind::HalfSpace { normal, offset } => {
                let d = dot(x, normal) - offset;
                signed_cap_mean(self.dim, d / rho)
            }
            Kind::Ball { center, radius } => {
                let d = norm(&sub(x, center));
                if d == 0.0 {
                    return if rho < *radius { 1.0 } else { -1.0 };
                }
                let kappa = ((radius - d) * (radius + d) - rho * rho) / (2.0 * rho * d);
                signed_cap_mean(self.dim, kappa)
            }
            Kind::Ellipse { .. } | Kind::Graph { .. } => self.circle_mean(x, rho),
        }
    }

    /// Planar spherical mean from the crossings of the circle with the boundary.
    fn circle_mean(&self, x: &[f64], rho: f64) -> f64 {
        let roots = self.circle_crossings(x, rho);
        let f = |th: f64| self.level_on_circle(x, rho, th);
        if roots.is_empty() {
            return if f(0.0) > 0.0 { 1.0 } else { -1.0 };
        }
        let mut total = 0.0;
        let k = roots.len();
        for i in 0..k {
            let a = roots[i];
            let b = if i + 1 < k { roots[i + 1] } else { roots[0] + 2.0 * PI };
            let sign = if f(0.5 * (a + b)) > 0.0 { 1.0 } else { -1.0 };
            total += sign * (b - a);
        }
        total / (2.0 * PI)
    }

    /// Level function at `x + rho (cos th, sin th)`, expanded about `x` so that
    /// small circles around near-boundary points keep their relative accuracy.
    fn level_on_circle(&self, x: &[f64], rho: f64, th: f64) -> f64 {
        let (c, s) = (th.cos(), th.sin());
        match &self.kind {
            Kind::Ellipse { center, a, b } => {
                let (u, v) = ((x[0] - center[0]) / a, (x[1] - center[1]) / b);
                let (p, q) = (c / a, s / b);
                self.level(x) - rho * (2.0 * (u * p + v * q) + rho * (p * p + q * q))
            }
            Kind::Graph { profile } => {
                // x_N - gamma(x') written as a difference from the value at x
                let (x0, x1) = (x[0], x[1]);
                let dg = profile.value(x0 + rho * c) - profile.value(x0);
                (x1 - profile.value(x0)) + rho * s - dg
            }
            _ => self.level(&[x[0] + rho * c, x[1] + rho * s]),
        }
    }

    /// Sorted angles in `[0, 2 pi)` where the circle of radius `rho` about `x`
    /// crosses the boundary (planar shapes).
    pub fn circle_crossings(&self, x: &[f64], rho: f64) -> Vec<f64> {
        const SAMPLES: usize = 96;
        let f = |th: f64| self.level_on_circle(x, rho, th);
        let df = |th: f64| {
            let p = [x[0] + rho * th.cos(), x[1] + rho * th.sin()];
            let g = self.level_gradient_2d(&p);
            rho * (-g[0] * th.sin() + g[1] * th.cos())
        };
        let h = 2.0 * PI / SAMPLES as f64;
        let mut roots = Vec::new();
        let mut f0 = f(0.0);
        let mut d0 = df(0.0);
        let first = f0;
        for j in 0..SAMPLES {
            let (a, b) = (j as f64 * h, (j + 1) as f64 * h);
            let (f1, d1) = if j + 1 == SAMPLES { (first, df(2.0 * PI)) } else { (f(b), df(b)) };
            if f0 == 0.0 {
                roots.push(a);
            } else if f0.signum() != f1.signum() && f1 != 0.0 {
                roots.push(root_in(&f, a, b));
            } else if d0.signum() != d1.signum() {
                // an extremum inside the interval may hide a pair of crossings
                let c = root_in(&df, a, b);
                let fc = f(c);
                if fc.signum() != f0.signum() && fc != 0.0 {
                    roots.push(root_in(&f, a, c));
                    roots.push(root_in(&f, c, b));
                }
            }
            f0 = f1;
            d0 = d1;
        }
        roots
    }

    /// Radii about `x` where the spherical mean is not smooth (tangency radii).
    pub fn critical_radii(&self, x: &[f64]) -> Vec<f64> {
        let mut out = match &self.kind {
            Kind::HalfSpace { normal, offset } => vec![(dot(x, normal) - offset).abs()],
            Kind::Ball { center, radius } => {
                let d = norm(&sub(x, center));
                vec![(radius - d).abs(), radius + d]
            }
            Kind::Ellipse { center, a, b } => {
                let (cx, cy, a, b) = (center[0], center[1], *a, *b);
                distance_extrema(|th| [cx + a * th.cos(), cy + b * th.sin()], 0.0, 2.0 * PI, x, true)
            }
            Kind::Graph { profile } => {
                let span = 10.0 * (1.0 + x[0].abs() + x[1].abs());
                let p = *profile;
                distance_extrema(|u| [u, p.value(u)], x[0] - span, x[0] + span, x, false)
            }
        };
        out.retain(|r| *r > 0.0 && r.is_finite());
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Boundary point in direction `dir` from the center (balls, any dimension).
    pub fn ball_point(&self, id: &str, dir: &[f64]) -> Result<BoundaryPoint> {
        let Kind::Ball { center, radius } = &self.kind else {
            return domain("ball_point needs a ball");
        };
        if dir.len() != self.dim {
            return domain("direction length differs from dim");
        }
        let l = norm(dir);
        let u: Vec<f64> = dir.iter().map(|v| v / l).collect();
        let position = center.iter().zip(&u).map(|(c, ui)| c + radius * ui).collect();
        let normal: Vec<f64> = u.iter().map(|v| -v).collect();
        Ok(BoundaryPoint {
            id: id.into(),
            position,
            tangents: tangent_basis(&normal),
            normal,
            graph_radius: 0.5 * radius,
        })
    }

    /// Boundary point by angle: polar angle for planar balls, the parameter of
    /// `(a cos t, b sin t)` for ellipses.
    pub fn point_at_angle(&self, id: &str, theta: f64) -> Result<BoundaryPoint> {
        match &self.kind {
            Kind::Ball { .. } if self.dim == 2 => self.ball_point(id, &[theta.cos(), theta.sin()]),
            Kind::Ellipse { center, a, b } => {
                let position = vec![center[0] + a * theta.cos(), center[1] + b * theta.sin()];
                let g = [-theta.cos() / a, -theta.sin() / b];
                let l = (g[0] * g[0] + g[1] * g[1]).sqrt();
                let normal = vec![g[0] / l, g[1] / l];
                Ok(BoundaryPoint {
                    id: id.into(),
                    position,
                    tangents: tangent_basis(&normal),
                    normal,
                    graph_radius: 0.5 * a.min(*b),
                })
            }
            _ => domain("point_at_angle needs a planar ball or an ellipse"),
        }
    }

    /// The anchor point of half-spaces (foot of the origin) and graphs (origin).
    pub fn anchor_point(&self, id: &str) -> Result<BoundaryPoint> {
        match &self.kind {
            Kind::HalfSpace { normal, offset } => Ok(BoundaryPoint {
                id: id.into(),
                position: normal.iter().map(|n| n * offset).collect(),
                tangents: tangent_basis(normal),
                normal: normal.clone(),
                graph_radius: f64::INFINITY,
            }),
            Kind::Graph { .. } => {
                let normal = vec![0.0, 1.0];
                Ok(BoundaryPoint {
                    id: id.into(),
                    position: vec![0.0, 0.0],
                    tangents: vec![vec![1.0, 0.0]],
                    normal,
                    graph_radius: 1.0,
                })
            }
            _ => domain("anchor_point needs a half-space or a graph set"),
        }
    }

    /// Local graph `gamma(y')` of the boundary in the frame of `p`.
    pub fn local_graph(&self, p: &BoundaryPoint, y_prime: &[f64]) -> Result<f64> {
        let r = norm(y_prime);
        if y_prime.len() + 1 != self.dim {
            return domain("y' must have N-1 components");
        }
        if r >= p.graph_radius {
            return domain(format!("|y'| = {r} is not below the graph radius {}", p.graph_radius));
        }
        match &self.kind {
            Kind::HalfSpace { .. } => Ok(0.0),
            Kind::Ball { radius, .. } => Ok(r * r / (radius + ((radius - r) * (radius + r)).sqrt())),
            Kind::Graph { profile } => Ok(profile.value(y_prime[0])),
            Kind::Ellipse { center, a, b } => {
                // level(q + g nu) = 0 is quadratic in g; take the root nearest zero
                let q = p.to_ambient(y_prime, 0.0);
                let n = &p.normal;
                let (u, v) = ((q[0] - center[0]) / a, (q[1] - center[1]) / b);
                let (nu, nv) = (n[0] / a, n[1] / b);
                let qa = nu * nu + nv * nv;
                let qb = 2.0 * (u * nu + v * nv);
                let qc = u * u + v * v - 1.0;
                let disc = qb * qb - 4.0 * qa * qc;
                if disc < 0.0 {
                    return domain("no boundary crossing along the normal");
                }
                let sq = disc.sqrt();
                let big = -0.5 * (qb + qb.signum() * sq);
                let roots = [big / qa, if big != 0.0 { qc / big } else { 0.0 }];
                Ok(if roots[0].abs() < roots[1].abs() { roots[0] } else { roots[1] })
            }
        }
    }

    /// Normalized mean curvature `Delta gamma(0) / (N - 1)` at `p`.
    pub fn mean_curvature(&self, p: &BoundaryPoint) -> Result<f64> {
        match &self.kind {
            Kind::HalfSpace { .. } => Ok(0.0),
            Kind::Ball { radius, .. } => Ok(1.0 / radius),
            Kind::Ellipse { center, a, b } => {
                let (x, y) = (p.position[0] - center[0], p.position[1] - center[1]);
                let g = (x * x / a.powi(4) + y * y / b.powi(4)).powf(1.5);
                Ok(1.0 / (a * a * b * b * g))
            }
            Kind::Graph { profile } => match *profile {
                GraphProfile::Quadratic { curvature } => Ok(curvature),
                GraphProfile::Power { coef, exponent } => {
                    if exponent < 2.0 {
                        domain("graph power below 2 has no second derivative at the origin")
                    } else if exponent == 2.0 {
                        Ok(2.0 * coef)
                    } else {
                        Ok(0.0)
                    }
                }
            },
        }
    }

    /// Principal value `int tau_E(y) / |p - y|^{N+2s} dy` for `0 < s < 1/2`.
    pub fn fractional_mean_curvature(&self, p: &BoundaryPoint, s: f64, tol: f64) -> Result<f64> {
        Ok(self.fractional_mean_curvature_report(p, s, tol)?.value)
    }

    /// As `fractional_mean_curvature`, also returning the inner-cutoff ladder.
    pub fn fractional_mean_curvature_report(
        &self,
        p: &BoundaryPoint,
        s: f64,
        tol: f64,
    ) -> Result<PvReport> {
        if !(s > 0.0 && s < 0.5) {
            return domain(format!("the principal value is used for 0 < s < 1/2, got s = {s}"));
        }
        if let Kind::HalfSpace { .. } = self.kind {
            return Ok(PvReport { value: 0.0, ladder: vec![], change: 0.0 });
        }
        let scale = p.graph_radius.min(1.0);
        let mut ladder = Vec::new();
        let mut eps = 1e-3 * scale;
        for level in 0..6 {
            let v = self.pv_with_cutoff(p, s, eps, tol)?;
            ladder.push((eps, v));
            if level >= 1 {
                let prev = ladder[ladder.len() - 2].1;
                let change = (v - prev).abs();
                if change <= tol * v.abs().max(1e-300) {
                    return Ok(PvReport { value: v, ladder, change });
                }
            }
            eps *= 0.1;
        }
        let n = ladder.len();
        Err(Error::NonConvergence {
            what: "principal-value cutoff ladder".into(),
            estimate: (ladder[n - 1].1 - ladder[n - 2].1).abs(),
        })
    }

    fn pv_with_cutoff(&self, p: &BoundaryPoint, s: f64, eps: f64, tol: f64) -> Result<f64> {
        let x = &p.position;
        let area = sphere_area(self.dim);
        let weight = |rho: f64| rho.powf(-1.0 - 2.0 * s);
        // near the point the spherical mean is linear in rho (half-space part cancels)
        let inner = self.spherical_mean(x, eps) / eps * eps.powf(1.0 - 2.0 * s) / (1.0 - 2.0 * s);
        let mut pts = vec![eps];
        let mut r = eps;
        let outer = self.outer_radius(x);
        let far = outer.unwrap_or(1e3 * (1.0 + norm(x)));
        while r * 2.0 < far {
            r *= 2.0;
            pts.push(r);
        }
        pts.extend(self.critical_radii(x).into_iter().filter(|c| *c > eps && *c < far));
        pts.push(far);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let q = Quadrature::new(1e-3 * tol * eps.powf(-2.0 * s) * eps, 1e-2 * tol).with_max_panels(20_000);
        let mid = q.integrate_with_breaks(|rho| weight(rho) * self.spherical_mean(x, rho), &pts);
        if !mid.converged {
            return Err(Error::NonConvergence { what: "principal-value quadrature".into(), estimate: mid.error });
        }
        let tail = match outer {
            Some(ro) => -ro.powf(-2.0 * s) / (2.0 * s),
            None => {
                let t = q.integrate_to_infinity(|rho| weight(rho) * self.spherical_mean(x, rho), far, far);
                t.value
            }
        };
        Ok(area * (inner + mid.value + tail))
    }
}

/// Result of the principal-value computation with its cutoff ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct PvReport {
    pub value: f64,
    /// `(inner cutoff, value)` for each refinement level.
    pub ladder: Vec<(f64, f64)>,
    /// Change between the last two levels.
    pub change: f64,
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        return Err(Error::Config(format!("dimension must be at least 2, got {dim}")));
    }
    Ok(())
}

fn root_in<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    match brent(f, a, b, 1e-15, 200) {
        Ok(r) => r.x,
        Err(_) => 0.5 * (a + b),
    }
}

/// Local extrema of `|x - c(u)|` over a sampled parameter range.
fn distance_extrema<C: Fn(f64) -> [f64; 2]>(curve: C, lo: f64, hi: f64, x: &[f64], periodic: bool) -> Vec<f64> {
    const SAMPLES: usize = 720;
    let d2 = |u: f64| {
        let c = curve(u);
        (c[0] - x[0]).powi(2) + (c[1] - x[1]).powi(2)
    };
    let h = (hi - lo) / SAMPLES as f64;
    let dd = |u: f64| (d2(u + 1e-7 * h) - d2(u - 1e-7 * h)) / (2e-7 * h);
    let mut out = Vec::new();
    let n = if periodic { SAMPLES } else { SAMPLES - 1 };
    // shifted samples keep symmetric extrema away from the sample points
    let start = if periodic { lo + 0.3719 * h } else { lo };
    for j in 0..n {
        let (a, b) = (start + j as f64 * h, start + (j + 1) as f64 * h);
        let (da, db) = (dd(a), dd(b));
        if da.signum() != db.signum() {
            let u = root_in(&dd, a, b);
            out.push(d2(u).sqrt());
        }
    }
    if !periodic {
        out.push(d2(lo).sqrt().min(d2(hi).sqrt()));
    }
    out
}
