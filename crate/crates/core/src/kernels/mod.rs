//! Fractional kernel families `K(y, t) = t^{-N/(2s)} P(t^{-1/(2s)} |y|)`.

mod heat;
mod multiplier;
mod profile;
mod table;

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{domain, Error, Result};
use crate::numerics::special::sphere_area;

pub use heat::{far_coefficient, fractional_heat_value, profile_at_origin};
pub use multiplier::{hankel_transform, MultiplierTable};
pub use profile::{Profile, TailTerm};
pub use table::{build_fractional_heat_profile, build_with_options, RadialTable, TableOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    /// Multiplier `exp(-t |xi|^{2s})`.
    FractionalHeat,
    /// Closed-form `s = 1/2` kernel `C t / (t^2 + |y|^2)^{(N+1)/2}`.
    ExplicitHalf,
    /// Poisson kernel of the harmonic extension, `p (1 + r^2)^{-(N+2s)/2}`.
    HarmonicExtension,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 3] = [
        KernelFamily::FractionalHeat,
        KernelFamily::ExplicitHalf,
        KernelFamily::HarmonicExtension,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            KernelFamily::FractionalHeat => "fractional-heat",
            KernelFamily::ExplicitHalf => "explicit-half",
            KernelFamily::HarmonicExtension => "harmonic-extension",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.tag() == tag)
    }
}

impl std::fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// `s 2^{2s} sin(s pi) Gamma(N/2 + s) Gamma(s) / pi^{1 + N/2}`.
pub fn gamma_limit_constant(s: f64, dim: usize) -> f64 {
    let n = dim as f64;
    s * 4f64.powf(s) * (s * PI).sin() * gamma(0.5 * n + s) * gamma(s) / PI.powf(1.0 + 0.5 * n)
}

/// Unit-mass constant of the `s = 1/2` kernel, `Gamma((N+1)/2) / pi^{(N+1)/2}`.
pub fn explicit_half_constant(dim: usize) -> f64 {
    let h = 0.5 * (dim as f64 + 1.0);
    gamma(h) / PI.powf(h)
}

/// `1 / int_{R^N} (1 + |y|^2)^{-(N+2s)/2} dy` by radial quadrature.
pub fn poisson_constant(s: f64, dim: usize) -> f64 {
    let n = dim as f64;
    let decay = 0.5 * (n + 2.0 * s);
    let shape = Profile::Algebraic { amplitude: 1.0, decay };
    1.0 / (sphere_area(dim) * shape.radial_moment(n - 1.0, 0.0, f64::INFINITY))
}

#[derive(Debug, Clone)]
pub struct KernelSpec {
    s: f64,
    dim: usize,
    family: KernelFamily,
    profile: Profile,
    limit_constant: f64,
    multiplier: Arc<OnceLock<std::result::Result<MultiplierTable, String>>>,
}

impl KernelSpec {
    /// Builds a spec; the fractional heat family tabulates its profile with `opts`.
    pub fn new(family: KernelFamily, s: f64, dim: usize, opts: TableOptions) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return domain(format!("fractional order s = {s} outside (0, 1)"));
        }
        if dim < 2 {
            return domain(format!("dimension {dim} below 2"));
        }
        match family {
            KernelFamily::FractionalHeat => {
                let table = build_with_options(s, dim, opts)?;
                Ok(Self::from_table(table))
            }
            KernelFamily::ExplicitHalf => {
                if s != 0.5 {
                    return domain(format!("the explicit kernel has s = 1/2, got {s}"));
                }
                Ok(Self::explicit_half(dim))
            }
            KernelFamily::HarmonicExtension => Ok(Self::harmonic_extension(s, dim)),
        }
    }

    pub fn fractional_heat(s: f64, dim: usize) -> Result<Self> {
        Self::new(KernelFamily::FractionalHeat, s, dim, TableOptions::default())
    }

    pub fn explicit_half(dim: usize) -> Self {
        let c = explicit_half_constant(dim);
        Self::with_profile(
            KernelFamily::ExplicitHalf,
            0.5,
            dim,
            Profile::Algebraic { amplitude: c, decay: 0.5 * (dim as f64 + 1.0) },
            gamma_limit_constant(0.5, dim),
        )
    }

    pub fn harmonic_extension(s: f64, dim: usize) -> Self {
        let p = poisson_constant(s, dim);
        Self::with_profile(
            KernelFamily::HarmonicExtension,
            s,
            dim,
            Profile::Algebraic { amplitude: p, decay: 0.5 * (dim as f64 + 2.0 * s) },
            p,
        )
    }

    pub fn from_table(table: RadialTable) -> Self {
        let (s, dim, family) = (table.s(), table.dim(), table.family());
        Self::with_profile(
            family,
            s,
            dim,
            Profile::Tabulated(Arc::new(table)),
            gamma_limit_constant(s, dim),
        )
    }

    fn with_profile(family: KernelFamily, s: f64, dim: usize, profile: Profile, c: f64) -> Self {
        Self {
            s,
            dim,
            family,
            profile,
            limit_constant: c,
            multiplier: Arc::new(OnceLock::new()),
        }
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

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn table(&self) -> Option<&RadialTable> {
        match &self.profile {
            Profile::Tabulated(t) => Some(t),
            Profile::Algebraic { .. } => None,
        }
    }

    /// Coefficient `C` of the small-time limit `K(y, t) / t -> C |y|^{-N-2s}`.
    pub fn limit_constant(&self) -> f64 {
        self.limit_constant
    }

    /// `P(r)`, the kernel at unit time.
    pub fn profile_value(&self, r: f64) -> f64 {
        self.profile.value(r)
    }

    /// Spatial scale `t^{1/(2s)}` of the kernel at time `t`.
    pub fn length_scale(&self, t: f64) -> f64 {
        t.powf(0.5 / self.s)
    }

    /// `K(y, t)` for a point `y` of any length (only `|y|` matters).
    pub fn eval(&self, y: &[f64], t: f64) -> Result<f64> {
        let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.eval_radial(r, t)
    }

    pub fn eval_radial(&self, r: f64, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return domain(format!("kernel time must be positive, got {t}"));
        }
        let l = self.length_scale(t);
        Ok(l.powi(-(self.dim as i32)) * self.profile.value(r / l))
    }

    /// Total mass `int P` (one for the normalized families).
    pub fn mass(&self) -> f64 {
        sphere_area(self.dim) * self.profile.radial_moment(self.dim as f64 - 1.0, 0.0, f64::INFINITY)
    }

    /// Mass of `P` outside the ball of radius `q`.
    pub fn tail_mass(&self, q: f64) -> f64 {
        sphere_area(self.dim) * self.profile.radial_moment(self.dim as f64 - 1.0, q, f64::INFINITY)
    }

    /// Fourier multiplier of `P` at frequency magnitude `k`.
    pub fn multiplier(&self, k: f64) -> Result<f64> {
        match self.family {
            KernelFamily::FractionalHeat => Ok((-k.powf(2.0 * self.s)).exp()),
            KernelFamily::ExplicitHalf => Ok((-k).exp()),
            KernelFamily::HarmonicExtension => {
                let table = self.multiplier.get_or_init(|| {
                    MultiplierTable::build(&self.profile, self.dim, self.s).map_err(|e| e.to_string())
                });
                match table {
                    Ok(t) => Ok(t.eval(k)),
                    Err(e) => Err(Error::NonConvergence { what: e.clone(), estimate: f64::NAN }),
                }
            }
        }
    }
}

/// `eval_kernel(spec, y, t) = t^{-N/(2s)} P(t^{-1/(2s)} |y|)`.
pub fn eval_kernel(spec: &KernelSpec, y: &[f64], t: f64) -> Result<f64> {
    spec.eval(y, t)
}

pub fn limit_constant(spec: &KernelSpec) -> f64 {
    spec.limit_constant()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundsReport {
    /// Smallest and largest sampled value of `P(r) (1 + r^{N+2s})`.
    pub c_lower: f64,
    pub c_upper: f64,
    /// Sandwich constant `max(c_upper, 1 / c_lower)`.
    pub constant: f64,
    pub pass: bool,
}

/// Empirical constants in `P(r) (1 + r^{N+2s}) in [1/C, C]` over the sampled radii.
pub fn verify_kernel_bounds(spec: &KernelSpec, radii: &[f64]) -> BoundsReport {
    let e = spec.dim as f64 + 2.0 * spec.s;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for &r in radii {
        let ratio = spec.profile_value(r) * (1.0 + r.powf(e));
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    let ok = !radii.is_empty() && lo > 0.0 && lo.is_finite() && hi.is_finite();
    BoundsReport {
        c_lower: lo,
        c_upper: hi,
        constant: hi.max(1.0 / lo),
        pass: ok,
    }
}

/// Sampled radial derivative bound: `max |P'(r)| (1 + r^{N+2s+1})`.
pub fn gradient_bound(spec: &KernelSpec, radii: &[f64]) -> f64 {
    let e = spec.dim as f64 + 2.0 * spec.s + 1.0;
    radii
        .iter()
        .map(|&r| spec.profile.derivative(r).abs() * (1.0 + r.powf(e)))
        .fold(0.0, f64::max)
}

/// Hyperplane integral `int_{|y'| in (a, b)} |y'|^power P(|y'|) dy'` over `R^{N-1}`.
pub fn hyperplane_moment(spec: &KernelSpec, power: f64, a: f64, b: f64) -> f64 {
    let n = spec.dim as f64;
    sphere_area(spec.dim - 1) * spec.profile.radial_moment(n - 2.0 + power, a, b)
}

