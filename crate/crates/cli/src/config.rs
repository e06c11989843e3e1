//! Experiment configuration: parsing, validation and defaults.

use std::path::PathBuf;

use fracflow::geometry::{SetShape, ShapeDescriptor};
use fracflow::kernels::KernelFamily;
use serde::{Deserialize, Serialize};

pub const KINDS: [&str; 6] = ["kernel-check", "scaling", "constants", "diffuse", "velocity", "mbo"];

/// Where on a shape a velocity or probe is taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "at", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PointSpec {
    /// Foot of the origin on a half-space, origin of a graph.
    Anchor,
    /// Polar angle (planar balls) or ellipse parameter.
    Angle { theta: f64 },
    /// Direction from a ball's center.
    Direction { dir: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryMode {
    Periodic,
    FreeSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    /// Box side; filled from the shape when absent.
    pub extent: Option<f64>,
    #[serde(default = "default_boundary")]
    pub boundary: BoundaryMode,
    #[serde(default = "default_wrap")]
    pub wrap_limit: f64,
    /// Kernel length scale in cells, used to pick `h` when it is not given.
    #[serde(default = "default_cells")]
    pub cells: f64,
}

fn default_n() -> usize {
    1024
}
fn default_boundary() -> BoundaryMode {
    BoundaryMode::Periodic
}
fn default_wrap() -> f64 {
    1e-3
}
fn default_cells() -> f64 {
    8.0
}
fn default_dim() -> usize {
    2
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n: default_n(), extent: None, boundary: default_boundary(), wrap_limit: default_wrap(), cells: default_cells() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative deviation allowed in the kernel far-field limit.
    pub kernel_limit: f64,
    /// Allowed `|mass - 1|`.
    pub mass: f64,
    /// Relative tolerance of direct convolutions.
    pub direct: f64,
    /// Principal-value tolerance, only meaningful for `s < 1/2`.
    pub pv: Option<f64>,
    /// Convolution tolerance in units of `sigma` during velocity measurement.
    pub u_factor: f64,
    /// Root tolerance in units of the kernel window.
    pub root_factor: f64,
    /// Relative deviation allowed between an MBO trace and its radius law.
    pub flow: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { kernel_limit: 0.01, mass: 1e-6, direct: 1e-8, pv: None, u_factor: 1e-6, root_factor: 1e-3, flow: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: String,
    #[serde(default)]
    pub families: Vec<KernelFamily>,
    #[serde(default)]
    pub s: Vec<f64>,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub shapes: Vec<ShapeDescriptor>,
    #[serde(default)]
    pub points: Vec<PointSpec>,
    /// Time ladder (velocity, scaling, kernel-check).
    #[serde(default)]
    pub t: Vec<f64>,
    /// Kernel time arguments (diffuse).
    #[serde(default)]
    pub sigma: Vec<f64>,
    /// Evaluation points (diffuse); boundary probes when empty.
    #[serde(default)]
    pub x: Vec<Vec<f64>>,
    pub h: Option<f64>,
    pub n_steps: Option<usize>,
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub output: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub snapshot_every: Option<usize>,
}

/// A validation failure with the config line it refers to (0 when unknown).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.line > 0 {
            write!(f, "config line {}: {}", self.line, self.message)
        } else {
            write!(f, "config: {}", self.message)
        }
    }
}

fn line_of(src: &str, key: &str) -> usize {
    let needle = format!("\"{key}\"");
    src.lines().position(|l| l.contains(&needle)).map(|i| i + 1).unwrap_or(0)
}

impl ExperimentConfig {
    /// An empty config of the given kind, for runs driven by flags only.
    pub fn of_kind(kind: &str) -> Self {
        serde_json::from_value(serde_json::json!({ "kind": kind })).expect("minimal config parses")
    }

    pub fn parse(src: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(src).map_err(|e| ConfigError { line: e.line(), message: e.to_string() })?;
        cfg.validate().map_err(|(key, message)| ConfigError { line: line_of(src, key), message })?;
        Ok(cfg)
    }

    /// Checks regime-specific requirements; errors name the offending key.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if !KINDS.contains(&self.kind.as_str()) {
            return Err(("kind", format!("unknown experiment kind `{}` (expected one of {})", self.kind, KINDS.join(", "))));
        }
        if let Some(s) = self.s.iter().find(|s| !(**s > 0.0 && **s < 1.0)) {
            return Err(("s", format!("fractional order {s} outside (0, 1)")));
        }
        if !(self.dim == 2 || self.dim == 3) {
            return Err(("dim", format!("dimension {} not in {{2, 3}}", self.dim)));
        }
        for d in &self.shapes {
            let shape = SetShape::from_descriptor(d).map_err(|e| ("shapes", e.to_string()))?;
            if shape.dim() != self.dim {
                return Err(("shapes", format!("shape {} has dim {} but the config has dim {}", shape.label(), shape.dim(), self.dim)));
            }
        }
        if let Some(t) = self.t.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(("t", format!("time {t} must be positive")));
        }
        if let Some(v) = self.sigma.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(("sigma", format!("sigma {v} must be positive")));
        }
        if let Some(x) = self.x.iter().find(|x| x.len() != self.dim) {
            return Err(("x", format!("point {x:?} does not have {} coordinates", self.dim)));
        }
        let tol = &self.tolerances;
        if self.tolerances.pv.is_some() && !self.s.iter().any(|s| *s < 0.5) {
            return Err(("pv", "a principal-value tolerance only applies when some s < 1/2".into()));
        }
        for (key, v) in [
            ("kernel_limit", tol.kernel_limit),
            ("mass", tol.mass),
            ("direct", tol.direct),
            ("u_factor", tol.u_factor),
            ("root_factor", tol.root_factor),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err((key, format!("tolerance {v} outside (0, 1)")));
            }
        }
        if let Some(grid) = &self.grid {
            if !(grid.n >= 4 && grid.n.is_power_of_two()) {
                return Err(("n", format!("grid size {} is not a power of two >= 4", grid.n)));
            }
            if grid.extent.is_some_and(|l| !(l > 0.0)) {
                return Err(("extent", "extent must be positive".into()));
            }
            if !(grid.cells >= 3.0) {
                return Err(("cells", "the kernel length must span at least 3 cells".into()));
            }
        }
        match self.kind.as_str() {
            "diffuse" => {
                self.need_nonempty()?;
                if self.sigma.is_empty() {
                    return Err(("kind", "diffuse needs a `sigma` list".into()));
                }
            }
            "velocity" => self.need_nonempty()?,
            "mbo" => {
                if self.s.len() != 1 {
                    return Err(("s", "mbo takes exactly one s".into()));
                }
                if self.families.len() > 1 {
                    return Err(("families", "mbo takes at most one family".into()));
                }
                if self.shapes.len() != 1 {
                    return Err(("shapes", "mbo takes exactly one initial shape".into()));
                }
                if self.n_steps.is_none() {
                    return Err(("kind", "mbo needs `n_steps`".into()));
                }
                if self.h.is_some_and(|h| !(h > 0.0)) {
                    return Err(("h", "h must be positive".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn need_nonempty(&self) -> Result<(), (&'static str, String)> {
        if self.s.is_empty() {
            return Err(("kind", format!("{} needs an `s` list", self.kind)));
        }
        if self.shapes.is_empty() {
            return Err(("kind", format!("{} needs a `shapes` list", self.kind)));
        }
        Ok(())
    }
}

/// Families that accept order `s`, restricted to `wanted` when it is non-empty.
pub fn families_for(wanted: &[KernelFamily], s: f64) -> Vec<KernelFamily> {
    let all: Vec<KernelFamily> = if wanted.is_empty() { KernelFamily::ALL.to_vec() } else { wanted.to_vec() };
    all.into_iter().filter(|f| *f != KernelFamily::ExplicitHalf || s == 0.5).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_kind_names_its_line() {
        let err = ExperimentConfig::parse("{\n  \"s\": [0.5],\n  \"kind\": \"nonsense\"\n}").unwrap_err();
        assert_eq!(err.line, 3);
        assert!(err.message.contains("nonsense"));
    }

    #[test]
    fn syntax_errors_keep_serde_line() {
        let err = ExperimentConfig::parse("{\n \"kind\": \"scaling\",\n \"s\": [0.5,]\n}").unwrap_err();
        assert_eq!(err.line, 3);
    }

    #[test]
    fn pv_tolerance_needs_sub_half_order() {
        let src = r#"{"kind": "velocity", "s": [0.75], "shapes": [{"kind": "ball", "dim": 2, "radius": 1.0}],
            "tolerances": {"pv": 1e-7}}"#;
        assert!(ExperimentConfig::parse(src).unwrap_err().message.contains("principal-value"));
    }

    #[test]
    fn explicit_family_only_at_half() {
        assert_eq!(families_for(&[], 0.25).len(), 2);
        assert_eq!(families_for(&[], 0.5).len(), 3);
    }
}
