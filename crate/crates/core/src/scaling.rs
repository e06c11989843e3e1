//! Critical time scale `sigma_s(t)` feeding the kernel time argument.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    SubHalf,
    Half,
    SuperHalf,
}

/// Upper end of the small-time branch of `sigma^2 |log sigma| = t`: the maximum of
/// the left side over `(0, 1)`, reached at `sigma = e^{-1/2}`.
pub const HALF_T_CAP: f64 = 0.183_939_720_585_721_16; // e^{-1} / 2

/// Turning point `e^{-1/2}` of `sigma^2 |log sigma|`.
pub const HALF_SIGMA_MAX: f64 = 0.606_530_659_712_633_4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingLaw {
    pub s: f64,
    pub branch: Branch,
    /// Relative tolerance of the implicit solve (half branch only).
    pub tol: f64,
}

impl ScalingLaw {
    pub fn new(s: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return domain(format!("fractional order s = {s} outside (0, 1)"));
        }
        let branch = if s < 0.5 {
            Branch::SubHalf
        } else if s == 0.5 {
            Branch::Half
        } else {
            Branch::SuperHalf
        };
        Ok(Self { s, branch, tol: 1e-12 })
    }

    /// Largest admissible `t` (infinite off the half branch).
    pub fn t_cap(&self) -> f64 {
        match self.branch {
            Branch::Half => HALF_T_CAP,
            _ => f64::INFINITY,
        }
    }

    pub fn sigma(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) || !t.is_finite() {
            return domain(format!("scaling needs a positive finite time, got {t}"));
        }
        match self.branch {
            Branch::SubHalf => Ok(t.powf(2.0 * self.s / (1.0 + 2.0 * self.s))),
            Branch::SuperHalf => Ok(t.powf(self.s)),
            Branch::Half => solve_half(t, self.tol),
        }
    }

    /// Spatial window `sigma(t)^{1/(2s)}` of the kernel at the scaled time.
    pub fn window(&self, t: f64) -> Result<f64> {
        Ok(self.sigma(t)?.powf(0.5 / self.s))
    }
}

/// Solves `sigma^2 |log sigma| = t` on `(0, e^{-1/2})` by Newton's method in
/// `x = log sigma`, safeguarded by bisection.
fn solve_half(t: f64, tol: f64) -> Result<f64> {
    if t >= HALF_T_CAP {
        return domain(format!(
            "t = {t} is not below e^(-1)/2: sigma^2 |log sigma| = t has no solution on the small-time branch (two or none on (0, 1))"
        ));
    }
    let target = t.ln();
    // F(x) = 2x + log(-x) - log t is increasing for x < -1/2
    let f = |x: f64| 2.0 * x + (-x).ln() - target;
    let mut hi = -0.5;
    let mut lo = (0.5 * target).min(-1.0);
    while f(lo) > 0.0 {
        lo *= 2.0;
    }
    let sqrt_t = t.sqrt();
    let guess = (t / sqrt_t.ln().abs()).sqrt();
    let mut x = guess.ln().clamp(lo, hi);
    for _ in 0..200 {
        let fx = f(x);
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let step = fx / (2.0 + 1.0 / x);
        let mut next = x - step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let done = (next - x).abs() < 0.1 * tol;
        x = next;
        if done || hi - lo < 1e-16 * x.abs() {
            return Ok(x.exp());
        }
    }
    Err(Error::NonConvergence { what: format!("half-branch scaling at t = {t}"), estimate: hi - lo })
}

/// `sigma_s(t)`.
pub fn sigma(law: &ScalingLaw, t: f64) -> Result<f64> {
    law.sigma(t)
}

/// Maps a scale back to its time and confirms the forward solve reproduces it to
/// `1e-10` relative.
pub fn sigma_inverse_check(law: &ScalingLaw, sigma_value: f64) -> Result<f64> {
    let t = match law.branch {
        Branch::Half => {
            if !(sigma_value > 0.0 && sigma_value < HALF_SIGMA_MAX) {
                return domain(format!("sigma = {sigma_value} outside (0, e^(-1/2))"));
            }
            sigma_value * sigma_value * sigma_value.ln().abs()
        }
        Branch::SubHalf => {
            if !(sigma_value > 0.0) {
                return domain(format!("sigma = {sigma_value} must be positive"));
            }
            sigma_value.powf((1.0 + 2.0 * law.s) / (2.0 * law.s))
        }
        Branch::SuperHalf => {
            if !(sigma_value > 0.0) {
                return domain(format!("sigma = {sigma_value} must be positive"));
            }
            sigma_value.powf(1.0 / law.s)
        }
    };
    let back = law.sigma(t)?;
    if ((back - sigma_value) / sigma_value).abs() > 1e-10 {
        return Err(Error::NonConvergence {
            what: format!("scaling round trip at sigma = {sigma_value}"),
            estimate: (back - sigma_value).abs(),
        });
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constants() {
        assert!((HALF_T_CAP - (-1f64).exp() / 2.0).abs() < 1e-16);
        assert!((HALF_SIGMA_MAX - (-0.5f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn power_branches() {
        let a = ScalingLaw::new(0.25).unwrap().sigma(1e-3).unwrap();
        assert!((a - 0.1).abs() < 1e-15);
        let b = ScalingLaw::new(0.75).unwrap().sigma(1e-4).unwrap();
        assert!((b - 1e-3).abs() < 1e-17);
    }

    #[test]
    fn half_branch_plug_in() {
        let law = ScalingLaw::new(0.5).unwrap();
        let e = std::f64::consts::E;
        let got = law.sigma(e.powi(-2)).unwrap();
        assert!((got - 1.0 / e).abs() < 1e-12 * (1.0 / e));
        let t = sigma_inverse_check(&law, 0.1).unwrap();
        assert!((t - 0.01 * 10f64.ln()).abs() < 1e-16);
        let t = sigma_inverse_check(&law, 0.05).unwrap();
        assert!((law.sigma(t).unwrap() - 0.05).abs() < 1e-10 * 0.05);
        assert!((sigma_inverse_check(&law, 1.0 / e).unwrap() - e.powi(-2)).abs() < 1e-16);
    }

    #[test]
    fn half_branch_rejects_large_t() {
        let law = ScalingLaw::new(0.5).unwrap();
        assert!(matches!(law.sigma(0.2), Err(Error::Domain(_))));
        assert!(matches!(law.sigma(-1.0), Err(Error::Domain(_))));
        assert!(sigma_inverse_check(&law, 0.7).is_err());
    }

    proptest! {
        #[test]
        fn half_residual(log_t in -700.0f64..-1.70) {
            let t = log_t.exp();
            let law = ScalingLaw::new(0.5).unwrap();
            let s = law.sigma(t).unwrap();
            prop_assert!(s > 0.0 && s < HALF_SIGMA_MAX);
            prop_assert!((s * s * s.ln().abs() - t).abs() <= 1e-12 * t);
        }

        #[test]
        fn monotone(s in prop_oneof![Just(0.25f64), Just(0.5), Just(0.75), 0.01f64..0.99],
                    a in -30.0f64..-1.8, b in -30.0f64..-1.8) {
            prop_assume!(a != b);
            let law = ScalingLaw::new(s).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(law.sigma(lo.exp()).unwrap() < law.sigma(hi.exp()).unwrap());
        }

        #[test]
        fn small_time_ordering(log_t in -30.0f64..-9.22) {
            let t = log_t.exp();
            for s in [0.25, 0.75] {
                let sig = ScalingLaw::new(s).unwrap().sigma(t).unwrap();
                prop_assert!(sig > t && sig < 1.0);
            }
        }
    }
}
