//! Closed-form comparison functions for the two-sided kernel estimates.
//!
//! Everything here is an unnormalized comparison value: the comparability
//! constants are never baked in, they are fitted downstream from sweeps.
//! Branch seams (`min` operators) are evaluated exactly, without smoothing.

use serde::{Deserialize, Serialize};

use crate::bernstein::{ScaleProfile, ScalingWindow, SubordinatorLaw};
use crate::error::{Error, Result};

/// Bundle of the fixed data `(d, Phi, psi)` entering every estimate, plus
/// the large-time rate of the killed semigroup.
///
/// `lambda1` is supplied by the caller; for the unit disk driven by the
/// Laplacian it is the squared first zero of the Bessel function J0,
/// `~= 5.7832`, which is the default used by the experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonKernel {
    dimension: usize,
    profile: ScaleProfile,
    law: SubordinatorLaw,
    lambda1: f64,
    psi_window: ScalingWindow,
}

/// Squared first positive zero of J0; default large-time rate for the unit
/// disk.
pub const UNIT_DISK_LAMBDA1: f64 = 5.783185962946785;

impl ComparisonKernel {
    pub fn new(dimension: usize, profile: ScaleProfile, law: SubordinatorLaw, lambda1: f64) -> Result<Self> {
        if dimension < 2 {
            return Err(Error::config(format!("dimension must be at least 2, got {dimension}")));
        }
        if !(lambda1 > 0.0) {
            return Err(Error::config(format!("large-time rate must be positive, got {lambda1}")));
        }
        let psi_window = law.exponent().window();
        Ok(Self {
            dimension,
            profile,
            law,
            lambda1,
            psi_window,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn profile(&self) -> &ScaleProfile {
        &self.profile
    }

    pub fn law(&self) -> &SubordinatorLaw {
        &self.law
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    /// Fitted scaling window of `psi` (used for case checks).
    pub fn psi_window(&self) -> &ScalingWindow {
        &self.psi_window
    }

    #[inline]
    pub fn phi_scale(&self, r: f64) -> f64 {
        self.profile.value(r)
    }

    #[inline]
    pub fn phi_inverse(&self, t: f64) -> f64 {
        self.profile.inverse(t).expect("positive target")
    }

    #[inline]
    pub fn psi(&self, lambda: f64) -> f64 {
        self.law.psi(lambda)
    }

    /// `g(r) = 1 / (r^d psi(Phi(r)^{-1}))`, the Green comparison scale.
    #[inline]
    pub fn g(&self, r: f64) -> f64 {
        1.0 / (r.powi(self.dimension as i32) * self.psi(1.0 / self.phi_scale(r)))
    }

    /// `j(r) = psi(Phi(r)^{-1}) / r^d`, the jump comparison scale.
    #[inline]
    pub fn j(&self, r: f64) -> f64 {
        self.psi(1.0 / self.phi_scale(r)) / r.powi(self.dimension as i32)
    }

    /// `theta(t) = Phi(t) psi(Phi(t)^{-1})`.
    #[inline]
    pub fn theta(&self, t: f64) -> f64 {
        let p = self.phi_scale(t);
        p * self.psi(1.0 / p)
    }

    /// `eta(t) = Phi(t)^{1/2} psi(Phi(t)^{-1})`.
    #[inline]
    pub fn eta(&self, t: f64) -> f64 {
        let p = self.phi_scale(t);
        p.sqrt() * self.psi(1.0 / p)
    }
}

/// Distances `(delta_x, delta_y, |x-y|)` entering the boundary factors.
/// Sweeps treat the triple abstractly; no triangle compatibility is imposed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryTriple {
    pub delta_x: f64,
    pub delta_y: f64,
    pub r: f64,
}

impl BoundaryTriple {
    pub fn new(delta_x: f64, delta_y: f64, r: f64) -> Result<Self> {
        if !(delta_x > 0.0 && delta_y > 0.0 && r > 0.0) {
            return Err(Error::domain(format!(
                "boundary triple must be strictly positive, got ({delta_x}, {delta_y}, {r})"
            )));
        }
        Ok(Self { delta_x, delta_y, r })
    }

    #[inline]
    pub fn delta_min(&self) -> f64 {
        self.delta_x.min(self.delta_y)
    }

    #[inline]
    pub fn delta_max(&self) -> f64 {
        self.delta_x.max(self.delta_y)
    }
}

/// Which of the jump estimate's shapes applies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JumpCase {
    /// Lower scaling index of `psi` above 1/2.
    I,
    /// Upper scaling index of `psi` below 1/2.
    Ii,
    /// Exactly stable with index 1/2; logarithmic seam.
    StableHalf,
}

/// Exit-time comparison shapes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExitRegime {
    /// `gamma_1 > 1/2`: `Phi(delta)^{1/2}`.
    Gamma1High,
    /// `gamma_2 < 1/2`: `1 / psi(Phi(delta)^{-1})`.
    Gamma2Low,
    /// `psi = lambda^{1/2}`: `Phi(delta)^{1/2} log(1/delta)`.
    Half,
}

#[inline]
fn min1(x: f64) -> f64 {
    x.min(1.0)
}

/// Small-time transition density comparison
/// `(sqrt(Phi(dx)/t) ^ 1)(sqrt(Phi(dy)/t) ^ 1)(Phi^{-1}(t)^{-d} ^ t/(r^d Phi(r)))`.
///
/// The two branches of the last factor cross exactly at `t = Phi(r)`.
pub fn heat_kernel_comparison(k: &ComparisonKernel, t: f64, b: &BoundaryTriple) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::domain(format!("time must be positive, got {t}")));
    }
    let fx = min1((k.phi_scale(b.delta_x) / t).sqrt());
    let fy = min1((k.phi_scale(b.delta_y) / t).sqrt());
    let phi_r = k.phi_scale(b.r);
    let d = k.dimension() as i32;
    let spatial = (k.phi_inverse(t).powi(-d)).min(t / (b.r.powi(d) * phi_r));
    Ok(fx * fy * spatial)
}

/// Green function comparison
/// `(sqrt(Phi(dx)/Phi(r)) ^ 1)(sqrt(Phi(dy)/Phi(r)) ^ 1) g(r)`.
pub fn green_comparison(k: &ComparisonKernel, b: &BoundaryTriple) -> f64 {
    let phi_r = k.phi_scale(b.r);
    let fx = min1((k.phi_scale(b.delta_x) / phi_r).sqrt());
    let fy = min1((k.phi_scale(b.delta_y) / phi_r).sqrt());
    fx * fy * k.g(b.r)
}

fn check_case(k: &ComparisonKernel, case: JumpCase) -> Result<()> {
    let w = k.psi_window();
    match case {
        JumpCase::I => {
            if !(w.lower_exponent > 0.5) {
                return Err(Error::config(format!(
                    "case i requires fitted lower index > 1/2, got gamma_1 = {:.4}",
                    w.lower_exponent
                )));
            }
        }
        JumpCase::Ii => {
            if !(w.upper_exponent < 0.5) {
                return Err(Error::config(format!(
                    "case ii requires fitted upper index < 1/2, got gamma_2 = {:.4}",
                    w.upper_exponent
                )));
            }
        }
        JumpCase::StableHalf => {
            let idx = k.law().exponent().stable_index();
            if !matches!(idx, Some(g) if (g - 0.5).abs() < 1e-9) {
                return Err(Error::config(
                    "the logarithmic formula requires the exactly stable index 1/2",
                ));
            }
        }
    }
    Ok(())
}

/// Jumping kernel comparison in the declared case.
pub fn jump_comparison(k: &ComparisonKernel, b: &BoundaryTriple, case: JumpCase) -> Result<f64> {
    check_case(k, case)?;
    Ok(match case {
        JumpCase::I => min1(k.theta(b.delta_min()) / k.theta(b.r)) * k.j(b.r),
        JumpCase::Ii => {
            let phi_r = k.phi_scale(b.r);
            min1((k.phi_scale(b.delta_min()) / phi_r).sqrt())
                * min1(k.eta(b.delta_max()) / k.eta(b.r))
                * k.j(b.r)
        }
        JumpCase::StableHalf => {
            let phi_r = k.phi_scale(b.r);
            let phi_lo = k.phi_scale(b.delta_min());
            let phi_hi = k.phi_scale(b.delta_max());
            let log_factor = (1.0 + phi_hi.min(phi_r) / phi_lo.min(phi_r)).ln();
            min1((phi_lo / phi_r).sqrt()) * log_factor * phi_r.powf(-0.5)
                / b.r.powi(k.dimension() as i32)
        }
    })
}

/// Exit time comparison profile at boundary distance `delta`.
pub fn exit_time_comparison(k: &ComparisonKernel, delta: f64, regime: ExitRegime) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::domain(format!("boundary distance must be positive, got {delta}")));
    }
    match regime {
        ExitRegime::Gamma1High => Ok(k.phi_scale(delta).sqrt()),
        ExitRegime::Gamma2Low => Ok(1.0 / k.psi(1.0 / k.phi_scale(delta))),
        ExitRegime::Half => {
            if delta >= 1.0 {
                return Err(Error::domain(format!(
                    "logarithmic regime needs delta < 1, got {delta}"
                )));
            }
            Ok(k.phi_scale(delta).sqrt() * (1.0 / delta).ln())
        }
    }
}

/// Both sides of the boundary-factor comparison: the product of the two
/// `sqrt(Phi(delta)/Phi(r)) ^ 1` factors on the left, and the case-specific
/// single-variable form on the right.
pub fn boundary_factor_pair(k: &ComparisonKernel, b: &BoundaryTriple, case: JumpCase) -> Result<(f64, f64)> {
    let phi_r = k.phi_scale(b.r);
    let lhs = min1((k.phi_scale(b.delta_x) / phi_r).sqrt()) * min1((k.phi_scale(b.delta_y) / phi_r).sqrt());
    let rhs = match case {
        JumpCase::I => min1(k.theta(b.delta_min()) / k.theta(b.r)),
        JumpCase::Ii => {
            min1((k.phi_scale(b.delta_min()) / phi_r).sqrt()) * min1(k.eta(b.delta_max()) / k.eta(b.r))
        }
        JumpCase::StableHalf => {
            return Err(Error::config(
                "boundary factor comparison is stated for cases i and ii only",
            ))
        }
    };
    Ok((lhs, rhs))
}
