//! Laplace exponents, their scaling windows, the scale function and the
//! subordinator densities.
//!
//! Supported exponents are stable powers `lambda^alpha`, finite convex
//! combinations of stable powers, and compositions thereof. These are all
//! complete Bernstein functions satisfying two-sided weak scaling bounds by
//! construction, and they admit exact evaluation. Every exponent is
//! normalized so that its value at 1 equals 1.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// Admissible exponent shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ExponentKind {
    /// `lambda^alpha` with `alpha` in (0,1).
    Stable { alpha: f64 },
    /// Convex combination `sum w_i lambda^{alpha_i}` (weights renormalized).
    Mix { terms: Vec<MixTerm> },
    /// Composition `outer(inner(lambda))`.
    Compose {
        outer: Box<ExponentKind>,
        inner: Box<ExponentKind>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixTerm {
    pub weight: f64,
    pub alpha: f64,
}

/// A normalized Laplace exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceExponent {
    kind: ExponentKind,
    /// Multiplier making the value at 1 equal to 1.
    normalization: f64,
}

fn validate_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config(format!(
            "stable index must lie strictly inside (0,1), got {alpha}"
        )));
    }
    Ok(())
}

fn raw_value(kind: &ExponentKind, lambda: f64) -> f64 {
    match kind {
        ExponentKind::Stable { alpha } => lambda.powf(*alpha),
        ExponentKind::Mix { terms } => terms
            .iter()
            .map(|t| t.weight * lambda.powf(t.alpha))
            .sum(),
        ExponentKind::Compose { outer, inner } => raw_value(outer, raw_value(inner, lambda)),
    }
}

impl LaplaceExponent {
    pub fn stable(alpha: f64) -> Result<Self> {
        validate_alpha(alpha)?;
        Ok(Self {
            kind: ExponentKind::Stable { alpha },
            normalization: 1.0,
        })
    }

    /// Convex combination of stable powers. Weights must be positive; they
    /// are folded into the normalization so the value at 1 is 1.
    pub fn mix(terms: &[(f64, f64)]) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::config("mixture requires at least one term"));
        }
        for &(w, alpha) in terms {
            if !(w > 0.0) {
                return Err(Error::config(format!("mixture weight must be positive, got {w}")));
            }
            validate_alpha(alpha)?;
        }
        let kind = ExponentKind::Mix {
            terms: terms
                .iter()
                .map(|&(weight, alpha)| MixTerm { weight, alpha })
                .collect(),
        };
        let at_one = raw_value(&kind, 1.0);
        Ok(Self {
            kind,
            normalization: 1.0 / at_one,
        })
    }

    /// Builds an exponent from a kind description, validating all indices.
    pub fn from_kind(kind: ExponentKind) -> Result<Self> {
        fn validate(kind: &ExponentKind) -> Result<()> {
            match kind {
                ExponentKind::Stable { alpha } => validate_alpha(*alpha),
                ExponentKind::Mix { terms } => {
                    if terms.is_empty() {
                        return Err(Error::config("mixture requires at least one term"));
                    }
                    for t in terms {
                        if !(t.weight > 0.0) {
                            return Err(Error::config(format!(
                                "mixture weight must be positive, got {}",
                                t.weight
                            )));
                        }
                        validate_alpha(t.alpha)?;
                    }
                    Ok(())
                }
                ExponentKind::Compose { outer, inner } => {
                    validate(outer)?;
                    validate(inner)
                }
            }
        }
        validate(&kind)?;
        let at_one = raw_value(&kind, 1.0);
        Ok(Self {
            kind,
            normalization: 1.0 / at_one,
        })
    }

    pub fn kind(&self) -> &ExponentKind {
        &self.kind
    }

    /// Normalization multiplier applied so the value at 1 equals 1.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// Evaluates the normalized exponent at `lambda > 0`.
    pub fn eval(&self, lambda: f64) -> Result<f64> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::domain(format!(
                "Laplace exponent requires lambda > 0, got {lambda}"
            )));
        }
        Ok(self.value(lambda))
    }

    /// Unchecked evaluation; callers guarantee `lambda > 0`.
    #[inline]
    pub fn value(&self, lambda: f64) -> f64 {
        self.normalization * raw_value(&self.kind, lambda)
    }

    /// The stable index when the exponent is a pure power (a single stable,
    /// or a composition of pure powers).
    pub fn stable_index(&self) -> Option<f64> {
        fn index(kind: &ExponentKind) -> Option<f64> {
            match kind {
                ExponentKind::Stable { alpha } => Some(*alpha),
                ExponentKind::Mix { terms } if terms.len() == 1 => Some(terms[0].alpha),
                ExponentKind::Mix { .. } => None,
                ExponentKind::Compose { outer, inner } => Some(index(outer)? * index(inner)?),
            }
        }
        index(&self.kind)
    }

    /// Fits the weak scaling window on the default range `[1, 1e6]`.
    pub fn window(&self) -> ScalingWindow {
        estimate_scaling_indices(|l| self.value(l), (1.0, 1e6), 200, false)
            .expect("positive exponent on a positive grid")
    }
}

/// `compose_exponents(psi, phi)`: the exponent `psi(phi(lambda))`.
///
/// Both inputs must be normalized (which the constructors enforce), so the
/// composition is normalized as well. Its scaling window exponents are the
/// products of the inputs' window exponents; see [`ScalingWindow::compose`].
pub fn compose_exponents(outer: &LaplaceExponent, inner: &LaplaceExponent) -> Result<LaplaceExponent> {
    LaplaceExponent::from_kind(ExponentKind::Compose {
        outer: Box::new(outer.kind.clone()),
        inner: Box::new(inner.kind.clone()),
    })
}

/// Evaluates a Laplace exponent; thin named wrapper over [`LaplaceExponent::eval`].
pub fn eval_exponent(f: &LaplaceExponent, lambda: f64) -> Result<f64> {
    f.eval(lambda)
}

/// Two-sided power bounds `lower_c (R/r)^{lower_exp} <= f(R)/f(r) <=
/// upper_c (R/r)^{upper_exp}` fitted over a range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingWindow {
    pub lower_constant: f64,
    pub lower_exponent: f64,
    pub upper_constant: f64,
    pub upper_exponent: f64,
    pub range: (f64, f64),
}

impl ScalingWindow {
    /// Window of a composition: exponents multiply, constants combine as
    /// `b a^{gamma}` with the outer window's constants `b` and exponents
    /// `gamma` applied to the inner constants `a`.
    pub fn compose(outer: &ScalingWindow, inner: &ScalingWindow) -> ScalingWindow {
        ScalingWindow {
            lower_constant: outer.lower_constant * inner.lower_constant.powf(outer.lower_exponent),
            lower_exponent: outer.lower_exponent * inner.lower_exponent,
            upper_constant: outer.upper_constant * inner.upper_constant.powf(outer.upper_exponent),
            upper_exponent: outer.upper_exponent * inner.upper_exponent,
            range: inner.range,
        }
    }
}

/// Fits inf/sup log-slopes of `f` over all ordered pairs of a geometric grid.
///
/// The window range is `[r, R]` with `r >= 1` unless `allow_below_one` is
/// set (extending below 1 changes the fitted constants, which are reported).
pub fn estimate_scaling_indices<F: Fn(f64) -> f64>(
    f: F,
    range: (f64, f64),
    grid_size: usize,
    allow_below_one: bool,
) -> Result<ScalingWindow> {
    let (r, big_r) = range;
    if !(big_r > r) {
        return Err(Error::domain(format!("range must satisfy R > r, got [{r}, {big_r}]")));
    }
    let min_r = if allow_below_one { 0.0 } else { 1.0 };
    if !(r >= min_r) || !(r > 0.0) {
        return Err(Error::domain(format!(
            "window range starts at {r}; the window at infinity requires r >= 1 \
             (pass allow_below_one to extend)"
        )));
    }
    if grid_size < 2 {
        return Err(Error::domain("grid size must be at least 2"));
    }

    let log_r = r.ln();
    let step = (big_r.ln() - log_r) / (grid_size - 1) as f64;
    let xs: Vec<f64> = (0..grid_size).map(|i| (log_r + step * i as f64).exp()).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    for (&x, &y) in xs.iter().zip(&ys) {
        if !(y > 0.0) || !y.is_finite() {
            return Err(Error::domain(format!("non-positive sample f({x}) = {y}")));
        }
    }

    let mut lower = f64::INFINITY;
    let mut upper = f64::NEG_INFINITY;
    for i in 0..grid_size {
        for j in (i + 1)..grid_size {
            let slope = (ys[j] / ys[i]).ln() / (xs[j] / xs[i]).ln();
            lower = lower.min(slope);
            upper = upper.max(slope);
        }
    }

    // Residual constants: smallest / largest multiplier making each bound tight.
    let mut lower_c = f64::INFINITY;
    let mut upper_c = f64::NEG_INFINITY;
    for i in 0..grid_size {
        for j in (i + 1)..grid_size {
            let ratio = ys[j] / ys[i];
            let scale = xs[j] / xs[i];
            lower_c = lower_c.min(ratio / scale.powf(lower));
            upper_c = upper_c.max(ratio / scale.powf(upper));
        }
    }

    Ok(ScalingWindow {
        lower_constant: lower_c,
        lower_exponent: lower,
        upper_constant: upper_c,
        upper_exponent: upper,
        range,
    })
}

/// The scale function `Phi(r) = 1 / phi(r^{-2})` with a certified numeric
/// inverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleProfile {
    exponent: LaplaceExponent,
    inverse_tolerance: f64,
}

/// Builds the scale profile of `phi`.
pub fn scale_profile(phi: &LaplaceExponent) -> ScaleProfile {
    ScaleProfile {
        exponent: phi.clone(),
        inverse_tolerance: 1e-10,
    }
}

impl ScaleProfile {
    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.inverse_tolerance = tol;
        self
    }

    pub fn exponent(&self) -> &LaplaceExponent {
        &self.exponent
    }

    pub fn inverse_tolerance(&self) -> f64 {
        self.inverse_tolerance
    }

    /// `Phi(r)`; strictly increasing with `Phi(1) = 1`.
    #[inline]
    pub fn value(&self, r: f64) -> f64 {
        1.0 / self.exponent.value(r.powi(-2))
    }

    /// For pure-power exponents the profile is `r^{2 alpha}`.
    fn power(&self) -> Option<f64> {
        self.exponent.stable_index().map(|a| 2.0 * a)
    }

    /// `Phi^{-1}(t)` by bracketing bisection to the profile's relative
    /// tolerance. Pure-power profiles invert in closed form.
    pub fn inverse(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Range(format!("inversion target must be positive, got {t}")));
        }
        if let Some(p) = self.power() {
            return Ok(t.powf(1.0 / p));
        }
        // Phi is strictly increasing, so expanding brackets is safe.
        let mut lo = 1.0_f64;
        let mut hi = 1.0_f64;
        let mut guard = 0;
        while self.value(lo) > t {
            lo *= 0.25;
            guard += 1;
            if guard > 600 {
                return Err(Error::Range(format!("inversion target {t} below achievable range")));
            }
        }
        while self.value(hi) < t {
            hi *= 4.0;
            guard += 1;
            if guard > 600 {
                return Err(Error::Range(format!("inversion target {t} above achievable range")));
            }
        }
        let tol = self.inverse_tolerance;
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if self.value(mid) < t {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= tol * mid {
                break;
            }
        }
        Ok((lo * hi).sqrt())
    }
}

/// Convenience free function mirroring the operation name.
pub fn invert_scale(profile: &ScaleProfile, t: f64) -> Result<f64> {
    profile.inverse(t)
}

/// How the potential and Levy densities of the outer subordinator are
/// evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DensityMode {
    /// Closed-form stable densities; requires a pure stable exponent.
    ExactStable,
    /// `nu(t) = psi(1/t)/t`, `v(t) = 1/(t psi(1/t))`: comparability proxies.
    AsymptoticProxy,
}

/// The outer subordinator: exponent `psi` plus a density evaluation mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubordinatorLaw {
    exponent: LaplaceExponent,
    mode: DensityMode,
}

impl SubordinatorLaw {
    /// Exact stable law with index `gamma`.
    pub fn exact_stable(gamma: f64) -> Result<Self> {
        Ok(Self {
            exponent: LaplaceExponent::stable(gamma)?,
            mode: DensityMode::ExactStable,
        })
    }

    /// Proxy densities for a general exponent. Downstream quantities built
    /// from proxies are comparability-grade only.
    pub fn proxy(exponent: LaplaceExponent) -> Self {
        Self {
            exponent,
            mode: DensityMode::AsymptoticProxy,
        }
    }

    pub fn new(exponent: LaplaceExponent, mode: DensityMode) -> Result<Self> {
        if mode == DensityMode::ExactStable && exponent.stable_index().is_none() {
            return Err(Error::config(
                "exact-stable density mode requires a pure stable exponent",
            ));
        }
        Ok(Self { exponent, mode })
    }

    pub fn exponent(&self) -> &LaplaceExponent {
        &self.exponent
    }

    pub fn mode(&self) -> DensityMode {
        self.mode
    }

    pub fn is_proxy(&self) -> bool {
        self.mode == DensityMode::AsymptoticProxy
    }

    /// The stable index when in exact mode.
    pub fn stable_index(&self) -> Option<f64> {
        match self.mode {
            DensityMode::ExactStable => self.exponent.stable_index(),
            DensityMode::AsymptoticProxy => None,
        }
    }

    #[inline]
    pub fn psi(&self, lambda: f64) -> f64 {
        self.exponent.value(lambda)
    }

    /// Levy density `nu(t)`.
    #[inline]
    pub fn nu(&self, t: f64) -> f64 {
        match self.mode {
            DensityMode::ExactStable => {
                let g = self.exponent.stable_index().expect("checked at construction");
                g * t.powf(-1.0 - g) / gamma(1.0 - g)
            }
            DensityMode::AsymptoticProxy => self.psi(1.0 / t) / t,
        }
    }

    /// Potential density `v(t)`.
    #[inline]
    pub fn v(&self, t: f64) -> f64 {
        match self.mode {
            DensityMode::ExactStable => {
                let g = self.exponent.stable_index().expect("checked at construction");
                t.powf(g - 1.0) / gamma(g)
            }
            DensityMode::AsymptoticProxy => 1.0 / (t * self.psi(1.0 / t)),
        }
    }

    /// Fitted doubling constant: max of `nu(t)/nu(2t)` over a log grid of
    /// `(0, m]`.
    pub fn doubling_constant(&self, m: f64, grid: usize) -> f64 {
        let lo = (m * 1e-8).ln();
        let hi = m.ln();
        (0..grid)
            .map(|i| {
                let t = (lo + (hi - lo) * i as f64 / (grid - 1) as f64).exp();
                self.nu(t) / self.nu(2.0 * t)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `(nu(t), v(t))` with domain validation.
pub fn subordinator_densities(law: &SubordinatorLaw, t: f64) -> Result<(f64, f64)> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("densities require t > 0, got {t}")));
    }
    Ok((law.nu(t), law.v(t)))
}
