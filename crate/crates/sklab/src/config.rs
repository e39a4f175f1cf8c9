//! Experiment configuration: one schema covering exponent specs, the test
//! domain, and every experiment kind the laboratory can dispatch.
//!
//! Unknown keys are rejected everywhere so config typos surface as schema
//! errors naming the offending key.

use serde::{Deserialize, Serialize};

use crate::bernstein::{
    compose_exponents, scale_profile, DensityMode, LaplaceExponent, SubordinatorLaw,
};
use crate::domain::{DomainGeometry, Point};
use crate::error::{Error, Result};
use crate::estimates::{ComparisonKernel, UNIT_DISK_LAMBDA1};
use crate::montecarlo::{BoundaryMode, PathConfig, RatioExperimentKind};
use crate::quadrature::{ProfileMode, QuadratureSpec};

/// Tagged description of a Laplace exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExponentSpec {
    Stable { alpha: f64 },
    Mix { terms: Vec<MixTermSpec> },
    Compose { outer: Box<ExponentSpec>, inner: Box<ExponentSpec> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixTermSpec {
    pub weight: f64,
    pub alpha: f64,
}

impl ExponentSpec {
    pub fn build(&self) -> Result<LaplaceExponent> {
        match self {
            ExponentSpec::Stable { alpha } => LaplaceExponent::stable(*alpha),
            ExponentSpec::Mix { terms } => {
                let pairs: Vec<(f64, f64)> = terms.iter().map(|t| (t.weight, t.alpha)).collect();
                LaplaceExponent::mix(&pairs)
            }
            ExponentSpec::Compose { outer, inner } => {
                compose_exponents(&outer.build()?, &inner.build()?)
            }
        }
    }
}

/// Domain description; `center` defaults to the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DomainSpec {
    Disk {
        #[serde(default)]
        center: [f64; 2],
        radius: f64,
    },
    Annulus {
        #[serde(default)]
        center: [f64; 2],
        r_in: f64,
        r_out: f64,
    },
}

impl DomainSpec {
    pub fn build(&self, dimension: usize) -> Result<DomainGeometry> {
        match self {
            DomainSpec::Disk { center, radius } => {
                let c = Point::xy(center[0], center[1]);
                if dimension == 3 {
                    DomainGeometry::ball(c, *radius)
                } else {
                    DomainGeometry::disk(c, *radius)
                }
            }
            DomainSpec::Annulus { center, r_in, r_out } => {
                if dimension != 2 {
                    return Err(Error::config("annulus domains are two-dimensional"));
                }
                DomainGeometry::annulus(Point::xy(center[0], center[1]), *r_in, *r_out)
            }
        }
    }
}

fn default_dimension() -> usize {
    2
}

fn default_lambda1() -> f64 {
    UNIT_DISK_LAMBDA1
}

fn default_relative_tolerance() -> f64 {
    1e-8
}

fn default_max_panels() -> usize {
    200_000
}

/// Quadrature tolerances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    #[serde(default = "default_relative_tolerance")]
    pub relative_tolerance: f64,
    #[serde(default = "default_max_panels")]
    pub max_panels: usize,
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        Self {
            relative_tolerance: default_relative_tolerance(),
            max_panels: default_max_panels(),
        }
    }
}

fn default_inner_substeps() -> usize {
    4
}

/// Path discretization knobs; indices come from the exponent specs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    #[serde(default)]
    pub outer_step: f64,
    #[serde(default = "default_inner_substeps")]
    pub inner_substeps: usize,
    #[serde(default)]
    pub time_cap: f64,
    #[serde(default = "default_boundary_mode")]
    pub boundary_mode: BoundaryMode,
}

fn default_boundary_mode() -> BoundaryMode {
    BoundaryMode::GridOnly
}

impl Default for PathSpec {
    fn default() -> Self {
        Self {
            outer_step: 0.0,
            inner_substeps: default_inner_substeps(),
            time_cap: 0.0,
            boundary_mode: default_boundary_mode(),
        }
    }
}

fn default_cap() -> f64 {
    100.0
}

fn default_sweep_decades() -> f64 {
    3.0
}

fn default_sweep_per_axis() -> usize {
    12
}

/// Sweep density for the lemma checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepParams {
    #[serde(default = "default_sweep_decades")]
    pub decades: f64,
    #[serde(default = "default_sweep_per_axis")]
    pub per_axis: usize,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            decades: default_sweep_decades(),
            per_axis: default_sweep_per_axis(),
        }
    }
}

fn default_profile_mode() -> ProfileMode {
    ProfileMode::Strict
}

fn default_n_paths() -> u32 {
    100_000
}

fn default_growth_min() -> f64 {
    2.0
}

fn default_corr_min() -> f64 {
    0.9
}

fn default_control_cap() -> f64 {
    1.5
}

fn default_slope_tol() -> f64 {
    0.1
}

fn default_ray_points() -> usize {
    8
}

fn default_ray_decades() -> f64 {
    2.0
}

/// Every experiment the laboratory can run. The `kind` tag is the config
/// vocabulary; subcommands gate which kinds they accept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExperimentKind {
    /// Exponent inspection: windows, profile round trips, density oracles.
    ExponentInspect {},

    /// Ratio sweep of one comparison statement.
    VerifyLemma {
        id: String,
        #[serde(default)]
        sweep: SweepParams,
        #[serde(default = "default_cap")]
        cap: f64,
        /// Re-run at doubled grid density and score the stability of the
        /// fitted constant.
        #[serde(default)]
        refine: bool,
    },

    /// Ratio sweep of the fully assembled Green comparison.
    AssembledGreen {
        #[serde(default)]
        sweep: SweepParams,
        #[serde(default = "default_cap")]
        cap: f64,
        #[serde(default)]
        refine: bool,
    },

    /// Boundary decay slope of the assembled jumping comparison.
    JumpPhase {
        #[serde(default = "default_jump_delta_y")]
        delta_y: f64,
        #[serde(default = "default_jump_r")]
        r: f64,
        #[serde(default = "default_jump_depth_hi")]
        depth_hi: f64,
        #[serde(default = "default_jump_depth_lo")]
        depth_lo: f64,
        #[serde(default = "default_jump_points")]
        points: usize,
        #[serde(default = "default_jump_slope_tol")]
        slope_tol: f64,
        #[serde(default = "default_jump_corr_min")]
        corr_min: f64,
    },

    /// Exit-time comparison integral along a boundary ray.
    ExitTimeQuad {
        #[serde(default)]
        q_angle: f64,
        #[serde(default = "default_ray_r0")]
        r0: f64,
        #[serde(default = "default_ray_decades")]
        decades: f64,
        #[serde(default = "default_ray_points")]
        points: usize,
        #[serde(default = "default_angular")]
        angular: usize,
        #[serde(default = "default_slope_tol")]
        slope_tol: f64,
    },

    /// Killing-density slope along a boundary ray.
    KillingDensity {
        #[serde(default)]
        q_angle: f64,
        #[serde(default = "default_ray_r0")]
        r0: f64,
        #[serde(default = "default_ray_decades")]
        decades: f64,
        #[serde(default = "default_ray_points")]
        points: usize,
        #[serde(default = "default_slope_tol")]
        slope_tol: f64,
    },

    /// Quadrature profile of the boundary construction.
    CounterexampleQuad {
        #[serde(default)]
        q_angle: f64,
        #[serde(default = "default_ce_r0")]
        r0: f64,
        #[serde(default = "default_ce_depth_hi")]
        depth_hi_frac: f64,
        #[serde(default = "default_ray_decades")]
        decades: f64,
        #[serde(default = "default_ce_points")]
        points: usize,
        #[serde(default = "default_profile_mode")]
        mode: ProfileMode,
        #[serde(default = "default_growth_min")]
        growth_min: f64,
        #[serde(default = "default_corr_min")]
        corr_min: f64,
        #[serde(default = "default_control_cap")]
        control_cap: f64,
    },

    /// Killed-motion survival slope along a boundary ray.
    McSurvival {
        #[serde(default)]
        q_angle: f64,
        #[serde(default = "default_ray_r0")]
        r0: f64,
        #[serde(default = "default_survival_t")]
        t: f64,
        #[serde(default = "default_survival_steps")]
        z_steps: usize,
        #[serde(default = "default_survival_points")]
        points: usize,
        #[serde(default = "default_n_paths")]
        n: u32,
        #[serde(default = "default_survival_slope_tol")]
        slope_tol: f64,
        #[serde(default)]
        path: PathSpec,
    },

    /// Mean lifetime along a boundary ray, slope-fitted per regime.
    McLifetime {
        #[serde(default)]
        q_angle: f64,
        #[serde(default = "default_ray_r0")]
        r0: f64,
        #[serde(default = "default_ray_decades")]
        decades: f64,
        #[serde(default = "default_ray_points")]
        points: usize,
        #[serde(default = "default_n_paths")]
        n: u32,
        #[serde(default = "default_slope_tol")]
        slope_tol: f64,
        #[serde(default = "default_corr_min")]
        corr_min: f64,
        #[serde(default)]
        path: PathSpec,
    },

    /// Occupation-based Green cells against the assembled comparison.
    McGreenOccupation {
        #[serde(default = "default_occupation_x")]
        x: [f64; 2],
        #[serde(default = "default_occupation_n")]
        n: u32,
        #[serde(default = "default_cap")]
        cap: f64,
        /// Also run at 4n and score stability of the fitted constant.
        #[serde(default)]
        refine: bool,
        #[serde(default)]
        path: PathSpec,
    },

    /// Harmonic-ratio experiment (uniform comparability, boundary growth,
    /// boundary decay rate, interior decay rate).
    McRatio {
        scenario: RatioExperimentKind,
        #[serde(default = "default_ratio_n")]
        n: u32,
        #[serde(default = "default_ratio_cap")]
        cap: f64,
        #[serde(default)]
        refine: bool,
        #[serde(default)]
        path: PathSpec,
    },

    /// Path-level profile of the boundary construction.
    McCounterexample {
        #[serde(default)]
        q_angle: f64,
        #[serde(default = "default_ce_r0")]
        r0: f64,
        #[serde(default = "default_ce_depth_hi")]
        depth_hi_frac: f64,
        #[serde(default = "default_mc_ce_decades")]
        decades: f64,
        #[serde(default = "default_mc_ce_points")]
        points: usize,
        #[serde(default = "default_mc_ce_n")]
        n: u32,
        #[serde(default = "default_profile_mode")]
        mode: ProfileMode,
        #[serde(default = "default_growth_min")]
        growth_min: f64,
        #[serde(default = "default_corr_min")]
        corr_min: f64,
        #[serde(default = "default_control_cap")]
        control_cap: f64,
        #[serde(default)]
        path: PathSpec,
    },
}

fn default_jump_delta_y() -> f64 {
    0.3
}

fn default_jump_r() -> f64 {
    0.4
}

fn default_jump_depth_hi() -> f64 {
    1e-2
}

fn default_jump_depth_lo() -> f64 {
    1e-4
}

fn default_jump_points() -> usize {
    9
}

fn default_jump_slope_tol() -> f64 {
    0.05
}

fn default_jump_corr_min() -> f64 {
    0.95
}

fn default_ray_r0() -> f64 {
    0.25
}

fn default_angular() -> usize {
    64
}

fn default_ce_r0() -> f64 {
    0.1
}

fn default_ce_depth_hi() -> f64 {
    0.1
}

fn default_ce_points() -> usize {
    9
}

fn default_survival_t() -> f64 {
    0.05
}

fn default_survival_steps() -> usize {
    256
}

fn default_survival_points() -> usize {
    6
}

fn default_survival_slope_tol() -> f64 {
    0.15
}

fn default_occupation_x() -> [f64; 2] {
    [0.3, 0.0]
}

fn default_occupation_n() -> u32 {
    30_000
}

fn default_ratio_n() -> u32 {
    40_000
}

fn default_ratio_cap() -> f64 {
    50.0
}

fn default_mc_ce_decades() -> f64 {
    2.0
}

fn default_mc_ce_points() -> usize {
    9
}

fn default_mc_ce_n() -> u32 {
    30_000
}

/// Top-level experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// 0 uses the process-wide default worker pool.
    #[serde(default)]
    pub workers: usize,
    pub phi: ExponentSpec,
    pub psi: ExponentSpec,
    /// Density mode for the outer law; defaults to exact for pure stable
    /// `psi` and to the comparability proxy otherwise.
    #[serde(default)]
    pub psi_density: Option<DensityMode>,
    pub domain: DomainSpec,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    /// Large-time rate of the killed semigroup; defaults to the unit-disk
    /// Laplacian value.
    #[serde(default = "default_lambda1")]
    pub lambda1: f64,
    #[serde(default)]
    pub tolerances: ToleranceSpec,
    pub experiment: ExperimentKind,
}

/// Everything the dispatcher needs, built once from a config.
pub struct LabContext {
    pub config: ExperimentConfig,
    pub phi: LaplaceExponent,
    pub psi: LaplaceExponent,
    pub law: SubordinatorLaw,
    pub kernel: ComparisonKernel,
    pub domain: DomainGeometry,
    pub quadrature: QuadratureSpec,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn build(self) -> Result<LabContext> {
        let phi = self.phi.build()?;
        let psi = self.psi.build()?;
        let mode = match self.psi_density {
            Some(m) => m,
            None => {
                if psi.stable_index().is_some() {
                    DensityMode::ExactStable
                } else {
                    DensityMode::AsymptoticProxy
                }
            }
        };
        let law = SubordinatorLaw::new(psi.clone(), mode)?;
        let domain = self.domain.build(self.dimension)?;
        let profile = scale_profile(&phi);
        let kernel = ComparisonKernel::new(self.dimension, profile, law.clone(), self.lambda1)?;
        let quadrature = QuadratureSpec {
            relative_tolerance: self.tolerances.relative_tolerance,
            max_panels: self.tolerances.max_panels,
            split_points: Vec::new(),
        };
        quadrature.validate()?;
        Ok(LabContext {
            config: self,
            phi,
            psi,
            law,
            kernel,
            domain,
            quadrature,
        })
    }

    /// Path configuration for the simulation experiments; both exponents
    /// must be pure stable powers to be samplable.
    pub fn path_config(&self, spec: &PathSpec) -> Result<PathConfig> {
        let phi_index = self
            .phi
            .build()?
            .stable_index()
            .ok_or_else(|| Error::config("simulation supports pure stable inner exponents only"))?;
        let psi_index = self
            .psi
            .build()?
            .stable_index()
            .ok_or_else(|| Error::config("simulation supports pure stable outer exponents only"))?;
        let cfg = PathConfig {
            phi_index,
            psi_index,
            outer_step: spec.outer_step,
            inner_substeps: spec.inner_substeps,
            time_cap: spec.time_cap,
            boundary_mode: spec.boundary_mode,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
