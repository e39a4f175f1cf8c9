//! Path simulation of the subordinate killed process and its estimators.
//!
//! The process is simulated on an outer grid of its own clock: each outer
//! step advances the subordinator clock by a stable increment, and the
//! underlying killed subordinate Brownian motion is advanced through that
//! much intrinsic time in a fixed number of inner substeps, with killing
//! checked on the inner skeleton. Only stable building blocks are sampled;
//! general exponents are served by the quadrature module.
//!
//! Estimators draw every path from its own counter-indexed random stream,
//! so results are byte-identical for a fixed seed regardless of the worker
//! count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{DomainGeometry, LocalizationBox, Point};
use crate::error::{Error, Result};
use crate::quadrature::ProfileMode;

/// Deterministic substream source: a master seed plus a stream index.
///
/// Substreams are laid out as `[base:24][lane:8][counter:32]` inside the
/// generator's 64-bit stream id, so distinct estimators, pilot runs and
/// paths never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_index: u32,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u32) -> Self {
        Self {
            master_seed,
            stream_index,
        }
    }

    /// Generator for path `counter` in the given lane.
    pub fn substream(&self, lane: u8, counter: u32) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.master_seed);
        let id = ((self.stream_index as u64 & 0xFF_FFFF) << 40)
            | ((lane as u64) << 32)
            | counter as u64;
        rng.set_stream(id);
        rng
    }
}

const LANE_MAIN: u8 = 0;
const LANE_PILOT: u8 = 1;

#[inline]
fn clamp_open01(u: f64) -> f64 {
    u.clamp(1e-12, 1.0 - 1e-12)
}

/// Draw of the standard one-sided stable variable with Laplace transform
/// `exp(-lambda^gamma)` (Kanter's representation).
pub fn sample_standard_stable(gamma: f64, rng: &mut impl Rng) -> f64 {
    let u = clamp_open01(rng.random::<f64>()) * std::f64::consts::PI;
    let w = -clamp_open01(rng.random::<f64>()).ln();
    let s1 = (gamma * u).sin() / u.sin().powf(1.0 / gamma);
    let s2 = (((1.0 - gamma) * u).sin() / w).powf((1.0 - gamma) / gamma);
    s1 * s2
}

/// Subordinator increment over duration `t`, normalized so the Laplace
/// exponent is `lambda^gamma`.
pub fn sample_stable_increment(gamma: f64, t: f64, rng: &mut impl Rng) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::domain(format!("stable index must lie in (0,1), got {gamma}")));
    }
    if !(t > 0.0) {
        return Err(Error::domain(format!("duration must be positive, got {t}")));
    }
    Ok(t.powf(1.0 / gamma) * sample_standard_stable(gamma, rng))
}

/// One displacement of the subordinate Brownian motion over `dt`: a stable
/// time draw followed by a centered Gaussian with covariance `2 S I`.
pub fn step_subordinate_bm(phi_index: f64, dt: f64, rng: &mut impl Rng, dim: usize) -> Result<Point> {
    let s = sample_stable_increment(phi_index, dt, rng)?;
    Ok(gaussian_displacement(s, rng, dim))
}

#[inline]
fn gaussian_displacement(s: f64, rng: &mut impl Rng, dim: usize) -> Point {
    let sigma = (2.0 * s).sqrt();
    let mut out = [0.0; 3];
    for slot in out.iter_mut().take(dim) {
        let g: f64 = rng.sample(StandardNormal);
        *slot = sigma * g;
    }
    Point(out)
}

/// How killing is detected along the inner skeleton.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryMode {
    /// Exit checked at skeleton points only; excursion misses are a bias
    /// quantified by the refinement study.
    GridOnly,
    /// Adds a Gaussian-bridge exit test inside each inner substep,
    /// conditional on the sampled subordinator increment.
    BridgeCorrected,
}

/// Discretization of the outer clock and the inner skeleton.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    /// Index of the inner (Brownian) subordinator.
    pub phi_index: f64,
    /// Index of the outer clock subordinator.
    pub psi_index: f64,
    /// Outer clock step; 0 selects it from a pilot run so the median path
    /// makes about 200 outer steps.
    pub outer_step: f64,
    /// Inner skeleton substeps per outer step.
    pub inner_substeps: usize,
    /// Cap on the outer clock; 0 selects `20_000` outer steps.
    pub time_cap: f64,
    pub boundary_mode: BoundaryMode,
}

impl PathConfig {
    pub fn stable(phi_index: f64, psi_index: f64) -> Result<Self> {
        let cfg = Self {
            phi_index,
            psi_index,
            outer_step: 0.0,
            inner_substeps: 4,
            time_cap: 0.0,
            boundary_mode: BoundaryMode::GridOnly,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phi_index > 0.0 && self.phi_index < 1.0) {
            return Err(Error::config(format!("phi index must lie in (0,1), got {}", self.phi_index)));
        }
        if !(self.psi_index > 0.0 && self.psi_index < 1.0) {
            return Err(Error::config(format!("psi index must lie in (0,1), got {}", self.psi_index)));
        }
        if self.outer_step < 0.0 || self.time_cap < 0.0 {
            return Err(Error::config("steps and caps must be nonnegative"));
        }
        if self.inner_substeps == 0 {
            return Err(Error::config("at least one inner substep is required"));
        }
        Ok(())
    }

    fn clock_cap(&self, h: f64) -> f64 {
        if self.time_cap > 0.0 {
            self.time_cap
        } else {
            h * 1e7
        }
    }
}

/// Outer steps per e-fold of elapsed clock once past the base resolution.
/// The step grows as `h_k = max(h, t / STEPS_PER_EFOLD)`, so death times
/// keep a fixed relative resolution while long-lived interior excursions
/// stay affordable.
const STEPS_PER_EFOLD: f64 = 200.0;

/// Terminal state of one walk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WalkEnd {
    /// Killed inside the domain; `last_inside` is the final skeleton
    /// position before the killing jump.
    Died { t: f64, last_inside: Point },
    /// The visitor requested a stop (e.g. first skeleton point outside a
    /// subregion).
    Stopped { t: f64, pos: Point },
    /// The clock cap was reached while still alive.
    Truncated { t: f64, pos: Point },
}

/// Visitor verdict per outer step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

/// Hard bound on how much finer than the base granularity the inner
/// skeleton may refine near the boundary.
const MAX_INNER_REFINE: f64 = 4096.0;

/// Advances the killed motion through `dt_clock` of intrinsic time.
/// Returns the last inside position when the path is killed.
///
/// The substep size adapts to the current boundary distance: a substep is
/// never allowed a typical displacement beyond a quarter of the distance
/// (down to the refinement bound), so exits hiding inside large clock
/// increments are still detected.
fn advance_killed(
    domain: &DomainGeometry,
    cfg: &PathConfig,
    z: &mut Point,
    dt_clock: f64,
    rng: &mut ChaCha12Rng,
) -> Option<Point> {
    let base = dt_clock / cfg.inner_substeps as f64;
    let floor = base / MAX_INNER_REFINE;
    let dim = domain.dim();
    let mut remaining = dt_clock;
    let eps = dt_clock * 1e-12;
    while remaining > eps {
        let delta = domain.delta(z);
        let fine = (0.25 * delta).powf(2.0 * cfg.phi_index);
        let ds = remaining.min(base.min(fine.max(floor)));
        let s = ds.powf(1.0 / cfg.phi_index) * sample_standard_stable(cfg.phi_index, rng);
        let disp = gaussian_displacement(s, rng, dim);
        let next = z.add(&disp);
        if !domain.contains(&next) {
            return Some(*z);
        }
        if cfg.boundary_mode == BoundaryMode::BridgeCorrected {
            let d1 = domain.delta(&next);
            let p_cross = (-delta * d1 / s).exp();
            if rng.random::<f64>() < p_cross {
                return Some(*z);
            }
        }
        *z = next;
        remaining -= ds;
    }
    None
}

/// Walks one path of the subordinate killed process on the outer grid.
///
/// The visitor sees `(t_k, step_width, position)` at every outer time while
/// alive, starting at `t_0 = 0`; the step width is the length of the clock
/// interval the position represents in left-endpoint Riemann sums.
/// Returning [`Flow::Stop`] ends the walk.
pub fn walk_yd(
    domain: &DomainGeometry,
    cfg: &PathConfig,
    h: f64,
    x0: &Point,
    rng: &mut ChaCha12Rng,
    visit: &mut impl FnMut(f64, f64, &Point) -> Flow,
) -> WalkEnd {
    debug_assert!(h > 0.0);
    let mut pos = *x0;
    let cap = cfg.clock_cap(h);
    let mut t = 0.0f64;
    loop {
        let h_k = h.max(t / STEPS_PER_EFOLD);
        if visit(t, h_k, &pos) == Flow::Stop {
            return WalkEnd::Stopped { t, pos };
        }
        if t >= cap {
            return WalkEnd::Truncated { t, pos };
        }
        let dt_clock = h_k.powf(1.0 / cfg.psi_index) * sample_standard_stable(cfg.psi_index, rng);
        if let Some(last_inside) = advance_killed(domain, cfg, &mut pos, dt_clock, rng) {
            return WalkEnd::Died {
                t: t + h_k,
                last_inside,
            };
        }
        t += h_k;
    }
}

/// Recorded skeleton of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub times: Vec<f64>,
    pub positions: Vec<Point>,
    /// Death time and interior death position, when the path died.
    pub death: Option<(f64, Point)>,
    pub truncated: bool,
}

/// Simulates one path and records the full outer skeleton.
pub fn simulate_yd_path(
    x0: &Point,
    domain: &DomainGeometry,
    cfg: &PathConfig,
    h: f64,
    rng: &mut ChaCha12Rng,
) -> Result<PathRecord> {
    cfg.validate()?;
    if !domain.dist_to_boundary(x0).interior {
        return Err(Error::domain("path start must be interior"));
    }
    let mut times = Vec::new();
    let mut positions = Vec::new();
    let end = walk_yd(domain, cfg, h, x0, rng, &mut |t, _w, p| {
        times.push(t);
        positions.push(*p);
        Flow::Continue
    });
    let (death, truncated) = match end {
        WalkEnd::Died { t, last_inside } => (Some((t, last_inside)), false),
        WalkEnd::Truncated { .. } => (None, true),
        WalkEnd::Stopped { .. } => unreachable!("recording visitor never stops"),
    };
    Ok(PathRecord {
        times,
        positions,
        death,
        truncated,
    })
}

/// Monte Carlo value with error bars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
}

impl McEstimate {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len() as u64;
        assert!(n >= 1, "an estimate needs at least one sample");
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            stderr: (var / n as f64).sqrt(),
            n,
        }
    }
}

fn with_pool<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    if workers == 0 {
        f()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("worker pool")
            .install(f)
    }
}

/// Maps `f` over per-path substreams; the collected order (and therefore
/// every merged estimate) is independent of scheduling.
pub fn map_paths<T: Send>(
    n: u32,
    stream: &RngStream,
    workers: usize,
    f: impl Fn(u32, &mut ChaCha12Rng) -> T + Sync,
) -> Vec<T> {
    with_pool(workers, || {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream.substream(LANE_MAIN, i);
                f(i, &mut rng)
            })
            .collect()
    })
}

/// Resolves the outer step so the median path resolves in about 200 base
/// steps: pilot walks measure the median stopping time and the step is set
/// to that median over [`STEPS_PER_EFOLD`]. `stop` marks positions outside
/// the region of interest.
fn resolve_outer_step(
    domain: &DomainGeometry,
    cfg: &PathConfig,
    x0: &Point,
    stop: &(impl Fn(&Point) -> bool + Sync),
    stream: &RngStream,
) -> f64 {
    if cfg.outer_step > 0.0 {
        return cfg.outer_step;
    }
    let delta = domain.delta(x0).max(1e-12);
    let phi_delta = delta.powf(2.0 * cfg.phi_index);
    let predicted = if cfg.psi_index > 0.5 {
        phi_delta.sqrt()
    } else {
        phi_delta.powf(cfg.psi_index)
    };
    let mut h = predicted / STEPS_PER_EFOLD;
    let pilot_paths = 64u32;
    for round in 0..4u32 {
        let mut ends: Vec<f64> = (0..pilot_paths)
            .map(|i| {
                let mut rng = stream.substream(LANE_PILOT, (round << 16) | i);
                match walk_yd(domain, cfg, h, x0, &mut rng, &mut |_, _, p| {
                    if stop(p) {
                        Flow::Stop
                    } else {
                        Flow::Continue
                    }
                }) {
                    WalkEnd::Died { t, .. } | WalkEnd::Stopped { t, .. } | WalkEnd::Truncated { t, .. } => t,
                }
            })
            .collect();
        ends.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = ends[ends.len() / 2].max(f64::MIN_POSITIVE);
        let h_new = (median / STEPS_PER_EFOLD).clamp(h * 1e-3, h * 1e3);
        let ratio = h_new / h;
        h = h_new;
        if (0.5..=2.0).contains(&ratio) {
            break;
        }
    }
    h
}

/// Survival probability of the killed motion (before subordination):
/// fraction of inner skeletons alive at intrinsic time `t`.
pub fn estimate_survival(
    domain: &DomainGeometry,
    phi_index: f64,
    x: &Point,
    t: f64,
    z_steps: usize,
    n: u32,
    stream: &RngStream,
    workers: usize,
) -> Result<McEstimate> {
    if !(phi_index > 0.0 && phi_index < 1.0) {
        return Err(Error::domain(format!("phi index must lie in (0,1), got {phi_index}")));
    }
    if !(t > 0.0) || z_steps == 0 || n == 0 {
        return Err(Error::domain("survival needs t > 0, steps > 0 and paths > 0"));
    }
    if !domain.dist_to_boundary(x).interior {
        return Err(Error::domain("survival start must be interior"));
    }
    let dt = t / z_steps as f64;
    let dim = domain.dim();
    let values = map_paths(n, stream, workers, |_, rng| {
        let mut z = *x;
        for _ in 0..z_steps {
            let s = dt.powf(1.0 / phi_index) * sample_standard_stable(phi_index, rng);
            let next = z.add(&gaussian_displacement(s, rng, dim));
            if !domain.contains(&next) {
                return 0.0;
            }
            z = next;
        }
        1.0
    });
    Ok(McEstimate::from_values(&values))
}

/// Lifetime estimate together with its truncation diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeEstimate {
    pub estimate: McEstimate,
    pub outer_step: f64,
    pub truncated_fraction: f64,
    pub warning: Option<String>,
}

/// Mean lifetime of the subordinate killed process started at `x`.
pub fn estimate_lifetime(
    domain: &DomainGeometry,
    cfg: &PathConfig,
    x: &Point,
    n: u32,
    stream: &RngStream,
    workers: usize,
) -> Result<LifetimeEstimate> {
    cfg.validate()?;
    if !domain.dist_to_boundary(x).interior {
        return Err(Error::domain("lifetime start must be interior"));
    }
    let never = |_: &Point| false;
    let h = resolve_outer_step(domain, cfg, x, &never, stream);
    let results = map_paths(n, stream, workers, |_, rng| {
        match walk_yd(domain, cfg, h, x, rng, &mut |_, _, _| Flow::Continue) {
            WalkEnd::Died { t, .. } => (t, false),
            WalkEnd::Truncated { t, .. } => (t, true),
            WalkEnd::Stopped { .. } => unreachable!(),
        }
    });
    let values: Vec<f64> = results.iter().map(|&(t, _)| t).collect();
    let truncated = results.iter().filter(|&&(_, tr)| tr).count() as f64 / n as f64;
    let warning = (truncated > 0.01).then(|| {
        format!(
            "{:.2}% of paths hit the clock cap; the lifetime estimate is biased low",
            truncated * 100.0
        )
    });
    Ok(LifetimeEstimate {
        estimate: McEstimate::from_values(&values),
        outer_step: h,
        truncated_fraction: truncated,
        warning,
    })
}

/// Harmonic-function estimates `E_x[f_i(Y at the first skeleton point
/// outside U)]`, sharing one path set across all data. Paths that die inside
/// `U` contribute zero.
pub fn estimate_harmonic(
    domain: &DomainGeometry,
    cfg: &PathConfig,
    x: &Point,
    in_region: &(impl Fn(&Point) -> bool + Sync),
    data: &[&(dyn Fn(&Point) -> f64 + Sync)],
    n: u32,
    stream: &RngStream,
    workers: usize,
) -> Result<Vec<McEstimate>> {
    cfg.validate()?;
    if !in_region(x) || !domain.dist_to_boundary(x).interior {
        return Err(Error::domain("harmonic evaluation point must lie inside the subregion"));
    }
    let stop = |p: &Point| !in_region(p);
    let h = resolve_outer_step(domain, cfg, x, &stop, stream);
    let rows: Vec<Vec<f64>> = map_paths(n, stream, workers, |_, rng| {
        let end = walk_yd(domain, cfg, h, x, rng, &mut |_, _, p| {
            if in_region(p) {
                Flow::Continue
            } else {
                Flow::Stop
            }
        });
        match end {
            WalkEnd::Stopped { pos, .. } => data.iter().map(|f| f(&pos)).collect(),
            _ => vec![0.0; data.len()],
        }
    });
    Ok((0..data.len())
        .map(|j| {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            McEstimate::from_values(&col)
        })
        .collect())
}

/// Per-cell expected occupation `int_cell G(x, y) dy`, from time-weighted
/// skeleton occupation, plus the lifetime of the same paths. With cells
/// tiling the whole domain the cell totals sum to the lifetime exactly.
pub fn estimate_occupation_green(
    domain: &DomainGeometry,
    cfg: &PathConfig,
    x: &Point,
    n_cells: usize,
    cell_of: &(impl Fn(&Point) -> Option<usize> + Sync),
    n: u32,
    stream: &RngStream,
    workers: usize,
) -> Result<(Vec<McEstimate>, LifetimeEstimate)> {
    cfg.validate()?;
    if !domain.dist_to_boundary(x).interior {
        return Err(Error::domain("occupation start must be interior"));
    }
    let never = |_: &Point| false;
    let h = resolve_outer_step(domain, cfg, x, &never, stream);
    let rows: Vec<(Vec<f64>, f64, bool)> = map_paths(n, stream, workers, |_, rng| {
        let mut acc = vec![0.0; n_cells];
        let end = walk_yd(domain, cfg, h, x, rng, &mut |_, w, p| {
            if let Some(c) = cell_of(p) {
                if c < n_cells {
                    acc[c] += w;
                }
            }
            Flow::Continue
        });
        match end {
            WalkEnd::Died { t, .. } => (acc, t, false),
            WalkEnd::Truncated { t, .. } => (acc, t, true),
            WalkEnd::Stopped { .. } => unreachable!(),
        }
    });
    let cells = (0..n_cells)
        .map(|c| {
            let col: Vec<f64> = rows.iter().map(|r| r.0[c]).collect();
            McEstimate::from_values(&col)
        })
        .collect();
    let lifetimes: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let truncated = rows.iter().filter(|r| r.2).count() as f64 / n as f64;
    let lifetime = LifetimeEstimate {
        estimate: McEstimate::from_values(&lifetimes),
        outer_step: h,
        truncated_fraction: truncated,
        warning: None,
    };
    Ok((cells, lifetime))
}

/// Additive-functional profile of the boundary construction: accumulates
/// `Phi(delta)^w` along the skeleton until the path leaves the localization
/// box or dies, normalized by `Phi(delta(x))^{1/2}`.
///
/// In strict mode the weight exponent is `1/2 - gamma` and requires
/// `gamma <= 1/2`; control mode clamps the exponent at zero, the
/// high-index limit shape.
pub fn counterexample_mc(
    domain: &DomainGeometry,
    cfg: &PathConfig,
    v_box: &LocalizationBox,
    xs: &[Point],
    mode: ProfileMode,
    n: u32,
    stream: &RngStream,
    workers: usize,
) -> Result<Vec<McEstimate>> {
    cfg.validate()?;
    let gamma = cfg.psi_index;
    if mode == ProfileMode::Strict && gamma > 0.5 {
        return Err(Error::config(format!(
            "the construction applies only at or below index 1/2, got gamma = {gamma}; \
             run in control mode for the high-index contrast"
        )));
    }
    let weight_exp = (0.5 - gamma).max(0.0);
    let two_phi = 2.0 * cfg.phi_index;
    let mut out = Vec::with_capacity(xs.len());
    for (idx, x) in xs.iter().enumerate() {
        if !v_box.contains(x) {
            return Err(Error::config("profile point lies outside the localization box"));
        }
        let stop = |p: &Point| !v_box.contains(p);
        let point_stream = RngStream::new(stream.master_seed, stream.stream_index + idx as u32 + 1);
        let h = resolve_outer_step(domain, cfg, x, &stop, &point_stream);
        let norm = domain.delta(x).powf(two_phi).sqrt();
        let values = map_paths(n, &point_stream, workers, |_, rng| {
            let mut acc = 0.0;
            walk_yd(domain, cfg, h, x, rng, &mut |_, w, p| {
                if !v_box.contains(p) {
                    return Flow::Stop;
                }
                acc += domain.delta(p).powf(two_phi * weight_exp) * w;
                Flow::Continue
            });
            acc / norm
        });
        out.push(McEstimate::from_values(&values));
    }
    Ok(out)
}

/// One evaluated point of a ratio experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRatioRow {
    pub label: String,
    pub coords: Vec<f64>,
    pub value: f64,
    pub stderr: f64,
    /// Value divided by the predicted decay rate, where the experiment has
    /// one; equal to `value` otherwise.
    pub normalized: f64,
}

/// Outcome of a ratio experiment: the fitted comparability constant over
/// all rows, against a configured cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRatioReport {
    pub label: String,
    pub cap: f64,
    pub fitted_constant: f64,
    pub pass: bool,
    pub rows: Vec<McRatioRow>,
    pub notes: Vec<String>,
}

/// Interior ball scenario for the uniform comparability experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarnackScenario {
    pub center: Point,
    pub radius: f64,
    pub n_data: usize,
}

/// Boundary-patch scenario shared by the boundary experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryScenario {
    /// Angle of the boundary anchor point on the outer circle.
    pub q_angle: f64,
    /// Patch radius.
    pub r: f64,
    pub n_data: usize,
}

/// Smooth subdomain scenario for the interior decay experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteriorScenario {
    pub e_center: Point,
    pub e_radius: f64,
    /// Angle of the anchor on the subdomain's boundary.
    pub q_angle: f64,
    pub r: f64,
    pub n_data: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RatioExperimentKind {
    Harnack(HarnackScenario),
    Carleson(BoundaryScenario),
    Bhp(BoundaryScenario),
    InteriorBhp(InteriorScenario),
}

fn angle_of(p: &Point) -> f64 {
    p.0[1].atan2(p.0[0])
}

/// Positive smooth boundary data, shifted copies of `1 + cos`.
fn cosine_data(n_data: usize) -> Vec<Box<dyn Fn(&Point) -> f64 + Sync + Send>> {
    (0..n_data)
        .map(|i| {
            let phase = 2.0 * std::f64::consts::PI * i as f64 / n_data as f64;
            Box::new(move |p: &Point| 1.0 + (angle_of(p) - phase).cos())
                as Box<dyn Fn(&Point) -> f64 + Sync + Send>
        })
        .collect()
}

/// Runs one of the harmonic-ratio experiments and fits the constant.
pub fn ratio_experiment(
    domain: &DomainGeometry,
    cfg: &PathConfig,
    kind: &RatioExperimentKind,
    n: u32,
    stream: &RngStream,
    workers: usize,
    cap: f64,
) -> Result<McRatioReport> {
    cfg.validate()?;
    match kind {
        RatioExperimentKind::Harnack(sc) => harnack_experiment(domain, cfg, sc, n, stream, workers, cap),
        RatioExperimentKind::Carleson(sc) => {
            boundary_experiment(domain, cfg, sc, false, n, stream, workers, cap)
        }
        RatioExperimentKind::Bhp(sc) => {
            if cfg.psi_index <= 0.5 {
                return Err(Error::config(format!(
                    "the boundary decay-rate experiment requires gamma_1 > 1/2, got {}",
                    cfg.psi_index
                )));
            }
            boundary_experiment(domain, cfg, sc, true, n, stream, workers, cap)
        }
        RatioExperimentKind::InteriorBhp(sc) => {
            interior_experiment(domain, cfg, sc, n, stream, workers, cap)
        }
    }
}

fn harnack_experiment(
    domain: &DomainGeometry,
    cfg: &PathConfig,
    sc: &HarnackScenario,
    n: u32,
    stream: &RngStream,
    workers: usize,
    cap: f64,
) -> Result<McRatioReport> {
    if domain.delta(&sc.center) <= sc.radius {
        return Err(Error::config("the ball must be contained in the domain"));
    }
    if sc.n_data == 0 {
        return Err(Error::config("at least one boundary datum is required"));
    }
    let ball_center = sc.center;
    let ball_radius = sc.radius;
    let in_ball = move |p: &Point| p.dist(&ball_center) < ball_radius;
    let data = cosine_data(sc.n_data);
    let data_refs: Vec<&(dyn Fn(&Point) -> f64 + Sync)> =
        data.iter().map(|b| b.as_ref() as _).collect();

    // Evaluation points: center plus a ring at half radius.
    let mut points = vec![sc.center];
    for i in 0..8 {
        let a = 2.0 * std::f64::consts::PI * i as f64 / 8.0;
        points.push(sc.center.add(&Point::xy(0.5 * sc.radius * a.cos(), 0.5 * sc.radius * a.sin())));
    }

    let mut rows = Vec::new();
    let mut per_datum_max = vec![0.0f64; sc.n_data];
    let mut per_datum_min = vec![f64::INFINITY; sc.n_data];
    for (pi, x) in points.iter().enumerate() {
        let point_stream = RngStream::new(stream.master_seed, stream.stream_index + pi as u32);
        let ests = estimate_harmonic(domain, cfg, x, &in_ball, &data_refs, n, &point_stream, workers)?;
        for (di, est) in ests.iter().enumerate() {
            per_datum_max[di] = per_datum_max[di].max(est.mean);
            per_datum_min[di] = per_datum_min[di].min(est.mean);
            rows.push(McRatioRow {
                label: format!("datum-{di}"),
                coords: vec![x.0[0], x.0[1]],
                value: est.mean,
                stderr: est.stderr,
                normalized: est.mean,
            });
        }
    }
    let fitted = per_datum_max
        .iter()
        .zip(&per_datum_min)
        .map(|(hi, lo)| hi / lo)
        .fold(0.0f64, f64::max);
    let pass = fitted.is_finite() && fitted <= cap;
    Ok(McRatioReport {
        label: "harnack".to_string(),
        cap,
        fitted_constant: fitted,
        pass,
        rows,
        notes: vec![],
    })
}

fn boundary_experiment(
    domain: &DomainGeometry,
    cfg: &PathConfig,
    sc: &BoundaryScenario,
    normalize_by_rate: bool,
    n: u32,
    stream: &RngStream,
    workers: usize,
    cap: f64,
) -> Result<McRatioReport> {
    let (r1_fat, kappa) = domain.kappa_fat_characteristics();
    if !(sc.r > 0.0 && sc.r < r1_fat / 2.0) {
        return Err(Error::config(format!(
            "patch radius {} must stay below half the fatness scale {}",
            sc.r, r1_fat
        )));
    }
    let q = domain.boundary_point(sc.q_angle);
    let normal = domain.inward_normal(&q)?;
    let patch_r = sc.r;
    let region = move |p: &Point| p.dist(&q) < patch_r;
    let in_u = {
        let domain = *domain;
        move |p: &Point| domain.contains(p) && region(p)
    };

    let data = cosine_data(sc.n_data.max(1));
    let far: Vec<Box<dyn Fn(&Point) -> f64 + Sync + Send>> = data
        .into_iter()
        .map(|f| {
            Box::new(move |p: &Point| if region(p) { 0.0 } else { f(p) })
                as Box<dyn Fn(&Point) -> f64 + Sync + Send>
        })
        .collect();
    let data_refs: Vec<&(dyn Fn(&Point) -> f64 + Sync)> = far.iter().map(|b| b.as_ref() as _).collect();

    // Reference point at depth kappa r / 2 on the normal.
    let x0 = q.add(&normal.scale(kappa * sc.r / 2.0));

    // Near-boundary evaluation points: three rays, depths over 2 decades
    // inside the half patch.
    let mut points = Vec::new();
    let arc = 0.15 * sc.r;
    for off in [-1.0, 0.0, 1.0] {
        let qa = sc.q_angle + off * arc / domain.diam() * 2.0;
        let qq = domain.boundary_point(qa);
        let nn = domain.inward_normal(&qq)?;
        for j in 0..6 {
            let depth = 0.2 * sc.r * 10f64.powf(-2.0 * j as f64 / 5.0);
            let p = qq.add(&nn.scale(depth));
            if p.dist(&q) < sc.r / 2.0 {
                points.push(p);
            }
        }
    }

    let x0_stream = RngStream::new(stream.master_seed, stream.stream_index);
    let ref_ests = estimate_harmonic(domain, cfg, &x0, &in_u, &data_refs, n, &x0_stream, workers)?;

    let two_phi = 2.0 * cfg.phi_index;
    let mut rows = Vec::new();
    let mut fitted = 0.0f64;
    let n_data = data_refs.len();
    let mut norm_lo = vec![f64::INFINITY; n_data];
    let mut norm_hi = vec![0.0f64; n_data];
    for (pi, x) in points.iter().enumerate() {
        let point_stream = RngStream::new(stream.master_seed, stream.stream_index + 1 + pi as u32);
        let ests = estimate_harmonic(domain, cfg, x, &in_u, &data_refs, n, &point_stream, workers)?;
        let delta = domain.delta(x);
        for (di, est) in ests.iter().enumerate() {
            let rate = delta.powf(two_phi).sqrt();
            let normalized = if normalize_by_rate { est.mean / rate } else { est.mean };
            rows.push(McRatioRow {
                label: format!("datum-{di}"),
                coords: vec![x.0[0], x.0[1], delta],
                value: est.mean,
                stderr: est.stderr,
                normalized,
            });
            if normalize_by_rate {
                if normalized > 0.0 {
                    norm_lo[di] = norm_lo[di].min(normalized);
                    norm_hi[di] = norm_hi[di].max(normalized);
                }
            } else {
                // near-boundary values dominated by the interior reference
                fitted = fitted.max(est.mean / ref_ests[di].mean);
            }
        }
    }
    if normalize_by_rate {
        // each harmonic function carries its own scale: the decay-rate
        // constant is fitted per datum and the worst datum is reported
        fitted = norm_hi
            .iter()
            .zip(&norm_lo)
            .map(|(hi, lo)| hi / lo)
            .fold(0.0f64, f64::max);
    }
    let pass = fitted.is_finite() && fitted <= cap;
    let label = if normalize_by_rate { "bhp" } else { "carleson" };
    Ok(McRatioReport {
        label: label.to_string(),
        cap,
        fitted_constant: fitted,
        pass,
        rows,
        notes: vec![format!(
            "reference value at depth {:.4}: {:.6e}",
            kappa * sc.r / 2.0,
            ref_ests[0].mean
        )],
    })
}

fn interior_experiment(
    domain: &DomainGeometry,
    cfg: &PathConfig,
    sc: &InteriorScenario,
    n: u32,
    stream: &RngStream,
    workers: usize,
    cap: f64,
) -> Result<McRatioReport> {
    let e_boundary_clearance = domain.delta(&sc.e_center) - sc.e_radius;
    if e_boundary_clearance <= 0.0 {
        return Err(Error::config("the subdomain must be strictly inside the domain"));
    }
    let q = sc
        .e_center
        .add(&Point::xy(sc.e_radius * sc.q_angle.cos(), sc.e_radius * sc.q_angle.sin()));
    if !(sc.r > 0.0 && sc.r < sc.e_radius / 2.0) {
        return Err(Error::config("patch radius must stay below half the subdomain radius"));
    }
    let e_center = sc.e_center;
    let e_radius = sc.e_radius;
    let patch_r = sc.r;
    let in_u = move |p: &Point| p.dist(&e_center) < e_radius && p.dist(&q) < patch_r;

    let data = cosine_data(sc.n_data.max(1));
    let far: Vec<Box<dyn Fn(&Point) -> f64 + Sync + Send>> = data
        .into_iter()
        .map(|f| {
            Box::new(move |p: &Point| if p.dist(&q) < patch_r { 0.0 } else { f(p) })
                as Box<dyn Fn(&Point) -> f64 + Sync + Send>
        })
        .collect();
    let data_refs: Vec<&(dyn Fn(&Point) -> f64 + Sync)> = far.iter().map(|b| b.as_ref() as _).collect();

    // Points along the inward normal of the subdomain boundary at q.
    let inward = e_center.sub(&q).scale(1.0 / sc.e_radius);
    let mut points = Vec::new();
    for j in 0..8 {
        let depth = 0.3 * sc.r * 10f64.powf(-1.5 * j as f64 / 7.0);
        points.push(q.add(&inward.scale(depth)));
    }

    // Decay rate of the composed index: sqrt(chi(delta_E^{-2})) with
    // chi(lambda) = lambda^{gamma a}.
    let composed = cfg.psi_index * cfg.phi_index;
    let mut rows = Vec::new();
    let n_data = data_refs.len();
    let mut lo = vec![f64::INFINITY; n_data];
    let mut hi = vec![0.0f64; n_data];
    for (pi, x) in points.iter().enumerate() {
        let point_stream = RngStream::new(stream.master_seed, stream.stream_index + pi as u32);
        let ests = estimate_harmonic(domain, cfg, x, &in_u, &data_refs, n, &point_stream, workers)?;
        let delta_e = sc.e_radius - x.dist(&sc.e_center);
        let rate = delta_e.powf(-composed);
        for (di, est) in ests.iter().enumerate() {
            let normalized = est.mean * rate;
            rows.push(McRatioRow {
                label: format!("datum-{di}"),
                coords: vec![x.0[0], x.0[1], delta_e],
                value: est.mean,
                stderr: est.stderr,
                normalized,
            });
            if normalized > 0.0 {
                lo[di] = lo[di].min(normalized);
                hi[di] = hi[di].max(normalized);
            }
        }
    }
    let fitted = hi
        .iter()
        .zip(&lo)
        .map(|(h, l)| h / l)
        .fold(0.0f64, f64::max);
    Ok(McRatioReport {
        label: "interior-bhp".to_string(),
        cap,
        fitted_constant: fitted,
        pass: fitted.is_finite() && fitted <= cap,
        rows,
        notes: vec![],
    })
}

/// Per-path summary for audit spills.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub path: u32,
    pub lifetime: f64,
    pub died: bool,
    pub truncated: bool,
    pub final_x: f64,
    pub final_y: f64,
}

/// Simulates `n` paths and returns one summary row per path.
pub fn sample_path_summaries(
    domain: &DomainGeometry,
    cfg: &PathConfig,
    x0: &Point,
    n: u32,
    stream: &RngStream,
    workers: usize,
) -> Result<Vec<PathSummary>> {
    cfg.validate()?;
    if !domain.dist_to_boundary(x0).interior {
        return Err(Error::domain("path start must be interior"));
    }
    let never = |_: &Point| false;
    let h = resolve_outer_step(domain, cfg, x0, &never, stream);
    Ok(map_paths(n, stream, workers, |i, rng| {
        match walk_yd(domain, cfg, h, x0, rng, &mut |_, _, _| Flow::Continue) {
            WalkEnd::Died { t, last_inside } => PathSummary {
                path: i,
                lifetime: t,
                died: true,
                truncated: false,
                final_x: last_inside.0[0],
                final_y: last_inside.0[1],
            },
            WalkEnd::Truncated { t, pos } => PathSummary {
                path: i,
                lifetime: t,
                died: false,
                truncated: true,
                final_x: pos.0[0],
                final_y: pos.0[1],
            },
            WalkEnd::Stopped { .. } => unreachable!(),
        }
    }))
}
