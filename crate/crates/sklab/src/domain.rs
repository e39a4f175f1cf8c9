//! Bounded smooth test geometries with exact distance functions.
//!
//! Only disks/balls and annuli are supported: both have closed-form
//! distance-to-boundary, exact smoothness characteristics and exact inward
//! normals, so sweeps near the boundary carry no mesh artifacts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in dimension 2 or 3; the third coordinate is ignored in 2-d.
/// Deserializes from arrays of length 2 or 3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Point(pub [f64; 3]);

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let coords = Vec::<f64>::deserialize(deserializer)?;
        match coords.len() {
            2 => Ok(Point([coords[0], coords[1], 0.0])),
            3 => Ok(Point([coords[0], coords[1], coords[2]])),
            n => Err(serde::de::Error::invalid_length(
                n,
                &"an array of 2 or 3 coordinates",
            )),
        }
    }
}

impl Point {
    pub fn xy(x: f64, y: f64) -> Self {
        Point([x, y, 0.0])
    }

    pub fn xyz(x: f64, y: f64, z: f64) -> Self {
        Point([x, y, z])
    }

    pub fn zero() -> Self {
        Point([0.0; 3])
    }

    #[inline]
    pub fn add(&self, other: &Point) -> Point {
        Point([
            self.0[0] + other.0[0],
            self.0[1] + other.0[1],
            self.0[2] + other.0[2],
        ])
    }

    #[inline]
    pub fn sub(&self, other: &Point) -> Point {
        Point([
            self.0[0] - other.0[0],
            self.0[1] - other.0[1],
            self.0[2] - other.0[2],
        ])
    }

    #[inline]
    pub fn scale(&self, s: f64) -> Point {
        Point([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }

    #[inline]
    pub fn dot(&self, other: &Point) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    #[inline]
    pub fn dist(&self, other: &Point) -> f64 {
        self.sub(other).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum Shape {
    Disk { center: Point, radius: f64 },
    Annulus { center: Point, r_in: f64, r_out: f64 },
}

/// Distance to the boundary together with an interior flag; exterior points
/// report distance 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryDistance {
    pub dist: f64,
    pub interior: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainGeometry {
    shape: Shape,
    dim: usize,
}

impl DomainGeometry {
    pub fn disk(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Geometry(format!("disk radius must be positive, got {radius}")));
        }
        Ok(Self {
            shape: Shape::Disk { center, radius },
            dim: 2,
        })
    }

    pub fn unit_disk() -> Self {
        Self::disk(Point::zero(), 1.0).expect("unit radius")
    }

    /// Ball in dimension 3; same formulas as the disk.
    pub fn ball(center: Point, radius: f64) -> Result<Self> {
        let mut d = Self::disk(center, radius)?;
        d.dim = 3;
        Ok(d)
    }

    pub fn annulus(center: Point, r_in: f64, r_out: f64) -> Result<Self> {
        if !(r_in > 0.0 && r_out > r_in) {
            return Err(Error::Geometry(format!(
                "annulus requires 0 < r_in < r_out, got ({r_in}, {r_out})"
            )));
        }
        Ok(Self {
            shape: Shape::Annulus { center, r_in, r_out },
            dim: 2,
        })
    }

    pub fn from_shape(shape: Shape, dim: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Geometry(format!("dimension must be 2 or 3, got {dim}")));
        }
        if dim == 3 {
            if let Shape::Annulus { .. } = shape {
                return Err(Error::Geometry("annulus is supported in dimension 2 only".into()));
            }
        }
        match shape {
            Shape::Disk { center, radius } => {
                if dim == 3 {
                    Self::ball(center, radius)
                } else {
                    Self::disk(center, radius)
                }
            }
            Shape::Annulus { center, r_in, r_out } => Self::annulus(center, r_in, r_out),
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn diam(&self) -> f64 {
        match self.shape {
            Shape::Disk { radius, .. } => 2.0 * radius,
            Shape::Annulus { r_out, .. } => 2.0 * r_out,
        }
    }

    /// Smoothness characteristics `(R, Lambda)`.
    pub fn c11_characteristics(&self) -> (f64, f64) {
        match self.shape {
            Shape::Disk { radius, .. } => (radius, 1.0 / radius),
            Shape::Annulus { r_in, r_out, .. } => {
                let r = r_in.min((r_out - r_in) / 2.0);
                (r, 1.0 / r_in)
            }
        }
    }

    /// Interior fatness characteristics `(R1, kappa)`.
    pub fn kappa_fat_characteristics(&self) -> (f64, f64) {
        match self.shape {
            Shape::Disk { radius, .. } => (radius, 0.5),
            Shape::Annulus { r_in, r_out, .. } => ((r_out - r_in) / 2.0, 0.5),
        }
    }

    /// `kappa_0 = (1 + (1 + Lambda)^2)^{-1/2}` from the smoothness constants.
    pub fn kappa0(&self) -> f64 {
        let (_, lambda) = self.c11_characteristics();
        (1.0 + (1.0 + lambda).powi(2)).sqrt().recip()
    }

    #[inline]
    pub fn contains(&self, x: &Point) -> bool {
        match self.shape {
            Shape::Disk { center, radius } => x.dist(&center) < radius,
            Shape::Annulus { center, r_in, r_out } => {
                let d = x.dist(&center);
                d > r_in && d < r_out
            }
        }
    }

    /// Exact Euclidean distance to the boundary; exterior points return
    /// distance 0 with the interior flag cleared.
    pub fn dist_to_boundary(&self, x: &Point) -> BoundaryDistance {
        match self.shape {
            Shape::Disk { center, radius } => {
                let d = radius - x.dist(&center);
                BoundaryDistance {
                    dist: d.max(0.0),
                    interior: d > 0.0,
                }
            }
            Shape::Annulus { center, r_in, r_out } => {
                let rho = x.dist(&center);
                let d = (rho - r_in).min(r_out - rho);
                BoundaryDistance {
                    dist: d.max(0.0),
                    interior: d > 0.0,
                }
            }
        }
    }

    /// Shorthand for the distance value.
    #[inline]
    pub fn delta(&self, x: &Point) -> f64 {
        self.dist_to_boundary(x).dist
    }

    /// Boundary point of the outer circle at the given angle (measured in
    /// the xy-plane).
    pub fn boundary_point(&self, angle: f64) -> Point {
        let (center, radius) = match self.shape {
            Shape::Disk { center, radius } => (center, radius),
            Shape::Annulus { center, r_out, .. } => (center, r_out),
        };
        center.add(&Point::xy(radius * angle.cos(), radius * angle.sin()))
    }

    /// Unit inward normal at a point of the outer boundary.
    pub fn inward_normal(&self, q: &Point) -> Result<Point> {
        let (center, radius) = match self.shape {
            Shape::Disk { center, radius } => (center, radius),
            Shape::Annulus { center, r_out, .. } => (center, r_out),
        };
        let v = center.sub(q);
        let n = v.norm();
        if (n - radius).abs() > 1e-9 * radius {
            return Err(Error::Geometry(format!(
                "point at distance {n} from center is not on the outer boundary (radius {radius})"
            )));
        }
        Ok(v.scale(1.0 / n))
    }

    /// Largest inward-normal depth along which the boundary distance equals
    /// the depth exactly (interior ball condition).
    pub fn max_normal_depth(&self) -> f64 {
        match self.shape {
            Shape::Disk { radius, .. } => radius,
            Shape::Annulus { r_in, r_out, .. } => (r_out - r_in) / 2.0,
        }
    }

    /// Points `x^(s) = Q + s r0 n(Q)` on the inward normal, with
    /// `delta_D(x^(s)) = s r0` exactly.
    pub fn normal_ray_points(&self, q: &Point, r0: f64, depths: &[f64]) -> Result<Vec<Point>> {
        if !(r0 > 0.0) || r0 > self.max_normal_depth() {
            return Err(Error::Geometry(format!(
                "normal depth r0 = {r0} violates the interior ball condition (max {})",
                self.max_normal_depth()
            )));
        }
        let n = self.inward_normal(q)?;
        depths
            .iter()
            .map(|&s| {
                if !(s > 0.0 && s <= 1.0) {
                    return Err(Error::domain(format!("ray depth fractions must lie in (0,1], got {s}")));
                }
                Ok(q.add(&n.scale(s * r0)))
            })
            .collect()
    }

    /// Interior grid geometric in the boundary distance and uniform in
    /// angle, for near-boundary sweeps. Deterministic for fixed parameters.
    pub fn boundary_layer_grid(&self, decades: usize, per_decade: usize, angular: usize) -> Vec<Point> {
        let depth_count = decades * per_decade;
        let max_depth = 0.5 * self.max_normal_depth();
        let mut pts = Vec::with_capacity(depth_count * angular);
        for k in 0..angular {
            let angle = 2.0 * std::f64::consts::PI * k as f64 / angular as f64;
            let q = self.boundary_point(angle);
            let n = self.inward_normal(&q).expect("constructed on boundary");
            for i in 0..depth_count {
                let exp = -(decades as f64) * (i as f64 + 0.5) / depth_count as f64;
                let depth = max_depth * 10f64.powf(exp);
                pts.push(q.add(&n.scale(depth)));
            }
        }
        pts
    }

    /// First exit parameter `s > 0` such that `x + s u` leaves the domain.
    /// `x` must be interior and `u` a unit vector.
    pub fn ray_exit(&self, x: &Point, u: &Point) -> f64 {
        match self.shape {
            Shape::Disk { center, radius } => circle_exit(x, u, &center, radius)
                .expect("interior point always exits a disk"),
            Shape::Annulus { center, r_in, r_out } => {
                let outer = circle_exit(x, u, &center, r_out).expect("interior of outer circle");
                // Entering the inner disk also leaves the domain.
                match circle_entry(x, u, &center, r_in) {
                    Some(s) if s < outer => s,
                    _ => outer,
                }
            }
        }
    }
}

/// Positive parameter at which a ray from an interior point of the circle
/// crosses it outward.
fn circle_exit(x: &Point, u: &Point, center: &Point, radius: f64) -> Option<f64> {
    let w = x.sub(center);
    let b = w.dot(u);
    let c = w.dot(&w) - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let s = -b + disc.sqrt();
    (s > 0.0).then_some(s)
}

/// Positive parameter at which a ray first touches a circle from outside.
fn circle_entry(x: &Point, u: &Point, center: &Point, radius: f64) -> Option<f64> {
    let w = x.sub(center);
    let b = w.dot(u);
    let c = w.dot(&w) - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let s = -b - disc.sqrt();
    (s > 0.0).then_some(s)
}

/// Box `D_Q(r1, r2)` in the rotated boundary frame at `Q`: tangential extent
/// `|ytilde| < r2` and height `0 < rho < r1` above the boundary graph.
///
/// Realized for the outer circular boundary, where the local graph is
/// `phi(ytilde) = R - sqrt(R^2 - ytilde^2)` with the vertical axis along the
/// inward normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationBox {
    q: Point,
    tangent: Point,
    normal: Point,
    boundary_radius: f64,
    pub r1: f64,
    pub r2: f64,
}

impl LocalizationBox {
    /// The box `D_Q(r/2, r/2)`, the concrete stand-in for the smooth
    /// localization set at scale `r`.
    pub fn for_scale(domain: &DomainGeometry, q: &Point, r: f64) -> Result<Self> {
        Self::new(domain, q, r / 2.0, r / 2.0)
    }

    pub fn new(domain: &DomainGeometry, q: &Point, r1: f64, r2: f64) -> Result<Self> {
        if domain.dim() != 2 {
            return Err(Error::Geometry("localization boxes are built in dimension 2".into()));
        }
        let radius = match domain.shape() {
            Shape::Disk { radius, .. } => radius,
            Shape::Annulus { r_out, .. } => r_out,
        };
        if !(r1 > 0.0 && r2 > 0.0) || r1 >= radius || r2 >= radius {
            return Err(Error::Geometry(format!(
                "box dimensions ({r1}, {r2}) must be positive and below the boundary radius {radius}"
            )));
        }
        let normal = domain.inward_normal(q)?;
        let tangent = Point::xy(-normal.0[1], normal.0[0]);
        Ok(Self {
            q: *q,
            tangent,
            normal,
            boundary_radius: radius,
            r1,
            r2,
        })
    }

    pub fn q(&self) -> Point {
        self.q
    }

    /// Height of the boundary graph below tangential offset `ytilde`.
    #[inline]
    fn graph(&self, ytilde: f64) -> f64 {
        let r = self.boundary_radius;
        r - (r * r - ytilde * ytilde).sqrt()
    }

    /// `(ytilde, y_d)` coordinates of a point in the boundary frame.
    #[inline]
    pub fn to_frame(&self, x: &Point) -> (f64, f64) {
        let w = x.sub(&self.q);
        (w.dot(&self.tangent), w.dot(&self.normal))
    }

    #[inline]
    pub fn from_frame(&self, ytilde: f64, y_d: f64) -> Point {
        self.q
            .add(&self.tangent.scale(ytilde))
            .add(&self.normal.scale(y_d))
    }

    /// Height above the boundary graph (`rho_Q`), negative outside `D`.
    #[inline]
    pub fn rho(&self, x: &Point) -> f64 {
        let (yt, yd) = self.to_frame(x);
        yd - self.graph(yt)
    }

    #[inline]
    pub fn contains(&self, x: &Point) -> bool {
        let (yt, yd) = self.to_frame(x);
        if yt.abs() >= self.r2 || yt.abs() >= self.boundary_radius {
            return false;
        }
        let rho = yd - self.graph(yt);
        rho > 0.0 && rho < self.r1
    }

    /// Point at box coordinates, `rho` above the boundary graph.
    #[inline]
    pub fn point_at(&self, ytilde: f64, rho: f64) -> Point {
        self.from_frame(ytilde, rho + self.graph(ytilde))
    }
}
