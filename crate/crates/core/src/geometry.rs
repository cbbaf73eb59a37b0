//! Ground-truth geometry of the free space.
//!
//! Obstacles are closed sublevel sets of smooth implicit functions. Every
//! obstacle exposes a *level* function that is positive on the free side of
//! its surface and non-positive inside the obstacle region, so the workspace
//! boundary (whose free side is the interior) fits the same interface as the
//! interior obstacles.
//!
//! Distances to non-ball surfaces are computed by a damped Newton iteration on
//! the stationarity system of `min |y - x|^2  s.t.  level(y) = 0`, seeded from
//! the closed-form radial parametrisation each family admits.

use std::cmp::Ordering;
use std::f64::consts::PI;

use nalgebra::{DMatrix, SMatrix, SVector};
use thiserror::Error;

use crate::controller::ControllerParams;

pub type Point<const N: usize> = SVector<f64, N>;
pub type Mat<const N: usize> = SMatrix<f64, N, N>;

/// Two candidate distances closer than this are treated as a skeleton point.
pub const TIE_TOLERANCE: f64 = 1e-7;
/// Step-size tolerance of the surface projection solver.
pub const PROJECTION_TOLERANCE: f64 = 1e-10;
pub const PROJECTION_MAX_ITERS: usize = 200;

/// Absolute accuracy assumed for a converged surface projection, used to
/// derive the rounding part of finite-difference error bounds.
const PROJECTION_NOISE: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid obstacle shape: {0}")]
    InvalidShape(String),
    #[error("projection is not unique: candidate distances {first} and {second} tie")]
    AmbiguousProjection { first: f64, second: f64 },
    #[error("finite-difference step {step} crosses the skeleton")]
    DegenerateStep { step: f64 },
    #[error("surface projection did not converge")]
    NoConvergence,
}

/// Identifies one contributor to the oriented distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObstacleId {
    Boundary,
    Interior(usize),
}

impl std::fmt::Display for ObstacleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ObstacleId::Boundary => write!(f, "boundary"),
            ObstacleId::Interior(i) => write!(f, "obstacle {i}"),
        }
    }
}

/// Implicit surface families.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape<const N: usize> {
    /// `|u|^2 - r^2`.
    Ball { radius: f64 },
    /// `sum_j a_j u_j^2 - r0^2`.
    Ellipsoid { coeffs: Point<N>, r0: f64 },
    /// Planar quartic blob `a u1^2 + b u2^2 + c u1^4 + d u2^4 - r0`.
    Superquartic { a: f64, b: f64, c: f64, d: f64, r0: f64 },
    /// Planar workspace boundary `q u1^(2n) + p u2^(2n) = D^(2n)`; the free
    /// side is the inside.
    SuperellipseBoundary { q: f64, p: f64, d: f64, n: u32 },
}

impl<const N: usize> Shape<N> {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Shape::Ball { .. } => "ball",
            Shape::Ellipsoid { .. } => "ellipsoid",
            Shape::Superquartic { .. } => "superquartic",
            Shape::SuperellipseBoundary { .. } => "superellipse_boundary",
        }
    }

    pub fn is_boundary(&self) -> bool {
        matches!(self, Shape::SuperellipseBoundary { .. })
    }
}

/// A single obstacle (or the workspace boundary) with cached radial bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitObstacle<const N: usize> {
    center: Point<N>,
    shape: Shape<N>,
    inner_radius: f64,
    outer_radius: f64,
    /// Surface samples seeding the global projection search.
    seeds: Vec<Point<N>>,
}

/// Nearest surface point of one obstacle.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceProjection<const N: usize> {
    pub point: Point<N>,
    /// Unsigned distance to the surface.
    pub distance: f64,
    /// Positive on the free side, negative inside the obstacle.
    pub signed_distance: f64,
}

struct Candidate<const N: usize> {
    point: Point<N>,
    distance: f64,
    ambiguous: bool,
}

impl<const N: usize> ImplicitObstacle<N> {
    pub fn new(center: Point<N>, shape: Shape<N>) -> Result<Self, GeometryError> {
        if !center.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidShape("center must be finite".into()));
        }
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(GeometryError::InvalidShape(format!(
                    "{} coefficient {name} must be positive, got {v}",
                    shape.kind_name()
                )))
            }
        };
        match &shape {
            Shape::Ball { radius } => positive("radius", *radius)?,
            Shape::Ellipsoid { coeffs, r0 } => {
                for (j, a) in coeffs.iter().enumerate() {
                    positive(&format!("coeffs[{j}]"), *a)?;
                }
                positive("r0", *r0)?;
            }
            Shape::Superquartic { a, b, c, d, r0 } => {
                positive("a", *a)?;
                positive("b", *b)?;
                positive("c", *c)?;
                positive("d", *d)?;
                positive("r0", *r0)?;
            }
            Shape::SuperellipseBoundary { q, p, d, n } => {
                positive("q", *q)?;
                positive("p", *p)?;
                positive("d", *d)?;
                if *n == 0 {
                    return Err(GeometryError::InvalidShape(
                        "superellipse_boundary exponent n must be at least 1".into(),
                    ));
                }
            }
        }
        if matches!(shape, Shape::Superquartic { .. } | Shape::SuperellipseBoundary { .. })
            && N != 2
        {
            return Err(GeometryError::InvalidShape(format!(
                "{} is a planar family but the world is {N}-dimensional",
                shape.kind_name()
            )));
        }
        if N < 2 {
            return Err(GeometryError::InvalidShape("dimension must be at least 2".into()));
        }

        let mut obstacle = Self {
            center,
            shape,
            inner_radius: 0.0,
            outer_radius: 0.0,
            seeds: Vec::new(),
        };
        let (inner, outer) = obstacle.radial_bounds();
        obstacle.inner_radius = inner;
        obstacle.outer_radius = outer;
        obstacle.seeds = obstacle.surface_samples(if N == 2 { 256 } else { 32 });
        Ok(obstacle)
    }

    pub fn ball(center: Point<N>, radius: f64) -> Result<Self, GeometryError> {
        Self::new(center, Shape::Ball { radius })
    }

    pub fn center(&self) -> &Point<N> {
        &self.center
    }

    pub fn shape(&self) -> &Shape<N> {
        &self.shape
    }

    pub fn is_boundary(&self) -> bool {
        self.shape.is_boundary()
    }

    /// Every surface point lies within `[inner_radius, outer_radius]` of the center.
    pub fn inner_radius(&self) -> f64 {
        self.inner_radius
    }

    pub fn outer_radius(&self) -> f64 {
        self.outer_radius
    }

    /// Implicit function, positive on the free side.
    #[inline]
    pub fn level(&self, x: &Point<N>) -> f64 {
        let u = x - self.center;
        match &self.shape {
            Shape::Ball { radius } => u.norm_squared() - radius * radius,
            Shape::Ellipsoid { coeffs, r0 } => {
                coeffs.iter().zip(u.iter()).map(|(a, v)| a * v * v).sum::<f64>() - r0 * r0
            }
            Shape::Superquartic { a, b, c, d, r0 } => {
                let (u1, u2) = (u[0] * u[0], u[1] * u[1]);
                a * u1 + b * u2 + c * u1 * u1 + d * u2 * u2 - r0
            }
            Shape::SuperellipseBoundary { q, p, d, n } => {
                let (s0, s1) = (u[0] / d, u[1] / d);
                1.0 - q * int_pow(s0 * s0, *n) - p * int_pow(s1 * s1, *n)
            }
        }
    }

    pub fn level_gradient(&self, x: &Point<N>) -> Point<N> {
        let u = x - self.center;
        match &self.shape {
            Shape::Ball { .. } => u * 2.0,
            Shape::Ellipsoid { coeffs, .. } => coeffs.component_mul(&u) * 2.0,
            Shape::Superquartic { a, b, c, d, .. } => {
                let mut g = Point::<N>::zeros();
                g[0] = 2.0 * a * u[0] + 4.0 * c * u[0].powi(3);
                g[1] = 2.0 * b * u[1] + 4.0 * d * u[1].powi(3);
                g
            }
            Shape::SuperellipseBoundary { q, p, d, n } => {
                let (s0, s1) = (u[0] / d, u[1] / d);
                let c = 2.0 * *n as f64 / d;
                let mut g = Point::<N>::zeros();
                g[0] = -c * q * int_pow(s0 * s0, n - 1) * s0;
                g[1] = -c * p * int_pow(s1 * s1, n - 1) * s1;
                g
            }
        }
    }

    pub fn level_hessian(&self, x: &Point<N>) -> Mat<N> {
        let u = x - self.center;
        match &self.shape {
            Shape::Ball { .. } => Mat::<N>::identity() * 2.0,
            Shape::Ellipsoid { coeffs, .. } => Mat::<N>::from_diagonal(&(coeffs * 2.0)),
            Shape::Superquartic { a, b, c, d, .. } => {
                let mut h = Mat::<N>::zeros();
                h[(0, 0)] = 2.0 * a + 12.0 * c * u[0] * u[0];
                h[(1, 1)] = 2.0 * b + 12.0 * d * u[1] * u[1];
                h
            }
            Shape::SuperellipseBoundary { q, p, d, n } => {
                let (s0, s1) = (u[0] / d, u[1] / d);
                let e = 2.0 * *n as f64;
                let c = e * (e - 1.0) / (d * d);
                let mut h = Mat::<N>::zeros();
                h[(0, 0)] = -c * q * int_pow(s0 * s0, n - 1);
                h[(1, 1)] = -c * p * int_pow(s1 * s1, n - 1);
                h
            }
        }
    }

    /// Upper bound on `|grad level|` within `radius` of the center.
    pub fn gradient_bound(&self, radius: f64) -> f64 {
        match &self.shape {
            Shape::Ball { .. } => 2.0 * radius,
            Shape::Ellipsoid { coeffs, .. } => 2.0 * coeffs.amax() * radius,
            Shape::Superquartic { a, b, c, d, .. } => {
                let r3 = radius.powi(3);
                (2.0 * a * radius + 4.0 * c * r3).hypot(2.0 * b * radius + 4.0 * d * r3)
            }
            Shape::SuperellipseBoundary { q, p, d, n } => {
                2.0 * *n as f64 / d * q.hypot(*p) * int_pow(radius / d, 2 * n - 1)
            }
        }
    }

    /// Unit normal at a surface point, pointing into the free side.
    pub fn free_normal(&self, y: &Point<N>) -> Point<N> {
        let g = self.level_gradient(y);
        g / g.norm()
    }

    /// Distance from the center to the surface along the unit direction `dir`.
    pub fn radial_distance(&self, dir: &Point<N>) -> f64 {
        match &self.shape {
            Shape::Ball { radius } => *radius,
            Shape::Ellipsoid { coeffs, r0 } => {
                let s: f64 = coeffs.iter().zip(dir.iter()).map(|(a, w)| a * w * w).sum();
                r0 / s.sqrt()
            }
            Shape::Superquartic { a, b, c, d, r0 } => {
                let (w1, w2) = (dir[0] * dir[0], dir[1] * dir[1]);
                let quad = a * w1 + b * w2;
                let quart = c * w1 * w1 + d * w2 * w2;
                // positive root of quart*s^2 + quad*s - r0 = 0, s = t^2
                let s = 2.0 * r0 / (quad + (quad * quad + 4.0 * quart * r0).sqrt());
                s.sqrt()
            }
            Shape::SuperellipseBoundary { q, p, d, n } => {
                let e = 2 * *n as i32;
                d / (q * dir[0].powi(e) + p * dir[1].powi(e)).powf(1.0 / e as f64)
            }
        }
    }

    pub fn surface_point(&self, dir: &Point<N>) -> Point<N> {
        self.center + dir * self.radial_distance(dir)
    }

    /// Lower bound on the signed distance from `x` to this surface.
    #[inline]
    pub fn signed_distance_lower_bound(&self, x: &Point<N>) -> f64 {
        let r = (x - self.center).norm();
        if self.is_boundary() {
            self.inner_radius - r
        } else {
            r - self.outer_radius
        }
    }

    /// Nearest point of this obstacle's surface.
    pub fn project(&self, x: &Point<N>) -> Result<SurfaceProjection<N>, GeometryError> {
        let c = self.candidate(x)?;
        if c.ambiguous {
            return Err(GeometryError::AmbiguousProjection {
                first: c.distance,
                second: c.distance,
            });
        }
        Ok(self.finish(x, c))
    }

    fn finish(&self, x: &Point<N>, c: Candidate<N>) -> SurfaceProjection<N> {
        let sign = if self.level(x) >= 0.0 { 1.0 } else { -1.0 };
        SurfaceProjection {
            point: c.point,
            distance: c.distance,
            signed_distance: sign * c.distance,
        }
    }

    fn candidate(&self, x: &Point<N>) -> Result<Candidate<N>, GeometryError> {
        let level = self.level(x);
        if level == 0.0 {
            return Ok(Candidate { point: *x, distance: 0.0, ambiguous: false });
        }
        if let Shape::Ball { radius } = self.shape {
            let u = x - self.center;
            let r = u.norm();
            if r == 0.0 {
                return Ok(Candidate {
                    point: self.center + Point::<N>::from_fn(|i, _| if i == 0 { radius } else { 0.0 }),
                    distance: radius,
                    ambiguous: true,
                });
            }
            return Ok(Candidate {
                point: self.center + u * (radius / r),
                distance: (r - radius).abs(),
                ambiguous: false,
            });
        }

        // Outside a convex obstacle every stationary point with the right
        // orientation is the global projection.
        let free_side = level > 0.0;
        if free_side && !self.is_boundary() {
            let u = x - self.center;
            let dir = u / u.norm();
            if let Some((y, mu)) = self.stationary_point(x, &self.surface_point(&dir)) {
                if mu > 0.0 {
                    return Ok(Candidate { point: y, distance: (x - y).norm(), ambiguous: false });
                }
            }
        }

        let dist: Vec<f64> = self.seeds.iter().map(|y| (y - x).norm_squared()).collect();
        let mut order: Vec<usize> = if N == 2 {
            // Local minima of the distance around the closed sample curve.
            let m = dist.len();
            (0..m)
                .filter(|&k| dist[k] <= dist[(k + m - 1) % m] && dist[k] <= dist[(k + 1) % m])
                .collect()
        } else {
            (0..dist.len()).collect()
        };
        order.sort_by(|&a, &b| dist[a].partial_cmp(&dist[b]).unwrap_or(Ordering::Equal));
        let seeds: Vec<&Point<N>> = order.iter().map(|&k| &self.seeds[k]).collect();
        let mut found: Vec<(Point<N>, f64)> = Vec::new();
        for seed in seeds.into_iter().take(8) {
            if let Some((y, mu)) = self.stationary_point(x, seed) {
                if (mu > 0.0) == free_side {
                    found.push((y, (x - y).norm()));
                }
            }
        }
        if found.is_empty() {
            return Err(GeometryError::NoConvergence);
        }
        found.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal));
        let (best, dist) = found[0];
        let ambiguous = found[1..]
            .iter()
            .any(|(y, d)| d - dist <= TIE_TOLERANCE && (y - best).norm() > 1e-6);
        Ok(Candidate { point: best, distance: dist, ambiguous })
    }

    /// Stationary point of `|y - x|` on the surface, by Newton iteration on
    /// `y - x + mu grad(y) = 0, level(y) = 0` started at `seed`.
    /// Returns the stationary point and its multiplier; `mu > 0` means `x`
    /// lies on the free side of the surface along the normal at `y`.
    pub fn stationary_point(&self, x: &Point<N>, seed: &Point<N>) -> Option<(Point<N>, f64)> {
        let merit = |y: &Point<N>, mu: f64| {
            let g = self.level_gradient(y);
            let f1 = y - x + g * mu;
            let gn = g.norm_squared().max(f64::MIN_POSITIVE);
            f1.norm_squared() + self.level(y).powi(2) / gn
        };
        let mut y = *seed;
        let g0 = self.level_gradient(&y);
        let mut mu = (x - y).dot(&g0) / g0.norm_squared();
        let scale = 1.0 + (x - self.center).norm();
        for _ in 0..PROJECTION_MAX_ITERS {
            let g = self.level_gradient(&y);
            let h = self.level_hessian(&y);
            let f1 = y - x + g * mu;
            let f2 = self.level(&y);
            let m = Mat::<N>::identity() + h * mu;
            let m_inv = m.try_inverse()?;
            let mi_f1 = m_inv * f1;
            let mi_g = m_inv * g;
            let denom = g.dot(&mi_g);
            if denom == 0.0 || !denom.is_finite() {
                return None;
            }
            let dmu = (f2 - g.dot(&mi_f1)) / denom;
            let dy = -mi_f1 - mi_g * dmu;

            let current = merit(&y, mu);
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let cand_y = y + dy * alpha;
                let cand_mu = mu + dmu * alpha;
                if merit(&cand_y, cand_mu) <= current || alpha * dy.norm() <= PROJECTION_TOLERANCE * scale {
                    y = cand_y;
                    mu = cand_mu;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted || !y.iter().all(|v| v.is_finite()) {
                return None;
            }
            let g = self.level_gradient(&y);
            let on_surface = self.level(&y).abs() / g.norm() <= PROJECTION_TOLERANCE * scale;
            if alpha * dy.norm() <= PROJECTION_TOLERANCE * scale && on_surface {
                return Some((y, mu));
            }
        }
        None
    }

    /// Surface points along uniformly spaced directions (polar angles in 2D,
    /// an angle grid in 3D); `resolution` is the number of polar samples.
    pub fn surface_samples(&self, resolution: usize) -> Vec<Point<N>> {
        unit_directions::<N>(resolution)
            .iter()
            .map(|d| self.surface_point(d))
            .collect()
    }

    fn radial_bounds(&self) -> (f64, f64) {
        match &self.shape {
            Shape::Ball { radius } => (*radius, *radius),
            Shape::Ellipsoid { coeffs, r0 } => {
                let amax = coeffs.iter().cloned().fold(f64::MIN, f64::max);
                let amin = coeffs.iter().cloned().fold(f64::MAX, f64::min);
                (r0 / amax.sqrt(), r0 / amin.sqrt())
            }
            Shape::Superquartic { a, b, c, d, r0 } => {
                let (lo, hi) = self.sampled_radial_range();
                // Per-axis extents bound the shape by its box corner.
                let axis = |quad: f64, quart: f64| {
                    (2.0 * r0 / (quad + (quad * quad + 4.0 * quart * r0).sqrt())).sqrt()
                };
                let corner = axis(*a, *c).hypot(axis(*b, *d));
                (lo * 0.99, (hi * 1.01).min(corner))
            }
            Shape::SuperellipseBoundary { .. } => {
                let (lo, hi) = self.sampled_radial_range();
                (lo * 0.99, hi * 1.01)
            }
        }
    }

    fn sampled_radial_range(&self) -> (f64, f64) {
        unit_directions::<N>(4096)
            .iter()
            .map(|d| self.radial_distance(d))
            .fold((f64::MAX, f64::MIN), |(lo, hi), r| (lo.min(r), hi.max(r)))
    }
}

/// Uniform direction set: `resolution` polar angles in 2D, a
/// `resolution x resolution/2` cell-centred angle grid in 3D.
/// `base^n` by repeated squaring.
#[inline]
fn int_pow(mut base: f64, mut n: u32) -> f64 {
    let mut acc = 1.0;
    while n > 0 {
        if n & 1 == 1 {
            acc *= base;
        }
        base *= base;
        n >>= 1;
    }
    acc
}

pub fn unit_directions<const N: usize>(resolution: usize) -> Vec<Point<N>> {
    match N {
        2 => (0..resolution)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / resolution as f64;
                Point::<N>::from_fn(|k, _| if k == 0 { t.cos() } else { t.sin() })
            })
            .collect(),
        3 => {
            let n_theta = resolution.max(4);
            let n_phi = (resolution / 2).max(2);
            let mut out = Vec::with_capacity(n_theta * n_phi);
            for j in 0..n_phi {
                let phi = -PI / 2.0 + (j as f64 + 0.5) * PI / n_phi as f64;
                for i in 0..n_theta {
                    let t = 2.0 * PI * i as f64 / n_theta as f64;
                    let v = [t.cos() * phi.cos(), t.sin() * phi.cos(), phi.sin()];
                    out.push(Point::<N>::from_fn(|k, _| v[k]));
                }
            }
            out
        }
        _ => {
            // Axis-aligned fallback for other dimensions.
            let mut out = Vec::new();
            for k in 0..N {
                for s in [1.0, -1.0] {
                    out.push(Point::<N>::from_fn(|i, _| if i == k { s } else { 0.0 }));
                }
            }
            out
        }
    }
}

/// Free space `W \ (O_1 u ... u O_M)` with a user-supplied lower bound on
/// its reach.
#[derive(Debug, Clone, PartialEq)]
pub struct World<const N: usize> {
    boundary: Option<ImplicitObstacle<N>>,
    obstacles: Vec<ImplicitObstacle<N>>,
    reach: f64,
}

impl<const N: usize> World<N> {
    pub fn new(
        boundary: Option<ImplicitObstacle<N>>,
        obstacles: Vec<ImplicitObstacle<N>>,
        reach: f64,
    ) -> Result<Self, GeometryError> {
        if let Some(b) = &boundary {
            if !b.is_boundary() {
                return Err(GeometryError::InvalidShape(
                    "the workspace boundary must be a boundary family".into(),
                ));
            }
        }
        if let Some(o) = obstacles.iter().find(|o| o.is_boundary()) {
            return Err(GeometryError::InvalidShape(format!(
                "{} cannot be used as an interior obstacle",
                o.shape().kind_name()
            )));
        }
        if !(reach.is_finite() && reach > 0.0) {
            return Err(GeometryError::InvalidShape(format!(
                "reach lower bound must be positive, got {reach}"
            )));
        }
        Ok(Self { boundary, obstacles, reach })
    }

    pub fn boundary(&self) -> Option<&ImplicitObstacle<N>> {
        self.boundary.as_ref()
    }

    pub fn obstacles(&self) -> &[ImplicitObstacle<N>] {
        &self.obstacles
    }

    /// The reach lower bound `h`.
    pub fn reach(&self) -> f64 {
        self.reach
    }

    pub fn get(&self, id: ObstacleId) -> Option<&ImplicitObstacle<N>> {
        match id {
            ObstacleId::Boundary => self.boundary.as_ref(),
            ObstacleId::Interior(i) => self.obstacles.get(i),
        }
    }

    /// All distance contributors, interior obstacles first.
    pub fn contributors(&self) -> impl Iterator<Item = (ObstacleId, &ImplicitObstacle<N>)> {
        self.obstacles
            .iter()
            .enumerate()
            .map(|(i, o)| (ObstacleId::Interior(i), o))
            .chain(self.boundary.iter().map(|b| (ObstacleId::Boundary, b)))
    }

    /// Smallest level value over all contributors; non-positive means `x`
    /// is inside (or on) an obstacle.
    pub fn min_level(&self, x: &Point<N>) -> f64 {
        self.contributors().map(|(_, o)| o.level(x)).fold(f64::INFINITY, f64::min)
    }
}

/// Oriented distance `b(x)` with its nearest boundary point and gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientedDistance<const N: usize> {
    pub b: f64,
    pub nearest_point: Point<N>,
    /// Unit gradient of `b`, pointing into the free space.
    pub gradient: Point<N>,
    pub obstacle: ObstacleId,
}

struct Ranked<const N: usize> {
    id: ObstacleId,
    signed: f64,
    point: Point<N>,
    ambiguous: bool,
}

fn rank_contributors<const N: usize>(
    world: &World<N>,
    x: &Point<N>,
) -> Result<(Ranked<N>, Option<f64>), GeometryError> {
    let mut order: Vec<(f64, ObstacleId, &ImplicitObstacle<N>)> = world
        .contributors()
        .map(|(id, o)| (o.signed_distance_lower_bound(x), id, o))
        .collect();
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));

    let mut best: Option<Ranked<N>> = None;
    let mut second: Option<f64> = None;
    for (lb, id, o) in order {
        if let Some(b) = &best {
            if lb > b.signed + TIE_TOLERANCE && second.is_none_or(|s| lb > s) {
                break;
            }
        }
        let c = o.candidate(x)?;
        let sign = if o.level(x) >= 0.0 { 1.0 } else { -1.0 };
        let r = Ranked { id, signed: sign * c.distance, point: c.point, ambiguous: c.ambiguous };
        match &best {
            Some(b) if r.signed >= b.signed => {
                second = Some(second.map_or(r.signed, |s: f64| s.min(r.signed)));
            }
            _ => {
                if let Some(b) = best.take() {
                    second = Some(second.map_or(b.signed, |s: f64| s.min(b.signed)));
                }
                best = Some(r);
            }
        }
    }
    let best = best.ok_or_else(|| GeometryError::InvalidShape("world has no obstacles".into()))?;
    Ok((best, second))
}

/// Oriented distance to the obstacle region, with a unique projection.
pub fn oriented_distance<const N: usize>(
    world: &World<N>,
    x: &Point<N>,
) -> Result<OrientedDistance<N>, GeometryError> {
    let (best, second) = rank_contributors(world, x)?;
    if let Some(s) = second {
        if s - best.signed <= TIE_TOLERANCE {
            return Err(GeometryError::AmbiguousProjection { first: best.signed, second: s });
        }
    }
    if best.ambiguous {
        return Err(GeometryError::AmbiguousProjection { first: best.signed, second: best.signed });
    }
    let obstacle = world.get(best.id).expect("ranked id belongs to the world");
    let offset = x - best.point;
    let d = offset.norm();
    let gradient = if d > 1e-12 {
        if best.signed >= 0.0 {
            offset / d
        } else {
            -offset / d
        }
    } else {
        obstacle.free_normal(x)
    };
    Ok(OrientedDistance { b: best.signed, nearest_point: best.point, gradient, obstacle: best.id })
}

/// Oriented distance value only; skeleton points are allowed.
pub fn signed_distance<const N: usize>(world: &World<N>, x: &Point<N>) -> Result<f64, GeometryError> {
    Ok(rank_contributors(world, x)?.0.signed)
}

/// Finite-difference Jacobian of the boundary projection `x -> P(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionJacobian<const N: usize> {
    pub matrix: Mat<N>,
    pub evaluation_point: Point<N>,
    pub projection: Point<N>,
    pub step: f64,
    /// `max |J - J^T|`.
    pub symmetry_defect: f64,
    /// `|J (x - P(x))|`.
    pub radial_residual: f64,
    /// Error bound of the central differences: a Richardson estimate of the
    /// truncation error plus the rounding floor of the projection solver.
    pub fd_tolerance: f64,
}

impl<const N: usize> ProjectionJacobian<N> {
    pub fn symmetric_part(&self) -> Mat<N> {
        (self.matrix + self.matrix.transpose()) * 0.5
    }
}

/// Default central-difference step for Jacobians at a point with oriented distance `b`.
pub fn default_fd_step(b: f64) -> f64 {
    (1e-4 * b.abs()).max(1e-5)
}

fn central_jacobian<const N: usize>(
    world: &World<N>,
    x: &Point<N>,
    id: ObstacleId,
    step: f64,
) -> Result<Mat<N>, GeometryError> {
    let mut j = Mat::<N>::zeros();
    for col in 0..N {
        let mut e = Point::<N>::zeros();
        e[col] = step;
        let plus = oriented_distance(world, &(x + e))?;
        let minus = oriented_distance(world, &(x - e))?;
        if plus.obstacle != id || minus.obstacle != id {
            return Err(GeometryError::DegenerateStep { step });
        }
        j.set_column(col, &((plus.nearest_point - minus.nearest_point) / (2.0 * step)));
    }
    Ok(j)
}

pub fn projection_jacobian<const N: usize>(
    world: &World<N>,
    x: &Point<N>,
    step: Option<f64>,
) -> Result<ProjectionJacobian<N>, GeometryError> {
    let od = oriented_distance(world, x)?;
    let step = step.unwrap_or_else(|| default_fd_step(od.b));
    if !(step > 0.0) {
        return Err(GeometryError::DegenerateStep { step });
    }
    let matrix = central_jacobian(world, x, od.obstacle, step)?;
    let coarse = central_jacobian(world, x, od.obstacle, 2.0 * step)?;
    let richardson = (coarse - matrix).amax() / 3.0;
    let scale = 1.0 + x.amax();
    let fd_tolerance = richardson + PROJECTION_NOISE * scale / step;
    let radial = x - od.nearest_point;
    Ok(ProjectionJacobian {
        symmetry_defect: (matrix - matrix.transpose()).amax(),
        radial_residual: (matrix * radial).norm(),
        matrix,
        evaluation_point: *x,
        projection: od.nearest_point,
        step,
        fd_tolerance,
    })
}

pub(crate) fn to_dmatrix<const N: usize>(m: &Mat<N>) -> DMatrix<f64> {
    DMatrix::from_fn(N, N, |i, j| m[(i, j)])
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues<const N: usize>(m: &Mat<N>) -> Vec<f64> {
    let sym = to_dmatrix(&((m + m.transpose()) * 0.5));
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().cloned().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    ev
}

/// Outcome of the strong-convexity test at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureVerdict {
    pub max_eigenvalue: f64,
    /// `|x_d - P| / (eps + |x_d - P|)`.
    pub bound: f64,
    pub holds: bool,
}

pub fn curvature_condition<const N: usize>(
    world: &World<N>,
    x: &Point<N>,
    x_d: &Point<N>,
    eps: f64,
) -> Result<CurvatureVerdict, GeometryError> {
    let jac = projection_jacobian(world, x, None)?;
    Ok(curvature_verdict(&jac, x_d, eps))
}

pub(crate) fn curvature_verdict<const N: usize>(
    jac: &ProjectionJacobian<N>,
    x_d: &Point<N>,
    eps: f64,
) -> CurvatureVerdict {
    let max_eigenvalue = *symmetric_eigenvalues(&jac.matrix).last().expect("N >= 1");
    let l = (x_d - jac.projection).norm();
    let bound = l / (eps + l);
    CurvatureVerdict { max_eigenvalue, bound, holds: max_eigenvalue < bound }
}

/// One failed world-validity rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub rule: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, rule: &'static str, message: impl Into<String>) {
        self.violations.push(Violation { rule, message: message.into() });
    }

    pub fn mentions(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.message.contains(needle) || v.rule == needle)
    }
}

/// Margin ordering `0 < R < eps < eps' <= h` and `k > 0`.
pub fn check_margins<const N: usize>(
    params: &ControllerParams<N>,
    reach: f64,
    report: &mut ValidationReport,
) {
    let (r, e, ep) = (params.robot_radius, params.eps, params.eps_prime);
    if !(params.k > 0.0) {
        report.push("gain", format!("k > 0 fails (k = {})", params.k));
    }
    if !(r > 0.0) {
        report.push("margin_ordering", format!("R > 0 fails (R = {r})"));
    }
    if !(r < e) {
        report.push("margin_ordering", format!("R < ε fails (R = {r}, ε = {e})"));
    }
    if !(e < ep) {
        report.push("margin_ordering", format!("ε < ε′ fails (ε = {e}, ε′ = {ep})"));
    }
    if !(ep <= reach) {
        report.push("margin_ordering", format!("ε′ ≤ h fails (ε′ = {ep}, h = {reach})"));
    }
}

/// Sampled minimum gap between the surfaces of `a` and `b`.
fn sampled_gap<const N: usize>(a: &ImplicitObstacle<N>, b: &ImplicitObstacle<N>) -> f64 {
    let resolution = if N == 2 { 1440 } else { 96 };
    let mut gap = f64::INFINITY;
    for y in a.surface_samples(resolution) {
        if b.signed_distance_lower_bound(&y) > gap {
            continue;
        }
        if let Ok(c) = b.candidate(&y) {
            gap = gap.min(c.distance);
        }
    }
    gap
}

/// Checks obstacle separation, containment, margin ordering, sensor range and
/// target placement. Never fails; violations are collected in the report.
pub fn validate_world<const N: usize>(
    world: &World<N>,
    params: &ControllerParams<N>,
    sensor_range: Option<f64>,
) -> ValidationReport {
    let mut report = ValidationReport::default();
    let h = world.reach();
    check_margins(params, h, &mut report);
    if let Some(rs) = sensor_range {
        if !(rs > params.eps_prime) {
            report.push(
                "sensor_range",
                format!("R_s > ε′ fails (R_s = {rs}, ε′ = {})", params.eps_prime),
            );
        }
    }

    let obstacles = world.obstacles();
    for i in 0..obstacles.len() {
        for j in (i + 1)..obstacles.len() {
            let gap = sampled_gap(&obstacles[i], &obstacles[j]);
            if !(gap > 2.0 * h) {
                report.push(
                    "separation",
                    format!("separation ≤ 2h between obstacles {i} and {j} (gap {gap:.6}, 2h = {})", 2.0 * h),
                );
            }
        }
    }
    if let Some(boundary) = world.boundary() {
        for (i, o) in obstacles.iter().enumerate() {
            let samples = o.surface_samples(if N == 2 { 720 } else { 64 });
            if samples.iter().any(|y| boundary.level(y) <= 0.0) {
                report.push(
                    "containment",
                    format!("obstacle {i} is not strictly inside the workspace"),
                );
                continue;
            }
            let gap = sampled_gap(o, boundary);
            if !(gap > 2.0 * h) {
                report.push(
                    "separation",
                    format!("separation ≤ 2h between obstacle {i} and the boundary (gap {gap:.6}, 2h = {})", 2.0 * h),
                );
            }
        }
    }

    match signed_distance(world, &params.target) {
        Ok(b) if b > params.eps => {}
        Ok(b) => report.push(
            "target",
            format!("target must lie in int(X_ε): b(x_d) = {b:.6} ≤ ε = {}", params.eps),
        ),
        Err(e) => report.push("target", format!("cannot evaluate b(x_d): {e}")),
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{Vector2, Vector3};

    fn disc_world(r: f64) -> World<2> {
        World::new(None, vec![ImplicitObstacle::ball(Vector2::zeros(), r).unwrap()], 1.2).unwrap()
    }

    fn params2(target: Vector2<f64>) -> ControllerParams<2> {
        ControllerParams { k: 0.5, eps: 0.6, eps_prime: 1.1, robot_radius: 0.4, target }
    }

    #[test]
    fn disc_oriented_distance() {
        let w = disc_world(1.0);
        let od = oriented_distance(&w, &Vector2::new(3.0, 0.0)).unwrap();
        assert_eq!(od.b, 2.0);
        assert_eq!(od.nearest_point, Vector2::new(1.0, 0.0));
        assert_eq!(od.gradient, Vector2::new(1.0, 0.0));

        let on = oriented_distance(&w, &Vector2::new(1.0, 0.0)).unwrap();
        assert_eq!(on.b, 0.0);
        assert_relative_eq!(on.gradient, Vector2::new(1.0, 0.0));

        let inside = oriented_distance(&w, &Vector2::new(0.25, 0.0)).unwrap();
        assert_relative_eq!(inside.b, -0.75);
        assert_relative_eq!(inside.gradient, Vector2::new(1.0, 0.0));
    }

    #[test]
    fn equidistant_balls_are_ambiguous() {
        let w = World::new(
            None,
            vec![
                ImplicitObstacle::ball(Vector2::new(5.0, 0.0), 1.0).unwrap(),
                ImplicitObstacle::ball(Vector2::new(-5.0, 0.0), 1.0).unwrap(),
            ],
            1.2,
        )
        .unwrap();
        let err = oriented_distance(&w, &Vector2::zeros()).unwrap_err();
        assert!(matches!(err, GeometryError::AmbiguousProjection { .. }));
        assert_eq!(signed_distance(&w, &Vector2::zeros()).unwrap(), 4.0);
    }

    #[test]
    fn ellipsoid_newton_matches_ball_special_case() {
        // An ellipsoid with unit coefficients is a ball of radius r0.
        let e = ImplicitObstacle::new(
            Vector3::new(0.0, 0.0, 5.0),
            Shape::Ellipsoid { coeffs: Vector3::new(1.0, 1.0, 1.0), r0: 1.5 },
        )
        .unwrap();
        for x in [Vector3::new(2.0, -1.0, 4.0), Vector3::new(0.3, 0.2, 9.0), Vector3::new(-4.0, 1.0, 5.5)] {
            let p = e.project(&x).unwrap();
            let u = x - e.center();
            assert_relative_eq!(p.distance, u.norm() - 1.5, epsilon = 1e-12);
            assert_relative_eq!(p.point, e.center() + u * (1.5 / u.norm()), epsilon = 1e-12);
        }
    }

    #[test]
    fn superquartic_projection_is_stationary() {
        let o = ImplicitObstacle::new(
            Vector2::new(1.0, -2.0),
            Shape::Superquartic { a: 1.0, b: 0.5, c: 0.2, d: 0.1, r0: 3.0 },
        )
        .unwrap();
        let x = Vector2::new(4.0, 1.5);
        let p = o.project(&x).unwrap();
        assert!(o.level(&p.point).abs() < 1e-12);
        // x - y is aligned with the outward normal.
        let n = o.free_normal(&p.point);
        let r = x - p.point;
        assert!((r - n * r.norm()).norm() < 1e-10);
        // No sampled surface point is closer.
        let closest = o
            .surface_samples(20000)
            .iter()
            .map(|y| (x - y).norm())
            .fold(f64::INFINITY, f64::min);
        assert!(p.distance <= closest + 1e-12);
        assert!(closest - p.distance < 1e-6);
    }

    #[test]
    fn boundary_distance_from_inside() {
        let b = ImplicitObstacle::new(
            Vector2::zeros(),
            Shape::SuperellipseBoundary { q: 1.0, p: 1.0, d: 10.0, n: 2 },
        )
        .unwrap();
        let x = Vector2::new(0.0, 8.0);
        let p = b.project(&x).unwrap();
        assert_relative_eq!(p.point, Vector2::new(0.0, 10.0), epsilon = 1e-10);
        assert_relative_eq!(p.signed_distance, 2.0, epsilon = 1e-10);
        // Outside the workspace the signed distance is negative.
        let out = b.project(&Vector2::new(11.0, 0.0)).unwrap();
        assert_relative_eq!(out.signed_distance, -1.0, epsilon = 1e-10);
    }

    #[test]
    fn radial_bounds_enclose_the_surface() {
        let o = ImplicitObstacle::new(
            Vector2::zeros(),
            Shape::Superquartic { a: 0.3, b: 2.0, c: 0.05, d: 0.4, r0: 2.0 },
        )
        .unwrap();
        for y in o.surface_samples(10007) {
            let r = y.norm();
            assert!(r >= o.inner_radius() && r <= o.outer_radius());
        }
    }

    #[test]
    fn disc_projection_jacobian_matches_closed_form() {
        let w = disc_world(1.0);
        let x = Vector2::new(1.2, -2.1);
        let jac = projection_jacobian(&w, &x, None).unwrap();
        let rho = x.norm();
        let u = x / rho;
        let expected = (Mat::<2>::identity() - u * u.transpose()) * (1.0 / rho);
        assert!((jac.matrix - expected).amax() < 1e-6);
        assert!(jac.symmetry_defect <= 10.0 * jac.fd_tolerance);
        assert!(jac.radial_residual < 1e-6);
    }

    #[test]
    fn sphere_jacobian_spectrum() {
        let w = World::new(None, vec![ImplicitObstacle::ball(Vector3::zeros(), 1.0).unwrap()], 1.5).unwrap();
        let jac = projection_jacobian(&w, &Vector3::new(0.0, 2.0, 0.0), None).unwrap();
        let ev = symmetric_eigenvalues(&jac.matrix);
        assert!(ev[0].abs() < 1e-6);
        assert!((ev[1] - 0.5).abs() < 1e-6 && (ev[2] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn curvature_condition_on_discs() {
        // r0 = 1, x_d = (-4, 0): equilibrium at (1.6, 0), P = (1, 0), |x_d - P| = 5.
        let w = disc_world(1.0);
        let v = curvature_condition(&w, &Vector2::new(1.6, 0.0), &Vector2::new(-4.0, 0.0), 0.6).unwrap();
        assert!((v.max_eigenvalue - 0.625).abs() < 1e-6);
        assert!((v.bound - 5.0 / 5.6).abs() < 1e-12);
        assert!(v.holds);

        // r0 = 10 with |x_d - P| = 5 violates the bound.
        let w = disc_world(10.0);
        let v = curvature_condition(&w, &Vector2::new(10.6, 0.0), &Vector2::new(10.0, 5.0), 0.6).unwrap();
        assert!((v.max_eigenvalue - 10.0 / 10.6).abs() < 1e-6);
        assert!((v.bound - 5.0 / 5.6).abs() < 1e-12);
        assert!(!v.holds);
    }

    #[test]
    fn nearly_flat_wall_fails_curvature_condition() {
        // Quartic with tiny curvature on its flank: tangential eigenvalue near 1.
        let o = ImplicitObstacle::new(
            Vector2::zeros(),
            Shape::Ellipsoid { coeffs: Vector2::new(4.0, 1e-4), r0: 1.0 },
        )
        .unwrap();
        let w = World::new(None, vec![o], 1.2).unwrap();
        let v = curvature_condition(&w, &Vector2::new(1.1, 0.0), &Vector2::new(-3.0, 0.0), 0.6).unwrap();
        assert!(v.max_eigenvalue > 0.99);
        assert!(!v.holds);
    }

    #[test]
    fn validate_margin_ordering() {
        let w = disc_world(1.0);
        let ok = validate_world(&w, &params2(Vector2::new(-4.0, -7.0)), Some(4.0));
        assert!(ok.is_ok(), "{:?}", ok);

        let mut bad = params2(Vector2::new(-4.0, -7.0));
        bad.robot_radius = 0.7;
        let r = validate_world(&w, &bad, Some(4.0));
        assert!(r.mentions("R < ε fails"));

        let r = validate_world(&w, &params2(Vector2::new(-4.0, -7.0)), Some(1.0));
        assert!(r.mentions("sensor_range"));
    }

    #[test]
    fn validate_separation() {
        let w = World::new(
            None,
            vec![
                ImplicitObstacle::ball(Vector2::new(0.0, 0.0), 1.0).unwrap(),
                ImplicitObstacle::ball(Vector2::new(2.1, 0.0), 1.0).unwrap(),
            ],
            1.2,
        )
        .unwrap();
        let r = validate_world(&w, &params2(Vector2::new(-4.0, -7.0)), Some(4.0));
        assert!(r.mentions("separation ≤ 2h"), "{:?}", r);
        assert_relative_eq!(sampled_gap(&w.obstacles()[0], &w.obstacles()[1]), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn planar_families_reject_3d() {
        let err = ImplicitObstacle::<3>::new(
            Vector3::zeros(),
            Shape::Superquartic { a: 1.0, b: 1.0, c: 1.0, d: 1.0, r0: 1.0 },
        )
        .unwrap_err();
        assert!(matches!(err, GeometryError::InvalidShape(_)));
        assert!(ImplicitObstacle::ball(Vector2::zeros(), -1.0).is_err());
    }
}
