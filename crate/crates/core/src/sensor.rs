//! Simulated range sensor.
//!
//! Rays leave the robot at fixed bearings and are marched on a fixed grid
//! `t_j = min(j * step, R_s)`. The first grid point inside an obstacle is
//! refined by bisection; the reported hit is the upper end of the final
//! bracket, so every return is an upper bound on the distance along its ray.
//!
//! Each surface is marched independently and a ray reports the nearest of its
//! per-surface hits. [`Scanner::nearest_return`] evaluates only the rays and
//! surfaces that can still beat the best return found so far and yields the
//! same reading as [`Scanner::scan`] followed by [`min_range`].

use std::f64::consts::PI;
use std::fmt::Write as _;

use thiserror::Error;

use crate::geometry::{ImplicitObstacle, Point, Shape, World};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensorError {
    #[error("invalid sensor configuration: {0}")]
    InvalidConfig(String),
    #[error("sensor origin is inside an obstacle (level {level})")]
    InsideObstacle { level: f64 },
    #[error("no return within sensor range {range}")]
    OutOfRange { range: f64 },
    #[error("range sensing is implemented for 2 and 3 dimensions, not {0}")]
    UnsupportedDimension(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    /// Sensor range `R_s`.
    pub range: f64,
    /// Number of polar angles in 2D.
    pub rays_2d: usize,
    /// Azimuth count in 3D.
    pub theta_steps: usize,
    /// Elevation count in 3D.
    pub phi_steps: usize,
    pub march_step: f64,
    pub hit_tolerance: f64,
}

impl ScanConfig {
    pub fn with_range(range: f64) -> Self {
        Self {
            range,
            rays_2d: 720,
            theta_steps: 180,
            phi_steps: 90,
            march_step: 0.01 * range,
            hit_tolerance: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<(), SensorError> {
        let bad = |m: String| Err(SensorError::InvalidConfig(m));
        if !(self.range.is_finite() && self.range > 0.0) {
            return bad(format!("range must be positive, got {}", self.range));
        }
        if self.rays_2d < 8 {
            return bad(format!("rays_2d must be at least 8, got {}", self.rays_2d));
        }
        if self.theta_steps < 4 || self.phi_steps < 2 {
            return bad(format!(
                "3D grid must be at least 4 x 2, got {} x {}",
                self.theta_steps, self.phi_steps
            ));
        }
        if !(self.hit_tolerance > 0.0) {
            return bad(format!("hit_tolerance must be positive, got {}", self.hit_tolerance));
        }
        if !(self.march_step > 0.0 && self.march_step <= self.range) {
            return bad(format!("march_step must lie in (0, range], got {}", self.march_step));
        }
        if self.hit_tolerance * 10.0 > self.march_step {
            return bad(format!(
                "march_step {} must be at least 10 x hit_tolerance {}",
                self.march_step, self.hit_tolerance
            ));
        }
        Ok(())
    }

    /// Angular spacing of the ray set (the coarser of the two axes in 3D).
    pub fn angular_spacing(&self, dimension: usize) -> f64 {
        if dimension == 2 {
            2.0 * PI / self.rays_2d as f64
        } else {
            (2.0 * PI / self.theta_steps as f64).max(PI / self.phi_steps as f64)
        }
    }
}

/// Direction of one ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bearing {
    pub theta: f64,
    pub phi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayReturn {
    pub bearing: Bearing,
    pub rho: f64,
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scan<const N: usize> {
    pub origin: Point<N>,
    pub range: f64,
    /// Ordered by ray index.
    pub rays: Vec<RayReturn>,
}

impl<const N: usize> Scan<N> {
    /// CSV with columns `theta[,phi],rho,saturated`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(if N == 2 { "theta,rho,saturated\n" } else { "theta,phi,rho,saturated\n" });
        for r in &self.rays {
            match r.bearing.phi {
                Some(phi) => {
                    let _ = writeln!(out, "{:.16e},{:.16e},{:.16e},{}", r.bearing.theta, phi, r.rho, r.saturated);
                }
                None => {
                    let _ = writeln!(out, "{:.16e},{:.16e},{}", r.bearing.theta, r.rho, r.saturated);
                }
            }
        }
        out
    }
}

/// Minimum return of a scan and the gradient estimate it implies.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeReading<const N: usize> {
    pub rho_star: f64,
    pub theta: f64,
    pub phi: Option<f64>,
    /// Minus the bearing of the nearest return; `None` when out of range.
    pub gradient: Option<Point<N>>,
    pub in_range: bool,
    pub ray_index: usize,
}

/// Picks the smallest return, lowest ray index on ties.
pub fn min_range<const N: usize>(scan: &Scan<N>) -> RangeReading<N> {
    let mut best = 0;
    for (i, r) in scan.rays.iter().enumerate() {
        if r.rho < scan.rays[best].rho {
            best = i;
        }
    }
    let r = &scan.rays[best];
    reading_from(best, r.bearing, r.rho, scan.range)
}

fn reading_from<const N: usize>(index: usize, bearing: Bearing, rho: f64, range: f64) -> RangeReading<N> {
    let in_range = rho < range;
    RangeReading {
        rho_star: rho,
        theta: bearing.theta,
        phi: bearing.phi,
        gradient: in_range.then(|| -direction_of::<N>(bearing)),
        in_range,
        ray_index: index,
    }
}

/// Oriented-distance estimate carried by a reading.
pub fn oriented_distance_from_reading<const N: usize>(reading: &RangeReading<N>) -> Result<f64, SensorError> {
    if reading.in_range {
        Ok(reading.rho_star)
    } else {
        Err(SensorError::OutOfRange { range: reading.rho_star })
    }
}

fn direction_of<const N: usize>(b: Bearing) -> Point<N> {
    match b.phi {
        None => Point::<N>::from_fn(|i, _| if i == 0 { b.theta.cos() } else { b.theta.sin() }),
        Some(phi) => {
            let v = [b.theta.cos() * phi.cos(), b.theta.sin() * phi.cos(), phi.sin()];
            Point::<N>::from_fn(|i, _| v[i])
        }
    }
}

/// Precomputed ray set for one sensor configuration.
#[derive(Debug, Clone)]
pub struct Scanner<const N: usize> {
    config: ScanConfig,
    bearings: Vec<Bearing>,
    directions: Vec<Point<N>>,
    n_theta: usize,
    n_phi: usize,
    last_step: usize,
}

/// Consecutive boundary rays culled together.
const BOUNDARY_BLOCK: usize = 8;

/// Relative slack applied before trusting a crossing estimate to exceed a bound.
const ESTIMATE_SLACK: f64 = 1e-9;

/// Entry and exit parameters of the ray `x + t d` through the sphere of
/// radius `r` centred at `x - w`.
#[inline]
fn sphere_span<const N: usize>(w: &Point<N>, d: &Point<N>, r: f64) -> Option<(f64, f64)> {
    let dw = d.dot(w);
    let disc = dw * dw - (w.norm_squared() - r * r);
    if disc < 0.0 {
        return None;
    }
    let root = disc.sqrt();
    Some((-dw - root, -dw + root))
}

/// First crossing of a workspace boundary along `x + t d`, to well within one
/// march step, or `None` if the ray stays inside up to `reach`. The level is
/// concave along rays, so Newton from `reach` descends monotonically onto the
/// crossing.
fn boundary_crossing<const N: usize>(
    o: &ImplicitObstacle<N>,
    x: &Point<N>,
    d: &Point<N>,
    reach: f64,
    tolerance: f64,
) -> Option<f64> {
    if o.level(&(x + d * reach)) > 0.0 {
        return None;
    }
    let mut t = reach;
    for _ in 0..60 {
        let p = x + d * t;
        let g = o.level(&p);
        let slope = o.level_gradient(&p).dot(d);
        if g > 0.0 || slope >= 0.0 {
            return Some(t);
        }
        let step = g / slope;
        t -= step;
        if step <= tolerance {
            return Some(t);
        }
    }
    let w = x - o.center();
    let dw = d.dot(&w);
    let disc = dw * dw - w.norm_squared() + o.inner_radius().powi(2);
    Some(if disc > 0.0 { (-dw + disc.sqrt()).max(0.0) } else { 0.0 })
}

/// Lower bound on the entry of `x + t d` into a convex obstacle, starting from
/// `t0` before the entry, or `None` if the ray misses it before `limit`.
/// Newton iterates on a convex level increase monotonically towards the entry.
fn convex_entry_lower_bound<const N: usize>(
    o: &ImplicitObstacle<N>,
    x: &Point<N>,
    d: &Point<N>,
    t0: f64,
    limit: f64,
    tolerance: f64,
) -> Option<f64> {
    let mut t = t0;
    for _ in 0..60 {
        let p = x + d * t;
        let g = o.level(&p);
        if g <= 0.0 {
            return Some(t);
        }
        let slope = o.level_gradient(&p).dot(d);
        if slope >= 0.0 {
            return None;
        }
        let next = t - g / slope;
        if next > limit {
            return None;
        }
        if next - t <= tolerance {
            return Some(next);
        }
        t = next;
    }
    Some(t)
}

impl<const N: usize> Scanner<N> {
    pub fn new(config: ScanConfig) -> Result<Self, SensorError> {
        config.validate()?;
        let (n_theta, n_phi) = match N {
            2 => (config.rays_2d, 1),
            3 => (config.theta_steps, config.phi_steps),
            n => return Err(SensorError::UnsupportedDimension(n)),
        };
        let mut bearings = Vec::with_capacity(n_theta * n_phi);
        for j in 0..n_phi {
            let phi = (N == 3).then(|| -PI / 2.0 + (j as f64 + 0.5) * PI / n_phi as f64);
            for i in 0..n_theta {
                bearings.push(Bearing { theta: i as f64 * 2.0 * PI / n_theta as f64, phi });
            }
        }
        let directions = bearings.iter().map(|b| direction_of::<N>(*b)).collect();
        let last_step = (config.range / config.march_step - 1e-9).ceil().max(1.0) as usize;
        Ok(Self { config, bearings, directions, n_theta, n_phi, last_step })
    }

    pub fn config(&self) -> &ScanConfig {
        &self.config
    }

    pub fn range(&self) -> f64 {
        self.config.range
    }

    pub fn bearings(&self) -> &[Bearing] {
        &self.bearings
    }

    pub fn ray_count(&self) -> usize {
        self.bearings.len()
    }

    pub fn angular_spacing(&self) -> f64 {
        self.config.angular_spacing(N)
    }

    #[inline]
    fn grid(&self, j: usize) -> f64 {
        if j >= self.last_step {
            self.config.range
        } else {
            j as f64 * self.config.march_step
        }
    }

    fn check_origin(&self, world: &World<N>, x: &Point<N>) -> Result<(), SensorError> {
        let level = world.min_level(x);
        if level <= 0.0 || !level.is_finite() {
            return Err(SensorError::InsideObstacle { level });
        }
        Ok(())
    }

    /// Newton steps below this cannot move a crossing estimate across a bracket.
    fn newton_tolerance(&self) -> f64 {
        1e-3 * self.config.march_step
    }

    /// Estimate of the first crossing of `o` along the ray (never above it by
    /// more than rounding) and the parameter past which `o` cannot be met, or
    /// `None` if the ray misses `o` up to `bound`.
    #[inline]
    fn crossing(&self, o: &ImplicitObstacle<N>, x: &Point<N>, d: &Point<N>, bound: f64) -> Option<(f64, f64)> {
        let w = x - o.center();
        let (t_enter, t_exit) = match o.shape() {
            Shape::SuperellipseBoundary { .. } => {
                let t = boundary_crossing(o, x, d, bound.min(self.config.range), self.newton_tolerance())?;
                return Some((t, self.config.range));
            }
            Shape::Ellipsoid { coeffs, r0 } => {
                let mut qa = 0.0;
                let mut qb = 0.0;
                let mut qc = -r0 * r0;
                for j in 0..N {
                    qa += coeffs[j] * d[j] * d[j];
                    qb += coeffs[j] * w[j] * d[j];
                    qc += coeffs[j] * w[j] * w[j];
                }
                let disc = qb * qb - qa * qc;
                if disc < 0.0 {
                    return None;
                }
                let root = disc.sqrt();
                ((-qb - root) / qa, (-qb + root) / qa)
            }
            Shape::Ball { .. } => sphere_span(&w, d, o.outer_radius())?,
            Shape::Superquartic { .. } => {
                let (t_enter, t_exit) = sphere_span(&w, d, o.outer_radius())?;
                if t_exit <= 0.0 || t_enter - ESTIMATE_SLACK > bound {
                    return None;
                }
                let limit = t_exit.min(bound + ESTIMATE_SLACK * (1.0 + bound));
                let t = convex_entry_lower_bound(o, x, d, t_enter.max(0.0), limit, self.newton_tolerance())?;
                (t, t_exit)
            }
        };
        if t_exit <= 0.0 || t_enter - ESTIMATE_SLACK * (1.0 + t_enter.abs()) > bound {
            return None;
        }
        Some((t_enter, t_exit))
    }

    /// Grid index range whose brackets may contain a crossing of `o` along
    /// the ray before `bound`.
    #[inline]
    fn entry(&self, o: &ImplicitObstacle<N>, x: &Point<N>, d: &Point<N>, bound: f64) -> Option<(usize, usize)> {
        let (t_enter, t_exit) = self.crossing(o, x, d, bound)?;
        let s = self.config.march_step;
        let start = (t_enter / s).floor() - 1.0;
        let end = ((t_exit / s).floor() + 2.0).min(self.last_step as f64);
        Some((start.max(1.0) as usize, end as usize))
    }

    /// Ray index reached from `i` by a pattern search over neighbouring rays,
    /// with halving strides, on the crossing estimate for `o`.
    fn descend(&self, o: &ImplicitObstacle<N>, x: &Point<N>, mut i: usize) -> usize {
        let range = self.config.range;
        let estimate = |k: usize| self.crossing(o, x, &self.directions[k], range).map_or(f64::INFINITY, |c| c.0);
        let mut current = estimate(i);
        if !current.is_finite() {
            return i;
        }
        let mut stride = (self.n_theta / 32).max(1);
        loop {
            let (row, col) = (i / self.n_theta, i % self.n_theta);
            let row_step = stride.min(self.n_phi.saturating_sub(1)).max(1);
            let candidates = [
                Some(row * self.n_theta + (col + stride) % self.n_theta),
                Some(row * self.n_theta + (col + self.n_theta - stride % self.n_theta) % self.n_theta),
                (row + row_step < self.n_phi).then(|| i + row_step * self.n_theta),
                (row >= row_step && self.n_phi > 1).then(|| i - row_step * self.n_theta),
            ];
            let mut moved = false;
            for k in candidates.into_iter().flatten() {
                let t = estimate(k);
                if t < current {
                    current = t;
                    i = k;
                    moved = true;
                }
            }
            if !moved {
                if stride == 1 {
                    return i;
                }
                stride /= 2;
            }
        }
    }

    /// Hit distance of `o` along the ray, or `None` if the ray misses `o` or
    /// the hit provably lies beyond `bound`.
    fn hit(&self, o: &ImplicitObstacle<N>, x: &Point<N>, d: &Point<N>, bound: f64) -> Option<f64> {
        let (start, end) = self.entry(o, x, d, bound)?;
        let s = self.config.march_step;
        let end = end.min(((bound / s).floor() as usize).saturating_add(1)).min(self.last_step);
        for j in start..=end {
            let t = self.grid(j);
            if o.level(&(x + d * t)) <= 0.0 {
                return self.bisect(o, x, d, self.grid(j - 1), t, bound);
            }
        }
        None
    }

    /// Upper end of the bisected bracket, or `None` once the bracket lies
    /// entirely beyond `bound`.
    fn bisect(&self, o: &ImplicitObstacle<N>, x: &Point<N>, d: &Point<N>, mut lo: f64, mut hi: f64, bound: f64) -> Option<f64> {
        while hi - lo > self.config.hit_tolerance {
            if lo > bound {
                return None;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if o.level(&(x + d * mid)) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        (lo <= bound).then_some(hi)
    }

    fn ray_range(&self, world: &World<N>, x: &Point<N>, d: &Point<N>) -> Option<f64> {
        let mut best: Option<f64> = None;
        for (_, o) in world.contributors() {
            let bound = best.unwrap_or(self.config.range);
            if let Some(t) = self.hit(o, x, d, bound) {
                if best.is_none_or(|b| t < b) {
                    best = Some(t);
                }
            }
        }
        best
    }

    /// Full scan, one return per ray.
    pub fn scan(&self, world: &World<N>, x: &Point<N>) -> Result<Scan<N>, SensorError> {
        self.check_origin(world, x)?;
        let range = self.config.range;
        let rays = self
            .bearings
            .iter()
            .zip(&self.directions)
            .map(|(b, d)| match self.ray_range(world, x, d) {
                Some(t) => RayReturn { bearing: *b, rho: t, saturated: false },
                None => RayReturn { bearing: *b, rho: range, saturated: true },
            })
            .collect();
        Ok(Scan { origin: *x, range, rays })
    }

    /// Same result as `min_range(&self.scan(world, x)?)`.
    pub fn nearest_return(&self, world: &World<N>, x: &Point<N>) -> Result<RangeReading<N>, SensorError> {
        self.nearest_return_hinted(world, x, None)
    }

    /// [`Scanner::nearest_return`] seeded with a likely ray index, typically
    /// the previous reading's. The result does not depend on the hint.
    pub fn nearest_return_hinted(
        &self,
        world: &World<N>,
        x: &Point<N>,
        hint: Option<usize>,
    ) -> Result<RangeReading<N>, SensorError> {
        self.check_origin(world, x)?;
        let range = self.config.range;
        let mut best_rho = range;
        let mut best_index = 0usize;
        let consider = |i: usize, t: f64, best_rho: &mut f64, best_index: &mut usize| {
            if t < *best_rho || (t == *best_rho && i < *best_index) {
                *best_rho = t;
                *best_index = i;
            }
        };

        let mut interior: Vec<(f64, &ImplicitObstacle<N>)> = world
            .obstacles()
            .iter()
            .map(|o| ((x - o.center()).norm() - o.outer_radius(), o))
            .filter(|(lb, _)| *lb <= range)
            .collect();
        interior.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));

        let boundary = world
            .boundary()
            .filter(|b| b.inner_radius() - (x - b.center()).norm() <= range);

        if let Some(i) = hint.filter(|&i| i < self.ray_count()) {
            let d = &self.directions[i];
            for o in interior.iter().map(|(_, o)| *o).chain(boundary) {
                if let Some(t) = self.hit(o, x, d, best_rho) {
                    consider(i, t, &mut best_rho, &mut best_index);
                }
            }
        }
        let seeded = best_rho < range;
        if !seeded {
            for (_, o) in &interior {
                let i = self.descend(o, x, self.index_toward(&(o.center() - x)));
                if let Some(t) = self.hit(o, x, &self.directions[i], best_rho) {
                    consider(i, t, &mut best_rho, &mut best_index);
                }
            }
        }
        let mut indices = Vec::new();
        for (lb, o) in &interior {
            if *lb > best_rho {
                break;
            }
            self.cone_indices(x, o, best_rho, &mut indices);
            for &i in &indices {
                if let Some(t) = self.hit(o, x, &self.directions[i], best_rho) {
                    consider(i, t, &mut best_rho, &mut best_index);
                }
            }
        }
        if let Some(b) = boundary {
            let w = x - b.center();
            if b.inner_radius() - w.norm() <= best_rho {
                if !seeded {
                    let i = self.descend(b, x, self.index_toward(&w));
                    if let Some(t) = self.hit(b, x, &self.directions[i], best_rho) {
                        consider(i, t, &mut best_rho, &mut best_index);
                    }
                }
                let reach = best_rho;
                self.boundary_indices(&w, b.inner_radius(), reach, &mut indices);
                // Along the circle of radius `reach`, the level changes by at
                // most `slope` per ray; a block whose middle ray lands far
                // enough inside the workspace cannot cross the boundary.
                let slope = b.gradient_bound(w.norm() + reach) * reach * self.angular_spacing();
                for block in indices.chunks(BOUNDARY_BLOCK) {
                    let mid = block.len() / 2;
                    let half_width = mid.max(block.len() - 1 - mid) as f64;
                    if N == 2 && b.level(&(x + self.directions[block[mid]] * reach)) > slope * (half_width + 0.5) {
                        continue;
                    }
                    for &i in block {
                        if let Some(t) = self.hit(b, x, &self.directions[i], best_rho) {
                            consider(i, t, &mut best_rho, &mut best_index);
                        }
                    }
                }
            }
        }
        Ok(reading_from(best_index, self.bearings[best_index], best_rho.min(range), range))
    }

    fn index_toward(&self, v: &Point<N>) -> usize {
        let theta = v[1].atan2(v[0]).rem_euclid(2.0 * PI);
        let i = (theta / (2.0 * PI) * self.n_theta as f64).round() as usize % self.n_theta;
        if N == 2 {
            return i;
        }
        let phi = (v[2] / v.norm()).clamp(-1.0, 1.0).asin();
        let j = ((phi + PI / 2.0) / PI * self.n_phi as f64 - 0.5).round();
        let j = j.clamp(0.0, (self.n_phi - 1) as f64) as usize;
        j * self.n_theta + i
    }

    /// Superset of the ray indices that leave the inscribed ball of a boundary
    /// (radius `r_in`, robot offset `w` from its center) within `reach`.
    fn boundary_indices(&self, w: &Point<N>, r_in: f64, reach: f64, out: &mut Vec<usize>) {
        out.clear();
        let dist = w.norm();
        let c = (r_in * r_in - dist * dist - reach * reach) / (2.0 * dist * reach);
        if N != 2 || !c.is_finite() || c <= -1.0 {
            out.extend(0..self.ray_count());
        } else if c <= 1.0 {
            self.arc_indices(w[1].atan2(w[0]), c.acos() + 1e-9, 0, out);
        }
    }

    /// Appends the planar bearing indices within `half` of `theta_c`, with one
    /// index of margin, offset by `base`.
    fn arc_indices(&self, theta_c: f64, half: f64, base: usize, out: &mut Vec<usize>) {
        let n = self.n_theta;
        if half >= PI {
            out.extend(base..base + n);
            return;
        }
        let dtheta = 2.0 * PI / n as f64;
        let lo = ((theta_c - half) / dtheta).floor() as i64 - 1;
        let hi = ((theta_c + half) / dtheta).ceil() as i64 + 1;
        if (hi - lo + 1) as usize >= n {
            out.extend(base..base + n);
            return;
        }
        out.extend((lo..=hi).map(|k| base + k.rem_euclid(n as i64) as usize));
    }

    /// Superset of the ray indices that enter the bounding sphere of `o`
    /// within distance `reach`.
    fn cone_indices(&self, x: &Point<N>, o: &ImplicitObstacle<N>, reach: f64, out: &mut Vec<usize>) {
        out.clear();
        let v = o.center() - x;
        let dist = v.norm();
        let r = o.outer_radius();
        if dist <= r {
            out.extend(0..self.ray_count());
            return;
        }
        let mut alpha = (r / dist).asin();
        let tangent = (dist * dist - r * r).sqrt();
        if reach < tangent {
            // Rim of the spherical cap within `reach` of x.
            let c = (dist * dist + reach * reach - r * r) / (2.0 * dist * reach);
            alpha = alpha.min(c.clamp(-1.0, 1.0).acos() + 1e-9);
        }
        let theta_c = v[1].atan2(v[0]);
        if N == 2 {
            self.arc_indices(theta_c, alpha, 0, out);
            return;
        }
        let phi_c = (v[2] / dist).clamp(-1.0, 1.0).asin();
        let dphi = PI / self.n_phi as f64;
        let cos_alpha = alpha.cos();
        for j in 0..self.n_phi {
            let phi = -PI / 2.0 + (j as f64 + 0.5) * dphi;
            if (phi - phi_c).abs() > alpha + dphi {
                continue;
            }
            let denom = phi.cos() * phi_c.cos();
            let half = if denom < 1e-9 {
                PI
            } else {
                let c = (cos_alpha - phi.sin() * phi_c.sin()) / denom;
                if c <= -1.0 {
                    PI
                } else if c > 1.0 {
                    // The row misses the cone; keep the nearest azimuths.
                    0.0
                } else {
                    c.acos()
                }
            };
            self.arc_indices(theta_c, half, j * self.n_theta, out);
        }
    }
}
