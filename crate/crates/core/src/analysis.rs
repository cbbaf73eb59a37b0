//! Stability analysis: undesired equilibria, control Jacobians and
//! trajectory-level certificates.
//!
//! An undesired equilibrium is a point `x` with `b(x) = eps` where
//! `x - x_d = lambda * grad b(x)` for some `lambda > 0`: the nominal velocity
//! points straight into the obstacle and the fully blended law cancels it.
//! Near such a point the blended law coincides with the local law
//!
//! ```text
//! u(x) = -k [x - x_d + g(x) (x - P(x))],   g(x) = (x_d - P)^T (x - P) / eps^2 - 1
//! ```
//!
//! whose Jacobian at the equilibrium is
//! `-k [I - (L / eps) A + g (I - J_P)]` with `L = |x_d - P|` and
//! `A` the projector onto the normal.

use std::cmp::Ordering;

use nalgebra::{Complex, DMatrix};
use serde::Serialize;
use thiserror::Error;

use crate::controller::{discontinuous_control_from, svc_control_from, ControllerParams};
use crate::geometry::{
    curvature_verdict, default_fd_step, oriented_distance, projection_jacobian, to_dmatrix,
    CurvatureVerdict, GeometryError, Mat, ObstacleId, Point, Shape, World,
};
use crate::simulator::{TerminalStatus, Trajectory};

/// Tolerance on `|b(x) - eps|` for membership in the equilibrium set.
pub const LEVEL_TOLERANCE: f64 = 1e-8;
/// Tolerance on the angle between `x - x_d` and `grad b(x)`.
pub const ALIGNMENT_TOLERANCE: f64 = 1e-6;
/// Real-part threshold for confirming instability.
pub const INSTABILITY_THRESHOLD: f64 = 1e-6;
/// Allowed one-step growth of `|x - x_d|`.
pub const LYAPUNOV_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("equilibrium search for obstacle {obstacle} did not converge")]
    NoConvergence { obstacle: usize },
    #[error("candidate equilibrium {x_bar:?} of obstacle {obstacle} is nearer to {other}")]
    SkeletonInterference { obstacle: usize, other: String, x_bar: Vec<f64> },
    #[error("point is not an undesired equilibrium: {0}")]
    NotAnEquilibrium(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    UnstableConfirmed,
    Inconclusive,
}

/// Finite-difference and closed-form Jacobians of the control at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlJacobian<const N: usize> {
    /// Central differences of the local law.
    pub local_fd: Mat<N>,
    /// Closed form assembled from the finite-difference projection Jacobian.
    pub closed_form: Mat<N>,
    /// Central differences of the smoothed law driven by the exact oriented distance.
    pub closed_loop_fd: Mat<N>,
    pub projection_jacobian: Mat<N>,
    pub projection_symmetry_defect: f64,
    pub projection_fd_tolerance: f64,
    /// `g` at the evaluation point.
    pub g: f64,
    /// Normal projector `(x - P)(x - P)^T / |x - P|^2`.
    pub a: Mat<N>,
    /// `-k g L / (eps + L)`.
    pub bound: f64,
    pub step: f64,
}

/// One point of the undesired-equilibrium set with its stability evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumReport<const N: usize> {
    pub x_bar: Point<N>,
    pub obstacle_index: usize,
    pub projection: Point<N>,
    pub lambda: f64,
    pub level_residual: f64,
    pub alignment_residual: f64,
    pub jacobian: ControlJacobian<N>,
    /// Eigenvalues of `jacobian.local_fd` (symmetrised when the asymmetry is
    /// within finite-difference noise).
    pub eigenvalues: Vec<Complex<f64>>,
    pub raw_eigenvalues: Vec<Complex<f64>>,
    /// Spectrum restricted to the tangent space of the level set.
    pub tangent_eigenvalues: Vec<Complex<f64>>,
    pub curvature_verdict: CurvatureVerdict,
    pub classification: Classification,
    /// Closed-form location for ball obstacles.
    pub analytic_x_bar: Option<Point<N>>,
}

impl<const N: usize> EquilibriumReport<N> {
    pub fn max_real_eigenvalue(&self) -> f64 {
        max_real(&self.eigenvalues)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSearch<const N: usize> {
    pub reports: Vec<EquilibriumReport<N>>,
    /// Per-obstacle failures; these do not abort the search.
    pub issues: Vec<AnalysisError>,
}

fn max_real(v: &[Complex<f64>]) -> f64 {
    v.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max)
}

fn sorted_eigenvalues(m: DMatrix<f64>) -> Vec<Complex<f64>> {
    let mut ev: Vec<Complex<f64>> = m.complex_eigenvalues().iter().cloned().collect();
    ev.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap_or(Ordering::Equal).then(a.im.partial_cmp(&b.im).unwrap_or(Ordering::Equal)));
    ev
}

/// Closed-form equilibrium behind a ball: `c + (r0 + eps)(c - x_d)/|c - x_d|`.
pub fn ball_equilibrium<const N: usize>(center: &Point<N>, radius: f64, x_d: &Point<N>, eps: f64) -> Point<N> {
    let v = center - x_d;
    center + v * ((radius + eps) / v.norm())
}

/// Angle between `x - x_d` and `grad`.
pub fn heading_angle<const N: usize>(x: &Point<N>, grad: &Point<N>, x_d: &Point<N>) -> f64 {
    let v = x - x_d;
    let c = v.dot(grad) / (v.norm() * grad.norm());
    c.clamp(-1.0, 1.0).acos()
}

/// Local law `-k [x - x_d + g(x)(x - P(x))]` with the exact projection.
pub fn local_law<const N: usize>(
    world: &World<N>,
    x: &Point<N>,
    params: &ControllerParams<N>,
) -> Result<Point<N>, GeometryError> {
    let p = oriented_distance(world, x)?.nearest_point;
    let r = x - p;
    let g = (params.target - p).dot(&r) / (params.eps * params.eps) - 1.0;
    Ok((x - params.target + r * g) * -params.k)
}

fn central_difference<const N: usize, F>(x: &Point<N>, step: f64, mut f: F) -> Result<Mat<N>, GeometryError>
where
    F: FnMut(&Point<N>) -> Result<Point<N>, GeometryError>,
{
    let mut j = Mat::<N>::zeros();
    for col in 0..N {
        let mut e = Point::<N>::zeros();
        e[col] = step;
        j.set_column(col, &((f(&(x + e))? - f(&(x - e))?) / (2.0 * step)));
    }
    Ok(j)
}

/// Central-difference Jacobian of the smoothed law with exact distance and gradient.
pub fn closed_loop_jacobian<const N: usize>(
    world: &World<N>,
    x: &Point<N>,
    params: &ControllerParams<N>,
    step: f64,
) -> Result<Mat<N>, GeometryError> {
    central_difference(x, step, |y| {
        let od = oriented_distance(world, y)?;
        Ok(svc_control_from(y, od.b, Some(&od.gradient), params)
            .expect("oracle gradients are unit vectors")
            .u)
    })
}

/// Jacobians of the control at `x_bar`.
pub fn control_jacobian<const N: usize>(
    world: &World<N>,
    x_bar: &Point<N>,
    params: &ControllerParams<N>,
    step: Option<f64>,
) -> Result<ControlJacobian<N>, GeometryError> {
    let od = oriented_distance(world, x_bar)?;
    let step = step.unwrap_or_else(|| default_fd_step(od.b));
    let jp = projection_jacobian(world, x_bar, Some(step))?;
    let p = od.nearest_point;
    let r = x_bar - p;
    let eps = params.eps;
    let l = (params.target - p).norm();
    let g = (params.target - p).dot(&r) / (eps * eps) - 1.0;
    let a = r * r.transpose() / r.norm_squared();
    let identity = Mat::<N>::identity();
    let closed_form = (identity - a * (l / r.norm()) + (identity - jp.matrix) * g) * -params.k;
    let local_fd = central_difference(x_bar, step, |y| local_law(world, y, params))?;
    let closed_loop_fd = closed_loop_jacobian(world, x_bar, params, step)?;
    Ok(ControlJacobian {
        local_fd,
        closed_form,
        closed_loop_fd,
        projection_jacobian: jp.matrix,
        projection_symmetry_defect: jp.symmetry_defect,
        projection_fd_tolerance: jp.fd_tolerance,
        g,
        a,
        bound: -params.k * g * l / (eps + l),
        step,
    })
}

/// Orthonormal basis of the complement of the unit vector `n`.
fn tangent_basis<const N: usize>(n: &Point<N>) -> DMatrix<f64> {
    let mut basis: Vec<Point<N>> = Vec::new();
    for k in 0..N {
        let mut v = Point::<N>::zeros();
        v[k] = 1.0;
        v -= n * n.dot(&v);
        for b in &basis {
            v -= b * b.dot(&v);
        }
        let norm = v.norm();
        if norm > 1e-6 && basis.len() < N - 1 {
            basis.push(v / norm);
        }
    }
    DMatrix::from_fn(N, basis.len(), |i, j| basis[j][i])
}

/// Builds the full report for a point of the equilibrium set.
pub fn analyze_equilibrium<const N: usize>(
    world: &World<N>,
    x_bar: &Point<N>,
    params: &ControllerParams<N>,
) -> Result<EquilibriumReport<N>, AnalysisError> {
    let od = oriented_distance(world, x_bar)?;
    let obstacle_index = match od.obstacle {
        ObstacleId::Interior(i) => i,
        ObstacleId::Boundary => {
            return Err(AnalysisError::NotAnEquilibrium("nearest surface is the workspace boundary".into()))
        }
    };
    let level_residual = (od.b - params.eps).abs();
    if level_residual > LEVEL_TOLERANCE {
        return Err(AnalysisError::NotAnEquilibrium(format!(
            "|b - ε| = {level_residual:.3e} exceeds {LEVEL_TOLERANCE:e}"
        )));
    }
    let v = x_bar - params.target;
    let lambda = v.dot(&od.gradient);
    let alignment_residual = heading_angle(x_bar, &od.gradient, &params.target);
    if !(lambda > 0.0) || alignment_residual > ALIGNMENT_TOLERANCE {
        return Err(AnalysisError::NotAnEquilibrium(format!(
            "x - x_d is not a positive multiple of grad b (angle {alignment_residual:.3e}, λ = {lambda:.6})"
        )));
    }

    let jacobian = control_jacobian(world, x_bar, params, None)?;
    let raw = to_dmatrix(&jacobian.local_fd);
    let raw_eigenvalues = sorted_eigenvalues(raw.clone());
    let asymmetry = (&raw - raw.transpose()).amax();
    let fd_noise = 10.0 * params.k * (1.0 - jacobian.g).abs() * jacobian.projection_fd_tolerance;
    let eigenvalues = if asymmetry <= fd_noise.max(1e-6) {
        sorted_eigenvalues((&raw + raw.transpose()) * 0.5)
    } else {
        raw_eigenvalues.clone()
    };
    let basis = tangent_basis(&od.gradient);
    let tangent_eigenvalues = sorted_eigenvalues(basis.transpose() * &raw * &basis);

    let jp = crate::geometry::ProjectionJacobian {
        matrix: jacobian.projection_jacobian,
        evaluation_point: *x_bar,
        projection: od.nearest_point,
        step: jacobian.step,
        symmetry_defect: jacobian.projection_symmetry_defect,
        radial_residual: 0.0,
        fd_tolerance: jacobian.projection_fd_tolerance,
    };
    let curvature_verdict = curvature_verdict(&jp, &params.target, params.eps);
    let analytic_x_bar = match world.obstacles()[obstacle_index].shape() {
        Shape::Ball { radius } => Some(ball_equilibrium(
            world.obstacles()[obstacle_index].center(),
            *radius,
            &params.target,
            params.eps,
        )),
        _ => None,
    };
    let mut report = EquilibriumReport {
        x_bar: *x_bar,
        obstacle_index,
        projection: od.nearest_point,
        lambda,
        level_residual,
        alignment_residual,
        jacobian,
        eigenvalues,
        raw_eigenvalues,
        tangent_eigenvalues,
        curvature_verdict,
        classification: Classification::Inconclusive,
        analytic_x_bar,
    };
    report.classification = classify_equilibrium(&report);
    Ok(report)
}

/// Instability is confirmed when the spectrum restricted to the level set's
/// tangent space has a real part above [`INSTABILITY_THRESHOLD`]. The normal
/// direction always carries the positive eigenvalue `2kL/eps` of the local
/// law, which reflects the shell rather than the flow along it.
pub fn classify_equilibrium<const N: usize>(report: &EquilibriumReport<N>) -> Classification {
    if max_real(&report.tangent_eigenvalues) > INSTABILITY_THRESHOLD {
        Classification::UnstableConfirmed
    } else {
        Classification::Inconclusive
    }
}

/// Locates the undesired equilibria generated by each interior obstacle.
pub fn find_equilibria<const N: usize>(world: &World<N>, params: &ControllerParams<N>) -> EquilibriumSearch<N> {
    let x_d = params.target;
    let eps = params.eps;
    let mut reports = Vec::new();
    let mut issues = Vec::new();
    for (index, o) in world.obstacles().iter().enumerate() {
        let behind = o.center() - x_d;
        let dir = behind / behind.norm();
        // Far-side stationary points of |y - x_d| on the surface have mu < 0.
        let mut found: Vec<Point<N>> = Vec::new();
        let push = |y: Point<N>, found: &mut Vec<Point<N>>| {
            if !found.iter().any(|f| (f - y).norm() < 1e-7) {
                found.push(y);
            }
        };
        if let Some((y, mu)) = o.stationary_point(&x_d, &o.surface_point(&dir)) {
            if mu < 0.0 {
                push(y, &mut found);
            }
        }
        if found.is_empty() || !matches!(o.shape(), Shape::Ball { .. } | Shape::Ellipsoid { .. }) {
            let seeds = crate::geometry::unit_directions::<N>(if N == 2 { 36 } else { 8 });
            for s in seeds {
                if let Some((y, mu)) = o.stationary_point(&x_d, &o.surface_point(&s)) {
                    if mu < 0.0 {
                        push(y, &mut found);
                    }
                }
            }
        }
        if found.is_empty() {
            issues.push(AnalysisError::NoConvergence { obstacle: index });
            continue;
        }
        for y in found {
            let x_bar = y + o.free_normal(&y) * eps;
            if world.boundary().is_some_and(|b| b.level(&x_bar) <= 0.0) {
                continue;
            }
            match oriented_distance(world, &x_bar) {
                Ok(od) if od.obstacle == ObstacleId::Interior(index) => {}
                Ok(od) => {
                    issues.push(AnalysisError::SkeletonInterference {
                        obstacle: index,
                        other: od.obstacle.to_string(),
                        x_bar: x_bar.iter().cloned().collect(),
                    });
                    continue;
                }
                Err(_) => {
                    issues.push(AnalysisError::SkeletonInterference {
                        obstacle: index,
                        other: "a tie".into(),
                        x_bar: x_bar.iter().cloned().collect(),
                    });
                    continue;
                }
            }
            match analyze_equilibrium(world, &x_bar, params) {
                Ok(r) => reports.push(r),
                Err(e) => issues.push(e),
            }
        }
    }
    EquilibriumSearch { reports, issues }
}

/// `|f(x0 + delta/2 v) - f(x0 - delta/2 v)| / delta` for a unit direction `v`.
pub fn difference_quotient<const N: usize, F>(f: F, x0: &Point<N>, direction: &Point<N>, delta: f64) -> f64
where
    F: Fn(&Point<N>) -> Point<N>,
{
    let h = direction * (0.5 * delta);
    (f(&(x0 + h)) - f(&(x0 - h))).norm() / delta
}

/// Smoothed control with exact distance and gradient.
pub fn oracle_control<const N: usize>(world: &World<N>, x: &Point<N>, params: &ControllerParams<N>) -> Point<N> {
    let od = oriented_distance(world, x).expect("probe point has a unique projection");
    svc_control_from(x, od.b, Some(&od.gradient), params).expect("unit gradient").u
}

/// Unsmoothed cone control with exact distance and gradient.
pub fn oracle_discontinuous_control<const N: usize>(
    world: &World<N>,
    x: &Point<N>,
    params: &ControllerParams<N>,
) -> Point<N> {
    let od = oriented_distance(world, x).expect("probe point has a unique projection");
    discontinuous_control_from(x, od.b, Some(&od.gradient), params).expect("unit gradient")
}

/// Least-squares slope of `ln |x - x_d|` against time over the samples
/// with `lower < |x - x_d| < upper`.
pub fn log_distance_slope<const N: usize>(
    trajectory: &Trajectory<N>,
    target: &Point<N>,
    lower: f64,
    upper: f64,
) -> Option<f64> {
    let pts: Vec<(f64, f64)> = trajectory
        .samples
        .iter()
        .filter_map(|s| {
            let r = (s.x - target).norm();
            (r > lower && r < upper).then(|| (s.t, r.ln()))
        })
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

// ---------------------------------------------------------------------------
// Certificates

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SafetyCertificate {
    pub scenario_hash: String,
    pub pass: Option<bool>,
    pub min_b: Option<f64>,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovCertificate {
    pub scenario_hash: String,
    pub pass: Option<bool>,
    pub max_increase: Option<f64>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceCertificate {
    pub scenario_hash: String,
    pub pass: Option<bool>,
    pub fraction: Option<f64>,
    pub completed: usize,
    pub converged: usize,
    /// Non-converged runs excused because they started on an equilibrium ray
    /// or stalled at an equilibrium that fails the curvature condition.
    pub excused: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvatureSummary {
    pub max_eigenvalue: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumSummary {
    pub scenario_hash: String,
    pub obstacle_index: usize,
    pub x_bar: Vec<f64>,
    pub lambda: f64,
    pub g: f64,
    pub bound: f64,
    pub eigenvalues_re: Vec<f64>,
    pub eigenvalues_im: Vec<f64>,
    pub tangent_eigenvalues_re: Vec<f64>,
    pub projection_symmetry_defect: f64,
    pub curvature: CurvatureSummary,
    pub classification: Classification,
}

impl EquilibriumSummary {
    pub fn from_report<const N: usize>(r: &EquilibriumReport<N>, scenario_hash: &str) -> Self {
        Self {
            scenario_hash: scenario_hash.to_string(),
            obstacle_index: r.obstacle_index,
            x_bar: r.x_bar.iter().cloned().collect(),
            lambda: r.lambda,
            g: r.jacobian.g,
            bound: r.jacobian.bound,
            eigenvalues_re: r.eigenvalues.iter().map(|c| c.re).collect(),
            eigenvalues_im: r.eigenvalues.iter().map(|c| c.im).collect(),
            tangent_eigenvalues_re: r.tangent_eigenvalues.iter().map(|c| c.re).collect(),
            projection_symmetry_defect: r.jacobian.projection_symmetry_defect,
            curvature: CurvatureSummary {
                max_eigenvalue: r.curvature_verdict.max_eigenvalue,
                bound: r.curvature_verdict.bound,
                holds: r.curvature_verdict.holds,
            },
            classification: r.classification,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateSuite {
    pub label: String,
    pub scenario_hash: String,
    pub runs: usize,
    pub rejected: usize,
    pub safety: SafetyCertificate,
    pub lyapunov: LyapunovCertificate,
    pub convergence_fraction: Option<f64>,
    pub convergence: ConvergenceCertificate,
    pub equilibria: Vec<EquilibriumSummary>,
    pub equilibrium_issues: Vec<String>,
    pub pass: bool,
}

impl CertificateSuite {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }
}

/// Streaming aggregation of batch results into a [`CertificateSuite`].
#[derive(Debug, Clone)]
pub struct CertificateBuilder<const N: usize> {
    params: ControllerParams<N>,
    safety_tolerance: f64,
    runs: usize,
    rejected: usize,
    converged: usize,
    min_b: Option<f64>,
    max_increase: Option<f64>,
    stalled: Vec<(Point<N>, Point<N>)>,
}

impl<const N: usize> CertificateBuilder<N> {
    /// `safety_tolerance` is the allowed numerical dip below `eps`.
    pub fn new(params: &ControllerParams<N>, safety_tolerance: f64) -> Self {
        Self {
            params: params.clone(),
            safety_tolerance,
            runs: 0,
            rejected: 0,
            converged: 0,
            min_b: None,
            max_increase: None,
            stalled: Vec::new(),
        }
    }

    pub fn add_rejected(&mut self) {
        self.runs += 1;
        self.rejected += 1;
    }

    pub fn add(&mut self, trajectory: &Trajectory<N>) {
        self.runs += 1;
        self.min_b = Some(self.min_b.map_or(trajectory.min_b_observed, |m| m.min(trajectory.min_b_observed)));
        if trajectory.samples.len() > 1 {
            let inc = trajectory.max_distance_increase(&self.params.target);
            self.max_increase = Some(self.max_increase.map_or(inc, |m| m.max(inc)));
        }
        if trajectory.terminal_status == TerminalStatus::Converged {
            self.converged += 1;
        } else {
            let first = trajectory.samples.first().map(|s| s.x).unwrap_or_else(|| *trajectory.final_state());
            self.stalled.push((first, *trajectory.final_state()));
        }
    }

    fn excused<M: std::borrow::Borrow<EquilibriumReport<N>>>(&self, x0: &Point<N>, end: &Point<N>, equilibria: &[M]) -> bool {
        equilibria.iter().any(|r| {
            let r = r.borrow();
            let on_ray = heading_angle(x0, &(r.x_bar - self.params.target), &self.params.target) < ALIGNMENT_TOLERANCE;
            let stalled_at = (end - r.x_bar).norm() < 0.05;
            on_ray || (stalled_at && !r.curvature_verdict.holds)
        })
    }

    pub fn finish(
        &self,
        label: &str,
        scenario_hash: &str,
        equilibria: &EquilibriumSearch<N>,
    ) -> CertificateSuite {
        let hash = scenario_hash.to_string();
        let threshold = self.params.eps - self.safety_tolerance;
        let safety = SafetyCertificate {
            scenario_hash: hash.clone(),
            pass: self.min_b.map(|b| b >= threshold),
            min_b: self.min_b,
            threshold,
        };
        let lyapunov = LyapunovCertificate {
            scenario_hash: hash.clone(),
            pass: self.max_increase.map(|m| m <= LYAPUNOV_TOLERANCE),
            max_increase: self.max_increase,
            tolerance: LYAPUNOV_TOLERANCE,
        };
        let completed = self.runs - self.rejected;
        let fraction = (completed > 0).then(|| self.converged as f64 / completed as f64);
        let excused = self
            .stalled
            .iter()
            .filter(|(x0, end)| self.excused(x0, end, &equilibria.reports))
            .count();
        let convergence = ConvergenceCertificate {
            scenario_hash: hash.clone(),
            pass: fraction.map(|_| self.converged + excused == completed),
            fraction,
            completed,
            converged: self.converged,
            excused,
        };
        let pass = [safety.pass, lyapunov.pass, convergence.pass].iter().all(|p| p.unwrap_or(true));
        CertificateSuite {
            label: label.to_string(),
            scenario_hash: hash.clone(),
            runs: self.runs,
            rejected: self.rejected,
            safety,
            lyapunov,
            convergence_fraction: fraction,
            convergence,
            equilibria: equilibria.reports.iter().map(|r| EquilibriumSummary::from_report(r, &hash)).collect(),
            equilibrium_issues: equilibria.issues.iter().map(|e| e.to_string()).collect(),
            pass,
        }
    }
}

/// Certificate for a finished batch.
pub fn certify<const N: usize>(
    label: &str,
    scenario_hash: &str,
    world: &World<N>,
    params: &ControllerParams<N>,
    safety_tolerance: f64,
    trajectories: &[Trajectory<N>],
) -> CertificateSuite {
    let mut builder = CertificateBuilder::new(params, safety_tolerance);
    for t in trajectories {
        builder.add(t);
    }
    builder.finish(label, scenario_hash, &find_equilibria(world, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ImplicitObstacle;
    use approx::assert_relative_eq;
    use nalgebra::{Vector2, Vector3};

    fn params2(target: Vector2<f64>) -> ControllerParams<2> {
        ControllerParams { k: 0.5, eps: 0.6, eps_prime: 1.1, robot_radius: 0.4, target }
    }

    #[test]
    fn disc_equilibrium_location() {
        let w = World::new(None, vec![ImplicitObstacle::ball(Vector2::zeros(), 1.0).unwrap()], 1.2).unwrap();
        let p = params2(Vector2::new(-4.0, 0.0));
        let search = find_equilibria(&w, &p);
        assert!(search.issues.is_empty(), "{:?}", search.issues);
        assert_eq!(search.reports.len(), 1);
        let r = &search.reports[0];
        assert!((r.x_bar - Vector2::new(1.6, 0.0)).norm() < 1e-12);
        assert_relative_eq!(r.lambda, 5.6, epsilon = 1e-12);
        // g = -|x_d - P| / eps - 1 with P = (1, 0).
        assert_relative_eq!(r.jacobian.g, -5.0 / 0.6 - 1.0, epsilon = 1e-9);
        assert_eq!(r.classification, Classification::UnstableConfirmed);
    }

    #[test]
    fn sphere_equilibrium_location() {
        let w = World::new(None, vec![ImplicitObstacle::ball(Vector3::new(0.0, 0.0, 5.0), 1.0).unwrap()], 1.5).unwrap();
        let p = ControllerParams { k: 0.5, eps: 1.0, eps_prime: 1.4, robot_radius: 0.8, target: Vector3::new(0.0, 0.0, 1.0) };
        let search = find_equilibria(&w, &p);
        assert_eq!(search.reports.len(), 1);
        assert!((search.reports[0].x_bar - Vector3::new(0.0, 0.0, 7.0)).norm() < 1e-12);
        assert_relative_eq!(search.reports[0].lambda, 6.0, epsilon = 1e-12);
    }

    #[test]
    fn nominal_point_is_not_an_equilibrium() {
        let w = World::new(None, vec![ImplicitObstacle::ball(Vector2::zeros(), 1.0).unwrap()], 1.2).unwrap();
        let err = analyze_equilibrium(&w, &Vector2::new(5.0, 1.0), &params2(Vector2::new(-4.0, 0.0))).unwrap_err();
        assert!(matches!(err, AnalysisError::NotAnEquilibrium(_)));
    }

    #[test]
    fn nominal_branch_jacobian() {
        let w = World::new(None, vec![ImplicitObstacle::ball(Vector2::zeros(), 1.0).unwrap()], 1.2).unwrap();
        let j = closed_loop_jacobian(&w, &Vector2::new(5.0, 1.0), &params2(Vector2::new(-4.0, 0.0)), 1e-4).unwrap();
        assert!((j + Mat::<2>::identity() * 0.5).amax() < 1e-9);
    }

    #[test]
    fn log_slope_of_pure_exponential() {
        use crate::controller::Mode;
        use crate::simulator::Sample;
        let target = Vector2::new(0.0, 0.0);
        let samples = (0..1000)
            .map(|i| {
                let t = i as f64 * 0.01;
                Sample {
                    t,
                    x: Vector2::new(3.0 * (-0.5 * t).exp(), 0.0),
                    u: Vector2::zeros(),
                    b_estimate: 4.0,
                    b_oracle: 4.0,
                    mode: Mode::Nominal,
                    phi: 0.0,
                }
            })
            .collect();
        let traj = Trajectory { samples, terminal_status: TerminalStatus::Timeout, min_b_observed: 4.0, sensor_error: None };
        assert_relative_eq!(log_distance_slope(&traj, &target, 1e-3, 10.0).unwrap(), -0.5, epsilon = 1e-9);
    }

    #[test]
    fn empty_certificate_has_no_data() {
        let w = World::new(None, vec![ImplicitObstacle::ball(Vector2::zeros(), 1.0).unwrap()], 1.2).unwrap();
        let p = params2(Vector2::new(-4.0, 0.0));
        let c = certify("empty", "abc", &w, &p, 1e-3, &[]);
        assert_eq!(c.safety.pass, None);
        assert_eq!(c.lyapunov.max_increase, None);
        assert_eq!(c.convergence_fraction, None);
        assert!(c.pass);
        let json: serde_json::Value = serde_json::from_str(&c.to_json()).unwrap();
        assert!(json["safety"]["min_b"].is_null());
        assert_eq!(json["equilibria"][0]["scenario_hash"], "abc");
    }
}
