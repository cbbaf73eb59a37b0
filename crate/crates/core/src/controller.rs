//! Smoothed safety-velocity-cone feedback law.
//!
//! The nominal law drives the robot straight to the target. Within `eps'` of
//! the obstacles the component of the nominal velocity pointing into the
//! obstacle is removed progressively, fully so at distance `eps`.

use thiserror::Error;

use crate::geometry::Point;
use crate::sensor::RangeReading;

/// Tolerance on the unit norm of a supplied distance gradient.
pub const GRADIENT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("gradient norm {norm} is not within {GRADIENT_TOLERANCE} of 1")]
    BadGradient { norm: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerParams<const N: usize> {
    /// Proportional gain `k`.
    pub k: f64,
    /// Inner safety margin `eps`.
    pub eps: f64,
    /// Outer blending margin `eps'`.
    pub eps_prime: f64,
    /// Robot radius `R`.
    pub robot_radius: f64,
    /// Target `x_d`.
    pub target: Point<N>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Nominal,
    Blended,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Nominal => "nominal",
            Mode::Blended => "blended",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput<const N: usize> {
    pub u: Point<N>,
    pub mode: Mode,
    /// Blending weight actually applied (0 in nominal mode).
    pub phi: f64,
    /// Distance gradient used, when one was available.
    pub grad_used: Option<Point<N>>,
}

/// Nominal law `-k (x - x_d)`.
#[inline]
pub fn nominal<const N: usize>(x: &Point<N>, params: &ControllerParams<N>) -> Point<N> {
    (x - params.target) * -params.k
}

/// Blending weight: 1 at or below `eps`, 0 at or above `eps'`, linear between.
#[inline]
pub fn phi<const N: usize>(b: f64, params: &ControllerParams<N>) -> f64 {
    ((params.eps_prime - b) / (params.eps_prime - params.eps)).clamp(0.0, 1.0)
}

fn check_unit<const N: usize>(grad: &Point<N>) -> Result<(), ControlError> {
    let norm = grad.norm();
    if (norm - 1.0).abs() > GRADIENT_TOLERANCE || !norm.is_finite() {
        return Err(ControlError::BadGradient { norm });
    }
    Ok(())
}

/// Removes the fraction `phi(b)` of the inward component of `kappa`.
pub fn project_smooth<const N: usize>(
    kappa: &Point<N>,
    grad: &Point<N>,
    b: f64,
    params: &ControllerParams<N>,
) -> Result<Point<N>, ControlError> {
    check_unit(grad)?;
    let inward = kappa.dot(grad);
    if b <= params.eps_prime && inward < 0.0 {
        Ok(kappa - grad * (phi(b, params) * inward))
    } else {
        Ok(*kappa)
    }
}

/// Smoothed law from an oriented distance value and (optional) gradient.
/// Without a gradient, or beyond `eps'`, the nominal law applies.
pub fn svc_control_from<const N: usize>(
    x: &Point<N>,
    b: f64,
    grad: Option<&Point<N>>,
    params: &ControllerParams<N>,
) -> Result<ControlOutput<N>, ControlError> {
    let kappa = nominal(x, params);
    let Some(g) = grad else {
        return Ok(ControlOutput { u: kappa, mode: Mode::Nominal, phi: 0.0, grad_used: None });
    };
    check_unit(g)?;
    let inward = kappa.dot(g);
    if b <= params.eps_prime && inward < 0.0 {
        let w = phi(b, params);
        Ok(ControlOutput {
            u: kappa - g * (w * inward),
            mode: Mode::Blended,
            phi: w,
            grad_used: Some(*g),
        })
    } else {
        Ok(ControlOutput { u: kappa, mode: Mode::Nominal, phi: 0.0, grad_used: Some(*g) })
    }
}

/// Smoothed law driven by a range scan.
pub fn svc_control<const N: usize>(
    x: &Point<N>,
    reading: &RangeReading<N>,
    params: &ControllerParams<N>,
) -> Result<ControlOutput<N>, ControlError> {
    let grad = if reading.in_range { reading.gradient.as_ref() } else { None };
    svc_control_from(x, reading.rho_star, grad, params)
}

/// Unsmoothed cone law: full tangential projection once `b <= eps`.
pub fn discontinuous_control_from<const N: usize>(
    x: &Point<N>,
    b: f64,
    grad: Option<&Point<N>>,
    params: &ControllerParams<N>,
) -> Result<Point<N>, ControlError> {
    let kappa = nominal(x, params);
    match grad {
        Some(g) => {
            check_unit(g)?;
            let inward = kappa.dot(g);
            if b <= params.eps && inward <= 0.0 {
                Ok(kappa - g * inward)
            } else {
                Ok(kappa)
            }
        }
        None => Ok(kappa),
    }
}

pub fn discontinuous_control<const N: usize>(
    x: &Point<N>,
    reading: &RangeReading<N>,
    params: &ControllerParams<N>,
) -> Result<Point<N>, ControlError> {
    let grad = if reading.in_range { reading.gradient.as_ref() } else { None };
    discontinuous_control_from(x, reading.rho_star, grad, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector2;

    fn params() -> ControllerParams<2> {
        ControllerParams {
            k: 0.5,
            eps: 0.6,
            eps_prime: 1.1,
            robot_radius: 0.4,
            target: Vector2::new(-4.0, -7.0),
        }
    }

    #[test]
    fn phi_profile() {
        let p = params();
        assert_eq!(phi(0.3, &p), 1.0);
        assert_eq!(phi(0.6, &p), 1.0);
        assert_relative_eq!(phi(0.85, &p), 0.5, epsilon = 1e-15);
        assert_eq!(phi(1.1, &p), 0.0);
        assert_eq!(phi(3.0, &p), 0.0);
    }

    #[test]
    fn nominal_far_from_obstacles() {
        let p = params();
        let x = Vector2::new(2.0, 1.0);
        let out = svc_control_from(&x, 2.0, Some(&Vector2::new(1.0, 0.0)), &p).unwrap();
        assert_eq!(out.mode, Mode::Nominal);
        assert_eq!(out.u, Vector2::new(-3.0, -4.0));
        assert_eq!(out.phi, 0.0);
        let out = svc_control_from(&x, 4.0, None, &p).unwrap();
        assert_eq!(out.u, Vector2::new(-3.0, -4.0));
        assert!(out.grad_used.is_none());
    }

    #[test]
    fn full_projection_at_inner_margin() {
        let p = params();
        let x = Vector2::new(2.0, 1.0);
        let g = Vector2::new(1.0, 0.0);
        let out = svc_control_from(&x, 0.6, Some(&g), &p).unwrap();
        assert_eq!(out.mode, Mode::Blended);
        assert_eq!(out.u, Vector2::new(0.0, -4.0));
        assert!(out.u.dot(&g) >= 0.0);
    }

    #[test]
    fn half_blend() {
        let p = params();
        let x = Vector2::new(2.0, 1.0);
        let g = Vector2::new(1.0, 0.0);
        let u = project_smooth(&nominal(&x, &p), &g, 0.85, &p).unwrap();
        assert_relative_eq!(u, Vector2::new(-1.5, -4.0), epsilon = 1e-15);
    }

    #[test]
    fn outward_nominal_is_untouched() {
        let p = params();
        let x = Vector2::new(2.0, 1.0);
        let g = Vector2::new(-1.0, 0.0);
        let out = svc_control_from(&x, 0.6, Some(&g), &p).unwrap();
        assert_eq!(out.mode, Mode::Nominal);
        assert_eq!(out.u, nominal(&x, &p));
    }

    #[test]
    fn rejects_non_unit_gradient() {
        let p = params();
        let err = project_smooth(&Vector2::new(1.0, 0.0), &Vector2::new(2.0, 0.0), 0.7, &p).unwrap_err();
        assert!(matches!(err, ControlError::BadGradient { .. }));
    }

    #[test]
    fn discontinuous_variant_switches_at_eps() {
        let p = params();
        let x = Vector2::new(2.0, 1.0);
        let g = Vector2::new(1.0, 0.0);
        assert_eq!(discontinuous_control_from(&x, 0.61, Some(&g), &p).unwrap(), Vector2::new(-3.0, -4.0));
        assert_eq!(discontinuous_control_from(&x, 0.6, Some(&g), &p).unwrap(), Vector2::new(0.0, -4.0));
    }
}
