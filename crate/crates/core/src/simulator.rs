//! Closed-loop integration with the range sensor in the loop.

use std::cell::Cell;
use std::io::{self, Write};

use thiserror::Error;

use crate::controller::{svc_control, ControlError, ControlOutput, ControllerParams, Mode};
use crate::geometry::{signed_distance, GeometryError, Point, World};
use crate::scenario::{initial_conditions, Scenario, ScenarioError};
use crate::sensor::{RangeReading, Scanner, SensorError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("start rejected: b(x0) = {b} is below ε = {eps}")]
    InvalidStart { b: f64, eps: f64 },
    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Euler,
    Rk4,
}

impl Integrator {
    pub fn as_str(&self) -> &'static str {
        match self {
            Integrator::Euler => "euler",
            Integrator::Rk4 => "rk4",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_max: f64,
    pub integrator: Integrator,
    pub goal_tolerance: f64,
    pub safety_log_tolerance: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_max: 60.0,
            integrator: Integrator::Rk4,
            goal_tolerance: 1e-2,
            safety_log_tolerance: 1e-3,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(SimError::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        positive("dt", self.dt)?;
        positive("t_max", self.t_max)?;
        positive("goal_tolerance", self.goal_tolerance)?;
        if !(self.safety_log_tolerance >= 0.0) {
            return Err(SimError::InvalidConfig(format!(
                "safety_log_tolerance must be non-negative, got {}",
                self.safety_log_tolerance
            )));
        }
        Ok(())
    }

    /// Warns when one nominal step covers more than 1% of the blending shell.
    pub fn step_warning<const N: usize>(&self, params: &ControllerParams<N>, x0: &Point<N>) -> Option<String> {
        let travel = self.dt * params.k * (x0 - params.target).norm();
        let shell = params.eps_prime - params.eps;
        (travel > 0.01 * shell).then(|| {
            format!("first step travels {travel:.3e}, large against the blending shell width {shell}")
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample<const N: usize> {
    pub t: f64,
    pub x: Point<N>,
    pub u: Point<N>,
    /// Sensor estimate `rho*` (equal to the sensor range when saturated).
    pub b_estimate: f64,
    pub b_oracle: f64,
    pub mode: Mode,
    pub phi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalStatus {
    Converged,
    Timeout,
    SafetyBreach,
    SensorError,
}

impl TerminalStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminalStatus::Converged => "converged",
            TerminalStatus::Timeout => "timeout",
            TerminalStatus::SafetyBreach => "safety_breach",
            TerminalStatus::SensorError => "sensor_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<const N: usize> {
    pub samples: Vec<Sample<N>>,
    pub terminal_status: TerminalStatus,
    /// Smallest oracle distance over all samples.
    pub min_b_observed: f64,
    pub sensor_error: Option<SensorError>,
}

impl<const N: usize> Trajectory<N> {
    pub fn final_state(&self) -> &Point<N> {
        &self.samples.last().expect("trajectories hold at least one sample").x
    }

    /// Largest one-step increase of `|x - target|`.
    pub fn max_distance_increase(&self, target: &Point<N>) -> f64 {
        self.samples
            .windows(2)
            .map(|w| (w[1].x - target).norm() - (w[0].x - target).norm())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut header = String::from("t");
        for i in 1..=N {
            header.push_str(&format!(",x{i}"));
        }
        for i in 1..=N {
            header.push_str(&format!(",u{i}"));
        }
        header.push_str(",b,mode,phi");
        writeln!(out, "{header}")?;
        for s in &self.samples {
            write!(out, "{:.16e}", s.t)?;
            for v in s.x.iter().chain(s.u.iter()) {
                write!(out, ",{v:.16e}")?;
            }
            writeln!(out, ",{:.16e},{},{:.16e}", s.b_estimate, s.mode.as_str(), s.phi)?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

/// The sensor-in-the-loop vector field `x -> u(x)`.
#[derive(Debug, Clone)]
pub struct ClosedLoop<'a, const N: usize> {
    pub world: &'a World<N>,
    pub params: &'a ControllerParams<N>,
    pub scanner: &'a Scanner<N>,
    /// Ray index of the latest reading, reused to seed the next one.
    hint: Cell<Option<usize>>,
}

impl<'a, const N: usize> ClosedLoop<'a, N> {
    pub fn new(world: &'a World<N>, params: &'a ControllerParams<N>, scanner: &'a Scanner<N>) -> Self {
        Self { world, params, scanner, hint: Cell::new(None) }
    }

    pub fn evaluate(&self, x: &Point<N>) -> Result<(ControlOutput<N>, RangeReading<N>), SimError> {
        let reading = self.scanner.nearest_return_hinted(self.world, x, self.hint.get())?;
        self.hint.set(Some(reading.ray_index));
        let out = svc_control(x, &reading, self.params)?;
        Ok((out, reading))
    }

    fn velocity(&self, x: &Point<N>) -> Result<Point<N>, SimError> {
        Ok(self.evaluate(x)?.0.u)
    }

    /// Advances one step given the field value `k1` already evaluated at `x`.
    fn advance(&self, x: &Point<N>, k1: &Point<N>, sim: &SimConfig) -> Result<Point<N>, SimError> {
        let dt = sim.dt;
        let next = match sim.integrator {
            Integrator::Euler => x + k1 * dt,
            Integrator::Rk4 => {
                let k2 = self.velocity(&(x + k1 * (0.5 * dt)))?;
                let k3 = self.velocity(&(x + k2 * (0.5 * dt)))?;
                let k4 = self.velocity(&(x + k3 * dt))?;
                x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
            }
        };
        Ok(next)
    }
}

/// One integration step from `x`; returns the next state and the control at `x`.
pub fn step<const N: usize>(
    world: &World<N>,
    x: &Point<N>,
    params: &ControllerParams<N>,
    scanner: &Scanner<N>,
    sim: &SimConfig,
) -> Result<(Point<N>, ControlOutput<N>), SimError> {
    let field = ClosedLoop::new(world, params, scanner);
    let (out, _) = field.evaluate(x)?;
    let next = field.advance(x, &out.u, sim)?;
    if !next.iter().all(|v| v.is_finite()) {
        return Err(SimError::NonFiniteState { t: f64::NAN });
    }
    Ok((next, out))
}

pub fn simulate<const N: usize>(
    world: &World<N>,
    x0: &Point<N>,
    params: &ControllerParams<N>,
    scanner: &Scanner<N>,
    sim: &SimConfig,
) -> Result<Trajectory<N>, SimError> {
    sim.validate()?;
    if !x0.iter().all(|v| v.is_finite()) {
        return Err(SimError::NonFiniteState { t: 0.0 });
    }
    let b0 = signed_distance(world, x0)?;
    if b0 < params.eps {
        return Err(SimError::InvalidStart { b: b0, eps: params.eps });
    }

    let field = ClosedLoop::new(world, params, scanner);
    let mut samples = Vec::new();
    let mut min_b = f64::INFINITY;
    let mut x = *x0;
    let mut i: u64 = 0;
    let (status, sensor_error) = loop {
        let t = i as f64 * sim.dt;
        let b_oracle = signed_distance(world, &x)?;
        min_b = min_b.min(b_oracle);
        let (out, reading) = match field.evaluate(&x) {
            Ok(v) => v,
            Err(SimError::Sensor(e)) => break (TerminalStatus::SensorError, Some(e)),
            Err(e) => return Err(e),
        };
        samples.push(Sample {
            t,
            x,
            u: out.u,
            b_estimate: reading.rho_star,
            b_oracle,
            mode: out.mode,
            phi: out.phi,
        });
        if b_oracle < params.eps - sim.safety_log_tolerance {
            break (TerminalStatus::SafetyBreach, None);
        }
        if (x - params.target).norm() <= sim.goal_tolerance {
            break (TerminalStatus::Converged, None);
        }
        if (i + 1) as f64 * sim.dt > sim.t_max {
            break (TerminalStatus::Timeout, None);
        }
        x = match field.advance(&x, &out.u, sim) {
            Ok(next) => next,
            Err(SimError::Sensor(e)) => break (TerminalStatus::SensorError, Some(e)),
            Err(e) => return Err(e),
        };
        if !x.iter().all(|v| v.is_finite()) {
            return Err(SimError::NonFiniteState { t: (i + 1) as f64 * sim.dt });
        }
        i += 1;
    };
    Ok(Trajectory { samples, terminal_status: status, min_b_observed: min_b, sensor_error })
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome<const N: usize> {
    Completed(Trajectory<N>),
    Rejected(SimError),
}

impl<const N: usize> RunOutcome<N> {
    pub fn trajectory(&self) -> Option<&Trajectory<N>> {
        match self {
            RunOutcome::Completed(t) => Some(t),
            RunOutcome::Rejected(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchRun<const N: usize> {
    pub index: usize,
    pub x0: Point<N>,
    pub outcome: RunOutcome<N>,
}

/// Runs every initial condition of the scenario, handing each result to `f`
/// in index order without retaining it.
pub fn batch_for_each<const N: usize, F>(scenario: &Scenario<N>, mut f: F) -> Result<(), ScenarioError>
where
    F: FnMut(BatchRun<N>),
{
    let starts = initial_conditions(scenario)?;
    let scanner = Scanner::new(scenario.scan.clone())?;
    for (index, x0) in starts.into_iter().enumerate() {
        let outcome = match simulate(&scenario.world, &x0, &scenario.params, &scanner, &scenario.sim) {
            Ok(t) => RunOutcome::Completed(t),
            Err(e) => RunOutcome::Rejected(e),
        };
        f(BatchRun { index, x0, outcome });
    }
    Ok(())
}

pub fn batch_run<const N: usize>(scenario: &Scenario<N>) -> Result<Vec<BatchRun<N>>, ScenarioError> {
    let mut runs = Vec::new();
    batch_for_each(scenario, |r| runs.push(r))?;
    Ok(runs)
}

/// Aggregate statistics of a batch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchSummary {
    pub runs: usize,
    pub rejected: usize,
    pub converged: usize,
    pub min_b: Option<f64>,
    pub mean_min_b: Option<f64>,
}

impl BatchSummary {
    pub fn add<const N: usize>(&mut self, outcome: &RunOutcome<N>) {
        self.runs += 1;
        match outcome {
            RunOutcome::Rejected(_) => self.rejected += 1,
            RunOutcome::Completed(t) => {
                if t.terminal_status == TerminalStatus::Converged {
                    self.converged += 1;
                }
                let completed = (self.runs - self.rejected) as f64;
                self.min_b = Some(self.min_b.map_or(t.min_b_observed, |m| m.min(t.min_b_observed)));
                let prev = self.mean_min_b.unwrap_or(0.0);
                self.mean_min_b = Some(prev + (t.min_b_observed - prev) / completed);
            }
        }
    }

    /// Converged fraction of the completed (non-rejected) runs.
    pub fn convergence_fraction(&self) -> Option<f64> {
        let completed = self.runs - self.rejected;
        (completed > 0).then(|| self.converged as f64 / completed as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ImplicitObstacle;
    use crate::sensor::ScanConfig;
    use nalgebra::Vector2;

    fn setup() -> (World<2>, ControllerParams<2>, Scanner<2>) {
        let world = World::new(None, vec![ImplicitObstacle::ball(Vector2::new(0.0, 0.0), 1.0).unwrap()], 1.2).unwrap();
        let params = ControllerParams {
            k: 0.5,
            eps: 0.6,
            eps_prime: 1.1,
            robot_radius: 0.4,
            target: Vector2::new(-4.0, -7.0),
        };
        (world, params, Scanner::new(ScanConfig::with_range(4.0)).unwrap())
    }

    #[test]
    fn euler_step_far_from_obstacles() {
        let (w, p, s) = setup();
        let sim = SimConfig { integrator: Integrator::Euler, ..SimConfig::default() };
        let x = Vector2::new(-10.0, -1.0);
        let (next, out) = step(&w, &x, &p, &s, &sim).unwrap();
        assert_eq!(out.mode, Mode::Nominal);
        assert_eq!(next, x - (x - p.target) * (sim.dt * p.k));
    }

    #[test]
    fn target_is_a_fixed_point() {
        let (w, p, s) = setup();
        let (next, _) = step(&w, &p.target, &p, &s, &SimConfig::default()).unwrap();
        assert_eq!(next, p.target);
        let traj = simulate(&w, &p.target, &p, &s, &SimConfig::default()).unwrap();
        assert_eq!(traj.samples.len(), 1);
        assert_eq!(traj.terminal_status, TerminalStatus::Converged);
        assert_eq!(traj.samples[0].t, 0.0);
    }

    #[test]
    fn start_inside_margin_is_rejected() {
        let (w, p, s) = setup();
        let err = simulate(&w, &Vector2::new(1.3, 0.0), &p, &s, &SimConfig::default()).unwrap_err();
        assert!(matches!(err, SimError::InvalidStart { .. }));
    }

    #[test]
    fn csv_header_and_precision() {
        let (w, p, s) = setup();
        let traj = simulate(&w, &p.target, &p, &s, &SimConfig::default()).unwrap();
        let csv = traj.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,x1,x2,u1,u2,b,mode,phi"));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 8);
        assert_eq!(row[1], "-4.0000000000000000e0");
        assert_eq!(row[6], "nominal");
    }
}
