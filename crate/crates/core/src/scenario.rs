//! Scenario files: JSON schema, validation, presets and initial conditions.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::controller::ControllerParams;
use crate::geometry::{signed_distance, validate_world, ImplicitObstacle, Point, Shape, World};
use crate::sensor::{ScanConfig, SensorError};
use crate::simulator::{Integrator, SimConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// Scenario presets shipped with the crate, as `(name, json)`.
pub const PRESETS: &[(&str, &str)] = &[
    ("fig4_2d", include_str!("../presets/fig4_2d.json")),
    ("fig5_3d", include_str!("../presets/fig5_3d.json")),
];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error at {pointer}: {message}")]
    Parse { pointer: String, message: String },
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("initial condition sampling failed: {0}")]
    Sampling(String),
    #[error(transparent)]
    Sensor(#[from] SensorError),
}

/// Points sampled uniformly in a box, or placed on the offset shell around
/// randomly chosen obstacles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    Uniform,
    Shell,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerSpec<const N: usize> {
    pub count: usize,
    pub seed: u64,
    pub box_min: Point<N>,
    pub box_max: Point<N>,
    /// Accepted starts satisfy `b >= eps + clearance`.
    pub clearance: f64,
    pub mode: SampleMode,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialConditions<const N: usize> {
    Explicit(Vec<Point<N>>),
    Sample(SamplerSpec<N>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<const N: usize> {
    pub label: String,
    pub world: World<N>,
    pub params: ControllerParams<N>,
    pub scan: ScanConfig,
    pub sim: SimConfig,
    pub initial_conditions: InitialConditions<N>,
}

/// A scenario of either supported dimension.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyScenario {
    Planar(Scenario<2>),
    Spatial(Scenario<3>),
}

impl AnyScenario {
    pub fn label(&self) -> &str {
        match self {
            AnyScenario::Planar(s) => &s.label,
            AnyScenario::Spatial(s) => &s.label,
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            AnyScenario::Planar(_) => 2,
            AnyScenario::Spatial(_) => 3,
        }
    }

    pub fn to_json(&self) -> String {
        match self {
            AnyScenario::Planar(s) => s.to_json(),
            AnyScenario::Spatial(s) => s.to_json(),
        }
    }

    pub fn hash(&self) -> String {
        match self {
            AnyScenario::Planar(s) => s.hash(),
            AnyScenario::Spatial(s) => s.hash(),
        }
    }
}

// ---------------------------------------------------------------------------
// File schema

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    schema_version: u32,
    label: String,
    dimension: usize,
    world: WorldFile,
    controller: ControllerFile,
    sensor: SensorFile,
    #[serde(default)]
    simulation: SimulationFile,
    #[serde(default = "no_points")]
    initial_conditions: InitialConditionsFile,
}

fn no_points() -> InitialConditionsFile {
    InitialConditionsFile::Points(Vec::new())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldFile {
    reach_lower_bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    boundary: Option<ObstacleFile>,
    obstacles: Vec<ObstacleFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum ObstacleFile {
    Ball { center: Vec<f64>, radius: f64 },
    Ellipsoid { center: Vec<f64>, coeffs: Vec<f64>, r0: f64 },
    Superquartic { center: Vec<f64>, a: f64, b: f64, c: f64, d: f64, r0: f64 },
    SuperellipseBoundary {
        #[serde(default = "origin_2d")]
        center: Vec<f64>,
        q: f64,
        p: f64,
        d: f64,
        n: u32,
    },
}

fn origin_2d() -> Vec<f64> {
    vec![0.0, 0.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControllerFile {
    k: f64,
    eps: f64,
    eps_prime: f64,
    robot_radius: f64,
    target: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SensorFile {
    range: f64,
    #[serde(default)]
    rays_2d: Option<usize>,
    #[serde(default)]
    grid_3d: Option<[usize; 2]>,
    #[serde(default)]
    march_step: Option<f64>,
    #[serde(default)]
    hit_tolerance: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SimulationFile {
    dt: f64,
    t_max: f64,
    integrator: IntegratorFile,
    goal_tolerance: f64,
    safety_log_tolerance: f64,
}

impl Default for SimulationFile {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            dt: d.dt,
            t_max: d.t_max,
            integrator: IntegratorFile::Rk4,
            goal_tolerance: d.goal_tolerance,
            safety_log_tolerance: d.safety_log_tolerance,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum IntegratorFile {
    Euler,
    Rk4,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum InitialConditionsFile {
    Points(Vec<Vec<f64>>),
    Sample(SamplerFile),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SamplerFile {
    count: usize,
    seed: u64,
    box_min: Vec<f64>,
    box_max: Vec<f64>,
    #[serde(default = "default_clearance")]
    clearance: f64,
    #[serde(default = "default_mode")]
    mode: SampleMode,
}

fn default_clearance() -> f64 {
    0.05
}

fn default_mode() -> SampleMode {
    SampleMode::Uniform
}

// ---------------------------------------------------------------------------
// Conversion

struct Errors(Vec<String>);

impl Errors {
    fn push(&mut self, pointer: &str, message: impl std::fmt::Display) {
        self.0.push(format!("{pointer}: {message}"));
    }
}

fn point<const N: usize>(v: &[f64], pointer: &str, errors: &mut Errors) -> Option<Point<N>> {
    if v.len() != N {
        errors.push(pointer, format!("expected {N} components, got {}", v.len()));
        return None;
    }
    if !v.iter().all(|c| c.is_finite()) {
        errors.push(pointer, "components must be finite");
        return None;
    }
    Some(Point::<N>::from_column_slice(v))
}

fn obstacle_from<const N: usize>(
    file: &ObstacleFile,
    pointer: &str,
    errors: &mut Errors,
) -> Option<ImplicitObstacle<N>> {
    let center = |c: &Vec<f64>, errors: &mut Errors| point::<N>(c, &format!("{pointer}/center"), errors);
    let (center, shape) = match file {
        ObstacleFile::Ball { center: c, radius } => (center(c, errors)?, Shape::Ball { radius: *radius }),
        ObstacleFile::Ellipsoid { center: c, coeffs, r0 } => {
            let cen = center(c, errors);
            let coeffs = point::<N>(coeffs, &format!("{pointer}/coeffs"), errors);
            (cen?, Shape::Ellipsoid { coeffs: coeffs?, r0: *r0 })
        }
        ObstacleFile::Superquartic { center: c, a, b, c: cc, d, r0 } => (
            center(c, errors)?,
            Shape::Superquartic { a: *a, b: *b, c: *cc, d: *d, r0: *r0 },
        ),
        ObstacleFile::SuperellipseBoundary { center: c, q, p, d, n } => (
            center(c, errors)?,
            Shape::SuperellipseBoundary { q: *q, p: *p, d: *d, n: *n },
        ),
    };
    match ImplicitObstacle::new(center, shape) {
        Ok(o) => Some(o),
        Err(e) => {
            errors.push(pointer, e);
            None
        }
    }
}

fn obstacle_to<const N: usize>(o: &ImplicitObstacle<N>) -> ObstacleFile {
    let center = o.center().iter().cloned().collect();
    match o.shape() {
        Shape::Ball { radius } => ObstacleFile::Ball { center, radius: *radius },
        Shape::Ellipsoid { coeffs, r0 } => ObstacleFile::Ellipsoid {
            center,
            coeffs: coeffs.iter().cloned().collect(),
            r0: *r0,
        },
        Shape::Superquartic { a, b, c, d, r0 } => {
            ObstacleFile::Superquartic { center, a: *a, b: *b, c: *c, d: *d, r0: *r0 }
        }
        Shape::SuperellipseBoundary { q, p, d, n } => {
            ObstacleFile::SuperellipseBoundary { center, q: *q, p: *p, d: *d, n: *n }
        }
    }
}

fn convert<const N: usize>(file: &ScenarioFile) -> Result<Scenario<N>, ScenarioError> {
    let mut errors = Errors(Vec::new());

    let boundary = file
        .world
        .boundary
        .as_ref()
        .and_then(|b| obstacle_from::<N>(b, "/world/boundary", &mut errors));
    let obstacles: Vec<_> = file
        .world
        .obstacles
        .iter()
        .enumerate()
        .filter_map(|(i, o)| obstacle_from::<N>(o, &format!("/world/obstacles/{i}"), &mut errors))
        .collect();
    let target = point::<N>(&file.controller.target, "/controller/target", &mut errors);

    let c = &file.controller;
    let sensor = &file.sensor;
    let defaults = ScanConfig::with_range(sensor.range);
    let [theta_steps, phi_steps] = sensor.grid_3d.unwrap_or([defaults.theta_steps, defaults.phi_steps]);
    let scan = ScanConfig {
        range: sensor.range,
        rays_2d: sensor.rays_2d.unwrap_or(defaults.rays_2d),
        theta_steps,
        phi_steps,
        march_step: sensor.march_step.unwrap_or(defaults.march_step),
        hit_tolerance: sensor.hit_tolerance.unwrap_or(defaults.hit_tolerance),
    };
    if let Err(e) = scan.validate() {
        errors.push("/sensor", e);
    }
    let s = &file.simulation;
    let sim = SimConfig {
        dt: s.dt,
        t_max: s.t_max,
        integrator: match s.integrator {
            IntegratorFile::Euler => Integrator::Euler,
            IntegratorFile::Rk4 => Integrator::Rk4,
        },
        goal_tolerance: s.goal_tolerance,
        safety_log_tolerance: s.safety_log_tolerance,
    };
    if let Err(e) = sim.validate() {
        errors.push("/simulation", e);
    }

    let initial_conditions = match &file.initial_conditions {
        InitialConditionsFile::Points(points) => InitialConditions::Explicit(
            points
                .iter()
                .enumerate()
                .filter_map(|(i, p)| point::<N>(p, &format!("/initial_conditions/points/{i}"), &mut errors))
                .collect(),
        ),
        InitialConditionsFile::Sample(sf) => {
            let lo = point::<N>(&sf.box_min, "/initial_conditions/sample/box_min", &mut errors);
            let hi = point::<N>(&sf.box_max, "/initial_conditions/sample/box_max", &mut errors);
            if let (Some(lo), Some(hi)) = (lo, hi) {
                if lo.iter().zip(hi.iter()).any(|(a, b)| !(a < b)) {
                    errors.push("/initial_conditions/sample", "box_min must be below box_max in every coordinate");
                }
                if !(sf.clearance >= 0.0) {
                    errors.push("/initial_conditions/sample/clearance", "must be non-negative");
                }
                InitialConditions::Sample(SamplerSpec {
                    count: sf.count,
                    seed: sf.seed,
                    box_min: lo,
                    box_max: hi,
                    clearance: sf.clearance,
                    mode: sf.mode,
                })
            } else {
                InitialConditions::Explicit(Vec::new())
            }
        }
    };

    if !errors.0.is_empty() {
        return Err(ScenarioError::Validation(errors.0));
    }
    let world = World::new(boundary, obstacles, file.world.reach_lower_bound)
        .map_err(|e| ScenarioError::Validation(vec![format!("/world: {e}")]))?;
    let params = ControllerParams {
        k: c.k,
        eps: c.eps,
        eps_prime: c.eps_prime,
        robot_radius: c.robot_radius,
        target: target.expect("checked above"),
    };
    Ok(Scenario { label: file.label.clone(), world, params, scan, sim, initial_conditions })
}

impl<const N: usize> Scenario<N> {
    fn to_file(&self) -> ScenarioFile {
        let s = &self.scan;
        ScenarioFile {
            schema_version: SCHEMA_VERSION,
            label: self.label.clone(),
            dimension: N,
            world: WorldFile {
                reach_lower_bound: self.world.reach(),
                boundary: self.world.boundary().map(obstacle_to),
                obstacles: self.world.obstacles().iter().map(obstacle_to).collect(),
            },
            controller: ControllerFile {
                k: self.params.k,
                eps: self.params.eps,
                eps_prime: self.params.eps_prime,
                robot_radius: self.params.robot_radius,
                target: self.params.target.iter().cloned().collect(),
            },
            sensor: SensorFile {
                range: s.range,
                rays_2d: Some(s.rays_2d),
                grid_3d: Some([s.theta_steps, s.phi_steps]),
                march_step: Some(s.march_step),
                hit_tolerance: Some(s.hit_tolerance),
            },
            simulation: SimulationFile {
                dt: self.sim.dt,
                t_max: self.sim.t_max,
                integrator: match self.sim.integrator {
                    Integrator::Euler => IntegratorFile::Euler,
                    Integrator::Rk4 => IntegratorFile::Rk4,
                },
                goal_tolerance: self.sim.goal_tolerance,
                safety_log_tolerance: self.sim.safety_log_tolerance,
            },
            initial_conditions: match &self.initial_conditions {
                InitialConditions::Explicit(points) => InitialConditionsFile::Points(
                    points.iter().map(|p| p.iter().cloned().collect()).collect(),
                ),
                InitialConditions::Sample(spec) => InitialConditionsFile::Sample(SamplerFile {
                    count: spec.count,
                    seed: spec.seed,
                    box_min: spec.box_min.iter().cloned().collect(),
                    box_max: spec.box_max.iter().cloned().collect(),
                    clearance: spec.clearance,
                    mode: spec.mode,
                }),
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("scenario serializes")
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.to_file()).expect("scenario serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Semantic checks applied at load time: world validity, target placement
    /// and explicit starts inside the practical free space.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut errors = Vec::new();
        let report = validate_world(&self.world, &self.params, Some(self.scan.range));
        for v in &report.violations {
            let pointer = match v.rule {
                "margin_ordering" | "gain" | "target" => "/controller",
                "sensor_range" => "/sensor/range",
                _ => "/world",
            };
            errors.push(format!("{pointer}: {}", v.message));
        }
        if let InitialConditions::Explicit(points) = &self.initial_conditions {
            for (i, p) in points.iter().enumerate() {
                match signed_distance(&self.world, p) {
                    Ok(b) if b >= self.params.eps => {}
                    Ok(b) => errors.push(format!(
                        "/initial_conditions/points/{i}: start lies outside X_ε (b = {b:.6} < ε = {})",
                        self.params.eps
                    )),
                    Err(e) => errors.push(format!("/initial_conditions/points/{i}: {e}")),
                }
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Validation(errors))
        }
    }
}

/// Parses and converts a scenario without semantic validation.
pub fn parse_scenario(json: &str) -> Result<AnyScenario, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(json);
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let pointer = if path == "." {
            String::from("/")
        } else {
            format!("/{}", path.replace('.', "/").replace(['[', ']'], ""))
        };
        ScenarioError::Parse { pointer, message: e.into_inner().to_string() }
    })?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(ScenarioError::Validation(vec![format!(
            "/schema_version: unsupported version {}, expected {SCHEMA_VERSION}",
            file.schema_version
        )]));
    }
    match file.dimension {
        2 => Ok(AnyScenario::Planar(convert::<2>(&file)?)),
        3 => Ok(AnyScenario::Spatial(convert::<3>(&file)?)),
        d => Err(ScenarioError::Validation(vec![format!("/dimension: must be 2 or 3, got {d}")])),
    }
}

/// Parses, converts and validates a scenario.
pub fn scenario_from_json(json: &str) -> Result<AnyScenario, ScenarioError> {
    let scenario = parse_scenario(json)?;
    match &scenario {
        AnyScenario::Planar(s) => s.validate()?,
        AnyScenario::Spatial(s) => s.validate()?,
    }
    Ok(scenario)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<AnyScenario, ScenarioError> {
    let path = path.as_ref();
    let json = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    scenario_from_json(&json)
}

pub fn save_scenario(scenario: &AnyScenario, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    let path = path.as_ref();
    std::fs::write(path, scenario.to_json() + "\n").map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Embedded preset by name (with or without the `.json` suffix).
pub fn preset_json(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".json").unwrap_or(name);
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, j)| *j)
}

pub fn load_preset(name: &str) -> Result<AnyScenario, ScenarioError> {
    let json = preset_json(name).ok_or_else(|| ScenarioError::Io {
        path: name.to_string(),
        message: "no such preset".into(),
    })?;
    scenario_from_json(json)
}

// ---------------------------------------------------------------------------
// Initial conditions

fn uniform_direction<const N: usize>(rng: &mut ChaCha8Rng) -> Point<N> {
    match N {
        2 => {
            let t = rng.random_range(0.0..2.0 * PI);
            Point::<N>::from_fn(|i, _| if i == 0 { t.cos() } else { t.sin() })
        }
        _ => loop {
            let v = Point::<N>::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                break v / n;
            }
        },
    }
}

/// Deterministic list of starting points for the scenario.
pub fn initial_conditions<const N: usize>(scenario: &Scenario<N>) -> Result<Vec<Point<N>>, ScenarioError> {
    let spec = match &scenario.initial_conditions {
        InitialConditions::Explicit(points) => return Ok(points.clone()),
        InitialConditions::Sample(spec) => spec,
    };
    sample_starts(&scenario.world, scenario.params.eps, spec)
}

pub fn sample_starts<const N: usize>(
    world: &World<N>,
    eps: f64,
    spec: &SamplerSpec<N>,
) -> Result<Vec<Point<N>>, ScenarioError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let threshold = eps + spec.clearance;
    let max_attempts = 10_000 + 1_000 * spec.count;
    let in_box = |x: &Point<N>| {
        x.iter().zip(spec.box_min.iter().zip(spec.box_max.iter())).all(|(v, (lo, hi))| v >= lo && v <= hi)
    };
    let mut out = Vec::with_capacity(spec.count);
    let mut attempts = 0;
    while out.len() < spec.count {
        attempts += 1;
        if attempts > max_attempts {
            return Err(ScenarioError::Sampling(format!(
                "only {} of {} starts found after {max_attempts} attempts",
                out.len(),
                spec.count
            )));
        }
        let x = match spec.mode {
            SampleMode::Uniform => Point::<N>::from_fn(|i, _| rng.random_range(spec.box_min[i]..spec.box_max[i])),
            SampleMode::Shell => {
                let obstacles = world.obstacles();
                if obstacles.is_empty() {
                    return Err(ScenarioError::Sampling("shell sampling needs an interior obstacle".into()));
                }
                let o = &obstacles[rng.random_range(0..obstacles.len())];
                let y = o.surface_point(&uniform_direction::<N>(&mut rng));
                y + o.free_normal(&y) * threshold
            }
        };
        if !in_box(&x) {
            continue;
        }
        let b = signed_distance(world, &x).map_err(|e| ScenarioError::Sampling(e.to_string()))?;
        if b >= threshold - 1e-9 {
            out.push(x);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_preset_parameters() {
        let AnyScenario::Planar(s) = load_preset("fig4_2d").unwrap() else { panic!("expected 2D") };
        assert_eq!(s.params.target, Point::<2>::new(-4.0, -7.0));
        assert_eq!(s.params.robot_radius, 0.4);
        assert_eq!(s.params.eps, 0.6);
        assert_eq!(s.params.eps_prime, 1.1);
        assert_eq!(s.params.k, 0.5);
        assert_eq!(s.scan.range, 4.0);
    }

    #[test]
    fn spatial_preset_parameters() {
        let AnyScenario::Spatial(s) = load_preset("fig5_3d.json").unwrap() else { panic!("expected 3D") };
        assert_eq!(s.params.target, Point::<3>::new(0.0, 0.0, 1.0));
        assert_eq!(s.params.robot_radius, 0.8);
        assert_eq!(s.params.eps, 1.0);
        assert_eq!(s.params.eps_prime, 1.4);
        assert_eq!(s.params.k, 0.5);
        assert_eq!(s.scan.range, 2.0);
    }

    #[test]
    fn round_trip_is_exact() {
        for (name, _) in PRESETS {
            let s = load_preset(name).unwrap();
            let again = scenario_from_json(&s.to_json()).unwrap();
            assert_eq!(s, again);
            assert_eq!(s.hash(), again.hash());
        }
    }

    #[test]
    fn margin_violation_is_reported_with_pointer() {
        let json = preset_json("fig4_2d").unwrap().replace("\"eps_prime\": 1.1", "\"eps_prime\": 0.5");
        let err = scenario_from_json(&json).unwrap_err();
        let ScenarioError::Validation(msgs) = err else { panic!("expected validation error") };
        assert!(msgs.iter().any(|m| m.starts_with("/controller") && m.contains("ε < ε′ fails")), "{msgs:?}");
    }

    #[test]
    fn parse_errors_carry_json_pointer() {
        let json = preset_json("fig4_2d").unwrap().replace("\"radius\"", "\"radios\"");
        let json = json.replace("\"k\": 0.5", "\"k\": \"fast\"");
        match scenario_from_json(&json).unwrap_err() {
            ScenarioError::Parse { pointer, .. } => assert!(pointer.starts_with('/'), "{pointer}"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn sampling_is_deterministic_and_clear_of_obstacles() {
        let AnyScenario::Planar(s) = load_preset("fig4_2d").unwrap() else { unreachable!() };
        let a = initial_conditions(&s).unwrap();
        let b = initial_conditions(&s).unwrap();
        assert_eq!(a, b);
        for x in &a {
            assert!(signed_distance(&s.world, x).unwrap() >= s.params.eps + 0.05 - 1e-9);
        }
    }
}
