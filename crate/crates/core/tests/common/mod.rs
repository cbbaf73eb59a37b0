#![allow(dead_code)]

use nalgebra::{SVector, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svcnav::controller::ControllerParams;
use svcnav::geometry::{signed_distance, ImplicitObstacle, Shape, World};
use svcnav::scenario::{load_preset, AnyScenario, InitialConditions, SampleMode, SamplerSpec, Scenario};
use svcnav::sensor::ScanConfig;
use svcnav::simulator::SimConfig;

pub fn planar_preset() -> Scenario<2> {
    match load_preset("fig4_2d").expect("preset loads") {
        AnyScenario::Planar(s) => s,
        AnyScenario::Spatial(_) => panic!("fig4_2d is planar"),
    }
}

pub fn spatial_preset() -> Scenario<3> {
    match load_preset("fig5_3d").expect("preset loads") {
        AnyScenario::Spatial(s) => s,
        AnyScenario::Planar(_) => panic!("fig5_3d is spatial"),
    }
}

pub fn planar_params(target: Vector2<f64>) -> ControllerParams<2> {
    ControllerParams { k: 0.5, eps: 0.6, eps_prime: 1.1, robot_radius: 0.4, target }
}

pub fn spatial_params(target: Vector3<f64>) -> ControllerParams<3> {
    ControllerParams { k: 0.5, eps: 1.0, eps_prime: 1.4, robot_radius: 0.8, target }
}

/// Planar scan matching the planar preset, with a given range.
pub fn planar_scan(range: f64) -> ScanConfig {
    ScanConfig { rays_2d: 720, ..ScanConfig::with_range(range) }
}

fn sampled<const N: usize>(
    label: &str,
    world: World<N>,
    params: ControllerParams<N>,
    scan: ScanConfig,
    spec: SamplerSpec<N>,
) -> Scenario<N> {
    let s = Scenario {
        label: label.into(),
        world,
        params,
        scan,
        sim: SimConfig::default(),
        initial_conditions: InitialConditions::Sample(spec),
    };
    s.validate().unwrap_or_else(|e| panic!("{label}: {e}"));
    s
}

/// Two discs whose surfaces are `2h + 0.1` apart, with the target below the gap
/// and starts above it.
pub fn narrow_gap() -> Scenario<2> {
    let reach = 1.2;
    let radius = 1.5;
    let offset = radius + (2.0 * reach + 0.1) / 2.0;
    let world = World::new(
        None,
        vec![
            ImplicitObstacle::ball(Vector2::new(-offset, 0.0), radius).unwrap(),
            ImplicitObstacle::ball(Vector2::new(offset, 0.0), radius).unwrap(),
        ],
        reach,
    )
    .unwrap();
    let spec = SamplerSpec {
        count: 100,
        seed: 11,
        box_min: Vector2::new(-6.0, 1.0),
        box_max: Vector2::new(6.0, 6.0),
        clearance: 0.05,
        mode: SampleMode::Uniform,
    };
    sampled("narrow_gap", world, planar_params(Vector2::new(0.0, -6.0)), planar_scan(4.0), spec)
}

/// Planar preset world with every start at `b = eps + 0.05`.
pub fn grazing() -> Scenario<2> {
    let base = planar_preset();
    let InitialConditions::Sample(spec) = &base.initial_conditions else { panic!("preset samples its starts") };
    let spec = SamplerSpec { seed: 13, clearance: 0.05, mode: SampleMode::Shell, ..spec.clone() };
    sampled("grazing", base.world.clone(), base.params.clone(), base.scan.clone(), spec)
}

/// Target at `b = eps + 0.05` below a disc, starts all around it.
pub fn target_adjacent() -> Scenario<2> {
    let radius = 1.5;
    let world =
        World::new(None, vec![ImplicitObstacle::ball(Vector2::zeros(), radius).unwrap()], 1.2).unwrap();
    let params = planar_params(Vector2::new(0.0, -(radius + 0.6 + 0.05)));
    let spec = SamplerSpec {
        count: 100,
        seed: 17,
        box_min: Vector2::new(-6.0, -6.0),
        box_max: Vector2::new(6.0, 6.0),
        clearance: 0.05,
        mode: SampleMode::Uniform,
    };
    sampled("target_adjacent", world, params, planar_scan(4.0), spec)
}

/// Disc of radius 1 at the origin with the target at `(-4, 0)`.
pub fn single_disc() -> (World<2>, ControllerParams<2>) {
    let world = World::new(None, vec![ImplicitObstacle::ball(Vector2::zeros(), 1.0).unwrap()], 1.2).unwrap();
    (world, planar_params(Vector2::new(-4.0, 0.0)))
}

/// Sphere of radius 1 centred at `(0, 0, 5)` with the spatial preset target.
pub fn single_sphere() -> (World<3>, ControllerParams<3>) {
    let world =
        World::new(None, vec![ImplicitObstacle::ball(Vector3::new(0.0, 0.0, 5.0), 1.0).unwrap()], 1.5).unwrap();
    (world, spatial_params(Vector3::new(0.0, 0.0, 1.0)))
}

/// Ellipse with semi-axes 0.8 along x and 5 along y: its radius of curvature
/// at `(0.8, 0)` is `25 / 0.8 = 31.25`, far above `|x_d - P| = 3.8`.
pub fn flat_counterexample() -> (World<2>, ControllerParams<2>) {
    let shape = Shape::Ellipsoid { coeffs: Vector2::new(1.0 / 0.64, 1.0 / 25.0), r0: 1.0 };
    let world = World::new(None, vec![ImplicitObstacle::new(Vector2::zeros(), shape).unwrap()], 1.2).unwrap();
    (world, planar_params(Vector2::new(-3.0, 0.0)))
}

/// Uniform points of the box with `b` in `[lower, upper]`.
pub fn random_points<const N: usize>(
    world: &World<N>,
    box_min: &SVector<f64, N>,
    box_max: &SVector<f64, N>,
    lower: f64,
    upper: f64,
    count: usize,
    seed: u64,
) -> Vec<SVector<f64, N>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x = SVector::<f64, N>::from_fn(|i, _| rng.random_range(box_min[i]..box_max[i]));
        if let Ok(b) = signed_distance(world, &x) {
            if b > lower && b <= upper {
                out.push(x);
            }
        }
    }
    out
}

pub fn sampler_box<const N: usize>(s: &Scenario<N>) -> (SVector<f64, N>, SVector<f64, N>) {
    match &s.initial_conditions {
        InitialConditions::Sample(spec) => (spec.box_min, spec.box_max),
        InitialConditions::Explicit(_) => panic!("scenario has explicit starts"),
    }
}
