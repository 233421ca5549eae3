//! Shared generators for the integration tests: seeded random trees
//! with feasible boundary conditions and a random single leak, solved
//! through the forward simulator so tests can round-trip against it.
#![allow(dead_code)] // each test target uses a different subset

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use leaktree::hydraulics::PhysicalConstants;
use leaktree::solver::{self, HydraulicState};
use leaktree::{BoundaryConditions, EdgeId, LeakSpec, Network, PipeGeometry, VertexId};

pub struct RandomScenario {
    pub net: Network,
    pub bc: BoundaryConditions,
    pub leak: LeakSpec,
    pub state: HydraulicState,
}

pub fn consts() -> PhysicalConstants {
    PhysicalConstants::default()
}

/// The single-pipe configuration used throughout the experiments:
/// d = 0.3 m, l = 1 km, roughness 0.15 mm, no minor losses.
pub fn reference_geometry() -> PipeGeometry {
    PipeGeometry::new(1000.0, 0.3, 1.5e-4, 0.0).unwrap()
}

pub fn single_pipe_net() -> Network {
    Network::new(2, vec![((0, 1), reference_geometry())]).unwrap()
}

pub fn single_pipe_bc(source_head: f64, demand: f64) -> BoundaryConditions {
    let mut demands = BTreeMap::new();
    demands.insert(VertexId(1), demand);
    BoundaryConditions::new(VertexId(0), source_head, demands)
}

/// Uniformly random attachment tree on `n` vertices.
pub fn random_tree_edges(rng: &mut ChaCha8Rng, n: usize) -> Vec<(usize, usize)> {
    (1..n).map(|v| (rng.random_range(0..v), v)).collect()
}

/// Geometry within the Swamee-Jain validity window. Minor losses only
/// where `allow_minor` (the future leak pipe must not carry any).
pub fn random_geometry(rng: &mut ChaCha8Rng, allow_minor: bool) -> PipeGeometry {
    let diameter = rng.random_range(0.25..0.5);
    let length = rng.random_range(20.0..300.0);
    let relative = 10f64.powf(rng.random_range(-6.0..-2.4));
    let minor = if allow_minor && rng.random_bool(0.3) {
        rng.random_range(0.0..5.0)
    } else {
        0.0
    };
    PipeGeometry::new(length, diameter, relative * diameter, minor).unwrap()
}

/// Draws trees until the forward solve succeeds with comfortably
/// positive heads everywhere. Deterministic in the input generator.
pub fn random_scenario(rng: &mut ChaCha8Rng, min_vertices: usize, max_vertices: usize) -> RandomScenario {
    for _ in 0..200 {
        let n = rng.random_range(min_vertices..=max_vertices);
        let edges = random_tree_edges(rng, n);
        let leak_edge = rng.random_range(0..edges.len());
        let pipes: Vec<((usize, usize), PipeGeometry)> = edges
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| ((a, b), random_geometry(rng, i != leak_edge)))
            .collect();
        let net = Network::new(n, pipes).expect("generated tree is valid");

        let leaves = net.leaves().to_vec();
        let source = leaves[rng.random_range(0..leaves.len())];
        let mut demands = BTreeMap::new();
        for &leaf in &leaves {
            if leaf != source {
                demands.insert(leaf, -rng.random_range(0.002..0.01));
            }
        }
        let bc = BoundaryConditions::new(source, rng.random_range(80.0..150.0), demands);

        let pipe = EdgeId(leak_edge);
        let geometry = net.pipe(pipe).unwrap().geometry;
        let endpoints = net.pipe(pipe).unwrap().endpoints;
        let from = if rng.random_bool(0.5) { endpoints.0 } else { endpoints.1 };
        let leak = LeakSpec {
            pipe,
            from,
            distance: rng.random_range(1.0..geometry.length - 1.0),
            constant: rng.random_range(1e-4..1.5e-3),
            exponent: rng.random_range(0.5..1.5),
        };

        if let Ok(state) = solver::solve_with_leak(&net, &bc, &leak, &consts()) {
            if state.heads.iter().all(|&h| h > 1.0) {
                return RandomScenario { net, bc, leak, state };
            }
        }
    }
    panic!("no feasible random scenario found in 200 attempts");
}

/// The injected leak position measured from `endpoint`.
pub fn true_distance_from(leak: &LeakSpec, net: &Network, endpoint: VertexId) -> f64 {
    let pipe = net.pipe(leak.pipe).unwrap();
    if endpoint == leak.from {
        leak.distance
    } else {
        assert_eq!(pipe.opposite(endpoint), Some(leak.from));
        pipe.geometry.length - leak.distance
    }
}
