//! Forward-solver invariants on seeded random trees: junction
//! conservation, leak balance, flow monotonicity along paths, and
//! determinism.

mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use leaktree::solver::{self, CONTINUITY_RTOL, LEAK_RESIDUAL_TOLERANCE};
use leaktree::VertexId;

#[test]
fn conservation_holds_on_random_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(7001);
    for _ in 0..30 {
        let scenario = common::random_scenario(&mut rng, 3, 40);
        let state = &scenario.state;
        let max_q = state.max_abs_flow();
        for v in state.network().vertices() {
            if state.network().is_leaf(v).unwrap() {
                continue;
            }
            let inflow: f64 = state
                .network()
                .neighbors(v)
                .unwrap()
                .iter()
                .map(|&(n, _)| state.flow_between(n, v).unwrap())
                .sum();
            let demand = match state.leak {
                Some(l) if l.vertex == v => l.demand,
                _ => 0.0,
            };
            let tol = if demand == 0.0 {
                CONTINUITY_RTOL * max_q
            } else {
                LEAK_RESIDUAL_TOLERANCE
            };
            assert!(
                (inflow - demand).abs() <= tol,
                "continuity residual {} at vertex {v}",
                (inflow - demand).abs()
            );
        }
        // Sum of leaf inflows equals the leak demand, which obeys the
        // leak law to solver tolerance.
        let meas = solver::measurements_of(state, "0").unwrap();
        let solved = state.leak.unwrap();
        assert!((meas.total_inflow() - solved.demand).abs() <= 1e-9);
        assert!(solved.demand >= 0.0);
        assert!(
            (solved.demand
                - scenario.leak.constant * solved.head.powf(scenario.leak.exponent))
            .abs()
                <= 1e-9
        );
        state.verify(&common::consts()).unwrap();
    }
}

#[test]
fn flow_magnitude_non_increasing_along_flow_direction() {
    // Follow any root-to-leaf path in flow order: past the leak the
    // carried flow can only shrink.
    let mut rng = ChaCha8Rng::seed_from_u64(7002);
    for _ in 0..30 {
        let scenario = common::random_scenario(&mut rng, 3, 40);
        let state = &scenario.state;
        let net = state.network();
        let source = scenario.bc.source;
        for &leaf in net.leaves() {
            if leaf == source {
                continue;
            }
            let path = net.path(source, leaf).unwrap();
            let mut prev = f64::INFINITY;
            for w in path.windows(2) {
                let q = state.flow_between(w[0], w[1]).unwrap();
                // Flow emanates from the single source, so it is
                // non-negative along every source-to-leaf path.
                assert!(q >= -1e-15, "backflow {q} on path from {source}");
                assert!(
                    q <= prev + 1e-12,
                    "flow grew from {prev} to {q} along the path"
                );
                prev = q;
            }
        }
    }
}

#[test]
fn solves_are_deterministic() {
    let mut rng_a = ChaCha8Rng::seed_from_u64(7003);
    let mut rng_b = ChaCha8Rng::seed_from_u64(7003);
    for _ in 0..5 {
        let a = common::random_scenario(&mut rng_a, 3, 30);
        let b = common::random_scenario(&mut rng_b, 3, 30);
        assert_eq!(a.state.heads, b.state.heads);
        assert_eq!(a.state.flows, b.state.flows);
        assert_eq!(a.state.leak, b.state.leak);
    }
}

#[test]
fn noisy_measurements_are_reproducible_and_balanced_in_expectation() {
    let mut rng = ChaCha8Rng::seed_from_u64(7004);
    let scenario = common::random_scenario(&mut rng, 3, 20);
    let meas = solver::measurements_of(&scenario.state, "0").unwrap();
    let noisy_a = meas.with_noise(0.01, 1e-5, 99).unwrap();
    let noisy_b = meas.with_noise(0.01, 1e-5, 99).unwrap();
    assert_eq!(noisy_a, noisy_b);
    assert_ne!(noisy_a, meas.with_noise(0.01, 1e-5, 100).unwrap());
}

#[test]
fn leak_at_pipe_ends_solves() {
    // Distance 0 and the full length create a zero-length section;
    // both must still solve and balance.
    let net = common::single_pipe_net();
    let bc = common::single_pipe_bc(50.0, -0.05);
    for distance in [0.0, 1000.0] {
        let leak = leaktree::LeakSpec {
            pipe: leaktree::EdgeId(0),
            from: VertexId(0),
            distance,
            constant: 1e-3,
            exponent: 0.5,
        };
        let state = solver::solve_with_leak(&net, &bc, &leak, &common::consts()).unwrap();
        let solved = state.leak.unwrap();
        assert!(solved.demand > 0.0);
        state.verify(&common::consts()).unwrap();
    }
}
