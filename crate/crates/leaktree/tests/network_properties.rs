//! Random-tree checks of the graph queries against brute-force oracles.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use leaktree::{Network, VertexId};

fn random_network(rng: &mut ChaCha8Rng, n: usize) -> Network {
    let pipes = common::random_tree_edges(rng, n)
        .into_iter()
        .map(|e| (e, common::random_geometry(rng, true)))
        .collect();
    Network::new(n, pipes).unwrap()
}

/// Breadth-first shortest path, independent of `Network::path`.
fn bfs_path_oracle(net: &Network, a: VertexId, b: VertexId) -> Vec<VertexId> {
    let mut prev: Vec<Option<VertexId>> = vec![None; net.vertex_count()];
    let mut seen = vec![false; net.vertex_count()];
    seen[a.0] = true;
    let mut queue = std::collections::VecDeque::from([a]);
    while let Some(v) = queue.pop_front() {
        for &(n, _) in net.neighbors(v).unwrap() {
            if !seen[n.0] {
                seen[n.0] = true;
                prev[n.0] = Some(v);
                queue.push_back(n);
            }
        }
    }
    let mut path = vec![b];
    let mut cur = b;
    while cur != a {
        cur = prev[cur.0].unwrap();
        path.push(cur);
    }
    path.reverse();
    path
}

#[test]
fn path_matches_bfs_oracle_on_random_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..20 {
        let n = rng.random_range(2..40);
        let net = random_network(&mut rng, n);
        for _ in 0..5 {
            let a = VertexId(rng.random_range(0..net.vertex_count()));
            let b = VertexId(rng.random_range(0..net.vertex_count()));
            let path = net.path(a, b).unwrap();
            assert_eq!(path, bfs_path_oracle(&net, a, b));
            // Endpoints, adjacency, and no repeats.
            assert_eq!(path.first(), Some(&a));
            assert_eq!(path.last(), Some(&b));
            for w in path.windows(2) {
                assert!(net.edge_between(w[0], w[1]).is_some());
            }
            let mut dedup = path.clone();
            dedup.sort_unstable();
            dedup.dedup();
            assert_eq!(dedup.len(), path.len());
            // Symmetry up to reversal.
            let mut rev = net.path(b, a).unwrap();
            rev.reverse();
            assert_eq!(path, rev);
        }
    }
}

#[test]
fn subtrees_partition_the_vertex_set() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for _ in 0..20 {
        let n = rng.random_range(3..40);
        let net = random_network(&mut rng, n);
        for w in net.vertices() {
            if net.is_leaf(w).unwrap() {
                continue;
            }
            let subtrees = net.subtrees_at(w).unwrap();
            assert_eq!(subtrees.len(), net.degree(w).unwrap());
            // Union is the whole vertex set.
            let mut union: Vec<VertexId> =
                subtrees.iter().flat_map(|(_, vs)| vs.iter().copied()).collect();
            union.sort_unstable();
            union.dedup();
            let all: Vec<VertexId> = net.vertices().collect();
            assert_eq!(union, all);
            // Pairwise intersections are exactly {w}.
            for i in 0..subtrees.len() {
                for j in i + 1..subtrees.len() {
                    let inter: Vec<&VertexId> = subtrees[i]
                        .1
                        .iter()
                        .filter(|v| subtrees[j].1.contains(v))
                        .collect();
                    assert_eq!(inter, vec![&w]);
                }
            }
            // Every subtree contains w and its defining neighbor.
            for (b, vs) in &subtrees {
                assert!(vs.contains(&w) && vs.contains(b));
            }
        }
    }
}

#[test]
fn three_branch_tree_splits_into_three_subtrees() {
    // Center 0 with three interior neighbors 1, 2, 3, each carrying two
    // leaves: the classic picture of subtrees at a vertex.
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let edges = vec![
        (0, 1),
        (0, 2),
        (0, 3),
        (1, 4),
        (1, 5),
        (2, 6),
        (2, 7),
        (3, 8),
        (3, 9),
    ];
    let pipes = edges
        .into_iter()
        .map(|e| (e, common::random_geometry(&mut rng, true)))
        .collect();
    let net = Network::new(10, pipes).unwrap();
    let subtrees = net.subtrees_at(VertexId(0)).unwrap();
    assert_eq!(subtrees.len(), 3);
    let expected = [
        (VertexId(1), vec![VertexId(0), VertexId(1), VertexId(4), VertexId(5)]),
        (VertexId(2), vec![VertexId(0), VertexId(2), VertexId(6), VertexId(7)]),
        (VertexId(3), vec![VertexId(0), VertexId(3), VertexId(8), VertexId(9)]),
    ];
    for (got, want) in subtrees.iter().zip(expected.iter()) {
        assert_eq!(got, want);
    }
}

#[test]
fn leaf_sets_match_brute_force_filter() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for _ in 0..10 {
        let n = rng.random_range(3..40);
        let net = random_network(&mut rng, n);
        let mut pairs = Vec::new();
        for (_, pipe) in net.pipes() {
            pairs.push(pipe.endpoints);
            pairs.push((pipe.endpoints.1, pipe.endpoints.0));
        }
        for &(s, t) in pairs.iter().take(50) {
            let got = net.leaf_set_between(s, t).unwrap();
            // Brute force: leaves whose unique path to s avoids t.
            let expected: Vec<VertexId> = net
                .leaves()
                .iter()
                .copied()
                .filter(|&leaf| !net.path(leaf, s).unwrap().contains(&t))
                .collect();
            assert_eq!(got, expected, "L_st mismatch for s={s}, t={t}");
        }
    }
}

#[test]
fn leaf_sets_of_an_edge_partition_the_leaves() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for _ in 0..10 {
        let n = rng.random_range(2..40);
        let net = random_network(&mut rng, n);
        for (_, pipe) in net.pipes() {
            let (s, t) = pipe.endpoints;
            let mut left = net.leaf_set_between(s, t).unwrap();
            let right = net.leaf_set_between(t, s).unwrap();
            for v in &right {
                assert!(!left.contains(v), "leaf {v} on both sides of ({s}, {t})");
            }
            left.extend(right);
            left.sort_unstable();
            assert_eq!(left.as_slice(), net.leaves());
        }
    }
}
