//! Forward simulator: solves the steady-state heads and flows of a
//! tree network under one fixed-head source leaf, fixed demands at all
//! other leaves, and an optional pressure-dependent leak.
//!
//! On a tree, the leaf demands determine every pipe flow by continuity
//! alone, and heads follow from the source by accumulating head losses.
//! A leak adds one unknown, its demand `D`; the solver finds the root
//! of `r(D) = C * H_leak(D)^beta - D`, which is strictly decreasing on
//! the feasible bracket (more leak flow upstream means more head loss
//! and a lower leak head), by bracketed bisection with secant
//! acceleration.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hydraulics::{
    self, flow_regime, FlowRegime, PhysicalConstants, PipeGeometry,
};
use crate::measurement::{LeafMeasurement, MeasurementSet};
use crate::network::{EdgeId, Network, VertexId};

/// Convergence tolerance on the leak-demand residual (m^3/s).
pub const LEAK_RESIDUAL_TOLERANCE: f64 = 1e-10;
/// Iteration cap for the scalar root finder.
pub const MAX_ROOT_ITERATIONS: usize = 200;
/// Junction continuity must hold to this fraction of the largest flow.
pub const CONTINUITY_RTOL: f64 = 1e-12;

/// One fixed-head leaf (the source) plus a fixed signed demand at every
/// other leaf. Flows are positive into the network, so consumer demands
/// are non-positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConditions {
    pub source: VertexId,
    pub source_head: f64,
    pub demands: BTreeMap<VertexId, f64>,
}

impl BoundaryConditions {
    pub fn new(source: VertexId, source_head: f64, demands: BTreeMap<VertexId, f64>) -> Self {
        Self { source, source_head, demands }
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        if !net.is_leaf(self.source)? {
            return Err(Error::InvalidBoundary(format!(
                "source vertex {} is not a leaf",
                self.source
            )));
        }
        if self.source_head <= 0.0 || !self.source_head.is_finite() {
            return Err(Error::InvalidBoundary(format!(
                "source head must be positive, got {}",
                self.source_head
            )));
        }
        for leaf in net.leaves() {
            if *leaf == self.source {
                if self.demands.contains_key(leaf) {
                    return Err(Error::InvalidBoundary(format!(
                        "source leaf {leaf} must not carry a demand"
                    )));
                }
                continue;
            }
            match self.demands.get(leaf) {
                None => {
                    return Err(Error::InvalidBoundary(format!(
                        "leaf {leaf} has no demand entry"
                    )))
                }
                Some(d) if *d > 0.0 || !d.is_finite() => {
                    return Err(Error::InvalidBoundary(format!(
                        "demand at leaf {leaf} must be non-positive, got {d}"
                    )))
                }
                Some(_) => {}
            }
        }
        for v in self.demands.keys() {
            if !net.leaves().contains(v) {
                return Err(Error::InvalidBoundary(format!(
                    "demand given for {v}, which is not a leaf"
                )));
            }
        }
        Ok(())
    }
}

/// Ground-truth leak: which pipe, how far along it, and the parameters
/// of the leak law `D = C * H^beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakSpec {
    pub pipe: EdgeId,
    /// Endpoint the leak distance is measured from.
    pub from: VertexId,
    /// Distance of the leak from `from` along the pipe (m).
    pub distance: f64,
    /// Leak constant `C` (m^3/s per m^beta of head).
    pub constant: f64,
    /// Leak exponent `beta`.
    pub exponent: f64,
}

impl LeakSpec {
    pub fn validate(&self, net: &Network) -> Result<()> {
        let pipe = net.pipe(self.pipe)?;
        if pipe.opposite(self.from).is_none() {
            return Err(Error::InvalidLeak(format!(
                "vertex {} is not an endpoint of pipe {}",
                self.from, self.pipe
            )));
        }
        if !(0.0..=pipe.geometry.length).contains(&self.distance) {
            return Err(Error::InvalidLeak(format!(
                "distance {} outside pipe length {}",
                self.distance, pipe.geometry.length
            )));
        }
        if self.constant < 0.0 || !self.constant.is_finite() {
            return Err(Error::InvalidLeak(format!(
                "leak constant must be non-negative, got {}",
                self.constant
            )));
        }
        if self.exponent <= 0.0 || !self.exponent.is_finite() {
            return Err(Error::InvalidLeak(format!(
                "leak exponent must be positive, got {}",
                self.exponent
            )));
        }
        if pipe.geometry.minor_loss != 0.0 {
            return Err(Error::InvalidLeak(format!(
                "pipe {} carries minor losses; leaks are only modeled on sections without them",
                self.pipe
            )));
        }
        Ok(())
    }
}

/// Where the auxiliary leak vertex ended up in the solved network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolvedLeak {
    /// Auxiliary vertex id in the solved (augmented) network.
    pub vertex: VertexId,
    /// Pressure head at the leak (m).
    pub head: f64,
    /// Leak demand `D = C * H^beta` (m^3/s).
    pub demand: f64,
    /// Pipe id of the leaking pipe in the original network.
    pub original_pipe: EdgeId,
    /// Segment from the leak spec's `from` endpoint to the leak.
    pub near_segment: EdgeId,
    /// Segment from the leak to the opposite endpoint.
    pub far_segment: EdgeId,
    /// Converged residual `C H^beta - D` of the leak law.
    pub law_residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub residual: f64,
}

/// Solved steady state: heads at every vertex and signed flows on every
/// pipe of the solved network (which contains the auxiliary leak vertex
/// when a leak was present). Flow signs follow the canonical lower-id
/// to higher-id orientation of each pipe.
#[derive(Debug, Clone, PartialEq)]
pub struct HydraulicState {
    net: Network,
    pub heads: Vec<f64>,
    pub flows: Vec<f64>,
    pub leak: Option<SolvedLeak>,
    /// Pipes whose Reynolds number fell in the transitional band; the
    /// friction bridge keeps them solvable but results there carry
    /// model risk.
    pub transitional_pipes: Vec<EdgeId>,
    pub diagnostics: SolveDiagnostics,
}

impl HydraulicState {
    /// The network the state is defined on. When a leak was solved this
    /// is the augmented network: original vertices keep their ids and
    /// the auxiliary vertex is the highest id.
    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn head(&self, v: VertexId) -> Result<f64> {
        self.heads.get(v.0).copied().ok_or(Error::UnknownVertex(v.0))
    }

    /// Signed flow from `a` to `b` (positive: water moves a -> b).
    pub fn flow_between(&self, a: VertexId, b: VertexId) -> Result<f64> {
        let e = self
            .net
            .edge_between(a, b)
            .ok_or(Error::NotAdjacent(a.0, b.0))?;
        let q = self.flows[e.0];
        Ok(if self.net.pipe(e)?.endpoints.0 == a { q } else { -q })
    }

    pub fn leak_demand(&self) -> f64 {
        self.leak.map_or(0.0, |l| l.demand)
    }

    pub fn max_abs_flow(&self) -> f64 {
        self.flows.iter().fold(0.0, |m, q| m.max(q.abs()))
    }

    /// Checks the solved-state invariants: continuity at every junction,
    /// the leak balance, and the head-loss relation on every pipe.
    pub fn verify(&self, consts: &PhysicalConstants) -> Result<()> {
        let max_q = self.max_abs_flow();
        let continuity_tol = CONTINUITY_RTOL * max_q;
        for v in self.net.vertices() {
            if self.net.is_leaf(v)? {
                continue;
            }
            let inflow: f64 = self
                .net
                .neighbors(v)?
                .iter()
                .map(|&(n, _)| self.flow_between(n, v))
                .sum::<Result<f64>>()?;
            let demand = match self.leak {
                Some(l) if l.vertex == v => l.demand,
                _ => 0.0,
            };
            let residual = (inflow - demand).abs();
            let tol = if demand == 0.0 {
                continuity_tol
            } else {
                LEAK_RESIDUAL_TOLERANCE.max(continuity_tol)
            };
            if residual > tol {
                return Err(Error::InvalidMeasurement(format!(
                    "continuity violated at vertex {v}: residual {residual}"
                )));
            }
        }
        if let Some(l) = self.leak {
            if l.law_residual.abs() > LEAK_RESIDUAL_TOLERANCE {
                return Err(Error::NoConvergence {
                    iterations: self.diagnostics.iterations,
                    residual: l.law_residual,
                });
            }
        }
        for (e, pipe) in self.net.pipes() {
            let (a, b) = pipe.endpoints;
            let drop = hydraulics::head_loss(self.flows[e.0], &pipe.geometry, consts)?;
            let residual = (self.heads[a.0] - self.heads[b.0] - drop).abs();
            if residual > 1e-9 {
                return Err(Error::InvalidMeasurement(format!(
                    "head-loss relation violated on pipe {e}: residual {residual}"
                )));
            }
        }
        Ok(())
    }
}

/// Routes the tree flows implied by the leaf demands plus an optional
/// extra withdrawal, then propagates heads from the source.
fn route_and_heads(
    net: &Network,
    bc: &BoundaryConditions,
    withdrawal: Option<(VertexId, f64)>,
    consts: &PhysicalConstants,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let parents = net.parents(bc.source)?;
    // Breadth-first order from the source.
    let mut order = Vec::with_capacity(net.vertex_count());
    let mut queue = std::collections::VecDeque::from([bc.source]);
    let mut seen = vec![false; net.vertex_count()];
    seen[bc.source.0] = true;
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &(n, _) in net.neighbors(v)? {
            if !seen[n.0] {
                seen[n.0] = true;
                queue.push_back(n);
            }
        }
    }

    // Flow toward the parent = sum of injections in the subtree.
    let mut up = vec![0.0; net.vertex_count()];
    for (v, d) in &bc.demands {
        up[v.0] = *d;
    }
    if let Some((v, demand)) = withdrawal {
        up[v.0] -= demand;
    }
    let mut flows = vec![0.0; net.pipe_count()];
    for &v in order.iter().rev() {
        if v == bc.source {
            continue;
        }
        let (p, e) = parents[v.0].expect("non-root vertex has a parent");
        let toward_parent = up[v.0];
        flows[e.0] = if net.pipe(e)?.endpoints.0 == v {
            toward_parent
        } else {
            -toward_parent
        };
        up[p.0] += toward_parent;
    }

    let mut heads = vec![0.0; net.vertex_count()];
    heads[bc.source.0] = bc.source_head;
    for &v in &order[1..] {
        let (p, e) = parents[v.0].expect("non-root vertex has a parent");
        let pipe = net.pipe(e)?;
        let q = flows[e.0];
        let q_pv = if pipe.endpoints.0 == p { q } else { -q };
        heads[v.0] = heads[p.0] - hydraulics::head_loss(q_pv, &pipe.geometry, consts)?;
    }
    Ok((flows, heads))
}

fn check_feasible(net: &Network, heads: &[f64]) -> Result<()> {
    for v in net.vertices() {
        if heads[v.0] <= 0.0 {
            return Err(Error::InfeasiblePressure { vertex: v.0, head: heads[v.0] });
        }
    }
    Ok(())
}

fn transitional_pipes(net: &Network, flows: &[f64], consts: &PhysicalConstants) -> Result<Vec<EdgeId>> {
    let mut out = Vec::new();
    for (e, pipe) in net.pipes() {
        let re = hydraulics::reynolds(flows[e.0], pipe.geometry.diameter, consts)?;
        if flow_regime(re) == FlowRegime::Transitional {
            out.push(e);
        }
    }
    Ok(out)
}

/// Solves the leak-free network. Flows are fully determined by leaf
/// demands; heads follow from the source head.
pub fn solve_no_leak(
    net: &Network,
    bc: &BoundaryConditions,
    consts: &PhysicalConstants,
) -> Result<HydraulicState> {
    consts.validate()?;
    bc.validate(net)?;
    let (flows, heads) = route_and_heads(net, bc, None, consts)?;
    check_feasible(net, &heads)?;
    let transitional = transitional_pipes(net, &flows, consts)?;
    let state = HydraulicState {
        net: net.clone(),
        heads,
        flows,
        leak: None,
        transitional_pipes: transitional,
        diagnostics: SolveDiagnostics::default(),
    };
    state.verify(consts)?;
    Ok(state)
}

/// Splits the leak pipe at the leak position, producing the augmented
/// network plus the ids of the auxiliary vertex and the two sections.
fn augment(net: &Network, leak: &LeakSpec) -> Result<(Network, VertexId, EdgeId, EdgeId)> {
    let pipe = net.pipe(leak.pipe)?;
    let far = pipe
        .opposite(leak.from)
        .ok_or_else(|| Error::InvalidLeak("leak endpoint not on pipe".into()))?;
    let lam = VertexId(net.vertex_count());
    let mut pipes: Vec<((usize, usize), PipeGeometry)> = Vec::with_capacity(net.pipe_count() + 1);
    for (e, p) in net.pipes() {
        if e != leak.pipe {
            pipes.push(((p.endpoints.0 .0, p.endpoints.1 .0), p.geometry));
        }
    }
    let near_e = EdgeId(pipes.len());
    pipes.push(((leak.from.0, lam.0), pipe.geometry.section(leak.distance)));
    let far_e = EdgeId(pipes.len());
    pipes.push(((far.0, lam.0), pipe.geometry.section(pipe.geometry.length - leak.distance)));
    Ok((Network::from_parts_unchecked(net.vertex_count() + 1, pipes), lam, near_e, far_e))
}

/// Solves the network with a single pressure-dependent leak by scalar
/// root finding on the leak demand over `[0, C * H_source^beta]`.
pub fn solve_with_leak(
    net: &Network,
    bc: &BoundaryConditions,
    leak: &LeakSpec,
    consts: &PhysicalConstants,
) -> Result<HydraulicState> {
    consts.validate()?;
    bc.validate(net)?;
    leak.validate(net)?;
    let (aug, lam, near_e, far_e) = augment(net, leak)?;

    let eval = |d: f64| -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let (flows, heads) = route_and_heads(&aug, bc, Some((lam, d)), consts)?;
        let h_lam = heads[lam.0];
        if h_lam <= 0.0 {
            return Err(Error::InfeasiblePressure { vertex: lam.0, head: h_lam });
        }
        Ok((leak.constant * h_lam.powf(leak.exponent) - d, flows, heads))
    };

    let mut samples: Vec<(f64, f64)> = Vec::new();
    let d_max = leak.constant * bc.source_head.powf(leak.exponent);
    let (r_zero, flows0, heads0) = eval(0.0)?;
    samples.push((0.0, r_zero));

    let (demand, residual, iterations, flows, heads) = if r_zero.abs() <= LEAK_RESIDUAL_TOLERANCE {
        (0.0, r_zero, 0, flows0, heads0)
    } else {
        let (r_hi, ..) = eval(d_max)?;
        samples.push((d_max, r_hi));
        if r_hi > 0.0 {
            return Err(Error::BracketFailure { lo: 0.0, hi: d_max, r_lo: r_zero, r_hi });
        }
        let (mut lo, mut r_lo) = (0.0, r_zero);
        let (mut hi, mut r_hi) = (d_max, r_hi);
        let mut solution = None;
        let mut same_side_streak = 0i32;
        let mut last_side_high = false;
        for iter in 1..=MAX_ROOT_ITERATIONS {
            // Secant (regula falsi) step through the bracket, falling
            // back to bisection when it stalls on one side.
            let mut d = lo - r_lo * (hi - lo) / (r_hi - r_lo);
            if !(d > lo && d < hi) || same_side_streak >= 2 {
                d = 0.5 * (lo + hi);
                same_side_streak = 0;
            }
            let (r, f, h) = eval(d)?;
            samples.push((d, r));
            if r.abs() <= LEAK_RESIDUAL_TOLERANCE {
                solution = Some((d, r, iter, f, h));
                break;
            }
            let replacing_high = r < 0.0;
            if replacing_high == last_side_high {
                same_side_streak += 1;
            } else {
                same_side_streak = 0;
            }
            last_side_high = replacing_high;
            if replacing_high {
                hi = d;
                r_hi = r;
            } else {
                lo = d;
                r_lo = r;
            }
        }
        match solution {
            Some(s) => s,
            None => {
                return Err(Error::NoConvergence {
                    iterations: MAX_ROOT_ITERATIONS,
                    residual: 0.5 * (r_lo + r_hi),
                })
            }
        }
    };

    check_residual_monotone(&samples)?;
    check_feasible(&aug, &heads)?;
    let transitional = transitional_pipes(&aug, &flows, consts)?;
    let head_at_leak = heads[lam.0];
    let state = HydraulicState {
        net: aug,
        heads,
        flows,
        leak: Some(SolvedLeak {
            vertex: lam,
            head: head_at_leak,
            demand,
            original_pipe: leak.pipe,
            near_segment: near_e,
            far_segment: far_e,
            law_residual: residual,
        }),
        transitional_pipes: transitional,
        diagnostics: SolveDiagnostics { iterations, residual },
    };
    state.verify(consts)?;
    Ok(state)
}

/// The residual is strictly decreasing in the leak demand; a violation
/// in the sampled evaluations would void the uniqueness argument, so
/// every solve checks for one.
fn check_residual_monotone(samples: &[(f64, f64)]) -> Result<()> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for pair in sorted.windows(2) {
        let (d_low, r_low) = pair[0];
        let (d_high, r_high) = pair[1];
        if d_high > d_low && r_high > r_low + LEAK_RESIDUAL_TOLERANCE {
            return Err(Error::NonMonotoneResidual { d_low, r_low, d_high, r_high });
        }
    }
    Ok(())
}

/// Extracts the leaf measurements of a solved state under the
/// positive-into-network flow convention. The signed leaf flows sum to
/// the leak demand.
pub fn measurements_of(state: &HydraulicState, label: impl Into<String>) -> Result<MeasurementSet> {
    let mut out = MeasurementSet::new(label);
    for &leaf in state.network().leaves() {
        let (neighbor, _) = state.network().neighbors(leaf)?[0];
        let inflow = state.flow_between(leaf, neighbor)?;
        out.insert(leaf, LeafMeasurement::exact(state.head(leaf)?, inflow));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn consts() -> PhysicalConstants {
        PhysicalConstants::default()
    }

    fn reference_geometry() -> PipeGeometry {
        PipeGeometry::new(1000.0, 0.3, 1.5e-4, 0.0).unwrap()
    }

    fn single_pipe() -> Network {
        Network::new(2, vec![((0, 1), reference_geometry())]).unwrap()
    }

    fn single_pipe_bc(demand: f64) -> BoundaryConditions {
        let mut demands = BTreeMap::new();
        demands.insert(VertexId(1), demand);
        BoundaryConditions::new(VertexId(0), 50.0, demands)
    }

    #[test]
    fn zero_demand_gives_uniform_head() {
        let net = single_pipe();
        let state = solve_no_leak(&net, &single_pipe_bc(0.0), &consts()).unwrap();
        assert_eq!(state.flows, vec![0.0]);
        assert_eq!(state.heads, vec![50.0, 50.0]);
    }

    #[test]
    fn reference_pipe_head_drop() {
        // Consumer takes 0.05 m^3/s: head at the consumer is the source
        // head minus 1000 * U(0.05), independently evaluated.
        let net = single_pipe();
        let state = solve_no_leak(&net, &single_pipe_bc(-0.05), &consts()).unwrap();
        assert!((state.heads[1] - 4.839839673432e1).abs() < 1e-9);
        assert!((state.flow_between(VertexId(0), VertexId(1)).unwrap() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn star_source_balances_consumers() {
        let geom = PipeGeometry::new(200.0, 0.3, 1e-4, 0.0).unwrap();
        let net = Network::new(
            4,
            vec![((0, 1), geom), ((1, 2), geom), ((1, 3), geom)],
        )
        .unwrap();
        let mut demands = BTreeMap::new();
        demands.insert(VertexId(2), -0.02);
        demands.insert(VertexId(3), -0.012);
        let bc = BoundaryConditions::new(VertexId(0), 60.0, demands);
        let state = solve_no_leak(&net, &bc, &consts()).unwrap();
        let source_flow = state.flow_between(VertexId(0), VertexId(1)).unwrap();
        assert!((source_flow - 0.032).abs() < 1e-15);
        let meas = measurements_of(&state, "0").unwrap();
        assert!(meas.total_inflow().abs() < 1e-15);
    }

    #[test]
    fn infeasible_head_is_reported() {
        let net = single_pipe();
        let mut demands = BTreeMap::new();
        demands.insert(VertexId(1), -0.5); // drains far below zero head
        let bc = BoundaryConditions::new(VertexId(0), 50.0, demands);
        assert!(matches!(
            solve_no_leak(&net, &bc, &consts()),
            Err(Error::InfeasiblePressure { vertex: 1, .. })
        ));
    }

    #[test]
    fn boundary_validation_catches_misuse() {
        let net = single_pipe();
        // Missing demand entry.
        let bc = BoundaryConditions::new(VertexId(0), 50.0, BTreeMap::new());
        assert!(matches!(bc.validate(&net), Err(Error::InvalidBoundary(_))));
        // Positive (injecting) consumer demand.
        let mut demands = BTreeMap::new();
        demands.insert(VertexId(1), 0.01);
        let bc = BoundaryConditions::new(VertexId(0), 50.0, demands);
        assert!(matches!(bc.validate(&net), Err(Error::InvalidBoundary(_))));
    }

    #[test]
    fn zero_constant_leak_matches_no_leak() {
        let net = single_pipe();
        let bc = single_pipe_bc(-0.05);
        let base = solve_no_leak(&net, &bc, &consts()).unwrap();
        let leak = LeakSpec {
            pipe: EdgeId(0),
            from: VertexId(0),
            distance: 400.0,
            constant: 0.0,
            exponent: 1.0,
        };
        let state = solve_with_leak(&net, &bc, &leak, &consts()).unwrap();
        assert_eq!(state.leak_demand(), 0.0);
        for v in [VertexId(0), VertexId(1)] {
            assert!((state.head(v).unwrap() - base.head(v).unwrap()).abs() < 1e-12);
        }
        assert!(
            (state.flow_between(VertexId(0), state.leak.unwrap().vertex).unwrap() - 0.05).abs()
                < 1e-15
        );
    }

    #[test]
    fn leak_demand_follows_leak_law() {
        let net = single_pipe();
        let bc = single_pipe_bc(-0.05);
        let leak = LeakSpec {
            pipe: EdgeId(0),
            from: VertexId(0),
            distance: 400.0,
            constant: 1e-3,
            exponent: 0.5,
        };
        let state = solve_with_leak(&net, &bc, &leak, &consts()).unwrap();
        let solved = state.leak.unwrap();
        assert!((solved.demand - 1e-3 * solved.head.powf(0.5)).abs() <= LEAK_RESIDUAL_TOLERANCE);
        // Measurements balance to the leak demand.
        let meas = measurements_of(&state, "0").unwrap();
        assert!((meas.total_inflow() - solved.demand).abs() < 1e-12);
        state.verify(&consts()).unwrap();
    }

    #[test]
    fn grid_scan_confirms_scalar_root() {
        // Independent oracle for the root of r(D) = C*H(D)^beta - D with
        // beta = 1: scan D on a dense grid and bracket the sign change.
        let net = single_pipe();
        let bc = single_pipe_bc(-0.05);
        let leak = LeakSpec {
            pipe: EdgeId(0),
            from: VertexId(0),
            distance: 250.0,
            constant: 1e-3,
            exponent: 1.0,
        };
        let state = solve_with_leak(&net, &bc, &leak, &consts()).unwrap();
        let solved = state.leak.unwrap();

        let (aug, lam, _, _) = augment(&net, &leak).unwrap();
        let residual = |d: f64| -> f64 {
            let (_, heads) = route_and_heads(&aug, &bc, Some((lam, d)), &consts()).unwrap();
            leak.constant * heads[lam.0].powf(leak.exponent) - d
        };
        let step = 1e-6;
        let mut bracket = None;
        let mut d = 0.0;
        while d < 0.1 {
            if residual(d) >= 0.0 && residual(d + step) < 0.0 {
                bracket = Some((d, d + step));
                break;
            }
            d += step;
        }
        let (lo, hi) = bracket.expect("grid scan found no sign change");
        assert!(
            solved.demand >= lo && solved.demand <= hi,
            "solver demand {} outside grid bracket [{lo}, {hi}]",
            solved.demand
        );
    }

    #[test]
    fn leak_on_pipe_with_minor_losses_is_rejected() {
        let geom = PipeGeometry::new(1000.0, 0.3, 1.5e-4, 2.0).unwrap();
        let net = Network::new(2, vec![((0, 1), geom)]).unwrap();
        let leak = LeakSpec {
            pipe: EdgeId(0),
            from: VertexId(0),
            distance: 100.0,
            constant: 1e-3,
            exponent: 1.0,
        };
        assert!(matches!(leak.validate(&net), Err(Error::InvalidLeak(_))));
    }

    #[test]
    fn identical_inputs_solve_identically() {
        let net = single_pipe();
        let bc = single_pipe_bc(-0.05);
        let leak = LeakSpec {
            pipe: EdgeId(0),
            from: VertexId(0),
            distance: 777.0,
            constant: 5e-4,
            exponent: 0.8,
        };
        let a = solve_with_leak(&net, &bc, &leak, &consts()).unwrap();
        let b = solve_with_leak(&net, &bc, &leak, &consts()).unwrap();
        assert_eq!(a.heads, b.heads);
        assert_eq!(a.flows, b.flows);
        assert_eq!(a.leak, b.leak);
    }
}
