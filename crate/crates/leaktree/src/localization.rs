//! Inverse algorithms: leak detection from the leaf-flow imbalance, the
//! closed-form single-pipe position estimate, leak-parameter recovery
//! from a second snapshot, no-leak head/flow propagation, and the
//! subtree-elimination walk that reduces a whole tree to one pipe.
//!
//! The tree walk repeatedly picks an interior pivot vertex, propagates
//! an *apparent* head to it from one leaf per subtree under the no-leak
//! hypothesis, and descends into the subtree with the lowest apparent
//! head (which must contain the leak). The head and inflow that the
//! clean side imposes at the pivot then act as a synthetic leaf
//! measurement for the shrunken tree. With one leak the reduction
//! terminates on the leaking pipe, where the closed form applies.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hydraulics::{self, PhysicalConstants, PipeGeometry};
use crate::measurement::MeasurementSet;
use crate::network::{EdgeId, Network, VertexId};

/// Leak declared when the leaf-flow imbalance exceeds this, absent
/// noise information (m^3/s).
pub const DEFAULT_DETECT_THRESHOLD: f64 = 1e-9;
/// `|U_{0l} - U_{l1}|` below this is treated as "no measurable leak".
pub const DEFAULT_DENOMINATOR_THRESHOLD: f64 = 1e-12;
/// Apparent-head tie tolerance in noiseless mode (m).
pub const DEFAULT_TIE_THRESHOLD: f64 = 1e-9;
/// Estimates within this fraction of the pipe length from an endpoint
/// are flagged junction-proximate.
pub const DEFAULT_JUNCTION_FRACTION: f64 = 1e-3;
/// Noiseless estimates may overshoot the pipe by this fraction of the
/// length before being treated as errors.
pub const DEFAULT_POSITION_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasurementMode {
    /// Noiseless data: out-of-range estimates are errors, ties are
    /// resolved in neighbor order.
    Exact,
    /// Noisy data: estimates are clamped into the pipe, ties within the
    /// propagated noise raise an ambiguity error.
    Noisy,
}

/// How the tree walk picks its pivot vertex. Any choice yields the same
/// leak (uniqueness), so the policy only affects the iteration count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PivotPolicy {
    /// Pivot minimizing the largest neighbor subtree (centroid-style).
    Centroid,
    /// Smallest-id interior vertex.
    First,
    /// Pseudo-random interior vertex, deterministic in the seed.
    Seeded(u64),
}

/// How a representative leaf is picked inside each subtree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LeafPolicy {
    /// Smallest-id leaf of the subtree.
    First,
    /// Pseudo-random leaf, deterministic in the seed.
    Seeded(u64),
}

#[derive(Debug, Clone)]
pub struct LocalizeOptions {
    pub mode: MeasurementMode,
    /// Detection threshold override; `None` selects 1e-9 for exact data
    /// or three standard deviations of the summed flow noise.
    pub detect_threshold: Option<f64>,
    pub denominator_threshold: f64,
    pub tie_threshold: f64,
    pub junction_fraction: f64,
    pub position_slack: f64,
    pub pivot_policy: PivotPolicy,
    pub leaf_policy: LeafPolicy,
}

impl Default for LocalizeOptions {
    fn default() -> Self {
        Self {
            mode: MeasurementMode::Exact,
            detect_threshold: None,
            denominator_threshold: DEFAULT_DENOMINATOR_THRESHOLD,
            tie_threshold: DEFAULT_TIE_THRESHOLD,
            junction_fraction: DEFAULT_JUNCTION_FRACTION,
            position_slack: DEFAULT_POSITION_SLACK,
            pivot_policy: PivotPolicy::Centroid,
            leaf_policy: LeafPolicy::First,
        }
    }
}

impl LocalizeOptions {
    pub fn noisy() -> Self {
        Self { mode: MeasurementMode::Noisy, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub leak_detected: bool,
    /// Net signed inflow over all leaves (m^3/s); the leak demand.
    pub imbalance: f64,
    pub threshold: f64,
}

/// Declares a leak when the total leaf inflow exceeds the detection
/// threshold: water that enters and does not exit must leak.
pub fn detect_leak(
    net: &Network,
    meas: &MeasurementSet,
    threshold: Option<f64>,
) -> Result<DetectionResult> {
    meas.check_coverage(net)?;
    let imbalance = meas.total_inflow();
    let threshold = threshold.unwrap_or_else(|| default_detect_threshold(meas));
    Ok(DetectionResult { leak_detected: imbalance > threshold, imbalance, threshold })
}

fn default_detect_threshold(meas: &MeasurementSet) -> f64 {
    let flow_var: f64 = meas
        .iter()
        .filter_map(|(_, m)| m.sigma_flow)
        .map(|s| s * s)
        .sum();
    if flow_var > 0.0 {
        3.0 * flow_var.sqrt()
    } else {
        DEFAULT_DETECT_THRESHOLD
    }
}

/// Endpoint readings of one pipe at one snapshot. Flows are positive
/// into the pipe at each end, so `flow_0 + flow_1` is the leak demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinglePipeSnapshot {
    pub head_0: f64,
    pub head_1: f64,
    pub flow_0: f64,
    pub flow_1: f64,
}

impl SinglePipeSnapshot {
    pub fn demand(&self) -> f64 {
        self.flow_0 + self.flow_1
    }

    /// Oriented internal flows `(q_{0l}, q_{l1})`: into the pipe at end
    /// 0, and from the leak toward end 1.
    pub fn oriented_flows(&self) -> (f64, f64) {
        (self.flow_0, -self.flow_1)
    }

    /// The same snapshot with the endpoint labels exchanged.
    pub fn flipped(&self) -> Self {
        Self {
            head_0: self.head_1,
            head_1: self.head_0,
            flow_0: self.flow_1,
            flow_1: self.flow_0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinglePipeEstimate {
    /// Leak position from end 0, clamped into `[0, l]` (m).
    pub x: f64,
    /// Unclamped estimate (m).
    pub raw_x: f64,
    /// `U_{0l} - U_{l1}`, the estimator's denominator.
    pub denominator: f64,
    /// Estimate close enough to an endpoint that the split-pipe model
    /// degenerates there.
    pub junction_proximate: bool,
}

/// Closed-form leak position on a single pipe:
/// `x = (H_0 - H_1 - l U_{l1}) / (U_{0l} - U_{l1})`, measured from
/// end 0.
pub fn localize_single_pipe(
    snap: &SinglePipeSnapshot,
    geom: &PipeGeometry,
    consts: &PhysicalConstants,
    opts: &LocalizeOptions,
) -> Result<SinglePipeEstimate> {
    let (q_0l, q_l1) = snap.oriented_flows();
    let u_0l = hydraulics::resistance_term(q_0l, geom, consts)?;
    let u_l1 = hydraulics::resistance_term(q_l1, geom, consts)?;
    let denominator = u_0l - u_l1;
    if denominator.abs() < opts.denominator_threshold {
        return Err(Error::DegenerateDenominator {
            denominator,
            threshold: opts.denominator_threshold,
        });
    }
    let length = geom.length;
    let raw_x = (snap.head_0 - snap.head_1 - length * u_l1) / denominator;
    if opts.mode == MeasurementMode::Exact
        && !(raw_x >= -opts.position_slack * length
            && raw_x <= length * (1.0 + opts.position_slack))
    {
        return Err(Error::EstimateOutOfRange { x: raw_x, length });
    }
    let x = raw_x.clamp(0.0, length);
    let junction_proximate =
        x <= opts.junction_fraction * length || x >= length * (1.0 - opts.junction_fraction);
    Ok(SinglePipeEstimate { x, raw_x, denominator, junction_proximate })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakParams {
    pub exponent: f64,
    pub constant: f64,
}

/// Recovers the leak exponent and constant from two snapshots with
/// distinct source heads:
/// `beta = log(D/D') / log(H_l/H_l')`, `C = D / H_l^beta`, with
/// `H_l = H_0 - x U_{0l}` evaluated per snapshot.
pub fn estimate_leak_params(
    first: &SinglePipeSnapshot,
    second: &SinglePipeSnapshot,
    x: f64,
    geom: &PipeGeometry,
    consts: &PhysicalConstants,
) -> Result<LeakParams> {
    if first.head_0 == second.head_0 {
        return Err(Error::InsufficientExcitation(
            "both snapshots have the same end-0 head".into(),
        ));
    }
    let (d1, d2) = (first.demand(), second.demand());
    if d1 == d2 {
        return Err(Error::InsufficientExcitation(
            "both snapshots have the same leak demand".into(),
        ));
    }
    if d1 <= 0.0 || d2 <= 0.0 || d1.is_nan() || d2.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "leak demands must be positive, got {d1} and {d2}"
        )));
    }
    let h1 = first.head_0 - x * hydraulics::resistance_term(first.flow_0, geom, consts)?;
    let h2 = second.head_0 - x * hydraulics::resistance_term(second.flow_0, geom, consts)?;
    for h in [h1, h2] {
        if h <= 0.0 || h.is_nan() {
            return Err(Error::InfeasibleLeakHead { head: h });
        }
    }
    let head_ratio = (h1 / h2).ln();
    if head_ratio == 0.0 {
        return Err(Error::InsufficientExcitation("leak heads are equal".into()));
    }
    let exponent = (d1 / d2).ln() / head_ratio;
    let constant = d1 / h1.powf(exponent);
    if !exponent.is_finite() || !constant.is_finite() {
        return Err(Error::InsufficientExcitation(format!(
            "parameter recovery diverged (beta = {exponent}, C = {constant})"
        )));
    }
    Ok(LeakParams { exponent, constant })
}

/// One boundary value of the (possibly shrunken) tree: a measured or
/// computed head and inflow, with first-order variances carried along
/// for noisy-mode diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
struct BoundaryReading {
    head: f64,
    flow: f64,
    var_head: f64,
    var_flow: f64,
}

/// Rooted view of the active subgraph: parent pointers plus per-vertex
/// sums of boundary inflows (the apparent flows) and their variances
/// over each vertex's subtree.
struct Rooted {
    parent: Vec<Option<(VertexId, EdgeId)>>,
    up_flow: Vec<f64>,
    up_var: Vec<f64>,
}

fn root_active(
    net: &Network,
    active: Option<&[bool]>,
    boundary: &BTreeMap<VertexId, BoundaryReading>,
    root: VertexId,
) -> Result<Rooted> {
    let is_active = |v: VertexId| active.is_none_or(|m| m[v.0]);
    if !net.contains(root) {
        return Err(Error::UnknownVertex(root.0));
    }
    debug_assert!(is_active(root));
    let n = net.vertex_count();
    let mut parent = vec![None; n];
    let mut order = Vec::new();
    let mut seen = vec![false; n];
    seen[root.0] = true;
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &(nb, e) in net.neighbors(v)? {
            if is_active(nb) && !seen[nb.0] {
                seen[nb.0] = true;
                parent[nb.0] = Some((v, e));
                queue.push_back(nb);
            }
        }
    }
    let mut up_flow = vec![0.0; n];
    let mut up_var = vec![0.0; n];
    for (v, reading) in boundary {
        if is_active(*v) && *v != root {
            up_flow[v.0] = reading.flow;
            up_var[v.0] = reading.var_flow;
        }
    }
    for &v in order.iter().rev() {
        if let Some((p, _)) = parent[v.0] {
            up_flow[p.0] += up_flow[v.0];
            up_var[p.0] += up_var[v.0];
        }
    }
    Ok(Rooted { parent, up_flow, up_var })
}

/// Walks the head from a boundary leaf to the root, subtracting the
/// head loss implied by the apparent flow on every edge. Returns the
/// apparent head at the root and its first-order variance.
fn walk_head(
    net: &Network,
    rooted: &Rooted,
    boundary: &BTreeMap<VertexId, BoundaryReading>,
    leaf: VertexId,
    consts: &PhysicalConstants,
) -> Result<(f64, f64)> {
    let reading = boundary
        .get(&leaf)
        .ok_or(Error::IncompleteCoverage { missing: vec![leaf.0] })?;
    let mut head = reading.head;
    let mut variance = reading.var_head;
    let mut v = leaf;
    while let Some((p, e)) = rooted.parent[v.0] {
        let pipe = net.pipe(e)?;
        let q = rooted.up_flow[v.0];
        head -= hydraulics::head_loss(q, &pipe.geometry, consts)?;
        if rooted.up_var[v.0] > 0.0 {
            let sensitivity = pipe.geometry.length
                * hydraulics::d_resistance_dq_nudged(q, &pipe.geometry, consts)?
                + 2.0 * pipe.geometry.minor_loss * q.abs();
            variance += sensitivity * sensitivity * rooted.up_var[v.0];
        }
        v = p;
    }
    Ok((head, variance))
}

fn boundary_from_measurements(meas: &MeasurementSet) -> BTreeMap<VertexId, BoundaryReading> {
    meas.iter()
        .map(|(v, m)| {
            (
                v,
                BoundaryReading {
                    head: m.head,
                    flow: m.flow,
                    var_head: m.sigma_head.map_or(0.0, |s| s * s),
                    var_flow: m.sigma_flow.map_or(0.0, |s| s * s),
                },
            )
        })
        .collect()
}

/// No-leak propagation toward an adjacent pair `(s, t)`: the flow
/// `q_st` as the signed sum of the leaf flows on `s`'s side, and the
/// head at `s` walked from leaf `p` on that side. Exact when that side
/// is actually leak-free.
pub fn propagate(
    net: &Network,
    meas: &MeasurementSet,
    from_leaf: VertexId,
    s: VertexId,
    t: VertexId,
    consts: &PhysicalConstants,
) -> Result<(f64, f64)> {
    meas.check_coverage(net)?;
    if net.edge_between(s, t).is_none() {
        return Err(Error::NotAdjacent(s.0, t.0));
    }
    let side = net.leaf_set_between(s, t)?;
    if !side.contains(&from_leaf) {
        return Err(Error::LeafNotOnSide { leaf: from_leaf.0, vertex: s.0, side: t.0 });
    }
    let boundary = boundary_from_measurements(meas);
    let rooted = root_active(net, None, &boundary, s)?;
    let q_st: f64 = side.iter().map(|leaf| boundary[leaf].flow).sum();
    let (head, _) = walk_head(net, &rooted, &boundary, from_leaf, consts)?;
    Ok((head, q_st))
}

/// Apparent quantities along one propagation path, computed under the
/// unconditional no-leak hypothesis: the flow on every traversed pipe
/// (signed along the walk direction) and the head at every visited
/// vertex, from a source leaf to a target vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApparentState {
    /// Visited vertices, leaf first, target last.
    pub path: Vec<VertexId>,
    /// `flows[i]` is the apparent flow from `path[i]` to `path[i+1]`.
    pub flows: Vec<f64>,
    /// `heads[i]` is the apparent head at `path[i]`; `heads[0]` is the
    /// measured leaf head.
    pub heads: Vec<f64>,
}

/// Walks the apparent state from `leaf` to `vertex` under the no-leak
/// hypothesis. The final head equals the true head when no leak lies on
/// the way and falls below it when one does, which is the signal the
/// tree walk exploits.
pub fn apparent_state(
    net: &Network,
    meas: &MeasurementSet,
    leaf: VertexId,
    vertex: VertexId,
    consts: &PhysicalConstants,
) -> Result<ApparentState> {
    meas.check_coverage(net)?;
    if !net.leaves().contains(&leaf) {
        return Err(Error::InvalidArgument(format!("vertex {leaf} is not a leaf")));
    }
    if !net.contains(vertex) {
        return Err(Error::UnknownVertex(vertex.0));
    }
    let boundary = boundary_from_measurements(meas);
    let rooted = root_active(net, None, &boundary, vertex)?;
    let mut path = vec![leaf];
    let mut heads = vec![boundary[&leaf].head];
    let mut flows = Vec::new();
    let mut v = leaf;
    while let Some((p, e)) = rooted.parent[v.0] {
        let pipe = net.pipe(e)?;
        let q = rooted.up_flow[v.0];
        flows.push(q);
        heads.push(heads.last().expect("nonempty") - hydraulics::head_loss(q, &pipe.geometry, consts)?);
        path.push(p);
        v = p;
    }
    Ok(ApparentState { path, flows, heads })
}

/// Apparent head at `vertex` computed from `leaf`; the last entry of
/// [`apparent_state`]'s head walk.
pub fn apparent_head(
    net: &Network,
    meas: &MeasurementSet,
    leaf: VertexId,
    vertex: VertexId,
    consts: &PhysicalConstants,
) -> Result<f64> {
    let state = apparent_state(net, meas, leaf, vertex, consts)?;
    Ok(*state.heads.last().expect("path includes the leaf"))
}

/// Apparent head of one subtree representative at a pivot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubtreeCandidate {
    pub neighbor: VertexId,
    pub leaf: VertexId,
    pub apparent_head: f64,
    pub head_variance: f64,
}

/// One shrink iteration of the tree walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PivotRecord {
    pub pivot: VertexId,
    pub candidates: Vec<SubtreeCandidate>,
    pub chosen_neighbor: VertexId,
    /// Head imposed at the pivot by the clean side.
    pub computed_head: f64,
    /// Flow from the pivot into the chosen subtree.
    pub computed_flow: f64,
    /// Active vertex set before this iteration shrank it.
    pub active_before: Vec<VertexId>,
    /// Two subtree heads were separated by less than the tie tolerance.
    pub tie_within_tolerance: bool,
}

/// Driver state of the subtree-elimination walk. Exposed so tests and
/// diagnostics can inspect each iteration; [`localize_tree`] is the
/// plain entry point.
pub struct TreeLocalizer<'a> {
    net: &'a Network,
    consts: PhysicalConstants,
    opts: LocalizeOptions,
    active: Vec<bool>,
    boundary: BTreeMap<VertexId, BoundaryReading>,
    trace: Vec<PivotRecord>,
}

impl<'a> TreeLocalizer<'a> {
    pub fn new(
        net: &'a Network,
        meas: &MeasurementSet,
        consts: &PhysicalConstants,
        opts: &LocalizeOptions,
    ) -> Result<Self> {
        meas.check_coverage(net)?;
        consts.validate()?;
        Ok(Self {
            net,
            consts: *consts,
            opts: opts.clone(),
            active: vec![true; net.vertex_count()],
            boundary: boundary_from_measurements(meas),
            trace: Vec::new(),
        })
    }

    pub fn active_vertices(&self) -> Vec<VertexId> {
        (0..self.net.vertex_count())
            .filter(|&v| self.active[v])
            .map(VertexId)
            .collect()
    }

    fn active_degree(&self, v: VertexId) -> usize {
        self.net
            .neighbors(v)
            .map(|ns| ns.iter().filter(|(n, _)| self.active[n.0]).count())
            .unwrap_or(0)
    }

    pub fn active_leaves(&self) -> Vec<VertexId> {
        self.active_vertices()
            .into_iter()
            .filter(|&v| self.active_degree(v) == 1)
            .collect()
    }

    pub fn is_final(&self) -> bool {
        self.active.iter().filter(|a| **a).count() == 2
    }

    pub fn trace(&self) -> &[PivotRecord] {
        &self.trace
    }

    /// Vertices on `start`'s side when the active edge
    /// `(blocked, start)` is cut, not including `blocked`.
    fn active_component(&self, start: VertexId, blocked: VertexId) -> Vec<VertexId> {
        let mut seen = vec![false; self.net.vertex_count()];
        seen[blocked.0] = true;
        seen[start.0] = true;
        let mut out = vec![start];
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &(n, _) in self.net.neighbors(v).expect("active vertex") {
                if self.active[n.0] && !seen[n.0] {
                    seen[n.0] = true;
                    out.push(n);
                    stack.push(n);
                }
            }
        }
        out.sort_unstable();
        out
    }

    fn pick_pivot(&self) -> VertexId {
        let interior: Vec<VertexId> = self
            .active_vertices()
            .into_iter()
            .filter(|&v| self.active_degree(v) >= 2)
            .collect();
        debug_assert!(!interior.is_empty());
        match self.opts.pivot_policy {
            PivotPolicy::First => interior[0],
            PivotPolicy::Seeded(seed) => {
                let mix = seed ^ (self.trace.len() as u64).wrapping_mul(0x9e3779b97f4a7c15);
                let mut rng = ChaCha8Rng::seed_from_u64(mix);
                interior[rng.random_range(0..interior.len())]
            }
            PivotPolicy::Centroid => {
                // One rooted pass gives every subtree size, so the
                // whole pick is linear in the active tree.
                let n = self.net.vertex_count();
                let root = interior[0];
                let mut parent: Vec<Option<VertexId>> = vec![None; n];
                let mut order = Vec::new();
                let mut seen = vec![false; n];
                seen[root.0] = true;
                let mut queue = std::collections::VecDeque::from([root]);
                while let Some(v) = queue.pop_front() {
                    order.push(v);
                    for &(nb, _) in self.net.neighbors(v).expect("active vertex") {
                        if self.active[nb.0] && !seen[nb.0] {
                            seen[nb.0] = true;
                            parent[nb.0] = Some(v);
                            queue.push_back(nb);
                        }
                    }
                }
                let total = order.len();
                let mut size = vec![0usize; n];
                for &v in &order {
                    size[v.0] = 1;
                }
                for &v in order.iter().rev() {
                    if let Some(p) = parent[v.0] {
                        size[p.0] += size[v.0];
                    }
                }
                let mut best = interior[0];
                let mut best_size = usize::MAX;
                for &v in &interior {
                    let mut largest = if v == root { 0 } else { total - size[v.0] };
                    for &(nb, _) in self.net.neighbors(v).expect("active vertex") {
                        if self.active[nb.0] && parent[nb.0] == Some(v) {
                            largest = largest.max(size[nb.0]);
                        }
                    }
                    if largest < best_size {
                        best_size = largest;
                        best = v;
                    }
                }
                best
            }
        }
    }

    fn pick_leaf(&self, component: &[VertexId], neighbor: VertexId) -> VertexId {
        let leaves: Vec<VertexId> = component
            .iter()
            .copied()
            .filter(|&v| self.active_degree(v) == 1)
            .collect();
        debug_assert!(!leaves.is_empty());
        match self.opts.leaf_policy {
            LeafPolicy::First => leaves[0],
            LeafPolicy::Seeded(seed) => {
                let mix = seed
                    ^ (self.trace.len() as u64).wrapping_mul(0x9e3779b97f4a7c15)
                    ^ (neighbor.0 as u64).wrapping_mul(0xd1b54a32d192ed03);
                let mut rng = ChaCha8Rng::seed_from_u64(mix);
                leaves[rng.random_range(0..leaves.len())]
            }
        }
    }

    /// The pivot the next [`Self::step`] call will use. Deterministic:
    /// calling this does not advance the walk.
    pub fn peek_pivot(&self) -> VertexId {
        self.pick_pivot()
    }

    /// Apparent head at `target` from active leaf `leaf` over the
    /// current active tree.
    pub fn apparent_head_from(&self, leaf: VertexId, target: VertexId) -> Result<f64> {
        let rooted = root_active(self.net, Some(&self.active), &self.boundary, target)?;
        let (head, _) = walk_head(self.net, &rooted, &self.boundary, leaf, &self.consts)?;
        Ok(head)
    }

    /// Runs one pivot-compare-shrink iteration and records it.
    pub fn step(&mut self) -> Result<&PivotRecord> {
        debug_assert!(!self.is_final());
        let pivot = self.pick_pivot();
        let active_before = self.active_vertices();
        let rooted = root_active(self.net, Some(&self.active), &self.boundary, pivot)?;

        let neighbors: Vec<VertexId> = self
            .net
            .neighbors(pivot)?
            .iter()
            .filter(|(n, _)| self.active[n.0])
            .map(|&(n, _)| n)
            .collect();
        let mut candidates = Vec::with_capacity(neighbors.len());
        for &b in &neighbors {
            let component = self.active_component(b, pivot);
            let leaf = self.pick_leaf(&component, b);
            let (head, variance) =
                walk_head(self.net, &rooted, &self.boundary, leaf, &self.consts)?;
            candidates.push(SubtreeCandidate {
                neighbor: b,
                leaf,
                apparent_head: head,
                head_variance: variance,
            });
        }

        // Lowest apparent head marks the leaking subtree.
        let best_idx = candidates
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.apparent_head.total_cmp(&b.1.apparent_head))
            .map(|(i, _)| i)
            .expect("pivot has at least two subtrees");
        let best = candidates[best_idx];
        let runner_up = candidates
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != best_idx)
            .min_by(|a, b| a.1.apparent_head.total_cmp(&b.1.apparent_head))
            .map(|(_, c)| *c)
            .expect("pivot has at least two subtrees");
        let gap = runner_up.apparent_head - best.apparent_head;
        let tie_tolerance = match self.opts.mode {
            MeasurementMode::Exact => self.opts.tie_threshold,
            MeasurementMode::Noisy => self
                .opts
                .tie_threshold
                .max(3.0 * (best.head_variance + runner_up.head_variance).sqrt()),
        };
        let tie_within_tolerance = gap <= tie_tolerance;
        if tie_within_tolerance && self.opts.mode == MeasurementMode::Noisy {
            return Err(Error::AmbiguousSubtree {
                pivot: pivot.0,
                first: best.apparent_head,
                second: runner_up.apparent_head,
                tolerance: tie_tolerance,
            });
        }
        // In exact mode a tie within tolerance keeps the first
        // candidate in neighbor order among the tied ones.
        let chosen = if tie_within_tolerance {
            *candidates
                .iter()
                .find(|c| c.apparent_head - best.apparent_head <= tie_tolerance)
                .expect("at least the minimum matches")
        } else {
            best
        };

        // The clean side fixes the true head at the pivot (any
        // non-leaking subtree representative gives the same value) and
        // the flow the pivot feeds into the leaking subtree.
        let clean = candidates
            .iter()
            .find(|c| c.neighbor != chosen.neighbor)
            .expect("pivot has at least two subtrees");
        let computed_head = clean.apparent_head;
        let head_variance = clean.head_variance;
        let chosen_component = self.active_component(chosen.neighbor, pivot);
        let mut computed_flow = 0.0;
        let mut flow_variance = 0.0;
        for (v, reading) in &self.boundary {
            if self.active[v.0] && !chosen_component.contains(v) && *v != pivot {
                computed_flow += reading.flow;
                flow_variance += reading.var_flow;
            }
        }

        let record = PivotRecord {
            pivot,
            candidates,
            chosen_neighbor: chosen.neighbor,
            computed_head,
            computed_flow,
            active_before,
            tie_within_tolerance,
        };

        for v in 0..self.net.vertex_count() {
            self.active[v] = v == pivot.0 || chosen_component.contains(&VertexId(v));
        }
        self.boundary.retain(|v, _| self.active[v.0]);
        self.boundary.insert(
            pivot,
            BoundaryReading {
                head: computed_head,
                flow: computed_flow,
                var_head: head_variance,
                var_flow: flow_variance,
            },
        );
        self.trace.push(record);
        Ok(self.trace.last().expect("just pushed"))
    }

    /// The single remaining pipe once the walk is final, as
    /// `(pipe, endpoints)`.
    pub fn final_pipe(&self) -> Result<(EdgeId, VertexId, VertexId)> {
        let active = self.active_vertices();
        if active.len() != 2 {
            return Err(Error::InvalidArgument(format!(
                "walk is not final: {} active vertices",
                active.len()
            )));
        }
        let (u, v) = (active[0], active[1]);
        let edge = self
            .net
            .edge_between(u, v)
            .ok_or(Error::NotAdjacent(u.0, v.0))?;
        Ok((edge, u, v))
    }

    fn reading(&self, v: VertexId) -> Result<BoundaryReading> {
        self.boundary
            .get(&v)
            .copied()
            .ok_or(Error::IncompleteCoverage { missing: vec![v.0] })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LocalizationDiagnostics {
    pub iterations: usize,
    pub subtree_trace: Vec<PivotRecord>,
    /// Detection imbalance, the sum of signed leaf flows (m^3/s).
    pub imbalance: f64,
    /// Some iteration resolved a within-tolerance tie by neighbor order.
    pub tie_within_tolerance: bool,
    /// Disagreement between the two snapshots' position estimates (m).
    pub x_spread: Option<f64>,
}

/// Per-channel standard deviations at the two ends of the final pipe,
/// oriented like the closed form (end 0 at the reference endpoint).
/// For an original single pipe these are the measured sigmas; for ends
/// synthesized by the tree walk they are first-order propagations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSigmas {
    pub head_0: f64,
    pub head_1: f64,
    pub flow_0: f64,
    pub flow_1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    /// Leaking pipe in the original network.
    pub pipe: EdgeId,
    /// Endpoint the position is measured from (the end that played
    /// vertex 0 in the closed form: the higher-head side).
    pub reference: VertexId,
    /// Leak position from `reference` (m), clamped into the pipe.
    pub x: f64,
    /// Unclamped position estimate (m).
    pub raw_x: f64,
    pub pipe_length: f64,
    pub exponent: Option<f64>,
    pub constant: Option<f64>,
    pub junction_proximate: bool,
    /// Endpoint readings consumed by the final closed-form step,
    /// oriented with end 0 at `reference` (first snapshot when two
    /// were supplied).
    pub final_snapshot: SinglePipeSnapshot,
    /// Noise levels at the final pipe's ends, when the measurements
    /// carried any.
    pub end_sigmas: Option<ChannelSigmas>,
    pub diagnostics: LocalizationDiagnostics,
}

impl LocalizationResult {
    /// The position expressed as a distance from `endpoint`, which must
    /// be one of the identified pipe's endpoints.
    pub fn distance_from(&self, endpoint: VertexId, net: &Network) -> Result<f64> {
        let pipe = net.pipe(self.pipe)?;
        if endpoint == self.reference {
            Ok(self.x)
        } else if pipe.opposite(endpoint) == Some(self.reference) {
            Ok(self.pipe_length - self.x)
        } else {
            Err(Error::InvalidArgument(format!(
                "vertex {endpoint} is not an endpoint of pipe {}",
                self.pipe
            )))
        }
    }
}

struct SnapshotRun {
    pipe: EdgeId,
    reference: VertexId,
    snapshot: SinglePipeSnapshot,
    sigmas: Option<ChannelSigmas>,
    estimate: SinglePipeEstimate,
    trace: Vec<PivotRecord>,
    tie: bool,
}

fn run_snapshot(
    net: &Network,
    meas: &MeasurementSet,
    consts: &PhysicalConstants,
    opts: &LocalizeOptions,
) -> Result<SnapshotRun> {
    let mut walk = TreeLocalizer::new(net, meas, consts, opts)?;
    while !walk.is_final() {
        walk.step()?;
    }
    let (pipe, u, v) = walk.final_pipe()?;
    let (ru, rv) = (walk.reading(u)?, walk.reading(v)?);
    // The higher-head endpoint plays vertex 0 of the closed form.
    let (reference, r0, r1) = if ru.head >= rv.head { (u, ru, rv) } else { (v, rv, ru) };
    let snapshot = SinglePipeSnapshot {
        head_0: r0.head,
        head_1: r1.head,
        flow_0: r0.flow,
        flow_1: r1.flow,
    };
    let total_var = r0.var_head + r1.var_head + r0.var_flow + r1.var_flow;
    let sigmas = (total_var > 0.0).then(|| ChannelSigmas {
        head_0: r0.var_head.sqrt(),
        head_1: r1.var_head.sqrt(),
        flow_0: r0.var_flow.sqrt(),
        flow_1: r1.var_flow.sqrt(),
    });
    let geometry = net.pipe(pipe)?.geometry;
    let estimate = localize_single_pipe(&snapshot, &geometry, consts, opts)?;
    let tie = walk.trace().iter().any(|r| r.tie_within_tolerance);
    Ok(SnapshotRun { pipe, reference, snapshot, sigmas, estimate, trace: walk.trace.clone(), tie })
}

/// Full tree localization: detect the leak, shrink the tree onto the
/// leaking pipe, apply the closed form, and recover the leak parameters
/// when a second snapshot with a distinct operating point is supplied.
pub fn localize_tree(
    net: &Network,
    meas: &MeasurementSet,
    second: Option<&MeasurementSet>,
    consts: &PhysicalConstants,
    opts: &LocalizeOptions,
) -> Result<LocalizationResult> {
    let detection = detect_leak(net, meas, opts.detect_threshold)?;
    if !detection.leak_detected {
        return Err(Error::NoLeakDetected {
            imbalance: detection.imbalance,
            threshold: detection.threshold,
        });
    }
    let first = run_snapshot(net, meas, consts, opts)?;
    let geometry = net.pipe(first.pipe)?.geometry;

    let mut x = first.estimate.x;
    let mut raw_x = first.estimate.raw_x;
    let mut x_spread = None;
    let mut params = None;
    if let Some(second_meas) = second {
        let second_run = run_snapshot(net, second_meas, consts, opts)?;
        if second_run.pipe != first.pipe {
            return Err(Error::SnapshotMismatch {
                first: first.pipe.0,
                second: second_run.pipe.0,
            });
        }
        // Express the second estimate from the first run's reference.
        let (second_x, second_raw, second_snap) = if second_run.reference == first.reference {
            (second_run.estimate.x, second_run.estimate.raw_x, second_run.snapshot)
        } else {
            (
                geometry.length - second_run.estimate.x,
                geometry.length - second_run.estimate.raw_x,
                second_run.snapshot.flipped(),
            )
        };
        x_spread = Some((first.estimate.x - second_x).abs());
        x = 0.5 * (first.estimate.x + second_x);
        raw_x = 0.5 * (first.estimate.raw_x + second_raw);
        params = Some(estimate_leak_params(
            &first.snapshot,
            &second_snap,
            x,
            &geometry,
            consts,
        )?);
    }

    let junction_proximate = x <= opts.junction_fraction * geometry.length
        || x >= geometry.length * (1.0 - opts.junction_fraction);
    Ok(LocalizationResult {
        pipe: first.pipe,
        reference: first.reference,
        x,
        raw_x,
        pipe_length: geometry.length,
        exponent: params.map(|p| p.exponent),
        constant: params.map(|p| p.constant),
        junction_proximate,
        final_snapshot: first.snapshot,
        end_sigmas: first.sigmas,
        diagnostics: LocalizationDiagnostics {
            iterations: first.trace.len(),
            subtree_trace: first.trace,
            imbalance: detection.imbalance,
            tie_within_tolerance: first.tie,
            x_spread,
        },
    })
}
