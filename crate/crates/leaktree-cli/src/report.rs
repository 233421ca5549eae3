//! Machine-readable reports and their human-oriented summaries.

use serde::Serialize;

use leaktree::localization::LocalizationResult;
use leaktree::solver::HydraulicState;
use leaktree::uncertainty::EstimateWithCI;
use leaktree::Network;

#[derive(Debug, Serialize)]
pub struct HeadRow {
    pub vertex: usize,
    pub head: f64,
    pub is_leak_vertex: bool,
}

#[derive(Debug, Serialize)]
pub struct FlowRow {
    pub from: usize,
    pub to: usize,
    pub flow: f64,
}

#[derive(Debug, Serialize)]
pub struct LeakStateRow {
    pub vertex: usize,
    pub head: f64,
    pub demand: f64,
}

/// Full dump of a solved state: every head, every signed flow (canonical
/// low-id to high-id orientation), the leak, and solver diagnostics.
#[derive(Debug, Serialize)]
pub struct StateReport {
    pub heads: Vec<HeadRow>,
    pub flows: Vec<FlowRow>,
    pub leak: Option<LeakStateRow>,
    pub transitional_pipes: Vec<[usize; 2]>,
    pub solver_iterations: usize,
    pub solver_residual: f64,
}

pub fn state_report(state: &HydraulicState) -> StateReport {
    let net = state.network();
    let leak_vertex = state.leak.map(|l| l.vertex);
    StateReport {
        heads: net
            .vertices()
            .map(|v| HeadRow {
                vertex: v.0,
                head: state.heads[v.0],
                is_leak_vertex: Some(v) == leak_vertex,
            })
            .collect(),
        flows: net
            .pipes()
            .map(|(e, p)| FlowRow {
                from: p.endpoints.0 .0,
                to: p.endpoints.1 .0,
                flow: state.flows[e.0],
            })
            .collect(),
        leak: state.leak.map(|l| LeakStateRow {
            vertex: l.vertex.0,
            head: l.head,
            demand: l.demand,
        }),
        transitional_pipes: state
            .transitional_pipes
            .iter()
            .map(|e| {
                let p = state.network().pipe(*e).expect("state pipe");
                [p.endpoints.0 .0, p.endpoints.1 .0]
            })
            .collect(),
        solver_iterations: state.diagnostics.iterations,
        solver_residual: state.diagnostics.residual,
    }
}

impl StateReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("record,a,b,value\n");
        for h in &self.heads {
            out.push_str(&format!("head,{},,{}\n", h.vertex, h.head));
        }
        for f in &self.flows {
            out.push_str(&format!("flow,{},{},{}\n", f.from, f.to, f.flow));
        }
        if let Some(l) = &self.leak {
            out.push_str(&format!("leak_head,{},,{}\n", l.vertex, l.head));
            out.push_str(&format!("leak_demand,{},,{}\n", l.vertex, l.demand));
        }
        out
    }

    pub fn summary(&self) -> String {
        match &self.leak {
            Some(l) => format!(
                "solved: {} vertices, leak demand {:.6e} m^3/s at head {:.3} m",
                self.heads.len(),
                l.demand,
                l.head
            ),
            None => format!("solved: {} vertices, no leak", self.heads.len()),
        }
    }
}

/// Result of a localization run, flattened for serialization.
#[derive(Debug, Serialize)]
pub struct LocalizeReport {
    pub pipe: [usize; 2],
    pub reference_vertex: usize,
    pub x: f64,
    pub raw_x: f64,
    pub pipe_length: f64,
    pub exponent: Option<f64>,
    pub constant: Option<f64>,
    pub sigma_x: Option<f64>,
    pub ci_level: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub junction_proximate: bool,
    pub imbalance: f64,
    pub iterations: usize,
    pub tie_within_tolerance: bool,
    pub x_spread: Option<f64>,
}

pub fn localize_report(
    net: &Network,
    result: &LocalizationResult,
    sigma_x: Option<f64>,
    ci: Option<EstimateWithCI>,
) -> LocalizeReport {
    let pipe = net.pipe(result.pipe).expect("identified pipe");
    LocalizeReport {
        pipe: [pipe.endpoints.0 .0, pipe.endpoints.1 .0],
        reference_vertex: result.reference.0,
        x: result.x,
        raw_x: result.raw_x,
        pipe_length: result.pipe_length,
        exponent: result.exponent,
        constant: result.constant,
        sigma_x,
        ci_level: ci.map(|c| c.level),
        ci_lower: ci.map(|c| c.lower),
        ci_upper: ci.map(|c| c.upper),
        junction_proximate: result.junction_proximate,
        imbalance: result.diagnostics.imbalance,
        iterations: result.diagnostics.iterations,
        tie_within_tolerance: result.diagnostics.tie_within_tolerance,
        x_spread: result.diagnostics.x_spread,
    }
}

impl LocalizeReport {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        format!(
            "pipe_a,pipe_b,reference_vertex,x,raw_x,pipe_length,exponent,constant,\
             sigma_x,ci_level,ci_lower,ci_upper,junction_proximate,imbalance,iterations,\
             tie_within_tolerance,x_spread\n\
             {},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            self.pipe[0],
            self.pipe[1],
            self.reference_vertex,
            self.x,
            self.raw_x,
            self.pipe_length,
            opt(self.exponent),
            opt(self.constant),
            opt(self.sigma_x),
            opt(self.ci_level),
            opt(self.ci_lower),
            opt(self.ci_upper),
            self.junction_proximate,
            self.imbalance,
            self.iterations,
            self.tie_within_tolerance,
            opt(self.x_spread),
        )
    }

    pub fn summary(&self) -> String {
        let mut lines = vec![
            format!(
                "leak on pipe ({}, {}): {:.3} m from vertex {} (pipe length {} m)",
                self.pipe[0], self.pipe[1], self.x, self.reference_vertex, self.pipe_length
            ),
            format!("imbalance {:.6e} m^3/s over {} iterations", self.imbalance, self.iterations),
        ];
        if let (Some(beta), Some(c)) = (self.exponent, self.constant) {
            lines.push(format!("leak law: demand = {c:.6e} * head^{beta:.4}"));
        }
        if let (Some(s), Some(lo), Some(hi)) = (self.sigma_x, self.ci_lower, self.ci_upper) {
            lines.push(format!("sigma_x {s:.3} m, 95% interval [{lo:.3}, {hi:.3}] m"));
        }
        if self.junction_proximate {
            lines.push("estimate is junction-proximate; the split-pipe model degenerates there".into());
        }
        if let Some(spread) = self.x_spread {
            lines.push(format!("snapshot disagreement {spread:.3e} m"));
        }
        lines.join("\n")
    }
}
