//! The scenario file: a TOML document describing one network, its
//! boundary conditions, and optionally a leak, a noise level, physical
//! constant overrides, and a seed. Unknown keys are rejected so typos
//! fail loudly. All quantities are SI; no unit inference.
//!
//! ```toml
//! seed = 42
//!
//! [network]
//! vertices = 2
//!
//! [[network.pipes]]
//! endpoints = [0, 1]
//! length = 1000.0
//! diameter = 0.3
//! roughness = 1.5e-4
//! minor_loss = 0.0
//!
//! [boundary]
//! source = 0
//! source_head = 50.0
//!
//! [boundary.demands]
//! 1 = -0.05
//!
//! [leak]          # optional; distance measured from pipe[0]
//! pipe = [0, 1]
//! distance = 400.0
//! constant = 1e-3
//! exponent = 0.5
//!
//! [noise]         # optional; uniform across leaves
//! sigma_head = 0.01
//! sigma_flow = 1e-5
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hydraulics::{PhysicalConstants, PipeGeometry};
use crate::network::{Network, VertexId};
use crate::solver::{BoundaryConditions, LeakSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    constants: Option<ConstantsDoc>,
    network: NetworkDoc,
    boundary: BoundaryDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    leak: Option<LeakDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise: Option<NoiseDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantsDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gravity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kinematic_viscosity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDoc {
    vertices: usize,
    pipes: Vec<PipeDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PipeDoc {
    endpoints: [usize; 2],
    length: f64,
    diameter: f64,
    roughness: f64,
    #[serde(default)]
    minor_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundaryDoc {
    source: usize,
    source_head: f64,
    /// TOML table keys are strings; these are leaf ids.
    demands: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LeakDoc {
    /// Pipe endpoints; the leak distance is measured from the first.
    pipe: [usize; 2],
    distance: f64,
    constant: f64,
    exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseDoc {
    #[serde(default)]
    sigma_head: f64,
    #[serde(default)]
    sigma_flow: f64,
}

/// Per-leaf channel noise, uniform across leaves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioNoise {
    pub sigma_head: f64,
    pub sigma_flow: f64,
}

/// A fully validated scenario: domain objects ready for the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub network: Network,
    pub boundary: BoundaryConditions,
    pub leak: Option<LeakSpec>,
    pub noise: Option<ScenarioNoise>,
    pub constants: PhysicalConstants,
    pub seed: Option<u64>,
}

/// Parses and validates a scenario document, reporting all problems it
/// can find rather than the first one.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let doc: ScenarioDoc =
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let mut problems: Vec<String> = Vec::new();

    let defaults = PhysicalConstants::default();
    let constants = PhysicalConstants {
        gravity: doc.constants.as_ref().and_then(|c| c.gravity).unwrap_or(defaults.gravity),
        kinematic_viscosity: doc
            .constants
            .as_ref()
            .and_then(|c| c.kinematic_viscosity)
            .unwrap_or(defaults.kinematic_viscosity),
    };
    if let Err(e) = constants.validate() {
        problems.push(format!("constants: {e}"));
    }

    let pipes: Vec<((usize, usize), PipeGeometry)> = doc
        .network
        .pipes
        .iter()
        .map(|p| {
            (
                (p.endpoints[0], p.endpoints[1]),
                PipeGeometry {
                    length: p.length,
                    diameter: p.diameter,
                    roughness: p.roughness,
                    minor_loss: p.minor_loss,
                },
            )
        })
        .collect();
    let violations = Network::validate_parts(doc.network.vertices, &pipes);
    for v in &violations {
        problems.push(format!("network: {v}"));
    }
    if !problems.is_empty() {
        return Err(Error::ScenarioInvalid(problems));
    }
    let network = Network::new(doc.network.vertices, pipes)
        .expect("parts validated above");

    let mut demands = BTreeMap::new();
    for (key, value) in &doc.boundary.demands {
        match key.parse::<usize>() {
            Ok(v) => {
                demands.insert(VertexId(v), *value);
            }
            Err(_) => problems.push(format!(
                "boundary.demands: key {key:?} is not a vertex id"
            )),
        }
    }
    let boundary =
        BoundaryConditions::new(VertexId(doc.boundary.source), doc.boundary.source_head, demands);
    if let Err(e) = boundary.validate(&network) {
        problems.push(format!("boundary: {e}"));
    }

    let leak = match &doc.leak {
        None => None,
        Some(l) => {
            let from = VertexId(l.pipe[0]);
            let to = VertexId(l.pipe[1]);
            match network.edge_between(from, to) {
                None => {
                    problems.push(format!(
                        "leak: no pipe between vertices {} and {}",
                        l.pipe[0], l.pipe[1]
                    ));
                    None
                }
                Some(edge) => {
                    let spec = LeakSpec {
                        pipe: edge,
                        from,
                        distance: l.distance,
                        constant: l.constant,
                        exponent: l.exponent,
                    };
                    if let Err(e) = spec.validate(&network) {
                        problems.push(format!("leak: {e}"));
                    }
                    Some(spec)
                }
            }
        }
    };

    let noise = match &doc.noise {
        None => None,
        Some(n) => {
            if n.sigma_head < 0.0 || n.sigma_flow < 0.0 {
                problems.push("noise: standard deviations must be non-negative".into());
            }
            Some(ScenarioNoise { sigma_head: n.sigma_head, sigma_flow: n.sigma_flow })
        }
    };

    if !problems.is_empty() {
        return Err(Error::ScenarioInvalid(problems));
    }
    Ok(Scenario { network, boundary, leak, noise, constants, seed: doc.seed })
}

/// Renders a scenario back into the document format. Parsing the output
/// reproduces the scenario exactly.
pub fn serialize_scenario(scenario: &Scenario) -> String {
    let constants = if scenario.constants == PhysicalConstants::default() {
        None
    } else {
        Some(ConstantsDoc {
            gravity: Some(scenario.constants.gravity),
            kinematic_viscosity: Some(scenario.constants.kinematic_viscosity),
        })
    };
    let doc = ScenarioDoc {
        seed: scenario.seed,
        constants,
        network: NetworkDoc {
            vertices: scenario.network.vertex_count(),
            pipes: scenario
                .network
                .pipes()
                .map(|(_, p)| PipeDoc {
                    endpoints: [p.endpoints.0 .0, p.endpoints.1 .0],
                    length: p.geometry.length,
                    diameter: p.geometry.diameter,
                    roughness: p.geometry.roughness,
                    minor_loss: p.geometry.minor_loss,
                })
                .collect(),
        },
        boundary: BoundaryDoc {
            source: scenario.boundary.source.0,
            source_head: scenario.boundary.source_head,
            demands: scenario
                .boundary
                .demands
                .iter()
                .map(|(v, d)| (v.0.to_string(), *d))
                .collect(),
        },
        leak: scenario.leak.map(|l| {
            let pipe = scenario.network.pipe(l.pipe).expect("leak pipe exists");
            let other = pipe.opposite(l.from).expect("leak endpoint on pipe");
            LeakDoc {
                pipe: [l.from.0, other.0],
                distance: l.distance,
                constant: l.constant,
                exponent: l.exponent,
            }
        }),
        noise: scenario.noise.map(|n| NoiseDoc {
            sigma_head: n.sigma_head,
            sigma_flow: n.sigma_flow,
        }),
    };
    toml::to_string_pretty(&doc).expect("scenario serializes")
}
