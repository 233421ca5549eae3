//! Steady-state hydraulics and single-leak localization for
//! tree-structured water distribution networks.
//!
//! The crate has two halves. The forward half ([`solver`]) simulates a
//! network under one fixed-head source leaf and fixed demands at the
//! remaining leaves, with an optional pressure-dependent leak
//! `D = C * H^beta` inserted anywhere along a pipe, and extracts the
//! leaf measurements such a network would produce. The inverse half
//! ([`localization`], [`uncertainty`]) consumes leaf-only pressure and
//! flow measurements and recovers the leaking pipe, the leak position,
//! the leak parameters, and a first-order error bar on the position.
//!
//! All quantities are SI: meters, cubic meters per second, seconds.

pub mod error;
pub mod hydraulics;
pub mod io;
pub mod localization;
pub mod measurement;
pub mod network;
pub mod solver;
pub mod uncertainty;

pub use error::{Error, Result};
pub use hydraulics::{PhysicalConstants, PipeGeometry};
pub use measurement::{LeafMeasurement, MeasurementSet};
pub use network::{EdgeId, Network, VertexId};
pub use solver::{BoundaryConditions, HydraulicState, LeakSpec};
