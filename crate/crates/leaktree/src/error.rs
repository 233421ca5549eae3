//! Crate-wide error and result types.

use thiserror::Error;

use crate::network::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid pipe geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid physical constants: {0}")]
    InvalidConstants(String),

    /// The resistance derivative is discontinuous at the laminar and
    /// turbulent regime seams; callers are expected to nudge the flow
    /// by an ulp-scale amount and retry.
    #[error("resistance derivative evaluated exactly at a regime boundary (Re = {reynolds})")]
    RegimeBoundary { reynolds: f64 },

    #[error("invalid network:{}", .0.iter().map(|v| format!("\n  - {v}")).collect::<String>())]
    InvalidNetwork(Vec<Violation>),

    #[error("unknown vertex {0}")]
    UnknownVertex(usize),

    #[error("unknown pipe {0}")]
    UnknownPipe(usize),

    #[error("vertices {0} and {1} are not adjacent")]
    NotAdjacent(usize, usize),

    #[error("vertex {0} is a leaf; the operation requires an interior vertex")]
    NotInterior(usize),

    #[error("leaf {leaf} is not on the {side} side of vertex {vertex}")]
    LeafNotOnSide { leaf: usize, vertex: usize, side: usize },

    #[error("invalid boundary conditions: {0}")]
    InvalidBoundary(String),

    #[error("invalid leak specification: {0}")]
    InvalidLeak(String),

    /// The hydraulic model only describes pressurized networks; a
    /// non-positive head means the scenario drains the pipe.
    #[error("infeasible pressure: head {head} m at vertex {vertex}")]
    InfeasiblePressure { vertex: usize, head: f64 },

    #[error("inferred leak head {head} m is not positive")]
    InfeasibleLeakHead { head: f64 },

    #[error(
        "leak residual has no sign change over [{lo}, {hi}] (r(lo) = {r_lo}, r(hi) = {r_hi})"
    )]
    BracketFailure { lo: f64, hi: f64, r_lo: f64, r_hi: f64 },

    #[error("root finder did not converge after {iterations} iterations (residual {residual})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("leak residual is not monotone decreasing: r({d_low}) = {r_low} vs r({d_high}) = {r_high}")]
    NonMonotoneResidual { d_low: f64, r_low: f64, d_high: f64, r_high: f64 },

    #[error("measurements do not cover leaves {missing:?}")]
    IncompleteCoverage { missing: Vec<usize> },

    #[error("measurements cover {extra:?} which are not leaves of the network")]
    ExtraneousCoverage { extra: Vec<usize> },

    /// `U_{0λ} − U_{λ1}` below resolution: either there is no leak or
    /// the leak demand is at measurement resolution.
    #[error("degenerate head-loss denominator {denominator} (threshold {threshold})")]
    DegenerateDenominator { denominator: f64, threshold: f64 },

    #[error("estimated position {x} m lies outside pipe of length {length} m")]
    EstimateOutOfRange { x: f64, length: f64 },

    #[error("insufficient excitation between snapshots: {0}")]
    InsufficientExcitation(String),

    #[error("no leak detected (imbalance {imbalance} m^3/s, threshold {threshold} m^3/s)")]
    NoLeakDetected { imbalance: f64, threshold: f64 },

    #[error(
        "ambiguous subtree selection at vertex {pivot}: apparent heads {first} and {second} differ by less than {tolerance}"
    )]
    AmbiguousSubtree { pivot: usize, first: f64, second: f64, tolerance: f64 },

    #[error("snapshots identify different pipes ({first} vs {second})")]
    SnapshotMismatch { first: usize, second: usize },

    #[error("invalid measurement set: {0}")]
    InvalidMeasurement(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("scenario file invalid:{}", .0.iter().map(|v| format!("\n  - {v}")).collect::<String>())]
    ScenarioInvalid(Vec<String>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
