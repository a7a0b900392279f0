use thiserror::Error;

/// Errors raised by the geometry, analytics, velocity and flow layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CapError {
    #[error("point at or too close to a pole (x3 = {x3})")]
    Pole { x3: f64 },

    #[error("co-latitude {theta} outside (0, pi)")]
    Domain { theta: f64 },

    #[error("interface co-latitudes must be strictly increasing in (0, pi): {0}")]
    Ordering(String),

    #[error("{0}")]
    Range(String),

    #[error("interface index {index} out of range 1..={max}")]
    Index { index: usize, max: usize },

    #[error("polyline needs at least 2 points, got {0}")]
    DegenerateCurve(usize),

    #[error("ambiguous region assignment: {0}")]
    Topology(String),

    #[error("source point coincides with evaluation point")]
    Singularity,

    #[error("evaluation point within {eps_core} of interface node (distance {distance})")]
    Core { distance: f64, eps_core: f64 },

    #[error("point {id} left the safety band at t = {t}: theta = {theta}")]
    BandExit { id: String, t: f64, theta: f64 },

    #[error("node cap {cap} exhausted (curve {label} needs {needed} nodes)")]
    ResolutionExhausted {
        label: usize,
        needed: usize,
        cap: usize,
    },

    #[error("output: {0}")]
    Output(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    Validation(Vec<String>),
}

pub type Result<T> = std::result::Result<T, CapError>;
