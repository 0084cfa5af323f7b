use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("box lengths must be positive and finite, got {0:?}")]
    InvalidBox([f64; 3]),
    #[error("only fully periodic boxes are supported")]
    NonPeriodic,
    #[error("cutoff {cutoff} Å (incl. skin) must be below half the smallest box edge ({half_edge} Å)")]
    CutoffTooLarge { cutoff: f64, half_edge: f64 },
    #[error("ghost extent {extent} Å exceeds half the box ({half_edge} Å)")]
    ExtentTooLarge { extent: f64, half_edge: f64 },
    #[error("ghost extent {extent} Å is smaller than the interaction range {required} Å")]
    ExtentTooSmall { extent: f64, required: f64 },
    #[error("invalid node grid {0:?}")]
    InvalidTopology([usize; 3]),
    #[error("replication would create {requested} particles (limit {limit})")]
    TooManyParticles { requested: usize, limit: usize },
    #[error("replication factors must be >= 1, got {0:?}")]
    InvalidFactors([usize; 3]),
    #[error("could not place molecule {molecule} after {attempts} attempts")]
    PackingFailed { molecule: usize, attempts: usize },
    #[error("inconsistent system: {0}")]
    InvalidSystem(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("payload of {got} lanes exceeds {mode} capacity of {capacity}")]
    OversizedPayload { mode: &'static str, got: usize, capacity: usize },
    #[error("payload lane type does not match chain mode {0}")]
    PayloadKind(&'static str),
    #[error("chain {0} already has a reduction in flight")]
    ChainBusy(usize),
    #[error("chain {0} has no reduction in flight")]
    ChainIdle(usize),
    #[error("unknown chain {0}")]
    UnknownChain(usize),
    #[error("chain expects {expected} contributions, got {got}")]
    Participation { expected: usize, got: usize },
    #[error("node {node} would take part in {requested} chains (limit {limit})")]
    ChainLimit { node: usize, requested: usize, limit: usize },
    #[error("chain configuration: {0}")]
    ChainConfig(String),
    #[error("value {value} exceeds quantization bound {v_max}")]
    QuantOverflow { value: f64, v_max: f64 },
    #[error("{k} summands violate the carry-free lane bound (max {max})")]
    CarryBound { k: usize, max: usize },
    #[error("invalid quantization spec: {0}")]
    QuantSpec(String),
    #[error("deadlock: {0}")]
    Deadlock(String),
    #[error("message type mismatch from {src} to {dst} in phase '{phase}'")]
    TypeMismatch { src: String, dst: String, phase: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DftError {
    #[error("duplicate index {0} in partial DFT")]
    DuplicateIndex(usize),
    #[error("index {index} out of range for N = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("length mismatch: {0}")]
    Shape(String),
    #[error("mesh {mesh:?} on node grid {grid:?} leaves fewer than {min} points per node along an axis")]
    BrickTooSmall { mesh: [usize; 3], grid: [usize; 3], min: usize },
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElectrostaticsError {
    #[error("invalid Ewald parameters: {0}")]
    Params(String),
    #[error("particle {index} at {pos:?} is outside the box after wrapping")]
    OutsideBox { index: usize, pos: [f64; 3] },
    #[error(transparent)]
    Dft(#[from] DftError),
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("force term '{0}' was not computed")]
    MissingTerm(&'static str),
    #[error("atom {0} is not a Wannier-binding species")]
    NotBinding(usize),
    #[error("invalid model parameters: {0}")]
    Params(String),
    #[error("array length mismatch: {0}")]
    Shape(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BalanceError {
    #[error("migrated atom {atom} is not in node {node}'s ghost region (one-hop violation)")]
    NotInGhostRegion { atom: usize, node: usize },
    #[error("plan is infeasible; fall back to intra-node balancing")]
    Infeasible,
    #[error("count vectors have mismatched lengths ({0} vs {1})")]
    Length(usize, usize),
    #[error("counts must be non-empty")]
    Empty,
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Dft(#[from] DftError),
    #[error(transparent)]
    Electrostatics(#[from] ElectrostaticsError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Balance(#[from] BalanceError),
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("simulation aborted at step {step}: {reason}")]
    Aborted { step: u64, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
