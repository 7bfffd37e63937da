use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("register of {requested} qubits exceeds the cap of {cap}")]
    QubitCap { requested: usize, cap: usize },
    #[error("qubit {qubit} out of range for a {num_qubits}-qubit register")]
    QubitOutOfRange { qubit: usize, num_qubits: usize },
    #[error("qubit {0} listed twice")]
    DuplicateQubit(usize),
    #[error("operator is not unitary (max deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid measurement operator: {0}")]
    InvalidOperator(String),
    #[error("measurement is incomplete (deviation {deviation:.3e})")]
    Incomplete { deviation: f64 },
    #[error("outcome {outcome} has probability {probability:.3e}, below the forcing threshold")]
    ZeroProbability { outcome: usize, probability: f64 },
    #[error("keep list is empty")]
    EmptyKeep,
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("invalid deformation profile: {0}")]
    InvalidProfile(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown format `{0}`")]
    UnknownFormat(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("edge {0} does not exist")]
    MissingEdge(usize),
    #[error("bond list has {found} entries for {expected} edges")]
    BondListLength { expected: usize, found: usize },
    #[error("edge {0} is already fused")]
    AlreadyFused(usize),
    #[error("graph has a cycle; defects cannot be pushed to the boundary")]
    CycleDetected,
    #[error("ring exhausted after {consumed} measurements with residual defect {residual}")]
    RingExhausted { consumed: usize, residual: char },
    #[error("outcome is frustrated on {cycles} independent cycle(s)")]
    Frustrated { cycles: usize },
    #[error("logical frame inconsistent with outcome: {0}")]
    FrameInconsistent(String),
    #[error("unclassifiable decoration: {0}")]
    Unclassifiable(String),
    #[error("unsupported graph: {0}")]
    Unsupported(String),
    #[error("rejection rate {rate:.3} after {draws} draws exceeds 50%")]
    RejectionRate { rate: f64, draws: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
