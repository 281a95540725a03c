use thiserror::Error;

/// Errors raised by the invariant computations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not symplectic (defect {defect:.3e})")]
    NotSymplectic { defect: f64 },
    #[error("eigenvalue clusters too close to resolve (separation {separation:.3e}); tolerance too coarse")]
    ClusterAmbiguous { separation: f64 },
    #[error("iteration k = {k} is not admissible")]
    NotAdmissible { k: usize },
    #[error("spectral splitting failed: singular value {value:.3e} sits at the tolerance boundary")]
    SplitFailed { value: f64 },
    #[error("invalid symplectic path: {0}")]
    InvalidPath(String),
    #[error("winding unresolved after {samples} samples")]
    WindingUnresolved { samples: usize },
    #[error("endpoint is degenerate (eigenvalue within {distance:.3e} of 1)")]
    DegenerateEndpoint { distance: f64 },
    #[error("path is not a loop (endpoint defect {defect:.3e})")]
    NotALoop { defect: f64 },
    #[error("index is not an integer: {value}")]
    NonIntegerIndex { value: f64 },
    #[error("trajectory left the domain at t = {t}")]
    LeftDomain { t: f64 },
    #[error("integrator step failure at t = {t}")]
    StepFailure { t: f64 },
    #[error("loop is not closed (gap {gap:.3e})")]
    NotClosed { gap: f64 },
    #[error("psi is not invertible on the box")]
    NotInvertibleOnBox,
    #[error("map is not C1-close to the identity on the box (|D phi - I| = {norm:.3e})")]
    NotC1Small { norm: f64 },
    #[error("closedness defect {defect:.3e} exceeds tolerance")]
    ClosednessDefect { defect: f64 },
    #[error("another critical value lies in the sublevel window")]
    CriticalValueInWindow,
    #[error("local Morse homology did not stabilize: {0}")]
    NotStabilized(String),
    #[error("critical point is not isolated: {0}")]
    NotIsolated(String),
    #[error("no local Floer route available: {0}")]
    RouteUnavailable(String),
    #[error("hypothesis failed: {0}")]
    HypothesisFailed(String),
    #[error("degree shift is ambiguous: {0}")]
    ShiftAmbiguous(String),
    #[error("linearization is not the identity (defect {defect:.3e})")]
    LinearizationNotIdentity { defect: f64 },
    #[error("unknown formula `{0}`")]
    UnknownFormula(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
