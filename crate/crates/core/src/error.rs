use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A state handed to a flux/EOS routine violated positivity.
    #[error("invalid state: {component} = {value} at {context}")]
    InvalidState {
        component: &'static str,
        value: f64,
        context: String,
    },

    /// The element mean itself fell below the positivity floors; the run
    /// cannot continue.
    #[error("unrecoverable state in element {element}: {detail}")]
    UnrecoverableState { element: usize, detail: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("mesh topology error: {0}")]
    Topology(String),

    #[error("probe at ({x}, {y}) lies outside the mesh")]
    ProbeOutsideMesh { x: f64, y: f64 },

    #[error("jet mass balance infeasible: {0}")]
    BalanceInfeasible(String),

    #[error("solver aborted at t = {time}: {detail}")]
    SolverAbort { time: f64, detail: String },

    #[error("residual evaluation failed in stage {stage}: {source}")]
    StageFailure {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("environment protocol error: {0}")]
    Protocol(String),

    #[error("training diverged at step {step}: {detail}")]
    TrainingDivergence { step: u64, detail: String },

    #[error("checkpoint incompatible: {0}")]
    Incompatible(String),

    #[error("degenerate sensor selection: {0}")]
    DegenerateSelection(String),

    #[error("ill-conditioned selection system (condition number {cond:.3e})")]
    Conditioning { cond: f64 },

    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid_state(component: &'static str, value: f64, context: impl Into<String>) -> Self {
        Error::InvalidState {
            component,
            value,
            context: context.into(),
        }
    }

    /// Process exit code per the CLI contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } => 2,
            Error::Incompatible(_) => 4,
            _ => 3,
        }
    }
}
