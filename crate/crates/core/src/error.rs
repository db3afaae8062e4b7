use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside the domain where the model is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller-side precondition was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error(
        "propagation did not converge within {refinements} step halvings \
         (last two fidelities {previous:.15} and {last:.15})"
    )]
    Convergence {
        refinements: usize,
        previous: f64,
        last: f64,
    },

    #[error("at landscape cell (offset #{offset_index} = {offset}, phase #{phase_index} = {phase}): {source}")]
    GridPoint {
        offset_index: usize,
        phase_index: usize,
        offset: f64,
        phase: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(
        "field point ({x}, {y}, {z}) um lies within the trace of the filament \
         of radius {radius} um at z = {layer_z} um"
    )]
    Singularity {
        x: f64,
        y: f64,
        z: f64,
        radius: f64,
        layer_z: f64,
    },

    #[error(
        "energy-weight tuning found no weight with the peak in range; last bracket \
         [{lo}, {hi}] gave peaks {peak_lo} and {peak_hi}"
    )]
    Tuning {
        lo: f64,
        hi: f64,
        peak_lo: f64,
        peak_hi: f64,
    },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status for this error: 1 validation, 2 input parse, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Contract(_) | Error::Singularity { .. } => 1,
            Error::Parse { .. } | Error::Io(_) | Error::Json(_) => 2,
            Error::Convergence { .. } | Error::GridPoint { .. } | Error::Tuning { .. } | Error::Fit(_) => 3,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }
}
