use thiserror::Error;

/// Errors produced by the numerical kernels, solvers and report writers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("singular matrix: zero pivot in column {column}")]
    Singular { column: usize },

    #[error("{method} did not converge after {iterations} iterations (last residual {residual:.3e})")]
    NonConvergence {
        method: &'static str,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("warm start diverged after {iterations} iterations (change {change:.3e}); use a coarser grid or a larger damping")]
    WarmStartDiverged { iterations: usize, change: f64 },

    #[error("stage {stage}: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    /// `line` is 1-based; 0 marks overrides and whole-settings checks.
    #[error("{}", config_message(*.line, .message))]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn config_message(line: usize, message: &str) -> String {
    if line == 0 {
        format!("config: {message}")
    } else {
        format!("config line {line}: {message}")
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { what, expected, found })
    }
}
