use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    /// The simulator could not keep the per-step log-intensity change below
    /// a quarter threshold at the configured resolution. Carries the step
    /// size that would have been needed.
    #[error("time step constraint unsatisfiable: would need dt <= {required_s:.3e} s (floor {floor_s:.3e} s); soften pattern edges or lower the speed")]
    StepUnsatisfiable { required_s: f64, floor_s: f64 },

    #[error("not enough events: {have} present, {need} required")]
    InsufficientEvents { have: usize, need: usize },

    #[error("insufficient support: {0}")]
    InsufficientSupport(String),

    #[error("no edge found: profile peak {peak:.3e} not significant over median {median:.3e}")]
    NoEdge { peak: f64, median: f64 },

    #[error("solver stalled at relative residual {residual:.3e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}
