use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("graph is not connected")]
    Disconnected,

    /// The two largest singular values of a matrix to project are (numerically) zero.
    #[error("degenerate projection onto SO(3): second singular value {0:e}")]
    DegenerateProjection(f64),

    #[error("tangent least squares is ill-posed: {0}")]
    IllPosedSolve(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
