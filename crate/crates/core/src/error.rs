use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The container is not a bounded convex set with nonempty interior.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Invalid input data (negative heights or densities, empty sample sets, ...).
    #[error("data error: {0}")]
    Data(String),

    /// The requested grid spacing cannot resolve the domain.
    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("fields live on different grids")]
    GridMismatch,

    /// The projection did not reach its tolerance within the sweep budget.
    #[error("projection did not converge after {sweeps} sweeps (primal change {primal_change:.3e}, kkt residual {kkt_residual:.3e})")]
    NonConvergence {
        sweeps: usize,
        primal_change: f64,
        kkt_residual: f64,
    },

    #[error("problem too large for the dense oracle: {cells} cells (limit {limit})")]
    Size { cells: usize, limit: usize },

    #[error("non-finite value at cell {cell} (t = {time})")]
    NonFinite { cell: usize, time: f64 },

    /// The quantity is not defined for the given input.
    #[error("undefined: {0}")]
    Undefined(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
