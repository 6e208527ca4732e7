use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("component index {index} out of range for {count} components")]
    ComponentIndex { index: usize, count: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported dimension {0}: only d = 1 and d = 2 are supported")]
    UnsupportedDimension(usize),

    #[error("potential: {0}")]
    Potential(String),

    #[error("Legendre transform: maximizer touched the momentum box |p| <= {p_max}; enlarge the bound")]
    LegendreBoundary { p_max: f64 },

    #[error("Legendre transform is unbounded for a non-convex Hamiltonian")]
    LegendreUnbounded,

    #[error("CFL violation: {0}")]
    Cfl(String),

    #[error("solver diverged at frame {frame}: {detail}")]
    Divergence { frame: usize, detail: String },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("adjoint mass drift {drift:e} at step {step} exceeds 1e-10")]
    MassDrift { step: usize, drift: f64 },

    #[error("adjoint density went negative ({value:e}) at step {step}")]
    NegativeDensity { step: usize, value: f64 },

    #[error("velocity {q:?} outside [-{q_max}, {q_max}]^d; increase Qmax")]
    VelocityTruncation { q: Vec<f64>, q_max: f64 },

    #[error("LP assembly has {atoms} atoms, above the budget of {budget}")]
    AtomBudget { atoms: usize, budget: usize },

    #[error("LP infeasible: phase-one objective {objective:e}, most violated row {row}")]
    Infeasible { objective: f64, row: usize },

    #[error("LP unbounded (entering column {column}); the action should be bounded below")]
    Unbounded { column: usize },

    #[error("LP iteration limit {0} reached")]
    IterationLimit(usize),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
