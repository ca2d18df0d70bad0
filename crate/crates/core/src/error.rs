use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {kind} warp parameter: {detail}")]
    InvalidWarpParameter { kind: &'static str, detail: String },

    #[error("warp `{0}` does not satisfy f(0)=0, f'(0)=1 and cannot be used for the startup solve")]
    NotStartupAdmissible(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate state at r = {r}: energy density {theta} is below the floor")]
    DegenerateState { r: f64, theta: f64 },

    #[error("interval [{lo}, {hi}] is not contained in the profile range [{grid_lo}, {grid_hi}]")]
    Range {
        lo: f64,
        hi: f64,
        grid_lo: f64,
        grid_hi: f64,
    },

    #[error("fixed-point iteration did not contract: epsilon fell to {epsilon:e} after {iterations} iterations (last sup-norm change {last_change:e})")]
    NonContraction {
        epsilon: f64,
        iterations: usize,
        last_change: f64,
    },

    #[error("local solution residual {residual:e} at r = {r:e} exceeds tolerance {tol:e}")]
    ResidualTooLarge { r: f64, residual: f64, tol: f64 },

    #[error("alpha' = {alpha_prime:e} <= 0 at r = {r:e}: positive solutions are increasing, so this is an integration failure")]
    MonotonicityViolation { r: f64, alpha_prime: f64 },

    #[error("invalid start state: {0}")]
    InvalidStart(String),

    #[error("analysis window [{lo}, {hi}] holds {nodes} nodes, at least {required} required")]
    WindowTooShort {
        lo: f64,
        hi: f64,
        nodes: usize,
        required: usize,
    },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("wrong family: {0}")]
    WrongFamily(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("unsupported family: {0}")]
    UnsupportedFamily(String),

    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("malformed profile data: {0}")]
    Profile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
