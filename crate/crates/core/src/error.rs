use thiserror::Error;

/// Errors produced anywhere in the analysis pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),

    #[error("topology error: {0}")]
    Topology(String),

    #[error("kron reduction failed: interior block singular (buses {buses:?})")]
    Reduction { buses: Vec<u32> },

    #[error("power flow did not converge after {iterations} iterations (mismatch {mismatch:.3e} p.u.)")]
    Divergence { iterations: usize, mismatch: f64 },

    #[error("device consistency error: {0}")]
    Consistency(String),

    #[error("unsupported regime: {0}")]
    Regime(String),

    #[error("defective pencil: {0}")]
    Defective(String),

    #[error("degenerate decomposition: {0}")]
    Degenerate(String),

    #[error("bus pair ({observe}, {disturb}) is unobservable or uncontrollable in mode {mode}")]
    Unobservable {
        mode: usize,
        observe: u32,
        disturb: u32,
    },

    #[error("gSCR bridge violated: {0}")]
    Bridge(String),

    #[error("integrator error: {0}")]
    Integrator(String),

    #[error("division by zero: {0}")]
    Division(String),

    #[error("i/o error at {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input(_) | Error::Topology(_) | Error::Consistency(_) => 1,
            Error::Io { .. } => 3,
            _ => 2,
        }
    }

    /// Prefixes the message with `ctx`, keeping the variant (and exit code).
    pub fn context(self, ctx: &str) -> Self {
        let p = |m: String| format!("{ctx}: {m}");
        match self {
            Error::Input(m) => Error::Input(p(m)),
            Error::Topology(m) => Error::Topology(p(m)),
            Error::Consistency(m) => Error::Consistency(p(m)),
            Error::Regime(m) => Error::Regime(p(m)),
            Error::Defective(m) => Error::Defective(p(m)),
            Error::Degenerate(m) => Error::Degenerate(p(m)),
            Error::Bridge(m) => Error::Bridge(p(m)),
            Error::Integrator(m) => Error::Integrator(p(m)),
            Error::Division(m) => Error::Division(p(m)),
            other => other,
        }
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
