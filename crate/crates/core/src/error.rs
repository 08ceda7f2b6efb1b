use thiserror::Error;

/// Errors raised by the model, jet and genericity computations.
///
/// Variant names double as the machine-readable error names reported by the
/// command-line front end.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("DegenerateInput: {0}")]
    DegenerateInput(String),
    #[error("InvalidSpec: {0}")]
    InvalidSpec(String),
    #[error("InvalidSystem: {0}")]
    InvalidSystem(String),
    #[error("NotOnBoundary: residual {residual:e} exceeds threshold {threshold:e}")]
    NotOnBoundary { residual: f64, threshold: f64 },
    #[error("OrderBudgetExceeded: requested order {requested}, handle supports {max}")]
    OrderBudgetExceeded { requested: usize, max: usize },
    #[error("NoFiniteOrder: all chain entries vanish up to order {0}")]
    NoFiniteOrder(usize),
    #[error("PremiseViolated: {0}")]
    PremiseViolated(String),
    #[error("RankDeficient: gradient rank {rank} < {expected} at {point:?}")]
    RankDeficient {
        point: Vec<f64>,
        rank: usize,
        expected: usize,
    },
    #[error("Unrealizable: {0}")]
    Unrealizable(String),
    #[error("RadiusTooLarge: {0}")]
    RadiusTooLarge(String),
}

impl Error {
    /// The bare variant name, e.g. `"NotOnBoundary"`.
    pub fn name(&self) -> &'static str {
        match self {
            Error::DegenerateInput(_) => "DegenerateInput",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::InvalidSystem(_) => "InvalidSystem",
            Error::NotOnBoundary { .. } => "NotOnBoundary",
            Error::OrderBudgetExceeded { .. } => "OrderBudgetExceeded",
            Error::NoFiniteOrder(_) => "NoFiniteOrder",
            Error::PremiseViolated(_) => "PremiseViolated",
            Error::RankDeficient { .. } => "RankDeficient",
            Error::Unrealizable(_) => "Unrealizable",
            Error::RadiusTooLarge(_) => "RadiusTooLarge",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
