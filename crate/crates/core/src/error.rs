use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("input length {got} does not match party count {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("all-click probability is zero; error measures are undefined")]
    DivisionByZeroEfficiency,
    #[error("enumeration of {requested} items exceeds the cap of {cap}")]
    ResourceLimit { requested: u128, cap: u128 },
    #[error("budget exceeded: {requested} items requested, budget is {budget}")]
    BudgetExceeded { requested: u128, budget: u128 },
    #[error("malformed protocol tree: {0}")]
    MalformedTree(String),
    #[error("arity mismatch: {0}")]
    ArityMismatch(String),
    #[error("conversion to a detector model needs shared randomness")]
    FlavorMismatch,
    #[error("rectangle has zero input weight; advantage is undefined")]
    EmptyWeight,
    #[error("rectangle does not meet the valid inputs")]
    EmptyIntersection,
    #[error("delta must satisfy 0 <= delta < 1, got {0}")]
    DeltaOutOfRange(String),
    #[error("moduli differ: {0} vs {1}")]
    ModulusMismatch(u64, u64),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("too few sets: got {got}, need at least {needed}")]
    TooFewSets { got: usize, needed: u64 },
    #[error("{0} is not a power of two")]
    NotPowerOfTwo(u64),
    #[error("linear program is infeasible")]
    Infeasible,
}
