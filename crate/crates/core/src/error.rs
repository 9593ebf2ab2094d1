use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("illegal query: {0}")]
    IllegalQuery(String),

    #[error("trajectory budget exceeded: total requested length {total} > budget {budget}")]
    BudgetExceeded { total: usize, budget: usize },

    #[error("numerical method failed: {0}")]
    Numerical(String),

    #[error("rank-deficient feature basis at step {step}")]
    DeficientBasis { step: usize },

    #[error("estimate does not cover probe action {0}")]
    MissingProbe(String),

    #[error("interaction not permitted in this environment mode: {0}")]
    ModeViolation(String),

    #[error("answer kind does not match the task: {0}")]
    AnswerKind(String),
}

pub type Result<T> = std::result::Result<T, Error>;
