use thiserror::Error;

/// Failures raised by the expression engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SymError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at byte {pos}")]
    UnknownIdentifier { name: String, pos: usize },
    #[error("unsupported construct: {0}")]
    Unsupported(String),
    #[error("derivative order {order} of `{func}` exceeds the supported maximum {max}")]
    DerivativeOrder { func: String, order: u32, max: u32 },
    #[error("division by zero")]
    DivisionByZero,
    #[error("logarithm of a non-positive quantity: {0}")]
    LogDomain(String),
    #[error("domain violation: {0}")]
    Domain(String),
    #[error("unbound symbol `{0}` during evaluation")]
    Unbound(String),
    #[error("inadmissible parameter: {0}")]
    Inadmissible(String),
}

pub type Result<T> = std::result::Result<T, SymError>;
