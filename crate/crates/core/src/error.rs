use thiserror::Error;

use crate::params::ParamId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {field}")]
    NonFinite { field: &'static str },
    #[error("singular mass matrix (determinant {0})")]
    SingularMassMatrix(f64),
    #[error("unknown parameter `{0}` (valid: m_c, m_p, l_p, g, r_mp, R_m, B_p, B_c, K_g, K_m, K_t, J_m, J_p)")]
    UnknownParameter(String),
    #[error("parameter {param} has invalid value {value}")]
    InvalidParameter { param: ParamId, value: f64 },
    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at episode {episode}: {what}")]
    TrainingDiverged { episode: usize, what: &'static str },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
