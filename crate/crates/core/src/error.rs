use thiserror::Error;

use crate::vecmath::Vec3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("singular 3x3 system (det = {det:e})")]
    SingularMatrix { det: f64 },

    #[error("field domain violated at {x:?}: |B1| = {b1_norm:e} below floor {floor:e}")]
    FieldDomain { x: Vec3, b1_norm: f64, floor: f64 },

    #[error("magnetic field vanishes")]
    ZeroField,

    #[error("non-finite or runaway state at step {step} (t = {t:e})")]
    NonFinite { step: usize, t: f64 },

    #[error("time grids differ: {0}")]
    GridMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
