//! Boris-type integrators for charged particles in strong magnetic fields,
//! with the field models, geometric helpers and error diagnostics used to
//! study their large-stepsize behaviour.

pub mod diagnostics;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod integrators;
pub mod vecmath;

pub use error::{Error, Result};
pub use fields::{FieldModel, FieldSource, FieldSpec};
pub use integrators::{integrate, IntegratorConfig, Method, ParticleState, Trajectory};
pub use vecmath::{Mat3, Vec3};
