//! Magnetic and electric field models.
//!
//! A [`FieldModel`] wraps an ε-free source field `B₁` together with the
//! small parameter ε, so that the field seen by the particle is
//! `B(x) = B₁(x)/ε`. Sources that do not supply an analytic Jacobian fall
//! back to central finite differences.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecmath::{Mat3, Vec3};

/// An ε-free field source: `B₁`, optionally its Jacobian, and the scalar
/// potential `φ` with `E = −∇φ`.
pub trait FieldSource: Send + Sync {
    fn name(&self) -> &str;

    fn b1(&self, x: Vec3) -> Vec3;

    /// Analytic Jacobian `∂B₁ᵢ/∂xⱼ` (row i, column j), if available.
    fn b1_jacobian(&self, _x: Vec3) -> Option<Mat3> {
        None
    }

    fn potential(&self, x: Vec3) -> f64;

    /// `E = −∇φ`. The default differentiates the potential numerically.
    fn electric(&self, x: Vec3) -> Vec3 {
        -central_gradient(|y| self.potential(y), x)
    }
}

/// Finite-difference step for component `xi`.
#[inline]
pub fn fd_step(xi: f64) -> f64 {
    1e-6_f64.max(1e-6 * xi.abs())
}

/// Central-difference gradient of a scalar function.
pub fn central_gradient(f: impl Fn(Vec3) -> f64, x: Vec3) -> Vec3 {
    let mut g = [0.0; 3];
    for (j, gj) in g.iter_mut().enumerate() {
        let d = fd_step(x[j]);
        let mut e = [0.0; 3];
        e[j] = d;
        let e = Vec3::from(e);
        *gj = (f(x + e) - f(x - e)) / (2.0 * d);
    }
    Vec3::from(g)
}

/// Central-difference Jacobian of a vector function, `J[i][j] = ∂fᵢ/∂xⱼ`.
pub fn central_jacobian(f: impl Fn(Vec3) -> Vec3, x: Vec3) -> Mat3 {
    let mut cols = [Vec3::ZERO; 3];
    for (j, col) in cols.iter_mut().enumerate() {
        let d = fd_step(x[j]);
        let mut e = [0.0; 3];
        e[j] = d;
        let e = Vec3::from(e);
        *col = (f(x + e) - f(x - e)) / (2.0 * d);
    }
    Mat3::from_columns(cols[0], cols[1], cols[2])
}

/// Constant magnetic field `B₁` with a constant electric field `E`
/// (potential `φ = −E·x`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformField {
    pub b1: Vec3,
    pub e: Vec3,
}

impl FieldSource for UniformField {
    fn name(&self) -> &str {
        "uniform"
    }
    fn b1(&self, _x: Vec3) -> Vec3 {
        self.b1
    }
    fn b1_jacobian(&self, _x: Vec3) -> Option<Mat3> {
        Some(Mat3::ZERO)
    }
    fn potential(&self, x: Vec3) -> f64 {
        -self.e.dot(x)
    }
    fn electric(&self, _x: Vec3) -> Vec3 {
        self.e
    }
}

/// Axisymmetric tokamak-like field without electric field:
///
/// `B = ( −(2x₂ + x₁x₃)/(2R²), (2x₁ − x₂x₃)/(2R²), (R − 1)/(2R) )`,
/// `R = √(x₁² + x₂²)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TokamakField;

impl FieldSource for TokamakField {
    fn name(&self) -> &str {
        "tokamak"
    }

    fn b1(&self, x: Vec3) -> Vec3 {
        let s = x.x * x.x + x.y * x.y;
        let r = s.sqrt();
        Vec3::new(
            -(2.0 * x.y + x.x * x.z) / (2.0 * s),
            (2.0 * x.x - x.y * x.z) / (2.0 * s),
            (r - 1.0) / (2.0 * r),
        )
    }

    fn b1_jacobian(&self, x: Vec3) -> Option<Mat3> {
        let (x1, x2, x3) = (x.x, x.y, x.z);
        let s = x1 * x1 + x2 * x2;
        let r = s.sqrt();
        let s2 = 2.0 * s * s;
        // Quotient rule on f/(2S) with S = R²: (f' S − f S') / (2 S²).
        let f1 = -(2.0 * x2 + x1 * x3);
        let f2 = 2.0 * x1 - x2 * x3;
        let r3 = 2.0 * r * r * r;
        Some(Mat3::from_rows([
            [
                (-x3 * s - f1 * 2.0 * x1) / s2,
                (-2.0 * s - f1 * 2.0 * x2) / s2,
                -x1 / (2.0 * s),
            ],
            [
                (2.0 * s - f2 * 2.0 * x1) / s2,
                (-x3 * s - f2 * 2.0 * x2) / s2,
                -x2 / (2.0 * s),
            ],
            [x1 / r3, x2 / r3, 0.0],
        ]))
    }

    fn potential(&self, _x: Vec3) -> f64 {
        0.0
    }

    fn electric(&self, _x: Vec3) -> Vec3 {
        Vec3::ZERO
    }
}

/// Linear field `B₁ = ½(x₂ − x₃, x₁ + x₃, x₂ − x₁)` with the quartic
/// potential `φ = x₁³ − x₂³ + x₁⁴/5 + x₂⁴ + x₃⁴`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CubicPotentialField;

impl FieldSource for CubicPotentialField {
    fn name(&self) -> &str {
        "cubic-potential"
    }

    fn b1(&self, x: Vec3) -> Vec3 {
        Vec3::new(x.y - x.z, x.x + x.z, x.y - x.x) * 0.5
    }

    fn b1_jacobian(&self, _x: Vec3) -> Option<Mat3> {
        Some(Mat3::from_rows([[0.0, 0.5, -0.5], [0.5, 0.0, 0.5], [-0.5, 0.5, 0.0]]))
    }

    fn potential(&self, x: Vec3) -> f64 {
        x.x.powi(3) - x.y.powi(3) + x.x.powi(4) / 5.0 + x.y.powi(4) + x.z.powi(4)
    }

    fn electric(&self, x: Vec3) -> Vec3 {
        -Vec3::new(
            3.0 * x.x * x.x + 0.8 * x.x.powi(3),
            -3.0 * x.y * x.y + 4.0 * x.y.powi(3),
            4.0 * x.z.powi(3),
        )
    }
}

type VecFn = Box<dyn Fn(Vec3) -> Vec3 + Send + Sync>;
type ScalarFn = Box<dyn Fn(Vec3) -> f64 + Send + Sync>;

/// A user-supplied field given by closures. Without an explicit `E`, the
/// electric field is the numerical gradient of the potential; the Jacobian
/// of `B₁` is always numerical.
pub struct CustomField {
    name: String,
    b1: VecFn,
    potential: ScalarFn,
    electric: Option<VecFn>,
}

impl CustomField {
    pub fn new(
        name: impl Into<String>,
        b1: impl Fn(Vec3) -> Vec3 + Send + Sync + 'static,
        potential: impl Fn(Vec3) -> f64 + Send + Sync + 'static,
    ) -> Self {
        CustomField {
            name: name.into(),
            b1: Box::new(b1),
            potential: Box::new(potential),
            electric: None,
        }
    }

    pub fn with_electric(mut self, e: impl Fn(Vec3) -> Vec3 + Send + Sync + 'static) -> Self {
        self.electric = Some(Box::new(e));
        self
    }
}

impl FieldSource for CustomField {
    fn name(&self) -> &str {
        &self.name
    }
    fn b1(&self, x: Vec3) -> Vec3 {
        (self.b1)(x)
    }
    fn potential(&self, x: Vec3) -> f64 {
        (self.potential)(x)
    }
    fn electric(&self, x: Vec3) -> Vec3 {
        match &self.electric {
            Some(e) => e(x),
            None => -central_gradient(|y| (self.potential)(y), x),
        }
    }
}

/// Strong-field model `B = B₁/ε`, `E = −∇φ`.
#[derive(Clone)]
pub struct FieldModel {
    eps: f64,
    inv_eps: f64,
    b1_floor: f64,
    source: Arc<dyn FieldSource>,
}

impl fmt::Debug for FieldModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FieldModel")
            .field("source", &self.source.name())
            .field("eps", &self.eps)
            .field("b1_floor", &self.b1_floor)
            .finish()
    }
}

impl FieldModel {
    /// Model with the default domain floor `|B₁| ≥ 1`.
    pub fn new(source: impl FieldSource + 'static, eps: f64) -> Result<Self> {
        Self::with_floor(Arc::new(source), eps, 1.0)
    }

    pub fn with_floor(source: Arc<dyn FieldSource>, eps: f64, b1_floor: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidConfig(format!("eps must be positive, got {eps}")));
        }
        if !(b1_floor >= 0.0 && b1_floor.is_finite()) {
            return Err(Error::InvalidConfig(format!("invalid |B1| floor {b1_floor}")));
        }
        Ok(FieldModel { eps, inv_eps: 1.0 / eps, b1_floor, source })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn b1_floor(&self) -> f64 {
        self.b1_floor
    }

    pub fn name(&self) -> &str {
        self.source.name()
    }

    pub fn source(&self) -> &Arc<dyn FieldSource> {
        &self.source
    }

    /// True when `B'` is obtained by finite differences.
    pub fn uses_fd_jacobian(&self) -> bool {
        self.source.b1_jacobian(Vec3::ZERO).is_none()
    }

    /// Same source, different ε.
    pub fn rescaled(&self, eps: f64) -> Result<Self> {
        Self::with_floor(self.source.clone(), eps, self.b1_floor)
    }

    /// `B(x) = B₁(x)/ε`, rejecting points where `|B₁|` drops below the floor.
    pub fn b(&self, x: Vec3) -> Result<Vec3> {
        let b1 = self.source.b1(x);
        let n = b1.norm();
        if !(n >= self.b1_floor) || n == 0.0 {
            return Err(Error::FieldDomain { x, b1_norm: n, floor: self.b1_floor });
        }
        Ok(b1 * self.inv_eps)
    }

    /// `B'(x)`, analytic when the source provides it.
    pub fn b_jacobian(&self, x: Vec3) -> Mat3 {
        let j = match self.source.b1_jacobian(x) {
            Some(j) => j,
            None => central_jacobian(|y| self.source.b1(y), x),
        };
        j.scale(self.inv_eps)
    }

    /// `∇|B| = B'ᵀ B / |B|`.
    pub fn grad_abs_b(&self, x: Vec3) -> Result<Vec3> {
        let b = self.b(x)?;
        Ok(self.grad_abs_b_with(x, b))
    }

    /// `∇|B|` when `B(x)` is already known.
    #[inline]
    pub fn grad_abs_b_with(&self, x: Vec3, b: Vec3) -> Vec3 {
        self.b_jacobian(x).transpose().mul_vec(b) / b.norm()
    }

    pub fn e(&self, x: Vec3) -> Vec3 {
        self.source.electric(x)
    }

    pub fn phi(&self, x: Vec3) -> f64 {
        self.source.potential(x)
    }

    /// `E_mod = E − μ⁰ ∇|B|`.
    pub fn modified_e(&self, x: Vec3, mu0: f64) -> Result<Vec3> {
        let e = self.e(x);
        if mu0 == 0.0 {
            return Ok(e);
        }
        Ok(e - self.grad_abs_b(x)? * mu0)
    }
}

/// Serializable selector for the built-in field models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum FieldSpec {
    Uniform {
        #[serde(default = "default_uniform_b1")]
        b1: Vec3,
        #[serde(default)]
        e: Vec3,
    },
    Tokamak,
    CubicPotential,
}

fn default_uniform_b1() -> Vec3 {
    Vec3::Z
}

/// Built-in field names accepted by [`FieldSpec::from_name`].
pub const FIELD_NAMES: [&str; 3] = ["tokamak", "cubic-potential", "uniform"];

/// `|B₁|` floor for the tokamak model; the field has `|B₁| ≈ 1/R` near the
/// magnetic axis, below 1 outside `R = 1`.
pub const TOKAMAK_B1_FLOOR: f64 = 0.5;
/// `|B₁|` floor for the linear field, which vanishes only at the origin.
pub const CUBIC_B1_FLOOR: f64 = 0.1;

impl FieldSpec {
    pub fn from_name(name: &str) -> Option<FieldSpec> {
        match name {
            "uniform" => Some(FieldSpec::Uniform { b1: Vec3::Z, e: Vec3::ZERO }),
            "tokamak" => Some(FieldSpec::Tokamak),
            "cubic-potential" => Some(FieldSpec::CubicPotential),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FieldSpec::Uniform { .. } => "uniform",
            FieldSpec::Tokamak => "tokamak",
            FieldSpec::CubicPotential => "cubic-potential",
        }
    }

    pub fn build(&self, eps: f64) -> Result<FieldModel> {
        match *self {
            FieldSpec::Uniform { b1, e } => {
                let floor = b1.norm().min(1.0);
                FieldModel::with_floor(Arc::new(UniformField { b1, e }), eps, floor)
            }
            FieldSpec::Tokamak => {
                FieldModel::with_floor(Arc::new(TokamakField), eps, TOKAMAK_B1_FLOOR)
            }
            FieldSpec::CubicPotential => {
                FieldModel::with_floor(Arc::new(CubicPotentialField), eps, CUBIC_B1_FLOOR)
            }
        }
    }
}
