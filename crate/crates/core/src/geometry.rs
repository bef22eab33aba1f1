//! Magnetic geometry: projectors along `B`, a local orthonormal frame, the
//! magnetic moment, guiding-centre extraction, and the operators used to
//! diagnose large-stepsize runs.

use crate::error::{Error, Result};
use crate::fields::FieldModel;
use crate::vecmath::{Mat3, Vec3};

/// Orthogonal projectors onto `span{B}` and its complement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projectors {
    pub par: Mat3,
    pub perp: Mat3,
}

impl Projectors {
    pub fn parallel(&self, v: Vec3) -> Vec3 {
        self.par * v
    }

    pub fn perpendicular(&self, v: Vec3) -> Vec3 {
        self.perp * v
    }
}

pub fn projectors(b: Vec3) -> Result<Projectors> {
    let unit = b.normalized().ok_or(Error::ZeroField)?;
    let par = unit.outer(unit);
    Ok(Projectors { par, perp: Mat3::IDENTITY - par })
}

/// `P∥ v` without forming the matrix.
#[inline]
pub fn parallel_part(b: Vec3, v: Vec3) -> Result<Vec3> {
    let unit = b.normalized().ok_or(Error::ZeroField)?;
    Ok(unit * unit.dot(v))
}

/// `P⊥ v` without forming the matrix.
#[inline]
pub fn perpendicular_part(b: Vec3, v: Vec3) -> Result<Vec3> {
    Ok(v - parallel_part(b, v)?)
}

/// Right-handed orthonormal frame with `e1 = B/|B|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub e1: Vec3,
    pub e2: Vec3,
    pub e3: Vec3,
}

pub fn local_frame(b: Vec3) -> Result<Frame> {
    let e1 = b.normalized().ok_or(Error::ZeroField)?;
    let a = if e1.x.abs() > 0.9 { Vec3::Y } else { Vec3::X };
    let e2 = e1.cross(a).normalized().ok_or(Error::ZeroField)?;
    let e3 = e1.cross(e2);
    Ok(Frame { e1, e2, e3 })
}

/// `μ = ½ |v × B|² / |B|³`.
pub fn magnetic_moment(x: Vec3, v: Vec3, model: &FieldModel) -> Result<f64> {
    magnetic_moment_in(v, model.b(x)?)
}

/// Magnetic moment for a known field value.
pub fn magnetic_moment_in(v: Vec3, b: Vec3) -> Result<f64> {
    let bn = b.norm();
    if bn == 0.0 {
        return Err(Error::ZeroField);
    }
    Ok(0.5 * v.cross(b).norm_squared() / (bn * bn * bn))
}

/// First-order guiding centre `x + (v × B)/|B|²`.
pub fn guiding_center(x: Vec3, v: Vec3, model: &FieldModel) -> Result<Vec3> {
    guiding_center_in(x, v, model.b(x)?)
}

pub fn guiding_center_in(x: Vec3, v: Vec3, b: Vec3) -> Result<Vec3> {
    let b2 = b.norm_squared();
    if b2 == 0.0 {
        return Err(Error::ZeroField);
    }
    Ok(x + v.cross(b) / b2)
}

/// The `O(ε)` parallel correction to the guiding-centre velocity,
/// `P∥(P∥v × B' P⊥v)/|B|²`, with all field quantities at `z`.
pub fn gc_parallel_velocity_correction(z: Vec3, v: Vec3, model: &FieldModel) -> Result<Vec3> {
    let b = model.b(z)?;
    let jac = model.b_jacobian(z);
    let vpar = parallel_part(b, v)?;
    let vperp = v - vpar;
    parallel_part(b, vpar.cross(jac * vperp) / b.norm_squared())
}

/// Residual of `e₂ × B'e₃ − e₃ × B'e₂ = −∇|B|` in the local frame at `x`.
///
/// The identity holds wherever `∇·B = 0`; the residual equals
/// `tr(B')·e₁`.
pub fn northrop_residual(model: &FieldModel, x: Vec3) -> Result<Vec3> {
    let b = model.b(x)?;
    let frame = local_frame(b)?;
    Ok(northrop_residual_in_frame(model, x, &frame))
}

/// Same as [`northrop_residual`] for an arbitrary perpendicular frame.
pub fn northrop_residual_in_frame(model: &FieldModel, x: Vec3, frame: &Frame) -> Vec3 {
    let b = model.b_jacobian(x);
    let grad = model.grad_abs_b(x).unwrap_or(Vec3::ZERO);
    frame.e2.cross(b * frame.e3) - frame.e3.cross(b * frame.e2) + grad
}

/// Operator norm of `L⁻¹` for `L: z ↦ z + ¼h² P⊥(v × B'z)` on the plane
/// perpendicular to `B(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InverseNorm {
    Finite(f64),
    Singular,
}

impl InverseNorm {
    /// Finite value, or `+∞` when singular.
    pub fn value(self) -> f64 {
        match self {
            InverseNorm::Finite(v) => v,
            InverseNorm::Singular => f64::INFINITY,
        }
    }
}

pub fn nondegeneracy_condition(x: Vec3, v: Vec3, h: f64, model: &FieldModel) -> Result<InverseNorm> {
    let b = model.b(x)?;
    let frame = local_frame(b)?;
    let jac = model.b_jacobian(x);
    Ok(nondegeneracy_in(&frame, &jac, v, h))
}

/// [`nondegeneracy_condition`] with the frame and `B'` already evaluated.
pub fn nondegeneracy_in(frame: &Frame, jac: &Mat3, v: Vec3, h: f64) -> InverseNorm {
    let c = 0.25 * h * h;
    let basis = [frame.e2, frame.e3];
    // Columns are images of e2, e3; P⊥ drops out against e2, e3.
    let mut m = [[0.0; 2]; 2];
    for (j, ej) in basis.iter().enumerate() {
        let image = *ej + v.cross(*jac * *ej) * c;
        for (i, ei) in basis.iter().enumerate() {
            m[i][j] = ei.dot(image);
        }
    }
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let s = m.iter().flatten().map(|a| a * a).sum::<f64>();
    let disc = (s * s - 4.0 * det * det).max(0.0).sqrt();
    let sigma_max = (0.5 * (s + disc)).sqrt();
    if !(det.abs() > 1e-14 * sigma_max * sigma_max) {
        return InverseNorm::Singular;
    }
    // σ_min = |det|/σ_max, so ‖L⁻¹‖ = σ_max/|det|.
    InverseNorm::Finite(sigma_max / det.abs())
}

/// Jacobian of the unit vector `b = B/|B|`: `B'/|B| − B (∇|B|)ᵀ/|B|²`.
pub fn unit_field_jacobian(model: &FieldModel, y: Vec3) -> Result<Mat3> {
    let b = model.b(y)?;
    let bn = b.norm();
    let jac = model.b_jacobian(y);
    let grad = jac.transpose() * b / bn;
    Ok(jac.scale(1.0 / bn) - b.outer(grad).scale(1.0 / (bn * bn)))
}

/// Leading-order perpendicular guiding-centre velocity,
///
/// `P⊥ż = (1/|B|) P∥ż × db/dt + (1/|B|²)(E − μ⁰∇|B|) × B`,
///
/// with `db/dt = b'(y)·ẏ`.
pub fn drift_velocity(model: &FieldModel, y: Vec3, ydot: Vec3, mu0: f64) -> Result<Vec3> {
    let b = model.b(y)?;
    let bn = b.norm();
    let db_dt = unit_field_jacobian(model, y)? * ydot;
    let vpar = parallel_part(b, ydot)?;
    let force = model.modified_e(y, mu0)?;
    Ok(vpar.cross(db_dt) / bn + force.cross(b) / (bn * bn))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{central_gradient, FieldSpec, UniformField};
    use proptest::prelude::*;

    fn vec3() -> impl Strategy<Value = Vec3> {
        (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64).prop_map(|(a, b, c)| Vec3::new(a, b, c))
    }

    fn nonzero_vec3() -> impl Strategy<Value = Vec3> {
        vec3().prop_filter("nonzero", |v| v.norm() > 1e-3)
    }

    fn uniform(b1: Vec3, eps: f64) -> FieldModel {
        FieldModel::new(UniformField { b1, e: Vec3::ZERO }, eps).unwrap()
    }

    #[test]
    fn axis_aligned_projectors() {
        let p = projectors(Vec3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!(p.par, Mat3::diag(0.0, 0.0, 1.0));
        assert_eq!(p.perp, Mat3::diag(1.0, 1.0, 0.0));
        let p = projectors(Vec3::new(1.0, 1.0, 0.0)).unwrap();
        assert!(p.parallel(Vec3::new(1.0, -1.0, 5.0)).norm() < 1e-15);
        assert_eq!(projectors(Vec3::ZERO), Err(Error::ZeroField));
    }

    #[test]
    fn frame_examples() {
        let f = local_frame(Vec3::Z).unwrap();
        assert_eq!(f.e1, Vec3::Z);
        assert!((f.e1.cross(f.e2) - f.e3).norm() < 1e-15);
        let f = local_frame(Vec3::new(3.0, 0.0, 0.0)).unwrap();
        assert_eq!(f.e1, Vec3::X);
        assert_eq!(local_frame(Vec3::ZERO), Err(Error::ZeroField));
    }

    #[test]
    fn moment_and_guiding_centre_examples() {
        let m = uniform(Vec3::Z, 1.0);
        assert_eq!(magnetic_moment(Vec3::ZERO, Vec3::X, &m).unwrap(), 0.5);
        assert_eq!(magnetic_moment(Vec3::ZERO, Vec3::Z * 3.0, &m).unwrap(), 0.0);
        assert_eq!(guiding_center(Vec3::ZERO, Vec3::X, &m).unwrap(), Vec3::new(0.0, -1.0, 0.0));
        let x = Vec3::new(0.3, 0.2, 0.1);
        assert_eq!(guiding_center(x, Vec3::Z * 2.0, &m).unwrap(), x);
    }

    #[test]
    fn tokamak_initial_moment_double_entry() {
        let m = FieldSpec::Tokamak.build(1.0).unwrap();
        let x = Vec3::new(1.05, 0.0, 0.0);
        let v = Vec3::new(2.1e-3, 4.3e-4, 0.0);
        let mu = magnetic_moment(x, v, &m).unwrap();
        // Independent scalar evaluation with B = (0, 1/1.05, 0.05/2.1).
        let (b2, b3): (f64, f64) = (1.0 / 1.05, 0.05 / 2.1);
        let (c1, c2, c3) = (4.3e-4 * b3, -2.1e-3 * b3, 2.1e-3 * b2);
        let bn = (b2 * b2 + b3 * b3).sqrt();
        let expected = 0.5 * (c1 * c1 + c2 * c2 + c3 * c3) / bn.powi(3);
        assert!((mu - expected).abs() <= 1e-15 * expected);
        // Frozen from an independent double-precision evaluation.
        assert!((mu - 2.314587436824891e-6).abs() <= 1e-14 * mu, "mu0 = {mu:e}");
    }

    #[test]
    fn northrop_residual_uniform_is_zero() {
        let m = uniform(Vec3::new(0.3, -0.4, 1.2), 1e-2);
        assert_eq!(northrop_residual(&m, Vec3::new(1.0, 2.0, 3.0)).unwrap(), Vec3::ZERO);
    }

    #[test]
    fn northrop_residual_is_frame_invariant() {
        let m = FieldSpec::Tokamak.build(1.0).unwrap();
        let x = Vec3::new(1.03, 0.2, -0.04);
        let f = local_frame(m.b(x).unwrap()).unwrap();
        for angle in [0.3_f64, 1.1, 2.9] {
            let (s, c) = angle.sin_cos();
            let rotated = Frame { e1: f.e1, e2: f.e2 * c + f.e3 * s, e3: f.e3 * c - f.e2 * s };
            let a = northrop_residual_in_frame(&m, x, &f);
            let b = northrop_residual_in_frame(&m, x, &rotated);
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn nondegeneracy_examples() {
        let m = uniform(Vec3::Z, 1e-3);
        let n = nondegeneracy_condition(Vec3::ZERO, Vec3::new(1.0, 2.0, 0.5), 5.0, &m).unwrap();
        assert_eq!(n, InverseNorm::Finite(1.0));
        let tok = FieldSpec::CubicPotential.build(1e-3).unwrap();
        let x = Vec3::new(0.0, 1.0, 0.1);
        let v = Vec3::new(0.09, 0.55, 0.3);
        let n0 = nondegeneracy_condition(x, v, 1e-9, &tok).unwrap().value();
        assert!((n0 - 1.0).abs() < 1e-12);
        let mut prev = n0;
        for h in [1e-4, 2e-4, 4e-4, 8e-4] {
            let n = nondegeneracy_condition(x, v, h, &tok).unwrap().value();
            assert!((n - prev).abs() < 0.1, "discontinuity at h = {h}");
            prev = n;
        }
    }

    #[test]
    fn singular_operator_is_flagged() {
        let frame = local_frame(Vec3::Z).unwrap();
        // ¼h² v × B' e_j = −e_j makes L the zero map.
        let jac = Mat3::from_rows([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        let v = Vec3::Z;
        let h = 2.0;
        let image = frame.e2 + v.cross(jac * frame.e2) * (0.25 * h * h);
        assert!(image.norm() < 1e-15);
        assert_eq!(nondegeneracy_in(&frame, &jac, v, h), InverseNorm::Singular);
    }

    #[test]
    fn drift_velocity_e_cross_b() {
        let e = Vec3::new(0.2, 0.0, 0.0);
        let m = FieldModel::new(UniformField { b1: Vec3::Z * 2.0, e }, 0.01).unwrap();
        let b = m.b(Vec3::ZERO).unwrap();
        let d = drift_velocity(&m, Vec3::ZERO, Vec3::Z * 0.7, 0.3).unwrap();
        assert_eq!(d, e.cross(b) / b.norm_squared());
        let m0 = uniform(Vec3::Z, 0.01);
        assert_eq!(drift_velocity(&m0, Vec3::ZERO, Vec3::Z, 0.0).unwrap(), Vec3::ZERO);
    }

    #[test]
    fn unit_field_jacobian_matches_fd() {
        let m = FieldSpec::Tokamak.build(1.0).unwrap();
        let x = Vec3::new(1.04, 0.1, 0.02);
        let j = unit_field_jacobian(&m, x).unwrap();
        for i in 0..3 {
            let fd = central_gradient(|y| m.b(y).unwrap().normalized().unwrap()[i], x);
            assert!((j.row(i) - fd).norm() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn projector_algebra(b in nonzero_vec3(), v in vec3()) {
            let p = projectors(b).unwrap();
            prop_assert!((p.par + p.perp).max_abs_diff(&Mat3::IDENTITY) <= 1e-12);
            prop_assert!((p.par * p.par).max_abs_diff(&p.par) <= 1e-12);
            prop_assert!((p.perp * p.par).max_abs_diff(&Mat3::ZERO) <= 1e-12);
            prop_assert!((p.par * p.perp).max_abs_diff(&Mat3::ZERO) <= 1e-12);
            prop_assert!((p.par * b - b).norm() <= 1e-12 * b.norm());
            prop_assert!((p.perp * b).norm() <= 1e-12 * b.norm());
            let split = p.parallel(v) + p.perpendicular(v);
            prop_assert!((split - v).max_abs() <= 1e-12 * (1.0 + v.norm()));
        }

        #[test]
        fn frame_axioms(b in nonzero_vec3()) {
            let f = local_frame(b).unwrap();
            for (a, c) in [(f.e1, f.e2), (f.e2, f.e3), (f.e1, f.e3)] {
                prop_assert!(a.dot(c).abs() <= 1e-12);
            }
            for e in [f.e1, f.e2, f.e3] {
                prop_assert!((e.norm() - 1.0).abs() <= 1e-12);
            }
            prop_assert!((f.e1.cross(f.e2) - f.e3).norm() <= 1e-12);
            prop_assert!((Mat3::from_columns(f.e1, f.e2, f.e3).det() - 1.0).abs() <= 1e-10);
        }

        #[test]
        fn moment_invariant_under_parallel_shift(x in vec3(), v in vec3(), c in -10.0..10.0f64) {
            let m = FieldSpec::CubicPotential.build(0.01).unwrap();
            prop_assume!(m.b(x).is_ok());
            let b = m.b(x).unwrap();
            let mu = magnetic_moment(x, v, &m).unwrap();
            let shifted = magnetic_moment(x, v + b * (c / b.norm()), &m).unwrap();
            prop_assert!(mu >= 0.0);
            prop_assert!((mu - shifted).abs() <= 1e-10 * mu.max(1e-300) + 1e-24);
        }

        #[test]
        fn guiding_centre_offset_is_perpendicular(x in vec3(), v in vec3()) {
            let m = FieldSpec::Tokamak.build(1e-3).unwrap();
            prop_assume!(m.b(x).is_ok());
            let b = m.b(x).unwrap();
            let d = guiding_center(x, v, &m).unwrap() - x;
            prop_assert!(d.dot(b).abs() <= 1e-10 * d.norm() * b.norm() + 1e-300);
        }
    }
}
