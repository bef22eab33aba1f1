use std::f64::consts::PI;

use mboris_core::diagnostics::gc_tracking_error;
use mboris_core::fields::{FieldSpec, UniformField};
use mboris_core::geometry::{drift_velocity, guiding_center, magnetic_moment, parallel_part, perpendicular_part};
use mboris_core::integrators::{gc_ode_solve, reference_solution};
use mboris_core::{FieldModel, IntegratorConfig, Method, ParticleState, Vec3};

fn cubic_init() -> ParticleState {
    ParticleState::new(Vec3::new(0.0, 1.0, 0.1), Vec3::new(0.09, 0.55, 0.3))
}

#[test]
fn reference_reproduces_uniform_circular_orbit() {
    let eps = 1e-3;
    let model = FieldModel::new(UniformField { b1: Vec3::Z, e: Vec3::ZERO }, eps).unwrap();
    let period = 2.0 * PI * eps;
    let cfg = IntegratorConfig::new(Method::Reference, period / 50.0, period, ParticleState::new(Vec3::ZERO, Vec3::X));
    let r = reference_solution(&cfg, &model).unwrap();
    assert_eq!(r.len(), 51);
    assert!(r.richardson.unwrap().passed);
    let w = 1.0 / eps;
    let mut worst = 0.0_f64;
    for s in &r.states {
        let exact = Vec3::new((w * s.t).sin() / w, ((w * s.t).cos() - 1.0) / w, 0.0);
        worst = worst.max((s.x - exact).norm());
    }
    // Relative to the orbit diameter.
    assert!(worst / (2.0 * eps) <= 1e-6, "relative error {:e}", worst / (2.0 * eps));
}

#[test]
fn uniform_guiding_centre_is_constant_over_a_gyroperiod() {
    let eps = 1e-3;
    let model = FieldModel::new(UniformField { b1: Vec3::Z, e: Vec3::ZERO }, eps).unwrap();
    let period = 2.0 * PI * eps;
    let init = ParticleState::new(Vec3::new(0.2, -0.1, 0.0), Vec3::new(0.6, 0.8, 0.0));
    let r = reference_solution(&IntegratorConfig::new(Method::Reference, period / 40.0, period, init), &model).unwrap();
    let z0 = guiding_center(init.x, init.v, &model).unwrap();
    let drift = r.diagnostics.iter().map(|d| (d.gc - z0).norm()).fold(0.0, f64::max);
    assert!(drift <= 1e-2 * eps, "gc drift {drift:e}");
}

#[test]
fn e_cross_b_drift_from_secular_motion() {
    let eps = 1e-2;
    let e = Vec3::new(0.1, 0.0, 0.0);
    let model = FieldModel::new(UniformField { b1: Vec3::Z, e }, eps).unwrap();
    let period = 2.0 * PI * eps;
    let init = ParticleState::new(Vec3::ZERO, Vec3::new(0.3, 0.2, 0.0));
    let t_final = 20.0 * period;
    let r = reference_solution(&IntegratorConfig::new(Method::Reference, period / 10.0, t_final, init), &model).unwrap();
    let d = &r.diagnostics;
    let measured = (d[d.len() - 1].gc - d[0].gc) / t_final;
    let b = model.b(Vec3::ZERO).unwrap();
    let expected = e.cross(b) / b.norm_squared();
    assert!((measured - expected).norm() <= 1e-2 * expected.norm(), "{measured:?} vs {expected:?}");
    // The drift formula gives the same vector.
    let formula = drift_velocity(&model, Vec3::ZERO, Vec3::ZERO, 0.0).unwrap();
    assert!((formula - expected).norm() <= 1e-12 * expected.norm());
}

#[test]
fn reference_richardson_self_test_on_cubic_model() {
    let model = FieldSpec::CubicPotential.build(2f64.powi(-13)).unwrap();
    let r = reference_solution(&IntegratorConfig::new(Method::Reference, 0.125, 1.0, cubic_init()), &model).unwrap();
    let check = r.richardson.unwrap();
    assert!(check.passed && check.rel_change < 1e-6, "{check:?}");
    assert!(r.warnings.is_empty());
}

#[test]
fn gc_ode_tracks_reference_guiding_centre_to_order_eps() {
    let mut devs = Vec::new();
    for j in [16, 17] {
        let eps = 2f64.powi(-j);
        let model = FieldSpec::CubicPotential.build(eps).unwrap();
        let cfg = IntegratorConfig::new(Method::Reference, 0.01, 1.0, cubic_init());
        let r = reference_solution(&cfg, &model).unwrap();
        let g = gc_ode_solve(&cfg, &model, r.mu0).unwrap();
        let dev = gc_tracking_error(&g, &r, &model).unwrap();
        println!("eps = 2^-{j}: gc ode deviation {dev:e} ({:.4} eps)", dev / eps);
        assert!(dev <= 0.05 * eps);
        devs.push(dev);
    }
    let ratio = devs[0] / devs[1];
    assert!((1.5..=3.0).contains(&ratio), "ratio {ratio}");
}

/// Perpendicular drift of the guiding centre formula against finite
/// differences of the reference guiding-centre curve.
fn drift_mismatch(eps: f64) -> (f64, f64) {
    let model = FieldSpec::CubicPotential.build(eps).unwrap();
    let h = 0.01;
    let r = reference_solution(&IntegratorConfig::new(Method::Reference, h, 1.0, cubic_init()), &model).unwrap();
    let mu0 = magnetic_moment(cubic_init().x, cubic_init().v, &model).unwrap();
    let gc: Vec<Vec3> = r.diagnostics.iter().map(|d| d.gc).collect();
    let (mut worst, mut size) = (0.0_f64, 0.0_f64);
    for n in 1..gc.len() - 1 {
        let zdot = (gc[n + 1] - gc[n - 1]) / (2.0 * h);
        let b = model.b(gc[n]).unwrap();
        let par = parallel_part(b, zdot).unwrap();
        let measured = perpendicular_part(b, zdot).unwrap();
        let predicted = drift_velocity(&model, gc[n], par, mu0).unwrap();
        worst = worst.max((measured - predicted).norm());
        size = size.max(predicted.norm());
    }
    (worst, size)
}

#[test]
fn drift_velocity_matches_reference_guiding_centre() {
    for j in [10, 12] {
        let eps = 2f64.powi(-j);
        let (d, s) = drift_mismatch(eps);
        println!("eps = 2^-{j}: drift mismatch {d:e}, drift size {s:e}");
        assert!(d <= 0.05 * eps, "mismatch {d:e}");
        assert!(d <= 0.02 * s, "mismatch {d:e} vs drift {s:e}");
    }
}
