use std::f64::consts::PI;

use mboris_core::diagnostics::compare;
use mboris_core::fields::{FieldSpec, UniformField};
use mboris_core::geometry::{magnetic_moment, perpendicular_part};
use mboris_core::integrators::reference_solution;
use mboris_core::{integrate, FieldModel, IntegratorConfig, Method, ParticleState, Trajectory, Vec3};
use proptest::prelude::*;

fn uniform() -> FieldModel {
    FieldModel::new(UniformField { b1: Vec3::new(0.0, 0.6, 0.8), e: Vec3::new(0.02, 0.0, -0.01) }, 0.05).unwrap()
}

fn run(v: Vec3, method: Method) -> Trajectory {
    let init = ParticleState::new(Vec3::new(0.1, -0.2, 0.3), v);
    integrate(&IntegratorConfig::new(method, 0.02, 0.4, init), &uniform()).unwrap()
}

fn small_vec() -> impl Strategy<Value = Vec3> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b, c)| Vec3::new(a, b, c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn compare_err_x_is_symmetric(v in small_vec(), w in small_vec()) {
        let a = run(v, Method::Boris);
        let b = run(w, Method::ModifiedBoris);
        let m = uniform();
        let ab = compare(&a, &b, &m).unwrap();
        let ba = compare(&b, &a, &m).unwrap();
        prop_assert_eq!(ab.err_x, ba.err_x);
        prop_assert_eq!(ab.final_x, ba.final_x);
    }
}

#[test]
fn moment_equals_field_times_gyro_amplitude_squared() {
    // On a circular orbit of radius r the first modulation amplitude has
    // |ζ|² = r²/2.
    for eps in [1e-2, 1e-3] {
        let model = FieldModel::new(UniformField { b1: Vec3::Z, e: Vec3::ZERO }, eps).unwrap();
        let init = ParticleState::new(Vec3::ZERO, Vec3::new(0.3, 0.4, 0.2));
        let period = 2.0 * PI * eps;
        let r = reference_solution(&IntegratorConfig::new(Method::Reference, period / 64.0, period, init), &model).unwrap();
        let gc = r.diagnostics[0].gc;
        let radius = r
            .states
            .iter()
            .map(|s| {
                let d = s.x - gc;
                (d.x * d.x + d.y * d.y).sqrt()
            })
            .fold(0.0, f64::max);
        let b = model.b(Vec3::ZERO).unwrap().norm();
        let mu = magnetic_moment(init.x, init.v, &model).unwrap();
        assert!((mu - b * 0.5 * radius * radius).abs() <= 1e-6 * mu, "eps {eps}");
    }
}

#[test]
fn standard_boris_energy_error_is_second_order() {
    let model = FieldSpec::CubicPotential.build(2f64.powi(-10)).unwrap();
    let init = ParticleState::new(Vec3::new(0.0, 1.0, 0.1), Vec3::new(0.09, 0.55, 0.3));
    let h0 = 0.25 * 2f64.powi(-10);
    let mut scaled = Vec::new();
    for k in 0..3 {
        let h = h0 / 2f64.powi(k);
        let t = integrate(&IntegratorConfig::new(Method::Boris, h, 1.0, init), &model).unwrap();
        let c = t.max_energy_drift() / (h * h * (1.0 + t.energy0.abs()));
        println!("h = {h:e}: energy drift / h^2(1+|H0|) = {c:.4}");
        scaled.push(c);
    }
    for c in &scaled {
        assert!(*c <= 3.0e3);
    }
    assert!(scaled[2] / scaled[0] <= 2.0 && scaled[0] / scaled[2] <= 2.0);
}

#[test]
fn perpendicular_velocity_constant_is_stable_with_h_squared_proportional_to_eps() {
    let init = ParticleState::new(Vec3::new(0.0, 1.0, 0.1), Vec3::new(0.09, 0.55, 0.3));
    let mut c_obs = Vec::new();
    for j in [12, 14, 16] {
        let eps = 2f64.powi(-j);
        let h = 8.0 * eps.sqrt();
        let model = FieldSpec::CubicPotential.build(eps).unwrap();
        let t = integrate(&IntegratorConfig::new(Method::ModifiedBoris, h, 1.0, init), &model).unwrap();
        let vperp = t
            .states
            .iter()
            .map(|s| perpendicular_part(model.b(s.x).unwrap(), s.v).unwrap().norm())
            .fold(0.0, f64::max);
        println!("eps = 2^-{j}, h = {h}: max |v_perp| / h^2 = {:.5}", vperp / (h * h));
        c_obs.push(vperp / (h * h));
    }
    for w in c_obs.windows(2) {
        let r = w[0] / w[1];
        assert!((0.5..=2.0).contains(&r), "C_obs ratio {r}");
    }
}
