//! Boris-family time steppers and the fine-step oracles.
//!
//! All Boris variants share one leapfrog engine: positions live on integer
//! steps, velocities on half steps, and the velocity reported at `t_n` is
//! the symmetric difference `vⁿ = (x^{n+1} − x^{n−1})/(2h)`, which in the
//! one-step form is the mean of the two neighbouring half-step velocities.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::FieldModel;
use crate::geometry::{
    drift_velocity, gc_parallel_velocity_correction, guiding_center, guiding_center_in,
    local_frame, magnetic_moment, magnetic_moment_in, nondegeneracy_in, parallel_part,
};
use crate::vecmath::{solve3, Mat3, Vec3};

/// Positions beyond this radius count as a blow-up.
pub const RUNAWAY_RADIUS: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Standard Boris from the unmodified initial velocity.
    Boris,
    /// Standard Boris with the perpendicular initial velocity removed.
    BorisFiltered,
    /// Boris on `E − μ⁰∇|B|` with filtered initial velocity.
    ModifiedBoris,
    /// Fine-step standard Boris resolving the gyration.
    Reference,
    /// Fine-step solution of the guiding-centre equation.
    GcOde,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Boris,
        Method::BorisFiltered,
        Method::ModifiedBoris,
        Method::Reference,
        Method::GcOde,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Boris => "boris",
            Method::BorisFiltered => "boris-filtered",
            Method::ModifiedBoris => "modified-boris",
            Method::Reference => "reference",
            Method::GcOde => "gc-ode",
        }
    }

    /// Methods meant to step over the gyration.
    pub fn is_large_stepsize(self) -> bool {
        matches!(self, Method::BorisFiltered | Method::ModifiedBoris)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Method::ALL.iter().map(|m| m.as_str()).collect();
                Error::InvalidConfig(format!("unknown method '{s}' (expected one of {})", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ParticleState {
    pub x: Vec3,
    pub v: Vec3,
    pub t: f64,
}

impl ParticleState {
    pub fn new(x: Vec3, v: Vec3) -> Self {
        ParticleState { x, v, t: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.v.is_finite() && self.t.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    pub h: f64,
    pub t_final: f64,
    pub initial: ParticleState,
    pub mu0_override: Option<f64>,
    /// Initial substeps per gyroperiod for the fine-step oracles.
    pub gyro_substeps: usize,
    /// Relative position change allowed when the oracle step is halved.
    pub richardson_tol: f64,
    /// Accepted `h²/ε` window for large-stepsize methods; outside it a
    /// warning is recorded.
    pub regime: (f64, f64),
}

impl IntegratorConfig {
    pub fn new(method: Method, h: f64, t_final: f64, initial: ParticleState) -> Self {
        IntegratorConfig {
            method,
            h,
            t_final,
            initial,
            mu0_override: None,
            gyro_substeps: 100,
            richardson_tol: 1e-6,
            regime: (1e-2, 1e2),
        }
    }

    pub fn with_method(&self, method: Method) -> Self {
        IntegratorConfig { method, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad(format!("stepsize must be positive, got {}", self.h));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return bad(format!("final time must be positive, got {}", self.t_final));
        }
        if self.h > self.t_final * (1.0 + 1e-12) {
            return bad(format!("stepsize {} exceeds final time {}", self.h, self.t_final));
        }
        if !self.initial.is_finite() {
            return bad("initial state must be finite".into());
        }
        if self.gyro_substeps == 0 {
            return bad("gyro_substeps must be positive".into());
        }
        if !(self.richardson_tol > 0.0) {
            return bad("richardson_tol must be positive".into());
        }
        if let Some(mu) = self.mu0_override {
            if !(mu >= 0.0 && mu.is_finite()) {
                return bad(format!("mu0 override must be non-negative, got {mu}"));
            }
        }
        Ok(())
    }

    /// Number of output steps, `⌊T/h⌋`.
    pub fn n_steps(&self) -> usize {
        ((self.t_final / self.h) * (1.0 + 1e-12)).floor() as usize
    }
}

/// Marker for how stored velocities relate to positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VelocityConvention {
    /// `vⁿ = (x^{n+1} − x^{n−1})/(2h)`; `v⁰` is the starting velocity.
    SymmetricDifference,
    /// Velocities sampled from a finer run.
    Subsampled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub mu: f64,
    pub energy: f64,
    /// Signed parallel velocity `v·b`.
    pub v_par: f64,
    pub v_perp: f64,
    pub gc: Vec3,
    /// `‖L⁻¹‖` at the integration stepsize (`+∞` if singular).
    pub nondegeneracy: f64,
}

/// Outcome of the step-halving self-test of a fine-step oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RichardsonCheck {
    /// Substeps per output step of the returned run.
    pub substeps: usize,
    pub h_ref: f64,
    /// `max |x_{h_ref} − x_{2h_ref}| / max |x_{h_ref}|` over the output grid.
    pub rel_change: f64,
    pub tol: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub method: Method,
    pub h: f64,
    pub states: Vec<ParticleState>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub velocity_convention: VelocityConvention,
    /// `μ(x(0), ẋ(0))` from the unfiltered initial velocity (or the override).
    pub mu0: f64,
    pub energy0: f64,
    pub richardson: Option<RichardsonCheck>,
    pub fd_jacobian: bool,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &ParticleState {
        self.states.last().expect("trajectory has the initial state")
    }

    pub fn positions(&self) -> impl Iterator<Item = Vec3> + '_ {
        self.states.iter().map(|s| s.x)
    }

    pub fn max_nondegeneracy(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.nondegeneracy).fold(0.0, f64::max)
    }

    pub fn max_mu_drift(&self) -> f64 {
        self.diagnostics.iter().map(|d| (d.mu - self.mu0).abs()).fold(0.0, f64::max)
    }

    pub fn max_energy_drift(&self) -> f64 {
        self.diagnostics.iter().map(|d| (d.energy - self.energy0).abs()).fold(0.0, f64::max)
    }
}

/// Replaces `v` by `P∥(x) v`.
pub fn filter_initial_velocity(state: ParticleState, model: &FieldModel) -> Result<ParticleState> {
    let b = model.b(state.x)?;
    Ok(ParticleState { v: parallel_part(b, state.v)?, ..state })
}

#[inline]
fn force(model: &FieldModel, x: Vec3, b: Vec3, mu0: f64) -> Vec3 {
    let e = model.e(x);
    if mu0 == 0.0 {
        e
    } else {
        e - model.grad_abs_b_with(x, b) * mu0
    }
}

#[inline]
fn effective_mu0(mu0: f64, use_mod: bool) -> f64 {
    if use_mod {
        mu0
    } else {
        0.0
    }
}

/// Boris half-kick / rotation / half-kick: maps `v^{n−1/2}` to
/// `v^{n+1/2}` at position `xⁿ` under the force `E − μ⁰∇|B|`.
#[inline]
pub fn boris_velocity_update(v_half: Vec3, x: Vec3, h: f64, model: &FieldModel, mu0: f64) -> Result<Vec3> {
    let b = model.b(x)?;
    let kick = force(model, x, b, mu0) * (0.5 * h);
    let v_minus = v_half + kick;
    Ok(boris_rotate(v_minus, b, h) + kick)
}

/// Norm-preserving rotation through the angle `2 atan(h|B|/2)`.
#[inline]
pub fn boris_rotate(v: Vec3, b: Vec3, h: f64) -> Vec3 {
    let t = b * (0.5 * h);
    let s = t * (2.0 / (1.0 + t.norm_squared()));
    let v_prime = v + v.cross(t);
    v + v_prime.cross(s)
}

/// One leapfrog step. `state.v` is the half-step velocity `v^{n−1/2}`;
/// the result holds `x^{n+1}` and `v^{n+1/2}`.
pub fn boris_one_step(
    state: ParticleState,
    h: f64,
    model: &FieldModel,
    mu0: f64,
    use_mod: bool,
) -> Result<ParticleState> {
    let v = boris_velocity_update(state.v, state.x, h, model, effective_mu0(mu0, use_mod))?;
    Ok(ParticleState { x: state.x + v * h, v, t: state.t + h })
}

/// Startup half step `v^{1/2} = v⁰ + (h/2)(v⁰ × B(x⁰) + E_mod(x⁰))`.
pub fn boris_startup(x0: Vec3, v0: Vec3, h: f64, model: &FieldModel, mu0: f64, use_mod: bool) -> Result<Vec3> {
    let b = model.b(x0)?;
    let f = force(model, x0, b, effective_mu0(mu0, use_mod));
    Ok(v0 + (v0.cross(b) + f) * (0.5 * h))
}

/// Two-step form: solves
/// `(x^{n+1} − 2xⁿ + x^{n−1})/h² = vⁿ × B(xⁿ) + E_mod(xⁿ)` with
/// `vⁿ = (x^{n+1} − x^{n−1})/(2h)` for `x^{n+1}`.
pub fn boris_two_step(
    x_prev: Vec3,
    x_curr: Vec3,
    h: f64,
    model: &FieldModel,
    mu0: f64,
    use_mod: bool,
) -> Result<Vec3> {
    let b = model.b(x_curr)?;
    let f = force(model, x_curr, b, effective_mu0(mu0, use_mod));
    let half = 0.5 * h;
    // (I − (h/2)Ω) with Ωz = z × B; det = 1 + (h|B|/2)².
    let system = Mat3::IDENTITY - Mat3::cross_right(b).scale(half);
    debug_assert!((system.det() - (1.0 + (half * b.norm()).powi(2))).abs() <= 1e-9 * system.det());
    let rhs = x_curr * 2.0 - x_prev - x_prev.cross(b) * half + f * (h * h);
    solve3(&system, rhs)
}

/// Position sequence of the two-step form, started with
/// `x¹ = x⁰ + h v⁰ + (h²/2)(v⁰ × B(x⁰) + E_mod(x⁰))`.
pub fn two_step_positions(
    x0: Vec3,
    v0: Vec3,
    h: f64,
    n_steps: usize,
    model: &FieldModel,
    mu0: f64,
    use_mod: bool,
) -> Result<Vec<Vec3>> {
    let mut xs = Vec::with_capacity(n_steps + 1);
    xs.push(x0);
    if n_steps == 0 {
        return Ok(xs);
    }
    let b = model.b(x0)?;
    let f = force(model, x0, b, effective_mu0(mu0, use_mod));
    xs.push(x0 + v0 * h + (v0.cross(b) + f) * (0.5 * h * h));
    for n in 1..n_steps {
        let next = boris_two_step(xs[n - 1], xs[n], h, model, mu0, use_mod)?;
        check_finite(next, n + 1, (n + 1) as f64 * h)?;
        xs.push(next);
    }
    Ok(xs)
}

/// Position sequence of the one-step form with the same startup.
pub fn one_step_positions(
    x0: Vec3,
    v0: Vec3,
    h: f64,
    n_steps: usize,
    model: &FieldModel,
    mu0: f64,
    use_mod: bool,
) -> Result<Vec<Vec3>> {
    let mut xs = Vec::with_capacity(n_steps + 1);
    xs.push(x0);
    if n_steps == 0 {
        return Ok(xs);
    }
    let v_half = boris_startup(x0, v0, h, model, mu0, use_mod)?;
    let mut state = ParticleState { x: x0 + v_half * h, v: v_half, t: h };
    xs.push(state.x);
    for n in 1..n_steps {
        state = boris_one_step(state, h, model, mu0, use_mod)?;
        check_finite(state.x, n + 1, state.t)?;
        xs.push(state.x);
    }
    Ok(xs)
}

#[inline]
fn check_finite(x: Vec3, step: usize, t: f64) -> Result<()> {
    if !x.is_finite() || x.norm() > RUNAWAY_RADIUS {
        return Err(Error::NonFinite { step, t });
    }
    Ok(())
}

/// Positions and velocities on the output grid.
struct Samples {
    xs: Vec<Vec3>,
    vs: Vec<Vec3>,
}

/// Leapfrog over `n_out` output steps of size `h_out`, each split into
/// `substeps` Boris steps. Output velocities are the mean of the adjacent
/// half-step velocities; `vs[0] = v0`.
fn leapfrog(
    x0: Vec3,
    v0: Vec3,
    h_out: f64,
    n_out: usize,
    substeps: usize,
    model: &FieldModel,
    mu0: f64,
) -> Result<Samples> {
    let h = h_out / substeps as f64;
    let mut xs = Vec::with_capacity(n_out + 1);
    let mut vs = Vec::with_capacity(n_out + 1);
    xs.push(x0);
    vs.push(v0);
    if n_out == 0 {
        return Ok(Samples { xs, vs });
    }
    let mut v_half = boris_startup(x0, v0, h, model, mu0, true)?;
    let mut x = x0 + v_half * h;
    let total = n_out * substeps;
    for m in 1..=total {
        check_finite(x, m, m as f64 * h)?;
        let v_next = boris_velocity_update(v_half, x, h, model, mu0)?;
        if m % substeps == 0 {
            xs.push(x);
            vs.push((v_half + v_next) * 0.5);
        }
        if m < total {
            x += v_next * h;
        }
        v_half = v_next;
    }
    if !v_half.is_finite() {
        return Err(Error::NonFinite { step: total, t: total as f64 * h });
    }
    Ok(Samples { xs, vs })
}

fn relative_position_change(a: &[Vec3], b: &[Vec3]) -> f64 {
    let scale = b.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let diff = a.iter().zip(b).map(|(p, q)| (*p - *q).norm()).fold(0.0, f64::max);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Upper bound on fine steps spent by one Richardson-refined solve.
const MAX_FINE_STEPS: usize = 4_000_000_000;

/// Fine-step Boris with step-halving refinement: the substep count starts
/// from `initial_substeps` and grows (second-order error model) until a
/// halving moves the output positions by less than `tol`.
fn refined_leapfrog(
    x0: Vec3,
    v0: Vec3,
    h_out: f64,
    n_out: usize,
    initial_substeps: usize,
    tol: f64,
    model: &FieldModel,
    mu0: f64,
) -> Result<(Samples, RichardsonCheck)> {
    let mut k = initial_substeps.max(1);
    let mut coarse = leapfrog(x0, v0, h_out, n_out, k, model, mu0)?;
    loop {
        let fine = leapfrog(x0, v0, h_out, n_out, 2 * k, model, mu0)?;
        let rel = relative_position_change(&coarse.xs, &fine.xs);
        let check = RichardsonCheck {
            substeps: 2 * k,
            h_ref: h_out / (2 * k) as f64,
            rel_change: rel,
            tol,
            passed: rel < tol,
        };
        if check.passed || rel == 0.0 {
            return Ok((fine, check));
        }
        // Aim at a quarter of the tolerance so the accepted run has margin.
        let factor = (rel / (0.25 * tol)).sqrt();
        let next = ((2 * k) as f64 * factor / 2.0).ceil() as usize;
        let next = next.max(2 * k);
        if 2 * next * n_out > MAX_FINE_STEPS {
            return Ok((fine, check));
        }
        if next == 2 * k {
            coarse = fine;
        } else {
            coarse = leapfrog(x0, v0, h_out, n_out, next, model, mu0)?;
        }
        k = next;
    }
}

fn initial_substeps(config: &IntegratorConfig, model: &FieldModel) -> usize {
    let h_ref = config.h.min(2.0 * PI * model.eps() / config.gyro_substeps as f64);
    (config.h / h_ref).ceil().max(1.0) as usize
}

fn build_trajectory(
    method: Method,
    config: &IntegratorConfig,
    model: &FieldModel,
    samples: Samples,
    h_step: f64,
    mu0: f64,
    convention: VelocityConvention,
) -> Result<Trajectory> {
    let h = config.h;
    let mut states = Vec::with_capacity(samples.xs.len());
    let mut diagnostics = Vec::with_capacity(samples.xs.len());
    for (n, (&x, &v)) in samples.xs.iter().zip(&samples.vs).enumerate() {
        let t = n as f64 * h;
        if !x.is_finite() || !v.is_finite() {
            return Err(Error::NonFinite { step: n, t });
        }
        let b = model.b(x)?;
        let unit = b / b.norm();
        let v_par = unit.dot(v);
        let frame = local_frame(b)?;
        let jac = model.b_jacobian(x);
        diagnostics.push(StepDiagnostics {
            mu: magnetic_moment_in(v, b)?,
            energy: 0.5 * v.norm_squared() + model.phi(x),
            v_par,
            v_perp: (v - unit * v_par).norm(),
            gc: guiding_center_in(x, v, b)?,
            nondegeneracy: nondegeneracy_in(&frame, &jac, v, h_step).value(),
        });
        states.push(ParticleState { x, v, t });
    }
    let init = config.initial;
    Ok(Trajectory {
        method,
        h,
        states,
        diagnostics,
        velocity_convention: convention,
        mu0,
        energy0: 0.5 * init.v.norm_squared() + model.phi(init.x),
        richardson: None,
        fd_jacobian: model.uses_fd_jacobian(),
        warnings: Vec::new(),
    })
}

/// Runs the configured method from `t = 0` to `T`.
pub fn integrate(config: &IntegratorConfig, model: &FieldModel) -> Result<Trajectory> {
    config.validate()?;
    let init = config.initial;
    let mu0 = match config.mu0_override {
        Some(mu) => mu,
        None => magnetic_moment(init.x, init.v, model)?,
    };
    let (v0, mu_force) = match config.method {
        Method::Boris => (init.v, 0.0),
        Method::BorisFiltered => (filter_initial_velocity(init, model)?.v, 0.0),
        Method::ModifiedBoris => (filter_initial_velocity(init, model)?.v, mu0),
        Method::Reference => return reference_solution(config, model),
        Method::GcOde => return gc_ode_solve(config, model, mu0),
    };
    let samples = leapfrog(init.x, v0, config.h, config.n_steps(), 1, model, mu_force)?;
    let mut traj = build_trajectory(
        config.method,
        config,
        model,
        samples,
        config.h,
        mu0,
        VelocityConvention::SymmetricDifference,
    )?;
    if config.method.is_large_stepsize() {
        let ratio = config.h * config.h / model.eps();
        let (lo, hi) = config.regime;
        if ratio < lo || ratio > hi {
            traj.warnings.push(format!(
                "h^2/eps = {ratio:.3e} outside the large-stepsize window [{lo:e}, {hi:e}]"
            ));
        }
    }
    if traj.fd_jacobian {
        traj.warnings.push("B' evaluated by finite differences".into());
    }
    Ok(traj)
}

/// Fine-step standard Boris from the unmodified initial data, sampled on
/// the output grid `t_n = n h`, with a step-halving self-check.
pub fn reference_solution(config: &IntegratorConfig, model: &FieldModel) -> Result<Trajectory> {
    config.validate()?;
    let init = config.initial;
    let mu0 = magnetic_moment(init.x, init.v, model)?;
    let (samples, check) = refined_leapfrog(
        init.x,
        init.v,
        config.h,
        config.n_steps(),
        initial_substeps(config, model),
        config.richardson_tol,
        model,
        0.0,
    )?;
    let mut traj = build_trajectory(
        Method::Reference,
        config,
        model,
        samples,
        check.h_ref,
        mu0,
        VelocityConvention::Subsampled,
    )?;
    if !check.passed {
        traj.warnings.push(format!(
            "reference step-halving change {:.3e} exceeds {:.1e}",
            check.rel_change, check.tol
        ));
    }
    traj.richardson = Some(check);
    Ok(traj)
}

/// Guiding-centre initial data: `z⁰(0) = x + (v × B)/|B|²` and
/// `ż⁰(0) = P∥v + P∥(P∥v × B'P⊥v)/|B|² + (drift)`, with the field taken at
/// `z⁰(0)`.
pub fn gc_initial_state(x0: Vec3, v0: Vec3, model: &FieldModel, mu0: f64) -> Result<ParticleState> {
    let z = guiding_center(x0, v0, model)?;
    let b = model.b(z)?;
    let vpar = parallel_part(b, v0)? + gc_parallel_velocity_correction(z, v0, model)?;
    let drift = drift_velocity(model, z, vpar, mu0)?;
    Ok(ParticleState::new(z, vpar + drift))
}

/// Integrates `z̈ = ż × B(z) + E(z) − μ⁰∇|B|(z)` at fine resolution from
/// the guiding-centre initial data.
pub fn gc_ode_solve(config: &IntegratorConfig, model: &FieldModel, mu0: f64) -> Result<Trajectory> {
    config.validate()?;
    let init = config.initial;
    let start = gc_initial_state(init.x, init.v, model, mu0)?;
    let (samples, check) = refined_leapfrog(
        start.x,
        start.v,
        config.h,
        config.n_steps(),
        initial_substeps(config, model),
        config.richardson_tol,
        model,
        mu0,
    )?;
    let mut traj = build_trajectory(
        Method::GcOde,
        config,
        model,
        samples,
        check.h_ref,
        mu0,
        VelocityConvention::Subsampled,
    )?;
    traj.richardson = Some(check);
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{FieldSpec, UniformField};

    fn uniform(b1: Vec3, e: Vec3, eps: f64) -> FieldModel {
        FieldModel::new(UniformField { b1, e }, eps).unwrap()
    }

    #[test]
    fn method_names_parse() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("leapfrog".parse::<Method>().is_err());
    }

    #[test]
    fn rotation_quarter_turn() {
        // h = 2, B = e_z: t = s = e_z maps (1,0,0) to (0,−1,0).
        let m = uniform(Vec3::Z, Vec3::ZERO, 1.0);
        let v = boris_velocity_update(Vec3::X, Vec3::ZERO, 2.0, &m, 0.0).unwrap();
        assert!((v - Vec3::new(0.0, -1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn rotation_preserves_speed() {
        let b = Vec3::new(3.0, -40.0, 7.5);
        for h in [1e-3, 0.1, 2.0, 50.0] {
            let v = Vec3::new(0.3, 0.8, -1.1);
            let w = boris_rotate(v, b, h);
            assert!((w.norm() - v.norm()).abs() <= 1e-13 * v.norm());
        }
    }

    #[test]
    fn modification_vanishes_in_uniform_field() {
        let m = uniform(Vec3::new(0.0, 0.6, 0.8), Vec3::new(0.1, 0.0, 0.0), 1e-2);
        let s = ParticleState { x: Vec3::new(0.1, 0.2, 0.3), v: Vec3::new(1.0, -0.5, 0.2), t: 0.0 };
        let a = boris_one_step(s, 0.3, &m, 0.7, true).unwrap();
        let b = boris_one_step(s, 0.3, &m, 0.7, false).unwrap();
        for i in 0..3 {
            assert_eq!(a.x[i].to_bits(), b.x[i].to_bits());
            assert_eq!(a.v[i].to_bits(), b.v[i].to_bits());
        }
    }

    #[test]
    fn two_step_equilibrium_and_parallel_motion() {
        let m = uniform(Vec3::Z, Vec3::ZERO, 1e-3);
        let x = Vec3::new(0.5, -0.2, 1.0);
        assert!((boris_two_step(x, x, 0.1, &m, 0.0, false).unwrap() - x).norm() <= 1e-14);
        let xs = two_step_positions(Vec3::ZERO, Vec3::Z, 0.25, 40, &m, 0.0, false).unwrap();
        for (n, p) in xs.iter().enumerate() {
            assert!((*p - Vec3::new(0.0, 0.0, n as f64 * 0.25)).norm() <= 1e-12);
        }
    }

    #[test]
    fn two_step_is_time_reversible() {
        let m = FieldSpec::CubicPotential.build(1e-2).unwrap();
        let x0 = Vec3::new(0.0, 1.0, 0.1);
        let x1 = Vec3::new(0.004, 1.02, 0.11);
        let h = 0.05;
        let x2 = boris_two_step(x0, x1, h, &m, 0.01, true).unwrap();
        // Reversing time flips the sign of h in the velocity; equivalently
        // step with −h from (x2, x1).
        let back = boris_two_step(x2, x1, -h, &m, 0.01, true).unwrap();
        assert!((back - x0).norm() <= 1e-10 * x0.norm());
    }

    #[test]
    fn filter_examples() {
        let m = uniform(Vec3::Z, Vec3::ZERO, 1.0);
        let s = ParticleState::new(Vec3::ZERO, Vec3::Z * 2.0);
        assert_eq!(filter_initial_velocity(s, &m).unwrap().v, Vec3::Z * 2.0);
        let s = ParticleState::new(Vec3::ZERO, Vec3::new(1.0, -3.0, 0.0));
        assert_eq!(filter_initial_velocity(s, &m).unwrap().v.norm(), 0.0);
    }

    #[test]
    fn tokamak_filtered_velocity() {
        let m = FieldSpec::Tokamak.build(1.0).unwrap();
        let x = Vec3::new(1.05, 0.0, 0.0);
        let v = Vec3::new(2.1e-3, 4.3e-4, 0.0);
        let f = filter_initial_velocity(ParticleState::new(x, v), &m).unwrap().v;
        let p = crate::geometry::projectors(m.b(x).unwrap()).unwrap();
        assert!((p.perp * f).norm() <= 1e-15);
        assert!((f - p.par * v).norm() <= 1e-18);
    }

    #[test]
    fn step_count_includes_endpoint() {
        let cfg = IntegratorConfig::new(Method::ModifiedBoris, 20.0, 3.75e4, ParticleState::default());
        assert_eq!(cfg.n_steps() + 1, 1876);
        let cfg = IntegratorConfig::new(Method::ModifiedBoris, 0.1, 1.0, ParticleState::default());
        assert_eq!(cfg.n_steps(), 10);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let init = ParticleState::new(Vec3::ZERO, Vec3::Z);
        let m = uniform(Vec3::Z, Vec3::ZERO, 1.0);
        for (h, t) in [(0.0, 1.0), (-1.0, 1.0), (2.0, 1.0), (0.1, f64::NAN)] {
            let cfg = IntegratorConfig::new(Method::Boris, h, t, init);
            assert!(matches!(integrate(&cfg, &m), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn blow_up_is_reported() {
        // Repulsive potential drives the particle out of the runaway ball.
        let f = crate::fields::CustomField::new("push", |_| Vec3::Z, |x: Vec3| -1e6 * x.x)
            .with_electric(|_| Vec3::new(1e6, 0.0, 0.0));
        let m = FieldModel::new(f, 1.0).unwrap();
        let cfg = IntegratorConfig::new(Method::Boris, 1.0, 1e4, ParticleState::new(Vec3::ZERO, Vec3::ZERO));
        assert!(matches!(integrate(&cfg, &m), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn velocity_convention_matches_symmetric_difference() {
        let m = FieldSpec::CubicPotential.build(2f64.powi(-6)).unwrap();
        let init = ParticleState::new(Vec3::new(0.0, 1.0, 0.1), Vec3::new(0.09, 0.55, 0.3));
        let cfg = IntegratorConfig::new(Method::ModifiedBoris, 0.05, 1.0, init);
        let traj = integrate(&cfg, &m).unwrap();
        let xs: Vec<_> = traj.positions().collect();
        let h = cfg.h;
        for n in 1..xs.len() - 1 {
            let sym = (xs[n + 1] - xs[n - 1]) / (2.0 * h);
            assert!((traj.states[n].v - sym).norm() <= 1e-12 * (1.0 + sym.norm()));
        }
        // Endpoint: backward difference plus half the discrete acceleration.
        let n = xs.len() - 1;
        let v_half = (xs[n] - xs[n - 1]) / h;
        let v_next = boris_velocity_update(v_half, xs[n], h, &m, traj.mu0).unwrap();
        let expected = v_half + (v_next - v_half) * 0.5;
        assert!((traj.states[n].v - expected).norm() <= 1e-12);
        assert_eq!(traj.velocity_convention, VelocityConvention::SymmetricDifference);
    }

    #[test]
    fn times_are_on_grid() {
        let m = uniform(Vec3::Z, Vec3::ZERO, 1.0);
        let cfg = IntegratorConfig::new(Method::Boris, 0.1, 5.0, ParticleState::new(Vec3::ZERO, Vec3::X));
        let traj = integrate(&cfg, &m).unwrap();
        for w in traj.states.windows(2) {
            assert!(((w[1].t - w[0].t) - 0.1).abs() <= 1e-12 * 0.1 * 50.0);
        }
    }

    #[test]
    fn regime_warning_recorded() {
        let m = FieldSpec::CubicPotential.build(1e-3).unwrap();
        let init = ParticleState::new(Vec3::new(0.0, 1.0, 0.1), Vec3::new(0.09, 0.55, 0.3));
        // h²/ε = 10³.
        let h = (1e-3_f64 * 1e3).sqrt();
        let cfg = IntegratorConfig::new(Method::ModifiedBoris, h, 1.0, init);
        let traj = integrate(&cfg, &m).unwrap();
        assert!(traj.warnings.iter().any(|w| w.contains("h^2/eps")));
        let ok = IntegratorConfig::new(Method::ModifiedBoris, (1e-3f64).sqrt(), 1.0, init);
        assert!(integrate(&ok, &m).unwrap().warnings.is_empty());
    }

    #[test]
    fn gc_ode_uniform_field_is_straight_line() {
        let m = uniform(Vec3::Z, Vec3::ZERO, 1e-2);
        let init = ParticleState::new(Vec3::ZERO, Vec3::new(0.3, 0.0, 0.5));
        let cfg = IntegratorConfig::new(Method::GcOde, 0.1, 1.0, init);
        let traj = integrate(&cfg, &m).unwrap();
        let z0 = traj.states[0].x;
        assert!((z0 - Vec3::new(0.0, -0.3 * 1e-2, 0.0)).norm() < 1e-15);
        for s in &traj.states {
            let expected = z0 + Vec3::Z * (0.5 * s.t);
            assert!((s.x - expected).norm() < 1e-12, "{:?}", s);
        }
    }
}
