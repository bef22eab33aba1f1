//! Error metrics against oracle trajectories and the (h, ε) convergence
//! sweep.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{FieldModel, FieldSpec};
use crate::geometry::{guiding_center, parallel_part};
use crate::integrators::{
    integrate, reference_solution, IntegratorConfig, Method, ParticleState, RichardsonCheck, Trajectory,
};
use crate::vecmath::Vec3;

/// Maximum-over-grid and final-time errors of a trajectory against a
/// reference on the same grid.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ErrorReport {
    pub err_x: f64,
    pub err_vpar: f64,
    pub err_vperp: f64,
    pub err_gc: f64,
    pub mu_drift: f64,
    pub energy_drift: f64,
    pub final_x: f64,
    pub final_vpar: f64,
    pub final_vperp: f64,
    pub final_gc: f64,
}

fn check_grids(a: &Trajectory, b: &Trajectory) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch(format!("{} vs {} samples", a.len(), b.len())));
    }
    let scale = a.last().t.abs().max(b.last().t.abs()).max(f64::MIN_POSITIVE);
    for (n, (p, q)) in a.states.iter().zip(&b.states).enumerate() {
        if (p.t - q.t).abs() > 1e-10 * scale {
            return Err(Error::GridMismatch(format!("step {n}: t = {} vs {}", p.t, q.t)));
        }
    }
    Ok(())
}

/// Compares `traj` with `reference`; parallel velocities use each
/// trajectory's own position for its projector.
pub fn compare(traj: &Trajectory, reference: &Trajectory, model: &FieldModel) -> Result<ErrorReport> {
    check_grids(traj, reference)?;
    let mut r = ErrorReport::default();
    for (n, (s, q)) in traj.states.iter().zip(&reference.states).enumerate() {
        let b = model.b(s.x)?;
        let b_ref = model.b(q.x)?;
        let vpar = parallel_part(b, s.v)?;
        let vpar_ref = parallel_part(b_ref, q.v)?;
        let dx = (s.x - q.x).norm();
        let dvpar = (vpar - vpar_ref).norm();
        let vperp = (s.v - vpar).norm();
        let dgc = (guiding_center(s.x, s.v, model)? - guiding_center(q.x, q.v, model)?).norm();
        r.err_x = r.err_x.max(dx);
        r.err_vpar = r.err_vpar.max(dvpar);
        r.err_vperp = r.err_vperp.max(vperp);
        r.err_gc = r.err_gc.max(dgc);
        if n + 1 == traj.len() {
            r.final_x = dx;
            r.final_vpar = dvpar;
            r.final_vperp = vperp;
            r.final_gc = dgc;
        }
    }
    r.mu_drift = traj.max_mu_drift();
    r.energy_drift = traj.max_energy_drift();
    Ok(r)
}

/// Every `stride`-th sample of a trajectory.
pub fn subsample(traj: &Trajectory, stride: usize) -> Trajectory {
    let stride = stride.max(1);
    let mut out = traj.clone();
    out.h = traj.h * stride as f64;
    out.states = traj.states.iter().step_by(stride).copied().collect();
    out.diagnostics = traj.diagnostics.iter().step_by(stride).copied().collect();
    out
}

/// Maximum deviation between the positions of a guiding-centre solution
/// and the guiding centres extracted from a particle trajectory.
pub fn gc_tracking_error(gc: &Trajectory, particle: &Trajectory, model: &FieldModel) -> Result<f64> {
    check_grids(gc, particle)?;
    let mut worst = 0.0_f64;
    for (z, s) in gc.states.iter().zip(&particle.states) {
        worst = worst.max((z.x - guiding_center(s.x, s.v, model)?).norm());
    }
    Ok(worst)
}

/// Distance between two polylines: the symmetric Hausdorff distance with
/// points of one curve measured against the segments of the other.
pub fn hausdorff_polyline(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    directed_hausdorff(a, b).max(directed_hausdorff(b, a))
}

fn directed_hausdorff(points: &[[f64; 2]], curve: &[[f64; 2]]) -> f64 {
    if points.is_empty() || curve.is_empty() {
        return f64::INFINITY;
    }
    points
        .par_iter()
        .map(|p| {
            if curve.len() == 1 {
                return dist2(*p, curve[0]).sqrt();
            }
            curve
                .windows(2)
                .map(|w| segment_dist2(*p, w[0], w[1]))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .reduce(|| 0.0, f64::max)
}

fn dist2(p: [f64; 2], q: [f64; 2]) -> f64 {
    (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)
}

fn segment_dist2(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    if len2 == 0.0 {
        return dist2(p, a);
    }
    let t = (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0);
    dist2(p, [a[0] + t * d[0], a[1] + t * d[1]])
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowStatus {
    Ok,
    NonFinite(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub eps: f64,
    pub status: RowStatus,
    /// `None` when the run under test blew up.
    pub report: Option<ErrorReport>,
    pub max_nondegeneracy: f64,
}

/// Per-ε oracle information.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceSummary {
    pub eps: f64,
    pub mu0: f64,
    pub mu_drift: f64,
    pub richardson: Option<RichardsonCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Plateau {
    pub h: f64,
    /// Median over the smallest three ε of the final-time errors.
    pub err_x: f64,
    pub err_vpar: f64,
    /// Median over the smallest three ε of `max_n |vⁿ⊥|`.
    pub err_vperp: f64,
    /// `(max − min)/median` of final-time `err_x` over the same ε values.
    pub spread_x: f64,
    pub spread_vpar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderEstimate {
    pub h_coarse: f64,
    pub h_fine: f64,
    pub ratio_x: f64,
    pub ratio_vpar: f64,
    pub order_x: f64,
    pub order_vpar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub method: Method,
    pub t_final: f64,
    pub rows: Vec<ConvergenceRow>,
    pub references: Vec<ReferenceSummary>,
    pub plateaus: Vec<Plateau>,
    pub orders: Vec<OrderEstimate>,
    /// Power-law exponent of the `err_vperp` plateaus in `h`.
    pub vperp_exponent: f64,
    /// Exponent of `err_vperp` in `h` along each constant-`h²/ε` diagonal
    /// of the grid that contains every `h`.
    pub vperp_fixed_ratio: Vec<FixedRatioFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedRatioFit {
    /// `h²/ε` along the diagonal.
    pub ratio: f64,
    pub h: Vec<f64>,
    pub err_vperp: Vec<f64>,
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub method: Method,
    pub gyro_substeps: usize,
    pub richardson_tol: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { method: Method::ModifiedBoris, gyro_substeps: 100, richardson_tol: 1e-6 }
    }
}

/// Common grid step for the references, when every `h` is an integer
/// multiple of the smallest one.
fn shared_grid(h_list: &[f64]) -> Option<(f64, Vec<usize>)> {
    let h_min = h_list.iter().copied().fold(f64::INFINITY, f64::min);
    let strides: Option<Vec<usize>> = h_list
        .iter()
        .map(|&h| {
            let k = (h / h_min).round();
            ((h / h_min - k).abs() < 1e-9).then_some(k as usize)
        })
        .collect();
    strides.map(|s| (h_min, s))
}

/// Runs the method under test and the fine-step reference for every
/// `(h, ε)` cell.
pub fn convergence_table(
    field: &FieldSpec,
    h_list: &[f64],
    eps_list: &[f64],
    t_final: f64,
    initial: ParticleState,
    options: &SweepOptions,
) -> Result<ConvergenceTable> {
    if h_list.is_empty() || eps_list.is_empty() {
        return Err(Error::InvalidConfig("h and eps lists must be non-empty".into()));
    }
    let base = |method: Method, h: f64| {
        let mut cfg = IntegratorConfig::new(method, h, t_final, initial);
        cfg.gyro_substeps = options.gyro_substeps;
        cfg.richardson_tol = options.richardson_tol;
        cfg
    };
    for &h in h_list {
        base(options.method, h).validate()?;
    }
    let shared = shared_grid(h_list);

    // One reference per ε on the finest grid when the h values nest,
    // otherwise one per cell.
    let shared_refs: Option<Vec<Trajectory>> = match &shared {
        Some((h_min, _)) => Some(
            eps_list
                .par_iter()
                .map(|&eps| reference_solution(&base(Method::Reference, *h_min), &field.build(eps)?))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };

    let cells: Vec<(usize, usize)> =
        (0..h_list.len()).flat_map(|i| (0..eps_list.len()).map(move |j| (i, j))).collect();
    let results: Vec<(ConvergenceRow, Option<Trajectory>)> = cells
        .par_iter()
        .map(|&(i, j)| -> Result<(ConvergenceRow, Option<Trajectory>)> {
            let (h, eps) = (h_list[i], eps_list[j]);
            let model = field.build(eps)?;
            let (reference, own) = match (&shared, &shared_refs) {
                (Some((_, strides)), Some(refs)) => (subsample(&refs[j], strides[i]), None),
                _ => {
                    let r = reference_solution(&base(Method::Reference, h), &model)?;
                    (r.clone(), Some(r))
                }
            };
            let run = if options.method == Method::Reference {
                Ok(reference.clone())
            } else {
                integrate(&base(options.method, h), &model)
            };
            let row = match run {
                Ok(traj) => ConvergenceRow {
                    h,
                    eps,
                    status: RowStatus::Ok,
                    report: Some(compare(&traj, &reference, &model)?),
                    max_nondegeneracy: traj.max_nondegeneracy(),
                },
                Err(e @ Error::NonFinite { .. }) => ConvergenceRow {
                    h,
                    eps,
                    status: RowStatus::NonFinite(e.to_string()),
                    report: None,
                    max_nondegeneracy: f64::NAN,
                },
                Err(e) => return Err(e),
            };
            Ok((row, own))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(results.len());
    let mut per_cell_refs = Vec::new();
    for (row, own) in results {
        rows.push(row);
        per_cell_refs.push(own);
    }

    let references = eps_list
        .iter()
        .enumerate()
        .map(|(j, &eps)| {
            let r = match &shared_refs {
                Some(refs) => &refs[j],
                None => per_cell_refs[j].as_ref().expect("per-cell reference"),
            };
            ReferenceSummary { eps, mu0: r.mu0, mu_drift: r.max_mu_drift(), richardson: r.richardson }
        })
        .collect();

    let plateaus = plateaus(&rows, h_list, eps_list);
    let orders = order_estimates(&plateaus);
    let hs: Vec<f64> = plateaus.iter().map(|p| p.h).collect();
    let vp: Vec<f64> = plateaus.iter().map(|p| p.err_vperp).collect();
    let vperp_fixed_ratio = fixed_ratio_fits(&rows, h_list);
    Ok(ConvergenceTable {
        method: options.method,
        t_final,
        rows,
        references,
        plateaus,
        orders,
        vperp_exponent: log_log_slope(&hs, &vp),
        vperp_fixed_ratio,
    })
}

fn fixed_ratio_fits(rows: &[ConvergenceRow], h_list: &[f64]) -> Vec<FixedRatioFit> {
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs());
    let mut ratios: Vec<f64> = Vec::new();
    for r in rows {
        let q = r.h * r.h / r.eps;
        if !ratios.iter().any(|&x| same(x, q)) {
            ratios.push(q);
        }
    }
    ratios.sort_by(|a, b| a.total_cmp(b));
    let mut fits = Vec::new();
    for q in ratios {
        let mut h = Vec::new();
        let mut err = Vec::new();
        for &hh in h_list {
            let cell = rows.iter().find(|r| r.h == hh && same(r.h * r.h / r.eps, q));
            if let Some(rep) = cell.and_then(|r| r.report) {
                h.push(hh);
                err.push(rep.err_vperp);
            }
        }
        if h.len() == h_list.len() && h.len() >= 2 {
            let exponent = log_log_slope(&h, &err);
            fits.push(FixedRatioFit { ratio: q, h, err_vperp: err, exponent });
        }
    }
    fits
}

fn spread(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    let med = median(&mut v);
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if med > 0.0 {
        (hi - lo) / med
    } else {
        0.0
    }
}

fn plateaus(rows: &[ConvergenceRow], h_list: &[f64], eps_list: &[f64]) -> Vec<Plateau> {
    let mut smallest: Vec<f64> = eps_list.to_vec();
    smallest.sort_by(|a, b| a.total_cmp(b));
    smallest.truncate(3);
    h_list
        .iter()
        .map(|&h| {
            let reports: Vec<ErrorReport> = rows
                .iter()
                .filter(|r| r.h == h && smallest.contains(&r.eps))
                .map(|r| r.report.unwrap_or(ErrorReport {
                    final_x: f64::INFINITY,
                    final_vpar: f64::INFINITY,
                    err_vperp: f64::INFINITY,
                    ..Default::default()
                }))
                .collect();
            let xs: Vec<f64> = reports.iter().map(|r| r.final_x).collect();
            let vs: Vec<f64> = reports.iter().map(|r| r.final_vpar).collect();
            let mut vp: Vec<f64> = reports.iter().map(|r| r.err_vperp).collect();
            Plateau {
                h,
                err_x: median(&mut xs.clone()),
                err_vpar: median(&mut vs.clone()),
                err_vperp: median(&mut vp),
                spread_x: spread(&xs),
                spread_vpar: spread(&vs),
            }
        })
        .collect()
}

fn order_estimates(plateaus: &[Plateau]) -> Vec<OrderEstimate> {
    let mut sorted: Vec<&Plateau> = plateaus.iter().collect();
    sorted.sort_by(|a, b| b.h.total_cmp(&a.h));
    sorted
        .windows(2)
        .map(|w| {
            let (c, f) = (w[0], w[1]);
            let lh = (c.h / f.h).ln();
            OrderEstimate {
                h_coarse: c.h,
                h_fine: f.h,
                ratio_x: c.err_x / f.err_x,
                ratio_vpar: c.err_vpar / f.err_vpar,
                order_x: (c.err_x / f.err_x).ln() / lh,
                order_vpar: (c.err_vpar / f.err_vpar).ln() / lh,
            }
        })
        .collect()
}

/// Positions of a trajectory shifted by a constant vector.
pub fn shifted(traj: &Trajectory, d: Vec3) -> Trajectory {
    let mut t = traj.clone();
    t.states.iter_mut().for_each(|s| s.x += d);
    t
}
