//! The `run`, `banana`, `converge` and `check` experiments.

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use mboris_core::diagnostics::{
    convergence_table, hausdorff_polyline, ConvergenceTable, RowStatus, SweepOptions,
};
use mboris_core::geometry::northrop_residual;
use mboris_core::integrators::{reference_solution, RichardsonCheck};
use mboris_core::{integrate, Error as CoreError, FieldModel, IntegratorConfig, Method, Trajectory};

use crate::config::{ExperimentConfig, BANANA_STEPS};
use crate::error::{HarnessError, Result};
use crate::output::{ensure_dir, fmt_f64, write_json, write_table_csv, write_trajectory_csv};
use crate::plot::LinePlot;

/// What a command wrote and what it has to say about it.
#[derive(Debug, Default)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub lines: Vec<String>,
}

impl Report {
    fn wrote(&mut self, path: PathBuf) {
        self.files.push(path);
    }

    fn say(&mut self, line: String) {
        self.lines.push(line);
    }
}

/// Longest curve kept for Hausdorff distances and plots.
const MAX_CURVE_POINTS: usize = 2000;

fn integrator_config(cfg: &ExperimentConfig, method: Method, h: f64) -> IntegratorConfig {
    let mut c = IntegratorConfig::new(method, h, cfg.t_final(), cfg.initial());
    c.mu0_override = cfg.mu0;
    if let Some(k) = cfg.gyro_substeps {
        c.gyro_substeps = k;
    }
    if let Some(tol) = cfg.richardson_tol {
        c.richardson_tol = tol;
    }
    c
}

fn with_pool<T: Send>(cfg: &ExperimentConfig, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn prepare(cfg: &ExperimentConfig) -> Result<(PathBuf, FieldModel)> {
    cfg.validate()?;
    let out = cfg.out_dir();
    ensure_dir(&out)?;
    let model = cfg.field().build(cfg.eps())?;
    Ok((out, model))
}

fn h_tag(h: f64) -> String {
    format!("h{h}")
}

fn thin<T: Copy>(points: &[T], max: usize) -> Vec<T> {
    let stride = points.len().div_ceil(max.max(1)).max(1);
    let mut out: Vec<T> = points.iter().step_by(stride).copied().collect();
    if !(points.len() - 1).is_multiple_of(stride) {
        out.push(points[points.len() - 1]);
    }
    out
}

/// `(R, x₃)` projection of the positions.
pub fn rz_positions(traj: &Trajectory) -> Vec<[f64; 2]> {
    traj.states.iter().map(|s| [(s.x.x * s.x.x + s.x.y * s.x.y).sqrt(), s.x.z]).collect()
}

/// `(R, x₃)` projection of the guiding centres.
pub fn rz_guiding_centres(traj: &Trajectory) -> Vec<[f64; 2]> {
    traj.diagnostics.iter().map(|d| [(d.gc.x * d.gc.x + d.gc.y * d.gc.y).sqrt(), d.gc.z]).collect()
}

#[derive(Debug, Serialize)]
pub struct RunMetadata {
    pub method: Method,
    pub field: String,
    pub h: f64,
    pub eps: f64,
    pub h2_over_eps: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub steps: usize,
    pub mu0: f64,
    pub wall_time_s: f64,
    pub max_nondegeneracy: f64,
    pub max_mu_drift: f64,
    pub max_energy_drift: f64,
    pub richardson: Option<RichardsonCheck>,
    pub warnings: Vec<String>,
}

fn metadata(traj: &Trajectory, cfg: &ExperimentConfig, model: &FieldModel, wall: f64) -> RunMetadata {
    RunMetadata {
        method: traj.method,
        field: model.name().to_string(),
        h: traj.h,
        eps: model.eps(),
        h2_over_eps: traj.h * traj.h / model.eps(),
        t_final: cfg.t_final(),
        steps: traj.len() - 1,
        mu0: traj.mu0,
        wall_time_s: wall,
        max_nondegeneracy: traj.max_nondegeneracy(),
        max_mu_drift: traj.max_mu_drift(),
        max_energy_drift: traj.max_energy_drift(),
        richardson: traj.richardson,
        warnings: traj.warnings.clone(),
    }
}

pub fn cmd_run(cfg: &ExperimentConfig) -> Result<Report> {
    let (out, model) = prepare(cfg)?;
    let method = cfg.method();
    let start = Instant::now();
    let traj = with_pool(cfg, || integrate(&integrator_config(cfg, method, cfg.h()), &model))??;
    let wall = start.elapsed().as_secs_f64();
    let mut report = Report::default();
    let csv = out.join("trajectory.csv");
    write_trajectory_csv(&csv, &traj)?;
    report.wrote(csv);
    let meta = metadata(&traj, cfg, &model, wall);
    let json = out.join("run.json");
    write_json(&json, &meta)?;
    report.wrote(json);
    if cfg.emit_plots {
        let mut p = LinePlot::new(&format!("{method}, h = {}", traj.h), "R", "x3");
        p.add("particle", thin(&rz_positions(&traj), MAX_CURVE_POINTS), false);
        p.add("guiding centre", thin(&rz_guiding_centres(&traj), MAX_CURVE_POINTS), false);
        let svg = out.join("trajectory.svg");
        p.write(&svg)?;
        report.wrote(svg);
    }
    report.say(format!(
        "{method} on {}: {} steps of h = {} (h^2/eps = {:.3e}), mu0 = {:.6e}, max |L^-1| = {:.6}",
        model.name(),
        meta.steps,
        traj.h,
        meta.h2_over_eps,
        traj.mu0,
        meta.max_nondegeneracy
    ));
    for w in &traj.warnings {
        report.say(format!("warning: {w}"));
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct BananaCell {
    pub method: Method,
    pub h: f64,
    /// `"ok"` or a description of the blow-up.
    pub status: String,
    pub gc_hausdorff: Option<f64>,
    pub raw_hausdorff: Option<f64>,
    pub max_nondegeneracy: Option<f64>,
    pub csv: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BananaSummary {
    pub field: String,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub reference_h: f64,
    pub reference_richardson: Option<RichardsonCheck>,
    pub reference_mu_drift: f64,
    pub cells: Vec<BananaCell>,
    /// For each stepsize: distance of every other method divided by the
    /// modified-boris distance.
    pub ratios_to_modified: Vec<(f64, Method, f64)>,
}

impl BananaSummary {
    pub fn cell(&self, method: Method, h: f64) -> Option<&BananaCell> {
        self.cells.iter().find(|c| c.method == method && c.h == h)
    }

    pub fn gc_distance(&self, method: Method, h: f64) -> f64 {
        self.cell(method, h).and_then(|c| c.gc_hausdorff).unwrap_or(f64::INFINITY)
    }
}

fn banana_methods(cfg: &ExperimentConfig) -> Vec<Method> {
    if cfg.methods.is_empty() {
        vec![Method::Boris, Method::BorisFiltered, Method::ModifiedBoris]
    } else {
        cfg.methods.clone()
    }
}

fn is_blow_up(e: &CoreError) -> bool {
    matches!(e, CoreError::NonFinite { .. } | CoreError::FieldDomain { .. } | CoreError::ZeroField)
}

/// Runs the banana grid and writes its files; also returns the summary.
pub fn run_banana(cfg: &ExperimentConfig) -> Result<(Report, BananaSummary)> {
    let (out, model) = prepare(cfg)?;
    let steps = match (&cfg.h_list, cfg.h) {
        (Some(list), _) => list.clone(),
        (None, Some(h)) => vec![h],
        (None, None) => BANANA_STEPS.to_vec(),
    };
    let methods = banana_methods(cfg);
    let h_ref = steps.iter().copied().fold(f64::INFINITY, f64::min);
    let mut report = Report::default();

    let (reference, cells) = with_pool(cfg, || -> Result<_> {
        let cell_inputs: Vec<(Method, f64)> = steps.iter().flat_map(|&h| methods.iter().map(move |&m| (m, h))).collect();
        let (reference, runs) = rayon::join(
            || reference_solution(&integrator_config(cfg, Method::Reference, h_ref), &model),
            || {
                cell_inputs
                    .par_iter()
                    .map(|&(m, h)| (m, h, integrate(&integrator_config(cfg, m, h), &model)))
                    .collect::<Vec<_>>()
            },
        );
        Ok((reference?, runs))
    })??;

    let ref_csv = out.join(format!("reference_{}.csv", h_tag(h_ref)));
    write_trajectory_csv(&ref_csv, &reference)?;
    report.wrote(ref_csv);
    let ref_gc = thin(&rz_guiding_centres(&reference), MAX_CURVE_POINTS);
    let ref_raw = thin(&rz_positions(&reference), MAX_CURVE_POINTS);

    let mut summary_cells = Vec::new();
    let mut kept: Vec<(Method, f64, Trajectory)> = Vec::new();
    for (method, h, run) in cells {
        match run {
            Ok(traj) => {
                let name = format!("{method}_{}.csv", h_tag(h));
                let path = out.join(&name);
                write_trajectory_csv(&path, &traj)?;
                report.wrote(path);
                let gc = hausdorff_polyline(&thin(&rz_guiding_centres(&traj), MAX_CURVE_POINTS), &ref_gc);
                let raw = hausdorff_polyline(&thin(&rz_positions(&traj), MAX_CURVE_POINTS), &ref_raw);
                report.say(format!(
                    "{method:>15} h = {h:<5} guiding-centre distance {gc:.3e}, raw distance {raw:.3e}"
                ));
                summary_cells.push(BananaCell {
                    method,
                    h,
                    status: "ok".into(),
                    gc_hausdorff: Some(gc),
                    raw_hausdorff: Some(raw),
                    max_nondegeneracy: Some(traj.max_nondegeneracy()),
                    csv: Some(name),
                });
                kept.push((method, h, traj));
            }
            Err(e) if is_blow_up(&e) => {
                report.say(format!("{method:>15} h = {h:<5} blew up: {e}"));
                summary_cells.push(BananaCell {
                    method,
                    h,
                    status: format!("blow-up: {e}"),
                    gc_hausdorff: None,
                    raw_hausdorff: None,
                    max_nondegeneracy: None,
                    csv: None,
                });
            }
            Err(e) => return Err(e.into()),
        }
    }

    let mut ratios = Vec::new();
    for &h in &steps {
        let base = summary_cells
            .iter()
            .find(|c| c.method == Method::ModifiedBoris && c.h == h)
            .and_then(|c| c.gc_hausdorff);
        if let Some(base) = base {
            for c in summary_cells.iter().filter(|c| c.h == h && c.method != Method::ModifiedBoris) {
                let r = c.gc_hausdorff.unwrap_or(f64::INFINITY) / base;
                ratios.push((h, c.method, r));
                report.say(format!("h = {h}: {} / modified-boris distance ratio {r:.3e}", c.method));
            }
        }
    }

    let summary = BananaSummary {
        field: model.name().to_string(),
        t_final: cfg.t_final(),
        reference_h: h_ref,
        reference_richardson: reference.richardson,
        reference_mu_drift: reference.max_mu_drift(),
        cells: summary_cells,
        ratios_to_modified: ratios,
    };
    let json = out.join("banana_summary.json");
    write_json(&json, &summary)?;
    report.wrote(json);
    let rows: Vec<Vec<String>> = summary
        .cells
        .iter()
        .map(|c| {
            let f = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
            vec![
                c.method.to_string(),
                fmt_f64(c.h),
                c.status.clone(),
                f(c.gc_hausdorff),
                f(c.raw_hausdorff),
                f(c.max_nondegeneracy),
            ]
        })
        .collect();
    let table = out.join("banana_summary.csv");
    write_table_csv(&table, &["method", "h", "status", "gc_hausdorff", "raw_hausdorff", "max_nondegeneracy"], &rows)?;
    report.wrote(table);

    if cfg.emit_plots {
        for &h in &steps {
            let mut p = LinePlot::new(&format!("banana orbits, h = {h}"), "R", "x3");
            p.add("reference", ref_raw.clone(), false);
            for (m, _, t) in kept.iter().filter(|(_, hh, _)| *hh == h) {
                p.add(m.as_str(), thin(&rz_positions(t), MAX_CURVE_POINTS), false);
            }
            let svg = out.join(format!("banana_{}.svg", h_tag(h)));
            p.write(&svg)?;
            report.wrote(svg);
        }
    }
    let ref_line = match reference.richardson {
        Some(c) => format!(
            "reference: {} substeps per output step, step-halving change {:.2e} ({})",
            c.substeps,
            c.rel_change,
            if c.passed { "passed" } else { "FAILED" }
        ),
        None => "reference: no step-halving check".into(),
    };
    report.lines.insert(0, ref_line);
    Ok((report, summary))
}

pub fn cmd_banana(cfg: &ExperimentConfig) -> Result<Report> {
    run_banana(cfg).map(|(r, _)| r)
}

#[derive(Debug, Clone, Serialize)]
pub struct PlateauVerdict {
    pub h_coarse: f64,
    pub h_fine: f64,
    pub ratio_x: f64,
    pub ratio_vpar: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpreadVerdict {
    pub h: f64,
    pub spread_x: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExponentVerdict {
    pub h2_over_eps: f64,
    pub exponent: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdicts {
    pub plateau_ratio: Vec<PlateauVerdict>,
    pub eps_independence: Vec<SpreadVerdict>,
    pub vperp_exponent: Vec<ExponentVerdict>,
    pub pass: bool,
}

pub const PLATEAU_WINDOW: (f64, f64) = (3.0, 5.0);
pub const EXPONENT_WINDOW: (f64, f64) = (1.7, 2.3);
pub const MAX_SPREAD: f64 = 0.5;

pub fn verdicts(table: &ConvergenceTable) -> Verdicts {
    let inside = |x: f64, w: (f64, f64)| x >= w.0 && x <= w.1;
    let plateau_ratio: Vec<PlateauVerdict> = table
        .orders
        .iter()
        .map(|o| PlateauVerdict {
            h_coarse: o.h_coarse,
            h_fine: o.h_fine,
            ratio_x: o.ratio_x,
            ratio_vpar: o.ratio_vpar,
            pass: inside(o.ratio_x, PLATEAU_WINDOW) && inside(o.ratio_vpar, PLATEAU_WINDOW),
        })
        .collect();
    let eps_independence: Vec<SpreadVerdict> = table
        .plateaus
        .iter()
        .map(|p| SpreadVerdict { h: p.h, spread_x: p.spread_x, pass: p.spread_x < MAX_SPREAD })
        .collect();
    let vperp_exponent: Vec<ExponentVerdict> = table
        .vperp_fixed_ratio
        .iter()
        .map(|f| ExponentVerdict { h2_over_eps: f.ratio, exponent: f.exponent, pass: inside(f.exponent, EXPONENT_WINDOW) })
        .collect();
    let pass = plateau_ratio.iter().all(|v| v.pass)
        && eps_independence.iter().all(|v| v.pass)
        && !vperp_exponent.is_empty()
        && vperp_exponent.iter().all(|v| v.pass);
    Verdicts { plateau_ratio, eps_independence, vperp_exponent, pass }
}

#[derive(Debug, Serialize)]
struct ConvergeSummary<'a> {
    field: String,
    table: &'a ConvergenceTable,
    verdicts: Verdicts,
    wall_time_s: f64,
}

pub const CONVERGENCE_HEADER: [&str; 17] = [
    "h", "eps", "j", "h2_over_eps", "status", "err_x", "err_vpar", "err_vperp", "err_gc", "final_x", "final_vpar",
    "final_vperp", "final_gc", "mu_drift", "energy_drift", "max_nondegeneracy", "message",
];

fn pass_word(b: bool) -> &'static str {
    if b {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Runs the sweep and writes its files; also returns the table.
pub fn run_converge(cfg: &ExperimentConfig) -> Result<(Report, ConvergenceTable)> {
    let cfg = &ExperimentConfig { experiment: Some(crate::config::Experiment::Converge), ..cfg.clone() };
    cfg.validate()?;
    let out = cfg.out_dir();
    ensure_dir(&out)?;
    let field = cfg.field();
    let h_list = cfg.h_list();
    let eps_list = cfg.eps_list();
    let mut opts = SweepOptions { method: cfg.method(), ..Default::default() };
    if let Some(k) = cfg.gyro_substeps {
        opts.gyro_substeps = k;
    }
    if let Some(tol) = cfg.richardson_tol {
        opts.richardson_tol = tol;
    }
    let start = Instant::now();
    let table = with_pool(cfg, || convergence_table(&field, &h_list, &eps_list, cfg.t_final(), cfg.initial(), &opts))??;
    let wall = start.elapsed().as_secs_f64();
    let mut report = Report::default();

    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            let j = -r.eps.log2();
            let mut row = vec![
                fmt_f64(r.h),
                fmt_f64(r.eps),
                if (j - j.round()).abs() < 1e-9 { format!("{}", j.round() as i64) } else { String::new() },
                fmt_f64(r.h * r.h / r.eps),
            ];
            match (&r.status, &r.report) {
                (RowStatus::Ok, Some(e)) => {
                    row.push("ok".into());
                    for v in [
                        e.err_x,
                        e.err_vpar,
                        e.err_vperp,
                        e.err_gc,
                        e.final_x,
                        e.final_vpar,
                        e.final_vperp,
                        e.final_gc,
                        e.mu_drift,
                        e.energy_drift,
                        r.max_nondegeneracy,
                    ] {
                        row.push(fmt_f64(v));
                    }
                    row.push(String::new());
                }
                _ => {
                    let msg = match &r.status {
                        RowStatus::NonFinite(m) => m.clone(),
                        RowStatus::Ok => String::new(),
                    };
                    row.push("non-finite".into());
                    row.extend(std::iter::repeat_n(String::new(), 11));
                    row.push(msg);
                }
            }
            row
        })
        .collect();
    let csv = out.join("convergence.csv");
    write_table_csv(&csv, &CONVERGENCE_HEADER, &rows)?;
    report.wrote(csv);

    let ref_rows: Vec<Vec<String>> = table
        .references
        .iter()
        .map(|r| {
            let c = r.richardson;
            vec![
                fmt_f64(r.eps),
                fmt_f64(r.mu0),
                fmt_f64(r.mu_drift),
                c.map(|c| c.substeps.to_string()).unwrap_or_default(),
                c.map(|c| fmt_f64(c.rel_change)).unwrap_or_default(),
                c.map(|c| c.passed.to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    let refs = out.join("references.csv");
    write_table_csv(&refs, &["eps", "mu0", "mu_drift", "substeps", "richardson_change", "richardson_passed"], &ref_rows)?;
    report.wrote(refs);

    let v = verdicts(&table);
    for p in &v.plateau_ratio {
        report.say(format!(
            "plateau h = {} -> {}: err_x ratio {:.3}, err_vpar ratio {:.3} {}",
            p.h_coarse,
            p.h_fine,
            p.ratio_x,
            p.ratio_vpar,
            pass_word(p.pass)
        ));
    }
    for s in &v.eps_independence {
        report.say(format!("eps-independence h = {}: spread {:.2e} {}", s.h, s.spread_x, pass_word(s.pass)));
    }
    for e in &v.vperp_exponent {
        report.say(format!(
            "|v_perp| exponent along h^2/eps = {}: {:.3} {}",
            e.h2_over_eps,
            e.exponent,
            pass_word(e.pass)
        ));
    }
    report.say(format!("|v_perp| plateau exponent at fixed small eps: {:.3}", table.vperp_exponent));
    report.say(format!("plateau proportional to h^2: {}", pass_word(v.pass)));

    let json = out.join("convergence_summary.json");
    write_json(&json, &ConvergeSummary { field: field.name().into(), table: &table, verdicts: v, wall_time_s: wall })?;
    report.wrote(json);

    if cfg.emit_plots {
        let quantities: [(&str, fn(&mboris_core::diagnostics::ErrorReport) -> f64); 3] =
            [("err_x", |e| e.final_x), ("err_vpar", |e| e.final_vpar), ("err_vperp", |e| e.err_vperp)];
        for (name, get) in quantities {
            let mut p = LinePlot::new(&format!("{name} vs eps"), "eps", name).log_log();
            for &h in &h_list {
                let pts = table
                    .rows
                    .iter()
                    .filter(|r| r.h == h)
                    .filter_map(|r| r.report.as_ref().map(|e| [r.eps, get(e)]))
                    .collect();
                p.add(&format!("h = {h}"), pts, true);
            }
            let svg = out.join(format!("{name}_vs_eps.svg"));
            p.write(&svg)?;
            report.wrote(svg);
        }
    }
    Ok((report, table))
}

pub fn cmd_converge(cfg: &ExperimentConfig) -> Result<Report> {
    run_converge(cfg).map(|(r, _)| r)
}

#[derive(Debug, Serialize)]
pub struct CheckReport {
    pub run: RunMetadata,
    pub nondegeneracy_bound: f64,
    pub northrop_residuals: Vec<NorthropSample>,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct NorthropSample {
    pub step: usize,
    pub residual: f64,
    pub grad_abs_b: f64,
}

pub fn cmd_check(cfg: &ExperimentConfig) -> Result<Report> {
    let (out, model) = prepare(cfg)?;
    let method = cfg.method();
    let start = Instant::now();
    let traj = with_pool(cfg, || integrate(&integrator_config(cfg, method, cfg.h()), &model))??;
    let wall = start.elapsed().as_secs_f64();
    let samples = cfg.residual_samples.unwrap_or(20).max(1);
    let stride = traj.len().div_ceil(samples).max(1);
    let mut residuals = Vec::new();
    for (n, s) in traj.states.iter().enumerate().step_by(stride) {
        residuals.push(NorthropSample {
            step: n,
            residual: northrop_residual(&model, s.x)?.norm(),
            grad_abs_b: model.grad_abs_b(s.x)?.norm(),
        });
    }
    let run = metadata(&traj, cfg, &model, wall);
    let bound = cfg.nondegeneracy_bound();
    let pass = run.max_nondegeneracy <= bound;
    let mut report = Report::default();
    report.say(format!(
        "{method} on {}: max |L^-1| = {:.6} (bound {bound}), max mu drift {:.3e}, max energy drift {:.3e}",
        model.name(),
        run.max_nondegeneracy,
        run.max_mu_drift,
        run.max_energy_drift
    ));
    let worst = residuals.iter().map(|r| r.residual).fold(0.0, f64::max);
    report.say(format!("Northrop residual: max {worst:.3e} over {} points", residuals.len()));
    for w in &run.warnings {
        report.say(format!("warning: {w}"));
    }
    let path = out.join("check.json");
    write_json(&path, &CheckReport { run, nondegeneracy_bound: bound, northrop_residuals: residuals, pass })?;
    report.wrote(path);
    if !pass {
        return Err(HarnessError::CheckFailed(format!("nondegeneracy norm exceeds bound {bound}")));
    }
    Ok(report)
}

pub fn execute(cfg: &ExperimentConfig) -> Result<Report> {
    use crate::config::Experiment::*;
    match cfg.experiment.unwrap_or(Run) {
        Run => cmd_run(cfg),
        Banana => cmd_banana(cfg),
        Converge => cmd_converge(cfg),
        Check => cmd_check(cfg),
    }
}
