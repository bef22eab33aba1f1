//! Trajectory CSV files and JSON metadata.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use mboris_core::integrators::{StepDiagnostics, VelocityConvention};
use mboris_core::{Method, ParticleState, Trajectory, Vec3};

use crate::error::{HarnessError, Result};

pub const TRAJECTORY_HEADER: [&str; 16] = [
    "step", "t", "x1", "x2", "x3", "v1", "v2", "v3", "vpar", "vperp", "mu", "energy", "gc1", "gc2", "gc3", "R",
];

/// 17 significant digits, exact round trip for `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::Config(format!("output directory {}: {e}", dir.display())))
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let csv_err = |source| HarnessError::Csv { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(TRAJECTORY_HEADER).map_err(csv_err)?;
    for (n, (s, d)) in traj.states.iter().zip(&traj.diagnostics).enumerate() {
        let r = (s.x.x * s.x.x + s.x.y * s.x.y).sqrt();
        let mut rec = Vec::with_capacity(16);
        rec.push(n.to_string());
        for v in [s.t, s.x.x, s.x.y, s.x.z, s.v.x, s.v.y, s.v.z, d.v_par, d.v_perp, d.mu, d.energy, d.gc.x, d.gc.y, d.gc.z, r]
        {
            rec.push(fmt_f64(v));
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Reads a trajectory CSV back. The stepsize is taken from the time
/// column; the nondegeneracy column is not stored and reads as NaN.
pub fn read_trajectory_csv(path: &Path, method: Method) -> Result<Trajectory> {
    let csv_err = |source| HarnessError::Csv { path: path.to_path_buf(), source };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().ne(TRAJECTORY_HEADER) {
        return Err(HarnessError::Config(format!("{}: unexpected header", path.display())));
    }
    let mut states = Vec::new();
    let mut diagnostics = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let f = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
        };
        let x = Vec3::new(f(2)?, f(3)?, f(4)?);
        let v = Vec3::new(f(5)?, f(6)?, f(7)?);
        states.push(ParticleState { x, v, t: f(1)? });
        diagnostics.push(StepDiagnostics {
            mu: f(10)?,
            energy: f(11)?,
            v_par: f(8)?,
            v_perp: f(9)?,
            gc: Vec3::new(f(12)?, f(13)?, f(14)?),
            nondegeneracy: f64::NAN,
        });
    }
    if states.is_empty() {
        return Err(HarnessError::Config(format!("{}: no data rows", path.display())));
    }
    let h = if states.len() > 1 { states[1].t - states[0].t } else { 0.0 };
    let (mu0, energy0) = (diagnostics[0].mu, diagnostics[0].energy);
    Ok(Trajectory {
        method,
        h,
        states,
        diagnostics,
        velocity_convention: if method == Method::Reference {
            VelocityConvention::Subsampled
        } else {
            VelocityConvention::SymmetricDifference
        },
        mu0,
        energy0,
        richardson: None,
        fd_jacobian: false,
        warnings: Vec::new(),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| HarnessError::io(path, std::io::Error::other(e)))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| HarnessError::io(path, e))
}

/// Writes rows of already formatted cells under `header`.
pub fn write_table_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let csv_err = |source| HarnessError::Csv { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}
