//! Experiment configuration: a JSON file, overridden by command-line flags,
//! resolved against the per-field presets.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mboris_core::fields::FIELD_NAMES;
use mboris_core::{FieldSpec, Method, ParticleState, Vec3};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Run,
    Banana,
    Converge,
    Check,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub x: Vec3,
    pub v: Vec3,
}

impl InitialState {
    pub fn state(&self) -> ParticleState {
        ParticleState::new(self.x, self.v)
    }
}

/// Everything a subcommand needs. Unset values fall back to the preset of
/// the selected field.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    pub field: Option<FieldSpec>,
    pub methods: Vec<Method>,
    pub h: Option<f64>,
    pub h_list: Option<Vec<f64>>,
    #[serde(rename = "T")]
    pub t_final: Option<f64>,
    pub eps: Option<f64>,
    pub eps_list: Option<Vec<f64>>,
    pub initial: Option<InitialState>,
    pub mu0: Option<f64>,
    pub out: Option<PathBuf>,
    pub emit_plots: bool,
    pub seed: u64,
    pub workers: Option<usize>,
    pub full: bool,
    pub gyro_substeps: Option<usize>,
    pub richardson_tol: Option<f64>,
    /// Upper bound on `‖L⁻¹‖` accepted by `check`.
    pub nondegeneracy_bound: Option<f64>,
    /// Number of points at which `check` evaluates the Northrop residual.
    pub residual_samples: Option<usize>,
}

/// Tokamak banana-orbit setup.
pub const TOKAMAK_X0: Vec3 = Vec3 { x: 1.05, y: 0.0, z: 0.0 };
pub const TOKAMAK_V0: Vec3 = Vec3 { x: 2.1e-3, y: 4.3e-4, z: 0.0 };
pub const TOKAMAK_T: f64 = 3.75e4;
pub const BANANA_STEPS: [f64; 2] = [0.2, 20.0];

/// Cubic-potential order-of-accuracy setup.
pub const CUBIC_X0: Vec3 = Vec3 { x: 0.0, y: 1.0, z: 0.1 };
pub const CUBIC_V0: Vec3 = Vec3 { x: 0.09, y: 0.55, z: 0.3 };
pub const CUBIC_T: f64 = 1.0;
pub const CONVERGE_H: [f64; 4] = [0.5, 0.25, 0.125, 0.0625];
pub const CONVERGE_J: std::ops::RangeInclusive<i32> = 13..=18;
pub const CONVERGE_J_FULL: std::ops::RangeInclusive<i32> = 13..=22;

pub fn field_names() -> String {
    FIELD_NAMES.join(", ")
}

pub fn parse_field(name: &str) -> Result<FieldSpec> {
    FieldSpec::from_name(name).ok_or_else(|| {
        HarnessError::Config(format!("unknown field '{name}' (available fields: {})", field_names()))
    })
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            HarnessError::Config(format!("{e} (available fields: {}; methods: {})", field_names(), method_names()))
        })
    }

    pub fn field(&self) -> FieldSpec {
        self.field.clone().unwrap_or(match self.experiment {
            Some(Experiment::Converge) => FieldSpec::CubicPotential,
            _ => FieldSpec::Tokamak,
        })
    }

    pub fn initial(&self) -> ParticleState {
        if let Some(init) = self.initial {
            return init.state();
        }
        match self.field() {
            FieldSpec::Tokamak => ParticleState::new(TOKAMAK_X0, TOKAMAK_V0),
            FieldSpec::CubicPotential => ParticleState::new(CUBIC_X0, CUBIC_V0),
            FieldSpec::Uniform { .. } => ParticleState::new(Vec3::ZERO, Vec3::new(0.3, 0.0, 0.4)),
        }
    }

    pub fn t_final(&self) -> f64 {
        self.t_final.unwrap_or(match self.field() {
            FieldSpec::Tokamak => TOKAMAK_T,
            FieldSpec::CubicPotential => CUBIC_T,
            FieldSpec::Uniform { .. } => 1.0,
        })
    }

    /// The tokamak field is given unscaled, so its preset is `ε = 1`.
    pub fn eps(&self) -> f64 {
        self.eps.unwrap_or(match self.field() {
            FieldSpec::Tokamak => 1.0,
            FieldSpec::CubicPotential => 2f64.powi(-16),
            FieldSpec::Uniform { .. } => 1e-2,
        })
    }

    pub fn h(&self) -> f64 {
        self.h.unwrap_or(match self.field() {
            FieldSpec::Tokamak => 20.0,
            FieldSpec::CubicPotential => 2f64.powi(-8),
            FieldSpec::Uniform { .. } => 0.05,
        })
    }

    pub fn method(&self) -> Method {
        self.methods.first().copied().unwrap_or(Method::ModifiedBoris)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn h_list(&self) -> Vec<f64> {
        self.h_list.clone().unwrap_or_else(|| CONVERGE_H.to_vec())
    }

    pub fn eps_list(&self) -> Vec<f64> {
        if let Some(list) = &self.eps_list {
            return list.clone();
        }
        let js = if self.full { CONVERGE_J_FULL } else { CONVERGE_J };
        js.map(|j| 2f64.powi(-j)).collect()
    }

    pub fn nondegeneracy_bound(&self) -> f64 {
        self.nondegeneracy_bound.unwrap_or(10.0)
    }

    /// Checks the invariants that do not depend on the subcommand.
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => {
                Err(HarnessError::Config(format!("{name} must be positive, got {x}")))
            }
            _ => Ok(()),
        };
        positive("h", self.h)?;
        positive("T", self.t_final)?;
        positive("eps", self.eps)?;
        positive("richardson_tol", self.richardson_tol)?;
        positive("nondegeneracy_bound", self.nondegeneracy_bound)?;
        for (name, list) in [("h_list", &self.h_list), ("eps_list", &self.eps_list)] {
            if let Some(l) = list {
                if l.is_empty() {
                    return Err(HarnessError::Config(format!("{name} must not be empty")));
                }
                for &x in l {
                    positive(name, Some(x))?;
                }
            }
        }
        if self.workers == Some(0) {
            return Err(HarnessError::Config("workers must be positive".into()));
        }
        if self.gyro_substeps == Some(0) {
            return Err(HarnessError::Config("gyro_substeps must be positive".into()));
        }
        if let Some(mu) = self.mu0 {
            if !(mu >= 0.0 && mu.is_finite()) {
                return Err(HarnessError::Config(format!("mu0 must be non-negative, got {mu}")));
            }
        }
        Ok(())
    }
}

pub fn method_names() -> String {
    Method::ALL.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(", ")
}
