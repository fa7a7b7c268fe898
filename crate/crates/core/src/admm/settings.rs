use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::precondition::PreconditionMode;

/// Which projected iterate enters the consensus part of the dual update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DualUpdate {
    /// `u_2 += F (x^{k+1/2} - x^{k+1})`, standard ADMM ordering.
    #[default]
    Standard,
    /// `u_2 += F (x^{k+1/2} - x^k)`, the update exactly as displayed in the
    /// original derivation. Kept for comparison runs.
    Literal,
}

impl FromStr for DualUpdate {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "standard" => Ok(DualUpdate::Standard),
            "literal" => Ok(DualUpdate::Literal),
            other => Err(format!("unknown dual update `{other}` (standard, literal)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub rho: f64,
    /// Iterations per restart (fixed budget, no early stop).
    pub iters_per_restart: usize,
    pub restarts: usize,
    /// Accepted `||Ax - b||_2` for a candidate point.
    pub eps_tol: f64,
    pub precondition: PreconditionMode,
    pub seed: u64,
    pub polish: bool,
    /// Final acceptance tolerance when polishing, usually tighter than
    /// `eps_tol`; defaults to `eps_tol`.
    pub polish_tol: Option<f64>,
    pub trace: bool,
    pub dual_update: DualUpdate,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            rho: 1.0,
            iters_per_restart: 200,
            restarts: 10,
            eps_tol: 1e-4,
            precondition: PreconditionMode::RowL2,
            seed: 0,
            polish: false,
            polish_tol: None,
            trace: false,
            dual_update: DualUpdate::Standard,
        }
    }
}

impl Settings {
    pub fn preset(preset: Preset) -> Self {
        let base = Settings::default();
        match preset {
            Preset::Miqp => Settings {
                rho: 0.5,
                iters_per_restart: 200,
                restarts: 10,
                ..base
            },
            Preset::Vehicle => Settings {
                rho: 0.4,
                iters_per_restart: 1000,
                restarts: 5,
                eps_tol: 1e-4,
                ..base
            },
            Preset::Converter => Settings {
                rho: 2.7,
                iters_per_restart: 500,
                restarts: 3,
                ..base
            },
            Preset::Decode => Settings {
                iters_per_restart: 10,
                restarts: 1,
                ..base
            },
        }
    }

    /// Residual bound a reported point must meet: `eps_tol`, or the tighter
    /// of `eps_tol` and `polish_tol` when polishing.
    pub fn acceptance_tol(&self) -> f64 {
        match (self.polish, self.polish_tol) {
            (true, Some(t)) => t.min(self.eps_tol),
            _ => self.eps_tol,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::NonPositiveRho(self.rho));
        }
        if self.iters_per_restart == 0 || self.restarts == 0 {
            return Err(Error::InvalidSettings(
                "iterations and restarts must be at least 1".into(),
            ));
        }
        if self.eps_tol.is_nan() || self.eps_tol <= 0.0 {
            return Err(Error::InvalidSettings("eps_tol must be positive".into()));
        }
        if let Some(t) = self.polish_tol {
            if t.is_nan() || t <= 0.0 {
                return Err(Error::InvalidSettings("polish_tol must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Per-example parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Miqp,
    Vehicle,
    Converter,
    Decode,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "miqp" => Ok(Preset::Miqp),
            "vehicle" => Ok(Preset::Vehicle),
            "converter" => Ok(Preset::Converter),
            "decode" => Ok(Preset::Decode),
            other => Err(format!(
                "unknown preset `{other}` (miqp, vehicle, converter, decode)"
            )),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Miqp => "miqp",
            Preset::Vehicle => "vehicle",
            Preset::Converter => "converter",
            Preset::Decode => "decode",
        })
    }
}
