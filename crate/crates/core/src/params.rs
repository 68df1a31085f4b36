use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inverse temperature `beta` and Laguerre parameter `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta: f64,
    pub a: f64,
}

impl ModelParams {
    /// Parameters valid for the matrix model and the Riccati family (`a > -1`).
    pub fn new(beta: f64, a: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::invalid(format!("beta must be positive, got {beta}")));
        }
        if !(a > -1.0 && a.is_finite()) {
            return Err(Error::invalid(format!("a must exceed -1, got {a}")));
        }
        Ok(Self { beta, a })
    }

    /// Parameters for the high-temperature results, which need `a > 0`.
    pub fn with_positive_a(beta: f64, a: f64) -> Result<Self> {
        let p = Self::new(beta, a)?;
        p.require_positive_a()?;
        Ok(p)
    }

    pub fn require_positive_a(&self) -> Result<()> {
        if self.a > 0.0 {
            Ok(())
        } else {
            Err(Error::invalid(format!("a must be positive here, got {}", self.a)))
        }
    }

    /// Multiplicative noise coefficient `2/sqrt(beta)` of the Riccati diffusion.
    pub fn noise_scale(&self) -> f64 {
        2.0 / self.beta.sqrt()
    }
}

/// How the `-` segments of the alternating diffusions see the driving noise.
///
/// Writing `W(t) = 2 sqrt(beta) B(t / (4 beta))`, the logarithmic change of
/// variables on a negative Riccati segment produces `-dW`. `Riccati` keeps
/// that sign so every `mu` in a grid is pathwise one Riccati family;
/// `Shared` drives both kinds of segments with `+dW`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseConvention {
    #[default]
    Riccati,
    Shared,
}

impl NoiseConvention {
    pub fn minus_sign(self) -> f64 {
        match self {
            NoiseConvention::Riccati => -1.0,
            NoiseConvention::Shared => 1.0,
        }
    }
}

/// Step control for the splitting integrators.
///
/// The stiff exponential terms are integrated by their exact flows, so the
/// base grid alone is stable. With `drift_tol` finite, a step is refined
/// (dyadically, at most `max_refine` levels) until `dt * |d drift / dx|`
/// drops below `drift_tol`. A finite `start_cap` replaces the exact `+inf`
/// initial and restart value by that log-coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub base_dt: f64,
    pub drift_tol: f64,
    pub max_refine: u32,
    pub start_cap: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            base_dt: 2e-3,
            drift_tol: f64::INFINITY,
            max_refine: 12,
            start_cap: None,
        }
    }
}

impl SolverConfig {
    pub fn with_base_dt(base_dt: f64) -> Self {
        Self {
            base_dt,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_dt > 0.0 && self.base_dt.is_finite()) {
            return Err(Error::invalid(format!("base_dt must be positive, got {}", self.base_dt)));
        }
        if !(self.drift_tol > 0.0) {
            return Err(Error::invalid(format!("drift_tol must be positive, got {}", self.drift_tol)));
        }
        if let Some(cap) = self.start_cap {
            if !cap.is_finite() {
                return Err(Error::invalid("start_cap must be finite"));
            }
        }
        Ok(())
    }

    pub fn adaptive(&self) -> bool {
        self.drift_tol.is_finite()
    }

    pub(crate) fn start_value(&self) -> f64 {
        self.start_cap.unwrap_or(f64::INFINITY)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_params() {
        assert!(ModelParams::new(0.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, -1.0).is_err());
        assert!(ModelParams::new(1.0, -0.5).is_ok());
        assert!(ModelParams::with_positive_a(1.0, 0.0).is_err());
        assert!(ModelParams::with_positive_a(1.0, 0.1).is_ok());
    }

    #[test]
    fn solver_config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        assert!(SolverConfig::with_base_dt(-1.0).validate().is_err());
        let cfg = SolverConfig {
            start_cap: Some(f64::NAN),
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
