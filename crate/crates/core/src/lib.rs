//! Simulation of the stochastic Bessel operator at high temperature.
//!
//! * [`paths`]: seeded, refinable Brownian paths shared by coupled diffusions.
//! * [`riccati`]: the Riccati diffusions `p_lambda` and eigenvalues by explosion counting.
//! * [`rescaled`]: the rescaled diffusions `q_mu` and their explosion measures.
//! * [`limiting`]: the reflected limit `r_mu` and the point process it defines.
//! * [`laguerre`]: the beta-Laguerre bidiagonal model and its eigenvalues.
//! * [`scalefn`]: scale functions and exit probabilities.
//! * [`experiments`]: Monte Carlo studies.

pub mod error;
pub mod experiments;
pub mod laguerre;
pub mod limiting;
pub mod params;
pub mod paths;
pub mod rescaled;
pub mod riccati;
pub mod scalefn;
mod split;
pub mod stats;
pub mod trajectory;

pub use error::{Error, Result};
pub use params::{ModelParams, NoiseConvention, SolverConfig};
pub use paths::{BrownianPath, Noise, ScaledNoise, ZeroNoise};
pub use split::SplitState;
pub use trajectory::{PointMeasure, Sign, Trajectory};
