//! The rescaled alternating diffusion `q_mu` and its explosion measure.
//!
//! In rescaled time `t` and with driver `W`,
//!
//! ```text
//! dq+ = dW + (a - e^{q/beta} - e^{-(q - c(t))/beta}) dt / 4
//! dq- = dW + (-(a+1) - e^{q/beta} - e^{-(q - c(t))/beta}) dt / 4
//! ```
//!
//! with critical line `c(t) = -mu - t/4`. Both kinds of segment start at
//! `+inf` and end by exploding to `-inf`. The two exponential terms are
//! integrated by their exact flows, in that order, after the linear part.

use crate::error::{Error, Result};
use crate::params::{ModelParams, NoiseConvention, SolverConfig};
use crate::paths::{Grid, Noise};
use crate::split::{self, logaddexp, sat_exp, ExplosionLog, Observer, Outcome, Recorder, SplitModel, SplitState};
use crate::trajectory::{PointMeasure, Sign, Trajectory};

/// `c_mu(t) = -mu - t/4`
pub fn critical_line(mu: f64, t: f64) -> f64 {
    -mu - t / 4.0
}

/// Maps a value of `p` at Riccati time `t_rescaled / (4 beta)` to the `q` picture.
pub fn q_from_p(p_value: f64, t_rescaled: f64, beta: f64, mu: f64) -> Result<(Sign, f64)> {
    if p_value == 0.0 || p_value.is_nan() {
        return Err(Error::invalid("p = 0 has no q representation"));
    }
    if p_value > 0.0 {
        Ok((Sign::Plus, beta * p_value.ln()))
    } else {
        Ok((Sign::Minus, -beta * (-p_value).ln() + critical_line(mu, t_rescaled)))
    }
}

/// Inverse of [`q_from_p`].
pub fn p_from_q(sign: Sign, q: f64, t_rescaled: f64, beta: f64, mu: f64) -> f64 {
    match sign {
        Sign::Plus => (q / beta).exp(),
        Sign::Minus => -(-(q - critical_line(mu, t_rescaled)) / beta).exp(),
    }
}

pub(crate) struct RescaledModel {
    beta: f64,
    a: f64,
    mu: f64,
    minus_sign: f64,
    start: f64,
}

impl RescaledModel {
    pub(crate) fn new(params: &ModelParams, mu: f64, cfg: &SolverConfig, conv: NoiseConvention) -> Result<Self> {
        params.require_positive_a()?;
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::invalid(format!("mu must be positive, got {mu}")));
        }
        Ok(Self {
            beta: params.beta,
            a: params.a,
            mu,
            minus_sign: conv.minus_sign(),
            start: cfg.start_value(),
        })
    }

    pub(crate) fn start_state(&self) -> SplitState {
        SplitState {
            sign: Sign::Plus,
            x: self.start,
        }
    }
}

impl SplitModel for RescaledModel {
    fn advance(&self, st: &mut SplitState, t: f64, h: f64, dw: f64) -> Option<f64> {
        let beta = self.beta;
        let (drift, noise) = match st.sign {
            Sign::Plus => (self.a / 4.0, 1.0),
            Sign::Minus => (-(self.a + 1.0) / 4.0, self.minus_sign),
        };
        st.x += drift * h + noise * dw;
        // e^{-q/beta} grows by h / (4 beta)
        st.x = -beta * logaddexp(-st.x / beta, (h / (4.0 * beta)).ln());
        // e^{q/beta} shrinks by int e^{c(s)/beta} ds / (4 beta)
        let ln_i = critical_line(self.mu, t) / beta + (-(-h / (4.0 * beta)).exp_m1()).ln();
        let r = (ln_i - st.x / beta).exp();
        if r >= 1.0 {
            let z = st.x - critical_line(self.mu, t);
            return Some(-4.0 * beta * (-(z / beta).exp()).ln_1p());
        }
        st.x += beta * (-r).ln_1p();
        None
    }

    fn stiffness(&self, st: &SplitState, t: f64) -> f64 {
        let c = critical_line(self.mu, t);
        (sat_exp(st.x / self.beta) + sat_exp(-(st.x - c) / self.beta)) / (4.0 * self.beta)
    }

    fn restart(&self, from: Sign) -> SplitState {
        SplitState {
            sign: from.flip(),
            x: self.start,
        }
    }
}

pub(crate) fn integrate_q<N: Noise, O: Observer>(
    params: &ModelParams,
    mu: f64,
    noise: &mut N,
    horizon: f64,
    cfg: &SolverConfig,
    conv: NoiseConvention,
    obs: &mut O,
) -> Result<Outcome> {
    let model = RescaledModel::new(params, mu, cfg, conv)?;
    split::integrate(&model, noise, horizon, cfg, model.start_state(), obs)
}

/// Simulates `q_mu` on `[0, horizon]` with the default noise convention.
pub fn simulate_q<N: Noise>(
    params: &ModelParams,
    mu: f64,
    noise: &mut N,
    horizon: f64,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    simulate_q_with(params, mu, noise, horizon, cfg, NoiseConvention::default())
}

pub fn simulate_q_with<N: Noise>(
    params: &ModelParams,
    mu: f64,
    noise: &mut N,
    horizon: f64,
    cfg: &SolverConfig,
    conv: NoiseConvention,
) -> Result<Trajectory> {
    let mut rec = Recorder::new(|_, st: &SplitState| st.x);
    integrate_q(params, mu, noise, horizon, cfg, conv, &mut rec)?;
    Ok(rec.finish())
}

/// Explosion times `(xi+, xi-)` without recording the path, stopping after
/// `stop_after_minus` explosions of `-` segments if given.
pub fn q_explosions<N: Noise>(
    params: &ModelParams,
    mu: f64,
    noise: &mut N,
    horizon: f64,
    cfg: &SolverConfig,
    conv: NoiseConvention,
    stop_after_minus: Option<usize>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut log = ExplosionLog {
        stop_after_minus,
        ..ExplosionLog::default()
    };
    integrate_q(params, mu, noise, horizon, cfg, conv, &mut log)?;
    Ok((log.plus, log.minus))
}

/// `nu_mu`: the counting measure of the `-` explosion times.
pub fn explosion_measure(traj: &Trajectory) -> PointMeasure {
    PointMeasure::new(traj.explosions_minus.clone()).unwrap_or_default()
}

/// CSV of a `q` trajectory with the critical line as last column.
pub fn q_csv(traj: &Trajectory, mu: f64) -> String {
    traj.to_csv_with(
        |_| f64::INFINITY,
        |_| f64::NEG_INFINITY,
        Some(|t| critical_line(mu, t)),
    )
}

/// Solution of `y' = (a - e^{y/s}) / 4` from `y(0) = +inf`:
/// `y(t) = -s ln((1 - e^{-a t / (4 s)}) / a)`.
pub fn descent_solution(a: f64, s: f64, t: f64) -> f64 {
    -s * ((-(-a * t / (4.0 * s)).exp_m1()) / a).ln()
}

/// Exit of the stationary diffusion from an interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstPassage {
    pub time: f64,
    pub upper: bool,
}

/// First exit from `(lower, upper)` of `dq = dW + (a - e^{q/beta}) dt / 4`
/// started at `x0`, or `None` if it stays inside up to the path horizon.
///
/// The wall term uses its exact flow. With `bridge` set, a crossing between
/// grid points is also detected with the Brownian-bridge probability
/// `exp(-2 (b - x0)(b - x1) / h)`.
pub fn stationary_first_passage<N: Noise>(
    beta: f64,
    a: f64,
    x0: f64,
    lower: f64,
    upper: f64,
    noise: &mut N,
    dt: f64,
    bridge: bool,
) -> Result<Option<FirstPassage>> {
    if !(lower < x0 && x0 < upper) {
        return Err(Error::invalid(format!("start {x0} not inside ({lower}, {upper})")));
    }
    if !(beta > 0.0) {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    let horizon = noise.horizon();
    let grid = Grid::for_step(horizon, dt)?;
    noise.prepare(grid.level);
    let h = grid.dt();
    let wall = (h / (4.0 * beta)).ln();
    let steps = 1u64 << grid.level;
    let mut x = x0;
    let mut w = noise.at_tick(0);
    for k in 1..=steps {
        let tick = k * grid.step_ticks();
        let w_next = noise.at_tick(tick);
        let x_prev = x;
        x += a / 4.0 * h + (w_next - w);
        x = -beta * logaddexp(-x / beta, wall);
        w = w_next;
        let t = grid.time(tick);
        if x >= upper {
            return Ok(Some(FirstPassage { time: t, upper: true }));
        }
        if x <= lower {
            return Ok(Some(FirstPassage { time: t, upper: false }));
        }
        if bridge {
            let p_up = (-2.0 * (upper - x_prev) * (upper - x) / h).exp();
            if noise.aux_uniform(2 * k) < p_up {
                return Ok(Some(FirstPassage { time: t, upper: true }));
            }
            let p_low = (-2.0 * (x_prev - lower) * (x - lower) / h).exp();
            if noise.aux_uniform(2 * k + 1) < p_low {
                return Ok(Some(FirstPassage { time: t, upper: false }));
            }
        }
    }
    Ok(None)
}
