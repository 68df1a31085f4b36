//! Time stepping shared by the alternating diffusions.
//!
//! Each model splits its drift into a constant part, integrated together
//! with the noise increment, and exponential parts whose exact flows are
//! applied afterwards. The exact flows carry the state in from `+inf` (or
//! `-inf`) and detect the finite-time blow-up inside a step, so explosion
//! times come out of the step itself rather than from a cutoff.

use crate::error::{Error, Result};
use crate::params::SolverConfig;
use crate::paths::{Grid, Noise, TICK_LEVEL};
use crate::trajectory::{Segment, Sign, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitState {
    pub sign: Sign,
    pub x: f64,
}

pub(crate) trait SplitModel {
    /// Advances `st` over `[t, t + h]` given the driver increment `dw`.
    /// Returns the offset in `(0, h]` at which the state exploded, if it did.
    fn advance(&self, st: &mut SplitState, t: f64, h: f64, dw: f64) -> Option<f64>;

    /// `|d drift / dx|` of the exponential terms, for optional refinement.
    fn stiffness(&self, st: &SplitState, t: f64) -> f64;

    /// State right after a segment of sign `from` explodes.
    fn restart(&self, from: Sign) -> SplitState;
}

pub(crate) trait Observer {
    fn on_step(&mut self, _t: f64, _st: &SplitState) {}

    /// Called when a segment of sign `from` explodes at `t`.
    /// Returning `false` stops the integration.
    fn on_explosion(&mut self, _t: f64, _from: Sign) -> bool {
        true
    }
}

pub(crate) struct Outcome {
    pub state: SplitState,
    pub time: f64,
}

/// `ln(e^a + e^b)` without overflow.
pub(crate) fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::INFINITY || b == f64::INFINITY {
        return f64::INFINITY;
    }
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + (-(a - b).abs()).exp().ln_1p()
}

/// `exp` with its argument clamped at 700 so it stays finite.
pub(crate) fn sat_exp(x: f64) -> f64 {
    x.min(700.0).exp()
}

/// Integrates `model` from `start` at time 0 up to `horizon` on the dyadic
/// grid of `noise` selected by `cfg.base_dt`.
pub(crate) fn integrate<M: SplitModel, N: Noise, O: Observer>(
    model: &M,
    noise: &mut N,
    horizon: f64,
    cfg: &SolverConfig,
    start: SplitState,
    obs: &mut O,
) -> Result<Outcome> {
    cfg.validate()?;
    let path_horizon = noise.horizon();
    if !(horizon >= 0.0) || horizon > path_horizon * (1.0 + 1e-12) {
        return Err(Error::OutOfRange {
            what: "horizon",
            value: horizon,
            lo: 0.0,
            hi: path_horizon,
        });
    }
    let grid = Grid::for_step(path_horizon, cfg.base_dt)?;
    noise.prepare(grid.level);
    let end_tick = Grid::tick_floor(path_horizon, horizon.min(path_horizon));
    let base_dt = grid.dt();

    let mut st = start;
    let mut tick = 0u64;
    let mut t = 0.0;
    let mut w = noise.at_tick(0);
    while tick < end_tick {
        let mut level = grid.level;
        if cfg.adaptive() {
            let j = model.stiffness(&st, t);
            if j * base_dt > cfg.drift_tol {
                let extra = (j * base_dt / cfg.drift_tol).log2().ceil();
                level += (extra as u32).min(cfg.max_refine);
            }
        }
        let align = TICK_LEVEL - tick.trailing_zeros().min(TICK_LEVEL);
        level = level.max(align).min(TICK_LEVEL);
        let next_tick = (tick + (1u64 << (TICK_LEVEL - level))).min(end_tick);
        let t_next = grid.time(next_tick);
        let w_next = noise.at_tick(next_tick);

        // a restart may leave us strictly inside [tick, next_tick]
        while t < t_next {
            let h = t_next - t;
            let dw = w_next - w;
            match model.advance(&mut st, t, h, dw) {
                None => {
                    if st.x.is_nan() {
                        return Err(Error::NumericalFailure {
                            time: t,
                            reason: "state became NaN".into(),
                        });
                    }
                    t = t_next;
                    w = w_next;
                    obs.on_step(t, &st);
                }
                Some(offset) => {
                    let t_exp = (t + offset.clamp(0.0, h)).min(t_next);
                    let from = st.sign;
                    st = model.restart(from);
                    w = if t_exp == t_next { w_next } else { noise.at_time(t_exp) };
                    t = t_exp;
                    if !obs.on_explosion(t_exp, from) {
                        return Ok(Outcome { state: st, time: t });
                    }
                }
            }
        }
        tick = next_tick;
    }
    Ok(Outcome { state: st, time: t })
}

/// Observer that only collects explosion times.
#[derive(Debug, Default)]
pub(crate) struct ExplosionLog {
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
    /// Stop once this many `Minus` explosions have been seen.
    pub stop_after_minus: Option<usize>,
}

impl Observer for ExplosionLog {
    fn on_explosion(&mut self, t: f64, from: Sign) -> bool {
        match from {
            Sign::Plus => self.plus.push(t),
            Sign::Minus => self.minus.push(t),
        }
        match self.stop_after_minus {
            Some(limit) => self.minus.len() < limit,
            None => true,
        }
    }
}

/// Observer that records a full [`Trajectory`], mapping states to values.
pub(crate) struct Recorder<F: Fn(f64, &SplitState) -> f64> {
    pub traj: Trajectory,
    current: Segment,
    value: F,
}

impl<F: Fn(f64, &SplitState) -> f64> Recorder<F> {
    pub fn new(value: F) -> Self {
        Self {
            traj: Trajectory::default(),
            current: Segment::new(Sign::Plus, 0.0),
            value,
        }
    }

    pub fn finish(mut self) -> Trajectory {
        self.traj.segments.push(self.current);
        self.traj
    }
}

impl<F: Fn(f64, &SplitState) -> f64> Observer for Recorder<F> {
    fn on_step(&mut self, t: f64, st: &SplitState) {
        let v = (self.value)(t, st);
        if v.is_finite() {
            self.current.push(t, v);
        }
    }

    fn on_explosion(&mut self, t: f64, from: Sign) -> bool {
        match from {
            Sign::Plus => self.traj.explosions_plus.push(t),
            Sign::Minus => self.traj.explosions_minus.push(t),
        }
        let next = Segment::new(from.flip(), t);
        let mut done = std::mem::replace(&mut self.current, next);
        done.end_time = Some(t);
        self.traj.segments.push(done);
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logaddexp_matches_direct() {
        for (a, b) in [(0.0, 0.0), (1.0, -3.0), (-700.0, 5.0), (800.0, 799.0)] {
            let direct = ((a as f64).exp() + (b as f64).exp()).ln();
            let got = logaddexp(a, b);
            if direct.is_finite() {
                assert!((got - direct).abs() < 1e-12, "{a} {b}");
            } else {
                assert!((got - (800.0 + (1.0 + (-1.0f64).exp()).ln())).abs() < 1e-9);
            }
        }
        assert_eq!(logaddexp(f64::NEG_INFINITY, 2.0), 2.0);
        assert_eq!(logaddexp(f64::INFINITY, 2.0), f64::INFINITY);
    }
}
