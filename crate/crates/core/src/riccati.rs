//! The Riccati diffusion `p_lambda` and eigenvalues by explosion counting.
//!
//! `dp = (2/sqrt(beta)) p dB + ((a + 2/beta) p - p^2 - lambda e^{-t}) dt`,
//! started at `+inf`; on reaching `-inf` it restarts at `+inf`. The number
//! of explosions on `(0, inf)` is the number of operator eigenvalues below
//! `lambda`, and all `lambda` are driven by one Brownian path.
//!
//! Integration runs in `u = ln p` while `p > 0` and in `v = ln(-p)` while
//! `p < 0`, where the noise is additive:
//!
//! ```text
//! du = sigma dB + (a - e^u - K(t) e^{-u}) dt
//! dv = sigma dB + (a + e^v + K(t) e^{-v}) dt,   K(t) = lambda e^{-t}
//! ```
//!
//! Each step applies `a dt + sigma dB`, then the exact flow of the term
//! that brings the state in from infinity (`e^{-u} += dt`, resp.
//! `e^v += int K`), then the exact flow of the term that sends it out
//! (`e^u -= int K`, resp. `e^{-v} -= dt`). Leaving through `u -> -inf` is
//! `p` crossing zero; leaving through `v -> +inf` is an explosion.

use crate::error::{Error, Result};
use crate::params::{ModelParams, SolverConfig};
use crate::paths::Noise;
use crate::split::{self, logaddexp, sat_exp, ExplosionLog, Recorder, SplitModel, SplitState};
use crate::trajectory::{Sign, Trajectory};

/// Explosion times of one Riccati run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplosionRecord {
    pub times: Vec<f64>,
    pub horizon: f64,
    /// `p < 0` at the horizon. Once the `lambda e^{-t}` forcing has died
    /// out a negative `p` cannot return to zero, so one more explosion
    /// follows.
    pub negative_at_horizon: bool,
}

impl ExplosionRecord {
    pub fn count_up_to(&self, t: f64) -> usize {
        self.times.iter().filter(|&&x| x <= t).count()
    }

    /// Explosions up to the horizon plus the pending one, if any.
    pub fn eventual_count(&self) -> usize {
        self.times.len() + usize::from(self.negative_at_horizon)
    }
}

struct RiccatiModel {
    a: f64,
    sigma: f64,
    lambda: f64,
    start: f64,
}

impl RiccatiModel {
    fn new(params: &ModelParams, lambda: f64, cfg: &SolverConfig) -> Self {
        Self {
            a: params.a,
            sigma: params.noise_scale(),
            lambda,
            start: cfg.start_value(),
        }
    }

    /// `int_t^{t+h} lambda e^{-s} ds`
    fn forcing(&self, t: f64, h: f64) -> f64 {
        self.lambda * (-t).exp() * -(-h).exp_m1()
    }
}

impl SplitModel for RiccatiModel {
    fn advance(&self, st: &mut SplitState, t: f64, h: f64, dw: f64) -> Option<f64> {
        let forcing = self.forcing(t, h);
        st.x += self.a * h + self.sigma * dw;
        match st.sign {
            Sign::Plus => {
                st.x = -logaddexp(-st.x, h.ln());
                if forcing > 0.0 {
                    let r = forcing * (-st.x).exp();
                    if r >= 1.0 {
                        // lambda e^{-t} (1 - e^{-s}) = e^u
                        let ratio = st.x.exp() / (self.lambda * (-t).exp());
                        return Some(-(-ratio).ln_1p());
                    }
                    st.x += (-r).ln_1p();
                }
                None
            }
            Sign::Minus => {
                if forcing > 0.0 {
                    st.x = logaddexp(st.x, forcing.ln());
                }
                let r = h * st.x.exp();
                if r >= 1.0 {
                    return Some((-st.x).exp());
                }
                st.x -= (-r).ln_1p();
                None
            }
        }
    }

    fn stiffness(&self, st: &SplitState, t: f64) -> f64 {
        let k = self.lambda * (-t).exp();
        let back = if k > 0.0 { k * sat_exp(-st.x) } else { 0.0 };
        sat_exp(st.x) + back
    }

    fn restart(&self, from: Sign) -> SplitState {
        match from {
            Sign::Plus => SplitState {
                sign: Sign::Minus,
                x: f64::NEG_INFINITY,
            },
            Sign::Minus => SplitState {
                sign: Sign::Plus,
                x: self.start,
            },
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be finite and non-negative, got {lambda}")));
    }
    Ok(())
}

fn start_state(cfg: &SolverConfig) -> SplitState {
    SplitState {
        sign: Sign::Plus,
        x: cfg.start_value(),
    }
}

/// Value of `p` for a state in log coordinates.
pub fn p_value(st: &SplitState) -> f64 {
    match st.sign {
        Sign::Plus => st.x.exp(),
        Sign::Minus => -st.x.exp(),
    }
}

/// Simulates `p_lambda` on `[0, horizon]`, recording the path of `p`.
///
/// In the returned trajectory `explosions_plus` holds the times `p`
/// crosses zero and `explosions_minus` the explosions to `-inf`.
pub fn simulate_p<N: Noise>(
    params: &ModelParams,
    lambda: f64,
    noise: &mut N,
    horizon: f64,
    cfg: &SolverConfig,
) -> Result<(Trajectory, ExplosionRecord)> {
    check_lambda(lambda)?;
    let model = RiccatiModel::new(params, lambda, cfg);
    let mut rec = Recorder::new(|_, st: &SplitState| p_value(st));
    let out = split::integrate(&model, noise, horizon, cfg, start_state(cfg), &mut rec)?;
    let traj = rec.finish();
    let record = ExplosionRecord {
        times: traj.explosions_minus.clone(),
        horizon,
        negative_at_horizon: out.state.sign == Sign::Minus,
    };
    Ok((traj, record))
}

/// Explosion record without storing the trajectory. With `stop_after`
/// set, integration stops once that many explosions have occurred.
pub fn explosions<N: Noise>(
    params: &ModelParams,
    lambda: f64,
    noise: &mut N,
    horizon: f64,
    cfg: &SolverConfig,
    stop_after: Option<usize>,
) -> Result<ExplosionRecord> {
    check_lambda(lambda)?;
    let model = RiccatiModel::new(params, lambda, cfg);
    let mut log = ExplosionLog {
        stop_after_minus: stop_after,
        ..ExplosionLog::default()
    };
    let out = split::integrate(&model, noise, horizon, cfg, start_state(cfg), &mut log)?;
    let stopped_early = stop_after.is_some_and(|k| log.minus.len() >= k) && out.time < horizon;
    Ok(ExplosionRecord {
        times: log.minus,
        horizon,
        negative_at_horizon: !stopped_early && out.state.sign == Sign::Minus,
    })
}

/// Number of explosions of `p_lambda` in `(0, horizon]`.
pub fn count_explosions<N: Noise>(
    params: &ModelParams,
    lambda: f64,
    noise: &mut N,
    horizon: f64,
    cfg: &SolverConfig,
) -> Result<usize> {
    Ok(explosions(params, lambda, noise, horizon, cfg, None)?.times.len())
}

/// Eventual explosion count, saturating at `cap`.
fn capped_count<N: Noise>(
    params: &ModelParams,
    lambda: f64,
    noise: &mut N,
    horizon: f64,
    cfg: &SolverConfig,
    cap: usize,
) -> Result<usize> {
    let rec = explosions(params, lambda, noise, horizon, cfg, Some(cap))?;
    Ok(rec.eventual_count().min(cap))
}

const MAX_EXPANSIONS: usize = 60;

/// The `k`-th eigenvalue (from 0) on this path, by bisection in `ln lambda`.
///
/// Every probe reuses `noise`, so the explosion count is monotone in
/// `lambda` and the crossing from `<= k` to `> k` explosions is well defined.
/// Counts include the explosion pending at the horizon. The bracket is
/// widened by factors of 4 if it does not straddle the crossing. The result
/// is within relative distance `tol` of the crossing point.
pub fn eigenvalue<N: Noise>(
    params: &ModelParams,
    k: usize,
    noise: &mut N,
    horizon: f64,
    cfg: &SolverConfig,
    bracket: (f64, f64),
    tol: f64,
) -> Result<f64> {
    let (mut lo, mut hi) = bracket;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::invalid(format!("bad bracket ({lo}, {hi})")));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let count = |lambda: f64, noise: &mut N| capped_count(params, lambda, noise, horizon, cfg, k + 1);

    let mut expansions = 0;
    while count(lo, noise)? > k {
        hi = lo;
        lo /= 4.0;
        expansions += 1;
        if expansions > MAX_EXPANSIONS {
            return Err(Error::BracketFailure(format!("no lambda with at most {k} explosions above {lo}")));
        }
    }
    expansions = 0;
    while count(hi, noise)? <= k {
        lo = hi;
        hi *= 4.0;
        expansions += 1;
        if expansions > MAX_EXPANSIONS {
            return Err(Error::BracketFailure(format!("no lambda with more than {k} explosions below {hi}")));
        }
    }
    while (hi / lo).ln() > tol {
        let mid = (lo * hi).sqrt();
        if count(mid, noise)? > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

/// The first `k` eigenvalues on one path, each bracketed above the previous one.
pub fn eigenvalues<N: Noise>(
    params: &ModelParams,
    k: usize,
    noise: &mut N,
    horizon: f64,
    cfg: &SolverConfig,
    tol: f64,
) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = Vec::with_capacity(k);
    for i in 0..k {
        let lo = out.last().map_or(0.25, |&prev| prev * (1.0 + tol));
        let ev = eigenvalue(params, i, noise, horizon, cfg, (lo, lo * 4.0), tol)?;
        out.push(ev);
    }
    Ok(out)
}

/// `beta ln(1 / lambda)`, the high-temperature rescaling of an eigenvalue.
pub fn rescale_eigenvalue(lambda_k: f64, beta: f64) -> Result<f64> {
    if !(lambda_k > 0.0) {
        return Err(Error::invalid(format!("eigenvalue must be positive, got {lambda_k}")));
    }
    if !(beta > 0.0) {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    Ok(beta * (1.0 / lambda_k).ln())
}
