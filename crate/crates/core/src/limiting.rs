//! The limiting process `r_mu`: alternating Skorohod-reflected Brownian
//! motions with drifts `a/4` and `-(a+1)/4`, each segment ending when it
//! meets the critical line `c_mu(t) = -mu - t/4`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::NoiseConvention;
use crate::paths::{Grid, Noise, TICK_LEVEL};
use crate::rescaled::critical_line;
use crate::trajectory::{PointMeasure, Sign};

/// `y - max(0, sup y)` for `y(t) = eps (W(t) - W(start)) + drift (t - start)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectedSegment {
    pub sign: Sign,
    pub drift: f64,
    pub start_time: f64,
    pub end_time: Option<f64>,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LimitTrajectory {
    pub mu: f64,
    pub segments: Vec<ReflectedSegment>,
    pub hits_plus: Vec<f64>,
    pub hits_minus: Vec<f64>,
}

impl LimitTrajectory {
    /// CSV with columns `t,value,critical,segment_sign`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,value,critical,segment_sign\n");
        for seg in &self.segments {
            for (&t, &v) in seg.times.iter().zip(&seg.values) {
                let _ = writeln!(out, "{t},{v},{},{}", critical_line(self.mu, t), seg.sign.as_i8());
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitOptions {
    pub mesh: f64,
    pub convention: NoiseConvention,
    /// Also count crossings between mesh points, with the Brownian-bridge probability.
    pub bridge: bool,
    /// Keep the sampled values of each segment.
    pub record: bool,
}

impl Default for LimitOptions {
    fn default() -> Self {
        Self {
            mesh: 1e-3,
            convention: NoiseConvention::default(),
            bridge: false,
            record: true,
        }
    }
}

struct Stepper {
    grid: Grid,
    horizon: f64,
}

impl Stepper {
    fn new<N: Noise>(noise: &N, horizon: f64, mesh: f64) -> Result<Self> {
        let path_horizon = noise.horizon();
        if !(horizon >= 0.0) || horizon > path_horizon * (1.0 + 1e-12) {
            return Err(Error::OutOfRange {
                what: "horizon",
                value: horizon,
                lo: 0.0,
                hi: path_horizon,
            });
        }
        Ok(Self {
            grid: Grid::for_step(path_horizon, mesh)?,
            horizon: horizon.min(path_horizon),
        })
    }

    /// Next mesh point after `t`, capped at the horizon, with its tick if on the grid.
    fn next(&self, t: f64) -> (f64, Option<u64>) {
        let st = self.grid.step_ticks();
        let tick = (Grid::tick_floor(self.grid.horizon, t) / st + 1) * st;
        let tn = self.grid.time(tick);
        if tn >= self.horizon {
            (self.horizon, None)
        } else {
            (tn, Some(tick))
        }
    }
}

struct SegmentSpec {
    sign: Sign,
    drift: f64,
    eps: f64,
    start_time: f64,
    /// `mu` of the line that ends the segment.
    barrier: Option<f64>,
    bridge: bool,
    key_base: u64,
}

/// Runs one reflected segment; returns it (values if `record`) and its hit time.
fn run_segment<N: Noise>(noise: &mut N, stepper: &Stepper, spec: &SegmentSpec, record: bool) -> (ReflectedSegment, Option<f64>) {
    let mut seg = ReflectedSegment {
        sign: spec.sign,
        drift: spec.drift,
        start_time: spec.start_time,
        end_time: None,
        times: Vec::new(),
        values: Vec::new(),
    };
    let t_start = spec.start_time;
    let w_start = noise.at_time(t_start);
    if record {
        seg.times.push(t_start);
        seg.values.push(0.0);
    }
    let gap = |t: f64, r: f64| spec.barrier.map(|mu| r - critical_line(mu, t));
    let mut t = t_start;
    let mut sup = 0.0f64;
    let mut g = gap(t, 0.0);
    while t < stepper.horizon {
        let (tn, tick) = stepper.next(t);
        let w = match tick {
            Some(k) => noise.at_tick(k),
            None => noise.at_time(tn),
        };
        let y = spec.eps * (w - w_start) + spec.drift * (tn - t_start);
        sup = sup.max(y);
        let r = y - sup;
        let gn = gap(tn, r);
        if let (Some(g0), Some(g1)) = (g, gn) {
            let h = tn - t;
            let hit = if g1 <= 0.0 {
                Some(t + h * g0 / (g0 - g1))
            } else if spec.bridge {
                let p = (-2.0 * g0 * g1 / h).exp();
                let key = spec.key_base + Grid::tick_floor(stepper.grid.horizon, tn);
                (noise.aux_uniform(key) < p).then_some(t + 0.5 * h)
            } else {
                None
            };
            if let Some(th) = hit {
                seg.end_time = Some(th);
                if record {
                    seg.times.push(th);
                    seg.values.push(critical_line(spec.barrier.unwrap_or(0.0), th));
                }
                return (seg, Some(th));
            }
        }
        if record {
            seg.times.push(tn);
            seg.values.push(r);
        }
        t = tn;
        g = gn;
    }
    (seg, None)
}

/// Discrete Skorohod map of `W + drift t` after `start_time`, on the mesh.
pub fn reflect<N: Noise>(noise: &mut N, drift: f64, start_time: f64, horizon: f64, mesh: f64) -> Result<ReflectedSegment> {
    let stepper = Stepper::new(noise, horizon, mesh)?;
    if !(start_time >= 0.0 && start_time < stepper.horizon) {
        return Err(Error::invalid(format!("start time {start_time} not before horizon {horizon}")));
    }
    noise.prepare(stepper.grid.level);
    let spec = SegmentSpec {
        sign: if drift >= 0.0 { Sign::Plus } else { Sign::Minus },
        drift,
        eps: 1.0,
        start_time,
        barrier: None,
        bridge: false,
        key_base: 0,
    };
    Ok(run_segment(noise, &stepper, &spec, true).0)
}

fn check(a: f64, mu: f64, mesh: f64) -> Result<()> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::invalid(format!("a must be positive, got {a}")));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::invalid(format!("mu must be positive, got {mu}")));
    }
    if !(mesh > 0.0 && mesh.is_finite()) {
        return Err(Error::invalid(format!("mesh must be positive, got {mesh}")));
    }
    Ok(())
}

fn segment_spec(a: f64, mu: f64, sign: Sign, start_time: f64, opts: &LimitOptions, index: u64) -> SegmentSpec {
    let (drift, eps) = match sign {
        Sign::Plus => (a / 4.0, 1.0),
        Sign::Minus => (-(a + 1.0) / 4.0, opts.convention.minus_sign()),
    };
    SegmentSpec {
        sign,
        drift,
        eps,
        start_time,
        barrier: Some(mu),
        bridge: opts.bridge,
        key_base: index << TICK_LEVEL,
    }
}

/// First time a single segment of the given sign, started at `start_time`,
/// meets the critical line. Samples the path lazily, so it is cheap when
/// the hit comes early in a long horizon.
pub fn first_hit<N: Noise>(
    a: f64,
    mu: f64,
    sign: Sign,
    noise: &mut N,
    start_time: f64,
    horizon: f64,
    opts: &LimitOptions,
) -> Result<Option<f64>> {
    check(a, mu, opts.mesh)?;
    let stepper = Stepper::new(noise, horizon, opts.mesh)?;
    let spec = segment_spec(a, mu, sign, start_time, opts, 0);
    Ok(run_segment(noise, &stepper, &spec, false).1)
}

/// `r_mu` on `[0, horizon]` with default options and the given mesh.
pub fn simulate_r<N: Noise>(a: f64, mu: f64, noise: &mut N, horizon: f64, mesh: f64) -> Result<LimitTrajectory> {
    let opts = LimitOptions {
        mesh,
        ..LimitOptions::default()
    };
    simulate_r_with(a, mu, noise, horizon, &opts)
}

pub fn simulate_r_with<N: Noise>(a: f64, mu: f64, noise: &mut N, horizon: f64, opts: &LimitOptions) -> Result<LimitTrajectory> {
    check(a, mu, opts.mesh)?;
    let stepper = Stepper::new(noise, horizon, opts.mesh)?;
    noise.prepare(stepper.grid.level);
    let mut traj = LimitTrajectory {
        mu,
        ..LimitTrajectory::default()
    };
    let mut sign = Sign::Plus;
    let mut t = 0.0;
    let mut index = 0;
    loop {
        let spec = segment_spec(a, mu, sign, t, opts, index);
        let (seg, hit) = run_segment(noise, &stepper, &spec, opts.record);
        traj.segments.push(seg);
        match hit {
            Some(th) => {
                match sign {
                    Sign::Plus => traj.hits_plus.push(th),
                    Sign::Minus => traj.hits_minus.push(th),
                }
                sign = sign.flip();
                t = th;
                index += 1;
            }
            None => break,
        }
    }
    Ok(traj)
}

/// `nu^0_mu`: the counting measure of the `-` hitting times.
pub fn limiting_measure(traj: &LimitTrajectory) -> PointMeasure {
    PointMeasure::new(traj.hits_minus.clone()).unwrap_or_default()
}

/// `(mu_i, nu^0_{mu_i}(R+))` for every `mu_i`, all driven by the same path.
pub fn limit_point_process<N: Noise>(
    a: f64,
    mu_grid: &[f64],
    noise: &mut N,
    horizon: f64,
    opts: &LimitOptions,
) -> Result<Vec<(f64, usize)>> {
    if mu_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("mu grid must be strictly increasing"));
    }
    let opts = LimitOptions { record: false, ..*opts };
    mu_grid
        .iter()
        .map(|&mu| Ok((mu, simulate_r_with(a, mu, noise, horizon, &opts)?.hits_minus.len())))
        .collect()
}
