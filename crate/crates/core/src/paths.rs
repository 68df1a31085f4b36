//! Seeded, refinable Brownian paths.
//!
//! A [`BrownianPath`] is generated by the Lévy construction on the dyadic
//! grid of `[0, horizon]`: the value at each dyadic point is the
//! Brownian-bridge midpoint of its two coarser neighbours plus a normal
//! variate drawn from a counter-based generator keyed by `(seed, point)`.
//! Values therefore do not depend on the order in which points are
//! requested, and every diffusion that queries the same path sees the same
//! realization however finely it steps.
//!
//! Times are addressed by *ticks*: tick `k` is the time `k * horizon / 2^48`.

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Finest dyadic level; tick `k` sits at `k * horizon / 2^TICK_LEVEL`.
pub const TICK_LEVEL: u32 = 48;
/// Number of ticks spanning the horizon.
pub const TICKS: u64 = 1 << TICK_LEVEL;
/// Levels up to this one may be stored densely.
const DENSE_CAP: u32 = 22;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn hash3(seed: u64, key: u64, stream: u64) -> u64 {
    let s = mix64(seed ^ 0x9e37_79b9_7f4a_7c15);
    mix64(s ^ mix64(key.wrapping_add(0x632b_e59b_d9b4_e019)) ^ stream.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

/// Uniform in `(0, 1]` from a 64-bit hash.
fn unit(h: u64) -> f64 {
    ((h >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal variate as a pure function of `(seed, key, stream)`.
pub fn keyed_normal(seed: u64, key: u64, stream: u64) -> f64 {
    let u1 = unit(hash3(seed, key, 2 * stream));
    let u2 = unit(hash3(seed, key, 2 * stream + 1));
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Uniform variate in `(0, 1]` as a pure function of `(seed, key, stream)`.
pub fn keyed_uniform(seed: u64, key: u64, stream: u64) -> f64 {
    unit(hash3(seed, key, stream.wrapping_add(1 << 40)))
}

const STREAM_GRID: u64 = 0;
const STREAM_OFFGRID: u64 = 1;

/// A driving signal sampled on the tick grid.
///
/// Implemented by [`BrownianPath`] and by deterministic test drivers.
pub trait Noise {
    fn horizon(&self) -> f64;

    /// Value at tick `tick` (`0 <= tick <= TICKS`).
    fn at_tick(&mut self, tick: u64) -> f64;

    /// Value at an arbitrary time in `[0, horizon]`.
    fn at_time(&mut self, t: f64) -> f64;

    /// Auxiliary uniform in `(0, 1]` tied to this realization.
    ///
    /// Deterministic drivers return 1.
    fn aux_uniform(&self, _key: u64) -> f64 {
        1.0
    }

    /// Hint that the caller will step on the grid of `level`.
    fn prepare(&mut self, _level: u32) {}
}

impl<N: Noise + ?Sized> Noise for &mut N {
    fn horizon(&self) -> f64 {
        (**self).horizon()
    }
    fn at_tick(&mut self, tick: u64) -> f64 {
        (**self).at_tick(tick)
    }
    fn at_time(&mut self, t: f64) -> f64 {
        (**self).at_time(t)
    }
    fn aux_uniform(&self, key: u64) -> f64 {
        (**self).aux_uniform(key)
    }
    fn prepare(&mut self, level: u32) {
        (**self).prepare(level)
    }
}

/// Uniform dyadic grid of `[0, horizon]` at a given level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub horizon: f64,
    pub level: u32,
}

impl Grid {
    /// Coarsest dyadic grid whose step does not exceed `dt`.
    pub fn for_step(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("step must be positive, got {dt}")));
        }
        let mut level = 0;
        while horizon / (1u64 << level) as f64 > dt {
            level += 1;
            if level > 40 {
                return Err(Error::invalid(format!("step {dt} too fine for horizon {horizon}")));
            }
        }
        Ok(Self { horizon, level })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / (1u64 << self.level) as f64
    }

    pub fn step_ticks(&self) -> u64 {
        1 << (TICK_LEVEL - self.level)
    }

    pub fn tick_time(horizon: f64, tick: u64) -> f64 {
        tick as f64 * (horizon / TICKS as f64)
    }

    pub fn time(&self, tick: u64) -> f64 {
        Self::tick_time(self.horizon, tick)
    }

    /// Largest tick whose time does not exceed `t`.
    pub fn tick_floor(horizon: f64, t: f64) -> u64 {
        let x = (t / horizon * TICKS as f64).floor();
        if x <= 0.0 {
            0
        } else if x >= TICKS as f64 {
            TICKS
        } else {
            x as u64
        }
    }
}

/// Deterministic, refinable realization of one standard Brownian motion.
///
/// Sampling mutates the internal cache, so a path is borrowed mutably by
/// one simulation at a time; distinct paths are independent.
#[derive(Debug, Clone)]
pub struct BrownianPath {
    seed: u64,
    horizon: f64,
    dense: Vec<f64>,
    dense_level: u32,
    sparse: HashMap<u64, f64>,
    offgrid: HashMap<u64, f64>,
}

impl BrownianPath {
    pub fn new(seed: u64, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        let end = horizon.sqrt() * keyed_normal(seed, TICKS, STREAM_GRID);
        Ok(Self {
            seed,
            horizon,
            dense: vec![0.0, end],
            dense_level: 0,
            sparse: HashMap::new(),
            offgrid: HashMap::new(),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of cached points beyond the two anchors.
    pub fn cached_points(&self) -> usize {
        self.dense.len() - 2 + self.sparse.len() + self.offgrid.len()
    }

    /// Value of the path at `t`, refining the cache as needed.
    pub fn sample_at(&mut self, t: f64) -> Result<f64> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::OutOfRange {
                what: "t",
                value: t,
                lo: 0.0,
                hi: self.horizon,
            });
        }
        Ok(self.value_at(t))
    }

    /// `W(t) - W(s)` for `s <= t`.
    pub fn increment(&mut self, s: f64, t: f64) -> Result<f64> {
        if s > t {
            return Err(Error::invalid(format!("reversed interval [{s}, {t}]")));
        }
        let ws = self.sample_at(s)?;
        let wt = self.sample_at(t)?;
        Ok(wt - ws)
    }

    /// Fill the dense table down to `level` (capped).
    pub fn refine_to(&mut self, level: u32) {
        let level = level.min(DENSE_CAP);
        while self.dense_level < level {
            let next = self.dense_level + 1;
            let shift = TICK_LEVEL - next;
            // midpoint variance of a bridge over an interval of length horizon / 2^(next-1)
            let sd = (self.horizon / (1u64 << (next + 1)) as f64).sqrt();
            let old = std::mem::take(&mut self.dense);
            let mut fine = Vec::with_capacity(2 * old.len() - 1);
            for i in 0..old.len() - 1 {
                fine.push(old[i]);
                let tick = ((2 * i + 1) as u64) << shift;
                let z = keyed_normal(self.seed, tick, STREAM_GRID);
                fine.push(0.5 * (old[i] + old[i + 1]) + sd * z);
            }
            fine.push(old[old.len() - 1]);
            self.dense = fine;
            self.dense_level = next;
        }
    }

    fn tick_value(&mut self, tick: u64) -> f64 {
        if tick == 0 {
            return 0.0;
        }
        let tz = tick.trailing_zeros().min(TICK_LEVEL);
        let level = TICK_LEVEL - tz;
        if level <= self.dense_level {
            return self.dense[(tick >> (TICK_LEVEL - self.dense_level)) as usize];
        }
        if let Some(&v) = self.sparse.get(&tick) {
            return v;
        }
        let half = 1u64 << tz;
        let left = self.tick_value(tick - half);
        let right = self.tick_value(tick + half);
        let sd = (half as f64 * (self.horizon / TICKS as f64) * 0.5).sqrt();
        let v = 0.5 * (left + right) + sd * keyed_normal(self.seed, tick, STREAM_GRID);
        self.sparse.insert(tick, v);
        v
    }

    fn value_at(&mut self, t: f64) -> f64 {
        let x = t / self.horizon * TICKS as f64;
        let lo = x.floor();
        if lo == x {
            return self.tick_value(x as u64);
        }
        let key = t.to_bits();
        if let Some(&v) = self.offgrid.get(&key) {
            return v;
        }
        let lo_tick = lo as u64;
        let frac = x - lo;
        let a = self.tick_value(lo_tick);
        let b = self.tick_value(lo_tick + 1);
        let cell = self.horizon / TICKS as f64;
        let sd = (frac * (1.0 - frac) * cell).sqrt();
        let v = a + frac * (b - a) + sd * keyed_normal(self.seed, key, STREAM_OFFGRID);
        self.offgrid.insert(key, v);
        v
    }
}

impl Noise for BrownianPath {
    fn horizon(&self) -> f64 {
        self.horizon
    }
    fn at_tick(&mut self, tick: u64) -> f64 {
        self.tick_value(tick)
    }
    fn at_time(&mut self, t: f64) -> f64 {
        self.value_at(t.clamp(0.0, self.horizon))
    }
    fn aux_uniform(&self, key: u64) -> f64 {
        keyed_uniform(self.seed, key, 0)
    }
    fn prepare(&mut self, level: u32) {
        self.refine_to(level);
    }
}

/// Identically zero driver (noise-free test mode).
#[derive(Debug, Clone, Copy)]
pub struct ZeroNoise {
    pub horizon: f64,
}

impl Noise for ZeroNoise {
    fn horizon(&self) -> f64 {
        self.horizon
    }
    fn at_tick(&mut self, _tick: u64) -> f64 {
        0.0
    }
    fn at_time(&mut self, _t: f64) -> f64 {
        0.0
    }
}

/// Deterministic driver given by a function of time.
pub struct FnNoise<F: Fn(f64) -> f64> {
    pub horizon: f64,
    pub f: F,
}

impl<F: Fn(f64) -> f64> Noise for FnNoise<F> {
    fn horizon(&self) -> f64 {
        self.horizon
    }
    fn at_tick(&mut self, tick: u64) -> f64 {
        (self.f)(Grid::tick_time(self.horizon, tick))
    }
    fn at_time(&mut self, t: f64) -> f64 {
        (self.f)(t)
    }
}

/// `value_scale * inner(t * time_factor)`, sharing the tick grid of `inner`.
///
/// With `time_factor = 1/(4 beta)` and `value_scale = 2 sqrt(beta)` this is
/// the rescaled motion `W` of the high-temperature picture built from the
/// Riccati motion `B`.
pub struct ScaledNoise<N: Noise> {
    pub inner: N,
    pub time_factor: f64,
    pub value_scale: f64,
}

impl<N: Noise> ScaledNoise<N> {
    pub fn new(inner: N, time_factor: f64, value_scale: f64) -> Self {
        Self {
            inner,
            time_factor,
            value_scale,
        }
    }

    /// The `W` driving the rescaled diffusions at inverse temperature `beta`.
    pub fn rescaled(inner: N, beta: f64) -> Self {
        Self::new(inner, 1.0 / (4.0 * beta), 2.0 * beta.sqrt())
    }
}

impl<N: Noise> Noise for ScaledNoise<N> {
    fn horizon(&self) -> f64 {
        self.inner.horizon() / self.time_factor
    }
    fn at_tick(&mut self, tick: u64) -> f64 {
        self.value_scale * self.inner.at_tick(tick)
    }
    fn at_time(&mut self, t: f64) -> f64 {
        self.value_scale * self.inner.at_time(t * self.time_factor)
    }
    fn aux_uniform(&self, key: u64) -> f64 {
        self.inner.aux_uniform(key)
    }
    fn prepare(&mut self, level: u32) {
        self.inner.prepare(level)
    }
}
