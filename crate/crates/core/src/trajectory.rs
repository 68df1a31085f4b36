use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which of the two alternating diffusions a segment follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn flip(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }
}

/// One excursion between two restarts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub sign: Sign,
    pub start_time: f64,
    /// Time the segment ended by exploding, if it did before the horizon.
    pub end_time: Option<f64>,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Segment {
    pub(crate) fn new(sign: Sign, start_time: f64) -> Self {
        Self {
            sign,
            start_time,
            end_time: None,
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, t: f64, v: f64) {
        self.times.push(t);
        self.values.push(v);
    }
}

/// Piecewise record of an alternating diffusion with its explosion times.
///
/// Segments alternate in sign starting with `Plus`; a `Plus` segment ends
/// at a time in `explosions_plus`, a `Minus` segment at one in
/// `explosions_minus`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub segments: Vec<Segment>,
    pub explosions_plus: Vec<f64>,
    pub explosions_minus: Vec<f64>,
}

impl Trajectory {
    /// Checks the alternation and interleaving invariants.
    pub fn validate(&self) -> Result<()> {
        let mut expect = Sign::Plus;
        for seg in &self.segments {
            if seg.sign != expect {
                return Err(Error::invalid("segment signs do not alternate"));
            }
            if seg.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("non-finite value inside a segment"));
            }
            expect = expect.flip();
        }
        let mut merged = Vec::new();
        for (i, &tp) in self.explosions_plus.iter().enumerate() {
            merged.push(tp);
            if let Some(&tm) = self.explosions_minus.get(i) {
                merged.push(tm);
            }
        }
        if self.explosions_minus.len() > self.explosions_plus.len()
            || self.explosions_plus.len() > self.explosions_minus.len() + 1
        {
            return Err(Error::invalid("explosion lists do not interleave"));
        }
        if merged.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("explosion times not strictly interleaved"));
        }
        Ok(())
    }

    /// CSV with columns `t,value,segment_sign,event_flag`.
    ///
    /// `event_flag` is 1 on the restart row opening a segment, 2 on the row
    /// closing it by explosion and 0 otherwise. Restart and explosion rows
    /// carry the boundary values `start_value` and `end_value`.
    pub fn to_csv(&self, start_value: impl Fn(Sign) -> f64, end_value: impl Fn(Sign) -> f64) -> String {
        self.to_csv_with(start_value, end_value, None::<fn(f64) -> f64>)
    }

    /// As [`Trajectory::to_csv`], with an extra `critical` column holding `critical(t)`.
    pub fn to_csv_with<F: Fn(f64) -> f64>(
        &self,
        start_value: impl Fn(Sign) -> f64,
        end_value: impl Fn(Sign) -> f64,
        critical: Option<F>,
    ) -> String {
        let mut out = String::from("t,value,segment_sign,event_flag");
        if critical.is_some() {
            out.push_str(",critical");
        }
        out.push('\n');
        let mut row = |t: f64, v: f64, s: Sign, flag: u8| {
            let _ = write!(out, "{t},{v},{},{flag}", s.as_i8());
            if let Some(c) = &critical {
                let _ = write!(out, ",{}", c(t));
            }
            out.push('\n');
        };
        for seg in &self.segments {
            row(seg.start_time, start_value(seg.sign), seg.sign, 1);
            for (&t, &v) in seg.times.iter().zip(&seg.values) {
                row(t, v, seg.sign, 0);
            }
            if let Some(end) = seg.end_time {
                row(end, end_value(seg.sign), seg.sign, 2);
            }
        }
        out
    }
}

/// Finite counting measure on the half-line given by its atoms.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointMeasure {
    atoms: Vec<f64>,
}

impl PointMeasure {
    pub fn new(atoms: Vec<f64>) -> Result<Self> {
        if atoms.iter().any(|&a| !(a >= 0.0) || !a.is_finite()) {
            return Err(Error::invalid("atoms must be finite and non-negative"));
        }
        if atoms.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("atoms must be strictly increasing"));
        }
        Ok(Self { atoms })
    }

    pub fn empty() -> Self {
        Self { atoms: Vec::new() }
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn total(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Mass of the closed interval `[lo, hi]`.
    pub fn mass(&self, lo: f64, hi: f64) -> usize {
        self.atoms.iter().filter(|&&a| a >= lo && a <= hi).count()
    }

    /// Mass of `[lo, inf)`.
    pub fn mass_from(&self, lo: f64) -> usize {
        self.atoms.iter().filter(|&&a| a >= lo).count()
    }

    pub fn first(&self) -> Option<f64> {
        self.atoms.first().copied()
    }
}
