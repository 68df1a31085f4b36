//! Scale functions of the stationary diffusion `dq = dW + f(q) dt`,
//! `f(x) = (a - e^{x/beta}) / 4`, and of its `beta -> 0` limit.
//!
//! `s_beta(x) = int_{-1}^x exp(-2 int_0^u f) du` grows like a double
//! exponential to the right of `beta ln a`, so values are handled through
//! their logarithms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(a - e^{x/beta}) / 4`, exponent clamped at 700.
pub fn f_beta(x: f64, beta: f64, a: f64) -> f64 {
    0.25 * (a - (x / beta).min(700.0).exp())
}

/// Which closed form to use for `ln s'_beta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleForm {
    /// `-2 int_0^x f_beta`, i.e. `-(a/2) x + (beta/2)(e^{x/beta} - 1)`.
    #[default]
    Integral,
    /// `-2 a x + 2 beta (e^{x/beta} - 1)`.
    Displayed,
}

/// `ln s'_beta(x)`.
pub fn log_scale_derivative(x: f64, beta: f64, a: f64) -> f64 {
    log_scale_derivative_with(x, beta, a, ScaleForm::Integral)
}

pub fn log_scale_derivative_with(x: f64, beta: f64, a: f64, form: ScaleForm) -> f64 {
    let bump = beta * (x / beta).exp_m1();
    match form {
        ScaleForm::Integral => -0.5 * a * x + 0.5 * bump,
        ScaleForm::Displayed => -2.0 * a * x + 2.0 * bump,
    }
}

/// Derivative in `x` of [`log_scale_derivative_with`].
fn log_scale_second(x: f64, a: f64, beta: f64, form: ScaleForm) -> f64 {
    let e = (x / beta).exp();
    match form {
        ScaleForm::Integral => 0.5 * (e - a),
        ScaleForm::Displayed => 2.0 * (e - a),
    }
}

/// Minimizer of `ln s'_beta`, for either form: `beta ln a`.
pub fn log_scale_derivative_minimizer(beta: f64, a: f64) -> f64 {
    beta * a.ln()
}

/// The limit scale function `s(x) = (2/a)(e^{a/2} - e^{-a x / 2})`.
pub fn limit_scale_fn(x: f64, a: f64) -> f64 {
    2.0 / a * ((a / 2.0).exp() - (-a * x / 2.0).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleFunction {
    /// `None` for the limit `beta -> 0`.
    pub beta: Option<f64>,
    pub a: f64,
    pub form: ScaleForm,
    /// Relative tolerance of the quadrature.
    pub tol: f64,
}

impl ScaleFunction {
    pub fn new(beta: f64, a: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::invalid(format!("beta must be positive, got {beta}")));
        }
        Self::check_a(a)?;
        Ok(Self {
            beta: Some(beta),
            a,
            form: ScaleForm::Integral,
            tol: 1e-10,
        })
    }

    pub fn limit(a: f64) -> Result<Self> {
        Self::check_a(a)?;
        Ok(Self {
            beta: None,
            a,
            form: ScaleForm::Integral,
            tol: 1e-10,
        })
    }

    pub fn with_form(self, form: ScaleForm) -> Self {
        Self { form, ..self }
    }

    fn check_a(a: f64) -> Result<()> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::invalid(format!("a must be positive, got {a}")));
        }
        Ok(())
    }

    /// `ln (s(hi) - s(lo))` for `lo < hi`.
    pub fn log_increment(&self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo < hi) || lo.is_nan() || hi.is_nan() {
            return Err(Error::invalid(format!("need lo < hi, got [{lo}, {hi}]")));
        }
        match self.beta {
            None => {
                let h = self.a / 2.0;
                // (2/a) e^{-h lo} (1 - e^{-h (hi - lo)})
                Ok((2.0 / self.a).ln() - h * lo + (-(-h * (hi - lo)).exp_m1()).ln())
            }
            Some(beta) => {
                let (a, form) = (self.a, self.form);
                let g = |u: f64| log_scale_derivative_with(u, beta, a, form);
                let dg = |u: f64| log_scale_second(u, a, beta, form);
                let v = log_integral(&g, &dg, lo, hi, self.tol);
                if v.is_nan() {
                    return Err(Error::NumericalFailure {
                        time: hi,
                        reason: "scale function quadrature failed".into(),
                    });
                }
                Ok(v)
            }
        }
    }

    /// `s(x)`; may overflow to `inf` far to the right.
    pub fn value(&self, x: f64) -> Result<f64> {
        if x == -1.0 {
            return Ok(0.0);
        }
        if self.beta.is_none() {
            return Ok(limit_scale_fn(x, self.a));
        }
        if x > -1.0 {
            Ok(self.log_increment(-1.0, x)?.exp())
        } else {
            Ok(-self.log_increment(x, -1.0)?.exp())
        }
    }
}

/// `s(x)` for the given scale function.
pub fn scale_fn(x: f64, sf: &ScaleFunction) -> Result<f64> {
    sf.value(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingProbability {
    pub value: f64,
    pub log_value: f64,
    /// The probability is below the smallest positive double and reported as 0.
    pub underflow: bool,
}

/// Probability that the stationary diffusion started at 0 reaches `l2`
/// before `gamma`: `(s(0) - s(gamma)) / (s(l2) - s(gamma))`.
pub fn hitting_probability(gamma: f64, l2: f64, beta: f64, a: f64) -> Result<HittingProbability> {
    hitting_probability_for(gamma, l2, &ScaleFunction::new(beta, a)?)
}

pub fn hitting_probability_for(gamma: f64, l2: f64, sf: &ScaleFunction) -> Result<HittingProbability> {
    if !(gamma < 0.0 && l2 > 0.0) {
        return Err(Error::invalid(format!("need gamma < 0 < l2, got {gamma}, {l2}")));
    }
    let num = sf.log_increment(gamma, 0.0)?;
    let den = sf.log_increment(gamma, l2)?;
    let log_value = (num - den).min(0.0);
    let value = log_value.exp();
    Ok(HittingProbability {
        value,
        log_value,
        underflow: value < f64::MIN_POSITIVE,
    })
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Log of the Kronrod and Gauss estimates of `int_lo^hi e^{g}`.
fn gk15(g: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let c = 0.5 * (lo + hi);
    let hl = 0.5 * (hi - lo);
    let mut kron = [0.0; 15];
    let mut gauss = [0.0; 7];
    let mut gi = 0;
    for j in 0..8 {
        let lw = WGK[j].ln();
        if j == 7 {
            let gc = g(c);
            kron[14] = lw + gc;
            gauss[gi] = WG[3].ln() + gc;
            continue;
        }
        let gl = g(c - hl * XGK[j]);
        let gr = g(c + hl * XGK[j]);
        kron[2 * j] = lw + gl;
        kron[2 * j + 1] = lw + gr;
        if j % 2 == 1 {
            let lwg = WG[j / 2].ln();
            gauss[gi] = lwg + gl;
            gauss[gi + 1] = lwg + gr;
            gi += 2;
        }
    }
    (hl.ln() + logsumexp(&kron), hl.ln() + logsumexp(&gauss))
}

/// `ln int_lo^hi e^{g(u)} du` by adaptive Gauss-Kronrod in log space.
///
/// Pieces too small to matter against the running total are accepted as
/// they are. Where `g` is so steep that the interval can no longer be
/// split in double precision, the piece is integrated as an exponential
/// with slope `dg` at its right end.
fn log_integral(g: &dyn Fn(f64) -> f64, dg: &dyn Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    let (whole, _) = gk15(g, lo, hi);
    let mut floor = whole - 60.0;
    let mut pieces: Vec<f64> = Vec::new();
    let mut stack = vec![(lo, hi, 0u32)];
    while let Some((l, r, depth)) = stack.pop() {
        let (k, gs) = gk15(g, l, r);
        let err = if k.is_finite() { (gs - k).exp_m1().abs() } else { f64::INFINITY };
        let mid = 0.5 * (l + r);
        let splittable = mid > l && mid < r && depth < 200;
        if err <= tol || (k.is_finite() && k < floor) {
            pieces.push(k);
            floor = floor.max(k - 60.0);
            continue;
        }
        if !splittable {
            let s = dg(r);
            let gr = g(r);
            let leaf = if s > 0.0 && s.is_finite() {
                gr - s.ln() + (-(-s * (r - l)).exp_m1()).ln()
            } else {
                gr + (r - l).ln()
            };
            pieces.push(if leaf.is_finite() { leaf } else { k });
            continue;
        }
        // the heavier half last so it is refined first and raises the floor
        stack.push((l, mid, depth + 1));
        stack.push((mid, r, depth + 1));
    }
    pieces.sort_by(f64::total_cmp);
    logsumexp(&pieces)
}
