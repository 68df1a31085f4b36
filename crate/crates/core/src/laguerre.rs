//! The beta-Laguerre ensemble through its bidiagonal model.
//!
//! `L` is lower bidiagonal with independent entries
//!
//! ```text
//! diag[i]^2 ~ Gamma((beta/2)(a + n - i), rate beta/2),  i = 0..n
//! sub[i]^2  ~ Gamma((beta/2)(n - 1 - i), rate beta/2),  i = 0..n-1
//! ```
//!
//! and the eigenvalues of `L L^T` have joint density proportional to
//! `prod |l_i - l_j|^beta prod l_k^{beta(a+1)/2 - 1} e^{-beta l_k / 2}`.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidiagonalMatrix {
    pub n: usize,
    pub diag: Vec<f64>,
    /// `sub[i]` sits at row `i + 1`, column `i`.
    pub sub: Vec<f64>,
}

impl BidiagonalMatrix {
    pub fn new(diag: Vec<f64>, sub: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if n == 0 || sub.len() + 1 != n {
            return Err(Error::invalid(format!("need n >= 1 diagonal and n - 1 sub-diagonal entries, got {} and {}", n, sub.len())));
        }
        if diag.iter().chain(&sub).any(|x| !x.is_finite()) {
            return Err(Error::invalid("entries must be finite"));
        }
        Ok(Self { n, diag, sub })
    }

    /// Diagonal and off-diagonal of `L L^T`.
    pub fn tridiagonal(&self) -> (Vec<f64>, Vec<f64>) {
        let d: Vec<f64> = (0..self.n)
            .map(|i| self.diag[i].powi(2) + if i > 0 { self.sub[i - 1].powi(2) } else { 0.0 })
            .collect();
        let e: Vec<f64> = (0..self.n - 1).map(|i| self.diag[i] * self.sub[i]).collect();
        (d, e)
    }

    /// Number of eigenvalues of `L L^T` strictly below `sigma`.
    ///
    /// Inertia of the factorization `L L^T - sigma = L+ D+ L+^T` by the
    /// stationary qd transform, which keeps high relative accuracy.
    pub fn count_below(&self, sigma: f64) -> usize {
        let mut count = 0;
        let mut t = -sigma;
        for i in 0..self.n {
            let di = self.diag[i] * self.diag[i];
            let mut dp = di + t;
            if dp == 0.0 {
                dp = -f64::MIN_POSITIVE;
            }
            if dp < 0.0 {
                count += 1;
            }
            if i + 1 < self.n {
                let si = self.sub[i] * self.sub[i];
                t = t * (si / dp) - sigma;
            }
        }
        count
    }

    fn upper_bound(&self) -> f64 {
        let (d, e) = self.tridiagonal();
        (0..self.n)
            .map(|i| {
                let left = if i > 0 { e[i - 1].abs() } else { 0.0 };
                let right = if i + 1 < self.n { e[i].abs() } else { 0.0 };
                d[i] + left + right
            })
            .fold(0.0, f64::max)
    }
}

/// Ordered eigenvalues of one sampled matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSample {
    pub n: usize,
    pub beta: f64,
    pub a: f64,
    pub eigenvalues: Vec<f64>,
}

impl SpectrumSample {
    /// CSV with columns `index,eigenvalue,rescaled`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,eigenvalue,rescaled\n");
        for (i, &l) in self.eigenvalues.iter().enumerate() {
            let _ = writeln!(out, "{i},{l},{}", l * self.n as f64);
        }
        out
    }
}

pub fn sample_bidiagonal(n: usize, params: &ModelParams, seed: u64) -> Result<BidiagonalMatrix> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = params.beta / 2.0;
    let scale = 2.0 / params.beta;
    let mut chi = |shape: f64| -> Result<f64> {
        let g = Gamma::new(shape, scale).map_err(|e| Error::invalid(format!("gamma({shape}): {e}")))?;
        Ok(g.sample(&mut rng).sqrt())
    };
    let mut diag = Vec::with_capacity(n);
    let mut sub = Vec::with_capacity(n - 1);
    for i in 0..n {
        diag.push(chi(half * (params.a + (n - i) as f64))?);
        if i + 1 < n {
            sub.push(chi(half * (n - 1 - i) as f64)?);
        }
    }
    BidiagonalMatrix::new(diag, sub)
}

const REL_WIDTH: f64 = 1e-14;

/// The `k` smallest eigenvalues of `L L^T`, increasing, by bisection on
/// the inertia count to relative width `1e-14`.
pub fn smallest_eigenvalues(l: &BidiagonalMatrix, k: usize) -> Result<Vec<f64>> {
    if k == 0 || k > l.n {
        return Err(Error::invalid(format!("k must be in 1..={}, got {k}", l.n)));
    }
    let top = l.upper_bound() * (1.0 + 1e-12) + f64::MIN_POSITIVE;
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let mut lo = out.last().copied().unwrap_or(0.0f64);
        let mut hi = top;
        for _ in 0..400 {
            if hi - lo <= REL_WIDTH * hi {
                break;
            }
            let mid = if lo > 0.0 && hi > 4.0 * lo { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
            if mid <= lo || mid >= hi {
                break;
            }
            if l.count_below(mid) > j {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        out.push(0.5 * (lo + hi));
    }
    Ok(out)
}

/// Samples a matrix and returns its `k` smallest eigenvalues.
pub fn sample_spectrum(n: usize, params: &ModelParams, seed: u64, k: usize) -> Result<SpectrumSample> {
    let l = sample_bidiagonal(n, params, seed)?;
    Ok(SpectrumSample {
        n,
        beta: params.beta,
        a: params.a,
        eigenvalues: smallest_eigenvalues(&l, k)?,
    })
}

/// `n lambda_i` for the `k` smallest.
pub fn hard_edge_rescale(sample: &SpectrumSample, k: usize) -> Result<Vec<f64>> {
    if k > sample.eigenvalues.len() {
        return Err(Error::invalid(format!("only {} eigenvalues available", sample.eigenvalues.len())));
    }
    Ok(sample.eigenvalues[..k].iter().map(|&l| l * sample.n as f64).collect())
}

/// Number of eigenvalues below `sigma` of the symmetric tridiagonal matrix
/// with diagonal `d` and off-diagonal `e`, by the Sturm sequence.
pub fn sturm_count(d: &[f64], e: &[f64], sigma: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..d.len() {
        let off = if i > 0 { e[i - 1] * e[i - 1] } else { 0.0 };
        q = d[i] - sigma - if i > 0 { off / q } else { 0.0 };
        if q == 0.0 {
            q = -f64::EPSILON * (d[i].abs() + sigma.abs()).max(f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// All eigenvalues of a symmetric tridiagonal matrix by Sturm bisection.
pub fn tridiagonal_eigenvalues(d: &[f64], e: &[f64]) -> Result<Vec<f64>> {
    let n = d.len();
    if n == 0 || e.len() + 1 != n {
        return Err(Error::invalid("tridiagonal needs n >= 1 and n - 1 off-diagonal entries"));
    }
    let mut lo0 = f64::INFINITY;
    let mut hi0 = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < n { e[i].abs() } else { 0.0 };
        lo0 = lo0.min(d[i] - r);
        hi0 = hi0.max(d[i] + r);
    }
    let norm = lo0.abs().max(hi0.abs()).max(f64::MIN_POSITIVE);
    let width = 1e-14 * norm;
    (0..n)
        .map(|j| {
            let (mut lo, mut hi) = (lo0 - width, hi0 + width);
            while hi - lo > width {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if sturm_count(d, e, mid) > j {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Ok(0.5 * (lo + hi))
        })
        .collect()
}

/// `beta sum_{i<j} ln|l_i - l_j| + sum_k ((beta(a+1)/2 - 1) ln l_k - beta l_k / 2)`;
/// `-inf` if two points coincide.
pub fn log_density_unnormalized(points: &[f64], params: &ModelParams) -> Result<f64> {
    if points.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::invalid("points must be positive"));
    }
    let beta = params.beta;
    let mut total = 0.0;
    for (i, &x) in points.iter().enumerate() {
        for &y in &points[i + 1..] {
            total += beta * (x - y).abs().ln();
        }
        total += (beta * (params.a + 1.0) / 2.0 - 1.0) * x.ln() - beta * x / 2.0;
    }
    Ok(if total.is_nan() { f64::NEG_INFINITY } else { total })
}

/// Marchenko-Pastur density `sqrt(x (4 - x)) / (2 pi x)` on `(0, 4]`.
pub fn mp_density(x: f64) -> f64 {
    if x > 0.0 && x <= 4.0 {
        (x * (4.0 - x)).sqrt() / (2.0 * std::f64::consts::PI * x)
    } else {
        0.0
    }
}

/// Distribution function of [`mp_density`].
pub fn mp_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 4.0 {
        1.0
    } else {
        let phi = (x.sqrt() / 2.0).asin();
        2.0 / std::f64::consts::PI * (phi + phi.sin() * phi.cos())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Cyclic Jacobi eigenvalues of a dense symmetric matrix.
    fn jacobi(mut m: Vec<Vec<f64>>) -> Vec<f64> {
        let n = m.len();
        for _ in 0..100 {
            let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if m[p][q] == 0.0 {
                        continue;
                    }
                    let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (mkp, mkq) = (m[k][p], m[k][q]);
                        m[k][p] = c * mkp - s * mkq;
                        m[k][q] = s * mkp + c * mkq;
                    }
                    for k in 0..n {
                        let (mpk, mqk) = (m[p][k], m[q][k]);
                        m[p][k] = c * mpk - s * mqk;
                        m[q][k] = s * mpk + c * mqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    fn dense(d: &[f64], e: &[f64]) -> Vec<Vec<f64>> {
        let n = d.len();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            m[i][i] = d[i];
            if i + 1 < n {
                m[i][i + 1] = e[i];
                m[i + 1][i] = e[i];
            }
        }
        m
    }

    #[test]
    fn small_cases() {
        let l = BidiagonalMatrix::new(vec![1.7], vec![]).unwrap();
        let ev = smallest_eigenvalues(&l, 1).unwrap();
        assert!((ev[0] - 1.7 * 1.7).abs() < 1e-13);
        let l = BidiagonalMatrix::new(vec![1.0, 1.0], vec![0.0]).unwrap();
        let ev = smallest_eigenvalues(&l, 1).unwrap();
        assert!((ev[0] - 1.0).abs() < 1e-13);
        assert!(smallest_eigenvalues(&l, 3).is_err());
        assert!(BidiagonalMatrix::new(vec![1.0], vec![1.0]).is_err());
    }

    #[test]
    fn matches_jacobi_on_random_instance() {
        let p = ModelParams::new(1.5, 0.5).unwrap();
        let l = sample_bidiagonal(8, &p, 42).unwrap();
        let (d, e) = l.tridiagonal();
        let oracle = jacobi(dense(&d, &e));
        let got = smallest_eigenvalues(&l, 8).unwrap();
        for (g, o) in got.iter().zip(&oracle) {
            assert!((g - o).abs() <= 1e-8 * o.abs().max(1.0), "{g} {o}");
        }
        assert!(got.windows(2).all(|w| w[0] < w[1]));
        assert!(got[0] > 0.0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = ModelParams::new(2.0, 0.0).unwrap();
        assert_eq!(sample_bidiagonal(5, &p, 9).unwrap(), sample_bidiagonal(5, &p, 9).unwrap());
        assert_ne!(sample_bidiagonal(5, &p, 9).unwrap(), sample_bidiagonal(5, &p, 10).unwrap());
        assert!(sample_bidiagonal(0, &p, 9).is_err());
    }

    #[test]
    fn log_density_examples() {
        let p = ModelParams::new(2.0, 0.0).unwrap();
        assert!((log_density_unnormalized(&[1.0], &p).unwrap() + 1.0).abs() < 1e-15);
        let a = log_density_unnormalized(&[0.3, 1.2, 2.5], &p).unwrap();
        let b = log_density_unnormalized(&[2.5, 0.3, 1.2], &p).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert_eq!(log_density_unnormalized(&[1.0, 1.0], &p).unwrap(), f64::NEG_INFINITY);
        assert!(log_density_unnormalized(&[0.0], &p).is_err());
    }

    #[test]
    fn mp_density_values() {
        assert!((mp_density(2.0) - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
        assert_eq!(mp_density(0.0), 0.0);
        assert_eq!(mp_density(4.5), 0.0);
        // midpoint rule after x = 4 sin^2(phi), which removes both endpoint singularities
        let m = 200_000;
        let h = std::f64::consts::FRAC_PI_2 / m as f64;
        let integral: f64 = (0..m)
            .map(|i| {
                let phi = (i as f64 + 0.5) * h;
                let x = 4.0 * phi.sin().powi(2);
                mp_density(x) * 8.0 * phi.sin() * phi.cos() * h
            })
            .sum();
        assert!((integral - 1.0).abs() < 1e-6, "{integral}");
        assert!((mp_cdf(2.0) - 0.5 - 1.0 / std::f64::consts::PI).abs() < 1e-12);
        let x = 1.3;
        let d = (mp_cdf(x + 1e-6) - mp_cdf(x - 1e-6)) / 2e-6;
        assert!((d - mp_density(x)).abs() < 1e-6);
    }

    #[test]
    fn hard_edge_scaling() {
        let s = SpectrumSample {
            n: 3,
            beta: 2.0,
            a: 0.0,
            eigenvalues: vec![0.1, 0.5, 2.0],
        };
        assert_eq!(hard_edge_rescale(&s, 2).unwrap(), vec![0.30000000000000004, 1.5]);
        let doubled = SpectrumSample {
            eigenvalues: s.eigenvalues.iter().map(|x| 2.0 * x).collect(),
            ..s.clone()
        };
        let a = hard_edge_rescale(&s, 3).unwrap();
        let b = hard_edge_rescale(&doubled, 3).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| (2.0 * x - y).abs() < 1e-15));
        assert!(s.to_csv().starts_with("index,eigenvalue,rescaled\n0,0.1,"));
    }

    proptest! {
        #[test]
        fn sturm_count_matches_jacobi(
            d in prop::collection::vec(-5.0f64..5.0, 1..12),
            e_raw in prop::collection::vec(-3.0f64..3.0, 11),
            sigma in -8.0f64..8.0,
        ) {
            let e = &e_raw[..d.len() - 1];
            let oracle = jacobi(dense(&d, e));
            let expect = oracle.iter().filter(|&&x| x < sigma).count();
            let near = oracle.iter().any(|&x| (x - sigma).abs() < 1e-9);
            if !near {
                prop_assert_eq!(sturm_count(&d, e, sigma), expect);
            }
            let ev = tridiagonal_eigenvalues(&d, e).unwrap();
            for (g, o) in ev.iter().zip(&oracle) {
                prop_assert!((g - o).abs() < 1e-9);
            }
        }

        #[test]
        fn bidiagonal_count_matches_sturm(
            diag in prop::collection::vec(0.05f64..3.0, 1..12),
            sub_raw in prop::collection::vec(0.05f64..3.0, 11),
            sigma in 0.0f64..10.0,
        ) {
            let sub = sub_raw[..diag.len() - 1].to_vec();
            let l = BidiagonalMatrix::new(diag, sub).unwrap();
            let (d, e) = l.tridiagonal();
            let oracle = jacobi(dense(&d, &e));
            if !oracle.iter().any(|&x| (x - sigma).abs() < 1e-9) {
                prop_assert_eq!(l.count_below(sigma), oracle.iter().filter(|&&x| x < sigma).count());
            }
        }
    }
}
