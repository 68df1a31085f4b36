use besselsim::paths::Noise;
use besselsim::stats::{mean, variance};
use besselsim::BrownianPath;
use proptest::prelude::*;

const PATHS: u64 = 20_000;

fn z(sample_mean: f64, sd: f64, n: f64) -> f64 {
    sample_mean / (sd / n.sqrt())
}

#[test]
fn marginal_variance_and_mean() {
    for t in [0.013, 0.3, 1.7] {
        let xs: Vec<f64> = (0..PATHS).map(|s| BrownianPath::new(s, 2.0).unwrap().sample_at(t).unwrap()).collect();
        let n = PATHS as f64;
        assert!(z(mean(&xs), t.sqrt(), n).abs() < 4.0, "mean at {t}");
        let v = variance(&xs);
        let sd_v = t * (2.0 / (n - 1.0)).sqrt();
        assert!(((v - t) / sd_v).abs() < 4.0, "variance {v} at {t}");
    }
}

#[test]
fn increments_are_uncorrelated() {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for s in 0..PATHS {
        let mut p = BrownianPath::new(s, 1.0).unwrap();
        let w1 = p.sample_at(0.2).unwrap();
        let w2 = p.sample_at(0.55).unwrap();
        a.push(w1);
        b.push(w2 - w1);
    }
    let cov = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / PATHS as f64;
    let sd = (0.2f64 * 0.35).sqrt();
    assert!(z(cov, sd, PATHS as f64).abs() < 4.0, "cov {cov}");
    assert!(((variance(&b) - 0.35) / (0.35 * (2.0 / PATHS as f64).sqrt())).abs() < 4.0);
}

#[test]
fn bridge_mean_interpolates() {
    // W(0.3) - 0.3 W(1) is independent of W(1) with variance 0.3 * 0.7.
    let mut res = Vec::new();
    let mut ends = Vec::new();
    for s in 0..PATHS {
        let mut p = BrownianPath::new(s, 1.0).unwrap();
        let end = p.sample_at(1.0).unwrap();
        res.push(p.sample_at(0.3).unwrap() - 0.3 * end);
        ends.push(end);
    }
    let n = PATHS as f64;
    let sd = (0.21f64).sqrt();
    assert!(z(mean(&res), sd, n).abs() < 4.0);
    let cov = res.iter().zip(&ends).map(|(x, y)| x * y).sum::<f64>() / n;
    assert!(z(cov, sd, n).abs() < 4.0);
    assert!(((variance(&res) - 0.21) / (0.21 * (2.0 / n).sqrt())).abs() < 4.0);
}

#[test]
fn aux_uniforms_are_uniform() {
    let p = BrownianPath::new(3, 1.0).unwrap();
    let us: Vec<f64> = (0..50_000).map(|k| p.aux_uniform(k)).collect();
    assert!(us.iter().all(|&u| u > 0.0 && u <= 1.0));
    assert!((mean(&us) - 0.5).abs() < 4.0 * (1.0 / 12.0f64 / 50_000.0).sqrt());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn values_do_not_depend_on_query_order(seed in 0u64..1000, ts in prop::collection::vec(0.0f64..5.0, 1..30)) {
        let mut fwd = BrownianPath::new(seed, 5.0).unwrap();
        let a: Vec<f64> = ts.iter().map(|&t| fwd.sample_at(t).unwrap()).collect();
        let mut rev = BrownianPath::new(seed, 5.0).unwrap();
        let mut b: Vec<f64> = ts.iter().rev().map(|&t| rev.sample_at(t).unwrap()).collect();
        b.reverse();
        prop_assert_eq!(a, b);
        prop_assert_eq!(fwd.sample_at(0.0).unwrap(), 0.0);
    }

    #[test]
    fn increments_are_additive(seed in 0u64..1000, mut ts in prop::collection::vec(0.0f64..1.0, 3)) {
        ts.sort_by(f64::total_cmp);
        let mut p = BrownianPath::new(seed, 1.0).unwrap();
        let whole = p.increment(ts[0], ts[2]).unwrap();
        let parts = p.increment(ts[0], ts[1]).unwrap() + p.increment(ts[1], ts[2]).unwrap();
        prop_assert!((whole - parts).abs() < 1e-12);
    }
}
