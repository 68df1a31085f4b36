use besselsim::rescaled::stationary_first_passage;
use besselsim::scalefn::{hitting_probability, ScaleFunction};
use besselsim::BrownianPath;

#[test]
fn optional_stopping_of_the_scale_function() {
    let (beta, a, gamma) = (0.5f64, 1.0, -1.0);
    let l2 = beta.powf(1.0 / 6.0);
    let sf = ScaleFunction::new(beta, a).unwrap();
    let (s_lo, s_hi, s0) = (sf.value(gamma).unwrap(), sf.value(l2).unwrap(), sf.value(0.0).unwrap());
    let n = 4000;
    let stopped: Vec<f64> = (0..n)
        .map(|seed| {
            let mut path = BrownianPath::new(7_000 + seed, 64.0).unwrap();
            let fp = stationary_first_passage(beta, a, 0.0, gamma, l2, &mut path, 1e-3, true).unwrap().unwrap();
            if fp.upper {
                s_hi
            } else {
                s_lo
            }
        })
        .collect();
    let m = stopped.iter().sum::<f64>() / n as f64;
    let sd = (stopped.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    let z = (m - s0) / (sd / (n as f64).sqrt());
    assert!(z.abs() < 3.0, "E s(q_stop) = {m}, s(0) = {s0}, z = {z}");
}

#[test]
fn hitting_probability_vanishes_as_beta_decreases() {
    let vals: Vec<f64> = [0.2f64, 0.1, 0.05]
        .iter()
        .map(|&b| hitting_probability(-1.0, b.powf(1.0 / 6.0), b, 1.0).unwrap().value)
        .collect();
    assert!(vals.windows(2).all(|w| w[1] < w[0]), "{vals:?}");
    assert!(vals[2] < 1e-3, "{vals:?}");
}

#[test]
fn scale_function_is_increasing() {
    for beta in [0.5, 0.1, 0.02] {
        let sf = ScaleFunction::new(beta, 1.0).unwrap();
        let vals: Vec<f64> = (0..=60).map(|i| sf.value(-3.0 + 0.05 * i as f64).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[0] < w[1]), "beta {beta}");
    }
}
