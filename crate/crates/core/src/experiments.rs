//! Monte Carlo studies.
//!
//! Replica `r` of a study uses the Brownian path and matrix seed
//! `seed + r`, so every number in a report can be regenerated from its
//! config alone. Replicas run on the rayon pool and are collected in order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::laguerre;
use crate::limiting::{self, LimitOptions};
use crate::params::{ModelParams, NoiseConvention, SolverConfig};
use crate::paths::{BrownianPath, Noise};
use crate::rescaled::{self, critical_line};
use crate::riccati;
use crate::split::{Observer, SplitState};
use crate::stats::{self, Proportion};
use crate::trajectory::Sign;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    Convergence,
    HardEdge,
    Marginals,
    Prop41,
    Tightness,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Convergence => "convergence",
            StudyKind::HardEdge => "hardedge",
            StudyKind::Marginals => "marginals",
            StudyKind::Prop41 => "prop41",
            StudyKind::Tightness => "tightness",
        }
    }
}

/// Everything a study depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub kind: StudyKind,
    pub a: f64,
    /// Inverse temperature of the hard-edge study.
    pub beta: f64,
    pub mu: f64,
    pub betas: Vec<f64>,
    pub mus: Vec<f64>,
    pub ns: Vec<usize>,
    /// Number of eigenvalues compared in the hard-edge study.
    pub k: usize,
    pub replicas: usize,
    pub seed: u64,
    pub horizon: f64,
    /// Horizon and relative tolerance of the operator eigenvalue bisection.
    pub eig_horizon: f64,
    pub eig_tol: f64,
    pub solver: SolverConfig,
    pub mesh: f64,
    pub bridge: bool,
    pub convention: NoiseConvention,
    /// `T`, `alpha` and `N` of the tightness event.
    pub window: f64,
    pub alpha: f64,
    pub max_count: usize,
    /// Times at which the first-explosion tail is compared with its bound.
    pub tail_times: Vec<f64>,
    pub bootstrap: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            kind: StudyKind::Convergence,
            a: 1.0,
            beta: 2.0,
            mu: 1.0,
            betas: vec![0.4, 0.2, 0.1, 0.05],
            mus: vec![0.5, 1.0, 2.0],
            ns: vec![100, 400],
            k: 1,
            replicas: 200,
            seed: 0,
            horizon: 20.0,
            eig_horizon: 15.0,
            eig_tol: 1e-3,
            solver: SolverConfig::default(),
            mesh: 1e-3,
            bridge: false,
            convention: NoiseConvention::default(),
            window: 10.0,
            alpha: 1.0,
            max_count: 5,
            tail_times: vec![1.0 / 32.0, 1.0 / 8.0],
            bootstrap: 1000,
        }
    }
}

impl StudyConfig {
    pub fn for_kind(kind: StudyKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::invalid("replicas must be at least 1"));
        }
        self.solver.validate()?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.mesh > 0.0) {
            return Err(Error::invalid(format!("mesh must be positive, got {}", self.mesh)));
        }
        if self.betas.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
            return Err(Error::invalid("betas must be positive"));
        }
        if self.mus.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(Error::invalid("mus must be positive"));
        }
        match self.kind {
            StudyKind::HardEdge => {
                ModelParams::new(self.beta, self.a)?;
                if self.ns.is_empty() || self.ns.contains(&0) {
                    return Err(Error::invalid("ns must be a non-empty list of positive sizes"));
                }
                if self.k == 0 || self.ns.iter().any(|&n| n < self.k) {
                    return Err(Error::invalid("k must be between 1 and every n"));
                }
            }
            _ => {
                ModelParams::with_positive_a(1.0, self.a)?;
                if !(self.mu > 0.0) {
                    return Err(Error::invalid(format!("mu must be positive, got {}", self.mu)));
                }
                if self.betas.is_empty() {
                    return Err(Error::invalid("betas must be non-empty"));
                }
            }
        }
        if self.kind == StudyKind::Convergence && self.betas.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::invalid("betas must be decreasing"));
        }
        if self.kind == StudyKind::Marginals && (self.mus.is_empty() || self.mus.windows(2).any(|w| !(w[0] < w[1]))) {
            return Err(Error::invalid("mus must be a non-empty increasing list"));
        }
        if self.kind == StudyKind::Tightness && !(self.alpha > 0.0 && self.window > 0.0 && self.alpha * self.window <= self.horizon) {
            return Err(Error::invalid("need 0 < alpha * window <= horizon"));
        }
        Ok(())
    }

    /// Hex SHA-256 of the config's JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    fn replica_seed(&self, r: usize) -> u64 {
        self.seed.wrapping_add(r as u64)
    }
}

/// Outcome of a trend or bound check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Summary statistics of one study cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub label: String,
    pub values: BTreeMap<String, f64>,
    /// Too few events to estimate the cell's statistics.
    pub inconclusive: bool,
}

/// One raw Monte Carlo value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub cell: String,
    pub replica: usize,
    pub seed: u64,
    pub quantity: String,
    pub value: f64,
}

/// A row of an empirical joint distribution of count vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub cell: String,
    pub counts: Vec<usize>,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub kind: StudyKind,
    pub config: StudyConfig,
    pub config_hash: String,
    pub ci_level: f64,
    pub cells: Vec<Cell>,
    pub checks: Vec<Check>,
    pub samples: Vec<Sample>,
    pub tables: Vec<TableRow>,
}

impl StudyReport {
    fn new(cfg: &StudyConfig) -> Self {
        Self {
            kind: cfg.kind,
            config: cfg.clone(),
            config_hash: cfg.hash(),
            ci_level: 0.95,
            cells: Vec::new(),
            checks: Vec::new(),
            samples: Vec::new(),
            tables: Vec::new(),
        }
    }

    pub fn cell(&self, label: &str) -> Option<&Cell> {
        self.cells.iter().find(|c| c.label == label)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push_cell(&mut self, label: String, values: Vec<(&str, f64)>, inconclusive: bool) {
        self.cells.push(Cell {
            label,
            values: values.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            inconclusive,
        });
    }

    fn push_check(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail,
        });
    }

    fn push_samples(&mut self, cfg: &StudyConfig, cell: &str, quantity: &str, values: impl IntoIterator<Item = f64>) {
        for (r, v) in values.into_iter().enumerate() {
            self.samples.push(Sample {
                cell: cell.into(),
                replica: r,
                seed: cfg.replica_seed(r),
                quantity: quantity.into(),
                value: v,
            });
        }
    }

    /// Cells as CSV: `config_hash,cell,inconclusive,<value columns>`.
    pub fn cells_csv(&self) -> String {
        let mut keys: Vec<&String> = self.cells.iter().flat_map(|c| c.values.keys()).collect();
        keys.sort();
        keys.dedup();
        let mut out = String::from("config_hash,cell,inconclusive");
        for k in &keys {
            let _ = write!(out, ",{k}");
        }
        out.push('\n');
        for c in &self.cells {
            let _ = write!(out, "{},{},{}", self.config_hash, c.label, c.inconclusive);
            for k in &keys {
                match c.values.get(*k) {
                    Some(v) => {
                        let _ = write!(out, ",{v}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn samples_csv(&self) -> String {
        let mut out = String::from("config_hash,cell,replica,seed,quantity,value\n");
        for s in &self.samples {
            let _ = writeln!(out, "{},{},{},{},{},{}", self.config_hash, s.cell, s.replica, s.seed, s.quantity, s.value);
        }
        out
    }

    pub fn tables_csv(&self) -> String {
        let mut out = String::from("config_hash,cell,counts,frequency\n");
        for t in &self.tables {
            let counts: Vec<String> = t.counts.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(out, "{},{},{},{}", self.config_hash, t.cell, counts.join(" "), t.frequency);
        }
        out
    }

    /// Writes `<name>.json`, `<name>.csv`, and the sample and table CSVs when
    /// non-empty. Returns the written paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let name = self.kind.name();
        let mut written = Vec::new();
        let mut put = |file: String, body: String| -> Result<()> {
            let p = dir.join(file);
            std::fs::write(&p, body)?;
            written.push(p);
            Ok(())
        };
        put(format!("{name}.json"), serde_json::to_string_pretty(self)? + "\n")?;
        put(format!("{name}.csv"), self.cells_csv())?;
        if !self.samples.is_empty() {
            put(format!("{name}_samples.csv"), self.samples_csv())?;
        }
        if !self.tables.is_empty() {
            put(format!("{name}_tables.csv"), self.tables_csv())?;
        }
        Ok(written)
    }
}

pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate()?;
    match cfg.kind {
        StudyKind::Convergence => convergence_study(cfg),
        StudyKind::HardEdge => hard_edge_study(cfg),
        StudyKind::Marginals => marginal_count_study(cfg),
        StudyKind::Prop41 => prop41_study(cfg),
        StudyKind::Tightness => tightness_study(cfg),
    }
}

fn replicas<T: Send>(cfg: &StudyConfig, f: impl Fn(usize, u64) -> Result<T> + Sync) -> Result<Vec<T>> {
    (0..cfg.replicas).into_par_iter().map(|r| f(r, cfg.replica_seed(r))).collect()
}

fn limit_opts(cfg: &StudyConfig) -> LimitOptions {
    LimitOptions {
        mesh: cfg.mesh,
        convention: cfg.convention,
        bridge: cfg.bridge,
        record: false,
    }
}

/// `xi^-_0(0)`, the first `-` hit of the critical line by `r_mu`.
fn first_limit_minus_hit<N: Noise>(a: f64, mu: f64, noise: &mut N, horizon: f64, opts: &LimitOptions) -> Result<Option<f64>> {
    let Some(t1) = limiting::first_hit(a, mu, Sign::Plus, noise, 0.0, horizon, opts)? else {
        return Ok(None);
    };
    if t1 >= horizon {
        return Ok(None);
    }
    limiting::first_hit(a, mu, Sign::Minus, noise, t1, horizon, opts)
}

fn pct(p: &Proportion) -> String {
    format!("{}/{} = {:.4} [{:.4}, {:.4}]", p.successes, p.trials, p.estimate, p.ci_low, p.ci_high)
}

const MIN_EVENTS: usize = 10;

/// Coupled distance between the first `-` explosion of `q_mu` and the first
/// `-` hit of `r_mu` along a decreasing list of `beta`.
pub fn convergence_study(cfg: &StudyConfig) -> Result<StudyReport> {
    let mut report = StudyReport::new(cfg);
    let opts = limit_opts(cfg);
    let limit: Vec<Option<f64>> = replicas(cfg, |_, seed| {
        let mut path = BrownianPath::new(seed, cfg.horizon)?;
        first_limit_minus_hit(cfg.a, cfg.mu, &mut path, cfg.horizon, &opts)
    })?;
    let mut medians: Vec<(f64, f64, f64, f64)> = Vec::new();
    for &beta in &cfg.betas {
        let params = ModelParams::with_positive_a(beta, cfg.a)?;
        let xi: Vec<Option<f64>> = replicas(cfg, |_, seed| {
            let mut path = BrownianPath::new(seed, cfg.horizon)?;
            let (_, minus) = rescaled::q_explosions(&params, cfg.mu, &mut path, cfg.horizon, &cfg.solver, cfg.convention, Some(1))?;
            Ok(minus.first().copied())
        })?;
        let label = format!("beta={beta}");
        let gaps: Vec<f64> = xi
            .iter()
            .zip(&limit)
            .filter_map(|(q, r)| Some((q.as_ref()? - r.as_ref()?).abs()))
            .collect();
        let rate = gaps.len() as f64 / cfg.replicas as f64;
        let xq: Vec<f64> = xi.iter().flatten().copied().collect();
        let xr: Vec<f64> = limit.iter().flatten().copied().collect();
        let ks = if xq.is_empty() || xr.is_empty() { f64::NAN } else { stats::ks_distance(&xq, &xr)? };
        report.push_samples(cfg, &label, "xi_beta", xi.iter().map(|x| x.unwrap_or(f64::INFINITY)));
        if gaps.len() < MIN_EVENTS {
            report.push_cell(label, vec![("beta", beta), ("conditioned", gaps.len() as f64), ("conditioning_rate", rate), ("ks_marginals", ks)], true);
            continue;
        }
        let med = stats::median(&gaps)?;
        let (lo, hi) = stats::bootstrap_median_ci(&gaps, cfg.bootstrap, cfg.seed ^ beta.to_bits())?;
        medians.push((beta, med, lo, hi));
        report.push_cell(
            label,
            vec![
                ("beta", beta),
                ("conditioned", gaps.len() as f64),
                ("conditioning_rate", rate),
                ("median_gap", med),
                ("median_ci_low", lo),
                ("median_ci_high", hi),
                ("q90_gap", stats::quantile(&gaps, 0.9)?),
                ("ks_marginals", ks),
            ],
            false,
        );
    }
    report.push_samples(cfg, "limit", "xi_0", limit.iter().map(|x| x.unwrap_or(f64::INFINITY)));
    let conclusive = medians.len() == cfg.betas.len();
    let reversed = medians.windows(2).any(|w| w[1].2 > w[0].3);
    let separated = conclusive && medians.windows(2).all(|w| w[1].3 < w[0].2);
    let detail: Vec<String> = medians.iter().map(|(b, m, lo, hi)| format!("beta={b}: {m:.4} [{lo:.4}, {hi:.4}]")).collect();
    report.push_check("median_gap_not_increasing", conclusive && !reversed, detail.join("; "));
    report.push_check("median_gap_strictly_decreasing", separated, detail.join("; "));
    Ok(report)
}

/// KS distances between `n lambda_i` of the matrix model and the operator
/// eigenvalues `Lambda(i)`, `i < k`, for each `n`.
pub fn hard_edge_study(cfg: &StudyConfig) -> Result<StudyReport> {
    let mut report = StudyReport::new(cfg);
    let params = ModelParams::new(cfg.beta, cfg.a)?;
    let sbo: Vec<Vec<f64>> = replicas(cfg, |_, seed| {
        let mut path = BrownianPath::new(seed, cfg.eig_horizon)?;
        riccati::eigenvalues(&params, cfg.k, &mut path, cfg.eig_horizon, &cfg.solver, cfg.eig_tol)
    })?;
    for i in 0..cfg.k {
        report.push_samples(cfg, "operator", &format!("lambda_{i}"), sbo.iter().map(|v| v[i]));
    }
    let crit = stats::ks_critical_95(cfg.replicas, cfg.replicas);
    let mut first_ks = Vec::new();
    for &n in &cfg.ns {
        let mats: Vec<Vec<f64>> = replicas(cfg, |_, seed| {
            let s = laguerre::sample_spectrum(n, &params, seed, cfg.k)?;
            laguerre::hard_edge_rescale(&s, cfg.k)
        })?;
        let label = format!("n={n}");
        let mut values = vec![("n", n as f64), ("ks_critical_95", crit)];
        let mut names = Vec::new();
        for i in 0..cfg.k {
            let a: Vec<f64> = mats.iter().map(|v| v[i]).collect();
            let b: Vec<f64> = sbo.iter().map(|v| v[i]).collect();
            let ks = stats::ks_distance(&a, &b)?;
            if i == 0 {
                first_ks.push(ks);
            }
            names.push((format!("ks_{i}"), ks));
            names.push((format!("median_matrix_{i}"), stats::median(&a)?));
            names.push((format!("median_operator_{i}"), stats::median(&b)?));
            report.push_samples(cfg, &label, &format!("n_lambda_{i}"), a);
        }
        let mut cell_values: BTreeMap<String, f64> = values.drain(..).map(|(k, v)| (k.to_string(), v)).collect();
        cell_values.extend(names);
        report.cells.push(Cell {
            label,
            values: cell_values,
            inconclusive: false,
        });
    }
    let not_increasing = first_ks.windows(2).all(|w| w[1] <= w[0] + crit);
    report.push_check(
        "ks_not_increasing_in_n",
        not_increasing,
        format!("ks_0 by n: {first_ks:?}, noise band {crit:.4}"),
    );
    Ok(report)
}

/// Joint laws of `(nu_{mu_i}(R+))_i` for `q` at each `beta` and for the limit.
pub fn marginal_count_study(cfg: &StudyConfig) -> Result<StudyReport> {
    let mut report = StudyReport::new(cfg);
    let opts = limit_opts(cfg);
    let limit: Vec<Vec<usize>> = replicas(cfg, |_, seed| {
        let mut path = BrownianPath::new(seed, cfg.horizon)?;
        let counts = limiting::limit_point_process(cfg.a, &cfg.mus, &mut path, cfg.horizon, &opts)?;
        Ok(counts.into_iter().map(|(_, c)| c).collect())
    })?;
    let limit_table = stats::frequency_table(&limit);
    let limit_violations = limit.iter().filter(|v| v.windows(2).any(|w| w[1] > w[0])).count();
    for (counts, &f) in &limit_table {
        report.tables.push(TableRow {
            cell: "limit".into(),
            counts: counts.clone(),
            frequency: f,
        });
    }
    report.push_cell("limit".into(), vec![("monotone_violations", limit_violations as f64)], false);
    let mut tvs = Vec::new();
    let mut violations = limit_violations;
    for &beta in &cfg.betas {
        let params = ModelParams::with_positive_a(beta, cfg.a)?;
        let rows: Vec<Vec<usize>> = replicas(cfg, |_, seed| {
            let mut path = BrownianPath::new(seed, cfg.horizon)?;
            cfg.mus
                .iter()
                .map(|&mu| {
                    let (_, minus) = rescaled::q_explosions(&params, mu, &mut path, cfg.horizon, &cfg.solver, cfg.convention, None)?;
                    Ok(minus.len())
                })
                .collect()
        })?;
        let table = stats::frequency_table(&rows);
        let tv = stats::tv_distance(&table, &limit_table);
        let v = rows.iter().filter(|v| v.windows(2).any(|w| w[1] > w[0])).count();
        violations += v;
        tvs.push((beta, tv));
        let label = format!("beta={beta}");
        for (counts, &f) in &table {
            report.tables.push(TableRow {
                cell: label.clone(),
                counts: counts.clone(),
                frequency: f,
            });
        }
        report.push_cell(label, vec![("beta", beta), ("tv_to_limit", tv), ("monotone_violations", v as f64)], false);
    }
    // sampling noise of a TV distance between two empirical tables
    let noise = (limit_table.len().max(1) as f64 / cfg.replicas as f64).sqrt();
    let trend = tvs.len() < 2 || tvs.last().unwrap().1 <= tvs[0].1 + noise;
    report.push_check("tv_not_increasing", trend, format!("tv by beta: {tvs:?}, noise band {noise:.4}"));
    report.push_check("counts_monotone_in_mu", violations == 0, format!("{violations} replicas with a count increasing in mu"));
    Ok(report)
}

/// Records the first `+` segment and stops at its explosion.
struct FirstPlus {
    times: Vec<f64>,
    values: Vec<f64>,
    explosion: Option<f64>,
}

impl Observer for FirstPlus {
    fn on_step(&mut self, t: f64, st: &SplitState) {
        self.times.push(t);
        self.values.push(st.x);
    }

    fn on_explosion(&mut self, t: f64, _from: Sign) -> bool {
        self.explosion = Some(t);
        false
    }
}

/// Per-replica quantities of the `q+` versus `r+` comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlusComparison {
    /// First time `q+ <= 0`.
    pub tau_0: Option<f64>,
    /// First time `q+ <= c(t) + delta`.
    pub tau_c: Option<f64>,
    /// `sup |q+ - r+|` over grid times in `[tau_0, tau_c ^ T]`.
    pub tube_sup: Option<f64>,
    /// First explosion `xi+` of `q`.
    pub xi_plus: Option<f64>,
    /// First hit `xi+_0(0)` of the critical line by `r_mu`.
    pub xi0_plus: Option<f64>,
}

/// Runs `q+` and `r+` on one path over `[0, t_max]`.
pub fn compare_plus(params: &ModelParams, mu: f64, delta: f64, path: &mut BrownianPath, t_max: f64, solver: &SolverConfig, opts: &LimitOptions) -> Result<PlusComparison> {
    let mut obs = FirstPlus {
        times: Vec::new(),
        values: Vec::new(),
        explosion: None,
    };
    rescaled::integrate_q(params, mu, path, t_max, solver, NoiseConvention::Riccati, &mut obs)?;
    let idx0 = obs.values.iter().position(|&q| q <= 0.0);
    let idxc = obs.times.iter().zip(&obs.values).position(|(&t, &q)| q <= critical_line(mu, t) + delta);
    let tau_0 = idx0.map(|i| obs.times[i]);
    let tau_c = idxc.map(|i| obs.times[i]);
    let tube_sup = idx0.map(|i0| {
        let end = idxc.unwrap_or(obs.times.len() - 1);
        let drift = params.a / 4.0;
        let mut sup = 0.0f64;
        let mut worst = 0.0f64;
        for j in 0..=end.max(i0) {
            let t = obs.times[j];
            let y = path.at_time(t) + drift * t;
            sup = sup.max(y);
            if j >= i0 && j <= end {
                worst = worst.max((obs.values[j] - (y - sup)).abs());
            }
        }
        worst
    });
    let xi0_plus = limiting::first_hit(params.a, mu, Sign::Plus, path, 0.0, t_max, opts)?;
    Ok(PlusComparison {
        tau_0,
        tau_c,
        tube_sup,
        xi_plus: obs.explosion,
        xi0_plus,
    })
}

/// Frequencies of the descent, tube and explosion-bracket properties of `q+`
/// with `delta = beta^{1/8}` and `eta = 2 beta^{1/6}`, over `[0, window]`.
pub fn prop41_study(cfg: &StudyConfig) -> Result<StudyReport> {
    let mut report = StudyReport::new(cfg);
    let opts = limit_opts(cfg);
    let t_max = cfg.window;
    for &beta in &cfg.betas {
        let params = ModelParams::with_positive_a(beta, cfg.a)?;
        let delta = beta.powf(1.0 / 8.0);
        let eta = 2.0 * beta.powf(1.0 / 6.0);
        let out: Vec<PlusComparison> = replicas(cfg, |_, seed| {
            let mut path = BrownianPath::new(seed, t_max)?;
            compare_plus(&params, cfg.mu, delta, &mut path, t_max, &cfg.solver, &opts)
        })?;
        let n = out.len();
        let a_ok = out.iter().filter(|o| o.tau_0.is_some_and(|t| t < beta)).count();
        let b_ok = out.iter().filter(|o| o.tube_sup.is_some_and(|s| s < delta)).count();
        let cond: Vec<&PlusComparison> = out.iter().filter(|o| o.tau_c.is_some_and(|t| t < t_max)).collect();
        let c_ok = cond
            .iter()
            .filter(|o| {
                let tc = o.tau_c.unwrap();
                o.xi_plus.is_some_and(|x| (x - tc).abs() < eta) && o.xi0_plus.is_some_and(|x| (x - tc).abs() < eta)
            })
            .count();
        let (pa, pb, pc) = (stats::wilson(a_ok, n), stats::wilson(b_ok, n), stats::wilson(c_ok, cond.len()));
        let coupled: Vec<bool> = out
            .iter()
            .filter(|o| o.xi_plus.is_some() || o.xi0_plus.is_some())
            .map(|o| match (o.xi_plus, o.xi0_plus) {
                (Some(x), Some(y)) => (x - y).abs() < eta,
                _ => false,
            })
            .collect();
        let pxi = stats::wilson(coupled.iter().filter(|&&b| b).count(), coupled.len());
        let label = format!("beta={beta}");
        report.push_samples(cfg, &label, "tau_0", out.iter().map(|o| o.tau_0.unwrap_or(f64::INFINITY)));
        report.push_samples(cfg, &label, "tube_sup", out.iter().map(|o| o.tube_sup.unwrap_or(f64::INFINITY)));
        report.push_cell(
            label.clone(),
            vec![
                ("beta", beta),
                ("delta", delta),
                ("eta", eta),
                ("freq_a", pa.estimate),
                ("freq_a_ci_low", pa.ci_low),
                ("freq_a_ci_high", pa.ci_high),
                ("freq_b", pb.estimate),
                ("freq_b_ci_low", pb.ci_low),
                ("freq_b_ci_high", pb.ci_high),
                ("freq_c", pc.estimate),
                ("freq_c_ci_low", pc.ci_low),
                ("freq_c_ci_high", pc.ci_high),
                ("freq_xi_coupled", pxi.estimate),
                ("conditioned_c", cond.len() as f64),
                ("conditioning_rate_c", cond.len() as f64 / n as f64),
            ],
            cond.len() < MIN_EVENTS,
        );
        report.push_check(&format!("{label} a"), pa.estimate >= 0.9, pct(&pa));
        report.push_check(&format!("{label} b"), pb.estimate >= 0.9, pct(&pb));
        report.push_check(&format!("{label} c"), pc.estimate >= 0.9, pct(&pc));
    }
    for part in ["a", "b", "c"] {
        let key = format!("freq_{part}");
        let lo_key = format!("freq_{part}_ci_low");
        let hi_key = format!("freq_{part}_ci_high");
        let series: Vec<(f64, f64, f64)> = report
            .cells
            .iter()
            .map(|c| (c.values[&key], c.values[&lo_key], c.values[&hi_key]))
            .collect();
        let reversed = series.windows(2).any(|w| w[1].2 < w[0].1);
        let detail: Vec<String> = series.iter().map(|s| format!("{:.4}", s.0)).collect();
        report.push_check(&format!("trend {part}"), !reversed, detail.join(", "));
    }
    Ok(report)
}

/// Empirical `P(xi+ > t)` for each `t` in `times`, with the number of replicas.
pub fn first_explosion_tail(params: &ModelParams, mu: f64, times: &[f64], replicas_n: usize, seed: u64, solver: &SolverConfig) -> Result<Vec<Proportion>> {
    let t_max = times.iter().copied().fold(0.0, f64::max);
    if !(t_max > 0.0) {
        return Err(Error::invalid("tail times must be positive"));
    }
    let xi: Vec<Option<f64>> = (0..replicas_n)
        .into_par_iter()
        .map(|r| {
            let mut path = BrownianPath::new(seed.wrapping_add(r as u64), t_max)?;
            let mut obs = FirstPlus {
                times: Vec::new(),
                values: Vec::new(),
                explosion: None,
            };
            rescaled::integrate_q(params, mu, &mut path, t_max, solver, NoiseConvention::Riccati, &mut obs)?;
            Ok(obs.explosion)
        })
        .collect::<Result<_>>()?;
    Ok(times
        .iter()
        .map(|&t| stats::wilson(xi.iter().filter(|x| x.is_none_or(|x| x > t)).count(), replicas_n))
        .collect())
}

/// The lower bound `1 - 4 e^{-mu^2 / (32 t)}` on `P(xi+ > t)`.
pub fn explosion_tail_bound(mu: f64, t: f64) -> f64 {
    1.0 - 4.0 * (-mu * mu / (32.0 * t)).exp()
}

/// Probability of at most `N` explosions in `[0, alpha T]` and none in
/// `[alpha T, horizon]`, and the first-explosion tail against its bound.
pub fn tightness_study(cfg: &StudyConfig) -> Result<StudyReport> {
    let mut report = StudyReport::new(cfg);
    let cut = cfg.alpha * cfg.window;
    let mut worst = 1.0f64;
    for &beta in &cfg.betas {
        let params = ModelParams::with_positive_a(beta, cfg.a)?;
        let counts: Vec<(usize, usize)> = replicas(cfg, |_, seed| {
            let mut path = BrownianPath::new(seed, cfg.horizon)?;
            let (_, minus) = rescaled::q_explosions(&params, cfg.mu, &mut path, cfg.horizon, &cfg.solver, cfg.convention, None)?;
            let early = minus.iter().filter(|&&t| t <= cut).count();
            Ok((early, minus.len() - early))
        })?;
        let ok = counts.iter().filter(|&&(e, l)| e <= cfg.max_count && l == 0).count();
        let p = stats::wilson(ok, cfg.replicas);
        worst = worst.min(p.estimate);
        let label = format!("beta={beta}");
        report.push_samples(cfg, &label, "explosions", counts.iter().map(|&(e, l)| (e + l) as f64));
        report.push_cell(label.clone(), vec![("beta", beta), ("probability", p.estimate), ("ci_low", p.ci_low), ("ci_high", p.ci_high)], false);
        let tails = first_explosion_tail(&params, cfg.mu, &cfg.tail_times, cfg.replicas, cfg.seed, &cfg.solver)?;
        for (&t, q) in cfg.tail_times.iter().zip(&tails) {
            let bound = explosion_tail_bound(cfg.mu, t);
            let sd = (q.estimate * (1.0 - q.estimate) / q.trials as f64).sqrt();
            let held = q.estimate + 2.0 * sd >= bound;
            report.push_cell(
                format!("{label} t={t}"),
                vec![("beta", beta), ("t", t), ("tail", q.estimate), ("tail_ci_low", q.ci_low), ("tail_ci_high", q.ci_high), ("bound", bound)],
                false,
            );
            report.push_check(&format!("tail bound {label} t={t}"), held, format!("P(xi+ > t) = {:.4}, bound {bound:.4}", q.estimate));
        }
    }
    report.push_check("tightness_inf", worst > 0.9, format!("inf over betas = {worst:.4}"));
    Ok(report)
}
