use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use besselsim::experiments::{run_study, StudyConfig, StudyKind};
use besselsim::laguerre::sample_spectrum;
use besselsim::limiting::{simulate_r_with, LimitOptions};
use besselsim::rescaled::{q_csv, simulate_q_with};
use besselsim::riccati::{eigenvalues, simulate_p};
use besselsim::scalefn::{hitting_probability_for, limit_scale_fn, ScaleForm, ScaleFunction};
use besselsim::{BrownianPath, ModelParams, NoiseConvention, Sign, SolverConfig};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Parser, Debug)]
#[command(name = "besselsim", version, about = "Hard-edge eigenvalue simulations")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Riccati diffusion p_lambda and its explosions.
    SimulateP(Common),
    /// Rescaled diffusion q_mu with the critical line.
    SimulateQ(Common),
    /// Limiting reflected diffusion r_mu.
    SimulateR(Common),
    /// First k operator eigenvalues on one noise path.
    Eigenvalues(Common),
    /// Smallest eigenvalues of one Laguerre matrix.
    Laguerre(Common),
    /// Scale function on a grid and a hitting probability.
    Scalefn(Common),
    StudyConvergence(Common),
    StudyHardedge(Common),
    StudyMarginals(Common),
    StudyProp41(Common),
    StudyTightness(Common),
}

impl Cmd {
    fn common(&self) -> &Common {
        match self {
            Cmd::SimulateP(c)
            | Cmd::SimulateQ(c)
            | Cmd::SimulateR(c)
            | Cmd::Eigenvalues(c)
            | Cmd::Laguerre(c)
            | Cmd::Scalefn(c)
            | Cmd::StudyConvergence(c)
            | Cmd::StudyHardedge(c)
            | Cmd::StudyMarginals(c)
            | Cmd::StudyProp41(c)
            | Cmd::StudyTightness(c) => c,
        }
    }
}

#[derive(Args, Debug)]
struct Common {
    /// Flat JSON config; flags take precedence over its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(flatten)]
    set: Overrides,
}

/// Flag overrides; each one mirrors a key of [`Settings`].
#[derive(Args, Debug, Default, Serialize)]
struct Overrides {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    a: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    mu: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    eig_horizon: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    eig_tol: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    base_dt: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    drift_tol: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_refine: Option<u32>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    start_cap: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    mesh: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    bridge: Option<bool>,
    /// riccati or shared.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    convention: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    replicas: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    betas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    mus: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    ns: Option<Vec<usize>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    window: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_count: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    tail_times: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    bootstrap: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    x_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    x_max: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    points: Option<usize>,
    /// integral or displayed.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    form: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    l2: Option<f64>,
}

/// The effective configuration, echoed as `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Settings {
    seed: u64,
    beta: f64,
    a: f64,
    mu: f64,
    lambda: f64,
    k: usize,
    n: usize,
    horizon: f64,
    eig_horizon: f64,
    eig_tol: f64,
    base_dt: f64,
    /// Absent means no adaptive refinement.
    drift_tol: Option<f64>,
    max_refine: u32,
    start_cap: Option<f64>,
    mesh: f64,
    bridge: bool,
    convention: NoiseConvention,
    replicas: usize,
    betas: Vec<f64>,
    mus: Vec<f64>,
    ns: Vec<usize>,
    window: f64,
    alpha: f64,
    max_count: usize,
    tail_times: Vec<f64>,
    bootstrap: usize,
    x_min: f64,
    x_max: f64,
    points: usize,
    form: ScaleForm,
    gamma: f64,
    l2: f64,
}

impl Default for Settings {
    fn default() -> Self {
        let study = StudyConfig::default();
        let solver = SolverConfig::default();
        Self {
            seed: 0,
            beta: study.beta,
            a: study.a,
            mu: study.mu,
            lambda: 1.0,
            k: study.k,
            n: 100,
            horizon: study.horizon,
            eig_horizon: study.eig_horizon,
            eig_tol: study.eig_tol,
            base_dt: solver.base_dt,
            drift_tol: None,
            max_refine: solver.max_refine,
            start_cap: solver.start_cap,
            mesh: study.mesh,
            bridge: study.bridge,
            convention: study.convention,
            replicas: study.replicas,
            betas: study.betas,
            mus: study.mus,
            ns: study.ns,
            window: study.window,
            alpha: study.alpha,
            max_count: study.max_count,
            tail_times: study.tail_times,
            bootstrap: study.bootstrap,
            x_min: -2.0,
            x_max: 0.0,
            points: 101,
            form: ScaleForm::default(),
            gamma: -1.0,
            l2: 0.5,
        }
    }
}

impl Settings {
    fn solver(&self) -> SolverConfig {
        SolverConfig {
            base_dt: self.base_dt,
            drift_tol: self.drift_tol.unwrap_or(f64::INFINITY),
            max_refine: self.max_refine,
            start_cap: self.start_cap,
        }
    }

    fn limit_options(&self) -> LimitOptions {
        LimitOptions {
            mesh: self.mesh,
            convention: self.convention,
            bridge: self.bridge,
            record: true,
        }
    }

    fn study(&self, kind: StudyKind) -> StudyConfig {
        StudyConfig {
            kind,
            a: self.a,
            beta: self.beta,
            mu: self.mu,
            betas: self.betas.clone(),
            mus: self.mus.clone(),
            ns: self.ns.clone(),
            k: self.k,
            replicas: self.replicas,
            seed: self.seed,
            horizon: self.horizon,
            eig_horizon: self.eig_horizon,
            eig_tol: self.eig_tol,
            solver: self.solver(),
            mesh: self.mesh,
            bridge: self.bridge,
            convention: self.convention,
            window: self.window,
            alpha: self.alpha,
            max_count: self.max_count,
            tail_times: self.tail_times.clone(),
            bootstrap: self.bootstrap,
        }
    }
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Numerical(String),
}

impl From<besselsim::Error> for Failure {
    fn from(e: besselsim::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

fn resolve(common: &Common) -> Result<Settings, Failure> {
    let mut map = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(m)) => m,
                Ok(_) => return Err(Failure::Config("config must be a JSON object".into())),
                Err(e) => return Err(Failure::Config(format!("{}: {e}", path.display()))),
            }
        }
        None => Map::new(),
    };
    if !map.contains_key("seed") && common.set.seed.is_none() {
        if let Ok(s) = std::env::var("BESSEL_SEED") {
            let seed: u64 = s.trim().parse().map_err(|_| Failure::Config(format!("BESSEL_SEED is not a seed: {s:?}")))?;
            map.insert("seed".into(), seed.into());
        }
    }
    if let Value::Object(flags) = serde_json::to_value(&common.set).map_err(|e| Failure::Config(e.to_string()))? {
        map.extend(flags);
    }
    serde_json::from_value(Value::Object(map)).map_err(|e| Failure::Config(format!("config: {e}")))
}

fn write(dir: &Path, name: &str, body: &str) -> Result<PathBuf, Failure> {
    let path = dir.join(name);
    std::fs::write(&path, body)?;
    Ok(path)
}

fn times_csv(header: &str, rows: impl IntoIterator<Item = (f64, i8)>) -> String {
    let mut out = format!("{header}\n");
    for (i, (t, s)) in rows.into_iter().enumerate() {
        let _ = writeln!(out, "{i},{t},{s}");
    }
    out
}

fn merged_explosions(plus: &[f64], minus: &[f64]) -> Vec<(f64, i8)> {
    let mut all: Vec<(f64, i8)> = plus.iter().map(|&t| (t, 1)).chain(minus.iter().map(|&t| (t, -1))).collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    all
}

fn execute(cmd: &Cmd, s: &Settings, out: &Path) -> Result<Vec<PathBuf>, Failure> {
    let mut files = Vec::new();
    match cmd {
        Cmd::SimulateP(_) => {
            let params = ModelParams::new(s.beta, s.a)?;
            let mut path = BrownianPath::new(s.seed, s.horizon)?;
            let (traj, record) = simulate_p(&params, s.lambda, &mut path, s.horizon, &s.solver())?;
            let csv = traj.to_csv(
                |sign| if sign == Sign::Plus { f64::INFINITY } else { 0.0 },
                |sign| if sign == Sign::Plus { 0.0 } else { f64::NEG_INFINITY },
            );
            files.push(write(out, "trajectory.csv", &csv)?);
            let rows = merged_explosions(&traj.explosions_plus, &traj.explosions_minus);
            files.push(write(out, "explosions.csv", &times_csv("index,time,kind", rows))?);
            let mut summary = String::from("explosions,negative_at_horizon,eventual_count\n");
            let _ = writeln!(
                summary,
                "{},{},{}",
                record.times.len(),
                u8::from(record.negative_at_horizon),
                record.eventual_count()
            );
            files.push(write(out, "summary.csv", &summary)?);
        }
        Cmd::SimulateQ(_) => {
            let params = ModelParams::with_positive_a(s.beta, s.a)?;
            let mut path = BrownianPath::new(s.seed, s.horizon)?;
            let traj = simulate_q_with(&params, s.mu, &mut path, s.horizon, &s.solver(), s.convention)?;
            files.push(write(out, "trajectory.csv", &q_csv(&traj, s.mu))?);
            let rows = merged_explosions(&traj.explosions_plus, &traj.explosions_minus);
            files.push(write(out, "explosions.csv", &times_csv("index,time,sign", rows))?);
        }
        Cmd::SimulateR(_) => {
            let mut path = BrownianPath::new(s.seed, s.horizon)?;
            let traj = simulate_r_with(s.a, s.mu, &mut path, s.horizon, &s.limit_options())?;
            files.push(write(out, "trajectory.csv", &traj.to_csv())?);
            let rows = merged_explosions(&traj.hits_plus, &traj.hits_minus);
            files.push(write(out, "hits.csv", &times_csv("index,time,sign", rows))?);
        }
        Cmd::Eigenvalues(_) => {
            let params = ModelParams::new(s.beta, s.a)?;
            if s.k == 0 {
                return Err(Failure::Config("k must be at least 1".into()));
            }
            let mut path = BrownianPath::new(s.seed, s.eig_horizon)?;
            let ev = eigenvalues(&params, s.k, &mut path, s.eig_horizon, &s.solver(), s.eig_tol)?;
            let mut csv = String::from("index,eigenvalue\n");
            for (i, v) in ev.iter().enumerate() {
                let _ = writeln!(csv, "{i},{v}");
            }
            files.push(write(out, "eigenvalues.csv", &csv)?);
        }
        Cmd::Laguerre(_) => {
            let params = ModelParams::new(s.beta, s.a)?;
            let sample = sample_spectrum(s.n, &params, s.seed, s.k)?;
            files.push(write(out, "spectrum.csv", &sample.to_csv())?);
        }
        Cmd::Scalefn(_) => {
            if s.points < 2 || !(s.x_min < s.x_max) {
                return Err(Failure::Config("need points >= 2 and x_min < x_max".into()));
            }
            let sf = ScaleFunction::new(s.beta, s.a)?.with_form(s.form);
            let mut csv = String::from("x,s_beta,s_limit\n");
            for i in 0..s.points {
                let x = s.x_min + (s.x_max - s.x_min) * i as f64 / (s.points - 1) as f64;
                let _ = writeln!(csv, "{x},{},{}", sf.value(x)?, limit_scale_fn(x, s.a));
            }
            files.push(write(out, "scalefn.csv", &csv)?);
            let hp = hitting_probability_for(s.gamma, s.l2, &sf)?;
            let mut hit = String::from("gamma,l2,value,log_value,underflow\n");
            let _ = writeln!(hit, "{},{},{},{},{}", s.gamma, s.l2, hp.value, hp.log_value, u8::from(hp.underflow));
            files.push(write(out, "hitting.csv", &hit)?);
        }
        Cmd::StudyConvergence(_) => files.extend(run_study(&s.study(StudyKind::Convergence))?.write(out)?),
        Cmd::StudyHardedge(_) => files.extend(run_study(&s.study(StudyKind::HardEdge))?.write(out)?),
        Cmd::StudyMarginals(_) => files.extend(run_study(&s.study(StudyKind::Marginals))?.write(out)?),
        Cmd::StudyProp41(_) => files.extend(run_study(&s.study(StudyKind::Prop41))?.write(out)?),
        Cmd::StudyTightness(_) => files.extend(run_study(&s.study(StudyKind::Tightness))?.write(out)?),
    }
    Ok(files)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let common = cli.cmd.common();
    let settings = resolve(common)?;
    std::fs::create_dir_all(&common.out)?;
    let mut echo = serde_json::to_string_pretty(&settings).map_err(|e| Failure::Config(e.to_string()))?;
    echo.push('\n');
    write(&common.out, "config.json", &echo)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads)
        .build()
        .map_err(|e| Failure::Config(e.to_string()))?;
    let files = pool.install(|| execute(&cli.cmd, &settings, &common.out))?;
    if common.verbose > 0 {
        for f in files {
            eprintln!("wrote {}", f.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
    }
}
