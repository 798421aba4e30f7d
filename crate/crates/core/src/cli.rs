//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numerical or
//! I/O failure, 3 experiment check failed.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::Deserialize;

use crate::cost::{MatrixCost, ScalarCost};
use crate::csvio;
use crate::error::{Error, Result};
use crate::flow::{self, IntegratorConfig, LimitLabel, StopReason, DEFAULT_TOL_F};
use crate::linnet::{balanced_random_init, random_init, LayerStack, NetShape};
use crate::portrait::{phase_portrait, write_portrait_svg, Bounds, PortraitKind};
use crate::saddle;
use crate::scalarcase;
use crate::sigmoid::{self, SEPARATRIX_CHECK_POINTS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_EXPERIMENT: i32 = 3;

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostSpec {
    MatrixQuadratic { target: Vec<Vec<f64>> },
    ScalarExpr { expr: String },
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NetSpec {
    pub n: usize,
    pub k: usize,
    pub depth: usize,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    Balanced,
    Random,
    PairRescale,
    AntiBalanced,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    pub mode: InitMode,
    pub seed: u64,
    pub scale: f64,
    #[serde(default)]
    pub eta: Option<f64>,
}

/// The JSON run configuration; unknown keys are rejected.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub cost: CostSpec,
    pub net: NetSpec,
    pub init: InitSpec,
    pub integrator: IntegratorConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.integrator.validate().map_err(|e| Error::Config(e.to_string()))?;
        cfg.shape().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn shape(&self) -> Result<NetShape> {
        NetShape::new(self.net.n, self.net.k, self.net.depth)
    }

    pub fn build_cost(&self) -> Result<MatrixCost> {
        match &self.cost {
            CostSpec::MatrixQuadratic { target } => {
                let rows = target.len();
                let cols = target.first().map_or(0, Vec::len);
                if rows == 0 || target.iter().any(|r| r.len() != cols) {
                    return Err(Error::Config("target must be a non-empty rectangular array".into()));
                }
                if rows != self.net.n || cols != self.net.n {
                    return Err(Error::Config(format!("target is {rows}x{cols} but n = {}", self.net.n)));
                }
                MatrixCost::quadratic(DMatrix::from_fn(rows, cols, |r, c| target[r][c]))
            }
            CostSpec::ScalarExpr { expr } => {
                if self.net.n != 1 {
                    return Err(Error::Config("scalar costs need n = 1".into()));
                }
                Ok(MatrixCost::scalar(ScalarCost::parse(expr)?))
            }
        }
    }

    pub fn initial_stack(&self, cost: &MatrixCost) -> Result<LayerStack> {
        let shape = self.shape()?;
        let InitSpec { mode, seed, scale, eta } = self.init;
        match mode {
            InitMode::Balanced => balanced_random_init(shape, seed, scale),
            InitMode::Random => random_init(shape, seed, scale),
            InitMode::PairRescale => {
                let eta = eta.ok_or_else(|| Error::Config("pair_rescale needs init.eta".into()))?;
                random_init(shape, seed, scale)?.rescale_pair(1, eta)
            }
            InitMode::AntiBalanced => {
                if shape.n != 1 || shape.depth != 2 {
                    return Err(Error::Config("anti_balanced needs n = 1 and depth 2".into()));
                }
                let d = cost.grad(&DMatrix::zeros(1, 1))?[(0, 0)];
                if d == 0.0 {
                    return Err(Error::Precondition("f'(0) = 0 leaves the anti-balanced line undefined".into()));
                }
                let r = random_init(shape, seed, scale)?;
                let w1 = r.layer(1).clone();
                let w2 = w1.transpose() * d.signum();
                LayerStack::new(shape, vec![w1, w2])
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "overparam", version, about = "Gradient flows of overparameterized linear networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Linear,
    Sigmoid,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one trajectory and write it as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the final stack in the layer format.
        #[arg(long)]
        stack_out: Option<PathBuf>,
    },
    /// Integrate from many random inits and classify each limit.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOL_F)]
        tol_f: f64,
    },
    /// Compare reduced flows with two imbalance levels.
    Accelerate {
        #[arg(long, default_value = "(1-w)^2")]
        expr: String,
        #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
        z0: f64,
        #[arg(long, default_value_t = 0.0)]
        c_low: f64,
        #[arg(long, default_value_t = 9.0)]
        c_high: f64,
        #[arg(long, default_value_t = 1.0)]
        t_max: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        collapse_out: Option<PathBuf>,
    },
    /// Run the vector-case battery split by the d metric.
    Dichotomy {
        #[arg(long, default_value = "(1-w)^2")]
        expr: String,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 20)]
        positive: usize,
        #[arg(long, default_value_t = 5)]
        anti: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200.0)]
        t_max: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certify a strict saddle of a two-layer stack (the origin by default).
    SaddleCertify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        stack: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        direction_out: Option<PathBuf>,
    },
    /// Integrate and report invariant drift and the norm-chain residual.
    InvariantCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Field samples and overlays for the linear or sigmoidal landscape.
    PhasePortrait {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long, default_value_t = 3.0)]
        half_width: f64,
        #[arg(long, default_value_t = 21)]
        grid: usize,
        #[arg(long)]
        no_manifolds: bool,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        overlay_csv: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Print a cost expression with its first two derivatives.
    ParseCost {
        #[arg(long)]
        expr: String,
        /// Evaluate at these points.
        #[arg(long, allow_negative_numbers = true)]
        at: Vec<f64>,
    },
    /// Both landscapes of the scalar factorization problem with overlays.
    Fig2 {
        #[arg(long)]
        outdir: PathBuf,
    },
}

/// Why a command did not succeed.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numerical(String),
    Experiment(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Numerical(_) => EXIT_NUMERICAL,
            Failure::Experiment(_) => EXIT_EXPERIMENT,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Numerical(m) | Failure::Experiment(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Config(_)
            | Error::Parse { .. }
            | Error::UnsupportedOperator { .. }
            | Error::InvalidArgument(_)
            | Error::Dimension { .. }
            | Error::RankDeficient(_) => Failure::Usage(msg),
            Error::Precondition(_) => Failure::Experiment(msg),
            Error::NonFinite(_) | Error::Inconsistent(_) | Error::Io(_) | Error::Csv(_) => Failure::Numerical(msg),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn check(ok: bool, msg: impl FnOnce() -> String) -> Outcome {
    if ok {
        Ok(())
    } else {
        Err(Failure::Experiment(msg()))
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit code.
pub fn run(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}

fn dispatch(cmd: Command) -> Outcome {
    match cmd {
        Command::Simulate { config, out, stack_out } => simulate(&config, &out, stack_out.as_deref()),
        Command::Sweep { config, runs, out, tol_f } => sweep(&config, runs, &out, tol_f),
        Command::Accelerate {
            expr,
            z0,
            c_low,
            c_high,
            t_max,
            out,
            collapse_out,
        } => accelerate(&expr, z0, c_low, c_high, t_max, &out, collapse_out.as_deref()),
        Command::Dichotomy {
            expr,
            k,
            positive,
            anti,
            seed,
            t_max,
            out,
        } => dichotomy(&expr, k, positive, anti, seed, t_max, out.as_deref()),
        Command::SaddleCertify {
            config,
            stack,
            out,
            direction_out,
        } => saddle_certify(&config, stack.as_deref(), &out, direction_out.as_deref()),
        Command::InvariantCheck { config, tol, out } => invariant_check(&config, tol, out.as_deref()),
        Command::PhasePortrait {
            kind,
            half_width,
            grid,
            no_manifolds,
            csv,
            overlay_csv,
            svg,
        } => portrait(kind, half_width, grid, !no_manifolds, &csv, overlay_csv.as_deref(), svg.as_deref()),
        Command::ParseCost { expr, at } => parse_cost(&expr, &at),
        Command::Fig2 { outdir } => {
            let report = recipe_fig2(&outdir)?;
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            println!("separatrix deviation {:.3e}", report.deviation);
            check(report.deviation < FIG2_DEVIATION_LIMIT, || {
                format!("separatrix deviation {:e} exceeds {FIG2_DEVIATION_LIMIT:e}", report.deviation)
            })
        }
    }
}

fn load(config: &Path) -> std::result::Result<(RunConfig, MatrixCost), Failure> {
    let cfg = RunConfig::from_path(config)?;
    let cost = cfg.build_cost()?;
    Ok((cfg, cost))
}

fn simulate(config: &Path, out: &Path, stack_out: Option<&Path>) -> Outcome {
    let (cfg, cost) = load(config)?;
    let stack = cfg.initial_stack(&cost)?;
    let traj = flow::integrate(&stack, &cost, &cfg.integrator)?;
    let rows = csvio::trajectory_rows(&traj, &cost)?;
    csvio::write_trajectory(csvio::create(out)?, cfg.net.n, &rows)?;
    if let Some(path) = stack_out {
        csvio::write_stack(csvio::create(path)?, &traj.last().stack)?;
    }
    let last = traj.last();
    println!(
        "stop={} t={:.6} samples={} cost={:.6e} grad_g={:.3e} drift={:.3e}",
        traj.stop_reason.as_str(),
        last.t,
        traj.samples.len(),
        last.cost,
        last.grad_norm,
        traj.drift()?
    );
    if traj.stop_reason == StopReason::NonFinite {
        return Err(Failure::Numerical("trajectory became non-finite".into()));
    }
    let slack = 10.0 * cfg.integrator.atol;
    check(traj.cost_non_increasing(slack), || {
        format!("cost increased by {:e} (> {slack:e})", traj.max_cost_increase())
    })
}

pub const SWEEP_HEADER: [&str; 5] = ["seed", "label", "grad_f_norm", "grad_g_norm", "note"];

fn sweep(config: &Path, runs: usize, out: &Path, tol_f: f64) -> Outcome {
    let (cfg, cost) = load(config)?;
    let seeds: Vec<u64> = (0..runs as u64).map(|i| cfg.init.seed + i).collect();
    let classes = flow::sweep(cfg.shape()?, &cost, &cfg.integrator, &seeds, cfg.init.scale);
    let mut rows = Vec::with_capacity(runs);
    let mut ok = 0;
    for (seed, c) in seeds.iter().zip(&classes) {
        let label = if c.label == LimitLabel::CriticalOfF && c.grad_f_norm >= tol_f {
            LimitLabel::Undecided
        } else {
            c.label
        };
        ok += usize::from(label == LimitLabel::CriticalOfF);
        rows.push(vec![
            seed.to_string(),
            label.as_str().to_string(),
            csvio::fmt_real(c.grad_f_norm),
            csvio::fmt_real(c.grad_g_norm),
            c.note.clone().unwrap_or_default(),
        ]);
    }
    csvio::write_rows(csvio::create(out)?, &SWEEP_HEADER, &rows)?;
    println!("critical_of_f {ok}/{runs}");
    check(ok == runs, || format!("only {ok} of {runs} runs reached a critical point of f"))
}

pub const ACCEL_COLLAPSE_LIMIT: f64 = 1e-4;

fn accelerate(expr: &str, z0: f64, c_low: f64, c_high: f64, t_max: f64, out: &Path, collapse_out: Option<&Path>) -> Outcome {
    let cost = ScalarCost::parse(expr)?;
    let cfg = IntegratorConfig::default().with_t_max(t_max);
    let report = scalarcase::compare_acceleration(&cost, z0, c_low, c_high, &cfg)?;
    csvio::write_accel(csvio::create(out)?, &report)?;
    if let Some(path) = collapse_out {
        csvio::write_collapse(csvio::create(path)?, &report)?;
    }
    let margin = report.min_margin();
    println!("min margin {margin:.3e}, tau collapse error {:.3e}", report.tau_collapse_error);
    check(margin > 0.0, || format!("high-imbalance run is not strictly faster (min margin {margin:e})"))?;
    check(report.tau_collapse_error < ACCEL_COLLAPSE_LIMIT, || {
        format!("tau collapse error {:e}", report.tau_collapse_error)
    })
}

pub const DICHOTOMY_HEADER: [&str; 10] = [
    "run",
    "kind",
    "d0",
    "conserved_d0",
    "imbalance_c0",
    "final_f",
    "final_norm",
    "d_drift",
    "sign_flip",
    "z_monotone",
];

/// Tolerance on final costs in the dichotomy battery.
pub const DICHOTOMY_F_TOL: f64 = 1e-6;
/// Tolerance on `|D(t) − D(0)|`.
pub const DICHOTOMY_D_TOL: f64 = 1e-8;

fn dichotomy(expr: &str, k: usize, positive: usize, anti: usize, seed: u64, t_max: f64, out: Option<&Path>) -> Outcome {
    let cost = ScalarCost::parse(expr)?;
    let cfg = IntegratorConfig::default().with_t_max(t_max);
    let inits = scalarcase::dichotomy_inits(&cost, k, positive, anti, seed)?;
    let report = scalarcase::dichotomy_experiment(&cost, &inits, &cfg)?;
    if let Some(path) = out {
        let rows: Vec<Vec<String>> = report
            .runs
            .iter()
            .enumerate()
            .map(|(i, r)| {
                vec![
                    i.to_string(),
                    if r.anti_balanced() { "anti" } else { "positive" }.to_string(),
                    csvio::fmt_real(r.d0),
                    csvio::fmt_real(r.conserved0),
                    csvio::fmt_real(r.imbalance0),
                    csvio::fmt_real(r.final_f),
                    csvio::fmt_real(r.final_norm),
                    csvio::fmt_real(r.d_drift),
                    r.sign_flip.to_string(),
                    r.z_monotone.to_string(),
                ]
            })
            .collect();
        csvio::write_rows(csvio::create(path)?, &DICHOTOMY_HEADER, &rows)?;
    }
    let (pos_ok, pos_n) = report.positive_ok(DICHOTOMY_F_TOL);
    let (anti_ok, anti_n) = report.anti_ok(DICHOTOMY_F_TOL);
    let drift = report.runs.iter().map(|r| r.d_drift).fold(0.0, f64::max);
    println!("d>0 reached the minimum: {pos_ok}/{pos_n}; d=0 reached the origin: {anti_ok}/{anti_n}; max D drift {drift:.3e}");
    check(pos_ok == pos_n && anti_ok == anti_n, || "dichotomy not observed for every run".into())?;
    check(drift < DICHOTOMY_D_TOL, || format!("D drift {drift:e}"))
}

fn saddle_certify(config: &Path, stack: Option<&Path>, out: &Path, direction_out: Option<&Path>) -> Outcome {
    let (cfg, cost) = load(config)?;
    let shape = cfg.shape()?;
    if shape.depth != 2 {
        return Err(Failure::Usage("saddle certification supports depth 2 only".into()));
    }
    let stack = match stack {
        Some(path) => csvio::read_stack(csvio::open(path)?).map_err(|e| Failure::Usage(e.to_string()))?,
        None => LayerStack::zeros(shape),
    };
    if stack.shape() != shape {
        return Err(Failure::Usage(format!("stack shape {:?} does not match config {shape:?}", stack.shape())));
    }
    let cert = saddle::certify_strict_saddle(&stack, &cost)?;
    csvio::write_certificate(csvio::create(out)?, &(&cert).into())?;
    if let Some(path) = direction_out {
        csvio::write_stack(csvio::create(path)?, &cert.direction)?;
    }
    println!(
        "curvature={:.6e} q_bar={:.6e} min_eig={:.6e} strict_saddle={}",
        cert.curvature, cert.q_bar, cert.min_eig, cert.is_strict_saddle
    );
    check(cert.is_strict_saddle, || "not certified as a strict saddle".into())
}

pub const INVARIANT_HEADER: [&str; 3] = ["t", "drift", "chain_residual"];

fn invariant_check(config: &Path, tol: f64, out: Option<&Path>) -> Outcome {
    let (cfg, cost) = load(config)?;
    if cfg.net.depth < 2 {
        return Err(Failure::Usage("invariants need depth >= 2".into()));
    }
    let stack = cfg.initial_stack(&cost)?;
    let traj = flow::integrate(&stack, &cost, &cfg.integrator)?;
    let inv0 = crate::invariant::invariants(&stack)?;
    let mut rows = Vec::with_capacity(traj.samples.len());
    let (mut drift, mut chain) = (0.0f64, 0.0f64);
    for s in &traj.samples {
        let d = crate::invariant::deviation(&crate::invariant::invariants(&s.stack)?, &inv0);
        let r = crate::invariant::norm_chain_residual(&s.stack, &inv0)?
            .into_iter()
            .fold(0.0, f64::max);
        drift = drift.max(d);
        chain = chain.max(r);
        rows.push(vec![csvio::fmt_real(s.t), csvio::fmt_real(d), csvio::fmt_real(r)]);
    }
    if let Some(path) = out {
        csvio::write_rows(csvio::create(path)?, &INVARIANT_HEADER, &rows)?;
    }
    println!("samples={} drift={drift:.3e} chain_residual={chain:.3e}", traj.samples.len());
    check(drift < tol && chain < tol, || format!("drift {drift:e} / chain residual {chain:e} exceed {tol:e}"))
}

fn portrait(
    kind: KindArg,
    half_width: f64,
    grid: usize,
    manifolds: bool,
    csv: &Path,
    overlay_csv: Option<&Path>,
    svg: Option<&Path>,
) -> Outcome {
    let kind = match kind {
        KindArg::Linear => PortraitKind::Linear,
        KindArg::Sigmoid => PortraitKind::Sigmoid,
    };
    let p = phase_portrait(kind, Bounds::square(half_width), (grid, grid), manifolds)?;
    csvio::write_portrait(csvio::create(csv)?, &p.samples)?;
    if let Some(path) = overlay_csv {
        csvio::write_overlays(csvio::create(path)?, &p.overlays)?;
    }
    if let Some(path) = svg {
        write_portrait_svg(&p, path)?;
    }
    println!("{} portrait: {} samples, {} overlays", kind.as_str(), p.samples.len(), p.overlays.len());
    Ok(())
}

fn parse_cost(expr: &str, at: &[f64]) -> Outcome {
    let cost = ScalarCost::parse(expr)?;
    println!("f(w) = {}", cost.expression());
    println!("f'(w) = {}", cost.derivative());
    println!("f''(w) = {}", cost.second_derivative());
    for w in at {
        let e = cost.eval(*w);
        println!("w = {w}: f = {}, f' = {}, f'' = {}", e.value, e.d1, e.d2);
    }
    Ok(())
}

pub const FIG2_DEVIATION_LIMIT: f64 = 1e-4;
pub const FIG2_HALF_WIDTH: f64 = 3.0;
pub const FIG2_GRID: usize = 21;

#[derive(Debug, Clone, PartialEq)]
pub struct Fig2Report {
    pub files: Vec<PathBuf>,
    pub deviation: f64,
}

/// Writes the linear and sigmoidal portraits (CSV + SVG each) into `outdir`
/// and measures how far the traced stable manifold is from its formula.
pub fn recipe_fig2(outdir: &Path) -> Result<Fig2Report> {
    fs::create_dir_all(outdir)?;
    let mut files = Vec::new();
    for kind in [PortraitKind::Linear, PortraitKind::Sigmoid] {
        let p = phase_portrait(kind, Bounds::square(FIG2_HALF_WIDTH), (FIG2_GRID, FIG2_GRID), true)?;
        let csv = outdir.join(format!("fig2_{}.csv", kind.as_str()));
        let svg = outdir.join(format!("fig2_{}.svg", kind.as_str()));
        csvio::write_portrait(csvio::create(&csv)?, &p.samples)?;
        write_portrait_svg(&p, &svg)?;
        files.push(csv);
        files.push(svg);
    }
    let cfg = IntegratorConfig {
        grad_tol: f64::MIN_POSITIVE,
        ..IntegratorConfig::default()
    };
    let deviation = sigmoid::separatrix_deviation(&cfg, &SEPARATRIX_CHECK_POINTS)?;
    Ok(Fig2Report { files, deviation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalarcase::ScalarPairState;

    const QUAD: &str = r#"{
        "cost": {"kind": "matrix_quadratic", "target": [[1.0, 0.0], [0.0, 1.0]]},
        "net": {"n": 2, "k": 3, "depth": 2},
        "init": {"mode": "random", "seed": 1, "scale": 0.5},
        "integrator": {"method": "rk45", "rtol": 1e-10, "atol": 1e-12, "h0": 1e-3,
                       "t_max": 50.0, "grad_tol": 1e-8, "max_steps": 1000000, "record_stride": 1}
    }"#;

    #[test]
    fn config_parses_and_builds() {
        let cfg = RunConfig::parse(QUAD).unwrap();
        assert_eq!(cfg.net.k, 3);
        let cost = cfg.build_cost().unwrap();
        let s = cfg.initial_stack(&cost).unwrap();
        assert_eq!(s.depth(), 2);
    }

    #[test]
    fn config_rejects_unknown_and_missing_keys() {
        let extra = QUAD.replacen("\"seed\": 1", "\"seed\": 1, \"sede\": 2", 1);
        assert!(matches!(RunConfig::parse(&extra), Err(Error::Config(_))));
        let extra_cost = QUAD.replacen("\"target\"", "\"extra\": 1, \"target\"", 1);
        assert!(RunConfig::parse(&extra_cost).is_err());
        let missing = QUAD.replacen("\"h0\": 1e-3,", "", 1);
        assert!(RunConfig::parse(&missing).is_err());
        let bad_method = QUAD.replacen("rk45", "euler", 1);
        assert!(RunConfig::parse(&bad_method).is_err());
        let bad_tol = QUAD.replacen("\"rtol\": 1e-10", "\"rtol\": -1", 1);
        assert!(RunConfig::parse(&bad_tol).is_err());
    }

    #[test]
    fn init_modes() {
        let mut cfg = RunConfig::parse(QUAD).unwrap();
        let cost = cfg.build_cost().unwrap();
        cfg.init.mode = InitMode::PairRescale;
        assert!(cfg.initial_stack(&cost).is_err());
        cfg.init.eta = Some(2.0);
        let r = cfg.initial_stack(&cost).unwrap();
        cfg.init.mode = InitMode::Random;
        let s = cfg.initial_stack(&cost).unwrap();
        assert!((r.product() - s.product()).norm() < 1e-12);
        cfg.init.mode = InitMode::AntiBalanced;
        assert!(cfg.initial_stack(&cost).is_err());

        let scalar = QUAD
            .replacen(r#""kind": "matrix_quadratic", "target": [[1.0, 0.0], [0.0, 1.0]]"#, r#""kind": "scalar_expr", "expr": "(1-w)^2""#, 1)
            .replacen(r#""n": 2"#, r#""n": 1"#, 1)
            .replacen(r#""mode": "random""#, r#""mode": "anti_balanced""#, 1);
        let cfg = RunConfig::parse(&scalar).unwrap();
        let cost = cfg.build_cost().unwrap();
        let s = cfg.initial_stack(&cost).unwrap();
        let st = ScalarPairState::from_stack(&s).unwrap();
        assert_eq!(scalarcase::d_metric(&st, cost.as_scalar().unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn failure_codes() {
        assert_eq!(Failure::from(Error::Config("x".into())).code(), 1);
        assert_eq!(Failure::from(Error::NonFinite("x".into())).code(), 2);
        assert_eq!(Failure::from(Error::Io(std::io::Error::other("x"))).code(), 2);
        assert_eq!(Failure::from(Error::Precondition("x".into())).code(), 3);
    }

    #[test]
    fn usage_errors_exit_one() {
        let argv = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(run(&argv(&["overparam"])), 1);
        assert_eq!(run(&argv(&["overparam", "bogus"])), 1);
        assert_eq!(run(&argv(&["overparam", "parse-cost", "--expr", "(1-w)^2", "--frobnicate"])), 1);
        assert_eq!(run(&argv(&["overparam", "parse-cost", "--expr", "sin(w)"])), 1);
        assert_eq!(run(&argv(&["overparam", "simulate", "--config", "/nonexistent/q.json", "--out", "x.csv"])), 1);
        assert_eq!(run(&argv(&["overparam", "parse-cost", "--expr", "(1-w)^2", "--at", "-1"])), 0);
    }
}
