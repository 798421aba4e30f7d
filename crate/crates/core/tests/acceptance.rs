//! End-to-end acceptance checks, one line per criterion.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use overparam::flow::{detect_convergence, integrate, LimitLabel, Trajectory, DEFAULT_TOL_F};
use overparam::linnet::{random_init, LayerStack, NetShape};
use overparam::saddle::{assemble_hessian, certify_strict_saddle, min_eigenvalue, realize_escape, DEFAULT_FD_EPS};
use overparam::scalarcase::{
    compare_acceleration, dichotomy_experiment, dichotomy_inits, match_reduction, reduced_flow_at,
};
use overparam::sigmoid::{separatrix_deviation, sig_integrate, sig_invariant, SigState, SEPARATRIX_CHECK_POINTS};
use overparam::{IntegratorConfig, MatrixCost, ScalarCost};

type Check = std::result::Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn tight(t_max: f64) -> IntegratorConfig {
    IntegratorConfig {
        rtol: 1e-10,
        atol: 1e-12,
        t_max,
        ..IntegratorConfig::default()
    }
}

/// Shared runs for criteria 1 to 3.
struct ConservationRuns {
    trajectories: Vec<Trajectory>,
    seconds: f64,
}

fn conservation_runs() -> Result<ConservationRuns, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20240601);
    let mut setups = Vec::new();
    for i in 0..20u64 {
        let depth = rng.random_range(2..=4);
        let n = rng.random_range(1..=3);
        let k = n + rng.random_range(0..=3);
        let target = DMatrix::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 } + 0.3 * rng.random_range(-1.0..1.0));
        setups.push((NetShape::new(n, k, depth).unwrap(), target, 1000 + i));
    }
    let trajectories = setups
        .par_iter()
        .map(|(shape, target, seed)| {
            let cost = MatrixCost::quadratic(target.clone()).map_err(|e| e.to_string())?;
            let s = random_init(*shape, *seed, 0.7).map_err(|e| e.to_string())?;
            integrate(&s, &cost, &tight(50.0)).map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(ConservationRuns {
        trajectories,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn criterion_1(runs: &ConservationRuns) -> Check {
    let drift = runs
        .trajectories
        .iter()
        .map(|t| t.drift().map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);
    ensure(
        drift < 1e-6 && runs.seconds < 30.0,
        format!("max drift {drift:.2e} (< 1e-6) over 20 runs in {:.1} s (< 30 s)", runs.seconds),
    )
}

fn criterion_2(runs: &ConservationRuns) -> Check {
    let res = runs
        .trajectories
        .iter()
        .map(|t| t.max_chain_residual().map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);
    ensure(res < 1e-6, format!("max norm-chain residual {res:.2e} (< 1e-6)"))
}

fn criterion_3(runs: &ConservationRuns, sweep: &[Trajectory]) -> Check {
    let all: Vec<&Trajectory> = runs.trajectories.iter().chain(sweep).collect();
    let bad = all
        .iter()
        .filter(|t| !t.cost_non_increasing(10.0 * t.config.atol))
        .count();
    let worst = all.iter().map(|t| t.max_cost_increase()).fold(0.0, f64::max);
    ensure(
        bad == 0,
        format!("{} trajectories, {bad} with an increase beyond 10 atol (largest step up {worst:.2e})", all.len()),
    )
}

fn sweep_runs() -> Result<(Vec<Trajectory>, f64), String> {
    let start = Instant::now();
    let shape = NetShape::new(2, 4, 2).unwrap();
    let cost = MatrixCost::quadratic(DMatrix::identity(2, 2)).unwrap();
    let cfg = IntegratorConfig::default().with_t_max(500.0);
    let trajs = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let s = random_init(shape, seed, 0.5).map_err(|e| e.to_string())?;
            integrate(&s, &cost, &cfg).map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok((trajs, start.elapsed().as_secs_f64()))
}

fn criterion_4(trajs: &[Trajectory], seconds: f64) -> Check {
    let cost = MatrixCost::quadratic(DMatrix::identity(2, 2)).unwrap();
    let classes: Vec<_> = trajs.iter().map(|t| detect_convergence(t, &cost, DEFAULT_TOL_F)).collect();
    let ok = classes
        .iter()
        .filter(|c| c.label == LimitLabel::CriticalOfF && c.grad_f_norm < 1e-6)
        .count();
    let worst = classes.iter().map(|c| c.grad_f_norm).fold(0.0, f64::max);
    ensure(
        ok == 100 && seconds < 60.0,
        format!("{ok}/100 critical_of_f, max ‖∇f‖ {worst:.2e}, {seconds:.1} s (< 60 s)"),
    )
}

fn criterion_5() -> Check {
    let shape = NetShape::new(2, 3, 2).unwrap();
    let origin = LayerStack::zeros(shape);
    let cost = MatrixCost::quadratic(DMatrix::identity(2, 2)).map_err(|e| e.to_string())?;
    let cert = certify_strict_saddle(&origin, &cost).map_err(|e| e.to_string())?;
    let h = assemble_hessian(&origin, &cost, DEFAULT_FD_EPS).map_err(|e| e.to_string())?;
    let min_eig = min_eigenvalue(&h);
    let run = realize_escape(&origin, &cost, &cert.direction, 1e-3, &IntegratorConfig::default().with_t_max(1.0))
        .map_err(|e| e.to_string())?;
    ensure(
        cert.curvature < 0.0 && (min_eig + 1.0).abs() < 5e-4 && run.escaped() && run.t_end <= 1.0,
        format!(
            "curvature {:.4e}, min eig {min_eig:.6} (−1 ± 5e-4), g {:.6} → {:.6} by t = {}",
            cert.curvature, run.g_saddle, run.g_end, run.t_end
        ),
    )
}

fn dichotomy_report() -> Result<overparam::scalarcase::DichotomyReport, String> {
    let cost = ScalarCost::parse("(1-w)^2").map_err(|e| e.to_string())?;
    let inits = dichotomy_inits(&cost, 2, 20, 5, 7).map_err(|e| e.to_string())?;
    dichotomy_experiment(&cost, &inits, &tight(200.0)).map_err(|e| e.to_string())
}

fn criterion_6(rep: &overparam::scalarcase::DichotomyReport) -> Check {
    let (pos, pos_n) = rep.positive_ok(1e-6);
    let (anti, anti_n) = rep.anti_ok(1e-6);
    ensure(
        pos == 20 && pos_n == 20 && anti == 5 && anti_n == 5,
        format!("d>0: {pos}/{pos_n} reach f < 1e-6; d=0: {anti}/{anti_n} reach the origin with f within 1e-6 of 1"),
    )
}

fn criterion_7(rep: &overparam::scalarcase::DichotomyReport) -> Check {
    let drift = rep.runs.iter().map(|r| r.d_drift).fold(0.0, f64::max);
    let gap = rep
        .runs
        .iter()
        .map(|r| (r.conserved0 - r.imbalance0).abs())
        .fold(0.0, f64::max);
    ensure(
        drift < 1e-8 && gap < 1e-10,
        format!("max |D(t) − D(0)| {drift:.2e} (< 1e-8), max |D(0) − c| {gap:.2e} (< 1e-10)"),
    )
}

fn criterion_8() -> Check {
    let cost = ScalarCost::parse("(1-w)^2").map_err(|e| e.to_string())?;
    let inits = dichotomy_inits(&cost, 2, 10, 0, 11).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for st in &inits {
        worst = worst.max(match_reduction(&cost, st, &tight(5.0)).map_err(|e| e.to_string())?);
    }
    let times = [0.1, 0.25, 0.5];
    let red = reduced_flow_at(&cost, 0.0, 0.5, &tight(1.0), &times).map_err(|e| e.to_string())?;
    let oracle = red.t[1..]
        .iter()
        .zip(&red.z[1..])
        .map(|(t, z)| {
            let e = (4.0 * t).exp();
            (z - e / (1.0 + e)).abs()
        })
        .fold(0.0, f64::max);
    ensure(
        worst < 1e-8 && oracle < 1e-8 && red.t.len() == 4,
        format!("full vs reduced max |Δz| {worst:.2e} over 10 inits, logistic oracle error {oracle:.2e}"),
    )
}

fn criterion_9() -> Check {
    let cost = ScalarCost::parse("(1-w)^2").map_err(|e| e.to_string())?;
    let r = compare_acceleration(&cost, 0.5, 0.0, 9.0, &tight(1.0)).map_err(|e| e.to_string())?;
    let strictly_below = r
        .t_grid
        .iter()
        .zip(r.cost_low_c.iter().zip(&r.cost_high_c))
        .filter(|(t, _)| **t > 0.0)
        .all(|(_, (lo, hi))| hi < lo);
    ensure(
        strictly_below && r.tau_collapse_error < 1e-4,
        format!(
            "c=9 below c=0 at all {} samples in (0,1]: {strictly_below}, min margin {:.2e}; τ-collapse sup error {:.2e}",
            r.t_grid.len() - 1,
            r.min_margin(),
            r.tau_collapse_error
        ),
    )
}

fn criterion_10() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let starts: Vec<SigState> = (0..20)
        .map(|_| SigState::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
        .collect();
    let cfg = IntegratorConfig {
        grad_tol: f64::MIN_POSITIVE,
        ..tight(20.0)
    };
    let mut worst: f64 = 0.0;
    for s in starts {
        worst = worst.max(sig_integrate(s, &cfg).map_err(|e| e.to_string())?.invariant_drift());
    }
    let level = sig_invariant(SigState::new(0.0, 0.0));
    ensure(
        worst < 1e-8 && level == -0.5,
        format!("max |C drift| {worst:.2e} (< 1e-8) over 20 starts; C(0,0) = {level}"),
    )
}

fn criterion_11() -> Check {
    let cfg = IntegratorConfig {
        grad_tol: f64::MIN_POSITIVE,
        ..IntegratorConfig::default()
    };
    let dev = separatrix_deviation(&cfg, &SEPARATRIX_CHECK_POINTS).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let argv: Vec<String> = ["overparam", "fig2", "--outdir", dir.path().to_str().unwrap()]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let code = overparam::cli::run(&argv);
    let files = std::fs::read_dir(dir.path()).map_err(|e| e.to_string())?.count();
    ensure(
        dev < 1e-4 && code == 0 && files == 4,
        format!("max separatrix deviation {dev:.2e} at w1 ∈ ±{{0.25, 0.5, 1}}; fig2 exit {code}, {files} files"),
    )
}

fn rel_err(approx: f64, exact: f64) -> f64 {
    (approx - exact).abs() / exact.abs().max(f64::MIN_POSITIVE)
}

fn criterion_12() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst_grad: f64 = 0.0;
    let cases = 120;
    for case in 0..cases {
        let depth = rng.random_range(2..=4);
        let n = rng.random_range(1..=3);
        let k = n + rng.random_range(0..=2);
        let shape = NetShape::new(n, k, depth).unwrap();
        let target = DMatrix::from_fn(n, n, |r, c| if r == c { 1.5 } else { 0.0 } + 0.4 * rng.random_range(-1.0..1.0));
        let cost = MatrixCost::quadratic(target).map_err(|e| e.to_string())?;
        let s = random_init(shape, 5000 + case, 0.9).map_err(|e| e.to_string())?;
        let analytic: Vec<f64> = s
            .layer_gradients(&cost)
            .map_err(|e| e.to_string())?
            .layers
            .iter()
            .flat_map(|m| m.iter().copied().collect::<Vec<_>>())
            .collect();
        let x0 = s.to_vector();
        let g = |x: &nalgebra::DVector<f64>| overparam::linnet::overparam_cost(&LayerStack::from_slice(shape, x.as_slice()).unwrap(), &cost).unwrap();
        let h = 1e-5;
        let fd: Vec<f64> = (0..x0.len())
            .map(|i| {
                let mut p = x0.clone();
                let mut m = x0.clone();
                p[i] += h;
                m[i] -= h;
                (g(&p) - g(&m)) / (2.0 * h)
            })
            .collect();
        let diff: f64 = fd.iter().zip(&analytic).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        worst_grad = worst_grad.max(diff / norm);
    }

    let exprs = ["(1-w)^2", "(w^2-1)^2+w", "w^3-2*w+1/(1+w^2)", "(1+w)^4/3-w", "-(1-w)^2*w^2+5*w"];
    let mut worst_d1: f64 = 0.0;
    let mut worst_d2: f64 = 0.0;
    let mut n_scalar = 0;
    for e in exprs {
        let c = ScalarCost::parse(e).map_err(|e| e.to_string())?;
        for _ in 0..30 {
            let w: f64 = rng.random_range(-2.0..2.0);
            let h = 1e-3;
            // fourth-order central stencil
            let d = |f: &dyn Fn(f64) -> f64| (f(w - 2.0 * h) - 8.0 * f(w - h) + 8.0 * f(w + h) - f(w + 2.0 * h)) / (12.0 * h);
            worst_d1 = worst_d1.max(rel_err(d(&|x| c.value(x)), c.d1(w)));
            worst_d2 = worst_d2.max(rel_err(d(&|x| c.d1(x)), c.d2(w)));
            n_scalar += 1;
        }
    }
    ensure(
        worst_grad < 1e-6 && worst_d1 < 1e-6 && worst_d2 < 1e-6,
        format!(
            "layer gradients: max rel err {worst_grad:.2e} over {cases} cases; parsed f′ {worst_d1:.2e}, f″ {worst_d2:.2e} over {n_scalar} cases"
        ),
    )
}

fn report(id: usize, name: &str, check: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = match catch_unwind(AssertUnwindSafe(check)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    };
    let secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => {
            println!("[PASS] {id:>2}. {name}: {detail} [{secs:.1}s]");
            true
        }
        Err(detail) => {
            println!("[FAIL] {id:>2}. {name}: {detail} [{secs:.1}s]");
            false
        }
    }
}

fn main() {
    let suite = Instant::now();
    let mut ok = true;

    let runs = conservation_runs();
    let sweep = sweep_runs();
    let rep = dichotomy_report();
    let empty: Vec<Trajectory> = Vec::new();

    let with_runs = |f: &dyn Fn(&ConservationRuns) -> Check| -> Check {
        match &runs {
            Ok(r) => f(r),
            Err(e) => Err(e.clone()),
        }
    };
    ok &= report(1, "invariant conservation", || with_runs(&criterion_1));
    ok &= report(2, "norm-chain relation", || with_runs(&criterion_2));
    ok &= report(3, "monotone cost", || {
        let sweep = sweep.as_ref().map(|(t, _)| t).unwrap_or(&empty);
        with_runs(&|r| criterion_3(r, sweep))
    });
    ok &= report(4, "almost-everywhere convergence", || match &sweep {
        Ok((t, secs)) => criterion_4(t, *secs),
        Err(e) => Err(e.clone()),
    });
    ok &= report(5, "spurious saddle certification", criterion_5);
    ok &= report(6, "d-metric dichotomy", || rep.as_ref().map_err(Clone::clone).and_then(criterion_6));
    ok &= report(7, "conserved D", || rep.as_ref().map_err(Clone::clone).and_then(criterion_7));
    ok &= report(8, "reduced flow and logistic oracle", criterion_8);
    ok &= report(9, "acceleration ordering and τ-collapse", criterion_9);
    ok &= report(10, "sigmoidal invariant", criterion_10);
    ok &= report(11, "separatrix formula and fig2", criterion_11);
    ok &= report(12, "derivative oracles", criterion_12);

    let secs = suite.elapsed().as_secs_f64();
    println!("acceptance: {} in {secs:.1} s", if ok { "all criteria passed" } else { "FAILED" });
    if !ok {
        std::process::exit(1);
    }
}
