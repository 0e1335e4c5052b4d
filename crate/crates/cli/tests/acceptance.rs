//! Acceptance suite: one PASS/FAIL line per criterion with the measured values.
//! Runs as a plain binary (`harness = false`) and exits nonzero on any failure.

#![allow(clippy::field_reassign_with_default)]

use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use xdiff_cli::config::{parse_config, render, GrowthName, MotilityName, Recipe, RunConfig};
use xdiff_cli::experiments::{
    build_initial, continuum_mean_deviation, energy_identity_ratio, lyapunov_monotonicity, run_experiment, run_steady,
    Preset,
};
use xdiff_cli::refine::{fit_order, refinement_study, Level, Order};
use xdiff_cli::rng::perturbation;
use xdiff_cli::SteadyRequest;
use xdiff_core::motility::{mollify, MotilitySpec};
use xdiff_core::{
    EllipticMethod, EllipticSolver, Field, G0Evaluator, Grid, Integrator, Motility, RunOptions,
};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

/// Round trip through the config grammar so every run below is a valid config file.
fn validated(cfg: &RunConfig) -> RunConfig {
    parse_config(&render(cfg)).expect("acceptance config must validate")
}

fn quiet(mut cfg: RunConfig) -> RunConfig {
    cfg.output.snapshots = false;
    cfg.output.heatmaps = false;
    cfg
}

/// Shared setup of criteria 1 and 2: nx = 128, prototype k = 1, eps = 1, seeded random data.
fn mass_config() -> RunConfig {
    let mut c = RunConfig::default();
    c.seed = 20240601;
    c.domain.nx = 128;
    c.model.motility = MotilityName::Prototype;
    c.model.k = 1.0;
    c.model.epsilon = 1.0;
    c.initial.recipe = Recipe::Random;
    c.initial.amplitude = 0.5;
    c.initial.v_amplitude = 0.5;
    validated(&c)
}

const MASS_STEPS: usize = 100_000;

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let cfg = mass_config();
    let init = build_initial(&cfg, Path::new(".")).unwrap();
    let integrator = Integrator::new(cfg.model_params().unwrap(), cfg.grid().unwrap());
    let dt = integrator.stable_dt(&init).unwrap();
    let mut state = init.clone();
    let mass0: f64 = init.u.values().iter().sum();
    let mut drift = 0.0f64;
    for _ in 0..MASS_STEPS {
        state = integrator.step(&state, dt).unwrap();
        let mass: f64 = state.u.values().iter().sum();
        drift = drift.max((mass - mass0).abs() / mass0);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        drift <= 1e-11 && secs <= 10.0,
        format!("{MASS_STEPS} steps, max relative drift of sum(u) {drift:.2e} (<= 1e-11), {secs:.2} s (<= 10 s)"),
    )
}

fn criterion_2() -> Outcome {
    let cfg = mass_config();
    let init = build_initial(&cfg, Path::new(".")).unwrap();
    let integrator = Integrator::new(cfg.model_params().unwrap(), cfg.grid().unwrap());
    let dt0 = integrator.stable_dt(&init).unwrap();

    // recursion defect along the full criterion-1 run
    let opts = RunOptions::new(MASS_STEPS as f64 * dt0, 1000).fixed_dt(dt0);
    let traj = integrator.run(&init, &opts).unwrap();
    let defect = traj.mean_recursion_defect;

    // continuum deviation under dt refinement on a shorter horizon
    let t_end = 0.25;
    let dts = [dt0, dt0 / 2.0, dt0 / 4.0];
    let devs: Vec<f64> = dts
        .iter()
        .map(|&dt| {
            let tr = integrator.run(&init, &RunOptions::new(t_end, 500).fixed_dt(dt)).unwrap();
            continuum_mean_deviation(&init, cfg.model.epsilon, &tr.records)
        })
        .collect();
    let order = fit_order(&dts, &devs);
    outcome(
        defect <= 1e-12 && order >= 0.9,
        format!(
            "recursion defect {defect:.2e} (<= 1e-12); continuum deviation {:.3e} {:.3e} {:.3e}, order {order:.3} (>= 0.9)",
            devs[0], devs[1], devs[2]
        ),
    )
}

/// Smooth perturbation of the homogeneous state used by criteria 3, 4 and 11.
fn lyapunov_config(nx: usize, t_end: f64) -> RunConfig {
    let mut c = RunConfig::default();
    c.domain.nx = nx;
    c.model.motility = MotilityName::Prototype;
    c.model.k = 1.0;
    c.initial.recipe = Recipe::Cosine;
    c.initial.m = 1.0;
    c.initial.amplitude = 0.3;
    c.initial.v_amplitude = 0.2;
    c.time.t_end = t_end;
    c.time.observer_stride = 16;
    quiet(validated(&c))
}

const LEVELS: [usize; 3] = [64, 128, 256];

fn lyapunov_levels() -> Vec<Level> {
    LEVELS
        .iter()
        .map(|&nx| {
            let h = 1.0 / nx as f64;
            Level { nx, dt: 0.4 * h * h / 2.0 }
        })
        .collect()
}

fn order_text(o: Order) -> String {
    o.to_string()
}

fn criterion_3_and_11() -> (Outcome, Outcome) {
    let start = Instant::now();
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_identity = 0.0f64;
    let mut runs_ok = true;
    for level in lyapunov_levels() {
        let c = lyapunov_config(level.nx, 0.5);
        let init = build_initial(&c, Path::new(".")).unwrap();
        let integrator = Integrator::new(c.model_params().unwrap(), c.grid().unwrap());
        let opts = RunOptions::new(c.time.t_end, c.time.observer_stride)
            .fixed_dt(level.dt)
            .with_dissipation();
        let traj = integrator.run(&init, &opts).unwrap();
        runs_ok &= traj.complete();
        let (excess, _) = lyapunov_monotonicity(&traj.records);
        worst_excess = worst_excess.max(excess);
        worst_identity = worst_identity.max(energy_identity_ratio(&traj.records, &traj.dissipation));
    }
    let cfg = lyapunov_config(64, 0.5);
    let table = refinement_study(&cfg, &lyapunov_levels(), Path::new(".")).unwrap();
    let secs = start.elapsed().as_secs_f64();

    let lyap_order = table.order("lyap_residual");
    let lyap: Vec<f64> = table.levels.iter().map(|r| r.lyap_max).collect();
    let c3 = outcome(
        runs_ok
            && worst_excess <= 0.0
            && lyap_order.value().is_some_and(|p| p >= 0.9)
            && worst_identity <= 1.01
            && secs <= 60.0,
        format!(
            "(a) max L0 rise beyond slack {worst_excess:.2e} (<= 0); (b) lyap_residual {:.2e} {:.2e} {:.2e}, order {} (>= 0.9); \
             (c) max (L0(t) + int_0^t D0)/L0(0) {worst_identity:.5} (<= 1.01); {secs:.2} s (<= 60 s)",
            lyap[0],
            lyap[1],
            lyap[2],
            order_text(lyap_order)
        ),
    );

    let (ou, ov) = (table.order("weak_u"), table.order("weak_v"));
    let ru: Vec<f64> = table.levels.iter().map(|r| r.weak_u).collect();
    let rv: Vec<f64> = table.levels.iter().map(|r| r.weak_v).collect();
    let ok = |o: Order| o.value().is_some_and(|p| p >= 0.9);
    let c11 = outcome(
        ok(ou) && ok(ov),
        format!(
            "r_u {:.2e} {:.2e} {:.2e} order {}; r_v {:.2e} {:.2e} {:.2e} order {} (>= 0.9)",
            ru[0],
            ru[1],
            ru[2],
            order_text(ou),
            rv[0],
            rv[1],
            rv[2],
            order_text(ov)
        ),
    );
    (c3, c11)
}

fn criterion_4() -> Outcome {
    let cfg = lyapunov_config(64, 50.0);
    let init = build_initial(&cfg, Path::new(".")).unwrap();
    let grid = cfg.grid().unwrap();
    let integrator = Integrator::new(cfg.model_params().unwrap(), grid);
    let traj = integrator.run(&init, &RunOptions::new(50.0, 100_000)).unwrap();
    let m = init.u.mean();
    let solver = EllipticSolver::spectral(grid);
    let v_dev = |f: &Field| f.shifted(m).l2_norm();
    let u_dev = |f: &Field| solver.h1dual_norm(&f.shifted(m)).unwrap();
    let end = &traj.final_state;
    let rv = v_dev(&end.v) / v_dev(&init.v);
    let ru = u_dev(&end.u) / u_dev(&init.u);
    outcome(
        traj.complete() && rv <= 1e-4 && ru <= 1e-4,
        format!(
            "t = {}, ||v-m||_2 ratio {rv:.2e}, ||u-m||_(H1)' ratio {ru:.2e} (both <= 1e-4), {} steps",
            end.t, traj.steps
        ),
    )
}

fn criterion_5() -> Outcome {
    let zs: Vec<f64> = (1..=1000).map(|i| 20.0 * i as f64 / 1000.0).collect();
    let specs = [
        ("prototype k=0.5", MotilitySpec::prototype(0.5).unwrap()),
        ("prototype k=1", MotilitySpec::prototype(1.0).unwrap()),
        ("power k=1", MotilitySpec::power(1.0).unwrap()),
    ];
    let mut worst_g = f64::INFINITY;
    let mut worst_g2 = f64::INFINITY;
    let mut worst_anchor = 0.0f64;
    let mut worst_closed = 0.0f64;
    let mut closed_compared = 0;
    for (name, spec) in &specs {
        for m in [0.5, 1.0, 2.0] {
            let g0 = G0Evaluator::new(Arc::new(spec.clone()), m).unwrap();
            worst_anchor = worst_anchor.max(g0.eval(m).unwrap().abs());
            for &z in &zs {
                worst_g = worst_g.min(g0.eval(z).unwrap());
                worst_g2 = worst_g2.min(g0.second(z));
                if *name == "prototype k=1" {
                    let q = g0.eval_quadrature(z).unwrap();
                    let c = g0.eval_closed_form(z).expect("closed form for prototype k=1");
                    worst_closed = worst_closed.max((q - c).abs());
                    closed_compared += 1;
                }
            }
        }
    }
    outcome(
        worst_anchor == 0.0 && worst_g >= -1e-9 && worst_g2 >= -1e-9 && worst_closed <= 1e-8 && closed_compared > 0,
        format!(
            "|G0(m)| {worst_anchor:e} (== 0); min G0 {worst_g:.2e}, min G0'' {worst_g2:.2e} (>= -1e-9); \
             quadrature vs closed form {worst_closed:.2e} over {closed_compared} points (<= 1e-8)"
        ),
    )
}

fn criterion_6() -> Outcome {
    let spec = MotilitySpec::prototype(1.0).unwrap();
    let k0 = spec.sup();
    let (k1, k) = spec.growth_bound().unwrap();
    let zs: Vec<f64> = (0..1000).map(|i| 100.0 * i as f64 / 999.0).collect();
    let slack = 1e-8;
    let mut violations = 0;
    let mut tightest = f64::INFINITY;
    for eta in [0.5, 0.1, 0.01] {
        let g = mollify(&spec, eta).unwrap();
        for &z in &zs {
            let ge = g.gamma(z);
            let bound = 3.0 * k1 * (z + 1.0).powf(k);
            if ge < eta - slack || ge > k0 + 1.0 + slack || 1.0 / ge > bound + slack {
                violations += 1;
            }
            tightest = tightest.min((ge - eta).min(k0 + 1.0 - ge)).min(bound - 1.0 / ge);
        }
    }
    outcome(
        violations == 0,
        format!("{violations} violations over 3000 samples (K0 = {k0}, K1 = {k1}); smallest margin {tightest:.2e}"),
    )
}

fn criterion_7() -> Outcome {
    let grids = [Grid::new_1d(1.0, 128).unwrap(), Grid::new_2d(1.0, 1.0, 32, 32).unwrap()];
    let mut identity = 0.0f64;
    let mut mean = 0.0f64;
    let mut constant = 0.0f64;
    let mut agreement = 0.0f64;
    let mut fields = 0;
    for grid in grids {
        let spectral = EllipticSolver::new(grid, EllipticMethod::SpectralCosine);
        let cg = EllipticSolver::new(grid, EllipticMethod::ConjugateGradient);
        for seed in 0..50u64 {
            let w = Field::new(grid, perturbation(seed, 7, grid.len(), 1.0)).unwrap();
            let kw = spectral.solve_k(&w).unwrap();
            let lhs = kw.laplacian_neumann().map(|x| -x);
            let rhs = w.zero_mean();
            identity = identity.max(lhs.zip_map(&rhs, |a, b| (a - b).abs()).unwrap().max());
            mean = mean.max(kw.mean().abs());
            let kc = cg.solve_k(&w).unwrap();
            agreement = agreement.max(kw.zip_map(&kc, |a, b| (a - b).abs()).unwrap().max());
            fields += 1;
        }
        for c in [0.3, 1.0, 7.5] {
            for solver in [&spectral, &cg] {
                let z = solver.solve_helmholtz(&Field::constant(grid, c), 0.0).unwrap();
                constant = constant.max(z.values().iter().map(|x| (x - c).abs()).fold(0.0, f64::max));
            }
        }
    }
    outcome(
        identity <= 1e-10 && mean <= 1e-10 && constant <= 1e-12 && agreement <= 1e-8,
        format!(
            "{fields} fields: |-Lap K w - (w - <w>)| {identity:.2e}, |<K w>| {mean:.2e} (<= 1e-10); \
             |A^-1 c - c| {constant:.2e} (<= 1e-12); spectral vs CG {agreement:.2e} (<= 1e-8)"
        ),
    )
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let req = SteadyRequest {
        d: 1e-3,
        k: 2.0,
        nx: 256,
        length: 1.0,
        bisect: Some((1e-3, 1.0, 12)),
    };
    let report = run_steady(&req, None).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let details: Vec<String> = report.checks.iter().map(|c| format!("{} {}", c.name, c.detail)).collect();
    outcome(report.passed() && secs <= 30.0, format!("{}; {secs:.2} s (<= 30 s)", details.join("; ")))
}

fn pattern_config(k: f64) -> RunConfig {
    let d: f64 = 0.02;
    let mut c = RunConfig::default();
    c.seed = 9;
    c.domain.lx = 1.0 / d.sqrt();
    c.domain.nx = 64;
    c.model.motility = MotilityName::Power;
    c.model.k = k;
    c.initial.recipe = Recipe::Pattern;
    c.initial.pattern_d = d;
    c.initial.pattern_k = 2.0;
    c.initial.amplitude = 1e-3;
    c.time.t_end = 50.0;
    c.time.observer_stride = 1000;
    quiet(validated(&c))
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut parts = Vec::new();
    let mut ok = true;
    for k in [2.0, 0.5] {
        let report = run_experiment(Some(Preset::Pattern), &pattern_config(k), Path::new("."), &tmp.path().join(k.to_string()))
            .unwrap();
        ok &= report.passed();
        let c = report.checks.last().unwrap();
        parts.push(format!("k={k}: {} {}", c.name, c.detail));
    }
    outcome(ok, parts.join("; "))
}

fn criterion_10() -> Outcome {
    let mut c = RunConfig::default();
    c.seed = 31;
    c.domain.nx = 128;
    c.model.motility = MotilityName::Prototype;
    c.model.k = 1.0;
    c.model.epsilon = 1.0;
    c.model.growth = GrowthName::Logistic;
    c.model.h0 = 1.0;
    c.model.l = 1.0;
    c.initial.recipe = Recipe::Random;
    c.initial.m = 1.0;
    c.initial.amplitude = 0.5;
    c.initial.v_amplitude = 0.5;
    c.time.t_end = 20.0;
    c.time.observer_stride = 2000;
    let cfg = quiet(validated(&c));
    let tmp = tempfile::tempdir().unwrap();
    let report = run_experiment(Some(Preset::Logistic), &cfg, Path::new("."), tmp.path()).unwrap();
    let details: Vec<String> = report.checks.iter().map(|c| format!("{} {}", c.name, c.detail)).collect();
    outcome(report.passed(), details.join("; "))
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |n: usize, name: &'static str, o: Outcome| {
        println!("{} criterion {n:>2} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };
    report(1, "mass conservation", criterion_1());
    report(2, "mean relaxation", criterion_2());
    let (c3, c11) = criterion_3_and_11();
    report(3, "Lyapunov decay and identity", c3);
    report(4, "convergence to the homogeneous state", criterion_4());
    report(5, "G0 properties", criterion_5());
    report(6, "mollifier bounds", criterion_6());
    report(7, "elliptic operators", criterion_7());
    report(8, "steady pattern", criterion_8());
    report(9, "dynamic pattern contrast", criterion_9());
    report(10, "logistic variant", criterion_10());
    report(11, "very weak form residuals", c11);
    let failed = results.iter().filter(|r| !r.2.passed).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
