//! Preset experiments: one run, its artifacts, and a pass/fail report.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use xdiff_core::motility::{check_hypotheses, MotilityKind, MotilitySpec};
use xdiff_core::steady::{find_nonconstant, locate_threshold, oscillation, scale_to_pattern, verify_steady};
use xdiff_core::{Field, Grid, Integrator, RunOptions, State, Trajectory};

use crate::config::{keyword_enum, render, GrowthName, Recipe, RunConfig};
use crate::io;
use crate::rng::{perturbation, STREAM_U, STREAM_V};

/// Mass drift allowed per run, relative to the initial mass.
pub const MASS_DRIFT_TOL: f64 = 1e-11;
/// Allowed defect of the discrete mean recursion of `v`.
pub const MEAN_RECURSION_TOL: f64 = 1e-12;
/// `L0` may rise between records by at most this many `dt * lyap_residual`.
pub const LYAPUNOV_SLACK: f64 = 10.0;
/// `L0(t) + int_0^t D0` may exceed `L0(0)` by this factor.
pub const ENERGY_IDENTITY_SLACK: f64 = 1.01;
/// Tolerance of the discrete lower bound on `v` in the logistic preset.
pub const V_LOWER_TOL: f64 = 1e-3;
/// Slack on the logistic mass bound.
pub const MASS_BOUND_SLACK: f64 = 1.05;
/// Patterns count as persisting above and as decayed below these oscillation ratios.
pub const PATTERN_PERSISTS: f64 = 0.5;
pub const PATTERN_DECAYS: f64 = 0.01;
/// Bounds on the steady residuals relative to `||u||_2`.
pub const STEADY_R1_TOL: f64 = 1e-13;
pub const STEADY_R2_TOL: f64 = 1e-9;
pub const STEADY_MIN_OSCILLATION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Lyapunov,
    MassMean,
    Pattern,
    Logistic,
}

keyword_enum!(Preset { Lyapunov => "lyapunov", MassMean => "mass-mean", Pattern => "pattern", Logistic => "logistic" });

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub title: String,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl Report {
    fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            ..Self::default()
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check::new(name, passed, detail));
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# {}", self.title)?;
        for n in &self.notes {
            writeln!(f, "note: {n}")?;
        }
        for c in &self.checks {
            writeln!(f, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        writeln!(f, "overall: {}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

/// Initial state from the config recipe. Relative snapshot paths resolve against `base`.
pub fn build_initial(cfg: &RunConfig, base: &Path) -> Result<State> {
    let grid = cfg.grid()?;
    let i = &cfg.initial;
    let n = grid.len();
    let (u, v) = match i.recipe {
        Recipe::Random => {
            let pu = perturbation(cfg.seed, STREAM_U, n, i.amplitude);
            let pv = perturbation(cfg.seed, STREAM_V, n, i.v_amplitude);
            (
                Field::new(grid, pu.iter().map(|p| i.m + p).collect())?,
                Field::new(grid, pv.iter().map(|p| i.m + p).collect())?,
            )
        }
        Recipe::Cosine => {
            let lx = cfg.domain.lx;
            let pi = std::f64::consts::PI;
            (
                Field::from_fn(grid, |x| i.m + i.amplitude * (pi * x[0] / lx).cos()),
                Field::from_fn(grid, |x| i.m + i.v_amplitude * (2.0 * pi * x[0] / lx).cos()),
            )
        }
        Recipe::File => {
            let load = |name: &str| -> Result<Field> {
                let s = io::load_snapshot(&base.join(name))?;
                if *s.field.grid() != grid {
                    bail!("{name}: snapshot grid {:?} differs from the configured {:?}", s.field.grid(), grid);
                }
                Ok(s.field)
            };
            (load(&i.u_file)?, load(&i.v_file)?)
        }
        Recipe::Pattern => {
            let profile = pattern_profile(grid, i.pattern_d, i.pattern_k)?;
            let noisy = |f: &Field, stream: u64| -> Result<Field> {
                let p = perturbation(cfg.seed, stream, n, i.amplitude);
                let vals = f.values().iter().zip(&p).map(|(x, q)| x * (1.0 + q)).collect();
                Ok(Field::new(grid, vals)?)
            };
            (noisy(&profile.0, STREAM_U)?, noisy(&profile.1, STREAM_V)?)
        }
    };
    Ok(State::new(0.0, u, v)?)
}

/// Steady pattern `(u, v)` of the `z^-k` model placed on `grid`: the scalar
/// problem is solved on `grid` shrunk by `sqrt(d)` and scaled back up.
pub fn pattern_profile(grid: Grid, d: f64, k: f64) -> Result<(Field, Field)> {
    let reference = grid.scaled(d.sqrt())?;
    let search = find_nonconstant(d, k, reference)?;
    let Some(sol) = search.solution else {
        bail!("no nonconstant steady state found for d = {d}, k = {k}: {:?}", search.attempts);
    };
    let p = scale_to_pattern(&sol.w, d, k)?;
    Ok((p.u.with_grid(grid)?, p.v.with_grid(grid)?))
}

pub fn run_options(cfg: &RunConfig) -> RunOptions {
    let mut opts = RunOptions::new(cfg.time.t_end, cfg.time.observer_stride);
    if cfg.time.dt > 0.0 {
        opts = opts.fixed_dt(cfg.time.dt);
    }
    if cfg.output.snapshots || cfg.output.heatmaps {
        opts = opts.with_snapshots();
    }
    opts
}

/// Runs `cfg`, writes artifacts into `out` and evaluates the checks of `preset`.
/// A mid-run abort still writes the partial artifacts and fails the report.
pub fn run_experiment(preset: Option<Preset>, cfg: &RunConfig, base: &Path, out: &Path) -> Result<Report> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("config.echo"), render(cfg))?;

    let title = preset.map_or("run".to_string(), |p| format!("preset {}", p.as_str()));
    let mut report = Report::new(title);
    let initial = build_initial(cfg, base)?;
    let params = cfg.model_params()?;
    let integrator = Integrator::new(params, cfg.grid()?);
    let mut opts = run_options(cfg);
    if preset == Some(Preset::Lyapunov) {
        opts = opts.with_dissipation();
    }
    let traj = integrator.run(&initial, &opts)?;
    write_artifacts(cfg, &traj, out)?;

    report.push(
        "completed",
        traj.complete(),
        match &traj.failure {
            None => format!("t = {} after {} steps, {} halvings", traj.final_state.t, traj.steps, traj.halvings),
            Some(e) => format!("aborted at t = {}: {e}", traj.final_state.t),
        },
    );
    if cfg.model.mollify_eta == 0.0 && cfg.model.growth == GrowthName::None {
        if let Ok(spec) = cfg.motility_spec() {
            if preset == Some(Preset::Lyapunov) && !monotone(&spec) {
                report.notes.push("motility violates the monotonicity hypothesis; decay is not guaranteed".into());
            }
        }
    }
    match preset {
        None => {}
        Some(Preset::Lyapunov) => lyapunov_checks(&traj, &mut report),
        Some(Preset::MassMean) => mass_mean_checks(cfg, &initial, &traj, &mut report),
        Some(Preset::Pattern) => pattern_checks(cfg, &initial, &traj, &mut report),
        Some(Preset::Logistic) => logistic_checks(cfg, &initial, &traj, &mut report)?,
    }
    fs::write(out.join("report.txt"), report.to_string())?;
    Ok(report)
}

fn monotone(spec: &MotilitySpec) -> bool {
    let z: Vec<f64> = (1..=2000).map(|i| i as f64 * 0.01).collect();
    check_hypotheses(spec, &z).monotone()
}

fn write_artifacts(cfg: &RunConfig, traj: &Trajectory, out: &Path) -> Result<()> {
    if cfg.output.csv {
        io::write_csv(&out.join("diagnostics.csv"), &traj.records)?;
    }
    if cfg.output.snapshots {
        let dir = out.join("snapshots");
        fs::create_dir_all(&dir)?;
        for (i, s) in traj.snapshots.iter().enumerate() {
            io::write_snapshot(&dir.join(format!("u_{i:05}.xdiff")), &s.u, s.t, "u")?;
            io::write_snapshot(&dir.join(format!("v_{i:05}.xdiff")), &s.v, s.t, "v")?;
        }
    }
    if cfg.output.heatmaps && !traj.snapshots.is_empty() {
        if cfg.domain.dim == 1 {
            let us: Vec<&Field> = traj.snapshots.iter().map(|s| &s.u).collect();
            let vs: Vec<&Field> = traj.snapshots.iter().map(|s| &s.v).collect();
            fs::write(out.join("u_spacetime.pgm"), io::heatmap_spacetime(&us))?;
            fs::write(out.join("v_spacetime.pgm"), io::heatmap_spacetime(&vs))?;
        } else {
            let last = traj.snapshots.last().unwrap();
            fs::write(out.join("u_final.pgm"), io::heatmap_2d(&last.u))?;
            fs::write(out.join("v_final.pgm"), io::heatmap_2d(&last.v))?;
        }
    }
    Ok(())
}

/// Largest rise of `L0` between consecutive records beyond the allowed slack,
/// as `(excess, index)`; `excess <= 0` means no violation.
pub fn lyapunov_monotonicity(records: &[xdiff_core::DiagnosticsRecord]) -> (f64, usize) {
    let mut worst = (f64::NEG_INFINITY, 0);
    for (i, w) in records.windows(2).enumerate() {
        let dt = w[1].t - w[0].t;
        let slack = LYAPUNOV_SLACK * dt * w[1].lyap_residual;
        let excess = w[1].l0 - w[0].l0 - slack;
        if excess > worst.0 {
            worst = (excess, i + 1);
        }
    }
    worst
}

/// `max_n (L0(t_n) + int_0^{t_n} D0) / L0(0)` from the per-step dissipation
/// integral of a run; `NaN` when it was not tracked.
pub fn energy_identity_ratio(records: &[xdiff_core::DiagnosticsRecord], dissipation: &[f64]) -> f64 {
    if dissipation.len() != records.len() || records.is_empty() {
        return f64::NAN;
    }
    let l_init = records[0].l0;
    records
        .iter()
        .zip(dissipation)
        .map(|(r, d)| (r.l0 + d) / l_init)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn lyapunov_checks(traj: &Trajectory, report: &mut Report) {
    let recs = &traj.records;
    let (excess, at) = lyapunov_monotonicity(recs);
    report.push(
        "L0 nonincreasing",
        !(excess > 0.0),
        if recs.len() < 2 {
            "single record".into()
        } else {
            format!("largest rise beyond slack {excess:.3e} at record {at}")
        },
    );
    let l_init = recs[0].l0;
    let l_final = recs.last().unwrap().l0;
    if l_init == 0.0 {
        let worst = recs.iter().zip(&traj.dissipation).map(|(r, d)| r.l0 + d).fold(0.0, f64::max);
        report.push("energy identity", worst == 0.0, format!("L0(0) = 0, max L0 + int D0 = {worst:.3e}"));
    } else {
        let ratio = energy_identity_ratio(recs, &traj.dissipation);
        report.push(
            "energy identity",
            ratio <= ENERGY_IDENTITY_SLACK,
            format!("max (L0(t) + int_0^t D0) / L0(0) = {ratio:.6} (<= {ENERGY_IDENTITY_SLACK})"),
        );
    }
    let lyap_max = recs.iter().map(|r| r.lyap_residual).filter(|x| !x.is_nan()).fold(0.0, f64::max);
    report.notes.push(format!("max lyap_residual {lyap_max:.3e}"));
    report.notes.push(format!("L0 range [{l_final:.3e}, {l_init:.3e}]"));
}

fn mass_mean_checks(cfg: &RunConfig, initial: &State, traj: &Trajectory, report: &mut Report) {
    let recs = &traj.records;
    let m0 = recs[0].mass_u;
    let drift = recs.iter().map(|r| (r.mass_u - m0).abs()).fold(0.0, f64::max) / m0.abs();
    report.push("mass conserved", drift <= MASS_DRIFT_TOL, format!("relative drift {drift:.3e}"));
    report.push(
        "mean recursion",
        traj.mean_recursion_defect <= MEAN_RECURSION_TOL,
        format!("max |<v^n> - recursion| = {:.3e}", traj.mean_recursion_defect),
    );
    if cfg.model.source_eta == 0.0 {
        let dev = continuum_mean_deviation(initial, cfg.model.epsilon, recs);
        report.notes.push(format!("max deviation from the continuum mean formula {dev:.3e}"));
    }
}

/// `max_n |<v^n> - (<v_in> e^{-t/eps} + m (1 - e^{-t/eps}))|` with `m = <u_in>`.
pub fn continuum_mean_deviation(initial: &State, eps: f64, records: &[xdiff_core::DiagnosticsRecord]) -> f64 {
    let m = initial.u.mean();
    let v0 = initial.v.mean();
    records
        .iter()
        .map(|r| {
            let e = (-r.t / eps).exp();
            (r.mean_v - (v0 * e + m * (1.0 - e))).abs()
        })
        .fold(0.0, f64::max)
}

fn pattern_checks(cfg: &RunConfig, initial: &State, traj: &Trajectory, report: &mut Report) {
    let osc0 = oscillation(&initial.v);
    let osc1 = oscillation(&traj.final_state.v);
    let ratio = osc1 / osc0;
    let detail = format!("osc(v) {osc0:.3e} -> {osc1:.3e}, ratio {ratio:.3e}");
    let k = match cfg.motility_spec().map(|s| s.kind().clone()) {
        Ok(MotilityKind::Power { k }) | Ok(MotilityKind::Prototype { k }) => k,
        _ => f64::NAN,
    };
    if k <= 1.0 {
        report.notes.push("no pattern expected (k ≤ 1)".into());
        report.push("converges to homogeneous", ratio < PATTERN_DECAYS, detail);
    } else {
        report.push("pattern persists", ratio >= PATTERN_PERSISTS, detail);
    }
}

fn logistic_checks(cfg: &RunConfig, initial: &State, traj: &Trajectory, report: &mut Report) -> Result<()> {
    let growth = cfg.growth()?;
    let Some(bound) = growth.mass_bound(initial.u.integrate(), initial.grid().measure()) else {
        bail!("the logistic preset needs growth = logistic");
    };
    let recs = &traj.records;
    let eps = cfg.model.epsilon;
    let vmin0 = initial.v.min();
    let worst = recs
        .iter()
        .map(|r| r.min_v - (vmin0 * (-r.t / eps).exp() - V_LOWER_TOL))
        .fold(f64::INFINITY, f64::min);
    report.push("v lower bound", worst >= 0.0, format!("min_v - bound >= {worst:.3e}"));

    let y0 = recs[0].entropy_y;
    let finite = recs.iter().all(|r| r.entropy_y.is_finite());
    let c_t = recs.iter().map(|r| r.entropy_y - y0).fold(0.0, f64::max);
    report.push("entropy bounded", finite, format!("entropy_y <= entropy_y(0) + C(T), C(T) = {c_t:.3e}"));

    let t_half = 0.5 * cfg.time.t_end;
    let late_mass = recs.iter().filter(|r| r.t >= t_half).map(|r| r.mass_u).fold(f64::NEG_INFINITY, f64::max);
    report.push(
        "mass bound",
        late_mass <= MASS_BOUND_SLACK * bound,
        format!("sup_(t >= T/2) int u = {late_mass:.3e} vs {MASS_BOUND_SLACK} x {bound:.3e}"),
    );
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyRequest {
    pub d: f64,
    pub k: f64,
    pub nx: usize,
    pub length: f64,
    /// `(lo, hi, bisections)` for the threshold search.
    pub bisect: Option<(f64, f64, usize)>,
}

/// Nonconstant steady state of the `z^-k` model: scalar spike solve, scaling,
/// residual check of the full system, optional threshold bisection.
pub fn run_steady(req: &SteadyRequest, out: Option<&Path>) -> Result<Report> {
    let mut report = Report::new(format!("steady d = {} k = {}", req.d, req.k));
    let grid = Grid::new_1d(req.length, req.nx)?;
    let search = find_nonconstant(req.d, req.k, grid)?;
    for a in &search.attempts {
        report.notes.push(format!(
            "spike {:?} background {}: {}",
            a.center,
            a.background,
            match &a.outcome {
                Ok(osc) => format!("converged, oscillation {osc:.3e}"),
                Err(e) => format!("failed: {e}"),
            }
        ));
    }
    let Some(sol) = search.solution else {
        report.push("nonconstant", false, "every ansatz collapsed to w = 1 or failed".into());
        return finish_steady(report, out);
    };
    let osc = oscillation(&sol.w);
    report.push(
        "nonconstant",
        osc >= STEADY_MIN_OSCILLATION,
        format!("oscillation {osc:.3e} after {} Newton steps", sol.iterations),
    );
    let profile = scale_to_pattern(&sol.w, req.d, req.k)?;
    let (r1, r2) = verify_steady(&profile, &MotilitySpec::power(req.k)?)?;
    let un = profile.u.l2_norm();
    report.push("flux residual", r1 <= STEADY_R1_TOL * un, format!("r1/||u|| = {:.3e}", r1 / un));
    report.push("signal residual", r2 <= STEADY_R2_TOL * un, format!("r2/||u|| = {:.3e}", r2 / un));
    if let Some((lo, hi, n)) = req.bisect {
        let t = locate_threshold(req.k, grid, lo, hi, n)?;
        report.push(
            "threshold",
            t.d0.is_finite() && t.consistent(),
            format!("d0 in ({:.3e}, {:.3e}], {} values tested", t.d_below, t.d0, t.tested.len()),
        );
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        io::write_snapshot(&dir.join("w.xdiff"), &profile.w, 0.0, "w")?;
        io::write_snapshot(&dir.join("u.xdiff"), &profile.u, 0.0, "u")?;
        io::write_snapshot(&dir.join("v.xdiff"), &profile.v, 0.0, "v")?;
    }
    finish_steady(report, out)
}

fn finish_steady(report: Report, out: Option<&Path>) -> Result<Report> {
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.txt"), report.to_string())?;
    }
    Ok(report)
}
