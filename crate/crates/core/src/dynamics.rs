//! IMEX time stepping for `u_t = Delta(u gamma(v)) + u h(u)`,
//! `eps v_t = Delta v - v + S(u)`.
//!
//! The `u` update is explicit and written as the discrete Laplacian of the
//! product `u gamma(v)`, so the cell sum of `u` is conserved exactly when there
//! is no growth term. The `v` update is a single implicit Helmholtz solve.

use std::sync::Arc;

use crate::diagnostics::{Diagnostics, DiagnosticsRecord};
use crate::elliptic::EllipticSolver;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::motility::{GrowthSpec, Motility};

pub const DEFAULT_CFL_SAFETY: f64 = 0.4;
pub const DEFAULT_DT_MIN: f64 = 1e-12;
/// Consecutive halvings tried after a positivity violation before a run aborts.
pub const MAX_HALVINGS: usize = 20;

#[derive(Debug, Clone)]
pub struct ModelParams {
    pub epsilon: f64,
    pub motility: Arc<dyn Motility>,
    pub growth: GrowthSpec,
    /// `0` gives the source `S(u) = u`, `eta > 0` the saturated `u / (1 + eta u)`.
    pub source_eta: f64,
    pub cfl_safety: f64,
    pub dt_min: f64,
}

impl ModelParams {
    pub fn new(epsilon: f64, motility: Arc<dyn Motility>) -> Result<Self> {
        let p = Self {
            epsilon,
            motility,
            growth: GrowthSpec::None,
            source_eta: 0.0,
            cfl_safety: DEFAULT_CFL_SAFETY,
            dt_min: DEFAULT_DT_MIN,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_growth(mut self, growth: GrowthSpec) -> Self {
        self.growth = growth;
        self
    }

    pub fn with_source_eta(mut self, eta: f64) -> Result<Self> {
        self.source_eta = eta;
        self.validate()?;
        Ok(self)
    }

    pub fn with_cfl_safety(mut self, cfl: f64) -> Result<Self> {
        self.cfl_safety = cfl;
        self.validate()?;
        Ok(self)
    }

    pub fn with_dt_min(mut self, dt_min: f64) -> Result<Self> {
        self.dt_min = dt_min;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::param("epsilon", format!("must satisfy epsilon > 0, got {}", self.epsilon)));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::param("cfl_safety", format!("must lie in (0, 1], got {}", self.cfl_safety)));
        }
        if !(self.source_eta.is_finite() && self.source_eta >= 0.0) {
            return Err(Error::param("source_eta", format!("must be >= 0, got {}", self.source_eta)));
        }
        if !(self.dt_min.is_finite() && self.dt_min > 0.0) {
            return Err(Error::param("dt_min", format!("must be positive, got {}", self.dt_min)));
        }
        Ok(())
    }

    /// Signal source `S(u)`.
    pub fn source(&self, u: f64) -> f64 {
        if self.source_eta == 0.0 {
            u
        } else {
            u / (1.0 + self.source_eta * u)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub u: Field,
    pub v: Field,
}

impl State {
    /// Checks grids agree, `u >= 0`, `v > 0` and all values are finite.
    pub fn new(t: f64, u: Field, v: Field) -> Result<Self> {
        u.same_grid(&v)?;
        if !(u.is_finite() && v.is_finite() && t.is_finite()) {
            return Err(Error::param("state", "non-finite values"));
        }
        if u.min() < 0.0 {
            return Err(Error::Positivity { t, detail: format!("min u = {:e}", u.min()) });
        }
        if v.min() <= 0.0 {
            return Err(Error::Positivity { t, detail: format!("min v = {:e}", v.min()) });
        }
        Ok(Self { t, u, v })
    }

    /// `(m, m)` at `t = 0`.
    pub fn homogeneous(grid: Grid, m: f64) -> Result<Self> {
        Self::new(0.0, Field::constant(grid, m), Field::constant(grid, m))
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }

    /// Cellwise average of two states on the same grid.
    pub fn midpoint(&self, other: &State) -> Result<State> {
        Ok(State {
            t: 0.5 * (self.t + other.t),
            u: self.u.zip_map(&other.u, |a, b| 0.5 * (a + b))?,
            v: self.v.zip_map(&other.v, |a, b| 0.5 * (a + b))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtPolicy {
    /// `stable_dt` at every step.
    Adaptive,
    /// Constant step; only the last step is shortened to land on `t_end`.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub t_end: f64,
    /// Record diagnostics every this many accepted steps (and at `t_end`).
    pub observer_stride: usize,
    pub dt_policy: DtPolicy,
    /// Keep the state at every record time.
    pub keep_snapshots: bool,
    /// Accumulate `int D0 dt` with `D0` at every step midpoint.
    pub track_dissipation: bool,
}

impl RunOptions {
    pub fn new(t_end: f64, observer_stride: usize) -> Self {
        Self {
            t_end,
            observer_stride,
            dt_policy: DtPolicy::Adaptive,
            keep_snapshots: false,
            track_dissipation: false,
        }
    }

    pub fn fixed_dt(mut self, dt: f64) -> Self {
        self.dt_policy = DtPolicy::Fixed(dt);
        self
    }

    pub fn with_snapshots(mut self) -> Self {
        self.keep_snapshots = true;
        self
    }

    pub fn with_dissipation(mut self) -> Self {
        self.track_dissipation = true;
        self
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<DiagnosticsRecord>,
    /// States at the record times, when requested.
    pub snapshots: Vec<State>,
    pub final_state: State,
    pub steps: usize,
    pub halvings: usize,
    pub dt_range: (f64, f64),
    /// Largest per-step `|<v^{n+1}> - (eps <v^n> + dt <S(u^n)>) / (eps + dt)|`.
    pub mean_recursion_defect: f64,
    /// `int_0^t D0` at each record time, when requested.
    pub dissipation: Vec<f64>,
    /// `None` when the run reached `t_end`.
    pub failure: Option<Error>,
}

impl Trajectory {
    pub fn complete(&self) -> bool {
        self.failure.is_none()
    }
}

/// Owns the model and the elliptic solver for one grid.
#[derive(Debug, Clone)]
pub struct Integrator {
    params: ModelParams,
    solver: Arc<EllipticSolver>,
}

impl Integrator {
    pub fn new(params: ModelParams, grid: Grid) -> Self {
        Self::with_solver(params, Arc::new(EllipticSolver::spectral(grid)))
    }

    pub fn with_solver(params: ModelParams, solver: Arc<EllipticSolver>) -> Self {
        Self { params, solver }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn solver(&self) -> &Arc<EllipticSolver> {
        &self.solver
    }

    /// `cfl_safety h^2 / (2 dim max gamma(v))`.
    pub fn stable_dt(&self, state: &State) -> Result<f64> {
        let g = state.grid();
        let gmax = state
            .v
            .values()
            .iter()
            .map(|&z| self.params.motility.gamma(z))
            .fold(0.0f64, f64::max);
        let h = g.spacing();
        let dt = if gmax > 0.0 {
            self.params.cfl_safety * h * h / (2.0 * g.dim() as f64 * gmax)
        } else {
            f64::INFINITY
        };
        if !(dt >= self.params.dt_min) {
            return Err(Error::Stiffness { dt, dt_min: self.params.dt_min });
        }
        Ok(dt)
    }

    /// One IMEX step of size `dt`; a negative `u` is reported, not clipped.
    pub fn step(&self, state: &State, dt: f64) -> Result<State> {
        if *state.grid() != *self.solver.grid() {
            return Err(Error::GridMismatch("state and solver grids differ".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::param("dt", format!("must be positive, got {dt}")));
        }
        let p = &self.params;
        let t_new = state.t + dt;
        let u = state.u.values();
        let flux = state.u.zip_map(&state.v, |a, b| a * p.motility.gamma(b))?;
        let lap = flux.laplacian_neumann();
        let mut u_new = Vec::with_capacity(u.len());
        for (i, (&ui, &li)) in u.iter().zip(lap.values()).enumerate() {
            let mut next = ui + dt * li;
            if !p.growth.is_none() {
                let gain = ui * (1.0 + dt * p.growth.eval_h(ui));
                if gain < 0.0 {
                    return Err(Error::Positivity {
                        t: t_new,
                        detail: format!("growth update u (1 + dt h(u)) = {gain:e} at cell {i}"),
                    });
                }
                next += dt * ui * p.growth.eval_h(ui);
            }
            if !(next >= 0.0) {
                return Err(Error::Positivity { t: t_new, detail: format!("u = {next:e} at cell {i}") });
            }
            u_new.push(next);
        }

        let ratio = p.epsilon / dt;
        let rhs = state.u.zip_map(&state.v, |a, b| p.source(a) + ratio * b)?;
        let v_new = self.solver.solve_helmholtz(&rhs, ratio)?;
        if !(v_new.min() > 0.0) {
            return Err(Error::Positivity { t: t_new, detail: format!("min v = {:e}", v_new.min()) });
        }
        Ok(State {
            t: t_new,
            u: Field::new(*state.grid(), u_new)?,
            v: v_new,
        })
    }

    /// `step` with up to [`MAX_HALVINGS`] retries at half the step after positivity failures.
    /// Returns the new state, the step actually taken and the number of halvings.
    pub fn advance(&self, state: &State, dt: f64) -> Result<(State, f64, usize)> {
        let mut dt = dt;
        let mut halvings = 0;
        loop {
            match self.step(state, dt) {
                Ok(next) => return Ok((next, dt, halvings)),
                Err(Error::Positivity { .. }) if halvings < MAX_HALVINGS && dt / 2.0 >= self.params.dt_min => {
                    dt /= 2.0;
                    halvings += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Diagnostics anchored at `m = <u>` of `initial`.
    pub fn diagnostics_for(&self, initial: &State) -> Result<Diagnostics> {
        Diagnostics::new(&self.params, self.solver.clone(), initial.u.mean())
    }

    /// Integrates from `initial` to `opts.t_end`, anchoring diagnostics at `<u(initial)>`.
    pub fn run(&self, initial: &State, opts: &RunOptions) -> Result<Trajectory> {
        let diag = self.diagnostics_for(initial)?;
        self.run_with(initial, opts, &diag)
    }

    /// As [`Integrator::run`] with caller-supplied diagnostics (e.g. to continue a run
    /// with the original anchor). A mid-run abort returns `Ok` with `failure` set.
    pub fn run_with(&self, initial: &State, opts: &RunOptions, diag: &Diagnostics) -> Result<Trajectory> {
        if !(opts.t_end >= initial.t) {
            return Err(Error::param("t_end", format!("must be >= t0 = {}, got {}", initial.t, opts.t_end)));
        }
        if opts.observer_stride == 0 {
            return Err(Error::param("observer_stride", "must be >= 1"));
        }
        if let DtPolicy::Fixed(dt) = opts.dt_policy {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::param("dt", format!("must be positive, got {dt}")));
            }
        }
        let track_mean = self.params.growth.is_none();
        let mut state = initial.clone();
        let first = diag.record(&state, None)?;
        let mut records = vec![first];
        let mut snapshots = Vec::new();
        if opts.keep_snapshots {
            snapshots.push(state.clone());
        }
        let mut last_recorded = state.clone();
        let mut steps = 0;
        let mut since_record = 0;
        let mut halvings = 0;
        let mut dt_range = (f64::INFINITY, 0.0f64);
        let mut defect = 0.0f64;
        let mut failure = None;
        let mut dissipated = 0.0;
        let mut dissipation = Vec::new();
        if opts.track_dissipation {
            dissipation.push(0.0);
        }

        while state.t < opts.t_end {
            let remaining = opts.t_end - state.t;
            let target = match opts.dt_policy {
                DtPolicy::Fixed(dt) => dt,
                DtPolicy::Adaptive => match self.stable_dt(&state) {
                    Ok(dt) => dt,
                    Err(e) => {
                        failure = Some(e);
                        break;
                    }
                },
            };
            let dt = target.min(remaining);
            let (mut next, taken, halved) = match self.advance(&state, dt) {
                Ok(r) => r,
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            };
            if taken == remaining {
                next.t = opts.t_end;
            }
            if track_mean {
                let s_mean = state.u.map(|x| self.params.source(x)).mean();
                let eps = self.params.epsilon;
                let expected = (eps * state.v.mean() + taken * s_mean) / (eps + taken);
                defect = defect.max((next.v.mean() - expected).abs());
            }
            if opts.track_dissipation {
                dissipated += taken * diag.eval_d0(&state.midpoint(&next)?)?.total();
            }
            halvings += halved;
            dt_range = (dt_range.0.min(taken), dt_range.1.max(taken));
            steps += 1;
            since_record += 1;
            state = next;
            if since_record == opts.observer_stride || state.t >= opts.t_end {
                let rec = diag.record(&state, Some((&last_recorded, records.last().unwrap())))?;
                records.push(rec);
                if opts.keep_snapshots {
                    snapshots.push(state.clone());
                }
                if opts.track_dissipation {
                    dissipation.push(dissipated);
                }
                last_recorded = state.clone();
                since_record = 0;
            }
        }
        if failure.is_some() && since_record > 0 {
            // partial trajectory ends on the last good state
            let rec = diag.record(&state, Some((&last_recorded, records.last().unwrap())))?;
            records.push(rec);
            if opts.keep_snapshots {
                snapshots.push(state.clone());
            }
            if opts.track_dissipation {
                dissipation.push(dissipated);
            }
        }
        Ok(Trajectory {
            records,
            snapshots,
            final_state: state,
            steps,
            halvings,
            dt_range,
            mean_recursion_defect: defect,
            dissipation,
            failure,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motility::MotilitySpec;

    fn prototype_params(eps: f64) -> ModelParams {
        ModelParams::new(eps, Arc::new(MotilitySpec::prototype(1.0).unwrap())).unwrap()
    }

    fn bumpy(grid: Grid) -> State {
        let u = Field::from_fn(grid, |x| 1.0 + 0.5 * (3.0 * x[0]).cos() + 0.2 * (7.0 * x[0] + 1.0).sin());
        let v = Field::from_fn(grid, |x| 1.2 + 0.3 * (2.0 * x[0]).sin());
        State::new(0.0, u, v).unwrap()
    }

    #[test]
    fn params_are_validated() {
        assert!(ModelParams::new(-1.0, Arc::new(MotilitySpec::exponential())).is_err());
        assert!(ModelParams::new(0.0, Arc::new(MotilitySpec::exponential())).is_err());
        let p = prototype_params(1.0);
        assert!(p.clone().with_cfl_safety(0.0).is_err());
        assert!(p.clone().with_cfl_safety(1.5).is_err());
        assert!(p.clone().with_source_eta(-0.1).is_err());
        assert_eq!(p.with_source_eta(1.0).unwrap().source(1.0), 0.5);
    }

    #[test]
    fn stable_dt_formula() {
        let grid = Grid::new_1d(1.0, 100).unwrap();
        let p = ModelParams::new(1.0, Arc::new(MotilitySpec::constant(1.0).unwrap()))
            .unwrap()
            .with_cfl_safety(0.5)
            .unwrap();
        let s = State::homogeneous(grid, 1.0).unwrap();
        let dt = Integrator::new(p, grid).stable_dt(&s).unwrap();
        assert!((dt - 2.5e-5).abs() < 1e-18);

        let p2 = ModelParams::new(1.0, Arc::new(MotilitySpec::constant(0.5).unwrap()))
            .unwrap()
            .with_cfl_safety(0.5)
            .unwrap();
        let dt2 = Integrator::new(p2, grid).stable_dt(&s).unwrap();
        assert!((dt2 - 2.0 * dt).abs() < 1e-18);

        // prototype gamma is largest where v is smallest
        let grid2 = Grid::new_2d(1.0, 1.0, 10, 10).unwrap();
        let v = Field::from_fn(grid2, |x| 0.5 + x[0]);
        let st = State::new(0.0, Field::constant(grid2, 1.0), v.clone()).unwrap();
        let integ = Integrator::new(prototype_params(1.0), grid2);
        let gmax = v.values().iter().map(|&z| 1.0 / (1.0 + z)).fold(0.0, f64::max);
        let expect = 0.4 * 0.01 / (4.0 * gmax);
        assert!((integ.stable_dt(&st).unwrap() - expect).abs() < 1e-15);

        let stiff = ModelParams::new(1.0, Arc::new(MotilitySpec::power(2.0).unwrap()))
            .unwrap()
            .with_dt_min(1e-6)
            .unwrap();
        let tiny = State::new(0.0, Field::constant(grid, 1.0), Field::constant(grid, 1e-3)).unwrap();
        assert!(matches!(Integrator::new(stiff, grid).stable_dt(&tiny), Err(Error::Stiffness { .. })));
    }

    #[test]
    fn homogeneous_state_is_fixed() {
        let grid = Grid::new_2d(1.0, 0.5, 12, 6).unwrap();
        let integ = Integrator::new(prototype_params(0.7), grid);
        let s = State::homogeneous(grid, 1.3).unwrap();
        let next = integ.step(&s, 1e-3).unwrap();
        for (a, b) in next.u.values().iter().zip(s.u.values()) {
            assert!((a - b).abs() < 1e-13);
        }
        for (a, b) in next.v.values().iter().zip(s.v.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_signal_relaxes_by_scalar_recursion() {
        let grid = Grid::new_1d(1.0, 16).unwrap();
        let eps = 0.3;
        let dt = 1e-3;
        let integ = Integrator::new(prototype_params(eps), grid);
        // v = 0 violates the state invariant, so build the raw state
        let s = State {
            t: 0.0,
            u: Field::constant(grid, 2.0),
            v: Field::zeros(grid),
        };
        let next = integ.step(&s, dt).unwrap();
        let expect = 2.0 * dt / (eps + dt);
        assert!(next.v.values().iter().all(|v| (v - expect).abs() < 1e-14));
    }

    #[test]
    fn mass_is_conserved_per_step() {
        let grid = Grid::new_1d(2.0, 50).unwrap();
        let integ = Integrator::new(prototype_params(1.0), grid);
        let mut s = bumpy(grid);
        let m0: f64 = s.u.values().iter().sum();
        let dt = integ.stable_dt(&s).unwrap();
        for _ in 0..1000 {
            s = integ.step(&s, dt).unwrap();
        }
        let m1: f64 = s.u.values().iter().sum();
        assert!((m1 - m0).abs() <= 1e-12 * m0);
    }

    #[test]
    fn negative_u_is_reported_and_halving_recovers() {
        let grid = Grid::new_1d(1.0, 32).unwrap();
        let integ = Integrator::new(prototype_params(1.0), grid);
        let u = Field::from_fn(grid, |x| if (x[0] - 0.5).abs() < 0.05 { 10.0 } else { 1e-6 });
        let s = State::new(0.0, u, Field::constant(grid, 1.0)).unwrap();
        let big = 10.0 * integ.stable_dt(&s).unwrap();
        assert!(matches!(integ.step(&s, big), Err(Error::Positivity { .. })));
        let (next, taken, halvings) = integ.advance(&s, big).unwrap();
        assert!(halvings >= 1 && taken < big);
        assert!(next.u.min() >= 0.0);
    }

    #[test]
    fn logistic_step_rejects_overshoot() {
        let grid = Grid::new_1d(1.0, 8).unwrap();
        let p = prototype_params(1.0).with_growth(GrowthSpec::logistic(1.0, 1.0).unwrap());
        let integ = Integrator::new(p, grid);
        let s = State::new(0.0, Field::constant(grid, 50.0), Field::constant(grid, 1.0)).unwrap();
        // h(50) = -49, so dt = 0.1 gives 1 + dt h < 0
        assert!(matches!(integ.step(&s, 0.1), Err(Error::Positivity { .. })));
        let next = integ.step(&s, 1e-3).unwrap();
        assert!((next.u.values()[0] - 50.0 * (1.0 - 49e-3)).abs() < 1e-12);
    }

    #[test]
    fn run_records_and_lands_on_t_end() {
        let grid = Grid::new_1d(1.0, 32).unwrap();
        let integ = Integrator::new(prototype_params(1.0), grid);
        let s = bumpy(grid);
        let traj = integ.run(&s, &RunOptions::new(0.01, 5)).unwrap();
        assert!(traj.complete());
        assert_eq!(traj.final_state.t, 0.01);
        assert_eq!(traj.records.last().unwrap().t, 0.01);
        assert_eq!(traj.records.len(), traj.steps.div_ceil(5) + 1);
        assert!(traj.mean_recursion_defect < 1e-13);

        let empty = integ.run(&s, &RunOptions::new(0.0, 5)).unwrap();
        assert_eq!(empty.steps, 0);
        assert_eq!(empty.records.len(), 1);
        assert!(integ.run(&s, &RunOptions::new(-1.0, 5)).is_err());
    }

    #[test]
    fn continuation_is_bitwise() {
        let grid = Grid::new_1d(1.0, 24).unwrap();
        let integ = Integrator::new(prototype_params(1.0), grid);
        let s = bumpy(grid);
        let dt = 2f64.powi(-14);
        let long = integ.run(&s, &RunOptions::new(128.0 * dt, 4).fixed_dt(dt)).unwrap();
        let diag = integ.diagnostics_for(&s).unwrap();
        let a = integ.run_with(&s, &RunOptions::new(64.0 * dt, 4).fixed_dt(dt), &diag).unwrap();
        let b = integ
            .run_with(&a.final_state, &RunOptions::new(128.0 * dt, 4).fixed_dt(dt), &diag)
            .unwrap();
        assert_eq!(long.final_state, b.final_state);
        assert_eq!(long.records.last().unwrap().mass_u, b.records.last().unwrap().mass_u);
        // and the run is deterministic
        let again = integ.run(&s, &RunOptions::new(128.0 * dt, 4).fixed_dt(dt)).unwrap();
        assert_eq!(again.final_state, long.final_state);
    }

    #[test]
    fn stiffness_aborts_with_partial_trajectory() {
        let grid = Grid::new_1d(1.0, 16).unwrap();
        let p = ModelParams::new(1.0, Arc::new(MotilitySpec::power(2.0).unwrap()))
            .unwrap()
            .with_dt_min(1e-3)
            .unwrap();
        let integ = Integrator::new(p, grid);
        let s = State::new(0.0, Field::constant(grid, 1.0), Field::constant(grid, 0.5)).unwrap();
        let traj = integ.run(&s, &RunOptions::new(1.0, 10)).unwrap();
        assert!(!traj.complete());
        assert!(matches!(traj.failure, Some(Error::Stiffness { .. })));
        assert_eq!(traj.records.len(), 1);
    }
}
