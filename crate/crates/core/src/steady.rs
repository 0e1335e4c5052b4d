//! Nonconstant steady states from spike solutions of
//! `0 = d Delta w - w + w^k` with Neumann conditions.
//!
//! If `w` solves the scalar problem on `Omega0`, then `v(x) = w(sqrt(d) x)` and
//! `u = v^k` solve `0 = Delta(u v^-k)`, `0 = Delta v - v + u` on `Omega0 / sqrt(d)`,
//! since `u gamma(v) = 1` identically for `gamma(z) = z^-k`.

use crate::elliptic::EllipticSolver;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::krylov::minres;
use crate::motility::{Motility, MotilityKind, MotilitySpec};

/// Spike amplitude above the background.
pub const SPIKE_AMPLITUDE: f64 = 3.0;
/// Spike width in units of `sqrt(d)`.
pub const SPIKE_WIDTH: f64 = 3.0;
/// Oscillation below which a solution counts as the constant branch.
pub const NONCONSTANT_OSCILLATION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpikeCenter {
    /// Cell nearest the centre of the domain.
    Interior,
    /// First cell (corner in 2D).
    Boundary,
}

/// Background level of the spike ansatz; the unit background is tried first.
pub const SPIKE_BACKGROUNDS: [f64; 2] = [1.0, 0.0];

#[derive(Debug, Clone, PartialEq)]
pub enum InitStrategy {
    SpikeAnsatz { center: SpikeCenter, background: f64 },
    /// Relax `w_t = d Delta w - w + w^k` from the spike, then polish with Newton.
    ParabolicRelax { center: SpikeCenter, background: f64 },
    Given(Field),
}

impl InitStrategy {
    /// Spike on the unit background.
    pub fn spike(center: SpikeCenter) -> Self {
        InitStrategy::SpikeAnsatz { center, background: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Stop when `||F(w)||_2 <= rel_tol ||w||_2`.
    pub rel_tol: f64,
    pub max_iter: usize,
    pub linear_tol: f64,
    pub max_backtracks: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iter: 60,
            linear_tol: 1e-12,
            max_backtracks: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarSolution {
    pub w: Field,
    pub iterations: usize,
    /// `||F(w)||_2 / ||w||_2`.
    pub relative_residual: f64,
}

/// `max f - min f`.
pub fn oscillation(f: &Field) -> f64 {
    f.max() - f.min()
}

/// `w0 = b + A exp(-|x - xc|^2 / (2 sigma^2))`, `sigma = c_w sqrt(d)`, with background `b`.
pub fn spike_ansatz(grid: Grid, d: f64, center: SpikeCenter, background: f64) -> Field {
    let xc = match center {
        SpikeCenter::Interior => grid.cell_center((grid.ny() / 2) * grid.nx() + grid.nx() / 2),
        SpikeCenter::Boundary => grid.cell_center(0),
    };
    let sigma = SPIKE_WIDTH * d.sqrt();
    Field::from_fn(grid, |x| {
        let r2 = (x[0] - xc[0]).powi(2) + (x[1] - xc[1]).powi(2);
        background + SPIKE_AMPLITUDE * (-r2 / (2.0 * sigma * sigma)).exp()
    })
}

/// `F(w) = d Delta_h w - w + w^k`.
pub fn scalar_residual(w: &Field, d: f64, k: f64) -> Field {
    let lap = w.laplacian_neumann();
    lap.zip_map(w, |l, x| d * l - x + x.powf(k)).expect("same grid")
}

fn check_params(d: f64, k: f64) -> Result<()> {
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::param("d", format!("must be positive, got {d}")));
    }
    if !(k.is_finite() && k > 1.0) {
        return Err(Error::param("k", format!("must exceed 1, got {k}")));
    }
    Ok(())
}

pub fn solve_scalar_steady(d: f64, k: f64, grid: Grid, init: &InitStrategy) -> Result<Field> {
    solve_scalar_steady_with(d, k, grid, init, &NewtonOptions::default()).map(|s| s.w)
}

pub fn solve_scalar_steady_with(
    d: f64,
    k: f64,
    grid: Grid,
    init: &InitStrategy,
    opts: &NewtonOptions,
) -> Result<ScalarSolution> {
    check_params(d, k)?;
    let w0 = match init {
        InitStrategy::SpikeAnsatz { center, background } => spike_ansatz(grid, d, *center, *background),
        InitStrategy::ParabolicRelax { center, background } => {
            parabolic_relax(spike_ansatz(grid, d, *center, *background), d, k, &RelaxOptions::default())?
        }
        InitStrategy::Given(w) => {
            if *w.grid() != grid {
                return Err(Error::GridMismatch("initial guess on a different grid".into()));
            }
            if !(w.min() > 0.0) || !w.is_finite() {
                return Err(Error::param("initial guess", "must be positive and finite"));
            }
            w.clone()
        }
    };
    newton(w0, d, k, opts)
}

fn newton(mut w: Field, d: f64, k: f64, opts: &NewtonOptions) -> Result<ScalarSolution> {
    let grid = *w.grid();
    let n = grid.len();
    let mut f = scalar_residual(&w, d, k);
    let mut fnorm = f.l2_norm();
    for it in 0..=opts.max_iter {
        let wnorm = w.l2_norm();
        if fnorm <= opts.rel_tol * wnorm {
            return Ok(ScalarSolution {
                relative_residual: fnorm / wnorm,
                w,
                iterations: it,
            });
        }
        if it == opts.max_iter {
            break;
        }
        let diag: Vec<f64> = w.values().iter().map(|x| k * x.powf(k - 1.0) - 1.0).collect();
        let jac = |x: &[f64], y: &mut [f64]| {
            grid.apply_laplacian(x, y);
            for i in 0..x.len() {
                y[i] = d * y[i] + diag[i] * x[i];
            }
        };
        let mut delta = vec![0.0; n];
        minres(jac, f.values(), &mut delta, opts.linear_tol, 20 * n + 100).or_else(|e| match e {
            // a loose direction is still usable by the line search
            Error::NotConverged { residual, .. } if residual < 1e-3 => Ok(Default::default()),
            e => Err(Error::Newton(format!("linear solve failed: {e}"))),
        })?;

        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..opts.max_backtracks {
            let trial: Vec<f64> = w.values().iter().zip(&delta).map(|(x, s)| x - alpha * s).collect();
            if trial.iter().all(|&x| x > 0.0 && x.is_finite()) {
                let tw = Field::new(grid, trial)?;
                let tf = scalar_residual(&tw, d, k);
                let tn = tf.l2_norm();
                if tn <= (1.0 - 1e-4 * alpha) * fnorm {
                    w = tw;
                    f = tf;
                    fnorm = tn;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(Error::Newton(format!(
                "line search failed at iteration {it} (||F|| = {fnorm:e})"
            )));
        }
    }
    Err(Error::Newton(format!(
        "no convergence in {} iterations (||F|| / ||w|| = {:e})",
        opts.max_iter,
        fnorm / w.l2_norm()
    )))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxOptions {
    pub tau: f64,
    /// Stop when `||w_t||_2` drops below this.
    pub tol: f64,
    pub max_steps: usize,
    /// Divergence is declared above this value.
    pub blowup: f64,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        Self {
            tau: 0.05,
            tol: 1e-6,
            max_steps: 200_000,
            blowup: 1e6,
        }
    }
}

/// Semi-implicit relaxation `(w1 - w0)/tau = d Delta w1 - w1 + w0^k`.
///
/// Spike solutions are saddles of this flow, so the relaxation typically runs
/// off to `0`, to the constant `1` or to blow-up; divergence is an error.
pub fn parabolic_relax(w0: Field, d: f64, k: f64, opts: &RelaxOptions) -> Result<Field> {
    let grid = *w0.grid();
    let solver = EllipticSolver::spectral(grid);
    // -Delta w1 + (1 + 1/tau)/d w1 = (w0/tau + w0^k)/d
    let lambda = (1.0 + 1.0 / opts.tau) / d - 1.0;
    if lambda < 0.0 {
        return Err(Error::param("tau", "too large for this d"));
    }
    let mut w = w0;
    for _ in 0..opts.max_steps {
        let rhs = w.map(|x| (x / opts.tau + x.max(0.0).powf(k)) / d);
        let next = solver.solve_helmholtz(&rhs, lambda)?;
        if !next.is_finite() || next.max() > opts.blowup {
            return Err(Error::Newton("parabolic relaxation diverged".into()));
        }
        let rate = next.zip_map(&w, |a, b| (a - b) / opts.tau)?.l2_norm();
        w = next;
        if rate < opts.tol {
            return Ok(w);
        }
    }
    Err(Error::NotConverged {
        solver: "parabolic relaxation",
        iterations: opts.max_steps,
        residual: f64::NAN,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpikeAttempt {
    pub center: SpikeCenter,
    pub background: f64,
    /// Oscillation of the converged solution, or the Newton failure.
    pub outcome: std::result::Result<f64, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpikeSearch {
    pub solution: Option<ScalarSolution>,
    /// Every ansatz tried, in order.
    pub attempts: Vec<SpikeAttempt>,
}

/// Runs Newton from the spike ansatz over [`SPIKE_BACKGROUNDS`] x {interior, boundary}
/// and stops at the first nonconstant solution. Every attempt is reported.
pub fn find_nonconstant(d: f64, k: f64, grid: Grid) -> Result<SpikeSearch> {
    check_params(d, k)?;
    let mut attempts = Vec::new();
    for background in SPIKE_BACKGROUNDS {
        for center in [SpikeCenter::Interior, SpikeCenter::Boundary] {
            let init = InitStrategy::SpikeAnsatz { center, background };
            let outcome = match solve_scalar_steady_with(d, k, grid, &init, &NewtonOptions::default()) {
                Ok(s) => {
                    let osc = oscillation(&s.w);
                    if osc >= NONCONSTANT_OSCILLATION {
                        attempts.push(SpikeAttempt { center, background, outcome: Ok(osc) });
                        return Ok(SpikeSearch { solution: Some(s), attempts });
                    }
                    Ok(osc)
                }
                Err(Error::Newton(msg)) => Err(msg),
                Err(e) => return Err(e),
            };
            attempts.push(SpikeAttempt { center, background, outcome });
        }
    }
    Ok(SpikeSearch { solution: None, attempts })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    /// Smallest tested `d` without a nonconstant solution.
    pub d0: f64,
    /// Largest tested `d` with one.
    pub d_below: f64,
    /// `(d, nonconstant, oscillation)` for every tested value in test order.
    pub tested: Vec<(f64, bool, f64)>,
}

impl ThresholdReport {
    /// Every tested `d < d0` produced a nonconstant solution.
    pub fn consistent(&self) -> bool {
        self.tested.iter().all(|&(d, ok, _)| ok || d >= self.d0)
    }
}

/// Bisection in `log d` on "Newton from the spike lands nonconstant" between `lo`
/// (must succeed) and `hi` (must fail).
pub fn locate_threshold(k: f64, grid: Grid, lo: f64, hi: f64, bisections: usize) -> Result<ThresholdReport> {
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::param("d range", format!("need 0 < lo < hi, got [{lo}, {hi}]")));
    }
    let mut tested = Vec::new();
    let mut probe = |d: f64| -> Result<bool> {
        let s = find_nonconstant(d, k, grid)?.solution;
        let osc = s.as_ref().map_or(0.0, |s| oscillation(&s.w));
        tested.push((d, s.is_some(), osc));
        Ok(s.is_some())
    };
    if !probe(lo)? {
        return Err(Error::Newton(format!("no nonconstant solution at the lower end d = {lo}")));
    }
    if probe(hi)? {
        return Err(Error::Newton(format!("nonconstant solution persists at the upper end d = {hi}")));
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..bisections {
        let mid = (a * b).sqrt();
        if probe(mid)? {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(ThresholdReport {
        d0: b,
        d_below: a,
        tested,
    })
}

/// Follows a nonconstant solution from `d_start` by multiplying `d` by `factor`
/// each step, using the previous solution as the initial guess. Stops early when
/// Newton fails or the solution collapses to the constant branch.
pub fn continuation(k: f64, grid: Grid, d_start: f64, factor: f64, steps: usize) -> Result<Vec<(f64, Field)>> {
    let first = find_nonconstant(d_start, k, grid)?
        .solution
        .ok_or_else(|| Error::Newton(format!("no nonconstant solution at d = {d_start}")))?;
    let mut path = vec![(d_start, first.w)];
    let mut d = d_start;
    for _ in 0..steps {
        d *= factor;
        let prev = path.last().unwrap().1.clone();
        match solve_scalar_steady(d, k, grid, &InitStrategy::Given(prev)) {
            Ok(w) if oscillation(&w) >= NONCONSTANT_OSCILLATION => path.push((d, w)),
            Ok(_) | Err(Error::Newton(_)) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyProfile {
    pub d: f64,
    pub k: f64,
    /// Scalar solution on the reference grid.
    pub w: Field,
    /// `1 / sqrt(d)`.
    pub scale: f64,
    /// `v(x) = w(sqrt(d) x)` on the scaled grid.
    pub v: Field,
    /// `u = v^k`.
    pub u: Field,
}

impl SteadyProfile {
    pub fn grid(&self) -> &Grid {
        self.v.grid()
    }
}

pub fn scale_to_pattern(w: &Field, d: f64, k: f64) -> Result<SteadyProfile> {
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::param("d", format!("must be positive, got {d}")));
    }
    let scale = 1.0 / d.sqrt();
    let grid = w.grid().scaled(scale)?;
    let v = w.with_grid(grid)?;
    let u = v.map(|x| x.powf(k));
    Ok(SteadyProfile {
        d,
        k,
        w: w.clone(),
        scale,
        v,
        u,
    })
}

/// `(||Delta_h(u gamma(v))||_2, ||Delta_h v - v + u||_2)` on the scaled grid.
pub fn verify_steady(profile: &SteadyProfile, motility: &MotilitySpec) -> Result<(f64, f64)> {
    match motility.kind() {
        MotilityKind::Power { k } if *k == profile.k => {}
        MotilityKind::Power { k } => {
            return Err(Error::ExponentMismatch {
                profile: profile.k,
                motility: *k,
            })
        }
        _ => {
            return Err(Error::ExponentMismatch {
                profile: profile.k,
                motility: motility.exponent().unwrap_or(f64::NAN),
            })
        }
    }
    let flux = profile.u.zip_map(&profile.v, |u, v| u * motility.gamma(v))?;
    let r1 = flux.laplacian_neumann().l2_norm();
    let lap = profile.v.laplacian_neumann();
    let r2 = lap
        .zip_map(&profile.v, |l, v| l - v)?
        .zip_map(&profile.u, |a, u| a + u)?
        .l2_norm();
    Ok((r1, r2))
}
