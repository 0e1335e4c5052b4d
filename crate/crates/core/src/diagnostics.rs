//! Functionals and identity residuals evaluated along trajectories.
//!
//! With `m = <u_in>` and
//! `G0'(z) = 2 z gamma(z) - m gamma(z) - m gamma(m)`, `G0(m) = 0`:
//!
//! * `L0(u, v) = 1/2 ||grad K(u - m)||^2 + eps int G0(v)`
//! * `D0 = int G0''(v) |grad v|^2 + int (u - v)^2 gamma(v) + int (v - m)(v gamma(v) - m gamma(m))`
//!
//! and along smooth solutions `dL0/dt + D0 = 0`.

use std::f64::consts::{E, PI};
use std::sync::Arc;

use crate::dynamics::{ModelParams, State};
use crate::elliptic::EllipticSolver;
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::motility::{Motility, MotilityKind};
use crate::quadrature::adaptive_simpson;

pub const G0_TOL: f64 = 1e-10;

/// Below this relative distance from `m` the closed forms lose digits to
/// cancellation and quadrature is used instead.
const CLOSED_FORM_MIN_OFFSET: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
enum ClosedForm {
    /// `gamma = 1 / (1 + z)`
    PrototypeOne,
    /// `gamma = 1 / z`
    PowerOne,
}

#[derive(Debug, Clone)]
pub struct G0Evaluator {
    motility: Arc<dyn Motility>,
    m: f64,
    gamma_m: f64,
    tol: f64,
    closed: Option<ClosedForm>,
}

impl G0Evaluator {
    pub fn new(motility: Arc<dyn Motility>, m: f64) -> Result<Self> {
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::param("m", format!("mean mass must be positive, got {m}")));
        }
        let closed = motility.spec().and_then(|s| match s.kind() {
            MotilityKind::Prototype { k } if *k == 1.0 => Some(ClosedForm::PrototypeOne),
            MotilityKind::Power { k } if *k == 1.0 => Some(ClosedForm::PowerOne),
            _ => None,
        });
        let gamma_m = motility.gamma(m);
        Ok(Self {
            motility,
            m,
            gamma_m,
            tol: G0_TOL,
            closed,
        })
    }

    /// Disables the closed forms so every evaluation goes through quadrature.
    pub fn quadrature_only(mut self) -> Self {
        self.closed = None;
        self
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn has_closed_form(&self) -> bool {
        self.closed.is_some()
    }

    pub fn derivative(&self, z: f64) -> f64 {
        let g = self.motility.gamma(z);
        2.0 * z * g - self.m * g - self.m * self.gamma_m
    }

    pub fn second(&self, z: f64) -> f64 {
        let g1 = self.motility.gamma_prime(z);
        2.0 * z * g1 + 2.0 * self.motility.gamma(z) - self.m * g1
    }

    /// `G0(z)`, from a closed form when one is registered and `z` is not close to `m`.
    pub fn eval(&self, z: f64) -> Result<f64> {
        check_positive(z)?;
        if z == self.m {
            return Ok(0.0);
        }
        if let Some(v) = self.eval_closed_form(z) {
            if (z - self.m).abs() > CLOSED_FORM_MIN_OFFSET * self.m {
                return Ok(v);
            }
        }
        self.eval_quadrature(z)
    }

    pub fn eval_quadrature(&self, z: f64) -> Result<f64> {
        check_positive(z)?;
        adaptive_simpson(|s| self.derivative(s), self.m, z, self.tol)
    }

    pub fn eval_closed_form(&self, z: f64) -> Option<f64> {
        let m = self.m;
        match self.closed? {
            ClosedForm::PrototypeOne => {
                Some(2.0 * (z - m) - (2.0 + m) * ((1.0 + z) / (1.0 + m)).ln() - m * (z - m) / (1.0 + m))
            }
            ClosedForm::PowerOne => Some((z - m) - m * (z / m).ln()),
        }
    }

    /// `int G0(f)` by the midpoint rule.
    pub fn integrate(&self, f: &Field) -> Result<f64> {
        let mut s = 0.0;
        for &z in f.values() {
            s += self.eval(z)?;
        }
        Ok(s * f.grid().cell_volume())
    }
}

fn check_positive(z: f64) -> Result<()> {
    if z.is_finite() && z > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain { what: "G0", value: z })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dissipation {
    pub grad: f64,
    pub relax: f64,
    pub mono: f64,
}

impl Dissipation {
    pub fn total(&self) -> f64 {
        self.grad + self.relax + self.mono
    }
}

/// One row of the diagnostics table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass_u: f64,
    pub mean_v: f64,
    pub l0: f64,
    pub d0_grad: f64,
    pub d0_relax: f64,
    pub d0_mono: f64,
    pub lyap_residual: f64,
    pub entropy_y: f64,
    pub h1dual_u: f64,
    pub l2_v: f64,
    pub h1_v: f64,
    pub min_v: f64,
    pub min_u: f64,
    pub energy_a21: f64,
    pub k_residual: f64,
}

impl DiagnosticsRecord {
    pub const SCHEMA_VERSION: u32 = 1;

    pub const COLUMNS: [&'static str; 16] = [
        "t",
        "mass_u",
        "mean_v",
        "L0",
        "D0_grad",
        "D0_relax",
        "D0_mono",
        "lyap_residual",
        "entropy_y",
        "h1dual_u",
        "l2_v",
        "h1_v",
        "min_v",
        "min_u",
        "energy_a21",
        "K_residual",
    ];

    /// Values in [`DiagnosticsRecord::COLUMNS`] order.
    pub fn values(&self) -> [f64; 16] {
        [
            self.t,
            self.mass_u,
            self.mean_v,
            self.l0,
            self.d0_grad,
            self.d0_relax,
            self.d0_mono,
            self.lyap_residual,
            self.entropy_y,
            self.h1dual_u,
            self.l2_v,
            self.h1_v,
            self.min_v,
            self.min_u,
            self.energy_a21,
            self.k_residual,
        ]
    }

    pub fn from_values(v: [f64; 16]) -> Self {
        Self {
            t: v[0],
            mass_u: v[1],
            mean_v: v[2],
            l0: v[3],
            d0_grad: v[4],
            d0_relax: v[5],
            d0_mono: v[6],
            lyap_residual: v[7],
            entropy_y: v[8],
            h1dual_u: v[9],
            l2_v: v[10],
            h1_v: v[11],
            min_v: v[12],
            min_u: v[13],
            energy_a21: v[14],
            k_residual: v[15],
        }
    }

    pub fn d0(&self) -> Dissipation {
        Dissipation {
            grad: self.d0_grad,
            relax: self.d0_relax,
            mono: self.d0_mono,
        }
    }
}

/// `|(L0^{n+1} - L0^n) / dt + D0_mid|` with `dt` the time between the records.
pub fn lyapunov_residual(prev: &DiagnosticsRecord, next: &DiagnosticsRecord, d0_mid: f64) -> f64 {
    ((next.l0 - prev.l0) / (next.t - prev.t) + d0_mid).abs()
}

/// `int (u + e)(ln(u + e) - 1) + eps int |grad v|^2`.
pub fn eval_entropy(state: &State, epsilon: f64) -> f64 {
    let y = state.u.map(|u| (u + E) * ((u + E).ln() - 1.0)).integrate();
    y + epsilon * state.v.grad_sq().integrate()
}

/// Evaluator of every record quantity for one model, grid and anchor `m`.
#[derive(Debug, Clone)]
pub struct Diagnostics {
    g0: G0Evaluator,
    epsilon: f64,
    motility: Arc<dyn Motility>,
    solver: Arc<EllipticSolver>,
    growth: bool,
}

impl Diagnostics {
    pub fn new(params: &ModelParams, solver: Arc<EllipticSolver>, m: f64) -> Result<Self> {
        Ok(Self {
            g0: G0Evaluator::new(params.motility.clone(), m)?,
            epsilon: params.epsilon,
            motility: params.motility.clone(),
            solver,
            growth: !params.growth.is_none(),
        })
    }

    pub fn m(&self) -> f64 {
        self.g0.m()
    }

    pub fn g0(&self) -> &G0Evaluator {
        &self.g0
    }

    pub fn solver(&self) -> &EllipticSolver {
        &self.solver
    }

    pub fn eval_l0(&self, state: &State) -> Result<f64> {
        let k = self.solver.h1dual_norm(&state.u)?;
        Ok(0.5 * k * k + self.epsilon * self.g0.integrate(&state.v)?)
    }

    pub fn eval_d0(&self, state: &State) -> Result<Dissipation> {
        let m = self.m();
        let gm = self.motility.gamma(m);
        let grad_sq = state.v.grad_sq();
        let vol = state.grid().cell_volume();
        let mut d = Dissipation::default();
        for ((&u, &v), &gs) in state.u.values().iter().zip(state.v.values()).zip(grad_sq.values()) {
            let g = self.motility.gamma(v);
            d.grad += self.g0.second(v) * gs;
            d.relax += (u - v) * (u - v) * g;
            d.mono += (v - m) * (v * g - m * gm);
        }
        d.grad *= vol;
        d.relax *= vol;
        d.mono *= vol;
        Ok(d)
    }

    pub fn eval_entropy(&self, state: &State) -> f64 {
        eval_entropy(state, self.epsilon)
    }

    /// `||(K(u1 - m) - K(u0 - m)) / dt + g - <g>||_2` with `g = u gamma(v)` at the midpoint state.
    pub fn k_equation_residual(&self, s0: &State, s1: &State) -> Result<f64> {
        let dt = s1.t - s0.t;
        let du = s1.u.zip_map(&s0.u, |a, b| a - b)?;
        let dk = self.solver.solve_k(&du)?;
        let mid = s0.midpoint(s1)?;
        let g = mid.u.zip_map(&mid.v, |u, v| u * self.motility.gamma(v))?.zero_mean();
        Ok(dk.zip_map(&g, |a, b| a / dt + b)?.l2_norm())
    }

    /// Full record for `state`; residuals need the previous recorded state and are NaN without it.
    pub fn record(&self, state: &State, prev: Option<(&State, &DiagnosticsRecord)>) -> Result<DiagnosticsRecord> {
        let u = &state.u;
        let v = &state.v;
        let h1dual = self.solver.h1dual_norm(u)?;
        let l0 = 0.5 * h1dual * h1dual + self.epsilon * self.g0.integrate(v)?;
        let d0 = self.eval_d0(state)?;
        let grad_v = v.grad_sq().integrate();
        let l2_v = v.l2_norm();
        let energy = u.zip_map(v, |a, b| a * a * self.motility.gamma(b))?.integrate();
        let mut rec = DiagnosticsRecord {
            t: state.t,
            mass_u: u.integrate(),
            mean_v: v.mean(),
            l0,
            d0_grad: d0.grad,
            d0_relax: d0.relax,
            d0_mono: d0.mono,
            lyap_residual: f64::NAN,
            entropy_y: self.eval_entropy(state),
            h1dual_u: h1dual,
            l2_v,
            h1_v: (l2_v * l2_v + grad_v).sqrt(),
            min_v: v.min(),
            min_u: u.min(),
            energy_a21: energy,
            k_residual: f64::NAN,
        };
        if let Some((s0, r0)) = prev {
            if state.t > s0.t {
                let mid = s0.midpoint(state)?;
                rec.lyap_residual = lyapunov_residual(r0, &rec, self.eval_d0(&mid)?.total());
                if !self.growth {
                    rec.k_residual = self.k_equation_residual(s0, state)?;
                }
            }
        }
        Ok(rec)
    }
}

/// Smooth space-time test function with vanishing normal derivative on the boundary.
pub trait TestFunction {
    fn value(&self, t: f64, x: [f64; 2]) -> f64;
    /// Spatial Laplacian.
    fn laplacian(&self, t: f64, x: [f64; 2]) -> f64;
}

/// `sin(pi t / T) cos(pi x / Lx)`, vanishing at `t = 0` and `t = T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineCosine {
    pub period: f64,
    pub length: f64,
}

impl TestFunction for SineCosine {
    fn value(&self, t: f64, x: [f64; 2]) -> f64 {
        (PI * t / self.period).sin() * (PI * x[0] / self.length).cos()
    }

    fn laplacian(&self, t: f64, x: [f64; 2]) -> f64 {
        let k = PI / self.length;
        -k * k * self.value(t, x)
    }
}

/// Space-constant `psi(t)`.
pub struct TimeOnly<F: Fn(f64) -> f64>(pub F);

impl<F: Fn(f64) -> f64> TestFunction for TimeOnly<F> {
    fn value(&self, t: f64, _x: [f64; 2]) -> f64 {
        (self.0)(t)
    }

    fn laplacian(&self, _t: f64, _x: [f64; 2]) -> f64 {
        0.0
    }
}

/// Residuals `(r_u, r_v)` of the very weak formulation tested against `phi` over a
/// trajectory of snapshots. Time derivatives fall on `phi` through its differences
/// between snapshots; the other time integrals use the trapezoid rule. End-point
/// terms are kept, so `phi` need not vanish at the final time.
pub fn weak_form_residual(snapshots: &[State], params: &ModelParams, phi: &dyn TestFunction) -> Result<(f64, f64)> {
    let Some(first) = snapshots.first() else {
        return Ok((0.0, 0.0));
    };
    let grid = *first.grid();
    let vol = grid.cell_volume();
    let centers: Vec<[f64; 2]> = (0..grid.len()).map(|i| grid.cell_center(i)).collect();
    let eps = params.epsilon;
    let growth = params.growth;

    let phi_at = |t: f64| -> Vec<f64> { centers.iter().map(|&x| phi.value(t, x)).collect() };
    let lap_at = |t: f64| -> Vec<f64> { centers.iter().map(|&x| phi.laplacian(t, x)).collect() };
    // integrands of the terms without time derivatives
    let bulk = |s: &State| -> (f64, f64) {
        let p = phi_at(s.t);
        let l = lap_at(s.t);
        let mut bu = 0.0;
        let mut bv = 0.0;
        for i in 0..grid.len() {
            let u = s.u.values()[i];
            let v = s.v.values()[i];
            bu += u * params.motility.gamma(v) * l[i] + u * growth.eval_h(u) * p[i];
            bv += v * l[i] - v * p[i] + params.source(u) * p[i];
        }
        (bu * vol, bv * vol)
    };
    let pair = |s: &State, p: &[f64]| -> (f64, f64) {
        let a: f64 = s.u.values().iter().zip(p).map(|(u, q)| u * q).sum();
        let b: f64 = s.v.values().iter().zip(p).map(|(v, q)| v * q).sum();
        (a * vol, b * vol)
    };

    let last = snapshots.last().unwrap();
    let (u0, v0) = pair(first, &phi_at(first.t));
    let (u_n, v_n) = pair(last, &phi_at(last.t));
    let mut ru = u_n - u0;
    let mut rv = eps * (v_n - v0);

    let mut prev_bulk = bulk(first);
    let mut prev_phi = phi_at(first.t);
    for w in snapshots.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        a.u.same_grid(&b.u)?;
        let dt = b.t - a.t;
        let next_phi = phi_at(b.t);
        let mut tu = 0.0;
        let mut tv = 0.0;
        for i in 0..grid.len() {
            let dphi = next_phi[i] - prev_phi[i];
            tu += 0.5 * (a.u.values()[i] + b.u.values()[i]) * dphi;
            tv += 0.5 * (a.v.values()[i] + b.v.values()[i]) * dphi;
        }
        ru -= tu * vol;
        rv -= eps * tv * vol;
        let next_bulk = bulk(b);
        ru -= 0.5 * dt * (prev_bulk.0 + next_bulk.0);
        rv -= 0.5 * dt * (prev_bulk.1 + next_bulk.1);
        prev_bulk = next_bulk;
        prev_phi = next_phi;
    }
    Ok((ru.abs(), rv.abs()))
}
