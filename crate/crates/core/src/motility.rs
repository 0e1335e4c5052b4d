//! Motility functions `gamma(v)`, their mollified regularisations, and
//! logistic growth rates `h(u)`.
//!
//! The [`Motility`] trait is what the time stepper and the diagnostics consume.
//! Evaluation through the trait is total: the power family `z^-k` is floored at
//! [`POWER_FLOOR`] and callers audit how often that happens.

use std::fmt;

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// Arguments of the power family are floored here before evaluation.
pub const POWER_FLOOR: f64 = 1e-12;

/// Nodes of the convolution rule behind [`MollifiedMotility`].
pub const MOLLIFIER_NODES: usize = 64;

/// Relative step of the centred differences used for tabulated motilities.
const TABLE_FD_STEP: f64 = 1e-6;

pub trait Motility: Send + Sync + fmt::Debug {
    fn gamma(&self, z: f64) -> f64;
    fn gamma_prime(&self, z: f64) -> f64;
    fn gamma_second(&self, z: f64) -> f64;

    /// Arguments below this value are floored before evaluation.
    fn floor(&self) -> Option<f64> {
        None
    }

    /// `sup gamma` over `[0, inf)`; infinite when unbounded near 0.
    fn sup(&self) -> f64;

    /// The unregularised specification, when this is one.
    fn spec(&self) -> Option<&MotilitySpec> {
        None
    }
}

/// Piecewise-linear motility through sorted `(z, gamma)` nodes, constant beyond the ends.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    z: Vec<f64>,
    gamma: Vec<f64>,
}

impl Table {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::param("table", "need at least two nodes"));
        }
        let (z, gamma): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
        if z[0] < 0.0 || z.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("table", "nodes must be nonnegative and strictly increasing"));
        }
        if gamma.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::param("table", "values must be positive and finite"));
        }
        Ok(Self { z, gamma })
    }

    fn eval(&self, z: f64) -> f64 {
        let z = z.abs();
        let n = self.z.len();
        if z <= self.z[0] {
            return self.gamma[0];
        }
        if z >= self.z[n - 1] {
            return self.gamma[n - 1];
        }
        let i = self.z.partition_point(|&x| x <= z) - 1;
        let t = (z - self.z[i]) / (self.z[i + 1] - self.z[i]);
        self.gamma[i] + t * (self.gamma[i + 1] - self.gamma[i])
    }

    fn max(&self) -> f64 {
        self.gamma.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MotilityKind {
    /// `(z + 1)^-k`
    Prototype { k: f64 },
    /// `z^-k`
    Power { k: f64 },
    /// `exp(-z)`
    Exponential,
    /// `gamma = value`
    Constant { value: f64 },
    Tabulated(Table),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotilitySpec {
    kind: MotilityKind,
    /// Declared constant `K1` of `1/gamma(z) <= K1 (z+1)^k`.
    k1: Option<f64>,
}

fn check_exponent(k: f64) -> Result<f64> {
    if k.is_finite() && k > 0.0 {
        Ok(k)
    } else {
        Err(Error::param("k", format!("exponent must be positive, got {k}")))
    }
}

impl MotilitySpec {
    pub fn prototype(k: f64) -> Result<Self> {
        Ok(Self::from_kind(MotilityKind::Prototype { k: check_exponent(k)? }))
    }

    pub fn power(k: f64) -> Result<Self> {
        Ok(Self::from_kind(MotilityKind::Power { k: check_exponent(k)? }))
    }

    pub fn exponential() -> Self {
        Self::from_kind(MotilityKind::Exponential)
    }

    pub fn constant(value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::param("value", format!("constant motility must be positive, got {value}")));
        }
        Ok(Self::from_kind(MotilityKind::Constant { value }))
    }

    pub fn tabulated(points: Vec<(f64, f64)>) -> Result<Self> {
        Ok(Self::from_kind(MotilityKind::Tabulated(Table::new(points)?)))
    }

    fn from_kind(kind: MotilityKind) -> Self {
        Self { kind, k1: None }
    }

    /// Declares the growth constant `K1`.
    pub fn with_growth_constant(mut self, k1: f64) -> Result<Self> {
        if !(k1.is_finite() && k1 > 0.0) {
            return Err(Error::param("K1", format!("must be positive, got {k1}")));
        }
        self.k1 = Some(k1);
        Ok(self)
    }

    pub fn kind(&self) -> &MotilityKind {
        &self.kind
    }

    /// Exponent `k` of the prototype and power families.
    pub fn exponent(&self) -> Option<f64> {
        match self.kind {
            MotilityKind::Prototype { k } | MotilityKind::Power { k } => Some(k),
            _ => None,
        }
    }

    /// `(K1, k)` with `1/gamma(z) <= K1 (z+1)^k`, declared or known for the family.
    pub fn growth_bound(&self) -> Option<(f64, f64)> {
        match (&self.kind, self.k1) {
            (MotilityKind::Prototype { k }, k1) => Some((k1.unwrap_or(1.0), *k)),
            (MotilityKind::Constant { value }, k1) => Some((k1.unwrap_or(1.0 / value), 0.0)),
            (MotilityKind::Power { k }, Some(k1)) => Some((k1, *k)),
            (_, Some(k1)) => Some((k1, 1.0)),
            _ => None,
        }
    }

    fn check_arg(&self, z: f64) -> Result<()> {
        let bad = match self.kind {
            MotilityKind::Power { .. } => !(z > 0.0),
            _ => !(z >= 0.0),
        } || !z.is_finite();
        if bad {
            Err(Error::Domain { what: "gamma", value: z })
        } else {
            Ok(())
        }
    }

    /// `gamma(z)` on the declared domain.
    pub fn eval_gamma(&self, z: f64) -> Result<f64> {
        self.check_arg(z)?;
        Ok(self.raw_gamma(z))
    }

    pub fn eval_gamma_prime(&self, z: f64) -> Result<f64> {
        self.check_arg(z)?;
        Ok(self.raw_gamma_prime(z))
    }

    pub fn eval_gamma_second(&self, z: f64) -> Result<f64> {
        self.check_arg(z)?;
        Ok(self.raw_gamma_second(z))
    }

    fn raw_gamma(&self, z: f64) -> f64 {
        match &self.kind {
            MotilityKind::Prototype { k } => (z + 1.0).powf(-k),
            MotilityKind::Power { k } => z.powf(-k),
            MotilityKind::Exponential => (-z).exp(),
            MotilityKind::Constant { value } => *value,
            MotilityKind::Tabulated(t) => t.eval(z),
        }
    }

    fn raw_gamma_prime(&self, z: f64) -> f64 {
        match &self.kind {
            MotilityKind::Prototype { k } => -k * (z + 1.0).powf(-k - 1.0),
            MotilityKind::Power { k } => -k * z.powf(-k - 1.0),
            MotilityKind::Exponential => -(-z).exp(),
            MotilityKind::Constant { .. } => 0.0,
            MotilityKind::Tabulated(t) => {
                let d = TABLE_FD_STEP * z.abs().max(1.0);
                (t.eval(z + d) - t.eval(z - d)) / (2.0 * d)
            }
        }
    }

    fn raw_gamma_second(&self, z: f64) -> f64 {
        match &self.kind {
            MotilityKind::Prototype { k } => k * (k + 1.0) * (z + 1.0).powf(-k - 2.0),
            MotilityKind::Power { k } => k * (k + 1.0) * z.powf(-k - 2.0),
            MotilityKind::Exponential => (-z).exp(),
            MotilityKind::Constant { .. } => 0.0,
            MotilityKind::Tabulated(t) => {
                let d = TABLE_FD_STEP * z.abs().max(1.0);
                (t.eval(z + d) - 2.0 * t.eval(z) + t.eval(z - d)) / (d * d)
            }
        }
    }

    fn guard(&self, z: f64) -> f64 {
        match self.kind {
            MotilityKind::Power { .. } => z.max(POWER_FLOOR),
            _ => z.abs(),
        }
    }
}

impl Motility for MotilitySpec {
    fn gamma(&self, z: f64) -> f64 {
        self.raw_gamma(self.guard(z))
    }

    fn gamma_prime(&self, z: f64) -> f64 {
        let y = self.guard(z);
        let sign = if z < 0.0 && !matches!(self.kind, MotilityKind::Power { .. }) { -1.0 } else { 1.0 };
        sign * self.raw_gamma_prime(y)
    }

    fn gamma_second(&self, z: f64) -> f64 {
        self.raw_gamma_second(self.guard(z))
    }

    fn floor(&self) -> Option<f64> {
        match self.kind {
            MotilityKind::Power { .. } => Some(POWER_FLOOR),
            _ => None,
        }
    }

    fn sup(&self) -> f64 {
        match &self.kind {
            MotilityKind::Prototype { .. } | MotilityKind::Exponential => 1.0,
            MotilityKind::Power { .. } => f64::INFINITY,
            MotilityKind::Constant { value } => *value,
            MotilityKind::Tabulated(t) => t.max(),
        }
    }

    fn spec(&self) -> Option<&MotilitySpec> {
        Some(self)
    }
}

/// Standard bump `exp(-1/(1-x^2))` on `(-1, 1)`, unnormalised.
pub fn bump(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - x * x)).exp()
    }
}

/// `gamma_eta(z) = eta + (psi_eta * gamma)(z + eta)`, `gamma` extended evenly to the real line.
#[derive(Debug, Clone)]
pub struct MollifiedMotility {
    base: MotilitySpec,
    eta: f64,
    /// Shifts `s_i` in `(-eta, eta)`.
    shifts: Vec<f64>,
    /// Quadrature weights times `psi_eta(s_i)`, summing to one.
    weights: Vec<f64>,
}

/// Regularises `spec` with mollification radius `eta`.
pub fn mollify(spec: &MotilitySpec, eta: f64) -> Result<MollifiedMotility> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::param("eta", format!("must lie in (0, 1), got {eta}")));
    }
    let rule = GaussLegendre::new(MOLLIFIER_NODES);
    let raw: Vec<f64> = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&x, &w)| w * bump(x))
        .collect();
    let mass: f64 = raw.iter().sum();
    Ok(MollifiedMotility {
        base: spec.clone(),
        eta,
        shifts: rule.nodes.iter().map(|x| eta * x).collect(),
        weights: raw.into_iter().map(|w| w / mass).collect(),
    })
}

impl MollifiedMotility {
    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn base(&self) -> &MotilitySpec {
        &self.base
    }

    fn convolve(&self, z: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.shifts
            .iter()
            .zip(&self.weights)
            .map(|(s, w)| w * f(z + self.eta - s))
            .sum()
    }
}

impl Motility for MollifiedMotility {
    fn gamma(&self, z: f64) -> f64 {
        self.eta + self.convolve(z, |y| self.base.gamma(y))
    }

    fn gamma_prime(&self, z: f64) -> f64 {
        self.convolve(z, |y| self.base.gamma_prime(y))
    }

    fn gamma_second(&self, z: f64) -> f64 {
        self.convolve(z, |y| self.base.gamma_second(y))
    }

    fn sup(&self) -> f64 {
        self.base.sup() + self.eta
    }
}

/// Which hypothesis a sampled point violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    /// `gamma' <= 0`
    Nonincreasing,
    /// `(z gamma)' >= 0`
    ZGammaNondecreasing,
    /// `0 <= (z gamma)' <= gamma(0)`
    ZGammaSlopeBound,
    /// `|z gamma(z) - m gamma(m)| <= gamma(0) |z - m|`
    Lipschitz,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub hypothesis: Hypothesis,
    /// `None` when the check was skipped.
    pub passed: Option<bool>,
    /// Smallest sampled `z` at which the check failed.
    pub first_failure: Option<f64>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub checks: Vec<CheckOutcome>,
    pub notes: Vec<String>,
}

impl HypothesisReport {
    pub fn get(&self, h: Hypothesis) -> &CheckOutcome {
        self.checks
            .iter()
            .find(|c| c.hypothesis == h)
            .expect("every hypothesis is reported")
    }

    /// Both monotonicity conditions hold on the samples.
    pub fn monotone(&self) -> bool {
        self.get(Hypothesis::Nonincreasing).passed == Some(true)
            && self.get(Hypothesis::ZGammaNondecreasing).passed == Some(true)
    }

    /// No executed check failed.
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed != Some(false))
    }
}

const HYPOTHESIS_TOL: f64 = 1e-12;

/// Samples the monotonicity hypotheses on `z_grid` (positive points).
pub fn check_hypotheses(spec: &MotilitySpec, z_grid: &[f64]) -> HypothesisReport {
    let mut notes = Vec::new();
    let zs: Vec<f64> = z_grid.iter().copied().filter(|z| *z > 0.0 && z.is_finite()).collect();
    if zs.len() != z_grid.len() {
        notes.push(format!("ignored {} non-positive sample points", z_grid.len() - zs.len()));
    }
    let tally = |h: Hypothesis, bad: &dyn Fn(f64) -> bool| {
        let failing: Vec<f64> = zs.iter().copied().filter(|&z| bad(z)).collect();
        CheckOutcome {
            hypothesis: h,
            passed: Some(failing.is_empty()),
            first_failure: failing.iter().copied().reduce(f64::min),
            failures: failing.len(),
        }
    };
    let slope = |z: f64| z * spec.gamma_prime(z) + spec.gamma(z);
    let scale = |z: f64| HYPOTHESIS_TOL * (1.0 + spec.gamma(z).abs() + (z * spec.gamma_prime(z)).abs());

    let mut checks = vec![
        tally(Hypothesis::Nonincreasing, &|z| spec.gamma_prime(z) > scale(z)),
        tally(Hypothesis::ZGammaNondecreasing, &|z| slope(z) < -scale(z)),
    ];

    match spec.eval_gamma(0.0) {
        Ok(g0) => {
            checks.push(tally(Hypothesis::ZGammaSlopeBound, &|z| {
                let s = slope(z);
                s < -scale(z) || s > g0 + scale(z)
            }));
            // pairs (z, m) with m drawn from a strided subset of the samples
            let stride = (zs.len() / 64).max(1);
            let anchors: Vec<f64> = zs.iter().copied().step_by(stride).collect();
            checks.push(tally(Hypothesis::Lipschitz, &|z| {
                anchors.iter().any(|&m| {
                    let lhs = (z * spec.gamma(z) - m * spec.gamma(m)).abs();
                    lhs > g0 * (z - m).abs() + HYPOTHESIS_TOL * (1.0 + lhs)
                })
            }));
        }
        Err(_) => {
            notes.push("gamma(0) is not finite: slope bound and Lipschitz checks skipped".into());
            for h in [Hypothesis::ZGammaSlopeBound, Hypothesis::Lipschitz] {
                checks.push(CheckOutcome {
                    hypothesis: h,
                    passed: None,
                    first_failure: None,
                    failures: 0,
                });
            }
        }
    }
    HypothesisReport { checks, notes }
}

/// Growth rate `h` of the logistic source `u h(u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GrowthSpec {
    None,
    /// `h(s) = h0 (1 - s^l)`
    LogisticPower { h0: f64, l: f64 },
}

impl GrowthSpec {
    pub fn logistic(h0: f64, l: f64) -> Result<Self> {
        if !(h0.is_finite() && h0 > 0.0) {
            return Err(Error::param("h0", format!("must be positive, got {h0}")));
        }
        if !(l.is_finite() && l >= 1.0) {
            return Err(Error::param("l", format!("must be >= 1, got {l}")));
        }
        Ok(GrowthSpec::LogisticPower { h0, l })
    }

    pub fn is_none(&self) -> bool {
        matches!(self, GrowthSpec::None)
    }

    pub fn eval_h(&self, s: f64) -> f64 {
        match *self {
            GrowthSpec::None => 0.0,
            GrowthSpec::LogisticPower { h0, l } => h0 * (1.0 - s.max(0.0).powf(l)),
        }
    }

    /// Smallest `s1` with `h(s) <= -1` for every `s >= s1`.
    pub fn s1(&self) -> Option<f64> {
        match *self {
            GrowthSpec::None => None,
            GrowthSpec::LogisticPower { h0, l } => Some((1.0 + 1.0 / h0).powf(1.0 / l)),
        }
    }

    /// `sup |h|` over `(0, s1)`.
    pub fn sup_abs_below_s1(&self) -> Option<f64> {
        match *self {
            GrowthSpec::None => None,
            // h decreases from h0 to -1 on [0, s1]
            GrowthSpec::LogisticPower { h0, .. } => Some(h0.max(1.0)),
        }
    }

    /// `max{ int u_in, s1 |Omega| (1 + sup_(0,s1) |h|) }`.
    pub fn mass_bound(&self, initial_mass: f64, measure: f64) -> Option<f64> {
        let s1 = self.s1()?;
        let sup = self.sup_abs_below_s1()?;
        Some(initial_mass.max(s1 * measure * (1.0 + sup)))
    }

    /// Samples `h(s) ln s / s` on `s >= threshold` and checks it decreases without bound.
    pub fn satisfies_superlinear_damping(&self, threshold: f64) -> bool {
        if self.is_none() {
            return false;
        }
        let q = |s: f64| self.eval_h(s) * s.ln() / s;
        let samples: Vec<f64> = (0..200)
            .map(|i| threshold.max(1.5) * 10f64.powf(i as f64 * 0.03))
            .map(q)
            .collect();
        samples.windows(2).all(|w| w[1] < w[0]) && *samples.last().unwrap() < -10.0
    }
}
