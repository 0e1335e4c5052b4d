//! Refinement studies: one run per `(nx, dt)` level and least-squares orders in `dt`.

use std::fmt;
use std::path::Path;

use anyhow::{bail, Result};
use rayon::prelude::*;
use xdiff_core::diagnostics::{weak_form_residual, SineCosine};
use xdiff_core::{Integrator, RunOptions};

use crate::config::{Recipe, RunConfig};
use crate::experiments::{build_initial, continuum_mean_deviation};

/// Residuals at or below this are treated as solver round-off.
pub const FLOOR: f64 = 1e-10;

pub const THREADS_ENV: &str = "XDIFF_THREADS";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level {
    pub nx: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelResult {
    pub level: Level,
    pub h: f64,
    pub steps: usize,
    pub lyap_max: f64,
    pub k_max: f64,
    pub weak_u: f64,
    pub weak_v: f64,
    /// Distance of `<v>` from the continuum mean formula; NaN with growth or a saturating source.
    pub mean_dev: f64,
}

pub const COLUMNS: [&str; 5] = ["lyap_residual", "K_residual", "weak_u", "weak_v", "mean_dev"];

impl LevelResult {
    pub fn column(&self, i: usize) -> f64 {
        [self.lyap_max, self.k_max, self.weak_u, self.weak_v, self.mean_dev][i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Order {
    Fitted(f64),
    /// Every level at round-off.
    Floor,
    /// Missing values.
    Unavailable,
}

impl Order {
    pub fn value(&self) -> Option<f64> {
        match self {
            Order::Fitted(p) => Some(*p),
            _ => None,
        }
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Order::Fitted(p) => write!(f, "{p:.3}"),
            Order::Floor => f.write_str("floor"),
            Order::Unavailable => f.write_str("n/a"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderTable {
    pub levels: Vec<LevelResult>,
    /// One per entry of [`COLUMNS`].
    pub orders: Vec<Order>,
}

impl OrderTable {
    pub fn order(&self, column: &str) -> Order {
        let i = COLUMNS.iter().position(|c| *c == column).expect("known column");
        self.orders[i]
    }
}

impl fmt::Display for OrderTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:>6} {:>12} {:>12}", "nx", "h", "dt")?;
        for c in COLUMNS {
            write!(f, " {c:>14}")?;
        }
        writeln!(f)?;
        for r in &self.levels {
            write!(f, "{:>6} {:>12.4e} {:>12.4e}", r.level.nx, r.h, r.level.dt)?;
            for i in 0..COLUMNS.len() {
                write!(f, " {:>14.4e}", r.column(i))?;
            }
            writeln!(f)?;
        }
        write!(f, "{:>6} {:>12} {:>12}", "order", "", "")?;
        for o in &self.orders {
            write!(f, " {:>14}", o.to_string())?;
        }
        writeln!(f)
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_order(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn classify(dts: &[f64], ys: &[f64]) -> Order {
    if ys.iter().any(|y| !y.is_finite()) {
        Order::Unavailable
    } else if ys.iter().all(|&y| y <= FLOOR) {
        Order::Floor
    } else {
        Order::Fitted(fit_order(dts, &ys.iter().map(|&y| y.max(f64::MIN_POSITIVE)).collect::<Vec<_>>()))
    }
}

/// Levels at the given resolutions with the stable step of each initial state.
pub fn default_levels(cfg: &RunConfig, nxs: &[usize]) -> Result<Vec<Level>> {
    nxs.iter()
        .map(|&nx| {
            let c = cfg.with_resolution(nx);
            let init = build_initial(&c, Path::new("."))?;
            let dt = Integrator::new(c.model_params()?, c.grid()?).stable_dt(&init)?;
            Ok(Level { nx, dt })
        })
        .collect()
}

/// One fixed-step run of `cfg` at `level`.
pub fn run_level(cfg: &RunConfig, level: Level, base: &Path) -> Result<LevelResult> {
    let c = cfg.with_resolution(level.nx);
    let grid = c.grid()?;
    let init = build_initial(&c, base)?;
    let params = c.model_params()?;
    let integrator = Integrator::new(params.clone(), grid);
    let opts = RunOptions::new(c.time.t_end, c.time.observer_stride)
        .fixed_dt(level.dt)
        .with_snapshots();
    let traj = integrator.run(&init, &opts)?;
    if let Some(e) = traj.failure {
        bail!("level nx = {} dt = {:e} aborted: {e}", level.nx, level.dt);
    }
    let max_of = |f: fn(&xdiff_core::DiagnosticsRecord) -> f64| {
        traj.records.iter().map(f).filter(|x| !x.is_nan()).fold(0.0, f64::max)
    };
    let k_max = if params.growth.is_none() { max_of(|r| r.k_residual) } else { f64::NAN };
    let phi = SineCosine {
        period: c.time.t_end,
        length: c.domain.lx,
    };
    let (weak_u, weak_v) = weak_form_residual(&traj.snapshots, &params, &phi)?;
    let mean_dev = if params.growth.is_none() && params.source_eta == 0.0 {
        continuum_mean_deviation(&init, params.epsilon, &traj.records)
    } else {
        f64::NAN
    };
    Ok(LevelResult {
        level,
        h: grid.spacing(),
        steps: traj.steps,
        lyap_max: max_of(|r| r.lyap_residual),
        k_max,
        weak_u,
        weak_v,
        mean_dev,
    })
}

/// Thread count from `XDIFF_THREADS`, or rayon's default when unset or invalid.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Runs every level (concurrently, capped by `XDIFF_THREADS`) and fits orders against `dt`.
pub fn refinement_study(cfg: &RunConfig, levels: &[Level], base: &Path) -> Result<OrderTable> {
    if levels.len() < 3 {
        bail!("a refinement study needs at least 3 levels, got {}", levels.len());
    }
    if cfg.initial.recipe == Recipe::Random {
        bail!("random initial data differs between resolutions; use recipe = cosine, file or pattern");
    }
    if levels.windows(2).any(|w| !(w[1].dt < w[0].dt)) {
        bail!("levels must refine dt strictly");
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        builder = builder.num_threads(n);
    }
    let pool = builder.build()?;
    let results: Vec<LevelResult> =
        pool.install(|| levels.par_iter().map(|&l| run_level(cfg, l, base)).collect::<Result<_>>())?;
    let dts: Vec<f64> = results.iter().map(|r| r.level.dt).collect();
    let orders = (0..COLUMNS.len())
        .map(|i| classify(&dts, &results.iter().map(|r| r.column(i)).collect::<Vec<_>>()))
        .collect();
    Ok(OrderTable { levels: results, orders })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 0.5, 0.25, 0.125];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.7)).collect();
        assert!((fit_order(&x, &y) - 1.7).abs() < 1e-12);
    }

    #[test]
    fn classification() {
        let x = [1.0, 0.5, 0.25];
        assert_eq!(classify(&x, &[0.0, 1e-12, 1e-11]), Order::Floor);
        assert_eq!(classify(&x, &[f64::NAN, 1.0, 1.0]), Order::Unavailable);
        assert_eq!(classify(&x, &[4.0, 2.0, 1.0]), Order::Fitted(1.0));
        assert_eq!(Order::Floor.to_string(), "floor");
    }

    #[test]
    fn study_preconditions() {
        let cfg = RunConfig::default();
        let l = |nx, dt| Level { nx, dt };
        assert!(refinement_study(&cfg, &[l(8, 0.1), l(16, 0.05)], Path::new(".")).is_err());
        assert!(refinement_study(&cfg, &[l(8, 0.1), l(16, 0.05), l(32, 0.02)], Path::new(".")).is_err());
        let mut c = cfg.clone();
        c.initial.recipe = Recipe::Cosine;
        assert!(refinement_study(&c, &[l(8, 0.1), l(16, 0.2), l(32, 0.02)], Path::new(".")).is_err());
    }
}
