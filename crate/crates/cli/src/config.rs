//! Run configuration in a flat `[section]` / `key = value` format.
//!
//! ```text
//! seed = 7
//!
//! [domain]
//! dim = 1
//! lx = 1
//! nx = 128
//!
//! [model]
//! epsilon = 1
//! motility = prototype
//! k = 1
//! ```
//!
//! `#` starts a comment. Keys may appear in any order, each at most once, and
//! every omitted key takes its default. [`render`] writes every key, so its
//! output documents the defaults and parses back to the same config.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;
use xdiff_core::motility::{mollify, GrowthSpec, Motility, MotilitySpec};
use xdiff_core::{Grid, ModelParams};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    /// 1-based; 0 when the problem is not tied to a line.
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotilityName {
    Prototype,
    Power,
    Exponential,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrowthName {
    None,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipe {
    /// `m` plus uniform noise of size `amplitude` (`v_amplitude` for `v`).
    Random,
    /// `m + amplitude cos(pi x / lx)` for `u`, `m + v_amplitude cos(2 pi x / lx)` for `v`.
    Cosine,
    /// Snapshot files `u_file`, `v_file`.
    File,
    /// Scaled steady pattern times `1 + noise` with noise of size `amplitude`.
    Pattern,
}

macro_rules! keyword_enum {
    ($ty:ident { $($variant:ident => $word:literal),* $(,)? }) => {
        impl $ty {
            pub const WORDS: &'static [&'static str] = &[$($word),*];

            pub fn as_str(&self) -> &'static str {
                match self {
                    $($ty::$variant => $word),*
                }
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($word => Ok($ty::$variant),)*
                    _ => Err(format!("expected one of {}, got `{s}`", Self::WORDS.join(", "))),
                }
            }
        }
    };
}

pub(crate) use keyword_enum;

keyword_enum!(MotilityName { Prototype => "prototype", Power => "power", Exponential => "exponential", Constant => "constant" });
keyword_enum!(GrowthName { None => "none", Logistic => "logistic" });
keyword_enum!(Recipe { Random => "random", Cosine => "cosine", File => "file", Pattern => "pattern" });

#[derive(Debug, Clone, PartialEq)]
pub struct DomainConfig {
    pub dim: usize,
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub epsilon: f64,
    pub motility: MotilityName,
    pub k: f64,
    /// Value of the constant motility.
    pub gamma_value: f64,
    /// `0` disables mollification.
    pub mollify_eta: f64,
    pub growth: GrowthName,
    pub h0: f64,
    pub l: f64,
    pub source_eta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialConfig {
    pub recipe: Recipe,
    pub m: f64,
    pub amplitude: f64,
    pub v_amplitude: f64,
    pub u_file: String,
    pub v_file: String,
    pub pattern_d: f64,
    pub pattern_k: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeConfig {
    pub t_end: f64,
    pub observer_stride: usize,
    pub cfl_safety: f64,
    pub dt_min: f64,
    /// `0` selects the adaptive step.
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: String,
    pub csv: bool,
    pub snapshots: bool,
    pub heatmaps: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub domain: DomainConfig,
    pub model: ModelConfig,
    pub initial: InitialConfig,
    pub time: TimeConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            domain: DomainConfig {
                dim: 1,
                lx: 1.0,
                ly: 1.0,
                nx: 128,
                ny: 1,
            },
            model: ModelConfig {
                epsilon: 1.0,
                motility: MotilityName::Prototype,
                k: 1.0,
                gamma_value: 1.0,
                mollify_eta: 0.0,
                growth: GrowthName::None,
                h0: 1.0,
                l: 1.0,
                source_eta: 0.0,
            },
            initial: InitialConfig {
                recipe: Recipe::Random,
                m: 1.0,
                amplitude: 0.1,
                v_amplitude: 0.1,
                u_file: String::new(),
                v_file: String::new(),
                pattern_d: 0.02,
                pattern_k: 2.0,
            },
            time: TimeConfig {
                t_end: 1.0,
                observer_stride: 100,
                cfl_safety: xdiff_core::dynamics::DEFAULT_CFL_SAFETY,
                dt_min: xdiff_core::dynamics::DEFAULT_DT_MIN,
                dt: 0.0,
            },
            output: OutputConfig {
                dir: "out".into(),
                csv: true,
                snapshots: true,
                heatmaps: true,
            },
        }
    }
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("", &["seed"]),
    ("domain", &["dim", "lx", "ly", "nx", "ny"]),
    (
        "model",
        &["epsilon", "motility", "k", "gamma_value", "mollify_eta", "growth", "h0", "l", "source_eta"],
    ),
    (
        "initial",
        &["recipe", "m", "amplitude", "v_amplitude", "u_file", "v_file", "pattern_d", "pattern_k"],
    ),
    ("time", &["t_end", "observer_stride", "cfl_safety", "dt_min", "dt"]),
    ("output", &["dir", "csv", "snapshots", "heatmaps"]),
];

fn parse_value<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>()
        .map_err(|e| err(line, format!("`{key}`: cannot parse `{raw}`: {e}")))
}

fn unquote(raw: &str) -> &str {
    raw.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(raw)
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut section = "";
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| err(line, "unterminated section header"))?
                .trim();
            section = SECTIONS
                .iter()
                .find(|(s, _)| !s.is_empty() && *s == name)
                .map(|(s, _)| *s)
                .ok_or_else(|| err(line, format!("unknown section `[{name}]`")))?;
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected `key = value`, got `{content}`")))?;
        let key = key.trim();
        let value = unquote(value.trim());
        let known = SECTIONS.iter().find(|(s, _)| *s == section).map(|(_, k)| *k).unwrap_or(&[]);
        if !known.contains(&key) {
            let place = if section.is_empty() { "top level".to_string() } else { format!("[{section}]") };
            return Err(err(line, format!("unknown key `{key}` in {place}")));
        }
        let full = format!("{section}.{key}");
        if let Some(first) = seen.insert(full, line) {
            return Err(err(line, format!("duplicate key `{key}` (first set on line {first})")));
        }
        assign(&mut cfg, section, key, value, line)?;
    }
    validate(&cfg, &|s: &str, k: &str| seen.get(&format!("{s}.{k}")).copied().unwrap_or(0))?;
    Ok(cfg)
}

fn assign(cfg: &mut RunConfig, section: &str, key: &str, v: &str, line: usize) -> Result<(), ConfigError> {
    let f = |v: &str| parse_value::<f64>(line, key, v);
    let n = |v: &str| parse_value::<usize>(line, key, v);
    let b = |v: &str| parse_value::<bool>(line, key, v);
    match (section, key) {
        ("", "seed") => cfg.seed = parse_value(line, key, v)?,
        ("domain", "dim") => cfg.domain.dim = n(v)?,
        ("domain", "lx") => cfg.domain.lx = f(v)?,
        ("domain", "ly") => cfg.domain.ly = f(v)?,
        ("domain", "nx") => cfg.domain.nx = n(v)?,
        ("domain", "ny") => cfg.domain.ny = n(v)?,
        ("model", "epsilon") => cfg.model.epsilon = f(v)?,
        ("model", "motility") => cfg.model.motility = parse_value(line, key, v)?,
        ("model", "k") => cfg.model.k = f(v)?,
        ("model", "gamma_value") => cfg.model.gamma_value = f(v)?,
        ("model", "mollify_eta") => cfg.model.mollify_eta = f(v)?,
        ("model", "growth") => cfg.model.growth = parse_value(line, key, v)?,
        ("model", "h0") => cfg.model.h0 = f(v)?,
        ("model", "l") => cfg.model.l = f(v)?,
        ("model", "source_eta") => cfg.model.source_eta = f(v)?,
        ("initial", "recipe") => cfg.initial.recipe = parse_value(line, key, v)?,
        ("initial", "m") => cfg.initial.m = f(v)?,
        ("initial", "amplitude") => cfg.initial.amplitude = f(v)?,
        ("initial", "v_amplitude") => cfg.initial.v_amplitude = f(v)?,
        ("initial", "u_file") => cfg.initial.u_file = v.to_string(),
        ("initial", "v_file") => cfg.initial.v_file = v.to_string(),
        ("initial", "pattern_d") => cfg.initial.pattern_d = f(v)?,
        ("initial", "pattern_k") => cfg.initial.pattern_k = f(v)?,
        ("time", "t_end") => cfg.time.t_end = f(v)?,
        ("time", "observer_stride") => cfg.time.observer_stride = n(v)?,
        ("time", "cfl_safety") => cfg.time.cfl_safety = f(v)?,
        ("time", "dt_min") => cfg.time.dt_min = f(v)?,
        ("time", "dt") => cfg.time.dt = f(v)?,
        ("output", "dir") => cfg.output.dir = v.to_string(),
        ("output", "csv") => cfg.output.csv = b(v)?,
        ("output", "snapshots") => cfg.output.snapshots = b(v)?,
        ("output", "heatmaps") => cfg.output.heatmaps = b(v)?,
        _ => unreachable!("key table and assign disagree on {section}.{key}"),
    }
    Ok(())
}

fn validate(cfg: &RunConfig, line_of: &dyn Fn(&str, &str) -> usize) -> Result<(), ConfigError> {
    let check = |ok: bool, s: &str, k: &str, msg: &str| if ok { Ok(()) } else { Err(err(line_of(s, k), msg.to_string())) };
    let d = &cfg.domain;
    check(d.dim == 1 || d.dim == 2, "domain", "dim", "dim must be 1 or 2")?;
    check(d.lx.is_finite() && d.lx > 0.0, "domain", "lx", "lx must be > 0")?;
    check(d.nx >= 3, "domain", "nx", "nx must be >= 3")?;
    if d.dim == 2 {
        check(d.ly.is_finite() && d.ly > 0.0, "domain", "ly", "ly must be > 0")?;
        check(d.ny >= 3, "domain", "ny", "ny must be >= 3")?;
    }
    cfg.grid().map_err(|e| err(line_of("domain", "ny").max(line_of("domain", "nx")), e.to_string()))?;

    let m = &cfg.model;
    check(m.epsilon.is_finite() && m.epsilon > 0.0, "model", "epsilon", "epsilon must satisfy ε > 0")?;
    if matches!(m.motility, MotilityName::Prototype | MotilityName::Power) {
        check(m.k.is_finite() && m.k > 0.0, "model", "k", "k must be > 0")?;
    }
    if m.motility == MotilityName::Constant {
        check(m.gamma_value.is_finite() && m.gamma_value > 0.0, "model", "gamma_value", "gamma_value must be > 0")?;
    }
    check(
        m.mollify_eta == 0.0 || (m.mollify_eta > 0.0 && m.mollify_eta < 1.0),
        "model",
        "mollify_eta",
        "mollify_eta must be 0 (off) or lie in (0, 1)",
    )?;
    if m.growth == GrowthName::Logistic {
        check(m.h0.is_finite() && m.h0 > 0.0, "model", "h0", "h0 must be > 0")?;
        check(m.l.is_finite() && m.l >= 1.0, "model", "l", "l must be >= 1")?;
    }
    check(m.source_eta.is_finite() && m.source_eta >= 0.0, "model", "source_eta", "source_eta must be >= 0")?;

    let i = &cfg.initial;
    check(i.m.is_finite() && i.m > 0.0, "initial", "m", "m must be > 0")?;
    check(i.amplitude.is_finite() && i.amplitude >= 0.0, "initial", "amplitude", "amplitude must be >= 0")?;
    check(i.v_amplitude.is_finite() && i.v_amplitude >= 0.0, "initial", "v_amplitude", "v_amplitude must be >= 0")?;
    match i.recipe {
        Recipe::Random | Recipe::Cosine => {
            check(i.amplitude < i.m, "initial", "amplitude", "amplitude must be < m to keep u > 0")?;
            check(i.v_amplitude < i.m, "initial", "v_amplitude", "v_amplitude must be < m to keep v > 0")?;
        }
        Recipe::File => {
            check(!i.u_file.is_empty(), "initial", "u_file", "recipe = file needs u_file")?;
            check(!i.v_file.is_empty(), "initial", "v_file", "recipe = file needs v_file")?;
        }
        Recipe::Pattern => {
            check(i.pattern_d.is_finite() && i.pattern_d > 0.0, "initial", "pattern_d", "pattern_d must be > 0")?;
            check(i.pattern_k.is_finite() && i.pattern_k > 1.0, "initial", "pattern_k", "pattern_k must be > 1")?;
            check(i.amplitude < 1.0, "initial", "amplitude", "relative pattern noise needs amplitude < 1")?;
        }
    }

    let t = &cfg.time;
    check(t.t_end.is_finite() && t.t_end >= 0.0, "time", "t_end", "t_end must be >= 0")?;
    check(t.observer_stride >= 1, "time", "observer_stride", "observer_stride must be >= 1")?;
    check(t.cfl_safety > 0.0 && t.cfl_safety <= 1.0, "time", "cfl_safety", "cfl_safety must lie in (0, 1]")?;
    check(t.dt_min.is_finite() && t.dt_min > 0.0, "time", "dt_min", "dt_min must be > 0")?;
    check(t.dt.is_finite() && t.dt >= 0.0, "time", "dt", "dt must be >= 0 (0 = adaptive)")?;
    check(!cfg.output.dir.is_empty(), "output", "dir", "dir must not be empty")?;
    Ok(())
}

/// Every key with its current value, in section order.
pub fn render(cfg: &RunConfig) -> String {
    let mut s = String::new();
    let d = &cfg.domain;
    let m = &cfg.model;
    let i = &cfg.initial;
    let t = &cfg.time;
    let o = &cfg.output;
    let _ = writeln!(s, "seed = {}", cfg.seed);
    let _ = writeln!(s, "\n[domain]\ndim = {}\nlx = {}\nly = {}\nnx = {}\nny = {}", d.dim, d.lx, d.ly, d.nx, d.ny);
    let _ = writeln!(
        s,
        "\n[model]\nepsilon = {}\nmotility = {}\nk = {}\ngamma_value = {}\nmollify_eta = {}\ngrowth = {}\nh0 = {}\nl = {}\nsource_eta = {}",
        m.epsilon,
        m.motility.as_str(),
        m.k,
        m.gamma_value,
        m.mollify_eta,
        m.growth.as_str(),
        m.h0,
        m.l,
        m.source_eta
    );
    let _ = writeln!(
        s,
        "\n[initial]\nrecipe = {}\nm = {}\namplitude = {}\nv_amplitude = {}\nu_file = \"{}\"\nv_file = \"{}\"\npattern_d = {}\npattern_k = {}",
        i.recipe.as_str(),
        i.m,
        i.amplitude,
        i.v_amplitude,
        i.u_file,
        i.v_file,
        i.pattern_d,
        i.pattern_k
    );
    let _ = writeln!(
        s,
        "\n[time]\nt_end = {}\nobserver_stride = {}\ncfl_safety = {}\ndt_min = {}\ndt = {}",
        t.t_end, t.observer_stride, t.cfl_safety, t.dt_min, t.dt
    );
    let _ = writeln!(
        s,
        "\n[output]\ndir = \"{}\"\ncsv = {}\nsnapshots = {}\nheatmaps = {}",
        o.dir, o.csv, o.snapshots, o.heatmaps
    );
    s
}

impl RunConfig {
    pub fn grid(&self) -> xdiff_core::Result<Grid> {
        let d = &self.domain;
        match d.dim {
            1 => Grid::new_1d(d.lx, d.nx),
            _ => Grid::new_2d(d.lx, d.ly, d.nx, d.ny),
        }
    }

    /// The same domain with `nx` cells along x (and `ny` scaled alike in 2D).
    pub fn with_resolution(&self, nx: usize) -> RunConfig {
        let mut c = self.clone();
        if c.domain.dim == 2 {
            c.domain.ny = (c.domain.ny * nx).div_ceil(c.domain.nx);
        }
        c.domain.nx = nx;
        c
    }

    pub fn motility_spec(&self) -> xdiff_core::Result<MotilitySpec> {
        let m = &self.model;
        match m.motility {
            MotilityName::Prototype => MotilitySpec::prototype(m.k),
            MotilityName::Power => MotilitySpec::power(m.k),
            MotilityName::Exponential => Ok(MotilitySpec::exponential()),
            MotilityName::Constant => MotilitySpec::constant(m.gamma_value),
        }
    }

    pub fn motility(&self) -> xdiff_core::Result<Arc<dyn Motility>> {
        let spec = self.motility_spec()?;
        if self.model.mollify_eta > 0.0 {
            Ok(Arc::new(mollify(&spec, self.model.mollify_eta)?))
        } else {
            Ok(Arc::new(spec))
        }
    }

    pub fn growth(&self) -> xdiff_core::Result<GrowthSpec> {
        match self.model.growth {
            GrowthName::None => Ok(GrowthSpec::None),
            GrowthName::Logistic => GrowthSpec::logistic(self.model.h0, self.model.l),
        }
    }

    pub fn model_params(&self) -> xdiff_core::Result<ModelParams> {
        ModelParams::new(self.model.epsilon, self.motility()?)?
            .with_growth(self.growth()?)
            .with_source_eta(self.model.source_eta)?
            .with_cfl_safety(self.time.cfl_safety)?
            .with_dt_min(self.time.dt_min)
    }
}
