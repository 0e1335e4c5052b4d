//! Text formats: diagnostics CSV, field snapshots and PGM heatmaps.
//!
//! Floats are written with Rust's shortest round-trip `{:e}` formatting, so
//! reading a file back reproduces the values bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use xdiff_core::{DiagnosticsRecord, Field, Grid};

pub const SNAPSHOT_MAGIC: &str = "XDIFF1";

/// Diagnostics table: a `# schema v1` line, the frozen header, one row per record.
pub fn csv_string(records: &[DiagnosticsRecord]) -> String {
    let mut s = format!("# schema v{}\n", DiagnosticsRecord::SCHEMA_VERSION);
    s.push_str(&DiagnosticsRecord::COLUMNS.join(","));
    s.push('\n');
    for r in records {
        let row: Vec<String> = r.values().iter().map(|x| format!("{x:e}")).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn read_csv(text: &str) -> Result<Vec<DiagnosticsRecord>> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().context("empty diagnostics file")?;
    if header != DiagnosticsRecord::COLUMNS.join(",") {
        bail!("unexpected diagnostics header `{header}`");
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let vals: Vec<f64> = line
                .split(',')
                .map(|x| x.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .with_context(|| format!("row {}", i + 1))?;
            let arr: [f64; 16] = vals
                .try_into()
                .map_err(|v: Vec<f64>| anyhow::anyhow!("row {} has {} columns", i + 1, v.len()))?;
            Ok(DiagnosticsRecord::from_values(arr))
        })
        .collect()
}

pub fn write_csv(path: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    fs::write(path, csv_string(records)).with_context(|| format!("writing {}", path.display()))
}

/// Snapshot text: header lines `XDIFF1`, `dim`, `cells`, `extents`, `t`, `field`,
/// then one value per line with x varying fastest.
pub fn snapshot_string(field: &Field, t: f64, name: &str) -> String {
    let g = field.grid();
    let mut s = String::new();
    let _ = writeln!(s, "{SNAPSHOT_MAGIC}");
    let _ = writeln!(s, "dim {}", g.dim());
    if g.dim() == 1 {
        let _ = writeln!(s, "cells {}", g.nx());
    } else {
        let _ = writeln!(s, "cells {} {}", g.nx(), g.ny());
    }
    let ext: Vec<String> = g.extents().iter().map(|x| format!("{x:e}")).collect();
    let _ = writeln!(s, "extents {}", ext.join(" "));
    let _ = writeln!(s, "t {t:e}");
    let _ = writeln!(s, "field {name}");
    for x in field.values() {
        let _ = writeln!(s, "{x:e}");
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub field: Field,
    pub t: f64,
    pub name: String,
}

pub fn read_snapshot(text: &str) -> Result<Snapshot> {
    let mut lines = text.lines();
    let mut next = |what: &str| lines.next().with_context(|| format!("snapshot truncated before {what}"));
    if next("magic")?.trim() != SNAPSHOT_MAGIC {
        bail!("not an {SNAPSHOT_MAGIC} snapshot");
    }
    let field_of = |line: &str, key: &str| -> Result<Vec<String>> {
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            bail!("expected `{key}` line, got `{line}`");
        }
        Ok(parts.map(str::to_string).collect())
    };
    let dim: usize = field_of(next("dim")?, "dim")?.first().context("dim value")?.parse()?;
    let cells: Vec<usize> = field_of(next("cells")?, "cells")?
        .iter()
        .map(|x| x.parse())
        .collect::<std::result::Result<_, _>>()?;
    let extents: Vec<f64> = field_of(next("extents")?, "extents")?
        .iter()
        .map(|x| x.parse())
        .collect::<std::result::Result<_, _>>()?;
    let t: f64 = field_of(next("t")?, "t")?.first().context("t value")?.parse()?;
    let name = field_of(next("field")?, "field")?.join(" ");
    let grid = match (dim, cells.as_slice(), extents.as_slice()) {
        (1, [nx], [lx]) => Grid::new_1d(*lx, *nx)?,
        (2, [nx, ny], [lx, ly]) => Grid::new_2d(*lx, *ly, *nx, *ny)?,
        _ => bail!("inconsistent header: dim {dim}, cells {cells:?}, extents {extents:?}"),
    };
    let values: Vec<f64> = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .context("snapshot values")?;
    if values.len() != grid.len() {
        bail!("snapshot has {} values for {} cells", values.len(), grid.len());
    }
    Ok(Snapshot {
        field: Field::new(grid, values)?,
        t,
        name,
    })
}

pub fn write_snapshot(path: &Path, field: &Field, t: f64, name: &str) -> Result<()> {
    fs::write(path, snapshot_string(field, t, name)).with_context(|| format!("writing {}", path.display()))
}

pub fn load_snapshot(path: &Path) -> Result<Snapshot> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    read_snapshot(&text).with_context(|| format!("parsing {}", path.display()))
}

/// ASCII PGM (`P2`) of `rows` (top row first) scaled linearly from min to max,
/// which are recorded in a header comment.
pub fn pgm_string(rows: &[Vec<f64>]) -> String {
    let height = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    let (lo, hi) = rows
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let span = hi - lo;
    let mut s = format!("P2\n# min {lo:e} max {hi:e}\n{width} {height}\n255\n");
    for row in rows {
        let px: Vec<String> = row
            .iter()
            .map(|&x| {
                let level = if span > 0.0 { ((x - lo) / span * 255.0).round() } else { 0.0 };
                (level.clamp(0.0, 255.0) as u8).to_string()
            })
            .collect();
        s.push_str(&px.join(" "));
        s.push('\n');
    }
    s
}

/// 2D field as an image with `y` increasing upwards.
pub fn heatmap_2d(field: &Field) -> String {
    let g = field.grid();
    let rows: Vec<Vec<f64>> = (0..g.ny())
        .rev()
        .map(|j| field.values()[j * g.nx()..(j + 1) * g.nx()].to_vec())
        .collect();
    pgm_string(&rows)
}

/// Space-time image of 1D fields, one row per snapshot with time increasing downwards.
pub fn heatmap_spacetime(fields: &[&Field]) -> String {
    let rows: Vec<Vec<f64>> = fields.iter().map(|f| f.values().to_vec()).collect();
    pgm_string(&rows)
}
