//! Uniform cell-centred meshes on intervals and rectangles.
//!
//! Homogeneous Neumann conditions are imposed by mirroring the boundary cell
//! into a ghost cell, so every face on the boundary carries exactly zero flux
//! and the discrete Laplacian telescopes: `sum_i (lap f)_i = 0`.
//!
//! 2D fields are stored row-major with `x` fastest: `idx = j * nx + i`.

use crate::error::{Error, Result};

/// Smallest number of cells allowed in any direction.
pub const MIN_CELLS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    nx: usize,
    ny: usize,
    h: f64,
}

impl Grid {
    /// Interval `(0, length)` split into `nx` cells.
    pub fn new_1d(length: f64, nx: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("extent must be positive, got {length}")));
        }
        if nx < MIN_CELLS {
            return Err(Error::InvalidGrid(format!("need at least {MIN_CELLS} cells, got {nx}")));
        }
        Ok(Self {
            dim: 1,
            nx,
            ny: 1,
            h: length / nx as f64,
        })
    }

    /// Rectangle `(0, lx) x (0, ly)`; cells must be square.
    pub fn new_2d(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        for (name, l) in [("lx", lx), ("ly", ly)] {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidGrid(format!("{name} must be positive, got {l}")));
            }
        }
        if nx < MIN_CELLS || ny < MIN_CELLS {
            return Err(Error::InvalidGrid(format!(
                "need at least {MIN_CELLS} cells per direction, got {nx} x {ny}"
            )));
        }
        let hx = lx / nx as f64;
        let hy = ly / ny as f64;
        if ((hx - hy) / hx).abs() > 1e-12 {
            return Err(Error::InvalidGrid(format!(
                "cells must be square: lx/nx = {hx}, ly/ny = {hy}"
            )));
        }
        Ok(Self { dim: 2, nx, ny, h: hx })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    /// Cells in `y`; 1 for one-dimensional grids.
    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Number of cells.
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `[Lx]` or `[Lx, Ly]`.
    pub fn extents(&self) -> Vec<f64> {
        match self.dim {
            1 => vec![self.h * self.nx as f64],
            _ => vec![self.h * self.nx as f64, self.h * self.ny as f64],
        }
    }

    /// `|Omega|`.
    pub fn measure(&self) -> f64 {
        self.extents().iter().product()
    }

    /// `h^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    /// Centre of cell `idx`; the `y` component is 0 in 1D.
    pub fn cell_center(&self, idx: usize) -> [f64; 2] {
        let i = idx % self.nx;
        let j = idx / self.nx;
        let x = (i as f64 + 0.5) * self.h;
        let y = if self.dim == 1 { 0.0 } else { (j as f64 + 0.5) * self.h };
        [x, y]
    }

    /// Same cell counts on the domain stretched by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::param("factor", format!("must be positive, got {factor}")));
        }
        Ok(Self {
            h: self.h * factor,
            ..*self
        })
    }

    pub(crate) fn check_len(&self, n: usize, what: &str) -> Result<()> {
        if n != self.len() {
            return Err(Error::GridMismatch(format!(
                "{what} has {n} values, grid has {} cells",
                self.len()
            )));
        }
        Ok(())
    }

    /// Neumann 5-point (3-point in 1D) Laplacian of raw cell values.
    ///
    /// Written in flux form: each interior face flux is computed once and
    /// added to one cell and subtracted from its neighbour.
    pub fn apply_laplacian(&self, f: &[f64], out: &mut [f64]) {
        debug_assert_eq!(f.len(), self.len());
        debug_assert_eq!(out.len(), self.len());
        let inv_h2 = 1.0 / (self.h * self.h);
        out.fill(0.0);
        let nx = self.nx;
        for j in 0..self.ny {
            let row = j * nx;
            for i in 0..nx - 1 {
                let flux = (f[row + i + 1] - f[row + i]) * inv_h2;
                out[row + i] += flux;
                out[row + i + 1] -= flux;
            }
        }
        if self.dim == 2 {
            for j in 0..self.ny - 1 {
                let row = j * nx;
                for i in 0..nx {
                    let flux = (f[row + nx + i] - f[row + i]) * inv_h2;
                    out[row + i] += flux;
                    out[row + nx + i] -= flux;
                }
            }
        }
    }

    /// Cellwise `|grad f|^2`: squared face differences, each face shared equally
    /// by its two cells, so that the sum equals `-<Delta_h f, f>` exactly.
    pub fn apply_grad_sq(&self, f: &[f64], out: &mut [f64]) {
        let w = 0.5 / (self.h * self.h);
        let nx = self.nx;
        let ny = self.ny;
        out.iter_mut().for_each(|o| *o = 0.0);
        for j in 0..ny {
            for i in 0..nx {
                let idx = j * nx + i;
                if i + 1 < nx {
                    let d = f[idx + 1] - f[idx];
                    out[idx] += w * d * d;
                    out[idx + 1] += w * d * d;
                }
                if self.dim == 2 && j + 1 < ny {
                    let d = f[idx + nx] - f[idx];
                    out[idx] += w * d * d;
                    out[idx + nx] += w * d * d;
                }
            }
        }
    }
}

/// Scalar grid function, one value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        grid.check_len(values.len(), "field")?;
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f` at cell centres.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|idx| f(grid.cell_center(idx))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Cellwise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.same_grid(other)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(())
    }

    /// Discrete Neumann Laplacian `Delta_h f`.
    pub fn laplacian_neumann(&self) -> Field {
        let mut out = Field::zeros(self.grid);
        self.grid.apply_laplacian(&self.values, &mut out.values);
        out
    }

    /// Writes `Delta_h f` into `out`.
    pub fn laplacian_into(&self, out: &mut Field) -> Result<()> {
        self.same_grid(out)?;
        self.grid.apply_laplacian(&self.values, &mut out.values);
        Ok(())
    }

    /// Cellwise `|grad_h f|^2`.
    pub fn grad_sq(&self) -> Field {
        let mut out = Field::zeros(self.grid);
        self.grid.apply_grad_sq(&self.values, &mut out.values);
        out
    }

    /// `int_Omega f dx` by the midpoint rule.
    pub fn integrate(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().sum::<f64>()
    }

    /// Space average `<f>`.
    pub fn mean(&self) -> f64 {
        self.integrate() / self.grid.measure()
    }

    /// `(sum |f|^p h^dim)^(1/p)`; pass `f64::INFINITY` for the max norm.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if p.is_nan() || p < 1.0 {
            return Err(Error::param("p", format!("L^p norm needs p >= 1, got {p}")));
        }
        if p.is_infinite() {
            return Ok(self.values.iter().fold(0.0_f64, |m, x| m.max(x.abs())));
        }
        let vol = self.grid.cell_volume();
        if p == 2.0 {
            return Ok((vol * self.values.iter().map(|x| x * x).sum::<f64>()).sqrt());
        }
        let s: f64 = self.values.iter().map(|x| x.abs().powf(p)).sum();
        Ok((vol * s).powf(1.0 / p))
    }

    /// `||f||_2`, the one norm that cannot fail.
    pub fn l2_norm(&self) -> f64 {
        (self.grid.cell_volume() * self.values.iter().map(|x| x * x).sum::<f64>()).sqrt()
    }

    /// Cell inner product `sum f g h^dim`.
    pub fn dot(&self, other: &Field) -> Result<f64> {
        self.same_grid(other)?;
        Ok(self.grid.cell_volume()
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .sum::<f64>())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    /// `f - c`.
    pub fn shifted(&self, c: f64) -> Field {
        self.map(|x| x - c)
    }

    /// `f - <f>`.
    pub fn zero_mean(&self) -> Field {
        self.shifted(self.mean())
    }

    /// Same cell values on a grid with the same cell counts.
    pub fn with_grid(&self, grid: Grid) -> Result<Field> {
        Field::new(grid, self.values.clone())
    }
}
