//! Neumann elliptic solves on [`Grid`]s.
//!
//! * `solve_k`: the mean-free inverse of `-Delta_h`, i.e. `z` with
//!   `-Delta_h z = w - <w>` and `<z> = 0`.
//! * `solve_helmholtz`: `z` with `-Delta_h z + (1 + lambda) z = w`; `lambda = 0`
//!   is the discrete `A^-1`, `lambda > 0` serves the implicit signal update.
//!
//! The cell-centred Neumann stencil is diagonalised exactly by the type-II
//! cosine transform, with eigenvalues `(4/h^2) sin^2(pi k / 2n)` per direction,
//! so the spectral backend is a direct solve. The CG backend is matrix free and
//! exists to cross-check it.

use std::sync::Arc;

use rustdct::{DctPlanner, TransformType2And3};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::krylov::conjugate_gradient;

pub const DEFAULT_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EllipticMethod {
    SpectralCosine,
    ConjugateGradient,
}

struct Axis {
    plan: Arc<dyn TransformType2And3<f64>>,
    eig: Vec<f64>,
}

impl Axis {
    fn new(planner: &mut DctPlanner<f64>, n: usize, h: f64) -> Self {
        let eig = (0..n)
            .map(|k| {
                let s = (std::f64::consts::PI * k as f64 / (2.0 * n as f64)).sin();
                4.0 * s * s / (h * h)
            })
            .collect();
        Self {
            plan: planner.plan_dct2(n),
            eig,
        }
    }
}

pub struct EllipticSolver {
    grid: Grid,
    method: EllipticMethod,
    rel_tol: f64,
    max_iter: usize,
    x_axis: Axis,
    y_axis: Option<Axis>,
}

impl std::fmt::Debug for EllipticSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EllipticSolver")
            .field("grid", &self.grid)
            .field("method", &self.method)
            .field("rel_tol", &self.rel_tol)
            .field("max_iter", &self.max_iter)
            .finish()
    }
}

enum Shift {
    /// mean-free inverse of `-Delta_h`
    MeanFree,
    /// `-Delta_h + c`
    Helmholtz(f64),
}

impl EllipticSolver {
    pub fn new(grid: Grid, method: EllipticMethod) -> Self {
        let mut planner = DctPlanner::new();
        let x_axis = Axis::new(&mut planner, grid.nx(), grid.spacing());
        let y_axis = (grid.dim() == 2).then(|| Axis::new(&mut planner, grid.ny(), grid.spacing()));
        Self {
            grid,
            method,
            rel_tol: DEFAULT_REL_TOL,
            max_iter: 20 * grid.len() + 100,
            x_axis,
            y_axis,
        }
    }

    pub fn spectral(grid: Grid) -> Self {
        Self::new(grid, EllipticMethod::SpectralCosine)
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn method(&self) -> EllipticMethod {
        self.method
    }

    fn check(&self, w: &Field) -> Result<()> {
        if *w.grid() != self.grid {
            return Err(Error::GridMismatch(format!(
                "solver built for {:?}, field on {:?}",
                self.grid,
                w.grid()
            )));
        }
        Ok(())
    }

    /// `K_h w`: mean-free `z` with `-Delta_h z = w - <w>`.
    pub fn solve_k(&self, w: &Field) -> Result<Field> {
        self.check(w)?;
        let rhs = w.zero_mean();
        let mut z = self.solve(rhs.values(), Shift::MeanFree)?;
        let m = z.iter().sum::<f64>() / z.len() as f64;
        z.iter_mut().for_each(|x| *x -= m);
        Field::new(self.grid, z)
    }

    /// `z` with `-Delta_h z + (1 + lambda) z = w`.
    pub fn solve_helmholtz(&self, w: &Field, lambda: f64) -> Result<Field> {
        self.check(w)?;
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::param("lambda", format!("must be >= 0, got {lambda}")));
        }
        let z = self.solve(w.values(), Shift::Helmholtz(1.0 + lambda))?;
        Field::new(self.grid, z)
    }

    /// `||grad_h K_h (w - <w>)||_2`.
    pub fn h1dual_norm(&self, w: &Field) -> Result<f64> {
        let k = self.solve_k(w)?;
        Ok(k.grad_sq().integrate().sqrt())
    }

    /// `||grad_h A^-1 w||_2 + ||A^-1 w - <w>||_2`, the equivalent dual norm.
    pub fn h1dual_norm_helmholtz(&self, w: &Field) -> Result<f64> {
        let z = self.solve_helmholtz(w, 0.0)?;
        let mean = w.mean();
        Ok(z.grad_sq().integrate().sqrt() + z.shifted(mean).l2_norm())
    }

    fn solve(&self, rhs: &[f64], shift: Shift) -> Result<Vec<f64>> {
        match self.method {
            EllipticMethod::SpectralCosine => Ok(self.solve_spectral(rhs, shift)),
            EllipticMethod::ConjugateGradient => self.solve_cg(rhs, shift),
        }
    }

    fn solve_cg(&self, rhs: &[f64], shift: Shift) -> Result<Vec<f64>> {
        let grid = self.grid;
        let (c, zero_mean) = match shift {
            Shift::MeanFree => (0.0, true),
            Shift::Helmholtz(c) => (c, false),
        };
        let apply = |x: &[f64], y: &mut [f64]| {
            grid.apply_laplacian(x, y);
            for (yi, xi) in y.iter_mut().zip(x) {
                *yi = c * xi - *yi;
            }
        };
        let mut z = vec![0.0; rhs.len()];
        conjugate_gradient(apply, rhs, &mut z, self.rel_tol, self.max_iter, zero_mean)?;
        Ok(z)
    }

    fn solve_spectral(&self, rhs: &[f64], shift: Shift) -> Vec<f64> {
        let nx = self.grid.nx();
        let ny = self.grid.ny();
        let mut buf = rhs.to_vec();
        let scratch_len = |a: &Axis| a.plan.get_scratch_len();
        let mut scratch = vec![
            0.0;
            scratch_len(&self.x_axis).max(self.y_axis.as_ref().map_or(0, scratch_len))
        ];

        for row in buf.chunks_exact_mut(nx) {
            self.x_axis.plan.process_dct2_with_scratch(row, &mut scratch);
        }
        let mut column = vec![0.0; ny];
        if let Some(y) = &self.y_axis {
            for i in 0..nx {
                gather(&buf, i, nx, &mut column);
                y.plan.process_dct2_with_scratch(&mut column, &mut scratch);
                scatter(&column, i, nx, &mut buf);
            }
        }

        let y_eig = self.y_axis.as_ref().map(|a| a.eig.as_slice()).unwrap_or(&[0.0]);
        for (j, &ey) in y_eig.iter().enumerate().take(ny) {
            for i in 0..nx {
                let lam = self.x_axis.eig[i] + ey;
                let idx = j * nx + i;
                buf[idx] = match shift {
                    Shift::MeanFree if idx == 0 => 0.0,
                    Shift::MeanFree => buf[idx] / lam,
                    Shift::Helmholtz(c) => buf[idx] / (lam + c),
                };
            }
        }

        if let Some(y) = &self.y_axis {
            for i in 0..nx {
                gather(&buf, i, nx, &mut column);
                y.plan.process_dct3_with_scratch(&mut column, &mut scratch);
                scatter(&column, i, nx, &mut buf);
            }
        }
        for row in buf.chunks_exact_mut(nx) {
            self.x_axis.plan.process_dct3_with_scratch(row, &mut scratch);
        }
        // DCT-III after DCT-II scales by n/2 per direction
        let mut scale = 2.0 / nx as f64;
        if self.y_axis.is_some() {
            scale *= 2.0 / ny as f64;
        }
        buf.iter_mut().for_each(|x| *x *= scale);
        buf
    }
}

fn gather(buf: &[f64], i: usize, nx: usize, column: &mut [f64]) {
    for (j, c) in column.iter_mut().enumerate() {
        *c = buf[j * nx + i];
    }
}

fn scatter(column: &[f64], i: usize, nx: usize, buf: &mut [f64]) {
    for (j, c) in column.iter().enumerate() {
        buf[j * nx + i] = *c;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grids() -> Vec<Grid> {
        vec![
            Grid::new_1d(1.0, 64).unwrap(),
            Grid::new_1d(2.5, 37).unwrap(),
            Grid::new_2d(1.0, 0.75, 16, 12).unwrap(),
            Grid::new_2d(2.0, 2.0, 9, 9).unwrap(),
        ]
    }

    fn wavy(g: Grid, seed: f64) -> Field {
        Field::from_fn(g, |x| (3.1 * x[0] + seed).sin() * (1.7 * x[1] - seed).cos() + 0.3 * (seed * x[0]).cos())
    }

    #[test]
    fn zero_rhs_gives_zero() {
        for g in grids() {
            for m in [EllipticMethod::SpectralCosine, EllipticMethod::ConjugateGradient] {
                let s = EllipticSolver::new(g, m);
                let z = s.solve_k(&Field::zeros(g)).unwrap();
                assert!(z.values().iter().all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn k_of_cosine_is_scaled_cosine() {
        for nx in [16, 64, 256] {
            let g = Grid::new_1d(1.0, nx).unwrap();
            let h = g.spacing();
            let lambda = 2.0 / (h * h) * (1.0 - (PI * h).cos());
            let w = Field::from_fn(g, |x| (PI * x[0]).cos());
            for m in [EllipticMethod::SpectralCosine, EllipticMethod::ConjugateGradient] {
                let z = EllipticSolver::new(g, m).solve_k(&w).unwrap();
                for (zi, wi) in z.values().iter().zip(w.values()) {
                    assert!((zi - wi / lambda).abs() < 1e-9 / lambda);
                }
            }
        }
        // continuum limit cos(pi x) / pi^2
        let g = Grid::new_1d(1.0, 512).unwrap();
        let z = EllipticSolver::spectral(g).solve_k(&Field::from_fn(g, |x| (PI * x[0]).cos())).unwrap();
        let exact = Field::from_fn(g, |x| (PI * x[0]).cos() / (PI * PI));
        assert!(z.zip_map(&exact, |a, b| a - b).unwrap().lp_norm(f64::INFINITY).unwrap() < 1e-5);
    }

    #[test]
    fn k_round_trip_and_mean_free() {
        for g in grids() {
            for m in [EllipticMethod::SpectralCosine, EllipticMethod::ConjugateGradient] {
                let s = EllipticSolver::new(g, m);
                let w = wavy(g, 0.4);
                let z = s.solve_k(&w).unwrap();
                assert!(z.mean().abs() <= 1e-12 * z.l2_norm().max(1.0));
                let back = z.laplacian_neumann().map(|x| -x);
                let target = w.zero_mean();
                let err = back.zip_map(&target, |a, b| a - b).unwrap().l2_norm();
                assert!(err <= 1e-9 * target.l2_norm(), "{m:?} {g:?}: {err}");
            }
        }
    }

    #[test]
    fn helmholtz_of_constants() {
        for g in grids() {
            let s = EllipticSolver::spectral(g);
            let z = s.solve_helmholtz(&Field::constant(g, 2.0), 0.0).unwrap();
            assert!(z.values().iter().all(|x| (x - 2.0).abs() < 1e-12));
            let z = s.solve_helmholtz(&Field::constant(g, 2.0), 3.0).unwrap();
            assert!(z.values().iter().all(|x| (x - 0.5).abs() < 1e-12));
            assert!(s.solve_helmholtz(&Field::constant(g, 2.0), -1.0).is_err());
        }
    }

    #[test]
    fn grid_mismatch_is_structural() {
        let s = EllipticSolver::spectral(Grid::new_1d(1.0, 8).unwrap());
        let w = Field::zeros(Grid::new_1d(1.0, 9).unwrap());
        assert!(matches!(s.solve_k(&w), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn cg_nonconvergence_surfaces() {
        let g = Grid::new_1d(1.0, 64).unwrap();
        let s = EllipticSolver::new(g, EllipticMethod::ConjugateGradient).with_max_iter(3);
        let err = s.solve_k(&wavy(g, 1.0)).unwrap_err();
        assert!(matches!(err, Error::NotConverged { .. }));
    }

    #[test]
    fn dual_norm_examples() {
        let g = Grid::new_1d(1.0, 256).unwrap();
        let s = EllipticSolver::spectral(g);
        assert!(s.h1dual_norm(&Field::constant(g, 4.0)).unwrap() < 1e-14);
        let w = Field::from_fn(g, |x| (PI * x[0]).cos());
        let n = s.h1dual_norm(&w).unwrap();
        assert!((s.h1dual_norm(&w.map(|x| 2.0 * x)).unwrap() - 2.0 * n).abs() <= 1e-12 * n);
        let exact = 0.5_f64.sqrt() / PI;
        assert!((n - exact).abs() < 1e-4, "{n} vs {exact}");
        let coarse = EllipticSolver::spectral(Grid::new_1d(1.0, 128).unwrap());
        let n2 = coarse.h1dual_norm(&Field::from_fn(*coarse.grid(), |x| (PI * x[0]).cos())).unwrap();
        let ratio = (n2 - exact).abs() / (n - exact).abs();
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
    }

    #[test]
    fn maximum_principle() {
        for g in grids() {
            let s = EllipticSolver::spectral(g);
            let w = wavy(g, 0.9).map(f64::abs);
            for lambda in [0.0, 0.5, 1e4] {
                let z = s.solve_helmholtz(&w, lambda).unwrap();
                assert!(z.min() >= -1e-14);
            }
        }
    }

    fn random_field() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>)> {
        (0usize..4).prop_flat_map(|gi| {
            let n = grids()[gi].len();
            (Just(gi), prop::collection::vec(-1.0..1.0f64, n), prop::collection::vec(-1.0..1.0f64, n))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn k_is_symmetric_and_positive((gi, a, b) in random_field()) {
            let g = grids()[gi];
            let s = EllipticSolver::spectral(g);
            let w1 = Field::new(g, a).unwrap().zero_mean();
            let w2 = Field::new(g, b).unwrap().zero_mean();
            let k1 = s.solve_k(&w1).unwrap();
            let k2 = s.solve_k(&w2).unwrap();
            let lhs = k1.dot(&w2).unwrap();
            let rhs = w1.dot(&k2).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (k1.l2_norm() * w2.l2_norm()).max(1e-300));
            prop_assert!(k1.dot(&w1).unwrap() >= -1e-14);
            // <K w, w> equals the discrete H^-1 energy of the face-flux form
            let norm = s.h1dual_norm(&w1).unwrap();
            prop_assert!(norm >= 0.0);
        }

        #[test]
        fn backends_agree((gi, a, _b) in random_field()) {
            let g = grids()[gi];
            let w = Field::new(g, a).unwrap();
            let sp = EllipticSolver::spectral(g);
            let cg = EllipticSolver::new(g, EllipticMethod::ConjugateGradient);
            for lambda in [0.0, 2.0] {
                let zs = sp.solve_helmholtz(&w, lambda).unwrap();
                let zc = cg.solve_helmholtz(&w, lambda).unwrap();
                let d = zs.zip_map(&zc, |x, y| x - y).unwrap().l2_norm();
                prop_assert!(d <= 1e-8 * zs.l2_norm().max(1e-300));
            }
            let zs = sp.solve_k(&w).unwrap();
            let zc = cg.solve_k(&w).unwrap();
            let d = zs.zip_map(&zc, |x, y| x - y).unwrap().l2_norm();
            prop_assert!(d <= 1e-8 * zs.l2_norm().max(1e-300), "diff {}", d / zs.l2_norm());
        }

        #[test]
        fn equivalent_norm_kills_only_constants((gi, a, _b) in random_field(), c in -3.0..3.0f64) {
            let g = grids()[gi];
            let s = EllipticSolver::spectral(g);
            let w = Field::new(g, a).unwrap();
            prop_assert!(s.h1dual_norm_helmholtz(&Field::constant(g, c)).unwrap() < 1e-11);
            let n1 = s.h1dual_norm_helmholtz(&w).unwrap();
            let n2 = s.h1dual_norm_helmholtz(&w.map(|x| 2.0 * x)).unwrap();
            prop_assert!(n1 > 0.0);
            prop_assert!((n2 - 2.0 * n1).abs() <= 1e-12 * n1);
        }
    }
}
