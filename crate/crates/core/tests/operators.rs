use std::f64::consts::PI;

use approx::assert_relative_eq;
use xdiff_core::{EllipticMethod, EllipticSolver, Field, Grid};

/// Eigenvalue of `-Delta_h` for cosine mode `k` on `n` cells of width `h`.
fn eig(k: usize, n: usize, h: f64) -> f64 {
    let s = (PI * k as f64 / (2 * n) as f64).sin();
    4.0 * s * s / (h * h)
}

fn mode(grid: Grid, kx: usize, ky: usize) -> Field {
    let ext = grid.extents();
    let ly = ext.get(1).copied().unwrap_or(1.0);
    Field::from_fn(grid, |x| (PI * kx as f64 * x[0] / ext[0]).cos() * (PI * ky as f64 * x[1] / ly).cos())
}

#[test]
fn cosine_modes_are_eigenvectors_of_both_backends() {
    let g1 = Grid::new_1d(2.0, 40).unwrap();
    let g2 = Grid::new_2d(1.0, 0.75, 16, 12).unwrap();
    for (grid, kx, ky) in [(g1, 3, 0), (g1, 39, 0), (g2, 2, 5), (g2, 0, 1)] {
        let h = grid.spacing();
        let lam = eig(kx, grid.nx(), h) + if grid.dim() == 2 { eig(ky, grid.ny(), h) } else { 0.0 };
        let w = mode(grid, kx, ky);
        for method in [EllipticMethod::SpectralCosine, EllipticMethod::ConjugateGradient] {
            let s = EllipticSolver::new(grid, method);
            let kw = s.solve_k(&w).unwrap();
            for (a, b) in kw.values().iter().zip(w.values()) {
                assert_relative_eq!(*a, b / lam, epsilon = 1e-9 / lam);
            }
            let z = s.solve_helmholtz(&w, 0.5).unwrap();
            for (a, b) in z.values().iter().zip(w.values()) {
                assert_relative_eq!(*a, b / (lam + 1.5), epsilon = 1e-9);
            }
            // ||w||_(H1)'^2 = <K w, w> = ||w||^2 / lam for a single mode
            let n2 = w.dot(&w).unwrap();
            assert_relative_eq!(s.h1dual_norm(&w).unwrap(), (n2 / lam).sqrt(), max_relative = 1e-8);
        }
    }
}

#[test]
fn dual_norm_ignores_constants_and_scales_linearly() {
    let grid = Grid::new_2d(1.0, 1.0, 20, 20).unwrap();
    let s = EllipticSolver::spectral(grid);
    let w = Field::from_fn(grid, |x| (x[0] * 7.0).sin() * x[1] + x[0] * x[0]);
    let base = s.h1dual_norm(&w).unwrap();
    assert_relative_eq!(s.h1dual_norm(&w.shifted(-3.0)).unwrap(), base, max_relative = 1e-12);
    assert_relative_eq!(s.h1dual_norm(&w.map(|x| -2.5 * x)).unwrap(), 2.5 * base, max_relative = 1e-12);
    assert!(s.h1dual_norm(&Field::constant(grid, 4.0)).unwrap() < 1e-14);
}

#[test]
fn laplacian_is_conservative_and_symmetric() {
    let grid = Grid::new_2d(1.5, 1.0, 15, 10).unwrap();
    let f = Field::from_fn(grid, |x| (3.0 * x[0] + x[1]).exp());
    let g = Field::from_fn(grid, |x| (x[0] - x[1] * x[1]).cos());
    let lf = f.laplacian_neumann();
    let lg = g.laplacian_neumann();
    assert!(lf.integrate().abs() <= 1e-10 * f.integrate());
    assert_relative_eq!(lf.dot(&g).unwrap(), f.dot(&lg).unwrap(), max_relative = 1e-12);
    // summation by parts: -<Lap f, f> equals the discrete Dirichlet energy
    assert_relative_eq!(-lf.dot(&f).unwrap(), f.grad_sq().integrate(), max_relative = 1e-10);
}
