//! Discretisation, solvers and diagnostics for the cross-diffusion system
//! `u_t = Delta(u gamma(v))`, `eps v_t = Delta v - v + u` on a rectangle with
//! no-flux boundaries.

// Checks are written as `!(x > bound)` on purpose: NaN must fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod dynamics;
pub mod elliptic;
pub mod error;
pub mod grid;
pub mod krylov;
pub mod motility;
pub mod quadrature;
pub mod steady;

pub use diagnostics::{Diagnostics, DiagnosticsRecord, Dissipation, G0Evaluator};
pub use dynamics::{DtPolicy, Integrator, ModelParams, RunOptions, State, Trajectory};
pub use elliptic::{EllipticMethod, EllipticSolver};
pub use error::{Error, Result};
pub use grid::{Field, Grid};
pub use motility::{GrowthSpec, Motility, MotilityKind, MotilitySpec};
pub use steady::{InitStrategy, SpikeCenter, SteadyProfile};
