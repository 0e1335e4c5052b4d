use std::path::Path;

use xdiff_cli::config::{Recipe, RunConfig};
use xdiff_cli::experiments::{build_initial, run_experiment};
use xdiff_cli::io;
use xdiff_cli::refine::{default_levels, refinement_study, Level};

fn smooth(nx: usize) -> RunConfig {
    let mut c = RunConfig::default();
    c.domain.nx = nx;
    c.initial.recipe = Recipe::Cosine;
    c.initial.amplitude = 0.3;
    c.initial.v_amplitude = 0.2;
    c.time.t_end = 0.1;
    c.time.observer_stride = 16;
    c
}

#[test]
fn lyapunov_residual_converges_at_first_order() {
    // dt = 0.2 h^2; the stable step of each level refines the same way but its
    // coarsest level sits in a cancellation between time and space errors
    let cfg = smooth(64);
    let levels: Vec<Level> = [64usize, 128, 256]
        .iter()
        .map(|&nx| Level { nx, dt: 0.2 / (nx * nx) as f64 })
        .collect();
    let table = refinement_study(&cfg, &levels, Path::new(".")).unwrap();
    let p = table.order("lyap_residual").value().unwrap();
    assert!(p >= 0.9, "{table}");
}

#[test]
fn k_residual_shrinks_with_dt_at_fixed_h() {
    let cfg = smooth(64);
    let dt0 = default_levels(&cfg, &[64]).unwrap()[0].dt;
    let levels: Vec<Level> = [0.5, 0.25, 0.125].iter().map(|f| Level { nx: 64, dt: dt0 * f }).collect();
    let table = refinement_study(&cfg, &levels, Path::new(".")).unwrap();
    let k: Vec<f64> = table.levels.iter().map(|r| r.k_max).collect();
    assert!(k[0] > k[1] && k[1] > k[2], "{table}");
    assert!(table.order("K_residual").value().unwrap() >= 0.9, "{table}");
}

#[test]
fn snapshots_feed_back_as_file_initial_data() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = smooth(24);
    cfg.time.t_end = 0.01;
    let out = tmp.path().join("first");
    run_experiment(None, &cfg, Path::new("."), &out).unwrap();
    let snaps = out.join("snapshots");
    let last = std::fs::read_dir(&snaps).unwrap().filter_map(|e| e.ok()).map(|e| e.file_name()).max().unwrap();
    let last = last.to_string_lossy().replace("v_", "");

    let mut again = cfg.clone();
    again.initial.recipe = Recipe::File;
    again.initial.u_file = format!("u_{last}");
    again.initial.v_file = format!("v_{last}");
    let state = build_initial(&again, &snaps).unwrap();
    let u = io::load_snapshot(&snaps.join(format!("u_{last}"))).unwrap();
    assert_eq!(state.u, u.field);
    assert!(u.t > 0.0);

    again.domain.nx = 12;
    assert!(build_initial(&again, &snaps).is_err());
}
