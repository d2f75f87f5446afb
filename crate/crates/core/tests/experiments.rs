//! Short end-to-end runs of the harness.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rdfem::assembly::{assemble_mass, mass_norm};
use rdfem::harness::{
    eoc_mesh_size, manufactured_run, run_simulation, EocOptions, InitialTransfer, MeshCoupling,
    MeshSpec, RunConfig, StopReason,
};
use rdfem::mesh::{load_mesh, mesh_spacing, CellKind};
use rdfem::stepping::{IterationMode, NonlinearMethod, NonlinearPolicy, SchemeKind};

fn ball_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/ball.mesh")
}

fn small(mesh: MeshSpec, kind: SchemeKind, t_end: f64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.mesh = mesh;
    cfg.scheme.kind = kind;
    cfg.t_end = t_end;
    cfg.timing = false;
    cfg
}

#[test]
fn repeated_runs_write_identical_files() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let mut cfg = small(MeshSpec::Square(12), SchemeKind::fractional_step(), 0.5);
        cfg.output_dir = Some(dir.path().to_path_buf());
        run_simulation(&cfg).unwrap();
    }
    for name in ["trace.csv", "growth.csv", "summary.json", "final.vtk"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name} differs between runs");
    }
}

#[test]
fn ball_fixture_volume_is_within_the_chord_error() {
    let mesh = load_mesh(ball_path()).unwrap();
    let h = mesh_spacing(&mesh).h_max;
    let exact = 4.0 * PI / 3.0;
    // Boundary vertices lie on the sphere, so the mesh is inscribed; each
    // boundary facet cuts off a cap no taller than about h²/6.
    let deficit = exact - mesh.total_volume();
    assert!(deficit > 0.0);
    assert!(deficit < 4.0 * PI * h * h / 6.0, "deficit {deficit}, h {h}");
}

#[test]
fn fsts_single_newton_runs_in_the_ball() {
    let mut cfg = small(
        MeshSpec::File(ball_path()),
        SchemeKind::fractional_step(),
        0.1,
    );
    cfg.policy = NonlinearPolicy::single_newton();
    let (trace, last) = run_simulation(&cfg).unwrap();
    assert_eq!(trace.stopped_by, StopReason::TEnd);
    assert_eq!(trace.steps(), 10);
    assert!(last.is_finite());
    assert!(trace.records.iter().all(|r| r.nonlin_iters == 3));
}

#[test]
fn steady_stop_record_is_the_first_below_tolerance() {
    let mut cfg = small(MeshSpec::Square(8), SchemeKind::BackwardEuler, 60.0);
    cfg.scheme.tau = 0.05;
    let (trace, _) = run_simulation(&cfg).unwrap();
    assert_eq!(trace.stopped_by, StopReason::Steady);
    let (last, earlier) = trace.records.split_last().unwrap();
    assert!(last.du_rate <= cfg.stop_tol && last.dv_rate <= cfg.stop_tol);
    assert!(earlier
        .iter()
        .all(|r| r.du_rate > cfg.stop_tol || r.dv_rate > cfg.stop_tol));
}

#[test]
fn picard_and_newton_reach_the_same_discrete_solution() {
    let run = |method| {
        let mut cfg = small(MeshSpec::Square(16), SchemeKind::fractional_step(), 1.0);
        cfg.policy = NonlinearPolicy {
            mode: IterationMode::Adaptive {
                tol: 1e-11,
                max_iters: 100,
            },
            ..NonlinearPolicy::adaptive(method)
        };
        cfg.linear.rel_tol = 1e-12;
        run_simulation(&cfg).unwrap().1
    };
    let (p, n) = (run(NonlinearMethod::Picard), run(NonlinearMethod::Newton));
    let mass = assemble_mass(&MeshSpec::Square(16).build().unwrap());
    let du: Vec<f64> = p.u.iter().zip(&n.u).map(|(a, b)| a - b).collect();
    let dv: Vec<f64> = p.v.iter().zip(&n.v).map(|(a, b)| a - b).collect();
    let (eu, ev) = (mass_norm(&mass, &du), mass_norm(&mass, &dv));
    assert!(eu < 1e-8 && ev < 1e-8, "{eu:e} {ev:e}");
}

#[test]
fn warm_start_damps_crank_nicolson_oscillations() {
    let tau = 0.5;
    let n = eoc_mesh_size(1, MeshCoupling::Linear);
    let policy = NonlinearPolicy::adaptive(NonlinearMethod::Newton);
    for (cells, initial) in [
        (CellKind::Quadrilateral, InitialTransfer::L2Projection),
        (CellKind::Simplex, InitialTransfer::Interpolant),
    ] {
        let opts = EocOptions {
            record_history: true,
            cells,
            initial,
            ..EocOptions::default()
        };
        let peak = |kind| {
            let run = manufactured_run(kind, tau, n, &policy, &opts).unwrap();
            assert_eq!(run.history.len(), 20);
            run.history.iter().map(|h| h.1).fold(0.0, f64::max)
        };
        let cn = peak(SchemeKind::CrankNicolson);
        let cnb5 = peak(SchemeKind::CnWarmStart { warmup_steps: 5 });
        assert!(cnb5 < cn, "{cells:?}: CNB5 peak {cnb5} vs CN peak {cn}");
    }
}

#[test]
fn single_newton_matches_adaptive_end_time_on_a_coarse_grid_with_backward_euler() {
    let run = |policy| {
        let mut cfg = small(MeshSpec::Square(8), SchemeKind::BackwardEuler, 60.0);
        cfg.scheme.tau = 0.05;
        cfg.policy = policy;
        run_simulation(&cfg).unwrap().0
    };
    let adaptive = run(NonlinearPolicy::adaptive(NonlinearMethod::Newton));
    let single = run(NonlinearPolicy::single_newton());
    assert_eq!(adaptive.stopped_by, StopReason::Steady);
    assert_eq!(single.stopped_by, StopReason::Steady);
    assert!((adaptive.end_time - single.end_time).abs() <= 0.05 + 1e-9);
}
