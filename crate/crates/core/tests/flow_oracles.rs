use std::sync::Arc;

use ricci_disk::entropy::{self, WParams};
use ricci_disk::flow::{FlowSchedule, Integrator, Termination};
use ricci_disk::initial_data::{self, CapParams, PerturbationParams};
use ricci_disk::verify::{self, FlowSetup};
use ricci_disk::{Error, GridSpec, PolarGrid};

fn setup(c: f64, eps: f64, mode: usize, t_end: f64, every: usize, horizon: f64) -> FlowSetup {
    FlowSetup {
        cap: CapParams { c },
        perturbation: PerturbationParams::new(eps, mode),
        schedule: FlowSchedule::new(t_end, 0.5, every),
        w_horizon: horizon,
        at: None,
        normalize_volume: false,
    }
}

#[test]
fn cap_shrinks_homothetically() {
    let c = 1.0;
    let grid = PolarGrid::<f64>::shared(GridSpec::new(64, 1)).unwrap();
    let m0 = initial_data::spherical_cap(Arc::clone(&grid), CapParams { c }).unwrap();
    let traj = Integrator::new(grid).run(&m0, FlowSchedule::new(0.2, 0.5, 100), 0.5).unwrap();
    let last = traj.snapshots.last().unwrap();
    let shift = (1.0 - 2.0 * c * last.t).ln();
    let worst = last
        .metric
        .u()
        .values
        .iter()
        .zip(&m0.u().values)
        .map(|(u, u0)| (u - u0 - shift).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-3, "max |u(t) - u(0) - log(1 - 2ct)| = {worst}");
}

#[test]
fn convex_cap_w_grows_through_the_boundary_term() {
    let c = 0.5;
    let traj = setup(c, 0.0, 0, 0.1, 20, 1.0 / (2.0 * c)).run::<f64>(GridSpec::new(32, 1)).unwrap();
    for r in &traj.records {
        let expected = 2.0 * r.total_kappa / r.tau;
        assert!(r.dw_dt_rhs > 0.0);
        assert!((r.dw_dt_rhs - expected).abs() < 1e-3 * expected, "t = {}", r.t);
    }
    assert!(verify::check_theorem_guo(&traj, None).unwrap().pass);
}

#[test]
fn nonconvex_cap_keeps_the_identities_but_not_monotonicity() {
    let traj = setup(1.5, 0.03, 2, 0.03, 10, 0.3).run::<f64>(GridSpec::new(32, 32)).unwrap();
    assert_eq!(traj.termination, Termination::Completed);
    assert!(traj.records[0].kappa_max < 0.0);
    let h = verify::check_theorem_hamilton(&traj, None).unwrap();
    let w = verify::check_theorem_guo(&traj, None).unwrap();
    assert!(h.pass && w.pass, "{h:?} {w:?}");
    assert!(matches!(verify::check_monotonicity(&traj), Err(Error::Usage(_))));
}

#[test]
fn single_precision_flow_tracks_the_hemisphere() {
    let grid = PolarGrid::<f32>::shared(GridSpec::new(64, 1)).unwrap();
    let m = initial_data::spherical_cap(Arc::clone(&grid), CapParams { c: 1.0 }).unwrap();
    let traj = Integrator::new(grid).run(&m, FlowSchedule::new(0.1, 0.5, 50), 0.5f32).unwrap();
    for r in &traj.records {
        let exact = 2.0 / (1.0 - 2.0 * r.t);
        assert!(((r.r_bar - exact) / exact).abs() < 1e-3, "t = {}: {}", r.t, r.r_bar);
        assert!(r.e_partial.abs() < 1e-3);
    }
}

#[test]
fn symmetric_path_matches_full_grid_on_radial_data() {
    let cap = CapParams { c: 0.6 };
    let p = PerturbationParams::new(0.04, 0);
    let wp = WParams { w_horizon: 2.0 };
    let rec = |n_theta: usize| {
        let grid = PolarGrid::<f64>::shared(GridSpec::new(32, n_theta)).unwrap();
        let m = initial_data::perturbed_cap(grid, cap, p).unwrap();
        entropy::record(&m, wp, 0.0).unwrap()
    };
    let (a, b) = (rec(1), rec(64));
    for (x, y) in [
        (a.v_m, b.v_m),
        (a.e_partial, b.e_partial),
        (a.w_partial, b.w_partial),
        (a.de_dt_rhs, b.de_dt_rhs),
        (a.kappa_min, b.kappa_min),
    ] {
        assert!((x - y).abs() < 1e-8 * (1.0 + x.abs()), "{x} vs {y}");
    }
}

#[test]
fn perturbed_caps_satisfy_gauss_bonnet_and_compatibility() {
    let grid = PolarGrid::<f64>::shared(GridSpec::new(128, 32)).unwrap();
    for (c, m, eps) in [(0.5, 2, 0.05), (0.8, 3, -0.03), (1.2, 1, 0.02)] {
        let metric = initial_data::perturbed_cap(Arc::clone(&grid), CapParams { c }, PerturbationParams::new(eps, m)).unwrap();
        assert!(metric.gauss_bonnet_residual() < 1e-3);
        assert!(initial_data::compatibility_residual(&metric) < 1e-6);
        assert!(metric.scalar_curvature().min() > 0.0);
        assert!(entropy::hamilton_entropy(&metric).unwrap() > 0.0);
    }
}
