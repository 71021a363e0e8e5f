use proptest::prelude::*;
use ricci_disk::cli::ExperimentConfig;
use ricci_disk::verify::{centered_first_difference, centered_second_difference, IdentityReport};
use ricci_disk::{ConformalMetric, GridSpec, PolarGrid};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gauss_bonnet_holds_for_smooth_conformal_factors(a in -0.5f64..0.5, b in -0.3f64..0.3, k in 0usize..4) {
        let grid = PolarGrid::<f64>::shared(GridSpec::new(16, 16)).unwrap();
        let m = ConformalMetric::from_fn(grid, move |r: f64, t: f64| a * r * r + b * r.powi(k as i32) * (k as f64 * t).cos()).unwrap();
        prop_assert!(m.gauss_bonnet_residual() < 1e-10);
    }

    #[test]
    fn differences_are_exact_on_quadratics(t0 in -1.0f64..1.0, h0 in 0.01f64..0.5, h1 in 0.01f64..0.5, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let t = [t0, t0 + h0, t0 + h0 + h1];
        let y = t.map(|s| a * s * s + b * s + 1.0);
        prop_assert!((centered_first_difference(t, y) - (2.0 * a * t[1] + b)).abs() < 1e-9);
        prop_assert!((centered_second_difference(t, y) - 2.0 * a).abs() < 1e-7);
    }

    #[test]
    fn report_pass_matches_tolerance(lhs in -1e3f64..1e3, rhs in -1e3f64..1e3, n_r in 8usize..200) {
        let r = IdentityReport::new("p", lhs, rhs, GridSpec::new(n_r, 1), 1e-3);
        prop_assert_eq!(r.abs_err, (lhs - rhs).abs());
        prop_assert_eq!(r.pass, r.abs_err <= r.tol);
    }

    #[test]
    fn config_grid_validation_agrees_with_spec(n_r in 0usize..40, n_theta in 0usize..40) {
        let text = format!(
            "grid.n_r = {n_r}\ngrid.n_theta = {n_theta}\ninitial.cap_c = 0.5\ninitial.eps = 0\ninitial.mode = 0\n\
             schedule.t_end = 0.1\nschedule.cfl_safety = 0.5\nschedule.record_every = 10\nw.horizon = 2\n"
        );
        let spec = GridSpec::new(n_r, n_theta);
        prop_assert_eq!(ExperimentConfig::parse(&text).is_ok(), spec.validate().is_ok());
    }
}
