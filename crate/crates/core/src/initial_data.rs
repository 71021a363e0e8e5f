//! Admissible initial metrics.
//!
//! The cap family `u = log 4 − 2 log(1 + c r²)` is the round sphere of
//! curvature `R = 2c` restricted to a disk; `c = 1` is the hemisphere and
//! `c < 1` has a convex boundary. Perturbations `ε r^m (1 − r²)² cos mθ` are
//! made compatible with `R_ν = 0` by a small correction on the last four
//! rings.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::ConformalMetric;
use crate::grid::{PolarGrid, ScalarField};
use crate::scalar::{lit, Real};

/// Rings carrying the compatibility correction.
pub const PROJECTION_RINGS: usize = 4;
const MAX_PROJECTION_ITERATIONS: usize = 20;
const BISECTION_STEPS: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CapParams {
    pub c: f64,
}

impl CapParams {
    pub fn new(c: f64) -> Result<Self> {
        if c > 0.0 && c.is_finite() {
            Ok(Self { c })
        } else {
            Err(Error::Config(format!("cap parameter must be positive, got {c}")))
        }
    }

    pub fn curvature(&self) -> f64 {
        2.0 * self.c
    }

    /// Geodesic curvature of the boundary circle.
    pub fn kappa(&self) -> f64 {
        0.5 * (1.0 - self.c)
    }

    pub fn volume(&self) -> f64 {
        4.0 * std::f64::consts::PI / (1.0 + self.c)
    }

    /// Flow time at which the cap collapses.
    pub fn extinction_time(&self) -> f64 {
        1.0 / (2.0 * self.c)
    }

    /// `u(r)` of the cap.
    pub fn conformal_factor(&self, r: f64) -> f64 {
        4.0f64.ln() - 2.0 * (1.0 + self.c * r * r).ln()
    }

    /// Parameter of the cap reached at flow time `t`, as a metric multiple
    /// `(1 − 2ct)` of the initial cap.
    pub fn scale_at(&self, t: f64) -> f64 {
        1.0 - 2.0 * self.c * t
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RadialProfile {
    /// `η(r) = r^m (1 − r²)²`.
    #[default]
    Poly4,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbationParams {
    pub epsilon: f64,
    pub mode: usize,
    pub radial_profile: RadialProfile,
}

impl PerturbationParams {
    pub fn new(epsilon: f64, mode: usize) -> Self {
        Self {
            epsilon,
            mode,
            radial_profile: RadialProfile::Poly4,
        }
    }

    pub fn profile(&self, r: f64) -> f64 {
        match self.radial_profile {
            RadialProfile::Poly4 => r.powi(self.mode as i32) * (1.0 - r * r).powi(2),
        }
    }
}

/// Result of [`project_compatibility`].
#[derive(Clone, Debug)]
pub struct Projection<T: Real> {
    pub metric: ConformalMetric<T>,
    /// Largest nodal change of `u`.
    pub correction_norm: T,
    pub iterations: usize,
}

/// The cap of parameter `c`, ghost ring sampled from the closed form.
pub fn spherical_cap<T: Real>(grid: Arc<PolarGrid<T>>, p: CapParams) -> Result<ConformalMetric<T>> {
    CapParams::new(p.c)?;
    ConformalMetric::from_fn(grid, move |r, _| lit::<T>(p.conformal_factor(r.to_f64().unwrap_or(f64::NAN))))
}

/// Raw perturbed cap before projection.
pub fn raw_perturbed_cap<T: Real>(
    grid: Arc<PolarGrid<T>>,
    base: CapParams,
    p: PerturbationParams,
) -> Result<ConformalMetric<T>> {
    CapParams::new(base.c)?;
    ConformalMetric::from_fn(grid, move |r, t| {
        let (r, t) = (r.to_f64().unwrap_or(f64::NAN), t.to_f64().unwrap_or(f64::NAN));
        lit::<T>(base.conformal_factor(r) + p.epsilon * p.profile(r) * (p.mode as f64 * t).cos())
    })
}

/// Perturbed cap, projected onto the compatible set.
///
/// Fails with [`Error::Amplitude`] when the projected metric does not have
/// positive curvature; the error carries the largest admissible `|ε|`
/// found by bisection.
pub fn perturbed_cap<T: Real>(
    grid: Arc<PolarGrid<T>>,
    base: CapParams,
    p: PerturbationParams,
) -> Result<ConformalMetric<T>> {
    match admissible(&grid, base, p) {
        Ok(m) => Ok(m),
        Err(Error::Positivity { .. }) => {
            let (mut lo, mut hi) = (0.0, p.epsilon.abs());
            for _ in 0..BISECTION_STEPS {
                let mid = 0.5 * (lo + hi);
                let trial = PerturbationParams {
                    epsilon: mid * p.epsilon.signum(),
                    ..p
                };
                if admissible(&grid, base, trial).is_ok() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Err(Error::Amplitude {
                epsilon: p.epsilon,
                max_admissible: lo,
            })
        }
        Err(e) => Err(e),
    }
}

fn admissible<T: Real>(grid: &Arc<PolarGrid<T>>, base: CapParams, p: PerturbationParams) -> Result<ConformalMetric<T>> {
    let raw = raw_perturbed_cap(Arc::clone(grid), base, p)?;
    let m = if p.epsilon == 0.0 {
        raw
    } else {
        project_compatibility(&raw)?.metric
    };
    let min_r = m.scalar_curvature().min();
    if min_r > T::zero() {
        Ok(m)
    } else {
        Err(Error::Positivity {
            t: 0.0,
            min_r: min_r.to_f64().unwrap_or(f64::NAN),
        })
    }
}

/// One-sided `∂_r R` on the boundary for every angular node.
fn boundary_flux<T: Real>(m: &ConformalMetric<T>) -> Vec<T> {
    let r = m.scalar_curvature();
    m.grid().radial_derivative_at_boundary(&r).values
}

/// `max_θ |∂_r R(1, θ)|`.
pub fn compatibility_residual<T: Real>(m: &ConformalMetric<T>) -> T {
    boundary_flux(m).into_iter().fold(T::zero(), |a, v| a.max(v.abs()))
}

fn projection_tolerance<T: Real>(m: &ConformalMetric<T>) -> f64 {
    let floor = T::epsilon().to_f64().unwrap_or(0.0) * 1e3 / m.grid().dr().to_f64().unwrap_or(1.0);
    let scale = 1.0 + m.scalar_curvature().max_abs().to_f64().unwrap_or(0.0);
    1e-8f64.max(floor) * scale
}

/// Minimal-norm change of `u` on the outer rings (ghost fixed) that makes the
/// one-sided `∂_r R` vanish on the boundary.
pub fn project_compatibility<T: Real>(m: &ConformalMetric<T>) -> Result<Projection<T>> {
    let g = m.grid();
    let n_r = g.n_r();
    let n = g.n_theta();
    let first = n_r - PROJECTION_RINGS;
    let unknowns: Vec<usize> = (first..n_r).flat_map(|i| (0..n).map(move |j| g.idx(i, j))).collect();
    let tol = projection_tolerance(m);
    let to_f64 = |v: T| v.to_f64().unwrap_or(f64::NAN);

    let mut metric = m.clone();
    for it in 0..=MAX_PROJECTION_ITERATIONS {
        let f = DVector::from_iterator(n, boundary_flux(&metric).into_iter().map(to_f64));
        let worst = f.amax();
        if worst <= tol {
            let correction_norm = metric
                .u()
                .zip_map(m.u(), |a, b| a - b)
                .max_abs();
            return Ok(Projection {
                metric,
                correction_norm,
                iterations: it,
            });
        }
        if it == MAX_PROJECTION_ITERATIONS || !worst.is_finite() {
            return Err(Error::Compatibility {
                message: format!("projection did not converge in {it} iterations"),
                residual: worst,
            });
        }
        let jac = jacobian(&metric, &unknowns);
        let normal = &jac * jac.transpose();
        let Some(chol) = normal.cholesky() else {
            return Err(Error::Compatibility {
                message: "projection normal equations are singular".into(),
                residual: worst,
            });
        };
        let lambda = chol.solve(&(-&f));
        let delta = jac.transpose() * lambda;
        let mut u = metric.u().clone();
        for (k, &idx) in unknowns.iter().enumerate() {
            u.values[idx] = u.values[idx] + lit::<T>(delta[k]);
        }
        metric = metric.with_u(u);
    }
    unreachable!("loop returns on its last iteration")
}

/// Central-difference Jacobian of the boundary flux with respect to `unknowns`.
fn jacobian<T: Real>(m: &ConformalMetric<T>, unknowns: &[usize]) -> DMatrix<f64> {
    let n = m.grid().n_theta();
    let step = T::epsilon().to_f64().unwrap_or(1e-16).cbrt();
    let mut jac = DMatrix::zeros(n, unknowns.len());
    let mut u: ScalarField<T> = m.u().clone();
    for (col, &idx) in unknowns.iter().enumerate() {
        let orig = u.values[idx];
        u.values[idx] = orig + lit::<T>(step);
        let plus = boundary_flux(&m.with_u(u.clone()));
        u.values[idx] = orig - lit::<T>(step);
        let minus = boundary_flux(&m.with_u(u.clone()));
        u.values[idx] = orig;
        for row in 0..n {
            jac[(row, col)] = (plus[row] - minus[row]).to_f64().unwrap_or(f64::NAN) / (2.0 * step);
        }
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn grid(n_r: usize, n_theta: usize) -> Arc<PolarGrid<f64>> {
        PolarGrid::shared(GridSpec::new(n_r, n_theta)).unwrap()
    }

    #[test]
    fn cap_closed_forms() {
        let p = CapParams::new(0.5).unwrap();
        assert_eq!(p.curvature(), 1.0);
        assert_eq!(p.kappa(), 0.25);
        let m = spherical_cap(grid(64, 8), p).unwrap();
        assert!((m.volume() - p.volume()).abs() < 1e-3);
        assert!((m.scalar_curvature().max() - 1.0).abs() < 1e-3);
        assert!((m.geodesic_curvature().min() - 0.25).abs() < 1e-3);
        assert!(CapParams::new(0.0).is_err());
    }

    #[test]
    fn zero_amplitude_is_the_cap() {
        let g = grid(16, 8);
        let a = perturbed_cap(Arc::clone(&g), CapParams { c: 0.5 }, PerturbationParams::new(0.0, 2)).unwrap();
        let b = spherical_cap(g, CapParams { c: 0.5 }).unwrap();
        assert_eq!(a.u().values, b.u().values);
    }

    #[test]
    fn projection_zeroes_flux_near_boundary_only() {
        let g = grid(32, 16);
        let raw = raw_perturbed_cap(Arc::clone(&g), CapParams { c: 0.5 }, PerturbationParams::new(0.05, 2)).unwrap();
        let before = compatibility_residual(&raw);
        let proj = project_compatibility(&raw).unwrap();
        assert!(before > 1e-4);
        assert!(compatibility_residual(&proj.metric) < 1e-8);
        assert!(proj.correction_norm > 0.0);
        for i in 0..g.n_r() - PROJECTION_RINGS {
            for j in 0..g.n_theta() {
                assert_eq!(proj.metric.u().at(&g, i, j), raw.u().at(&g, i, j));
            }
        }
        let again = project_compatibility(&proj.metric).unwrap();
        assert_eq!(again.iterations, 0);
    }

    #[test]
    fn flat_disk_needs_no_projection() {
        let m = ConformalMetric::flat(grid(16, 8));
        let p = project_compatibility(&m).unwrap();
        assert_eq!(p.correction_norm, 0.0);
    }

    #[test]
    fn artificial_metric_is_incompatible() {
        let m = ConformalMetric::from_fn(grid(32, 1), |r: f64, _| r * r).unwrap();
        assert!(compatibility_residual(&m) > 1.0);
    }

    #[test]
    fn large_amplitude_reports_admissible_bound() {
        let err = perturbed_cap(grid(16, 8), CapParams { c: 0.5 }, PerturbationParams::new(50.0, 2)).unwrap_err();
        match err {
            Error::Amplitude { epsilon, max_admissible } => {
                assert_eq!(epsilon, 50.0);
                assert!(max_admissible > 0.0 && max_admissible < 50.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
