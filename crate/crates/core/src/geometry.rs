//! Geometry of a conformal metric `g = e^u g₀` on the unit disk.
//!
//! The flat polar metric `g₀ = dr² + r² dθ²` has zero curvature, so every
//! geometric quantity is a formula in `u` and its derivatives:
//!
//! * scalar curvature `R = -e^{-u} Δ₀u`,
//! * geodesic curvature of `r = 1`: `κ = e^{-u/2}(1 + ½ ∂_r u)`,
//! * volume form `dv = e^u dv₀`, boundary arc length `ds = e^{u/2} dθ`.
//!
//! Boundary quantities are evaluated on `r = 1` from the last ring and the
//! ghost ring of `u`. With this choice the discrete Gauss–Bonnet identity
//! `∫R dv + 2∫κ ds = 4π` holds to rounding: the flux-form Laplacian telescopes
//! to the same face difference that enters `κ`, and the `e^{±u/2}` factors of
//! `κ` and `ds` cancel.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{BoundaryField, Closure, PolarFilter, PolarGrid, ScalarField, TensorField};
use crate::scalar::{kahan_sum, lit, Real};

/// Euler characteristic of the disk.
pub const EULER_CHARACTERISTIC: f64 = 1.0;

/// `g = e^u g₀` sampled on a polar grid, together with the ghost ring of `u`.
#[derive(Clone, Debug)]
pub struct ConformalMetric<T: Real> {
    grid: Arc<PolarGrid<T>>,
    u: ScalarField<T>,
    ghost: BoundaryField<T>,
}

impl<T: Real> ConformalMetric<T> {
    pub fn new(grid: Arc<PolarGrid<T>>, u: ScalarField<T>, ghost: BoundaryField<T>) -> Result<Self> {
        if u.values.len() != grid.len() || ghost.values.len() != grid.n_theta() {
            return Err(Error::Config("conformal factor does not match its grid".into()));
        }
        if !u.is_finite() || ghost.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("conformal factor must be finite".into()));
        }
        Ok(Self { grid, u, ghost })
    }

    /// Samples an analytic `u(r, θ)`, ghost ring included.
    pub fn from_fn(grid: Arc<PolarGrid<T>>, f: impl Fn(T, T) -> T) -> Result<Self> {
        let u = ScalarField::from_fn(&grid, &f);
        let rg = grid.ghost_radius();
        let ghost = BoundaryField::from_fn(&grid, |t| f(rg, t));
        Self::new(grid, u, ghost)
    }

    /// The flat disk, `u ≡ 0`.
    pub fn flat(grid: Arc<PolarGrid<T>>) -> Self {
        let u = ScalarField::zeros(&grid);
        let ghost = BoundaryField::zeros(&grid);
        Self { grid, u, ghost }
    }

    pub fn grid(&self) -> &PolarGrid<T> {
        &self.grid
    }
    pub fn shared_grid(&self) -> Arc<PolarGrid<T>> {
        Arc::clone(&self.grid)
    }
    pub fn u(&self) -> &ScalarField<T> {
        &self.u
    }
    pub fn ghost(&self) -> &BoundaryField<T> {
        &self.ghost
    }
    pub fn closure(&self) -> Closure<'_, T> {
        Closure::Ghost(&self.ghost)
    }

    /// Same interior, new ghost ring.
    pub fn with_ghost(&self, ghost: BoundaryField<T>) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            u: self.u.clone(),
            ghost,
        }
    }

    /// New interior values; ghost ring kept.
    pub fn with_u(&self, u: ScalarField<T>) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            u,
            ghost: self.ghost.clone(),
        }
    }

    /// `λ² g`, i.e. `u + 2 log λ`.
    pub fn scaled(&self, lambda: T) -> Self {
        let s = lit::<T>(2.0) * lambda.ln();
        Self {
            grid: Arc::clone(&self.grid),
            u: self.u.map(|v| v + s),
            ghost: self.ghost.map(|v| v + s),
        }
    }

    /// Conformal factor `e^u` at the nodes.
    pub fn conformal_factor(&self) -> ScalarField<T> {
        self.u.map(T::exp)
    }

    /// `u` on `r = 1`.
    pub fn boundary_u(&self) -> BoundaryField<T> {
        self.grid.boundary_value(&self.u, self.closure())
    }

    /// `∂_r u` on `r = 1`.
    pub fn boundary_du(&self) -> BoundaryField<T> {
        self.grid.boundary_radial_derivative(&self.u, self.closure())
    }

    /// `∫ φ dv` with `dv = e^u r dr dθ`.
    pub fn integrate_volume(&self, phi: &ScalarField<T>) -> T {
        let g = &self.grid;
        let n = g.n_theta();
        kahan_sum(
            phi.values
                .iter()
                .zip(&self.u.values)
                .enumerate()
                .map(|(k, (&p, &u))| p * u.exp() * g.ring_weight(k / n)),
        )
    }

    /// `∫ ψ ds` over `r = 1` with `ds = e^{u/2} dθ`.
    pub fn integrate_boundary(&self, psi: &BoundaryField<T>) -> T {
        let half = lit::<T>(0.5);
        let dt = self.grid.dtheta();
        let ub = self.boundary_u();
        kahan_sum(
            psi.values
                .iter()
                .zip(&ub.values)
                .map(|(&p, &u)| p * (half * u).exp() * dt),
        )
    }

    /// Area `v(M)`.
    pub fn volume(&self) -> T {
        let g = &self.grid;
        let n = g.n_theta();
        kahan_sum(
            self.u
                .values
                .iter()
                .enumerate()
                .map(|(k, &u)| u.exp() * g.ring_weight(k / n)),
        )
    }

    /// `R = -e^{-u} Δ₀u`.
    pub fn scalar_curvature(&self) -> ScalarField<T> {
        self.scalar_curvature_filtered(None)
    }

    /// Scalar curvature with the angular part of `Δ₀u` passed through a
    /// polar filter; identical to [`Self::scalar_curvature`] on untouched rings.
    pub fn scalar_curvature_filtered(&self, filter: Option<&PolarFilter<T>>) -> ScalarField<T> {
        let g = &self.grid;
        let lap = match filter {
            None => g.laplacian0(&self.u, self.closure()),
            Some(f) => {
                let radial = g.radial_laplacian0(&self.u, self.closure());
                let mut angular = g.angular_laplacian0(&self.u);
                f.apply(&mut angular);
                radial.zip_map(&angular, |a, b| a + b)
            }
        };
        lap.zip_map(&self.u, |l, u| -(-u).exp() * l)
    }

    /// Geodesic curvature of the boundary circle (equal to its mean curvature).
    pub fn geodesic_curvature(&self) -> BoundaryField<T> {
        let half = lit::<T>(0.5);
        let ub = self.boundary_u();
        let du = self.boundary_du();
        ub.zip_map(&du, |u, d| (-half * u).exp() * (T::one() + half * d))
    }

    /// Metric tensor `g = e^u (dr² + r² dθ²)` in coordinate components.
    pub fn metric_tensor(&self) -> TensorField<T> {
        let g = &self.grid;
        let n = g.n_theta();
        let r = g.radii();
        let eu = self.conformal_factor();
        TensorField {
            rr: eu.clone(),
            rt: ScalarField::zeros(g),
            tt: ScalarField {
                values: eu
                    .values
                    .iter()
                    .enumerate()
                    .map(|(k, &e)| e * r[k / n] * r[k / n])
                    .collect(),
            },
        }
    }

    /// Covariant Hessian `∂_i∂_j f − Γ^k_ij ∂_k f` of `e^u g₀`.
    pub fn hessian(&self, f: &ScalarField<T>, closure: Closure<'_, T>) -> TensorField<T> {
        let g = &self.grid;
        let n = g.n_theta();
        let r = g.radii();
        let half = lit::<T>(0.5);
        let df = g.derivatives(f, closure);
        let du = g.derivatives(&self.u, self.closure());
        let mut out = TensorField::zeros(g);
        for k in 0..g.len() {
            let ri = r[k / n];
            let (fr, ft) = (df.d_r.values[k], df.d_t.values[k]);
            let (ur, ut) = (du.d_r.values[k], du.d_t.values[k]);
            out.rr.values[k] = df.d_rr.values[k] - half * ur * fr + half * ut * ft / (ri * ri);
            out.rt.values[k] = df.d_rt.values[k] - half * ut * fr - (T::one() / ri + half * ur) * ft;
            out.tt.values[k] = df.d_tt.values[k] + (ri + half * ri * ri * ur) * fr - half * ut * ft;
        }
        out
    }

    /// `‖∇f‖²_g = e^{-u}(∂_r f² + r⁻² ∂_θ f²)`.
    pub fn metric_grad_norm_sq(&self, f: &ScalarField<T>, closure: Closure<'_, T>) -> ScalarField<T> {
        self.grad_inner(f, closure, f, closure)
    }

    /// `g(∇a, ∇b)`.
    pub fn grad_inner(
        &self,
        a: &ScalarField<T>,
        ca: Closure<'_, T>,
        b: &ScalarField<T>,
        cb: Closure<'_, T>,
    ) -> ScalarField<T> {
        let g = &self.grid;
        let (ar, at) = g.gradient0(a, ca);
        let (br, bt) = g.gradient0(b, cb);
        ScalarField {
            values: (0..g.len())
                .map(|k| (-self.u.values[k]).exp() * (ar.values[k] * br.values[k] + at.values[k] * bt.values[k]))
                .collect(),
        }
    }

    /// `‖T‖²_g = e^{-2u}(T_rr² + 2 r⁻² T_rθ² + r⁻⁴ T_θθ²)`.
    pub fn tensor_norm_sq(&self, t: &TensorField<T>) -> ScalarField<T> {
        let g = &self.grid;
        let n = g.n_theta();
        let r = g.radii();
        let two = lit::<T>(2.0);
        ScalarField {
            values: (0..g.len())
                .map(|k| {
                    let r2 = r[k / n] * r[k / n];
                    let (a, b, c) = (t.rr.values[k], t.rt.values[k], t.tt.values[k]);
                    (-two * self.u.values[k]).exp() * (a * a + two * b * b / r2 + c * c / (r2 * r2))
                })
                .collect(),
        }
    }

    /// `Δ_g f = e^{-u} Δ₀ f`.
    pub fn laplace_beltrami(&self, f: &ScalarField<T>, closure: Closure<'_, T>) -> ScalarField<T> {
        self.grid
            .laplacian0(f, closure)
            .zip_map(&self.u, |l, u| (-u).exp() * l)
    }

    /// `|∫R dv + 2∮κ ds − 4πχ|`.
    pub fn gauss_bonnet_residual(&self) -> T {
        let chi = lit::<T>(EULER_CHARACTERISTIC);
        let total_r = self.integrate_volume(&self.scalar_curvature());
        let total_k = self.integrate_boundary(&self.geodesic_curvature());
        (total_r + lit::<T>(2.0) * total_k - lit::<T>(2.0) * T::TAU() * chi).abs()
    }

    /// Outward normal derivative `f_ν = e^{-u/2} ∂_r f` on `r = 1`.
    pub fn normal_derivative(&self, f: &ScalarField<T>, closure: Closure<'_, T>) -> BoundaryField<T> {
        let half = lit::<T>(0.5);
        let d = self.grid.boundary_radial_derivative(f, closure);
        d.zip_map(&self.boundary_u(), |d, u| (-half * u).exp() * d)
    }

    /// `f|_{∂M}`.
    pub fn restrict(&self, f: &ScalarField<T>, closure: Closure<'_, T>) -> BoundaryField<T> {
        self.grid.boundary_value(f, closure)
    }

    /// Arc-length derivative `e^{-u/2} ∂_θ ψ` along the boundary.
    pub fn tangential_gradient(&self, psi: &BoundaryField<T>) -> BoundaryField<T> {
        let half = lit::<T>(0.5);
        self.grid
            .boundary_tangential_derivative(psi)
            .zip_map(&self.boundary_u(), |d, u| (-half * u).exp() * d)
    }

    /// `‖∇_{∂M} ψ‖²` in the induced metric.
    pub fn tangential_grad_norm_sq(&self, psi: &BoundaryField<T>) -> BoundaryField<T> {
        self.tangential_gradient(psi).map(|v| v * v)
    }

    /// Laplacian of the boundary curve, `d²ψ/ds²`.
    pub fn boundary_laplacian(&self, psi: &BoundaryField<T>) -> BoundaryField<T> {
        let half = lit::<T>(0.5);
        let a = self.boundary_u().map(|u| (half * u).exp());
        self.grid.boundary_weighted_laplacian(psi, &a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use std::f64::consts::PI;

    fn grid(n_r: usize, n_theta: usize) -> Arc<PolarGrid<f64>> {
        PolarGrid::shared(GridSpec::new(n_r, n_theta)).unwrap()
    }

    fn cap(g: Arc<PolarGrid<f64>>, c: f64) -> ConformalMetric<f64> {
        ConformalMetric::from_fn(g, move |r, _| 4.0f64.ln() - 2.0 * (1.0 + c * r * r).ln()).unwrap()
    }

    #[test]
    fn flat_disk_quantities() {
        let m = ConformalMetric::flat(grid(16, 16));
        assert!(m.scalar_curvature().max_abs() < 1e-14);
        for k in m.geodesic_curvature().values {
            assert!((k - 1.0).abs() < 1e-14);
        }
        let one = ScalarField::constant(m.grid(), 1.0);
        assert!((m.integrate_volume(&one) - PI).abs() < 1e-12);
        let k = m.geodesic_curvature();
        assert!((m.integrate_boundary(&k) - 2.0 * PI).abs() < 1e-12);
        assert!(m.gauss_bonnet_residual() < 1e-12);
    }

    #[test]
    fn hemisphere_quantities_converge() {
        let errs: Vec<(f64, f64, f64, f64)> = [32, 64]
            .iter()
            .map(|&n| {
                let m = cap(grid(n, 1), 1.0);
                let r = m.scalar_curvature();
                let er = r.map(|v| v - 2.0).max_abs();
                let ek = m.geodesic_curvature().max_abs();
                let ea = (m.volume() - 2.0 * PI).abs();
                let eint = (m.integrate_volume(&r) - 4.0 * PI).abs();
                (er, ek, ea, eint)
            })
            .collect();
        let (a, b) = (errs[0], errs[1]);
        assert!(a.0 < 1e-2 && (a.0 / b.0).log2() > 1.9, "{a:?} {b:?}");
        assert!(a.1 < 1e-3 && (a.1 / b.1).log2() > 1.9, "{a:?} {b:?}");
        assert!(a.2 < 1e-2 && (a.2 / b.2).log2() > 1.9, "{a:?} {b:?}");
        assert!(a.3 < 1e-2 && (a.3 / b.3).log2() > 1.9, "{a:?} {b:?}");
    }

    #[test]
    fn cap_curvature_and_convex_boundary() {
        let m = cap(grid(64, 1), 0.5);
        for v in m.scalar_curvature().values {
            assert!((v - 1.0).abs() < 1e-3);
        }
        // κ = (1 - c)/2; the cap is a latitude circle at polar angle θ₀, cos θ₀ = (1-c)/(1+c),
        // on the sphere of radius 1/√c, whose geodesic curvature is √c·cot θ₀.
        let expect = 0.25;
        let theta0 = (1.0f64 / 3.0).acos();
        assert!((expect - 0.5f64.sqrt() / theta0.tan()).abs() < 1e-12);
        for v in m.geodesic_curvature().values {
            assert!((v - expect).abs() < 1e-4, "{v} {expect}");
        }
    }

    #[test]
    fn conformal_scaling_is_exact() {
        let m = ConformalMetric::from_fn(grid(16, 16), |r, t| 0.3 * r * r * (2.0 * t).cos() - r * r).unwrap();
        let lambda = 1.7;
        let r1 = m.scalar_curvature();
        let r2 = m.scaled(lambda).scalar_curvature();
        for (a, b) in r1.values.iter().zip(&r2.values) {
            assert!((b - a / (lambda * lambda)).abs() < 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn gauss_bonnet_holds_to_rounding() {
        let m = ConformalMetric::from_fn(grid(24, 16), |r, t| {
            (2.0f64).ln() - 2.0 * (1.0 + 0.5 * r * r).ln() + 0.1 * r.powi(3) * (3.0 * t).sin()
        })
        .unwrap();
        assert!(m.gauss_bonnet_residual() < 1e-11);
    }

    #[test]
    fn hessian_examples() {
        let m = ConformalMetric::flat(grid(16, 16));
        let c = ScalarField::constant(m.grid(), 2.0);
        let h = m.hessian(&c, Closure::Mirror);
        assert!(h.rr.max_abs() + h.rt.max_abs() + h.tt.max_abs() < 1e-12);
        assert_eq!(m.tensor_norm_sq(&h).max_abs(), 0.0);

        let g = m.grid();
        let rg = g.ghost_radius();
        let f = ScalarField::from_fn(g, |r, _| r * r);
        let fg = BoundaryField::constant(g, rg * rg);
        let h = m.hessian(&f, Closure::Ghost(&fg));
        let gm = m.metric_tensor();
        for k in 0..g.len() {
            assert!((h.rr.values[k] - 2.0 * gm.rr.values[k]).abs() < 1e-10);
            assert!(h.rt.values[k].abs() < 1e-10);
            assert!((h.tt.values[k] - 2.0 * gm.tt.values[k]).abs() < 1e-10);
        }

        let hemi = cap(grid(16, 16), 1.0);
        let log_r = hemi.scalar_curvature().map(|_| 2.0f64.ln());
        let h = hemi.hessian(&log_r, Closure::Mirror);
        assert!(hemi.tensor_norm_sq(&h).max_abs() < 1e-20);
    }

    #[test]
    fn hessian_of_x_squared_on_hemisphere_is_second_order() {
        // Exact covariant Hessian of f = x² for g = e^u δ, in Cartesian frame:
        // ∂_i∂_j f − ½(∂_i u ∂_j f + ∂_j u ∂_i f − δ_ij ∇u·∇f); contracted norm via e^{-2u}.
        let err = |n: usize| {
            let m = cap(grid(n, n), 1.0);
            let g = m.grid();
            let rg = g.ghost_radius();
            let f = ScalarField::from_fn(g, |r, t| (r * t.cos()).powi(2));
            let fg = BoundaryField::from_fn(g, |t| (rg * t.cos()).powi(2));
            let num = m.tensor_norm_sq(&m.hessian(&f, Closure::Ghost(&fg)));
            let mut worst = 0.0f64;
            for i in 0..g.n_r() {
                for j in 0..g.n_theta() {
                    let (r, t) = (g.radii()[i], g.angles()[j]);
                    let (x, y) = (r * t.cos(), r * t.sin());
                    let du = -4.0 / (1.0 + r * r);
                    let (ux, uy) = (du * x, du * y);
                    let (fx, fy) = (2.0 * x, 0.0);
                    let dot = ux * fx + uy * fy;
                    let hxx = 2.0 - 0.5 * (2.0 * ux * fx - dot);
                    let hxy = -0.5 * (ux * fy + uy * fx);
                    let hyy = -0.5 * (2.0 * uy * fy - dot);
                    let u = 4.0f64.ln() - 2.0 * (1.0 + r * r).ln();
                    let exact = (-2.0 * u).exp() * (hxx * hxx + 2.0 * hxy * hxy + hyy * hyy);
                    worst = worst.max((num.at(g, i, j) - exact).abs());
                }
            }
            worst
        };
        let (e1, e2) = (err(32), err(64));
        assert!((e1 / e2).log2() > 1.8, "{e1} {e2}");
    }

    #[test]
    fn norms_of_metric_and_gradients() {
        let hemi = cap(grid(16, 16), 1.0);
        let gm = hemi.metric_tensor();
        for v in hemi.tensor_norm_sq(&gm).values {
            assert!((v - 2.0).abs() < 1e-12);
        }
        let r = hemi.scalar_curvature();
        let half_r = r.map(|v| 0.5 * v);
        let t = gm.combine(&half_r, &TensorField::zeros(hemi.grid()), &half_r);
        for v in hemi.tensor_norm_sq(&t).values {
            assert!((v - 2.0).abs() < 5e-2, "{v}");
        }

        let g = hemi.grid();
        let rg = g.ghost_radius();
        let x = ScalarField::from_fn(g, |r, t| r * t.cos());
        let xg = BoundaryField::from_fn(g, |t| rg * t.cos());
        let n = hemi.metric_grad_norm_sq(&x, Closure::Ghost(&xg));
        let eu = hemi.conformal_factor();
        for k in 0..g.len() {
            assert!((n.values[k] * eu.values[k] - 1.0).abs() < 0.1);
        }
        let flat = ConformalMetric::flat(grid(16, 16));
        let n = flat.metric_grad_norm_sq(&x, Closure::Ghost(&xg));
        for v in n.values {
            assert!((v - 1.0).abs() < 0.1);
        }
    }

    #[test]
    fn laplace_beltrami_examples() {
        let g = grid(16, 8);
        let rg = g.ghost_radius();
        let f = ScalarField::from_fn(&g, |r, _| r * r);
        let fg = BoundaryField::constant(&g, rg * rg);
        let flat = ConformalMetric::flat(Arc::clone(&g));
        for v in flat.laplace_beltrami(&f, Closure::Ghost(&fg)).values {
            assert!((v - 4.0).abs() < 1e-10);
        }
        let hemi = cap(Arc::clone(&g), 1.0);
        let lb = hemi.laplace_beltrami(&f, Closure::Ghost(&fg));
        for i in 0..16 {
            let r = g.radii()[i];
            let expect = (1.0 + r * r).powi(2) / 4.0 * 4.0;
            assert!((lb.at(&g, i, 3) - expect).abs() < 1e-10);
        }
        let c = ScalarField::constant(&g, 1.0);
        assert!(hemi.laplace_beltrami(&c, Closure::Mirror).max_abs() < 1e-12);
    }
}
