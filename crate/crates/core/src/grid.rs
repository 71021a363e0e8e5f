//! Polar grid over the unit disk and flat-metric finite-difference operators.
//!
//! Radial nodes are cell centred, `r_i = (i + 1/2) Δr`, so no node sits on the
//! pole. Angular nodes are periodic, `θ_j = j Δθ`. Fields are stored ring-major
//! (`index = i * n_theta + j`).
//!
//! Stencils that reach past the last ring read a ghost ring at `r = 1 + Δr/2`
//! whose values come from a [`Closure`]. Stencils that reach inside the first
//! ring read the diametrically opposite node, which is the smooth continuation
//! `φ(-r, θ) = φ(r, θ + π)` of a field on the disk. This is why `n_theta` must
//! be even.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::{count, kahan_sum, lit, Real};

/// Grid resolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub struct GridSpec {
    /// Radial cells.
    pub n_r: usize,
    /// Angular nodes; 1 selects the rotationally symmetric path.
    pub n_theta: usize,
}

impl GridSpec {
    pub fn new(n_r: usize, n_theta: usize) -> Self {
        Self { n_r, n_theta }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_r < 8 {
            return Err(Error::Config(format!(
                "grid.n_r must be at least 8 (got {})",
                self.n_r
            )));
        }
        if self.n_theta != 1 && (self.n_theta < 8 || self.n_theta % 2 != 0) {
            return Err(Error::Config(format!(
                "grid.n_theta must be 1 or an even number >= 8 (got {})",
                self.n_theta
            )));
        }
        Ok(())
    }

    /// Radial spacing.
    pub fn h(&self) -> f64 {
        1.0 / self.n_r as f64
    }

    /// Mesh width `sqrt(Δr² + Δθ²)`, the boundary arc spacing included;
    /// equals `Δr` on the symmetric path.
    pub fn mesh_width(&self) -> f64 {
        let h = self.h();
        if self.n_theta == 1 {
            h
        } else {
            let dt = std::f64::consts::TAU / self.n_theta as f64;
            (h * h + dt * dt).sqrt()
        }
    }

    /// The same grid with both spacings halved.
    pub fn refined(&self) -> Self {
        Self {
            n_r: 2 * self.n_r,
            n_theta: if self.n_theta == 1 { 1 } else { 2 * self.n_theta },
        }
    }
}

/// Discretisation of the unit disk.
#[derive(Clone, Debug)]
pub struct PolarGrid<T> {
    spec: GridSpec,
    dr: T,
    dtheta: T,
    r: Vec<T>,
    /// Radii of the cell faces, `r_face[i] = i Δr`, `i = 0..=n_r`.
    r_face: Vec<T>,
    theta: Vec<T>,
    /// Flat area weight `r_i Δr Δθ` of one node on ring `i`.
    ring_weight: Vec<T>,
}

impl<T: Real> PolarGrid<T> {
    /// Builds the grid; rejects specs violating the resolution invariants.
    pub fn new(spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        let dr = T::one() / count::<T>(spec.n_r);
        let dtheta = T::TAU() / count::<T>(spec.n_theta);
        let half = lit::<T>(0.5);
        let r: Vec<T> = (0..spec.n_r).map(|i| (count::<T>(i) + half) * dr).collect();
        let r_face = (0..=spec.n_r).map(|i| count::<T>(i) * dr).collect();
        let theta = (0..spec.n_theta).map(|j| count::<T>(j) * dtheta).collect();
        let ring_weight = r.iter().map(|&ri| ri * dr * dtheta).collect();
        Ok(Self {
            spec,
            dr,
            dtheta,
            r,
            r_face,
            theta,
            ring_weight,
        })
    }

    pub fn shared(spec: GridSpec) -> Result<Arc<Self>> {
        Self::new(spec).map(Arc::new)
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }
    pub fn n_r(&self) -> usize {
        self.spec.n_r
    }
    pub fn n_theta(&self) -> usize {
        self.spec.n_theta
    }
    pub fn len(&self) -> usize {
        self.spec.n_r * self.spec.n_theta
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn dr(&self) -> T {
        self.dr
    }
    pub fn dtheta(&self) -> T {
        self.dtheta
    }
    pub fn radii(&self) -> &[T] {
        &self.r
    }
    pub fn angles(&self) -> &[T] {
        &self.theta
    }
    /// Radius of the ghost ring.
    pub fn ghost_radius(&self) -> T {
        T::one() + lit::<T>(0.5) * self.dr
    }
    pub fn symmetric(&self) -> bool {
        self.spec.n_theta == 1
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.spec.n_theta + j
    }

    #[inline]
    fn jp(&self, j: usize) -> usize {
        (j + 1) % self.spec.n_theta
    }

    #[inline]
    fn jm(&self, j: usize) -> usize {
        (j + self.spec.n_theta - 1) % self.spec.n_theta
    }

    #[inline]
    fn opposite(&self, j: usize) -> usize {
        (j + self.spec.n_theta / 2) % self.spec.n_theta
    }

    /// Flat quadrature weights `r dr dθ`, one per node.
    pub fn volume_weights(&self) -> ScalarField<T> {
        ScalarField::from_ring_fn(self, |i, _| self.ring_weight[i])
    }

    /// Flat weight of a node on ring `i`.
    #[inline]
    pub fn ring_weight(&self, i: usize) -> T {
        self.ring_weight[i]
    }

    /// Arc weights `Δθ` on the unit circle.
    pub fn boundary_weights(&self) -> BoundaryField<T> {
        BoundaryField::constant(self, self.dtheta)
    }

    /// `∫ φ dv₀` over the flat disk.
    pub fn integrate_flat(&self, phi: &ScalarField<T>) -> T {
        let n = self.n_theta();
        kahan_sum(
            phi.values
                .iter()
                .enumerate()
                .map(|(k, &v)| v * self.ring_weight[k / n]),
        )
    }

    /// `∮ ψ dθ` over the flat unit circle.
    pub fn integrate_flat_boundary(&self, psi: &BoundaryField<T>) -> T {
        kahan_sum(psi.values.iter().map(|&v| v * self.dtheta))
    }

    /// Ghost ring values for `phi` under `closure`.
    pub fn ghost(&self, phi: &ScalarField<T>, closure: Closure<'_, T>) -> BoundaryField<T> {
        let n = self.n_r();
        let values = (0..self.n_theta())
            .map(|j| match closure {
                Closure::Ghost(g) => g.values[j],
                Closure::Mirror => phi.at(self, n - 1, j),
                Closure::Extrapolate => {
                    let a = phi.at(self, n - 1, j);
                    let b = phi.at(self, n - 2, j);
                    let c = phi.at(self, n - 3, j);
                    lit::<T>(3.0) * (a - b) + c
                }
            })
            .collect();
        BoundaryField { values }
    }

    fn extend<'a>(&'a self, phi: &'a ScalarField<T>, closure: Closure<'_, T>) -> Extended<'a, T> {
        Extended {
            grid: self,
            phi,
            ghost: self.ghost(phi, closure),
        }
    }

    /// Flat Laplacian `Δ₀ = ∂_rr + r⁻¹∂_r + r⁻²∂_θθ` in flux form.
    pub fn laplacian0(&self, phi: &ScalarField<T>, closure: Closure<'_, T>) -> ScalarField<T> {
        let e = self.extend(phi, closure);
        let mut out = ScalarField::zeros(self);
        for i in 0..self.n_r() {
            for j in 0..self.n_theta() {
                out.values[self.idx(i, j)] = e.radial_part(i, j) + e.angular_part(i, j);
            }
        }
        out
    }

    /// Radial part `r⁻¹ ∂_r(r ∂_r φ)` of the flat Laplacian.
    pub fn radial_laplacian0(&self, phi: &ScalarField<T>, closure: Closure<'_, T>) -> ScalarField<T> {
        let e = self.extend(phi, closure);
        ScalarField::from_ij(self, |i, j| e.radial_part(i, j))
    }

    /// Angular part `r⁻² ∂_θθ φ` of the flat Laplacian (needs no closure).
    pub fn angular_laplacian0(&self, phi: &ScalarField<T>) -> ScalarField<T> {
        let e = self.extend(phi, Closure::Mirror);
        ScalarField::from_ij(self, |i, j| e.angular_part(i, j))
    }

    /// Flat gradient in the orthonormal polar frame: `(∂_r φ, r⁻¹ ∂_θ φ)`.
    pub fn gradient0(
        &self,
        phi: &ScalarField<T>,
        closure: Closure<'_, T>,
    ) -> (ScalarField<T>, ScalarField<T>) {
        let d = self.derivatives(phi, closure);
        let r = &self.r;
        let n = self.n_theta();
        let theta_part = ScalarField {
            values: d
                .d_t
                .values
                .iter()
                .enumerate()
                .map(|(k, &v)| v / r[k / n])
                .collect(),
        };
        (d.d_r, theta_part)
    }

    /// Coordinate partial derivatives up to second order, centred.
    pub fn derivatives(&self, phi: &ScalarField<T>, closure: Closure<'_, T>) -> Derivatives<T> {
        let e = self.extend(phi, closure);
        let two = lit::<T>(2.0);
        let h = self.dr;
        let dt = self.dtheta;
        let mut d = Derivatives {
            d_r: ScalarField::zeros(self),
            d_t: ScalarField::zeros(self),
            d_rr: ScalarField::zeros(self),
            d_rt: ScalarField::zeros(self),
            d_tt: ScalarField::zeros(self),
        };
        let sym = self.symmetric();
        for i in 0..self.n_r() {
            let ii = i as isize;
            for j in 0..self.n_theta() {
                let k = self.idx(i, j);
                let c = e.get(ii, j);
                let up = e.get(ii + 1, j);
                let dn = e.get(ii - 1, j);
                d.d_r.values[k] = (up - dn) / (two * h);
                d.d_rr.values[k] = (up - two * c + dn) / (h * h);
                if !sym {
                    let (jp, jm) = (self.jp(j), self.jm(j));
                    d.d_t.values[k] = (e.get(ii, jp) - e.get(ii, jm)) / (two * dt);
                    d.d_tt.values[k] = (e.get(ii, jp) - two * c + e.get(ii, jm)) / (dt * dt);
                    let t_up = (e.get(ii + 1, jp) - e.get(ii + 1, jm)) / (two * dt);
                    let t_dn = (e.get(ii - 1, jp) - e.get(ii - 1, jm)) / (two * dt);
                    d.d_rt.values[k] = (t_up - t_dn) / (two * h);
                }
            }
        }
        d
    }

    /// Value on `r = 1`: average of the last ring and its ghost.
    pub fn boundary_value(&self, phi: &ScalarField<T>, closure: Closure<'_, T>) -> BoundaryField<T> {
        let g = self.ghost(phi, closure);
        let n = self.n_r();
        let half = lit::<T>(0.5);
        BoundaryField {
            values: (0..self.n_theta())
                .map(|j| half * (g.values[j] + phi.at(self, n - 1, j)))
                .collect(),
        }
    }

    /// `∂_r φ` on `r = 1` from the ghost difference.
    pub fn boundary_radial_derivative(
        &self,
        phi: &ScalarField<T>,
        closure: Closure<'_, T>,
    ) -> BoundaryField<T> {
        let g = self.ghost(phi, closure);
        let n = self.n_r();
        BoundaryField {
            values: (0..self.n_theta())
                .map(|j| (g.values[j] - phi.at(self, n - 1, j)) / self.dr)
                .collect(),
        }
    }

    /// One-sided second-order `∂_r φ` at `r = 1` from the last three rings.
    pub fn radial_derivative_at_boundary(&self, phi: &ScalarField<T>) -> BoundaryField<T> {
        self.boundary_radial_derivative(phi, Closure::Extrapolate)
    }

    /// One-sided third-order `∂_r φ` at `r = 1` from the last four rings.
    pub fn radial_derivative_at_boundary_cubic(&self, phi: &ScalarField<T>) -> BoundaryField<T> {
        let n = self.n_r();
        let w = [71.0, -141.0, 93.0, -23.0].map(|c| lit::<T>(c / 24.0));
        BoundaryField {
            values: (0..self.n_theta())
                .map(|j| (0..4).fold(T::zero(), |acc, k| acc + w[k] * phi.at(self, n - 1 - k, j)) / self.dr)
                .collect(),
        }
    }

    /// One-sided second-order `∂_r φ` at `r = 1` from rings `n_r-2 .. n_r-4`,
    /// for fields whose last ring is unreliable.
    pub fn radial_derivative_at_boundary_skip_last(&self, phi: &ScalarField<T>) -> BoundaryField<T> {
        let n = self.n_r();
        let (c1, c2, c3) = (lit::<T>(3.0), lit::<T>(-5.0), lit::<T>(2.0));
        BoundaryField {
            values: (0..self.n_theta())
                .map(|j| {
                    (c1 * phi.at(self, n - 2, j) + c2 * phi.at(self, n - 3, j) + c3 * phi.at(self, n - 4, j))
                        / self.dr
                })
                .collect(),
        }
    }

    /// Quadratic extrapolation to `r = 1` from rings `n_r-2 .. n_r-4`.
    pub fn boundary_value_skip_last(&self, phi: &ScalarField<T>) -> BoundaryField<T> {
        let n = self.n_r();
        let (c1, c2, c3) = (lit::<T>(35.0 / 8.0), lit::<T>(-21.0 / 4.0), lit::<T>(15.0 / 8.0));
        BoundaryField {
            values: (0..self.n_theta())
                .map(|j| c1 * phi.at(self, n - 2, j) + c2 * phi.at(self, n - 3, j) + c3 * phi.at(self, n - 4, j))
                .collect(),
        }
    }

    /// Centred periodic `∂_θ ψ` on the boundary circle (zero when `n_theta = 1`).
    pub fn boundary_tangential_derivative(&self, psi: &BoundaryField<T>) -> BoundaryField<T> {
        if self.symmetric() {
            return BoundaryField::zeros(self);
        }
        let two = lit::<T>(2.0);
        BoundaryField {
            values: (0..self.n_theta())
                .map(|j| (psi.values[self.jp(j)] - psi.values[self.jm(j)]) / (two * self.dtheta))
                .collect(),
        }
    }

    /// Periodic `(1/a) ∂_θ((1/a) ∂_θ ψ)` in flux form; with `a = e^{u/2}` this
    /// is the Laplacian of the boundary curve in arc length.
    pub fn boundary_weighted_laplacian(&self, psi: &BoundaryField<T>, a: &BoundaryField<T>) -> BoundaryField<T> {
        if self.symmetric() {
            return BoundaryField::zeros(self);
        }
        let half = lit::<T>(0.5);
        let d2 = self.dtheta * self.dtheta;
        BoundaryField {
            values: (0..self.n_theta())
                .map(|j| {
                    let (jp, jm) = (self.jp(j), self.jm(j));
                    let ap = half * (a.values[j] + a.values[jp]);
                    let am = half * (a.values[j] + a.values[jm]);
                    ((psi.values[jp] - psi.values[j]) / ap - (psi.values[j] - psi.values[jm]) / am)
                        / (a.values[j] * d2)
                })
                .collect(),
        }
    }
}

/// How the ghost ring at `r = 1 + Δr/2` is filled.
#[derive(Clone, Copy, Debug)]
pub enum Closure<'a, T> {
    /// Caller-supplied ghost values.
    Ghost(&'a BoundaryField<T>),
    /// `φ_ghost = φ_last`: zero face derivative (homogeneous Neumann).
    Mirror,
    /// Quadratic extrapolation from the last three rings.
    Extrapolate,
}

struct Extended<'a, T> {
    grid: &'a PolarGrid<T>,
    phi: &'a ScalarField<T>,
    ghost: BoundaryField<T>,
}

impl<T: Real> Extended<'_, T> {
    #[inline]
    fn get(&self, i: isize, j: usize) -> T {
        let g = self.grid;
        if i < 0 {
            self.phi.at(g, 0, g.opposite(j))
        } else if i as usize >= g.n_r() {
            self.ghost.values[j]
        } else {
            self.phi.at(g, i as usize, j)
        }
    }

    #[inline]
    fn radial_part(&self, i: usize, j: usize) -> T {
        let g = self.grid;
        let ii = i as isize;
        let c = self.get(ii, j);
        let outer = g.r_face[i + 1] * (self.get(ii + 1, j) - c);
        let inner = if i == 0 {
            T::zero()
        } else {
            g.r_face[i] * (c - self.get(ii - 1, j))
        };
        (outer - inner) / (g.r[i] * g.dr * g.dr)
    }

    #[inline]
    fn angular_part(&self, i: usize, j: usize) -> T {
        let g = self.grid;
        if g.symmetric() {
            return T::zero();
        }
        let ii = i as isize;
        let two = lit::<T>(2.0);
        let c = self.get(ii, j);
        let d2 = self.get(ii, g.jp(j)) - two * c + self.get(ii, g.jm(j));
        d2 / (g.r[i] * g.r[i] * g.dtheta * g.dtheta)
    }
}

/// Centred coordinate derivatives `∂_r, ∂_θ, ∂_rr, ∂_rθ, ∂_θθ`.
#[derive(Clone, Debug)]
pub struct Derivatives<T> {
    pub d_r: ScalarField<T>,
    pub d_t: ScalarField<T>,
    pub d_rr: ScalarField<T>,
    pub d_rt: ScalarField<T>,
    pub d_tt: ScalarField<T>,
}

/// One value per grid node.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField<T> {
    pub values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn zeros(grid: &PolarGrid<T>) -> Self {
        Self::constant(grid, T::zero())
    }

    pub fn constant(grid: &PolarGrid<T>, value: T) -> Self {
        Self {
            values: vec![value; grid.len()],
        }
    }

    /// Samples `f(r, θ)` at the nodes.
    pub fn from_fn(grid: &PolarGrid<T>, f: impl Fn(T, T) -> T) -> Self {
        Self::from_ij(grid, |i, j| f(grid.r[i], grid.theta[j]))
    }

    pub fn from_ij(grid: &PolarGrid<T>, f: impl Fn(usize, usize) -> T) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.n_r() {
            for j in 0..grid.n_theta() {
                values.push(f(i, j));
            }
        }
        Self { values }
    }

    fn from_ring_fn(grid: &PolarGrid<T>, f: impl Fn(usize, usize) -> T) -> Self {
        Self::from_ij(grid, f)
    }

    #[inline]
    pub fn at(&self, grid: &PolarGrid<T>, i: usize, j: usize) -> T {
        self.values[grid.idx(i, j)]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert_eq!(self.values.len(), other.values.len());
        Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn max_abs(&self) -> T {
        crate::scalar::max_abs(self.values.iter().copied())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// One value per boundary node `θ_j` on `r = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryField<T> {
    pub values: Vec<T>,
}

impl<T: Real> BoundaryField<T> {
    pub fn zeros(grid: &PolarGrid<T>) -> Self {
        Self::constant(grid, T::zero())
    }

    pub fn constant(grid: &PolarGrid<T>, value: T) -> Self {
        Self {
            values: vec![value; grid.n_theta()],
        }
    }

    pub fn from_fn(grid: &PolarGrid<T>, f: impl Fn(T) -> T) -> Self {
        Self {
            values: grid.theta.iter().map(|&t| f(t)).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn max_abs(&self) -> T {
        crate::scalar::max_abs(self.values.iter().copied())
    }
}

/// Symmetric covariant 2-tensor in polar coordinate components.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorField<T> {
    pub rr: ScalarField<T>,
    /// The mixed `rθ` component, stored once.
    pub rt: ScalarField<T>,
    pub tt: ScalarField<T>,
}

impl<T: Real> TensorField<T> {
    pub fn zeros(grid: &PolarGrid<T>) -> Self {
        Self {
            rr: ScalarField::zeros(grid),
            rt: ScalarField::zeros(grid),
            tt: ScalarField::zeros(grid),
        }
    }

    /// `a·self + b·other`, with `a`, `b` pointwise fields.
    pub fn combine(&self, a: &ScalarField<T>, other: &Self, b: &ScalarField<T>) -> Self {
        let f = |x: &ScalarField<T>, y: &ScalarField<T>| ScalarField {
            values: (0..x.values.len())
                .map(|k| a.values[k] * x.values[k] + b.values[k] * y.values[k])
                .collect(),
        };
        Self {
            rr: f(&self.rr, &other.rr),
            rt: f(&self.rt, &other.rt),
            tt: f(&self.tt, &other.tt),
        }
    }
}

/// Per-ring Fourier filter on the angular term of the Laplacian.
///
/// On ring `i` an angular mode `m` is kept only while its eigenvalue
/// `(2 sin(mΔθ/2) / (r_i Δθ))²` stays below `4 / s²` with `s = Δr/2`. Rings
/// near the pole therefore lose their highest modes and the explicit step is
/// bounded by the radial spacing instead of `r_0 Δθ`.
#[derive(Clone)]
pub struct PolarFilter<T: Real> {
    n_theta: usize,
    /// Highest kept wavenumber per ring; `None` means the ring is untouched.
    cutoff: Vec<Option<usize>>,
    forward: Option<Arc<dyn Fft<T>>>,
    inverse: Option<Arc<dyn Fft<T>>>,
}

impl<T: Real> std::fmt::Debug for PolarFilter<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PolarFilter")
            .field("n_theta", &self.n_theta)
            .field("cutoff", &self.cutoff)
            .finish()
    }
}

impl<T: Real> PolarFilter<T> {
    pub fn new(grid: &PolarGrid<T>) -> Self {
        let n = grid.n_theta();
        let mut cutoff = vec![None; grid.n_r()];
        if n > 1 {
            let s = lit::<T>(0.5) * grid.dr;
            let cap = lit::<T>(4.0) / (s * s);
            let two = lit::<T>(2.0);
            for (i, slot) in cutoff.iter_mut().enumerate() {
                let ri = grid.r[i];
                let eig = |m: usize| {
                    let x = two * (count::<T>(m) * grid.dtheta / two).sin() / (ri * grid.dtheta);
                    x * x
                };
                if eig(n / 2) > cap {
                    let mut m = 0;
                    while m < n / 2 && eig(m + 1) <= cap {
                        m += 1;
                    }
                    *slot = Some(m);
                }
            }
        }
        let (forward, inverse) = if cutoff.iter().any(Option::is_some) {
            let mut planner = FftPlanner::new();
            (Some(planner.plan_fft_forward(n)), Some(planner.plan_fft_inverse(n)))
        } else {
            (None, None)
        };
        Self {
            n_theta: n,
            cutoff,
            forward,
            inverse,
        }
    }

    /// Highest kept angular wavenumber on ring `i` (`None`: all kept).
    pub fn cutoff(&self, i: usize) -> Option<usize> {
        self.cutoff[i]
    }

    /// Effective angular spacing seen by the explicit step.
    pub fn effective_angular_spacing(&self, grid: &PolarGrid<T>) -> T {
        if grid.symmetric() {
            T::infinity()
        } else if self.cutoff.iter().any(Option::is_some) {
            lit::<T>(0.5) * grid.dr
        } else {
            grid.r[0] * grid.dtheta
        }
    }

    /// Filters ring `i` of `field` in place.
    pub fn apply_ring(&self, field: &mut ScalarField<T>, i: usize) {
        let (Some(m), Some(fwd), Some(inv)) = (self.cutoff[i], &self.forward, &self.inverse) else {
            return;
        };
        let n = self.n_theta;
        let ring = &mut field.values[i * n..(i + 1) * n];
        let mut buf: Vec<Complex<T>> = ring.iter().map(|&v| Complex::new(v, T::zero())).collect();
        fwd.process(&mut buf);
        for (k, c) in buf.iter_mut().enumerate() {
            if k.min(n - k) > m {
                *c = Complex::new(T::zero(), T::zero());
            }
        }
        inv.process(&mut buf);
        let scale = T::one() / count::<T>(n);
        for (dst, c) in ring.iter_mut().zip(&buf) {
            *dst = c.re * scale;
        }
    }

    pub fn apply(&self, field: &mut ScalarField<T>) {
        for i in 0..self.cutoff.len() {
            self.apply_ring(field, i);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n_r: usize, n_theta: usize) -> PolarGrid<f64> {
        PolarGrid::new(GridSpec::new(n_r, n_theta)).unwrap()
    }

    /// Field plus its exact ghost.
    fn sample(g: &PolarGrid<f64>, f: impl Fn(f64, f64) -> f64) -> (ScalarField<f64>, BoundaryField<f64>) {
        let rg = g.ghost_radius();
        (ScalarField::from_fn(g, &f), BoundaryField::from_fn(g, |t| f(rg, t)))
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(PolarGrid::<f64>::new(GridSpec::new(4, 16)).is_err());
        assert!(PolarGrid::<f64>::new(GridSpec::new(16, 6)).is_err());
        assert!(PolarGrid::<f64>::new(GridSpec::new(16, 9)).is_err());
        assert!(PolarGrid::<f64>::new(GridSpec::new(16, 1)).is_ok());
    }

    #[test]
    fn radial_nodes_are_cell_centred() {
        let g = grid(8, 1);
        let expect: Vec<f64> = (0..8).map(|i| (2 * i + 1) as f64 / 16.0).collect();
        for (a, b) in g.radii().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn weights_sum_to_area_and_circumference() {
        for &(nr, nt) in &[(8, 1), (17, 8), (64, 64), (100, 30)] {
            let g = grid(nr, nt);
            let area = g.integrate_flat(&ScalarField::constant(&g, 1.0));
            assert!((area - PI).abs() / PI < 1e-12, "{nr}x{nt}: {area}");
            let circ = g.integrate_flat_boundary(&BoundaryField::constant(&g, 1.0));
            assert!((circ - 2.0 * PI).abs() / (2.0 * PI) < 1e-12);
        }
    }

    #[test]
    fn laplacian_of_constant_and_r_squared() {
        let g = grid(16, 16);
        let one = ScalarField::constant(&g, 1.0);
        assert!(g.laplacian0(&one, Closure::Mirror).max_abs() < 1e-12);
        let (r2, ghost) = sample(&g, |r, _| r * r);
        let lap = g.laplacian0(&r2, Closure::Ghost(&ghost));
        for v in &lap.values {
            assert!((v - 4.0).abs() < 1e-10);
        }
    }

    #[test]
    fn harmonic_cubic_is_second_order() {
        let err = |n: usize| {
            let g = grid(n, n);
            let (phi, ghost) = sample(&g, |r, t| r.powi(3) * (3.0 * t).cos());
            g.laplacian0(&phi, Closure::Ghost(&ghost)).max_abs()
        };
        let (e1, e2) = (err(32), err(64));
        assert!(e1 < 0.3, "{e1}");
        assert!((e1 / e2).log2() > 1.9, "{e1} {e2}");
    }

    #[test]
    fn gradient_examples() {
        let g = grid(32, 32);
        let (x, gx) = sample(&g, |r, t| r * t.cos());
        let (dr, dt) = g.gradient0(&x, Closure::Ghost(&gx));
        for i in 0..g.n_r() {
            for j in 0..g.n_theta() {
                let t = g.angles()[j];
                assert!((dr.at(&g, i, j) - t.cos()).abs() < 1e-12);
                assert!((dt.at(&g, i, j) + t.sin()).abs() < 1e-2);
            }
        }
        let (r2, g2) = sample(&g, |r, _| r * r);
        let (dr, dt) = g.gradient0(&r2, Closure::Ghost(&g2));
        for i in 0..g.n_r() {
            assert!((dr.at(&g, i, 0) - 2.0 * g.radii()[i]).abs() < 1e-12);
        }
        assert!(dt.max_abs() < 1e-14);
        let c = ScalarField::constant(&g, 3.0);
        let (a, b) = g.gradient0(&c, Closure::Mirror);
        assert_eq!(a.max_abs(), 0.0);
        assert_eq!(b.max_abs(), 0.0);
    }

    #[test]
    fn tangential_derivative_examples() {
        let g = grid(8, 64);
        let psi = BoundaryField::from_fn(&g, f64::cos);
        let d = g.boundary_tangential_derivative(&psi);
        for (v, t) in d.values.iter().zip(g.angles()) {
            assert!((v + t.sin()).abs() < 2e-3);
        }
        let psi2 = BoundaryField::from_fn(&g, |t| (2.0 * t).cos());
        let d2 = g.boundary_tangential_derivative(&psi2);
        for (v, t) in d2.values.iter().zip(g.angles()) {
            assert!((v + 2.0 * (2.0 * t).sin()).abs() < 2e-2);
        }
        let c = BoundaryField::constant(&g, 2.0);
        assert_eq!(g.boundary_tangential_derivative(&c).max_abs(), 0.0);
        let g1 = grid(8, 1);
        let c1 = BoundaryField::constant(&g1, 2.0);
        assert_eq!(g1.boundary_tangential_derivative(&c1).values, vec![0.0]);
    }

    #[test]
    fn boundary_radial_derivative_examples() {
        let g = grid(32, 8);
        let r2 = ScalarField::from_fn(&g, |r, _| r * r);
        for v in g.radial_derivative_at_boundary(&r2).values {
            assert!((v - 2.0).abs() < 1e-12);
        }
        let c = ScalarField::constant(&g, 5.0);
        assert!(g.radial_derivative_at_boundary(&c).max_abs() < 1e-12);
        let err = |n: usize| {
            let g = grid(n, 1);
            let p = ScalarField::from_fn(&g, |r, _| (1.0 - r * r).powi(2));
            g.radial_derivative_at_boundary(&p).max_abs()
        };
        let (e1, e2) = (err(32), err(64));
        assert!(e1 < 5e-2, "{e1}");
        assert!((e1 / e2).log2() > 1.9, "{e1} {e2}");
    }

    #[test]
    fn cubic_boundary_derivative_is_third_order() {
        let g = grid(16, 1);
        let cubic = ScalarField::from_fn(&g, |r, _| r * r * r - r);
        assert!((g.radial_derivative_at_boundary_cubic(&cubic).values[0] - 2.0).abs() < 1e-12);
        let err = |n: usize| {
            let g = grid(n, 1);
            let p = ScalarField::from_fn(&g, |r, _| (1.0 - r * r).powi(2));
            g.radial_derivative_at_boundary_cubic(&p).max_abs()
        };
        let (e1, e2) = (err(32), err(64));
        assert!((e1 / e2).log2() > 2.8, "{e1} {e2}");
    }

    #[test]
    fn symmetric_path_matches_full_grid() {
        let f = |r: f64, _t: f64| (1.0 - r * r).powi(2) + r.powi(4);
        let g1 = grid(32, 1);
        let g64 = grid(32, 64);
        let (a, ga) = sample(&g1, f);
        let (b, gb) = sample(&g64, f);
        let la = g1.laplacian0(&a, Closure::Ghost(&ga));
        let lb = g64.laplacian0(&b, Closure::Ghost(&gb));
        for i in 0..32 {
            for j in 0..64 {
                assert!((la.at(&g1, i, 0) - lb.at(&g64, i, j)).abs() < 1e-9);
            }
        }
        let ia = g1.integrate_flat(&a);
        let ib = g64.integrate_flat(&b);
        assert!((ia - ib).abs() < 1e-12);
    }

    #[test]
    fn hessian_trace_matches_flux_laplacian() {
        let g = grid(16, 16);
        let (phi, ghost) = sample(&g, |r, t| (r * t.cos()).exp() + r.powi(4) * (2.0 * t).sin());
        let d = g.derivatives(&phi, Closure::Ghost(&ghost));
        let lap = g.laplacian0(&phi, Closure::Ghost(&ghost));
        for i in 0..16 {
            let r = g.radii()[i];
            for j in 0..16 {
                let k = g.idx(i, j);
                let tr = d.d_rr.values[k] + d.d_r.values[k] / r + d.d_tt.values[k] / (r * r);
                assert!((tr - lap.values[k]).abs() < 1e-9 * (1.0 + lap.values[k].abs()));
            }
        }
    }

    #[test]
    fn polar_filter_keeps_low_modes_and_outer_rings() {
        let g = grid(32, 64);
        let f = PolarFilter::new(&g);
        assert_eq!(f.cutoff(0), Some(2));
        assert!(f.cutoff(31).is_none());
        let mut low = ScalarField::from_fn(&g, |r, t| r * r * (2.0 * t).cos() + 1.0);
        let before = low.clone();
        f.apply(&mut low);
        for (a, b) in low.values.iter().zip(&before.values) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut high = ScalarField::from_fn(&g, |_, t| (20.0 * t).cos());
        f.apply_ring(&mut high, 0);
        for j in 0..64 {
            assert!(high.at(&g, 0, j).abs() < 1e-12);
        }
    }
}
