//! Poisson problems with homogeneous Neumann data on the evolving metric.
//!
//! `Δ_g f = ρ` with `f_ν = 0` is `Δ₀ f = e^u ρ` on the flat grid with a
//! mirror ghost ring. Multiplying by the flat node weights makes the operator
//! symmetric positive semidefinite with the constants as its kernel. The
//! right-hand side is made orthogonal to that kernel (`∫ρ dv = 0`) and the
//! returned potential is normalised to `∫f dv = 0`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::geometry::ConformalMetric;
use crate::grid::{Closure, PolarGrid, ScalarField};
use crate::scalar::{count, kahan_sum, lit, Real};

/// Relative size of `∫ρ dv` tolerated before the problem is declared incompatible.
pub const COMPAT_TOL: f64 = 1e-8;
/// Default relative algebraic residual.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Linear solver behind [`solve_poisson_neumann`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Backend {
    /// Jacobi-preconditioned conjugate gradients with the constant mode
    /// projected out of every residual.
    #[default]
    ConjugateGradient,
    /// Angular DFT followed by one tridiagonal solve per wavenumber.
    Spectral,
}

#[derive(Clone, Copy, Debug)]
pub struct NeumannOptions {
    pub tol: f64,
    /// Defaults to `10 · n_r · n_theta`.
    pub max_iter: Option<usize>,
    pub backend: Backend,
}

impl Default for NeumannOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: None,
            backend: Backend::default(),
        }
    }
}

/// Mean-zero solution of a Neumann problem.
#[derive(Clone, Debug)]
pub struct NeumannSolution<T> {
    pub f: ScalarField<T>,
    /// `|∫ρ dv|` before the defect was projected out.
    pub compat_residual: T,
    /// Final relative algebraic residual.
    pub linear_residual: T,
    pub iterations: usize,
}

impl<T: Real> NeumannSolution<T> {
    /// Closure matching `f_ν = 0`.
    pub fn closure(&self) -> Closure<'static, T> {
        Closure::Mirror
    }
}

/// Solves `Δ_g f = ρ`, `f_ν = 0`, `∫f dv = 0`.
pub fn solve_poisson_neumann<T: Real>(
    rho: &ScalarField<T>,
    m: &ConformalMetric<T>,
    opts: NeumannOptions,
) -> Result<NeumannSolution<T>> {
    solve_scaled(rho, m, opts, rho.max_abs())
}

/// Relative tolerances never drop below what the precision can resolve.
fn precision_floor<T: Real>(tol: f64) -> T {
    lit::<T>(tol).max(lit::<T>(1024.0) * T::epsilon())
}

/// `reference` is the magnitude `∫ρ dv` is judged against.
fn solve_scaled<T: Real>(
    rho: &ScalarField<T>,
    m: &ConformalMetric<T>,
    opts: NeumannOptions,
    reference: T,
) -> Result<NeumannSolution<T>> {
    let grid = m.grid();
    let volume = m.volume();
    let total = m.integrate_volume(rho);
    let scale = rho.max_abs();
    if total.abs() > precision_floor::<T>(COMPAT_TOL) * reference.max(scale) * volume {
        return Err(Error::Compatibility {
            message: "Neumann right-hand side does not integrate to zero".into(),
            residual: total.to_f64().unwrap_or(f64::NAN),
        });
    }
    let mean = total / volume;
    let eu = m.conformal_factor();
    // Δ₀ f = e^u (ρ − mean)
    let source = ScalarField {
        values: rho
            .values
            .iter()
            .zip(&eu.values)
            .map(|(&p, &e)| e * (p - mean))
            .collect(),
    };
    let (mut f, iterations, linear_residual) = if scale == T::zero() {
        (ScalarField::zeros(grid), 0, T::zero())
    } else {
        match opts.backend {
            Backend::ConjugateGradient => conjugate_gradient(grid, &source, opts)?,
            Backend::Spectral => spectral(grid, &source)?,
        }
    };
    let shift = m.integrate_volume(&f) / volume;
    for v in &mut f.values {
        *v = *v - shift;
    }
    Ok(NeumannSolution {
        f,
        compat_residual: total.abs(),
        linear_residual,
        iterations,
    })
}

/// The potential of `R + Δf = R̄`, `f_ν = 0`.
pub fn potential_f<T: Real>(m: &ConformalMetric<T>) -> Result<NeumannSolution<T>> {
    potential_f_with(m, &m.scalar_curvature(), NeumannOptions::default())
}

/// [`potential_f`] for a precomputed curvature field.
pub fn potential_f_with<T: Real>(
    m: &ConformalMetric<T>,
    curvature: &ScalarField<T>,
    opts: NeumannOptions,
) -> Result<NeumannSolution<T>> {
    let r_bar = m.integrate_volume(curvature) / m.volume();
    let rho = curvature.map(|r| r_bar - r);
    solve_scaled(&rho, m, opts, curvature.max_abs())
}

fn weighted_residual<T: Real>(grid: &PolarGrid<T>, f: &ScalarField<T>, source: &ScalarField<T>) -> (Vec<T>, T) {
    let n = grid.n_theta();
    let lap = grid.laplacian0(f, Closure::Mirror);
    let b: Vec<T> = (0..grid.len())
        .map(|k| -source.values[k] * grid.ring_weight(k / n))
        .collect();
    let r: Vec<T> = (0..grid.len())
        .map(|k| b[k] + lap.values[k] * grid.ring_weight(k / n))
        .collect();
    let bn = norm(&b);
    let rel = if bn > T::zero() { norm(&r) / bn } else { norm(&r) };
    (r, rel)
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    kahan_sum(a.iter().zip(b).map(|(&x, &y)| x * y))
}

fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

fn project_constant<T: Real>(v: &mut [T]) {
    let mean = kahan_sum(v.iter().copied()) / count::<T>(v.len());
    for x in v {
        *x = *x - mean;
    }
}

fn diagonal<T: Real>(grid: &PolarGrid<T>) -> Vec<T> {
    let n_r = grid.n_r();
    let h = grid.dr();
    let dt = grid.dtheta();
    let r = grid.radii();
    let mut d = Vec::with_capacity(grid.len());
    for i in 0..n_r {
        let mut radial = T::zero();
        if i + 1 < n_r {
            radial = radial + count::<T>(i + 1) * h;
        }
        if i > 0 {
            radial = radial + count::<T>(i) * h;
        }
        radial = radial * dt / h;
        let angular = if grid.symmetric() {
            T::zero()
        } else {
            lit::<T>(2.0) * h / (r[i] * dt)
        };
        for _ in 0..grid.n_theta() {
            d.push(radial + angular);
        }
    }
    d
}

fn conjugate_gradient<T: Real>(
    grid: &PolarGrid<T>,
    source: &ScalarField<T>,
    opts: NeumannOptions,
) -> Result<(ScalarField<T>, usize, T)> {
    let len = grid.len();
    let n = grid.n_theta();
    let max_iter = opts.max_iter.unwrap_or(10 * len);
    let tol = precision_floor::<T>(opts.tol);
    let mut b: Vec<T> = (0..len)
        .map(|k| -source.values[k] * grid.ring_weight(k / n))
        .collect();
    project_constant(&mut b);
    let bnorm = norm(&b);
    let diag = diagonal(grid);
    let mut x = vec![T::zero(); len];
    let mut r = b.clone();
    let mut z: Vec<T> = r.iter().zip(&diag).map(|(&a, &d)| a / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![T::zero(); len];
    let mut history = Vec::new();
    for it in 0..max_iter {
        let rel = norm(&r) / bnorm;
        if history.len() < 64 || it % 64 == 0 {
            history.push(rel.to_f64().unwrap_or(f64::NAN));
        }
        if rel <= tol {
            let f = ScalarField { values: x };
            let (_, true_rel) = weighted_residual(grid, &f, source);
            return Ok((f, it, true_rel));
        }
        apply_operator(grid, &p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= T::zero() {
            break;
        }
        let alpha = rz / pap;
        for k in 0..len {
            x[k] = x[k] + alpha * p[k];
            r[k] = r[k] - alpha * ap[k];
        }
        project_constant(&mut r);
        for k in 0..len {
            z[k] = r[k] / diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..len {
            p[k] = z[k] + beta * p[k];
        }
    }
    history.push((norm(&r) / bnorm).to_f64().unwrap_or(f64::NAN));
    Err(Error::Solver {
        iterations: max_iter,
        history,
    })
}

fn apply_operator<T: Real>(grid: &PolarGrid<T>, x: &[T], out: &mut [T]) {
    let field = ScalarField { values: x.to_vec() };
    let lap = grid.laplacian0(&field, Closure::Mirror);
    let n = grid.n_theta();
    for (k, o) in out.iter_mut().enumerate() {
        *o = -lap.values[k] * grid.ring_weight(k / n);
    }
}

fn spectral<T: Real>(grid: &PolarGrid<T>, source: &ScalarField<T>) -> Result<(ScalarField<T>, usize, T)> {
    let n_r = grid.n_r();
    let n = grid.n_theta();
    let h = grid.dr();
    let r = grid.radii();
    let face = |i: usize| count::<T>(i) * h;
    let zero = Complex::new(T::zero(), T::zero());

    let mut planner = FftPlanner::<T>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    // hat[i][k]
    let mut hat: Vec<Vec<Complex<T>>> = (0..n_r)
        .map(|i| {
            let mut buf: Vec<Complex<T>> = (0..n)
                .map(|j| Complex::new(source.at(grid, i, j), T::zero()))
                .collect();
            fwd.process(&mut buf);
            buf
        })
        .collect();

    let two = lit::<T>(2.0);
    for k in 0..n {
        let mut rhs: Vec<Complex<T>> = (0..n_r).map(|i| hat[i][k] * (r[i] * h * h)).collect();
        let sol: Vec<Complex<T>> = if k == 0 {
            let mut f = vec![zero; n_r];
            let mut flux = zero;
            for i in 0..n_r - 1 {
                flux = flux + rhs[i];
                f[i + 1] = f[i] + flux / face(i + 1);
            }
            f
        } else {
            let s = (count::<T>(k) * grid.dtheta() / two).sin() * two / grid.dtheta();
            let lambda = s * s;
            let lower: Vec<T> = (0..n_r).map(|i| if i > 0 { face(i) } else { T::zero() }).collect();
            let upper: Vec<T> = (0..n_r)
                .map(|i| if i + 1 < n_r { face(i + 1) } else { T::zero() })
                .collect();
            let diag: Vec<T> = (0..n_r)
                .map(|i| -(lower[i] + upper[i] + lambda * h * h / r[i]))
                .collect();
            thomas(&lower, &diag, &upper, &mut rhs);
            rhs
        };
        for i in 0..n_r {
            hat[i][k] = sol[i];
        }
    }

    let scale = T::one() / count::<T>(n);
    let mut f = ScalarField::zeros(grid);
    for (i, row) in hat.iter_mut().enumerate() {
        inv.process(row);
        for j in 0..n {
            f.values[grid.idx(i, j)] = row[j].re * scale;
        }
    }
    let (_, rel) = weighted_residual(grid, &f, &{
        let mut s = source.clone();
        let mean = kahan_sum(
            (0..grid.len()).map(|k| s.values[k] * grid.ring_weight(k / n)),
        ) / kahan_sum((0..grid.len()).map(|k| grid.ring_weight(k / n)));
        for v in &mut s.values {
            *v = *v - mean;
        }
        s
    });
    if !f.is_finite() {
        return Err(Error::Solver {
            iterations: 1,
            history: vec![f64::NAN],
        });
    }
    Ok((f, 1, rel))
}

/// In-place tridiagonal solve; `rhs` becomes the solution.
fn thomas<T: Real>(lower: &[T], diag: &[T], upper: &[T], rhs: &mut [Complex<T>]) {
    let n = diag.len();
    let mut c = vec![T::zero(); n];
    let mut beta = diag[0];
    c[0] = upper[0] / beta;
    rhs[0] = rhs[0] / beta;
    for i in 1..n {
        beta = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / beta;
        rhs[i] = (rhs[i] - rhs[i - 1] * lower[i]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] = rhs[i] - rhs[i + 1] * c[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn flat(n_r: usize, n_theta: usize) -> ConformalMetric<f64> {
        ConformalMetric::flat(PolarGrid::shared(GridSpec::new(n_r, n_theta)).unwrap())
    }

    fn error(m: &ConformalMetric<f64>, backend: Backend) -> f64 {
        let g = m.grid();
        // f = r²(1 − r²/2) cos 2θ has f_r(1) = 0 and Δ₀f = −6r² cos 2θ.
        let exact = ScalarField::from_fn(g, |r, t| r * r * (1.0 - 0.5 * r * r) * (2.0 * t).cos());
        let rho = ScalarField::from_fn(g, |r, t| -6.0 * r * r * (2.0 * t).cos());
        let opts = NeumannOptions { backend, ..Default::default() };
        let sol = solve_poisson_neumann(&rho, m, opts).unwrap();
        let shift = m.integrate_volume(&exact) / m.volume();
        sol.f.zip_map(&exact, |a, b| a - (b - shift)).max_abs()
    }

    #[test]
    fn manufactured_solution_converges() {
        for backend in [Backend::ConjugateGradient, Backend::Spectral] {
            let (e1, e2) = (error(&flat(16, 16), backend), error(&flat(32, 32), backend));
            assert!(e1 < 2e-2, "{backend:?}: {e1}");
            assert!((e1 / e2).log2() > 1.8, "{backend:?}: {e1} {e2}");
        }
    }

    #[test]
    fn backends_agree() {
        let g = PolarGrid::shared(GridSpec::new(24, 16)).unwrap();
        let m = ConformalMetric::from_fn(g, |r: f64, t: f64| 0.3 * r * r * t.cos() - 0.2 * r * r).unwrap();
        let rho = ScalarField::from_fn(m.grid(), |r, t| (3.0 * t).sin() * r + r * r);
        let rho = rho.map(|v| v - m.integrate_volume(&rho) / m.volume());
        let a = solve_poisson_neumann(&rho, &m, NeumannOptions::default()).unwrap();
        let b = solve_poisson_neumann(
            &rho,
            &m,
            NeumannOptions { backend: Backend::Spectral, ..Default::default() },
        )
        .unwrap();
        assert!(a.f.zip_map(&b.f, |x, y| x - y).max_abs() < 1e-8);
        assert!(a.linear_residual < 1e-9 && b.linear_residual < 1e-9);
        assert!(m.integrate_volume(&a.f).abs() < 1e-12);
    }

    #[test]
    fn constant_curvature_potential_vanishes() {
        let g = PolarGrid::shared(GridSpec::new(32, 1)).unwrap();
        let m = ConformalMetric::from_fn(g, |r: f64, _| 4.0f64.ln() - 2.0 * (1.0 + r * r).ln()).unwrap();
        let sol = potential_f(&m).unwrap();
        assert!(sol.f.max_abs() < 1e-2);
        assert!(sol.compat_residual < 1e-12);
    }

    #[test]
    fn incompatible_data_is_rejected() {
        let m = flat(16, 8);
        let rho = ScalarField::constant(m.grid(), 1.0);
        assert!(matches!(
            solve_poisson_neumann(&rho, &m, NeumannOptions::default()),
            Err(Error::Compatibility { .. })
        ));
    }

    #[test]
    fn iteration_cap_reports_history() {
        let m = flat(32, 32);
        let rho = ScalarField::from_fn(m.grid(), |r, t| r * t.cos());
        let opts = NeumannOptions { max_iter: Some(2), ..Default::default() };
        match solve_poisson_neumann(&rho, &m, opts) {
            Err(Error::Solver { iterations, history }) => {
                assert_eq!(iterations, 2);
                assert!(!history.is_empty());
            }
            other => panic!("expected solver failure, got {other:?}"),
        }
    }
}
