//! Entropy functionals and the right-hand sides of their evolution laws.
//!
//! Derivatives of `R` and `log R` use the extrapolating closure, derivatives
//! of the Neumann potential `f` use the mirror closure.

use crate::elliptic::{self, NeumannSolution};
use crate::error::{Error, Result};
use crate::flow::FlowTrajectory;
use crate::geometry::{ConformalMetric, EULER_CHARACTERISTIC};
use crate::grid::{BoundaryField, Closure, ScalarField, TensorField};
use crate::scalar::{lit, Real};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WParams<T> {
    pub w_horizon: T,
}

impl<T: Real> WParams<T> {
    pub fn tau(&self, t: T) -> Result<T> {
        let tau = self.w_horizon - t;
        if tau > T::zero() {
            Ok(tau)
        } else {
            Err(Error::Domain(format!("tau = {tau} must be positive")))
        }
    }
}

/// Functionals of one snapshot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropyRecord<T> {
    pub t: T,
    pub tau: T,
    pub v_m: T,
    pub r_bar: T,
    pub min_r: T,
    pub e_partial: T,
    pub n_partial: T,
    pub r_partial: T,
    pub w_partial: T,
    pub de_dt_rhs: T,
    pub dw_dt_rhs: T,
    pub gauss_bonnet_res: T,
    pub kappa_min: T,
    pub kappa_max: T,
    pub total_kappa: T,
    pub soliton_residual_l2: T,
}

fn four_pi_chi<T: Real>() -> T {
    lit::<T>(4.0) * T::PI() * lit::<T>(EULER_CHARACTERISTIC)
}

fn log_curvature<T: Real>(r: &ScalarField<T>) -> Result<ScalarField<T>> {
    let min = r.min();
    if !(min > T::zero()) {
        return Err(Error::Domain(format!("log R needs R > 0, min R = {min}")));
    }
    Ok(r.map(T::ln))
}

/// `R̄ = ∫R dv / v(M)`.
#[allow(non_snake_case)]
pub fn average_R<T: Real>(m: &ConformalMetric<T>) -> T {
    m.integrate_volume(&m.scalar_curvature()) / m.volume()
}

/// `𝓝 = ∫R log R dv`.
pub fn n_partial<T: Real>(m: &ConformalMetric<T>) -> Result<T> {
    let r = m.scalar_curvature();
    let l = log_curvature(&r)?;
    Ok(m.integrate_volume(&r.zip_map(&l, |a, b| a * b)))
}

/// `𝓡 = log R̄ ∫R dv`.
pub fn r_partial<T: Real>(m: &ConformalMetric<T>) -> Result<T> {
    let total = m.integrate_volume(&m.scalar_curvature());
    let r_bar = total / m.volume();
    if !(r_bar > T::zero()) {
        return Err(Error::Domain(format!("log R̄ needs R̄ > 0, got {r_bar}")));
    }
    Ok(r_bar.ln() * total)
}

/// Hamilton entropy `∫R log(R/R̄) dv`.
pub fn hamilton_entropy<T: Real>(m: &ConformalMetric<T>) -> Result<T> {
    let r = m.scalar_curvature();
    log_curvature(&r)?;
    let r_bar = m.integrate_volume(&r) / m.volume();
    Ok(m.integrate_volume(&r.map(|v| v * (v / r_bar).ln())))
}

/// `∫[τ(R − ‖∇log R‖²) − log R − log τ] R dv − 2 log τ ∫κ ds`.
pub fn w_functional<T: Real>(m: &ConformalMetric<T>, wp: WParams<T>, t: T) -> Result<T> {
    let tau = wp.tau(t)?;
    let r = m.scalar_curvature();
    let l = log_curvature(&r)?;
    let grad = m.metric_grad_norm_sq(&l, Closure::Extrapolate);
    let log_tau = tau.ln();
    let integrand = ScalarField {
        values: (0..r.values.len())
            .map(|k| {
                let (rv, lv) = (r.values[k], l.values[k]);
                (tau * (rv - grad.values[k]) - lv - log_tau) * rv
            })
            .collect(),
    };
    let kappa = m.integrate_boundary(&m.geodesic_curvature());
    Ok(m.integrate_volume(&integrand) - lit::<T>(2.0) * log_tau * kappa)
}

/// `½(R − c) g + ∇²φ`.
fn soliton_tensor<T: Real>(
    m: &ConformalMetric<T>,
    r: &ScalarField<T>,
    c: T,
    phi: &ScalarField<T>,
    closure: Closure<'_, T>,
) -> TensorField<T> {
    let g = m.grid();
    let half = lit::<T>(0.5);
    let coeff = r.map(|v| half * (v - c));
    let one = ScalarField::constant(g, T::one());
    m.metric_tensor().combine(&coeff, &m.hessian(phi, closure), &one)
}

/// Evolution rate of the Hamilton entropy, interior squares plus the
/// boundary term `−2∫κ‖∇_∂(f|∂M)‖² ds`.
pub fn de_dt_rhs<T: Real>(m: &ConformalMetric<T>, f: &ScalarField<T>) -> Result<T> {
    let r = m.scalar_curvature();
    let l = log_curvature(&r)?;
    let r_bar = m.integrate_volume(&r) / m.volume();
    let g = m.grid();
    let (fr, ft) = g.gradient0(f, Closure::Mirror);
    let (lr, lt) = g.gradient0(&l, Closure::Extrapolate);
    let t = soliton_tensor(m, &r, r_bar, f, Closure::Mirror);
    let tn = m.tensor_norm_sq(&t);
    let two = lit::<T>(2.0);
    let interior = ScalarField {
        values: (0..r.values.len())
            .map(|k| {
                let dr = fr.values[k] - lr.values[k];
                let dt = ft.values[k] - lt.values[k];
                let diff = (-m.u().values[k]).exp() * (dr * dr + dt * dt);
                r.values[k] * diff + two * tn.values[k]
            })
            .collect(),
    };
    let fb = m.restrict(f, Closure::Mirror);
    let boundary = m
        .geodesic_curvature()
        .zip_map(&m.tangential_grad_norm_sq(&fb), |k, g| k * g);
    Ok(-m.integrate_volume(&interior) - two * m.integrate_boundary(&boundary))
}

/// Evolution rate of the W-functional.
pub fn dw_dt_rhs<T: Real>(m: &ConformalMetric<T>, wp: WParams<T>, t: T) -> Result<T> {
    let tau = wp.tau(t)?;
    let r = m.scalar_curvature();
    let l = log_curvature(&r)?;
    let two = lit::<T>(2.0);
    let tens = soliton_tensor(m, &r, T::one() / tau, &l, Closure::Extrapolate);
    let tn = m.tensor_norm_sq(&tens);
    let interior = m.integrate_volume(&r.zip_map(&tn, |a, b| a * b));
    let rb = m.restrict(&r, Closure::Extrapolate);
    let lb = m.restrict(&l, Closure::Extrapolate);
    let grad = m.tangential_grad_norm_sq(&lb);
    let inv_tau2 = T::one() / (tau * tau);
    let kappa = m.geodesic_curvature();
    let bterm = BoundaryField {
        values: (0..kappa.values.len())
            .map(|j| kappa.values[j] * (rb.values[j] * grad.values[j] + inv_tau2))
            .collect(),
    };
    Ok(two * tau * interior + two * tau * m.integrate_boundary(&bterm))
}

/// `sqrt(∫‖½Rg + ∇²f − ½R̄g‖² dv)`.
pub fn soliton_residual_l2<T: Real>(m: &ConformalMetric<T>, f: &ScalarField<T>) -> T {
    let r = m.scalar_curvature();
    let r_bar = m.integrate_volume(&r) / m.volume();
    let t = soliton_tensor(m, &r, r_bar, f, Closure::Mirror);
    m.integrate_volume(&m.tensor_norm_sq(&t)).max(T::zero()).sqrt()
}

/// `d𝓔/dt` as `∫((ΔR) log R + R²) dv − v R̄²`.
pub fn de_dt_laplacian_form<T: Real>(m: &ConformalMetric<T>) -> Result<T> {
    let r = m.scalar_curvature();
    let l = log_curvature(&r)?;
    let lap = m.laplace_beltrami(&r, Closure::Extrapolate);
    let total = m.integrate_volume(&r);
    let v = m.volume();
    let integrand = ScalarField {
        values: (0..r.values.len())
            .map(|k| lap.values[k] * l.values[k] + r.values[k] * r.values[k])
            .collect(),
    };
    Ok(m.integrate_volume(&integrand) - total * total / v)
}

/// `d𝓔/dt` as `∫(R − ‖∇log R‖²) R dv − v R̄²`.
pub fn de_dt_gradient_form<T: Real>(m: &ConformalMetric<T>) -> Result<T> {
    let r = m.scalar_curvature();
    let l = log_curvature(&r)?;
    let ll = m.metric_grad_norm_sq(&l, Closure::Extrapolate);
    let total = m.integrate_volume(&r);
    let v = m.volume();
    let integrand = r.zip_map(&ll, |a, b| (a - b) * a);
    Ok(m.integrate_volume(&integrand) - total * total / v)
}

/// `(𝓦, τ d𝓔/dt − 𝓔 − 4πχ log τ + τ v R̄² − log R̄ ∫R dv)`.
///
/// `de_dt = None` uses [`de_dt_gradient_form`].
pub fn relation_sides<T: Real>(m: &ConformalMetric<T>, wp: WParams<T>, t: T, de_dt: Option<T>) -> Result<(T, T)> {
    let tau = wp.tau(t)?;
    let w = w_functional(m, wp, t)?;
    let e = hamilton_entropy(m)?;
    let de = match de_dt {
        Some(v) => v,
        None => de_dt_gradient_form(m)?,
    };
    let total = m.integrate_volume(&m.scalar_curvature());
    let v = m.volume();
    let r_bar = total / v;
    let expr = tau * de - e - four_pi_chi::<T>() * tau.ln() + tau * v * r_bar * r_bar - r_bar.ln() * total;
    Ok((w, expr))
}

/// `|𝓦 − [τ d𝓔/dt − 𝓔 − 4πχ log τ + τ v R̄² − log R̄ ∫R dv]|`.
pub fn relation_residual<T: Real>(m: &ConformalMetric<T>, wp: WParams<T>, t: T, de_dt: Option<T>) -> Result<T> {
    let (w, expr) = relation_sides(m, wp, t, de_dt)?;
    Ok((w - expr).abs())
}

/// Hamilton entropy rewritten through Gauss–Bonnet and the volume law, one
/// value per record. Requires `v(M) = 4πχ` at the first record.
pub fn entropy_euler_form<T: Real>(traj: &FlowTrajectory<T>) -> Result<Vec<T>> {
    let recs = &traj.records;
    let Some(first) = recs.first() else {
        return Err(Error::Usage("trajectory has no records".into()));
    };
    let fpc = four_pi_chi::<T>();
    if ((first.v_m - fpc) / fpc).abs() > lit::<T>(0.01) {
        return Err(Error::Domain(format!(
            "initial volume {} differs from 4πχ by more than 1%",
            first.v_m
        )));
    }
    let two_pi_chi = lit::<T>(0.5) * fpc;
    let half = lit::<T>(0.5);
    let mut acc = T::zero();
    let mut out = Vec::with_capacity(recs.len());
    for (k, rec) in recs.iter().enumerate() {
        if k > 0 {
            let prev = &recs[k - 1];
            acc = acc + half * (rec.t - prev.t) * (rec.total_kappa + prev.total_kappa);
        }
        let frac = T::one() - rec.total_kappa / two_pi_chi;
        let num = (T::one() - rec.t) + acc / two_pi_chi;
        if !(num > T::zero() && frac > T::zero()) {
            return Err(Error::Domain("Euler form logarithm argument is not positive".into()));
        }
        out.push(rec.n_partial + fpc * frac * (num / frac).ln());
    }
    Ok(out)
}

/// Assembles the full record for a snapshot.
pub fn record<T: Real>(m: &ConformalMetric<T>, wp: WParams<T>, t: T) -> Result<EntropyRecord<T>> {
    let sol: NeumannSolution<T> = elliptic::potential_f(m)?;
    record_with_potential(m, wp, t, &sol.f)
}

pub fn record_with_potential<T: Real>(
    m: &ConformalMetric<T>,
    wp: WParams<T>,
    t: T,
    f: &ScalarField<T>,
) -> Result<EntropyRecord<T>> {
    let tau = wp.tau(t)?;
    let r = m.scalar_curvature();
    let kappa = m.geodesic_curvature();
    let n = n_partial(m)?;
    let rp = r_partial(m)?;
    let v = m.volume();
    Ok(EntropyRecord {
        t,
        tau,
        v_m: v,
        r_bar: m.integrate_volume(&r) / v,
        min_r: r.min(),
        e_partial: hamilton_entropy(m)?,
        n_partial: n,
        r_partial: rp,
        w_partial: w_functional(m, wp, t)?,
        de_dt_rhs: de_dt_rhs(m, f)?,
        dw_dt_rhs: dw_dt_rhs(m, wp, t)?,
        gauss_bonnet_res: m.gauss_bonnet_residual(),
        kappa_min: kappa.min(),
        kappa_max: kappa.max(),
        total_kappa: m.integrate_boundary(&kappa),
        soliton_residual_l2: soliton_residual_l2(m, f),
    })
}
