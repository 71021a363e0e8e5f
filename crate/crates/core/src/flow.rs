//! Ricci flow `∂ₜu = −R` with the Neumann curvature condition.
//!
//! The boundary condition `R_ν = 0` is imposed through the ghost ring of `u`:
//! before every right-hand-side evaluation the ghost values are chosen so that
//! the one-sided second-order `∂_r R` at `r = 1` vanishes. `R` on the last
//! ring is affine in its ghost value, so the Newton solve per boundary node
//! converges in one or two iterations.
//!
//! The angular part of `Δ₀u` is Fourier-filtered on the innermost rings (see
//! [`PolarFilter`]); without it the explicit step would be limited by the
//! arc spacing `r₀Δθ` at the pole.

use std::sync::Arc;

use crate::entropy::{self, EntropyRecord, WParams};
use crate::error::{Error, Result};
use crate::geometry::ConformalMetric;
use crate::grid::{PolarFilter, PolarGrid, ScalarField};
use crate::scalar::{lit, Real};

/// Maximum Newton iterations of the ghost-ring solve.
pub const MAX_GHOST_ITERATIONS: usize = 20;

#[derive(Clone, Debug)]
pub struct FlowState<T: Real> {
    pub t: T,
    pub metric: ConformalMetric<T>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowSchedule {
    pub t_end: f64,
    pub cfl_safety: f64,
    pub record_every: usize,
    pub max_steps: usize,
}

impl FlowSchedule {
    pub fn new(t_end: f64, cfl_safety: f64, record_every: usize) -> Self {
        Self {
            t_end,
            cfl_safety,
            record_every,
            max_steps: 10_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be positive, got {}", self.t_end)));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::Config(format!(
                "cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            )));
        }
        if self.record_every == 0 || self.max_steps == 0 {
            return Err(Error::Config("record_every and max_steps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Completed,
    PositivityLost,
    StepLimit,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Completed => "completed",
            Termination::PositivityLost => "positivity_lost",
            Termination::StepLimit => "step_limit",
        }
    }
}

/// Recorded states of one flow, with one entropy record per snapshot.
#[derive(Clone, Debug)]
pub struct FlowTrajectory<T: Real> {
    pub snapshots: Vec<FlowState<T>>,
    pub records: Vec<EntropyRecord<T>>,
    pub termination: Termination,
    pub w_horizon: T,
    pub steps: usize,
}

impl<T: Real> FlowTrajectory<T> {
    pub fn times(&self) -> Vec<T> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn grid(&self) -> &PolarGrid<T> {
        self.snapshots[0].metric.grid()
    }

    /// Largest gap between consecutive records.
    pub fn record_spacing(&self) -> T {
        self.snapshots
            .windows(2)
            .map(|w| w[1].t - w[0].t)
            .fold(T::zero(), T::max)
    }
}

/// Explicit integrator bound to one grid.
#[derive(Clone, Debug)]
pub struct Integrator<T: Real> {
    grid: Arc<PolarGrid<T>>,
    filter: PolarFilter<T>,
}

impl<T: Real> Integrator<T> {
    pub fn new(grid: Arc<PolarGrid<T>>) -> Self {
        let filter = PolarFilter::new(&grid);
        Self { grid, filter }
    }

    pub fn filter(&self) -> &PolarFilter<T> {
        &self.filter
    }

    /// Scalar curvature as seen by the flow.
    pub fn curvature(&self, m: &ConformalMetric<T>) -> ScalarField<T> {
        m.scalar_curvature_filtered(Some(&self.filter))
    }

    fn tolerance(&self, r: &ScalarField<T>) -> T {
        let g = &self.grid;
        let floor = T::epsilon() * lit::<T>(1e3) / g.dr();
        lit::<T>(1e-8).max(floor) * (T::one() + r.max_abs())
    }

    /// Sets the ghost ring so that the one-sided `∂_r R` vanishes on `r = 1`.
    pub fn enforce(&self, m: &ConformalMetric<T>) -> Result<ConformalMetric<T>> {
        let g = &self.grid;
        let n = g.n_r();
        let h = g.dr();
        let r = g.radii();
        let outer_face = r[n - 1] + lit::<T>(0.5) * h;
        let half = lit::<T>(0.5);
        let three = lit::<T>(3.0);
        let mut metric = m.clone();
        let mut worst = T::zero();
        for _ in 0..MAX_GHOST_ITERATIONS {
            let curv = self.curvature(&metric);
            let tol = self.tolerance(&curv);
            let mut ghost = metric.ghost().clone();
            worst = T::zero();
            for j in 0..g.n_theta() {
                let a = curv.at(g, n - 1, j);
                let b = curv.at(g, n - 2, j);
                let c = curv.at(g, n - 3, j);
                let target = half * (three * b - c);
                let residual = (a - target) * lit::<T>(2.0) / h;
                worst = worst.max(residual.abs());
                let slope = -(-metric.u().at(g, n - 1, j)).exp() * outer_face / (r[n - 1] * h * h);
                ghost.values[j] = ghost.values[j] - (a - target) / slope;
            }
            if worst <= tol {
                return Ok(metric);
            }
            if ghost.values.iter().any(|v| !v.is_finite()) {
                break;
            }
            metric = metric.with_ghost(ghost);
        }
        Err(Error::BoundaryClosure {
            node: 0,
            residual: worst.to_f64().unwrap_or(f64::NAN),
        })
    }

    /// `−R` after boundary enforcement.
    pub fn rhs(&self, m: &ConformalMetric<T>) -> Result<ScalarField<T>> {
        let m = self.enforce(m)?;
        Ok(self.curvature(&m).map(|v| -v))
    }

    /// Stable explicit step for the current metric.
    pub fn cfl_dt(&self, m: &ConformalMetric<T>, safety: T) -> T {
        let g = &self.grid;
        let spacing = g.dr().min(self.filter.effective_angular_spacing(g));
        let min_eu = m.u().min().exp();
        safety * min_eu * spacing * spacing / lit::<T>(4.0)
    }

    /// One classical RK4 step with enforcement before every stage.
    pub fn step(&self, s: &FlowState<T>, dt: T) -> Result<FlowState<T>> {
        if dt == T::zero() {
            return Ok(s.clone());
        }
        let m0 = self.enforce(&s.metric)?;
        let u0 = m0.u();
        let half = lit::<T>(0.5);
        let stage = |k: &ScalarField<T>, c: T| -> ScalarField<T> { u0.zip_map(k, |u, d| u + c * d) };

        let k1 = self.curvature(&m0).map(|v| -v);
        let m2 = self.enforce(&m0.with_u(stage(&k1, half * dt)))?;
        let k2 = self.curvature(&m2).map(|v| -v);
        let m3 = self.enforce(&m2.with_u(stage(&k2, half * dt)))?;
        let k3 = self.curvature(&m3).map(|v| -v);
        let m4 = self.enforce(&m3.with_u(stage(&k3, dt)))?;
        let k4 = self.curvature(&m4).map(|v| -v);

        let sixth = dt / lit::<T>(6.0);
        let two = lit::<T>(2.0);
        let u1 = ScalarField {
            values: (0..self.grid.len())
                .map(|k| {
                    u0.values[k]
                        + sixth * (k1.values[k] + two * k2.values[k] + two * k3.values[k] + k4.values[k])
                })
                .collect(),
        };
        if !u1.is_finite() {
            return Err(Error::Positivity {
                t: (s.t + dt).to_f64().unwrap_or(f64::NAN),
                min_r: f64::NAN,
            });
        }
        let metric = self.enforce(&m4.with_u(u1))?;
        let min_r = self.curvature(&metric).min();
        if !(min_r > T::zero()) {
            return Err(Error::Positivity {
                t: (s.t + dt).to_f64().unwrap_or(f64::NAN),
                min_r: min_r.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(FlowState { t: s.t + dt, metric })
    }

    /// Integrates from `initial` and records entropy data along the way.
    pub fn run(&self, initial: &ConformalMetric<T>, sched: FlowSchedule, w_horizon: T) -> Result<FlowTrajectory<T>> {
        sched.validate()?;
        let t_end = lit::<T>(sched.t_end);
        if !(w_horizon > t_end) {
            return Err(Error::Domain(format!(
                "w_horizon {w_horizon} must exceed t_end {t_end}"
            )));
        }
        let metric = self.enforce(initial)?;
        let min_r = self.curvature(&metric).min();
        if !(min_r > T::zero()) {
            return Err(Error::Domain(format!(
                "initial metric must have positive curvature, min R = {min_r}"
            )));
        }
        let wp = WParams { w_horizon };
        let safety = lit::<T>(sched.cfl_safety);
        let mut state = FlowState { t: T::zero(), metric };
        let mut traj = FlowTrajectory {
            snapshots: Vec::new(),
            records: Vec::new(),
            termination: Termination::Completed,
            w_horizon,
            steps: 0,
        };
        self.push(&mut traj, &state, wp)?;
        // Stop once the remaining interval is negligible against the last step.
        let slack = lit::<T>(1e-9);
        let mut since_record = 0;
        while t_end - state.t > slack * t_end {
            if traj.steps >= sched.max_steps {
                traj.termination = Termination::StepLimit;
                break;
            }
            let dt = self.cfl_dt(&state.metric, safety).min(t_end - state.t);
            match self.step(&state, dt) {
                Ok(next) => state = next,
                Err(Error::Positivity { .. }) => {
                    traj.termination = Termination::PositivityLost;
                    break;
                }
                Err(e) => return Err(e),
            }
            traj.steps += 1;
            since_record += 1;
            let done = t_end - state.t <= slack * t_end;
            if since_record == sched.record_every || done {
                self.push(&mut traj, &state, wp)?;
                since_record = 0;
            }
        }
        Ok(traj)
    }

    fn push(&self, traj: &mut FlowTrajectory<T>, state: &FlowState<T>, wp: WParams<T>) -> Result<()> {
        let record = entropy::record(&state.metric, wp, state.t)?;
        traj.snapshots.push(state.clone());
        traj.records.push(record);
        Ok(())
    }
}

/// See [`Integrator::enforce`].
pub fn enforce_curvature_neumann<T: Real>(m: &ConformalMetric<T>) -> Result<ConformalMetric<T>> {
    Integrator::new(m.shared_grid()).enforce(m)
}

/// See [`Integrator::rhs`].
pub fn rhs<T: Real>(m: &ConformalMetric<T>) -> Result<ScalarField<T>> {
    Integrator::new(m.shared_grid()).rhs(m)
}

/// See [`Integrator::cfl_dt`].
pub fn cfl_dt<T: Real>(m: &ConformalMetric<T>, safety: T) -> T {
    Integrator::new(m.shared_grid()).cfl_dt(m, safety)
}

/// See [`Integrator::step`].
pub fn step<T: Real>(s: &FlowState<T>, dt: T) -> Result<FlowState<T>> {
    Integrator::new(s.metric.shared_grid()).step(s, dt)
}

/// See [`Integrator::run`].
pub fn run<T: Real>(initial: &ConformalMetric<T>, sched: FlowSchedule, w_horizon: T) -> Result<FlowTrajectory<T>> {
    Integrator::new(initial.shared_grid()).run(initial, sched, w_horizon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn cap(n_r: usize, n_theta: usize, c: f64) -> ConformalMetric<f64> {
        let g = PolarGrid::shared(GridSpec::new(n_r, n_theta)).unwrap();
        ConformalMetric::from_fn(g, move |r: f64, _| 4.0f64.ln() - 2.0 * (1.0 + c * r * r).ln()).unwrap()
    }

    #[test]
    fn enforcement_keeps_interior_and_zeroes_flux() {
        let m = cap(32, 16, 0.5);
        let perturbed = m.with_u(m.u().map(|u| u));
        let out = enforce_curvature_neumann(&perturbed).unwrap();
        assert_eq!(out.u().values, m.u().values);
        let integ = Integrator::new(m.shared_grid());
        let r = integ.curvature(&out);
        let d = out.grid().radial_derivative_at_boundary(&r);
        assert!(d.max_abs() < 1e-8 * (1.0 + r.max_abs()));
    }

    #[test]
    fn hemisphere_ghost_is_close_to_analytic() {
        let m = cap(64, 1, 1.0);
        let out = enforce_curvature_neumann(&m).unwrap();
        let diff = out.ghost().zip_map(m.ghost(), |a, b| a - b).max_abs();
        assert!(diff < 1e-5, "ghost moved by {diff}");
    }

    #[test]
    fn flat_disk_rhs_vanishes() {
        let g = PolarGrid::<f64>::shared(GridSpec::new(16, 16)).unwrap();
        let m = ConformalMetric::flat(g);
        assert!(rhs(&m).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn flat_disk_cfl_formula() {
        let g = PolarGrid::shared(GridSpec::new(64, 1)).unwrap();
        let m = ConformalMetric::flat(g);
        let dt = cfl_dt(&m, 0.5);
        assert!((dt - 0.5 * (1.0f64 / 64.0).powi(2) / 4.0).abs() < 1e-18);
    }

    #[test]
    fn zero_step_is_identity() {
        let m = cap(16, 1, 1.0);
        let s = FlowState { t: 0.1, metric: m.clone() };
        let out = step(&s, 0.0).unwrap();
        assert_eq!(out.metric.u().values, m.u().values);
        assert_eq!(out.t, 0.1);
    }

    #[test]
    fn flat_disk_step_loses_positivity() {
        let g = PolarGrid::<f64>::shared(GridSpec::new(16, 1)).unwrap();
        let s = FlowState { t: 0.0, metric: ConformalMetric::flat(g) };
        assert!(matches!(step(&s, 1e-4), Err(Error::Positivity { .. })));
    }

    #[test]
    fn hemisphere_step_tracks_closed_form() {
        let m = cap(64, 1, 1.0);
        let integ = Integrator::new(m.shared_grid());
        let mut s = FlowState { t: 0.0, metric: integ.enforce(&m).unwrap() };
        for _ in 0..50 {
            let dt = integ.cfl_dt(&s.metric, 0.5);
            s = integ.step(&s, dt).unwrap();
        }
        let r_bar = s.metric.integrate_volume(&s.metric.scalar_curvature()) / s.metric.volume();
        let exact = 2.0 / (1.0 - 2.0 * s.t);
        assert!((r_bar - exact).abs() / exact < 1e-3);
    }

    #[test]
    fn run_rejects_bad_inputs() {
        let m = cap(16, 1, 1.0);
        assert!(run(&m, FlowSchedule::new(0.1, 0.5, 10), 0.05).is_err());
        let g = PolarGrid::<f64>::shared(GridSpec::new(16, 1)).unwrap();
        let flat = ConformalMetric::flat(g);
        assert!(run(&flat, FlowSchedule::new(0.1, 0.5, 10), 0.5).is_err());
    }
}
