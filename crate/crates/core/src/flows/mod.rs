//! Continuous-time reference dynamics, integrated with classical fixed-step RK4.
//!
//! * `OnManifold`: `ẋ = −∇f̃(x)`. Leaves `Q` invariant.
//! * `Extended`: `ẋ = −∇f̃(x) − ∇V(x)`. Makes `Q` attractive, with `V̇ = −‖∇V‖²`.
//! * `TwoTimeScale`: `ẋ = −∇f̃(x) − J (JᵀJ)⁻¹ z` with `z = h(x)/ε`, so `ż = −z/ε`.
//!
//! The integrator is a measurement tool. Its own truncation error is what the
//! drift checks observe, and `dt` is exposed for convergence-in-`dt` studies.

mod assumptions;

pub use assumptions::{check_assumptions, estimate_lipschitz, AssumptionCheck, AssumptionReport};

use nalgebra::DVector;

use crate::error::{check_finite_vec, Error, Result};
use crate::geometry::{GeometryEval, GramFactor};
use crate::problem::Problem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowKind {
    OnManifold,
    Extended,
    TwoTimeScale,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSpec {
    pub kind: FlowKind,
    /// Time scale of the constraint dynamics; required for `TwoTimeScale` only.
    pub epsilon: Option<f64>,
    pub t_end: f64,
    pub dt: f64,
}

impl FlowSpec {
    pub const DEFAULT_DT: f64 = 1e-3;

    pub fn new(kind: FlowKind, t_end: f64, dt: f64) -> Self {
        Self {
            kind,
            epsilon: None,
            t_end,
            dt,
        }
    }

    pub fn two_time_scale(epsilon: f64, t_end: f64, dt: f64) -> Self {
        Self {
            kind: FlowKind::TwoTimeScale,
            epsilon: Some(epsilon),
            t_end,
            dt,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= self.dt && self.t_end.is_finite()) {
            return bad(format!(
                "t_end must be at least dt, got t_end = {} with dt = {}",
                self.t_end, self.dt
            ));
        }
        if self.kind == FlowKind::TwoTimeScale {
            let eps = match self.epsilon {
                Some(eps) if eps > 0.0 && eps.is_finite() => eps,
                Some(eps) => return bad(format!("epsilon must be positive, got {eps}")),
                None => return bad("the two-time-scale flow needs epsilon".into()),
            };
            // The z-dynamics have time constant ε.
            if self.dt > eps / 5.0 {
                return bad(format!("dt = {} exceeds epsilon/5 = {}", self.dt, eps / 5.0));
            }
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        // Tolerate t_end/dt landing a hair above an integer.
        (self.t_end / self.dt * (1.0 - 1e-12)).ceil() as usize
    }
}

/// The right-hand side of the selected flow at an evaluated point.
pub fn vector_field(spec: &FlowSpec, eval: &GeometryEval) -> Result<DVector<f64>> {
    match spec.kind {
        FlowKind::OnManifold => Ok(-&eval.grad_ftilde),
        FlowKind::Extended => Ok(-(&eval.grad_ftilde + &eval.grad_v)),
        FlowKind::TwoTimeScale => {
            let eps = spec
                .epsilon
                .ok_or_else(|| Error::InvalidConfig("the two-time-scale flow needs epsilon".into()))?;
            let gram = GramFactor::new(&eval.jac_h)?;
            let z = &eval.h_val / eps;
            Ok(-(&eval.grad_ftilde + &eval.jac_h * gram.solve_vec(&z)))
        }
    }
}

/// Samples of one integrated trajectory. All vectors have the same length.
#[derive(Debug, Clone)]
pub struct FlowTrace {
    pub kind: FlowKind,
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub f_vals: Vec<f64>,
    pub v_vals: Vec<f64>,
    pub feas_norms: Vec<f64>,
    pub grad_v_norms: Vec<f64>,
    pub grad_ftilde_norms: Vec<f64>,
    /// `‖h‖/ε`, for the two-time-scale flow only.
    pub z_norms: Option<Vec<f64>>,
}

impl FlowTrace {
    fn new(kind: FlowKind) -> Self {
        Self {
            kind,
            times: Vec::new(),
            states: Vec::new(),
            f_vals: Vec::new(),
            v_vals: Vec::new(),
            feas_norms: Vec::new(),
            grad_v_norms: Vec::new(),
            grad_ftilde_norms: Vec::new(),
            z_norms: (kind == FlowKind::TwoTimeScale).then(Vec::new),
        }
    }

    fn record(&mut self, t: f64, eval: &GeometryEval, epsilon: Option<f64>) {
        let feas = eval.h_val.norm();
        self.times.push(t);
        self.states.push(eval.x.clone());
        self.f_vals.push(eval.f_val);
        self.v_vals.push(eval.v);
        self.feas_norms.push(feas);
        self.grad_v_norms.push(eval.grad_v.norm());
        self.grad_ftilde_norms.push(eval.grad_ftilde.norm());
        if let (Some(z), Some(eps)) = (self.z_norms.as_mut(), epsilon) {
            z.push(feas / eps);
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("a trace always holds the initial state")
    }

    pub fn max_feas_norm(&self) -> f64 {
        self.feas_norms.iter().copied().fold(0.0, f64::max)
    }
}

/// Integrates the flow over `[0, t_end]`, recording every step. The last step
/// is shortened so the trace ends exactly at `t_end`.
pub fn integrate(problem: &Problem, x0: &DVector<f64>, spec: &FlowSpec) -> Result<FlowTrace> {
    spec.validate()?;
    let field = |x: &DVector<f64>| -> Result<DVector<f64>> {
        let eval = problem.evaluate(x)?;
        vector_field(spec, &eval)
    };

    let mut trace = FlowTrace::new(spec.kind);
    let mut eval = problem.evaluate(x0)?;
    trace.record(0.0, &eval, spec.epsilon);
    let steps = spec.steps();
    for i in 0..steps {
        let t = i as f64 * spec.dt;
        let h = if i + 1 == steps { spec.t_end - t } else { spec.dt };
        let x = &eval.x;
        let k1 = vector_field(spec, &eval)?;
        let k2 = field(&(x + (h / 2.0) * &k1))?;
        let k3 = field(&(x + (h / 2.0) * &k2))?;
        let k4 = field(&(x + h * &k3))?;
        let next = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        check_finite_vec(&next, "flow state")?;
        eval = problem.evaluate(&next)?;
        let t_next = if i + 1 == steps { spec.t_end } else { t + h };
        trace.record(t_next, &eval, spec.epsilon);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SolverConfig;
    use crate::descent::{solve, Termination};
    use crate::problems::builtin;
    use nalgebra::dvector;

    fn sphere() -> Problem {
        builtin("sphere").unwrap()
    }

    #[test]
    fn field_examples() {
        let p = sphere();
        let on = FlowSpec::new(FlowKind::OnManifold, 1.0, 1e-3);
        let ext = FlowSpec::new(FlowKind::Extended, 1.0, 1e-3);
        let tts = FlowSpec::two_time_scale(0.1, 1.0, 1e-3);

        let e = p.evaluate(&dvector![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(vector_field(&on, &e).unwrap(), dvector![0.0, -4.0, -4.0]);
        assert_eq!(vector_field(&tts, &e).unwrap(), vector_field(&on, &e).unwrap());

        let e = p.evaluate(&dvector![0.0, 0.0, 2.0]).unwrap();
        assert_eq!(vector_field(&ext, &e).unwrap(), dvector![-6.0, -4.0, -12.0]);
    }

    #[test]
    fn spec_validation() {
        assert!(FlowSpec::new(FlowKind::Extended, 1.0, 0.0).validate().is_err());
        assert!(FlowSpec::new(FlowKind::Extended, 1e-4, 1e-3).validate().is_err());
        assert!(FlowSpec::new(FlowKind::TwoTimeScale, 1.0, 1e-3).validate().is_err());
        assert!(FlowSpec::two_time_scale(0.01, 1.0, 0.01).validate().is_err());
        assert!(FlowSpec::two_time_scale(0.01, 1.0, 0.002).validate().is_ok());
        assert!(FlowSpec::two_time_scale(-0.01, 1.0, 0.001).validate().is_err());
    }

    #[test]
    fn trace_lengths_agree_and_end_at_t_end() {
        let p = sphere();
        let tr = integrate(
            &p,
            &dvector![0.0, 0.0, 2.0],
            &FlowSpec::two_time_scale(0.05, 0.1025, 0.01),
        )
        .unwrap();
        assert_eq!(tr.len(), 12);
        for len in [
            tr.states.len(),
            tr.f_vals.len(),
            tr.v_vals.len(),
            tr.feas_norms.len(),
            tr.z_norms.as_ref().unwrap().len(),
        ] {
            assert_eq!(len, tr.len());
        }
        assert_eq!(*tr.times.last().unwrap(), 0.1025);
        let tr = integrate(
            &p,
            &dvector![0.0, 0.0, 2.0],
            &FlowSpec::new(FlowKind::Extended, 0.3, 0.1),
        )
        .unwrap();
        assert_eq!(tr.len(), 4);
        assert!(tr.z_norms.is_none());
    }

    #[test]
    fn on_manifold_flow_stays_on_sphere_and_descends() {
        let p = sphere();
        let x0 = dvector![0.0, 0.0, 1.0];
        let tr = integrate(&p, &x0, &FlowSpec::new(FlowKind::OnManifold, 10.0, 1e-3)).unwrap();
        assert!(tr.max_feas_norm() <= 1e-6);
        for w in tr.f_vals.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn extended_flow_converges_monotonically() {
        let p = sphere();
        let tr = integrate(
            &p,
            &dvector![0.0, 0.0, 2.0],
            &FlowSpec::new(FlowKind::Extended, 10.0, 1e-3),
        )
        .unwrap();
        let tail = tr.v_vals.iter().position(|v| *v <= 1e-10).expect("V reaches 1e-10");
        for w in tr.v_vals[..=tail].windows(2) {
            assert!(w[1] < w[0]);
        }
        assert!(*tr.v_vals.last().unwrap() <= 1e-10);
    }

    #[test]
    fn extended_flow_dissipation_law() {
        let p = sphere();
        let dt = 1e-3;
        let tr = integrate(
            &p,
            &dvector![0.0, 0.0, 2.0],
            &FlowSpec::new(FlowKind::Extended, 10.0, dt),
        )
        .unwrap();
        for i in 1..tr.len() - 1 {
            let dv = (tr.v_vals[i + 1] - tr.v_vals[i - 1]) / (2.0 * dt);
            let expected = -tr.grad_v_norms[i].powi(2);
            assert!(
                (dv - expected).abs() <= 0.05 * expected.abs() + 1e-8,
                "t = {}",
                tr.times[i]
            );
        }
    }

    fn log_slopes(tr: &FlowTrace, floor: f64) -> Vec<(f64, f64)> {
        let z = tr.z_norms.as_ref().unwrap();
        (0..tr.len() - 1)
            .filter(|&i| z[i + 1] > floor)
            .map(|i| {
                (
                    tr.times[i],
                    (z[i + 1].ln() - z[i].ln()) / (tr.times[i + 1] - tr.times[i]),
                )
            })
            .collect()
    }

    #[test]
    fn two_time_scale_envelope() {
        let p = sphere();
        let eps = 0.01;
        let tr = integrate(
            &p,
            &dvector![0.0, 0.0, 2.0],
            &FlowSpec::two_time_scale(eps, 0.2, eps / 10.0),
        )
        .unwrap();
        let z = tr.z_norms.as_ref().unwrap();
        for (t, zt) in tr.times.iter().zip(z) {
            assert!(*zt <= 1.05 * z[0] * (-t / eps).exp());
        }
    }

    #[test]
    fn two_time_scale_exponential_rate_on_flat_constraint() {
        // Affine constraint: RK4 leaves no tangential drift in h, so the law holds down to 1e-10.
        let p = Problem::builder("plane", 3, 1)
            .cost(|x| x.norm_squared() + x[0], |x| 2.0 * x + dvector![1.0, 0.0, 0.0])
            .constraints(
                |x| dvector![x[0] + 2.0 * x[1] - x[2] - 1.0],
                |_| nalgebra::DMatrix::from_column_slice(3, 1, &[1.0, 2.0, -1.0]),
            )
            .build()
            .unwrap();
        let eps = 0.01;
        let tr = integrate(
            &p,
            &dvector![3.0, -1.0, 2.0],
            &FlowSpec::two_time_scale(eps, 0.3, eps / 10.0),
        )
        .unwrap();
        let slopes = log_slopes(&tr, 1e-10);
        assert!(slopes.len() > 250);
        for (t, slope) in slopes {
            assert!((slope + 1.0 / eps).abs() <= 0.02 / eps, "slope {slope} at t = {t}");
        }
    }

    #[test]
    fn two_time_scale_exponential_rate_on_sphere() {
        // On a curved manifold the tangential RK4 error feeds h at O(dt⁵) per step,
        // so the law is checked above that floor, and the floor shrinks with dt.
        let p = sphere();
        let eps = 0.01;
        let x0 = dvector![0.0, 0.0, 2.0];
        let coarse = integrate(&p, &x0, &FlowSpec::two_time_scale(eps, 0.2, eps / 10.0)).unwrap();
        for (t, slope) in log_slopes(&coarse, 1e-4) {
            assert!((slope + 1.0 / eps).abs() <= 0.02 / eps, "slope {slope} at t = {t}");
        }
        let fine = integrate(&p, &x0, &FlowSpec::two_time_scale(eps, 0.2, eps / 40.0)).unwrap();
        for (t, slope) in log_slopes(&fine, 1e-6) {
            assert!((slope + 1.0 / eps).abs() <= 0.02 / eps, "slope {slope} at t = {t}");
        }
    }

    #[test]
    fn two_time_scale_on_manifold_matches_on_manifold_flow() {
        let p = sphere();
        let x0 = dvector![0.0, 0.6, 0.8];
        let a = integrate(&p, &x0, &FlowSpec::two_time_scale(0.05, 1.0, 1e-3)).unwrap();
        let b = integrate(&p, &x0, &FlowSpec::new(FlowKind::OnManifold, 1.0, 1e-3)).unwrap();
        assert!((a.final_state() - b.final_state()).norm() <= 1e-9);
    }

    #[test]
    fn discrete_limit_matches_on_manifold_flow() {
        let p = sphere();
        let x0 = dvector![0.0, 0.6, 0.8];
        let report = solve(&p, &x0, &SolverConfig::default()).unwrap();
        assert_eq!(report.termination, Termination::Converged);
        let tr = integrate(&p, &x0, &FlowSpec::new(FlowKind::OnManifold, 50.0, 1e-3)).unwrap();
        assert!((tr.final_state() - report.x_star).norm() <= 1e-5);
    }

    #[test]
    fn rejects_non_finite_start() {
        let p = sphere();
        let err = integrate(
            &p,
            &dvector![f64::NAN, 0.0, 1.0],
            &FlowSpec::new(FlowKind::Extended, 1.0, 0.1),
        );
        assert!(matches!(err, Err(Error::NonFinite(_))));
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let p = sphere();
        let err = integrate(&p, &DVector::zeros(3), &FlowSpec::new(FlowKind::Extended, 1.0, 0.1));
        assert!(matches!(err, Err(Error::RankDeficient { .. })));
    }
}
