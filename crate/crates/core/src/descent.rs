//! The discrete descent iteration
//!
//! ```text
//! x_{k+1} = x_k − t ∇f̃(x_k) − t ∇V(x_k)
//! ```
//!
//! The two components of the step are orthogonal, so the step vanishes only
//! when both the projected gradient and the penalty gradient do, i.e. at a
//! feasible first-order KKT point.
//!
//! Step lengths come from backtracking `t = βᵐ·min(s, 0.99·2/L_f)`. The
//! penalty test `V(x + td) − V(x) ≤ σ t ∇V(x)·d` keeps `V` non-increasing.
//! Close to the manifold that test alone degenerates: a tangential move
//! raises `V` by `O(t²‖∇f̃‖²)` while the first-order slope is `O(‖h‖²)`, so
//! only vanishing steps pass. [`StepRule::Safeguarded`] therefore also
//! requires sufficient decrease of the frozen-multiplier merit
//! `Φₖ(x) = f(x) − λₖᵀh(x) + ½‖h(x)‖²`, for which `d = −∇Φₖ(xₖ)`, and lets
//! the merit test decide alone once the joint test collapses below `min_step`.

use nalgebra::DVector;

use crate::config::{SolverConfig, StepRule};
use crate::error::{Error, Result};
use crate::escape::{self, SecondOrderReport};
use crate::geometry::GeometryEval;
use crate::problem::Problem;

/// Which test accepted a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    /// Penalty test (jointly with the merit test under the safeguarded rule).
    Penalty,
    /// Merit test alone.
    Merit,
    /// Terminal record, no step taken.
    Terminal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateRecord {
    pub k: usize,
    pub x: DVector<f64>,
    pub f_val: f64,
    /// `½‖h(x)‖²`.
    pub v_val: f64,
    pub grad_ftilde_norm: f64,
    pub feas_norm: f64,
    /// Accepted step length from this iterate (0 on the terminal record).
    pub step: f64,
    pub backtracks: usize,
    pub step_kind: StepKind,
}

impl IterateRecord {
    fn new(k: usize, eval: &GeometryEval, step: Step) -> Self {
        Self {
            k,
            x: eval.x.clone(),
            f_val: eval.f_val,
            v_val: eval.v,
            grad_ftilde_norm: eval.grad_ftilde.norm(),
            feas_norm: eval.h_val.norm(),
            step: step.t,
            backtracks: step.backtracks,
            step_kind: step.kind,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIters,
    RankDeficient,
    LineSearchFailed,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIters => "max-iters",
            Termination::RankDeficient => "rank-deficient",
            Termination::LineSearchFailed => "line-search-failed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub x_star: DVector<f64>,
    pub f_star: f64,
    /// Multiplier in the `∇f = ∇f̃ + ∇h·λ` convention.
    pub lambda_star: DVector<f64>,
    pub stationarity: f64,
    pub feasibility: f64,
    /// Steps taken, summed over restarts.
    pub iterations: usize,
    pub restarts: usize,
    pub termination: Termination,
    /// Records of the final run (one per iterate, terminal record included).
    pub trajectory: Vec<IterateRecord>,
    /// Second-order classification of a converged point.
    pub second_order: Option<SecondOrderReport>,
}

/// `d = −(∇f̃ + ∇V)`.
pub fn step_direction(eval: &GeometryEval) -> DVector<f64> {
    -(&eval.grad_ftilde + &eval.grad_v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub t: f64,
    /// The exponent `m` in `t = βᵐ t₀` of the test that accepted the step.
    pub backtracks: usize,
    pub kind: StepKind,
}

const TERMINAL: Step = Step {
    t: 0.0,
    backtracks: 0,
    kind: StepKind::Terminal,
};

fn check_direction(eval: &GeometryEval, d: &DVector<f64>) -> Result<()> {
    if d.len() != eval.x.len() {
        return Err(Error::DimensionMismatch {
            what: "descent direction",
            expected: eval.x.len().to_string(),
            got: d.len().to_string(),
        });
    }
    if d.iter().all(|c| *c == 0.0) {
        return Err(Error::InvalidConfig("zero descent direction".into()));
    }
    Ok(())
}

/// Backtracking on the penalty alone: the largest `t = βᵐ t₀` with
/// `V(x + td) − V(x) ≤ σ t ∇V(x)·d`.
pub fn armijo_step(problem: &Problem, eval: &GeometryEval, d: &DVector<f64>, config: &SolverConfig) -> Result<Step> {
    check_direction(eval, d)?;
    let slope = eval.grad_v.dot(d);
    let mut t = config.initial_step();
    for m in 0..=config.max_backtracks {
        let trial = &eval.x + t * d;
        if problem.penalty_at(&trial)? - eval.v <= config.sigma * t * slope {
            return Ok(Step {
                t,
                backtracks: m,
                kind: StepKind::Penalty,
            });
        }
        t *= config.beta;
    }
    Err(Error::LineSearchFailed {
        backtracks: config.max_backtracks,
    })
}

/// Frozen-multiplier merit `Φₖ` anchored at one iterate.
struct Merit<'a> {
    problem: &'a Problem,
    lambda: &'a DVector<f64>,
    base: f64,
    slope: f64,
    slack: f64,
}

impl<'a> Merit<'a> {
    fn new(problem: &'a Problem, eval: &'a GeometryEval, d: &DVector<f64>) -> Self {
        let base = eval.f_val - eval.lambda.dot(&eval.h_val) + eval.v;
        Self {
            problem,
            lambda: &eval.lambda,
            base,
            slope: -d.norm_squared(),
            // Φ differences below a few ulps of Φ itself are noise.
            slack: 4.0 * f64::EPSILON * (1.0 + base.abs()),
        }
    }

    fn value(&self, y: &DVector<f64>, h: &DVector<f64>) -> Result<f64> {
        Ok(self.problem.cost(y)? - self.lambda.dot(h) + 0.5 * h.norm_squared())
    }

    fn accepts(&self, value: f64, t: f64, sigma: f64) -> bool {
        value - self.base <= sigma * t * self.slope + self.slack
    }
}

/// Backtracking on the merit `Φₖ` alone.
pub fn merit_step(problem: &Problem, eval: &GeometryEval, d: &DVector<f64>, config: &SolverConfig) -> Result<Step> {
    check_direction(eval, d)?;
    let merit = Merit::new(problem, eval, d);
    let mut t = config.initial_step();
    for m in 0..=config.max_backtracks {
        let trial = &eval.x + t * d;
        let h = problem.constraints(&trial)?;
        if merit.accepts(merit.value(&trial, &h)?, t, config.sigma) {
            return Ok(Step {
                t,
                backtracks: m,
                kind: StepKind::Merit,
            });
        }
        t *= config.beta;
    }
    Err(Error::LineSearchFailed {
        backtracks: config.max_backtracks,
    })
}

/// Joint penalty and merit backtracking, falling back to the merit test
/// alone when the joint test would need a step below `config.min_step`.
pub fn safeguarded_step(
    problem: &Problem,
    eval: &GeometryEval,
    d: &DVector<f64>,
    config: &SolverConfig,
) -> Result<Step> {
    check_direction(eval, d)?;
    let merit = Merit::new(problem, eval, d);
    let v_slope = eval.grad_v.dot(d);
    let mut t = config.initial_step();
    for m in 0..=config.max_backtracks {
        if t < config.min_step {
            break;
        }
        let trial = &eval.x + t * d;
        let h = problem.constraints(&trial)?;
        let v_ok = 0.5 * h.norm_squared() - eval.v <= config.sigma * t * v_slope;
        if v_ok && merit.accepts(merit.value(&trial, &h)?, t, config.sigma) {
            return Ok(Step {
                t,
                backtracks: m,
                kind: StepKind::Penalty,
            });
        }
        t *= config.beta;
    }
    merit_step(problem, eval, d, config)
}

pub(crate) fn select_step(
    problem: &Problem,
    eval: &GeometryEval,
    d: &DVector<f64>,
    config: &SolverConfig,
) -> Result<Step> {
    match config.step_rule {
        StepRule::PenaltyArmijo => armijo_step(problem, eval, d, config),
        StepRule::Safeguarded => safeguarded_step(problem, eval, d, config),
    }
}

/// Runs the descent iteration from `x0` until both KKT residuals are within
/// tolerance or `max_iters` steps have been taken. Converged points are
/// classified by [`escape::classify`]; a `Converged` report certifies first-
/// order conditions only.
///
/// Failures at `x0` are returned as errors. Rank deficiency or an exhausted
/// line search later in the run end it with the matching [`Termination`] and
/// keep the trajectory so far.
pub fn solve(problem: &Problem, x0: &DVector<f64>, config: &SolverConfig) -> Result<SolveReport> {
    config.validate()?;
    let mut eval = problem.evaluate(x0)?;
    let mut trajectory = Vec::new();
    let mut k = 0;
    let termination = loop {
        let kkt = eval.kkt();
        if kkt.within(config.tol_grad, config.tol_feas) {
            trajectory.push(IterateRecord::new(k, &eval, TERMINAL));
            break Termination::Converged;
        }
        if k >= config.max_iters {
            trajectory.push(IterateRecord::new(k, &eval, TERMINAL));
            break Termination::MaxIters;
        }
        let d = step_direction(&eval);
        let step = match select_step(problem, &eval, &d, config) {
            Ok(step) => step,
            Err(Error::LineSearchFailed { .. }) => {
                trajectory.push(IterateRecord::new(k, &eval, TERMINAL));
                break Termination::LineSearchFailed;
            }
            Err(e) => return Err(e),
        };
        trajectory.push(IterateRecord::new(k, &eval, step));
        let next = &eval.x + step.t * &d;
        match problem.evaluate(&next) {
            Ok(e) => eval = e,
            Err(Error::RankDeficient { .. }) => {
                // The last record claims a step that was never completed.
                if let Some(last) = trajectory.last_mut() {
                    *last = IterateRecord::new(k, &eval, TERMINAL);
                }
                break Termination::RankDeficient;
            }
            Err(e) => return Err(e),
        }
        k += 1;
    };

    let second_order = match termination {
        Termination::Converged => Some(escape::classify(problem, &eval.x, config.eig_tol)?),
        _ => None,
    };
    let kkt = eval.kkt();
    Ok(SolveReport {
        x_star: eval.x.clone(),
        f_star: eval.f_val,
        lambda_star: eval.lambda.clone(),
        stationarity: kkt.stationarity,
        feasibility: kkt.feasibility,
        iterations: k,
        restarts: 0,
        termination,
        trajectory,
        second_order,
    })
}
