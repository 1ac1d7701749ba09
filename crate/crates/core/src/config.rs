use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fd::FD_STEP;

/// How the descent iteration picks its step length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    /// Backtracking on the penalty `V` alone. Stalls from feasible starting
    /// points, where tangential moves raise `V` at second order.
    PenaltyArmijo,
    /// Backtracking that must satisfy both the penalty test and a
    /// sufficient-decrease test on the frozen-multiplier merit
    /// `Φₖ(x) = f(x) − λₖᵀh(x) + ½‖h(x)‖²`, whose negative gradient at `xₖ`
    /// is exactly the descent direction. When that joint test only admits
    /// steps below `min_step`, the merit test alone decides.
    Safeguarded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Backtracking factor, in (0, 1).
    pub beta: f64,
    /// Initial trial step, in (0, 1].
    pub s: f64,
    /// Sufficient-decrease fraction.
    pub sigma: f64,
    /// Lipschitz bound of `∇f`; every step stays below `2 / lipschitz_f`.
    pub lipschitz_f: f64,
    pub tol_grad: f64,
    pub tol_feas: f64,
    pub max_iters: usize,
    pub max_backtracks: usize,
    pub step_rule: StepRule,
    /// Below this the penalty-driven step counts as collapsed (safeguarded rule only).
    pub min_step: f64,
    /// Restart radius around an escapable stationary point; `None` means `1e-3·(1 + ‖x*‖)`.
    pub escape_eps: Option<f64>,
    pub max_restarts: usize,
    /// Positive-curvature threshold; `None` means `1e-6·(1 + ‖∇²L‖)`.
    pub eig_tol: Option<f64>,
    pub fd_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            beta: 0.5,
            s: 1.0,
            sigma: 1e-4,
            lipschitz_f: 2.0,
            tol_grad: 1e-8,
            tol_feas: 1e-8,
            max_iters: 50_000,
            max_backtracks: 60,
            step_rule: StepRule::Safeguarded,
            min_step: 1e-6,
            escape_eps: None,
            max_restarts: 3,
            eig_tol: None,
            fd_step: FD_STEP,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        if !(self.s > 0.0 && self.s <= 1.0) {
            return bad(format!("s must lie in (0, 1], got {}", self.s));
        }
        for (name, v) in [
            ("sigma", self.sigma),
            ("lipschitz_f", self.lipschitz_f),
            ("tol_grad", self.tol_grad),
            ("tol_feas", self.tol_feas),
            ("min_step", self.min_step),
            ("fd_step", self.fd_step),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if let Some(eps) = self.escape_eps {
            if !(eps > 0.0 && eps.is_finite()) {
                return bad(format!("escape_eps must be positive, got {eps}"));
            }
        }
        if let Some(tol) = self.eig_tol {
            if !(tol >= 0.0 && tol.is_finite()) {
                return bad(format!("eig_tol must be non-negative, got {tol}"));
            }
        }
        Ok(())
    }

    /// First trial step: `min(s, 0.99·2/L_f)`, strictly below `2/L_f`.
    pub fn initial_step(&self) -> f64 {
        self.s.min(0.99 * 2.0 / self.lipschitz_f)
    }
}
