//! Per-point geometry of the constraint manifold `Q = {x : h(x) = 0}`.
//!
//! With `J = ∇h(x)` (`n × k`, full column rank) and Gram matrix `G = JᵀJ`:
//!
//! * penalty `V = ½‖h‖²` and its gradient `∇V = J h`,
//! * tangent projector `P = I − J G⁻¹ Jᵀ` onto `Ker(Jᵀ)`,
//! * projected gradient `∇f̃ = P ∇f`,
//! * multiplier `λ = G⁻¹ Jᵀ ∇f`, so that `∇f = ∇f̃ + J λ`.
//!
//! Note the sign: at a KKT point written as `−∇f = J Λ`, this module's
//! multiplier is `λ = −Λ`. The escape module performs the conversion.
//!
//! `∇f̃` and `∇V` are orthogonal because `P J = 0`; that orthogonality is what
//! makes the penalty non-increasing along the tangential part of the flow.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::problem::Problem;

/// Gram matrices with reciprocal condition below this are rejected.
pub const MIN_RCOND: f64 = 1e-12;

/// Cholesky factor of `JᵀJ` plus its reciprocal condition number.
#[derive(Debug, Clone)]
pub struct GramFactor {
    chol: Cholesky<f64, Dyn>,
    rcond: f64,
}

impl GramFactor {
    pub fn new(jac: &DMatrix<f64>) -> Result<Self> {
        let gram = jac.tr_mul(jac);
        // k is small; an exact eigen-decomposition is the simplest robust estimate.
        let eigs = SymmetricEigen::new(gram.clone()).eigenvalues;
        let max = eigs.max();
        let min = eigs.min();
        let rcond = if max > 0.0 { (min / max).max(0.0) } else { 0.0 };
        if rcond.is_nan() || rcond < MIN_RCOND {
            return Err(Error::RankDeficient { rcond });
        }
        let chol = gram.cholesky().ok_or(Error::RankDeficient { rcond })?;
        Ok(Self { chol, rcond })
    }

    pub fn rcond(&self) -> f64 {
        self.rcond
    }

    /// `G⁻¹ rhs`.
    pub fn solve_vec(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    pub fn solve_mat(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }
}

/// Everything the solvers need at one point, computed eagerly and once.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryEval {
    pub x: DVector<f64>,
    pub f_val: f64,
    pub h_val: DVector<f64>,
    pub jac_h: DMatrix<f64>,
    pub grad_f: DVector<f64>,
    pub v: f64,
    pub grad_v: DVector<f64>,
    pub projector: DMatrix<f64>,
    pub grad_ftilde: DVector<f64>,
    pub lambda: DVector<f64>,
    /// Condition number estimate of `JᵀJ`.
    pub gram_cond: f64,
}

impl GeometryEval {
    pub fn compute(problem: &Problem, x: &DVector<f64>) -> Result<Self> {
        problem.check_point(x)?;
        let f_val = problem.cost(x)?;
        let h_val = problem.constraints(x)?;
        let jac_h = problem.constraint_jacobian(x)?;
        let grad_f = problem.cost_gradient(x)?;

        let gram = GramFactor::new(&jac_h)?;
        let projector = projector_from(&jac_h, &gram);
        let lambda = gram.solve_vec(&jac_h.tr_mul(&grad_f));
        let grad_ftilde = projected_gradient(&grad_f, &projector);
        let grad_v = &jac_h * &h_val;

        Ok(Self {
            x: x.clone(),
            f_val,
            v: penalty(&h_val),
            h_val,
            grad_v,
            projector,
            grad_ftilde,
            lambda,
            gram_cond: 1.0 / gram.rcond(),
            jac_h,
            grad_f,
        })
    }

    pub fn kkt(&self) -> KktResidual {
        kkt_residual(self)
    }
}

/// `½‖h‖²`.
pub fn penalty(h_val: &DVector<f64>) -> f64 {
    0.5 * h_val.norm_squared()
}

fn projector_from(jac: &DMatrix<f64>, gram: &GramFactor) -> DMatrix<f64> {
    let n = jac.nrows();
    let mut p = DMatrix::identity(n, n) - jac * gram.solve_mat(&jac.transpose());
    // Symmetrize away roundoff so Pᵀ = P holds to the last bit.
    let pt = p.transpose();
    p += pt;
    p *= 0.5;
    p
}

/// Orthogonal projector onto `Ker(jacᵀ)`.
pub fn tangent_projector(jac_h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = GramFactor::new(jac_h)?;
    Ok(projector_from(jac_h, &gram))
}

pub fn projected_gradient(grad_f: &DVector<f64>, projector: &DMatrix<f64>) -> DVector<f64> {
    projector * grad_f
}

/// Least-squares multiplier `(JᵀJ)⁻¹ Jᵀ ∇f`, in the `∇f = ∇f̃ + Jλ` convention.
pub fn multiplier_estimate(jac_h: &DMatrix<f64>, grad_f: &DVector<f64>) -> Result<DVector<f64>> {
    let gram = GramFactor::new(jac_h)?;
    Ok(gram.solve_vec(&jac_h.tr_mul(grad_f)))
}

/// First-order optimality residuals: `‖∇f̃‖` and `‖h‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResidual {
    pub stationarity: f64,
    pub feasibility: f64,
}

impl KktResidual {
    pub fn within(&self, tol_grad: f64, tol_feas: f64) -> bool {
        self.stationarity <= tol_grad && self.feasibility <= tol_feas
    }
}

pub fn kkt_residual(eval: &GeometryEval) -> KktResidual {
    KktResidual {
        stationarity: eval.grad_ftilde.norm(),
        feasibility: eval.h_val.norm(),
    }
}
