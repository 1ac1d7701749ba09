//! Problem representation: a cost `f: Rⁿ → R`, an equality constraint map
//! `h: Rⁿ → Rᵏ`, and their derivatives.
//!
//! Derivatives are always supplied by the caller. The finite-difference
//! routines in [`crate::fd`] exist to validate them, never to replace them
//! inside the solver. Second derivatives are optional; when absent, the
//! second-order classification falls back to finite differences and says so.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_finite_mat, check_finite_vec, Error, Result};
use crate::geometry::GeometryEval;

pub type ScalarMap = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
pub type VectorMap = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MatrixMap = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// An equality-constrained problem `min f(x) s.t. h(x) = 0`.
///
/// The constraint Jacobian is stored `n × k`: column `i` is `∇hᵢ(x)`.
/// Problems are immutable once built and cheap to clone, so one value can be
/// shared by any number of concurrent solves.
#[derive(Clone)]
pub struct Problem {
    name: String,
    n: usize,
    k: usize,
    cost: ScalarMap,
    cost_grad: VectorMap,
    constraints: VectorMap,
    constraint_jac: MatrixMap,
    cost_hess: Option<MatrixMap>,
    constraint_hess: Option<Vec<MatrixMap>>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("k", &self.k)
            .field("analytic_hessians", &self.has_analytic_hessians())
            .finish()
    }
}

impl Problem {
    pub fn builder(name: impl Into<String>, n: usize, k: usize) -> ProblemBuilder {
        ProblemBuilder {
            name: name.into(),
            n,
            k,
            cost: None,
            cost_grad: None,
            constraints: None,
            constraint_jac: None,
            cost_hess: None,
            constraint_hess: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Ambient dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of constraints.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn has_analytic_hessians(&self) -> bool {
        self.cost_hess.is_some() && self.constraint_hess.is_some()
    }

    pub(crate) fn check_point(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                what: "point",
                expected: self.n.to_string(),
                got: x.len().to_string(),
            });
        }
        check_finite_vec(x, "point")
    }

    pub fn cost(&self, x: &DVector<f64>) -> Result<f64> {
        let v = (self.cost)(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("cost"))
        }
    }

    pub fn cost_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let g = (self.cost_grad)(x);
        expect_len(&g, self.n, "cost gradient")?;
        check_finite_vec(&g, "cost gradient")?;
        Ok(g)
    }

    pub fn constraints(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let h = (self.constraints)(x);
        expect_len(&h, self.k, "constraint values")?;
        check_finite_vec(&h, "constraint values")?;
        Ok(h)
    }

    /// `n × k` Jacobian with columns `∇hᵢ(x)`.
    pub fn constraint_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let j = (self.constraint_jac)(x);
        expect_shape(&j, self.n, self.k, "constraint Jacobian")?;
        check_finite_mat(&j, "constraint Jacobian")?;
        Ok(j)
    }

    /// Analytic cost Hessian, if one was supplied.
    pub fn cost_hessian(&self, x: &DVector<f64>) -> Option<Result<DMatrix<f64>>> {
        self.cost_hess.as_ref().map(|hess| {
            let m = hess(x);
            expect_shape(&m, self.n, self.n, "cost Hessian")?;
            check_finite_mat(&m, "cost Hessian")?;
            Ok(m)
        })
    }

    /// Analytic Hessian of constraint `i`, if supplied.
    pub fn constraint_hessian(&self, i: usize, x: &DVector<f64>) -> Option<Result<DMatrix<f64>>> {
        self.constraint_hess.as_ref().map(|all| {
            let m = all[i](x);
            expect_shape(&m, self.n, self.n, "constraint Hessian")?;
            check_finite_mat(&m, "constraint Hessian")?;
            Ok(m)
        })
    }

    /// Cost as a bare closure, for the finite-difference oracles.
    pub fn cost_map(&self) -> ScalarMap {
        Arc::clone(&self.cost)
    }

    pub fn constraint_map(&self) -> VectorMap {
        Arc::clone(&self.constraints)
    }

    /// Scalar map `x ↦ hᵢ(x)`.
    pub fn constraint_component(&self, i: usize) -> ScalarMap {
        let h = Arc::clone(&self.constraints);
        Arc::new(move |x| h(x)[i])
    }

    /// Penalty `V(x) = ½‖h(x)‖²` without the rest of the evaluation bundle.
    pub fn penalty_at(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(crate::geometry::penalty(&self.constraints(x)?))
    }

    /// Full geometric evaluation bundle at `x`.
    pub fn evaluate(&self, x: &DVector<f64>) -> Result<GeometryEval> {
        GeometryEval::compute(self, x)
    }
}

fn expect_len(v: &DVector<f64>, len: usize, what: &'static str) -> Result<()> {
    if v.len() == len {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected: len.to_string(),
            got: v.len().to_string(),
        })
    }
}

fn expect_shape(m: &DMatrix<f64>, rows: usize, cols: usize, what: &'static str) -> Result<()> {
    if m.shape() == (rows, cols) {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected: format!("{rows}x{cols}"),
            got: format!("{}x{}", m.nrows(), m.ncols()),
        })
    }
}

pub struct ProblemBuilder {
    name: String,
    n: usize,
    k: usize,
    cost: Option<ScalarMap>,
    cost_grad: Option<VectorMap>,
    constraints: Option<VectorMap>,
    constraint_jac: Option<MatrixMap>,
    cost_hess: Option<MatrixMap>,
    constraint_hess: Option<Vec<MatrixMap>>,
}

impl ProblemBuilder {
    pub fn cost<F, G>(mut self, f: F, grad: G) -> Self
    where
        F: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        self.cost = Some(Arc::new(f));
        self.cost_grad = Some(Arc::new(grad));
        self
    }

    pub fn constraints<H, J>(mut self, h: H, jac: J) -> Self
    where
        H: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        J: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.constraints = Some(Arc::new(h));
        self.constraint_jac = Some(Arc::new(jac));
        self
    }

    pub fn cost_hessian<F>(mut self, hess: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.cost_hess = Some(Arc::new(hess));
        self
    }

    /// One Hessian per constraint, in constraint order.
    pub fn constraint_hessians(mut self, hess: Vec<MatrixMap>) -> Self {
        self.constraint_hess = Some(hess);
        self
    }

    pub fn build(self) -> Result<Problem> {
        if self.n == 0 || self.k == 0 {
            return Err(Error::InvalidConfig(
                "problem needs n > 0 and at least one constraint".into(),
            ));
        }
        if self.k >= self.n {
            return Err(Error::InvalidConfig(format!(
                "need k < n for a non-trivial tangent space (n = {}, k = {})",
                self.n, self.k
            )));
        }
        if let Some(h) = &self.constraint_hess {
            if h.len() != self.k {
                return Err(Error::InvalidConfig(format!(
                    "expected {} constraint Hessians, got {}",
                    self.k,
                    h.len()
                )));
            }
        }
        let missing = |what: &str| Error::InvalidConfig(format!("problem `{}` has no {what}", self.name));
        Ok(Problem {
            cost: self.cost.ok_or_else(|| missing("cost"))?,
            cost_grad: self.cost_grad.ok_or_else(|| missing("cost gradient"))?,
            constraints: self.constraints.ok_or_else(|| missing("constraints"))?,
            constraint_jac: self.constraint_jac.ok_or_else(|| missing("constraint Jacobian"))?,
            cost_hess: self.cost_hess,
            constraint_hess: self.constraint_hess,
            name: self.name,
            n: self.n,
            k: self.k,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn plane() -> ProblemBuilder {
        Problem::builder("plane", 2, 1)
            .cost(|x| x.norm_squared(), |x| 2.0 * x)
            .constraints(
                |x| dvector![x[0] - 1.0],
                |_| DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            )
    }

    #[test]
    fn rejects_k_not_less_than_n() {
        let err = Problem::builder("square", 2, 2)
            .cost(|_| 0.0, |x| x.clone())
            .constraints(|x| x.clone(), |_| DMatrix::identity(2, 2))
            .build()
            .unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn missing_cost_is_an_error() {
        let err = Problem::builder("nocost", 2, 1)
            .constraints(|x| dvector![x[0]], |_| DMatrix::from_column_slice(2, 1, &[1.0, 0.0]))
            .build()
            .unwrap_err();
        assert!(err.to_string().contains("no cost"));
    }

    #[test]
    fn wrong_point_dimension() {
        let p = plane().build().unwrap();
        let err = p.evaluate(&dvector![1.0, 2.0, 3.0]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn non_finite_cost_gradient_detected() {
        let p = Problem::builder("nan", 2, 1)
            .cost(|_| 0.0, |_| dvector![f64::NAN, 0.0])
            .constraints(|x| dvector![x[0]], |_| DMatrix::from_column_slice(2, 1, &[1.0, 0.0]))
            .build()
            .unwrap();
        assert_eq!(
            p.evaluate(&dvector![0.0, 0.0]).unwrap_err(),
            Error::NonFinite("cost gradient")
        );
    }

    #[test]
    fn badly_shaped_jacobian_detected() {
        let p = Problem::builder("bad", 2, 1)
            .cost(|_| 0.0, |x| x.clone())
            .constraints(|x| dvector![x[0]], |_| DMatrix::from_column_slice(1, 2, &[1.0, 0.0]))
            .build()
            .unwrap();
        assert!(matches!(
            p.evaluate(&dvector![0.0, 0.0]),
            Err(Error::DimensionMismatch {
                what: "constraint Jacobian",
                ..
            })
        ));
    }
}
