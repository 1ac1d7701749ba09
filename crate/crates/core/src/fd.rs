//! Central finite differences, used as oracles for user-supplied derivatives
//! and as the Hessian fallback of the second-order classification.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_finite_mat, check_finite_vec, Error, Result};

/// Default step for gradients and Jacobians.
pub const FD_STEP: f64 = 1e-6;
/// Default step for Hessians.
pub const FD_HESSIAN_STEP: f64 = 1e-4;

fn check_step(step: f64) -> Result<()> {
    if step > 0.0 && step.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "finite-difference step must be positive, got {step}"
        )))
    }
}

/// Component `i` is `(g(x + δeᵢ) − g(x − δeᵢ)) / 2δ`.
pub fn fd_gradient<F>(g: F, x: &DVector<f64>, step: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> f64,
{
    check_step(step)?;
    let mut probe = x.clone();
    let grad = DVector::from_iterator(
        x.len(),
        (0..x.len()).map(|i| {
            probe[i] = x[i] + step;
            let up = g(&probe);
            probe[i] = x[i] - step;
            let down = g(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * step)
        }),
    );
    check_finite_vec(&grad, "finite-difference gradient")?;
    Ok(grad)
}

/// Jacobian in the `n × k` layout of [`crate::Problem::constraint_jacobian`]:
/// row `i` holds the derivative of every component along `eᵢ`.
pub fn fd_jacobian<F>(h: F, x: &DVector<f64>, step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    check_step(step)?;
    let n = x.len();
    let k = h(x).len();
    let mut jac = DMatrix::zeros(n, k);
    let mut probe = x.clone();
    for i in 0..n {
        probe[i] = x[i] + step;
        let up = h(&probe);
        probe[i] = x[i] - step;
        let down = h(&probe);
        probe[i] = x[i];
        if up.len() != k || down.len() != k {
            return Err(Error::DimensionMismatch {
                what: "vector map output",
                expected: k.to_string(),
                got: up.len().max(down.len()).to_string(),
            });
        }
        let row = (up - down) / (2.0 * step);
        jac.row_mut(i).copy_from(&row.transpose());
    }
    check_finite_mat(&jac, "finite-difference Jacobian")?;
    Ok(jac)
}

/// Symmetrized central-difference Hessian.
pub fn fd_hessian<F>(g: F, x: &DVector<f64>, step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> f64,
{
    check_step(step)?;
    let n = x.len();
    let mut hess = DMatrix::zeros(n, n);
    let mut probe = x.clone();
    let mut eval = |i: usize, si: f64, j: usize, sj: f64| {
        probe.copy_from(x);
        probe[i] += si * step;
        probe[j] += sj * step;
        g(&probe)
    };
    for i in 0..n {
        for j in i..n {
            let v = (eval(i, 1.0, j, 1.0) - eval(i, 1.0, j, -1.0) - eval(i, -1.0, j, 1.0) + eval(i, -1.0, j, -1.0))
                / (4.0 * step * step);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let hess = (&hess + hess.transpose()) * 0.5;
    check_finite_mat(&hess, "finite-difference Hessian")?;
    Ok(hess)
}
