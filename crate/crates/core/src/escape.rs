//! Second-order classification of converged points, and restarts away from
//! stationary points that are not minima.
//!
//! At a KKT point with `−∇f = ∇h Λ`, linearizing the extended flow along the
//! tangent space gives `δẋ = −∇²L(x*, Λ) δx` with `L = f + Λᵀh`. A positive
//! eigenvalue of `−P ∇²L P` means the point is unstable (a saddle or a
//! maximum) and its eigenvector is a tangent direction to restart along.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::config::SolverConfig;
use crate::descent::{self, SolveReport, Termination};
use crate::error::{check_finite_mat, Result};
use crate::fd::{fd_hessian, FD_HESSIAN_STEP};
use crate::problem::Problem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    /// No positive tangent curvature of `−∇²L` was found. Not a proof of
    /// strict second-order sufficiency.
    LocalMinCandidate,
    EscapableStationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurvatureSource {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone)]
pub struct SecondOrderReport {
    /// `Λ*` in the `−∇f = ∇h Λ` convention.
    pub multiplier: DVector<f64>,
    pub hess_lagrangian: DMatrix<f64>,
    /// `−P ∇²L P`.
    pub projected_neg_hess: DMatrix<f64>,
    pub eigenvalues: DVector<f64>,
    /// Columns are unit eigenvectors matching `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    pub max_eig: f64,
    pub eig_tol: f64,
    /// Unit tangent direction of positive curvature, when one exists.
    pub escape_dir: Option<DVector<f64>>,
    pub classification: Classification,
    pub curvature: CurvatureSource,
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// `∇²f(x) + Σᵢ Λᵢ ∇²hᵢ(x)`, symmetrized. Uses the problem's Hessians when it
/// has them and finite differences otherwise.
pub fn lagrangian_hessian(
    problem: &Problem,
    x: &DVector<f64>,
    multiplier: &DVector<f64>,
) -> Result<(DMatrix<f64>, CurvatureSource)> {
    problem.check_point(x)?;
    let analytic = problem.has_analytic_hessians();
    let mut hess = match problem.cost_hessian(x) {
        Some(h) if analytic => h?,
        _ => fd_hessian(&*problem.cost_map(), x, FD_HESSIAN_STEP)?,
    };
    for (i, &mult) in multiplier.iter().enumerate() {
        if mult == 0.0 {
            continue;
        }
        let hi = match problem.constraint_hessian(i, x) {
            Some(h) if analytic => h?,
            _ => fd_hessian(&*problem.constraint_component(i), x, FD_HESSIAN_STEP)?,
        };
        hess += hi * mult;
    }
    let hess = symmetrize(hess);
    check_finite_mat(&hess, "Lagrangian Hessian")?;
    let source = if analytic {
        CurvatureSource::Analytic
    } else {
        CurvatureSource::FiniteDifference
    };
    Ok((hess, source))
}

/// Classifies an approximate KKT point by the largest eigenvalue of
/// `−P ∇²L P`. `eig_tol = None` uses `1e-6·(1 + ‖∇²L‖_F)`.
pub fn classify(problem: &Problem, x_star: &DVector<f64>, eig_tol: Option<f64>) -> Result<SecondOrderReport> {
    let eval = problem.evaluate(x_star)?;
    let multiplier = -&eval.lambda;
    let (hess_lagrangian, curvature) = lagrangian_hessian(problem, x_star, &multiplier)?;
    let p = &eval.projector;
    let projected_neg_hess = symmetrize(-(p * &hess_lagrangian * p));

    let eig = SymmetricEigen::new(projected_neg_hess.clone());
    let (imax, max_eig) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |best, (i, v)| if v > best.1 { (i, v) } else { best },
        );
    let eig_tol = eig_tol.unwrap_or(1e-6 * (1.0 + hess_lagrangian.norm()));

    let escape_dir = (max_eig > eig_tol).then(|| {
        let mut z = p * eig.eigenvectors.column(imax);
        z /= z.norm();
        // Fix the sign so restarts are reproducible across eigensolver versions.
        if z[z.iamax()] < 0.0 {
            z = -z;
        }
        z
    });
    let classification = if escape_dir.is_some() {
        Classification::EscapableStationary
    } else {
        Classification::LocalMinCandidate
    };

    Ok(SecondOrderReport {
        multiplier,
        hess_lagrangian,
        projected_neg_hess,
        eigenvalues: eig.eigenvalues,
        eigenvectors: eig.eigenvectors,
        max_eig,
        eig_tol,
        escape_dir,
        classification,
        curvature,
    })
}

/// [`descent::solve`], restarted from `x* + ε z` whenever it converges to an
/// escapable stationary point, at most `config.max_restarts` times.
pub fn solve_with_escape(problem: &Problem, x0: &DVector<f64>, config: &SolverConfig) -> Result<SolveReport> {
    let mut start = x0.clone();
    let mut restarts = 0;
    let mut iterations = 0;
    loop {
        let mut report = descent::solve(problem, &start, config)?;
        iterations += report.iterations;
        let escape = match (&report.termination, &report.second_order) {
            (Termination::Converged, Some(so)) if restarts < config.max_restarts => so.escape_dir.clone(),
            _ => None,
        };
        match escape {
            Some(z) => {
                let eps = config.escape_eps.unwrap_or(1e-3 * (1.0 + report.x_star.norm()));
                start = &report.x_star + eps * z;
                restarts += 1;
            }
            None => {
                report.iterations = iterations;
                report.restarts = restarts;
                return Ok(report);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::builtin;
    use nalgebra::dvector;

    fn sqrt17() -> f64 {
        17f64.sqrt()
    }

    fn max_point() -> DVector<f64> {
        dvector![3.0, 2.0, 2.0] / sqrt17()
    }

    fn min_point() -> DVector<f64> {
        dvector![-3.0, -2.0, -2.0] / sqrt17()
    }

    #[test]
    fn lagrangian_hessian_examples() {
        let p = builtin("sphere").unwrap();
        let s = sqrt17();
        let (h, src) = lagrangian_hessian(&p, &max_point(), &dvector![-(1.0 + s)]).unwrap();
        assert_eq!(src, CurvatureSource::Analytic);
        assert!((h - DMatrix::identity(3, 3) * (-2.0 * s)).amax() <= 1e-12);

        let (h, _) = lagrangian_hessian(&p, &min_point(), &dvector![s - 1.0]).unwrap();
        assert!((h - DMatrix::identity(3, 3) * (2.0 * s)).amax() <= 1e-12);

        let (h, _) = lagrangian_hessian(&p, &min_point(), &dvector![0.0]).unwrap();
        assert_eq!(h, DMatrix::identity(3, 3) * 2.0);
    }

    #[test]
    fn sphere_maximum_is_escapable() {
        let p = builtin("sphere").unwrap();
        let r = classify(&p, &max_point(), None).unwrap();
        assert_eq!(r.classification, Classification::EscapableStationary);
        assert!((r.max_eig - 2.0 * sqrt17()).abs() <= 1e-6 * 2.0 * sqrt17());
        assert!((r.multiplier[0] + 1.0 + sqrt17()).abs() <= 1e-12);
        let z = r.escape_dir.unwrap();
        assert!((z.norm() - 1.0).abs() <= 1e-14);
        let jac = p.constraint_jacobian(&max_point()).unwrap();
        assert!(jac.tr_mul(&z).amax() <= 1e-8);
        let mut eigs: Vec<f64> = r.eigenvalues.iter().copied().collect();
        eigs.sort_by(f64::total_cmp);
        assert!(eigs[0].abs() <= 1e-10);
        assert!((eigs[1] - 2.0 * sqrt17()).abs() <= 1e-10);
    }

    #[test]
    fn sphere_minimum_is_candidate() {
        let p = builtin("sphere").unwrap();
        let r = classify(&p, &min_point(), None).unwrap();
        assert_eq!(r.classification, Classification::LocalMinCandidate);
        assert!(r.max_eig.abs() <= 1e-10);
        assert!(r.escape_dir.is_none());
    }

    #[test]
    fn positive_definite_lagrangian_is_candidate() {
        // Convex cost, affine constraint: ∇²L = diag(2, 4, 6).
        let p = Problem::builder("bowl", 3, 1)
            .cost(
                |x| x[0] * x[0] + 2.0 * x[1] * x[1] + 3.0 * x[2] * x[2],
                |x| dvector![2.0 * x[0], 4.0 * x[1], 6.0 * x[2]],
            )
            .constraints(
                |x| dvector![x[0] + x[1] + x[2] - 1.0],
                |_| DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 1.0]),
            )
            .build()
            .unwrap();
        let r = classify(&p, &(dvector![6.0, 3.0, 2.0] / 11.0), None).unwrap();
        assert_eq!(r.classification, Classification::LocalMinCandidate);
        assert_eq!(r.curvature, CurvatureSource::FiniteDifference);
    }

    #[test]
    fn eigen_decomposition_reconstructs() {
        let p = builtin("paraboloid").unwrap();
        let r = classify(&p, &dvector![0.4, -0.2, 0.2], None).unwrap();
        let rebuilt = &r.eigenvectors * DMatrix::from_diagonal(&r.eigenvalues) * r.eigenvectors.transpose();
        assert!((rebuilt - &r.projected_neg_hess).amax() <= 1e-10 * (1.0 + r.projected_neg_hess.norm()));
    }

    #[test]
    fn escape_from_sphere_maximum() {
        let p = builtin("sphere").unwrap();
        let r = solve_with_escape(&p, &max_point(), &SolverConfig::default()).unwrap();
        assert_eq!(r.termination, Termination::Converged);
        assert_eq!(r.restarts, 1);
        assert!((r.x_star - min_point()).norm() <= 1e-6);
    }

    #[test]
    fn restart_cap_is_respected() {
        let p = builtin("sphere").unwrap();
        let cfg = SolverConfig {
            max_restarts: 0,
            ..Default::default()
        };
        let r = solve_with_escape(&p, &max_point(), &cfg).unwrap();
        assert_eq!(r.restarts, 0);
        assert_eq!(
            r.second_order.unwrap().classification,
            Classification::EscapableStationary
        );
    }
}
