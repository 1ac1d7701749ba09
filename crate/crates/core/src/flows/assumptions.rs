//! Sampling diagnostics for the hypotheses behind the extended flow:
//! the only critical points of `V` lie on `Q` (A1), `V` does not increase
//! along the on-manifold field (A2), and the sublevel sets of `V` are
//! compact (A3). None of these are proofs; they report evidence.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::geometry::GramFactor;
use crate::problem::Problem;

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionCheck {
    /// Lower corner of the sampling box.
    pub lo: DVector<f64>,
    /// Upper corner of the sampling box.
    pub hi: DVector<f64>,
    pub count: usize,
    pub seed: u64,
    /// Sublevel `V ≤ level` used for the compactness heuristic.
    pub level: f64,
}

impl AssumptionCheck {
    /// The cube `[−half_width, half_width]ⁿ`.
    pub fn cube(n: usize, half_width: f64, count: usize) -> Self {
        Self {
            lo: DVector::from_element(n, -half_width),
            hi: DVector::from_element(n, half_width),
            count,
            seed: 0,
            level: 1.0,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng, scale: f64) -> DVector<f64> {
        let mid = (&self.lo + &self.hi) / 2.0;
        DVector::from_fn(self.lo.len(), |i, _| {
            let half = scale * (self.hi[i] - self.lo[i]) / 2.0;
            mid[i] + rng.random_range(-1.0..=1.0) * half
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub samples: usize,
    /// Points where the Jacobian was rank deficient; skipped by the other checks.
    pub rank_deficient: usize,
    /// Points with `‖∇V‖ ≤ 1e-6·‖h‖` while `‖h‖ > 1e-6`.
    pub a1_hits: Vec<DVector<f64>>,
    /// Points where `∇V·(−∇f̃)` is positive beyond roundoff.
    pub a2_hits: Vec<DVector<f64>>,
    /// Samples pulled onto `Q` by Gauss-Newton.
    pub manifold_points: usize,
    /// Largest `‖∇V‖` over those points.
    pub max_grad_v_on_manifold: f64,
    /// Sampled diameter of `{V ≤ level}` inside the box.
    pub sublevel_diameter: f64,
    /// The same inside the box doubled about its centre.
    pub sublevel_diameter_doubled: f64,
    /// Set when the sublevel set keeps growing with the box.
    pub a3_suspect: bool,
}

impl AssumptionReport {
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.a1_hits.is_empty() {
            out.push(format!(
                "{} sampled points look like critical points of V off the manifold",
                self.a1_hits.len()
            ));
        }
        if !self.a2_hits.is_empty() {
            out.push(format!(
                "{} sampled points have V increasing along the on-manifold field",
                self.a2_hits.len()
            ));
        }
        if self.a3_suspect {
            out.push(format!(
                "sublevel set of V grows with the sampling box (diameter {:.3} -> {:.3}); it may be unbounded",
                self.sublevel_diameter, self.sublevel_diameter_doubled
            ));
        }
        out
    }
}

const A3_GROWTH: f64 = 1.5;

fn diameter(points: &[DVector<f64>]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max((a - b).norm());
        }
    }
    best
}

/// Newton steps on `h` along the Jacobian's range. `None` if it fails to converge.
fn project_to_manifold(problem: &Problem, mut x: DVector<f64>) -> Option<DVector<f64>> {
    for _ in 0..50 {
        let h = problem.constraints(&x).ok()?;
        if h.norm() <= 1e-13 {
            return Some(x);
        }
        let jac = problem.constraint_jacobian(&x).ok()?;
        let gram = GramFactor::new(&jac).ok()?;
        x -= &jac * gram.solve_vec(&h);
    }
    None
}

fn sublevel_diameter(problem: &Problem, check: &AssumptionCheck, scale: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(check.seed ^ 0x5eed);
    let inside: Vec<_> = (0..check.count)
        .map(|_| check.sample(&mut rng, scale))
        .filter(|x| problem.penalty_at(x).is_ok_and(|v| v <= check.level))
        .collect();
    diameter(&inside)
}

/// Samples the box and reports evidence about A1-A3. Never fails; points where
/// evaluation fails are counted or skipped.
pub fn check_assumptions(problem: &Problem, check: &AssumptionCheck) -> AssumptionReport {
    let mut rng = ChaCha8Rng::seed_from_u64(check.seed);
    let mut report = AssumptionReport {
        samples: check.count,
        rank_deficient: 0,
        a1_hits: Vec::new(),
        a2_hits: Vec::new(),
        manifold_points: 0,
        max_grad_v_on_manifold: 0.0,
        sublevel_diameter: 0.0,
        sublevel_diameter_doubled: 0.0,
        a3_suspect: false,
    };

    for _ in 0..check.count {
        let x = check.sample(&mut rng, 1.0);
        let eval = match problem.evaluate(&x) {
            Ok(e) => e,
            Err(Error::RankDeficient { .. }) => {
                report.rank_deficient += 1;
                continue;
            }
            Err(_) => continue,
        };
        let feas = eval.h_val.norm();
        if feas > 1e-6 && eval.grad_v.norm() <= 1e-6 * feas {
            report.a1_hits.push(x.clone());
        }
        let rate = -eval.grad_v.dot(&eval.grad_ftilde);
        let scale = eval.grad_v.norm() * eval.grad_ftilde.norm();
        if rate > 1e-10 * (1.0 + scale) {
            report.a2_hits.push(x.clone());
        }
        if let Some(q) = project_to_manifold(problem, x) {
            if let Ok(e) = problem.evaluate(&q) {
                report.manifold_points += 1;
                report.max_grad_v_on_manifold = report.max_grad_v_on_manifold.max(e.grad_v.norm());
            }
        }
    }

    report.sublevel_diameter = sublevel_diameter(problem, check, 1.0);
    report.sublevel_diameter_doubled = sublevel_diameter(problem, check, 2.0);
    report.a3_suspect = report.sublevel_diameter_doubled > A3_GROWTH * report.sublevel_diameter;
    report
}

/// Largest sampled `‖∇f(x) − ∇f(y)‖ / ‖x − y‖` over `pairs` random pairs in the box.
/// A lower bound on the true Lipschitz constant.
pub fn estimate_lipschitz(problem: &Problem, check: &AssumptionCheck, pairs: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(check.seed ^ 0x11b5);
    let mut best = 0.0f64;
    for _ in 0..pairs {
        let x = check.sample(&mut rng, 1.0);
        let y = check.sample(&mut rng, 1.0);
        let dist = (&x - &y).norm();
        if dist == 0.0 {
            continue;
        }
        if let (Ok(gx), Ok(gy)) = (problem.cost_gradient(&x), problem.cost_gradient(&y)) {
            best = best.max((gx - gy).norm() / dist);
        }
    }
    best
}
