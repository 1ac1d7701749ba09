//! Built-in benchmark problems and the polynomial problem-definition format.
//!
//! Both built-ins minimize `f(x) = (x₁+3)² + (x₂+2)² + (x₃+2)²` on a surface
//! in R³: the unit sphere `x₁²+x₂²+x₃² − 1 = 0` and the paraboloid
//! `x₁²+x₂² − x₃ = 0`.
//!
//! A problem file is TOML:
//!
//! ```toml
//! name = "tilted-circle"
//! n = 2
//! k = 1
//! cost = [
//!   { coeff = 1.0, powers = [1, 0] },
//! ]
//! constraints = [
//!   [ { coeff = 1.0, powers = [2, 0] }, { coeff = 1.0, powers = [0, 2] }, { coeff = -1.0, powers = [0, 0] } ],
//! ]
//! ```
//!
//! Each term is `coeff · Πᵢ xᵢ^powers[i]`; `powers` has exactly `n` entries.
//! Unknown keys are rejected.

use std::sync::Arc;

use nalgebra::{dvector, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{MatrixMap, Problem};

pub const BUILTIN_NAMES: [&str; 2] = ["sphere", "paraboloid"];

const SHIFT: [f64; 3] = [3.0, 2.0, 2.0];

fn shifted_cost(x: &DVector<f64>) -> f64 {
    (0..3).map(|i| (x[i] + SHIFT[i]).powi(2)).sum()
}

fn shifted_cost_grad(x: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(3, |i, _| 2.0 * (x[i] + SHIFT[i]))
}

/// One of the built-in problems, with analytic first and second derivatives.
pub fn builtin(name: &str) -> Result<Problem> {
    let base = Problem::builder(name, 3, 1)
        .cost(shifted_cost, shifted_cost_grad)
        .cost_hessian(|_| DMatrix::identity(3, 3) * 2.0);
    let problem = match name {
        "sphere" => base
            .constraints(
                |x| dvector![x.norm_squared() - 1.0],
                |x| DMatrix::from_column_slice(3, 1, (2.0 * x).as_slice()),
            )
            .constraint_hessians(vec![Arc::new(|_: &DVector<f64>| DMatrix::identity(3, 3) * 2.0)]),
        "paraboloid" => base
            .constraints(
                |x| dvector![x[0] * x[0] + x[1] * x[1] - x[2]],
                |x| DMatrix::from_column_slice(3, 1, &[2.0 * x[0], 2.0 * x[1], -1.0]),
            )
            .constraint_hessians(vec![Arc::new(|_: &DVector<f64>| {
                DMatrix::from_diagonal(&dvector![2.0, 2.0, 0.0])
            })]),
        other => return Err(Error::UnknownProblem(other.to_string())),
    };
    problem.build()
}

/// Fixed starting points used to regenerate the convergence pictures.
/// These were chosen to span the basins; they are not taken from any published run.
pub fn reproduction_starts(name: &str) -> Result<Vec<DVector<f64>>> {
    match name {
        "sphere" => Ok(vec![
            dvector![0.0, 0.0, 2.0],
            dvector![-1.5, 1.0, 0.5],
            dvector![1.0, 1.0, 1.0] / 3f64.sqrt(),
            dvector![0.2, -1.3, 0.4],
        ]),
        "paraboloid" => Ok(vec![
            dvector![1.0, 1.0, 2.0],
            dvector![-1.0, 1.0, 2.0],
            dvector![0.5, -0.5, 0.5],
            dvector![2.0, 0.0, 4.0],
        ]),
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}

/// `coeff · Πᵢ xᵢ^powers[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

impl Term {
    pub fn new(coeff: f64, powers: &[u32]) -> Self {
        Self {
            coeff,
            powers: powers.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialSpec {
    pub name: String,
    pub n: usize,
    pub k: usize,
    #[serde(default)]
    pub cost: Vec<Term>,
    pub constraints: Vec<Vec<Term>>,
}

impl PolynomialSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let location = match e.span() {
                Some(span) => {
                    let line = text[..span.start].matches('\n').count() + 1;
                    let col = span.start - text[..span.start].rfind('\n').map_or(0, |p| p + 1) + 1;
                    format!("line {line}, column {col}")
                }
                None => "document".to_string(),
            };
            Error::Spec {
                location,
                message: e.message().to_string(),
            }
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Spec {
            location: "document".into(),
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let err = |location: String, message: String| Err(Error::Spec { location, message });
        if self.n == 0 {
            return err("n".into(), "must be positive".into());
        }
        if self.k == 0 || self.k >= self.n {
            return err(
                "k".into(),
                format!("need 0 < k < n, got k = {} with n = {}", self.k, self.n),
            );
        }
        if self.constraints.len() != self.k {
            return err(
                "constraints".into(),
                format!("k = {} but {} constraints are listed", self.k, self.constraints.len()),
            );
        }
        let terms = self
            .cost
            .iter()
            .enumerate()
            .map(|(j, t)| (format!("cost[{j}]"), t))
            .chain(self.constraints.iter().enumerate().flat_map(|(i, c)| {
                c.iter()
                    .enumerate()
                    .map(move |(j, t)| (format!("constraints[{i}][{j}]"), t))
            }));
        for (loc, term) in terms {
            if term.powers.len() != self.n {
                return err(
                    format!("{loc}.powers"),
                    format!("expected {} exponents, got {}", self.n, term.powers.len()),
                );
            }
            if !term.coeff.is_finite() {
                return err(format!("{loc}.coeff"), "must be finite".into());
            }
        }
        Ok(())
    }
}

/// A sum of monomials with analytic derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    n: usize,
    terms: Vec<Term>,
}

impl Polynomial {
    pub fn new(n: usize, terms: Vec<Term>) -> Self {
        Self { n, terms }
    }

    fn monomial(powers: &[u32], x: &DVector<f64>, skip: &[usize]) -> f64 {
        let mut counts = powers.to_vec();
        for &s in skip {
            debug_assert!(counts[s] > 0);
            counts[s] -= 1;
        }
        counts.iter().zip(x.iter()).map(|(&p, &xi)| xi.powi(p as i32)).product()
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coeff * Self::monomial(&t.powers, x, &[]))
            .sum()
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.n);
        for t in &self.terms {
            for j in 0..self.n {
                let pj = t.powers[j];
                if pj > 0 {
                    g[j] += t.coeff * pj as f64 * Self::monomial(&t.powers, x, &[j]);
                }
            }
        }
        g
    }

    pub fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.n, self.n);
        for t in &self.terms {
            for i in 0..self.n {
                for j in i..self.n {
                    let factor = if i == j {
                        let p = t.powers[i];
                        if p < 2 {
                            continue;
                        }
                        (p * (p - 1)) as f64
                    } else {
                        if t.powers[i] == 0 || t.powers[j] == 0 {
                            continue;
                        }
                        (t.powers[i] * t.powers[j]) as f64
                    };
                    let v = t.coeff * factor * Self::monomial(&t.powers, x, &[i, j]);
                    h[(i, j)] += v;
                    if i != j {
                        h[(j, i)] += v;
                    }
                }
            }
        }
        h
    }
}

/// Builds a [`Problem`] with analytic gradients and Hessians from a spec.
pub fn from_spec(spec: &PolynomialSpec) -> Result<Problem> {
    spec.validate()?;
    let n = spec.n;
    let cost = Arc::new(Polynomial::new(n, spec.cost.clone()));
    let cons: Arc<Vec<Polynomial>> = Arc::new(spec.constraints.iter().map(|c| Polynomial::new(n, c.clone())).collect());

    let (c1, c2, c3) = (Arc::clone(&cost), Arc::clone(&cost), cost);
    let (h1, h2) = (Arc::clone(&cons), Arc::clone(&cons));
    let constraint_hess: Vec<MatrixMap> = (0..spec.k)
        .map(|i| {
            let cons = Arc::clone(&cons);
            Arc::new(move |x: &DVector<f64>| cons[i].hessian(x)) as MatrixMap
        })
        .collect();

    Problem::builder(spec.name.clone(), n, spec.k)
        .cost(move |x| c1.value(x), move |x| c2.gradient(x))
        .cost_hessian(move |x| c3.hessian(x))
        .constraints(
            move |x| DVector::from_iterator(h1.len(), h1.iter().map(|p| p.value(x))),
            move |x| {
                let mut jac = DMatrix::zeros(n, h2.len());
                for (i, p) in h2.iter().enumerate() {
                    jac.set_column(i, &p.gradient(x));
                }
                jac
            },
        )
        .constraint_hessians(constraint_hess)
        .build()
}

/// Polynomial encodings of the built-ins, for cross-checking the two routes.
pub fn builtin_spec(name: &str) -> Result<PolynomialSpec> {
    let sq = |i: usize| {
        let mut p = [0u32; 3];
        p[i] = 2;
        Term::new(1.0, &p)
    };
    let cost = vec![
        sq(0),
        sq(1),
        sq(2),
        Term::new(6.0, &[1, 0, 0]),
        Term::new(4.0, &[0, 1, 0]),
        Term::new(4.0, &[0, 0, 1]),
        Term::new(17.0, &[0, 0, 0]),
    ];
    let constraint = match name {
        "sphere" => vec![sq(0), sq(1), sq(2), Term::new(-1.0, &[0, 0, 0])],
        "paraboloid" => vec![sq(0), sq(1), Term::new(-1.0, &[0, 0, 1])],
        other => return Err(Error::UnknownProblem(other.to_string())),
    };
    Ok(PolynomialSpec {
        name: name.to_string(),
        n: 3,
        k: 1,
        cost,
        constraints: vec![constraint],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd::{fd_gradient, fd_jacobian, FD_STEP};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0)))
            .collect()
    }

    #[test]
    fn builtin_examples() {
        let s = builtin("sphere").unwrap();
        assert_eq!((s.n(), s.k()), (3, 1));
        assert_eq!(s.cost(&DVector::zeros(3)).unwrap(), 17.0);
        assert_eq!(s.constraints(&dvector![1.0, 0.0, 0.0]).unwrap(), dvector![0.0]);
        let p = builtin("paraboloid").unwrap();
        assert_eq!(p.constraints(&dvector![1.0, 1.0, 2.0]).unwrap(), dvector![0.0]);
        assert!(s.has_analytic_hessians() && p.has_analytic_hessians());
        assert_eq!(builtin("torus").unwrap_err(), Error::UnknownProblem("torus".into()));
    }

    #[test]
    fn builtin_derivatives_match_finite_differences() {
        for name in BUILTIN_NAMES {
            let p = builtin(name).unwrap();
            for x in random_points(3, 100, 11) {
                let g = p.cost_gradient(&x).unwrap();
                let fd = fd_gradient(&*p.cost_map(), &x, FD_STEP).unwrap();
                assert!((&g - fd).norm() <= 1e-5 * (1.0 + g.norm()));
                let j = p.constraint_jacobian(&x).unwrap();
                let fd = fd_jacobian(&*p.constraint_map(), &x, FD_STEP).unwrap();
                assert!((&j - fd).norm() <= 1e-5 * (1.0 + j.norm()));
            }
        }
    }

    #[test]
    fn spec_route_matches_builtin_route() {
        for name in BUILTIN_NAMES {
            let a = builtin(name).unwrap();
            let b = from_spec(&builtin_spec(name).unwrap()).unwrap();
            for x in random_points(3, 20, 5) {
                let scale = 1.0 + a.cost(&x).unwrap().abs();
                assert!((a.cost(&x).unwrap() - b.cost(&x).unwrap()).abs() <= 1e-12 * scale);
                assert!((a.cost_gradient(&x).unwrap() - b.cost_gradient(&x).unwrap()).amax() <= 1e-12 * scale);
                assert!((a.constraints(&x).unwrap() - b.constraints(&x).unwrap()).amax() <= 1e-12 * scale);
                assert!(
                    (a.constraint_jacobian(&x).unwrap() - b.constraint_jacobian(&x).unwrap()).amax() <= 1e-12 * scale
                );
                assert_eq!(
                    a.cost_hessian(&x).unwrap().unwrap(),
                    b.cost_hessian(&x).unwrap().unwrap()
                );
                assert_eq!(
                    a.constraint_hessian(0, &x).unwrap().unwrap(),
                    b.constraint_hessian(0, &x).unwrap().unwrap()
                );
            }
        }
    }

    #[test]
    fn empty_cost_is_zero() {
        let spec = PolynomialSpec {
            name: "flat".into(),
            n: 2,
            k: 1,
            cost: vec![],
            constraints: vec![vec![Term::new(1.0, &[0, 1])]],
        };
        let p = from_spec(&spec).unwrap();
        let x = dvector![0.3, 0.9];
        assert_eq!(p.cost(&x).unwrap(), 0.0);
        assert_eq!(p.cost_gradient(&x).unwrap(), DVector::zeros(2));
    }

    #[test]
    fn power_rule() {
        let spec = PolynomialSpec {
            name: "sq".into(),
            n: 2,
            k: 1,
            cost: vec![Term::new(1.0, &[2, 0])],
            constraints: vec![vec![Term::new(1.0, &[0, 1])]],
        };
        let p = from_spec(&spec).unwrap();
        assert_eq!(p.cost_gradient(&dvector![1.5, -4.0]).unwrap(), dvector![3.0, 0.0]);
        assert_eq!(
            p.constraint_jacobian(&dvector![1.5, -4.0]).unwrap(),
            DMatrix::from_column_slice(2, 1, &[0.0, 1.0])
        );
    }

    #[test]
    fn mixed_term_hessian() {
        // 3 x₁² x₂ → ∇² = [[6x₂, 6x₁], [6x₁, 0]]
        let poly = Polynomial::new(2, vec![Term::new(3.0, &[2, 1])]);
        let h = poly.hessian(&dvector![2.0, 5.0]);
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[30.0, 12.0, 12.0, 0.0]));
    }

    #[test]
    fn parses_documented_format() {
        let text = r#"
name = "tilted-circle"
n = 2
k = 1
cost = [ { coeff = 1.0, powers = [1, 0] } ]
constraints = [
  [ { coeff = 1.0, powers = [2, 0] }, { coeff = 1.0, powers = [0, 2] }, { coeff = -1.0, powers = [0, 0] } ],
]
"#;
        let spec = PolynomialSpec::from_toml_str(text).unwrap();
        let p = from_spec(&spec).unwrap();
        assert_eq!(p.constraints(&dvector![0.6, 0.8]).unwrap()[0], 0.0);
    }

    #[test]
    fn rejects_unknown_keys_with_location() {
        let text = "name = \"x\"\nn = 2\nk = 1\nweight = 3\nconstraints = []\n";
        match PolynomialSpec::from_toml_str(text) {
            Err(Error::Spec { location, message }) => {
                assert_eq!(location, "line 4, column 1");
                assert!(message.contains("weight"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validation_errors_point_at_the_term() {
        let mut spec = builtin_spec("sphere").unwrap();
        spec.constraints[0][1].powers = vec![0, 2];
        match from_spec(&spec) {
            Err(Error::Spec { location, .. }) => assert_eq!(location, "constraints[0][1].powers"),
            other => panic!("unexpected {other:?}"),
        }
        let mut spec = builtin_spec("sphere").unwrap();
        spec.k = 3;
        assert!(matches!(from_spec(&spec), Err(Error::Spec { location, .. }) if location == "k"));
        let mut spec = builtin_spec("sphere").unwrap();
        spec.constraints.push(vec![]);
        assert!(matches!(from_spec(&spec), Err(Error::Spec { location, .. }) if location == "constraints"));
    }

    fn arb_spec() -> impl Strategy<Value = PolynomialSpec> {
        (2usize..5).prop_flat_map(|n| {
            let term = (-5.0f64..5.0, proptest::collection::vec(0u32..4, n))
                .prop_map(|(coeff, powers)| Term { coeff, powers });
            (
                proptest::collection::vec(term.clone(), 0..5),
                proptest::collection::vec(proptest::collection::vec(term, 1..4), 1..n),
            )
                .prop_map(move |(cost, constraints)| PolynomialSpec {
                    name: "random".into(),
                    n,
                    k: constraints.len(),
                    cost,
                    constraints,
                })
        })
    }

    proptest! {
        #[test]
        fn toml_round_trip_preserves_evaluations(spec in arb_spec(), seed in 0u64..1000) {
            let text = spec.to_toml_string().unwrap();
            let back = PolynomialSpec::from_toml_str(&text).unwrap();
            prop_assert_eq!(&back, &spec);
            let a = from_spec(&spec).unwrap();
            let b = from_spec(&back).unwrap();
            for x in random_points(spec.n, 3, seed) {
                prop_assert_eq!(a.cost(&x).unwrap(), b.cost(&x).unwrap());
                prop_assert_eq!(a.cost_gradient(&x).unwrap(), b.cost_gradient(&x).unwrap());
                prop_assert_eq!(a.constraints(&x).unwrap(), b.constraints(&x).unwrap());
            }
        }
    }
}
