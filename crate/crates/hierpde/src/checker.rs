//! Exact verification of a polynomial against a constraint set, and exact
//! recovery of the weight ratios that sibling-leaf constancy pins down.

use crate::arch::Tree;
use crate::constraints::{Constraint, ConstraintSet};
use crate::diffpoly::{DerivSym, DiffPoly};
use crate::expr::poly::{format_rat, Monomial, Poly, Rat};
use crate::zerocheck::{self, FactorKind, Job, Outcome};
use num_traits::Zero;
use serde::Serialize;
use serde_json::{json, Value};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CheckError {
    #[error("function has {got} variables, constraints expect {expected}")]
    ArityMismatch { got: usize, expected: usize },
    #[error("point length {got} does not match the {expected} ambient variables")]
    PointArity { got: usize, expected: usize },
    #[error("{0}")]
    Constraints(#[from] crate::constraints::ConstraintError),
    #[error("equality `{0}` is violated; ratios are not defined")]
    ConstraintViolated(String),
    #[error("ratio of partials for ({num},{den}) is not a rational constant")]
    RatioNonConstant { num: String, den: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct EqReport {
    pub provenance: String,
    pub is_zero: bool,
    /// Canonical text of the residual polynomial (always `0` when `is_zero`).
    pub residual: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClauseStatus {
    /// Every atom substitutes to the identically-zero polynomial.
    FailsIdentically,
    /// Some atom is a non-zero polynomial after substitution.
    HoldsGenerically,
    /// Additionally non-zero at the supplied point.
    HoldsAtPoint,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClauseReport {
    pub provenance: String,
    pub status: ClauseStatus,
    /// With a point supplied: whether some atom is non-zero at it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nonzero_at_point: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IneqReport {
    pub provenance: String,
    /// Strict positivity is decided numerically, never symbolically.
    pub deferred_to_numeric: bool,
    /// Exact value at the supplied point, when one was given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value_at_point: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
    pub equalities: Vec<EqReport>,
    pub nonvanishing: Vec<ClauseReport>,
    pub inequalities: Vec<IneqReport>,
}

impl Report {
    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("report serialization cannot fail")
    }

    pub fn exit_code(&self) -> i32 {
        match self.verdict {
            Verdict::Pass => 0,
            Verdict::Fail => 1,
            Verdict::Inconclusive => 2,
        }
    }
}

pub(crate) fn constraint_jobs(c: &Constraint) -> Vec<Job> {
    c.expr
        .products
        .iter()
        .map(|p| Job {
            coef: p.coef.clone(),
            factors: p
                .factors
                .iter()
                .map(|f| FactorKind::Subst {
                    dp: f.base.clone(),
                    deriv: f.deriv.clone(),
                })
                .collect(),
        })
        .collect()
}

/// Exact evaluation of a substituted differential polynomial at a rational
/// point, without materializing the substitution.
pub fn substitute_value_at(
    dp: &DiffPoly,
    f: &Poly,
    point: &[Rat],
    cache: &mut HashMap<DerivSym, Rat>,
) -> Rat {
    let mut total = Rat::zero();
    for (m, c) in &dp.terms {
        let mut t = c.clone();
        for (s, e) in &m.0 {
            let v = cache.entry(s.clone()).or_insert_with(|| {
                f.diff_multi(&Monomial(s.0.clone())).eval(point)
            });
            for _ in 0..*e {
                t *= &*v;
            }
        }
        total += t;
    }
    total
}

/// Exact check of `f` against the constraint set. Equalities are substituted
/// exactly (large combinations are certified modularly); non-vanishing
/// clauses are judged as polynomials, and additionally at `point` when one
/// is given; strict inequalities are reported for numeric follow-up.
pub fn check(f: &Poly, cs: &ConstraintSet, point: Option<&[Rat]>) -> Result<Report, CheckError> {
    if f.nvars != cs.nvars {
        return Err(CheckError::ArityMismatch {
            got: f.nvars,
            expected: cs.nvars,
        });
    }
    if let Some(p) = point {
        if p.len() != cs.nvars {
            return Err(CheckError::PointArity {
                got: p.len(),
                expected: cs.nvars,
            });
        }
    }
    // batch equalities and clause atoms into one evaluation pass
    let mut batches: Vec<Vec<Job>> = Vec::new();
    for c in &cs.equalities {
        batches.push(constraint_jobs(c));
    }
    let mut atom_index = Vec::new();
    for (ci, clause) in cs.nonvanishing.iter().enumerate() {
        for atom in &clause.atoms {
            atom_index.push(ci);
            batches.push(vec![Job {
                coef: num_traits::One::one(),
                factors: vec![FactorKind::Subst {
                    dp: atom.clone(),
                    deriv: Monomial::unit(cs.nvars),
                }],
            }]);
        }
    }
    let outcomes = zerocheck::evaluate_equalities(f, &batches, false);
    let (eq_outcomes, atom_outcomes) = outcomes.split_at(cs.equalities.len());

    let mut equalities = Vec::with_capacity(cs.equalities.len());
    let mut witness = None;
    for (c, out) in cs.equalities.iter().zip(eq_outcomes) {
        let is_zero = out.is_zero();
        let residual = match out {
            Outcome::Residual(p) => p.to_string(),
            Outcome::CertifiedZero => "0".to_string(),
            Outcome::CertifiedNonZero => {
                // materialize a witness for the report
                let p = zerocheck::expand_combination(f, &constraint_jobs(c));
                p.to_string()
            }
        };
        if !is_zero && witness.is_none() {
            witness = Some(c.provenance.clone());
        }
        equalities.push(EqReport {
            provenance: c.provenance.clone(),
            is_zero,
            residual,
        });
    }

    let mut point_cache: HashMap<DerivSym, Rat> = HashMap::new();
    let mut nonvanishing = Vec::with_capacity(cs.nonvanishing.len());
    let mut atom_iter = atom_index.iter().zip(atom_outcomes);
    for (ci, clause) in cs.nonvanishing.iter().enumerate() {
        let mut generic = false;
        for _ in 0..clause.atoms.len() {
            let (&aci, out) = atom_iter.next().expect("atom bookkeeping");
            debug_assert_eq!(aci, ci);
            if !out.is_zero() {
                generic = true;
            }
        }
        let nonzero_at_point = point.map(|p| {
            clause
                .atoms
                .iter()
                .any(|a| !substitute_value_at(a, f, p, &mut point_cache).is_zero())
        });
        let status = if !generic {
            ClauseStatus::FailsIdentically
        } else if nonzero_at_point == Some(true) {
            ClauseStatus::HoldsAtPoint
        } else {
            ClauseStatus::HoldsGenerically
        };
        nonvanishing.push(ClauseReport {
            provenance: clause.provenance.clone(),
            status,
            nonzero_at_point,
        });
    }

    let mut inequalities = Vec::with_capacity(cs.inequalities.len());
    for c in &cs.inequalities {
        let value_at_point = point.map(|p| {
            let mut total = Rat::zero();
            for prod in &c.expr.products {
                let mut t = prod.coef.clone();
                for fac in &prod.factors {
                    t *= substitute_value_at(&fac.resolved(), f, p, &mut point_cache);
                }
                total += t;
            }
            format_rat(&total)
        });
        inequalities.push(IneqReport {
            provenance: c.provenance.clone(),
            deferred_to_numeric: true,
            value_at_point,
        });
    }

    let verdict = if equalities.iter().any(|e| !e.is_zero) {
        Verdict::Fail
    } else if nonvanishing
        .iter()
        .any(|c| c.status == ClauseStatus::FailsIdentically)
    {
        Verdict::Inconclusive
    } else {
        Verdict::Pass
    };
    Ok(Report {
        verdict,
        witness,
        equalities,
        nonvanishing,
        inequalities,
    })
}

// ---------------------------------------------------------------------------
// weight-ratio recovery
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct RatioEntry {
    /// 1-based variable indices: the recovered constant is
    /// `F_{x_num} / F_{x_den}`.
    pub num: usize,
    pub den: usize,
    pub ratio: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RatioMap {
    pub entries: Vec<RatioEntry>,
    /// Pairs skipped because the denominator partial is the zero polynomial.
    pub skipped: Vec<String>,
}

impl RatioMap {
    pub fn get(&self, num: usize, den: usize) -> Option<Rat> {
        self.entries.iter().find(|e| e.num == num && e.den == den).map(|e| {
            crate::expr::parse_poly(&e.ratio, 1)
                .expect("stored ratios are rationals")
                .eval(&[Rat::zero()])
        })
    }

    pub fn to_json(&self) -> Value {
        json!({
            "ratios": self.entries.iter().map(|e| {
                json!({"num": format!("x{}", e.num), "den": format!("x{}", e.den), "ratio": e.ratio})
            }).collect::<Vec<_>>(),
            "skipped": self.skipped,
        })
    }
}

/// For each pair of sibling leaves (the pairs whose first-partial ratio is
/// forced constant), recover that constant by exact division. Requires the
/// constancy equalities to hold; scaling freedom between different sibling
/// groups is not recoverable and no cross-group ratio is emitted.
pub fn reverse_weights(f: &Poly, t: &Tree) -> Result<RatioMap, CheckError> {
    let cs = crate::constraints::tree_activation(t)?;
    let report = check(f, &cs, None)?;
    if report.verdict == Verdict::Fail {
        return Err(CheckError::ConstraintViolated(report.witness.unwrap_or_default()));
    }
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for group in t.sibling_groups() {
        if group.len() < 2 {
            continue;
        }
        for &i in &group {
            for &j in &group {
                if i == j {
                    continue;
                }
                let num = f.diff(i);
                let den = f.diff(j);
                if den.is_zero() {
                    skipped.push(format!("x{}/x{}: zero denominator", i + 1, j + 1));
                    continue;
                }
                match num.constant_ratio_to(&den) {
                    Some(r) => entries.push(RatioEntry {
                        num: i + 1,
                        den: j + 1,
                        ratio: format_rat(&r),
                    }),
                    None => {
                        return Err(CheckError::RatioNonConstant {
                            num: format!("x{}", i + 1),
                            den: format!("x{}", j + 1),
                        })
                    }
                }
            }
        }
    }
    Ok(RatioMap { entries, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{parse_arch, Arch};
    use crate::constraints::{preset, tree_smooth, Preset};
    use crate::expr::parse_poly;
    use crate::oracle::{compose_arch, Assignment, NodeFun};

    fn gfz_tree() -> Tree {
        match parse_arch(
            r#"{"type":"tree","node":{"children":[{"children":[{"var":"x"},{"var":"y"}]},{"var":"z"}]}}"#,
        )
        .unwrap()
        {
            Arch::Tree(t) => t,
            _ => unreachable!(),
        }
    }

    #[test]
    fn counterexample_fails_with_exact_residual() {
        let cs = tree_smooth(&gfz_tree()).unwrap();
        let f = parse_poly("x*y*z + x + y + z", 3).unwrap();
        let report = check(&f, &cs, None).unwrap();
        assert_eq!(report.verdict, Verdict::Fail);
        assert_eq!(report.equalities[0].residual, "x - y");
        assert_eq!(report.exit_code(), 1);
    }

    #[test]
    fn composed_instance_passes() {
        let f = parse_poly("(x + y^2)*z + x + y^2", 3).unwrap();
        let cs = tree_smooth(&gfz_tree()).unwrap();
        let report = check(&f, &cs, None).unwrap();
        assert_eq!(report.verdict, Verdict::Pass);
    }

    #[test]
    fn zero_function_is_inconclusive() {
        let cs = tree_smooth(&gfz_tree()).unwrap();
        let report = check(&Poly::zero(3), &cs, None).unwrap();
        assert_eq!(report.verdict, Verdict::Inconclusive);
        assert_eq!(report.exit_code(), 2);
    }

    #[test]
    fn rational_composition_passes_with_generic_clause() {
        // expressible with rational inner functions; passes the equalities
        // and keeps the determinant clause generically non-zero
        let f = parse_poly("(x + y)*z + y^3*z^3", 3).unwrap();
        let cs = preset(&Preset::Symmetric(3)).unwrap();
        let report = check(&f, &cs, None).unwrap();
        assert_eq!(report.verdict, Verdict::Pass);
        assert!(report
            .nonvanishing
            .iter()
            .all(|c| c.status != ClauseStatus::FailsIdentically));
    }

    #[test]
    fn pointwise_clause_status() {
        let f = parse_poly("(x + y^2)*z + x + y^2", 3).unwrap();
        let cs = tree_smooth(&gfz_tree()).unwrap();
        let rat = |n: i64| Rat::from_integer(n.into());
        let report = check(&f, &cs, Some(&[rat(1), rat(1), rat(1)])).unwrap();
        assert_eq!(report.nonvanishing[0].status, ClauseStatus::HoldsAtPoint);
    }

    #[test]
    fn reverse_weights_on_a_four_leaf_tree() {
        let arch = parse_arch(
            r#"{"type":"tree","node":{"children":[{"children":[{"var":"x"},{"var":"y"}]},{"var":"z"},{"var":"w"}]}}"#,
        )
        .unwrap();
        let tree = match &arch {
            Arch::Tree(t) => t.clone(),
            _ => unreachable!(),
        };
        let mut asg = Assignment::default();
        asg.by_node.insert(
            "n0".into(),
            NodeFun::Act {
                weights: vec![
                    Rat::from_integer(1.into()),
                    Rat::from_integer(3.into()),
                    Rat::from_integer(4.into()),
                ],
                bias: Rat::zero(),
                activation: parse_poly("x + x^2", 1).unwrap(),
            },
        );
        asg.by_node.insert(
            "n1".into(),
            NodeFun::Act {
                weights: vec![Rat::from_integer(1.into()), Rat::from_integer(2.into())],
                bias: Rat::zero(),
                activation: parse_poly("x^2", 1).unwrap(),
            },
        );
        let f = compose_arch(&arch, &asg).unwrap();
        let ratios = reverse_weights(&f, &tree).unwrap();
        // siblings (x, y): ratio b/a = 2; root-adjacent (z, w): 3/4
        assert_eq!(ratios.get(2, 1), Some(Rat::from_integer(2.into())));
        assert_eq!(ratios.get(3, 4), Some(Rat::new(3.into(), 4.into())));
    }

    #[test]
    fn reverse_weights_with_dead_input() {
        // weight on x is zero: x/y ratio is 0, y/x is skipped
        let t2 = match parse_arch(
            r#"{"type":"tree","node":{"children":[{"var":"x"},{"var":"y"}]}}"#,
        )
        .unwrap()
        {
            Arch::Tree(t) => t,
            _ => unreachable!(),
        };
        let f = parse_poly("y + y^2", 2).unwrap();
        let ratios = reverse_weights(&f, &t2).unwrap();
        assert_eq!(ratios.get(1, 2), Some(Rat::zero()));
        assert!(ratios.get(2, 1).is_none());
        assert_eq!(ratios.skipped.len(), 1);
    }

    #[test]
    fn identity_activation_ratio() {
        let t2 = match parse_arch(
            r#"{"type":"tree","node":{"children":[{"var":"x"},{"var":"y"}]}}"#,
        )
        .unwrap()
        {
            Arch::Tree(t) => t,
            _ => unreachable!(),
        };
        let f = parse_poly("x + y", 2).unwrap();
        let ratios = reverse_weights(&f, &t2).unwrap();
        assert_eq!(ratios.get(2, 1), Some(Rat::from_integer(1.into())));
    }
}
