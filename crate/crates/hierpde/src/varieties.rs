//! Coefficient equations for bounded-degree polynomials: pushing a generic
//! degree-`d` polynomial through the equalities of a constraint set yields,
//! per surviving monomial, a polynomial in the generic coefficients that
//! must vanish for every computable polynomial of that degree. Membership of
//! a concrete polynomial is decided by exact evaluation of those equations
//! at its coefficient vector.

use crate::constraints::ConstraintSet;
use crate::diffpoly::{multi_indices_upto, CPoly};
use crate::expr::poly::{Monomial, Poly, Rat};
use num_traits::Zero;
use serde::Serialize;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VarietyError {
    #[error("polynomial degree {got} exceeds the system degree {max}")]
    DegreeOverflow { got: u32, max: u32 },
    #[error("polynomial has {got} variables, the system expects {expected}")]
    ArityMismatch { got: usize, expected: usize },
}

#[derive(Debug, Clone)]
pub struct CoeffEquation {
    /// Ambient monomial whose coefficient must vanish.
    pub monomial: Monomial,
    /// Provenance of the generating equality.
    pub source: String,
    /// Polynomial in the coefficient variables.
    pub poly: CPoly,
}

#[derive(Debug, Clone)]
pub struct CoeffSystem {
    pub n: usize,
    pub d: u32,
    /// Coefficient variables: multi-indices `a` with `|a| <= d`, in the
    /// canonical order used by the equation polynomials.
    pub cvars: Vec<Monomial>,
    pub equations: Vec<CoeffEquation>,
    pub source: ConstraintSet,
}

#[derive(Debug, Clone, Serialize)]
pub struct MembershipReport {
    pub pass: bool,
    /// Indices of violated equations.
    pub failed: Vec<usize>,
}

/// Generate the coefficient equations of degree-`d` candidates for every
/// equality of the constraint set (inequalities take no part in the closed
/// description). Identically-zero equations are dropped; duplicates up to
/// sign are kept only once.
pub fn variety_equations(cs: &ConstraintSet, d: u32) -> CoeffSystem {
    let n = cs.nvars;
    let cvars = multi_indices_upto(n, d);
    let mut equations = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for c in &cs.equalities {
        let expanded = c.expr.expand();
        let gs = expanded.substitute_generic(d);
        debug_assert_eq!(gs.cvars, cvars);
        let mut per_constraint: Vec<(Monomial, CPoly)> = gs.equations;
        per_constraint.sort_by(|a, b| b.0.cmp(&a.0));
        for (monomial, poly) in per_constraint {
            if poly.is_zero() {
                continue;
            }
            let key = sign_normalized_text(&poly);
            if seen.insert(key) {
                equations.push(CoeffEquation {
                    monomial,
                    source: c.provenance.clone(),
                    poly,
                });
            }
        }
    }
    CoeffSystem {
        n,
        d,
        cvars,
        equations,
        source: cs.clone(),
    }
}

fn sign_normalized_text(p: &CPoly) -> String {
    use num_traits::Signed;
    let flipped = match p.terms.iter().next_back() {
        Some((_, c)) if c.is_negative() => p.neg(),
        _ => p.clone(),
    };
    flipped.format_with(|v| format!("v{v}"))
}

impl CoeffSystem {
    fn cvar_name(&self, idx: usize) -> String {
        let m = &self.cvars[idx];
        format!(
            "c[{}]",
            m.0.iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join(",")
        )
    }

    /// Plain text: one equation per line in the `c[a1,...,an]` variables.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for eq in &self.equations {
            out.push_str(&eq.poly.format_with(|v| self.cvar_name(v)));
            out.push('\n');
        }
        out
    }

    /// Coefficient vector of `p` in the system's variable order.
    pub fn coefficient_vector(&self, p: &Poly) -> Result<Vec<Rat>, VarietyError> {
        if p.nvars != self.n {
            return Err(VarietyError::ArityMismatch {
                got: p.nvars,
                expected: self.n,
            });
        }
        if p.total_degree() > self.d {
            return Err(VarietyError::DegreeOverflow {
                got: p.total_degree(),
                max: self.d,
            });
        }
        Ok(self
            .cvars
            .iter()
            .map(|m| p.coef(m).cloned().unwrap_or_else(Rat::zero))
            .collect())
    }

    /// Exact membership in the zero locus of the equations.
    pub fn membership(&self, p: &Poly) -> Result<MembershipReport, VarietyError> {
        let vec = self.coefficient_vector(p)?;
        let mut failed = Vec::new();
        for (i, eq) in self.equations.iter().enumerate() {
            if !eq.poly.eval(&vec).is_zero() {
                failed.push(i);
            }
        }
        Ok(MembershipReport {
            pass: failed.is_empty(),
            failed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{parse_arch, Arch};
    use crate::constraints::tree_smooth;
    use crate::expr::parse_poly;
    use num_traits::One;

    fn gfz_constraints() -> ConstraintSet {
        let t = match parse_arch(
            r#"{"type":"tree","node":{"children":[{"children":[{"var":"x"},{"var":"y"}]},{"var":"z"}]}}"#,
        )
        .unwrap()
        {
            Arch::Tree(t) => t,
            _ => unreachable!(),
        };
        tree_smooth(&t).unwrap()
    }

    #[test]
    fn affine_candidates_yield_no_equations() {
        let sys = variety_equations(&gfz_constraints(), 1);
        assert!(sys.equations.is_empty());
    }

    #[test]
    fn membership_examples() {
        let cs = gfz_constraints();
        let sys = variety_equations(&cs, 3);
        assert!(!sys.equations.is_empty());
        // composed instance passes
        let p = parse_poly("(x + y^2)*z + x + y^2", 3).unwrap();
        assert!(sys.membership(&p).unwrap().pass);
        // the classic non-instance fails
        let q = parse_poly("x*y*z + x + y + z", 3).unwrap();
        assert!(!sys.membership(&q).unwrap().pass);
        // the zero polynomial satisfies the homogeneous equations
        assert!(sys.membership(&Poly::zero(3)).unwrap().pass);
        // degree overflow is rejected
        let r = parse_poly("x^4", 3).unwrap();
        assert!(matches!(
            sys.membership(&r),
            Err(VarietyError::DegreeOverflow { .. })
        ));
    }

    #[test]
    fn membership_agrees_with_exact_checker() {
        let cs = gfz_constraints();
        let sys = variety_equations(&cs, 3);
        for (text, _expect) in [
            ("(x + y^2)*z + x + y^2", true),
            ("x*y*z + x + y + z", false),
            ("x + y + z", true),
            ("x^2*y + z^3", false),
        ] {
            let p = parse_poly(text, 3).unwrap();
            let member = sys.membership(&p).unwrap().pass;
            let report = crate::checker::check(&p, &cs, None).unwrap();
            let all_zero = report.equalities.iter().all(|e| e.is_zero);
            assert_eq!(member, all_zero, "disagreement on {text}");
        }
    }

    #[test]
    fn generic_substitution_matches_concrete_evaluation() {
        // evaluating the equations at a concrete coefficient vector equals
        // extracting coefficients of the concrete substitution
        let cs = gfz_constraints();
        let d = 2;
        let sys = variety_equations(&cs, d);
        let p = parse_poly("x^2 + 3*x*y - z + 2*y*z + 1/2", 3).unwrap();
        let vec = sys.coefficient_vector(&p).unwrap();
        let expanded = cs.equalities[0].expr.expand();
        let substituted = expanded.substitute(&p);
        for eq in &sys.equations {
            let lhs = eq.poly.eval(&vec);
            let rhs = substituted
                .coef(&eq.monomial)
                .cloned()
                .unwrap_or_else(Rat::zero);
            assert_eq!(lhs, rhs);
        }
        // and every monomial missing from the system is zero in the
        // substitution (those equations were identically zero)
        let _ = Rat::one();
    }
}
