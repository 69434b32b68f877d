//! Exact polynomial arithmetic and the closed-form expression language.
//!
//! Expressions parse in one of two modes: `exact` yields an expanded
//! [`Poly`] with arbitrary-precision rational coefficients, `numeric` yields
//! a [`SmoothExpr`] tree for floating-point work. All values are immutable
//! after construction and safe to share across threads.

pub mod parse;
pub mod poly;
pub mod smooth;

pub use parse::{parse_var_name, ExprError};
pub use poly::{format_rat, var_name, Coef, MPoly, Monomial, Poly, Rat};
pub use smooth::{DomainError, SmoothExpr};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    Exact,
    Numeric,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParsedExpr {
    Poly(Poly),
    Smooth(SmoothExpr),
}

/// Parse `text` over `nvars` ambient variables.
pub fn parse_expr(text: &str, nvars: usize, mode: ParseMode) -> Result<ParsedExpr, ExprError> {
    let ast = parse::Parser::new(text)?.parse_full()?;
    if let Some(maxv) = ast.max_var() {
        if maxv >= nvars {
            return Err(ExprError::VarOutOfRange(format!("x{}", maxv + 1)));
        }
    }
    match mode {
        ParseMode::Exact => Ok(ParsedExpr::Poly(parse::to_poly(&ast, nvars)?)),
        ParseMode::Numeric => Ok(ParsedExpr::Smooth(ast)),
    }
}

/// Convenience wrapper for callers that require the exact mode.
pub fn parse_poly(text: &str, nvars: usize) -> Result<Poly, ExprError> {
    match parse_expr(text, nvars, ParseMode::Exact)? {
        ParsedExpr::Poly(p) => Ok(p),
        ParsedExpr::Smooth(_) => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::{One, Zero};
    use proptest::prelude::*;

    fn rat(n: i64) -> Rat {
        Rat::from_integer(n.into())
    }

    #[test]
    fn parses_expanded_normal_form() {
        let p = parse_poly("x*y*z + x + y + z", 3).unwrap();
        assert_eq!(p.num_terms(), 4);
        let q = parse_poly("(x+y)*z + y^3*z^3", 3).unwrap();
        assert_eq!(q.num_terms(), 3);
    }

    #[test]
    fn syntax_error_carries_offset() {
        let err = parse_expr("x +", 3, ParseMode::Exact).unwrap_err();
        match err {
            ExprError::Syntax { offset, .. } => assert_eq!(offset, 3),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn exact_mode_rejects_functions_and_nonconstant_division() {
        assert!(matches!(
            parse_expr("tanh(x)", 2, ParseMode::Exact),
            Err(ExprError::NonPolynomial(_))
        ));
        assert!(matches!(
            parse_expr("1/(x+y)", 2, ParseMode::Exact),
            Err(ExprError::NonPolynomial(_))
        ));
        // constant divisors are fine
        let p = parse_poly("x/2 + 3/4", 2).unwrap();
        assert_eq!(p.eval(&[rat(2), rat(0)]), Rat::new(7.into(), 4.into()));
    }

    #[test]
    fn numeric_mode_accepts_functions() {
        let e = match parse_expr("tanh(x + 2*t)", 2, ParseMode::Numeric).unwrap() {
            ParsedExpr::Smooth(e) => e,
            _ => unreachable!(),
        };
        assert_eq!(e.eval(&[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn eval_examples() {
        let p = parse_poly("x - y", 3).unwrap();
        assert!(p.eval(&[rat(2), rat(2), rat(0)]).is_zero());
        let q = parse_poly("x*y*z + x + y + z", 3).unwrap();
        assert_eq!(q.eval(&[rat(1), rat(1), rat(1)]), rat(4));
    }

    #[test]
    fn diff_examples() {
        // d/dz ((x+y)z + y^3 z^3) = x + y + 3 y^3 z^2
        let p = parse_poly("(x+y)*z + y^3*z^3", 3).unwrap();
        let expect = parse_poly("x + y + 3*y^3*z^2", 3).unwrap();
        assert_eq!(p.diff(2), expect);
        // derivative in an absent variable
        let q = parse_poly("x^2*y", 4).unwrap();
        assert!(q.diff(3).is_zero());
    }

    #[test]
    fn compose_examples() {
        // outer u*v with inners (x+y, z)
        let outer = parse_poly("x1*x2", 2).unwrap();
        let f = parse_poly("x+y", 3).unwrap();
        let g = parse_poly("z", 3).unwrap();
        assert_eq!(outer.compose(&[f, g]), parse_poly("(x+y)*z", 3).unwrap());

        // identity composition
        let id = parse_poly("x1", 1).unwrap();
        let inner = parse_poly("x^2 - y", 2).unwrap();
        assert_eq!(id.compose(&[inner.clone()]), inner);

        // outer u + u^3 with inner x + y^2: expanded form has 6 distinct terms
        let outer = parse_poly("x1 + x1^3", 1).unwrap();
        let inner = parse_poly("x + y^2", 2).unwrap();
        let composed = outer.compose(&[inner]);
        let expect =
            parse_poly("x + y^2 + x^3 + 3*x^2*y^2 + 3*x*y^4 + y^6", 2).unwrap();
        assert_eq!(composed, expect);
        assert_eq!(composed.num_terms(), 6);
    }

    #[test]
    fn smooth_eval_domain_errors() {
        let e = match parse_expr("log(x)", 1, ParseMode::Numeric).unwrap() {
            ParsedExpr::Smooth(e) => e,
            _ => unreachable!(),
        };
        assert!(e.eval(&[-1.0]).is_err());
        assert!(e.eval(&[1.0]).unwrap().abs() < 1e-15);
    }

    fn arb_poly(nvars: usize, max_terms: usize, max_deg: u32) -> impl Strategy<Value = Poly> {
        prop::collection::vec(
            (
                prop::collection::vec(0..=max_deg, nvars),
                -9i64..=9,
                1i64..=4,
            ),
            0..=max_terms,
        )
        .prop_map(move |terms| {
            let mut p = Poly::zero(nvars);
            for (exps, n, d) in terms {
                p.add_term(Monomial(exps.into_iter().map(|e| e as u32).collect()), Rat::new(n.into(), d.into()));
            }
            p
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn diff_commutes(p in arb_poly(3, 6, 4)) {
            let a = p.diff(0).diff(1);
            let b = p.diff(1).diff(0);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn leibniz_rule(p in arb_poly(3, 5, 3), q in arb_poly(3, 5, 3)) {
            let lhs = p.mul(&q).diff(1);
            let rhs = p.diff(1).mul(&q).add(&p.mul(&q.diff(1)));
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn print_parse_roundtrip(p in arb_poly(3, 8, 5)) {
            let text = p.to_string();
            let q = parse_poly(&text, 3).unwrap();
            prop_assert_eq!(p, q);
        }

        #[test]
        fn compose_then_diff_is_chain_rule(
            outer in arb_poly(2, 4, 3),
            f in arb_poly(2, 4, 2),
            g in arb_poly(2, 4, 2),
        ) {
            // d/dx0 outer(f, g) == (d outer/du1)(f,g) f_x + (d outer/du2)(f,g) g_x
            let inners = [f.clone(), g.clone()];
            let lhs = outer.compose(&inners).diff(0);
            let rhs = outer.diff(0).compose(&inners).mul(&f.diff(0))
                .add(&outer.diff(1).compose(&inners).mul(&g.diff(0)));
            prop_assert_eq!(lhs, rhs);
        }
    }
}
