//! Sparse multivariate polynomial arithmetic with exact rational coefficients.
//!
//! Terms are kept in a `BTreeMap` keyed by [`Monomial`] under graded
//! lexicographic order, so iteration (and printing, via `.rev()`) is
//! canonical. Coefficients are generic over [`Coef`] so the same machinery
//! serves plain rational polynomials and polynomials whose coefficients are
//! themselves polynomials (used when a generic polynomial is pushed through
//! a differential constraint).

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

pub type Rat = BigRational;

/// Exponent vector; the length equals the ambient variable count.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Monomial(pub Vec<u32>);

impl Monomial {
    pub fn unit(nvars: usize) -> Self {
        Monomial(vec![0; nvars])
    }

    pub fn var(nvars: usize, idx: usize) -> Self {
        let mut e = vec![0; nvars];
        e[idx] = 1;
        Monomial(e)
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_unit(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    pub fn nvars(&self) -> usize {
        self.0.len()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        debug_assert_eq!(self.0.len(), other.0.len());
        Monomial(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a.checked_add(*b).expect("monomial degree overflow"))
                .collect(),
        )
    }

    /// Quotient monomial, or `None` when not divisible.
    pub fn div(&self, other: &Monomial) -> Option<Monomial> {
        let mut out = Vec::with_capacity(self.0.len());
        for (a, b) in self.0.iter().zip(&other.0) {
            if a < b {
                return None;
            }
            out.push(a - b);
        }
        Some(Monomial(out))
    }

    fn lex_cmp(&self, other: &Monomial) -> Ordering {
        self.0.cmp(&other.0)
    }
}

/// Graded lexicographic: compare total degree first, then exponents
/// left-to-right (so `x1` dominates `x2`, etc.).
impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.lex_cmp(other))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Coefficient ring interface for [`MPoly`].
pub trait Coef: Clone + PartialEq + fmt::Debug {
    fn is_zero_coef(&self) -> bool;
    fn add_assign_coef(&mut self, other: &Self);
    fn mul_coef(&self, other: &Self) -> Self;
    fn neg_coef(&self) -> Self;
}

impl Coef for Rat {
    fn is_zero_coef(&self) -> bool {
        self.is_zero()
    }
    fn add_assign_coef(&mut self, other: &Self) {
        *self += other;
    }
    fn mul_coef(&self, other: &Self) -> Self {
        self * other
    }
    fn neg_coef(&self) -> Self {
        -self
    }
}

impl<C: Coef> Coef for MPoly<C> {
    fn is_zero_coef(&self) -> bool {
        self.terms.is_empty()
    }
    fn add_assign_coef(&mut self, other: &Self) {
        let sum = self.add(other);
        *self = sum;
    }
    fn mul_coef(&self, other: &Self) -> Self {
        self.mul(other)
    }
    fn neg_coef(&self) -> Self {
        self.neg()
    }
}

/// Sparse polynomial over coefficients `C`. No zero coefficients are stored.
#[derive(Clone, PartialEq, Debug)]
pub struct MPoly<C: Coef> {
    pub nvars: usize,
    pub terms: BTreeMap<Monomial, C>,
}

pub type Poly = MPoly<Rat>;

impl<C: Coef> MPoly<C> {
    pub fn zero(nvars: usize) -> Self {
        MPoly {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn from_terms(nvars: usize, it: impl IntoIterator<Item = (Monomial, C)>) -> Self {
        let mut p = MPoly::zero(nvars);
        for (m, c) in it {
            p.add_term(m, c);
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

    /// Max exponent of variable `v` over all terms.
    pub fn degree_in(&self, v: usize) -> u32 {
        self.terms.keys().map(|m| m.0[v]).max().unwrap_or(0)
    }

    pub fn add_term(&mut self, m: Monomial, c: C) {
        debug_assert_eq!(m.nvars(), self.nvars);
        if c.is_zero_coef() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                e.get_mut().add_assign_coef(&c);
                if e.get().is_zero_coef() {
                    e.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.nvars, other.nvars, "variable count mismatch");
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        MPoly {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.clone(), c.neg_coef()))
                .collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.nvars, other.nvars, "variable count mismatch");
        let mut out = MPoly::zero(self.nvars);
        // iterate the smaller operand on the outside
        let (a, b) = if self.terms.len() <= other.terms.len() {
            (self, other)
        } else {
            (other, self)
        };
        for (ma, ca) in &a.terms {
            for (mb, cb) in &b.terms {
                out.add_term(ma.mul(mb), ca.mul_coef(cb));
            }
        }
        out
    }

    pub fn scale(&self, c: &C) -> Self {
        if c.is_zero_coef() {
            return MPoly::zero(self.nvars);
        }
        MPoly {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .map(|(m, k)| (m.clone(), k.mul_coef(c)))
                .collect(),
        }
    }

    pub fn constant(nvars: usize, c: C) -> Self {
        let mut p = MPoly::zero(nvars);
        p.add_term(Monomial::unit(nvars), c);
        p
    }

    /// Leading term under graded lex.
    pub fn leading(&self) -> Option<(&Monomial, &C)> {
        self.terms.iter().next_back()
    }

    pub fn coef(&self, m: &Monomial) -> Option<&C> {
        self.terms.get(m)
    }
}

impl Poly {
    pub fn var(nvars: usize, idx: usize) -> Self {
        let mut p = Poly::zero(nvars);
        p.add_term(Monomial::var(nvars, idx), Rat::one());
        p
    }

    pub fn constant_rat(nvars: usize, c: Rat) -> Self {
        Poly::constant(nvars, c)
    }

    /// Exact partial derivative with respect to variable `v`.
    pub fn diff(&self, v: usize) -> Poly {
        assert!(v < self.nvars, "variable index out of range");
        let mut out = Poly::zero(self.nvars);
        for (m, c) in &self.terms {
            let e = m.0[v];
            if e == 0 {
                continue;
            }
            let mut em = m.clone();
            em.0[v] = e - 1;
            out.add_term(em, c * Rat::from_integer(e.into()));
        }
        out
    }

    /// Iterated partial derivative given a multi-index.
    pub fn diff_multi(&self, alpha: &Monomial) -> Poly {
        let mut out = self.clone();
        for (v, &k) in alpha.0.iter().enumerate() {
            for _ in 0..k {
                if out.is_zero() {
                    return out;
                }
                out = out.diff(v);
            }
        }
        out
    }

    /// Exact evaluation at a rational point.
    pub fn eval(&self, point: &[Rat]) -> Rat {
        assert_eq!(point.len(), self.nvars, "point length mismatch");
        let mut acc = Rat::zero();
        // cache powers per variable
        let maxdeg: Vec<u32> = (0..self.nvars).map(|v| self.degree_in(v)).collect();
        let mut powers: Vec<Vec<Rat>> = Vec::with_capacity(self.nvars);
        for v in 0..self.nvars {
            let mut ps = Vec::with_capacity(maxdeg[v] as usize + 1);
            ps.push(Rat::one());
            for k in 1..=maxdeg[v] as usize {
                let next = &ps[k - 1] * &point[v];
                ps.push(next);
            }
            powers.push(ps);
        }
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (v, &e) in m.0.iter().enumerate() {
                if e > 0 {
                    t *= &powers[v][e as usize];
                }
            }
            acc += t;
        }
        acc
    }

    /// Substitute `inners[k]` for variable `k`; `inners` polynomials share an
    /// ambient variable count which becomes the result's.
    pub fn compose(&self, inners: &[Poly]) -> Poly {
        assert_eq!(inners.len(), self.nvars, "arity mismatch in composition");
        let out_nvars = if inners.is_empty() {
            0
        } else {
            inners[0].nvars
        };
        for q in inners {
            assert_eq!(q.nvars, out_nvars, "inner polynomials disagree on arity");
        }
        let mut power_cache: Vec<Vec<Poly>> = inners
            .iter()
            .map(|q| vec![Poly::constant_rat(out_nvars, Rat::one()), q.clone()])
            .collect();
        let get_pow = |v: usize, e: u32, cache: &mut Vec<Vec<Poly>>| -> Poly {
            while cache[v].len() <= e as usize {
                let next = cache[v].last().unwrap().mul(&inners[v]);
                cache[v].push(next);
            }
            cache[v][e as usize].clone()
        };
        let mut acc = Poly::zero(out_nvars);
        for (m, c) in &self.terms {
            let mut t = Poly::constant_rat(out_nvars, c.clone());
            for (v, &e) in m.0.iter().enumerate() {
                if e > 0 {
                    let p = get_pow(v, e, &mut power_cache);
                    t = t.mul(&p);
                }
            }
            acc = acc.add(&t);
        }
        acc
    }

    /// If `self == r * other` for a rational constant `r`, return `r`.
    pub fn constant_ratio_to(&self, other: &Poly) -> Option<Rat> {
        if other.is_zero() {
            return None;
        }
        if self.is_zero() {
            return Some(Rat::zero());
        }
        let (ml, cl) = self.leading()?;
        let (mr, cr) = other.leading()?;
        if ml != mr {
            return None;
        }
        let r = cl / cr;
        let diff = self.sub(&other.scale(&r));
        if diff.is_zero() {
            Some(r)
        } else {
            None
        }
    }

    /// L1 norm of the coefficient vector (used in conditioning heuristics).
    pub fn coef_l1(&self) -> Rat {
        let mut s = Rat::zero();
        for c in self.terms.values() {
            s += c.abs();
        }
        s
    }
}

/// Canonical variable names used in textual polynomial forms: `x y z w` when
/// the ambient count is at most four, `x1 x2 ...` otherwise.
pub fn var_name(nvars: usize, idx: usize) -> String {
    const LETTERS: [&str; 4] = ["x", "y", "z", "w"];
    if nvars <= 4 {
        LETTERS[idx].to_string()
    } else {
        format!("x{}", idx + 1)
    }
}

pub fn format_rat(c: &Rat) -> String {
    if c.is_integer() {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

impl Poly {
    /// Render with a caller-supplied variable naming (graded-lex descending).
    pub fn format_with(&self, name: impl Fn(usize) -> String) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        let mut out = String::new();
        let mut first = true;
        for (m, c) in self.terms.iter().rev() {
            let neg = c.is_negative();
            let mag = c.abs();
            if first {
                if neg {
                    out.push('-');
                }
                first = false;
            } else if neg {
                out.push_str(" - ");
            } else {
                out.push_str(" + ");
            }
            let mut parts: Vec<String> = Vec::new();
            if !mag.is_one() || m.is_unit() {
                parts.push(format_rat(&mag));
            }
            for (v, &e) in m.0.iter().enumerate() {
                if e == 1 {
                    parts.push(name(v));
                } else if e > 1 {
                    parts.push(format!("{}^{}", name(v), e));
                }
            }
            out.push_str(&parts.join("*"));
        }
        out
    }
}

impl fmt::Display for Poly {
    /// Graded-lex descending, e.g. `3/2*x^2*y - x + 1`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.format_with(|v| var_name(self.nvars, v)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64) -> Rat {
        Rat::from_integer(n.into())
    }

    #[test]
    fn monomial_order_is_graded_lex() {
        let x = Monomial(vec![1, 0]);
        let y = Monomial(vec![0, 1]);
        let xy = Monomial(vec![1, 1]);
        assert!(x > y);
        assert!(xy > x);
    }

    #[test]
    fn arithmetic_basics() {
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        let p = x.add(&y).mul(&x.sub(&y)); // x^2 - y^2
        let mut q = Poly::zero(2);
        q.add_term(Monomial(vec![2, 0]), rat(1));
        q.add_term(Monomial(vec![0, 2]), rat(-1));
        assert_eq!(p, q);
    }

    #[test]
    fn display_puts_x_before_y() {
        let x = Poly::var(3, 0);
        let y = Poly::var(3, 1);
        assert_eq!(x.sub(&y).to_string(), "x - y");
    }

    #[test]
    fn diff_and_eval() {
        // d/dx (x^2 y) = 2xy
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        let p = x.mul(&x).mul(&y);
        let d = p.diff(0);
        assert_eq!(d, x.mul(&y).scale(&rat(2)));
        assert_eq!(d.eval(&[rat(3), rat(5)]), rat(30));
    }

    #[test]
    fn constant_ratio_detection() {
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        let p = x.add(&y).scale(&Rat::new(3.into(), 4.into()));
        let q = x.add(&y);
        assert_eq!(p.constant_ratio_to(&q), Some(Rat::new(3.into(), 4.into())));
        assert_eq!(x.constant_ratio_to(&q), None);
    }
}
