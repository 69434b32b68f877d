//! Polynomials in formal partial-derivative symbols.
//!
//! A [`DerivSym`] is a derivative multi-index: `F[1,0,2]` stands for the
//! partial derivative of the ambient function taken once in `x1` and twice
//! in `x3` (so `F[0,...,0]` is the function itself). Mixed partials are a
//! single symbol because the multi-index representation bakes in symmetry of
//! partial derivatives. A [`DiffPoly`] is a sparse polynomial with rational
//! coefficients whose indeterminates are such symbols; it supports formal
//! differentiation (Leibniz rule, bumping multi-indices), determinants over
//! the symbol ring, substitution of a concrete polynomial, and substitution
//! of a generic bounded-degree polynomial yielding coefficient equations.

use crate::expr::poly::{MPoly, Monomial, Poly, Rat};
use num_traits::{One, Signed, Zero};
use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

/// A formal derivative symbol, i.e. a derivative multi-index.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct DerivSym(pub Vec<u32>);

impl DerivSym {
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn base(nvars: usize) -> Self {
        DerivSym(vec![0; nvars])
    }

    pub fn first(nvars: usize, v: usize) -> Self {
        let mut a = vec![0; nvars];
        a[v] = 1;
        DerivSym(a)
    }

    pub fn second(nvars: usize, v: usize, w: usize) -> Self {
        let mut a = vec![0; nvars];
        a[v] += 1;
        a[w] += 1;
        DerivSym(a)
    }

    pub fn bumped(&self, v: usize) -> Self {
        let mut a = self.0.clone();
        a[v] += 1;
        DerivSym(a)
    }

    pub fn plus(&self, other: &Monomial) -> Self {
        DerivSym(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }
}

/// Significance order used for canonical forms: lower derivative order first,
/// within an order the lexicographically larger multi-index first (so
/// `F[1,0,0]` precedes `F[0,1,0]`, and all first-order symbols precede all
/// second-order ones).
impl Ord for DerivSym {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order()
            .cmp(&other.order())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for DerivSym {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for DerivSym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "F[{}]",
            self.0
                .iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join(",")
        )
    }
}

/// A power product of derivative symbols, kept sorted by significance.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct SymMono(pub Vec<(DerivSym, u32)>);

impl SymMono {
    pub fn unit() -> Self {
        SymMono(Vec::new())
    }

    pub fn single(s: DerivSym) -> Self {
        SymMono(vec![(s, 1)])
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|(_, e)| e).sum()
    }

    pub fn is_unit(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mul(&self, other: &SymMono) -> SymMono {
        let mut out: Vec<(DerivSym, u32)> = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].0.cmp(&other.0[j].0) {
                Ordering::Less => {
                    out.push(self.0[i].clone());
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(other.0[j].clone());
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((self.0[i].0.clone(), self.0[i].1 + other.0[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        SymMono(out)
    }
}

/// Graded order: total degree first; ties are broken by the exponent of the
/// most significant symbol where the two differ.
impl Ord for SymMono {
    fn cmp(&self, other: &Self) -> Ordering {
        match self.degree().cmp(&other.degree()) {
            Ordering::Equal => {}
            ord => return ord,
        }
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].0.cmp(&other.0[j].0) {
                Ordering::Less => return Ordering::Greater, // we own the more significant symbol
                Ordering::Greater => return Ordering::Less,
                Ordering::Equal => match self.0[i].1.cmp(&other.0[j].1) {
                    Ordering::Equal => {
                        i += 1;
                        j += 1;
                    }
                    ord => return ord,
                },
            }
        }
        match (i < self.0.len(), j < other.0.len()) {
            (true, false) => Ordering::Greater,
            (false, true) => Ordering::Less,
            _ => Ordering::Equal,
        }
    }
}

impl PartialOrd for SymMono {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Sparse polynomial over derivative symbols.
#[derive(Clone, PartialEq, Debug)]
pub struct DiffPoly {
    pub nvars: usize,
    pub terms: BTreeMap<SymMono, Rat>,
}

impl DiffPoly {
    pub fn zero(nvars: usize) -> Self {
        DiffPoly {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn one(nvars: usize) -> Self {
        DiffPoly::constant(nvars, Rat::one())
    }

    pub fn constant(nvars: usize, c: Rat) -> Self {
        let mut p = DiffPoly::zero(nvars);
        p.add_term(SymMono::unit(), c);
        p
    }

    pub fn sym(nvars: usize, s: DerivSym) -> Self {
        assert_eq!(s.0.len(), nvars);
        let mut p = DiffPoly::zero(nvars);
        p.add_term(SymMono::single(s), Rat::one());
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn add_term(&mut self, m: SymMono, c: Rat) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += &c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.nvars, other.nvars);
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
        DiffPoly {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
        }
    }

    pub fn scale(&self, c: &Rat) -> Self {
        if c.is_zero() {
            return DiffPoly::zero(self.nvars);
        }
        DiffPoly {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(m, k)| (m.clone(), k * c)).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.nvars, other.nvars);
        let mut out = DiffPoly::zero(self.nvars);
        let (a, b) = if self.terms.len() <= other.terms.len() {
            (self, other)
        } else {
            (other, self)
        };
        for (ma, ca) in &a.terms {
            for (mb, cb) in &b.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }

    /// Highest derivative order among used symbols.
    pub fn max_order(&self) -> u32 {
        self.terms
            .keys()
            .flat_map(|m| m.0.iter().map(|(s, _)| s.order()))
            .max()
            .unwrap_or(0)
    }

    pub fn symbols(&self) -> impl Iterator<Item = &DerivSym> {
        self.terms.keys().flat_map(|m| m.0.iter().map(|(s, _)| s))
    }

    /// Normalize sign so the leading coefficient is positive; returns the
    /// normalized polynomial (used for deduplication up to sign).
    pub fn sign_normalized(&self) -> DiffPoly {
        match self.terms.iter().next_back() {
            Some((_, c)) if c.is_negative() => self.neg(),
            _ => self.clone(),
        }
    }

    /// Formal partial derivative with respect to ambient variable `v`:
    /// Leibniz over each power product, each symbol bumping its multi-index.
    pub fn formal_diff(&self, v: usize) -> DiffPoly {
        assert!(v < self.nvars);
        let mut out = DiffPoly::zero(self.nvars);
        for (m, c) in &self.terms {
            for (k, (s, e)) in m.0.iter().enumerate() {
                // replace one factor s by s bumped in v
                let mut factors: Vec<(DerivSym, u32)> = Vec::with_capacity(m.0.len() + 1);
                for (k2, (s2, e2)) in m.0.iter().enumerate() {
                    let e_new = if k2 == k { e2 - 1 } else { *e2 };
                    if e_new > 0 {
                        factors.push((s2.clone(), e_new));
                    }
                }
                let bumped = SymMono::single(s.bumped(v));
                let mono = sorted_symmono(factors).mul(&bumped);
                out.add_term(mono, c * Rat::from_integer((*e).into()));
            }
        }
        out
    }

    /// Iterated formal derivative along a multi-index.
    pub fn formal_diff_multi(&self, delta: &Monomial) -> DiffPoly {
        let mut out = self.clone();
        for (v, &k) in delta.0.iter().enumerate() {
            for _ in 0..k {
                out = out.formal_diff(v);
            }
        }
        out
    }

    /// Replace every symbol by the corresponding exact partial derivative of
    /// `f` and expand. Evaluation is organized Horner-style around the most
    /// frequent symbol to limit intermediate blowup.
    pub fn substitute(&self, f: &Poly) -> Poly {
        assert_eq!(self.nvars, f.nvars, "ambient variable count mismatch");
        let mut cache: HashMap<DerivSym, Poly> = HashMap::new();
        let terms: Vec<(Vec<(DerivSym, u32)>, Rat)> = self
            .terms
            .iter()
            .map(|(m, c)| (m.0.clone(), c.clone()))
            .collect();
        substitute_rec(&terms, f, &mut cache)
    }

    /// Substitute symbol values numerically; returns the sum and the largest
    /// absolute value among the summed terms (the constraint's own scale).
    pub fn eval_with<E>(&self, mut sym_value: E) -> (f64, f64)
    where
        E: FnMut(&DerivSym) -> f64,
    {
        let mut cache: HashMap<DerivSym, f64> = HashMap::new();
        let mut total = 0.0f64;
        let mut max_abs = 0.0f64;
        for (m, c) in &self.terms {
            let mut t = rat_to_f64(c);
            for (s, e) in &m.0 {
                let v = *cache
                    .entry(s.clone())
                    .or_insert_with(|| sym_value(s));
                t *= v.powi(*e as i32);
            }
            total += t;
            max_abs = max_abs.max(t.abs());
        }
        (total, max_abs)
    }
}

pub(crate) fn rat_to_f64(c: &Rat) -> f64 {
    use num_traits::ToPrimitive;
    c.to_f64().unwrap_or(f64::NAN)
}

fn sorted_symmono(mut factors: Vec<(DerivSym, u32)>) -> SymMono {
    factors.sort_by(|a, b| a.0.cmp(&b.0));
    // merge equal symbols
    let mut out: Vec<(DerivSym, u32)> = Vec::with_capacity(factors.len());
    for (s, e) in factors {
        if let Some(last) = out.last_mut() {
            if last.0 == s {
                last.1 += e;
                continue;
            }
        }
        out.push((s, e));
    }
    SymMono(out)
}

fn substitute_rec(
    terms: &[(Vec<(DerivSym, u32)>, Rat)],
    f: &Poly,
    cache: &mut HashMap<DerivSym, Poly>,
) -> Poly {
    let nvars = f.nvars;
    if terms.is_empty() {
        return Poly::zero(nvars);
    }
    // frequency count
    let mut counts: HashMap<&DerivSym, usize> = HashMap::new();
    for (m, _) in terms {
        for (s, _) in m {
            *counts.entry(s).or_insert(0) += 1;
        }
    }
    let best = counts.into_iter().max_by_key(|(_, c)| *c);
    let (pivot, count) = match best {
        None => {
            // all terms constant
            let mut p = Poly::zero(nvars);
            for (_, c) in terms {
                p.add_term(Monomial::unit(nvars), c.clone());
            }
            return p;
        }
        Some((s, c)) => (s.clone(), c),
    };
    if count <= 1 {
        // no sharing to exploit: expand term by term
        let mut acc = Poly::zero(nvars);
        for (m, c) in terms {
            let mut t = Poly::constant_rat(nvars, c.clone());
            for (s, e) in m {
                let d = deriv_poly(f, s, cache);
                if d.is_zero() {
                    t = Poly::zero(nvars);
                    break;
                }
                for _ in 0..*e {
                    t = t.mul(&d);
                }
            }
            acc = acc.add(&t);
        }
        return acc;
    }
    let pivot_poly = deriv_poly(f, &pivot, cache);
    let mut with_pivot: Vec<(Vec<(DerivSym, u32)>, Rat)> = Vec::new();
    let mut without: Vec<(Vec<(DerivSym, u32)>, Rat)> = Vec::new();
    for (m, c) in terms {
        if let Some(pos) = m.iter().position(|(s, _)| *s == pivot) {
            let mut m2 = m.clone();
            if m2[pos].1 == 1 {
                m2.remove(pos);
            } else {
                m2[pos].1 -= 1;
            }
            with_pivot.push((m2, c.clone()));
        } else {
            without.push((m.clone(), c.clone()));
        }
    }
    let rest = substitute_rec(&without, f, cache);
    if pivot_poly.is_zero() {
        return rest;
    }
    let inner = substitute_rec(&with_pivot, f, cache);
    inner.mul(&pivot_poly).add(&rest)
}

fn deriv_poly(f: &Poly, s: &DerivSym, cache: &mut HashMap<DerivSym, Poly>) -> Poly {
    if let Some(p) = cache.get(s) {
        return p.clone();
    }
    let p = f.diff_multi(&Monomial(s.0.clone()));
    cache.insert(s.clone(), p.clone());
    p
}

/// Exact determinant over the symbol ring. Plain cofactor expansion up to
/// 4x4; beyond that a column sweep with cached minors, since the ring has no
/// division.
pub fn det(m: &[Vec<DiffPoly>]) -> DiffPoly {
    let k = m.len();
    assert!(k > 0, "empty matrix");
    let nvars = m[0][0].nvars;
    for row in m {
        assert_eq!(row.len(), k, "matrix must be square");
    }
    if k <= 4 {
        return det_cofactor(m, &(0..k).collect::<Vec<_>>(), &(0..k).collect::<Vec<_>>(), nvars);
    }
    det_minor_cached(m, nvars)
}

fn det_cofactor(m: &[Vec<DiffPoly>], rows: &[usize], cols: &[usize], nvars: usize) -> DiffPoly {
    if rows.len() == 1 {
        return m[rows[0]][cols[0]].clone();
    }
    let mut acc = DiffPoly::zero(nvars);
    let sub_rows: Vec<usize> = rows[1..].to_vec();
    for (j, &c) in cols.iter().enumerate() {
        let e = &m[rows[0]][c];
        if e.is_zero() {
            continue;
        }
        let sub_cols: Vec<usize> = cols
            .iter()
            .enumerate()
            .filter(|(jj, _)| *jj != j)
            .map(|(_, &cc)| cc)
            .collect();
        let minor = det_cofactor(m, &sub_rows, &sub_cols, nvars);
        let signed = if j % 2 == 0 { e.mul(&minor) } else { e.mul(&minor).neg() };
        acc = acc.add(&signed);
    }
    acc
}

fn det_minor_cached(m: &[Vec<DiffPoly>], nvars: usize) -> DiffPoly {
    let k = m.len();
    let mut cur: HashMap<u32, DiffPoly> = HashMap::new();
    cur.insert(0, DiffPoly::one(nvars));
    for col in 0..k {
        let mut next: HashMap<u32, DiffPoly> = HashMap::new();
        for (mask, minor) in &cur {
            if minor.is_zero() {
                continue;
            }
            for row in 0..k {
                let bit = 1u32 << row;
                if mask & bit != 0 {
                    continue;
                }
                let e = &m[row][col];
                if e.is_zero() {
                    continue;
                }
                let below = (mask & (bit - 1)).count_ones();
                let sign_neg = (below + col as u32) % 2 == 1;
                let term = if sign_neg {
                    e.mul(minor).neg()
                } else {
                    e.mul(minor)
                };
                let entry = next
                    .entry(mask | bit)
                    .or_insert_with(|| DiffPoly::zero(nvars));
                *entry = entry.add(&term);
            }
        }
        cur = next;
    }
    cur.remove(&((1u32 << k) - 1))
        .unwrap_or_else(|| DiffPoly::zero(nvars))
}

/// All derivative-degree-`<= d` multi-indices over `n` variables, in the
/// canonical significance order (degree ascending, then lexicographically
/// descending).
pub fn multi_indices_upto(n: usize, d: u32) -> Vec<Monomial> {
    let mut out = Vec::new();
    for deg in 0..=d {
        let mut level = Vec::new();
        gen_fixed_degree(n, deg, &mut Vec::with_capacity(n), &mut level);
        level.sort_by(|a: &Monomial, b: &Monomial| b.0.cmp(&a.0));
        out.extend(level);
    }
    out
}

fn gen_fixed_degree(n: usize, deg: u32, prefix: &mut Vec<u32>, out: &mut Vec<Monomial>) {
    if prefix.len() == n - 1 {
        let mut full = prefix.clone();
        full.push(deg);
        out.push(Monomial(full));
        return;
    }
    for e in 0..=deg {
        prefix.push(e);
        gen_fixed_degree(n, deg - e, prefix, out);
        prefix.pop();
    }
}

pub type CPoly = MPoly<Rat>;
type NestedPoly = MPoly<CPoly>;

/// Result of pushing a generic bounded-degree polynomial through a
/// differential polynomial: one coefficient equation per surviving monomial
/// of the ambient variables.
#[derive(Clone, Debug)]
pub struct GenericSubstitution {
    /// Coefficient variables, i.e. the multi-indices `a` with `|a| <= d`.
    pub cvars: Vec<Monomial>,
    /// Pairs of (ambient monomial, polynomial in the coefficient variables).
    pub equations: Vec<(Monomial, CPoly)>,
}

impl DiffPoly {
    /// Substitute the generic polynomial of total degree at most `d` in the
    /// ambient variables, with one symbolic coefficient per monomial. The
    /// result collects, for each ambient monomial of the expansion, the
    /// polynomial in the coefficients that must vanish.
    pub fn substitute_generic(&self, d: u32) -> GenericSubstitution {
        let n = self.nvars;
        let cvars = multi_indices_upto(n, d);
        let ncv = cvars.len();
        let index: HashMap<Vec<u32>, usize> = cvars
            .iter()
            .enumerate()
            .map(|(i, m)| (m.0.clone(), i))
            .collect();
        // generic P as a nested polynomial
        let mut deriv_cache: HashMap<Vec<u32>, NestedPoly> = HashMap::new();
        let mut generic_deriv = |alpha: &DerivSym| -> NestedPoly {
            if let Some(p) = deriv_cache.get(&alpha.0) {
                return p.clone();
            }
            let mut out = NestedPoly::zero(n);
            for a in &cvars {
                // d^alpha x^a
                let mut coef = Rat::one();
                let mut ok = true;
                let mut expo = Vec::with_capacity(n);
                for v in 0..n {
                    let av = a.0[v];
                    let k = alpha.0[v];
                    if av < k {
                        ok = false;
                        break;
                    }
                    for t in 0..k {
                        coef *= Rat::from_integer((av - t).into());
                    }
                    expo.push(av - k);
                }
                if !ok {
                    continue;
                }
                let mut cp = CPoly::zero(ncv);
                cp.add_term(Monomial::var(ncv, index[&a.0]), coef);
                out.add_term(Monomial(expo), cp);
            }
            deriv_cache.insert(alpha.0.clone(), out.clone());
            out
        };

        let mut acc = NestedPoly::zero(n);
        for (m, c) in &self.terms {
            let mut t = {
                let mut cp = CPoly::zero(ncv);
                cp.add_term(Monomial::unit(ncv), c.clone());
                NestedPoly::constant(n, cp)
            };
            for (s, e) in &m.0 {
                let dp = generic_deriv(s);
                for _ in 0..*e {
                    t = t.mul(&dp);
                }
            }
            acc = acc.add(&t);
        }
        let equations = acc
            .terms
            .into_iter()
            .map(|(m, cp)| (m, cp))
            .collect::<Vec<_>>();
        GenericSubstitution { cvars, equations }
    }
}

/// Coefficient of `dx_a ^ dx_b ^ dx_c` (for every `a < b < c`) in the
/// exterior 3-form built from the vector field `v`: zero everywhere exactly
/// when the field is integrable in the proportional-to-a-gradient sense.
pub fn frobenius_form(v: &[Poly]) -> BTreeMap<(usize, usize, usize), Poly> {
    let n = v.len();
    let mut out = BTreeMap::new();
    if n < 3 {
        return out;
    }
    for p in v {
        assert_eq!(p.nvars, n, "vector field components must use n variables");
    }
    for a in 0..n {
        for b in (a + 1)..n {
            for c in (b + 1)..n {
                let curl_bc = v[c].diff(b).sub(&v[b].diff(c));
                let curl_ac = v[c].diff(a).sub(&v[a].diff(c));
                let curl_ab = v[b].diff(a).sub(&v[a].diff(b));
                let coef = v[a]
                    .mul(&curl_bc)
                    .sub(&v[b].mul(&curl_ac))
                    .add(&v[c].mul(&curl_ab));
                out.insert((a, b, c), coef);
            }
        }
    }
    out
}

impl fmt::Display for DiffPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in self.terms.iter().rev() {
            let neg = c.is_negative();
            let mag = c.abs();
            if first {
                if neg {
                    write!(f, "-")?;
                }
                first = false;
            } else if neg {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let mut parts: Vec<String> = Vec::new();
            if !mag.is_one() || m.is_unit() {
                parts.push(crate::expr::poly::format_rat(&mag));
            }
            // factors print with the highest-order symbol first
            for (s, e) in m.0.iter().rev() {
                if *e == 1 {
                    parts.push(s.to_string());
                } else {
                    parts.push(format!("{s}^{e}"));
                }
            }
            write!(f, "{}", parts.join("*"))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_poly;

    fn sym(nvars: usize, alpha: &[u32]) -> DiffPoly {
        DiffPoly::sym(nvars, DerivSym(alpha.to_vec()))
    }

    #[test]
    fn formal_diff_increments_indices() {
        // d/dz F_y = F_yz
        let fy = sym(3, &[0, 1, 0]);
        assert_eq!(fy.formal_diff(2), sym(3, &[0, 1, 1]));
        // Leibniz: d/dx (F_x F_y) = F_xx F_y + F_x F_xy
        let p = sym(3, &[1, 0, 0]).mul(&sym(3, &[0, 1, 0]));
        let expect = sym(3, &[2, 0, 0])
            .mul(&sym(3, &[0, 1, 0]))
            .add(&sym(3, &[1, 0, 0]).mul(&sym(3, &[1, 1, 0])));
        assert_eq!(p.formal_diff(0), expect);
    }

    #[test]
    fn canonical_text_form() {
        // F_yz F_x - F_xz F_y
        let dp = sym(3, &[0, 1, 1])
            .mul(&sym(3, &[1, 0, 0]))
            .sub(&sym(3, &[1, 0, 1]).mul(&sym(3, &[0, 1, 0])));
        assert_eq!(dp.to_string(), "F[0,1,1]*F[1,0,0] - F[1,0,1]*F[0,1,0]");
    }

    #[test]
    fn substitute_on_counterexample() {
        let dp = sym(3, &[0, 1, 1])
            .mul(&sym(3, &[1, 0, 0]))
            .sub(&sym(3, &[1, 0, 1]).mul(&sym(3, &[0, 1, 0])));
        let f = parse_poly("x*y*z + x + y + z", 3).unwrap();
        assert_eq!(dp.substitute(&f), parse_poly("x - y", 3).unwrap());
        let g = parse_poly("(x + y^2)*z + x + y^2", 3).unwrap();
        assert!(dp.substitute(&g).is_zero());
    }

    #[test]
    fn substitute_kills_first_order_terms_on_constants() {
        let dp = sym(2, &[1, 0]).mul(&sym(2, &[0, 1])).add(&sym(2, &[1, 1]));
        let c = parse_poly("7/3", 2).unwrap();
        assert!(dp.substitute(&c).is_zero());
    }

    #[test]
    fn determinant_of_diagonal() {
        let m = vec![
            vec![sym(2, &[1, 0]), DiffPoly::zero(2)],
            vec![DiffPoly::zero(2), sym(2, &[0, 1])],
        ];
        assert_eq!(det(&m), sym(2, &[1, 0]).mul(&sym(2, &[0, 1])));
    }

    #[test]
    fn determinant_cofactor_matches_cached_expansion() {
        // 5x5 with a recognizable sparse pattern exercises the cached path
        let n = 5usize;
        let mut m = Vec::new();
        for i in 0..n {
            let mut row = Vec::new();
            for j in 0..n {
                if (i + j) % 2 == 0 {
                    let mut a = vec![0u32; n];
                    a[i] += 1;
                    a[j] += 1;
                    row.push(DiffPoly::sym(n, DerivSym(a)));
                } else {
                    row.push(DiffPoly::zero(n));
                }
            }
            m.push(row);
        }
        let full = det(&m);
        let by_perm = det_by_permutations(&m);
        assert_eq!(full, by_perm);
    }

    fn det_by_permutations(m: &[Vec<DiffPoly>]) -> DiffPoly {
        let k = m.len();
        let nvars = m[0][0].nvars;
        let mut acc = DiffPoly::zero(nvars);
        let mut perm: Vec<usize> = (0..k).collect();
        permute(&mut perm, 0, &mut |p| {
            let mut prod = DiffPoly::one(nvars);
            for (i, &j) in p.iter().enumerate() {
                prod = prod.mul(&m[i][j]);
            }
            let mut inv = 0;
            for a in 0..k {
                for b in (a + 1)..k {
                    if p[a] > p[b] {
                        inv += 1;
                    }
                }
            }
            if inv % 2 == 1 {
                prod = prod.neg();
            }
            acc = acc.add(&prod);
        });
        acc
    }

    fn permute(v: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k == v.len() {
            f(v);
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            permute(v, k + 1, f);
            v.swap(k, i);
        }
    }

    #[test]
    fn frobenius_examples() {
        // gradient fields are integrable
        let f = parse_poly("x^2 + y*z", 3).unwrap();
        let grad = vec![f.diff(0), f.diff(1), f.diff(2)];
        for (_, coef) in frobenius_form(&grad) {
            assert!(coef.is_zero());
        }
        // (y, 0, x) has coefficient -x
        let v = vec![
            parse_poly("y", 3).unwrap(),
            Poly::zero(3),
            parse_poly("x", 3).unwrap(),
        ];
        let out = frobenius_form(&v);
        assert_eq!(out.get(&(0, 1, 2)).unwrap(), &parse_poly("-x", 3).unwrap());
        // (-y, x, 0) is orthogonal to its curl
        let w = vec![
            parse_poly("-y", 3).unwrap(),
            parse_poly("x", 3).unwrap(),
            Poly::zero(3),
        ];
        assert!(frobenius_form(&w)[&(0, 1, 2)].is_zero());
    }

    #[test]
    fn generic_substitution_of_affine_is_trivial() {
        let dp = sym(3, &[0, 1, 1])
            .mul(&sym(3, &[1, 0, 0]))
            .sub(&sym(3, &[1, 0, 1]).mul(&sym(3, &[0, 1, 0])));
        let gs = dp.substitute_generic(1);
        assert!(gs.equations.iter().all(|(_, eq)| eq.is_zero()));
    }
}
