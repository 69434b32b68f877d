//! Constraint generation: the tree rules in both regimes, the linear
//! elimination engine, and named presets for recurring families.
//!
//! A constraint is carried as a sum of products of differential polynomials.
//! Tree-rule equalities are a single expanded polynomial; elimination-based
//! equalities keep their determinant factors unexpanded (with a lazy formal
//! derivative where required), which keeps generation and substitution
//! tractable for the larger families while remaining exact.

use crate::arch::{QuadSite, Regime, Tree, Triple};
use crate::diffpoly::{DerivSym, DiffPoly};
use crate::expr::poly::{format_rat, Monomial, Rat};
use num_traits::{One, Signed, Zero};
use serde_json::{json, Value};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("{0}")]
    Arch(#[from] crate::arch::ArchError),
    #[error("elimination system is not square: {unknowns} unknowns vs {equations} equations")]
    NonSquare { unknowns: usize, equations: usize },
    #[error("elimination matrix is structurally singular (identically zero determinant)")]
    Singular,
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("preset `{name}` requires at least {min} variables, got {n}")]
    TooFewVariables {
        name: &'static str,
        min: usize,
        n: usize,
    },
    #[error("variable sets must be disjoint and non-empty")]
    BadSplitSets,
    #[error("constraint text is malformed: {0}")]
    Parse(String),
}

// ---------------------------------------------------------------------------
// constraint carriers
// ---------------------------------------------------------------------------

/// One multiplicative factor: a differential polynomial, optionally under a
/// pending formal derivative (applied lazily; `D[delta](...)` in text form).
#[derive(Debug, Clone)]
pub struct Factor {
    pub base: Arc<DiffPoly>,
    pub deriv: Monomial,
}

impl Factor {
    pub fn plain(base: DiffPoly) -> Self {
        let n = base.nvars;
        Factor {
            base: Arc::new(base),
            deriv: Monomial::unit(n),
        }
    }

    pub fn shared(base: Arc<DiffPoly>) -> Self {
        let n = base.nvars;
        Factor {
            base,
            deriv: Monomial::unit(n),
        }
    }

    pub fn derived(base: Arc<DiffPoly>, deriv: Monomial) -> Self {
        Factor { base, deriv }
    }

    /// Expanded form with the pending derivative applied.
    pub fn resolved(&self) -> DiffPoly {
        if self.deriv.is_unit() {
            (*self.base).clone()
        } else {
            self.base.formal_diff_multi(&self.deriv)
        }
    }

    pub fn max_order(&self) -> u32 {
        self.base.max_order() + self.deriv.degree()
    }
}

#[derive(Debug, Clone)]
pub struct DiffProduct {
    pub coef: Rat,
    pub factors: Vec<Factor>,
}

/// Sum of products of differential polynomials.
#[derive(Debug, Clone)]
pub struct DiffExpr {
    pub nvars: usize,
    pub products: Vec<DiffProduct>,
}

impl DiffExpr {
    pub fn from_poly(dp: DiffPoly) -> Self {
        let nvars = dp.nvars;
        DiffExpr {
            nvars,
            products: vec![DiffProduct {
                coef: Rat::one(),
                factors: vec![Factor::plain(dp)],
            }],
        }
    }

    /// `D_v(a)*b - a*D_v(b)`: the cross-multiplied statement that `a/b` does
    /// not depend on variable `v`.
    pub fn cross_derivative(a: Arc<DiffPoly>, b: Arc<DiffPoly>, v: usize) -> Self {
        let nvars = a.nvars;
        let dv = Monomial::var(nvars, v);
        DiffExpr {
            nvars,
            products: vec![
                DiffProduct {
                    coef: Rat::one(),
                    factors: vec![Factor::derived(a.clone(), dv.clone()), Factor::shared(b.clone())],
                },
                DiffProduct {
                    coef: -Rat::one(),
                    factors: vec![Factor::shared(a), Factor::derived(b, dv)],
                },
            ],
        }
    }

    pub fn expand(&self) -> DiffPoly {
        let mut acc = DiffPoly::zero(self.nvars);
        for p in &self.products {
            let mut t = DiffPoly::constant(self.nvars, p.coef.clone());
            for f in &p.factors {
                t = t.mul(&f.resolved());
            }
            acc = acc.add(&t);
        }
        acc
    }

    pub fn max_order(&self) -> u32 {
        self.products
            .iter()
            .flat_map(|p| p.factors.iter().map(Factor::max_order))
            .max()
            .unwrap_or(0)
    }

    fn is_single_plain(&self) -> Option<&DiffPoly> {
        if self.products.len() == 1 {
            let p = &self.products[0];
            if p.coef.is_one() && p.factors.len() == 1 && p.factors[0].deriv.is_unit() {
                return Some(&p.factors[0].base);
            }
        }
        None
    }
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub expr: DiffExpr,
    pub provenance: String,
}

/// Disjunction of non-vanishing atoms: at least one must be non-zero.
#[derive(Debug, Clone)]
pub struct Clause {
    pub atoms: Vec<Arc<DiffPoly>>,
    pub provenance: String,
}

/// Equalities (must vanish identically), strict inequalities, and generic
/// non-vanishing clauses, each tagged with the rule that generated it.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub nvars: usize,
    /// Display names for the ambient variables (defaults apply when absent).
    pub var_names: Option<Vec<String>>,
    pub equalities: Vec<Constraint>,
    pub inequalities: Vec<Constraint>,
    pub nonvanishing: Vec<Clause>,
}

impl ConstraintSet {
    pub fn new(nvars: usize) -> Self {
        ConstraintSet {
            nvars,
            var_names: None,
            equalities: Vec::new(),
            inequalities: Vec::new(),
            nonvanishing: Vec::new(),
        }
    }

    /// Push an equality unless it is identically zero or duplicates an
    /// existing single-polynomial equality up to sign.
    pub fn push_equality_poly(&mut self, dp: DiffPoly, provenance: String) {
        if dp.is_zero() {
            return;
        }
        let key = dp.sign_normalized();
        for c in &self.equalities {
            if let Some(existing) = c.expr.is_single_plain() {
                if existing.sign_normalized() == key {
                    return;
                }
            }
        }
        self.equalities.push(Constraint {
            expr: DiffExpr::from_poly(dp),
            provenance,
        });
    }

    pub fn push_equality_expr(&mut self, expr: DiffExpr, provenance: String) {
        self.equalities.push(Constraint { expr, provenance });
    }

    pub fn max_order(&self) -> u32 {
        self.equalities
            .iter()
            .chain(&self.inequalities)
            .map(|c| c.expr.max_order())
            .chain(
                self.nonvanishing
                    .iter()
                    .flat_map(|c| c.atoms.iter().map(|a| a.max_order())),
            )
            .max()
            .unwrap_or(0)
    }
}

// ---------------------------------------------------------------------------
// tree generators
// ---------------------------------------------------------------------------

/// `F_{x_j x_k} F_{x_i} - F_{x_i x_k} F_{x_j}` for a 1-based triple: the
/// cross-multiplied form of "the ratio of the first partials in `x_i`, `x_j`
/// does not depend on `x_k`".
pub fn ratio_independence(nvars: usize, t: &Triple) -> DiffPoly {
    let (i, j, k) = (t.i - 1, t.j - 1, t.k - 1);
    let fi = DiffPoly::sym(nvars, DerivSym::first(nvars, i));
    let fj = DiffPoly::sym(nvars, DerivSym::first(nvars, j));
    let fjk = DiffPoly::sym(nvars, DerivSym::second(nvars, j, k));
    let fik = DiffPoly::sym(nvars, DerivSym::second(nvars, i, k));
    fjk.mul(&fi).sub(&fik.mul(&fj))
}

/// Cross-multiplied product-splitting identity for a quadruple site: the
/// logarithmic mixed derivative of `F_{x_i}/F_{x_j}` in `x_{i'}`, `x_{j'}`
/// vanishes when that ratio splits into separate-variable factors.
pub fn ratio_split(nvars: usize, q: &QuadSite) -> DiffPoly {
    let (i, i2, j, j2) = (q.i - 1, q.i2 - 1, q.j - 1, q.j2 - 1);
    let sym = |a: Vec<usize>| {
        let mut m = vec![0u32; nvars];
        for v in a {
            m[v] += 1;
        }
        DiffPoly::sym(nvars, DerivSym(m))
    };
    let fi = sym(vec![i]);
    let fj = sym(vec![j]);
    let fii2 = sym(vec![i, i2]);
    let fjj2 = sym(vec![j, j2]);
    let fij2 = sym(vec![i, j2]);
    let fji2 = sym(vec![j, i2]);
    let fii2j2 = sym(vec![i, i2, j2]);
    let fji2j2 = sym(vec![j, i2, j2]);
    // F_i F_j [F_{i i' j'} F_j + F_{i i'} F_{j j'} - F_{i j'} F_{j i'} - F_i F_{j i' j'}]
    //   - (F_{i i'} F_j - F_i F_{j i'}) (F_{i j'} F_j + F_i F_{j j'})
    let bracket = fii2j2
        .mul(&fj)
        .add(&fii2.mul(&fjj2))
        .sub(&fij2.mul(&fji2))
        .sub(&fi.mul(&fji2j2));
    let lhs = fi.mul(&fj).mul(&bracket);
    let rhs = fii2
        .mul(&fj)
        .sub(&fi.mul(&fji2))
        .mul(&fij2.mul(&fj).add(&fi.mul(&fjj2)));
    lhs.sub(&rhs)
}

/// The generic-position clauses for a tree: one disjunction per group of
/// sibling leaves, plus (in the activation regime) a singleton clause for
/// every leaf without sibling leaves.
pub fn nonvanishing_clauses(t: &Tree, regime: Regime) -> Vec<Clause> {
    let nvars = t.nvars;
    let mut out = Vec::new();
    for group in t.sibling_groups() {
        if group.len() >= 2 {
            let atoms = group
                .iter()
                .map(|&v| Arc::new(DiffPoly::sym(nvars, DerivSym::first(nvars, v))))
                .collect();
            let names: Vec<String> = group.iter().map(|v| format!("x{}", v + 1)).collect();
            out.push(Clause {
                atoms,
                provenance: format!("sibling_group({})", names.join(",")),
            });
        } else if regime == Regime::Activation {
            let v = group[0];
            out.push(Clause {
                atoms: vec![Arc::new(DiffPoly::sym(nvars, DerivSym::first(nvars, v)))],
                provenance: format!("lone_leaf(x{})", v + 1),
            });
        }
    }
    out
}

/// Constraints for arbitrary lower-arity node functions on a tree with
/// distinct leaf labels: one ratio-independence equality per separating
/// sub-tree triple, plus the sibling-group clauses. No inequalities.
pub fn tree_smooth(t: &Tree) -> Result<ConstraintSet, ConstraintError> {
    let triples = t.outsider_triples()?;
    let mut cs = ConstraintSet::new(t.nvars);
    for tr in &triples {
        cs.push_equality_poly(
            ratio_independence(t.nvars, tr),
            format!("ratio_indep({},{};{})", tr.i, tr.j, tr.k),
        );
    }
    cs.nonvanishing = nonvanishing_clauses(t, Regime::Smooth);
    Ok(cs)
}

/// Constraints for linear-combination-plus-activation node functions on a
/// tree with distinct leaf labels: ratio independence over the extended
/// triple family, product-splitting identities over sub-tree pair sites, and
/// the two clause rules.
pub fn tree_activation(t: &Tree) -> Result<ConstraintSet, ConstraintError> {
    let mut cs = ConstraintSet::new(t.nvars);
    for tr in &t.activation_triples()? {
        cs.push_equality_poly(
            ratio_independence(t.nvars, tr),
            format!("ratio_indep({},{};{})", tr.i, tr.j, tr.k),
        );
    }
    for q in &t.quad_sites()? {
        cs.push_equality_poly(
            ratio_split(t.nvars, q),
            format!("ratio_split({},{}|{},{})", q.i, q.i2, q.j, q.j2),
        );
    }
    cs.nonvanishing = nonvanishing_clauses(t, Regime::Activation);
    Ok(cs)
}

/// Equalities `F * F_{x_a x_b} - F_{x_a} * F_{x_b}` for `a` in `iset`, `b`
/// in `jset` (1-based): all vanish exactly when the function splits into a
/// product of a function of the `iset` variables and one of the `jset`
/// variables.
pub fn split_test(
    nvars: usize,
    iset: &BTreeSet<usize>,
    jset: &BTreeSet<usize>,
) -> Result<Vec<DiffPoly>, ConstraintError> {
    if iset.is_empty() || jset.is_empty() || !iset.is_disjoint(jset) {
        return Err(ConstraintError::BadSplitSets);
    }
    let base = DiffPoly::sym(nvars, DerivSym::base(nvars));
    let mut out = Vec::new();
    for &a in iset {
        for &b in jset {
            let fa = DiffPoly::sym(nvars, DerivSym::first(nvars, a - 1));
            let fb = DiffPoly::sym(nvars, DerivSym::first(nvars, b - 1));
            let fab = DiffPoly::sym(nvars, DerivSym::second(nvars, a - 1, b - 1));
            out.push(base.mul(&fab).sub(&fa.mul(&fb)));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// linear elimination
// ---------------------------------------------------------------------------

/// A linear identity `target = sum_k u_k * multiplier_k` whose unknown
/// coefficients `u_k` depend only on their declared variable support, to be
/// differentiated by the given operators into a square system and solved by
/// determinant ratios.
#[derive(Debug, Clone)]
pub struct EliminationAnsatz {
    pub nvars: usize,
    pub target: DerivSym,
    /// (multiplier symbol, 0-based variable support of the unknown).
    pub terms: Vec<(DerivSym, BTreeSet<usize>)>,
    /// Differentiation multi-indices applied to the base identity.
    pub operators: Vec<Monomial>,
}

/// Solved elimination system: the coefficient matrix determinant and the
/// column-replacement numerators for the base unknowns.
#[derive(Debug, Clone)]
pub struct EliminationSystem {
    pub nvars: usize,
    pub matrix: Vec<Vec<DiffPoly>>,
    pub rhs: Vec<DiffPoly>,
    /// Unknown labels: (term index, derivative applied to the unknown).
    pub unknowns: Vec<(usize, Monomial)>,
    pub psi: Arc<DiffPoly>,
    /// Numerator determinant per base unknown (term index order).
    pub numerators: Vec<Arc<DiffPoly>>,
}

pub fn eliminate(ansatz: &EliminationAnsatz) -> Result<EliminationSystem, ConstraintError> {
    let n = ansatz.nvars;
    // unknown set: (k, gamma) with gamma <= some operator, supported in S_k
    let mut unknown_set: BTreeSet<(usize, Vec<u32>)> = BTreeSet::new();
    for (k, _) in ansatz.terms.iter().enumerate() {
        unknown_set.insert((k, vec![0; n]));
    }
    for beta in &ansatz.operators {
        for (k, (_, support)) in ansatz.terms.iter().enumerate() {
            for gamma in sub_indices(beta) {
                if gamma.iter().all(|&g| g == 0) {
                    continue;
                }
                let supported = gamma
                    .iter()
                    .enumerate()
                    .all(|(v, &g)| g == 0 || support.contains(&v));
                if supported {
                    unknown_set.insert((k, gamma));
                }
            }
        }
    }
    let unknowns: Vec<(usize, Monomial)> = unknown_set
        .into_iter()
        .map(|(k, g)| (k, Monomial(g)))
        .collect();
    let rows = 1 + ansatz.operators.len();
    if unknowns.len() != rows {
        return Err(ConstraintError::NonSquare {
            unknowns: unknowns.len(),
            equations: rows,
        });
    }
    // order: base unknowns first (term order), then derived ones
    let mut ordered: Vec<(usize, Monomial)> = Vec::with_capacity(unknowns.len());
    for (k, g) in &unknowns {
        if g.is_unit() {
            ordered.push((*k, g.clone()));
        }
    }
    ordered.sort_by_key(|(k, _)| *k);
    let mut derived: Vec<(usize, Monomial)> = unknowns
        .iter()
        .filter(|(_, g)| !g.is_unit())
        .cloned()
        .collect();
    derived.sort();
    ordered.extend(derived);

    let mut betas: Vec<Monomial> = vec![Monomial::unit(n)];
    betas.extend(ansatz.operators.iter().cloned());
    let mut matrix = Vec::with_capacity(rows);
    let mut rhs = Vec::with_capacity(rows);
    for beta in &betas {
        let mut row = Vec::with_capacity(ordered.len());
        for (k, gamma) in &ordered {
            let entry = match beta.div(gamma) {
                None => DiffPoly::zero(n),
                Some(rest) => {
                    let coef = multinomial(beta, gamma);
                    let sym = ansatz.terms[*k].0.plus(&rest);
                    DiffPoly::sym(n, sym).scale(&Rat::from_integer(coef.into()))
                }
            };
            row.push(entry);
        }
        matrix.push(row);
        rhs.push(DiffPoly::sym(n, ansatz.target.plus(beta)));
    }
    let psi = crate::diffpoly::det(&matrix);
    if psi.is_zero() {
        return Err(ConstraintError::Singular);
    }
    let base_count = ansatz.terms.len();
    let mut numerators = Vec::with_capacity(base_count);
    for col in 0..base_count {
        let mut m2 = matrix.clone();
        for (r, row) in m2.iter_mut().enumerate() {
            row[col] = rhs[r].clone();
        }
        numerators.push(Arc::new(crate::diffpoly::det(&m2)));
    }
    Ok(EliminationSystem {
        nvars: n,
        matrix,
        rhs,
        unknowns: ordered,
        psi: Arc::new(psi),
        numerators,
    })
}

impl EliminationSystem {
    /// Equalities stating that each solved base coefficient is independent
    /// of every variable outside its support, plus the determinant clause.
    pub fn constraint_set(&self, ansatz: &EliminationAnsatz) -> ConstraintSet {
        let mut cs = ConstraintSet::new(self.nvars);
        for (k, (_, support)) in ansatz.terms.iter().enumerate() {
            for v in 0..self.nvars {
                if support.contains(&v) {
                    continue;
                }
                cs.push_equality_expr(
                    DiffExpr::cross_derivative(self.numerators[k].clone(), self.psi.clone(), v),
                    format!("coef_indep(u{};x{})", k + 1, v + 1),
                );
            }
        }
        cs.nonvanishing.push(Clause {
            atoms: vec![self.psi.clone()],
            provenance: "det_nonzero".to_string(),
        });
        cs
    }
}

fn sub_indices(beta: &Monomial) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for &b in &beta.0 {
        let mut next = Vec::with_capacity(out.len() * (b as usize + 1));
        for prefix in &out {
            for g in 0..=b {
                let mut p = prefix.clone();
                p.push(g);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

fn multinomial(beta: &Monomial, gamma: &Monomial) -> u64 {
    beta.0
        .iter()
        .zip(&gamma.0)
        .map(|(&b, &g)| binom_u64(b as u64, g as u64))
        .product()
}

fn binom_u64(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1u64;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

// ---------------------------------------------------------------------------
// presets
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Preset {
    /// One hidden layer sharing the first input: `g(f_2(x1,x2),...,f_n(x1,xn))`.
    Symmetric(usize),
    /// Deep chain with the first input re-entering at the top:
    /// `g(x1, f_n(...f_3(f_2(x1,x2),x3)...,xn))`, `n >= 4`.
    Asymmetric(usize),
    /// The three-variable deep chain `g(x, f(h(x,y),z))`.
    Toy2,
    /// Two-input one-hidden-layer sums `f(a x + b t) + g(a' x + b' t)`.
    Wave2,
    /// Shared bivariate feeding two branches: `g(h1(f(x,y),z), h2(f(x,y),w))`.
    Resnet4,
}

impl std::str::FromStr for Preset {
    type Err = ConstraintError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse_n = |inner: &str| -> Option<usize> { inner.parse().ok() };
        if let Some(rest) = s.strip_prefix("symmetric(").and_then(|r| r.strip_suffix(')')) {
            return parse_n(rest)
                .map(Preset::Symmetric)
                .ok_or_else(|| ConstraintError::UnknownPreset(s.to_string()));
        }
        if let Some(rest) = s.strip_prefix("asymmetric(").and_then(|r| r.strip_suffix(')')) {
            return parse_n(rest)
                .map(Preset::Asymmetric)
                .ok_or_else(|| ConstraintError::UnknownPreset(s.to_string()));
        }
        match s {
            "toy2" => Ok(Preset::Toy2),
            "wave2" => Ok(Preset::Wave2),
            "resnet4" => Ok(Preset::Resnet4),
            other => Err(ConstraintError::UnknownPreset(other.to_string())),
        }
    }
}

pub fn preset(p: &Preset) -> Result<ConstraintSet, ConstraintError> {
    match p {
        Preset::Symmetric(n) => symmetric(*n),
        Preset::Asymmetric(n) => asymmetric(*n),
        Preset::Toy2 => toy2(),
        Preset::Wave2 => wave2(),
        Preset::Resnet4 => resnet4(),
    }
}

/// The elimination system behind the symmetric preset, exposed for reuse.
pub fn symmetric_ansatz(n: usize) -> Result<EliminationAnsatz, ConstraintError> {
    if n < 3 {
        return Err(ConstraintError::TooFewVariables {
            name: "symmetric",
            min: 3,
            n,
        });
    }
    let terms: Vec<(DerivSym, BTreeSet<usize>)> = (1..n)
        .map(|i| {
            (
                DerivSym::first(n, i),
                [0usize, i].into_iter().collect::<BTreeSet<_>>(),
            )
        })
        .collect();
    let mut operators: Vec<Monomial> = (1..n).map(|i| Monomial::var(n, i)).collect();
    for i in 1..n - 1 {
        let mut m = vec![0u32; n];
        m[i] = 1;
        m[i + 1] = 1;
        operators.push(Monomial(m));
    }
    Ok(EliminationAnsatz {
        nvars: n,
        target: DerivSym::first(n, 0),
        terms,
        operators,
    })
}

fn symmetric(n: usize) -> Result<ConstraintSet, ConstraintError> {
    let ansatz = symmetric_ansatz(n)?;
    let sys = eliminate(&ansatz)?;
    Ok(sys.constraint_set(&ansatz))
}

fn asymmetric(n: usize) -> Result<ConstraintSet, ConstraintError> {
    if n < 4 {
        return Err(ConstraintError::TooFewVariables {
            name: "asymmetric",
            min: 4,
            n,
        });
    }
    let mut cs = ConstraintSet::new(n);
    // ratio independence among the chain variables x2..xn
    for i in 2..=n {
        for j in (i + 1)..=n {
            for k in (j + 1)..=n {
                cs.push_equality_poly(
                    ratio_independence(n, &Triple { i, j, k }),
                    format!("ratio_indep({i},{j};{k})"),
                );
            }
        }
    }
    // pair discriminants for 3 <= i < j <= n
    let pair_poly = |lead: usize, i: usize, j: usize| -> DiffPoly {
        // F_{x_lead x_i} F_{x_j} - F_{x_lead x_j} F_{x_i}, all 1-based
        let a = DiffPoly::sym(n, DerivSym::second(n, lead - 1, i - 1));
        let b = DiffPoly::sym(n, DerivSym::first(n, j - 1));
        let c = DiffPoly::sym(n, DerivSym::second(n, lead - 1, j - 1));
        let d = DiffPoly::sym(n, DerivSym::first(n, i - 1));
        a.mul(&b).sub(&c.mul(&d))
    };
    let mut pairs = Vec::new();
    for i in 3..=n {
        for j in (i + 1)..=n {
            pairs.push((i, j));
        }
    }
    let psi1: BTreeMap<(usize, usize), DiffPoly> = pairs
        .iter()
        .map(|&(i, j)| ((i, j), pair_poly(1, i, j)))
        .collect();
    let psi2: BTreeMap<(usize, usize), DiffPoly> = pairs
        .iter()
        .map(|&(i, j)| ((i, j), pair_poly(2, i, j)))
        .collect();
    // all pair ratios agree
    for a in 0..pairs.len() {
        for b in (a + 1)..pairs.len() {
            let (p, q) = (pairs[a], pairs[b]);
            let dp = psi1[&p].mul(&psi2[&q]).sub(&psi1[&q].mul(&psi2[&p]));
            cs.push_equality_poly(
                dp,
                format!(
                    "pair_ratio_match(({},{}),({},{}))",
                    p.0, p.1, q.0, q.1
                ),
            );
        }
    }
    // each pair ratio is independent of the chain variables
    for &(i, j) in &pairs {
        for l in 3..=n {
            let d1 = psi1[&(i, j)].formal_diff(l - 1);
            let d2 = psi2[&(i, j)].formal_diff(l - 1);
            let dp = d1.mul(&psi2[&(i, j)]).sub(&psi1[&(i, j)].mul(&d2));
            cs.push_equality_poly(dp, format!("pair_ratio_indep(({i},{j});x{l})"));
        }
    }
    // gradient-direction compatibility of the solved ratio
    for i in 3..=n {
        for &(i0, j0) in &pairs {
            let p1 = &psi1[&(i0, j0)];
            let p2 = &psi2[&(i0, j0)];
            // F_{x2 xi} F_{x2} - F_{x2 x2} F_{xi}
            let lead2 = pair_poly(2, i, 2);
            // F_{x1 xi} F_{x2} - F_{x1 x2} F_{xi}
            let first = pair_poly(1, i, 2);
            let term1 = p2.mul(p2).mul(&first);
            let term2 = p1.mul(p2).mul(&lead2);
            let wron = p1.formal_diff(1).mul(p2).sub(&p1.mul(&p2.formal_diff(1)));
            let f2 = DiffPoly::sym(n, DerivSym::first(n, 1));
            let fi = DiffPoly::sym(n, DerivSym::first(n, i - 1));
            let term3 = wron.mul(&f2).mul(&fi);
            let dp = term1.sub(&term2).add(&term3);
            cs.push_equality_poly(
                dp,
                format!("gradient_compat(x{i};pair({i0},{j0}))"),
            );
        }
    }
    // non-vanishing: F_{x2}, and some pair with both discriminants non-zero
    cs.nonvanishing.push(Clause {
        atoms: vec![Arc::new(DiffPoly::sym(n, DerivSym::first(n, 1)))],
        provenance: "lead_partial(x2)".to_string(),
    });
    cs.nonvanishing.push(Clause {
        atoms: pairs.iter().map(|p| Arc::new(psi1[p].clone())).collect(),
        provenance: "pair_discriminant_1".to_string(),
    });
    cs.nonvanishing.push(Clause {
        atoms: pairs.iter().map(|p| Arc::new(psi2[p].clone())).collect(),
        provenance: "pair_discriminant_2".to_string(),
    });
    Ok(cs)
}

/// Quotient of differential polynomials by a power of the first partial in
/// `den_var`; enough structure for derivative closure without a full
/// fraction field.
#[derive(Clone, Debug)]
struct SymRatio {
    num: DiffPoly,
    den_pow: u32,
    den_var: usize,
}

impl SymRatio {
    fn new(num: DiffPoly, den_pow: u32, den_var: usize) -> Self {
        SymRatio {
            num,
            den_pow,
            den_var,
        }
        .reduced()
    }

    fn den_sym(&self) -> DerivSym {
        DerivSym::first(self.num.nvars, self.den_var)
    }

    /// Cancel common powers of the denominator symbol.
    fn reduced(mut self) -> Self {
        let den = self.den_sym();
        'outer: while self.den_pow > 0 && !self.num.is_zero() {
            for m in self.num.terms.keys() {
                if !m.0.iter().any(|(s, _)| *s == den) {
                    break 'outer;
                }
            }
            let mut out = DiffPoly::zero(self.num.nvars);
            for (m, c) in &self.num.terms {
                let mut fs = m.0.clone();
                let pos = fs.iter().position(|(s, _)| *s == den).unwrap();
                if fs[pos].1 == 1 {
                    fs.remove(pos);
                } else {
                    fs[pos].1 -= 1;
                }
                out.add_term(crate::diffpoly::SymMono(fs), c.clone());
            }
            self.num = out;
            self.den_pow -= 1;
        }
        self
    }

    fn diff(&self, v: usize) -> SymRatio {
        // (n / D^k)' = (n' D - k n D') / D^{k+1}
        let den = DiffPoly::sym(self.num.nvars, self.den_sym());
        let dden = DiffPoly::sym(self.num.nvars, self.den_sym().bumped(v));
        let num = self
            .num
            .formal_diff(v)
            .mul(&den)
            .sub(&self.num.mul(&dden).scale(&Rat::from_integer(self.den_pow.into())));
        SymRatio::new(num, self.den_pow + 1, self.den_var)
    }

    fn mul(&self, other: &SymRatio) -> SymRatio {
        SymRatio::new(
            self.num.mul(&other.num),
            self.den_pow + other.den_pow,
            self.den_var,
        )
    }

    fn sub(&self, other: &SymRatio) -> SymRatio {
        let k = self.den_pow.max(other.den_pow);
        let den = DiffPoly::sym(self.num.nvars, self.den_sym());
        let mut a = self.num.clone();
        for _ in 0..(k - self.den_pow) {
            a = a.mul(&den);
        }
        let mut b = other.num.clone();
        for _ in 0..(k - other.den_pow) {
            b = b.mul(&den);
        }
        SymRatio::new(a.sub(&b), k, self.den_var)
    }

    /// Multiply by `D^k` to clear the denominator completely; panics if the
    /// requested power is insufficient.
    fn cleared(&self, k: u32) -> DiffPoly {
        assert!(self.den_pow <= k, "denominator power exceeds clearance");
        let den = DiffPoly::sym(self.num.nvars, self.den_sym());
        let mut out = self.num.clone();
        for _ in 0..(k - self.den_pow) {
            out = out.mul(&den);
        }
        out
    }
}

fn toy2() -> Result<ConstraintSet, ConstraintError> {
    let n = 3;
    // R = F_z / F_y and its derivative closure
    let r = SymRatio::new(DiffPoly::sym(n, DerivSym::first(n, 2)), 1, 1);
    let rx = r.diff(0);
    let ry = r.diff(1);
    let rz = r.diff(2);
    let ryz = ry.diff(2);
    let rxz = rx.diff(2);
    let det2 = |a: &SymRatio, b: &SymRatio, c: &SymRatio, d: &SymRatio| -> DiffPoly {
        a.mul(d).sub(&b.mul(c)).cleared(4)
    };
    let psi1 = Arc::new(det2(&r, &ry, &rz, &ryz));
    let psi2 = Arc::new(det2(&r, &rx, &rz, &rxz));
    let psi3 = Arc::new(det2(&rx, &ry, &rxz, &ryz));

    let mut cs = ConstraintSet::new(n);
    let dy = Monomial::var(n, 1);
    let dz = Monomial::var(n, 2);
    // psi1 (psi2)_y - (psi1)_y psi2 + psi1 psi3
    cs.push_equality_expr(
        DiffExpr {
            nvars: n,
            products: vec![
                DiffProduct {
                    coef: Rat::one(),
                    factors: vec![
                        Factor::shared(psi1.clone()),
                        Factor::derived(psi2.clone(), dy.clone()),
                    ],
                },
                DiffProduct {
                    coef: -Rat::one(),
                    factors: vec![
                        Factor::derived(psi1.clone(), dy.clone()),
                        Factor::shared(psi2.clone()),
                    ],
                },
                DiffProduct {
                    coef: Rat::one(),
                    factors: vec![Factor::shared(psi1.clone()), Factor::shared(psi3.clone())],
                },
            ],
        },
        "ratio_coef_integrable".to_string(),
    );
    // psi1 (psi2)_z - (psi1)_z psi2
    cs.push_equality_expr(
        DiffExpr {
            nvars: n,
            products: vec![
                DiffProduct {
                    coef: Rat::one(),
                    factors: vec![
                        Factor::shared(psi1.clone()),
                        Factor::derived(psi2.clone(), dz.clone()),
                    ],
                },
                DiffProduct {
                    coef: -Rat::one(),
                    factors: vec![
                        Factor::derived(psi1.clone(), dz),
                        Factor::shared(psi2.clone()),
                    ],
                },
            ],
        },
        "ratio_coef_indep(z)".to_string(),
    );
    for (atom, name) in [
        (psi1.clone(), "wronskian_1"),
        (psi2.clone(), "wronskian_2"),
        (
            Arc::new(DiffPoly::sym(n, DerivSym::first(n, 1))),
            "lead_partial(y)",
        ),
    ] {
        cs.nonvanishing.push(Clause {
            atoms: vec![atom],
            provenance: name.to_string(),
        });
    }
    Ok(cs)
}

fn wave2() -> Result<ConstraintSet, ConstraintError> {
    let n = 2;
    let sym = |a: Vec<u32>| DiffPoly::sym(n, DerivSym(a));
    // second- and third-order derivative vectors (x = x1, t = x2)
    let gxx = sym(vec![2, 0]);
    let gxt = sym(vec![1, 1]);
    let gtt = sym(vec![0, 2]);
    let gxxx = sym(vec![3, 0]);
    let gxxt = sym(vec![2, 1]);
    let gxtt = sym(vec![1, 2]);
    // cross product of (Gxx, Gxt, Gtt) and (Gxxx, Gxxt, Gxtt)
    let u = gxt.mul(&gxtt).sub(&gtt.mul(&gxxt));
    let v = gtt.mul(&gxxx).sub(&gxx.mul(&gxtt));
    let w = gxx.mul(&gxxt).sub(&gxt.mul(&gxxx));
    let mut cs = ConstraintSet::new(n);
    cs.var_names = Some(vec!["x".to_string(), "t".to_string()]);
    for (f, fname) in [(&u, "U"), (&v, "V")] {
        for (var, vname) in [(0usize, "x"), (1, "t")] {
            let dp = f
                .formal_diff(var)
                .mul(&w)
                .sub(&f.mul(&w.formal_diff(var)));
            cs.push_equality_poly(dp, format!("ratio_const({fname}:W;{vname})"));
        }
    }
    // discriminant of the annihilating direction: V^2 - 4 U W > 0
    let pdi = v.mul(&v).sub(&u.mul(&w).scale(&Rat::from_integer(4.into())));
    cs.inequalities.push(Constraint {
        expr: DiffExpr::from_poly(pdi),
        provenance: "direction_discriminant".to_string(),
    });
    cs.nonvanishing.push(Clause {
        atoms: vec![Arc::new(w)],
        provenance: "cross_component(W)".to_string(),
    });
    Ok(cs)
}

fn resnet4() -> Result<ConstraintSet, ConstraintError> {
    let n = 4;
    let mut cs = ConstraintSet::new(n);
    // shared first-layer pair: F_{xz} F_y = F_{yz} F_x and F_{xw} F_y = F_{yw} F_x
    for (k, name) in [(2usize, "z"), (3, "w")] {
        let a = DiffPoly::sym(n, DerivSym::second(n, 0, k));
        let b = DiffPoly::sym(n, DerivSym::first(n, 1));
        let c = DiffPoly::sym(n, DerivSym::second(n, 1, k));
        let d = DiffPoly::sym(n, DerivSym::first(n, 0));
        cs.push_equality_poly(
            a.mul(&b).sub(&c.mul(&d)),
            format!("shared_pair_ratio({name})"),
        );
    }
    // eliminate F_z u + F_w v = F_x with u = u(x,y,z), v = v(x,y,w)
    let ansatz = EliminationAnsatz {
        nvars: n,
        target: DerivSym::first(n, 0),
        terms: vec![
            (DerivSym::first(n, 2), [0, 1, 2].into_iter().collect()),
            (DerivSym::first(n, 3), [0, 1, 3].into_iter().collect()),
        ],
        operators: vec![
            Monomial::var(n, 2),
            Monomial::var(n, 3),
            Monomial(vec![0, 0, 1, 1]),
        ],
    };
    let sys = eliminate(&ansatz)?;
    let sub = sys.constraint_set(&ansatz);
    cs.equalities.extend(sub.equalities);
    cs.nonvanishing.extend(sub.nonvanishing);
    Ok(cs)
}

// ---------------------------------------------------------------------------
// text and JSON forms
// ---------------------------------------------------------------------------

impl fmt::Display for DiffExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(dp) = self.is_single_plain() {
            return write!(f, "{dp}");
        }
        if self.products.is_empty() {
            return write!(f, "0");
        }
        for (idx, p) in self.products.iter().enumerate() {
            let neg = p.coef.is_negative();
            let mag = p.coef.abs();
            if idx == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else if neg {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let mut parts: Vec<String> = Vec::new();
            if !mag.is_one() || p.factors.is_empty() {
                parts.push(format_rat(&mag));
            }
            for fac in &p.factors {
                parts.push(factor_text(fac));
            }
            write!(f, "{}", parts.join("*"))?;
        }
        Ok(())
    }
}

fn factor_text(fac: &Factor) -> String {
    if fac.deriv.is_unit() {
        if fac.base.num_terms() == 1 {
            let (m, c) = fac.base.terms.iter().next().unwrap();
            if c.is_one() && !m.is_unit() {
                let parts: Vec<String> = m
                    .0
                    .iter()
                    .rev()
                    .map(|(s, e)| {
                        if *e == 1 {
                            s.to_string()
                        } else {
                            format!("{s}^{e}")
                        }
                    })
                    .collect();
                return parts.join("*");
            }
        }
        format!("({})", fac.base)
    } else {
        format!(
            "D[{}]({})",
            fac.deriv
                .0
                .iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join(","),
            fac.base
        )
    }
}

impl ConstraintSet {
    /// JSON document: `eq`, `gt0`, `nonzero` (clauses as atom arrays) plus a
    /// `provenance` array covering those three lists in order.
    pub fn to_json(&self) -> Value {
        let mut provenance = Vec::new();
        let eq: Vec<String> = self
            .equalities
            .iter()
            .map(|c| {
                provenance.push(c.provenance.clone());
                c.expr.to_string()
            })
            .collect();
        let gt0: Vec<String> = self
            .inequalities
            .iter()
            .map(|c| {
                provenance.push(c.provenance.clone());
                c.expr.to_string()
            })
            .collect();
        let nonzero: Vec<Vec<String>> = self
            .nonvanishing
            .iter()
            .map(|c| {
                provenance.push(c.provenance.clone());
                c.atoms.iter().map(|a| a.to_string()).collect()
            })
            .collect();
        let mut doc = json!({
            "nvars": self.nvars,
            "eq": eq,
            "gt0": gt0,
            "nonzero": nonzero,
            "provenance": provenance,
        });
        if let Some(names) = &self.var_names {
            doc["names"] = json!(names);
        }
        doc
    }

    pub fn from_json(doc: &str) -> Result<ConstraintSet, ConstraintError> {
        let v: Value = serde_json::from_str(doc)
            .map_err(|e| ConstraintError::Parse(format!("invalid JSON: {e}")))?;
        let nvars = v
            .get("nvars")
            .and_then(Value::as_u64)
            .ok_or_else(|| ConstraintError::Parse("missing `nvars`".into()))?
            as usize;
        let mut cs = ConstraintSet::new(nvars);
        if let Some(names) = v.get("names").and_then(Value::as_array) {
            cs.var_names = Some(
                names
                    .iter()
                    .filter_map(Value::as_str)
                    .map(str::to_string)
                    .collect(),
            );
        }
        let prov: Vec<String> = v
            .get("provenance")
            .and_then(Value::as_array)
            .map(|a| {
                a.iter()
                    .filter_map(Value::as_str)
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default();
        let mut prov_iter = prov.into_iter();
        let mut next_prov = || prov_iter.next().unwrap_or_default();
        for e in v
            .get("eq")
            .and_then(Value::as_array)
            .ok_or_else(|| ConstraintError::Parse("missing `eq`".into()))?
        {
            let text = e
                .as_str()
                .ok_or_else(|| ConstraintError::Parse("`eq` entries must be strings".into()))?;
            cs.equalities.push(Constraint {
                expr: parse_diff_expr(text, nvars)?,
                provenance: next_prov(),
            });
        }
        for e in v.get("gt0").and_then(Value::as_array).unwrap_or(&vec![]) {
            let text = e
                .as_str()
                .ok_or_else(|| ConstraintError::Parse("`gt0` entries must be strings".into()))?;
            cs.inequalities.push(Constraint {
                expr: parse_diff_expr(text, nvars)?,
                provenance: next_prov(),
            });
        }
        for clause in v.get("nonzero").and_then(Value::as_array).unwrap_or(&vec![]) {
            let arr = clause
                .as_array()
                .ok_or_else(|| ConstraintError::Parse("`nonzero` entries must be arrays".into()))?;
            let mut atoms = Vec::new();
            for a in arr {
                let text = a.as_str().ok_or_else(|| {
                    ConstraintError::Parse("clause atoms must be strings".into())
                })?;
                let expr = parse_diff_expr(text, nvars)?;
                atoms.push(Arc::new(expr.expand()));
            }
            cs.nonvanishing.push(Clause {
                atoms,
                provenance: next_prov(),
            });
        }
        Ok(cs)
    }
}

// -- constraint text parser --------------------------------------------------

struct CTok<'a> {
    src: &'a [u8],
    pos: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum CT {
    Sym(Vec<u32>),
    DOp(Vec<u32>),
    Num(Rat),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Eof,
}

impl<'a> CTok<'a> {
    fn new(s: &'a str) -> Self {
        CTok {
            src: s.as_bytes(),
            pos: 0,
        }
    }

    fn next(&mut self) -> Result<CT, ConstraintError> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos >= self.src.len() {
            return Ok(CT::Eof);
        }
        let c = self.src[self.pos];
        match c {
            b'+' => {
                self.pos += 1;
                Ok(CT::Plus)
            }
            b'-' => {
                self.pos += 1;
                Ok(CT::Minus)
            }
            b'*' => {
                self.pos += 1;
                Ok(CT::Star)
            }
            b'/' => {
                self.pos += 1;
                Ok(CT::Slash)
            }
            b'^' => {
                self.pos += 1;
                Ok(CT::Caret)
            }
            b'(' => {
                self.pos += 1;
                Ok(CT::LParen)
            }
            b')' => {
                self.pos += 1;
                Ok(CT::RParen)
            }
            b'F' | b'D' => {
                let is_sym = c == b'F';
                self.pos += 1;
                if self.pos >= self.src.len() || self.src[self.pos] != b'[' {
                    return Err(ConstraintError::Parse(format!(
                        "expected `[` after `{}`",
                        c as char
                    )));
                }
                self.pos += 1;
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos] != b']' {
                    self.pos += 1;
                }
                if self.pos >= self.src.len() {
                    return Err(ConstraintError::Parse("unterminated `[`".into()));
                }
                let inner = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                self.pos += 1;
                let mut idx = Vec::new();
                for part in inner.split(',') {
                    idx.push(part.trim().parse::<u32>().map_err(|_| {
                        ConstraintError::Parse(format!("bad index list `{inner}`"))
                    })?);
                }
                Ok(if is_sym { CT::Sym(idx) } else { CT::DOp(idx) })
            }
            b'0'..=b'9' => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                Ok(CT::Num(Rat::from_integer(text.parse().map_err(|_| {
                    ConstraintError::Parse(format!("bad number `{text}`"))
                })?)))
            }
            other => Err(ConstraintError::Parse(format!(
                "unexpected character `{}`",
                other as char
            ))),
        }
    }
}

struct CParser<'a> {
    lex: CTok<'a>,
    cur: CT,
    nvars: usize,
}

/// Parse the textual form of a constraint back into a sum of products.
pub fn parse_diff_expr(text: &str, nvars: usize) -> Result<DiffExpr, ConstraintError> {
    let mut lex = CTok::new(text);
    let cur = lex.next()?;
    let mut p = CParser { lex, cur, nvars };
    let e = p.parse_sum()?;
    if p.cur != CT::Eof {
        return Err(ConstraintError::Parse("trailing input".into()));
    }
    Ok(e)
}

impl<'a> CParser<'a> {
    fn bump(&mut self) -> Result<(), ConstraintError> {
        self.cur = self.lex.next()?;
        Ok(())
    }

    fn parse_sum(&mut self) -> Result<DiffExpr, ConstraintError> {
        let mut products: Vec<DiffProduct> = Vec::new();
        let mut negate = false;
        if self.cur == CT::Minus {
            negate = true;
            self.bump()?;
        }
        let first = self.parse_product()?;
        products.extend(apply_sign(first, negate));
        loop {
            let neg = match self.cur {
                CT::Plus => false,
                CT::Minus => true,
                _ => break,
            };
            self.bump()?;
            let p = self.parse_product()?;
            products.extend(apply_sign(p, neg));
        }
        Ok(DiffExpr {
            nvars: self.nvars,
            products,
        })
    }

    fn parse_product(&mut self) -> Result<DiffProduct, ConstraintError> {
        let mut coef = Rat::one();
        let mut factors: Vec<Factor> = Vec::new();
        let mut consumed = false;
        // running bare-symbol monomial, merged into one factor
        let mut mono: Vec<(DerivSym, u32)> = Vec::new();
        loop {
            match self.cur.clone() {
                CT::Num(n) => {
                    self.bump()?;
                    if self.cur == CT::Slash {
                        self.bump()?;
                        match self.cur.clone() {
                            CT::Num(d) => {
                                if d.is_zero() {
                                    return Err(ConstraintError::Parse(
                                        "division by zero".into(),
                                    ));
                                }
                                coef *= n / d;
                                self.bump()?;
                            }
                            _ => {
                                return Err(ConstraintError::Parse(
                                    "division only by integer constants".into(),
                                ))
                            }
                        }
                    } else {
                        coef *= n;
                    }
                }
                CT::Sym(idx) => {
                    if idx.len() != self.nvars {
                        return Err(ConstraintError::Parse(format!(
                            "symbol arity {} does not match the ambient {} variables",
                            idx.len(),
                            self.nvars
                        )));
                    }
                    self.bump()?;
                    let mut e = 1u32;
                    if self.cur == CT::Caret {
                        self.bump()?;
                        match self.cur.clone() {
                            CT::Num(n) if n.is_integer() => {
                                e = n.numer().try_into().map_err(|_| {
                                    ConstraintError::Parse("exponent too large".into())
                                })?;
                                self.bump()?;
                            }
                            _ => {
                                return Err(ConstraintError::Parse(
                                    "expected integer exponent".into(),
                                ))
                            }
                        }
                    }
                    mono.push((DerivSym(idx), e));
                }
                CT::DOp(delta) => {
                    if delta.len() != self.nvars {
                        return Err(ConstraintError::Parse(
                            "derivative index arity mismatch".into(),
                        ));
                    }
                    self.bump()?;
                    if self.cur != CT::LParen {
                        return Err(ConstraintError::Parse("expected `(` after D[..]".into()));
                    }
                    self.bump()?;
                    let inner = self.parse_sum()?;
                    if self.cur != CT::RParen {
                        return Err(ConstraintError::Parse("expected `)`".into()));
                    }
                    self.bump()?;
                    factors.push(Factor::derived(
                        Arc::new(inner.expand()),
                        Monomial(delta),
                    ));
                }
                CT::LParen => {
                    self.bump()?;
                    let inner = self.parse_sum()?;
                    if self.cur != CT::RParen {
                        return Err(ConstraintError::Parse("expected `)`".into()));
                    }
                    self.bump()?;
                    let mut e = 1u32;
                    if self.cur == CT::Caret {
                        self.bump()?;
                        match self.cur.clone() {
                            CT::Num(n) if n.is_integer() => {
                                e = n.numer().try_into().map_err(|_| {
                                    ConstraintError::Parse("exponent too large".into())
                                })?;
                                self.bump()?;
                            }
                            _ => {
                                return Err(ConstraintError::Parse(
                                    "expected integer exponent".into(),
                                ))
                            }
                        }
                    }
                    let base = Arc::new(inner.expand());
                    for _ in 0..e {
                        factors.push(Factor::shared(base.clone()));
                    }
                }
                _ => break,
            }
            consumed = true;
            if self.cur == CT::Star {
                self.bump()?;
                continue;
            }
            break;
        }
        if !consumed {
            return Err(ConstraintError::Parse("empty product".into()));
        }
        if !mono.is_empty() {
            let mut dp = DiffPoly::zero(self.nvars);
            let mut sm = crate::diffpoly::SymMono::unit();
            for (s, e) in mono {
                sm = sm.mul(&crate::diffpoly::SymMono(vec![(s, e)]));
            }
            dp.add_term(sm, Rat::one());
            factors.push(Factor::plain(dp));
        }
        Ok(DiffProduct { coef, factors })
    }
}

fn apply_sign(mut p: DiffProduct, neg: bool) -> Vec<DiffProduct> {
    if neg {
        p.coef = -p.coef;
    }
    vec![p]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{parse_arch, Arch};

    fn tree(json: &str) -> Tree {
        match parse_arch(json).unwrap() {
            Arch::Tree(t) => t,
            _ => unreachable!(),
        }
    }

    fn gfz() -> Tree {
        tree(r#"{"type":"tree","node":{"children":[{"children":[{"var":"x"},{"var":"y"}]},{"var":"z"}]}}"#)
    }

    #[test]
    fn tree_smooth_on_three_leaves() {
        let cs = tree_smooth(&gfz()).unwrap();
        assert_eq!(cs.equalities.len(), 1);
        assert_eq!(
            cs.equalities[0].expr.to_string(),
            "F[0,1,1]*F[1,0,0] - F[1,0,1]*F[0,1,0]"
        );
        assert_eq!(cs.nonvanishing.len(), 1);
        assert_eq!(cs.nonvanishing[0].atoms.len(), 2);
        assert!(cs.inequalities.is_empty());
    }

    #[test]
    fn two_leaf_activation_constancy() {
        let t = tree(r#"{"type":"tree","node":{"children":[{"var":"x"},{"var":"y"}]}}"#);
        let cs = tree_activation(&t).unwrap();
        let texts: Vec<String> = cs
            .equalities
            .iter()
            .map(|c| c.expr.to_string())
            .collect();
        assert_eq!(texts.len(), 2);
        // F_xy F_x - F_xx F_y and F_yy F_x - F_xy F_y
        assert!(texts.contains(&"F[1,1]*F[1,0] - F[2,0]*F[0,1]".to_string()));
        assert!(texts.contains(&"F[0,2]*F[1,0] - F[1,1]*F[0,1]".to_string()));
    }

    #[test]
    fn smooth_subset_of_activation() {
        let t = gfz();
        let smooth = tree_smooth(&t).unwrap();
        let act = tree_activation(&t).unwrap();
        let act_set: BTreeSet<String> = act
            .equalities
            .iter()
            .map(|c| c.expr.expand().sign_normalized().to_string())
            .collect();
        for c in &smooth.equalities {
            assert!(act_set.contains(&c.expr.expand().sign_normalized().to_string()));
        }
    }

    #[test]
    fn split_test_examples() {
        let one: BTreeSet<usize> = [1].into_iter().collect();
        let two: BTreeSet<usize> = [2].into_iter().collect();
        let dps = split_test(2, &one, &two).unwrap();
        assert_eq!(dps.len(), 1);
        // on q = x + z (two variables): q q_xy - q_x q_y = -1
        let f = crate::expr::parse_poly("x + y", 2).unwrap();
        assert_eq!(
            dps[0].substitute(&f),
            crate::expr::parse_poly("-1", 2).unwrap()
        );
        // on q = x*y + 1: residual (x y + 1) * 1 - y x = 1
        let g = crate::expr::parse_poly("x*y + 1", 2).unwrap();
        assert_eq!(
            dps[0].substitute(&g),
            crate::expr::parse_poly("1", 2).unwrap()
        );
        assert!(split_test(2, &one, &one).is_err());
    }

    #[test]
    fn elimination_rejects_degenerate_shapes() {
        // zero-support unknowns under a mixed operator leave the system non-square
        let n = 3;
        let bad = EliminationAnsatz {
            nvars: n,
            target: DerivSym::first(n, 0),
            terms: vec![
                (DerivSym::first(n, 1), BTreeSet::new()),
                (DerivSym::first(n, 2), BTreeSet::new()),
            ],
            operators: vec![Monomial::var(n, 1), Monomial::var(n, 2)],
        };
        assert!(matches!(
            eliminate(&bad),
            Err(ConstraintError::NonSquare { .. })
        ));
        // duplicated multiplier symbols make the matrix singular
        let sing = EliminationAnsatz {
            nvars: n,
            target: DerivSym::first(n, 0),
            terms: vec![
                (DerivSym::first(n, 1), [0, 1].into_iter().collect()),
                (DerivSym::first(n, 1), [0, 1].into_iter().collect()),
            ],
            operators: vec![Monomial::var(n, 1)],
        };
        match eliminate(&sing) {
            Err(ConstraintError::Singular) | Err(ConstraintError::NonSquare { .. }) => {}
            other => panic!("expected a degenerate-system error, got {other:?}"),
        }
    }

    #[test]
    fn preset_names_parse() {
        assert_eq!(
            "symmetric(4)".parse::<Preset>().unwrap(),
            Preset::Symmetric(4)
        );
        assert_eq!(
            "asymmetric(5)".parse::<Preset>().unwrap(),
            Preset::Asymmetric(5)
        );
        assert!("mystery".parse::<Preset>().is_err());
        assert!(matches!(
            preset(&Preset::Symmetric(2)),
            Err(ConstraintError::TooFewVariables { .. })
        ));
        assert!(matches!(
            preset(&Preset::Asymmetric(3)),
            Err(ConstraintError::TooFewVariables { .. })
        ));
    }

    #[test]
    fn wave_preset_shape() {
        let cs = preset(&Preset::Wave2).unwrap();
        assert_eq!(cs.equalities.len(), 4);
        assert_eq!(cs.inequalities.len(), 1);
        assert_eq!(cs.nonvanishing.len(), 1);
    }

    #[test]
    fn resnet_preset_shape() {
        let cs = preset(&Preset::Resnet4).unwrap();
        // two shared-pair equalities plus two coefficient-independence ones
        assert_eq!(cs.equalities.len(), 4);
        assert_eq!(cs.nonvanishing.len(), 1);
    }

    #[test]
    fn constraint_text_roundtrip() {
        let cs = tree_smooth(&gfz()).unwrap();
        let text = cs.equalities[0].expr.to_string();
        let back = parse_diff_expr(&text, 3).unwrap();
        assert_eq!(
            back.expand().sign_normalized(),
            cs.equalities[0].expr.expand().sign_normalized()
        );
        // product form with a lazy derivative survives the roundtrip
        let sym = preset(&Preset::Symmetric(3)).unwrap();
        for c in &sym.equalities {
            let text = c.expr.to_string();
            let back = parse_diff_expr(&text, 3).unwrap();
            assert_eq!(back.expand(), c.expr.expand());
        }
    }

    #[test]
    fn constraint_set_json_roundtrip() {
        let cs = preset(&Preset::Wave2).unwrap();
        let doc = cs.to_json().to_string();
        let back = ConstraintSet::from_json(&doc).unwrap();
        assert_eq!(back.equalities.len(), cs.equalities.len());
        assert_eq!(back.inequalities.len(), cs.inequalities.len());
        assert_eq!(back.nonvanishing.len(), cs.nonvanishing.len());
        for (a, b) in cs.equalities.iter().zip(&back.equalities) {
            assert_eq!(a.expr.expand(), b.expr.expand());
            assert_eq!(a.provenance, b.provenance);
        }
    }
}
