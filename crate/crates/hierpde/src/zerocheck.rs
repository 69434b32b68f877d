//! Exact zero-testing of sums of polynomial products.
//!
//! Constraint residuals have the shape `sum_k c_k * P_{k,1} * ... * P_{k,m}`
//! where the factors are either materialized polynomials or substitutions of
//! a differential polynomial into the candidate function. Small combinations
//! are expanded directly. Large ones are certified with modular arithmetic:
//! the combination is reduced modulo enough 61-bit primes that the product
//! of the primes exceeds twice a rigorous bound on any integer coefficient
//! of the (denominator-cleared) result, so an all-zero residue across the
//! prime set proves the exact result is the zero polynomial. No randomness
//! is involved.

use crate::diffpoly::{DerivSym, DiffPoly};
use crate::expr::poly::{Monomial, Poly, Rat};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::HashMap;
use std::sync::Arc;

/// Pairwise multiplications below this are expanded exactly.
const EXACT_LIMIT: u128 = 400_000;

#[derive(Clone, Debug)]
pub(crate) enum FactorKind {
    /// A polynomial in the ambient variables, used as-is.
    #[cfg_attr(not(test), allow(dead_code))]
    Exact(Arc<Poly>),
    /// Substitute `dp` into the candidate, then differentiate by `deriv`.
    Subst { dp: Arc<DiffPoly>, deriv: Monomial },
}

#[derive(Clone, Debug)]
pub(crate) struct Job {
    pub coef: Rat,
    pub factors: Vec<FactorKind>,
}

#[derive(Clone, Debug)]
pub(crate) enum Outcome {
    /// The combination was expanded; this is the exact residual.
    Residual(Poly),
    /// Certified zero without materializing the expansion.
    CertifiedZero,
    /// Certified non-zero (some modular residue differs from zero).
    CertifiedNonZero,
}

impl Outcome {
    pub fn is_zero(&self) -> bool {
        match self {
            Outcome::Residual(p) => p.is_zero(),
            Outcome::CertifiedZero => true,
            Outcome::CertifiedNonZero => false,
        }
    }
}

/// Evaluate several equalities (each a sum of products) against `f`,
/// sharing substitution work across them.
pub(crate) fn evaluate_equalities(f: &Poly, eqs: &[Vec<Job>], force_exact: bool) -> Vec<Outcome> {
    let mut ctx = EvalContext::new(f);
    let mut outcomes = Vec::with_capacity(eqs.len());
    let mut modular_queue: Vec<usize> = Vec::new();
    for (idx, jobs) in eqs.iter().enumerate() {
        let cost = ctx.estimate_cost(jobs);
        if force_exact || cost <= EXACT_LIMIT || ctx.packing(jobs).is_none() {
            outcomes.push(Some(ctx.expand_exact(jobs)));
        } else {
            outcomes.push(None);
            modular_queue.push(idx);
        }
    }
    if !modular_queue.is_empty() {
        let results = ctx.modular_pass(eqs, &modular_queue);
        for (idx, r) in modular_queue.into_iter().zip(results) {
            outcomes[idx] = Some(r);
        }
    }
    outcomes.into_iter().map(Option::unwrap).collect()
}

/// Expand a combination exactly (helper for small cases and witnesses).
pub(crate) fn expand_combination(f: &Poly, jobs: &[Job]) -> Poly {
    EvalContext::new(f).expand_exact_poly(jobs)
}

// ---------------------------------------------------------------------------

struct EvalContext<'a> {
    f: &'a Poly,
    nvars: usize,
    deriv_cache: HashMap<DerivSym, Arc<Poly>>,
    subst_cache: HashMap<(usize, Monomial), Arc<Poly>>,
}

impl<'a> EvalContext<'a> {
    fn new(f: &'a Poly) -> Self {
        EvalContext {
            f,
            nvars: f.nvars,
            deriv_cache: HashMap::new(),
            subst_cache: HashMap::new(),
        }
    }

    fn deriv(&mut self, s: &DerivSym) -> Arc<Poly> {
        if let Some(p) = self.deriv_cache.get(s) {
            return p.clone();
        }
        let p = Arc::new(self.f.diff_multi(&Monomial(s.0.clone())));
        self.deriv_cache.insert(s.clone(), p.clone());
        p
    }

    fn subst(&mut self, dp: &Arc<DiffPoly>, deriv: &Monomial) -> Arc<Poly> {
        let key = (Arc::as_ptr(dp) as usize, deriv.clone());
        if let Some(p) = self.subst_cache.get(&key) {
            return p.clone();
        }
        let base_key = (Arc::as_ptr(dp) as usize, Monomial::unit(self.nvars));
        let base = if let Some(p) = self.subst_cache.get(&base_key) {
            p.clone()
        } else {
            let p = Arc::new(dp.substitute(self.f));
            self.subst_cache.insert(base_key, p.clone());
            p
        };
        let out = if deriv.is_unit() {
            base
        } else {
            Arc::new(base.diff_multi(deriv))
        };
        self.subst_cache.insert(key, out.clone());
        out
    }

    fn factor_poly(&mut self, fac: &FactorKind) -> Arc<Poly> {
        match fac {
            FactorKind::Exact(p) => p.clone(),
            FactorKind::Subst { dp, deriv } => self.subst(dp, deriv),
        }
    }

    fn expand_exact(&mut self, jobs: &[Job]) -> Outcome {
        Outcome::Residual(self.expand_exact_poly(jobs))
    }

    fn expand_exact_poly(&mut self, jobs: &[Job]) -> Poly {
        let mut acc = Poly::zero(self.nvars);
        for job in jobs {
            let mut polys: Vec<Arc<Poly>> =
                job.factors.iter().map(|f| self.factor_poly(f)).collect();
            polys.sort_by_key(|p| p.num_terms());
            let mut prod = Poly::constant_rat(self.nvars, job.coef.clone());
            for p in polys {
                if prod.is_zero() {
                    break;
                }
                prod = prod.mul(&p);
            }
            acc = acc.add(&prod);
        }
        acc
    }

    // -- sizing ------------------------------------------------------------

    fn factor_stats(&mut self, fac: &FactorKind) -> BStats {
        match fac {
            FactorKind::Exact(p) => BStats::of_poly(p),
            FactorKind::Subst { dp, deriv } => {
                let mut st = self.subst_stats(dp);
                for (v, &k) in deriv.0.iter().enumerate() {
                    let _ = v;
                    for _ in 0..k {
                        st = st.derivative();
                    }
                }
                st
            }
        }
    }

    fn subst_stats(&mut self, dp: &DiffPoly) -> BStats {
        let mut total = BStats::zero();
        for (m, c) in &dp.terms {
            let mut term = BStats::of_rat(c);
            for (s, e) in &m.0 {
                let d = self.deriv(s);
                let ds = BStats::of_poly(&d);
                for _ in 0..*e {
                    term = term.product(&ds);
                }
            }
            total = total.sum(&term);
        }
        total
    }

    fn estimate_cost(&mut self, jobs: &[Job]) -> u128 {
        let mut total: u128 = 0;
        for job in jobs {
            let mut sizes: Vec<u128> = job
                .factors
                .iter()
                .map(|f| {
                    self.factor_stats(f)
                        .t
                        .to_u128()
                        .unwrap_or(u128::MAX / 4)
                        .max(1)
                })
                .collect();
            sizes.sort_unstable();
            let mut acc: u128 = 1;
            let mut cost: u128 = 0;
            for s in sizes {
                cost = cost.saturating_add(acc.saturating_mul(s));
                acc = acc.saturating_mul(s).min(u128::MAX / 4);
            }
            total = total.saturating_add(cost);
        }
        total
    }

    fn per_var_degree_bound(&mut self, jobs: &[Job]) -> Vec<u64> {
        let mut out = vec![0u64; self.nvars];
        for job in jobs {
            let mut per_var = vec![0u64; self.nvars];
            for fac in &job.factors {
                let degs = match fac {
                    FactorKind::Exact(p) => {
                        (0..self.nvars).map(|v| p.degree_in(v) as u64).collect()
                    }
                    FactorKind::Subst { dp, .. } => self.subst_var_degrees(dp),
                };
                for v in 0..self.nvars {
                    per_var[v] += degs[v];
                }
            }
            for v in 0..self.nvars {
                out[v] = out[v].max(per_var[v]);
            }
        }
        out
    }

    fn subst_var_degrees(&mut self, dp: &DiffPoly) -> Vec<u64> {
        let mut out = vec![0u64; self.nvars];
        for (m, _) in &dp.terms {
            let mut per_var = vec![0u64; self.nvars];
            for (s, e) in &m.0 {
                let d = self.deriv(s);
                for v in 0..self.nvars {
                    per_var[v] += d.degree_in(v) as u64 * *e as u64;
                }
            }
            for v in 0..self.nvars {
                out[v] = out[v].max(per_var[v]);
            }
        }
        out
    }

    fn packing(&mut self, jobs: &[Job]) -> Option<Packing> {
        let degs = self.per_var_degree_bound(jobs);
        Packing::for_degrees(&degs)
    }

    // -- modular certification ----------------------------------------------

    fn modular_pass(&mut self, eqs: &[Vec<Job>], queue: &[usize]) -> Vec<Outcome> {
        // shared packing across all queued equalities
        let mut all_degs = vec![0u64; self.nvars];
        for &idx in queue {
            let degs = self.per_var_degree_bound(&eqs[idx]);
            for v in 0..self.nvars {
                all_degs[v] = all_degs[v].max(degs[v]);
            }
        }
        let packing = match Packing::for_degrees(&all_degs) {
            Some(p) => p,
            None => {
                return queue
                    .iter()
                    .map(|&idx| self.expand_exact(&eqs[idx]))
                    .collect()
            }
        };
        // rigorous coefficient bound (integer model, denominators cleared)
        let mut bound = BigInt::one();
        for &idx in queue {
            let b = self.combination_bound(&eqs[idx]);
            if b > bound {
                bound = b;
            }
        }
        let primes = primes_covering(&(bound * 2 + 1));
        let mut nonzero = vec![false; queue.len()];
        for &p in &primes {
            let mut prime_ctx = PrimeContext::new(self, p, &packing);
            for (qi, &idx) in queue.iter().enumerate() {
                if nonzero[qi] {
                    continue;
                }
                if !prime_ctx.combination_is_zero(&eqs[idx]) {
                    nonzero[qi] = true;
                }
            }
        }
        nonzero
            .into_iter()
            .map(|nz| {
                if nz {
                    Outcome::CertifiedNonZero
                } else {
                    Outcome::CertifiedZero
                }
            })
            .collect()
    }

    fn combination_bound(&mut self, jobs: &[Job]) -> BigInt {
        // Every job is scaled to a common denominator; the bound is the sum
        // of per-job product bounds times the relative denominator scale.
        let mut job_stats: Vec<BStats> = Vec::with_capacity(jobs.len());
        for job in jobs {
            let mut st = BStats::of_rat(&job.coef);
            for fac in &job.factors {
                let fs = self.factor_stats(fac);
                st = st.product(&fs);
            }
            job_stats.push(st);
        }
        let mut d_all = BigInt::one();
        for st in &job_stats {
            d_all = d_all.lcm(&st.d);
        }
        let mut bound = BigInt::zero();
        for st in &job_stats {
            bound += &st.m * (&d_all / &st.d);
        }
        bound.max(BigInt::one())
    }
}

/// Term count, max absolute scaled numerator, denominator lcm, and a total
/// degree bound; all rigorous upper bounds propagated structurally.
#[derive(Clone, Debug)]
struct BStats {
    t: BigInt,
    m: BigInt,
    d: BigInt,
    deg: BigInt,
}

impl BStats {
    fn zero() -> Self {
        BStats {
            t: BigInt::zero(),
            m: BigInt::zero(),
            d: BigInt::one(),
            deg: BigInt::zero(),
        }
    }

    fn of_rat(c: &Rat) -> Self {
        BStats {
            t: BigInt::one(),
            m: c.numer().abs(),
            d: c.denom().abs(),
            deg: BigInt::zero(),
        }
    }

    fn of_poly(p: &Poly) -> Self {
        if p.is_zero() {
            return BStats::zero();
        }
        let mut d = BigInt::one();
        for c in p.terms.values() {
            d = d.lcm(c.denom());
        }
        let mut m = BigInt::zero();
        for c in p.terms.values() {
            let scaled = c.numer().abs() * (&d / c.denom().abs());
            if scaled > m {
                m = scaled;
            }
        }
        BStats {
            t: BigInt::from(p.num_terms()),
            m,
            d,
            deg: BigInt::from(p.total_degree()),
        }
    }

    fn product(&self, other: &Self) -> Self {
        if self.t.is_zero() || other.t.is_zero() {
            return BStats::zero();
        }
        // collisions per output monomial never exceed the smaller term count
        let collisions = self.t.clone().min(other.t.clone());
        BStats {
            t: &self.t * &other.t,
            m: &self.m * &other.m * collisions,
            d: &self.d * &other.d,
            deg: &self.deg + &other.deg,
        }
    }

    fn sum(&self, other: &Self) -> Self {
        let d = self.d.lcm(&other.d);
        BStats {
            t: &self.t + &other.t,
            m: &self.m * (&d / &self.d) + &other.m * (&d / &other.d),
            d,
            deg: self.deg.clone().max(other.deg.clone()),
        }
    }

    fn derivative(&self) -> Self {
        BStats {
            t: self.t.clone(),
            m: &self.m * self.deg.clone().max(BigInt::one()),
            d: self.d.clone(),
            deg: (self.deg.clone() - BigInt::one()).max(BigInt::zero()),
        }
    }
}

// ---------------------------------------------------------------------------
// packed monomials and flat maps
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub(crate) struct Packing {
    pub shifts: Vec<u32>,
    pub bits: u32,
}

impl Packing {
    /// Choose a uniform bit width able to hold `deg[v]` per variable; fails
    /// when 64 bits cannot accommodate all variables.
    pub fn for_degrees(degs: &[u64]) -> Option<Packing> {
        let maxd = degs.iter().copied().max().unwrap_or(0).max(1);
        let bits = 64 - (maxd + 1).leading_zeros() as u32;
        let bits = bits.max(1);
        let n = degs.len() as u32;
        if bits * n > 63 {
            return None;
        }
        Some(Packing {
            shifts: (0..n).map(|v| v * bits).collect(),
            bits,
        })
    }

    pub fn pack(&self, m: &Monomial) -> u64 {
        let mut key = 0u64;
        for (v, &e) in m.0.iter().enumerate() {
            key |= (e as u64) << self.shifts[v];
        }
        key
    }

    pub fn exponent(&self, key: u64, v: usize) -> u64 {
        (key >> self.shifts[v]) & ((1u64 << self.bits) - 1)
    }

    pub fn dec(&self, key: u64, v: usize) -> u64 {
        key - (1u64 << self.shifts[v])
    }
}

const EMPTY_KEY: u64 = u64::MAX;

/// Open-addressing map from packed monomials to residues.
pub(crate) struct FlatMap {
    keys: Vec<u64>,
    vals: Vec<u64>,
    len: usize,
}

impl FlatMap {
    pub fn with_capacity(cap: usize) -> Self {
        let cap = (cap.max(8) * 2).next_power_of_two();
        FlatMap {
            keys: vec![EMPTY_KEY; cap],
            vals: vec![0; cap],
            len: 0,
        }
    }

    #[inline]
    fn slot(&self, key: u64) -> usize {
        ((key.wrapping_mul(0x9E37_79B9_7F4A_7C15)) >> (64 - self.keys.len().trailing_zeros()))
            as usize
    }

    #[inline]
    pub fn add(&mut self, key: u64, val: u64, p: u64) {
        if val == 0 {
            return;
        }
        if self.len * 10 >= self.keys.len() * 7 {
            self.grow(p);
        }
        let mask = self.keys.len() - 1;
        let mut i = self.slot(key);
        loop {
            let k = self.keys[i];
            if k == key {
                let s = self.vals[i] + val;
                self.vals[i] = if s >= p { s - p } else { s };
                return;
            }
            if k == EMPTY_KEY {
                self.keys[i] = key;
                self.vals[i] = val;
                self.len += 1;
                return;
            }
            i = (i + 1) & mask;
        }
    }

    fn grow(&mut self, p: u64) {
        let old_keys = std::mem::replace(&mut self.keys, vec![EMPTY_KEY; 0]);
        let old_vals = std::mem::take(&mut self.vals);
        let new_cap = (old_keys.len() * 2).max(16);
        self.keys = vec![EMPTY_KEY; new_cap];
        self.vals = vec![0; new_cap];
        self.len = 0;
        for (k, v) in old_keys.into_iter().zip(old_vals) {
            if k != EMPTY_KEY && v != 0 {
                self.add(k, v, p);
            }
        }
    }

    pub fn drain_nonzero(&self) -> Vec<(u64, u64)> {
        self.keys
            .iter()
            .zip(&self.vals)
            .filter(|(k, v)| **k != EMPTY_KEY && **v != 0)
            .map(|(k, v)| (*k, *v))
            .collect()
    }

    pub fn all_zero(&self) -> bool {
        self.keys
            .iter()
            .zip(&self.vals)
            .all(|(k, v)| *k == EMPTY_KEY || *v == 0)
    }
}

/// Sparse polynomial with coefficients modulo a prime, on packed monomials.
#[derive(Clone, Debug, Default)]
pub(crate) struct ModPoly {
    pub terms: Vec<(u64, u64)>,
}

impl ModPoly {
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn constant(c: u64) -> Self {
        if c == 0 {
            ModPoly { terms: vec![] }
        } else {
            ModPoly {
                terms: vec![(0, c)],
            }
        }
    }
}

#[inline]
pub(crate) fn mulmod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

pub(crate) fn powmod(mut a: u64, mut e: u64, p: u64) -> u64 {
    let mut acc = 1u64;
    a %= p;
    while e > 0 {
        if e & 1 == 1 {
            acc = mulmod(acc, a, p);
        }
        a = mulmod(a, a, p);
        e >>= 1;
    }
    acc
}

pub(crate) fn invmod(a: u64, p: u64) -> u64 {
    powmod(a, p - 2, p)
}

fn bigint_mod(x: &BigInt, p: u64) -> u64 {
    let m = x.mod_floor(&BigInt::from(p));
    m.to_u64().unwrap()
}

pub(crate) fn rat_mod(c: &Rat, p: u64) -> Option<u64> {
    let den = bigint_mod(c.denom(), p);
    if den == 0 {
        return None;
    }
    let num = bigint_mod(c.numer(), p);
    Some(mulmod(num, invmod(den, p), p))
}

pub(crate) fn poly_mod(f: &Poly, p: u64, pk: &Packing) -> Option<ModPoly> {
    let mut terms = Vec::with_capacity(f.num_terms());
    for (m, c) in &f.terms {
        let v = rat_mod(c, p)?;
        if v != 0 {
            terms.push((pk.pack(m), v));
        }
    }
    Some(ModPoly { terms })
}

pub(crate) fn mp_mul(a: &ModPoly, b: &ModPoly, p: u64) -> ModPoly {
    if a.is_zero() || b.is_zero() {
        return ModPoly::default();
    }
    let mut map = FlatMap::with_capacity(a.terms.len().max(b.terms.len()) * 2);
    let (small, big) = if a.terms.len() <= b.terms.len() {
        (a, b)
    } else {
        (b, a)
    };
    for &(ka, va) in &small.terms {
        for &(kb, vb) in &big.terms {
            map.add(ka + kb, mulmod(va, vb, p), p);
        }
    }
    ModPoly {
        terms: map.drain_nonzero(),
    }
}

pub(crate) fn mp_add(a: &ModPoly, b: &ModPoly, p: u64) -> ModPoly {
    let mut map = FlatMap::with_capacity(a.terms.len() + b.terms.len());
    for &(k, v) in a.terms.iter().chain(&b.terms) {
        map.add(k, v, p);
    }
    ModPoly {
        terms: map.drain_nonzero(),
    }
}

pub(crate) fn mp_scale(a: &ModPoly, c: u64, p: u64) -> ModPoly {
    if c == 0 {
        return ModPoly::default();
    }
    ModPoly {
        terms: a
            .terms
            .iter()
            .filter_map(|&(k, v)| {
                let w = mulmod(v, c, p);
                if w == 0 {
                    None
                } else {
                    Some((k, w))
                }
            })
            .collect(),
    }
}

pub(crate) fn mp_diff(a: &ModPoly, v: usize, pk: &Packing, p: u64) -> ModPoly {
    let mut terms = Vec::with_capacity(a.terms.len());
    for &(k, c) in &a.terms {
        let e = pk.exponent(k, v);
        if e == 0 {
            continue;
        }
        let w = mulmod(c, e % p, p);
        if w != 0 {
            terms.push((pk.dec(k, v), w));
        }
    }
    ModPoly { terms }
}

// ---------------------------------------------------------------------------
// per-prime evaluation of factor combinations
// ---------------------------------------------------------------------------

struct PrimeContext<'a, 'b> {
    ctx: &'a mut EvalContext<'b>,
    p: u64,
    packing: &'a Packing,
    deriv_mod: HashMap<DerivSym, Arc<ModPoly>>,
    subst_mod: HashMap<(usize, Monomial), Arc<ModPoly>>,
}

impl<'a, 'b> PrimeContext<'a, 'b> {
    fn new(ctx: &'a mut EvalContext<'b>, p: u64, packing: &'a Packing) -> Self {
        PrimeContext {
            ctx,
            p,
            packing,
            deriv_mod: HashMap::new(),
            subst_mod: HashMap::new(),
        }
    }

    fn deriv_mod(&mut self, s: &DerivSym) -> Arc<ModPoly> {
        if let Some(m) = self.deriv_mod.get(s) {
            return m.clone();
        }
        let exact = self.ctx.deriv(s);
        let m = Arc::new(
            poly_mod(&exact, self.p, self.packing)
                .expect("tiny denominators cannot vanish mod a 61-bit prime"),
        );
        self.deriv_mod.insert(s.clone(), m.clone());
        m
    }

    fn factor_mod(&mut self, fac: &FactorKind) -> Arc<ModPoly> {
        match fac {
            FactorKind::Exact(poly) => {
                let key = (Arc::as_ptr(poly) as usize, Monomial::unit(self.ctx.nvars));
                if let Some(m) = self.subst_mod.get(&key) {
                    return m.clone();
                }
                let m = Arc::new(
                    poly_mod(poly, self.p, self.packing)
                        .expect("tiny denominators cannot vanish mod a 61-bit prime"),
                );
                self.subst_mod.insert(key, m.clone());
                m
            }
            FactorKind::Subst { dp, deriv } => {
                let key = (Arc::as_ptr(dp) as usize, deriv.clone());
                if let Some(m) = self.subst_mod.get(&key) {
                    return m.clone();
                }
                let base_key = (Arc::as_ptr(dp) as usize, Monomial::unit(self.ctx.nvars));
                let base = if let Some(m) = self.subst_mod.get(&base_key) {
                    m.clone()
                } else {
                    let m = Arc::new(self.subst_dp_mod(dp));
                    self.subst_mod.insert(base_key, m.clone());
                    m
                };
                let mut out = (*base).clone();
                for (v, &k) in deriv.0.iter().enumerate() {
                    for _ in 0..k {
                        out = mp_diff(&out, v, self.packing, self.p);
                    }
                }
                let out = Arc::new(out);
                self.subst_mod.insert(key, out.clone());
                out
            }
        }
    }

    /// Horner-style substitution of a differential polynomial, mod p.
    fn subst_dp_mod(&mut self, dp: &DiffPoly) -> ModPoly {
        let terms: Vec<(Vec<(DerivSym, u32)>, u64)> = dp
            .terms
            .iter()
            .filter_map(|(m, c)| rat_mod(c, self.p).map(|v| (m.0.clone(), v)))
            .filter(|(_, v)| *v != 0)
            .collect();
        self.subst_rec_mod(&terms)
    }

    fn subst_rec_mod(&mut self, terms: &[(Vec<(DerivSym, u32)>, u64)]) -> ModPoly {
        if terms.is_empty() {
            return ModPoly::default();
        }
        let mut counts: HashMap<&DerivSym, usize> = HashMap::new();
        for (m, _) in terms {
            for (s, _) in m {
                *counts.entry(s).or_insert(0) += 1;
            }
        }
        let best = counts.into_iter().max_by_key(|(_, c)| *c);
        let (pivot, count) = match best {
            None => {
                let mut c = 0u64;
                for (_, v) in terms {
                    c = (c + v) % self.p;
                }
                return ModPoly::constant(c);
            }
            Some((s, c)) => (s.clone(), c),
        };
        if count <= 1 {
            let mut acc = ModPoly::default();
            for (m, c) in terms {
                let mut t = ModPoly::constant(*c);
                for (s, e) in m {
                    let d = self.deriv_mod(s);
                    if d.is_zero() {
                        t = ModPoly::default();
                        break;
                    }
                    for _ in 0..*e {
                        t = mp_mul(&t, &d, self.p);
                    }
                }
                acc = mp_add(&acc, &t, self.p);
            }
            return acc;
        }
        let pivot_poly = self.deriv_mod(&pivot);
        let mut with_pivot = Vec::new();
        let mut without = Vec::new();
        for (m, c) in terms {
            if let Some(pos) = m.iter().position(|(s, _)| *s == pivot) {
                let mut m2 = m.clone();
                if m2[pos].1 == 1 {
                    m2.remove(pos);
                } else {
                    m2[pos].1 -= 1;
                }
                with_pivot.push((m2, *c));
            } else {
                without.push((m.clone(), *c));
            }
        }
        let rest = self.subst_rec_mod(&without);
        if pivot_poly.is_zero() {
            return rest;
        }
        let inner = self.subst_rec_mod(&with_pivot);
        mp_add(&mp_mul(&inner, &pivot_poly, self.p), &rest, self.p)
    }

    fn combination_is_zero(&mut self, jobs: &[Job]) -> bool {
        let mut acc = FlatMap::with_capacity(1024);
        for job in jobs {
            let c = match rat_mod(&job.coef, self.p) {
                Some(c) => c,
                None => continue,
            };
            if c == 0 {
                continue;
            }
            let mut mods: Vec<Arc<ModPoly>> =
                job.factors.iter().map(|f| self.factor_mod(f)).collect();
            if mods.iter().any(|m| m.is_zero()) {
                continue;
            }
            mods.sort_by_key(|m| m.terms.len());
            let mut prod = mp_scale(&mods[0], c, self.p);
            for m in &mods[1..] {
                prod = mp_mul(&prod, m, self.p);
            }
            for (k, v) in prod.terms {
                acc.add(k, v, self.p);
            }
        }
        acc.all_zero()
    }
}

// ---------------------------------------------------------------------------
// primes
// ---------------------------------------------------------------------------

fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let mut d = n - 1;
    let mut r = 0;
    while d % 2 == 0 {
        d /= 2;
        r += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = powmod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 0..r - 1 {
            x = mulmod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Primes just below 2^61 whose product exceeds `target`.
fn primes_covering(target: &BigInt) -> Vec<u64> {
    let mut primes = Vec::new();
    let mut product = BigInt::one();
    let mut candidate: u64 = (1u64 << 61) - 1;
    while &product <= target {
        while !is_prime_u64(candidate) {
            candidate -= 2;
        }
        primes.push(candidate);
        product *= BigInt::from(candidate);
        candidate -= 2;
    }
    primes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_poly;

    #[test]
    fn prime_generation() {
        let ps = primes_covering(&BigInt::from(10u64).pow(40));
        assert!(ps.len() >= 3);
        for p in ps {
            assert!(is_prime_u64(p));
        }
        assert!(is_prime_u64((1u64 << 61) - 1));
        assert!(!is_prime_u64((1u64 << 61) + 1));
    }

    #[test]
    fn exact_and_modular_paths_agree() {
        // (x+y)^2 * (x-y) - (x-y) * (x+y)^2 == 0, with fat operands
        let a = parse_poly("(x + y + z)^6", 3).unwrap();
        let b = parse_poly("(x - y + 2*z)^6", 3).unwrap();
        let jobs = vec![
            Job {
                coef: Rat::one(),
                factors: vec![
                    FactorKind::Exact(Arc::new(a.clone())),
                    FactorKind::Exact(Arc::new(b.clone())),
                ],
            },
            Job {
                coef: -Rat::one(),
                factors: vec![
                    FactorKind::Exact(Arc::new(b.clone())),
                    FactorKind::Exact(Arc::new(a.clone())),
                ],
            },
        ];
        let f = Poly::zero(3);
        let out = evaluate_equalities(&f, &[jobs.clone()], false);
        assert!(out[0].is_zero());
        // ... and detects a perturbation
        let mut jobs2 = jobs;
        jobs2[1].coef = Rat::new((-999_999).into(), 1_000_000.into());
        let out2 = evaluate_equalities(&f, &[jobs2], false);
        assert!(!out2[0].is_zero());
    }

    #[test]
    fn flat_map_grows_and_cancels() {
        let p = (1u64 << 61) - 1;
        let mut m = FlatMap::with_capacity(4);
        for k in 0..1000u64 {
            m.add(k, 5, p);
        }
        for k in 0..1000u64 {
            m.add(k, p - 5, p);
        }
        assert!(m.all_zero());
    }
}
