//! Numerical verification for closed-form smooth functions: central-difference
//! partial derivatives (tensor-product stencils, optional Richardson pass),
//! per-point scaled residuals for the equalities, signed values for the
//! strict inequalities, and conditioning guards from the non-vanishing
//! clauses.

use crate::constraints::ConstraintSet;
use crate::diffpoly::{rat_to_f64, DerivSym, DiffPoly};
use crate::expr::smooth::{DomainError, SmoothExpr};
use crate::expr::poly::Monomial;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::Value;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumCheckError {
    #[error("constraint order {needed} exceeds the configured max_order {max}")]
    OrderTooHigh { needed: u32, max: u32 },
    #[error("max_order {0} exceeds the supported stencil range (4)")]
    UnsupportedOrder(u32),
    #[error("no evaluation points were provided")]
    NoPoints,
    #[error("step size must be positive")]
    BadStep,
    #[error("domain error while evaluating the function: {0}")]
    Domain(#[from] DomainError),
}

#[derive(Debug, Clone)]
pub struct FDConfig {
    /// Base step; per-axis steps scale with the point magnitude.
    pub h: f64,
    pub richardson: bool,
    pub max_order: u32,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub points: Vec<Vec<f64>>,
    pub seed: u64,
}

impl Default for FDConfig {
    fn default() -> Self {
        FDConfig {
            h: 1e-3,
            richardson: true,
            max_order: 4,
            rel_tol: 1e-4,
            abs_tol: 1e-9,
            points: Vec::new(),
            seed: 0,
        }
    }
}

/// Uniform sample of `k` points in `[lo, hi]^nvars`.
pub fn sample_points(k: usize, seed: u64, lo: f64, hi: f64, nvars: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|_| (0..nvars).map(|_| rng.gen_range(lo..=hi)).collect())
        .collect()
}

/// Central-difference stencils: (offset, weight) pairs per derivative order,
/// each O(h^2) accurate before Richardson extrapolation.
fn stencil(order: u32) -> &'static [(i32, f64)] {
    match order {
        0 => &[(0, 1.0)],
        1 => &[(-1, -0.5), (1, 0.5)],
        2 => &[(-1, 1.0), (0, -2.0), (1, 1.0)],
        3 => &[(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
        4 => &[(-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)],
        _ => unreachable!("orders above 4 are rejected in advance"),
    }
}

fn fd_tensor(
    f: &SmoothExpr,
    alpha: &[u32],
    point: &[f64],
    steps: &[f64],
) -> Result<f64, DomainError> {
    // cartesian product of the per-axis stencils
    let axis_stencils: Vec<&[(i32, f64)]> = alpha.iter().map(|&k| stencil(k)).collect();
    let mut total = 0.0f64;
    let mut idx = vec![0usize; alpha.len()];
    let mut shifted = point.to_vec();
    'outer: loop {
        let mut weight = 1.0f64;
        for (v, &i) in idx.iter().enumerate() {
            let (off, w) = axis_stencils[v][i];
            shifted[v] = point[v] + off as f64 * steps[v];
            weight *= w;
        }
        for (v, &k) in alpha.iter().enumerate() {
            for _ in 0..k {
                weight /= steps[v];
            }
        }
        total += weight * f.eval(&shifted)?;
        // advance the mixed-radix counter
        for v in 0..idx.len() {
            idx[v] += 1;
            if idx[v] < axis_stencils[v].len() {
                continue 'outer;
            }
            idx[v] = 0;
        }
        break;
    }
    Ok(total)
}

/// Finite-difference partial derivative of order `alpha` at `point`.
pub fn fd_partial(
    f: &SmoothExpr,
    alpha: &Monomial,
    point: &[f64],
    cfg: &FDConfig,
) -> Result<f64, NumCheckError> {
    if cfg.h <= 0.0 {
        return Err(NumCheckError::BadStep);
    }
    if cfg.max_order > 4 {
        return Err(NumCheckError::UnsupportedOrder(cfg.max_order));
    }
    if alpha.degree() > cfg.max_order {
        return Err(NumCheckError::OrderTooHigh {
            needed: alpha.degree(),
            max: cfg.max_order,
        });
    }
    Ok(fd_partial_inner(f, &alpha.0, point, cfg)?)
}

fn fd_partial_inner(
    f: &SmoothExpr,
    alpha: &[u32],
    point: &[f64],
    cfg: &FDConfig,
) -> Result<f64, DomainError> {
    let steps: Vec<f64> = point
        .iter()
        .map(|p| cfg.h * p.abs().max(1.0))
        .collect();
    let coarse = fd_tensor(f, alpha, point, &steps)?;
    if !cfg.richardson {
        return Ok(coarse);
    }
    let halved: Vec<f64> = steps.iter().map(|h| h / 2.0).collect();
    let fine = fd_tensor(f, alpha, point, &halved)?;
    // one extrapolation pass on the O(h^2) leading error term
    Ok((4.0 * fine - coarse) / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NumVerdict {
    Consistent,
    Violated,
    IllConditioned,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointRecord {
    pub point: Vec<f64>,
    /// Scaled residual per equality (None at unusable points).
    pub equality_residuals: Vec<Option<f64>>,
    /// Signed value and own-scale per inequality.
    pub inequality_values: Vec<Option<(f64, f64)>>,
    /// Max atom magnitude per non-vanishing clause.
    pub clause_magnitudes: Vec<Option<f64>>,
    pub well_conditioned: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct NumReport {
    pub verdict: NumVerdict,
    pub equalities: Vec<(String, NumVerdict)>,
    pub inequalities: Vec<(String, NumVerdict)>,
    pub points: Vec<PointRecord>,
    pub well_conditioned_points: usize,
}

impl NumReport {
    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("report serialization cannot fail")
    }

    pub fn exit_code(&self) -> i32 {
        match self.verdict {
            NumVerdict::Consistent => 0,
            NumVerdict::Violated => 1,
            NumVerdict::IllConditioned => 2,
        }
    }
}

struct PointEval<'a> {
    f: &'a SmoothExpr,
    cfg: &'a FDConfig,
    point: Vec<f64>,
    cache: HashMap<DerivSym, f64>,
    failed: bool,
}

impl<'a> PointEval<'a> {
    /// Evaluate a differential polynomial; returns (value, max |term|).
    fn eval_dp(&mut self, dp: &DiffPoly) -> (f64, f64) {
        let mut cache = std::mem::take(&mut self.cache);
        let out = dp.eval_with(|s| {
            if let Some(v) = cache.get(s) {
                *v
            } else {
                let v = match fd_partial_inner(self.f, &s.0, &self.point, self.cfg) {
                    Ok(v) => v,
                    Err(_) => {
                        self.failed = true;
                        f64::NAN
                    }
                };
                cache.insert(s.clone(), v);
                v
            }
        });
        self.cache = cache;
        out
    }
}

/// Evaluate every constraint at every configured point. A point is
/// well-conditioned when every non-vanishing clause shows a magnitude above
/// `abs_tol`; only well-conditioned points can yield a `violated` verdict.
pub fn num_check(
    f: &SmoothExpr,
    cs: &ConstraintSet,
    cfg: &FDConfig,
) -> Result<NumReport, NumCheckError> {
    if cfg.max_order > 4 {
        return Err(NumCheckError::UnsupportedOrder(cfg.max_order));
    }
    let needed = cs.max_order();
    if needed > cfg.max_order {
        return Err(NumCheckError::OrderTooHigh {
            needed,
            max: cfg.max_order,
        });
    }
    if cfg.points.is_empty() {
        return Err(NumCheckError::NoPoints);
    }
    // resolve lazy derivatives once
    let eq_resolved: Vec<Vec<(f64, Vec<DiffPoly>)>> = cs
        .equalities
        .iter()
        .map(|c| {
            c.expr
                .products
                .iter()
                .map(|p| {
                    (
                        rat_to_f64(&p.coef),
                        p.factors.iter().map(|f| f.resolved()).collect(),
                    )
                })
                .collect()
        })
        .collect();
    let ineq_resolved: Vec<Vec<(f64, Vec<DiffPoly>)>> = cs
        .inequalities
        .iter()
        .map(|c| {
            c.expr
                .products
                .iter()
                .map(|p| {
                    (
                        rat_to_f64(&p.coef),
                        p.factors.iter().map(|f| f.resolved()).collect(),
                    )
                })
                .collect()
        })
        .collect();

    let mut points_out = Vec::with_capacity(cfg.points.len());
    let mut eq_violated = vec![false; cs.equalities.len()];
    let mut eq_checked = vec![0usize; cs.equalities.len()];
    let mut ineq_violated = vec![false; cs.inequalities.len()];
    let mut ineq_positive = vec![0usize; cs.inequalities.len()];
    let mut well_count = 0usize;

    for point in &cfg.points {
        let mut pe = PointEval {
            f,
            cfg,
            point: point.clone(),
            cache: HashMap::new(),
            failed: false,
        };
        // conditioning via clause magnitudes
        let mut clause_magnitudes = Vec::with_capacity(cs.nonvanishing.len());
        let mut well = true;
        for clause in &cs.nonvanishing {
            let mut mag: f64 = 0.0;
            for atom in &clause.atoms {
                let (v, _) = pe.eval_dp(atom);
                mag = mag.max(v.abs());
            }
            if pe.failed {
                break;
            }
            if mag < cfg.abs_tol {
                well = false;
            }
            clause_magnitudes.push(Some(mag));
        }
        if pe.failed {
            points_out.push(PointRecord {
                point: point.clone(),
                equality_residuals: vec![None; cs.equalities.len()],
                inequality_values: vec![None; cs.inequalities.len()],
                clause_magnitudes: vec![None; cs.nonvanishing.len()],
                well_conditioned: false,
            });
            continue;
        }
        if well {
            well_count += 1;
        }

        let mut eq_res = Vec::with_capacity(cs.equalities.len());
        for (ei, products) in eq_resolved.iter().enumerate() {
            let mut value = 0.0f64;
            let mut scale = 0.0f64;
            for (coef, factors) in products {
                let mut pv = *coef;
                let mut pscale = coef.abs();
                for dp in factors {
                    let (v, m) = pe.eval_dp(dp);
                    pv *= v;
                    pscale *= m.max(f64::MIN_POSITIVE);
                }
                value += pv;
                scale = scale.max(pscale.abs());
            }
            if pe.failed {
                eq_res.push(None);
                continue;
            }
            let scaled = if scale > 0.0 {
                value.abs() / scale
            } else if value == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            eq_res.push(Some(scaled));
            if well {
                eq_checked[ei] += 1;
                if scaled > cfg.rel_tol {
                    eq_violated[ei] = true;
                }
            }
        }

        let mut ineq_vals = Vec::with_capacity(cs.inequalities.len());
        for (ii, products) in ineq_resolved.iter().enumerate() {
            let mut value = 0.0f64;
            let mut scale = 0.0f64;
            for (coef, factors) in products {
                let mut pv = *coef;
                let mut pscale = coef.abs();
                for dp in factors {
                    let (v, m) = pe.eval_dp(dp);
                    pv *= v;
                    pscale *= m.max(f64::MIN_POSITIVE);
                }
                value += pv;
                scale = scale.max(pscale.abs());
            }
            if pe.failed {
                ineq_vals.push(None);
                continue;
            }
            ineq_vals.push(Some((value, scale)));
            if well {
                if value < -cfg.rel_tol * scale {
                    ineq_violated[ii] = true;
                } else if value > cfg.rel_tol * scale {
                    ineq_positive[ii] += 1;
                }
            }
        }

        points_out.push(PointRecord {
            point: point.clone(),
            equality_residuals: eq_res,
            inequality_values: ineq_vals,
            clause_magnitudes,
            well_conditioned: well,
        });
    }

    let eq_verdicts: Vec<(String, NumVerdict)> = cs
        .equalities
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let v = if eq_violated[i] {
                NumVerdict::Violated
            } else if eq_checked[i] == 0 {
                NumVerdict::IllConditioned
            } else {
                NumVerdict::Consistent
            };
            (c.provenance.clone(), v)
        })
        .collect();
    let ineq_verdicts: Vec<(String, NumVerdict)> = cs
        .inequalities
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let v = if ineq_violated[i] {
                NumVerdict::Violated
            } else if well_count == 0 || ineq_positive[i] == 0 {
                NumVerdict::IllConditioned
            } else {
                NumVerdict::Consistent
            };
            (c.provenance.clone(), v)
        })
        .collect();

    let verdict = if eq_verdicts
        .iter()
        .chain(&ineq_verdicts)
        .any(|(_, v)| *v == NumVerdict::Violated)
    {
        NumVerdict::Violated
    } else if well_count == 0 {
        NumVerdict::IllConditioned
    } else {
        NumVerdict::Consistent
    };

    Ok(NumReport {
        verdict,
        equalities: eq_verdicts,
        inequalities: ineq_verdicts,
        points: points_out,
        well_conditioned_points: well_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{preset, Preset};
    use crate::expr::{parse_expr, ParseMode, ParsedExpr};

    fn smooth(text: &str, nvars: usize) -> SmoothExpr {
        match parse_expr(text, nvars, ParseMode::Numeric).unwrap() {
            ParsedExpr::Smooth(e) => e,
            _ => unreachable!(),
        }
    }

    #[test]
    fn fd_partial_examples() {
        let cfg = FDConfig::default();
        // d^2/dxdy (x^2 y) at (1,1) = 2
        let f = smooth("x^2*y", 2);
        let v = fd_partial(&f, &Monomial(vec![1, 1]), &[1.0, 1.0], &cfg).unwrap();
        assert!((v - 2.0).abs() < 1e-8, "got {v}");
        // d^2/dt^2 tanh(x + 2t) at the origin vanishes by symmetry
        let g = smooth("tanh(x + 2*t)", 2);
        let v = fd_partial(&g, &Monomial(vec![0, 2]), &[0.0, 0.0], &cfg).unwrap();
        assert!(v.abs() < 1e-6, "got {v}");
        // d^3/dx^2 dy (exp(x) y) at (1,2) = e
        let h = smooth("exp(x)*y", 2);
        let v = fd_partial(&h, &Monomial(vec![2, 1]), &[1.0, 2.0], &cfg).unwrap();
        assert!((v - std::f64::consts::E).abs() < 1e-6, "got {v}");
    }

    #[test]
    fn fd_error_scales_with_step() {
        // halving h divides the error by ~4 without Richardson, ~16 with
        let f = smooth("exp(x)", 1);
        let exact = std::f64::consts::E;
        for (richardson, expected_ratio) in [(false, 4.0), (true, 16.0)] {
            let mut cfg = FDConfig {
                richardson,
                h: 2e-2,
                ..FDConfig::default()
            };
            let e1 = (fd_partial(&f, &Monomial(vec![2]), &[1.0], &cfg).unwrap() - exact).abs();
            cfg.h /= 2.0;
            let e2 = (fd_partial(&f, &Monomial(vec![2]), &[1.0], &cfg).unwrap() - exact).abs();
            let ratio = e1 / e2.max(1e-16);
            assert!(
                ratio > expected_ratio / 2.5,
                "richardson={richardson}: ratio {ratio}, errors {e1} {e2}"
            );
        }
    }

    #[test]
    fn wave_family_is_consistent_and_pdi_positive() {
        let cs = preset(&Preset::Wave2).unwrap();
        let f = smooth("tanh(x + 2*t) + (x - 2*t)^3", 2);
        let cfg = FDConfig {
            points: sample_points(8, 7, 0.3, 1.1, 2),
            ..FDConfig::default()
        };
        let report = num_check(&f, &cs, &cfg).unwrap();
        assert_eq!(report.verdict, NumVerdict::Consistent, "{report:?}");
    }

    #[test]
    fn harmonic_function_violates_the_inequality() {
        let cs = preset(&Preset::Wave2).unwrap();
        let f = smooth("x^3 - 3*x*t^2", 2);
        let cfg = FDConfig {
            points: sample_points(8, 11, 0.4, 1.2, 2),
            ..FDConfig::default()
        };
        let report = num_check(&f, &cs, &cfg).unwrap();
        assert_eq!(report.verdict, NumVerdict::Violated);
        // the equalities themselves stay consistent
        assert!(report
            .equalities
            .iter()
            .all(|(_, v)| *v == NumVerdict::Consistent));
    }

    #[test]
    fn degenerate_function_is_ill_conditioned() {
        let cs = preset(&Preset::Wave2).unwrap();
        let f = smooth("x + t", 2);
        let cfg = FDConfig {
            points: sample_points(5, 3, 0.2, 1.0, 2),
            ..FDConfig::default()
        };
        let report = num_check(&f, &cs, &cfg).unwrap();
        assert_eq!(report.verdict, NumVerdict::IllConditioned);
        assert_eq!(report.well_conditioned_points, 0);
    }

    #[test]
    fn verdicts_are_deterministic() {
        let cs = preset(&Preset::Wave2).unwrap();
        let f = smooth("tanh(x + 2*t) + (x - 2*t)^3", 2);
        let cfg = FDConfig {
            points: sample_points(5, 99, 0.3, 1.0, 2),
            ..FDConfig::default()
        };
        let a = num_check(&f, &cs, &cfg).unwrap();
        let b = num_check(&f, &cs, &cfg).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }
}
