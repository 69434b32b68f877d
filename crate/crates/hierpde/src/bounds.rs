//! Derivative-order bounds: the order at which counting guarantees a
//! non-trivial algebraic relation among the partial derivatives of any
//! function computed by the architecture, and how many independent relations
//! the dimension count yields at that order.

use crate::arch::{Arch, Network, Regime, Tree};
use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("the lower-arity counting argument needs every node fan-in below the input count {n}; node with fan-in {fan_in} found")]
    FanInTooLarge { fan_in: usize, n: usize },
    #[error("the weighted-node counting argument needs at least two distinct inputs")]
    TooFewInputs,
    #[error("count overflowed the reportable integer range")]
    Overflow,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct BoundReport {
    /// Number of distinct inputs.
    pub n: usize,
    /// Vertices above the input layer.
    pub neurons: usize,
    /// Edges of the underlying graph.
    pub connections: usize,
    pub regime: String,
    /// Derivative order at which relations are guaranteed.
    pub r: u64,
    /// Guaranteed number of independent relations at order `r` from the
    /// dimension count.
    pub count: u128,
    /// For the weighted regime the dimension count does not subtract the
    /// connection budget that the existence inequality uses; this variant
    /// does, as the conservative reading.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count_minus_connections: Option<u128>,
}

/// Architecture statistics used by the bounds: `(n, neurons, connections,
/// max fan-in)`.
fn arch_stats(arch: &Arch) -> (usize, usize, usize, usize) {
    match arch {
        Arch::Network(net) => (
            distinct_inputs_net(net),
            net.neuron_count(),
            net.connection_count(),
            net.max_fan_in(),
        ),
        Arch::Tree(t) => (
            distinct_inputs_tree(t),
            t.node_ids().len(),
            t.vertices.len() - 1,
            t.node_ids()
                .iter()
                .map(|&v| t.children(v).len())
                .max()
                .unwrap_or(0),
        ),
    }
}

fn distinct_inputs_net(net: &Network) -> usize {
    let mut vars: Vec<usize> = net.input_vars.clone();
    vars.sort_unstable();
    vars.dedup();
    vars.len()
}

fn distinct_inputs_tree(t: &Tree) -> usize {
    let mut vars = t.leaf_vars();
    vars.sort_unstable();
    vars.dedup();
    vars.len()
}

pub fn binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for i in 0..k {
        num *= BigInt::from(n - i);
        den *= BigInt::from(i + 1);
    }
    num / den
}

/// Derivatives of order at most `r` of a function of `n` variables,
/// excluding the function itself.
fn deriv_count(r: u64, n: u64) -> BigInt {
    binomial(r + n, n) - 1
}

/// Guaranteed order and relation count for the architecture.
///
/// Lower-arity regime: `r = n (neurons - 1)`, valid when every node has
/// fan-in below `n`; the count is
/// `(C(r+n,n)-1) - neurons (C(r+n-1,n-1)-1)`.
///
/// Weighted regime: `r = max(floor(n * neurons^(1/(n-1))), connections) + 2`
/// and the count is `(C(r+n,n)-1) - neurons * r`.
pub fn order_bound(arch: &Arch, regime: Regime) -> Result<BoundReport, BoundError> {
    let (n, neurons, connections, max_fan_in) = arch_stats(arch);
    match regime {
        Regime::Smooth => {
            if max_fan_in >= n {
                return Err(BoundError::FanInTooLarge {
                    fan_in: max_fan_in,
                    n,
                });
            }
            let r = (n as u64 * (neurons as u64).saturating_sub(1)).max(1);
            let count = deriv_count(r, n as u64)
                - BigInt::from(neurons) * deriv_count(r, n as u64 - 1);
            Ok(BoundReport {
                n,
                neurons,
                connections,
                regime: "smooth".to_string(),
                r,
                count: count.to_u128().ok_or(BoundError::Overflow)?,
                count_minus_connections: None,
            })
        }
        Regime::Activation => {
            if n < 2 {
                return Err(BoundError::TooFewInputs);
            }
            let root_term = floor_scaled_root(n as u64, neurons as u64);
            let r = root_term.max(connections as u64) + 2;
            let count = deriv_count(r, n as u64) - BigInt::from(neurons as u64 * r);
            let minus_c = &count - BigInt::from(connections);
            Ok(BoundReport {
                n,
                neurons,
                connections,
                regime: "activation".to_string(),
                r,
                count: count.to_u128().ok_or(BoundError::Overflow)?,
                count_minus_connections: Some(
                    minus_c.max(BigInt::zero()).to_u128().ok_or(BoundError::Overflow)?,
                ),
            })
        }
    }
}

/// `floor(n * N^(1/(n-1)))` computed exactly: the largest `m` with
/// `m^(n-1) <= n^(n-1) * N`.
fn floor_scaled_root(n: u64, neurons: u64) -> u64 {
    let e = (n - 1) as u32;
    let target = BigInt::from(n).pow(e) * BigInt::from(neurons);
    let mut lo = 0u64;
    let mut hi = n * (neurons + 1); // n * N^(1/(n-1)) <= n * N for N >= 1
    while lo < hi {
        let mid = (lo + hi + 1) / 2;
        if BigInt::from(mid).pow(e) <= target {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    lo
}

/// Smallest order `r` at which the relation count clears `neurons * k_max +
/// connections`: the improvement available when every activation function
/// satisfies an autonomous ODE of order at most `k_max`.
pub fn order_bound_ode(arch: &Arch, k_max: u64) -> Result<BoundReport, BoundError> {
    let (n, neurons, connections, _) = arch_stats(arch);
    if n < 2 {
        return Err(BoundError::TooFewInputs);
    }
    let budget = BigInt::from(neurons as u64 * k_max + connections as u64);
    let mut r = 1u64;
    loop {
        if deriv_count(r, n as u64) > budget {
            break;
        }
        r += 1;
    }
    let count = deriv_count(r, n as u64) - &budget;
    Ok(BoundReport {
        n,
        neurons,
        connections,
        regime: format!("activation+ode(k_max={k_max})"),
        r,
        count: count.to_u128().ok_or(BoundError::Overflow)?,
        count_minus_connections: None,
    })
}

/// Check that the emitted order satisfies the underlying strict inequality.
pub fn inequality_holds(report: &BoundReport) -> bool {
    let n = report.n as u64;
    let lhs = deriv_count(report.r, n);
    if report.regime == "smooth" {
        lhs > BigInt::from(report.neurons) * deriv_count(report.r, n - 1)
    } else {
        lhs > BigInt::from(report.neurons as u64 * report.r + report.connections as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::parse_arch;

    fn basic2() -> Arch {
        parse_arch(
            r#"{"type":"network","inputs":["x","y","z"],"layers":[[{"in":[0,1]},{"in":[0,2]}],[{"in":[3,4]}]]}"#,
        )
        .unwrap()
    }

    #[test]
    fn smooth_bound_example() {
        let rep = order_bound(&basic2(), Regime::Smooth).unwrap();
        assert_eq!(rep.r, 6);
        // (C(9,3)-1) - 3 (C(8,2)-1) = 83 - 81 = 2
        assert_eq!(rep.count, 2);
        assert!(inequality_holds(&rep));
    }

    #[test]
    fn activation_bound_example() {
        let rep = order_bound(&basic2(), Regime::Activation).unwrap();
        // max(floor(3 * 3^(1/2)), 6) + 2 = max(5, 6) + 2
        assert_eq!(rep.r, 8);
        assert!(inequality_holds(&rep));
        assert!(rep.count > 0);
        assert_eq!(
            rep.count_minus_connections.unwrap(),
            rep.count - rep.connections as u128
        );
    }

    #[test]
    fn fan_in_hypothesis_is_enforced() {
        // single neuron reading all three inputs
        let a = parse_arch(
            r#"{"type":"network","inputs":["x","y","z"],"layers":[[{"in":[0,1,2]}]]}"#,
        )
        .unwrap();
        assert!(matches!(
            order_bound(&a, Regime::Smooth),
            Err(BoundError::FanInTooLarge { .. })
        ));
        assert!(order_bound(&a, Regime::Activation).is_ok());
    }

    #[test]
    fn ode_bound_examples() {
        // n=3, N=3, C=6, k_max=1: smallest r with C(r+3,3)-1 > 9 is 3
        let rep = order_bound_ode(&basic2(), 1).unwrap();
        assert_eq!(rep.r, 3);
        // n=2, N=1, C=2, k_max=2: smallest r with C(r+2,2)-1 > 4 is 2
        let tiny = parse_arch(
            r#"{"type":"network","inputs":["x","y"],"layers":[[{"in":[0,1]}]]}"#,
        )
        .unwrap();
        let rep2 = order_bound_ode(&tiny, 2).unwrap();
        assert_eq!(rep2.r, 2);
        // monotone in k_max
        let mut last = 0;
        for k in 1..=6 {
            let r = order_bound_ode(&basic2(), k).unwrap().r;
            assert!(r >= last);
            last = r;
        }
    }

    #[test]
    fn monotone_in_size() {
        // adding a neuron (and its connections) cannot reduce the bound
        let bigger = parse_arch(
            r#"{"type":"network","inputs":["x","y","z"],"layers":[[{"in":[0,1]},{"in":[0,2]},{"in":[1,2]}],[{"in":[3,4,5]}]]}"#,
        )
        .unwrap();
        for regime in [Regime::Smooth, Regime::Activation] {
            let a = order_bound(&basic2(), regime);
            let b = order_bound(&bigger, regime);
            if let (Ok(a), Ok(b)) = (a, b) {
                assert!(b.r >= a.r);
            }
        }
    }
}
