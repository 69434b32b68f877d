//! Ground-truth composer: assign concrete node functions to an architecture
//! and expand the superposition exactly. Serves as the independent generator
//! for every soundness test (functions built here must satisfy the generated
//! constraints by construction).

use crate::arch::{Arch, Network, Tree, Vertex};
use crate::expr::poly::{Poly, Rat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("node `{0}` is missing from the assignment")]
    MissingNode(String),
    #[error("node `{node}` expects arity {expected}, assignment provides {got}")]
    ArityMismatch {
        node: String,
        expected: usize,
        got: usize,
    },
    #[error("assignment document is malformed: {0}")]
    Parse(String),
}

/// Function attached to one node.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeFun {
    /// Arbitrary polynomial in the node's fan-in, variables `x1..xk` mapping
    /// to the children in order.
    Free(Poly),
    /// Univariate activation applied to a weighted sum of the children.
    Act {
        weights: Vec<Rat>,
        bias: Rat,
        activation: Poly,
    },
}

/// Node-id-keyed assignment. Tree nodes are labeled `n0, n1, ...` in
/// depth-first preorder; network neurons use their numeric id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment {
    pub by_node: BTreeMap<String, NodeFun>,
}

pub fn tree_node_label(position: usize) -> String {
    format!("n{position}")
}

pub fn network_node_label(id: usize) -> String {
    id.to_string()
}

/// Bottom-up exact composition of the architecture under the assignment.
pub fn compose_arch(arch: &Arch, asg: &Assignment) -> Result<Poly, OracleError> {
    match arch {
        Arch::Tree(t) => compose_tree(t, asg),
        Arch::Network(net) => compose_network(net, asg),
    }
}

fn node_fun_output(
    label: &str,
    fun: &NodeFun,
    inputs: &[Poly],
    nvars: usize,
) -> Result<Poly, OracleError> {
    match fun {
        NodeFun::Free(p) => {
            if p.nvars != inputs.len() {
                return Err(OracleError::ArityMismatch {
                    node: label.to_string(),
                    expected: inputs.len(),
                    got: p.nvars,
                });
            }
            Ok(p.compose(inputs))
        }
        NodeFun::Act {
            weights,
            bias,
            activation,
        } => {
            if weights.len() != inputs.len() {
                return Err(OracleError::ArityMismatch {
                    node: label.to_string(),
                    expected: inputs.len(),
                    got: weights.len(),
                });
            }
            if activation.nvars != 1 {
                return Err(OracleError::ArityMismatch {
                    node: label.to_string(),
                    expected: 1,
                    got: activation.nvars,
                });
            }
            let mut lin = Poly::constant_rat(nvars, bias.clone());
            for (w, p) in weights.iter().zip(inputs) {
                lin = lin.add(&p.scale(w));
            }
            Ok(activation.compose(&[lin]))
        }
    }
}

pub fn compose_tree(t: &Tree, asg: &Assignment) -> Result<Poly, OracleError> {
    let node_ids = t.node_ids();
    let labels: BTreeMap<usize, String> = node_ids
        .iter()
        .enumerate()
        .map(|(pos, &v)| (v, tree_node_label(pos)))
        .collect();
    compose_tree_vertex(t, 0, asg, &labels)
}

fn compose_tree_vertex(
    t: &Tree,
    v: usize,
    asg: &Assignment,
    labels: &BTreeMap<usize, String>,
) -> Result<Poly, OracleError> {
    match &t.vertices[v] {
        Vertex::Leaf { var } => Ok(Poly::var(t.nvars, *var)),
        Vertex::Node { children } => {
            let mut inputs = Vec::with_capacity(children.len());
            for &c in children {
                inputs.push(compose_tree_vertex(t, c, asg, labels)?);
            }
            let label = &labels[&v];
            let fun = asg
                .by_node
                .get(label)
                .ok_or_else(|| OracleError::MissingNode(label.clone()))?;
            node_fun_output(label, fun, &inputs, t.nvars)
        }
    }
}

pub fn compose_network(net: &Network, asg: &Assignment) -> Result<Poly, OracleError> {
    let total = net.n_inputs + net.neuron_count();
    let mut values: Vec<Poly> = Vec::with_capacity(total);
    for i in 0..net.n_inputs {
        values.push(Poly::var(net.nvars, net.input_vars[i]));
    }
    for id in net.n_inputs..total {
        let label = network_node_label(id);
        let fun = asg
            .by_node
            .get(&label)
            .ok_or_else(|| OracleError::MissingNode(label.clone()))?;
        let inputs: Vec<Poly> = net
            .neuron_inputs(id)
            .iter()
            .map(|&p| values[p].clone())
            .collect();
        values.push(node_fun_output(&label, fun, &inputs, net.nvars)?);
    }
    Ok(values[net.output_id()].clone())
}

/// Lift a network assignment onto the expanded tree: every copied node
/// reuses the function of the neuron it came from.
pub fn lift_assignment_to_tenn(net: &Network, asg: &Assignment) -> (Tree, Assignment) {
    let (tree, sources) = crate::arch::tenn_with_sources(net);
    let node_ids = tree.node_ids();
    let mut by_node = BTreeMap::new();
    for (pos, &v) in node_ids.iter().enumerate() {
        let src = sources[v];
        let fun = asg.by_node[&network_node_label(src)].clone();
        by_node.insert(tree_node_label(pos), fun);
    }
    (tree, Assignment { by_node })
}

// ---------------------------------------------------------------------------
// random instances
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceRegime {
    /// Arbitrary node polynomials of bounded degree.
    Free,
    /// Weighted sums with polynomial activations of bounded degree.
    Activation,
}

#[derive(Debug, Clone)]
pub struct InstanceOptions {
    pub max_deg: u32,
    pub regime: InstanceRegime,
    /// Keep degenerate (constant) node functions instead of resampling.
    pub allow_degenerate: bool,
    /// Cap on the product of node degrees along any root path; curbs the
    /// size of expanded compositions on deep trees.
    pub path_degree_budget: u32,
}

impl InstanceOptions {
    pub fn new(max_deg: u32, regime: InstanceRegime) -> Self {
        InstanceOptions {
            max_deg,
            regime,
            allow_degenerate: false,
            path_degree_budget: 16,
        }
    }
}

fn rand_rat(rng: &mut ChaCha8Rng) -> Rat {
    // values in [-5, 5], denominators up to 4
    let den = rng.gen_range(1i64..=4);
    let num = rng.gen_range(-5 * den..=5 * den);
    Rat::new(num.into(), den.into())
}

fn rand_nonzero_rat(rng: &mut ChaCha8Rng) -> Rat {
    loop {
        let r = rand_rat(rng);
        if !num_traits::Zero::is_zero(&r) {
            return r;
        }
    }
}

fn rand_poly(rng: &mut ChaCha8Rng, nvars: usize, max_deg: u32, allow_constant: bool) -> Poly {
    use crate::diffpoly::multi_indices_upto;
    loop {
        let mut p = Poly::zero(nvars);
        for m in multi_indices_upto(nvars, max_deg) {
            // keep the support dense-ish but not full
            if rng.gen_bool(0.8) {
                p.add_term(m.clone(), rand_rat(rng));
            }
        }
        if allow_constant || p.total_degree() > 0 {
            return p;
        }
    }
}

/// Reproducible random assignment and its exact composition.
pub fn random_instance(
    arch: &Arch,
    opts: &InstanceOptions,
    seed: u64,
) -> Result<(Assignment, Poly), OracleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let asg = match arch {
        Arch::Tree(t) => random_tree_assignment(t, opts, &mut rng),
        Arch::Network(net) => random_network_assignment(net, opts, &mut rng),
    };
    let f = compose_arch(arch, &asg)?;
    Ok((asg, f))
}

fn node_degree_for(budget_left: u32, max_deg: u32, rng: &mut ChaCha8Rng) -> u32 {
    let cap = max_deg.min(budget_left).max(1);
    rng.gen_range(1..=cap)
}

fn random_tree_assignment(t: &Tree, opts: &InstanceOptions, rng: &mut ChaCha8Rng) -> Assignment {
    // degree budget flows from the root down
    let node_ids = t.node_ids();
    let mut budget: BTreeMap<usize, u32> = BTreeMap::new();
    budget.insert(t.root(), opts.path_degree_budget);
    let mut by_node = BTreeMap::new();
    for (pos, &v) in node_ids.iter().enumerate() {
        let b = budget[&v];
        let deg = node_degree_for(b, opts.max_deg, rng);
        for &c in t.children(v) {
            budget.insert(c, (b / deg).max(1));
        }
        let arity = t.children(v).len();
        let fun = match opts.regime {
            InstanceRegime::Free => NodeFun::Free(rand_poly(
                rng,
                arity,
                deg,
                opts.allow_degenerate,
            )),
            InstanceRegime::Activation => NodeFun::Act {
                weights: (0..arity)
                    .map(|_| {
                        if opts.allow_degenerate {
                            rand_rat(rng)
                        } else {
                            rand_nonzero_rat(rng)
                        }
                    })
                    .collect(),
                bias: rand_rat(rng),
                activation: rand_poly(rng, 1, deg, opts.allow_degenerate),
            },
        };
        by_node.insert(tree_node_label(pos), fun);
    }
    Assignment { by_node }
}

fn random_network_assignment(
    net: &Network,
    opts: &InstanceOptions,
    rng: &mut ChaCha8Rng,
) -> Assignment {
    let total = net.n_inputs + net.neuron_count();
    let mut by_node = BTreeMap::new();
    // crude per-layer budget: divide the path budget by the layer count
    let layer_count = net.layers.len().max(1) as u32;
    let per_layer = per_layer_degree(opts.path_degree_budget, layer_count, opts.max_deg);
    let mut layer_idx = 0usize;
    let mut remaining_in_layer = net.layers[0].len();
    for id in net.n_inputs..total {
        if remaining_in_layer == 0 {
            layer_idx += 1;
            remaining_in_layer = net.layers[layer_idx].len();
        }
        remaining_in_layer -= 1;
        let arity = net.neuron_inputs(id).len();
        let deg_cap = per_layer.max(1);
        let deg = rng.gen_range(1..=deg_cap);
        let fun = match opts.regime {
            InstanceRegime::Free => {
                NodeFun::Free(rand_poly(rng, arity, deg, opts.allow_degenerate))
            }
            InstanceRegime::Activation => NodeFun::Act {
                weights: (0..arity)
                    .map(|_| {
                        if opts.allow_degenerate {
                            rand_rat(rng)
                        } else {
                            rand_nonzero_rat(rng)
                        }
                    })
                    .collect(),
                bias: rand_rat(rng),
                activation: rand_poly(rng, 1, deg, opts.allow_degenerate),
            },
        };
        by_node.insert(network_node_label(id), fun);
    }
    Assignment { by_node }
}

fn per_layer_degree(budget: u32, layers: u32, max_deg: u32) -> u32 {
    let mut d = max_deg;
    while d > 1 && d.checked_pow(layers).map_or(true, |p| p > budget) {
        d -= 1;
    }
    d
}

// ---------------------------------------------------------------------------
// assignment JSON
// ---------------------------------------------------------------------------

/// Parse `{"n0": {"poly": "x1*x2"}, "n1": {"w": ["1", "2"], "bias": "0",
/// "act": "x^2"}}`; weights may be JSON numbers or rational strings.
pub fn parse_assignment(doc: &str) -> Result<Assignment, OracleError> {
    let v: Value =
        serde_json::from_str(doc).map_err(|e| OracleError::Parse(format!("invalid JSON: {e}")))?;
    let obj = v
        .as_object()
        .ok_or_else(|| OracleError::Parse("assignment must be an object".into()))?;
    let mut by_node = BTreeMap::new();
    for (key, spec) in obj {
        let spec_obj = spec
            .as_object()
            .ok_or_else(|| OracleError::Parse(format!("node `{key}` must map to an object")))?;
        let fun = if let Some(p) = spec_obj.get("poly") {
            let text = p
                .as_str()
                .ok_or_else(|| OracleError::Parse("`poly` must be a string".into()))?;
            let nvars = max_var_in(text)?;
            NodeFun::Free(
                crate::expr::parse_poly(text, nvars)
                    .map_err(|e| OracleError::Parse(format!("node `{key}`: {e}")))?,
            )
        } else if let Some(w) = spec_obj.get("w") {
            let arr = w
                .as_array()
                .ok_or_else(|| OracleError::Parse("`w` must be an array".into()))?;
            let mut weights = Vec::with_capacity(arr.len());
            for x in arr {
                weights.push(parse_rat_value(x)?);
            }
            let bias = match spec_obj.get("bias") {
                Some(b) => parse_rat_value(b)?,
                None => Rat::from_integer(0.into()),
            };
            let act_text = spec_obj
                .get("act")
                .and_then(Value::as_str)
                .ok_or_else(|| OracleError::Parse("`act` must be an expression string".into()))?;
            NodeFun::Act {
                weights,
                bias,
                activation: crate::expr::parse_poly(act_text, 1)
                    .map_err(|e| OracleError::Parse(format!("node `{key}` activation: {e}")))?,
            }
        } else {
            return Err(OracleError::Parse(format!(
                "node `{key}` needs either `poly` or `w`/`act`"
            )));
        };
        by_node.insert(key.clone(), fun);
    }
    Ok(Assignment { by_node })
}

fn max_var_in(text: &str) -> Result<usize, OracleError> {
    match crate::expr::parse_expr(text, usize::MAX, crate::expr::ParseMode::Numeric) {
        Ok(crate::expr::ParsedExpr::Smooth(e)) => Ok(e.max_var().map_or(1, |m| m + 1)),
        Ok(_) => unreachable!(),
        Err(e) => Err(OracleError::Parse(e.to_string())),
    }
}

fn parse_rat_value(v: &Value) -> Result<Rat, OracleError> {
    if let Some(i) = v.as_i64() {
        return Ok(Rat::from_integer(i.into()));
    }
    if let Some(s) = v.as_str() {
        if let Some((n, d)) = s.split_once('/') {
            let n: i64 = n
                .trim()
                .parse()
                .map_err(|_| OracleError::Parse(format!("bad rational `{s}`")))?;
            let d: i64 = d
                .trim()
                .parse()
                .map_err(|_| OracleError::Parse(format!("bad rational `{s}`")))?;
            if d == 0 {
                return Err(OracleError::Parse("zero denominator".into()));
            }
            return Ok(Rat::new(n.into(), d.into()));
        }
        let n: i64 = s
            .trim()
            .parse()
            .map_err(|_| OracleError::Parse(format!("bad rational `{s}`")))?;
        return Ok(Rat::from_integer(n.into()));
    }
    Err(OracleError::Parse("weights must be integers or strings".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{parse_arch, tenn};
    use crate::expr::parse_poly;

    fn gfz() -> Arch {
        parse_arch(
            r#"{"type":"tree","node":{"children":[{"children":[{"var":"x"},{"var":"y"}]},{"var":"z"}]}}"#,
        )
        .unwrap()
    }

    #[test]
    fn compose_tree_example() {
        // g(u, v) = u*v + u with f = x + y^2
        let mut asg = Assignment::default();
        asg.by_node.insert(
            "n0".into(),
            NodeFun::Free(parse_poly("x1*x2 + x1", 2).unwrap()),
        );
        asg.by_node.insert(
            "n1".into(),
            NodeFun::Free(parse_poly("x1 + x2^2", 2).unwrap()),
        );
        let f = compose_arch(&gfz(), &asg).unwrap();
        assert_eq!(f, parse_poly("(x + y^2)*z + x + y^2", 3).unwrap());
    }

    #[test]
    fn compose_activation_example() {
        // s(t(x + 2y) + 3z + 4w) with t(u) = u^2, s(u) = u + u^2
        let arch = parse_arch(
            r#"{"type":"tree","node":{"children":[{"children":[{"var":"x"},{"var":"y"}]},{"var":"z"},{"var":"w"}]}}"#,
        )
        .unwrap();
        let mut asg = Assignment::default();
        asg.by_node.insert(
            "n0".into(),
            NodeFun::Act {
                weights: vec![
                    Rat::from_integer(1.into()),
                    Rat::from_integer(3.into()),
                    Rat::from_integer(4.into()),
                ],
                bias: Rat::from_integer(0.into()),
                activation: parse_poly("x + x^2", 1).unwrap(),
            },
        );
        asg.by_node.insert(
            "n1".into(),
            NodeFun::Act {
                weights: vec![Rat::from_integer(1.into()), Rat::from_integer(2.into())],
                bias: Rat::from_integer(0.into()),
                activation: parse_poly("x^2", 1).unwrap(),
            },
        );
        let f = compose_arch(&arch, &asg).unwrap();
        // leading term is (x + 2y)^4
        assert_eq!(f.total_degree(), 4);
        let expect = parse_poly(
            "((x + 2*y)^2 + 3*z + 4*w) + ((x + 2*y)^2 + 3*z + 4*w)^2",
            4,
        )
        .unwrap();
        assert_eq!(f, expect);
    }

    #[test]
    fn network_and_expanded_tree_agree() {
        let net = match parse_arch(
            r#"{"type":"network","inputs":["x","y","z"],"layers":[[{"in":[0,1]},{"in":[0,2]}],[{"in":[3,4]}]]}"#,
        )
        .unwrap()
        {
            Arch::Network(n) => n,
            _ => unreachable!(),
        };
        let mut asg = Assignment::default();
        asg.by_node
            .insert("3".into(), NodeFun::Free(parse_poly("x1*x2", 2).unwrap()));
        asg.by_node
            .insert("4".into(), NodeFun::Free(parse_poly("x1 + x2", 2).unwrap()));
        asg.by_node
            .insert("5".into(), NodeFun::Free(parse_poly("x1 + x2", 2).unwrap()));
        let f = compose_network(&net, &asg).unwrap();
        assert_eq!(f, parse_poly("x*y + x + z", 3).unwrap());
        let (tree, lifted) = lift_assignment_to_tenn(&net, &asg);
        let g = compose_tree(&tree, &lifted).unwrap();
        assert_eq!(f, g);
        assert_eq!(tree.leaf_count() as u64, net.path_count());
        let _ = tenn(&net);
    }

    #[test]
    fn random_instances_are_deterministic() {
        let arch = gfz();
        let opts = InstanceOptions::new(2, InstanceRegime::Free);
        let (a1, f1) = random_instance(&arch, &opts, 42).unwrap();
        let (a2, f2) = random_instance(&arch, &opts, 42).unwrap();
        assert_eq!(f1, f2);
        assert_eq!(a1, a2);
        let (_, f3) = random_instance(&arch, &opts, 43).unwrap();
        assert!(f1 != f3 || f1.is_zero());
    }

    #[test]
    fn assignment_json_parses() {
        let asg = parse_assignment(
            r#"{"n0": {"poly": "x1*x2 + x1"}, "n1": {"w": [1, "2"], "bias": "1/2", "act": "x^2"}}"#,
        )
        .unwrap();
        assert_eq!(asg.by_node.len(), 2);
        match &asg.by_node["n1"] {
            NodeFun::Act { weights, bias, .. } => {
                assert_eq!(weights[1], Rat::from_integer(2.into()));
                assert_eq!(*bias, Rat::new(1.into(), 2.into()));
            }
            _ => panic!("expected activation node"),
        }
    }
}
