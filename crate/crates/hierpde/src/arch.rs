//! Architecture model: rooted trees with labeled leaves and layered
//! feedforward networks, plus the structural queries that drive constraint
//! generation (separating sub-trees, sibling groups, sub-tree pairs below a
//! node, tree expansion of a network).

use crate::expr::parse_var_name;
use serde_json::{json, Value};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArchError {
    #[error("architecture schema violation: {0}")]
    Schema(String),
    #[error("network has {0} output neurons, expected exactly one")]
    MultipleOutputs(usize),
    #[error("edge from {from} into neuron {to} does not respect evaluation order")]
    ForwardReference { from: usize, to: usize },
    #[error("this query requires distinct leaf labels (variable x{0} repeats)")]
    RepeatedLabels(usize),
    #[error("unknown variable name `{0}`")]
    BadVariable(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Vertex {
    /// Internal node; children are vertex ids.
    Node { children: Vec<usize> },
    /// Leaf carrying a 0-based variable index.
    Leaf { var: usize },
}

/// Rooted tree. Vertex 0 is the root; children keep their JSON order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub vertices: Vec<Vertex>,
    pub nvars: usize,
}

/// Layered feedforward network. Ids `0..n_inputs` are the inputs; neurons
/// are numbered consecutively layer by layer. Each neuron consumes earlier
/// ids only, which makes the graph acyclic by construction; skip edges are
/// simply references to ids from non-adjacent layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub n_inputs: usize,
    pub nvars: usize,
    /// Variable index per input id.
    pub input_vars: Vec<usize>,
    /// Layered neuron in-lists; neuron id = n_inputs + position.
    pub layers: Vec<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Arch {
    Tree(Tree),
    Network(Network),
}

/// A leaf triple `(i, j, k)` of 1-based variable indices attached to a
/// constraint on the ratio of first partials in `i` and `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Triple {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

/// Leaf quadruple `(i, i', j, j')` with `i, i'` in one sub-tree and `j, j'`
/// in a sibling sub-tree below the witnessing node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct QuadSite {
    pub i: usize,
    pub i2: usize,
    pub j: usize,
    pub j2: usize,
    /// Vertex id of the node the two sub-trees emanate from.
    pub node: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Smooth,
    Activation,
}

impl std::str::FromStr for Regime {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "smooth" => Ok(Regime::Smooth),
            "activation" => Ok(Regime::Activation),
            other => Err(format!("unknown regime `{other}`")),
        }
    }
}

impl Tree {
    pub fn root(&self) -> usize {
        0
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        matches!(self.vertices[v], Vertex::Leaf { .. })
    }

    pub fn children(&self, v: usize) -> &[usize] {
        match &self.vertices[v] {
            Vertex::Node { children } => children,
            Vertex::Leaf { .. } => &[],
        }
    }

    /// Internal node ids in depth-first preorder (root first).
    pub fn node_ids(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.walk_preorder(0, &mut |v| {
            if !self.is_leaf(v) {
                out.push(v);
            }
        });
        out
    }

    /// Leaf ids in depth-first order.
    pub fn leaf_ids(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.walk_preorder(0, &mut |v| {
            if self.is_leaf(v) {
                out.push(v);
            }
        });
        out
    }

    fn walk_preorder(&self, v: usize, f: &mut impl FnMut(usize)) {
        f(v);
        for &c in self.children(v) {
            self.walk_preorder(c, f);
        }
    }

    /// Variable indices (0-based) of the leaves below `v`, in DFS order.
    pub fn leaf_vars_under(&self, v: usize) -> Vec<usize> {
        let mut out = Vec::new();
        self.walk_preorder_from(v, &mut |u| {
            if let Vertex::Leaf { var } = self.vertices[u] {
                out.push(var);
            }
        });
        out
    }

    fn walk_preorder_from(&self, v: usize, f: &mut impl FnMut(usize)) {
        f(v);
        for &c in self.children(v) {
            self.walk_preorder_from(c, f);
        }
    }

    /// Leaf label multiset in DFS order.
    pub fn leaf_vars(&self) -> Vec<usize> {
        self.leaf_vars_under(0)
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_vars().len()
    }

    /// Errors unless every leaf label occurs exactly once.
    pub fn require_distinct_labels(&self) -> Result<(), ArchError> {
        let mut seen = BTreeSet::new();
        for v in self.leaf_vars() {
            if !seen.insert(v) {
                return Err(ArchError::RepeatedLabels(v + 1));
            }
        }
        Ok(())
    }

    /// Leaf-variable sets of every proper rooted full sub-tree with at least
    /// two vertices (single leaves are not sub-trees), as 0-based sets.
    pub fn proper_subtree_leafsets(&self) -> Vec<BTreeSet<usize>> {
        let mut out = Vec::new();
        for v in self.node_ids() {
            if v == self.root() {
                continue;
            }
            out.push(self.leaf_vars_under(v).into_iter().collect());
        }
        out
    }

    /// Triples `(i, j, k)`, `i < j`, such that some rooted full sub-tree
    /// contains the leaves `i` and `j` while missing `k`. Requires distinct
    /// labels. Indices are 1-based.
    pub fn outsider_triples(&self) -> Result<Vec<Triple>, ArchError> {
        self.require_distinct_labels()?;
        let vars: Vec<usize> = {
            let mut v = self.leaf_vars();
            v.sort_unstable();
            v
        };
        let subtrees = self.proper_subtree_leafsets();
        let mut out = BTreeSet::new();
        for &i in &vars {
            for &j in &vars {
                if i >= j {
                    continue;
                }
                for &k in &vars {
                    if k == i || k == j {
                        continue;
                    }
                    if subtrees
                        .iter()
                        .any(|s| s.contains(&i) && s.contains(&j) && !s.contains(&k))
                    {
                        out.insert(Triple {
                            i: i + 1,
                            j: j + 1,
                            k: k + 1,
                        });
                    }
                }
            }
        }
        Ok(out.into_iter().collect())
    }

    /// Triples `(i, j, k)`, `i < j`, `k` arbitrary (possibly `i` or `j`),
    /// such that no rooted full sub-tree contains the leaf `k` together with
    /// exactly one of `i`, `j`. These are the sites where the ratio of first
    /// partials in `i` and `j` cannot depend on `k` for linear-in,
    /// activation-out node functions. 1-based indices.
    pub fn activation_triples(&self) -> Result<Vec<Triple>, ArchError> {
        self.require_distinct_labels()?;
        let vars: Vec<usize> = {
            let mut v = self.leaf_vars();
            v.sort_unstable();
            v
        };
        let subtrees = self.proper_subtree_leafsets();
        let mut out = BTreeSet::new();
        for &i in &vars {
            for &j in &vars {
                if i >= j {
                    continue;
                }
                for &k in &vars {
                    let blocked = subtrees.iter().any(|s| {
                        s.contains(&k) && (s.contains(&i) ^ s.contains(&j))
                    });
                    if !blocked {
                        out.insert(Triple {
                            i: i + 1,
                            j: j + 1,
                            k: k + 1,
                        });
                    }
                }
            }
        }
        Ok(out.into_iter().collect())
    }

    /// All `(i, i', j, j')` with `i, i'` leaves of one sub-tree and `j, j'`
    /// leaves of a sibling sub-tree emanating from a common node; repeats
    /// inside a pair are allowed. Requires distinct labels. 1-based.
    pub fn quad_sites(&self) -> Result<Vec<QuadSite>, ArchError> {
        self.require_distinct_labels()?;
        let mut out = Vec::new();
        for v in self.node_ids() {
            let internal_children: Vec<usize> = self
                .children(v)
                .iter()
                .copied()
                .filter(|&c| !self.is_leaf(c))
                .collect();
            for (a_pos, &c1) in internal_children.iter().enumerate() {
                for &c2 in internal_children.iter().skip(a_pos + 1) {
                    let l1 = self.leaf_vars_under(c1);
                    let l2 = self.leaf_vars_under(c2);
                    for &i in &l1 {
                        for &i2 in &l1 {
                            for &j in &l2 {
                                for &j2 in &l2 {
                                    out.push(QuadSite {
                                        i: i + 1,
                                        i2: i2 + 1,
                                        j: j + 1,
                                        j2: j2 + 1,
                                        node: v,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Sibling groups: leaves sharing a parent, grouped per parent and with
    /// 0-based variable indices sorted inside a group.
    pub fn sibling_groups(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for v in self.node_ids() {
            let mut group: Vec<usize> = self
                .children(v)
                .iter()
                .filter_map(|&c| match self.vertices[c] {
                    Vertex::Leaf { var } => Some(var),
                    _ => None,
                })
                .collect();
            if !group.is_empty() {
                group.sort_unstable();
                out.push(group);
            }
        }
        out
    }
}

impl Network {
    pub fn neuron_count(&self) -> usize {
        self.layers.iter().map(|l| l.len()).sum()
    }

    pub fn connection_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.iter())
            .map(|ins| ins.len())
            .sum()
    }

    pub fn output_id(&self) -> usize {
        self.n_inputs + self.neuron_count() - 1
    }

    /// In-list of a neuron by global id.
    pub fn neuron_inputs(&self, id: usize) -> &[usize] {
        let mut idx = id - self.n_inputs;
        for layer in &self.layers {
            if idx < layer.len() {
                return &layer[idx];
            }
            idx -= layer.len();
        }
        unreachable!("neuron id out of range")
    }

    pub fn max_fan_in(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.iter())
            .map(|ins| ins.len())
            .max()
            .unwrap_or(0)
    }

    /// Number of distinct input-to-output paths.
    pub fn path_count(&self) -> u64 {
        let total = self.n_inputs + self.neuron_count();
        let mut paths = vec![0u64; total];
        for i in 0..self.n_inputs {
            paths[i] = 1;
        }
        for id in self.n_inputs..total {
            paths[id] = self.neuron_inputs(id).iter().map(|&p| paths[p]).sum();
        }
        paths[self.output_id()]
    }
}

/// Expansion of a network into a tree: every neuron is copied once per path
/// from it to the output, so shared sub-computations are fully duplicated and
/// each input becomes one leaf per input-to-output path.
///
/// Returns the tree along with, per tree vertex, the originating network id
/// (neuron id for nodes, input id for leaves).
pub fn tenn_with_sources(net: &Network) -> (Tree, Vec<usize>) {
    let mut vertices = Vec::new();
    let mut sources = Vec::new();
    expand(net, net.output_id(), &mut vertices, &mut sources);
    (
        Tree {
            vertices,
            nvars: net.nvars,
        },
        sources,
    )
}

fn expand(net: &Network, id: usize, vertices: &mut Vec<Vertex>, sources: &mut Vec<usize>) -> usize {
    let my = vertices.len();
    if id < net.n_inputs {
        vertices.push(Vertex::Leaf {
            var: net.input_vars[id],
        });
        sources.push(id);
        return my;
    }
    vertices.push(Vertex::Node { children: vec![] });
    sources.push(id);
    let ins: Vec<usize> = net.neuron_inputs(id).to_vec();
    let mut children = Vec::with_capacity(ins.len());
    for p in ins {
        children.push(expand(net, p, vertices, sources));
    }
    if let Vertex::Node { children: c } = &mut vertices[my] {
        *c = children;
    }
    my
}

pub fn tenn(net: &Network) -> Tree {
    tenn_with_sources(net).0
}

// ---------------------------------------------------------------------------
// JSON parsing / serialization
// ---------------------------------------------------------------------------

/// Parse an architecture document:
///
/// ```json
/// {"type":"tree","node":{"children":[{"var":"x1"},{"children":[...]}]}}
/// {"type":"network","inputs":["x1","x2"],"layers":[[{"in":[0,1]}],[{"in":[2]}]]}
/// ```
pub fn parse_arch(doc: &str) -> Result<Arch, ArchError> {
    let v: Value =
        serde_json::from_str(doc).map_err(|e| ArchError::Schema(format!("invalid JSON: {e}")))?;
    let obj = v
        .as_object()
        .ok_or_else(|| ArchError::Schema("top level must be an object".into()))?;
    match obj.get("type").and_then(Value::as_str) {
        Some("tree") => {
            let node = obj
                .get("node")
                .ok_or_else(|| ArchError::Schema("tree document needs a `node` field".into()))?;
            for key in obj.keys() {
                if key != "type" && key != "node" {
                    return Err(ArchError::Schema(format!("unexpected field `{key}`")));
                }
            }
            let mut vertices = Vec::new();
            let root = parse_tree_vertex(node, &mut vertices)?;
            if root != 0 {
                return Err(ArchError::Schema("malformed tree nesting".into()));
            }
            if matches!(vertices[0], Vertex::Leaf { .. }) {
                return Err(ArchError::Schema(
                    "the root must be a node with children".into(),
                ));
            }
            let nvars = vertices
                .iter()
                .filter_map(|v| match v {
                    Vertex::Leaf { var } => Some(*var + 1),
                    _ => None,
                })
                .max()
                .ok_or_else(|| ArchError::Schema("tree has no leaves".into()))?;
            Ok(Arch::Tree(Tree { vertices, nvars }))
        }
        Some("network") => {
            let inputs = obj
                .get("inputs")
                .and_then(Value::as_array)
                .ok_or_else(|| ArchError::Schema("network needs an `inputs` array".into()))?;
            let mut input_vars = Vec::with_capacity(inputs.len());
            for i in inputs {
                let name = i
                    .as_str()
                    .ok_or_else(|| ArchError::Schema("inputs must be variable names".into()))?;
                let var = parse_var_name(name).ok_or_else(|| ArchError::BadVariable(name.into()))?;
                input_vars.push(var);
            }
            if input_vars.is_empty() {
                return Err(ArchError::Schema("network needs at least one input".into()));
            }
            let layers_v = obj
                .get("layers")
                .and_then(Value::as_array)
                .ok_or_else(|| ArchError::Schema("network needs a `layers` array".into()))?;
            let n_inputs = input_vars.len();
            let mut layers: Vec<Vec<Vec<usize>>> = Vec::new();
            let mut next_id = n_inputs;
            for layer_v in layers_v {
                let arr = layer_v
                    .as_array()
                    .ok_or_else(|| ArchError::Schema("each layer must be an array".into()))?;
                if arr.is_empty() {
                    return Err(ArchError::Schema("layers must be non-empty".into()));
                }
                let first_id_of_layer = next_id;
                let mut layer = Vec::with_capacity(arr.len());
                for neuron_v in arr {
                    let ins_v = neuron_v
                        .get("in")
                        .and_then(Value::as_array)
                        .ok_or_else(|| ArchError::Schema("neuron needs an `in` array".into()))?;
                    let mut ins = Vec::with_capacity(ins_v.len());
                    for x in ins_v {
                        let id = x
                            .as_u64()
                            .ok_or_else(|| ArchError::Schema("`in` entries must be ids".into()))?
                            as usize;
                        if id >= first_id_of_layer {
                            return Err(ArchError::ForwardReference {
                                from: id,
                                to: next_id,
                            });
                        }
                        ins.push(id);
                    }
                    if ins.is_empty() {
                        return Err(ArchError::Schema("neuron with empty `in` list".into()));
                    }
                    layer.push(ins);
                    next_id += 1;
                }
                layers.push(layer);
            }
            if layers.is_empty() {
                return Err(ArchError::Schema("network needs at least one layer".into()));
            }
            let outputs = layers.last().unwrap().len();
            if outputs != 1 {
                return Err(ArchError::MultipleOutputs(outputs));
            }
            let nvars = input_vars.iter().map(|v| v + 1).max().unwrap();
            Ok(Arch::Network(Network {
                n_inputs,
                nvars,
                input_vars,
                layers,
            }))
        }
        other => Err(ArchError::Schema(format!(
            "`type` must be \"tree\" or \"network\", found {other:?}"
        ))),
    }
}

fn parse_tree_vertex(v: &Value, vertices: &mut Vec<Vertex>) -> Result<usize, ArchError> {
    let obj = v
        .as_object()
        .ok_or_else(|| ArchError::Schema("tree vertices must be objects".into()))?;
    if let Some(var_v) = obj.get("var") {
        if obj.len() != 1 {
            return Err(ArchError::Schema(
                "a leaf must have exactly the `var` field".into(),
            ));
        }
        let name = var_v
            .as_str()
            .ok_or_else(|| ArchError::Schema("`var` must be a string".into()))?;
        let var = parse_var_name(name).ok_or_else(|| ArchError::BadVariable(name.into()))?;
        let my = vertices.len();
        vertices.push(Vertex::Leaf { var });
        return Ok(my);
    }
    let children_v = obj
        .get("children")
        .and_then(Value::as_array)
        .ok_or_else(|| ArchError::Schema("a node needs a `children` array".into()))?;
    if obj.len() != 1 {
        return Err(ArchError::Schema(
            "a node must have exactly the `children` field".into(),
        ));
    }
    if children_v.is_empty() {
        return Err(ArchError::Schema("a node needs at least one child".into()));
    }
    let my = vertices.len();
    vertices.push(Vertex::Node { children: vec![] });
    let mut children = Vec::with_capacity(children_v.len());
    for c in children_v {
        children.push(parse_tree_vertex(c, vertices)?);
    }
    if let Vertex::Node { children: slot } = &mut vertices[my] {
        *slot = children;
    }
    Ok(my)
}

pub fn tree_to_json(t: &Tree) -> Value {
    json!({"type": "tree", "node": vertex_to_json(t, 0)})
}

fn vertex_to_json(t: &Tree, v: usize) -> Value {
    match &t.vertices[v] {
        Vertex::Leaf { var } => json!({"var": format!("x{}", var + 1)}),
        Vertex::Node { children } => json!({
            "children": children.iter().map(|&c| vertex_to_json(t, c)).collect::<Vec<_>>()
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tree_gfz() -> Tree {
        // g(f(x, y), z)
        match parse_arch(
            r#"{"type":"tree","node":{"children":[{"children":[{"var":"x"},{"var":"y"}]},{"var":"z"}]}}"#,
        )
        .unwrap()
        {
            Arch::Tree(t) => t,
            _ => unreachable!(),
        }
    }

    fn tree_caterpillar4() -> Tree {
        // g(f(x, y), z, w)
        match parse_arch(
            r#"{"type":"tree","node":{"children":[{"children":[{"var":"x"},{"var":"y"}]},{"var":"z"},{"var":"w"}]}}"#,
        )
        .unwrap()
        {
            Arch::Tree(t) => t,
            _ => unreachable!(),
        }
    }

    fn tree_two_pairs() -> Tree {
        // s(t1(x, y), t2(z, w))
        match parse_arch(
            r#"{"type":"tree","node":{"children":[{"children":[{"var":"x"},{"var":"y"}]},{"children":[{"var":"z"},{"var":"w"}]}]}}"#,
        )
        .unwrap()
        {
            Arch::Tree(t) => t,
            _ => unreachable!(),
        }
    }

    fn star4() -> Tree {
        match parse_arch(
            r#"{"type":"tree","node":{"children":[{"var":"x1"},{"var":"x2"},{"var":"x3"},{"var":"x4"}]}}"#,
        )
        .unwrap()
        {
            Arch::Tree(t) => t,
            _ => unreachable!(),
        }
    }

    #[test]
    fn parse_tree_shapes() {
        let t = tree_gfz();
        assert_eq!(t.node_ids().len(), 2);
        assert_eq!(t.leaf_count(), 3);
        // repeated label x
        let r = parse_arch(
            r#"{"type":"tree","node":{"children":[{"children":[{"var":"x"},{"var":"y"}]},{"children":[{"var":"x"},{"var":"z"}]}]}}"#,
        )
        .unwrap();
        match r {
            Arch::Tree(t) => {
                assert_eq!(t.node_ids().len(), 3);
                assert_eq!(t.leaf_count(), 4);
                assert!(t.require_distinct_labels().is_err());
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn schema_violations_are_rejected() {
        assert!(parse_arch(r#"{"type":"tree","node":{"var":"x"}}"#).is_err());
        assert!(parse_arch(r#"{"type":"tree","node":{"children":[]},"extra":1}"#).is_err());
        // two neurons in the last layer
        let err = parse_arch(
            r#"{"type":"network","inputs":["x","y"],"layers":[[{"in":[0,1]},{"in":[0,1]}]]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, ArchError::MultipleOutputs(2)));
    }

    #[test]
    fn outsider_triples_examples() {
        assert_eq!(
            tree_gfz().outsider_triples().unwrap(),
            vec![Triple { i: 1, j: 2, k: 3 }]
        );
        assert_eq!(
            tree_caterpillar4().outsider_triples().unwrap(),
            vec![Triple { i: 1, j: 2, k: 3 }, Triple { i: 1, j: 2, k: 4 }]
        );
        assert!(star4().outsider_triples().unwrap().is_empty());
    }

    #[test]
    fn activation_triples_examples() {
        // two-leaf tree: ratio constant in both variables
        let t2 = match parse_arch(
            r#"{"type":"tree","node":{"children":[{"var":"x"},{"var":"y"}]}}"#,
        )
        .unwrap()
        {
            Arch::Tree(t) => t,
            _ => unreachable!(),
        };
        assert_eq!(
            t2.activation_triples().unwrap(),
            vec![Triple { i: 1, j: 2, k: 1 }, Triple { i: 1, j: 2, k: 2 }]
        );
        // containment of the separating-sub-tree triples
        let t = tree_gfz();
        let outsiders: BTreeSet<_> = t.outsider_triples().unwrap().into_iter().collect();
        let activation: BTreeSet<_> = t.activation_triples().unwrap().into_iter().collect();
        assert!(outsiders.is_subset(&activation));
    }

    #[test]
    fn caterpillar_activation_triples_match_hand_enumeration() {
        // children of the root: the (x, y) node plus leaves z, w
        let t = tree_caterpillar4();
        let got: BTreeSet<_> = t.activation_triples().unwrap().into_iter().collect();
        let mut expect = BTreeSet::new();
        for k in 1..=4 {
            expect.insert(Triple { i: 1, j: 2, k });
            expect.insert(Triple { i: 3, j: 4, k });
        }
        for (i, j) in [(1, 3), (1, 4), (2, 3), (2, 4)] {
            for k in [3, 4] {
                expect.insert(Triple { i, j, k });
            }
        }
        assert_eq!(got, expect);
    }

    #[test]
    fn quad_sites_examples() {
        // two sibling pair sub-trees: full 16 ordered sites from the root
        let t = tree_two_pairs();
        let sites = t.quad_sites().unwrap();
        assert_eq!(sites.len(), 16);
        assert!(sites
            .iter()
            .any(|s| (s.i, s.i2, s.j, s.j2) == (1, 1, 3, 3)));
        assert!(sites
            .iter()
            .any(|s| (s.i, s.i2, s.j, s.j2) == (1, 2, 3, 4)));
        // caterpillar: only one internal child below the root
        assert!(tree_caterpillar4().quad_sites().unwrap().is_empty());
        assert!(star4().quad_sites().unwrap().is_empty());
    }

    #[test]
    fn sibling_groups_examples() {
        let t = tree_caterpillar4();
        let groups = t.sibling_groups();
        // root contributes {z, w}, the inner node {x, y}
        assert!(groups.contains(&vec![2, 3]));
        assert!(groups.contains(&vec![0, 1]));
        let s = star4();
        assert_eq!(s.sibling_groups(), vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn network_parse_and_tenn() {
        // inputs x,y,z; f(x,y), h(x,z); g(f,h)
        let net = match parse_arch(
            r#"{"type":"network","inputs":["x","y","z"],"layers":[[{"in":[0,1]},{"in":[0,2]}],[{"in":[3,4]}]]}"#,
        )
        .unwrap()
        {
            Arch::Network(n) => n,
            _ => unreachable!(),
        };
        assert_eq!(net.neuron_count(), 3);
        assert_eq!(net.connection_count(), 6);
        assert_eq!(net.path_count(), 4);
        let t = tenn(&net);
        let vars: Vec<usize> = t.leaf_vars().iter().map(|v| v + 1).collect();
        assert_eq!(vars, vec![1, 2, 1, 3]);

        // single neuron on (x, y)
        let tiny = match parse_arch(
            r#"{"type":"network","inputs":["x","y"],"layers":[[{"in":[0,1]}]]}"#,
        )
        .unwrap()
        {
            Arch::Network(n) => n,
            _ => unreachable!(),
        };
        let tt = tenn(&tiny);
        assert_eq!(tt.node_ids().len(), 1);
        assert_eq!(
            tt.leaf_vars().iter().map(|v| v + 1).collect::<Vec<_>>(),
            vec![1, 2]
        );

        // two hidden layers with shared first-layer neuron
        let resnet = match parse_arch(
            r#"{"type":"network","inputs":["x","y","z","w"],"layers":[[{"in":[0,1]}],[{"in":[4,2]},{"in":[4,3]}],[{"in":[5,6]}]]}"#,
        )
        .unwrap()
        {
            Arch::Network(n) => n,
            _ => unreachable!(),
        };
        let rt = tenn(&resnet);
        let vars: Vec<usize> = rt.leaf_vars().iter().map(|v| v + 1).collect();
        assert_eq!(vars, vec![1, 2, 3, 1, 2, 4]);
        assert_eq!(rt.leaf_count() as u64, resnet.path_count());
    }

    #[test]
    fn tree_json_roundtrip() {
        let t = tree_two_pairs();
        let j = tree_to_json(&t).to_string();
        match parse_arch(&j).unwrap() {
            Arch::Tree(t2) => assert_eq!(t, t2),
            _ => unreachable!(),
        }
    }
}
