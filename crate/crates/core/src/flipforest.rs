//! Flip forests and virtual weights.
//!
//! Each greedy flip of `(u, v)` joins the nodes of the removed edges
//! `(u, M(u))` and `(v, M(v))` under a new node for the created edge
//! `(M(u), M(v))`. Leaves are the edges of the starting minimum-cost
//! matching. Virtual weights follow
//!
//! ```text
//! wb(leaf) = w(leaf)
//! wb(x)    = wb(y) + wb(z) + min(wb(y), wb(z)) / alpha
//! ```
//!
//! and the lighter child of each inner node (smaller `wb`) defines the
//! light depth `lambda`. The same machinery runs on abstract full binary
//! trees with arbitrary non-negative leaf weights.

use std::collections::HashMap;
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::greedy::FlipTrace;
use crate::instances::{check_alpha, Edge};
use crate::matchings::cost;

pub type NodeId = usize;

/// Relative tolerance on identities and slack on inequalities.
pub const TREE_TOLERANCE: f64 = 1e-9;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TREE_TOLERANCE * a.abs().max(b.abs())
}

fn at_most(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + TREE_TOLERANCE * rhs.abs().max(lhs.abs())
}

/// Node links; children always have smaller ids than their parent.
#[derive(Clone, Debug, Default)]
struct Skeleton {
    children: Vec<Option<[NodeId; 2]>>,
    parent: Vec<Option<NodeId>>,
}

impl Skeleton {
    fn push(&mut self, children: Option<[NodeId; 2]>) -> NodeId {
        let id = self.children.len();
        self.children.push(children);
        self.parent.push(None);
        if let Some([a, b]) = children {
            self.parent[a] = Some(id);
            self.parent[b] = Some(id);
        }
        id
    }

    fn len(&self) -> usize {
        self.children.len()
    }

    fn roots(&self) -> Vec<NodeId> {
        (0..self.len()).filter(|&i| self.parent[i].is_none()).collect()
    }

    fn is_leaf(&self, id: NodeId) -> bool {
        self.children[id].is_none()
    }
}

/// Derived per-node quantities.
#[derive(Clone, Debug)]
struct Annotation {
    alpha: f64,
    virtual_weight: Vec<f64>,
    light_child: Vec<Option<NodeId>>,
    light_depth: Vec<u32>,
    depth: Vec<u32>,
    height: Vec<u32>,
}

/// `light_first(a, b)` decides the light child when `wb(a) == wb(b)`.
fn annotate(
    skeleton: &Skeleton,
    leaf_weight: impl Fn(NodeId) -> f64,
    alpha: f64,
    light_first: impl Fn(NodeId, NodeId) -> bool,
) -> Annotation {
    let n = skeleton.len();
    let mut wb = vec![0.0; n];
    let mut light_child = vec![None; n];
    let mut height = vec![0u32; n];
    for id in 0..n {
        match skeleton.children[id] {
            None => wb[id] = leaf_weight(id),
            Some([a, b]) => {
                let (light, heavy) = if wb[a] < wb[b] || (wb[a] == wb[b] && light_first(a, b)) { (a, b) } else { (b, a) };
                wb[id] = wb[heavy] + wb[light] + wb[light] / alpha;
                light_child[id] = Some(light);
                height[id] = 1 + height[a].max(height[b]);
            }
        }
    }
    let mut light_depth = vec![0u32; n];
    let mut depth = vec![0u32; n];
    for id in (0..n).rev() {
        if let Some([a, b]) = skeleton.children[id] {
            for c in [a, b] {
                depth[c] = depth[id] + 1;
                light_depth[c] = light_depth[id] + u32::from(light_child[id] == Some(c));
            }
        }
    }
    Annotation { alpha, virtual_weight: wb, light_child, light_depth, depth, height }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecompositionReport {
    pub passed: bool,
    /// Node whose `wb` differs from the light-depth weighted leaf sum.
    pub identity_violation: Option<(NodeId, f64, f64)>,
    /// Leaf with `wb(root) < (2 + 1/alpha)^lambda * wb(leaf)`.
    pub leaf_bound_violation: Option<(NodeId, f64, f64)>,
}

fn check_decomposition(skeleton: &Skeleton, ann: &Annotation) -> DecompositionReport {
    let n = skeleton.len();
    let growth = 1.0 + 1.0 / ann.alpha;
    let leaf_growth = 2.0 + 1.0 / ann.alpha;
    let mut sums = vec![0.0; n];
    let mut leaf_bound_violation = None;
    for leaf in (0..n).filter(|&i| skeleton.is_leaf(i)) {
        let w = ann.virtual_weight[leaf];
        let lam = ann.light_depth[leaf];
        let mut x = Some(leaf);
        let mut root = leaf;
        while let Some(id) = x {
            sums[id] += growth.powi((lam - ann.light_depth[id]) as i32) * w;
            root = id;
            x = skeleton.parent[id];
        }
        let needed = leaf_growth.powi(lam as i32) * w;
        if leaf_bound_violation.is_none() && !at_most(needed, ann.virtual_weight[root]) {
            leaf_bound_violation = Some((leaf, ann.virtual_weight[root], needed));
        }
    }
    let identity_violation =
        (0..n).find(|&i| !close(ann.virtual_weight[i], sums[i])).map(|i| (i, ann.virtual_weight[i], sums[i]));
    DecompositionReport {
        passed: identity_violation.is_none() && leaf_bound_violation.is_none(),
        identity_violation,
        leaf_bound_violation,
    }
}

fn leaves_under(skeleton: &Skeleton, root: NodeId) -> Vec<NodeId> {
    let mut out = Vec::new();
    let mut stack = vec![root];
    while let Some(id) = stack.pop() {
        match skeleton.children[id] {
            None => out.push(id),
            Some([a, b]) => {
                stack.push(b);
                stack.push(a);
            }
        }
    }
    out
}

fn effect_of(skeleton: &Skeleton, ann: &Annotation, root: NodeId) -> f64 {
    let leaf_sum: f64 = leaves_under(skeleton, root).iter().map(|&l| ann.virtual_weight[l]).sum();
    if leaf_sum > 0.0 {
        ann.virtual_weight[root] / leaf_sum
    } else {
        1.0
    }
}

/// A node of a flip forest, corresponding to an edge that was active at
/// some point of the run.
#[derive(Clone, Debug, PartialEq)]
pub struct FlipNode {
    pub id: NodeId,
    pub edge: Edge,
    pub real_weight: f64,
    pub virtual_weight: f64,
    pub light_depth: u32,
    pub depth: u32,
    pub height: u32,
    pub children: Option<[NodeId; 2]>,
    pub parent: Option<NodeId>,
    /// Index of the event that created this node; `None` for leaves.
    pub event: Option<usize>,
}

/// Nodes are keyed by (edge, creating event) so an edge that becomes
/// active twice gets two nodes.
#[derive(Clone, Debug)]
pub struct FlipForest {
    skeleton: Skeleton,
    edges: Vec<Edge>,
    real_weights: Vec<f64>,
    events: Vec<Option<usize>>,
    ann: Annotation,
}

impl FlipForest {
    /// Builds the forest of a trace and annotates it with the trace's alpha.
    pub fn build(trace: &FlipTrace) -> Result<Self> {
        let inst = &trace.instance;
        let mut skeleton = Skeleton::default();
        let mut edges = Vec::new();
        let mut events = Vec::new();
        let mut active: HashMap<Edge, NodeId> = HashMap::new();
        for &e in trace.initial.pairs() {
            let id = skeleton.push(None);
            edges.push(e);
            events.push(None);
            active.insert(e, id);
        }
        for (index, event) in trace.events.iter().enumerate() {
            let mut take = |e: Edge| {
                active.remove(&e).ok_or_else(|| Error::InconsistentTrace {
                    event: index,
                    reason: format!("removed edge {e:?} is not an active edge"),
                })
            };
            let a = take(event.removed[0])?;
            let b = take(event.removed[1])?;
            let id = skeleton.push(Some([a, b]));
            edges.push(event.created);
            events.push(Some(index));
            active.insert(event.created, id);
        }
        let real_weights = edges.iter().map(|&(u, v)| inst.weight(u, v)).collect();
        let mut forest = Self {
            ann: Annotation {
                alpha: trace.alpha,
                virtual_weight: Vec::new(),
                light_child: Vec::new(),
                light_depth: Vec::new(),
                depth: Vec::new(),
                height: Vec::new(),
            },
            skeleton,
            edges,
            real_weights,
            events,
        };
        forest.annotate(trace.alpha)?;
        Ok(forest)
    }

    /// Recomputes virtual weights and light depths for `alpha`. Ties go to
    /// the child with the smaller edge.
    pub fn annotate(&mut self, alpha: f64) -> Result<()> {
        check_alpha(alpha)?;
        let edges = &self.edges;
        let real = &self.real_weights;
        self.ann = annotate(&self.skeleton, |id| real[id], alpha, |a, b| edges[a] < edges[b]);
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        self.ann.alpha
    }

    pub fn len(&self) -> usize {
        self.skeleton.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skeleton.len() == 0
    }

    pub fn node(&self, id: NodeId) -> FlipNode {
        FlipNode {
            id,
            edge: self.edges[id],
            real_weight: self.real_weights[id],
            virtual_weight: self.ann.virtual_weight[id],
            light_depth: self.ann.light_depth[id],
            depth: self.ann.depth[id],
            height: self.ann.height[id],
            children: self.skeleton.children[id],
            parent: self.skeleton.parent[id],
            event: self.events[id],
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = FlipNode> + '_ {
        (0..self.len()).map(|id| self.node(id))
    }

    /// Roots in id order; untouched optimal edges are single-node trees.
    pub fn roots(&self) -> Vec<NodeId> {
        self.skeleton.roots()
    }

    pub fn leaves(&self) -> Vec<NodeId> {
        (0..self.len()).filter(|&i| self.skeleton.is_leaf(i)).collect()
    }

    pub fn light_child(&self, id: NodeId) -> Option<NodeId> {
        self.ann.light_child[id]
    }

    pub fn light_depths(&self) -> &[u32] {
        &self.ann.light_depth
    }

    pub fn virtual_weights(&self) -> &[f64] {
        &self.ann.virtual_weight
    }

    /// `w(e) <= wb(x)` at every node, up to the relative slack.
    pub fn check_weight_bound(&self) -> WeightBoundReport {
        let violation = (0..self.len())
            .find(|&i| !at_most(self.real_weights[i], self.ann.virtual_weight[i]))
            .map(|i| (i, self.real_weights[i], self.ann.virtual_weight[i]));
        WeightBoundReport { passed: violation.is_none(), violation }
    }

    pub fn check_decomposition_identities(&self) -> DecompositionReport {
        check_decomposition(&self.skeleton, &self.ann)
    }

    pub fn tree_effect(&self, root: NodeId) -> f64 {
        effect_of(&self.skeleton, &self.ann, root)
    }

    pub fn tree_leaves(&self, root: NodeId) -> Vec<NodeId> {
        leaves_under(&self.skeleton, root)
    }

    pub fn to_json(&self) -> String {
        let trees: Vec<Value> = self.roots().into_iter().map(|r| self.node_json(r)).collect();
        Value::Array(trees).to_string()
    }

    fn node_json(&self, id: NodeId) -> Value {
        let (u, v) = self.edges[id];
        let mut obj = json!({
            "edge": [u, v],
            "w": self.real_weights[id],
            "wb": self.ann.virtual_weight[id],
            "lambda": self.ann.light_depth[id],
        });
        if let Some([a, b]) = self.skeleton.children[id] {
            obj["children"] = json!([self.node_json(a), self.node_json(b)]);
        }
        obj
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightBoundReport {
    pub passed: bool,
    /// `(node, w(e), wb(x))` of the first node with `w(e) > wb(x)`.
    pub violation: Option<(NodeId, f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostBoundReport {
    pub c_greedy: f64,
    pub c_opt: f64,
    pub root_weight_sum: f64,
    /// `2 * sum wb(root) - c(M*)`.
    pub bound: f64,
    /// Total weight of the flipped edges.
    pub flipped_weight: f64,
    /// `sum over trees of (wb(root) - sum of leaf wb)`.
    pub telescoped: f64,
    pub cost_passed: bool,
    pub chain_passed: bool,
}

impl CostBoundReport {
    pub fn passed(&self) -> bool {
        self.cost_passed && self.chain_passed
    }
}

/// `c(M_G) <= 2 sum_T wb(r_T) - c(M*)` and the flipped-edge chain behind it.
pub fn forest_cost_bound(trace: &FlipTrace, forest: &FlipForest) -> Result<CostBoundReport> {
    let c_greedy = cost(&trace.final_matching, &trace.instance)?;
    let c_opt = cost(&trace.initial, &trace.instance)?;
    let roots = forest.roots();
    let root_weight_sum: f64 = roots.iter().map(|&r| forest.ann.virtual_weight[r]).sum();
    let telescoped: f64 = roots
        .iter()
        .map(|&r| {
            let leaves: f64 = forest.tree_leaves(r).iter().map(|&l| forest.ann.virtual_weight[l]).sum();
            forest.ann.virtual_weight[r] - leaves
        })
        .sum();
    let flipped_weight: f64 = trace.events.iter().map(|e| e.w_flipped).sum();
    let bound = 2.0 * root_weight_sum - c_opt;
    Ok(CostBoundReport {
        c_greedy,
        c_opt,
        root_weight_sum,
        bound,
        flipped_weight,
        telescoped,
        cost_passed: at_most(c_greedy, bound),
        chain_passed: at_most(flipped_weight, telescoped),
    })
}

/// A full binary tree shape. Leaves are numbered left to right.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Shape {
    Leaf,
    Node(Arc<Shape>, Arc<Shape>),
}

impl Shape {
    pub fn leaves(&self) -> usize {
        match self {
            Shape::Leaf => 1,
            Shape::Node(a, b) => a.leaves() + b.leaves(),
        }
    }

    /// Depth of every leaf, left to right.
    pub fn leaf_depths(&self) -> Vec<u32> {
        fn walk(s: &Shape, d: u32, out: &mut Vec<u32>) {
            match s {
                Shape::Leaf => out.push(d),
                Shape::Node(a, b) => {
                    walk(a, d + 1, out);
                    walk(b, d + 1, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(self, 0, &mut out);
        out
    }

    /// The complete shape with `n` leaves: a perfect tree of height
    /// `h - 1` whose leftmost `n - 2^(h-1)` leaves are split.
    pub fn complete(n: usize) -> Self {
        assert!(n >= 1);
        if n == 1 {
            return Shape::Leaf;
        }
        let h = ceil_log2(n);
        let slots = 1usize << (h - 1);
        let split = n - slots;
        fn build(lo: usize, hi: usize, split: usize) -> Arc<Shape> {
            if hi - lo == 1 {
                return Arc::new(if lo < split {
                    Shape::Node(Arc::new(Shape::Leaf), Arc::new(Shape::Leaf))
                } else {
                    Shape::Leaf
                });
            }
            let mid = (lo + hi) / 2;
            Arc::new(Shape::Node(build(lo, mid, split), build(mid, hi, split)))
        }
        Arc::try_unwrap(build(0, slots, split)).unwrap_or_else(|rc| (*rc).clone())
    }
}

/// All full binary tree shapes with `n` leaves (Catalan(n-1) of them), in
/// a fixed order: by left-subtree size, then recursively.
pub fn full_binary_shapes(n: usize) -> Vec<Arc<Shape>> {
    let mut memo: Vec<Vec<Arc<Shape>>> = vec![Vec::new(), vec![Arc::new(Shape::Leaf)]];
    for size in 2..=n {
        let mut all = Vec::new();
        for left in 1..size {
            for l in &memo[left] {
                for r in &memo[size - left] {
                    all.push(Arc::new(Shape::Node(Arc::clone(l), Arc::clone(r))));
                }
            }
        }
        memo.push(all);
    }
    if n == 0 {
        return Vec::new();
    }
    memo.swap_remove(n)
}

pub fn catalan(m: u64) -> u64 {
    (0..m).fold(1u64, |c, i| c * 2 * (2 * i + 1) / (i + 2))
}

fn ceil_log2(n: usize) -> u32 {
    usize::BITS - (n - 1).leading_zeros()
}

/// Full binary tree with non-negative leaf weights, detached from any
/// greedy run.
#[derive(Clone, Debug)]
pub struct AbstractTree {
    skeleton: Skeleton,
    leaf_weights: Vec<f64>,
    root: NodeId,
    ann: Annotation,
}

impl AbstractTree {
    /// `leaf_weights` are given left to right.
    pub fn from_shape(shape: &Shape, leaf_weights: &[f64], alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if shape.leaves() != leaf_weights.len() {
            return Err(Error::InvalidParameter(format!(
                "shape has {} leaves but {} weights were given",
                shape.leaves(),
                leaf_weights.len()
            )));
        }
        if let Some(w) = leaf_weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter(format!("leaf weight {w} is negative or not finite")));
        }
        fn build(s: &Shape, sk: &mut Skeleton, weights: &mut Vec<f64>, next: &mut impl Iterator<Item = f64>) -> NodeId {
            match s {
                Shape::Leaf => {
                    let id = sk.push(None);
                    weights.resize(id + 1, 0.0);
                    weights[id] = next.next().expect("leaf count checked");
                    id
                }
                Shape::Node(a, b) => {
                    let a = build(a, sk, weights, next);
                    let b = build(b, sk, weights, next);
                    let id = sk.push(Some([a, b]));
                    weights.resize(id + 1, 0.0);
                    id
                }
            }
        }
        let mut skeleton = Skeleton::default();
        let mut weights = Vec::new();
        let root = build(shape, &mut skeleton, &mut weights, &mut leaf_weights.iter().copied());
        let ann = annotate(&skeleton, |id| weights[id], alpha, |a, b| a < b);
        Ok(Self { skeleton, leaf_weights: weights, root, ann })
    }

    /// Complete tree with `n` leaves and weights `(2 + 1/alpha)^(-depth)`,
    /// so that siblings always carry equal virtual weight and the root has
    /// virtual weight 1.
    pub fn balanced_complete(n_leaves: usize, alpha: f64) -> Result<Self> {
        if n_leaves == 0 {
            return Err(Error::InvalidParameter("a tree needs at least one leaf".into()));
        }
        check_alpha(alpha)?;
        // same layout as Shape::complete, built straight into the arena
        let c = 2.0 + 1.0 / alpha;
        let mut skeleton = Skeleton::default();
        let mut weights = Vec::with_capacity(2 * n_leaves);
        let leaf = |sk: &mut Skeleton, weights: &mut Vec<f64>, depth: u32| {
            sk.push(None);
            weights.push(c.powi(-(depth as i32)));
        };
        let root = if n_leaves == 1 {
            leaf(&mut skeleton, &mut weights, 0);
            0
        } else {
            let h = ceil_log2(n_leaves);
            let slots = 1usize << (h - 1);
            let split = n_leaves - slots;
            let mut stack = vec![(0usize, slots, 0u32, false)];
            let mut done: Vec<NodeId> = Vec::new();
            // post-order walk over slot ranges
            while let Some((lo, hi, depth, expanded)) = stack.pop() {
                if hi - lo == 1 {
                    if lo < split {
                        leaf(&mut skeleton, &mut weights, depth + 1);
                        leaf(&mut skeleton, &mut weights, depth + 1);
                        let id = skeleton.len();
                        let id = skeleton.push(Some([id - 2, id - 1]));
                        weights.push(0.0);
                        done.push(id);
                    } else {
                        leaf(&mut skeleton, &mut weights, depth);
                        done.push(skeleton.len() - 1);
                    }
                } else if expanded {
                    let b = done.pop().expect("right subtree");
                    let a = done.pop().expect("left subtree");
                    done.push(skeleton.push(Some([a, b])));
                    weights.push(0.0);
                } else {
                    let mid = (lo + hi) / 2;
                    stack.push((lo, hi, depth, true));
                    stack.push((mid, hi, depth + 1, false));
                    stack.push((lo, mid, depth + 1, false));
                }
            }
            done.pop().expect("root")
        };
        let ann = annotate(&skeleton, |id| weights[id], alpha, |a, b| a < b);
        Ok(Self { skeleton, leaf_weights: weights, root, ann })
    }

    pub fn alpha(&self) -> f64 {
        self.ann.alpha
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.skeleton.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skeleton.len() == 0
    }

    pub fn children(&self, id: NodeId) -> Option<[NodeId; 2]> {
        self.skeleton.children[id]
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.skeleton.parent[id]
    }

    pub fn light_child(&self, id: NodeId) -> Option<NodeId> {
        self.ann.light_child[id]
    }

    /// Leaves left to right.
    pub fn leaves(&self) -> Vec<NodeId> {
        leaves_under(&self.skeleton, self.root)
    }

    pub fn virtual_weight(&self, id: NodeId) -> f64 {
        self.ann.virtual_weight[id]
    }

    pub fn light_depths(&self) -> &[u32] {
        &self.ann.light_depth
    }

    pub fn depth(&self, id: NodeId) -> u32 {
        self.ann.depth[id]
    }

    pub fn height(&self) -> u32 {
        self.ann.height[self.root]
    }

    pub fn leaf_weight(&self, id: NodeId) -> f64 {
        self.leaf_weights[id]
    }

    /// `wb(root) / sum of leaf weights`, or 1 when all leaves weigh 0.
    pub fn effect(&self) -> f64 {
        effect_of(&self.skeleton, &self.ann, self.root)
    }

    pub fn check_decomposition_identities(&self) -> DecompositionReport {
        check_decomposition(&self.skeleton, &self.ann)
    }

    pub fn to_json(&self) -> String {
        self.node_json(self.root).to_string()
    }

    fn node_json(&self, id: NodeId) -> Value {
        match self.skeleton.children[id] {
            None => json!({
                "leaf_weight": self.leaf_weights[id],
                "wb": self.ann.virtual_weight[id],
                "lambda": self.ann.light_depth[id],
            }),
            Some([a, b]) => json!({
                "wb": self.ann.virtual_weight[id],
                "lambda": self.ann.light_depth[id],
                "children": [self.node_json(a), self.node_json(b)],
            }),
        }
    }
}

/// Leaf weights `(2 + 1/alpha)^(-depth)`: makes any shape wb-balanced.
pub fn balanced_weights(shape: &Shape, alpha: f64) -> Vec<f64> {
    let c = 2.0 + 1.0 / alpha;
    shape.leaf_depths().into_iter().map(|d| c.powi(-(d as i32))).collect()
}

/// `(2 + 1/alpha)^h / (2^h + k/alpha)` with `h = ceil(log2 n)` and
/// `k = 2^h - n`.
pub fn closed_form_effect(n_leaves: usize, alpha: f64) -> f64 {
    assert!(n_leaves >= 1);
    let h = ceil_log2(n_leaves);
    let two_h = (1u64 << h) as f64;
    let k = two_h - n_leaves as f64;
    (2.0 + 1.0 / alpha).powi(h as i32) / (two_h + k / alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greedy::run_greedy;
    use crate::instances::{GapDistribution, MetricInstance};
    use crate::matchings::consecutive_matching;

    fn trace_of(inst: &MetricInstance, alpha: f64) -> FlipTrace {
        run_greedy(inst, &consecutive_matching(inst).unwrap(), alpha).unwrap().1
    }

    fn two_leaf(a: f64, b: f64, alpha: f64) -> AbstractTree {
        let s = Shape::Node(Arc::new(Shape::Leaf), Arc::new(Shape::Leaf));
        AbstractTree::from_shape(&s, &[a, b], alpha).unwrap()
    }

    #[test]
    fn zero_flip_forest_is_isolated_leaves() {
        let g = MetricInstance::gen_rt(3).unwrap();
        let trace = trace_of(&g, 1.0);
        let f = FlipForest::build(&trace).unwrap();
        assert_eq!(f.len(), 4);
        assert_eq!(f.roots(), vec![0, 1, 2, 3]);
        let cb = forest_cost_bound(&trace, &f).unwrap();
        assert_eq!(cb.c_greedy, cb.c_opt);
        assert_eq!(cb.bound, cb.c_opt);
        assert!(cb.passed());
    }

    #[test]
    fn one_flip_forest() {
        let g = MetricInstance::gen_rt_alpha(2, 1.0, 0.01).unwrap();
        let trace = trace_of(&g, 1.0);
        let f = FlipForest::build(&trace).unwrap();
        assert_eq!(f.roots(), vec![2]);
        let root = f.node(2);
        assert_eq!(root.edge, (0, 3));
        assert_eq!(root.children, Some([0, 1]));
        assert_eq!(f.node(0).edge, (0, 1));
        assert_eq!(f.node(1).edge, (2, 3));
        // 1 + 1 + min(1, 1)
        assert!((root.virtual_weight - 3.0).abs() < 1e-12);
        assert!((root.real_weight - 2.99).abs() < 1e-12);
        assert!(f.check_weight_bound().passed);
        let cb = forest_cost_bound(&trace, &f).unwrap();
        assert!((cb.c_greedy - 3.98).abs() < 1e-12);
        assert_eq!(cb.bound, 4.0);
        assert!(cb.passed());
        // w(2,3) = 2.99 - 1.99 rounds just above 1, so (0,1) is light
        assert_eq!(f.light_child(2), Some(0));
        assert_eq!(f.light_depths(), &[1, 0, 0]);
        assert_eq!(
            f.to_json(),
            r#"[{"edge":[0,3],"w":2.99,"wb":3.0,"lambda":0,"children":[{"edge":[0,1],"w":1.0,"wb":1.0,"lambda":1},{"edge":[2,3],"w":1.0000000000000002,"wb":1.0000000000000002,"lambda":0}]}]"#
        );
    }

    #[test]
    fn leaf_count_matches_optimum() {
        let g = MetricInstance::gen_rt_alpha(3, 1.0, 0.01).unwrap();
        let f = FlipForest::build(&trace_of(&g, 1.0)).unwrap();
        assert_eq!(f.leaves().len(), 4);
        assert_eq!(f.roots().len(), 1);
    }

    #[test]
    fn virtual_weight_arithmetic() {
        assert_eq!(two_leaf(1.0, 1.0, 1.0).virtual_weight(2), 3.0);
        assert_eq!(two_leaf(1.0, 2.0, 2.0).virtual_weight(2), 3.5);
        let leaf = AbstractTree::from_shape(&Shape::Leaf, &[5.0], 1.0).unwrap();
        assert_eq!(leaf.virtual_weight(0), 5.0);
        assert_eq!(leaf.effect(), 1.0);
        assert_eq!(two_leaf(1.0, 1.0, 1.0).effect(), 1.5);
        assert_eq!(two_leaf(0.0, 0.0, 1.0).effect(), 1.0);
        assert!(AbstractTree::from_shape(&Shape::Leaf, &[-1.0], 1.0).is_err());
        assert!(AbstractTree::from_shape(&Shape::Leaf, &[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn two_leaf_decomposition() {
        let t = two_leaf(1.0, 1.0, 1.0);
        // heavy leaf contributes 2^0 * 1, light leaf 2^1 * 1
        assert_eq!(t.light_depths(), &[1, 0, 0]);
        assert!(t.check_decomposition_identities().passed);
    }

    #[test]
    fn balanced_tree_light_depths() {
        let t = AbstractTree::balanced_complete(4, 1.0).unwrap();
        let lams: Vec<u32> = t.leaves().iter().map(|&l| t.light_depths()[l]).collect();
        // leftmost child is light at every tie
        assert_eq!(lams, vec![2, 1, 1, 0]);
        assert!(t.leaves().iter().all(|&l| t.depth(l) == 2));
        assert_eq!(t.light_depths()[t.root()], 0);
    }

    #[test]
    fn chain_tree_light_depths() {
        // ((((L, l), l), l), l) with heavy left spine and small right leaves
        let mut s = Shape::Leaf;
        for _ in 0..4 {
            s = Shape::Node(Arc::new(s), Arc::new(Shape::Leaf));
        }
        let t = AbstractTree::from_shape(&s, &[10.0, 1.0, 1.0, 1.0, 1.0], 1.0).unwrap();
        let lams: Vec<u32> = t.leaves().iter().map(|&l| t.light_depths()[l]).collect();
        assert_eq!(lams, vec![0, 1, 1, 1, 1]);
        assert!(t.check_decomposition_identities().passed);
    }

    #[test]
    fn balanced_complete_examples() {
        let t4 = AbstractTree::balanced_complete(4, 1.0).unwrap();
        for l in t4.leaves() {
            assert!((t4.leaf_weight(l) - 1.0 / 9.0).abs() < 1e-15);
        }
        assert!((t4.virtual_weight(t4.root()) - 1.0).abs() < 1e-15);
        let t3 = AbstractTree::balanced_complete(3, 1.0).unwrap();
        let depths: Vec<u32> = t3.leaves().iter().map(|&l| t3.depth(l)).collect();
        assert_eq!(depths, vec![2, 2, 1]);
        let ws: Vec<f64> = t3.leaves().iter().map(|&l| t3.leaf_weight(l)).collect();
        for (a, b) in ws.iter().zip([1.0 / 9.0, 1.0 / 9.0, 1.0 / 3.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        let t1 = AbstractTree::balanced_complete(1, 3.0).unwrap();
        assert_eq!(t1.leaf_weight(t1.root()), 1.0);
    }

    #[test]
    fn balanced_complete_matches_shape_construction() {
        for n in 1..=70 {
            let shape = Shape::complete(n);
            let via_shape = AbstractTree::from_shape(&shape, &balanced_weights(&shape, 2.0), 2.0).unwrap();
            let direct = AbstractTree::balanced_complete(n, 2.0).unwrap();
            assert_eq!(direct.skeleton.children, via_shape.skeleton.children, "n={n}");
            assert_eq!(direct.leaf_weights, via_shape.leaf_weights, "n={n}");
            assert_eq!(direct.root(), via_shape.root());
        }
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(closed_form_effect(4, 1.0), 2.25);
        assert_eq!(closed_form_effect(3, 1.0), 1.8);
        assert_eq!(closed_form_effect(1, 5.0), 1.0);
        assert_eq!(closed_form_effect(2, 1.0), 1.5);
    }

    #[test]
    fn complete_shape_leaf_depths() {
        for n in 1..=64usize {
            let depths = Shape::complete(n).leaf_depths();
            assert_eq!(depths.len(), n);
            let h = ceil_log2(n);
            let k = (1usize << h) - n;
            assert_eq!(depths.iter().filter(|&&d| d == h).count(), (1usize << h) - 2 * k, "n={n}");
            assert_eq!(depths.iter().filter(|&&d| h > 0 && d == h - 1).count(), k, "n={n}");
        }
    }

    #[test]
    fn shape_counts_are_catalan() {
        for n in 1..=9usize {
            assert_eq!(full_binary_shapes(n).len() as u64, catalan(n as u64 - 1));
        }
        assert_eq!(catalan(9), 4862);
    }

    #[test]
    fn effect_matches_closed_form_small() {
        for alpha in [1.0, 2.0, 4.0, 8.0, 16.0] {
            for n in 1..=300 {
                let t = AbstractTree::balanced_complete(n, alpha).unwrap();
                let (e, c) = (t.effect(), closed_form_effect(n, alpha));
                assert!(close(e, c), "n={n} alpha={alpha}: {e} vs {c}");
            }
        }
    }

    #[test]
    fn closed_form_monotone_in_n() {
        for alpha in [1.0, 2.0, 4.0, 8.0, 16.0] {
            for n in 1..4096 {
                assert!(closed_form_effect(n + 1, alpha) >= closed_form_effect(n, alpha));
            }
        }
    }

    #[test]
    fn inconsistent_trace_is_rejected() {
        let g = MetricInstance::gen_rt_alpha(3, 1.0, 0.01).unwrap();
        let mut trace = trace_of(&g, 1.0);
        trace.events.rotate_right(1);
        assert!(matches!(FlipForest::build(&trace), Err(Error::InconsistentTrace { .. })));
    }

    #[test]
    fn random_forests_satisfy_bounds() {
        for seed in 0..500u64 {
            let pairs = 2 + (seed as usize % 15);
            let alpha = [1.0, 2.0, 4.0][seed as usize % 3];
            let inst = MetricInstance::gen_random_line(pairs, seed, GapDistribution::Exponential).unwrap();
            let trace = trace_of(&inst, alpha);
            let f = FlipForest::build(&trace).unwrap();
            assert_eq!(f.leaves().len(), pairs);
            assert!(f.check_weight_bound().passed, "seed {seed}");
            assert!(f.check_decomposition_identities().passed, "seed {seed}");
            assert!(forest_cost_bound(&trace, &f).unwrap().passed(), "seed {seed}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_tree() -> impl Strategy<Value = (Arc<Shape>, Vec<f64>, f64)> {
            (1usize..8).prop_flat_map(|n| {
                let shapes = full_binary_shapes(n);
                let count = shapes.len();
                (0..count, proptest::collection::vec(0.0f64..10.0, n), 1.0f64..8.0)
                    .prop_map(move |(i, w, a)| (Arc::clone(&shapes[i]), w, a))
            })
        }

        proptest! {
            #[test]
            fn light_child_bound((shape, w, alpha) in arb_tree()) {
                let t = AbstractTree::from_shape(&shape, &w, alpha).unwrap();
                for id in 0..t.len() {
                    if let Some([a, b]) = t.children(id) {
                        let light = t.light_child(id).unwrap();
                        let lhs = t.virtual_weight(id);
                        let rhs = (2.0 + 1.0 / alpha) * t.virtual_weight(light);
                        prop_assert!(lhs >= rhs * (1.0 - 1e-12));
                        if t.virtual_weight(a) == t.virtual_weight(b) {
                            prop_assert!(close(lhs, rhs) || lhs == rhs);
                        }
                    }
                }
            }

            #[test]
            fn decomposition_and_determinism((shape, w, alpha) in arb_tree()) {
                let t = AbstractTree::from_shape(&shape, &w, alpha).unwrap();
                prop_assert!(t.check_decomposition_identities().passed);
                let again = AbstractTree::from_shape(&shape, &w, alpha).unwrap();
                prop_assert_eq!(t.to_json(), again.to_json());
            }

            #[test]
            fn effect_scale_invariant((shape, w, alpha) in arb_tree(), scale in 0.01f64..100.0) {
                let t = AbstractTree::from_shape(&shape, &w, alpha).unwrap();
                let scaled: Vec<f64> = w.iter().map(|x| x * scale).collect();
                let s = AbstractTree::from_shape(&shape, &scaled, alpha).unwrap();
                prop_assert!(close(t.effect(), s.effect()));
            }

            #[test]
            fn effect_below_closed_form((shape, w, alpha) in arb_tree()) {
                let t = AbstractTree::from_shape(&shape, &w, alpha).unwrap();
                prop_assert!(t.effect() <= closed_form_effect(shape.leaves(), alpha) + 1e-9);
            }
        }
    }
}
