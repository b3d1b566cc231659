//! Interventional staged trees: validation of the partitioned, quasi-staged
//! and label-sharing conditions, construction from a DAG and intervention
//! targets, the graphical toricness criterion, and interventional
//! parameterization.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{i_dag, Dag, GraphError, NodeSet};
use crate::polynomial::Symbol;
use crate::staged_tree::{
    dag_shape, is_identifier, Assignment, BalanceWitness, ParamError, Shape, StagedTree, TreeError,
    TreeSpec,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ITreeError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("partition condition: {0}")]
    Partition(String),
    #[error("quasi-staged condition: subtree at {root:?} is not a staged tree: {source}")]
    QuasiStaged { root: String, source: TreeError },
    #[error("isomorphism condition: subtrees at {u:?} and {w:?} differ: {detail}")]
    NotIsomorphic { u: String, w: String, detail: String },
    #[error("index-set condition: action {label:?} refers to {id}, outside 1..{size}")]
    IndexSet { label: String, id: usize, size: usize },
    #[error(
        "sharing condition: edges {edge_u:?} and {edge_w:?} into vertex {vertex} of the common subtree must {expected} labels"
    )]
    Sharing { edge_u: String, edge_w: String, vertex: usize, expected: &'static str },
    #[error("target collection is empty")]
    NoTargets,
    #[error("the empty target must be part of the collection for invariance statements")]
    MissingEmptyTarget,
}

/// Index set of an action label: vertices of the common subtree (by
/// breadth-first id, root `0` excluded) whose incoming edges may change.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ActionSet {
    Vertices(BTreeSet<usize>),
    /// Every vertex at one of these depths of the common subtree. Used for
    /// DAG targets, where the set is a union of whole levels.
    Levels(BTreeSet<usize>),
}

impl ActionSet {
    fn contains(&self, id: usize, depth: usize) -> bool {
        match self {
            ActionSet::Vertices(s) => s.contains(&id),
            ActionSet::Levels(l) => l.contains(&depth),
        }
    }
}

/// An ordered multiset of intervention targets.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TargetCollection(Vec<NodeSet>);

impl TargetCollection {
    pub fn new(targets: Vec<NodeSet>) -> TargetCollection {
        TargetCollection(targets)
    }

    pub fn from_lists(lists: &[&[usize]]) -> TargetCollection {
        TargetCollection(lists.iter().map(|l| l.iter().copied().collect()).collect())
    }

    pub fn targets(&self) -> &[NodeSet] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Position of the first empty target.
    pub fn empty_index(&self) -> Option<usize> {
        self.0.iter().position(|t| t.is_empty())
    }

    pub fn is_purely_interventional(&self) -> bool {
        self.empty_index().is_none()
    }

    /// The collection with every empty target removed.
    pub fn without_empty(&self) -> TargetCollection {
        TargetCollection(self.0.iter().copied().filter(|t| !t.is_empty()).collect())
    }
}

/// JSON description of a general interventional staged tree.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ITreeSpec {
    #[serde(flatten)]
    pub tree: TreeSpec,
    pub k_star: usize,
    pub action_index_sets: BTreeMap<String, Vec<usize>>,
}

/// JSON description of an interventional DAG model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IModelSpec {
    pub dag: Dag,
    pub targets: TargetCollection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<Vec<usize>>,
}

/// A validated interventional staged tree.
#[derive(Debug, Clone)]
pub struct InterventionalTree {
    tree: StagedTree,
    k_star: usize,
    actions: BTreeMap<Symbol, ActionSet>,
    subtree_roots: Vec<usize>,
    /// `maps[s][l]` is the vertex of subtree `s` identified with id `l` of the common subtree.
    maps: Vec<Vec<usize>>,
    common_depth: Vec<usize>,
    common_keys: Vec<String>,
}

impl PartialEq for InterventionalTree {
    fn eq(&self, other: &Self) -> bool {
        self.tree == other.tree
            && self.k_star == other.k_star
            && self.subtree_roots == other.subtree_roots
            && self.maps == other.maps
            && self.expanded_actions() == other.expanded_actions()
    }
}

impl Eq for InterventionalTree {}

impl InterventionalTree {
    pub fn validate(spec: &ITreeSpec) -> Result<InterventionalTree, ITreeError> {
        let shape = Shape::from_spec(&spec.tree)?;
        let mut actions = BTreeMap::new();
        for (label, ids) in &spec.action_index_sets {
            if !is_identifier(label) {
                return Err(TreeError::BadLabel(label.clone()).into());
            }
            actions.insert(Symbol::new(label), ActionSet::Vertices(ids.iter().copied().collect()));
        }
        let it = InterventionalTree::from_parts(shape, spec.k_star, actions, spec.tree.stages.as_deref())?;
        match &spec.tree.order {
            Some(_) => Err(ITreeError::Partition("a variable order is not supported on interventional trees".into())),
            None => Ok(it),
        }
    }

    pub fn from_json(text: &str) -> Result<InterventionalTree, String> {
        let spec: ITreeSpec = serde_json::from_str(text).map_err(|e| e.to_string())?;
        InterventionalTree::validate(&spec).map_err(|e| e.to_string())
    }

    fn from_parts(
        mut shape: Shape,
        k_star: usize,
        actions: BTreeMap<Symbol, ActionSet>,
        declared: Option<&[Vec<String>]>,
    ) -> Result<InterventionalTree, ITreeError> {
        // (1) partition by the splitting level
        let leaf_depth_min = (0..shape.len()).filter(|&v| shape.is_leaf(v)).map(|v| shape.depth[v]).min().unwrap_or(0);
        if k_star == 0 || k_star >= leaf_depth_min {
            return Err(ITreeError::Partition(format!(
                "splitting level {k_star} must satisfy 0 < k* < {leaf_depth_min} (depth of the shallowest leaf)"
            )));
        }
        let mut used = BTreeSet::new();
        for v in 1..shape.len() {
            let p = shape.parent[v].expect("non-root");
            let l = shape.label[v].as_ref().expect("edge");
            let is_action = actions.contains_key(l);
            if shape.depth[p] < k_star && !is_action {
                return Err(ITreeError::Partition(format!(
                    "edge {} -> {} above the splitting level carries {l}, which is not an action label",
                    shape.names[p], shape.names[v]
                )));
            }
            if shape.depth[p] >= k_star && is_action {
                return Err(ITreeError::Partition(format!(
                    "action label {l} appears below the splitting level on {} -> {}",
                    shape.names[p], shape.names[v]
                )));
            }
            if is_action {
                used.insert(l.clone());
            }
        }
        if let Some(unused) = actions.keys().find(|a| !used.contains(*a)) {
            return Err(ITreeError::Partition(format!("action label {unused} labels no edge")));
        }
        let roots: Vec<usize> = (0..shape.len()).filter(|&v| shape.depth[v] == k_star).collect();
        // (1) each subtree is a staged tree on its own
        for &u in &roots {
            shape
                .stages_of(&shape.subtree_vertices(u))
                .map_err(|e| ITreeError::QuasiStaged { root: shape.names[u].clone(), source: e })?;
        }
        // (2) isomorphism through outcome positions
        let common = shape.subtree_vertices(roots[0]);
        let mut common_depth = vec![0; common.len()];
        for (l, &v) in common.iter().enumerate() {
            common_depth[l] = shape.depth[v] - k_star;
        }
        let mut maps = Vec::with_capacity(roots.len());
        for &u in &roots {
            let mut map = Vec::with_capacity(common.len());
            let mut queue = VecDeque::from([(roots[0], u)]);
            while let Some((a, b)) = queue.pop_front() {
                if shape.children[a].len() != shape.children[b].len() {
                    return Err(ITreeError::NotIsomorphic {
                        u: shape.names[roots[0]].clone(),
                        w: shape.names[u].clone(),
                        detail: format!("{} and {} have different out-degrees", shape.names[a], shape.names[b]),
                    });
                }
                map.push(b);
                queue.extend(shape.children[a].iter().copied().zip(shape.children[b].iter().copied()));
            }
            maps.push(map);
        }
        // (3) index sets inside the common subtree, root excluded
        for (label, set) in &actions {
            if let ActionSet::Vertices(ids) = set {
                if let Some(&id) = ids.iter().find(|&&id| id == 0 || id >= common.len()) {
                    return Err(ITreeError::IndexSet { label: label.to_string(), id, size: common.len() });
                }
            }
        }
        // (4) sharing rule along the path between every two subtree roots
        for s in 0..roots.len() {
            for t in s + 1..roots.len() {
                let on_path = path_labels_between(&shape, roots[s], roots[t]);
                let sets: Vec<&ActionSet> = on_path.iter().map(|l| &actions[l]).collect();
                for l in 1..common.len() {
                    let intervened = sets.iter().any(|a| a.contains(l, common_depth[l]));
                    let (a, b) = (maps[s][l], maps[t][l]);
                    let same = shape.label[a] == shape.label[b];
                    if same == intervened {
                        let edge = |v: usize| {
                            let p = shape.parent[v].expect("non-root");
                            format!("{} -> {} ({})", shape.names[p], shape.names[v], shape.label[v].as_ref().expect("edge"))
                        };
                        return Err(ITreeError::Sharing {
                            edge_u: edge(a),
                            edge_w: edge(b),
                            vertex: l,
                            expected: if intervened { "carry different" } else { "carry equal" },
                        });
                    }
                }
            }
        }
        // leaf indeterminates p<key>t<subtree>
        let common_leaves: Vec<usize> = (0..common.len()).filter(|&l| shape.is_leaf(common[l])).collect();
        let common_keys: Vec<String> = common_leaves
            .iter()
            .map(|&l| shape.keys[common[l]].clone().unwrap_or_else(|| l.to_string()))
            .collect();
        for (s, map) in maps.iter().enumerate() {
            for (&l, key) in common_leaves.iter().zip(&common_keys) {
                let v = map[l];
                if let Some(given) = &shape.keys[v] {
                    if given != key {
                        return Err(TreeError::BadLeafKey { vertex: shape.names[v].clone(), key: given.clone() }.into());
                    }
                }
                shape.keys[v] = Some(format!("{key}t{s}"));
            }
        }
        // vertex ids carry over unchanged
        let tree = StagedTree::from_shape(shape, declared)?;
        Ok(InterventionalTree { tree, k_star, actions, subtree_roots: roots, maps, common_depth, common_keys })
    }

    /// The tree of a DAG under intervention targets. The root has one child per
    /// target, reached through `a<k>`; below it hangs a copy of the DAG tree
    /// in which the conditionals of targeted nodes carry the suffix `i<k>`.
    pub fn from_dag_targets(
        dag: &Dag,
        targets: &TargetCollection,
        pi: &[usize],
    ) -> Result<InterventionalTree, ITreeError> {
        if targets.is_empty() {
            return Err(ITreeError::NoTargets);
        }
        for t in targets.targets() {
            if let Some(m) = NodeSet::max(*t).filter(|&m| m > dag.n()) {
                return Err(GraphError::NodeOutOfRange { node: m, n: dag.n() }.into());
            }
        }
        let mut shape = Shape {
            names: vec!["r".to_string()],
            parent: vec![None],
            children: vec![Vec::new()],
            label: vec![None],
            depth: vec![0],
            keys: vec![None],
        };
        let mut actions = BTreeMap::new();
        let mut position = vec![0; dag.n() + 1];
        for (k, &v) in pi.iter().enumerate() {
            if v >= 1 && v <= dag.n() {
                position[v] = k + 1;
            }
        }
        for (k, &target) in targets.targets().iter().enumerate() {
            let sub = dag_shape(dag, pi, &format!("u{k}"), &|j| target.contains(j), &format!("i{k}"))?;
            let a = Symbol::new(&format!("a{k}"));
            let offset = shape.len();
            for v in 0..sub.len() {
                shape.names.push(sub.names[v].clone());
                shape.parent.push(Some(sub.parent[v].map_or(0, |p| p + offset)));
                shape.children.push(sub.children[v].iter().map(|c| c + offset).collect());
                shape.label.push(Some(sub.label[v].clone().unwrap_or_else(|| a.clone())));
                shape.depth.push(sub.depth[v] + 1);
                shape.keys.push(sub.keys[v].clone());
            }
            shape.children[0].push(offset);
            actions.insert(a, ActionSet::Levels(target.iter().map(|j| position[j]).collect()));
        }
        let shape = shape.renumbered();
        InterventionalTree::from_parts(shape, 1, actions, None)
    }

    pub fn tree(&self) -> &StagedTree {
        &self.tree
    }

    pub fn k_star(&self) -> usize {
        self.k_star
    }

    pub fn action_labels(&self) -> Vec<Symbol> {
        self.actions.keys().cloned().collect()
    }

    pub fn is_action_label(&self, l: &Symbol) -> bool {
        self.actions.contains_key(l)
    }

    /// Roots of the isomorphic subtrees, in breadth-first order.
    pub fn subtree_roots(&self) -> &[usize] {
        &self.subtree_roots
    }

    /// Vertex of subtree `s` identified with id `l` of the common subtree.
    pub fn vertex_of(&self, s: usize, l: usize) -> usize {
        self.maps[s][l]
    }

    /// Number of vertices of the common subtree.
    pub fn common_size(&self) -> usize {
        self.common_depth.len()
    }

    /// Index sets with level-based sets expanded into explicit ids.
    pub fn expanded_actions(&self) -> BTreeMap<Symbol, BTreeSet<usize>> {
        self.actions
            .iter()
            .map(|(l, a)| {
                let ids = (1..self.common_size()).filter(|&id| a.contains(id, self.common_depth[id])).collect();
                (l.clone(), ids)
            })
            .collect()
    }

    /// Leaf indices of subtree `s`, aligned with the leaves of the common subtree.
    pub fn subtree_leaves(&self, s: usize) -> Vec<usize> {
        self.tree.leaves_under(self.subtree_roots[s])
    }

    pub fn subtree_leaf_symbols(&self, s: usize) -> Vec<Symbol> {
        self.subtree_leaves(s).iter().map(|&k| self.tree.leaf_symbols()[k].clone()).collect()
    }

    /// Keys of the common subtree's leaves; subtree `s` uses `p<key>t<s>`.
    pub fn common_keys(&self) -> &[String] {
        &self.common_keys
    }

    /// Balanced check over every stage of the whole tree, including stages
    /// spanning different subtrees.
    pub fn balance_witness(&self) -> Option<BalanceWitness> {
        self.tree.balance_witness()
    }

    pub fn is_balanced(&self) -> bool {
        self.balance_witness().is_none()
    }

    /// Per-subtree leaf distributions. Action labels are not read.
    pub fn parameterize(&self, x: &Assignment) -> Result<Vec<Vec<BigRational>>, ParamError> {
        self.tree.check_parameters(x, self.k_star)?;
        Ok(self.subtree_roots.iter().map(|&u| self.tree.path_products(u, x)).collect())
    }

    /// Maps the leaf indeterminates of every subtree to their values.
    pub fn point(&self, ps: &[Vec<BigRational>]) -> HashMap<Symbol, BigRational> {
        let mut out = HashMap::new();
        for (s, p) in ps.iter().enumerate() {
            out.extend(self.subtree_leaf_symbols(s).into_iter().zip(p.iter().cloned()));
        }
        out
    }

    /// Recovers every non-action label from per-subtree distributions.
    pub fn recover_parameters(&self, ps: &[Vec<BigRational>]) -> Result<Assignment, ParamError> {
        if ps.len() != self.subtree_roots.len() {
            return Err(ParamError::Dimension { expected: self.subtree_roots.len(), got: ps.len() });
        }
        let mut out = Assignment::new();
        for (s, p) in ps.iter().enumerate() {
            let leaves = self.subtree_leaves(s);
            if p.len() != leaves.len() {
                return Err(ParamError::Dimension { expected: leaves.len(), got: p.len() });
            }
            if let Some(k) = p.iter().position(|v| !v.is_positive()) {
                return Err(ParamError::NotPositive(self.tree.leaf_symbols()[leaves[k]].to_string()));
            }
            let total: BigRational = p.iter().sum();
            if !total.is_one() {
                return Err(ParamError::NotNormalized(total.to_string()));
            }
            let mut full = vec![BigRational::zero(); self.tree.leaves().len()];
            for (&k, v) in leaves.iter().zip(p) {
                full[k] = v.clone();
            }
            for (l, v) in self.tree.recover_below(self.subtree_roots[s], &full)? {
                if let Some(prev) = out.get(&l) {
                    if *prev != v {
                        let stage = self.tree.stage_of(self.tree.parent(self.first_edge_with(&l)).expect("edge"));
                        let stage = stage.expect("internal");
                        return Err(ParamError::Inconsistent {
                            stage,
                            vertices: self.tree.stages()[stage].iter().map(|&u| self.tree.name(u).to_string()).collect(),
                            label: l.to_string(),
                            a: prev.to_string(),
                            b: v.to_string(),
                        });
                    }
                } else {
                    out.insert(l, v);
                }
            }
        }
        Ok(out)
    }

    fn first_edge_with(&self, l: &Symbol) -> usize {
        (1..self.tree.len()).find(|&v| self.tree.edge_label(v) == Some(l)).expect("label in tree")
    }

    pub fn to_spec(&self) -> ITreeSpec {
        let mut tree = self.tree.to_spec();
        tree.leaf_keys.clear();
        let first = self.subtree_leaves(0);
        for (&k, key) in first.iter().zip(&self.common_keys) {
            tree.leaf_keys.insert(self.tree.name(self.tree.leaves()[k]).to_string(), key.clone());
        }
        let action_index_sets =
            self.expanded_actions().into_iter().map(|(l, ids)| (l.to_string(), ids.into_iter().collect())).collect();
        ITreeSpec { tree, k_star: self.k_star, action_index_sets }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_spec()).expect("spec serializes")
    }
}

/// Labels on the undirected path between two vertices.
fn path_labels_between(shape: &Shape, a: usize, b: usize) -> Vec<Symbol> {
    let (mut x, mut y) = (a, b);
    let mut out = Vec::new();
    while x != y {
        if shape.depth[x] >= shape.depth[y] {
            out.push(shape.label[x].clone().expect("edge"));
            x = shape.parent[x].expect("non-root");
        } else {
            out.push(shape.label[y].clone().expect("edge"));
            y = shape.parent[y].expect("non-root");
        }
    }
    out
}

impl Shape {
    /// The same tree with vertices renumbered breadth-first.
    pub(crate) fn renumbered(self) -> Shape {
        let mut order = Vec::with_capacity(self.len());
        let mut queue = VecDeque::from([0usize]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            queue.extend(self.children[v].iter().copied());
        }
        let mut new_id = vec![0; self.len()];
        for (k, &v) in order.iter().enumerate() {
            new_id[v] = k;
        }
        Shape {
            names: order.iter().map(|&v| self.names[v].clone()).collect(),
            parent: order.iter().map(|&v| self.parent[v].map(|p| new_id[p])).collect(),
            children: order.iter().map(|&v| self.children[v].iter().map(|&c| new_id[c]).collect()).collect(),
            label: order.iter().map(|&v| self.label[v].clone()).collect(),
            depth: order.iter().map(|&v| self.depth[v]).collect(),
            keys: order.iter().map(|&v| self.keys[v].clone()).collect(),
        }
    }
}

/// Why [`criterion_check`] fails.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CriterionWitness {
    /// `node` has nonadjacent parents `a` and `b`.
    NotPerfect { node: usize, a: usize, b: usize },
    /// `node` is an ancestor of `I ∪ J` outside it.
    NotAncestral { i: NodeSet, j: NodeSet, node: usize },
}

/// The DAG is perfect and `I ∪ J` is ancestrally closed for every pair of
/// targets, a target paired with itself included.
pub fn criterion_check(dag: &Dag, targets: &TargetCollection) -> Result<Option<CriterionWitness>, GraphError> {
    if let Some((node, a, b)) = dag.non_perfect_witness() {
        return Ok(Some(CriterionWitness::NotPerfect { node, a, b }));
    }
    let ts = targets.targets();
    for (x, &i) in ts.iter().enumerate() {
        for &j in &ts[x..] {
            let u = i.union(j);
            let closure = dag.ancestral_closure(u)?;
            if let Some(node) = closure.difference(u).min() {
                return Ok(Some(CriterionWitness::NotAncestral { i, j, node }));
            }
        }
    }
    Ok(None)
}

pub fn criterion_holds(dag: &Dag, targets: &TargetCollection) -> Result<bool, GraphError> {
    Ok(criterion_check(dag, targets)?.is_none())
}

/// Invariance statements for one target: `f^(I)(x_A | x_C) = f^(∅)(x_A | x_C)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InvariancePairs {
    pub target: usize,
    pub set: NodeSet,
    pub pairs: Vec<(NodeSet, NodeSet)>,
}

/// Subsets of `full` ordered by size, then lexicographically by members.
pub(crate) fn subsets_by_size(full: NodeSet) -> Vec<NodeSet> {
    let mut all: Vec<NodeSet> = full.subsets().collect();
    all.sort_by_key(|s| (s.len(), s.to_vec()));
    all
}

type PairEmitter<'a> = &'a dyn Fn(NodeSet, NodeSet, &mut Vec<(NodeSet, NodeSet)>);

fn invariance_with(
    dag: &Dag,
    targets: &TargetCollection,
    emit: PairEmitter,
) -> Result<Vec<InvariancePairs>, ITreeError> {
    if targets.empty_index().is_none() {
        return Err(ITreeError::MissingEmptyTarget);
    }
    let idag = i_dag(dag, targets.targets())?;
    let g = idag.graph();
    let base = dag.nodes();
    let w_all = idag.w_set();
    let cs = subsets_by_size(base);
    let mut out = Vec::new();
    for (k, &set) in targets.targets().iter().enumerate() {
        let mut pairs = Vec::new();
        if let Some(w) = idag.w_node(k) {
            let others = w_all.difference(NodeSet::singleton(w));
            for &c in &cs {
                let reach = g.d_connected(NodeSet::singleton(w), c.union(others));
                let a = base.difference(c).difference(reach);
                if !a.is_empty() {
                    emit(a, c, &mut pairs);
                }
            }
        }
        out.push(InvariancePairs { target: k, set, pairs });
    }
    Ok(out)
}

/// For each target `I` and each conditioning set `C ⊆ [p]`, the largest `A`
/// such that `C ∪ W_{others}` d-separates `A` from `w_I` in the I-DAG.
/// Every nonempty subset of that `A` is d-separated as well, so these pairs
/// determine all others. Conditioning sets are ordered by size, then
/// lexicographically.
pub fn i_markov_invariance_pairs(dag: &Dag, targets: &TargetCollection) -> Result<Vec<InvariancePairs>, ITreeError> {
    invariance_with(dag, targets, &|a, c, out| out.push((a, c)))
}

/// Every pair `(A, C)` with `A` nonempty satisfying the invariance
/// d-separation, maximal or not.
pub fn all_invariance_pairs(dag: &Dag, targets: &TargetCollection) -> Result<Vec<InvariancePairs>, ITreeError> {
    invariance_with(dag, targets, &|a, c, out| {
        for sub in subsets_by_size(a).into_iter().filter(|s| !s.is_empty()) {
            out.push((sub, c));
        }
    })
}

/// Parses `[[], [1], [2, 3]]`.
pub fn parse_targets(text: &str) -> Result<TargetCollection, String> {
    serde_json::from_str(text).map_err(|e| format!("targets: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::enumerate_dags;
    use crate::staged_tree::EdgeSpec;
    use num_bigint::BigInt;
    use proptest::prelude::*;

    fn g1() -> Dag {
        Dag::binary(3, [(1, 2), (2, 3)]).unwrap()
    }

    fn g2() -> Dag {
        Dag::binary(3, [(2, 1), (2, 3)]).unwrap()
    }

    fn g3() -> Dag {
        Dag::binary(3, [(3, 2), (2, 1)]).unwrap()
    }

    fn obs_and_one() -> TargetCollection {
        TargetCollection::from_lists(&[&[], &[1]])
    }

    /// The two-node tree with actions a0 (no change) and a1 (vertices 1, 2).
    fn fig5_spec() -> ITreeSpec {
        let vertices = ["r", "u", "w", "u0", "u1", "w0", "w1", "u00", "u01", "u10", "u11", "w00", "w01", "w10", "w11"];
        let e = EdgeSpec::new;
        let edges = vec![
            e("r", "u", "a0", 1),
            e("r", "w", "a1", 2),
            e("u", "u0", "l1", 1),
            e("u", "u1", "l2", 2),
            e("w", "w0", "l7", 1),
            e("w", "w1", "l8", 2),
            e("u0", "u00", "l3", 1),
            e("u0", "u01", "l4", 2),
            e("u1", "u10", "l5", 1),
            e("u1", "u11", "l6", 2),
            e("w0", "w00", "l3", 1),
            e("w0", "w01", "l4", 2),
            e("w1", "w10", "l5", 1),
            e("w1", "w11", "l6", 2),
        ];
        let leaf_keys = [("u00", "00"), ("u01", "01"), ("u10", "10"), ("u11", "11")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        ITreeSpec {
            tree: TreeSpec {
                vertices: vertices.iter().map(|s| s.to_string()).collect(),
                edges,
                stages: None,
                leaf_keys,
                order: None,
            },
            k_star: 1,
            action_index_sets: [("a0".to_string(), vec![]), ("a1".to_string(), vec![1, 2])].into_iter().collect(),
        }
    }

    fn q(a: i64, b: i64) -> BigRational {
        BigRational::new(BigInt::from(a), BigInt::from(b))
    }

    fn lcg_assignment(tree: &StagedTree, seed: u64) -> Assignment {
        let mut state = seed ^ 0x9e37_79b9_7f4a_7c15;
        let mut x = Assignment::new();
        for s in 0..tree.stages().len() {
            let labels = tree.stage_labels(s);
            let draws: Vec<i64> = labels
                .iter()
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    ((state >> 33) % 40 + 1) as i64
                })
                .collect();
            let total: i64 = draws.iter().sum();
            for (l, d) in labels.into_iter().zip(draws) {
                x.insert(l, q(d, total));
            }
        }
        x
    }

    #[test]
    fn fig5_is_valid() {
        let it = InterventionalTree::validate(&fig5_spec()).unwrap();
        assert_eq!(it.subtree_roots().len(), 2);
        assert_eq!(it.common_size(), 7);
        let labels: Vec<Symbol> = it.tree().labels().into_iter().filter(|l| !it.is_action_label(l)).collect();
        assert_eq!(labels.len(), 8);
        let syms: Vec<&str> = it.tree().leaf_symbols().iter().map(|s| s.name()).collect();
        assert_eq!(syms, ["p00t0", "p01t0", "p10t0", "p11t0", "p00t1", "p01t1", "p10t1", "p11t1"]);
        // u0 and w0 share a stage
        let t = it.tree();
        assert_eq!(t.stage_of(t.vertex("u0").unwrap()), t.stage_of(t.vertex("w0").unwrap()));
    }

    #[test]
    fn fig5_with_fresh_shared_label_breaks_sharing() {
        let mut spec = fig5_spec();
        spec.tree.edges[10].label = "l9".into(); // w0 -> w00
        match InterventionalTree::validate(&spec) {
            Err(ITreeError::Sharing { vertex, expected, .. }) => {
                assert_eq!(vertex, 3);
                assert_eq!(expected, "carry equal");
            }
            other => panic!("expected a sharing violation, got {other:?}"),
        }
    }

    #[test]
    fn fig5_with_shared_intervened_label_breaks_sharing() {
        let mut spec = fig5_spec();
        spec.tree.edges[4].label = "l1".into();
        spec.tree.edges[5].label = "l2".into();
        assert!(matches!(InterventionalTree::validate(&spec), Err(ITreeError::Sharing { vertex: 1, .. })));
    }

    #[test]
    fn partition_and_index_conditions() {
        let mut spec = fig5_spec();
        spec.tree.edges[2].label = "a0".into();
        assert!(matches!(InterventionalTree::validate(&spec), Err(ITreeError::Partition(_))));
        let mut spec = fig5_spec();
        spec.action_index_sets.insert("a1".into(), vec![1, 2, 7]);
        assert!(matches!(InterventionalTree::validate(&spec), Err(ITreeError::IndexSet { id: 7, .. })));
        let mut spec = fig5_spec();
        spec.k_star = 2;
        assert!(matches!(InterventionalTree::validate(&spec), Err(ITreeError::Partition(_))));
        let mut spec = fig5_spec();
        spec.action_index_sets.insert("a9".into(), vec![]);
        assert!(matches!(InterventionalTree::validate(&spec), Err(ITreeError::Partition(_))));
    }

    #[test]
    fn non_isomorphic_subtrees_are_rejected() {
        let mut spec = fig5_spec();
        spec.tree.vertices.push("w000".into());
        spec.tree.edges.push(EdgeSpec::new("w00", "w000", "l9", 1));
        assert!(matches!(InterventionalTree::validate(&spec), Err(ITreeError::NotIsomorphic { .. })));
    }

    #[test]
    fn quasi_staged_condition_is_checked_per_subtree() {
        let mut spec = fig5_spec();
        spec.tree.edges[9].label = "l5".into(); // u1 floret {l5} twice
        assert!(matches!(InterventionalTree::validate(&spec), Err(ITreeError::Tree(TreeError::FloretNotInjective { .. }))));
        let mut spec = fig5_spec();
        spec.tree.edges[8].label = "l4".into(); // u1 floret {l4, l6} overlaps {l3, l4}
        assert!(matches!(InterventionalTree::validate(&spec), Err(ITreeError::QuasiStaged { .. })));
    }

    #[test]
    fn dag_targets_reproduce_fig5() {
        let g = Dag::binary(2, [(1, 2)]).unwrap();
        let it = InterventionalTree::from_dag_targets(&g, &obs_and_one(), &[1, 2]).unwrap();
        let fig5 = InterventionalTree::validate(&fig5_spec()).unwrap();
        assert_eq!(it.tree().len(), fig5.tree().len());
        assert_eq!(it.expanded_actions(), fig5.expanded_actions());
        let labels: Vec<String> = it.tree().labels().iter().map(|l| l.to_string()).collect();
        assert_eq!(labels, ["a0", "a1", "f1v0", "f1v1", "f1v0i1", "f1v1i1", "f2v0g0", "f2v1g0", "f2v0g1", "f2v1g1"]);
        let syms: Vec<&str> = it.tree().leaf_symbols().iter().map(|s| s.name()).collect();
        assert_eq!(syms, ["p00t0", "p01t0", "p10t0", "p11t0", "p00t1", "p01t1", "p10t1", "p11t1"]);
    }

    #[test]
    fn chain_with_one_target_has_twelve_parameters() {
        let it = InterventionalTree::from_dag_targets(&g1(), &obs_and_one(), &[1, 2, 3]).unwrap();
        assert_eq!(it.action_labels().len(), 2);
        let params = it.tree().labels().into_iter().filter(|l| !it.is_action_label(l)).count();
        assert_eq!(params, 12);
        assert_eq!(it.tree().leaves().len(), 16);
        let only_obs = InterventionalTree::from_dag_targets(&g1(), &TargetCollection::from_lists(&[&[]]), &[1, 2, 3]);
        let only_obs = only_obs.unwrap();
        assert_eq!(only_obs.subtree_roots().len(), 1);
        assert_eq!(only_obs.tree().leaves().len(), 8);
    }

    #[test]
    fn dag_target_trees_validate_through_json() {
        for g in enumerate_dags(3).unwrap() {
            let targets = TargetCollection::from_lists(&[&[], &[2], &[1, 3]]);
            let it = InterventionalTree::from_dag_targets(&g, &targets, &g.default_order()).unwrap();
            let back = InterventionalTree::from_json(&it.to_json()).unwrap();
            assert_eq!(back, it);
        }
    }

    #[test]
    fn criterion_trichotomy() {
        let t = obs_and_one();
        assert_eq!(criterion_check(&g1(), &t).unwrap(), None);
        assert!(matches!(criterion_check(&g2(), &t).unwrap(), Some(CriterionWitness::NotAncestral { node: 2, .. })));
        assert!(matches!(criterion_check(&g3(), &t).unwrap(), Some(CriterionWitness::NotAncestral { .. })));
        let cycle = Dag::binary(4, [(1, 2), (1, 3), (2, 4), (3, 4)]).unwrap();
        assert!(matches!(criterion_check(&cycle, &t).unwrap(), Some(CriterionWitness::NotPerfect { .. })));
    }

    #[test]
    fn balanced_trees_of_the_trichotomy() {
        let t = obs_and_one();
        for (g, expected) in [(g1(), true), (g2(), false), (g3(), false)] {
            let it = InterventionalTree::from_dag_targets(&g, &t, &g.default_order()).unwrap();
            assert_eq!(it.is_balanced(), expected, "{g:?}");
        }
        let only_obs = TargetCollection::from_lists(&[&[]]);
        for n in 1..=3 {
            for g in enumerate_dags(n).unwrap() {
                let it = InterventionalTree::from_dag_targets(&g, &only_obs, &g.default_order()).unwrap();
                assert_eq!(it.is_balanced(), g.is_perfect());
            }
        }
    }

    #[test]
    fn invariance_pairs_of_the_chain() {
        let pairs = i_markov_invariance_pairs(&g1(), &obs_and_one()).unwrap();
        assert!(pairs[0].pairs.is_empty());
        let got: Vec<(Vec<usize>, Vec<usize>)> = pairs[1].pairs.iter().map(|(a, c)| (a.to_vec(), c.to_vec())).collect();
        let expected = vec![(vec![2, 3], vec![1]), (vec![3], vec![2]), (vec![3], vec![1, 2]), (vec![2], vec![1, 3])];
        assert_eq!(got, expected);
        let only_obs = TargetCollection::from_lists(&[&[]]);
        assert!(i_markov_invariance_pairs(&g1(), &only_obs).unwrap().iter().all(|p| p.pairs.is_empty()));
        let single = Dag::new(1, [], vec![2]).unwrap();
        let p = i_markov_invariance_pairs(&single, &obs_and_one()).unwrap();
        assert!(p.iter().all(|p| p.pairs.is_empty()));
        let pure = TargetCollection::from_lists(&[&[1]]);
        assert_eq!(i_markov_invariance_pairs(&g1(), &pure), Err(ITreeError::MissingEmptyTarget));
    }

    /// Brute force over all disjoint (A, C) with explicit d-separation queries.
    fn invariance_by_queries(dag: &Dag, targets: &TargetCollection, k: usize) -> BTreeSet<(NodeSet, NodeSet)> {
        let idag = i_dag(dag, targets.targets()).unwrap();
        let mut out = BTreeSet::new();
        let Some(w) = idag.w_node(k) else { return out };
        let others = idag.w_set().difference(NodeSet::singleton(w));
        for c in dag.nodes().subsets() {
            for a in dag.nodes().difference(c).subsets().filter(|a| !a.is_empty()) {
                if idag.graph().d_separated(a, NodeSet::singleton(w), c.union(others)).unwrap() {
                    out.insert((a, c));
                }
            }
        }
        out
    }

    #[test]
    fn all_pairs_match_direct_queries() {
        let targets = TargetCollection::from_lists(&[&[], &[1], &[2, 3]]);
        for g in enumerate_dags(3).unwrap() {
            let all = all_invariance_pairs(&g, &targets).unwrap();
            for (k, entry) in all.iter().enumerate() {
                let got: BTreeSet<_> = entry.pairs.iter().copied().collect();
                assert_eq!(got.len(), entry.pairs.len());
                assert_eq!(got, invariance_by_queries(&g, &targets, k), "{g:?} target {k}");
            }
        }
    }

    #[test]
    fn interventional_parameterization() {
        let it = InterventionalTree::from_dag_targets(&g1(), &obs_and_one(), &[1, 2, 3]).unwrap();
        let mut x = Assignment::new();
        for l in it.tree().labels() {
            x.insert(l, q(1, 2));
        }
        let ps = it.parameterize(&x).unwrap();
        assert_eq!(ps.len(), 2);
        assert!(ps.iter().all(|p| p.len() == 8 && p.iter().all(|v| *v == q(1, 8))));
        let x = lcg_assignment(it.tree(), 17);
        let ps = it.parameterize(&x).unwrap();
        for p in &ps {
            assert!(p.iter().sum::<BigRational>().is_one());
        }
        let mut expected = x.clone();
        expected.retain(|l, _| !it.is_action_label(l));
        assert_eq!(it.recover_parameters(&ps).unwrap(), expected);
    }

    #[test]
    fn action_values_are_ignored() {
        let it = InterventionalTree::validate(&fig5_spec()).unwrap();
        let mut x = lcg_assignment(it.tree(), 2);
        let before = it.parameterize(&x).unwrap();
        x.insert(Symbol::new("a0"), q(7, 3));
        assert_eq!(it.parameterize(&x).unwrap(), before);
    }

    proptest! {
        #[test]
        fn shared_conditionals_agree_across_subtrees(seed in any::<u64>(), idx in 0usize..25, t in 1u64..8) {
            let g = &enumerate_dags(3).unwrap()[idx];
            let targets = TargetCollection::new(vec![NodeSet::EMPTY, NodeSet::from_bits(t)]);
            let it = InterventionalTree::from_dag_targets(g, &targets, &g.default_order()).unwrap();
            let x = lcg_assignment(it.tree(), seed);
            let ps = it.parameterize(&x).unwrap();
            // recovering each subtree separately yields the same shared labels
            for (s, p) in ps.iter().enumerate() {
                let mut full = vec![BigRational::zero(); it.tree().leaves().len()];
                for (&k, v) in it.subtree_leaves(s).iter().zip(p) {
                    full[k] = v.clone();
                }
                let rec = it.tree().recover_below(it.subtree_roots()[s], &full).unwrap();
                for (l, v) in rec {
                    prop_assert_eq!(&x[&l], &v);
                }
            }
        }
    }
}
