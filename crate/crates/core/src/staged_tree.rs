//! Staged trees: validation from a JSON description, construction from a DAG
//! and a linear extension, classification, interpolating polynomials,
//! balancedness, parameterization, and chain event graph export.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Write as _;

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Dag, GraphError};
use crate::polynomial::{Monomial, Polynomial, Symbol};

/// Largest outcome count per variable; outcomes are written as single digits.
pub const MAX_CARD: u32 = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("tree has no vertices")]
    Empty,
    #[error("vertex {0:?} is listed twice")]
    DuplicateVertex(String),
    #[error("edge mentions unknown vertex {0:?}")]
    UnknownVertex(String),
    #[error("vertex {0:?} has more than one incoming edge")]
    MultipleParents(String),
    #[error("expected exactly one root, found {0:?}")]
    Roots(Vec<String>),
    #[error("vertices {0:?} are not reachable from the root (disconnected or cyclic input)")]
    Disconnected(Vec<String>),
    #[error("children of {vertex:?} must carry outcomes 1..={degree} exactly once ({detail})")]
    BadOutcomes { vertex: String, degree: usize, detail: String },
    #[error("label {0:?} is not an identifier of the form [A-Za-z][A-Za-z0-9_]*")]
    BadLabel(String),
    #[error("floret of {vertex:?} uses label {label:?} more than once")]
    FloretNotInjective { vertex: String, label: String },
    #[error("florets of {v:?} and {w:?} share label {label:?} but are not equal")]
    OverlappingFlorets { v: String, w: String, label: String },
    #[error("declared stage {stage:?} does not match the label sets: {detail}")]
    StageMismatch { stage: Vec<String>, detail: String },
    #[error("leaf {0:?} cannot belong to a stage")]
    StageWithLeaf(String),
    #[error("leaf key {key:?} of {vertex:?} is invalid or repeated")]
    BadLeafKey { vertex: String, key: String },
    #[error("variable order {0:?} does not match the levels of the tree")]
    BadOrder(Vec<usize>),
    #[error("cardinality {0} exceeds the supported maximum of {MAX_CARD}")]
    CardTooLarge(u32),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParamError {
    #[error("label {0} has no value")]
    Missing(String),
    #[error("value of {0} is not strictly positive")]
    NotPositive(String),
    #[error("floret of {vertex} sums to {sum}, not 1")]
    FloretSum { vertex: String, sum: String },
    #[error("expected {expected} coordinates, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("coordinates sum to {0}, not 1")]
    NotNormalized(String),
    #[error("label {label} takes different ratios in stage {stage} ({vertices:?}): {a} vs {b}")]
    Inconsistent { stage: usize, vertices: Vec<String>, label: String, a: String, b: String },
}

/// One edge of a [`TreeSpec`]. `outcome` is the 1-based position of the edge
/// in its parent's floret; an edge with outcome `i` leads to the child whose
/// outcome value (as written in leaf keys) is `i - 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub from: String,
    pub to: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<usize>,
}

impl EdgeSpec {
    pub fn new(from: &str, to: &str, label: &str, outcome: usize) -> EdgeSpec {
        EdgeSpec { from: from.into(), to: to.into(), label: label.into(), outcome: Some(outcome) }
    }
}

/// JSON description of a staged tree.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeSpec {
    pub vertices: Vec<String>,
    pub edges: Vec<EdgeSpec>,
    /// Non-singleton stages. When present it must agree with the label sets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stages: Option<Vec<Vec<String>>>,
    /// Leaf name to the key used for its indeterminate `p<key>`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub leaf_keys: BTreeMap<String, String>,
    /// Variables attached to the levels, for trees built from a DAG.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<Vec<usize>>,
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic()) && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn is_key(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub(crate) fn digit(x: u32) -> char {
    char::from_digit(x, 10).expect("outcome below 10")
}

/// A rooted labeled tree before staging, with vertices in breadth-first order.
#[derive(Debug, Clone)]
pub(crate) struct Shape {
    pub names: Vec<String>,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    pub label: Vec<Option<Symbol>>,
    pub depth: Vec<usize>,
    pub keys: Vec<Option<String>>,
}

impl Shape {
    pub fn from_spec(spec: &TreeSpec) -> Result<Shape, TreeError> {
        if spec.vertices.is_empty() {
            return Err(TreeError::Empty);
        }
        let mut index: HashMap<&str, usize> = HashMap::new();
        for (k, name) in spec.vertices.iter().enumerate() {
            if index.insert(name.as_str(), k).is_some() {
                return Err(TreeError::DuplicateVertex(name.clone()));
            }
        }
        let n = spec.vertices.len();
        let lookup = |name: &str| index.get(name).copied().ok_or_else(|| TreeError::UnknownVertex(name.to_string()));
        let mut parent = vec![None; n];
        let mut label: Vec<Option<Symbol>> = vec![None; n];
        let mut out: Vec<Vec<(Option<usize>, usize)>> = vec![Vec::new(); n];
        for e in &spec.edges {
            let (a, b) = (lookup(&e.from)?, lookup(&e.to)?);
            if parent[b].is_some() || a == b {
                return Err(TreeError::MultipleParents(e.to.clone()));
            }
            if !is_identifier(&e.label) {
                return Err(TreeError::BadLabel(e.label.clone()));
            }
            parent[b] = Some(a);
            label[b] = Some(Symbol::new(&e.label));
            out[a].push((e.outcome, b));
        }
        let roots: Vec<usize> = (0..n).filter(|&v| parent[v].is_none()).collect();
        if roots.len() != 1 {
            return Err(TreeError::Roots(roots.iter().map(|&v| spec.vertices[v].clone()).collect()));
        }
        let mut ordered: Vec<Vec<usize>> = vec![Vec::new(); n];
        for v in 0..n {
            let kids = &out[v];
            let d = kids.len();
            let bad = |detail: &str| TreeError::BadOutcomes {
                vertex: spec.vertices[v].clone(),
                degree: d,
                detail: detail.to_string(),
            };
            if kids.iter().all(|(o, _)| o.is_none()) {
                ordered[v] = kids.iter().map(|&(_, c)| c).collect();
            } else if kids.iter().all(|(o, _)| o.is_some()) {
                let mut slots = vec![None; d];
                for &(o, c) in kids {
                    let o = o.expect("checked");
                    if o == 0 || o > d || slots[o - 1].is_some() {
                        return Err(bad(&format!("outcome {o}")));
                    }
                    slots[o - 1] = Some(c);
                }
                ordered[v] = slots.into_iter().map(|c| c.expect("filled")).collect();
            } else {
                return Err(bad("outcomes given for only some edges"));
            }
        }
        // breadth-first renumbering
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([roots[0]]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            queue.extend(ordered[v].iter().copied());
        }
        if order.len() < n {
            let mut seen = vec![false; n];
            for &v in &order {
                seen[v] = true;
            }
            let missing = (0..n).filter(|&v| !seen[v]).map(|v| spec.vertices[v].clone()).collect();
            return Err(TreeError::Disconnected(missing));
        }
        let mut new_id = vec![0; n];
        for (k, &v) in order.iter().enumerate() {
            new_id[v] = k;
        }
        let mut shape = Shape {
            names: order.iter().map(|&v| spec.vertices[v].clone()).collect(),
            parent: order.iter().map(|&v| parent[v].map(|p| new_id[p])).collect(),
            children: order.iter().map(|&v| ordered[v].iter().map(|&c| new_id[c]).collect()).collect(),
            label: order.iter().map(|&v| label[v].clone()).collect(),
            depth: vec![0; n],
            keys: vec![None; n],
        };
        for v in 1..n {
            shape.depth[v] = shape.depth[shape.parent[v].expect("non-root")] + 1;
        }
        for (name, key) in &spec.leaf_keys {
            let v = new_id[lookup(name)?];
            if !shape.children[v].is_empty() || !is_key(key) {
                return Err(TreeError::BadLeafKey { vertex: name.clone(), key: key.clone() });
            }
            shape.keys[v] = Some(key.clone());
        }
        for v in 0..n {
            shape.check_floret(v)?;
        }
        Ok(shape)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        self.children[v].is_empty()
    }

    pub fn floret(&self, v: usize) -> Vec<Symbol> {
        self.children[v].iter().map(|&c| self.label[c].clone().expect("child edge has a label")).collect()
    }

    fn check_floret(&self, v: usize) -> Result<(), TreeError> {
        let mut labels = self.floret(v);
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(TreeError::FloretNotInjective { vertex: self.names[v].clone(), label: w[0].to_string() });
        }
        Ok(())
    }

    /// Vertices of the subtree rooted at `v`, in breadth-first order.
    pub fn subtree_vertices(&self, v: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut queue = VecDeque::from([v]);
        while let Some(u) = queue.pop_front() {
            out.push(u);
            queue.extend(self.children[u].iter().copied());
        }
        out
    }

    /// Groups the internal vertices among `vertices` by floret label set,
    /// requiring label sets to be equal or disjoint. Groups are ordered by
    /// their least member.
    pub fn stages_of(&self, vertices: &[usize]) -> Result<Vec<Vec<usize>>, TreeError> {
        let mut by_set: BTreeMap<Vec<Symbol>, Vec<usize>> = BTreeMap::new();
        let mut owner: HashMap<Symbol, usize> = HashMap::new();
        for &v in vertices.iter().filter(|&&v| !self.is_leaf(v)) {
            let mut set = self.floret(v);
            set.sort();
            for l in &set {
                if let Some(&w) = owner.get(l) {
                    let mut other = self.floret(w);
                    other.sort();
                    if other != set {
                        return Err(TreeError::OverlappingFlorets {
                            v: self.names[w].clone(),
                            w: self.names[v].clone(),
                            label: l.to_string(),
                        });
                    }
                } else {
                    owner.insert(l.clone(), v);
                }
            }
            by_set.entry(set).or_default().push(v);
        }
        let mut stages: Vec<Vec<usize>> = by_set.into_values().collect();
        for s in &mut stages {
            s.sort_unstable();
        }
        stages.sort_by_key(|s| s[0]);
        Ok(stages)
    }
}

/// A validated staged tree. Vertices are numbered breadth-first from the
/// root `0`, children in outcome order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StagedTree {
    names: Vec<String>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    label: Vec<Option<Symbol>>,
    depth: Vec<usize>,
    stages: Vec<Vec<usize>>,
    stage_of: Vec<Option<usize>>,
    leaves: Vec<usize>,
    leaf_keys: Vec<String>,
    leaf_symbols: Vec<Symbol>,
    leaf_index: Vec<Option<usize>>,
    order: Option<Vec<usize>>,
    index: HashMap<String, usize>,
}

/// Flags from [`StagedTree::classify`]. `contexts[k]` lists the positions
/// `1..=k` of the earlier levels whose outcomes determine the stage of a
/// vertex in level `k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TreeClassification {
    pub stratified: bool,
    pub uniform: bool,
    pub compatibly_labeled: bool,
    pub dag_representable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contexts: Option<Vec<Vec<usize>>>,
}

/// Same-stage vertices `v`, `w` and labels `i`, `j` with
/// `t(v_i) t(w_j) != t(w_i) t(v_j)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BalanceWitness {
    pub v: String,
    pub w: String,
    pub i: String,
    pub j: String,
}

/// A positive assignment of values to labels.
pub type Assignment = BTreeMap<Symbol, BigRational>;

impl StagedTree {
    /// Validates a JSON description.
    pub fn validate(spec: &TreeSpec) -> Result<StagedTree, TreeError> {
        let shape = Shape::from_spec(spec)?;
        let tree = StagedTree::from_shape(shape, spec.stages.as_deref())?;
        match &spec.order {
            Some(o) => tree.with_order(o.clone()),
            None => Ok(tree),
        }
    }

    pub fn from_json(text: &str) -> Result<StagedTree, String> {
        let spec: TreeSpec = serde_json::from_str(text).map_err(|e| e.to_string())?;
        StagedTree::validate(&spec).map_err(|e| e.to_string())
    }

    pub(crate) fn from_shape(shape: Shape, declared: Option<&[Vec<String>]>) -> Result<StagedTree, TreeError> {
        let all: Vec<usize> = (0..shape.len()).collect();
        let stages = shape.stages_of(&all)?;
        let mut stage_of = vec![None; shape.len()];
        for (k, s) in stages.iter().enumerate() {
            for &v in s {
                stage_of[v] = Some(k);
            }
        }
        let index: HashMap<String, usize> = shape.names.iter().enumerate().map(|(k, n)| (n.clone(), k)).collect();
        if let Some(declared) = declared {
            check_declared(&shape, &index, &stages, &stage_of, declared)?;
        }
        let leaves: Vec<usize> = all.iter().copied().filter(|&v| shape.is_leaf(v)).collect();
        let mut leaf_index = vec![None; shape.len()];
        let mut leaf_keys = Vec::with_capacity(leaves.len());
        let mut seen = std::collections::HashSet::new();
        for (k, &v) in leaves.iter().enumerate() {
            leaf_index[v] = Some(k);
            let key = match &shape.keys[v] {
                Some(key) => key.clone(),
                None if is_key(&shape.names[v]) => shape.names[v].clone(),
                None => k.to_string(),
            };
            if !seen.insert(key.clone()) {
                return Err(TreeError::BadLeafKey { vertex: shape.names[v].clone(), key });
            }
            leaf_keys.push(key);
        }
        let leaf_symbols = leaf_keys.iter().map(|k| Symbol::new(&format!("p{k}"))).collect();
        Ok(StagedTree {
            names: shape.names,
            parent: shape.parent,
            children: shape.children,
            label: shape.label,
            depth: shape.depth,
            stages,
            stage_of,
            leaves,
            leaf_keys,
            leaf_symbols,
            leaf_index,
            order: None,
            index,
        })
    }

    fn with_order(mut self, order: Vec<usize>) -> Result<StagedTree, TreeError> {
        let p = order.len();
        let mut sorted = order.clone();
        sorted.sort_unstable();
        let ok = sorted == (1..=p).collect::<Vec<_>>() && self.leaves.iter().all(|&l| self.depth[l] == p);
        if !ok {
            return Err(TreeError::BadOrder(order));
        }
        self.order = Some(order);
        Ok(self)
    }

    /// The tree of a DAG with respect to the linear extension `pi`. Level `j`
    /// holds the outcomes of `pi[0..j]`; the edge into level `j + 1` carries
    /// the symbol of `f(x_{pi[j]} | x_pa)`.
    pub fn from_dag(dag: &Dag, pi: &[usize]) -> Result<StagedTree, TreeError> {
        let shape = dag_shape(dag, pi, "r", &|_| false, "")?;
        let mut tree = StagedTree::from_shape(shape, None)?;
        tree.order = Some(pi.to_vec());
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn name(&self, v: usize) -> &str {
        &self.names[v]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn vertex(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn depth(&self, v: usize) -> usize {
        self.depth[v]
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        self.children[v].is_empty()
    }

    /// Label of the edge into `v`.
    pub fn edge_label(&self, v: usize) -> Option<&Symbol> {
        self.label[v].as_ref()
    }

    /// Labels of the floret of `v`, in outcome order.
    pub fn floret(&self, v: usize) -> Vec<Symbol> {
        self.children[v].iter().map(|&c| self.label[c].clone().expect("child edge has a label")).collect()
    }

    /// Child of `v` reached through `label`.
    pub fn child_with_label(&self, v: usize, label: &Symbol) -> Option<usize> {
        self.children[v].iter().copied().find(|&c| self.label[c].as_ref() == Some(label))
    }

    /// Stages of internal vertices, ordered by least member. Singletons included.
    pub fn stages(&self) -> &[Vec<usize>] {
        &self.stages
    }

    pub fn stage_of(&self, v: usize) -> Option<usize> {
        self.stage_of[v]
    }

    /// Sorted label set of stage `s`.
    pub fn stage_labels(&self, s: usize) -> Vec<Symbol> {
        let mut l = self.floret(self.stages[s][0]);
        l.sort();
        l
    }

    /// Distinct labels in breadth-first order of first appearance.
    pub fn labels(&self) -> Vec<Symbol> {
        let mut seen = std::collections::HashSet::new();
        self.label.iter().flatten().filter(|l| seen.insert((*l).clone())).cloned().collect()
    }

    pub fn leaves(&self) -> &[usize] {
        &self.leaves
    }

    pub fn leaf_index(&self, v: usize) -> Option<usize> {
        self.leaf_index[v]
    }

    pub fn leaf_keys(&self) -> &[String] {
        &self.leaf_keys
    }

    /// Indeterminates `p<key>`, aligned with [`leaves`](Self::leaves).
    pub fn leaf_symbols(&self) -> &[Symbol] {
        &self.leaf_symbols
    }

    pub fn order(&self) -> Option<&[usize]> {
        self.order.as_deref()
    }

    /// Outcome indices (0-based) along the path from the root to `v`.
    pub fn outcome_path(&self, v: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.depth[v]);
        let mut u = v;
        while let Some(p) = self.parent[u] {
            out.push(self.children[p].iter().position(|&c| c == u).expect("child of parent"));
            u = p;
        }
        out.reverse();
        out
    }

    /// Vertex reached from `from` by following outcome indices.
    pub fn follow(&self, from: usize, path: &[usize]) -> Option<usize> {
        path.iter().try_fold(from, |v, &i| self.children[v].get(i).copied())
    }

    /// Labels on the path from the root to `v`.
    pub fn path_labels(&self, v: usize) -> Vec<Symbol> {
        let mut out = Vec::with_capacity(self.depth[v]);
        let mut u = v;
        while let Some(p) = self.parent[u] {
            out.push(self.label[u].clone().expect("non-root edge"));
            u = p;
        }
        out.reverse();
        out
    }

    /// Leaf indices below `v` (or `v` itself when it is a leaf), in leaf order.
    pub fn leaves_under(&self, v: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            match self.leaf_index[u] {
                Some(k) => out.push(k),
                None => stack.extend(self.children[u].iter().copied()),
            }
        }
        out.sort_unstable();
        out
    }

    /// `p_[v]`: the sum of the leaf indeterminates below `v`.
    pub fn marginal(&self, v: usize) -> Polynomial {
        Polynomial::sum_of_vars(self.leaves_under(v).iter().map(|&k| &self.leaf_symbols[k]))
    }

    /// Interpolating polynomial of every vertex, computed bottom-up.
    pub fn interpolating_polynomials(&self) -> Vec<Polynomial> {
        let mut t = vec![Polynomial::zero(); self.len()];
        for v in (0..self.len()).rev() {
            t[v] = if self.is_leaf(v) {
                Polynomial::one()
            } else {
                let mut acc = Polynomial::zero();
                for &c in &self.children[v] {
                    let edge = Polynomial::var(self.label[c].clone().expect("child edge"));
                    acc = acc.add(&edge.mul(&t[c]));
                }
                acc
            };
        }
        t
    }

    /// Sum over paths from `v` to the leaves of the product of edge labels.
    pub fn interpolating_polynomial(&self, v: usize) -> Polynomial {
        let mut acc = Polynomial::zero();
        for k in self.leaves_under(v) {
            let leaf = self.leaves[k];
            let labels = self.path_labels(leaf);
            let m = Monomial::product(labels[self.depth[v]..].iter());
            acc.add_term(1.into(), m);
        }
        acc
    }

    /// Checks `t(v_i) t(w_j) = t(w_i) t(v_j)` for all same-stage pairs and all
    /// label pairs; returns the first failure in stage, pair, label order.
    pub fn balance_witness(&self) -> Option<BalanceWitness> {
        let t = self.interpolating_polynomials();
        for (s, members) in self.stages.iter().enumerate() {
            if members.len() < 2 {
                continue;
            }
            let labels = self.stage_labels(s);
            for (a, &v) in members.iter().enumerate() {
                for &w in &members[a + 1..] {
                    for (x, i) in labels.iter().enumerate() {
                        for j in &labels[x + 1..] {
                            let vi = self.child_with_label(v, i).expect("stage label");
                            let vj = self.child_with_label(v, j).expect("stage label");
                            let wi = self.child_with_label(w, i).expect("stage label");
                            let wj = self.child_with_label(w, j).expect("stage label");
                            if t[vi].mul(&t[wj]) != t[wi].mul(&t[vj]) {
                                return Some(BalanceWitness {
                                    v: self.names[v].clone(),
                                    w: self.names[w].clone(),
                                    i: i.to_string(),
                                    j: j.to_string(),
                                });
                            }
                        }
                    }
                }
            }
        }
        None
    }

    pub fn is_balanced(&self) -> bool {
        self.balance_witness().is_none()
    }

    /// Stratified, uniform and compatibly-labeled flags, plus the context
    /// sets when the stage partition of every level is induced by a subset
    /// of the earlier coordinates.
    pub fn classify(&self) -> TreeClassification {
        let leaf_depth = self.depth[self.leaves[0]];
        let stratified = self.leaves.iter().all(|&l| self.depth[l] == leaf_depth)
            && self.stages.iter().all(|s| s.iter().all(|&v| self.depth[v] == self.depth[s[0]]));
        let mut degree_at: Vec<Option<usize>> = vec![None; leaf_depth.max(1) + 1];
        let mut uniform = true;
        for v in 0..self.len() {
            if self.is_leaf(v) {
                continue;
            }
            let d = self.depth[v];
            if d >= degree_at.len() {
                uniform = false;
                continue;
            }
            match degree_at[d] {
                None => degree_at[d] = Some(self.children[v].len()),
                Some(k) if k != self.children[v].len() => uniform = false,
                _ => {}
            }
        }
        let uniform = uniform && stratified;
        let compatibly_labeled = uniform
            && self.stages.iter().all(|s| s.iter().all(|&v| self.floret(v) == self.floret(s[0])));
        let contexts = if compatibly_labeled { self.level_contexts(leaf_depth) } else { None };
        TreeClassification {
            stratified,
            uniform,
            compatibly_labeled,
            dag_representable: contexts.is_some(),
            contexts,
        }
    }

    /// For each level `k`, the set `P` of coordinates such that two vertices
    /// share a stage exactly when they agree on `P`. A coordinate belongs to
    /// `P` when changing it alone can change the stage.
    fn level_contexts(&self, p: usize) -> Option<Vec<Vec<usize>>> {
        let mut out = Vec::with_capacity(p);
        for k in 0..p {
            let level: Vec<usize> = (0..self.len()).filter(|&v| self.depth[v] == k).collect();
            let paths: HashMap<Vec<usize>, usize> = level.iter().map(|&v| (self.outcome_path(v), v)).collect();
            let mut ctx = Vec::new();
            for pos in 0..k {
                let matters = paths.iter().any(|(x, &v)| {
                    paths.iter().any(|(y, &w)| {
                        (0..k).all(|q| q == pos || x[q] == y[q]) && self.stage_of[v] != self.stage_of[w]
                    })
                });
                if matters {
                    ctx.push(pos + 1);
                }
            }
            let key = |x: &[usize]| ctx.iter().map(|&q| x[q - 1]).collect::<Vec<_>>();
            let mut stage_for_key: HashMap<Vec<usize>, Option<usize>> = HashMap::new();
            let mut key_for_stage: HashMap<Option<usize>, Vec<usize>> = HashMap::new();
            for (x, &v) in &paths {
                let kx = key(x);
                if *stage_for_key.entry(kx.clone()).or_insert(self.stage_of[v]) != self.stage_of[v] {
                    return None;
                }
                if *key_for_stage.entry(self.stage_of[v]).or_insert(kx.clone()) != kx {
                    return None;
                }
            }
            out.push(ctx);
        }
        Some(out)
    }

    /// Checks that `x` lies in the parameter space: every label of the tree
    /// has a strictly positive value and every floret sums to 1.
    pub fn check_parameters(&self, x: &Assignment, from_depth: usize) -> Result<(), ParamError> {
        for v in 0..self.len() {
            if self.is_leaf(v) || self.depth[v] < from_depth {
                continue;
            }
            let mut sum = BigRational::zero();
            for l in self.floret(v) {
                let val = x.get(&l).ok_or_else(|| ParamError::Missing(l.to_string()))?;
                if !val.is_positive() {
                    return Err(ParamError::NotPositive(l.to_string()));
                }
                sum += val;
            }
            if !sum.is_one() {
                return Err(ParamError::FloretSum { vertex: self.names[v].clone(), sum: sum.to_string() });
            }
        }
        Ok(())
    }

    /// Leaf probabilities `p_l = prod over the root-to-leaf path of x_label`.
    pub fn parameterize(&self, x: &Assignment) -> Result<Vec<BigRational>, ParamError> {
        self.check_parameters(x, 0)?;
        Ok(self.path_products(0, x))
    }

    /// Products of labels from `from` down to each leaf below it, in leaf order.
    pub(crate) fn path_products(&self, from: usize, x: &Assignment) -> Vec<BigRational> {
        let mut value = vec![BigRational::one(); self.len()];
        let mut out = Vec::new();
        let mut queue = VecDeque::from([from]);
        while let Some(v) = queue.pop_front() {
            if self.is_leaf(v) {
                out.push((self.leaf_index[v].expect("leaf"), value[v].clone()));
            }
            for &c in &self.children[v] {
                let l = self.label[c].as_ref().expect("child edge");
                value[c] = &value[v] * &x[l];
                queue.push_back(c);
            }
        }
        out.sort_by_key(|(k, _)| *k);
        out.into_iter().map(|(_, p)| p).collect()
    }

    /// Maps each leaf indeterminate to its coordinate of `p`.
    pub fn point(&self, p: &[BigRational]) -> HashMap<Symbol, BigRational> {
        self.leaf_symbols.iter().cloned().zip(p.iter().cloned()).collect()
    }

    /// Recovers `x_label = p_[child] / p_[parent]`; errors when a label would
    /// receive two different ratios.
    pub fn recover_parameters(&self, p: &[BigRational]) -> Result<Assignment, ParamError> {
        if p.len() != self.leaves.len() {
            return Err(ParamError::Dimension { expected: self.leaves.len(), got: p.len() });
        }
        if let Some(k) = p.iter().position(|v| !v.is_positive()) {
            return Err(ParamError::NotPositive(self.leaf_symbols[k].to_string()));
        }
        let total: BigRational = p.iter().sum();
        if !total.is_one() {
            return Err(ParamError::NotNormalized(total.to_string()));
        }
        self.recover_below(0, p)
    }

    /// Ratios for every floret at or below `from`, where `p` holds the leaf
    /// values (only those below `from` are read).
    pub(crate) fn recover_below(&self, from: usize, p: &[BigRational]) -> Result<Assignment, ParamError> {
        let mut mass = vec![BigRational::zero(); self.len()];
        for v in (0..self.len()).rev() {
            mass[v] = match self.leaf_index[v] {
                Some(k) => p[k].clone(),
                None => self.children[v].iter().map(|&c| mass[c].clone()).sum(),
            };
        }
        let mut out = Assignment::new();
        let mut queue = VecDeque::from([from]);
        while let Some(v) = queue.pop_front() {
            for &c in &self.children[v] {
                let l = self.label[c].clone().expect("child edge");
                let r = &mass[c] / &mass[v];
                if let Some(prev) = out.get(&l) {
                    if *prev != r {
                        let s = self.stage_of[v].expect("internal vertex");
                        return Err(ParamError::Inconsistent {
                            stage: s,
                            vertices: self.stages[s].iter().map(|&u| self.names[u].clone()).collect(),
                            label: l.to_string(),
                            a: prev.to_string(),
                            b: r.to_string(),
                        });
                    }
                } else {
                    out.insert(l, r);
                }
                queue.push_back(c);
            }
        }
        Ok(out)
    }

    /// The subtree rooted at `v` as a staged tree of its own. Leaf keys are kept.
    pub fn subtree(&self, v: usize) -> StagedTree {
        let spec = self.spec_below(v);
        StagedTree::validate(&spec).expect("subtree of a valid tree is valid")
    }

    fn spec_below(&self, root: usize) -> TreeSpec {
        let mut vertices = Vec::new();
        let mut edges = Vec::new();
        let mut leaf_keys = BTreeMap::new();
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            vertices.push(self.names[v].clone());
            if let Some(k) = self.leaf_index[v] {
                leaf_keys.insert(self.names[v].clone(), self.leaf_keys[k].clone());
            }
            for (i, &c) in self.children[v].iter().enumerate() {
                edges.push(EdgeSpec {
                    from: self.names[v].clone(),
                    to: self.names[c].clone(),
                    label: self.label[c].as_ref().expect("child edge").to_string(),
                    outcome: Some(i + 1),
                });
                queue.push_back(c);
            }
        }
        TreeSpec { vertices, edges, stages: None, leaf_keys, order: None }
    }

    /// JSON description that validates back to this tree.
    pub fn to_spec(&self) -> TreeSpec {
        let mut spec = self.spec_below(0);
        let stages: Vec<Vec<String>> = self
            .stages
            .iter()
            .filter(|s| s.len() > 1)
            .map(|s| s.iter().map(|&v| self.names[v].clone()).collect())
            .collect();
        spec.stages = Some(stages);
        spec.order = self.order.clone();
        spec
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_spec()).expect("spec serializes")
    }

    /// Merges vertices whose rooted subtrees carry identical labels (positions).
    pub fn ceg_quotient(&self) -> Ceg {
        // fingerprint ids, bottom-up; every leaf maps to the sink id 0
        let mut ids: HashMap<Vec<(Symbol, usize)>, usize> = HashMap::new();
        let mut fp = vec![0usize; self.len()];
        for v in (0..self.len()).rev() {
            if self.is_leaf(v) {
                continue;
            }
            let mut key: Vec<(Symbol, usize)> =
                self.children[v].iter().map(|&c| (self.label[c].clone().expect("edge"), fp[c])).collect();
            key.sort();
            let next = ids.len() + 1;
            fp[v] = *ids.entry(key).or_insert(next);
        }
        let mut node_of_fp: HashMap<usize, usize> = HashMap::new();
        let mut nodes: Vec<CegNode> = Vec::new();
        for (v, &f) in fp.iter().enumerate() {
            if self.is_leaf(v) {
                continue;
            }
            match node_of_fp.get(&f) {
                Some(&k) => nodes[k].members.push(v),
                None => {
                    node_of_fp.insert(f, nodes.len());
                    nodes.push(CegNode { name: String::new(), members: vec![v], stage: self.stage_of[v] });
                }
            }
        }
        let sink = nodes.len();
        node_of_fp.insert(0, sink);
        for node in &mut nodes {
            node.name = if node.members.len() == 1 {
                self.names[node.members[0]].clone()
            } else {
                let parts: Vec<&str> = node.members.iter().map(|&v| self.names[v].as_str()).collect();
                format!("[{}]", parts.join(","))
            };
        }
        nodes.push(CegNode { name: "∞".to_string(), members: self.leaves.clone(), stage: None });
        let mut edges = Vec::new();
        for (k, node) in nodes[..sink].iter().enumerate() {
            let rep = node.members[0];
            let d = self.children[rep].len();
            for (i, &c) in self.children[rep].iter().enumerate() {
                edges.push(CegEdge {
                    from: k,
                    to: node_of_fp[&fp[c]],
                    label: self.label[c].clone().expect("edge"),
                    dashed: i + 1 == d,
                });
            }
        }
        Ceg { nodes, edges }
    }

    /// Graphviz rendering; vertices of non-singleton stages share a color.
    pub fn to_dot(&self) -> String {
        let colors = self.stage_colors();
        let mut out = String::from("digraph staged_tree {\n  rankdir=LR;\n  node [shape=circle, style=filled];\n");
        for v in 0..self.len() {
            let color = self.stage_of[v].map_or("white", |s| colors[s]);
            let _ = writeln!(out, "  {} [label={}, fillcolor=\"{}\"];", quote(&self.names[v]), quote(&self.names[v]), color);
        }
        for v in 1..self.len() {
            let p = self.parent[v].expect("non-root");
            let l = self.label[v].as_ref().expect("edge");
            let _ = writeln!(out, "  {} -> {} [label={}];", quote(&self.names[p]), quote(&self.names[v]), quote(l.name()));
        }
        out.push_str("}\n");
        out
    }

    fn stage_colors(&self) -> Vec<&'static str> {
        let mut next = 0;
        self.stages
            .iter()
            .map(|s| {
                if s.len() > 1 {
                    next += 1;
                    PALETTE[(next - 1) % PALETTE.len()]
                } else {
                    "white"
                }
            })
            .collect()
    }
}

const PALETTE: [&str; 10] = [
    "#e41a1c", "#377eb8", "#4daf4a", "#984ea3", "#ff7f00", "#ffff33", "#a65628", "#f781bf", "#66c2a5", "#8da0cb",
];

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn check_declared(
    shape: &Shape,
    index: &HashMap<String, usize>,
    stages: &[Vec<usize>],
    stage_of: &[Option<usize>],
    declared: &[Vec<String>],
) -> Result<(), TreeError> {
    let mut claimed = vec![false; shape.len()];
    for group in declared {
        let mismatch = |detail: String| TreeError::StageMismatch { stage: group.clone(), detail };
        let mut ids = Vec::with_capacity(group.len());
        for name in group {
            let v = *index.get(name).ok_or_else(|| TreeError::UnknownVertex(name.clone()))?;
            if shape.is_leaf(v) {
                return Err(TreeError::StageWithLeaf(name.clone()));
            }
            if claimed[v] {
                return Err(mismatch(format!("{name} is declared in two stages")));
            }
            claimed[v] = true;
            ids.push(v);
        }
        let Some(&first) = ids.first() else {
            return Err(mismatch("empty stage".to_string()));
        };
        if let Some(&v) = ids.iter().find(|&&v| stage_of[v] != stage_of[first]) {
            return Err(mismatch(format!("{} and {} have different label sets", shape.names[first], shape.names[v])));
        }
        let full = &stages[stage_of[first].expect("internal")];
        if full.len() != ids.len() {
            let missing: Vec<&str> =
                full.iter().filter(|v| !ids.contains(v)).map(|&v| shape.names[v].as_str()).collect();
            return Err(mismatch(format!("{missing:?} carry the same labels but are not listed")));
        }
    }
    for s in stages.iter().filter(|s| s.len() > 1) {
        if !claimed[s[0]] {
            let names: Vec<String> = s.iter().map(|&v| shape.names[v].clone()).collect();
            return Err(TreeError::StageMismatch { stage: names, detail: "vertices share labels but no stage lists them".to_string() });
        }
    }
    Ok(())
}

/// Label of the edge setting node `node` to `value` given the parent values
/// `pa`, with an optional suffix for intervened conditionals.
pub(crate) fn conditional_label(node: usize, value: u32, pa: &[u32], suffix: &str) -> String {
    let mut s = format!("f{node}v{}", digit(value));
    if !pa.is_empty() {
        s.push('g');
        s.extend(pa.iter().map(|&x| digit(x)));
    }
    s.push_str(suffix);
    s
}

/// Builds the unstaged tree of a DAG under `pi`. Vertex names are `root` for
/// the root and the outcome digits in `pi` order
/// otherwise; leaf keys are the digits in natural variable order.
/// `intervened(j)` tells whether node `j` takes the suffixed label.
pub(crate) fn dag_shape(
    dag: &Dag,
    pi: &[usize],
    root: &str,
    intervened: &dyn Fn(usize) -> bool,
    suffix: &str,
) -> Result<Shape, TreeError> {
    dag.require_linear_extension(pi)?;
    if let Some(&c) = dag.cards().iter().find(|&&c| c > MAX_CARD) {
        return Err(TreeError::CardTooLarge(c));
    }
    let n = dag.n();
    let mut shape = Shape {
        names: vec![root.to_string()],
        parent: vec![None],
        children: vec![Vec::new()],
        label: vec![None],
        depth: vec![0],
        keys: vec![None],
    };
    // outcome assignment per vertex, indexed by node (1-based, slot 0 unused)
    let mut values: Vec<Vec<u32>> = vec![vec![0; n + 1]];
    let mut frontier = vec![0usize];
    for (j, &node) in pi.iter().enumerate() {
        let pa = dag.parents(node).to_vec();
        let suf = if intervened(node) { suffix } else { "" };
        let mut next = Vec::new();
        for &v in &frontier {
            let pa_vals: Vec<u32> = pa.iter().map(|&q| values[v][q]).collect();
            for x in 0..dag.card(node) {
                let c = shape.names.len();
                let mut vals = values[v].clone();
                vals[node] = x;
                let name = if v == 0 {
                    format!("{}{}", child_prefix(root), digit(x))
                } else {
                    format!("{}{}", shape.names[v], digit(x))
                };
                shape.names.push(name);
                shape.parent.push(Some(v));
                shape.children.push(Vec::new());
                shape.label.push(Some(Symbol::new(&conditional_label(node, x, &pa_vals, suf))));
                shape.depth.push(j + 1);
                shape.keys.push(None);
                shape.children[v].push(c);
                values.push(vals);
                next.push(c);
            }
        }
        frontier = next;
    }
    for &leaf in &frontier {
        let key: String = (1..=n).map(|q| digit(values[leaf][q])).collect();
        shape.keys[leaf] = Some(key);
    }
    Ok(shape)
}

/// Below the root `r` vertices are named by their digits alone; below any
/// other root the digits follow `<root>.`.
fn child_prefix(root: &str) -> String {
    if root == "r" {
        String::new()
    } else {
        format!("{root}.")
    }
}

/// A chain event graph: positions of a staged tree with leaves merged into a sink.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ceg {
    pub nodes: Vec<CegNode>,
    pub edges: Vec<CegEdge>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CegNode {
    pub name: String,
    pub members: Vec<usize>,
    pub stage: Option<usize>,
}

/// An edge of a [`Ceg`]. The last edge of each floret is `dashed`: its
/// parameter is determined by the others.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CegEdge {
    pub from: usize,
    pub to: usize,
    pub label: Symbol,
    pub dashed: bool,
}

impl Ceg {
    pub fn sink(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn undashed_edges(&self) -> usize {
        self.edges.iter().filter(|e| !e.dashed).count()
    }

    pub fn to_dot(&self, tree: &StagedTree) -> String {
        let colors = tree.stage_colors();
        let mut out = String::from("digraph ceg {\n  rankdir=LR;\n  node [shape=circle, style=filled];\n");
        for (k, node) in self.nodes.iter().enumerate() {
            let color = node.stage.map_or("white", |s| colors[s]);
            let _ = writeln!(out, "  n{k} [label={}, fillcolor=\"{color}\"];", quote(&node.name));
        }
        for e in &self.edges {
            let style = if e.dashed { ", style=dashed" } else { "" };
            let _ = writeln!(out, "  n{} -> n{} [label={}{style}];", e.from, e.to, quote(e.label.name()));
        }
        out.push_str("}\n");
        out
    }

    /// Sum over sink-bound paths from `from` of the product of edge values.
    pub fn path_sum(&self, from: usize, x: &Assignment) -> BigRational {
        let mut memo: Vec<Option<BigRational>> = vec![None; self.nodes.len()];
        self.path_sum_memo(from, x, &mut memo)
    }

    fn path_sum_memo(&self, v: usize, x: &Assignment, memo: &mut Vec<Option<BigRational>>) -> BigRational {
        if v == self.sink() {
            return BigRational::one();
        }
        if let Some(r) = &memo[v] {
            return r.clone();
        }
        let mut acc = BigRational::zero();
        for e in self.edges.iter().filter(|e| e.from == v) {
            acc += &x[&e.label] * self.path_sum_memo(e.to, x, memo);
        }
        memo[v] = Some(acc.clone());
        acc
    }
}
