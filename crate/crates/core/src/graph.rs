//! Directed acyclic graphs on nodes `1..=n`, their undirected relatives, and
//! the d-separation machinery behind every Markov-property computation.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest node count a [`NodeSet`] can hold.
pub const MAX_NODES: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("node {node} is out of range 1..={n}")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("edges contain a directed cycle: {0}")]
    Cycle(String),
    #[error("node {node} has cardinality {card}; at least 2 outcomes are required")]
    Cardinality { node: usize, card: u32 },
    #[error("expected {expected} cardinalities, got {got}")]
    CardCount { expected: usize, got: usize },
    #[error("graphs with more than {MAX_NODES} nodes are not supported")]
    TooLarge,
    #[error("{0:?} is not a permutation of 1..={1}")]
    NotPermutation(Vec<usize>, usize),
    #[error("{0:?} is not a linear extension of {1}")]
    NotLinearExtension(Vec<usize>, String),
    #[error("node sets must be disjoint and the first two nonempty ({0})")]
    BadSeparationQuery(String),
    #[error("graphs have different node counts ({0} vs {1})")]
    SizeMismatch(usize, usize),
    #[error("enumeration is capped at {cap} nodes, got {n}")]
    EnumerationCap { n: usize, cap: usize },
}

/// A set of nodes from `1..=64`, stored as a bit mask.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeSet(u64);

impl NodeSet {
    pub const EMPTY: NodeSet = NodeSet(0);

    pub fn from_bits(bits: u64) -> NodeSet {
        NodeSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn singleton(v: usize) -> NodeSet {
        NodeSet(1u64 << (v - 1))
    }

    /// All nodes `1..=n`.
    pub fn full(n: usize) -> NodeSet {
        if n >= 64 {
            NodeSet(u64::MAX)
        } else {
            NodeSet((1u64 << n) - 1)
        }
    }

    pub fn contains(self, v: usize) -> bool {
        (1..=64).contains(&v) && self.0 & (1u64 << (v - 1)) != 0
    }

    pub fn insert(&mut self, v: usize) {
        self.0 |= 1u64 << (v - 1);
    }

    pub fn remove(&mut self, v: usize) {
        self.0 &= !(1u64 << (v - 1));
    }

    pub fn with(self, v: usize) -> NodeSet {
        NodeSet(self.0 | (1u64 << (v - 1)))
    }

    pub fn union(self, o: NodeSet) -> NodeSet {
        NodeSet(self.0 | o.0)
    }

    pub fn intersection(self, o: NodeSet) -> NodeSet {
        NodeSet(self.0 & o.0)
    }

    pub fn difference(self, o: NodeSet) -> NodeSet {
        NodeSet(self.0 & !o.0)
    }

    pub fn is_subset(self, o: NodeSet) -> bool {
        self.0 & !o.0 == 0
    }

    pub fn is_disjoint(self, o: NodeSet) -> bool {
        self.0 & o.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn min(self) -> Option<usize> {
        (self.0 != 0).then(|| self.0.trailing_zeros() as usize + 1)
    }

    pub fn max(self) -> Option<usize> {
        (self.0 != 0).then(|| 64 - self.0.leading_zeros() as usize)
    }

    /// Members in increasing order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                return None;
            }
            let v = bits.trailing_zeros() as usize + 1;
            bits &= bits - 1;
            Some(v)
        })
    }

    pub fn to_vec(self) -> Vec<usize> {
        self.iter().collect()
    }

    /// All subsets of `self`, in increasing order of their bit masks.
    pub fn subsets(self) -> impl Iterator<Item = NodeSet> {
        let full = self.0;
        let mut next = Some(0u64);
        std::iter::from_fn(move || {
            let cur = next?;
            next = if cur == full { None } else { Some((cur.wrapping_sub(full)) & full) };
            Some(NodeSet(cur))
        })
    }
}

impl FromIterator<usize> for NodeSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> NodeSet {
        let mut s = NodeSet::EMPTY;
        for v in iter {
            s.insert(v);
        }
        s
    }
}

impl fmt::Debug for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, v) in self.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str("}")
    }
}

impl Serialize for NodeSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_vec().serialize(s)
    }
}

impl<'de> Deserialize<'de> for NodeSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<NodeSet, D::Error> {
        let v = Vec::<usize>::deserialize(d)?;
        if let Some(bad) = v.iter().find(|&&x| x == 0 || x > MAX_NODES) {
            return Err(serde::de::Error::custom(format!("node {bad} is outside 1..=64")));
        }
        Ok(v.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Parents,
    Children,
    Ancestors,
    Descendants,
    NonDescendants,
}

/// A DAG on nodes `1..=n` with an outcome cardinality per node.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Dag {
    n: usize,
    edges: Vec<(usize, usize)>,
    cards: Vec<u32>,
    parents: Vec<NodeSet>,
    children: Vec<NodeSet>,
}

#[derive(Serialize, Deserialize)]
struct DagJson {
    n: usize,
    edges: Vec<[usize; 2]>,
    cards: Vec<u32>,
}

impl Dag {
    /// Validates and builds a DAG. Duplicate edges collapse; edges are kept sorted.
    pub fn new<I>(n: usize, edges: I, cards: Vec<u32>) -> Result<Dag, GraphError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if n > MAX_NODES {
            return Err(GraphError::TooLarge);
        }
        if cards.len() != n {
            return Err(GraphError::CardCount { expected: n, got: cards.len() });
        }
        if let Some((i, &c)) = cards.iter().enumerate().find(|(_, &c)| c < 2) {
            return Err(GraphError::Cardinality { node: i + 1, card: c });
        }
        let edges: BTreeSet<(usize, usize)> = edges.into_iter().collect();
        let mut parents = vec![NodeSet::EMPTY; n + 1];
        let mut children = vec![NodeSet::EMPTY; n + 1];
        for &(i, j) in &edges {
            for v in [i, j] {
                if v == 0 || v > n {
                    return Err(GraphError::NodeOutOfRange { node: v, n });
                }
            }
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            parents[j].insert(i);
            children[i].insert(j);
        }
        let dag = Dag { n, edges: edges.into_iter().collect(), cards, parents, children };
        if dag.topological_order().is_none() {
            return Err(GraphError::Cycle(dag.edge_text()));
        }
        Ok(dag)
    }

    /// A DAG whose nodes are all binary.
    pub fn binary<I: IntoIterator<Item = (usize, usize)>>(n: usize, edges: I) -> Result<Dag, GraphError> {
        Dag::new(n, edges, vec![2; n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn cards(&self) -> &[u32] {
        &self.cards
    }

    pub fn card(&self, v: usize) -> u32 {
        self.cards[v - 1]
    }

    pub fn nodes(&self) -> NodeSet {
        NodeSet::full(self.n)
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.children.get(i).is_some_and(|c| c.contains(j))
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.has_edge(i, j) || self.has_edge(j, i)
    }

    pub fn parents(&self, v: usize) -> NodeSet {
        self.parents[v]
    }

    pub fn children(&self, v: usize) -> NodeSet {
        self.children[v]
    }

    /// Canonical text form, e.g. `1->2, 2->3`.
    pub fn edge_text(&self) -> String {
        let parts: Vec<String> = self.edges.iter().map(|(i, j)| format!("{i}->{j}")).collect();
        parts.join(", ")
    }

    fn check_node(&self, v: usize) -> Result<(), GraphError> {
        if v == 0 || v > self.n {
            Err(GraphError::NodeOutOfRange { node: v, n: self.n })
        } else {
            Ok(())
        }
    }

    fn check_set(&self, s: NodeSet) -> Result<(), GraphError> {
        match s.max() {
            Some(m) if m > self.n => Err(GraphError::NodeOutOfRange { node: m, n: self.n }),
            _ => Ok(()),
        }
    }

    fn closure(&self, start: NodeSet, step: &[NodeSet]) -> NodeSet {
        let mut seen = NodeSet::EMPTY;
        let mut stack: Vec<usize> = start.to_vec();
        while let Some(v) = stack.pop() {
            for u in step[v].iter() {
                if !seen.contains(u) {
                    seen.insert(u);
                    stack.push(u);
                }
            }
        }
        seen
    }

    /// Proper ancestors of any node of `s`.
    pub fn ancestors_of_set(&self, s: NodeSet) -> NodeSet {
        self.closure(s, &self.parents)
    }

    /// Proper descendants of any node of `s`.
    pub fn descendants_of_set(&self, s: NodeSet) -> NodeSet {
        self.closure(s, &self.children)
    }

    /// Relatives of `v`. Ancestors and descendants exclude `v`; nondescendants
    /// are all nodes that are not descendants, so they include `v`.
    pub fn relatives(&self, v: usize, kind: Relation) -> Result<NodeSet, GraphError> {
        self.check_node(v)?;
        let one = NodeSet::singleton(v);
        Ok(match kind {
            Relation::Parents => self.parents[v],
            Relation::Children => self.children[v],
            Relation::Ancestors => self.ancestors_of_set(one),
            Relation::Descendants => self.descendants_of_set(one),
            Relation::NonDescendants => self.nodes().difference(self.descendants_of_set(one)),
        })
    }

    /// `S` together with all ancestors of its members.
    pub fn ancestral_closure(&self, s: NodeSet) -> Result<NodeSet, GraphError> {
        self.check_set(s)?;
        Ok(s.union(self.ancestors_of_set(s)))
    }

    /// The lexicographically least linear extension, if the graph is acyclic.
    fn topological_order(&self) -> Option<Vec<usize>> {
        let mut indeg: Vec<usize> = (0..=self.n).map(|v| if v == 0 { 0 } else { self.parents[v].len() }).collect();
        let mut ready: BTreeSet<usize> = (1..=self.n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(self.n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for c in self.children[v].iter() {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        (order.len() == self.n).then_some(order)
    }

    /// The lexicographically least linear extension. Equals the identity
    /// whenever the identity is a linear extension.
    pub fn default_order(&self) -> Vec<usize> {
        self.topological_order().expect("Dag is acyclic by construction")
    }

    /// Every linear extension, in lexicographic order.
    pub fn topological_orders(&self) -> impl Iterator<Item = Vec<usize>> {
        let mut out = Vec::new();
        let mut prefix = Vec::with_capacity(self.n);
        self.extend_orders(NodeSet::EMPTY, &mut prefix, &mut out);
        out.into_iter()
    }

    fn extend_orders(&self, placed: NodeSet, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == self.n {
            out.push(prefix.clone());
            return;
        }
        for v in 1..=self.n {
            if !placed.contains(v) && self.parents[v].is_subset(placed) {
                prefix.push(v);
                self.extend_orders(placed.with(v), prefix, out);
                prefix.pop();
            }
        }
    }

    fn check_permutation(&self, pi: &[usize]) -> Result<(), GraphError> {
        let set: NodeSet = pi.iter().copied().filter(|&v| v >= 1 && v <= self.n).collect();
        if pi.len() != self.n || set != self.nodes() {
            return Err(GraphError::NotPermutation(pi.to_vec(), self.n));
        }
        Ok(())
    }

    pub fn is_linear_extension(&self, pi: &[usize]) -> Result<bool, GraphError> {
        self.check_permutation(pi)?;
        let mut pos = vec![0; self.n + 1];
        for (k, &v) in pi.iter().enumerate() {
            pos[v] = k;
        }
        Ok(self.edges.iter().all(|&(i, j)| pos[i] < pos[j]))
    }

    /// Errors unless `pi` is a linear extension.
    pub fn require_linear_extension(&self, pi: &[usize]) -> Result<(), GraphError> {
        if self.is_linear_extension(pi)? {
            Ok(())
        } else {
            Err(GraphError::NotLinearExtension(pi.to_vec(), self.edge_text()))
        }
    }

    /// Every parent set is complete.
    pub fn is_perfect(&self) -> bool {
        self.non_perfect_witness().is_none()
    }

    /// A node together with two nonadjacent parents, if any.
    pub fn non_perfect_witness(&self) -> Option<(usize, usize, usize)> {
        for v in 1..=self.n {
            let pa = self.parents[v].to_vec();
            for (k, &a) in pa.iter().enumerate() {
                for &b in &pa[k + 1..] {
                    if !self.adjacent(a, b) {
                        return Some((v, a, b));
                    }
                }
            }
        }
        None
    }

    pub fn skeleton(&self) -> UGraph {
        let mut g = UGraph::empty(self.n);
        for &(i, j) in &self.edges {
            g.add_edge(i, j);
        }
        g
    }

    /// Marries the parents of every node, then forgets orientation.
    pub fn moralize(&self) -> UGraph {
        let mut g = self.skeleton();
        for v in 1..=self.n {
            let pa = self.parents[v].to_vec();
            for (k, &a) in pa.iter().enumerate() {
                for &b in &pa[k + 1..] {
                    g.add_edge(a, b);
                }
            }
        }
        g
    }

    /// Triples `(a, c, b)` with `a -> c <- b`, `a < b`, and `a`, `b` nonadjacent.
    pub fn v_structures(&self) -> BTreeSet<(usize, usize, usize)> {
        let mut out = BTreeSet::new();
        for c in 1..=self.n {
            let pa = self.parents[c].to_vec();
            for (k, &a) in pa.iter().enumerate() {
                for &b in &pa[k + 1..] {
                    if !self.adjacent(a, b) {
                        out.insert((a, c, b));
                    }
                }
            }
        }
        out
    }

    /// Nodes outside `given` that are d-connected to some node of `from` given `given`.
    ///
    /// Reachability over (node, direction) states: a trail may pass a
    /// non-collider outside `given`, and a collider that has a descendant in
    /// `given` (equivalently, lies in `given` or among its ancestors).
    pub fn d_connected(&self, from: NodeSet, given: NodeSet) -> NodeSet {
        let anc = given.union(self.ancestors_of_set(given));
        // visited[v] bit 0: arrived from a child (moving up), bit 1: from a parent (moving down)
        let mut visited = vec![0u8; self.n + 1];
        let mut queue: VecDeque<(usize, bool)> = from.iter().map(|v| (v, true)).collect();
        let mut reached = NodeSet::EMPTY;
        while let Some((v, up)) = queue.pop_front() {
            let bit = if up { 1 } else { 2 };
            if visited[v] & bit != 0 {
                continue;
            }
            visited[v] |= bit;
            let observed = given.contains(v);
            if !observed {
                reached.insert(v);
            }
            if up {
                if !observed {
                    queue.extend(self.parents[v].iter().map(|p| (p, true)));
                    queue.extend(self.children[v].iter().map(|c| (c, false)));
                }
            } else {
                if !observed {
                    queue.extend(self.children[v].iter().map(|c| (c, false)));
                }
                if anc.contains(v) {
                    queue.extend(self.parents[v].iter().map(|p| (p, true)));
                }
            }
        }
        reached.difference(from)
    }

    /// Whether `a` and `b` are d-separated given `c`.
    pub fn d_separated(&self, a: NodeSet, b: NodeSet, c: NodeSet) -> Result<bool, GraphError> {
        for s in [a, b, c] {
            self.check_set(s)?;
        }
        if a.is_empty() || b.is_empty() || !a.is_disjoint(b) || !a.is_disjoint(c) || !b.is_disjoint(c) {
            return Err(GraphError::BadSeparationQuery(format!("A={a}, B={b}, C={c}")));
        }
        Ok(self.d_connected(a, c).is_disjoint(b))
    }

    /// Same skeleton and same v-structures.
    pub fn markov_equivalent(&self, other: &Dag) -> Result<bool, GraphError> {
        if self.n != other.n {
            return Err(GraphError::SizeMismatch(self.n, other.n));
        }
        Ok(self.skeleton() == other.skeleton() && self.v_structures() == other.v_structures())
    }

    /// The graph with `dropped` nodes removed and the rest renumbered in order.
    pub fn remove_nodes(&self, dropped: NodeSet) -> Dag {
        let keep: Vec<usize> = (1..=self.n).filter(|v| !dropped.contains(*v)).collect();
        let mut new_id = vec![0; self.n + 1];
        for (k, &v) in keep.iter().enumerate() {
            new_id[v] = k + 1;
        }
        let edges = self
            .edges
            .iter()
            .filter(|(i, j)| !dropped.contains(*i) && !dropped.contains(*j))
            .map(|&(i, j)| (new_id[i], new_id[j]));
        let cards = keep.iter().map(|&v| self.cards[v - 1]).collect();
        Dag::new(keep.len(), edges, cards).expect("subgraph of a DAG is a DAG")
    }
}

impl fmt::Debug for Dag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dag(n={}, [{}], cards={:?})", self.n, self.edge_text(), self.cards)
    }
}

impl fmt::Display for Dag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.edge_text())
    }
}

impl Serialize for Dag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        DagJson { n: self.n, edges: self.edges.iter().map(|&(i, j)| [i, j]).collect(), cards: self.cards.clone() }
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Dag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Dag, D::Error> {
        let raw = DagJson::deserialize(d)?;
        Dag::new(raw.n, raw.edges.into_iter().map(|[i, j]| (i, j)), raw.cards).map_err(serde::de::Error::custom)
    }
}

/// A simple undirected graph on `1..=n`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct UGraph {
    n: usize,
    adj: Vec<NodeSet>,
}

impl UGraph {
    pub fn empty(n: usize) -> UGraph {
        UGraph { n, adj: vec![NodeSet::EMPTY; n + 1] }
    }

    pub fn from_edges<I: IntoIterator<Item = (usize, usize)>>(n: usize, edges: I) -> Result<UGraph, GraphError> {
        let mut g = UGraph::empty(n);
        for (i, j) in edges {
            for v in [i, j] {
                if v == 0 || v > n {
                    return Err(GraphError::NodeOutOfRange { node: v, n });
                }
            }
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            g.add_edge(i, j);
        }
        Ok(g)
    }

    fn add_edge(&mut self, i: usize, j: usize) {
        self.adj[i].insert(j);
        self.adj[j].insert(i);
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj.get(i).is_some_and(|a| a.contains(j))
    }

    pub fn neighbors(&self, v: usize) -> NodeSet {
        self.adj[v]
    }

    /// Edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (1..=self.n)
            .flat_map(|i| self.adj[i].iter().filter(move |&j| j > i).map(move |j| (i, j)))
            .collect()
    }

    pub fn is_clique(&self, s: NodeSet) -> bool {
        s.iter().all(|v| s.difference(NodeSet::singleton(v)).is_subset(self.adj[v]))
    }

    /// Whether eliminating vertices in `order` never needs a fill edge: the
    /// neighbours of each vertex that come later in `order` form a clique.
    pub fn is_perfect_elimination_ordering(&self, order: &[usize]) -> bool {
        if order.len() != self.n || order.iter().copied().collect::<NodeSet>() != NodeSet::full(self.n) {
            return false;
        }
        let mut later = NodeSet::full(self.n);
        for &v in order {
            later.remove(v);
            if !self.is_clique(self.adj[v].intersection(later)) {
                return false;
            }
        }
        true
    }

    /// A perfect elimination ordering, if the graph is chordal. Uses maximum
    /// cardinality search; the reverse visiting order is a PEO exactly when
    /// the graph is chordal.
    pub fn perfect_elimination_ordering(&self) -> Option<Vec<usize>> {
        let mut weight = vec![0usize; self.n + 1];
        let mut numbered = NodeSet::EMPTY;
        let mut visit = Vec::with_capacity(self.n);
        for _ in 0..self.n {
            let v = (1..=self.n)
                .filter(|v| !numbered.contains(*v))
                .max_by_key(|&v| (weight[v], std::cmp::Reverse(v)))?;
            numbered.insert(v);
            visit.push(v);
            for u in self.adj[v].difference(numbered).iter() {
                weight[u] += 1;
            }
        }
        visit.reverse();
        self.is_perfect_elimination_ordering(&visit).then_some(visit)
    }

    pub fn is_chordal(&self) -> bool {
        self.perfect_elimination_ordering().is_some()
    }
}

impl fmt::Debug for UGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.edges().iter().map(|(i, j)| format!("{i}-{j}")).collect();
        write!(f, "UGraph(n={}, [{}])", self.n, parts.join(", "))
    }
}

/// A DAG augmented with one source node `w_I` per nonempty target `I`.
///
/// Base nodes keep their numbers; the `w` nodes are `n+1, n+2, ...` in target
/// order. Duplicate targets get separate `w` nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IDag {
    base: Dag,
    targets: Vec<NodeSet>,
    w_nodes: Vec<Option<usize>>,
    graph: Dag,
}

impl IDag {
    pub fn new(base: &Dag, targets: &[NodeSet]) -> Result<IDag, GraphError> {
        for &t in targets {
            base.check_set(t)?;
        }
        let n = base.n();
        let mut next = n;
        let mut w_nodes = Vec::with_capacity(targets.len());
        let mut edges: Vec<(usize, usize)> = base.edges().to_vec();
        for &t in targets {
            if t.is_empty() {
                w_nodes.push(None);
                continue;
            }
            next += 1;
            w_nodes.push(Some(next));
            edges.extend(t.iter().map(|j| (next, j)));
        }
        if next > MAX_NODES {
            return Err(GraphError::TooLarge);
        }
        let mut cards = base.cards().to_vec();
        cards.resize(next, 2);
        let graph = Dag::new(next, edges, cards)?;
        Ok(IDag { base: base.clone(), targets: targets.to_vec(), w_nodes, graph })
    }

    pub fn base(&self) -> &Dag {
        &self.base
    }

    /// The augmented graph `G^I`.
    pub fn graph(&self) -> &Dag {
        &self.graph
    }

    pub fn targets(&self) -> &[NodeSet] {
        &self.targets
    }

    /// The `w` node of target `k`, or `None` for an empty target.
    pub fn w_node(&self, k: usize) -> Option<usize> {
        self.w_nodes[k]
    }

    pub fn w_set(&self) -> NodeSet {
        self.w_nodes.iter().flatten().copied().collect()
    }

    /// Removes every `w` node, recovering the base graph.
    pub fn strip(&self) -> Dag {
        self.graph.remove_nodes(self.w_set())
    }
}

pub fn i_dag(dag: &Dag, targets: &[NodeSet]) -> Result<IDag, GraphError> {
    IDag::new(dag, targets)
}

/// Largest `n` accepted by [`enumerate_dags`].
pub const ENUMERATION_CAP: usize = 5;

/// Every labeled DAG on `n` binary nodes, each once, sorted by edge list.
pub fn enumerate_dags(n: usize) -> Result<Vec<Dag>, GraphError> {
    enumerate_dags_with_cards(&vec![2; n])
}

/// Every labeled DAG with the given cardinalities, each once, sorted by edge list.
pub fn enumerate_dags_with_cards(cards: &[u32]) -> Result<Vec<Dag>, GraphError> {
    let n = cards.len();
    if n > ENUMERATION_CAP {
        return Err(GraphError::EnumerationCap { n, cap: ENUMERATION_CAP });
    }
    let pairs: Vec<(usize, usize)> = (1..=n).flat_map(|i| (i + 1..=n).map(move |j| (i, j))).collect();
    let total = 3usize.pow(pairs.len() as u32);
    let mut out = Vec::new();
    for code in 0..total {
        let mut c = code;
        let mut edges = Vec::new();
        for &(i, j) in &pairs {
            match c % 3 {
                1 => edges.push((i, j)),
                2 => edges.push((j, i)),
                _ => {}
            }
            c /= 3;
        }
        match Dag::new(n, edges, cards.to_vec()) {
            Ok(d) => out.push(d),
            Err(GraphError::Cycle(_)) => {}
            Err(e) => return Err(e),
        }
    }
    out.sort_by(|a, b| a.edges.cmp(&b.edges));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(v: &[usize]) -> NodeSet {
        v.iter().copied().collect()
    }

    fn chain() -> Dag {
        Dag::binary(3, [(1, 2), (2, 3)]).unwrap()
    }

    fn four_cycle() -> Dag {
        Dag::binary(4, [(1, 2), (1, 3), (2, 4), (3, 4)]).unwrap()
    }

    fn collider() -> Dag {
        Dag::binary(3, [(1, 3), (2, 3)]).unwrap()
    }

    /// Brute-force d-separation: enumerate simple paths in the skeleton and
    /// test each for activeness with the collider-descendant rule.
    fn dsep_by_paths(g: &Dag, a: NodeSet, b: NodeSet, c: NodeSet) -> bool {
        fn walk(g: &Dag, path: &mut Vec<usize>, b: NodeSet, c: NodeSet, found: &mut bool) {
            if *found {
                return;
            }
            let last = *path.last().unwrap();
            if path.len() >= 2 && b.contains(last) {
                let mut active = true;
                for k in 1..path.len() - 1 {
                    let (x, y, z) = (path[k - 1], path[k], path[k + 1]);
                    let collider = g.has_edge(x, y) && g.has_edge(z, y);
                    if collider {
                        let desc = g.descendants_of_set(NodeSet::singleton(y)).with(y);
                        if desc.is_disjoint(c) {
                            active = false;
                        }
                    } else if c.contains(y) {
                        active = false;
                    }
                }
                if active {
                    *found = true;
                }
                return;
            }
            for u in 1..=g.n() {
                if g.adjacent(last, u) && !path.contains(&u) {
                    path.push(u);
                    walk(g, path, b, c, found);
                    path.pop();
                }
            }
        }
        let mut found = false;
        for s in a.iter() {
            walk(g, &mut vec![s], b, c, &mut found);
        }
        !found
    }

    #[test]
    fn relatives_of_small_graphs() {
        let g = chain();
        assert_eq!(g.relatives(3, Relation::Ancestors).unwrap(), set(&[1, 2]));
        assert_eq!(g.relatives(2, Relation::Parents).unwrap(), set(&[1]));
        assert_eq!(g.relatives(1, Relation::NonDescendants).unwrap(), set(&[1]));
        assert_eq!(g.relatives(2, Relation::Children).unwrap(), set(&[3]));
        assert_eq!(four_cycle().relatives(4, Relation::Parents).unwrap(), set(&[2, 3]));
        assert!(matches!(g.relatives(4, Relation::Parents), Err(GraphError::NodeOutOfRange { .. })));
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(matches!(Dag::binary(2, [(1, 2), (2, 1)]), Err(GraphError::Cycle(_))));
        assert!(matches!(Dag::binary(2, [(1, 1)]), Err(GraphError::SelfLoop(1))));
        assert!(matches!(Dag::binary(2, [(1, 3)]), Err(GraphError::NodeOutOfRange { .. })));
        assert!(matches!(Dag::new(2, [], vec![2, 1]), Err(GraphError::Cardinality { .. })));
        assert_eq!(chain().to_string(), "1->2, 2->3");
    }

    #[test]
    fn linear_extensions() {
        let g = chain();
        assert!(g.is_linear_extension(&[1, 2, 3]).unwrap());
        assert!(!g.is_linear_extension(&[3, 2, 1]).unwrap());
        assert!(g.is_linear_extension(&[1, 2]).is_err());
        let orders: Vec<_> = four_cycle().topological_orders().collect();
        assert_eq!(orders, vec![vec![1, 2, 3, 4], vec![1, 3, 2, 4]]);
        let reversed = Dag::binary(3, [(3, 2), (2, 1)]).unwrap();
        assert_eq!(reversed.default_order(), vec![3, 2, 1]);
    }

    #[test]
    fn perfectness() {
        assert!(chain().is_perfect());
        assert!(!four_cycle().is_perfect());
        assert!(Dag::binary(3, []).unwrap().is_perfect());
        assert_eq!(four_cycle().non_perfect_witness(), Some((4, 2, 3)));
    }

    #[test]
    fn moral_graphs() {
        assert_eq!(chain().moralize().edges(), vec![(1, 2), (2, 3)]);
        assert_eq!(collider().moralize().edges(), vec![(1, 2), (1, 3), (2, 3)]);
        let m = four_cycle().moralize();
        assert_eq!(m.edges(), vec![(1, 2), (1, 3), (2, 3), (2, 4), (3, 4)]);
    }

    #[test]
    fn chordality() {
        let tri = UGraph::from_edges(3, [(1, 2), (2, 3), (1, 3)]).unwrap();
        assert!(tri.is_chordal());
        let c4 = UGraph::from_edges(4, [(1, 2), (2, 3), (3, 4), (1, 4)]).unwrap();
        assert!(!c4.is_chordal());
        assert!(four_cycle().moralize().is_chordal());
    }

    #[test]
    fn d_separation_examples() {
        let e = NodeSet::EMPTY;
        assert!(chain().d_separated(set(&[1]), set(&[3]), set(&[2])).unwrap());
        assert!(!chain().d_separated(set(&[1]), set(&[3]), e).unwrap());
        assert!(collider().d_separated(set(&[1]), set(&[2]), e).unwrap());
        assert!(!collider().d_separated(set(&[1]), set(&[2]), set(&[3])).unwrap());
        assert!(four_cycle().d_separated(set(&[1]), set(&[4]), set(&[2, 3])).unwrap());
        assert!(chain().d_separated(e, set(&[3]), e).is_err());
        assert!(chain().d_separated(set(&[1]), set(&[1]), e).is_err());
    }

    #[test]
    fn markov_equivalence_examples() {
        let g1 = chain();
        let g2 = Dag::binary(3, [(2, 1), (2, 3)]).unwrap();
        let g3 = Dag::binary(3, [(3, 2), (2, 1)]).unwrap();
        for (a, b) in [(&g1, &g2), (&g1, &g3), (&g2, &g3)] {
            assert!(a.markov_equivalent(b).unwrap());
        }
        let v = Dag::binary(3, [(1, 2), (3, 2)]).unwrap();
        assert!(!g1.markov_equivalent(&v).unwrap());
        assert!(g1.markov_equivalent(&g1).unwrap());
        assert!(g1.markov_equivalent(&four_cycle()).is_err());
    }

    #[test]
    fn interventional_graphs() {
        let g = chain();
        let i = i_dag(&g, &[NodeSet::EMPTY, set(&[1])]).unwrap();
        assert_eq!(i.graph().n(), 4);
        assert_eq!(i.graph().children(4), set(&[1]));
        assert_eq!(i.w_node(0), None);
        let only_obs = i_dag(&g, &[NodeSet::EMPTY]).unwrap();
        assert_eq!(only_obs.graph(), &g);
        let two = i_dag(&g, &[NodeSet::EMPTY, set(&[1]), set(&[2, 3])]).unwrap();
        assert_eq!(two.graph().edges(), &[(1, 2), (2, 3), (4, 1), (5, 2), (5, 3)]);
        assert_eq!(two.strip(), g);
        assert!(i_dag(&g, &[set(&[4])]).is_err());
    }

    #[test]
    fn ancestral_closures() {
        assert_eq!(chain().ancestral_closure(set(&[1])).unwrap(), set(&[1]));
        let rev = Dag::binary(3, [(3, 2), (2, 1)]).unwrap();
        assert_eq!(rev.ancestral_closure(set(&[1])).unwrap(), set(&[1, 2, 3]));
        assert_eq!(rev.ancestral_closure(NodeSet::EMPTY).unwrap(), NodeSet::EMPTY);
    }

    /// Independent count: every relation on ordered pairs, filtered by
    /// acyclicity through repeated removal of sinks.
    fn count_dags_by_relations(n: usize) -> usize {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect();
        let mut count = 0;
        for mask in 0u64..(1 << pairs.len()) {
            let mut alive: Vec<bool> = vec![true; n];
            let has = |i: usize, j: usize| pairs.iter().position(|&p| p == (i, j)).is_some_and(|k| mask >> k & 1 == 1);
            loop {
                let sink = (0..n).find(|&v| alive[v] && (0..n).all(|u| !alive[u] || !has(v, u)));
                match sink {
                    Some(v) => alive[v] = false,
                    None => break,
                }
            }
            if alive.iter().all(|a| !a) {
                count += 1;
            }
        }
        count
    }

    #[test]
    fn dag_counts_match_brute_force() {
        assert_eq!(enumerate_dags(1).unwrap().len(), 1);
        for n in 1..=4 {
            let expected = count_dags_by_relations(n);
            assert_eq!(enumerate_dags(n).unwrap().len(), expected, "n = {n}");
        }
        assert_eq!(enumerate_dags(3).unwrap().len(), 25);
        assert_eq!(enumerate_dags(4).unwrap().len(), 543);
        assert!(enumerate_dags(6).is_err());
    }

    #[test]
    fn enumeration_is_sorted_and_distinct() {
        let all = enumerate_dags(4).unwrap();
        for w in all.windows(2) {
            assert!(w[0].edges() < w[1].edges());
        }
    }

    #[test]
    fn reachability_matches_path_enumeration() {
        for n in 1..=4 {
            for g in enumerate_dags(n).unwrap() {
                let full = g.nodes();
                for c in full.subsets() {
                    let rest = full.difference(c);
                    for a in rest.subsets().filter(|s| !s.is_empty()) {
                        for b in rest.difference(a).subsets().filter(|s| !s.is_empty()) {
                            assert_eq!(
                                g.d_separated(a, b, c).unwrap(),
                                dsep_by_paths(&g, a, b, c),
                                "{g:?} {a} {b} {c}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn reachability_matches_paths_on_sampled_five_node_graphs() {
        let all = enumerate_dags(5).unwrap();
        for g in all.iter().step_by(97) {
            let full = g.nodes();
            for c in full.subsets().step_by(3) {
                let rest = full.difference(c);
                for a in rest.iter() {
                    for b in rest.iter().filter(|&b| b > a) {
                        let (a, b) = (NodeSet::singleton(a), NodeSet::singleton(b));
                        assert_eq!(g.d_separated(a, b, c).unwrap(), dsep_by_paths(g, a, b, c));
                    }
                }
            }
        }
    }

    #[test]
    fn perfect_dags_have_chordal_skeletons_with_peo_extensions() {
        for n in 1..=4 {
            for g in enumerate_dags(n).unwrap() {
                if !g.is_perfect() {
                    continue;
                }
                let skel = g.skeleton();
                assert!(skel.is_chordal(), "{g:?}");
                for pi in g.topological_orders() {
                    // a linear extension eliminates sinks last, so the reversed order is the PEO
                    let rev: Vec<usize> = pi.iter().rev().copied().collect();
                    assert!(skel.is_perfect_elimination_ordering(&rev), "{g:?} {pi:?}");
                }
            }
        }
    }

    #[test]
    fn chordality_matches_brute_force_orderings() {
        fn perms(n: usize) -> Vec<Vec<usize>> {
            if n == 0 {
                return vec![vec![]];
            }
            let mut out = Vec::new();
            for p in perms(n - 1) {
                for k in 0..=p.len() {
                    let mut q = p.clone();
                    q.insert(k, n);
                    out.push(q);
                }
            }
            out
        }
        for n in 1..=5 {
            let pairs: Vec<(usize, usize)> = (1..=n).flat_map(|i| (i + 1..=n).map(move |j| (i, j))).collect();
            let all_perms = perms(n);
            for mask in (0u32..(1 << pairs.len())).step_by(if n == 5 { 7 } else { 1 }) {
                let edges = pairs.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, &e)| e);
                let g = UGraph::from_edges(n, edges).unwrap();
                let brute = all_perms.iter().any(|p| g.is_perfect_elimination_ordering(p));
                assert_eq!(g.is_chordal(), brute, "{g:?}");
            }
        }
    }

    proptest! {
        #[test]
        fn closure_is_idempotent_and_monotone(idx in 0usize..543, s in 0u64..16, t in 0u64..16) {
            let all = enumerate_dags(4).unwrap();
            let g = &all[idx];
            let (s, t) = (NodeSet::from_bits(s), NodeSet::from_bits(t));
            let cs = g.ancestral_closure(s).unwrap();
            prop_assert_eq!(g.ancestral_closure(cs).unwrap(), cs);
            prop_assert!(g.ancestral_closure(s.intersection(t)).unwrap().is_subset(cs));
        }

        #[test]
        fn d_separation_is_symmetric(idx in 0usize..543, a in 1usize..5, b in 1usize..5, c in 0u64..16) {
            prop_assume!(a != b);
            let all = enumerate_dags(4).unwrap();
            let g = &all[idx];
            let c = NodeSet::from_bits(c).difference(NodeSet::from_iter([a, b]));
            let (a, b) = (NodeSet::singleton(a), NodeSet::singleton(b));
            prop_assert_eq!(g.d_separated(a, b, c).unwrap(), g.d_separated(b, a, c).unwrap());
        }

        #[test]
        fn stripping_w_nodes_recovers_base(idx in 0usize..543, t1 in 0u64..16, t2 in 0u64..16) {
            let all = enumerate_dags(4).unwrap();
            let g = &all[idx];
            let i = i_dag(g, &[NodeSet::EMPTY, NodeSet::from_bits(t1), NodeSet::from_bits(t2)]).unwrap();
            prop_assert_eq!(&i.strip(), g);
            for w in i.w_set().iter() {
                prop_assert!(i.graph().parents(w).is_empty());
            }
        }
    }
}
