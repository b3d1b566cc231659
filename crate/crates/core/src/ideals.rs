//! Generators of the conditional independence, predecessor, model-invariant
//! and interventional ideals, the toric monomial maps of staged trees, and
//! kernel membership for binomials.

pub mod cas;

use std::collections::{BTreeSet, HashSet};

use serde::Serialize;
use thiserror::Error;

use crate::graph::{Dag, GraphError, NodeSet};
use crate::interventional::{all_invariance_pairs, ITreeError, InterventionalTree, TargetCollection};
use crate::polynomial::{Monomial, PolyError, Polynomial, Symbol};
use crate::staged_tree::StagedTree;

/// Largest node count for which global Markov statements are enumerated.
pub const GLOBAL_CAP: usize = 6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdealError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Interventional(#[from] ITreeError),
    #[error("statement {0}: both sides must be nonempty")]
    EmptySide(String),
    #[error("statement {0}: the three sets must be pairwise disjoint")]
    Overlap(String),
    #[error("global Markov statements are enumerated for at most {cap} nodes, got {n}")]
    TooManyNodes { n: usize, cap: usize },
    #[error("the ideal needs the empty target; for purely interventional collections only per-target ideals are defined")]
    PurelyInterventional,
    #[error("monomial contains {0}, which is not an indeterminate of the map")]
    UnknownIndeterminate(String),
}

/// The statement `X_A ⊥ X_B | X_C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct CiStatement {
    pub a: NodeSet,
    pub b: NodeSet,
    pub c: NodeSet,
}

impl CiStatement {
    pub fn new(a: NodeSet, b: NodeSet, c: NodeSet) -> CiStatement {
        CiStatement { a, b, c }
    }

    pub fn swapped(self) -> CiStatement {
        CiStatement { a: self.b, b: self.a, c: self.c }
    }

    fn check(&self, n: usize) -> Result<(), IdealError> {
        if self.a.is_empty() || self.b.is_empty() {
            return Err(IdealError::EmptySide(self.to_string()));
        }
        if !self.a.is_disjoint(self.b) || !self.a.is_disjoint(self.c) || !self.b.is_disjoint(self.c) {
            return Err(IdealError::Overlap(self.to_string()));
        }
        let all = self.a.union(self.b).union(self.c);
        match all.max() {
            Some(m) if m > n || all.contains(0) => Err(GraphError::NodeOutOfRange { node: m, n }.into()),
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for CiStatement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let list = |s: NodeSet| s.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        write!(f, "{} _||_ {}", list(self.a), list(self.b))?;
        if !self.c.is_empty() {
            write!(f, " | {}", list(self.c))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CiVariant {
    /// Unordered pairs of `x_A` and of `x_B` values, all `x_C`.
    Full,
    /// All `x_A`, unordered pairs of `x_B` values, all `x_C`; the second
    /// factors marginalize `A` away.
    Star,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MarkovKind {
    Local,
    Global,
    Ordered(Vec<usize>),
}

/// Leaf indeterminates `p<x><suffix>` of a joint table over nodes `1..=n`,
/// with `x` the outcome digits of nodes `1..=n` in order.
#[derive(Debug, Clone)]
pub struct JointTable {
    cards: Vec<u32>,
    outcomes: Vec<Vec<u32>>,
    symbols: Vec<Symbol>,
}

impl JointTable {
    pub fn new(cards: &[u32], suffix: &str) -> JointTable {
        let outcomes = assignments_of(cards, NodeSet::full(cards.len()))
            .into_iter()
            .map(|a| a.into_iter().map(|(_, x)| x).collect::<Vec<u32>>())
            .collect::<Vec<_>>();
        let symbols = outcomes
            .iter()
            .map(|x| {
                let digits: String = x.iter().map(|&d| crate::staged_tree::digit(d)).collect();
                Symbol::new(&format!("p{digits}{suffix}"))
            })
            .collect();
        JointTable { cards: cards.to_vec(), outcomes, symbols }
    }

    pub fn of_dag(dag: &Dag) -> JointTable {
        JointTable::new(dag.cards(), "")
    }

    /// Indeterminates of the distribution under target number `s`.
    pub fn of_target(dag: &Dag, s: usize) -> JointTable {
        JointTable::new(dag.cards(), &format!("t{s}"))
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    /// Sum of the indeterminates agreeing with `fixed` (pairs of node and value).
    pub fn marginal(&self, fixed: &[(usize, u32)]) -> Polynomial {
        let matching = self
            .outcomes
            .iter()
            .zip(&self.symbols)
            .filter(|(x, _)| fixed.iter().all(|&(v, val)| x[v - 1] == val))
            .map(|(_, s)| s);
        Polynomial::sum_of_vars(matching)
    }

    fn assignments(&self, set: NodeSet) -> Vec<Vec<(usize, u32)>> {
        assignments_of(&self.cards, set)
    }
}

/// All outcomes of the nodes in `set`, lexicographic with the smallest node
/// varying slowest.
fn assignments_of(cards: &[u32], set: NodeSet) -> Vec<Vec<(usize, u32)>> {
    let mut out = vec![Vec::new()];
    for v in set.iter() {
        let mut next = Vec::with_capacity(out.len() * cards[v - 1] as usize);
        for prefix in &out {
            for x in 0..cards[v - 1] {
                let mut a: Vec<(usize, u32)> = prefix.clone();
                a.push((v, x));
                next.push(a);
            }
        }
        out = next;
    }
    out
}

fn joined(parts: &[&[(usize, u32)]]) -> Vec<(usize, u32)> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

/// One generator and the statement, stage pair or invariance pair behind it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Generator {
    #[serde(serialize_with = "as_display")]
    pub polynomial: Polynomial,
    pub source: String,
}

fn as_display<S: serde::Serializer>(p: &Polynomial, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(p)
}

/// A ring of named indeterminates and a list of sign-normalized, distinct,
/// nonzero generators in emission order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IdealPresentation {
    pub name: String,
    #[serde(serialize_with = "symbols_as_strings")]
    ring: Vec<Symbol>,
    generators: Vec<Generator>,
    /// Factors of the element `p` to saturate by when checking externally.
    #[serde(skip_serializing_if = "Vec::is_empty", serialize_with = "displays")]
    saturate_by: Vec<Polynomial>,
    #[serde(skip)]
    seen: HashSet<Polynomial>,
}

fn symbols_as_strings<S: serde::Serializer>(ring: &[Symbol], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(ring.iter().map(|x| x.name()))
}

fn displays<S: serde::Serializer>(ps: &[Polynomial], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(ps.iter().map(|p| p.to_string()))
}

impl IdealPresentation {
    pub fn new(name: &str, ring: Vec<Symbol>) -> IdealPresentation {
        IdealPresentation { name: name.to_string(), ring, generators: Vec::new(), saturate_by: Vec::new(), seen: HashSet::new() }
    }

    /// Adds `poly` in canonical form unless it is zero or already present.
    pub fn push(&mut self, poly: Polynomial, source: impl Into<String>) -> bool {
        if poly.is_zero() {
            return false;
        }
        let poly = poly.normalized();
        if !self.seen.insert(poly.clone()) {
            return false;
        }
        self.generators.push(Generator { polynomial: poly, source: source.into() });
        true
    }

    pub fn extend(&mut self, other: IdealPresentation) {
        for g in other.generators {
            self.push(g.polynomial, g.source);
        }
    }

    pub fn ring(&self) -> &[Symbol] {
        &self.ring
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn polynomials(&self) -> impl Iterator<Item = &Polynomial> {
        self.generators.iter().map(|g| &g.polynomial)
    }

    pub fn polynomial_set(&self) -> BTreeSet<Polynomial> {
        self.polynomials().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    /// Factors of the saturating element, kept unexpanded.
    pub fn saturate_by(&self) -> &[Polynomial] {
        &self.saturate_by
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("presentation serializes")
    }
}

/// Generators of the statement's CI ideal over `table`, added to `out`.
fn push_ci(out: &mut IdealPresentation, table: &JointTable, st: &CiStatement, variant: CiVariant, tag: &str) {
    let xas = table.assignments(st.a);
    let xbs = table.assignments(st.b);
    let xcs = table.assignments(st.c);
    let source = format!("{tag}{st}");
    for xc in &xcs {
        for k in 0..xbs.len() {
            for l in k + 1..xbs.len() {
                let (xb, xb2) = (&xbs[k], &xbs[l]);
                match variant {
                    CiVariant::Full => {
                        for i in 0..xas.len() {
                            for j in i + 1..xas.len() {
                                let (xa, xa2) = (&xas[i], &xas[j]);
                                let m = |a: &[(usize, u32)], b: &[(usize, u32)]| table.marginal(&joined(&[a, b, xc]));
                                let g = m(xa, xb).mul(&m(xa2, xb2)).sub(&m(xa, xb2).mul(&m(xa2, xb)));
                                out.push(g, source.clone());
                            }
                        }
                    }
                    CiVariant::Star => {
                        let bc = table.marginal(&joined(&[xb, xc]));
                        let b2c = table.marginal(&joined(&[xb2, xc]));
                        for xa in &xas {
                            let abc = table.marginal(&joined(&[xa, xb, xc]));
                            let ab2c = table.marginal(&joined(&[xa, xb2, xc]));
                            out.push(abc.mul(&b2c).sub(&ab2c.mul(&bc)), source.clone());
                        }
                    }
                }
            }
        }
    }
}

/// Generators of the CI ideal of one statement, with marginals expanded
/// into the indeterminates of `table`.
pub fn ci_generators(st: &CiStatement, table: &JointTable, variant: CiVariant) -> Result<IdealPresentation, IdealError> {
    st.check(table.cards.len())?;
    let name = match variant {
        CiVariant::Full => "ci",
        CiVariant::Star => "ci-star",
    };
    let mut out = IdealPresentation::new(name, table.symbols().to_vec());
    push_ci(&mut out, table, st, variant, "");
    Ok(out)
}

/// Sum of the CI ideals of a list of statements.
pub fn ci_ideal(
    name: &str,
    statements: &[CiStatement],
    table: &JointTable,
    variant: CiVariant,
) -> Result<IdealPresentation, IdealError> {
    let mut out = IdealPresentation::new(name, table.symbols().to_vec());
    for st in statements {
        st.check(table.cards.len())?;
        push_ci(&mut out, table, st, variant, "");
    }
    Ok(out)
}

/// Local, global or ordered Markov statements with a nonempty second side.
/// Global statements are listed with `min(A) < min(B)` so that each
/// unordered pair of sides appears once.
pub fn markov_statement_lists(dag: &Dag, kind: &MarkovKind) -> Result<Vec<CiStatement>, IdealError> {
    let mut out = Vec::new();
    match kind {
        MarkovKind::Local => {
            for v in 1..=dag.n() {
                let pa = dag.parents(v);
                let b = dag.nodes().difference(dag.descendants_of_set(NodeSet::singleton(v))).difference(pa).without(v);
                if !b.is_empty() {
                    out.push(CiStatement::new(NodeSet::singleton(v), b, pa));
                }
            }
        }
        MarkovKind::Ordered(pi) => {
            dag.require_linear_extension(pi)?;
            let mut pred = NodeSet::EMPTY;
            for &v in pi {
                let pa = dag.parents(v);
                let b = pred.difference(pa);
                if !b.is_empty() {
                    out.push(CiStatement::new(NodeSet::singleton(v), b, pa));
                }
                pred.insert(v);
            }
        }
        MarkovKind::Global => {
            if dag.n() > GLOBAL_CAP {
                return Err(IdealError::TooManyNodes { n: dag.n(), cap: GLOBAL_CAP });
            }
            let all = dag.nodes();
            for a in all.subsets().filter(|a| !a.is_empty()) {
                for b in all.difference(a).subsets().filter(|&b| !b.is_empty() && a.min() < b.min()) {
                    for c in all.difference(a).difference(b).subsets() {
                        if dag.d_separated(a, b, c)? {
                            out.push(CiStatement::new(a, b, c));
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

trait Without {
    fn without(self, v: usize) -> NodeSet;
}

impl Without for NodeSet {
    fn without(self, v: usize) -> NodeSet {
        let mut s = self;
        s.remove(v);
        s
    }
}

/// `p_[v] p_[w'] - p_[v'] p_[w]` for every unordered same-stage pair `v, w`
/// at depth `from_depth` or below and every label of their floret.
fn model_invariants_from(tree: &StagedTree, from_depth: usize, name: &str) -> IdealPresentation {
    let mut out = IdealPresentation::new(name, tree.leaf_symbols().to_vec());
    let mut marginal: Vec<Option<Polynomial>> = vec![None; tree.len()];
    let mut p = |v: usize| marginal[v].get_or_insert_with(|| tree.marginal(v)).clone();
    for (s, stage) in tree.stages().iter().enumerate() {
        if tree.depth(stage[0]) < from_depth {
            continue;
        }
        let labels = tree.stage_labels(s);
        for i in 0..stage.len() {
            for j in i + 1..stage.len() {
                let (v, w) = (stage[i], stage[j]);
                for l in &labels {
                    let v2 = tree.child_with_label(v, l).expect("stage floret");
                    let w2 = tree.child_with_label(w, l).expect("stage floret");
                    let g = p(v).mul(&p(w2)).sub(&p(v2).mul(&p(w)));
                    out.push(g, format!("stage {s}: {} ~ {} via {l}", tree.name(v), tree.name(w)));
                }
            }
        }
    }
    let mut distinct = HashSet::new();
    for v in 0..tree.len() {
        if tree.depth(v) >= from_depth && distinct.insert(tree.leaves_under(v)) {
            out.saturate_by.push(p(v));
        }
    }
    out
}

pub fn model_invariant_generators(tree: &StagedTree) -> IdealPresentation {
    model_invariants_from(tree, 0, "model-invariants")
}

/// Model invariants of an interventional tree; marginals live inside one
/// subtree below the splitting level, so pairs may link two subtrees.
pub fn interventional_model_invariant_generators(it: &InterventionalTree) -> IdealPresentation {
    model_invariants_from(it.tree(), it.k_star(), "model-invariants")
}

/// The star CI ideal of the ordered Markov statements for `pi`.
pub fn pred_star_generators(dag: &Dag, pi: &[usize]) -> Result<IdealPresentation, IdealError> {
    let sts = markov_statement_lists(dag, &MarkovKind::Ordered(pi.to_vec()))?;
    ci_ideal("pred-star", &sts, &JointTable::of_dag(dag), CiVariant::Star)
}

pub fn pred_generators(dag: &Dag, pi: &[usize]) -> Result<IdealPresentation, IdealError> {
    let sts = markov_statement_lists(dag, &MarkovKind::Ordered(pi.to_vec()))?;
    ci_ideal("pred", &sts, &JointTable::of_dag(dag), CiVariant::Full)
}

pub fn local_generators(dag: &Dag) -> Result<IdealPresentation, IdealError> {
    let sts = markov_statement_lists(dag, &MarkovKind::Local)?;
    ci_ideal("local", &sts, &JointTable::of_dag(dag), CiVariant::Full)
}

pub fn global_generators(dag: &Dag) -> Result<IdealPresentation, IdealError> {
    let sts = markov_statement_lists(dag, &MarkovKind::Global)?;
    ci_ideal("global", &sts, &JointTable::of_dag(dag), CiVariant::Full)
}

fn target_ring(dag: &Dag, targets: &TargetCollection) -> (Vec<JointTable>, Vec<Symbol>) {
    let tables: Vec<JointTable> = (0..targets.len()).map(|s| JointTable::of_target(dag, s)).collect();
    let ring = tables.iter().flat_map(|t| t.symbols().iter().cloned()).collect();
    (tables, ring)
}

/// `p^(I)_{x_A x_C +} p^(∅)_{x_C +} - p^(∅)_{x_A x_C +} p^(I)_{x_C +}` over every
/// invariance pair `(A, C)` of every target and every outcome. Target `s`
/// uses the indeterminates `p<x>t<s>`; the first empty target plays `∅`.
pub fn inv_ideal_generators(dag: &Dag, targets: &TargetCollection) -> Result<IdealPresentation, IdealError> {
    let e = targets.empty_index().ok_or(IdealError::PurelyInterventional)?;
    let pairs = all_invariance_pairs(dag, targets)?;
    let (tables, ring) = target_ring(dag, targets);
    let mut out = IdealPresentation::new("inv", ring);
    let obs = &tables[e];
    for entry in &pairs {
        let t = &tables[entry.target];
        for &(a, c) in &entry.pairs {
            let source = format!("t{} invariance A={a} C={c}", entry.target);
            for xc in &t.assignments(c) {
                let obs_c = obs.marginal(xc);
                let int_c = t.marginal(xc);
                for xa in &t.assignments(a) {
                    let ac = joined(&[xa, xc]);
                    let g = t.marginal(&ac).mul(&obs_c).sub(&obs.marginal(&ac).mul(&int_c));
                    out.push(g, source.clone());
                }
            }
        }
    }
    Ok(out)
}

/// Global CI ideal of `dag` in the indeterminates of every target, one copy per target.
pub fn per_target_global_generators(dag: &Dag, targets: &TargetCollection) -> Result<IdealPresentation, IdealError> {
    let sts = markov_statement_lists(dag, &MarkovKind::Global)?;
    let (tables, ring) = target_ring(dag, targets);
    let mut out = IdealPresentation::new("per-target-global", ring);
    for (s, t) in tables.iter().enumerate() {
        for st in &sts {
            push_ci(&mut out, t, st, CiVariant::Full, &format!("t{s} "));
        }
    }
    Ok(out)
}

/// Invariance generators followed by the per-target global CI generators.
pub fn i_ci_ideal(dag: &Dag, targets: &TargetCollection) -> Result<IdealPresentation, IdealError> {
    let mut out = inv_ideal_generators(dag, targets)?;
    out.name = "i-ci".to_string();
    out.extend(per_target_global_generators(dag, targets)?);
    Ok(out)
}

/// A monomial map on leaf indeterminates together with the floret
/// sum-to-one relations of the target ring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToricMap {
    pub name: String,
    source: Vec<Symbol>,
    target: Vec<Symbol>,
    images: Vec<Monomial>,
    relations: Vec<Polynomial>,
}

impl ToricMap {
    pub fn source(&self) -> &[Symbol] {
        &self.source
    }

    pub fn target(&self) -> &[Symbol] {
        &self.target
    }

    pub fn images(&self) -> &[Monomial] {
        &self.images
    }

    /// Floret relations `sum of labels - 1`, one per stage.
    pub fn relations(&self) -> &[Polynomial] {
        &self.relations
    }

    pub fn image(&self, s: &Symbol) -> Option<&Monomial> {
        self.source.iter().position(|x| x == s).map(|k| &self.images[k])
    }

    pub fn apply(&self, poly: &Polynomial) -> Result<Polynomial, IdealError> {
        Ok(poly.map_monomials(&|s| self.image(s).cloned())?)
    }

    /// Whether `poly` maps to zero, i.e. lies in the kernel of the monomial map.
    pub fn contains(&self, poly: &Polynomial) -> Result<bool, IdealError> {
        Ok(self.apply(poly)?.is_zero())
    }

    fn monomial_image(&self, m: &Monomial) -> Result<Monomial, IdealError> {
        let mut acc = Monomial::one();
        for (s, e) in m.factors() {
            let im = self.image(s).ok_or_else(|| IdealError::UnknownIndeterminate(s.to_string()))?;
            acc = acc.mul(&im.pow(*e));
        }
        Ok(acc)
    }
}

/// Whether `lhs - rhs` lies in the kernel, i.e. the two images coincide.
pub fn binomial_in_toric_kernel(map: &ToricMap, lhs: &Monomial, rhs: &Monomial) -> Result<bool, IdealError> {
    Ok(map.monomial_image(lhs)? == map.monomial_image(rhs)?)
}

fn fresh_symbol(base: &str, taken: &[Symbol]) -> Symbol {
    let mut name = base.to_string();
    let mut k = 0;
    while taken.iter().any(|s| s.name() == name) {
        k += 1;
        name = format!("{base}{k}");
    }
    Symbol::new(&name)
}

fn floret_relations(tree: &StagedTree, from_depth: usize) -> Vec<Polynomial> {
    let mut out = Vec::new();
    for (s, stage) in tree.stages().iter().enumerate() {
        if tree.depth(stage[0]) >= from_depth {
            out.push(Polynomial::sum_of_vars(tree.stage_labels(s).iter()).sub(&Polynomial::one()));
        }
    }
    out
}

/// `p_l -> z * (product of the labels on the root-to-leaf path)`.
pub fn toric_images(tree: &StagedTree) -> ToricMap {
    let labels = tree.labels();
    let z = fresh_symbol("z", &labels);
    let images = tree
        .leaves()
        .iter()
        .map(|&leaf| Monomial::var(z.clone()).mul(&Monomial::product(tree.path_labels(leaf).iter())))
        .collect();
    let mut target = vec![z];
    target.extend(labels);
    ToricMap {
        name: "toric".to_string(),
        source: tree.leaf_symbols().to_vec(),
        target,
        images,
        relations: floret_relations(tree, 0),
    }
}

/// `p^(u)_l -> (labels from the root to u) * (labels from u to l)`. The
/// action labels on the way to `u` act as the homogenizer of subtree `u`.
pub fn toric_images_interventional(it: &InterventionalTree) -> ToricMap {
    let tree = it.tree();
    let images = tree.leaves().iter().map(|&leaf| Monomial::product(tree.path_labels(leaf).iter())).collect();
    ToricMap {
        name: "toric".to_string(),
        source: tree.leaf_symbols().to_vec(),
        target: tree.labels(),
        images,
        relations: floret_relations(tree, it.k_star()),
    }
}

/// Convenience: the model-invariant binomials of a presentation whose two
/// terms are single monomials, with their kernel membership.
pub fn binomial_memberships(map: &ToricMap, pres: &IdealPresentation) -> Result<Vec<(Polynomial, bool)>, IdealError> {
    let mut out = Vec::new();
    for g in pres.polynomials() {
        if let Some((a, b)) = g.as_binomial() {
            out.push((g.clone(), binomial_in_toric_kernel(map, a, b)?));
        }
    }
    Ok(out)
}
