//! Exact-arithmetic checks: seeded parameter sampling, vanishing of ideal
//! generators at model points, round trips, and exhaustive sweeps that
//! compare two independently computed sides of an equivalence.

use std::collections::{BTreeSet, HashMap};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::graph::{enumerate_dags_with_cards, Dag, GraphError, NodeSet};
use crate::ideals::{model_invariant_generators, pred_star_generators, IdealError, IdealPresentation};
use crate::interventional::{criterion_holds, ITreeError, InterventionalTree, TargetCollection};
use crate::polynomial::Symbol;
use crate::staged_tree::{Assignment, ParamError, StagedTree, TreeError};

/// Seed used by sampled sweeps when none is given.
pub const DEFAULT_SEED: u64 = 0xA1_6E0;

/// Environment variable capping the number of sweep workers.
pub const THREADS_ENV: &str = "STKIT_THREADS";

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    ITree(#[from] ITreeError),
    #[error(transparent)]
    Ideal(#[from] IdealError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("point {index} has {got} coordinates, the ring has {expected}")]
    Dimension { index: usize, expected: usize, got: usize },
    #[error("{0}")]
    Precondition(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// A point of the parameter space of a tree: one positive rational per
/// label, summing to one over every floret.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThetaSample {
    pub seed: u64,
    pub values: Assignment,
}

/// Draws integers in `1..=100` per label, stage by stage, and normalizes
/// each stage's draws. Labels shared by a stage are drawn once.
pub fn sample_theta(tree: &StagedTree, seed: u64) -> ThetaSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Assignment::new();
    for s in 0..tree.stages().len() {
        let labels = tree.stage_labels(s);
        let draws: Vec<i64> = labels.iter().map(|_| rng.gen_range(1..=100)).collect();
        let total: i64 = draws.iter().sum();
        for (l, d) in labels.into_iter().zip(draws) {
            values.insert(l, BigRational::new(BigInt::from(d), BigInt::from(total)));
        }
    }
    ThetaSample { seed, values }
}

/// Outcome of one case of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseRecord {
    pub index: usize,
    pub case: Value,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub universe: String,
    pub checked: usize,
    pub passed: usize,
    pub failed: usize,
    pub records: Vec<CaseRecord>,
}

impl SweepReport {
    pub fn from_records(universe: impl Into<String>, records: Vec<CaseRecord>) -> SweepReport {
        let passed = records.iter().filter(|r| r.ok).count();
        SweepReport { universe: universe.into(), checked: records.len(), passed, failed: records.len() - passed, records }
    }

    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }

    pub fn counterexamples(&self) -> impl Iterator<Item = &CaseRecord> {
        self.records.iter().filter(|r| !r.ok)
    }

    pub fn summary(&self) -> Value {
        json!({
            "summary": {
                "universe": self.universe,
                "checked": self.checked,
                "passed": self.passed,
                "failed": self.failed,
            }
        })
    }

    /// One JSON record per case followed by the summary record.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out.push_str(&self.summary().to_string());
        out.push('\n');
        out
    }
}

/// Runs `f` on every case in a pool sized by [`THREADS_ENV`]; records come
/// back in case order whatever the scheduling.
fn run_cases<T, F>(cases: &[T], f: F) -> Result<Vec<CaseRecord>, VerifyError>
where
    T: Sync,
    F: Fn(usize, &T) -> CaseRecord + Sync + Send,
{
    let threads = std::env::var(THREADS_ENV).ok().and_then(|s| s.parse::<usize>().ok()).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| VerifyError::Pool(e.to_string()))?;
    Ok(pool.install(|| cases.par_iter().enumerate().map(|(i, c)| f(i, c)).collect()))
}

/// Arranges a symbol-to-value map in ring order.
pub fn point_in_ring(ring: &[Symbol], values: &HashMap<Symbol, BigRational>) -> Option<Vec<BigRational>> {
    ring.iter().map(|s| values.get(s).cloned()).collect()
}

/// Evaluates every generator at every point (given in ring order) and
/// reports the first generator that does not vanish at each point.
pub fn check_vanishing(pres: &IdealPresentation, points: &[Vec<BigRational>]) -> Result<SweepReport, VerifyError> {
    let ring = pres.ring();
    let mut records = Vec::with_capacity(points.len());
    for (index, point) in points.iter().enumerate() {
        if point.len() != ring.len() {
            return Err(VerifyError::Dimension { index, expected: ring.len(), got: point.len() });
        }
        let at: HashMap<Symbol, BigRational> = ring.iter().cloned().zip(point.iter().cloned()).collect();
        let mut witness = None;
        for g in pres.generators() {
            let v = g.polynomial.evaluate(&at).expect("generator lives in the ring");
            if !v.is_zero() {
                witness = Some(json!({
                    "generator": g.polynomial.to_string(),
                    "source": g.source,
                    "value": v.to_string(),
                }));
                break;
            }
        }
        records.push(CaseRecord { index, case: json!({ "point": index }), ok: witness.is_none(), witness });
    }
    Ok(SweepReport::from_records(format!("{}: {} generators", pres.name, pres.len()), records))
}

/// Leaf points of `tree` at `count` seeded parameter samples.
pub fn tree_points(tree: &StagedTree, ring: &[Symbol], seed: u64, count: usize) -> Result<Vec<Vec<BigRational>>, VerifyError> {
    (0..count)
        .map(|k| {
            let theta = sample_theta(tree, seed.wrapping_add(k as u64));
            let p = tree.parameterize(&theta.values)?;
            point_in_ring(ring, &tree.point(&p)).ok_or_else(|| VerifyError::Precondition("ring has symbols outside the tree".into()))
        })
        .collect()
}

/// Points of an interventional tree, all subtrees concatenated in ring order.
pub fn itree_points(
    it: &InterventionalTree,
    ring: &[Symbol],
    seed: u64,
    count: usize,
) -> Result<Vec<Vec<BigRational>>, VerifyError> {
    (0..count)
        .map(|k| {
            let theta = sample_theta(it.tree(), seed.wrapping_add(k as u64));
            let ps = it.parameterize(&theta.values)?;
            point_in_ring(ring, &it.point(&ps)).ok_or_else(|| VerifyError::Precondition("ring has symbols outside the tree".into()))
        })
        .collect()
}

/// `recover_parameters(parameterize(x)) == x` on seeded samples.
pub fn roundtrip_tree(tree: &StagedTree, seed: u64, count: usize) -> SweepReport {
    let records = (0..count)
        .map(|k| {
            let theta = sample_theta(tree, seed.wrapping_add(k as u64));
            let back = tree.parameterize(&theta.values).and_then(|p| tree.recover_parameters(&p));
            let witness = match back {
                Ok(x) if x == theta.values => None,
                Ok(x) => first_difference(&theta.values, &x),
                Err(e) => Some(json!({ "error": e.to_string() })),
            };
            CaseRecord { index: k, case: json!({ "seed": theta.seed }), ok: witness.is_none(), witness }
        })
        .collect();
    SweepReport::from_records("round trip", records)
}

/// Round trip for interventional trees. Action labels are not recovered,
/// so they are left out of the comparison.
pub fn roundtrip_itree(it: &InterventionalTree, seed: u64, count: usize) -> SweepReport {
    let records = (0..count)
        .map(|k| {
            let theta = sample_theta(it.tree(), seed.wrapping_add(k as u64));
            let mut expected = theta.values.clone();
            expected.retain(|l, _| !it.is_action_label(l));
            let back = it.parameterize(&theta.values).and_then(|p| it.recover_parameters(&p));
            let witness = match back {
                Ok(x) if x == expected => None,
                Ok(x) => first_difference(&expected, &x),
                Err(e) => Some(json!({ "error": e.to_string() })),
            };
            CaseRecord { index: k, case: json!({ "seed": theta.seed }), ok: witness.is_none(), witness }
        })
        .collect();
    SweepReport::from_records("interventional round trip", records)
}

fn first_difference(want: &Assignment, got: &Assignment) -> Option<Value> {
    let keys: BTreeSet<&Symbol> = want.keys().chain(got.keys()).collect();
    keys.into_iter().find(|k| want.get(*k) != got.get(*k)).map(|k| {
        json!({
            "label": k.to_string(),
            "sampled": want.get(k).map(|v| v.to_string()),
            "recovered": got.get(k).map(|v| v.to_string()),
        })
    })
}

/// Samples the conditional probabilities once, evaluates the trees of both
/// orders and compares the probabilities of leaves with the same outcomes.
pub fn extension_invariance_check(dag: &Dag, pi1: &[usize], pi2: &[usize], seed: u64) -> Result<bool, VerifyError> {
    dag.require_linear_extension(pi1)?;
    dag.require_linear_extension(pi2)?;
    let t1 = StagedTree::from_dag(dag, pi1)?;
    let t2 = StagedTree::from_dag(dag, pi2)?;
    let labels = |t: &StagedTree| t.labels().into_iter().collect::<BTreeSet<_>>();
    if labels(&t1) != labels(&t2) {
        return Err(VerifyError::Precondition("the two trees do not share their label set".into()));
    }
    let theta = sample_theta(&t1, seed);
    let p1 = t1.point(&t1.parameterize(&theta.values)?);
    let p2 = t2.point(&t2.parameterize(&theta.values)?);
    Ok(p1 == p2)
}

/// Which target collections a classification sweep visits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetFamily {
    /// Only `{∅}`.
    Observational,
    /// `∅` followed by up to `extra` distinct nonempty subsets, in
    /// increasing size and lexicographic order.
    WithEmpty { extra: usize },
    /// One to `size` distinct nonempty subsets and no empty target.
    PurelyInterventional { size: usize },
    /// `count` collections drawn with the seed: `∅` plus one to `extra`
    /// distinct nonempty subsets.
    Sampled { count: usize, extra: usize, seed: u64 },
}

impl TargetFamily {
    fn describe(&self) -> String {
        match self {
            TargetFamily::Observational => "targets {∅}".into(),
            TargetFamily::WithEmpty { extra } => format!("targets ∅ plus up to {extra} nonempty subsets"),
            TargetFamily::PurelyInterventional { size } => format!("1 to {size} nonempty targets, no ∅"),
            TargetFamily::Sampled { count, extra, seed } => {
                format!("{count} sampled collections of ∅ plus up to {extra} subsets, seed {seed:#x}")
            }
        }
    }
}

fn nonempty_subsets(n: usize) -> Vec<NodeSet> {
    let mut out: Vec<NodeSet> = NodeSet::full(n).subsets().filter(|s| !s.is_empty()).collect();
    out.sort_by_key(|s| (s.len(), s.to_vec()));
    out
}

fn combinations(items: &[NodeSet], k: usize) -> Vec<Vec<NodeSet>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for (i, &x) in items.iter().enumerate() {
        for mut rest in combinations(&items[i + 1..], k - 1) {
            rest.insert(0, x);
            out.push(rest);
        }
    }
    out
}

/// The target collections of `family` for `n` nodes.
pub fn target_collections(n: usize, family: TargetFamily) -> Vec<TargetCollection> {
    let subsets = nonempty_subsets(n);
    match family {
        TargetFamily::Observational => vec![TargetCollection::new(vec![NodeSet::EMPTY])],
        TargetFamily::WithEmpty { extra } => (0..=extra)
            .flat_map(|k| combinations(&subsets, k))
            .map(|c| TargetCollection::new(std::iter::once(NodeSet::EMPTY).chain(c).collect()))
            .collect(),
        TargetFamily::PurelyInterventional { size } => {
            (1..=size).flat_map(|k| combinations(&subsets, k)).map(TargetCollection::new).collect()
        }
        TargetFamily::Sampled { count, extra, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count)
                .map(|_| {
                    let k = rng.gen_range(1..=extra.min(subsets.len()));
                    let mut chosen = BTreeSet::new();
                    while chosen.len() < k {
                        chosen.insert(rng.gen_range(0..subsets.len()));
                    }
                    TargetCollection::new(std::iter::once(NodeSet::EMPTY).chain(chosen.into_iter().map(|i| subsets[i])).collect())
                })
                .collect()
        }
    }
}

fn model_json(dag: &Dag, targets: &TargetCollection) -> Value {
    json!({ "dag": dag, "targets": targets })
}

/// Compares balancedness of the interventional tree with the graphical
/// criterion on every DAG with the given cardinalities and every target
/// collection of the family. Trees use the default linear extension.
pub fn classification_sweep(cards: &[u32], family: TargetFamily) -> Result<SweepReport, VerifyError> {
    let dags = enumerate_dags_with_cards(cards)?;
    let collections = target_collections(cards.len(), family);
    let cases: Vec<(&Dag, &TargetCollection)> = dags.iter().flat_map(|d| collections.iter().map(move |t| (d, t))).collect();
    let records = run_cases(&cases, |index, &(dag, targets)| classification_case(index, dag, targets))?;
    Ok(SweepReport::from_records(
        format!("n={} cards={:?}, {} DAGs, {}", cards.len(), cards, dags.len(), family.describe()),
        records,
    ))
}

/// Like [`classification_sweep`] but over `dag_count` DAGs drawn with the
/// seed from the full enumeration, each paired with every collection.
pub fn classification_sweep_sampled(
    cards: &[u32],
    dag_count: usize,
    family: TargetFamily,
    seed: u64,
) -> Result<SweepReport, VerifyError> {
    let dags = enumerate_dags_with_cards(cards)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<&Dag> = (0..dag_count).map(|_| &dags[rng.gen_range(0..dags.len())]).collect();
    let collections = target_collections(cards.len(), family);
    let cases: Vec<(&Dag, &TargetCollection)> = picked.iter().flat_map(|&d| collections.iter().map(move |t| (d, t))).collect();
    let records = run_cases(&cases, |index, &(dag, targets)| classification_case(index, dag, targets))?;
    Ok(SweepReport::from_records(
        format!("n={} cards={:?}, {} sampled DAGs (seed {seed:#x}), {}", cards.len(), cards, dag_count, family.describe()),
        records,
    ))
}

fn classification_case(index: usize, dag: &Dag, targets: &TargetCollection) -> CaseRecord {
    let case = model_json(dag, targets);
    let tree = InterventionalTree::from_dag_targets(dag, targets, &dag.default_order());
    let crit = criterion_holds(dag, targets);
    match (tree, crit) {
        (Ok(it), Ok(c)) => {
            let b = it.is_balanced();
            let witness = (b != c).then(|| json!({ "balanced": b, "criterion": c, "fixture": case.clone() }));
            CaseRecord { index, case, ok: b == c, witness }
        }
        (t, c) => {
            let msg = t.err().map(|e| e.to_string()).or(c.err().map(|e| e.to_string()));
            CaseRecord { index, case, ok: false, witness: Some(json!({ "error": msg })) }
        }
    }
}

/// Balanced tree of the default extension versus a perfect DAG, over all
/// DAGs with the given cardinalities.
pub fn balanced_perfect_sweep(cards: &[u32]) -> Result<SweepReport, VerifyError> {
    let dags = enumerate_dags_with_cards(cards)?;
    let records = run_cases(&dags, |index, dag| {
        let case = json!({ "dag": dag });
        match StagedTree::from_dag(dag, &dag.default_order()) {
            Ok(tree) => {
                let (b, p) = (tree.is_balanced(), dag.is_perfect());
                let witness = (b != p).then(|| json!({ "balanced": b, "perfect": p, "fixture": case.clone() }));
                CaseRecord { index, case, ok: b == p, witness }
            }
            Err(e) => CaseRecord { index, case, ok: false, witness: Some(json!({ "error": e.to_string() })) },
        }
    })?;
    Ok(SweepReport::from_records(format!("balanced vs perfect, cards={cards:?}, {} DAGs", dags.len()), records))
}

/// Pairwise-and-predecessor generators against the model invariants of
/// the DAG tree, for every DAG on `1..=max_n` binary nodes and every
/// linear extension.
pub fn lemma_equality_sweep(max_n: usize) -> Result<SweepReport, VerifyError> {
    let mut cases = Vec::new();
    for n in 1..=max_n {
        for dag in enumerate_dags_with_cards(&vec![2; n])? {
            for pi in dag.topological_orders() {
                cases.push((dag.clone(), pi));
            }
        }
    }
    let records = run_cases(&cases, |index, (dag, pi)| {
        let case = json!({ "dag": dag, "pi": pi });
        let star = pred_star_generators(dag, pi).map(|p| p.polynomial_set());
        let tree = StagedTree::from_dag(dag, pi).map(|t| model_invariant_generators(&t).polynomial_set());
        match (star, tree) {
            (Ok(a), Ok(b)) => {
                let witness = (a != b).then(|| {
                    json!({
                        "only_pred_star": a.difference(&b).map(|p| p.to_string()).collect::<Vec<_>>(),
                        "only_model": b.difference(&a).map(|p| p.to_string()).collect::<Vec<_>>(),
                    })
                });
                CaseRecord { index, case, ok: a == b, witness }
            }
            (a, b) => {
                let msg = a.err().map(|e| e.to_string()).or(b.err().map(|e| e.to_string()));
                CaseRecord { index, case, ok: false, witness: Some(json!({ "error": msg })) }
            }
        }
    })?;
    Ok(SweepReport::from_records(format!("predecessor generators vs model invariants, n<={max_n}"), records))
}

/// Every statement `A ⊥ B | C` with `A`, `B` nonempty and the three sets
/// disjoint, encoded as one base-4 digit per node, with its d-separation
/// verdict.
pub fn dsep_signature(dag: &Dag) -> Result<Vec<bool>, VerifyError> {
    let n = dag.n();
    let mut out = Vec::with_capacity(4usize.pow(n as u32));
    for code in 0..4usize.pow(n as u32) {
        let (mut a, mut b, mut c) = (NodeSet::EMPTY, NodeSet::EMPTY, NodeSet::EMPTY);
        let mut rest = code;
        for v in 1..=n {
            match rest % 4 {
                1 => a.insert(v),
                2 => b.insert(v),
                3 => c.insert(v),
                _ => {}
            }
            rest /= 4;
        }
        out.push(!a.is_empty() && !b.is_empty() && dag.d_separated(a, b, c)?);
    }
    Ok(out)
}

/// For every DAG on `1..=max_n` binary nodes, compares Markov equivalence
/// with every other DAG on the same nodes against equality of the full
/// d-separation signatures. One record per DAG.
pub fn markov_equivalence_sweep(max_n: usize) -> Result<SweepReport, VerifyError> {
    let mut cases = Vec::new();
    for n in 1..=max_n {
        let dags = enumerate_dags_with_cards(&vec![2; n])?;
        let sigs = dags.iter().map(dsep_signature).collect::<Result<Vec<_>, _>>()?;
        let group = std::sync::Arc::new((dags, sigs));
        for i in 0..group.0.len() {
            cases.push((group.clone(), i));
        }
    }
    let records = run_cases(&cases, |index, (group, i)| {
        let (dags, sigs) = &**group;
        let dag = &dags[*i];
        let mut witness = None;
        for (j, other) in dags.iter().enumerate() {
            let by_sets = sigs[*i] == sigs[j];
            match dag.markov_equivalent(other) {
                Ok(eq) if eq == by_sets => {}
                Ok(eq) => {
                    witness = Some(json!({ "other": other, "markov_equivalent": eq, "same_dseparations": by_sets }));
                    break;
                }
                Err(e) => {
                    witness = Some(json!({ "other": other, "error": e.to_string() }));
                    break;
                }
            }
        }
        CaseRecord { index, case: json!({ "dag": dag }), ok: witness.is_none(), witness }
    })?;
    Ok(SweepReport::from_records(format!("Markov equivalence vs d-separation sets, n<={max_n}"), records))
}
