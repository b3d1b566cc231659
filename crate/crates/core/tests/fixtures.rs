//! Properties of the shipped fixtures, including an independent check of
//! the reordered guard tree against distributions of the original one.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::BigRational;
use stkit::cli_io::{fixture_names, fixture_text, load_fixture, Model};
use stkit::graph::Dag;
use stkit::interventional::InterventionalTree;
use stkit::polynomial::Symbol;
use stkit::staged_tree::StagedTree;
use stkit::verify::sample_theta;

fn itree(name: &str) -> InterventionalTree {
    match load_fixture(name).unwrap() {
        Model::ITree(t) => t,
        other => panic!("{name} is a {}", other.kind()),
    }
}

fn tree(name: &str) -> StagedTree {
    match load_fixture(name).unwrap() {
        Model::Tree(t) => t,
        other => panic!("{name} is a {}", other.kind()),
    }
}

fn dag(name: &str) -> Dag {
    match load_fixture(name).unwrap() {
        Model::Dag(d) => d,
        other => panic!("{name} is a {}", other.kind()),
    }
}

#[test]
fn shipped_set() {
    let names: Vec<&str> = fixture_names().collect();
    assert_eq!(
        names,
        ["chain3", "fig1-g2", "fig1-g3", "four-cycle", "fig2-tree", "fig5-itree", "multinet-guard", "multinet-guard-b-first"]
    );
}

#[test]
fn fixtures_match_committed_files() {
    for name in fixture_names() {
        let path = format!("{}/fixtures/{name}.json", env!("CARGO_MANIFEST_DIR"));
        assert_eq!(std::fs::read_to_string(path).unwrap(), fixture_text(name).unwrap());
    }
}

#[test]
fn dag_fixtures() {
    assert_eq!(dag("four-cycle"), Dag::binary(4, [(1, 2), (1, 3), (2, 4), (3, 4)]).unwrap());
    assert_eq!(dag("chain3"), Dag::binary(3, [(1, 2), (2, 3)]).unwrap());
    assert_eq!(dag("fig1-g2"), Dag::binary(3, [(2, 1), (2, 3)]).unwrap());
    assert_eq!(dag("fig1-g3"), Dag::binary(3, [(3, 2), (2, 1)]).unwrap());
}

#[test]
fn fig2_tree() {
    let t = tree("fig2-tree");
    assert_eq!(t.len(), 15);
    let labels: BTreeSet<String> = t.labels().iter().map(|s| s.to_string()).collect();
    let want: BTreeSet<String> = (1..=10).map(|k| format!("s{k}")).collect();
    assert_eq!(labels, want);
    assert_eq!(t.ceg_quotient().nodes.len(), 6);
}

#[test]
fn fig5_itree() {
    let it = itree("fig5-itree");
    assert_eq!(it.k_star(), 1);
    assert_eq!(it.subtree_roots().len(), 2);
    assert_eq!(it.common_size(), 7);
}

#[test]
fn guard_tree_structure() {
    let it = itree("multinet-guard");
    assert_eq!(it.k_star(), 1);
    let actions = it.expanded_actions();
    assert_eq!(actions[&Symbol::new("a0")], BTreeSet::new());
    assert_eq!(actions[&Symbol::new("a1")], (8..=13).collect());

    let obs = it.tree().subtree(it.subtree_roots()[0]);
    let ceg = obs.ceg_quotient();
    assert_eq!(ceg.nodes.len(), 9);
    assert_eq!(ceg.edges.len(), 17);
    assert_eq!(ceg.undashed_edges(), 9);
    assert_eq!(it.tree().ceg_quotient().nodes.len(), 15);
}

/// Joint distribution of subtree `s`, keyed by `(h, b, c)`.
fn joint(it: &InterventionalTree, ps: &[Vec<BigRational>], s: usize, hbc: impl Fn(&[u8]) -> [u8; 3]) -> BTreeMap<[u8; 3], BigRational> {
    let keys = it.common_keys();
    let syms = it.subtree_leaf_symbols(s);
    keys.iter()
        .zip(&ps[s])
        .zip(&syms)
        .map(|((k, p), sym)| {
            assert_eq!(sym.name(), format!("p{k}t{s}"));
            (hbc(k.as_bytes()), p.clone())
        })
        .collect()
}

/// Every distribution pair of the original tree must lie in the B-first
/// model. The B-first action set additionally frees the spy-context
/// conditionals of C, which the original ordering keeps shared, so those
/// four edges are the only intervened ones that stay unchanged.
#[test]
fn reordered_guard_tree_contains_the_original_model() {
    let original = itree("multinet-guard");
    let reordered = itree("multinet-guard-b-first");
    let actions = reordered.expanded_actions()[&Symbol::new("a1")].clone();
    assert_eq!(actions, [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 13, 14, 15, 16, 19, 20].into_iter().collect());
    let spy_context: BTreeSet<usize> = [13, 14, 19, 20].into_iter().collect();

    for seed in 0..10 {
        let theta = sample_theta(original.tree(), seed);
        let ps = original.parameterize(&theta.values).unwrap();
        let ps2: Vec<Vec<BigRational>> = (0..2)
            .map(|s| {
                let j = joint(&original, &ps, s, |k| [k[0], k[1], k[2]]);
                reordered
                    .common_keys()
                    .iter()
                    .map(|k| {
                        let k = k.as_bytes();
                        j[&[k[1], k[0], k[2]]].clone()
                    })
                    .collect()
            })
            .collect();
        let x = reordered.recover_parameters(&ps2).unwrap();
        let t = reordered.tree();
        for id in 1..reordered.common_size() {
            let label = |s| t.edge_label(reordered.vertex_of(s, id)).unwrap().clone();
            let changed = x[&label(0)] != x[&label(1)];
            let expected = actions.contains(&id) && !spy_context.contains(&id);
            assert_eq!(changed, expected, "vertex {id} at seed {seed}");
        }
    }
}
