//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits nonzero when any fails. Set UPDATE_SNAPSHOTS=1 to
//! rewrite the CAS snapshots instead of comparing against them.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::{Duration, Instant};

use stkit::cli_io::{fixture_names, load_fixture, Model};
use stkit::graph::{Dag, NodeSet};
use stkit::ideals::cas::{export_presentation, export_toric, parse_script, Dialect};
use stkit::ideals::{
    binomial_in_toric_kernel, global_generators, i_ci_ideal, interventional_model_invariant_generators,
    model_invariant_generators, toric_images, toric_images_interventional,
};
use stkit::interventional::{criterion_holds, i_markov_invariance_pairs, InterventionalTree, TargetCollection};
use stkit::polynomial::Polynomial;
use stkit::staged_tree::StagedTree;
use stkit::verify::{
    balanced_perfect_sweep, check_vanishing, classification_sweep, extension_invariance_check, itree_points,
    lemma_equality_sweep, markov_equivalence_sweep, roundtrip_itree, roundtrip_tree, tree_points, TargetFamily,
};

/// Seeds for the sampled criteria.
const SEED: u64 = 20_240_501;
const VANISHING_SAMPLES: usize = 50;
const ROUNDTRIP_SAMPLES: usize = 20;

type Outcome = Result<String, String>;

fn chain() -> Dag {
    Dag::binary(3, [(1, 2), (2, 3)]).unwrap()
}

fn obs_and_one() -> TargetCollection {
    TargetCollection::from_lists(&[&[], &[1]])
}

fn set(xs: &[usize]) -> NodeSet {
    xs.iter().fold(NodeSet::EMPTY, |s, &v| s.with(v))
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, format!("took {t:.2?}, limit {limit:?}"))
}

fn chain_invariants() -> Outcome {
    let start = Instant::now();
    let tree = StagedTree::from_dag(&chain(), &[1, 2, 3]).map_err(|e| e.to_string())?;
    let got = model_invariant_generators(&tree).polynomial_set();
    let want: BTreeSet<Polynomial> = ["p000*p101 - p100*p001", "p010*p111 - p110*p011"]
        .iter()
        .map(|s| Polynomial::from_str(s).unwrap().normalized())
        .collect();
    ensure(got == want, format!("got {:?}", got.iter().map(|p| p.to_string()).collect::<Vec<_>>()))?;
    within(start, Duration::from_secs(1))?;
    Ok(format!("{} generators", got.len()))
}

fn balanced_perfect() -> Outcome {
    let start = Instant::now();
    let r = balanced_perfect_sweep(&[2; 4]).map_err(|e| e.to_string())?;
    ensure(r.checked == 543, format!("{} DAGs checked", r.checked))?;
    ensure(r.all_passed(), format!("{} counterexamples", r.failed))?;
    within(start, Duration::from_secs(300))?;
    Ok(format!("{} DAGs, 0 counterexamples", r.checked))
}

fn classification() -> Outcome {
    let start = Instant::now();
    let r = classification_sweep(&[2; 3], TargetFamily::WithEmpty { extra: 2 }).map_err(|e| e.to_string())?;
    ensure(r.checked == 25 * 29, format!("{} cases checked", r.checked))?;
    ensure(r.all_passed(), format!("{} counterexamples", r.failed))?;
    within(start, Duration::from_secs(600))?;
    Ok("25 DAGs x 29 collections, 0 counterexamples".into())
}

fn invariance_pairs() -> Outcome {
    let got = i_markov_invariance_pairs(&chain(), &obs_and_one()).map_err(|e| e.to_string())?;
    let pairs: BTreeSet<(NodeSet, NodeSet)> = got[1].pairs.iter().copied().collect();
    let want: BTreeSet<(NodeSet, NodeSet)> = [
        (set(&[2, 3]), set(&[1])),
        (set(&[3]), set(&[2])),
        (set(&[3]), set(&[1, 2])),
        (set(&[2]), set(&[1, 3])),
    ]
    .into_iter()
    .collect();
    ensure(pairs == want && got[1].pairs.len() == 4, format!("got {:?}", got[1].pairs))?;
    ensure(got[0].pairs.is_empty(), "the empty target has pairs")?;
    Ok("4 pairs".into())
}

fn trichotomy() -> Outcome {
    let g2 = Dag::binary(3, [(2, 1), (2, 3)]).unwrap();
    let g3 = Dag::binary(3, [(3, 2), (2, 1)]).unwrap();
    let verdicts: Vec<bool> =
        [chain(), g2, g3].iter().map(|g| criterion_holds(g, &obs_and_one())).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    ensure(verdicts == [true, false, false], format!("criterion verdicts {verdicts:?}"))?;

    let it = InterventionalTree::from_dag_targets(&chain(), &obs_and_one(), &[1, 2, 3]).map_err(|e| e.to_string())?;
    let map = toric_images_interventional(&it);
    let pres = interventional_model_invariant_generators(&it);
    let (mut binomials, mut others) = (0, 0);
    for p in pres.polynomials() {
        let inside = match p.as_binomial() {
            Some((l, r)) => {
                binomials += 1;
                binomial_in_toric_kernel(&map, l, r)
            }
            None => {
                others += 1;
                map.contains(p)
            }
        };
        ensure(inside.map_err(|e| e.to_string())?, format!("{p} is not in the toric kernel"))?;
    }
    ensure(binomials > 0, "no binomial model invariants")?;
    Ok(format!("G1 true, G2 false, G3 false; {binomials} binomials and {others} other invariants in the kernel"))
}

fn vanishing() -> Outcome {
    let mut total = 0;
    let fig2 = match load_fixture("fig2-tree").map_err(|e| e.to_string())? {
        Model::Tree(t) => t,
        other => return Err(format!("fig2-tree is a {}", other.kind())),
    };
    for pres in [model_invariant_generators(&fig2), global_generators(&chain()).map_err(|e| e.to_string())?] {
        let points = tree_points(&fig2, pres.ring(), SEED, VANISHING_SAMPLES).map_err(|e| e.to_string())?;
        let r = check_vanishing(&pres, &points).map_err(|e| e.to_string())?;
        ensure(r.all_passed() && r.checked == VANISHING_SAMPLES, format!("fig2-tree {}: {:?}", pres.name, r.counterexamples().next()))?;
        total += pres.len();
    }

    let g1 = InterventionalTree::from_dag_targets(&chain(), &obs_and_one(), &[1, 2, 3]).map_err(|e| e.to_string())?;
    let multinet = match load_fixture("multinet-guard").map_err(|e| e.to_string())? {
        Model::ITree(t) => t,
        other => return Err(format!("multinet-guard is a {}", other.kind())),
    };
    let cases = [
        (&g1, interventional_model_invariant_generators(&g1)),
        (&g1, i_ci_ideal(&chain(), &obs_and_one()).map_err(|e| e.to_string())?),
        (&multinet, interventional_model_invariant_generators(&multinet)),
    ];
    for (it, pres) in cases {
        let points = itree_points(it, pres.ring(), SEED, VANISHING_SAMPLES).map_err(|e| e.to_string())?;
        let r = check_vanishing(&pres, &points).map_err(|e| e.to_string())?;
        ensure(r.all_passed() && r.checked == VANISHING_SAMPLES, format!("{}: {:?}", pres.name, r.counterexamples().next()))?;
        ensure(!pres.is_empty(), format!("{} is empty", pres.name))?;
        total += pres.len();
    }
    Ok(format!("{total} generators x {VANISHING_SAMPLES} points, all exactly zero"))
}

fn lemma_equality() -> Outcome {
    let r = lemma_equality_sweep(4).map_err(|e| e.to_string())?;
    ensure(r.all_passed(), format!("{} mismatches, first {:?}", r.failed, r.counterexamples().next()))?;
    Ok(format!("{} (DAG, extension) cases, 0 mismatches", r.checked))
}

fn roundtrip_and_extensions() -> Outcome {
    let mut fixtures = 0;
    for name in fixture_names() {
        let report = match load_fixture(name).map_err(|e| e.to_string())? {
            Model::Dag(d) => {
                let tree = StagedTree::from_dag(&d, &d.default_order()).map_err(|e| e.to_string())?;
                roundtrip_tree(&tree, SEED, ROUNDTRIP_SAMPLES)
            }
            Model::Tree(t) => roundtrip_tree(&t, SEED, ROUNDTRIP_SAMPLES),
            Model::ITree(t) => roundtrip_itree(&t, SEED, ROUNDTRIP_SAMPLES),
        };
        ensure(
            report.all_passed() && report.checked == ROUNDTRIP_SAMPLES,
            format!("{name}: {:?}", report.counterexamples().next()),
        )?;
        fixtures += 1;
    }
    let four_cycle = Dag::binary(4, [(1, 2), (1, 3), (2, 4), (3, 4)]).unwrap();
    for seed in SEED..SEED + ROUNDTRIP_SAMPLES as u64 {
        let same = extension_invariance_check(&four_cycle, &[1, 2, 3, 4], &[1, 3, 2, 4], seed).map_err(|e| e.to_string())?;
        ensure(same, format!("orders 1234 and 1324 disagree at seed {seed}"))?;
    }
    Ok(format!("{fixtures} fixtures x {ROUNDTRIP_SAMPLES} samples; 1234 and 1324 agree"))
}

fn snapshot_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("snapshots")
}

fn snapshots() -> Outcome {
    let four_cycle = Dag::binary(4, [(1, 2), (1, 3), (2, 4), (3, 4)]).unwrap();
    let tree = StagedTree::from_dag(&four_cycle, &[1, 2, 3, 4]).map_err(|e| e.to_string())?;
    let toric = toric_images(&tree);
    let ideal = i_ci_ideal(&chain(), &obs_and_one()).map_err(|e| e.to_string())?;
    let update = std::env::var_os("UPDATE_SNAPSHOTS").is_some();
    let mut checked = 0;
    for (dialect, ext) in [(Dialect::M2, "m2"), (Dialect::Singular, "sing")] {
        for (stem, text) in [("four_cycle_toric", export_toric(&toric, dialect)), ("chain_one_target_ideal", export_presentation(&ideal, dialect))] {
            let path = snapshot_dir().join(format!("{stem}.{ext}"));
            if update {
                std::fs::create_dir_all(snapshot_dir()).map_err(|e| e.to_string())?;
                std::fs::write(&path, &text).map_err(|e| e.to_string())?;
            }
            let committed = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            ensure(committed == text, format!("{} differs from the export", path.display()))?;
            parse_script(&committed, dialect).map_err(|e| format!("{}: {e}", path.display()))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} snapshots match and parse"))
}

fn markov_equivalence() -> Outcome {
    let start = Instant::now();
    let r = markov_equivalence_sweep(4).map_err(|e| e.to_string())?;
    ensure(r.checked == 1 + 3 + 25 + 543, format!("{} DAGs checked", r.checked))?;
    ensure(r.all_passed(), format!("{} mismatches, first {:?}", r.failed, r.counterexamples().next()))?;
    within(start, Duration::from_secs(300))?;
    Ok(format!("{} DAGs against every DAG of the same size, 0 mismatches", r.checked))
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("chain model invariants", chain_invariants),
        ("balanced iff perfect, 543 DAGs", balanced_perfect),
        ("interventional classification, n=3", classification),
        ("invariance pairs of the chain", invariance_pairs),
        ("criterion trichotomy and kernel certificates", trichotomy),
        ("exact vanishing at sampled points", vanishing),
        ("predecessor generators equal model invariants", lemma_equality),
        ("round trips and extension invariance", roundtrip_and_extensions),
        ("CAS export snapshots", snapshots),
        ("Markov equivalence vs d-separation sets", markov_equivalence),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let t = start.elapsed();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail} ({t:.2?})", k + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {why} ({t:.2?})", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
