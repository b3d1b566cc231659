//! Command-line front end: argument parsing, input loading, the shipped
//! fixture library, and dispatch to the library.

use std::io::Write;
use std::path::Path;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use thiserror::Error;

use crate::graph::{Dag, NodeSet};
use crate::ideals::cas::{export_presentation, export_toric, Dialect};
use crate::ideals::{
    global_generators, i_ci_ideal, interventional_model_invariant_generators, inv_ideal_generators,
    local_generators, model_invariant_generators, pred_generators, pred_star_generators, toric_images,
    toric_images_interventional, IdealPresentation, ToricMap,
};
use crate::interventional::{criterion_check, i_markov_invariance_pairs, parse_targets, InterventionalTree, TargetCollection};
use crate::staged_tree::StagedTree;
use crate::verify::{
    balanced_perfect_sweep, check_vanishing, classification_sweep, classification_sweep_sampled, itree_points,
    lemma_equality_sweep, markov_equivalence_sweep, roundtrip_itree, roundtrip_tree, tree_points, SweepReport,
    TargetFamily, DEFAULT_SEED,
};

const FIXTURES: &[(&str, &str)] = &[
    ("chain3", include_str!("../fixtures/chain3.json")),
    ("fig1-g2", include_str!("../fixtures/fig1-g2.json")),
    ("fig1-g3", include_str!("../fixtures/fig1-g3.json")),
    ("four-cycle", include_str!("../fixtures/four-cycle.json")),
    ("fig2-tree", include_str!("../fixtures/fig2-tree.json")),
    ("fig5-itree", include_str!("../fixtures/fig5-itree.json")),
    ("multinet-guard", include_str!("../fixtures/multinet-guard.json")),
    ("multinet-guard-b-first", include_str!("../fixtures/multinet-guard-b-first.json")),
];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("unknown fixture {0:?}")]
    UnknownFixture(String),
    #[error("{path}: {msg}")]
    Input { path: String, msg: String },
    #[error("{0}")]
    Usage(String),
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

/// A model loaded from a file or the fixture library.
#[derive(Debug, Clone)]
pub enum Model {
    Dag(Dag),
    Tree(StagedTree),
    ITree(InterventionalTree),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Dag(_) => "dag",
            Model::Tree(_) => "tree",
            Model::ITree(_) => "itree",
        }
    }

    /// Recognizes the three JSON forms by their keys.
    pub fn from_json(text: &str) -> Result<Model, String> {
        let value: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let obj = value.as_object().ok_or("expected a JSON object")?;
        if obj.contains_key("n") {
            serde_json::from_value(value).map(Model::Dag).map_err(|e| e.to_string())
        } else if obj.contains_key("k_star") {
            InterventionalTree::from_json(text).map(Model::ITree)
        } else {
            StagedTree::from_json(text).map(Model::Tree)
        }
    }

    pub fn to_json(&self) -> String {
        match self {
            Model::Dag(d) => serde_json::to_string_pretty(d).expect("dag serializes"),
            Model::Tree(t) => t.to_json(),
            Model::ITree(t) => t.to_json(),
        }
    }
}

pub fn fixture_names() -> impl Iterator<Item = &'static str> {
    FIXTURES.iter().map(|(n, _)| *n)
}

/// Committed JSON text of a shipped fixture.
pub fn fixture_text(name: &str) -> Result<&'static str, CliError> {
    let name = name.strip_suffix(".json").unwrap_or(name);
    FIXTURES.iter().find(|(n, _)| *n == name).map(|(_, t)| *t).ok_or_else(|| CliError::UnknownFixture(name.into()))
}

pub fn load_fixture(name: &str) -> Result<Model, CliError> {
    let text = fixture_text(name)?;
    Model::from_json(text).map_err(|msg| CliError::Input { path: format!("fixture {name}"), msg })
}

/// Reads `path` when it exists; otherwise treats its file name as a
/// fixture name, so `chain3.json` works from any directory.
pub fn load_model(path: &str) -> Result<Model, CliError> {
    if Path::new(path).exists() {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input { path: path.into(), msg: e.to_string() })?;
        return Model::from_json(&text).map_err(|msg| CliError::Input { path: path.into(), msg });
    }
    let file = Path::new(path).file_name().and_then(|s| s.to_str()).unwrap_or(path);
    match load_fixture(file) {
        Err(CliError::UnknownFixture(_)) => {
            Err(CliError::Input { path: path.into(), msg: "no such file, and not a shipped fixture".into() })
        }
        other => other,
    }
}

#[derive(Debug, Parser)]
#[command(name = "stkit", version, about = "Staged trees, interventional staged trees and their ideals")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Debug, Args)]
struct Input {
    /// DAG JSON file or fixture name
    #[arg(long, group = "model")]
    dag: Option<String>,
    /// Staged tree JSON file or fixture name
    #[arg(long, group = "model")]
    tree: Option<String>,
    /// Interventional staged tree JSON file or fixture name
    #[arg(long, group = "model")]
    itree: Option<String>,
    /// Shipped fixture of any kind
    #[arg(long, group = "model")]
    fixture: Option<String>,
    /// Linear extension, e.g. 1,3,2,4 (default: the smallest one)
    #[arg(long, value_delimiter = ',')]
    pi: Option<Vec<usize>>,
    /// Target collection as JSON, e.g. "[[],[1]]"
    #[arg(long)]
    targets: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Dot,
    M2,
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Family {
    ModelInvariants,
    PredStar,
    Pred,
    Local,
    Global,
    Inv,
    ICi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepKind {
    Classification,
    BalancedPerfect,
    Lemma,
    Markov,
}

#[derive(Debug, Subcommand)]
enum Verb {
    /// Staged tree of a DAG under a linear extension
    BuildTree {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Interventional staged tree of a DAG and target collection
    BuildItree {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Balanced check with a witness when it fails
    CheckBalanced {
        #[command(flatten)]
        input: Input,
    },
    /// Graphical criterion for balanced interventional DAG trees
    CheckCriterion {
        #[command(flatten)]
        input: Input,
    },
    /// d-separation of node sets, e.g. --a 1 --b 3 --c 2
    Dsep {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_delimiter = ',')]
        a: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        b: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "")]
        c: Vec<String>,
    },
    /// Maximal invariance pairs (A, C) per target
    ImecPairs {
        #[command(flatten)]
        input: Input,
    },
    /// Generators of an ideal family
    GenIdeal {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum)]
        family: Family,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Macaulay2 or Singular script for an ideal family or the toric map
    ExportCas {
        #[command(flatten)]
        input: Input,
        /// Ideal family; the toric map when omitted
        #[arg(long, value_enum)]
        family: Option<Family>,
        #[arg(long, value_enum, default_value = "m2")]
        format: Format,
    },
    /// Round trip and vanishing of the model invariants at sampled points
    Verify {
        #[command(flatten)]
        input: Input,
        /// Also check this family at the same points
        #[arg(long, value_enum)]
        family: Option<Family>,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Exhaustive or sampled equivalence sweeps
    Sweep {
        #[arg(long, value_enum)]
        kind: SweepKind,
        /// Number of nodes (maximum number for lemma and markov)
        #[arg(long)]
        n: usize,
        /// Binary unless given, e.g. 3,2,2
        #[arg(long, value_delimiter = ',')]
        cards: Option<Vec<u32>>,
        /// Nonempty targets added to the empty one
        #[arg(long, default_value_t = 2)]
        extra: usize,
        /// Sample this many DAGs and collections instead of enumerating
        #[arg(long)]
        sampled: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Graphviz rendering of a tree or its quotient graph
    ExportDot {
        #[command(flatten)]
        input: Input,
        /// Render the quotient graph with dashed last-outcome edges
        #[arg(long)]
        ceg: bool,
    },
}

/// What a verb produced: text for stdout, a note for stderr, and whether
/// a counterexample was found.
struct Outcome {
    stdout: String,
    stderr: String,
    counterexample: bool,
}

impl Outcome {
    fn json(v: Value) -> Outcome {
        Outcome { stdout: format!("{}\n", serde_json::to_string_pretty(&v).expect("json")), stderr: String::new(), counterexample: false }
    }

    fn text(s: String) -> Outcome {
        Outcome { stdout: s, stderr: String::new(), counterexample: false }
    }
}

impl Input {
    fn model(&self) -> Result<Model, CliError> {
        match (&self.dag, &self.tree, &self.itree, &self.fixture) {
            (Some(p), ..) | (_, Some(p), ..) | (_, _, Some(p), _) => load_model(p),
            (.., Some(name)) => load_fixture(name),
            _ => Err(usage("one of --dag, --tree, --itree or --fixture is required")),
        }
    }

    fn dag(&self) -> Result<Dag, CliError> {
        match self.model()? {
            Model::Dag(d) => Ok(d),
            other => Err(usage(format!("expected a DAG, got a {}", other.kind()))),
        }
    }

    fn pi(&self, dag: &Dag) -> Result<Vec<usize>, CliError> {
        let pi = self.pi.clone().unwrap_or_else(|| dag.default_order());
        dag.require_linear_extension(&pi).map_err(usage)?;
        Ok(pi)
    }

    fn targets(&self) -> Result<TargetCollection, CliError> {
        let text = self.targets.as_deref().ok_or_else(|| usage("--targets is required"))?;
        parse_targets(text).map_err(usage)
    }

    /// A staged tree: given directly or built from a DAG.
    fn tree(&self) -> Result<StagedTree, CliError> {
        match self.model()? {
            Model::Tree(t) => Ok(t),
            Model::Dag(d) => StagedTree::from_dag(&d, &self.pi(&d)?).map_err(usage),
            Model::ITree(_) => Err(usage("expected a staged tree or a DAG, got an interventional tree")),
        }
    }

    fn itree(&self) -> Result<InterventionalTree, CliError> {
        match self.model()? {
            Model::ITree(t) => Ok(t),
            Model::Dag(d) => InterventionalTree::from_dag_targets(&d, &self.targets()?, &self.pi(&d)?).map_err(usage),
            Model::Tree(_) => Err(usage("expected an interventional tree or a DAG")),
        }
    }
}

fn node_set(nodes: &[usize]) -> NodeSet {
    nodes.iter().fold(NodeSet::EMPTY, |s, &v| s.with(v))
}

fn dialect(format: Format) -> Result<Dialect, CliError> {
    match format {
        Format::M2 => Ok(Dialect::M2),
        Format::Singular => Ok(Dialect::Singular),
        other => Err(usage(format!("{other:?} is not a CAS dialect; use m2 or singular"))),
    }
}

fn presentation(input: &Input, family: Family) -> Result<IdealPresentation, CliError> {
    let pres = match family {
        Family::ModelInvariants => match input.model()? {
            Model::ITree(it) => interventional_model_invariant_generators(&it),
            Model::Dag(_) if input.targets.is_some() => interventional_model_invariant_generators(&input.itree()?),
            _ => model_invariant_generators(&input.tree()?),
        },
        Family::PredStar => {
            let d = input.dag()?;
            pred_star_generators(&d, &input.pi(&d)?).map_err(usage)?
        }
        Family::Pred => {
            let d = input.dag()?;
            pred_generators(&d, &input.pi(&d)?).map_err(usage)?
        }
        Family::Local => local_generators(&input.dag()?).map_err(usage)?,
        Family::Global => global_generators(&input.dag()?).map_err(usage)?,
        Family::Inv => inv_ideal_generators(&input.dag()?, &input.targets()?).map_err(usage)?,
        Family::ICi => i_ci_ideal(&input.dag()?, &input.targets()?).map_err(usage)?,
    };
    Ok(pres)
}

fn toric(input: &Input) -> Result<ToricMap, CliError> {
    match input.model()? {
        Model::ITree(it) => Ok(toric_images_interventional(&it)),
        Model::Dag(_) if input.targets.is_some() => Ok(toric_images_interventional(&input.itree()?)),
        _ => Ok(toric_images(&input.tree()?)),
    }
}

fn report_outcome(reports: &[SweepReport]) -> Outcome {
    let stdout: String = reports.iter().map(|r| r.to_json_lines()).collect();
    let stderr: String = reports
        .iter()
        .map(|r| format!("{}: {} checked, {} passed, {} failed\n", r.universe, r.checked, r.passed, r.failed))
        .collect();
    Outcome { stdout, stderr, counterexample: reports.iter().any(|r| !r.all_passed()) }
}

fn dispatch(verb: Verb) -> Result<Outcome, CliError> {
    match verb {
        Verb::BuildTree { input, format } => {
            let tree = input.tree()?;
            match format {
                Format::Json => Ok(Outcome::text(format!("{}\n", tree.to_json()))),
                Format::Dot => Ok(Outcome::text(tree.to_dot())),
                other => Err(usage(format!("build-tree writes json or dot, not {other:?}"))),
            }
        }
        Verb::BuildItree { input, format } => {
            let it = input.itree()?;
            match format {
                Format::Json => Ok(Outcome::text(format!("{}\n", it.to_json()))),
                Format::Dot => Ok(Outcome::text(it.tree().to_dot())),
                other => Err(usage(format!("build-itree writes json or dot, not {other:?}"))),
            }
        }
        Verb::CheckBalanced { input } => {
            let witness = match input.model()? {
                Model::ITree(it) => it.balance_witness(),
                Model::Dag(_) if input.targets.is_some() => input.itree()?.balance_witness(),
                _ => input.tree()?.balance_witness(),
            };
            Ok(Outcome::json(match witness {
                None => json!({ "balanced": true }),
                Some(w) => json!({ "balanced": false, "witness": w }),
            }))
        }
        Verb::CheckCriterion { input } => {
            let dag = input.dag()?;
            let witness = criterion_check(&dag, &input.targets()?).map_err(usage)?;
            Ok(Outcome::json(match witness {
                None => json!({ "criterion": true }),
                Some(w) => json!({ "criterion": false, "witness": w }),
            }))
        }
        Verb::Dsep { input, a, b, c } => {
            let dag = input.dag()?;
            let c: Vec<usize> =
                c.iter().filter(|s| !s.is_empty()).map(|s| s.parse().map_err(usage)).collect::<Result<_, _>>()?;
            let sep = dag.d_separated(node_set(&a), node_set(&b), node_set(&c)).map_err(usage)?;
            Ok(Outcome::json(json!({ "a": a, "b": b, "c": c, "d_separated": sep })))
        }
        Verb::ImecPairs { input } => {
            let pairs = i_markov_invariance_pairs(&input.dag()?, &input.targets()?).map_err(usage)?;
            Ok(Outcome::json(serde_json::to_value(pairs).expect("pairs serialize")))
        }
        Verb::GenIdeal { input, family, format } => {
            let pres = presentation(&input, family)?;
            match format {
                Format::Json => Ok(Outcome::text(format!("{}\n", pres.to_json()))),
                Format::Dot => Err(usage("gen-ideal writes json, m2 or singular")),
                f => Ok(Outcome::text(export_presentation(&pres, dialect(f)?))),
            }
        }
        Verb::ExportCas { input, family, format } => {
            let d = dialect(format)?;
            match family {
                Some(f) => Ok(Outcome::text(export_presentation(&presentation(&input, f)?, d))),
                None => Ok(Outcome::text(export_toric(&toric(&input)?, d))),
            }
        }
        Verb::Verify { input, family, samples, seed } => {
            let mut reports = Vec::new();
            let extra = family.map(|f| presentation(&input, f)).transpose()?;
            let interventional = matches!(input.model()?, Model::ITree(_)) || input.targets.is_some();
            if interventional {
                let it = input.itree()?;
                reports.push(roundtrip_itree(&it, seed, samples));
                for pres in std::iter::once(interventional_model_invariant_generators(&it)).chain(extra) {
                    let points = itree_points(&it, pres.ring(), seed, samples).map_err(usage)?;
                    reports.push(check_vanishing(&pres, &points).map_err(usage)?);
                }
            } else {
                let tree = input.tree()?;
                reports.push(roundtrip_tree(&tree, seed, samples));
                for pres in std::iter::once(model_invariant_generators(&tree)).chain(extra) {
                    let points = tree_points(&tree, pres.ring(), seed, samples).map_err(usage)?;
                    reports.push(check_vanishing(&pres, &points).map_err(usage)?);
                }
            }
            Ok(report_outcome(&reports))
        }
        Verb::Sweep { kind, n, cards, extra, sampled, seed } => {
            let cards = cards.unwrap_or_else(|| vec![2; n]);
            if cards.len() != n {
                return Err(usage(format!("--cards lists {} values for n={n}", cards.len())));
            }
            let report = match (kind, sampled) {
                (SweepKind::Classification, None) => classification_sweep(&cards, TargetFamily::WithEmpty { extra }),
                (SweepKind::Classification, Some(count)) => classification_sweep_sampled(
                    &cards,
                    count,
                    TargetFamily::Sampled { count, extra, seed },
                    seed,
                ),
                (SweepKind::BalancedPerfect, _) => balanced_perfect_sweep(&cards),
                (SweepKind::Lemma, _) => lemma_equality_sweep(n),
                (SweepKind::Markov, _) => markov_equivalence_sweep(n),
            }
            .map_err(usage)?;
            Ok(report_outcome(&[report]))
        }
        Verb::ExportDot { input, ceg } => {
            let tree = match input.model()? {
                Model::ITree(it) => it.tree().clone(),
                Model::Dag(_) if input.targets.is_some() => input.itree()?.tree().clone(),
                _ => input.tree()?,
            };
            Ok(Outcome::text(if ceg { tree.ceg_quotient().to_dot(&tree) } else { tree.to_dot() }))
        }
    }
}

/// Runs one command. Exit code 0 on success, 1 when a check or sweep finds
/// a counterexample, 2 on malformed input or usage.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match dispatch(cli.verb) {
        Ok(o) => {
            let _ = write!(out, "{}", o.stdout);
            let _ = write!(err, "{}", o.stderr);
            if o.counterexample {
                1
            } else {
                0
            }
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}
