//! Command-line front end: validate input bundles, run symbolic forward
//! chaining, train rules from templates, and extract learned rules from a
//! training report.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use reasoner::chain::ChainConfig;
use reasoner::dsl::{parse_facts, parse_rules, serialize_graph};
use reasoner::embedding::{load_word_vectors, Lexicon};
use reasoner::graph::{apply_rule, match_subgraph, Rule, SemanticGraph};
use reasoner::matrices::LossMode;
use reasoner::train::{path_reports, train_all, Optimizer, PathReport, TrainConfig, TrainError};

/// Embedding dimension when no word-vector file is supplied; every symbol is
/// then seeded from the run seed.
const DEFAULT_DIM: usize = 16;

const EXIT_OK: u8 = 0;
const EXIT_VALIDATION: u8 = 1;
const EXIT_TRAINING: u8 = 2;

#[derive(Parser)]
#[command(
    name = "reasoner",
    version,
    about = "Semantic reasoner over embedded predicate graphs: validate, infer, train, extract"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse all inputs and report diagnostics; exit 0 iff everything is clean.
    Validate {
        #[arg(long)]
        facts: PathBuf,
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        goal: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Symbolic forward chaining with fully specified rules; no training.
    Infer {
        #[arg(long)]
        facts: PathBuf,
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        max_depth: Option<usize>,
    },
    /// Enumerate paths from facts to goal, train each, write a JSON report.
    Train(TrainArgs),
    /// Print the best path's extracted rules from a training report.
    Extract {
        #[arg(long)]
        report: PathBuf,
    },
}

#[derive(Parser)]
struct TrainArgs {
    /// Bundle config (JSON); explicit flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    facts: Option<PathBuf>,
    #[arg(long)]
    goal: Option<PathBuf>,
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    max_depth: Option<usize>,
    /// "stated" or "full_bce".
    #[arg(long)]
    loss_mode: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Bundle configuration file. Relative paths resolve against the config's
/// directory.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct RunSpec {
    facts: Option<String>,
    goal: Option<String>,
    rules: Option<String>,
    vocab: Option<String>,
    seed: Option<u64>,
    epochs: Option<usize>,
    learning_rate: Option<f64>,
    max_depth: Option<usize>,
    slots: Option<usize>,
    loss_mode: Option<String>,
    clip_floor: Option<f64>,
    clip_ceiling: Option<f64>,
    success_threshold: Option<f64>,
    goal_check_threshold: Option<f64>,
    out: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConfigEcho {
    facts: String,
    goal: String,
    rules: String,
    vocab: Option<String>,
    seed: u64,
    epochs: usize,
    learning_rate: f64,
    max_depth: Option<usize>,
    slots: Option<usize>,
    loss_mode: LossMode,
    clip_floor: f64,
    clip_ceiling: f64,
    success_threshold: f64,
    goal_check_threshold: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RunReport {
    config: ConfigEcho,
    slots: usize,
    best: usize,
    paths: Vec<PathReport>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }

    fn training(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_TRAINING,
            message: message.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate {
            facts,
            rules,
            goal,
            vocab,
            seed,
        } => cmd_validate(&facts, &rules, goal.as_deref(), vocab.as_deref(), seed),
        Command::Infer {
            facts,
            rules,
            vocab,
            seed,
            max_depth,
        } => cmd_infer(&facts, &rules, vocab.as_deref(), seed, max_depth),
        Command::Train(args) => cmd_train(args),
        Command::Extract { report } => cmd_extract(&report),
    };
    match result {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
}

fn build_lexicon(vocab: Option<&Path>, seed: u64) -> Result<Lexicon, Failure> {
    match vocab {
        Some(path) => {
            let store = load_word_vectors(path, None)
                .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
            Ok(Lexicon::with_node_vocab(seed, store))
        }
        None => Ok(Lexicon::seeded(seed, DEFAULT_DIM)),
    }
}

fn load_facts(path: &Path, lexicon: &mut Lexicon) -> Result<SemanticGraph, Failure> {
    let text = read_text(path)?;
    parse_facts(&text)
        .and_then(|ast| ast.realize(lexicon))
        .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
}

fn load_rules(path: &Path, lexicon: &mut Lexicon) -> Result<Vec<Rule>, Failure> {
    let text = read_text(path)?;
    let parsed =
        parse_rules(&text).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
    parsed
        .iter()
        .enumerate()
        .map(|(i, rt)| {
            rt.realize(lexicon, &format!("r{i}"))
                .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
        })
        .collect()
}

fn cmd_validate(
    facts: &Path,
    rules: &Path,
    goal: Option<&Path>,
    vocab: Option<&Path>,
    seed: u64,
) -> Result<(), Failure> {
    let mut lexicon = build_lexicon(vocab, seed)?;
    let mut clean = true;
    let mut check = |label: &str, outcome: Result<String, Failure>| match outcome {
        Ok(summary) => println!("{label}: ok ({summary})"),
        Err(failure) => {
            clean = false;
            println!("{label}: {}", failure.message);
        }
    };

    check(
        "facts",
        load_facts(facts, &mut lexicon)
            .map(|g| format!("{} nodes, {} edges", g.node_count(), g.edge_count())),
    );
    if let Some(goal_path) = goal {
        check(
            "goal",
            load_facts(goal_path, &mut lexicon)
                .map(|g| format!("{} nodes, {} edges", g.node_count(), g.edge_count())),
        );
    }
    check(
        "rules",
        load_rules(rules, &mut lexicon).map(|rs| format!("{} rules", rs.len())),
    );

    if clean {
        Ok(())
    } else {
        Err(Failure::validation("validation failed"))
    }
}

fn describe_binding(
    rule: &Rule,
    state: &SemanticGraph,
    binding: &reasoner::graph::Binding,
) -> String {
    let mut parts = Vec::new();
    for (p, t) in binding.node_map.iter().enumerate() {
        let pre = rule.pre.nodes[p].symbol.as_deref().unwrap_or("?");
        let fact = state.nodes[t.0].symbol.as_deref().unwrap_or("?");
        parts.push(format!("{pre}->{fact}"));
    }
    for (p, t) in binding.edge_map.iter().enumerate() {
        let pre = rule.pre.edges[p].symbol.as_deref().unwrap_or("?");
        let fact = state.edges[t.0].symbol.as_deref().unwrap_or("?");
        parts.push(format!("{pre}->{fact}"));
    }
    parts.join(", ")
}

fn cmd_infer(
    facts: &Path,
    rules: &Path,
    vocab: Option<&Path>,
    seed: u64,
    max_depth: Option<usize>,
) -> Result<(), Failure> {
    let mut lexicon = build_lexicon(vocab, seed)?;
    let state0 = load_facts(facts, &mut lexicon)?;
    let rules = load_rules(rules, &mut lexicon)?;
    for rule in &rules {
        let has_wildcard = rule.pre.nodes.iter().any(|n| n.symbol.is_none())
            || rule.pre.edges.iter().any(|e| e.symbol.is_none())
            || rule.post.edges.iter().any(|e| e.symbol.is_none())
            || rule.post.nodes.iter().any(|n| match n {
                reasoner::graph::PostNode::Fresh { symbol, .. } => symbol.is_none(),
                reasoner::graph::PostNode::Copy { .. } => false,
            });
        if has_wildcard {
            return Err(Failure::validation(format!(
                "rule {} contains wildcards; wildcard templates need training, not inference",
                rule.label
            )));
        }
    }

    let depth = max_depth.unwrap_or(rules.len());
    let mut state = state0;
    let mut used = vec![false; rules.len()];
    println!(
        "facts: {}",
        serialize_graph(&state).map_err(|e| Failure::validation(e.to_string()))?
    );
    for _ in 0..depth {
        let mut fired = false;
        for (i, rule) in rules.iter().enumerate() {
            if used[i] {
                continue;
            }
            let bindings = match_subgraph(&rule.pre, &rule.thresholds, &state);
            if let Some(binding) = bindings.into_iter().next() {
                let next = apply_rule(rule, &state, &binding)
                    .map_err(|e| Failure::training(e.to_string()))?;
                println!(
                    "apply {} [{}]",
                    rule.label,
                    describe_binding(rule, &state, &binding)
                );
                println!(
                    "state: {}",
                    serialize_graph(&next).map_err(|e| Failure::validation(e.to_string()))?
                );
                used[i] = true;
                state = next;
                fired = true;
                break;
            }
        }
        if !fired {
            break;
        }
    }
    Ok(())
}

fn parse_loss_mode(text: &str) -> Result<LossMode, Failure> {
    match text {
        "stated" => Ok(LossMode::Stated),
        "full_bce" => Ok(LossMode::FullBce),
        other => Err(Failure::validation(format!(
            "unknown loss mode '{other}' (expected 'stated' or 'full_bce')"
        ))),
    }
}

fn resolve_against(base: Option<&Path>, raw: &str) -> PathBuf {
    let p = PathBuf::from(raw);
    if p.is_absolute() {
        return p;
    }
    match base {
        Some(dir) => dir.join(p),
        None => p,
    }
}

fn cmd_train(args: TrainArgs) -> Result<(), Failure> {
    let spec: RunSpec = match &args.config {
        Some(path) => {
            let text = read_text(path)?;
            serde_json::from_str(&text)
                .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?
        }
        None => RunSpec::default(),
    };
    let base = args
        .config
        .as_deref()
        .and_then(Path::parent)
        .map(Path::to_path_buf);

    let pick_path = |flag: &Option<PathBuf>, from_spec: &Option<String>, what: &str| {
        flag.clone()
            .or_else(|| {
                from_spec
                    .as_ref()
                    .map(|raw| resolve_against(base.as_deref(), raw))
            })
            .ok_or_else(|| Failure::validation(format!("missing --{what}")))
    };

    let facts_path = pick_path(&args.facts, &spec.facts, "facts")?;
    let goal_path = pick_path(&args.goal, &spec.goal, "goal")?;
    let rules_path = pick_path(&args.rules, &spec.rules, "rules")?;
    let vocab_path = args.vocab.clone().or_else(|| {
        spec.vocab
            .as_ref()
            .map(|raw| resolve_against(base.as_deref(), raw))
    });
    let out_path = args
        .out
        .clone()
        .or_else(|| spec.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("report.json"));

    let defaults = TrainConfig::default();
    let train_cfg = TrainConfig {
        epochs: args.epochs.or(spec.epochs).unwrap_or(defaults.epochs),
        learning_rate: args
            .lr
            .or(spec.learning_rate)
            .unwrap_or(defaults.learning_rate),
        clip_floor: spec.clip_floor.unwrap_or(defaults.clip_floor),
        clip_ceiling: spec.clip_ceiling.unwrap_or(defaults.clip_ceiling),
        seed: args.seed.or(spec.seed).unwrap_or(defaults.seed),
        loss_mode: match args.loss_mode.as_deref().or(spec.loss_mode.as_deref()) {
            Some(text) => parse_loss_mode(text)?,
            None => defaults.loss_mode,
        },
        success_threshold: spec.success_threshold.unwrap_or(defaults.success_threshold),
        optimizer: Optimizer::Adam,
    };
    let chain_cfg = ChainConfig {
        max_depth: args.max_depth.or(spec.max_depth),
        slots: spec.slots,
        goal_check_threshold: spec.goal_check_threshold.unwrap_or(0.6),
    };

    let mut lexicon = build_lexicon(vocab_path.as_deref(), train_cfg.seed)?;
    let facts = load_facts(&facts_path, &mut lexicon)?;
    let goal = load_facts(&goal_path, &mut lexicon)?;
    let rules = load_rules(&rules_path, &mut lexicon)?;

    let outcome = train_all(&facts, &goal, &rules, &lexicon, &chain_cfg, &train_cfg).map_err(
        |e| match e {
            TrainError::Dsl(_) => Failure::validation(e.to_string()),
            other => Failure::training(other.to_string()),
        },
    )?;

    let slots = outcome.best().path.slots;
    let report = RunReport {
        config: ConfigEcho {
            facts: facts_path.display().to_string(),
            goal: goal_path.display().to_string(),
            rules: rules_path.display().to_string(),
            vocab: vocab_path.as_ref().map(|p| p.display().to_string()),
            seed: train_cfg.seed,
            epochs: train_cfg.epochs,
            learning_rate: train_cfg.learning_rate,
            max_depth: chain_cfg.max_depth,
            slots: chain_cfg.slots,
            loss_mode: train_cfg.loss_mode,
            clip_floor: train_cfg.clip_floor,
            clip_ceiling: train_cfg.clip_ceiling,
            success_threshold: train_cfg.success_threshold,
            goal_check_threshold: chain_cfg.goal_check_threshold,
        },
        slots,
        best: 0,
        paths: path_reports(&outcome),
    };
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Failure::training(format!("report serialization: {e}")))?;
    fs::write(&out_path, json + "\n")
        .map_err(|e| Failure::training(format!("{}: {e}", out_path.display())))?;

    let best = outcome.best();
    println!(
        "trained {} path(s); best: length {}, verified {}, final loss {:.6}",
        outcome.ranked.len(),
        best.path.len(),
        best.verified,
        best.final_loss()
    );
    for text in &best.extracted {
        println!("{text}");
        println!();
    }
    println!("report written to {}", out_path.display());
    Ok(())
}

fn cmd_extract(report: &Path) -> Result<(), Failure> {
    let text = read_text(report)?;
    let parsed: RunReport = serde_json::from_str(&text)
        .map_err(|e| Failure::validation(format!("{}: {e}", report.display())))?;
    if parsed.paths.is_empty() {
        return Err(Failure::training("report contains no trained paths"));
    }
    let best = &parsed.paths[parsed.best];
    let mut first = true;
    for rule in &best.extracted_rules {
        if !first {
            println!();
        }
        println!("{rule}");
        first = false;
    }
    Ok(())
}
