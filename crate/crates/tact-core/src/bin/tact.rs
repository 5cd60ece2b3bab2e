//! Command-line entry point: training, evaluation, correlation-graph
//! export, and subgraph inspection over TSV triple datasets.
//!
//! Every run writes a JSON manifest into the output directory before any
//! computation starts; re-running with the same arguments reproduces every
//! output byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use tact_core::error::{Result, TactError};
use tact_core::eval::{self, EvalContext, Evaluator, MetricsSummary, TripleSet};
use tact_core::kg::{self, KnowledgeGraph, Triple};
use tact_core::model::{ModelConfig, ModelVariant};
use tact_core::rcg::{build_rcg, export_rcg_to_path, Pattern};
use tact_core::rcn::correlation_coefficients;
use tact_core::scoring::ScoreParts;
use tact_core::subgraph::{dump_subgraph, extract_enclosing_subgraph};
use tact_core::training::{self, load_checkpoint, save_checkpoint, TrainConfig};

#[derive(Parser)]
#[command(name = "tact", version, about = "Inductive knowledge-graph link prediction")]
struct Cli {
    /// Cap the worker thread pool.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a dataset directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint on an inductive test directory.
    Eval(EvalArgs),
    /// Export the relational correlation graph of a dataset.
    Rcg(RcgArgs),
    /// Dump one enclosing subgraph as TSV (debugging aid).
    Subgraph(SubgraphArgs),
}

#[derive(Args, Serialize, Clone)]
struct TrainArgs {
    /// Dataset directory containing train.txt (and optionally valid.txt).
    #[arg(long)]
    data: PathBuf,
    /// Output directory for manifest, checkpoint and loss log.
    #[arg(long)]
    out: PathBuf,
    /// Embedding width d.
    #[arg(long, default_value_t = 32)]
    dim: usize,
    /// Subgraph radius k.
    #[arg(long, default_value_t = 2)]
    hops: usize,
    /// Message-passing layers L.
    #[arg(long, default_value_t = 2)]
    layers: usize,
    /// Hinge-loss margin.
    #[arg(long, default_value_t = 8.0)]
    margin: f64,
    /// Adam learning rate.
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    /// Positives per batch.
    #[arg(long, default_value_t = 16)]
    batch: usize,
    /// Training epochs.
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// Negatives per positive.
    #[arg(long, default_value_t = 1)]
    neg: usize,
    /// Probability that a training negative corrupts the relation rather
    /// than an endpoint.
    #[arg(long, default_value_t = 0.75)]
    neg_rel_prob: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scoring input blocks, a subset of "ngr".
    #[arg(long, default_value = "ngr")]
    parts: String,
    /// Model variant: full, base, no-ra or no-rc.
    #[arg(long, default_value = "full")]
    variant: String,
    /// Keep the best-validation epoch instead of the last (needs valid.txt).
    #[arg(long, default_value_t = false)]
    early_stop: bool,
}

#[derive(Args, Serialize, Clone)]
struct EvalArgs {
    /// Trained checkpoint file.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Inductive test directory: its train.txt is the fact graph, its
    /// test.txt holds the query triples.
    #[arg(long)]
    test_data: PathBuf,
    /// Output directory for manifest and metric files.
    #[arg(long)]
    out: PathBuf,
    /// Which metrics to compute: auc-pr, rank or both.
    #[arg(long, default_value = "both")]
    metric: String,
    /// Also evaluate a score-free baseline: none or frequency.
    #[arg(long, default_value = "none")]
    baseline: String,
    /// Relation-count source for the frequency baseline: fact or train.
    #[arg(long, default_value = "fact")]
    freq_source: String,
    /// Training dataset directory (only needed with --freq-source train).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Seed for evaluation-time negative sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Serialize, Clone)]
struct RcgArgs {
    /// Dataset directory; the correlation graph is built from train.txt.
    #[arg(long)]
    data: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Optional checkpoint; when given, learned correlation coefficients
    /// are exported alongside the graph.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args, Serialize, Clone)]
struct SubgraphArgs {
    /// Dataset directory; the subgraph is extracted from train.txt.
    #[arg(long)]
    data: PathBuf,
    /// Head entity name.
    #[arg(long)]
    head: String,
    /// Relation name (its edge, when stored, is excluded).
    #[arg(long)]
    rel: String,
    /// Tail entity name.
    #[arg(long)]
    tail: String,
    #[arg(long, default_value_t = 2)]
    hops: usize,
    /// Label cap comes from the embedding width.
    #[arg(long, default_value_t = 32)]
    dim: usize,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Manifest<A: Serialize> {
    command: &'static str,
    version: String,
    threads: Option<usize>,
    args: A,
    outputs: Vec<String>,
}

fn write_manifest<A: Serialize>(
    out_dir: &Path,
    command: &'static str,
    threads: Option<usize>,
    args: &A,
    outputs: &[&str],
) -> Result<()> {
    fs::create_dir_all(out_dir)
        .map_err(|e| TactError::io(out_dir.display().to_string(), e))?;
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION").to_string(),
        threads,
        args,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    let path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| TactError::Config(format!("manifest serialization: {e}")))?;
    fs::write(&path, text).map_err(|e| TactError::io(path.display().to_string(), e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| TactError::io(path.display().to_string(), e))
}

fn run_train(args: &TrainArgs, threads: Option<usize>) -> Result<()> {
    let parts = ScoreParts::parse(&args.parts)?;
    let variant = ModelVariant::parse(&args.variant)?;
    if variant == ModelVariant::Base && parts.label() != "r" {
        return Err(TactError::Config(
            "the base variant scores with --parts r only".into(),
        ));
    }
    let config = TrainConfig {
        model: ModelConfig {
            dim: args.dim,
            layers: args.layers,
            hops: args.hops,
            parts,
            variant,
        },
        lr: args.lr,
        batch_size: args.batch,
        epochs: args.epochs,
        margin: args.margin,
        n_neg: args.neg,
        rel_neg_prob: args.neg_rel_prob,
        seed: args.seed,
        early_stop: args.early_stop,
    };
    config.validate()?;
    write_manifest(
        &args.out,
        "train",
        threads,
        args,
        &["checkpoint.json", "loss_log.tsv"],
    )?;

    let dataset = kg::load_dataset_dir(&args.data)?;
    let graph = kg::build_graph(&dataset.train, None)?;
    let valid: Option<Vec<Triple>> = match &dataset.valid {
        Some(raw) if args.early_stop => Some(kg::resolve_triples(&graph, raw)?),
        _ => None,
    };

    let outcome = training::train(&graph, valid.as_deref(), &config)?;
    save_checkpoint(&outcome.checkpoint, args.out.join("checkpoint.json"))?;

    let mut log = String::from("epoch\tbatch\tloss\n");
    for r in &outcome.loss_log {
        log.push_str(&format!("{}\t{}\t{}\n", r.epoch, r.batch, r.loss));
    }
    write_text(&args.out.join("loss_log.tsv"), &log)?;

    if outcome.reflexive_skipped > 0 {
        eprintln!(
            "warning: skipped {} reflexive training triples",
            outcome.reflexive_skipped
        );
    }
    println!(
        "trained {} epochs on {} triples ({} batches); checkpoint at {}",
        config.epochs,
        graph.num_triples(),
        outcome.loss_log.len(),
        args.out.join("checkpoint.json").display()
    );
    Ok(())
}

fn parse_metric(s: &str) -> Result<(bool, bool)> {
    match s {
        "auc-pr" => Ok((true, false)),
        "rank" => Ok((false, true)),
        "both" => Ok((true, true)),
        other => Err(TactError::Config(format!(
            "unknown metric `{other}` (expected auc-pr, rank or both)"
        ))),
    }
}

fn run_eval(args: &EvalArgs, threads: Option<usize>) -> Result<()> {
    let (want_auc, want_rank) = parse_metric(&args.metric)?;
    let baseline_frequency = match args.baseline.as_str() {
        "none" => false,
        "frequency" => true,
        other => {
            return Err(TactError::Config(format!(
                "unknown baseline `{other}` (expected none or frequency)"
            )))
        }
    };
    if !matches!(args.freq_source.as_str(), "fact" | "train") {
        return Err(TactError::Config(format!(
            "unknown frequency source `{}` (expected fact or train)",
            args.freq_source
        )));
    }

    let mut outputs = vec!["metrics.json", "metrics.tsv"];
    if baseline_frequency {
        outputs.push("baseline_metrics.json");
        outputs.push("baseline_metrics.tsv");
    }
    write_manifest(&args.out, "eval", threads, args, &outputs)?;

    let ckpt = load_checkpoint(&args.checkpoint)?;
    let cfg = ckpt.model_config()?;

    let dataset = kg::load_dataset_dir(&args.test_data)?;
    let relation_vocab = kg::Vocab::from_names(ckpt.meta.relations.iter().cloned());
    let fact_graph = kg::build_graph(&dataset.train, Some(&relation_vocab))?;
    let test_raw = dataset.test.as_ref().ok_or_else(|| {
        TactError::io(
            args.test_data.join("test.txt").display().to_string(),
            std::io::Error::new(std::io::ErrorKind::NotFound, "missing test.txt"),
        )
    })?;
    let queries = kg::resolve_triples(&fact_graph, test_raw)?;

    let ctx = EvalContext::new(&fact_graph);
    let evaluator = Evaluator::with_rcg(&fact_graph, &ctx.rcg, &ckpt.params, cfg);

    let filter = build_filter(&fact_graph, &queries);
    let mut auc_pr = None;
    let mut mrr = None;
    let mut hits = BTreeMap::new();
    let mut n_queries = queries.len();

    if want_auc {
        let outcome = evaluator.auc_pr_protocol(&queries, args.seed)?;
        auc_pr = Some(outcome.auc_pr);
        if outcome.skipped_reflexive > 0 {
            eprintln!(
                "warning: skipped {} reflexive test triples",
                outcome.skipped_reflexive
            );
        }
    }
    if want_rank {
        let (ranks, skipped) = evaluator.rank_queries(&queries, &filter)?;
        if skipped > 0 {
            eprintln!("warning: skipped {skipped} reflexive ranking queries");
        }
        n_queries = ranks.len();
        let metrics = eval::mrr_hits(&ranks, &[1, 5, 10])?;
        mrr = Some(metrics.mrr);
        hits = metrics
            .hits
            .into_iter()
            .map(|(n, f)| (n.to_string(), f))
            .collect();
    }

    let summary = MetricsSummary {
        auc_pr,
        mrr,
        hits,
        n_queries,
        seed: args.seed,
    };
    write_json(&args.out.join("metrics.json"), &summary)?;
    write_text(&args.out.join("metrics.tsv"), &summary.to_tsv())?;
    print!("{}", summary.to_tsv());

    if baseline_frequency {
        let counts = match args.freq_source.as_str() {
            "fact" => fact_graph.relation_counts(),
            _ => {
                let train_dir = args.data.as_ref().ok_or_else(|| {
                    TactError::Config(
                        "--freq-source train needs --data pointing at the training dataset"
                            .into(),
                    )
                })?;
                let train_raw = kg::load_dataset_dir(train_dir)?.train;
                let train_graph = kg::build_graph(&train_raw, Some(&relation_vocab))?;
                train_graph.relation_counts()
            }
        };
        let ranks = eval::frequency_ranks(&counts, &queries, &filter)?;
        let metrics = eval::mrr_hits(&ranks, &[1, 5, 10])?;
        let summary = MetricsSummary {
            auc_pr: None,
            mrr: Some(metrics.mrr),
            hits: metrics
                .hits
                .into_iter()
                .map(|(n, f)| (n.to_string(), f))
                .collect(),
            n_queries: ranks.len(),
            seed: args.seed,
        };
        write_json(&args.out.join("baseline_metrics.json"), &summary)?;
        write_text(&args.out.join("baseline_metrics.tsv"), &summary.to_tsv())?;
        println!("frequency baseline ({}):", args.freq_source);
        print!("{}", summary.to_tsv());
    }
    Ok(())
}

fn build_filter(fact_graph: &KnowledgeGraph, queries: &[Triple]) -> TripleSet {
    let mut filter = TripleSet::from_triples(fact_graph.triples());
    for q in queries {
        filter.insert(q);
    }
    filter
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| TactError::Config(format!("json serialization: {e}")))?;
    write_text(path, &text)
}

fn run_rcg(args: &RcgArgs, threads: Option<usize>) -> Result<()> {
    let mut outputs = vec!["rcg.tsv", "pattern_histogram.tsv"];
    if args.checkpoint.is_some() {
        outputs.push("coefficients.tsv");
    }
    write_manifest(&args.out, "rcg", threads, args, &outputs)?;

    let dataset = kg::load_dataset_dir(&args.data)?;
    let graph = kg::build_graph(&dataset.train, None)?;
    let rcg = build_rcg(&graph);
    if rcg.reflexive_skipped() > 0 {
        eprintln!(
            "warning: skipped {} reflexive edges while building the correlation graph",
            rcg.reflexive_skipped()
        );
    }
    export_rcg_to_path(&rcg, graph.relation_vocab(), args.out.join("rcg.tsv"))?;

    let hist = rcg.pattern_histogram();
    let mut text = String::new();
    for (i, count) in hist.iter().enumerate() {
        text.push_str(&format!(
            "{}\t{}\n",
            Pattern::from_index(i).unwrap().label(),
            count
        ));
    }
    write_text(&args.out.join("pattern_histogram.tsv"), &text)?;

    if let Some(ckpt_path) = &args.checkpoint {
        let ckpt = load_checkpoint(ckpt_path)?;
        if ckpt.meta.relations != graph.relation_vocab().names() {
            return Err(TactError::Checkpoint(
                "checkpoint relation vocabulary does not match the dataset".into(),
            ));
        }
        let rows = correlation_coefficients(&ckpt.params.rcn, &rcg)?;
        let mut text = String::new();
        for (t, p, n, c) in rows {
            text.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                graph.relation_vocab().name(t).unwrap_or("?"),
                p.label(),
                graph.relation_vocab().name(n).unwrap_or("?"),
                c
            ));
        }
        write_text(&args.out.join("coefficients.tsv"), &text)?;
    }
    println!(
        "exported correlation graph of {} relations ({} indicator entries)",
        rcg.relation_count(),
        hist.iter().sum::<usize>()
    );
    Ok(())
}

fn run_subgraph(args: &SubgraphArgs) -> Result<()> {
    let dataset = kg::load_dataset_dir(&args.data)?;
    let graph = kg::build_graph(&dataset.train, None)?;
    let lookup = |name: &str| {
        graph
            .entity_vocab()
            .get(name)
            .map(kg::EntityId)
            .ok_or_else(|| TactError::Vocab(format!("unknown entity `{name}`")))
    };
    let head = lookup(&args.head)?;
    let tail = lookup(&args.tail)?;
    let rel = graph
        .relation_vocab()
        .get(&args.rel)
        .map(kg::RelationId)
        .ok_or_else(|| TactError::Vocab(format!("unknown relation `{}`", args.rel)))?;
    let exclude = graph.find_edge(head, rel, tail);
    let sub = extract_enclosing_subgraph(&graph, head, tail, args.hops, exclude)?
        .labeled(args.dim - 1);
    let mut buf = Vec::new();
    dump_subgraph(&sub, &graph, &mut buf)?;
    match &args.out {
        Some(path) => write_text(path, &String::from_utf8_lossy(&buf))?,
        None => print!("{}", String::from_utf8_lossy(&buf)),
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| TactError::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Train(args) => run_train(args, cli.threads),
        Command::Eval(args) => run_eval(args, cli.threads),
        Command::Rcg(args) => run_rcg(args, cli.threads),
        Command::Subgraph(args) => run_subgraph(args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
