use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use vqace_core::classifier::{build_classifier, ShortcutClassifier, VoteRules};
use vqace_core::evaluation::{
    confidence_histogram, evaluate_predictions, rule_model_agreement, split_distribution_report, split_examples,
    EvalReport, GroupBy, MissingPredictions, SplitLabel, SubsetScore,
};
use vqace_core::miner::{mine_frequent_itemsets, MinSupport, MineParams};
use vqace_core::rules::{
    best_rule_breakdown, extract_rules, filter_rules, rule_type_counts, score_rules,
    FilterParams,
};
use vqace_core::synth::{generate_synthetic, NoiseDistribution, PlantedRule, SyntheticSpec};
use vqace_core::{CorrectnessMode, Dataset, Namespace, RuleSetProvenance};

use crate::error::{Error, Result};
use crate::formats::{self, ModeRecord, PredictionRecord, RuleRecord, SplitProvenance};
use crate::manifest::{file_digest, manifest_path, FileDigest, RunManifest};
use crate::report::{pct, Table};
use crate::{cache, jsonl, vqa};

#[derive(Debug, Parser)]
#[command(name = "vqace", version, about = "Mine multimodal shortcuts and build counterexample splits")]
pub struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "VQACE_THREADS", default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a dataset cache from VQA files or generic JSONL.
    Ingest {
        #[command(subcommand)]
        source: IngestSource,
    },
    /// Mine frequent itemsets from a dataset cache.
    Mine(MineArgs),
    /// Extract and filter rules from mined itemsets.
    Rules(RulesArgs),
    /// Partition a dataset into counterexamples / easy / unmatched.
    Split(SplitArgs),
    /// Predict answers with the shortcut classifier.
    Classify(ClassifyArgs),
    /// Score prediction files on each subset.
    Evaluate(EvaluateArgs),
    /// Rank rules by agreement with a model's predictions.
    Correlate(CorrelateArgs),
    /// Generate a synthetic dataset with planted shortcuts.
    Synth(SynthArgs),
    /// Summary reports over rules and splits.
    Report {
        #[command(subcommand)]
        kind: ReportKind,
    },
}

#[derive(Debug, Subcommand)]
pub enum IngestSource {
    Vqa(IngestVqaArgs),
    Jsonl(IngestJsonlArgs),
}

#[derive(Debug, Args)]
pub struct IngestVqaArgs {
    #[arg(long)]
    questions: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    detections: PathBuf,
    #[arg(long, default_value_t = 3000)]
    answer_vocab_size: usize,
    /// Take the answer vocabulary from this dataset cache (e.g. train).
    #[arg(long)]
    answer_vocab_from: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    min_word_count: usize,
    #[arg(long, default_value_t = 0.0)]
    score_threshold: f64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestJsonlArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Exact,
    Soft,
}

#[derive(Debug, Args)]
pub struct ModeArgs {
    /// How an answer is judged correct.
    #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
    mode: ModeArg,
    /// Soft mode: correct when the VQA score exceeds this.
    #[arg(long, default_value_t = 0.0)]
    soft_threshold: f64,
    /// Soft mode: use the leave-one-out average of the VQA score.
    #[arg(long)]
    strict: bool,
}

impl ModeArgs {
    fn mode(&self) -> CorrectnessMode {
        match self.mode {
            ModeArg::Exact => CorrectnessMode::ExactMatch,
            ModeArg::Soft => CorrectnessMode::SoftVqa {
                threshold: self.soft_threshold,
                strict: self.strict,
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct MineArgs {
    #[arg(short, long)]
    input: PathBuf,
    /// An integer is an absolute count, anything else a fraction of the dataset.
    #[arg(long, default_value = "2.1e-5")]
    min_support: String,
    #[arg(long = "max-len", default_value_t = 5)]
    max_length: usize,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
pub struct RulesArgs {
    /// Itemset file.
    #[arg(short, long)]
    input: PathBuf,
    /// Dataset the itemsets were mined from.
    #[arg(short, long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 0.3)]
    min_confidence: f64,
    /// Keep longer rules whose confidence only equals a shorter rule's.
    #[arg(long)]
    no_prune_equal: bool,
    #[command(flatten)]
    mode: ModeArgs,
    /// Re-score (and filter) the rules on another dataset.
    #[arg(long)]
    score_on: Option<PathBuf>,
    #[arg(long)]
    no_verify: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VoteArg {
    Best,
    Full,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    rules: PathBuf,
    /// Dataset to split.
    #[arg(short, long)]
    dataset: PathBuf,
    #[command(flatten)]
    mode: ModeArgs,
    /// Split with the classifier's voting rules instead of the full rule set.
    #[arg(long, requires = "train")]
    classifier_rules: bool,
    /// Dataset the rules were scored on (for --classifier-rules).
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    no_verify: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    rules: PathBuf,
    /// Dataset the rules were scored on.
    #[arg(long)]
    train: PathBuf,
    /// Dataset to predict.
    #[arg(short, long)]
    dataset: PathBuf,
    #[arg(long, value_enum, default_value_t = VoteArg::Best)]
    vote: VoteArg,
    #[command(flatten)]
    mode: ModeArgs,
    /// Also write the voting rules.
    #[arg(long)]
    save_rules: Option<PathBuf>,
    #[arg(long)]
    no_verify: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OutputFormat {
    Table,
    Json,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// `PATH` or `NAME=PATH`; repeatable.
    #[arg(long, required = true)]
    predictions: Vec<String>,
    #[arg(long)]
    split: PathBuf,
    #[arg(short, long)]
    dataset: PathBuf,
    /// Scoring: exact match, or the soft VQA score (threshold is ignored).
    #[command(flatten)]
    mode: ModeArgs,
    /// Score examples without a prediction as 0 instead of failing.
    #[arg(long)]
    allow_missing: bool,
    /// Add a breakdown by answer, question_prefix or answer_type.
    #[arg(long)]
    by: Option<String>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    format: OutputFormat,
    #[arg(long)]
    no_verify: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[arg(long)]
    rules: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
    #[arg(short, long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 20)]
    top: usize,
    /// Ignore rules matching fewer examples than this.
    #[arg(long, default_value_t = 1)]
    min_matched: usize,
    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    format: OutputFormat,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON generator spec; defaults apply to omitted fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Overrides the seed given in --spec.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum ReportKind {
    /// Rule counts per confidence bin.
    Histogram {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        bin_width: f64,
        #[arg(long, default_value_t = 0.3)]
        lower: f64,
        #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
        format: OutputFormat,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Subset sizes grouped by answer, question prefix or answer type.
    Distribution {
        #[arg(long)]
        split: PathBuf,
        #[arg(short, long)]
        dataset: PathBuf,
        #[arg(long, default_value = "answer")]
        by: String,
        #[arg(long)]
        top: Option<usize>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
        format: OutputFormat,
        #[arg(long)]
        no_verify: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Rule counts by type.
    RuleTypes {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
        format: OutputFormat,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Type of each example's best correct rule.
    BestRule {
        #[arg(long)]
        rules: PathBuf,
        #[arg(short, long)]
        dataset: PathBuf,
        #[command(flatten)]
        mode: ModeArgs,
        #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
        format: OutputFormat,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

/// Collects what the manifest needs while a subcommand runs.
struct Run {
    subcommand: &'static str,
    params: serde_json::Value,
    inputs: Vec<FileDigest>,
    started: Instant,
    threads: usize,
}

impl Run {
    fn new(subcommand: &'static str, params: serde_json::Value, threads: usize) -> Self {
        Self {
            subcommand,
            params,
            inputs: Vec::new(),
            started: Instant::now(),
            threads,
        }
    }

    fn input(&mut self, path: &Path) -> Result<String> {
        let d = FileDigest::of(path)?;
        let digest = d.sha256.clone();
        self.inputs.push(d);
        Ok(digest)
    }

    fn dataset(&mut self, path: &Path) -> Result<(Dataset, String)> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let digest = crate::manifest::sha256_hex(&bytes);
        let dataset = cache::decode(&bytes).map_err(|m| Error::format(path, m))?;
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: digest.clone(),
        });
        Ok((dataset, digest))
    }

    /// Writes the manifest for `outputs`, next to the first one (or to
    /// `manifest` when given).
    fn finish(self, outputs: &[&Path], manifest: Option<&Path>) -> Result<()> {
        let outputs = outputs.iter().map(|p| FileDigest::of(p)).collect::<Result<Vec<_>>>()?;
        let target = match manifest {
            Some(m) => m.to_path_buf(),
            None => manifest_path(Path::new(&outputs[0].path)),
        };
        RunManifest {
            subcommand: self.subcommand.to_string(),
            params: self.params,
            inputs: self.inputs,
            outputs,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_ms: self.started.elapsed().as_millis() as u64,
            threads: self.threads,
        }
        .write(&target)
    }
}

fn lineage(what: &str, expected: Option<&str>, actual: &str, no_verify: bool) -> Result<()> {
    if no_verify {
        return Ok(());
    }
    match expected {
        Some(e) if e == actual => Ok(()),
        Some(e) => Err(Error::Lineage(format!("{what}: expected digest {e}, found {actual}"))),
        None => Err(Error::Lineage(format!("{what}: no recorded digest (use --no-verify)"))),
    }
}

fn parse_min_support(s: &str) -> Result<MinSupport> {
    if let Ok(n) = s.parse::<u32>() {
        return Ok(MinSupport::Count(n));
    }
    s.parse::<f64>()
        .map(MinSupport::Fraction)
        .map_err(|_| Error::Usage(format!("invalid --min-support {s:?}")))
}

fn parse_group(s: &str) -> Result<GroupBy> {
    GroupBy::parse(s).ok_or_else(|| Error::Usage(format!("unknown grouping {s:?} (answer, question_prefix, answer_type)")))
}

fn emit(text: String, output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json_text(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json value serializes");
    s.push('\n');
    s
}

/// Report commands print to stdout or, with `-o`, write a file and manifest.
fn emit_report(run: Run, text: String, output: Option<&Path>) -> Result<()> {
    emit(text, output)?;
    match output {
        Some(p) => run.finish(&[p], None),
        None => Ok(()),
    }
}

fn mode_json(mode: &ModeArgs) -> serde_json::Value {
    serde_json::to_value(ModeRecord::from(mode.mode())).expect("mode serializes")
}

pub fn run(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::Internal(e.to_string()))?;
    let threads = pool.current_num_threads();
    pool.install(|| dispatch(cli.command, threads))
}

fn dispatch(command: Command, threads: usize) -> Result<()> {
    match command {
        Command::Ingest { source } => cmd_ingest(source, threads),
        Command::Mine(a) => cmd_mine(a, threads),
        Command::Rules(a) => cmd_rules(a, threads),
        Command::Split(a) => cmd_split(a, threads),
        Command::Classify(a) => cmd_classify(a, threads),
        Command::Evaluate(a) => cmd_evaluate(a, threads),
        Command::Correlate(a) => cmd_correlate(a, threads),
        Command::Synth(a) => cmd_synth(a, threads),
        Command::Report { kind } => cmd_report(kind, threads),
    }
}

fn cmd_ingest(source: IngestSource, threads: usize) -> Result<()> {
    match source {
        IngestSource::Jsonl(a) => {
            let mut run = Run::new("ingest jsonl", json!({}), threads);
            run.input(&a.input)?;
            let dataset = jsonl::load_transactions_jsonl(&a.input)?;
            cache::write(&a.output, &dataset)?;
            run.finish(&[&a.output], None)
        }
        IngestSource::Vqa(a) => {
            let config = vqa::IngestConfig {
                answer_vocab_size: a.answer_vocab_size,
                min_word_count: a.min_word_count,
                detection_score_threshold: a.score_threshold,
            };
            let mut run = Run::new(
                "ingest vqa",
                json!({
                    "answer_vocab_size": a.answer_vocab_size,
                    "min_word_count": a.min_word_count,
                    "score_threshold": a.score_threshold,
                }),
                threads,
            );
            for p in [&a.questions, &a.annotations, &a.detections] {
                run.input(p)?;
            }
            let answers = match &a.answer_vocab_from {
                Some(p) => Some(vqa::answer_vocabulary(&run.dataset(p)?.0)),
                None => None,
            };
            let dataset = vqa::load_vqa_dataset(&a.questions, &a.annotations, &a.detections, &config, answers.as_ref())?;
            cache::write(&a.output, &dataset)?;
            run.finish(&[&a.output], None)
        }
    }
}

fn cmd_mine(a: MineArgs, threads: usize) -> Result<()> {
    let min_support = parse_min_support(&a.min_support)?;
    let mut run = Run::new("mine", json!({}), threads);
    let (dataset, digest) = run.dataset(&a.input)?;
    let resolved = min_support.resolve(dataset.len())?;
    let params = MineParams::new(MinSupport::Count(resolved), a.max_length);
    run.params = json!({
        "min_support": a.min_support,
        "min_support_count": resolved,
        "max_length": a.max_length,
    });
    let itemsets = mine_frequent_itemsets(&dataset, &params)?;
    let header = formats::ItemsetsHeader::new(digest, resolved, a.max_length);
    formats::write_itemsets(&a.output, &header, &itemsets, dataset.vocabulary())?;
    run.finish(&[&a.output], None)
}

fn cmd_rules(a: RulesArgs, threads: usize) -> Result<()> {
    let mode = a.mode.mode();
    let filter = FilterParams {
        min_confidence: a.min_confidence,
        superset_prune_on_equal: !a.no_prune_equal,
    };
    let mut run = Run::new(
        "rules",
        json!({
            "min_confidence": a.min_confidence,
            "prune_equal": !a.no_prune_equal,
            "mode": mode_json(&a.mode),
            "score_on": a.score_on.as_ref().map(|p| p.display().to_string()),
        }),
        threads,
    );
    let (dataset, digest) = run.dataset(&a.dataset)?;
    run.input(&a.input)?;
    let (header, itemsets) = formats::read_itemsets(&a.input, dataset.vocabulary())?;
    lineage("itemsets vs dataset", Some(&header.dataset_digest), &digest, a.no_verify)?;
    let mut rules = extract_rules(&itemsets, &dataset, mode)?;
    let mut scored_digest = digest;
    if let Some(p) = &a.score_on {
        let (other, other_digest) = run.dataset(p)?;
        rules = score_rules(&rules, dataset.vocabulary(), &other, mode)?;
        scored_digest = other_digest;
    }
    let mut ruleset = filter_rules(&rules, &filter)?;
    ruleset.provenance = RuleSetProvenance {
        min_support: Some(header.min_support),
        max_length: Some(header.max_length),
        min_confidence: Some(a.min_confidence),
        mode,
        dataset_digest: Some(scored_digest),
    };
    formats::write_rules(&a.output, &ruleset, dataset.vocabulary())?;
    run.finish(&[&a.output], None)
}

/// Loads a rule file bound to the dataset its statistics came from.
fn load_scored_rules(
    run: &mut Run,
    rules_path: &Path,
    train_path: &Path,
    no_verify: bool,
) -> Result<(Dataset, vqace_core::RuleSet, formats::ProvenanceRecord)> {
    let (mut train, train_digest) = run.dataset(train_path)?;
    run.input(rules_path)?;
    let (prov, records) = formats::read_rules(rules_path)?;
    lineage("rules vs training dataset", prov.dataset_digest.as_deref(), &train_digest, no_verify)?;
    let ruleset = formats::bind_rules(&records, &mut train, (&prov).into())?;
    Ok((train, ruleset, prov))
}

/// The training-selected voting rules, as records.
fn classifier_records(train: &Dataset, ruleset: &vqace_core::RuleSet, mode: CorrectnessMode, vote: VoteRules) -> Result<(Vec<RuleRecord>, String, ShortcutClassifier)> {
    let classifier = build_classifier(ruleset, train, mode, vote)?;
    let records = formats::rule_records(classifier.rules().rules(), train.vocabulary());
    let fallback = train.vocabulary().text(classifier.fallback_answer()).to_string();
    Ok((records, fallback, classifier))
}

fn cmd_split(a: SplitArgs, threads: usize) -> Result<()> {
    let mode = a.mode.mode();
    let mut run = Run::new(
        "split",
        json!({ "mode": mode_json(&a.mode), "classifier_rules": a.classifier_rules }),
        threads,
    );
    let rules_digest = file_digest(&a.rules)?;
    let records = match (&a.train, a.classifier_rules) {
        (Some(train_path), true) => {
            let (train, ruleset, _) = load_scored_rules(&mut run, &a.rules, train_path, a.no_verify)?;
            classifier_records(&train, &ruleset, mode, VoteRules::BestPerExample)?.0
        }
        _ => {
            run.input(&a.rules)?;
            formats::read_rules(&a.rules)?.1
        }
    };
    let (mut dataset, digest) = run.dataset(&a.dataset)?;
    let bound = formats::bind_rules(&records, &mut dataset, RuleSetProvenance::default())?;
    let split = split_examples(&bound, &dataset, mode)?;
    let prov = SplitProvenance {
        rules_digest,
        dataset_digest: digest,
        mode: mode.into(),
        rules_subset: if a.classifier_rules { "classifier" } else { "all" }.into(),
    };
    formats::write_split(&a.output, &split, &dataset, prov)?;
    run.finish(&[&a.output], None)
}

fn cmd_classify(a: ClassifyArgs, threads: usize) -> Result<()> {
    let mode = a.mode.mode();
    let vote = match a.vote {
        VoteArg::Best => VoteRules::BestPerExample,
        VoteArg::Full => VoteRules::Full,
    };
    let mut run = Run::new(
        "classify",
        json!({
            "vote": match a.vote { VoteArg::Best => "best", VoteArg::Full => "full" },
            "mode": mode_json(&a.mode),
        }),
        threads,
    );
    let (train, ruleset, prov) = load_scored_rules(&mut run, &a.rules, &a.train, a.no_verify)?;
    let (records, fallback, classifier) = classifier_records(&train, &ruleset, mode, vote)?;
    if let Some(p) = &a.save_rules {
        formats::write_rules(p, classifier.rules(), train.vocabulary())?;
    }
    let (mut dataset, _) = run.dataset(&a.dataset)?;
    let bound = formats::bind_rules(&records, &mut dataset, (&prov).into())?;
    let fallback = dataset.resolve_or_intern(Namespace::Answer, &fallback)?;
    let classifier = ShortcutClassifier::new(bound, fallback);
    let vocab = dataset.vocabulary();
    let rows: Vec<PredictionRecord> = dataset
        .transactions()
        .par_iter()
        .map(|tx| {
            let p = classifier.predict(tx, vocab);
            PredictionRecord {
                id: tx.example_id().to_string(),
                answer: vocab.text(p.answer).to_string(),
                matched: Some(p.matched),
            }
        })
        .collect();
    formats::write_predictions(&a.output, &rows)?;
    match &a.save_rules {
        Some(p) => run.finish(&[&a.output, p], None),
        None => run.finish(&[&a.output], None),
    }
}

fn subset_json(s: &SubsetScore) -> serde_json::Value {
    json!({ "count": s.count, "accuracy": s.accuracy() })
}

fn report_json(name: &str, r: &EvalReport, by: Option<GroupBy>) -> serde_json::Value {
    let mut v = json!({
        "name": name,
        "overall": subset_json(&r.overall),
        "counterexamples": subset_json(r.subset(SplitLabel::CounterExample)),
        "easy": subset_json(r.subset(SplitLabel::Easy)),
        "unmatched": subset_json(r.subset(SplitLabel::Unmatched)),
        "missing": r.missing,
    });
    if let Some(g) = by {
        v["groups"] = json!({
            "by": g.as_str(),
            "rows": r.groups.iter().map(|row| json!({
                "key": row.key,
                "counterexamples": subset_json(&row.subsets[SplitLabel::CounterExample.index()]),
                "easy": subset_json(&row.subsets[SplitLabel::Easy.index()]),
                "unmatched": subset_json(&row.subsets[SplitLabel::Unmatched.index()]),
            })).collect::<Vec<_>>(),
        });
    }
    v
}

fn cmd_evaluate(a: EvaluateArgs, threads: usize) -> Result<()> {
    let mode = a.mode.mode();
    let by = a.by.as_deref().map(parse_group).transpose()?;
    let missing = if a.allow_missing {
        MissingPredictions::ScoreZero
    } else {
        MissingPredictions::Error
    };
    let mut run = Run::new(
        "evaluate",
        json!({ "mode": mode_json(&a.mode), "allow_missing": a.allow_missing, "by": a.by }),
        threads,
    );
    let (dataset, digest) = run.dataset(&a.dataset)?;
    run.input(&a.split)?;
    let (split, prov) = formats::read_split(&a.split, &dataset)?;
    lineage("split vs dataset", Some(&prov.dataset_digest), &digest, a.no_verify)?;

    let mut reports = Vec::new();
    for spec in &a.predictions {
        let (name, path) = match spec.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                let stem = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                (stem, p)
            }
        };
        run.input(&path)?;
        let preds = formats::read_predictions(&path)?;
        let report = evaluate_predictions(&preds, &dataset, &split, mode, missing, by)
            .map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
        reports.push((name, report));
    }

    let text = match a.format {
        OutputFormat::Json => to_json_text(&json!({
            "models": reports.iter().map(|(n, r)| report_json(n, r, by)).collect::<Vec<_>>(),
        })),
        OutputFormat::Table => {
            let counts = split.counts();
            let mut t = Table::new(["Model", "Overall", "Counterexamples", "Easy", "Unmatched"]);
            t.row([
                "(examples)".to_string(),
                dataset.len().to_string(),
                counts[SplitLabel::CounterExample.index()].to_string(),
                counts[SplitLabel::Easy.index()].to_string(),
                counts[SplitLabel::Unmatched.index()].to_string(),
            ]);
            for (name, r) in &reports {
                t.row([
                    name.clone(),
                    pct(r.overall.accuracy()),
                    pct(r.subset(SplitLabel::CounterExample).accuracy()),
                    pct(r.subset(SplitLabel::Easy).accuracy()),
                    pct(r.subset(SplitLabel::Unmatched).accuracy()),
                ]);
            }
            let mut text = t.render();
            if let Some(g) = by {
                for (name, r) in &reports {
                    let mut t = Table::new([g.as_str(), "Counterexamples", "Easy", "Unmatched"]);
                    for row in &r.groups {
                        t.row([
                            row.key.clone(),
                            pct(row.subsets[SplitLabel::CounterExample.index()].accuracy()),
                            pct(row.subsets[SplitLabel::Easy.index()].accuracy()),
                            pct(row.subsets[SplitLabel::Unmatched.index()].accuracy()),
                        ]);
                    }
                    text.push_str(&format!("\n{name}\n{}", t.render()));
                }
            }
            for (name, r) in &reports {
                if !r.missing.is_empty() {
                    text.push_str(&format!("\n{name}: {} examples without a prediction scored 0\n", r.missing.len()));
                }
            }
            text
        }
    };
    emit_report(run, text, a.output.as_deref())
}

fn cmd_correlate(a: CorrelateArgs, threads: usize) -> Result<()> {
    let mut run = Run::new("correlate", json!({ "top": a.top, "min_matched": a.min_matched }), threads);
    let (mut dataset, _) = run.dataset(&a.dataset)?;
    run.input(&a.rules)?;
    let (prov, records) = formats::read_rules(&a.rules)?;
    run.input(&a.predictions)?;
    let preds = formats::read_predictions(&a.predictions)?;
    let ruleset = formats::bind_rules(&records, &mut dataset, (&prov).into())?;
    let mut rows: Vec<(usize, vqace_core::evaluation::Agreement)> = ruleset
        .rules()
        .par_iter()
        .map(|r| rule_model_agreement(r, &preds, &dataset))
        .enumerate()
        .filter(|(_, ag)| ag.matched >= a.min_matched.max(1))
        .collect();
    // Agreement descending, exact by cross-multiplication; then larger
    // support; then file order.
    rows.sort_by(|(i, x), (j, y)| {
        ((y.agreeing * x.matched).cmp(&(x.agreeing * y.matched)))
            .then(y.matched.cmp(&x.matched))
            .then(i.cmp(j))
    });
    rows.truncate(a.top);
    let vocab = dataset.vocabulary();
    let describe = |id: usize| {
        let r = ruleset.rule(id as u32);
        let ante: Vec<String> = r.antecedent.iter().map(|&t| vocab.text(t).to_string()).collect();
        (ante, vocab.text(r.consequent).to_string(), r)
    };
    let text = match a.format {
        OutputFormat::Json => to_json_text(&json!({
            "rows": rows.iter().map(|(id, ag)| {
                let (ante, cons, r) = describe(*id);
                json!({
                    "antecedent": r.antecedent.iter().map(|&t| vocab.qualified(t)).collect::<Vec<_>>(),
                    "antecedent_text": ante,
                    "consequent": cons,
                    "agreement": ag.rate(),
                    "agreeing": ag.agreeing,
                    "matched": ag.matched,
                    "rule_confidence": r.confidence(),
                })
            }).collect::<Vec<_>>(),
        })),
        OutputFormat::Table => {
            let mut t = Table::new(["Rule", "Agreement", "Matched", "Confidence"]);
            for (id, ag) in &rows {
                let (ante, cons, r) = describe(*id);
                t.row([
                    format!("{} => {}", ante.join(" "), cons),
                    pct(ag.rate().map(|x| 100.0 * x)),
                    ag.matched.to_string(),
                    pct(Some(100.0 * r.confidence())),
                ]);
            }
            t.render()
        }
    };
    emit_report(run, text, a.output.as_deref())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlantedFile {
    antecedent: Vec<String>,
    consequent: String,
    target_confidence: f64,
    n_matching: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SpecFile {
    n_train: usize,
    n_val: usize,
    n_words: usize,
    n_labels: usize,
    n_answers: usize,
    words_per_question: (usize, usize),
    labels_per_image: (usize, usize),
    distribution: String,
    annotators: bool,
    planted: Vec<PlantedFile>,
    seed: u64,
}

impl Default for SpecFile {
    fn default() -> Self {
        let d = SyntheticSpec::default();
        Self {
            n_train: d.n_train,
            n_val: d.n_val,
            n_words: d.n_words,
            n_labels: d.n_labels,
            n_answers: d.n_answers,
            words_per_question: d.words_per_question,
            labels_per_image: d.labels_per_image,
            distribution: "harmonic".into(),
            annotators: d.annotators,
            planted: Vec::new(),
            seed: d.seed,
        }
    }
}

fn synthetic_spec(file: SpecFile, path: &Path) -> Result<SyntheticSpec> {
    let distribution = match file.distribution.as_str() {
        "harmonic" => NoiseDistribution::Harmonic,
        "uniform" => NoiseDistribution::Uniform,
        other => return Err(Error::format(path, format!("unknown distribution {other:?}"))),
    };
    let planted = file
        .planted
        .into_iter()
        .map(|p| {
            let antecedent = p
                .antecedent
                .iter()
                .map(|q| {
                    q.split_once(':')
                        .and_then(|(ns, t)| Some((Namespace::from_prefix(ns)?, t.to_string())))
                        .filter(|(ns, _)| *ns != Namespace::Answer)
                        .ok_or_else(|| Error::format(path, format!("bad planted token {q:?} (want q:... or v:...)")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PlantedRule {
                antecedent,
                consequent: p.consequent,
                target_confidence: p.target_confidence,
                n_matching: p.n_matching,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticSpec {
        n_train: file.n_train,
        n_val: file.n_val,
        n_words: file.n_words,
        n_labels: file.n_labels,
        n_answers: file.n_answers,
        words_per_question: file.words_per_question,
        labels_per_image: file.labels_per_image,
        distribution,
        annotators: file.annotators,
        planted,
        seed: file.seed,
    })
}

fn cmd_synth(a: SynthArgs, threads: usize) -> Result<()> {
    let mut run = Run::new("synth", json!({}), threads);
    let file = match &a.spec {
        Some(p) => {
            run.input(p)?;
            let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_slice(&bytes).map_err(|e| Error::parse(p, e.line(), e))?
        }
        None => SpecFile::default(),
    };
    let mut spec = synthetic_spec(file, a.spec.as_deref().unwrap_or(Path::new("<default spec>")))?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    run.params = json!({ "seed": spec.seed });
    let data = generate_synthetic(&spec)?;
    std::fs::create_dir_all(&a.output).map_err(|e| Error::io(&a.output, e))?;
    let train = a.output.join("train.jsonl");
    let val = a.output.join("val.jsonl");
    let truth = a.output.join("ground_truth.json");
    jsonl::write_transactions_jsonl(&train, &data.train)?;
    jsonl::write_transactions_jsonl(&val, &data.val)?;
    let report: Vec<serde_json::Value> = data
        .ground_truth
        .iter()
        .map(|g| {
            json!({
                "antecedent": g.antecedent.iter().map(|(ns, t)| format!("{}:{t}", ns.prefix())).collect::<Vec<_>>(),
                "consequent": g.consequent,
                "train": { "support": g.train.support, "correct": g.train.correct },
                "val": { "support": g.val.support, "correct": g.val.correct },
            })
        })
        .collect();
    std::fs::write(&truth, to_json_text(&json!({ "seed": spec.seed, "planted": report })))
        .map_err(|e| Error::io(&truth, e))?;
    run.finish(&[&train, &val, &truth], Some(&a.output.join("manifest.json")))
}

fn cmd_report(kind: ReportKind, threads: usize) -> Result<()> {
    match kind {
        ReportKind::Histogram {
            rules,
            bin_width,
            lower,
            format,
            output,
        } => {
            let mut run = Run::new("report histogram", json!({ "bin_width": bin_width, "lower": lower }), threads);
            run.input(&rules)?;
            let (prov, records) = formats::read_rules(&rules)?;
            let ruleset = formats::bind_rules(&records, &mut Dataset::empty(), (&prov).into())?;
            let h = confidence_histogram(ruleset.rules(), bin_width, lower)?;
            let text = match format {
                OutputFormat::Json => to_json_text(&json!({
                    "bins": h.bins.iter().map(|b| json!({ "lower": b.lower, "upper": b.upper, "count": b.count })).collect::<Vec<_>>(),
                    "excluded": h.excluded,
                })),
                OutputFormat::Table => {
                    let mut t = Table::new(["Confidence", "Rules"]);
                    for b in &h.bins {
                        t.row([format!("{:.2}-{:.2}", b.lower, b.upper), b.count.to_string()]);
                    }
                    t.row(["(excluded)".to_string(), h.excluded.to_string()]);
                    t.render()
                }
            };
            emit_report(run, text, output.as_deref())
        }
        ReportKind::Distribution {
            split,
            dataset,
            by,
            top,
            format,
            no_verify,
            output,
        } => {
            let group = parse_group(&by)?;
            let mut run = Run::new("report distribution", json!({ "by": by, "top": top }), threads);
            let (ds, digest) = run.dataset(&dataset)?;
            run.input(&split)?;
            let (assignment, prov) = formats::read_split(&split, &ds)?;
            lineage("split vs dataset", Some(&prov.dataset_digest), &digest, no_verify)?;
            let mut rows = split_distribution_report(&assignment, &ds, group)?;
            if let Some(k) = top {
                rows.truncate(k);
            }
            let text = match format {
                OutputFormat::Json => to_json_text(&json!({
                    "by": group.as_str(),
                    "rows": rows.iter().map(|r| json!({
                        "key": r.key,
                        "counterexamples": r.counts[SplitLabel::CounterExample.index()],
                        "easy": r.counts[SplitLabel::Easy.index()],
                        "unmatched": r.counts[SplitLabel::Unmatched.index()],
                    })).collect::<Vec<_>>(),
                })),
                OutputFormat::Table => {
                    let mut t = Table::new([group.as_str(), "Counterexamples", "Easy", "Unmatched", "Total"]);
                    for r in &rows {
                        t.row([
                            r.key.clone(),
                            r.counts[SplitLabel::CounterExample.index()].to_string(),
                            r.counts[SplitLabel::Easy.index()].to_string(),
                            r.counts[SplitLabel::Unmatched.index()].to_string(),
                            r.total().to_string(),
                        ]);
                    }
                    t.render()
                }
            };
            emit_report(run, text, output.as_deref())
        }
        ReportKind::RuleTypes { rules, format, output } => {
            let mut run = Run::new("report rule-types", json!({}), threads);
            run.input(&rules)?;
            let (prov, records) = formats::read_rules(&rules)?;
            let ruleset = formats::bind_rules(&records, &mut Dataset::empty(), (&prov).into())?;
            let [textual, visual, multimodal] = rule_type_counts(ruleset.rules());
            let text = match format {
                OutputFormat::Json => to_json_text(&json!({
                    "textual": textual, "visual": visual, "multimodal": multimodal,
                })),
                OutputFormat::Table => {
                    let mut t = Table::new(["Type", "Rules"]);
                    t.row(["textual".to_string(), textual.to_string()]);
                    t.row(["visual".to_string(), visual.to_string()]);
                    t.row(["multimodal".to_string(), multimodal.to_string()]);
                    t.render()
                }
            };
            emit_report(run, text, output.as_deref())
        }
        ReportKind::BestRule {
            rules,
            dataset,
            mode,
            format,
            output,
        } => {
            let m = mode.mode();
            let mut run = Run::new("report best-rule", json!({ "mode": mode_json(&mode) }), threads);
            let (mut ds, _) = run.dataset(&dataset)?;
            run.input(&rules)?;
            let (prov, records) = formats::read_rules(&rules)?;
            let ruleset = formats::bind_rules(&records, &mut ds, (&prov).into())?;
            let b = best_rule_breakdown(&ruleset, &ds, m)?;
            let text = match format {
                OutputFormat::Json => to_json_text(&json!({
                    "textual": b.textual, "visual": b.visual, "multimodal": b.multimodal, "none": b.none,
                })),
                OutputFormat::Table => {
                    let mut t = Table::new(["Best rule", "Examples"]);
                    for (k, v) in [
                        ("textual", b.textual),
                        ("visual", b.visual),
                        ("multimodal", b.multimodal),
                        ("none", b.none),
                    ] {
                        t.row([k.to_string(), v.to_string()]);
                    }
                    t.render()
                }
            };
            emit_report(run, text, output.as_deref())
        }
    }
}

/// Entry point shared by the binary: parses arguments, runs, and maps errors
/// (and panics) to exit codes.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
        Err(_) => 4,
    }
}
