//! Stage artifacts exchanged between subcommands.
//!
//! Tokens are written qualified (`q:what`, `v:snow`); answers inside rules
//! are plain text. Itemset and rule files are JSONL with a header object on
//! the first line.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use vqace_core::evaluation::{SplitAssignment, SplitLabel};
use vqace_core::tokenize::normalize_phrase;
use vqace_core::{
    CorrectnessMode, Dataset, Itemset, Namespace, Rule, RuleSet, RuleSetProvenance, RuleStats, Vocabulary,
};

use crate::error::{Error, Result};
use crate::jsonl::write_jsonl;

pub const ITEMSETS_FORMAT: &str = "vqace-itemsets";
pub const RULES_FORMAT: &str = "vqace-rules";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModeRecord {
    Exact,
    Soft { threshold: f64, strict: bool },
}

impl From<CorrectnessMode> for ModeRecord {
    fn from(m: CorrectnessMode) -> Self {
        match m {
            CorrectnessMode::ExactMatch => ModeRecord::Exact,
            CorrectnessMode::SoftVqa { threshold, strict } => ModeRecord::Soft { threshold, strict },
        }
    }
}

impl From<ModeRecord> for CorrectnessMode {
    fn from(m: ModeRecord) -> Self {
        match m {
            ModeRecord::Exact => CorrectnessMode::ExactMatch,
            ModeRecord::Soft { threshold, strict } => CorrectnessMode::SoftVqa { threshold, strict },
        }
    }
}

fn lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn parse_line<T: serde::de::DeserializeOwned>(path: &Path, line: usize, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::parse(path, line, e))
}

fn split_qualified(q: &str) -> Option<(Namespace, &str)> {
    let (prefix, text) = q.split_once(':')?;
    Some((Namespace::from_prefix(prefix)?, text))
}

// ---------------------------------------------------------------- itemsets

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemsetsHeader {
    pub format: String,
    pub version: u32,
    pub dataset_digest: String,
    pub min_support: u32,
    pub max_length: usize,
}

impl ItemsetsHeader {
    pub fn new(dataset_digest: String, min_support: u32, max_length: usize) -> Self {
        Self {
            format: ITEMSETS_FORMAT.into(),
            version: FORMAT_VERSION,
            dataset_digest,
            min_support,
            max_length,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ItemsetLine {
    items: Vec<String>,
    support: u32,
}

pub fn write_itemsets(path: &Path, header: &ItemsetsHeader, itemsets: &[Itemset], vocab: &Vocabulary) -> Result<()> {
    let header = serde_json::to_value(header).map_err(|e| Error::Internal(e.to_string()))?;
    let rows = itemsets.iter().map(|s| {
        serde_json::to_value(ItemsetLine {
            items: s.items.iter().map(|&t| vocab.qualified(t)).collect(),
            support: s.support,
        })
        .expect("itemset line serializes")
    });
    write_jsonl(path, std::iter::once(header).chain(rows))
}

fn check_header(path: &Path, format: &str, version: u32, expected: &str) -> Result<()> {
    if format != expected {
        return Err(Error::parse(path, 1, format!("expected a {expected} file, found {format:?}")));
    }
    if version != FORMAT_VERSION {
        return Err(Error::parse(path, 1, format!("unsupported version {version}")));
    }
    Ok(())
}

/// Reads an itemset file, resolving tokens against `vocab`.
pub fn read_itemsets(path: &Path, vocab: &Vocabulary) -> Result<(ItemsetsHeader, Vec<Itemset>)> {
    let lines = lines(path)?;
    let Some(((hl, head), body)) = lines.split_first() else {
        return Err(Error::parse(path, 1, "missing header line"));
    };
    let header: ItemsetsHeader = parse_line(path, *hl, head)?;
    check_header(path, &header.format, header.version, ITEMSETS_FORMAT)?;
    let mut out = Vec::with_capacity(body.len());
    for (line, text) in body {
        let row: ItemsetLine = parse_line(path, *line, text)?;
        let mut items = row
            .items
            .iter()
            .map(|q| {
                vocab
                    .get_qualified(q)
                    .ok_or_else(|| Error::parse(path, *line, format!("unknown token {q:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        items.sort_unstable();
        items.dedup();
        if items.len() != row.items.len() || items.is_empty() {
            return Err(Error::parse(path, *line, "itemset is empty or repeats a token"));
        }
        out.push(Itemset {
            items,
            support: row.support,
        });
    }
    Ok((header, out))
}

// ------------------------------------------------------------------- rules

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvenanceRecord {
    pub min_support: Option<u32>,
    pub max_length: Option<usize>,
    pub min_confidence: Option<f64>,
    pub mode: ModeRecord,
    pub dataset_digest: Option<String>,
}

impl From<&RuleSetProvenance> for ProvenanceRecord {
    fn from(p: &RuleSetProvenance) -> Self {
        Self {
            min_support: p.min_support,
            max_length: p.max_length,
            min_confidence: p.min_confidence,
            mode: p.mode.into(),
            dataset_digest: p.dataset_digest.clone(),
        }
    }
}

impl From<&ProvenanceRecord> for RuleSetProvenance {
    fn from(p: &ProvenanceRecord) -> Self {
        Self {
            min_support: p.min_support,
            max_length: p.max_length,
            min_confidence: p.min_confidence,
            mode: p.mode.into(),
            dataset_digest: p.dataset_digest.clone(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RulesHeader {
    format: String,
    version: u32,
    provenance: ProvenanceRecord,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleLine {
    antecedent: Vec<String>,
    consequent: String,
    support: u32,
    correct: u32,
    confidence: f64,
    #[serde(rename = "type")]
    rule_type: String,
}

/// A rule by token text, independent of any vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleRecord {
    pub antecedent: Vec<(Namespace, String)>,
    pub consequent: String,
    pub stats: RuleStats,
}

pub fn rule_records(rules: &[Rule], vocab: &Vocabulary) -> Vec<RuleRecord> {
    rules
        .iter()
        .map(|r| RuleRecord {
            antecedent: r
                .antecedent
                .iter()
                .map(|&t| (vocab.namespace(t), vocab.text(t).to_string()))
                .collect(),
            consequent: vocab.text(r.consequent).to_string(),
            stats: r.stats,
        })
        .collect()
}

/// Binds records into `dataset`'s vocabulary, appending tokens it lacks.
/// Rule ids follow record order.
pub fn bind_rules(records: &[RuleRecord], dataset: &mut Dataset, provenance: RuleSetProvenance) -> Result<RuleSet> {
    let mut rules = Vec::with_capacity(records.len());
    for r in records {
        let antecedent = r
            .antecedent
            .iter()
            .map(|(ns, text)| dataset.resolve_or_intern(*ns, text))
            .collect::<vqace_core::Result<Vec<_>>>()?;
        let consequent = dataset.resolve_or_intern(Namespace::Answer, &r.consequent)?;
        rules.push(Rule::new(antecedent, consequent, r.stats, dataset.vocabulary())?);
    }
    Ok(RuleSet::new(rules, provenance))
}

pub fn write_rules(path: &Path, ruleset: &RuleSet, vocab: &Vocabulary) -> Result<()> {
    let header = serde_json::to_value(RulesHeader {
        format: RULES_FORMAT.into(),
        version: FORMAT_VERSION,
        provenance: (&ruleset.provenance).into(),
    })
    .map_err(|e| Error::Internal(e.to_string()))?;
    let rows = ruleset.rules().iter().map(|r| {
        serde_json::to_value(RuleLine {
            antecedent: r.antecedent.iter().map(|&t| vocab.qualified(t)).collect(),
            consequent: vocab.text(r.consequent).to_string(),
            support: r.stats.support,
            correct: r.stats.correct,
            confidence: r.confidence(),
            rule_type: r.rule_type.as_str().to_string(),
        })
        .expect("rule line serializes")
    });
    write_jsonl(path, std::iter::once(header).chain(rows))
}

pub fn read_rules(path: &Path) -> Result<(ProvenanceRecord, Vec<RuleRecord>)> {
    let lines = lines(path)?;
    let Some(((hl, head), body)) = lines.split_first() else {
        return Err(Error::parse(path, 1, "missing header line"));
    };
    let header: RulesHeader = parse_line(path, *hl, head)?;
    check_header(path, &header.format, header.version, RULES_FORMAT)?;
    let mut out = Vec::with_capacity(body.len());
    for (line, text) in body {
        let row: RuleLine = parse_line(path, *line, text)?;
        let err = |m: String| Error::parse(path, *line, m);
        if row.antecedent.is_empty() {
            return Err(err("empty antecedent".into()));
        }
        let antecedent = row
            .antecedent
            .iter()
            .map(|q| match split_qualified(q) {
                Some((Namespace::Answer, _)) => Err(err(format!("answer token {q:?} in antecedent"))),
                Some((ns, text)) => Ok((ns, text.to_string())),
                None => Err(err(format!("bad qualified token {q:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if row.correct > row.support {
            return Err(err(format!("correct {} exceeds support {}", row.correct, row.support)));
        }
        out.push(RuleRecord {
            antecedent,
            consequent: row.consequent,
            stats: RuleStats::new(row.support, row.correct),
        });
    }
    Ok((header.provenance, out))
}

// ------------------------------------------------------------------ splits

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitProvenance {
    pub rules_digest: String,
    pub dataset_digest: String,
    pub mode: ModeRecord,
    /// `"all"` or `"classifier"`.
    pub rules_subset: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitFile {
    counterexamples: Vec<String>,
    easy: Vec<String>,
    unmatched: Vec<String>,
    provenance: SplitProvenance,
}

pub fn write_split(path: &Path, split: &SplitAssignment, dataset: &Dataset, provenance: SplitProvenance) -> Result<()> {
    let ids = |l| split.ids(dataset, l).map(str::to_string).collect();
    let file = SplitFile {
        counterexamples: ids(SplitLabel::CounterExample),
        easy: ids(SplitLabel::Easy),
        unmatched: ids(SplitLabel::Unmatched),
        provenance,
    };
    let mut bytes = serde_json::to_vec_pretty(&file).map_err(|e| Error::Internal(e.to_string()))?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_split(path: &Path, dataset: &Dataset) -> Result<(SplitAssignment, SplitProvenance)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let f: SplitFile =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::parse(path, e.line(), e))?;
    fn refs(v: &[String]) -> Vec<&str> {
        v.iter().map(String::as_str).collect()
    }
    let (ce, easy, un) = (refs(&f.counterexamples), refs(&f.easy), refs(&f.unmatched));
    let split = SplitAssignment::from_ids(
        dataset,
        [
            (SplitLabel::CounterExample, &ce),
            (SplitLabel::Easy, &easy),
            (SplitLabel::Unmatched, &un),
        ],
    )
    .map_err(|e| Error::format(path, e))?;
    Ok((split, f.provenance))
}

// ------------------------------------------------------------- predictions

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub id: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched: Option<bool>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AnyId {
    Int(u64),
    Str(String),
}

#[derive(Deserialize)]
struct VqaResult {
    question_id: AnyId,
    answer: String,
}

/// Reads predictions as JSONL `{"id", "answer"}` records or as a VQA-style
/// JSON array of `{"question_id", "answer"}`. Answers are normalized like
/// dataset answers.
pub fn read_predictions(path: &Path) -> Result<BTreeMap<String, String>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::format(path, e))?;
    let mut rows: Vec<(usize, String, String)> = Vec::new();
    if text.trim_start().starts_with('[') {
        let results: Vec<VqaResult> = serde_json::from_str(text).map_err(|e| Error::parse(path, e.line(), e))?;
        for (i, r) in results.into_iter().enumerate() {
            let id = match r.question_id {
                AnyId::Int(n) => n.to_string(),
                AnyId::Str(s) => s,
            };
            rows.push((i + 1, id, r.answer));
        }
    } else {
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: PredictionRecord = parse_line(path, i + 1, line)?;
            rows.push((i + 1, r.id, r.answer));
        }
    }
    let mut out = BTreeMap::new();
    for (locus, id, answer) in rows {
        let answer = normalize_phrase(&answer).unwrap_or_default();
        if out.insert(id.clone(), answer).is_some() {
            return Err(Error::parse(path, locus, format!("duplicate prediction for {id:?}")));
        }
    }
    Ok(out)
}

pub fn write_predictions(path: &Path, rows: &[PredictionRecord]) -> Result<()> {
    write_jsonl(path, rows)
}
