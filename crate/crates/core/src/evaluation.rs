//! Counterexamples / Easy / Unmatched splitting and prediction scoring.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{is_correct, AnswerCounts, CorrectnessMode, Dataset, Rule, RuleSet};
use crate::rules::match_rules;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SplitLabel {
    /// Matched by at least one rule, and every matching rule is wrong.
    CounterExample,
    /// At least one matching rule gives the correct answer.
    Easy,
    /// No rule antecedent matches.
    Unmatched,
}

impl SplitLabel {
    pub const ALL: [SplitLabel; 3] = [
        SplitLabel::CounterExample,
        SplitLabel::Easy,
        SplitLabel::Unmatched,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SplitLabel::CounterExample => "counterexamples",
            SplitLabel::Easy => "easy",
            SplitLabel::Unmatched => "unmatched",
        }
    }
}

/// One label per dataset transaction, aligned by ordinal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    labels: Vec<SplitLabel>,
}

impl SplitAssignment {
    pub fn labels(&self) -> &[SplitLabel] {
        &self.labels
    }

    pub fn label(&self, ordinal: usize) -> SplitLabel {
        self.labels[ordinal]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for l in &self.labels {
            c[l.index()] += 1;
        }
        c
    }

    /// Example ids with the given label, in dataset order.
    pub fn ids<'a>(&'a self, dataset: &'a Dataset, label: SplitLabel) -> impl Iterator<Item = &'a str> {
        dataset
            .transactions()
            .iter()
            .zip(&self.labels)
            .filter(move |(_, &l)| l == label)
            .map(|(t, _)| t.example_id())
    }

    /// Rebuilds an assignment from per-label id lists. Every dataset example
    /// must appear exactly once and no unknown id may appear.
    pub fn from_ids(
        dataset: &Dataset,
        lists: [(SplitLabel, &[&str]); 3],
    ) -> Result<Self> {
        let mut labels: Vec<Option<SplitLabel>> = alloc::vec![None; dataset.len()];
        for (label, ids) in lists {
            for id in ids {
                let o = dataset
                    .ordinal_of(id)
                    .ok_or_else(|| Error::SplitMismatch(format!("unknown example id {id:?}")))?;
                if labels[o].replace(label).is_some() {
                    return Err(Error::SplitMismatch(format!("example {id:?} listed twice")));
                }
            }
        }
        labels
            .into_iter()
            .enumerate()
            .map(|(o, l)| {
                l.ok_or_else(|| {
                    Error::SplitMismatch(format!(
                        "example {:?} has no label",
                        dataset.transactions()[o].example_id()
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(|labels| Self { labels })
    }
}

/// Labels every example by which of the `ruleset` rules match it and whether
/// any of those answers correctly.
pub fn split_examples(
    ruleset: &RuleSet,
    dataset: &Dataset,
    mode: CorrectnessMode,
) -> Result<SplitAssignment> {
    let vocab = dataset.vocabulary();
    let mut labels = Vec::with_capacity(dataset.len());
    for tx in dataset.transactions() {
        let matched = match_rules(ruleset, tx);
        let label = if matched.is_empty() {
            SplitLabel::Unmatched
        } else {
            let mut any_correct = false;
            for id in matched {
                if is_correct(ruleset.rule(id).consequent, tx, mode, vocab)? {
                    any_correct = true;
                    break;
                }
            }
            if any_correct {
                SplitLabel::Easy
            } else {
                SplitLabel::CounterExample
            }
        };
        labels.push(label);
    }
    Ok(SplitAssignment { labels })
}

/// Standard VQA accuracy `min(#annotators giving the answer / 3, 1)`. With
/// `leave_one_out`, the average of that quantity over every subset obtained
/// by removing one annotator.
pub fn vqa_soft_score(predicted: &str, annotators: &AnswerCounts, leave_one_out: bool) -> Result<f64> {
    let total = annotators.total();
    if total == 0 {
        return Err(Error::EmptyAnnotators);
    }
    let hits = annotators.count_of(predicted);
    let capped = |n: u32| if n >= 3 { 1.0 } else { n as f64 / 3.0 };
    if !leave_one_out || total == 1 {
        return Ok(capped(hits));
    }
    // Removing one of the `hits` matching annotators leaves hits - 1; removing
    // any other annotator leaves hits.
    let with_removed_hit = if hits > 0 { hits as f64 * capped(hits - 1) } else { 0.0 };
    let with_removed_other = (total - hits) as f64 * capped(hits);
    Ok((with_removed_hit + with_removed_other) / total as f64)
}

/// Score of one predicted answer against one transaction, in [0, 1].
fn score_prediction(
    predicted: &str,
    tx: &crate::model::Transaction,
    dataset: &Dataset,
    mode: CorrectnessMode,
) -> Result<f64> {
    match mode {
        CorrectnessMode::ExactMatch => Ok(match tx.answer() {
            Some(a) if dataset.vocabulary().text(a) == predicted => 1.0,
            _ => 0.0,
        }),
        CorrectnessMode::SoftVqa { strict, .. } => {
            let annotators = tx
                .annotator_answers()
                .ok_or_else(|| Error::MissingAnnotations(tx.example_id().to_string()))?;
            vqa_soft_score(predicted, annotators, strict)
        }
    }
}

/// What to do with dataset examples absent from a predictions map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPredictions {
    #[default]
    Error,
    /// Score them 0 and list them in the report.
    ScoreZero,
}

/// Grouping key for breakdown tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    Answer,
    QuestionPrefix,
    AnswerType,
}

impl GroupBy {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "answer" => Some(GroupBy::Answer),
            "question_prefix" | "question_type" => Some(GroupBy::QuestionPrefix),
            "answer_type" => Some(GroupBy::AnswerType),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GroupBy::Answer => "answer",
            GroupBy::QuestionPrefix => "question_prefix",
            GroupBy::AnswerType => "answer_type",
        }
    }

    fn key(self, dataset: &Dataset, ordinal: usize) -> Result<String> {
        let tx = &dataset.transactions()[ordinal];
        let missing = |key| Error::MissingGroupKey {
            example: tx.example_id().to_string(),
            key,
        };
        match self {
            GroupBy::Answer => Ok(tx
                .answer()
                .map(|a| dataset.vocabulary().text(a).to_string())
                .unwrap_or_else(|| "<out-of-vocabulary>".to_string())),
            GroupBy::QuestionPrefix => tx
                .meta
                .question_type
                .clone()
                .ok_or_else(|| missing("question_type")),
            GroupBy::AnswerType => tx
                .meta
                .answer_type
                .clone()
                .ok_or_else(|| missing("answer_type")),
        }
    }
}

/// Example count and summed score of one subset.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SubsetScore {
    pub count: usize,
    pub score_sum: f64,
}

impl SubsetScore {
    /// Mean score in percent; `None` for an empty subset.
    pub fn accuracy(&self) -> Option<f64> {
        (self.count > 0).then(|| 100.0 * self.score_sum / self.count as f64)
    }

    fn add(&mut self, score: f64) {
        self.count += 1;
        self.score_sum += score;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupAccuracy {
    pub key: String,
    pub subsets: [SubsetScore; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Indexed by [`SplitLabel::index`].
    pub subsets: [SubsetScore; 3],
    pub overall: SubsetScore,
    /// Examples without a prediction (scored 0).
    pub missing: Vec<String>,
    pub groups: Vec<GroupAccuracy>,
}

impl EvalReport {
    pub fn subset(&self, label: SplitLabel) -> &SubsetScore {
        &self.subsets[label.index()]
    }
}

/// Scores `predictions` (example id → answer text) subset by subset.
pub fn evaluate_predictions(
    predictions: &BTreeMap<String, String>,
    dataset: &Dataset,
    split: &SplitAssignment,
    mode: CorrectnessMode,
    missing: MissingPredictions,
    group_by: Option<GroupBy>,
) -> Result<EvalReport> {
    if split.len() != dataset.len() {
        return Err(Error::SplitMismatch(format!(
            "{} labels for {} examples",
            split.len(),
            dataset.len()
        )));
    }
    let unknown: Vec<String> = predictions
        .keys()
        .filter(|id| dataset.ordinal_of(id).is_none())
        .cloned()
        .collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownExamples(unknown));
    }
    let absent: Vec<String> = dataset
        .transactions()
        .iter()
        .filter(|t| !predictions.contains_key(t.example_id()))
        .map(|t| t.example_id().to_string())
        .collect();
    if !absent.is_empty() && missing == MissingPredictions::Error {
        return Err(Error::MissingPredictions(absent));
    }

    let mut subsets = [SubsetScore::default(); 3];
    let mut overall = SubsetScore::default();
    let mut groups: BTreeMap<String, [SubsetScore; 3]> = BTreeMap::new();
    for (o, tx) in dataset.transactions().iter().enumerate() {
        let score = match predictions.get(tx.example_id()) {
            Some(p) => score_prediction(p, tx, dataset, mode)?,
            None => 0.0,
        };
        let label = split.label(o);
        subsets[label.index()].add(score);
        overall.add(score);
        if let Some(g) = group_by {
            groups.entry(g.key(dataset, o)?).or_default()[label.index()].add(score);
        }
    }
    let mut groups: Vec<GroupAccuracy> = groups
        .into_iter()
        .map(|(key, subsets)| GroupAccuracy { key, subsets })
        .collect();
    groups.sort_by_key(|g| core::cmp::Reverse(g.subsets.iter().map(|s| s.count).sum::<usize>()));
    Ok(EvalReport {
        subsets,
        overall,
        missing: absent,
        groups,
    })
}

/// Fraction of a rule's matched examples on which a model predicts the
/// rule's answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Agreement {
    pub agreeing: usize,
    pub matched: usize,
}

impl Agreement {
    /// `None` when the rule matches nothing.
    pub fn rate(&self) -> Option<f64> {
        (self.matched > 0).then(|| self.agreeing as f64 / self.matched as f64)
    }
}

/// Agreement between `rule` (ids in `dataset`'s vocabulary) and a model's
/// predictions. Matched examples without a prediction count as disagreeing.
pub fn rule_model_agreement(
    rule: &Rule,
    predictions: &BTreeMap<String, String>,
    dataset: &Dataset,
) -> Agreement {
    let answer = dataset.vocabulary().text(rule.consequent);
    let matched = dataset.matching(&rule.antecedent);
    let agreeing = matched
        .iter()
        .filter(|&&o| {
            let id = dataset.transactions()[o as usize].example_id();
            predictions.get(id).is_some_and(|p| p == answer)
        })
        .count();
    Agreement {
        agreeing,
        matched: matched.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceHistogram {
    pub bins: Vec<HistogramBin>,
    /// Rules below the lowest bin or without support.
    pub excluded: usize,
}

/// Rule counts per confidence bin over `[lower, 1]`; bins are half-open
/// except the top one, which includes 1.0. Bin membership is computed from
/// the integer counts, so boundaries are exact.
pub fn confidence_histogram(rules: &[Rule], bin_width: f64, lower: f64) -> Result<ConfidenceHistogram> {
    if !(bin_width > 0.0 && bin_width <= 1.0) {
        return Err(Error::InvalidParameter(format!("bin width {bin_width} is outside (0, 1]")));
    }
    let k = (1.0 / bin_width + 0.5) as u64;
    if ((k as f64) * bin_width - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "bin width {bin_width} does not divide 1 evenly"
        )));
    }
    if !(0.0..=1.0).contains(&lower) {
        return Err(Error::InvalidParameter(format!("lower bound {lower} is outside [0, 1]")));
    }
    let first = ((lower * k as f64 + 1e-9) as u64).min(k - 1);
    let mut counts = alloc::vec![0usize; (k - first) as usize];
    let mut excluded = 0;
    for r in rules {
        if r.stats.support == 0 {
            excluded += 1;
            continue;
        }
        let bin = (r.stats.correct as u64 * k / r.stats.support as u64).min(k - 1);
        if bin < first || !r.stats.meets(lower) {
            excluded += 1;
        } else {
            counts[(bin - first) as usize] += 1;
        }
    }
    let bins = counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| {
            let b = first + i as u64;
            HistogramBin {
                lower: b as f64 / k as f64,
                upper: (b + 1) as f64 / k as f64,
                count,
            }
        })
        .collect();
    Ok(ConfidenceHistogram { bins, excluded })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistributionRow {
    pub key: String,
    /// Indexed by [`SplitLabel::index`].
    pub counts: [usize; 3],
}

impl DistributionRow {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Per-group example counts for each subset, largest groups first (ties by
/// key).
pub fn split_distribution_report(
    split: &SplitAssignment,
    dataset: &Dataset,
    group_by: GroupBy,
) -> Result<Vec<DistributionRow>> {
    if split.len() != dataset.len() {
        return Err(Error::SplitMismatch(format!(
            "{} labels for {} examples",
            split.len(),
            dataset.len()
        )));
    }
    let mut table: BTreeMap<String, [usize; 3]> = BTreeMap::new();
    for o in 0..dataset.len() {
        table.entry(group_by.key(dataset, o)?).or_default()[split.label(o).index()] += 1;
    }
    let mut rows: Vec<DistributionRow> = table
        .into_iter()
        .map(|(key, counts)| DistributionRow { key, counts })
        .collect();
    rows.sort_by(|a, b| b.total().cmp(&a.total()).then_with(|| a.key.cmp(&b.key)));
    Ok(rows)
}
