//! Seeded synthetic datasets with planted shortcut rules.
//!
//! Noise tokens never include a planted antecedent token, so each planted
//! antecedent matches exactly the examples it was planted in and its support
//! and correct count are known in advance.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{is_normalized, Dataset, ExampleMeta, Namespace, RuleStats, Transaction, Vocabulary};
use crate::model::AnswerCounts;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedRule {
    pub antecedent: Vec<(Namespace, String)>,
    pub consequent: String,
    pub target_confidence: f64,
    /// Number of training examples containing the antecedent.
    pub n_matching: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseDistribution {
    Uniform,
    /// Token `i` drawn with weight `1 / (i + 1)`.
    #[default]
    Harmonic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub n_words: usize,
    pub n_labels: usize,
    pub n_answers: usize,
    /// Inclusive range of noise words per question.
    pub words_per_question: (usize, usize),
    /// Inclusive range of noise labels per image.
    pub labels_per_image: (usize, usize),
    pub distribution: NoiseDistribution,
    /// Attach 10 annotator answers per example.
    pub annotators: bool,
    pub planted: Vec<PlantedRule>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_train: 1000,
            n_val: 500,
            n_words: 200,
            n_labels: 100,
            n_answers: 50,
            words_per_question: (3, 7),
            labels_per_image: (2, 6),
            distribution: NoiseDistribution::Harmonic,
            annotators: false,
            planted: Vec::new(),
            seed: 0,
        }
    }
}

/// Exact counts of one planted rule in each split.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedReport {
    pub antecedent: Vec<(Namespace, String)>,
    pub consequent: String,
    pub train: RuleStats,
    pub val: RuleStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub train: Dataset,
    pub val: Dataset,
    pub ground_truth: Vec<PlantedReport>,
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5) as usize
}

struct Table {
    texts: Vec<String>,
    cumulative: Vec<f64>,
}

impl Table {
    fn new(prefix: &str, n: usize, reserved: &BTreeSet<&str>, dist: NoiseDistribution) -> Self {
        let texts: Vec<String> = (0..)
            .map(|i| format!("{prefix}{i}"))
            .filter(|t| !reserved.contains(t.as_str()))
            .take(n)
            .collect();
        let mut acc = 0.0;
        let cumulative = (0..texts.len())
            .map(|i| {
                acc += match dist {
                    NoiseDistribution::Uniform => 1.0,
                    NoiseDistribution::Harmonic => 1.0 / (i + 1) as f64,
                };
                acc
            })
            .collect();
        Self { texts, cumulative }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty table");
        let u = rng.random::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= u).min(self.texts.len() - 1)
    }

    /// `k` distinct indices (all of them if `k` exceeds the table).
    fn sample_distinct(&self, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        if k >= self.texts.len() {
            return (0..self.texts.len()).collect();
        }
        let mut picked: Vec<usize> = Vec::with_capacity(k);
        let mut attempts = 0;
        while picked.len() < k && attempts < 64 * (k + 1) {
            let i = self.sample(rng);
            if !picked.contains(&i) {
                picked.push(i);
            }
            attempts += 1;
        }
        picked
    }
}

fn validate(spec: &SyntheticSpec) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidParameter(msg));
    if spec.n_train == 0 {
        return bad("n_train must be positive".into());
    }
    if spec.n_answers < 2 {
        return bad("need at least two noise answers".into());
    }
    for (lo, hi, what) in [
        (spec.words_per_question.0, spec.words_per_question.1, "words_per_question"),
        (spec.labels_per_image.0, spec.labels_per_image.1, "labels_per_image"),
    ] {
        if lo > hi {
            return bad(format!("{what} range is empty"));
        }
    }
    for (i, p) in spec.planted.iter().enumerate() {
        if p.antecedent.is_empty() {
            return bad(format!("planted rule {i} has an empty antecedent"));
        }
        if !(p.target_confidence > 0.0 && p.target_confidence <= 1.0) {
            return bad(format!("planted rule {i} confidence is outside (0, 1]"));
        }
        if p.antecedent.iter().any(|(ns, _)| *ns == Namespace::Answer) {
            return bad(format!("planted rule {i} has an answer token in its antecedent"));
        }
        if let Some((_, t)) = p.antecedent.iter().find(|(_, t)| !is_normalized(t)) {
            return Err(Error::InvalidToken(t.clone()));
        }
        if !is_normalized(&p.consequent) {
            return Err(Error::InvalidToken(p.consequent.clone()));
        }
        for (j, q) in spec.planted.iter().enumerate() {
            if i != j && p.antecedent.iter().all(|t| q.antecedent.contains(t)) {
                return bad(format!(
                    "planted rule {i}'s antecedent is contained in planted rule {j}'s"
                ));
            }
        }
    }
    let requested: usize = spec.planted.iter().map(|p| p.n_matching).sum();
    if requested > spec.n_train {
        return Err(Error::Capacity {
            requested,
            available: spec.n_train,
        });
    }
    Ok(())
}

fn answer_type(answer: &str) -> &'static str {
    if answer == "yes" || answer == "no" {
        "yes/no"
    } else if answer.chars().all(|c| c.is_ascii_digit()) {
        "number"
    } else {
        "other"
    }
}

struct Tables {
    words: Table,
    labels: Table,
    answers: Table,
}

fn generate_split(
    spec: &SyntheticSpec,
    tables: &Tables,
    n: usize,
    plan: &[(usize, usize)],
    id_prefix: &str,
    rng: &mut ChaCha8Rng,
) -> Result<Dataset> {
    // role[o] = Some((rule, correct?)) for planted examples
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut role: Vec<Option<(usize, bool)>> = alloc::vec![None; n];
    let mut next = 0;
    for (r, &(count, correct)) in plan.iter().enumerate() {
        for k in 0..count {
            role[order[next]] = Some((r, k < correct));
            next += 1;
        }
    }

    let mut vocab = Vocabulary::new();
    let mut txs = Vec::with_capacity(n);
    for (o, role) in role.iter().enumerate() {
        let (wlo, whi) = spec.words_per_question;
        let (llo, lhi) = spec.labels_per_image;
        let k_words = rng.random_range(wlo..=whi);
        let k_labels = rng.random_range(llo..=lhi);
        let mut items = Vec::new();
        for i in tables.words.sample_distinct(k_words, rng) {
            items.push(vocab.intern(Namespace::QuestionWord, &tables.words.texts[i])?);
        }
        for i in tables.labels.sample_distinct(k_labels, rng) {
            items.push(vocab.intern(Namespace::VisualLabel, &tables.labels.texts[i])?);
        }
        let answer_text: String = match *role {
            Some((r, correct)) => {
                let rule = &spec.planted[r];
                for (ns, text) in &rule.antecedent {
                    items.push(vocab.intern(*ns, text)?);
                }
                if correct {
                    rule.consequent.clone()
                } else {
                    loop {
                        let a = &tables.answers.texts[tables.answers.sample(rng)];
                        if *a != rule.consequent {
                            break a.clone();
                        }
                    }
                }
            }
            None => tables.answers.texts[tables.answers.sample(rng)].clone(),
        };
        let answer = vocab.intern(Namespace::Answer, &answer_text)?;
        let meta = ExampleMeta {
            question_type: None,
            answer_type: Some(answer_type(&answer_text).to_string()),
        };
        let mut tx = Transaction::new(format!("{id_prefix}{o}"), items, Some(answer), &vocab)?.with_meta(meta);
        if spec.annotators {
            let agree = rng.random_range(4..=10u32);
            let mut counts: Vec<(String, u32)> = alloc::vec![(answer_text.clone(), agree)];
            for _ in agree..10 {
                counts.push((tables.answers.texts[tables.answers.sample(rng)].clone(), 1));
            }
            tx = tx.with_annotator_answers(AnswerCounts::new(counts)?);
        }
        txs.push(tx);
    }
    Dataset::new(vocab, txs)
}

/// Generates train and validation splits. Identical specs produce identical
/// datasets; validation uses an independent stream of the same seed.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    validate(spec)?;
    let mut reserved: BTreeSet<&str> = BTreeSet::new();
    for p in &spec.planted {
        for (_, t) in &p.antecedent {
            reserved.insert(t);
        }
    }
    let tables = Tables {
        words: Table::new("w", spec.n_words, &reserved, spec.distribution),
        labels: Table::new("o", spec.n_labels, &reserved, spec.distribution),
        answers: Table::new("a", spec.n_answers, &BTreeSet::new(), spec.distribution),
    };
    if tables.words.texts.is_empty() && spec.words_per_question.1 > 0
        || tables.labels.texts.is_empty() && spec.labels_per_image.1 > 0
    {
        return Err(Error::InvalidParameter("noise vocabulary is empty".into()));
    }

    let train_plan: Vec<(usize, usize)> = spec
        .planted
        .iter()
        .map(|p| (p.n_matching, round_half_up(p.target_confidence * p.n_matching as f64)))
        .collect();
    let val_plan: Vec<(usize, usize)> = spec
        .planted
        .iter()
        .map(|p| {
            let n = round_half_up(p.n_matching as f64 * spec.n_val as f64 / spec.n_train as f64);
            (n, round_half_up(p.target_confidence * n as f64))
        })
        .collect();
    let val_requested: usize = val_plan.iter().map(|p| p.0).sum();
    if val_requested > spec.n_val {
        return Err(Error::Capacity {
            requested: val_requested,
            available: spec.n_val,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(0);
    let train = generate_split(spec, &tables, spec.n_train, &train_plan, "train-", &mut rng)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let val = generate_split(spec, &tables, spec.n_val, &val_plan, "val-", &mut rng)?;

    let ground_truth = spec
        .planted
        .iter()
        .zip(train_plan.iter().zip(&val_plan))
        .map(|(p, (t, v))| PlantedReport {
            antecedent: p.antecedent.clone(),
            consequent: p.consequent.clone(),
            train: RuleStats::new(t.0 as u32, t.1 as u32),
            val: RuleStats::new(v.0 as u32, v.1 as u32),
        })
        .collect();
    Ok(SyntheticData {
        train,
        val,
        ground_truth,
    })
}
