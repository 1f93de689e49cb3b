//! VQA v2 question/annotation JSON plus precomputed detection labels.
//!
//! Questions: `{"questions": [{"question_id", "image_id", "question"}]}`.
//! Annotations: `{"annotations": [{"question_id", "image_id", "question_type",
//! "answer_type", "multiple_choice_answer", "answers": [{"answer"}]}]}`.
//! Detections: JSONL, one `{"image_id", "labels": [str], "scores": [float]}`
//! per image; `scores` is optional and parallel to `labels`.
//! Extra fields in any file are ignored.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;
use vqace_core::tokenize::{normalize_phrase, tokenize_question};
use vqace_core::{AnswerCounts, Dataset, ExampleMeta, Namespace, Transaction, Vocabulary};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct IngestConfig {
    /// Keep only the `answer_vocab_size` most frequent ground-truth answers.
    pub answer_vocab_size: usize,
    /// Drop question words occurring in fewer questions than this.
    pub min_word_count: usize,
    /// Drop detections scoring below this.
    pub detection_score_threshold: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            answer_vocab_size: 3000,
            min_word_count: 1,
            detection_score_threshold: 0.0,
        }
    }
}

impl IngestConfig {
    fn validate(&self) -> Result<()> {
        if self.answer_vocab_size == 0 {
            return Err(Error::Usage("answer vocabulary size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.detection_score_threshold) {
            return Err(Error::Usage(format!(
                "detection score threshold {} is outside [0, 1]",
                self.detection_score_threshold
            )));
        }
        Ok(())
    }
}

/// JSON ids in the wild are integers or strings; both map to the same key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Deserialize)]
#[serde(untagged)]
enum Id {
    Int(u64),
    Str(String),
}

impl Id {
    fn key(&self) -> String {
        match self {
            Id::Int(i) => i.to_string(),
            Id::Str(s) => s.clone(),
        }
    }
}

#[derive(Deserialize)]
struct QuestionFile {
    questions: Vec<Question>,
}

#[derive(Deserialize)]
struct Question {
    question_id: Id,
    image_id: Id,
    question: String,
}

#[derive(Deserialize)]
struct AnnotationFile {
    annotations: Vec<Annotation>,
}

#[derive(Deserialize)]
struct Annotation {
    question_id: Id,
    #[serde(default)]
    question_type: Option<String>,
    #[serde(default)]
    answer_type: Option<String>,
    #[serde(default)]
    multiple_choice_answer: Option<String>,
    #[serde(default)]
    answers: Vec<AnnotatorAnswer>,
}

#[derive(Deserialize)]
struct AnnotatorAnswer {
    answer: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionRow {
    image_id: Id,
    #[serde(default)]
    labels: Vec<String>,
    #[serde(default)]
    scores: Option<Vec<f64>>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::parse(path, e.line(), e))
}

fn read_detections(path: &Path, threshold: f64) -> Result<HashMap<String, Vec<String>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: DetectionRow = serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e))?;
        if let Some(scores) = &row.scores {
            if scores.len() != row.labels.len() {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("{} labels but {} scores", row.labels.len(), scores.len()),
                ));
            }
        }
        let mut labels = Vec::new();
        for (j, raw) in row.labels.iter().enumerate() {
            if row.scores.as_ref().is_some_and(|s| s[j] < threshold) {
                continue;
            }
            let label = normalize_phrase(raw).ok_or_else(|| Error::parse(path, i + 1, "empty label"))?;
            labels.push(label);
        }
        let key = row.image_id.key();
        if out.insert(key.clone(), labels).is_some() {
            return Err(Error::parse(path, i + 1, format!("duplicate detections for image {key}")));
        }
    }
    Ok(out)
}

/// The designated answer, else the modal annotator answer.
fn ground_truth(ann: &Annotation, counts: Option<&AnswerCounts>) -> Option<String> {
    ann.multiple_choice_answer
        .as_deref()
        .and_then(normalize_phrase)
        .or_else(|| counts.map(|c| c.modal().to_string()))
}

/// Top `k` answers by frequency, ties broken by answer text.
fn top_answers<'a>(answers: impl Iterator<Item = &'a str>, k: usize) -> BTreeSet<String> {
    let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
    for a in answers {
        *freq.entry(a).or_default() += 1;
    }
    let mut ranked: Vec<(&str, usize)> = freq.into_iter().collect();
    ranked.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(y.0)));
    ranked.into_iter().take(k).map(|(a, _)| a.to_string()).collect()
}

/// Loads one VQA split. `answer_vocab` fixes the allowed answers (typically
/// the answer tokens of the training dataset); without it the vocabulary is
/// the top `answer_vocab_size` answers of this split.
pub fn load_vqa_dataset(
    questions_path: &Path,
    annotations_path: &Path,
    detections_path: &Path,
    config: &IngestConfig,
    answer_vocab: Option<&BTreeSet<String>>,
) -> Result<Dataset> {
    config.validate()?;
    let questions: QuestionFile = read_json(questions_path)?;
    let annotations: AnnotationFile = read_json(annotations_path)?;
    let detections = read_detections(detections_path, config.detection_score_threshold)?;

    let mut by_question: HashMap<String, Annotation> = HashMap::with_capacity(annotations.annotations.len());
    for ann in annotations.annotations {
        let key = ann.question_id.key();
        if by_question.insert(key.clone(), ann).is_some() {
            return Err(Error::format(annotations_path, format!("duplicate annotation for question {key}")));
        }
    }

    struct Row {
        id: String,
        words: BTreeSet<String>,
        labels: Vec<String>,
        truth: Option<String>,
        counts: Option<AnswerCounts>,
        meta: ExampleMeta,
    }
    let mut rows = Vec::with_capacity(questions.questions.len());
    for q in &questions.questions {
        let id = q.question_id.key();
        let ann = by_question
            .get(&id)
            .ok_or_else(|| Error::Integrity(format!("question {id} has no annotation")))?;
        let image = q.image_id.key();
        let labels = detections
            .get(&image)
            .ok_or_else(|| Error::Integrity(format!("image {image} (question {id}) has no detections row")))?
            .clone();
        let counts = if ann.answers.is_empty() {
            None
        } else {
            let normalized = ann.answers.iter().filter_map(|a| normalize_phrase(&a.answer)).map(|a| (a, 1));
            AnswerCounts::new(normalized).ok()
        };
        rows.push(Row {
            truth: ground_truth(ann, counts.as_ref()),
            words: tokenize_question(&q.question),
            id,
            labels,
            counts,
            meta: ExampleMeta {
                question_type: ann.question_type.clone(),
                answer_type: ann.answer_type.clone(),
            },
        });
    }

    let own_vocab;
    let allowed = match answer_vocab {
        Some(v) => v,
        None => {
            own_vocab = top_answers(rows.iter().filter_map(|r| r.truth.as_deref()), config.answer_vocab_size);
            &own_vocab
        }
    };
    let mut word_freq: HashMap<&str, usize> = HashMap::new();
    if config.min_word_count > 1 {
        for r in &rows {
            for w in &r.words {
                *word_freq.entry(w).or_default() += 1;
            }
        }
    }

    let mut vocab = Vocabulary::new();
    let mut txs = Vec::with_capacity(rows.len());
    for r in &rows {
        let mut items = Vec::with_capacity(r.words.len() + r.labels.len());
        for w in &r.words {
            if config.min_word_count > 1 && word_freq[w.as_str()] < config.min_word_count {
                continue;
            }
            items.push(vocab.intern(Namespace::QuestionWord, w)?);
        }
        for l in &r.labels {
            items.push(vocab.intern(Namespace::VisualLabel, l)?);
        }
        let answer = match &r.truth {
            Some(t) if allowed.contains(t) => Some(vocab.intern(Namespace::Answer, t)?),
            _ => None,
        };
        let mut tx = Transaction::new(r.id.clone(), items, answer, &vocab)?;
        if let Some(c) = &r.counts {
            tx = tx.with_annotator_answers(c.clone());
        }
        txs.push(tx.with_meta(r.meta.clone()));
    }
    Dataset::new(vocab, txs).map_err(|e| match e {
        vqace_core::Error::DuplicateExample(id) => {
            Error::format(questions_path, format!("duplicate question id {id}"))
        }
        e => e.into(),
    })
}

/// Answer texts of a dataset, for ingesting a validation split against the
/// training answer vocabulary.
pub fn answer_vocabulary(dataset: &Dataset) -> BTreeSet<String> {
    dataset
        .vocabulary()
        .iter()
        .filter(|t| t.namespace == Namespace::Answer)
        .map(|t| t.text.clone())
        .collect()
}
