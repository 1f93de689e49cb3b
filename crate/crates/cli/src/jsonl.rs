//! Generic transaction JSONL:
//! `{"id": str, "q": [str], "v": [str], "a": str|null, "answers": {str: int}}`
//! plus optional `question_type` / `answer_type` strings.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use vqace_core::tokenize::normalize_phrase;
use vqace_core::{AnswerCounts, Dataset, ExampleMeta, Namespace, Transaction, Vocabulary};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransactionRecord {
    pub id: String,
    #[serde(default)]
    pub q: Vec<String>,
    #[serde(default)]
    pub v: Vec<String>,
    #[serde(default)]
    pub a: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answers: Option<BTreeMap<String, u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_type: Option<String>,
}

/// Builds a dataset from records, assigning token ids in first-seen order
/// (question words, then labels, then the answer of each record).
pub fn dataset_from_records<'a>(
    records: impl IntoIterator<Item = (usize, &'a TransactionRecord)>,
    path: &Path,
) -> Result<Dataset> {
    let mut vocab = Vocabulary::new();
    let mut seen = BTreeSet::new();
    let mut txs = Vec::new();
    for (line, rec) in records {
        let err = |m: String| Error::parse(path, line, m);
        if !seen.insert(rec.id.clone()) {
            return Err(err(format!("duplicate example id {:?}", rec.id)));
        }
        let mut items = Vec::with_capacity(rec.q.len() + rec.v.len());
        for (ns, list) in [(Namespace::QuestionWord, &rec.q), (Namespace::VisualLabel, &rec.v)] {
            for raw in list {
                let text = normalize_phrase(raw).ok_or_else(|| err(format!("empty token in {:?}", rec.id)))?;
                items.push(vocab.intern(ns, &text).map_err(|e| err(e.to_string()))?);
            }
        }
        let answer = match &rec.a {
            Some(raw) => {
                let text = normalize_phrase(raw).ok_or_else(|| err("empty answer".into()))?;
                Some(vocab.intern(Namespace::Answer, &text).map_err(|e| err(e.to_string()))?)
            }
            None => None,
        };
        let mut tx = Transaction::new(rec.id.clone(), items, answer, &vocab).map_err(|e| err(e.to_string()))?;
        if let Some(answers) = &rec.answers {
            let counts = answers
                .iter()
                .filter_map(|(a, &c)| normalize_phrase(a).map(|a| (a, c)));
            tx = tx.with_annotator_answers(AnswerCounts::new(counts).map_err(|e| err(e.to_string()))?);
        }
        txs.push(tx.with_meta(ExampleMeta {
            question_type: rec.question_type.clone(),
            answer_type: rec.answer_type.clone(),
        }));
    }
    Ok(Dataset::new(vocab, txs)?)
}

pub fn read_records(path: &Path) -> Result<Vec<(usize, TransactionRecord)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TransactionRecord = serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e))?;
        out.push((i + 1, rec));
    }
    Ok(out)
}

pub fn load_transactions_jsonl(path: &Path) -> Result<Dataset> {
    let records = read_records(path)?;
    dataset_from_records(records.iter().map(|(l, r)| (*l, r)), path)
}

/// Records that re-parse to an equal dataset: tokens are listed in id order,
/// which is their first-seen order.
pub fn records_from_dataset(dataset: &Dataset) -> Vec<TransactionRecord> {
    let vocab = dataset.vocabulary();
    dataset
        .transactions()
        .iter()
        .map(|tx| {
            let texts = |ns: Namespace| -> Vec<String> {
                tx.items()
                    .iter()
                    .filter(|&&t| vocab.namespace(t) == ns)
                    .map(|&t| vocab.text(t).to_string())
                    .collect()
            };
            TransactionRecord {
                id: tx.example_id().to_string(),
                q: texts(Namespace::QuestionWord),
                v: texts(Namespace::VisualLabel),
                a: tx.answer().map(|a| vocab.text(a).to_string()),
                answers: tx
                    .annotator_answers()
                    .map(|c| c.iter().map(|(a, n)| (a.to_string(), n)).collect()),
                question_type: tx.meta.question_type.clone(),
                answer_type: tx.meta.answer_type.clone(),
            }
        })
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, &row).map_err(|e| Error::Internal(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_transactions_jsonl(path: &Path, dataset: &Dataset) -> Result<()> {
    write_jsonl(path, records_from_dataset(dataset))
}
