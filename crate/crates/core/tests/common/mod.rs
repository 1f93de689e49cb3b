#![allow(dead_code)]

use proptest::prelude::*;
use vqace_core::{Dataset, Namespace, Transaction, Vocabulary};

/// A random dataset description: per transaction a bitmask over the
/// non-answer tokens and an optional answer index.
#[derive(Debug, Clone)]
pub struct RawDataset {
    pub n_words: usize,
    pub n_labels: usize,
    pub n_answers: usize,
    pub rows: Vec<(u32, Option<usize>)>,
}

impl RawDataset {
    pub fn build(&self) -> Dataset {
        let mut v = Vocabulary::new();
        let mut items = Vec::new();
        for i in 0..self.n_words {
            items.push(v.intern(Namespace::QuestionWord, &format!("w{i}")).unwrap());
        }
        for i in 0..self.n_labels {
            items.push(v.intern(Namespace::VisualLabel, &format!("l{i}")).unwrap());
        }
        let answers: Vec<u32> = (0..self.n_answers)
            .map(|i| v.intern(Namespace::Answer, &format!("a{i}")).unwrap())
            .collect();
        let txs = self
            .rows
            .iter()
            .enumerate()
            .map(|(o, (mask, ans))| {
                let its = (0..items.len()).filter(|b| mask >> b & 1 == 1).map(|b| items[b]).collect();
                Transaction::new(format!("t{o}"), its, ans.map(|a| answers[a]), &v).unwrap()
            })
            .collect();
        Dataset::new(v, txs).unwrap()
    }
}

/// At most 24 tokens in total and at most 64 transactions.
pub fn raw_dataset() -> impl Strategy<Value = RawDataset> {
    (1usize..=10, 0usize..=8, 1usize..=6)
        .prop_flat_map(|(w, l, a)| {
            let bits = w + l;
            let mask = (0u32..(1u32 << bits)).prop_map(move |m| {
                // Thin the masks so that itemsets stay moderately sized.
                m & (m >> 1 | m << 3 | 0x5555_5555)
            });
            let row = (mask, prop::option::weighted(0.85, 0..a));
            (Just(w), Just(l), Just(a), prop::collection::vec(row, 0..=64))
        })
        .prop_map(|(n_words, n_labels, n_answers, rows)| RawDataset {
            n_words,
            n_labels,
            n_answers,
            rows,
        })
}

/// Subset test written independently of the library.
pub fn contains_all(haystack: &[u32], needles: &[u32]) -> bool {
    needles.iter().all(|n| haystack.contains(n))
}

/// Support by linear scan over the transactions (answer included).
pub fn scan_support(dataset: &Dataset, items: &[u32]) -> u32 {
    dataset
        .transactions()
        .iter()
        .filter(|tx| contains_all(&tx.all_tokens(), items))
        .count() as u32
}
