//! Confidence-weighted shortcut classifier.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::model::{CorrectnessMode, Dataset, RuleSet, TokenId, Transaction, Vocabulary};
use crate::rules::{best_rule_per_example, match_rules};

/// Which rules vote at prediction time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VoteRules {
    /// The distinct best rules selected over the training examples.
    #[default]
    BestPerExample,
    /// Every rule of the source rule set (ablation).
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShortcutClassifier {
    rules: RuleSet,
    fallback_answer: TokenId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub answer: TokenId,
    pub matched: bool,
    /// Per candidate answer: summed confidence and number of voting rules.
    pub scores: Vec<(TokenId, f64, u32)>,
}

impl ShortcutClassifier {
    /// Assembles a classifier from already selected voting rules, e.g. rules
    /// rebound into another dataset's vocabulary.
    pub fn new(rules: RuleSet, fallback_answer: TokenId) -> Self {
        Self {
            rules,
            fallback_answer,
        }
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    pub fn fallback_answer(&self) -> TokenId {
        self.fallback_answer
    }

    /// Weighted vote of the matching rules. Ties are broken by the number of
    /// supporting rules, then by answer text. Without a match the fallback
    /// answer is returned.
    pub fn predict(&self, transaction: &Transaction, vocabulary: &Vocabulary) -> Prediction {
        let matched = match_rules(&self.rules, transaction);
        if matched.is_empty() {
            return Prediction {
                answer: self.fallback_answer,
                matched: false,
                scores: Vec::new(),
            };
        }
        let mut table: BTreeMap<TokenId, (f64, u32)> = BTreeMap::new();
        for id in matched {
            let rule = self.rules.rule(id);
            let entry = table.entry(rule.consequent).or_default();
            entry.0 += rule.confidence();
            entry.1 += 1;
        }
        let scores: Vec<(TokenId, f64, u32)> =
            table.into_iter().map(|(a, (w, n))| (a, w, n)).collect();
        let best = scores
            .iter()
            .max_by(|x, y| {
                x.1.partial_cmp(&y.1)
                    .unwrap_or(Ordering::Equal)
                    .then(x.2.cmp(&y.2))
                    .then_with(|| vocabulary.text(y.0).cmp(vocabulary.text(x.0)))
            })
            .expect("non-empty vote table");
        Prediction {
            answer: best.0,
            matched: true,
            scores,
        }
    }
}

/// Most frequent in-vocabulary training answer, ties broken by answer text.
pub fn modal_answer(train: &Dataset) -> Option<TokenId> {
    let mut counts: BTreeMap<TokenId, usize> = BTreeMap::new();
    for tx in train.transactions() {
        if let Some(a) = tx.answer() {
            *counts.entry(a).or_default() += 1;
        }
    }
    let vocab = train.vocabulary();
    counts
        .into_iter()
        .max_by(|x, y| x.1.cmp(&y.1).then_with(|| vocab.text(y.0).cmp(vocab.text(x.0))))
        .map(|(a, _)| a)
}

/// Builds the classifier from a rule set scored on `train` (same id space).
/// With [`VoteRules::BestPerExample`], the voting rules are the distinct best
/// rules of the training examples, in their original order.
pub fn build_classifier(
    ruleset: &RuleSet,
    train: &Dataset,
    mode: CorrectnessMode,
    vote: VoteRules,
) -> Result<ShortcutClassifier> {
    let fallback_answer = modal_answer(train).ok_or(Error::NoFallbackAnswer)?;
    let rules = match vote {
        VoteRules::Full => ruleset.clone(),
        VoteRules::BestPerExample => {
            let mut chosen: Vec<u32> = best_rule_per_example(ruleset, train, mode)?
                .into_iter()
                .flatten()
                .collect();
            chosen.sort_unstable();
            chosen.dedup();
            RuleSet::new(
                chosen.iter().map(|&id| ruleset.rule(id).clone()).collect(),
                ruleset.provenance.clone(),
            )
        }
    };
    Ok(ShortcutClassifier {
        rules,
        fallback_answer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Namespace, Rule, RuleSetProvenance, RuleStats};
    use alloc::vec;

    struct F {
        v: Vocabulary,
    }
    impl F {
        fn q(&mut self, s: &str) -> TokenId {
            self.v.intern(Namespace::QuestionWord, s).unwrap()
        }
        fn a(&mut self, s: &str) -> TokenId {
            self.v.intern(Namespace::Answer, s).unwrap()
        }
        fn rule(&self, ante: &[TokenId], ans: TokenId, s: u32, c: u32) -> Rule {
            Rule::new(ante.to_vec(), ans, RuleStats::new(s, c), &self.v).unwrap()
        }
    }

    fn classifier(rules: Vec<Rule>, fallback: TokenId) -> ShortcutClassifier {
        ShortcutClassifier {
            rules: RuleSet::new(rules, RuleSetProvenance::default()),
            fallback_answer: fallback,
        }
    }

    #[test]
    fn weighted_vote() {
        let mut f = F { v: Vocabulary::new() };
        let (a, b, c) = (f.q("a"), f.q("b"), f.q("c"));
        let (green, red, yes) = (f.a("green"), f.a("red"), f.a("yes"));
        let clf = classifier(
            vec![
                f.rule(&[a], green, 10, 9),
                f.rule(&[b], green, 10, 6),
                f.rule(&[c], red, 10, 8),
            ],
            yes,
        );
        let tx = Transaction::new("t", vec![a, b, c], None, &f.v).unwrap();
        let p = clf.predict(&tx, &f.v);
        assert_eq!(p.answer, green);
        assert!(p.matched);
        let green_score = p.scores.iter().find(|s| s.0 == green).unwrap();
        assert!((green_score.1 - 1.5).abs() < 1e-12);
        assert_eq!(green_score.2, 2);
    }

    #[test]
    fn fallback_when_unmatched() {
        let mut f = F { v: Vocabulary::new() };
        let (a, z) = (f.q("a"), f.q("z"));
        let (green, yes) = (f.a("green"), f.a("yes"));
        let clf = classifier(vec![f.rule(&[a], green, 10, 9)], yes);
        let tx = Transaction::new("t", vec![z], None, &f.v).unwrap();
        let p = clf.predict(&tx, &f.v);
        assert_eq!((p.answer, p.matched), (yes, false));
    }

    #[test]
    fn tie_goes_to_smaller_answer_text() {
        let mut f = F { v: Vocabulary::new() };
        let (x, y) = (f.q("x"), f.q("y"));
        // ids: "b" before "a", so the text order differs from id order
        let (b, a, yes) = (f.a("b"), f.a("a"), f.a("yes"));
        let clf = classifier(vec![f.rule(&[x], b, 10, 5), f.rule(&[y], a, 10, 5)], yes);
        let tx = Transaction::new("t", vec![x, y], None, &f.v).unwrap();
        assert_eq!(clf.predict(&tx, &f.v).answer, a);
    }

    #[test]
    fn tie_on_weight_prefers_more_rules() {
        let mut f = F { v: Vocabulary::new() };
        let (x, y, z) = (f.q("x"), f.q("y"), f.q("z"));
        let (a, b, yes) = (f.a("a"), f.a("b"), f.a("yes"));
        // b: 0.5 + 0.5 = 1.0 from two rules; a: 1.0 from one rule
        let clf = classifier(
            vec![
                f.rule(&[x], a, 4, 4),
                f.rule(&[y], b, 4, 2),
                f.rule(&[z], b, 4, 2),
            ],
            yes,
        );
        let tx = Transaction::new("t", vec![x, y, z], None, &f.v).unwrap();
        assert_eq!(clf.predict(&tx, &f.v).answer, b);
    }

    #[test]
    fn build_dedups_and_picks_modal_fallback() {
        let mut f = F { v: Vocabulary::new() };
        let (w, u) = (f.q("w"), f.q("u"));
        let (yes, no) = (f.a("yes"), f.a("no"));
        let rules = RuleSet::new(
            vec![f.rule(&[w], yes, 2, 2), f.rule(&[u], no, 1, 1)],
            RuleSetProvenance::default(),
        );
        let txs = vec![
            Transaction::new("t1", vec![w], Some(yes), &f.v).unwrap(),
            Transaction::new("t2", vec![w], Some(yes), &f.v).unwrap(),
            Transaction::new("t3", vec![], Some(yes), &f.v).unwrap(),
            Transaction::new("t4", vec![], Some(no), &f.v).unwrap(),
        ];
        let train = Dataset::new(f.v.clone(), txs).unwrap();
        let clf = build_classifier(&rules, &train, CorrectnessMode::ExactMatch, VoteRules::BestPerExample)
            .unwrap();
        assert_eq!(clf.rules().len(), 1);
        assert_eq!(clf.fallback_answer(), yes);
        let full = build_classifier(&rules, &train, CorrectnessMode::ExactMatch, VoteRules::Full).unwrap();
        assert_eq!(full.rules().len(), 2);
    }

    #[test]
    fn empty_ruleset_keeps_fallback_only() {
        let mut f = F { v: Vocabulary::new() };
        let w = f.q("w");
        let (no, yes) = (f.a("no"), f.a("yes"));
        let txs = vec![
            Transaction::new("t1", vec![w], Some(yes), &f.v).unwrap(),
            Transaction::new("t2", vec![w], Some(no), &f.v).unwrap(),
        ];
        let train = Dataset::new(f.v.clone(), txs).unwrap();
        let empty = RuleSet::new(Vec::new(), RuleSetProvenance::default());
        let clf = build_classifier(&empty, &train, CorrectnessMode::ExactMatch, VoteRules::default()).unwrap();
        assert!(clf.rules().is_empty());
        // 1-1 tie: lexicographically smaller answer
        assert_eq!(clf.fallback_answer(), no);
        let none = Dataset::new(f.v.clone(), vec![Transaction::new("t", vec![w], None, &f.v).unwrap()]).unwrap();
        assert_eq!(
            build_classifier(&empty, &none, CorrectnessMode::ExactMatch, VoteRules::default()),
            Err(Error::NoFallbackAnswer)
        );
    }
}
