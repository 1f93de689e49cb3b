//! From frequent itemsets to filtered shortcut rules.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::model::{
    answer_text_is_correct, is_correct, is_subset, CorrectnessMode, Dataset, Itemset, Rule,
    RuleSet, RuleSetProvenance, RuleStats, RuleType, TokenId, Transaction, Vocabulary,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterParams {
    pub min_confidence: f64,
    /// In the superset step, also prune a longer rule whose confidence merely
    /// equals that of a shorter rule with the same answer.
    pub superset_prune_on_equal: bool,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            min_confidence: 0.3,
            superset_prune_on_equal: true,
        }
    }
}

impl FilterParams {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(Error::InvalidParameter(format!(
                "min_confidence {} is outside [0, 1]",
                self.min_confidence
            )));
        }
        Ok(())
    }
}

fn map_maybe_parallel<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

fn stats_on(
    antecedent: &[TokenId],
    dataset: &Dataset,
    consequent: TokenId,
    mode: CorrectnessMode,
) -> Result<RuleStats> {
    let matched = dataset.matching(antecedent);
    let mut correct = 0u32;
    for &o in &matched {
        let tx = &dataset.transactions()[o as usize];
        if is_correct(consequent, tx, mode, dataset.vocabulary())? {
            correct += 1;
        }
    }
    Ok(RuleStats::new(matched.len() as u32, correct))
}

/// Turns itemsets that contain exactly one answer token into
/// `itemset \ {answer} => answer` rules scored on `dataset`. Itemsets without
/// an answer, with an empty antecedent, or whose rule is never correct are
/// dropped. Output is in canonical order.
pub fn extract_rules(
    itemsets: &[Itemset],
    dataset: &Dataset,
    mode: CorrectnessMode,
) -> Result<Vec<Rule>> {
    let vocab = dataset.vocabulary();
    let mut candidates: Vec<(Vec<TokenId>, TokenId)> = Vec::new();
    for itemset in itemsets {
        let mut answer = None;
        let mut antecedent = Vec::with_capacity(itemset.items.len());
        for &t in &itemset.items {
            if !vocab.contains(t) {
                return Err(Error::UnknownToken(t));
            }
            if vocab.is_answer(t) {
                if answer.replace(t).is_some() {
                    return Err(Error::MultipleAnswers);
                }
            } else {
                antecedent.push(t);
            }
        }
        if let Some(answer) = answer {
            if !antecedent.is_empty() {
                antecedent.sort_unstable();
                candidates.push((antecedent, answer));
            }
        }
    }

    let scored = map_maybe_parallel(&candidates, |(antecedent, consequent)| {
        stats_on(antecedent, dataset, *consequent, mode)
    });
    let mut rules = Vec::new();
    for ((antecedent, consequent), stats) in candidates.into_iter().zip(scored) {
        let stats = stats?;
        if stats.correct > 0 {
            rules.push(Rule::new(antecedent, consequent, stats, vocab)?);
        }
    }
    rules.sort_by(Rule::canonical_cmp);
    Ok(rules)
}

/// Recomputes support and correct counts of `rules` (whose ids refer to
/// `rule_vocab`) on `dataset`. Tokens are resolved by namespace and text;
/// a rule with an unresolvable antecedent token gets support 0. Returned
/// rules keep their original ids.
pub fn score_rules(
    rules: &[Rule],
    rule_vocab: &Vocabulary,
    dataset: &Dataset,
    mode: CorrectnessMode,
) -> Result<Vec<Rule>> {
    let target = dataset.vocabulary();
    let rescored = map_maybe_parallel(rules, |rule| -> Result<RuleStats> {
        let mut antecedent = Vec::with_capacity(rule.antecedent.len());
        for &t in &rule.antecedent {
            let token = rule_vocab.token(t).ok_or(Error::UnknownToken(t))?;
            match target.get(token.namespace, &token.text) {
                Some(id) => antecedent.push(id),
                None => return Ok(RuleStats::default()),
            }
        }
        antecedent.sort_unstable();
        let answer_text = rule_vocab.text(rule.consequent);
        let consequent = target.get(crate::model::Namespace::Answer, answer_text);
        let matched = dataset.matching(&antecedent);
        let mut correct = 0u32;
        for &o in &matched {
            let tx = &dataset.transactions()[o as usize];
            let ok = match (mode, consequent) {
                (CorrectnessMode::ExactMatch, Some(c)) => tx.answer() == Some(c),
                (CorrectnessMode::ExactMatch, None) => false,
                (CorrectnessMode::SoftVqa { .. }, _) => {
                    answer_text_is_correct(answer_text, tx, mode)?
                }
            };
            correct += ok as u32;
        }
        Ok(RuleStats::new(matched.len() as u32, correct))
    });
    rules
        .iter()
        .zip(rescored)
        .map(|(rule, stats)| {
            Ok(Rule {
                stats: stats?,
                ..rule.clone()
            })
        })
        .collect()
}

/// Step (b) preference: higher confidence, then higher support, then the
/// smaller consequent id.
fn better_for_antecedent(a: &Rule, b: &Rule) -> Ordering {
    a.stats
        .cmp_confidence(&b.stats)
        .then(a.stats.support.cmp(&b.stats.support))
        .then(b.consequent.cmp(&a.consequent))
}

/// Applies the three filtering steps in order:
///
/// 1. drop rules with confidence below `min_confidence`;
/// 2. keep a single rule per distinct antecedent (highest confidence);
/// 3. drop a rule when a rule with the same answer and a strictly smaller
///    antecedent has higher (or, with `superset_prune_on_equal`, equal)
///    confidence.
///
/// The result is in canonical order with its antecedent index built.
pub fn filter_rules(rules: &[Rule], params: &FilterParams) -> Result<RuleSet> {
    params.validate()?;

    // (a)
    let confident = rules
        .iter()
        .filter(|r| r.stats.meets(params.min_confidence));

    // (b)
    let mut by_antecedent: BTreeMap<&[TokenId], &Rule> = BTreeMap::new();
    for rule in confident {
        by_antecedent
            .entry(rule.antecedent.as_slice())
            .and_modify(|kept| {
                if better_for_antecedent(rule, kept) == Ordering::Greater {
                    *kept = rule;
                }
            })
            .or_insert(rule);
    }

    // (c)
    let dominated = |rule: &Rule, shorter: &Rule| -> bool {
        shorter.consequent == rule.consequent
            && match rule.stats.cmp_confidence(&shorter.stats) {
                Ordering::Less => true,
                Ordering::Equal => params.superset_prune_on_equal,
                Ordering::Greater => false,
            }
    };
    let mut kept: Vec<Rule> = Vec::new();
    for (&antecedent, &rule) in &by_antecedent {
        let pruned = if antecedent.len() <= SUBSET_ENUMERATION_LIMIT {
            proper_subsets(antecedent).any(|sub| {
                by_antecedent
                    .get(sub.as_slice())
                    .is_some_and(|shorter| dominated(rule, shorter))
            })
        } else {
            by_antecedent.iter().any(|(&other, shorter)| {
                other.len() < antecedent.len()
                    && is_subset(other, antecedent)
                    && dominated(rule, shorter)
            })
        };
        if !pruned {
            kept.push(rule.clone());
        }
    }
    kept.sort_by(Rule::canonical_cmp);

    Ok(RuleSet::new(
        kept,
        RuleSetProvenance {
            min_confidence: Some(params.min_confidence),
            ..RuleSetProvenance::default()
        },
    ))
}

const SUBSET_ENUMERATION_LIMIT: usize = 12;

/// Non-empty proper subsets of a sorted list, each still sorted.
fn proper_subsets(set: &[TokenId]) -> impl Iterator<Item = Vec<TokenId>> + '_ {
    let full = (1u32 << set.len()) - 1;
    (1..full).map(move |mask| {
        set.iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, &t)| t)
            .collect()
    })
}

pub fn classify_rule_type(rule: &Rule, vocabulary: &Vocabulary) -> RuleType {
    RuleType::of(&rule.antecedent, vocabulary)
}

/// Rule counts per type, indexed Textual, Visual, Multimodal.
pub fn rule_type_counts(rules: &[Rule]) -> [usize; 3] {
    let mut counts = [0; 3];
    for r in rules {
        counts[r.rule_type as usize] += 1;
    }
    counts
}

/// Ids of the rules whose antecedent is contained in the transaction's items,
/// ascending.
pub fn match_rules(ruleset: &RuleSet, transaction: &Transaction) -> Vec<u32> {
    let mut candidates: Vec<u32> = transaction
        .items()
        .iter()
        .flat_map(|&t| ruleset.rules_with(t).iter().copied())
        .collect();
    candidates.sort_unstable();
    let mut matched = Vec::new();
    let mut i = 0;
    while i < candidates.len() {
        let id = candidates[i];
        let mut j = i;
        while j < candidates.len() && candidates[j] == id {
            j += 1;
        }
        let rule = ruleset.rule(id);
        // Every hit is one antecedent token present in the items.
        if j - i == rule.antecedent.len() && is_subset(&rule.antecedent, transaction.items()) {
            matched.push(id);
        }
        i = j;
    }
    matched
}

/// Preference among correct matching rules: higher confidence, then higher
/// support, then earlier (canonical) rule id.
fn better_for_example(ruleset: &RuleSet, a: u32, b: u32) -> Ordering {
    let (ra, rb) = (ruleset.rule(a), ruleset.rule(b));
    ra.stats
        .cmp_confidence(&rb.stats)
        .then(ra.stats.support.cmp(&rb.stats.support))
        .then(b.cmp(&a))
}

/// For each transaction (by ordinal), the highest-confidence rule that both
/// matches it and answers it correctly.
pub fn best_rule_per_example(
    ruleset: &RuleSet,
    dataset: &Dataset,
    mode: CorrectnessMode,
) -> Result<Vec<Option<u32>>> {
    let vocab = dataset.vocabulary();
    map_maybe_parallel(dataset.transactions(), |tx| -> Result<Option<u32>> {
        let mut best: Option<u32> = None;
        for id in match_rules(ruleset, tx) {
            if !is_correct(ruleset.rule(id).consequent, tx, mode, vocab)? {
                continue;
            }
            best = match best {
                Some(b) if better_for_example(ruleset, id, b) != Ordering::Greater => Some(b),
                _ => Some(id),
            };
        }
        Ok(best)
    })
    .into_iter()
    .collect()
}

/// Counts of examples whose best rule is textual, visual or multimodal, plus
/// examples with no correct matching rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BestRuleBreakdown {
    pub textual: usize,
    pub visual: usize,
    pub multimodal: usize,
    pub none: usize,
}

impl BestRuleBreakdown {
    pub fn total(&self) -> usize {
        self.textual + self.visual + self.multimodal + self.none
    }
}

pub fn best_rule_breakdown(
    ruleset: &RuleSet,
    dataset: &Dataset,
    mode: CorrectnessMode,
) -> Result<BestRuleBreakdown> {
    let mut b = BestRuleBreakdown::default();
    for best in best_rule_per_example(ruleset, dataset, mode)? {
        match best.map(|id| ruleset.rule(id).rule_type) {
            Some(RuleType::Textual) => b.textual += 1,
            Some(RuleType::Visual) => b.visual += 1,
            Some(RuleType::Multimodal) => b.multimodal += 1,
            None => b.none += 1,
        }
    }
    Ok(b)
}
