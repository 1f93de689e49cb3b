//! Shared data model: tokens, vocabularies, transactions, itemsets and rules.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::error::{Error, Result};
use crate::evaluation::vqa_soft_score;

/// Dense token identifier, unique within one [`Vocabulary`].
pub type TokenId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Namespace {
    QuestionWord,
    VisualLabel,
    Answer,
}

impl Namespace {
    pub const ALL: [Namespace; 3] = [
        Namespace::QuestionWord,
        Namespace::VisualLabel,
        Namespace::Answer,
    ];

    /// Short prefix used in qualified token strings such as `q:what`.
    pub fn prefix(self) -> &'static str {
        match self {
            Namespace::QuestionWord => "q",
            Namespace::VisualLabel => "v",
            Namespace::Answer => "a",
        }
    }

    pub fn from_prefix(prefix: &str) -> Option<Self> {
        match prefix {
            "q" => Some(Namespace::QuestionWord),
            "v" => Some(Namespace::VisualLabel),
            "a" => Some(Namespace::Answer),
            _ => None,
        }
    }

    pub(crate) fn index(self) -> usize {
        match self {
            Namespace::QuestionWord => 0,
            Namespace::VisualLabel => 1,
            Namespace::Answer => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub namespace: Namespace,
    pub text: String,
    pub id: TokenId,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.namespace.prefix(), self.text)
    }
}

/// Returns true if `text` is non-empty, lowercase and carries no surrounding
/// whitespace.
pub fn is_normalized(text: &str) -> bool {
    !text.is_empty() && text.trim() == text && text.to_lowercase() == text
}

/// Interned, namespaced symbols. Ids are assigned densely in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<Token>,
    lookup: BTreeMap<(Namespace, String), TokenId>,
    counts: [usize; 3],
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id of `(namespace, text)`, assigning the next free id if the
    /// token is new.
    pub fn intern(&mut self, namespace: Namespace, text: &str) -> Result<TokenId> {
        if let Some(&id) = self.lookup.get(&(namespace, text.to_string())) {
            return Ok(id);
        }
        if !is_normalized(text) {
            return Err(Error::InvalidToken(text.to_string()));
        }
        let id = self.tokens.len() as TokenId;
        self.tokens.push(Token {
            namespace,
            text: text.to_string(),
            id,
        });
        self.lookup.insert((namespace, text.to_string()), id);
        self.counts[namespace.index()] += 1;
        Ok(id)
    }

    pub fn get(&self, namespace: Namespace, text: &str) -> Option<TokenId> {
        self.lookup.get(&(namespace, text.to_string())).copied()
    }

    /// Resolves a qualified token string such as `v:racket`.
    pub fn get_qualified(&self, qualified: &str) -> Option<TokenId> {
        let (prefix, text) = qualified.split_once(':')?;
        self.get(Namespace::from_prefix(prefix)?, text)
    }

    pub fn token(&self, id: TokenId) -> Option<&Token> {
        self.tokens.get(id as usize)
    }

    /// Panics if `id` is out of range.
    pub fn text(&self, id: TokenId) -> &str {
        &self.tokens[id as usize].text
    }

    /// Panics if `id` is out of range.
    pub fn namespace(&self, id: TokenId) -> Namespace {
        self.tokens[id as usize].namespace
    }

    pub fn qualified(&self, id: TokenId) -> String {
        self.tokens[id as usize].to_string()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn count(&self, namespace: Namespace) -> usize {
        self.counts[namespace.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Token> {
        self.tokens.iter()
    }

    pub fn contains(&self, id: TokenId) -> bool {
        (id as usize) < self.tokens.len()
    }

    pub(crate) fn is_answer(&self, id: TokenId) -> bool {
        self.namespace(id) == Namespace::Answer
    }
}

/// Multiset of raw annotator answers, kept sorted by answer text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerCounts(Vec<(String, u32)>);

impl AnswerCounts {
    /// Merges duplicate answers and drops zero counts; fails if nothing is
    /// left.
    pub fn new<I, S>(answers: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, u32)>,
        S: Into<String>,
    {
        let mut merged: BTreeMap<String, u32> = BTreeMap::new();
        for (answer, count) in answers {
            if count > 0 {
                *merged.entry(answer.into()).or_default() += count;
            }
        }
        if merged.is_empty() {
            return Err(Error::EmptyAnnotators);
        }
        Ok(Self(merged.into_iter().collect()))
    }

    pub fn count_of(&self, answer: &str) -> u32 {
        self.0
            .binary_search_by(|(a, _)| a.as_str().cmp(answer))
            .map(|i| self.0[i].1)
            .unwrap_or(0)
    }

    pub fn total(&self) -> u32 {
        self.0.iter().map(|(_, c)| c).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.0.iter().map(|(a, c)| (a.as_str(), *c))
    }

    /// Most frequent answer, ties broken by lexicographically smaller text.
    pub fn modal(&self) -> &str {
        let mut best = &self.0[0];
        for entry in &self.0[1..] {
            if entry.1 > best.1 {
                best = entry;
            }
        }
        &best.0
    }
}

/// Per-example metadata carried through from the source files; used only for
/// grouping in distribution reports.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExampleMeta {
    pub question_type: Option<String>,
    pub answer_type: Option<String>,
}

/// One question-image-answer example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    example_id: String,
    items: Vec<TokenId>,
    answer: Option<TokenId>,
    annotator_answers: Option<AnswerCounts>,
    pub meta: ExampleMeta,
}

impl Transaction {
    /// `items` may arrive in any order and with duplicates; they are sorted
    /// and deduplicated. Answer ids are rejected from `items`.
    pub fn new(
        example_id: impl Into<String>,
        mut items: Vec<TokenId>,
        answer: Option<TokenId>,
        vocabulary: &Vocabulary,
    ) -> Result<Self> {
        items.sort_unstable();
        items.dedup();
        for &id in &items {
            if !vocabulary.contains(id) {
                return Err(Error::UnknownToken(id));
            }
            if vocabulary.is_answer(id) {
                return Err(Error::AnswerNotAllowed(id));
            }
        }
        if let Some(a) = answer {
            if !vocabulary.contains(a) {
                return Err(Error::UnknownToken(a));
            }
            if !vocabulary.is_answer(a) {
                return Err(Error::NotAnAnswer(a));
            }
        }
        Ok(Self {
            example_id: example_id.into(),
            items,
            answer,
            annotator_answers: None,
            meta: ExampleMeta::default(),
        })
    }

    pub fn with_annotator_answers(mut self, answers: AnswerCounts) -> Self {
        self.annotator_answers = Some(answers);
        self
    }

    pub fn with_meta(mut self, meta: ExampleMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn example_id(&self) -> &str {
        &self.example_id
    }

    /// Strictly ascending question-word and visual-label ids.
    pub fn items(&self) -> &[TokenId] {
        &self.items
    }

    pub fn answer(&self) -> Option<TokenId> {
        self.answer
    }

    pub fn annotator_answers(&self) -> Option<&AnswerCounts> {
        self.annotator_answers.as_ref()
    }

    /// `items ∪ {answer}` in ascending order.
    pub fn all_tokens(&self) -> Vec<TokenId> {
        let mut all = self.items.clone();
        if let Some(a) = self.answer {
            let pos = all.binary_search(&a).unwrap_or_else(|p| p);
            all.insert(pos, a);
        }
        all
    }
}

/// A frozen set of transactions with a token → transaction inverted index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    vocabulary: Vocabulary,
    transactions: Vec<Transaction>,
    postings: Vec<Vec<u32>>,
    ordinals: BTreeMap<String, u32>,
}

impl Dataset {
    pub fn new(vocabulary: Vocabulary, transactions: Vec<Transaction>) -> Result<Self> {
        let mut ordinals = BTreeMap::new();
        for (ordinal, tx) in transactions.iter().enumerate() {
            for &id in tx.items.iter().chain(tx.answer.iter()) {
                if !vocabulary.contains(id) {
                    return Err(Error::UnknownToken(id));
                }
            }
            if let Some(&id) = tx.items.iter().find(|&&id| vocabulary.is_answer(id)) {
                return Err(Error::AnswerNotAllowed(id));
            }
            if ordinals
                .insert(tx.example_id.clone(), ordinal as u32)
                .is_some()
            {
                return Err(Error::DuplicateExample(tx.example_id.clone()));
            }
        }
        let postings = build_postings(vocabulary.len(), &transactions);
        Ok(Self {
            vocabulary,
            transactions,
            postings,
            ordinals,
        })
    }

    pub fn empty() -> Self {
        Self {
            vocabulary: Vocabulary::new(),
            transactions: Vec::new(),
            postings: Vec::new(),
            ordinals: BTreeMap::new(),
        }
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn transactions(&self) -> &[Transaction] {
        &self.transactions
    }

    pub fn len(&self) -> usize {
        self.transactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transactions.is_empty()
    }

    /// Ascending ordinals of the transactions whose items or answer contain
    /// `token`.
    pub fn postings(&self, token: TokenId) -> &[u32] {
        self.postings
            .get(token as usize)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn ordinal_of(&self, example_id: &str) -> Option<usize> {
        self.ordinals.get(example_id).map(|&o| o as usize)
    }

    /// Ordinals of the transactions matched by `antecedent` (intersection of
    /// posting lists).
    pub fn matching(&self, antecedent: &[TokenId]) -> Vec<u32> {
        let mut lists: Vec<&[u32]> = antecedent.iter().map(|&t| self.postings(t)).collect();
        lists.sort_by_key(|l| l.len());
        let Some((first, rest)) = lists.split_first() else {
            return Vec::new();
        };
        let mut acc: Vec<u32> = first.to_vec();
        for list in rest {
            acc = crate::tidset::intersect_sorted(&acc, list);
            if acc.is_empty() {
                break;
            }
        }
        acc
    }

    /// Resolves `(namespace, text)`, appending it to the vocabulary (with an
    /// empty posting list) when absent. Used when binding rules mined on
    /// another dataset: unknown tokens then simply never match.
    pub fn resolve_or_intern(&mut self, namespace: Namespace, text: &str) -> Result<TokenId> {
        let id = self.vocabulary.intern(namespace, text)?;
        if self.postings.len() <= id as usize {
            self.postings.resize(id as usize + 1, Vec::new());
        }
        Ok(id)
    }
}

fn build_postings(vocab_len: usize, transactions: &[Transaction]) -> Vec<Vec<u32>> {
    let mut postings = alloc::vec![Vec::new(); vocab_len];
    for (ordinal, tx) in transactions.iter().enumerate() {
        for &id in tx.items.iter().chain(tx.answer.iter()) {
            postings[id as usize].push(ordinal as u32);
        }
    }
    postings
}

/// A sorted token-id set with its support.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Itemset {
    pub items: Vec<TokenId>,
    pub support: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RuleType {
    Textual,
    Visual,
    Multimodal,
}

impl RuleType {
    pub fn of(antecedent: &[TokenId], vocabulary: &Vocabulary) -> Self {
        let words = antecedent
            .iter()
            .filter(|&&t| vocabulary.namespace(t) == Namespace::QuestionWord)
            .count();
        if words == antecedent.len() {
            RuleType::Textual
        } else if words == 0 {
            RuleType::Visual
        } else {
            RuleType::Multimodal
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RuleType::Textual => "textual",
            RuleType::Visual => "visual",
            RuleType::Multimodal => "multimodal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "textual" => Some(RuleType::Textual),
            "visual" => Some(RuleType::Visual),
            "multimodal" => Some(RuleType::Multimodal),
            _ => None,
        }
    }
}

/// Support (matched examples) and correct-answer count of a rule on one
/// dataset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct RuleStats {
    pub support: u32,
    pub correct: u32,
}

impl RuleStats {
    pub fn new(support: u32, correct: u32) -> Self {
        debug_assert!(correct <= support);
        Self { support, correct }
    }

    /// `None` when the rule matched nothing.
    pub fn confidence(&self) -> Option<f64> {
        (self.support > 0).then(|| self.correct as f64 / self.support as f64)
    }

    /// Exact comparison of `correct / support` by cross-multiplication.
    /// Unsupported stats compare below everything else.
    pub fn cmp_confidence(&self, other: &Self) -> Ordering {
        match (self.support, other.support) {
            (0, 0) => Ordering::Equal,
            (0, _) => Ordering::Less,
            (_, 0) => Ordering::Greater,
            _ => {
                let lhs = self.correct as u64 * other.support as u64;
                let rhs = other.correct as u64 * self.support as u64;
                lhs.cmp(&rhs)
            }
        }
    }

    /// `correct / support >= threshold`. Division is correctly rounded, so a
    /// ratio exactly equal to a decimal threshold (3/10 vs 0.3) compares equal.
    pub fn meets(&self, threshold: f64) -> bool {
        match self.confidence() {
            None => false,
            Some(c) => c >= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub antecedent: Vec<TokenId>,
    pub consequent: TokenId,
    pub stats: RuleStats,
    pub rule_type: RuleType,
}

impl Rule {
    /// Validates the antecedent against `vocabulary` and derives the rule
    /// type.
    pub fn new(
        mut antecedent: Vec<TokenId>,
        consequent: TokenId,
        stats: RuleStats,
        vocabulary: &Vocabulary,
    ) -> Result<Self> {
        antecedent.sort_unstable();
        antecedent.dedup();
        if antecedent.is_empty() {
            return Err(Error::EmptyAntecedent);
        }
        for &t in &antecedent {
            if !vocabulary.contains(t) {
                return Err(Error::UnknownToken(t));
            }
            if vocabulary.is_answer(t) {
                return Err(Error::AnswerNotAllowed(t));
            }
        }
        if !vocabulary.contains(consequent) {
            return Err(Error::UnknownToken(consequent));
        }
        if !vocabulary.is_answer(consequent) {
            return Err(Error::NotAnAnswer(consequent));
        }
        let rule_type = RuleType::of(&antecedent, vocabulary);
        Ok(Self {
            antecedent,
            consequent,
            stats,
            rule_type,
        })
    }

    /// Confidence in [0, 1]; 0 for a rule with no support.
    pub fn confidence(&self) -> f64 {
        self.stats.confidence().unwrap_or(0.0)
    }

    pub fn support(&self) -> u32 {
        self.stats.support
    }

    /// Canonical order: antecedent lexicographic by id, then consequent id.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.antecedent
            .cmp(&other.antecedent)
            .then(self.consequent.cmp(&other.consequent))
    }
}

/// How a rule's answer is judged against an example.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum CorrectnessMode {
    /// The consequent must equal the example's ground-truth answer token.
    #[default]
    ExactMatch,
    /// The soft VQA score of the consequent against the annotator answers
    /// must exceed `threshold`. `strict` selects the leave-one-out average.
    SoftVqa { threshold: f64, strict: bool },
}

impl CorrectnessMode {
    pub fn soft() -> Self {
        CorrectnessMode::SoftVqa {
            threshold: 0.0,
            strict: false,
        }
    }
}

/// Parameters that produced a [`RuleSet`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RuleSetProvenance {
    pub min_support: Option<u32>,
    pub max_length: Option<usize>,
    pub min_confidence: Option<f64>,
    pub mode: CorrectnessMode,
    pub dataset_digest: Option<String>,
}

/// An ordered list of rules with a token → rule inverted index. Rule ids are
/// positions in [`RuleSet::rules`].
#[derive(Debug, Clone, PartialEq)]
pub struct RuleSet {
    rules: Vec<Rule>,
    antecedent_index: Vec<Vec<u32>>,
    pub provenance: RuleSetProvenance,
}

impl RuleSet {
    pub fn new(rules: Vec<Rule>, provenance: RuleSetProvenance) -> Self {
        let width = rules
            .iter()
            .flat_map(|r| r.antecedent.iter())
            .map(|&t| t as usize + 1)
            .max()
            .unwrap_or(0);
        let mut antecedent_index = alloc::vec![Vec::new(); width];
        for (id, rule) in rules.iter().enumerate() {
            for &t in &rule.antecedent {
                antecedent_index[t as usize].push(id as u32);
            }
        }
        Self {
            rules,
            antecedent_index,
            provenance,
        }
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule(&self, id: u32) -> &Rule {
        &self.rules[id as usize]
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Ids of the rules whose antecedent contains `token`.
    pub fn rules_with(&self, token: TokenId) -> &[u32] {
        self.antecedent_index
            .get(token as usize)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn into_rules(self) -> Vec<Rule> {
        self.rules
    }
}

/// Subset test on two ascending id lists.
pub(crate) fn is_subset(small: &[TokenId], big: &[TokenId]) -> bool {
    if small.len() > big.len() {
        return false;
    }
    let mut rest = big;
    for &x in small {
        match rest.iter().position(|&y| y >= x) {
            Some(p) if rest[p] == x => rest = &rest[p + 1..],
            _ => return false,
        }
    }
    true
}

/// True iff every antecedent token is present in the transaction's items.
pub fn matches(
    antecedent: &[TokenId],
    transaction: &Transaction,
    vocabulary: &Vocabulary,
) -> Result<bool> {
    if antecedent.is_empty() {
        return Err(Error::EmptyAntecedent);
    }
    if let Some(&t) = antecedent
        .iter()
        .find(|&&t| vocabulary.contains(t) && vocabulary.is_answer(t))
    {
        return Err(Error::AnswerNotAllowed(t));
    }
    Ok(is_subset(antecedent, &transaction.items))
}

/// Whether answering `consequent` is correct for `transaction`.
pub fn is_correct(
    consequent: TokenId,
    transaction: &Transaction,
    mode: CorrectnessMode,
    vocabulary: &Vocabulary,
) -> Result<bool> {
    match mode {
        CorrectnessMode::ExactMatch => Ok(transaction.answer == Some(consequent)),
        CorrectnessMode::SoftVqa { .. } => {
            answer_text_is_correct(vocabulary.text(consequent), transaction, mode)
        }
    }
}

/// Text-level variant of [`is_correct`], used when the answer may not exist
/// in the transaction's vocabulary.
pub(crate) fn answer_text_is_correct(
    answer: &str,
    transaction: &Transaction,
    mode: CorrectnessMode,
) -> Result<bool> {
    match mode {
        CorrectnessMode::ExactMatch => unreachable!("exact match compares ids"),
        CorrectnessMode::SoftVqa { threshold, strict } => {
            let annotators = transaction
                .annotator_answers
                .as_ref()
                .ok_or_else(|| Error::MissingAnnotations(transaction.example_id.clone()))?;
            Ok(vqa_soft_score(answer, annotators, strict)? > threshold)
        }
    }
}
