//! Question tokenizer and text normalization.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

/// Lowercases `text` and splits it on every non-alphanumeric character.
/// Word order and repetition are discarded.
pub fn tokenize_question(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

/// Normalizes an answer or label string: lowercase, trimmed, inner
/// whitespace runs collapsed to one space. Returns `None` if nothing is left.
pub fn normalize_phrase(text: &str) -> Option<String> {
    let words: Vec<String> = text.split_whitespace().map(|w| w.to_lowercase()).collect();
    if words.is_empty() {
        None
    } else {
        Some(words.join(" "))
    }
}
