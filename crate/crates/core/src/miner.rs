//! Exact frequent-itemset mining over `items ∪ {answer}`.
//!
//! [`mine_frequent_itemsets`] is a depth-first vertical (Eclat-style) miner:
//! each candidate extension carries the transaction-id set of its prefix and
//! support is obtained by intersecting tid-sets. [`brute_force_itemsets`]
//! enumerates every candidate and counts by linear scan; it exists to check
//! the miner.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{is_subset, Dataset, Itemset, TokenId};
use crate::tidset::TidSet;

/// Minimum support, as an absolute count or as a fraction of the dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MinSupport {
    Count(u32),
    Fraction(f64),
}

impl MinSupport {
    /// Absolute support threshold for a dataset of `n` transactions.
    /// Fractions resolve by ceiling, ignoring float noise below 1e-9.
    pub fn resolve(&self, n: usize) -> Result<u32> {
        match *self {
            MinSupport::Count(0) => Err(Error::InvalidParameter(
                "min_support count must be at least 1".into(),
            )),
            MinSupport::Count(c) => Ok(c),
            MinSupport::Fraction(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "min_support fraction {f} is outside (0, 1]"
                    )));
                }
                let x = f * n as f64;
                let nearest = (x + 0.5) as u64;
                let snapped = (x - nearest as f64).abs() <= 1e-9 * x.max(1.0);
                let count = if snapped {
                    nearest
                } else {
                    let t = x as u64;
                    if (t as f64) < x {
                        t + 1
                    } else {
                        t
                    }
                };
                Ok(count.clamp(1, u32::MAX as u64) as u32)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MineParams {
    pub min_support: MinSupport,
    /// Maximum itemset length, answer token included.
    pub max_length: usize,
}

impl Default for MineParams {
    fn default() -> Self {
        Self {
            min_support: MinSupport::Fraction(2.1e-5),
            max_length: 5,
        }
    }
}

impl MineParams {
    pub fn new(min_support: MinSupport, max_length: usize) -> Self {
        Self {
            min_support,
            max_length,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_length == 0 {
            return Err(Error::InvalidParameter(
                "max_length must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

struct Context<'a> {
    min_support: u32,
    max_length: usize,
    universe: usize,
    is_answer: &'a [bool],
}

struct Extension {
    token: TokenId,
    tids: TidSet,
}

/// Returns every itemset with `1 <= len <= max_length` and support at least
/// the resolved minimum, in canonical (lexicographic by id) order. The output
/// does not depend on the number of worker threads.
pub fn mine_frequent_itemsets(dataset: &Dataset, params: &MineParams) -> Result<Vec<Itemset>> {
    params.validate()?;
    let min_support = params.min_support.resolve(dataset.len())?;
    let vocab = dataset.vocabulary();
    let is_answer: Vec<bool> = vocab.iter().map(|t| vocab.is_answer(t.id)).collect();
    let universe = dataset.len();

    let mut frequent: Vec<(TokenId, &[u32])> = (0..vocab.len() as TokenId)
        .map(|t| (t, dataset.postings(t)))
        .filter(|(_, p)| p.len() as u32 >= min_support)
        .collect();
    // Ascending support keeps the deep subtrees narrow.
    frequent.sort_by_key(|&(t, p)| (p.len(), t));
    let roots: Vec<Extension> = frequent
        .iter()
        .map(|&(token, p)| Extension {
            token,
            tids: TidSet::from_sorted(p, universe),
        })
        .collect();

    let ctx = Context {
        min_support,
        max_length: params.max_length,
        universe,
        is_answer: &is_answer,
    };

    let subtree = |i: usize| -> Vec<Itemset> {
        let mut out = Vec::new();
        let mut prefix = Vec::with_capacity(ctx.max_length);
        expand(&ctx, &roots, i, &mut prefix, false, &mut out);
        out
    };

    #[cfg(feature = "parallel")]
    let chunks: Vec<Vec<Itemset>> = {
        use rayon::prelude::*;
        (0..roots.len()).into_par_iter().map(subtree).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let chunks: Vec<Vec<Itemset>> = (0..roots.len()).map(subtree).collect();

    let mut all: Vec<Itemset> = Vec::with_capacity(chunks.iter().map(Vec::len).sum());
    for chunk in chunks {
        all.extend(chunk);
    }
    sort_canonical(&mut all);
    Ok(all)
}

fn sort_canonical(itemsets: &mut [Itemset]) {
    #[cfg(feature = "parallel")]
    {
        use rayon::slice::ParallelSliceMut;
        itemsets.par_sort_unstable_by(|a, b| a.items.cmp(&b.items));
    }
    #[cfg(not(feature = "parallel"))]
    itemsets.sort_unstable_by(|a, b| a.items.cmp(&b.items));
}

fn emit(prefix: &[TokenId], support: u32, out: &mut Vec<Itemset>) {
    let mut items = prefix.to_vec();
    items.sort_unstable();
    out.push(Itemset { items, support });
}

/// Emits `prefix ∪ {exts[i]}` and everything that extends it with tokens
/// from `exts[i+1..]`.
fn expand(
    ctx: &Context<'_>,
    exts: &[Extension],
    i: usize,
    prefix: &mut Vec<TokenId>,
    has_answer: bool,
    out: &mut Vec<Itemset>,
) {
    let head = &exts[i];
    let has_answer = has_answer || ctx.is_answer[head.token as usize];
    prefix.push(head.token);
    emit(prefix, head.tids.len(), out);

    let siblings = exts[i + 1..]
        .iter()
        .filter(|e| !(has_answer && ctx.is_answer[e.token as usize]));

    if prefix.len() + 1 == ctx.max_length {
        for sib in siblings {
            let support = head.tids.intersect_count(&sib.tids);
            if support >= ctx.min_support {
                prefix.push(sib.token);
                emit(prefix, support, out);
                prefix.pop();
            }
        }
    } else if prefix.len() < ctx.max_length {
        let children: Vec<Extension> = siblings
            .filter_map(|sib| {
                let tids = head.tids.intersect(&sib.tids, ctx.universe);
                (tids.len() >= ctx.min_support).then_some(Extension {
                    token: sib.token,
                    tids,
                })
            })
            .collect();
        for j in 0..children.len() {
            expand(ctx, &children, j, prefix, has_answer, out);
        }
    }
    prefix.pop();
}

/// Default token cap for [`brute_force_itemsets`].
pub const ORACLE_TOKEN_CAP: usize = 24;

/// Exhaustive reference miner: every token combination up to `max_length`,
/// support counted by scanning all transactions. Refuses when the vocabulary
/// exceeds [`ORACLE_TOKEN_CAP`] and `max_length > 4`.
pub fn brute_force_itemsets(dataset: &Dataset, params: &MineParams) -> Result<Vec<Itemset>> {
    brute_force_itemsets_capped(dataset, params, ORACLE_TOKEN_CAP)
}

pub fn brute_force_itemsets_capped(
    dataset: &Dataset,
    params: &MineParams,
    cap: usize,
) -> Result<Vec<Itemset>> {
    params.validate()?;
    let vocab_len = dataset.vocabulary().len();
    if vocab_len > cap && params.max_length > 4 {
        return Err(Error::OracleCapExceeded {
            vocab: vocab_len,
            max_length: params.max_length,
            cap,
        });
    }
    let min_support = params.min_support.resolve(dataset.len())?;
    let rows: Vec<Vec<TokenId>> = dataset
        .transactions()
        .iter()
        .map(|t| t.all_tokens())
        .collect();

    let mut out = Vec::new();
    let mut combo: Vec<TokenId> = Vec::new();
    enumerate(vocab_len as TokenId, params.max_length, &mut combo, &mut |c| {
        let support = rows.iter().filter(|r| is_subset(c, r)).count() as u32;
        if support >= min_support {
            out.push(Itemset {
                items: c.to_vec(),
                support,
            });
        }
    });
    out.sort_unstable_by(|a, b| a.items.cmp(&b.items));
    Ok(out)
}

fn enumerate(
    n: TokenId,
    max_len: usize,
    combo: &mut Vec<TokenId>,
    visit: &mut impl FnMut(&[TokenId]),
) {
    let start = combo.last().map_or(0, |&l| l + 1);
    for t in start..n {
        combo.push(t);
        visit(combo);
        if combo.len() < max_len {
            enumerate(n, max_len, combo, visit);
        }
        combo.pop();
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::{Namespace, Transaction, Vocabulary};
    use alloc::vec;

    /// D0: five transactions over what/color/plant/sky/is/there.
    pub(crate) fn d0() -> Dataset {
        let mut v = Vocabulary::new();
        let q = |v: &mut Vocabulary, s| v.intern(Namespace::QuestionWord, s).unwrap();
        let what = q(&mut v, "what");
        let color = q(&mut v, "color");
        let is = q(&mut v, "is");
        let there = q(&mut v, "there");
        let plant = v.intern(Namespace::VisualLabel, "plant").unwrap();
        let sky = v.intern(Namespace::VisualLabel, "sky").unwrap();
        let green = v.intern(Namespace::Answer, "green").unwrap();
        let red = v.intern(Namespace::Answer, "red").unwrap();
        let blue = v.intern(Namespace::Answer, "blue").unwrap();
        let yes = v.intern(Namespace::Answer, "yes").unwrap();
        let txs = vec![
            Transaction::new("t1", vec![what, color, plant], Some(green), &v).unwrap(),
            Transaction::new("t2", vec![what, color, plant], Some(green), &v).unwrap(),
            Transaction::new("t3", vec![what, color, plant], Some(red), &v).unwrap(),
            Transaction::new("t4", vec![what, color, sky], Some(blue), &v).unwrap(),
            Transaction::new("t5", vec![is, there, plant], Some(yes), &v).unwrap(),
        ];
        Dataset::new(v, txs).unwrap()
    }

    fn find(found: &[Itemset], d: &Dataset, names: &[&str]) -> Option<u32> {
        let mut ids: Vec<TokenId> = names
            .iter()
            .map(|n| d.vocabulary().get_qualified(n).unwrap())
            .collect();
        ids.sort_unstable();
        found.iter().find(|i| i.items == ids).map(|i| i.support)
    }

    #[test]
    fn d0_supports() {
        let d = d0();
        let found = mine_frequent_itemsets(&d, &MineParams::new(MinSupport::Count(2), 4)).unwrap();
        assert_eq!(find(&found, &d, &["q:what", "q:color"]), Some(4));
        assert_eq!(find(&found, &d, &["q:what", "q:color", "v:plant"]), Some(3));
        assert_eq!(
            find(&found, &d, &["q:what", "q:color", "v:plant", "a:green"]),
            Some(2)
        );
        assert_eq!(find(&found, &d, &["a:red"]), None);
        let oracle = brute_force_itemsets(&d, &MineParams::new(MinSupport::Count(2), 4)).unwrap();
        assert_eq!(found, oracle);
    }

    #[test]
    fn d0_length_two_matches_oracle() {
        let d = d0();
        let p = MineParams::new(MinSupport::Count(2), 2);
        assert_eq!(
            mine_frequent_itemsets(&d, &p).unwrap(),
            brute_force_itemsets(&d, &p).unwrap()
        );
    }

    #[test]
    fn singletons_equal_posting_lengths() {
        let d = d0();
        let p = MineParams::new(MinSupport::Count(1), 1);
        let found = brute_force_itemsets(&d, &p).unwrap();
        assert_eq!(found.len(), d.vocabulary().len());
        for i in &found {
            assert_eq!(i.items.len(), 1);
            assert_eq!(i.support as usize, d.postings(i.items[0]).len());
        }
        assert_eq!(mine_frequent_itemsets(&d, &p).unwrap(), found);
    }

    #[test]
    fn threshold_above_dataset_size_is_empty() {
        let d = d0();
        let p = MineParams::new(MinSupport::Count(6), 4);
        assert!(mine_frequent_itemsets(&d, &p).unwrap().is_empty());
        let empty = Dataset::empty();
        assert!(mine_frequent_itemsets(&empty, &MineParams::new(MinSupport::Count(1), 3))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn support_resolution() {
        assert_eq!(MinSupport::Fraction(1e-4).resolve(100_000).unwrap(), 10);
        assert_eq!(MinSupport::Fraction(2.1e-5).resolve(413_000).unwrap(), 9);
        assert_eq!(MinSupport::Fraction(0.5).resolve(5).unwrap(), 3);
        assert_eq!(MinSupport::Fraction(1.0).resolve(0).unwrap(), 1);
        assert!(MinSupport::Fraction(0.0).resolve(10).is_err());
        assert!(MinSupport::Fraction(1.5).resolve(10).is_err());
        assert!(MinSupport::Fraction(f64::NAN).resolve(10).is_err());
        assert!(MinSupport::Count(0).resolve(10).is_err());
    }

    #[test]
    fn oracle_refuses_large_vocabularies() {
        let mut v = Vocabulary::new();
        for i in 0..30 {
            v.intern(Namespace::QuestionWord, &alloc::format!("w{i}"))
                .unwrap();
        }
        let d = Dataset::new(v, Vec::new()).unwrap();
        let err = brute_force_itemsets(&d, &MineParams::new(MinSupport::Count(1), 5));
        assert!(matches!(err, Err(Error::OracleCapExceeded { .. })));
        assert!(brute_force_itemsets(&d, &MineParams::new(MinSupport::Count(1), 2)).is_ok());
    }
}
