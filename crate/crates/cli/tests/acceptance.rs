//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; the process exits non-zero
//! if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use vqace::manifest::file_digest;
use vqace_core::classifier::{build_classifier, ShortcutClassifier, VoteRules};
use vqace_core::evaluation::{evaluate_predictions, rule_model_agreement, split_examples, MissingPredictions, SplitLabel};
use vqace_core::miner::{brute_force_itemsets, mine_frequent_itemsets, MinSupport, MineParams};
use vqace_core::rules::{extract_rules, filter_rules, FilterParams};
use vqace_core::synth::{generate_synthetic, NoiseDistribution, PlantedRule, SyntheticSpec};
use vqace_core::{CorrectnessMode, Dataset, Namespace, Rule, RuleStats, Transaction, Vocabulary};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn runner(seed: u8) -> TestRunner {
    TestRunner::new_with_rng(Config::default(), TestRng::from_seed(RngAlgorithm::ChaCha, &[seed; 32]))
}

fn draw<S: Strategy>(runner: &mut TestRunner, s: &S) -> S::Value {
    s.new_tree(runner).expect("strategy draws").current()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn subset_of(needles: &[u32], haystack: &[u32]) -> bool {
    needles.iter().all(|n| haystack.contains(n))
}

// ------------------------------------------------------------- fixtures

/// Random dataset: at most 24 tokens, at most 64 transactions.
fn random_dataset(runner: &mut TestRunner) -> Dataset {
    let (w, l, a) = draw(runner, &(1usize..=10, 0usize..=8, 1usize..=6));
    let bits = w + l;
    let row = (0u32..(1 << bits), proptest::option::weighted(0.85, 0..a));
    let rows = draw(runner, &proptest::collection::vec(row, 0..=64));
    let mut v = Vocabulary::new();
    let mut items = Vec::new();
    for i in 0..w {
        items.push(v.intern(Namespace::QuestionWord, &format!("w{i}")).unwrap());
    }
    for i in 0..l {
        items.push(v.intern(Namespace::VisualLabel, &format!("l{i}")).unwrap());
    }
    let answers: Vec<u32> = (0..a).map(|i| v.intern(Namespace::Answer, &format!("a{i}")).unwrap()).collect();
    let txs = rows
        .iter()
        .enumerate()
        .map(|(o, &(mask, ans))| {
            // Thin the masks so that itemsets stay moderately sized.
            let mask = mask & (mask >> 1 | mask << 3 | 0x5555_5555);
            let its = (0..bits).filter(|b| mask >> b & 1 == 1).map(|b| items[b]).collect();
            Transaction::new(format!("t{o}"), its, ans.map(|x| answers[x]), &v).unwrap()
        })
        .collect();
    Dataset::new(v, txs).unwrap()
}

fn small_synth(seed: u64, planted: usize) -> SyntheticSpec {
    SyntheticSpec {
        n_train: 600,
        n_val: 300,
        n_words: 30,
        n_labels: 15,
        n_answers: 8,
        words_per_question: (2, 5),
        labels_per_image: (1, 4),
        distribution: if seed.is_multiple_of(2) { NoiseDistribution::Harmonic } else { NoiseDistribution::Uniform },
        planted: (0..planted)
            .map(|i| PlantedRule {
                antecedent: vec![(Namespace::QuestionWord, format!("pq{i}"))],
                consequent: format!("pa{}", i % 2),
                target_confidence: [0.5, 0.8, 1.0][i % 3],
                n_matching: 40,
            })
            .collect(),
        seed,
        ..SyntheticSpec::default()
    }
}

fn mine_rules(d: &Dataset, min_support: u32, max_length: usize, min_confidence: f64) -> Vec<Rule> {
    let items = mine_frequent_itemsets(d, &MineParams::new(MinSupport::Count(min_support), max_length)).unwrap();
    let rules = extract_rules(&items, d, CorrectnessMode::ExactMatch).unwrap();
    filter_rules(
        &rules,
        &FilterParams {
            min_confidence,
            ..FilterParams::default()
        },
    )
    .unwrap()
    .into_rules()
}

fn test_rule(v: &Vocabulary, antecedent: &[u32], answer: u32, support: u32, correct: u32) -> Rule {
    Rule::new(antecedent.to_vec(), answer, RuleStats::new(support, correct), v).unwrap()
}

// ----------------------------------------------------------- criteria

fn c1_miner_equals_oracle() -> Outcome {
    let start = Instant::now();
    let mut runner = runner(1);
    let mut itemsets = 0;
    for case in 0..240 {
        let d = random_dataset(&mut runner);
        let p = MineParams::new(MinSupport::Count(1 + case % 5), 2 + (case as usize / 5) % 3);
        let got = mine_frequent_itemsets(&d, &p).unwrap();
        let want = brute_force_itemsets(&d, &p).unwrap();
        ensure(got == want, || format!("case {case}: miner and oracle differ"))?;
        itemsets += got.len();
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(60), || format!("took {took:?}"))?;
    Ok(format!("240 datasets, {itemsets} itemsets, {took:.2?}"))
}

fn c2_anti_monotone() -> Outcome {
    let mut runner = runner(1);
    let mut checked = 0usize;
    for case in 0..240 {
        let d = random_dataset(&mut runner);
        let p = MineParams::new(MinSupport::Count(1 + case % 5), 2 + (case as usize / 5) % 3);
        let mined = mine_frequent_itemsets(&d, &p).unwrap();
        let index: BTreeMap<&[u32], u32> = mined.iter().map(|s| (s.items.as_slice(), s.support)).collect();
        for s in &mined {
            let n = s.items.len();
            for mask in 1..(1u32 << n) - 1 {
                let sub: Vec<u32> = (0..n).filter(|b| mask >> b & 1 == 1).map(|b| s.items[b]).collect();
                ensure(index.get(sub.as_slice()).is_some_and(|&x| x >= s.support), || {
                    format!("case {case}: {sub:?} missing or below {:?}", s.items)
                })?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} sub-itemsets checked, 0 violations"))
}

fn filter_examples() -> Result<(), String> {
    let mut v = Vocabulary::new();
    let q = |v: &mut Vocabulary, s: &str| v.intern(Namespace::QuestionWord, s).unwrap();
    let (is, there, cat, a, b) = (q(&mut v, "is"), q(&mut v, "there"), q(&mut v, "cat"), q(&mut v, "a"), q(&mut v, "b"));
    let yes = v.intern(Namespace::Answer, "yes").unwrap();
    let no = v.intern(Namespace::Answer, "no").unwrap();
    let p = FilterParams::default();

    let boundary = filter_rules(&[test_rule(&v, &[a], yes, 100, 29), test_rule(&v, &[b], yes, 100, 30)], &p).unwrap();
    ensure(boundary.len() == 1 && boundary.rule(0).antecedent == [b], || "0.29/0.30 boundary".into())?;

    let dedup = filter_rules(&[test_rule(&v, &[is, there], yes, 10, 7), test_rule(&v, &[is, there], no, 10, 3)], &p).unwrap();
    ensure(dedup.len() == 1 && dedup.rule(0).consequent == yes, || "yes/no antecedent dedup".into())?;

    let sup = filter_rules(
        &[test_rule(&v, &[is, there], yes, 10, 7), test_rule(&v, &[is, there, cat], yes, 10, 6)],
        &p,
    )
    .unwrap();
    ensure(sup.len() == 1 && sup.rule(0).antecedent == [is, there], || "{is,there,cat} superset removal".into())
}

fn c3_filter_invariants() -> Outcome {
    filter_examples()?;
    let mut v = Vocabulary::new();
    let items: Vec<u32> = (0..6).map(|i| v.intern(Namespace::QuestionWord, &format!("w{i}")).unwrap()).collect();
    let answers: Vec<u32> = (0..3).map(|i| v.intern(Namespace::Answer, &format!("a{i}")).unwrap()).collect();
    let gt = |x: &Rule, y: &Rule| x.stats.cmp_confidence(&y.stats).is_gt();
    let mut runner = runner(3);
    let rule = (1u32..64, 0usize..3, 1u32..=20, 0u32..=20);
    for case in 0..150 {
        let raw = draw(&mut runner, &proptest::collection::vec(rule.clone(), 0..40));
        let mut seen = BTreeSet::new();
        let pool: Vec<Rule> = raw
            .into_iter()
            .map(|(mask, a, s, c)| {
                let ante: Vec<u32> = (0..6).filter(|b| mask >> b & 1 == 1).map(|b| items[b]).collect();
                test_rule(&v, &ante, answers[a], s, c.min(s))
            })
            .filter(|r| seen.insert((r.antecedent.clone(), r.consequent)))
            .collect();
        let p = FilterParams {
            min_confidence: [0.0, 0.3, 0.5][case % 3],
            superset_prune_on_equal: true,
        };
        let once = filter_rules(&pool, &p).unwrap();
        let kept = once.rules();
        let antecedents: BTreeSet<&[u32]> = kept.iter().map(|r| r.antecedent.as_slice()).collect();
        ensure(antecedents.len() == kept.len(), || format!("pool {case}: duplicate antecedent"))?;
        for r in kept {
            for s in kept {
                if s.consequent == r.consequent && s.antecedent.len() < r.antecedent.len() && subset_of(&s.antecedent, &r.antecedent) {
                    ensure(gt(r, s), || format!("pool {case}: superset not strictly more confident"))?;
                }
            }
        }
        let twice = filter_rules(kept, &p).unwrap();
        ensure(twice.rules() == kept, || format!("pool {case}: not idempotent"))?;
    }
    Ok("150 pools and 3 worked examples".into())
}

fn scan_labels(rules: &[Rule], d: &Dataset) -> Vec<SplitLabel> {
    d.transactions()
        .iter()
        .map(|tx| {
            let hit: Vec<&Rule> = rules.iter().filter(|r| subset_of(&r.antecedent, tx.items())).collect();
            if hit.is_empty() {
                SplitLabel::Unmatched
            } else if hit.iter().any(|r| tx.answer() == Some(r.consequent)) {
                SplitLabel::Easy
            } else {
                SplitLabel::CounterExample
            }
        })
        .collect()
}

/// Rules mined on train, rebound by text into the validation vocabulary.
fn rebind(rules: &[Rule], from: &Vocabulary, to: &Vocabulary) -> Vec<Rule> {
    rules
        .iter()
        .filter_map(|r| {
            let ante: Option<Vec<u32>> = r.antecedent.iter().map(|&t| to.get(from.namespace(t), from.text(t))).collect();
            let answer = to.get(Namespace::Answer, from.text(r.consequent))?;
            Some(Rule::new(ante?, answer, r.stats, to).unwrap())
        })
        .collect()
}

fn c4_partition() -> Outcome {
    let mut examples = 0;
    for seed in 0..20 {
        let data = generate_synthetic(&small_synth(seed, 1 + seed as usize % 4)).unwrap();
        let rules = mine_rules(&data.train, 8, 3, 0.3);
        let rules = rebind(&rules, data.train.vocabulary(), data.val.vocabulary());
        let set = vqace_core::RuleSet::new(rules, Default::default());
        let split = split_examples(&set, &data.val, CorrectnessMode::ExactMatch).unwrap();
        let counts = split.counts();
        ensure(counts.iter().sum::<usize>() == data.val.len(), || format!("seed {seed}: {counts:?} does not cover val"))?;
        ensure(split.labels() == scan_labels(set.rules(), &data.val).as_slice(), || {
            format!("seed {seed}: labels differ from scan")
        })?;
        examples += data.val.len();
    }
    Ok(format!("20 validation sets, {examples} examples"))
}

fn c5_zero_on_counterexamples() -> Outcome {
    let mut runner = runner(5);
    let mut ce_total = 0;
    for case in 0..60u64 {
        let (train, val) = if case % 2 == 0 {
            let d = generate_synthetic(&small_synth(100 + case, 1 + case as usize % 3)).unwrap();
            (d.train, d.val)
        } else {
            let d = random_dataset(&mut runner);
            (d.clone(), d)
        };
        let rules = vqace_core::RuleSet::new(mine_rules(&train, 1 + case as u32 % 4, 3, 0.3), Default::default());
        let vote = if case % 4 < 2 { VoteRules::BestPerExample } else { VoteRules::Full };
        let Ok(c) = build_classifier(&rules, &train, CorrectnessMode::ExactMatch, vote) else {
            // No answered training example, hence no fallback.
            continue;
        };
        let fallback = train.vocabulary().text(c.fallback_answer()).to_string();
        let voting = rebind(c.rules().rules(), train.vocabulary(), val.vocabulary());
        let Some(placeholder) = val.vocabulary().iter().position(|t| t.namespace == Namespace::Answer) else {
            continue;
        };
        let c = ShortcutClassifier::new(vqace_core::RuleSet::new(voting, Default::default()), placeholder as u32);
        let split = split_examples(c.rules(), &val, CorrectnessMode::ExactMatch).unwrap();
        let preds: BTreeMap<String, String> = val
            .transactions()
            .iter()
            .map(|tx| {
                let p = c.predict(tx, val.vocabulary());
                let text = if p.matched { val.vocabulary().text(p.answer).to_string() } else { fallback.clone() };
                (tx.example_id().to_string(), text)
            })
            .collect();
        let report = evaluate_predictions(&preds, &val, &split, CorrectnessMode::ExactMatch, MissingPredictions::Error, None).unwrap();
        let ce = report.subset(SplitLabel::CounterExample);
        let shown = ce.accuracy().map(|a| format!("{a:.2}"));
        ensure(ce.score_sum == 0.0 && shown.as_deref().is_none_or(|s| s == "0.00"), || {
            format!("case {case}: counterexample accuracy {shown:?}")
        })?;
        ce_total += ce.count;
    }
    Ok(format!("60 configurations, {ce_total} counterexamples, all scored 0.00"))
}

fn c6_planted_recovery() -> Outcome {
    let confidences = [0.5, 0.8, 1.0];
    let planted: Vec<PlantedRule> = (0..10)
        .map(|i| {
            let mut antecedent = vec![(Namespace::QuestionWord, format!("pq{i}"))];
            if i % 2 == 1 {
                antecedent.push((Namespace::VisualLabel, format!("pv{i}")));
            }
            PlantedRule {
                antecedent,
                consequent: format!("pa{}", i % 3),
                target_confidence: confidences[i % 3],
                n_matching: 500,
            }
        })
        .collect();
    let spec = SyntheticSpec {
        n_train: 8000,
        n_val: 2000,
        planted,
        seed: 6,
        ..SyntheticSpec::default()
    };
    let data = generate_synthetic(&spec).unwrap();
    let train = &data.train;
    let rules = mine_rules(train, 200, 3, 0.3);
    let v = train.vocabulary();
    for (p, truth) in spec.planted.iter().zip(&data.ground_truth) {
        let ante: Vec<u32> = p.antecedent.iter().map(|(ns, t)| v.get(*ns, t).unwrap()).collect();
        let answer = v.get(Namespace::Answer, &p.consequent).unwrap();
        let hit = rules
            .iter()
            .find(|r| r.consequent == answer && subset_of(&r.antecedent, &ante))
            .ok_or_else(|| format!("{:?} => {} not recovered", p.antecedent, p.consequent))?;
        ensure((hit.confidence() - p.target_confidence).abs() <= 0.05, || {
            format!("{:?}: confidence {} vs {}", p.antecedent, hit.confidence(), p.target_confidence)
        })?;
        ensure(hit.support() == 500 && truth.train.support == 500, || {
            format!("{:?}: support {}", p.antecedent, hit.support())
        })?;
    }
    Ok(format!("10/10 planted rules recovered from {} filtered rules", rules.len()))
}

fn snow_fixture(n: u32, correct: u32, prefix: &str) -> (Dataset, Rule) {
    let mut v = Vocabulary::new();
    let words: Vec<u32> = ["what", "color", "is", "snow"]
        .iter()
        .map(|w| v.intern(Namespace::QuestionWord, w).unwrap())
        .collect();
    let the = v.intern(Namespace::QuestionWord, "the").unwrap();
    let white = v.intern(Namespace::Answer, "white").unwrap();
    let gray = v.intern(Namespace::Answer, "gray").unwrap();
    let mut txs = Vec::new();
    for i in 0..n {
        let mut items = words.clone();
        items.push(the);
        let answer = if i < correct { white } else { gray };
        txs.push(Transaction::new(format!("{prefix}{i}"), items, Some(answer), &v).unwrap());
    }
    // Non-matching filler.
    for i in 0..20 {
        txs.push(Transaction::new(format!("{prefix}x{i}"), vec![words[0], words[1]], Some(gray), &v).unwrap());
    }
    let rule = Rule::new(words, white, RuleStats::new(0, 0), &v).unwrap();
    (Dataset::new(v, txs).unwrap(), rule)
}

fn c7_snow_fixture() -> Outcome {
    let check = |d: &Dataset, rule: &Rule, pct: &str, support: u32| -> Result<String, String> {
        let scored = vqace_core::rules::score_rules(std::slice::from_ref(rule), d.vocabulary(), d, CorrectnessMode::ExactMatch).unwrap();
        let s = scored[0].stats;
        let got = format!("{:.2}", 100.0 * s.confidence().unwrap_or(0.0));
        ensure(got == pct && s.support == support, || {
            format!("got {got}% over {} ({}/{}), want {pct}% over {support}", s.support, s.correct, s.support)
        })?;
        Ok(format!("{got}%/{}", s.support))
    };
    // Train: 95 matches. The closest count to 90.62% is 86 (90.53%); no
    // integer count over 95 rounds to 90.62.
    let (train, rule) = snow_fixture(95, (0.9062f64 * 95.0).round() as u32, "t");
    let (val, vrule) = snow_fixture(92, 88, "v");
    let v = check(&val, &vrule, "95.65", 92);
    let t = check(&train, &rule, "90.62", 95);
    match (t, v) {
        (Ok(t), Ok(v)) => Ok(format!("train {t}, val {v}")),
        (t, v) => Err(format!("train: {}; val: {}", t.unwrap_or_else(|e| e), v.unwrap_or_else(|e| e))),
    }
}

fn vqace(args: &[&str], dir: &Path, threads: usize) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_vqace"))
        .args(args)
        .arg("--threads")
        .arg(threads.to_string())
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("vqace {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))
    })
}

/// Digest of every output artifact except run manifests.
fn pipeline_digests(seed: u64, threads: usize) -> Result<BTreeMap<String, String>, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let spec = r#"{"n_train": 3000, "n_val": 1000, "n_words": 80, "n_labels": 40, "n_answers": 20,
        "annotators": true,
        "planted": [
            {"antecedent": ["q:zebra", "v:stripe"], "consequent": "striped", "target_confidence": 0.8, "n_matching": 200},
            {"antecedent": ["q:sport"], "consequent": "tennis", "target_confidence": 0.6, "n_matching": 150}
        ]}"#;
    std::fs::write(dir.join("spec.json"), spec).map_err(|e| e.to_string())?;
    let seed = seed.to_string();
    let steps: Vec<Vec<&str>> = vec![
        vec!["synth", "--spec", "spec.json", "--seed", &seed, "-o", "syn"],
        vec!["ingest", "jsonl", "-i", "syn/train.jsonl", "-o", "train.vqds"],
        vec!["ingest", "jsonl", "-i", "syn/val.jsonl", "-o", "val.vqds"],
        vec!["mine", "-i", "train.vqds", "--min-support", "5", "--max-len", "3", "-o", "items.jsonl"],
        vec!["rules", "-i", "items.jsonl", "-d", "train.vqds", "-o", "rules.jsonl"],
        vec!["rules", "-i", "items.jsonl", "-d", "train.vqds", "--mode", "soft", "-o", "rules_soft.jsonl"],
        vec!["split", "--rules", "rules.jsonl", "-d", "val.vqds", "-o", "split.json"],
        vec!["classify", "--rules", "rules.jsonl", "--train", "train.vqds", "-d", "val.vqds", "--save-rules", "voting.jsonl", "-o", "preds.jsonl"],
        vec!["evaluate", "--predictions", "shortcut=preds.jsonl", "--split", "split.json", "-d", "val.vqds", "--format", "json", "-o", "eval.json"],
        vec!["correlate", "--rules", "rules.jsonl", "--predictions", "preds.jsonl", "-d", "val.vqds", "--format", "json", "-o", "corr.json"],
    ];
    for step in &steps {
        vqace(step, dir, threads)?;
    }
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(p) = stack.pop() {
        for entry in std::fs::read_dir(&p).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            let name = path.strip_prefix(dir).unwrap().display().to_string();
            if path.is_dir() {
                stack.push(path);
            } else if !name.ends_with("manifest.json") {
                out.insert(name, file_digest(&path).map_err(|e| e.to_string())?);
            }
        }
    }
    Ok(out)
}

fn c8_determinism() -> Outcome {
    let mut files = 0;
    for seed in 0..10 {
        let one = pipeline_digests(seed, 1)?;
        let eight = pipeline_digests(seed, 8)?;
        ensure(one == eight, || {
            let differing: Vec<&String> = one.keys().filter(|k| one.get(*k) != eight.get(*k)).collect();
            format!("seed {seed}: {differing:?} differ")
        })?;
        files += one.len();
    }
    Ok(format!("10 seeds, {files} artifacts identical"))
}

fn peak_rss_kib() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

fn c9_performance() -> Outcome {
    let spec = SyntheticSpec {
        n_train: 100_000,
        n_val: 1,
        n_words: 1200,
        n_labels: 700,
        n_answers: 100,
        seed: 9,
        ..SyntheticSpec::default()
    };
    let data = generate_synthetic(&spec).unwrap();
    let vocab = data.train.vocabulary().len();
    ensure(vocab == 2000, || format!("vocabulary has {vocab} tokens"))?;
    let start = Instant::now();
    let mined = mine_frequent_itemsets(&data.train, &MineParams::new(MinSupport::Fraction(1e-4), 4)).unwrap();
    let took = start.elapsed();
    // High-water mark of the whole process, so an upper bound for mining.
    let rss = peak_rss_kib().ok_or("no /proc/self/status")?;
    ensure(took < Duration::from_secs(60), || format!("mining took {took:?}"))?;
    ensure(rss < 4 * 1024 * 1024, || format!("peak resident {rss} KiB"))?;
    Ok(format!("{} itemsets in {took:.2?}, peak resident {} MiB", mined.len(), rss / 1024))
}

fn c10_agreement() -> Outcome {
    let mut v = Vocabulary::new();
    let what = v.intern(Namespace::QuestionWord, "what").unwrap();
    let sport = v.intern(Namespace::QuestionWord, "sport").unwrap();
    let tennis = v.intern(Namespace::Answer, "tennis").unwrap();
    let txs: Vec<Transaction> = (0..5)
        .map(|i| Transaction::new(format!("m{i}"), vec![what, sport], Some(tennis), &v).unwrap())
        .chain((0..3).map(|i| Transaction::new(format!("u{i}"), vec![what], Some(tennis), &v).unwrap()))
        .collect();
    let d = Dataset::new(v.clone(), txs).unwrap();
    let rule = test_rule(&v, &[what, sport], tennis, 5, 5);
    for k in [0usize, 4, 5] {
        // Unmatched examples predict the consequent too; they must not count.
        let preds: BTreeMap<String, String> = d
            .transactions()
            .iter()
            .enumerate()
            .map(|(i, tx)| {
                let agree = i >= 5 || i < k;
                (tx.example_id().to_string(), if agree { "tennis" } else { "baseball" }.to_string())
            })
            .collect();
        let a = rule_model_agreement(&rule, &preds, &d);
        ensure(a.agreeing == k && a.matched == 5 && a.rate() == Some(k as f64 / 5.0), || {
            format!("k={k}: got {}/{}", a.agreeing, a.matched)
        })?;
    }
    Ok("0/5, 4/5, 5/5".into())
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("miner equals brute-force oracle", c1_miner_equals_oracle),
        ("anti-monotonicity", c2_anti_monotone),
        ("filter invariants", c3_filter_invariants),
        ("partition invariant", c4_partition),
        ("classifier scores 0 on counterexamples", c5_zero_on_counterexamples),
        ("planted shortcut recovery", c6_planted_recovery),
        ("snow fixture counts", c7_snow_fixture),
        ("thread-count determinism", c8_determinism),
        ("desk-scale performance", c9_performance),
        ("agreement metric", c10_agreement),
    ];
    // `cargo test -- <filter>` style selection by criterion number.
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let result = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
