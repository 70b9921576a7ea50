//! Utterance-level metrics: strategy metrics (EMR, LR, ALD), BLEU, ROUGE and
//! the multi-strategy rate.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{join_texts, StrategyResponse};
use crate::strategy::StrategyLabel;

/// Ordered strategy labels of one utterance. Empty only for failed predictions.
pub type StrategySeq = Vec<StrategyLabel>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("length mismatch: {left} predictions vs {right} references")]
    LengthMismatch { left: usize, right: usize },
    #[error("metric over an empty set")]
    Empty,
    #[error("levenshtein ratio of two empty sequences is undefined")]
    BothEmpty,
    #[error("unsupported n-gram order {0}")]
    Order(usize),
}

/// Unit-cost edit distance.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Levenshtein ratio `1 - lev(a, b) / max(|a|, |b|)`.
pub fn lr<T: PartialEq>(a: &[T], b: &[T]) -> Result<f64, MetricError> {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return Err(MetricError::BothEmpty);
    }
    Ok(1.0 - levenshtein(a, b) as f64 / longest as f64)
}

fn check_lengths(left: usize, right: usize) -> Result<(), MetricError> {
    if left != right {
        return Err(MetricError::LengthMismatch { left, right });
    }
    if left == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Exact match rate, as a percentage.
pub fn emr(preds: &[StrategySeq], refs: &[StrategySeq]) -> Result<f64, MetricError> {
    check_lengths(preds.len(), refs.len())?;
    let hits = preds.iter().zip(refs).filter(|(p, r)| !p.is_empty() && p == r).count();
    Ok(100.0 * hits as f64 / preds.len() as f64)
}

/// Mean Levenshtein ratio, as a percentage. Failed predictions score 0.
pub fn mean_lr(preds: &[StrategySeq], refs: &[StrategySeq]) -> Result<f64, MetricError> {
    check_lengths(preds.len(), refs.len())?;
    let mut total = 0.0;
    for (p, r) in preds.iter().zip(refs) {
        total += lr(p, r)?;
    }
    Ok(100.0 * total / preds.len() as f64)
}

/// Mean absolute difference in whitespace token counts.
pub fn ald<S: AsRef<str>>(pred_texts: &[S], ref_texts: &[S]) -> Result<f64, MetricError> {
    check_lengths(pred_texts.len(), ref_texts.len())?;
    let total: usize = pred_texts
        .iter()
        .zip(ref_texts)
        .map(|(p, r)| p.as_ref().split_whitespace().count().abs_diff(r.as_ref().split_whitespace().count()))
        .sum();
    Ok(total as f64 / pred_texts.len() as f64)
}

/// Percentage of sequences with two or more strategies.
pub fn multi_strategy_rate(preds: &[StrategySeq]) -> Result<f64, MetricError> {
    if preds.is_empty() {
        return Err(MetricError::Empty);
    }
    let multi = preds.iter().filter(|p| p.len() >= 2).count();
    Ok(100.0 * multi as f64 / preds.len() as f64)
}

const SPLIT_PUNCTUATION: [char; 6] = ['.', ',', '!', '?', ';', ':'];

/// Lowercases, splits on whitespace, and separates trailing punctuation
/// (`. , ! ? ; :`) into tokens of their own.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut tokens = Vec::new();
    for word in lower.split_whitespace() {
        let stem = word.trim_end_matches(SPLIT_PUNCTUATION);
        if !stem.is_empty() {
            tokens.push(stem.to_string());
        }
        tokens.extend(word[stem.len()..].chars().map(|c| c.to_string()));
    }
    tokens
}

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts = BTreeMap::new();
    if n > 0 && tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and the candidate n-gram total.
fn clipped_matches(pred: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let ref_counts = ngram_counts(reference, n);
    let pred_counts = ngram_counts(pred, n);
    let matched = pred_counts
        .iter()
        .map(|(gram, c)| (*c).min(ref_counts.get(gram).copied().unwrap_or(0)))
        .sum();
    (matched, pred.len().saturating_sub(n - 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BleuLevel {
    #[default]
    Corpus,
    Sentence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BleuOptions {
    pub level: BleuLevel,
    /// Add-one smoothing of precisions above order 1.
    pub smoothing: bool,
}

fn bleu_from_stats(matches: &[usize], totals: &[usize], cand_len: usize, ref_len: usize, smoothing: bool) -> f64 {
    if cand_len == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for (k, (&m, &t)) in matches.iter().zip(totals).enumerate() {
        let (m, t) = if smoothing && k > 0 { (m + 1, t + 1) } else { (m, t) };
        if m == 0 || t == 0 {
            return 0.0;
        }
        log_sum += libm::log(m as f64 / t as f64);
    }
    let bp = if cand_len < ref_len {
        libm::exp(1.0 - ref_len as f64 / cand_len as f64)
    } else {
        1.0
    };
    bp * libm::exp(log_sum / matches.len() as f64)
}

fn check_order(n: usize) -> Result<(), MetricError> {
    if n == 0 || n > 4 {
        return Err(MetricError::Order(n));
    }
    Ok(())
}

/// Corpus BLEU-n with brevity penalty and no smoothing, as a percentage.
pub fn bleu<S: AsRef<str>>(preds: &[S], refs: &[S], n: usize) -> Result<f64, MetricError> {
    bleu_with(preds, refs, n, BleuOptions::default())
}

pub fn bleu_with<S: AsRef<str>>(preds: &[S], refs: &[S], n: usize, opts: BleuOptions) -> Result<f64, MetricError> {
    check_lengths(preds.len(), refs.len())?;
    check_order(n)?;
    let pairs: Vec<(Vec<String>, Vec<String>)> = preds
        .iter()
        .zip(refs)
        .map(|(p, r)| (tokenize(p.as_ref()), tokenize(r.as_ref())))
        .collect();
    let stats = |p: &[String], r: &[String]| {
        let (m, t): (Vec<usize>, Vec<usize>) = (1..=n).map(|k| clipped_matches(p, r, k)).unzip();
        (m, t)
    };
    let score = match opts.level {
        BleuLevel::Corpus => {
            let mut matches = vec![0; n];
            let mut totals = vec![0; n];
            let (mut c, mut r) = (0, 0);
            for (p, rf) in &pairs {
                let (m, t) = stats(p, rf);
                for k in 0..n {
                    matches[k] += m[k];
                    totals[k] += t[k];
                }
                c += p.len();
                r += rf.len();
            }
            bleu_from_stats(&matches, &totals, c, r, opts.smoothing)
        }
        BleuLevel::Sentence => {
            let sum: f64 = pairs
                .iter()
                .map(|(p, rf)| {
                    let (m, t) = stats(p, rf);
                    bleu_from_stats(&m, &t, p.len(), rf.len(), opts.smoothing)
                })
                .sum();
            sum / pairs.len() as f64
        }
    };
    Ok(100.0 * score)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RougeVariant {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "L")]
    L,
}

fn f1(overlap: usize, pred_total: usize, ref_total: usize) -> f64 {
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / pred_total as f64;
    let r = overlap as f64 / ref_total as f64;
    2.0 * p * r / (p + r)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn rouge_pair(pred: &[String], reference: &[String], variant: RougeVariant) -> f64 {
    let (overlap, pred_total, ref_total) = match variant {
        RougeVariant::One | RougeVariant::Two => {
            let n = if variant == RougeVariant::One { 1 } else { 2 };
            let (m, t) = clipped_matches(pred, reference, n);
            (m, t, reference.len().saturating_sub(n - 1))
        }
        RougeVariant::L => (lcs_len(pred, reference), pred.len(), reference.len()),
    };
    if pred_total == 0 && ref_total == 0 {
        return if pred == reference { 1.0 } else { 0.0 };
    }
    f1(overlap, pred_total, ref_total)
}

/// Mean per-pair ROUGE F1, as a percentage.
pub fn rouge<S: AsRef<str>>(preds: &[S], refs: &[S], variant: RougeVariant) -> Result<f64, MetricError> {
    check_lengths(preds.len(), refs.len())?;
    let sum: f64 = preds
        .iter()
        .zip(refs)
        .map(|(p, r)| rouge_pair(&tokenize(p.as_ref()), &tokenize(r.as_ref()), variant))
        .sum();
    Ok(100.0 * sum / preds.len() as f64)
}

/// One side of an evaluated pair. A failed prediction has no strategies and empty text.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Utterance {
    pub strategies: StrategySeq,
    pub text: String,
}

impl Utterance {
    pub fn from_pairs(pairs: &[StrategyResponse]) -> Utterance {
        Utterance {
            strategies: pairs.iter().map(|p| p.strategy).collect(),
            text: join_texts(pairs),
        }
    }

    pub fn failed() -> Utterance {
        Utterance::default()
    }

    pub fn is_failed(&self) -> bool {
        self.strategies.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BleuScores {
    #[serde(rename = "1")]
    pub b1: f64,
    #[serde(rename = "2")]
    pub b2: f64,
    #[serde(rename = "4")]
    pub b4: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScores {
    #[serde(rename = "1")]
    pub r1: f64,
    #[serde(rename = "2")]
    pub r2: f64,
    #[serde(rename = "L")]
    pub rl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub emr: f64,
    pub lr: f64,
    pub ald: f64,
    pub bleu: BleuScores,
    pub rouge: RougeScores,
    pub multi_strategy_rate: f64,
    pub n: usize,
    /// Count of predictions that failed to parse (scored as empty).
    pub failed: usize,
    /// Externally supplied embedding-based score, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bertscore: Option<f64>,
}

/// Computes every utterance-level metric over aligned predictions and references.
pub fn metric_report(preds: &[Utterance], refs: &[Utterance], bleu_opts: BleuOptions) -> Result<MetricReport, MetricError> {
    check_lengths(preds.len(), refs.len())?;
    let pred_seqs: Vec<StrategySeq> = preds.iter().map(|u| u.strategies.clone()).collect();
    let ref_seqs: Vec<StrategySeq> = refs.iter().map(|u| u.strategies.clone()).collect();
    let pred_texts: Vec<&str> = preds.iter().map(|u| u.text.as_str()).collect();
    let ref_texts: Vec<&str> = refs.iter().map(|u| u.text.as_str()).collect();
    Ok(MetricReport {
        emr: emr(&pred_seqs, &ref_seqs)?,
        lr: mean_lr(&pred_seqs, &ref_seqs)?,
        ald: ald(&pred_texts, &ref_texts)?,
        bleu: BleuScores {
            b1: bleu_with(&pred_texts, &ref_texts, 1, bleu_opts)?,
            b2: bleu_with(&pred_texts, &ref_texts, 2, bleu_opts)?,
            b4: bleu_with(&pred_texts, &ref_texts, 4, bleu_opts)?,
        },
        rouge: RougeScores {
            r1: rouge(&pred_texts, &ref_texts, RougeVariant::One)?,
            r2: rouge(&pred_texts, &ref_texts, RougeVariant::Two)?,
            rl: rouge(&pred_texts, &ref_texts, RougeVariant::L)?,
        },
        multi_strategy_rate: multi_strategy_rate(&pred_seqs)?,
        n: preds.len(),
        failed: preds.iter().filter(|u| u.is_failed()).count(),
        bertscore: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use StrategyLabel::{AffirmationAndReassurance as AR, Information as Info, Question as Q};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        libm::fabs(a - b) <= tol
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein(&[Q], &[Q]), 0);
        assert_eq!(levenshtein(&[Q, AR, Q], &[Q, AR]), 1);
        assert_eq!(levenshtein::<StrategyLabel>(&[], &[Q, Info]), 2);
        assert_eq!(levenshtein(&[Q, Info], &[Info, Q]), 2);
    }

    #[test]
    fn lr_examples() {
        assert_eq!(lr(&[Q, AR], &[Q, AR]), Ok(1.0));
        assert_eq!(lr(&[Q], &[Info]), Ok(0.0));
        assert!(close(lr(&[Q, AR, Q], &[Q, AR]).unwrap(), 2.0 / 3.0, 1e-9));
        assert_eq!(lr::<StrategyLabel>(&[], &[]), Err(MetricError::BothEmpty));
        assert_eq!(lr(&[], &[Q]), Ok(0.0));
    }

    #[test]
    fn emr_examples() {
        let refs = vec![vec![Q], vec![AR]];
        assert_eq!(emr(&refs, &refs), Ok(100.0));
        assert_eq!(emr(&[vec![Q], vec![AR, Q]], &refs), Ok(50.0));
        assert_eq!(emr(&[vec![], vec![]], &refs), Ok(0.0));
        assert_eq!(
            emr(&[vec![Q]], &refs),
            Err(MetricError::LengthMismatch { left: 1, right: 2 })
        );
    }

    #[test]
    fn ald_examples() {
        let ten = "w ".repeat(10);
        let twelve = "w ".repeat(12);
        let eight = "w ".repeat(8);
        assert_eq!(ald(&[ten.as_str(), eight.as_str()], &[twelve.as_str(), eight.as_str()]), Ok(1.0));
        assert_eq!(ald(&["a b"], &["a b"]), Ok(0.0));
        assert_eq!(ald(&["w ".repeat(40)], &["w ".repeat(20)]), Ok(20.0));
    }

    #[test]
    fn tokenizer_splits_trailing_punctuation() {
        assert_eq!(tokenize("Hello, World!  How are you?"), ["hello", ",", "world", "!", "how", "are", "you", "?"]);
        assert_eq!(tokenize("wait..."), ["wait", ".", ".", "."]);
        assert_eq!(tokenize("e.g. it's"), ["e.g", ".", "it's"]);
        assert!(tokenize("  ").is_empty());
    }

    #[test]
    fn bleu_worked_examples() {
        assert!(close(bleu(&["a b c"], &["a b d"], 1).unwrap(), 66.6667, 0.01));
        assert!(close(bleu(&["a b c"], &["a b d"], 2).unwrap(), 57.735, 0.01));
        assert!(close(bleu(&["the cat sat"], &["the cat sat"], 4).unwrap(), 0.0, 1e-12));
        let s = "i am sorry to hear that you feel this way";
        assert!(close(bleu(&[s], &[s], 4).unwrap(), 100.0, 1e-9));
        assert_eq!(bleu::<&str>(&[], &[], 1), Err(MetricError::Empty));
    }

    #[test]
    fn bleu_brevity_penalty() {
        // p1 = 1, c = 2, r = 4.
        let got = bleu(&["a b"], &["a b c d"], 1).unwrap();
        assert!(close(got, 100.0 * libm::exp(-1.0), 1e-9));
    }

    #[test]
    fn smoothing_and_sentence_level() {
        let opts = BleuOptions {
            level: BleuLevel::Sentence,
            smoothing: true,
        };
        let got = bleu_with(&["a b c"], &["a b d"], 2, opts).unwrap();
        assert!(close(got, 100.0 * libm::sqrt(2.0 / 3.0 * 2.0 / 3.0), 1e-9));
        let corpus = bleu(&["a b c", "x y"], &["a b d", "x y"], 1).unwrap();
        assert!(close(corpus, 80.0, 1e-9));
        let sentence = bleu_with(&["a b c", "x y"], &["a b d", "x y"], 1, BleuOptions { level: BleuLevel::Sentence, smoothing: false }).unwrap();
        assert!(close(sentence, 100.0 * (2.0 / 3.0 + 1.0) / 2.0, 1e-9));
    }

    #[test]
    fn rouge_worked_examples() {
        assert!(close(rouge(&["a b c"], &["a c"], RougeVariant::L).unwrap(), 80.0, 0.01));
        assert!(close(rouge(&["a b c"], &["a c"], RougeVariant::One).unwrap(), 80.0, 0.01));
        assert_eq!(rouge(&["a b c"], &["a c"], RougeVariant::Two), Ok(0.0));
        assert_eq!(rouge(&["a b c"], &["a b c"], RougeVariant::Two), Ok(100.0));
        assert_eq!(rouge(&["a b"], &["c d"], RougeVariant::L), Ok(0.0));
        assert_eq!(rouge(&["ok"], &["ok"], RougeVariant::Two), Ok(100.0));
        assert_eq!(rouge(&[""], &["ok"], RougeVariant::L), Ok(0.0));
    }

    #[test]
    fn multi_strategy_rate_examples() {
        assert_eq!(multi_strategy_rate(&[vec![Q], vec![Q, AR]]), Ok(50.0));
        assert_eq!(multi_strategy_rate(&[vec![Q], vec![AR]]), Ok(0.0));
        assert_eq!(multi_strategy_rate(&[]), Err(MetricError::Empty));
    }

    #[test]
    fn report_counts_failures() {
        let r = Utterance {
            strategies: vec![Q],
            text: "how are you ?".into(),
        };
        let report = metric_report(&[r.clone(), Utterance::failed()], &[r.clone(), r], BleuOptions::default()).unwrap();
        assert_eq!(report.n, 2);
        assert_eq!(report.failed, 1);
        assert_eq!(report.emr, 50.0);
        assert_eq!(report.lr, 50.0);
        assert_eq!(report.ald, 2.0);
        assert_eq!(report.rouge.rl, 50.0);
    }
}
