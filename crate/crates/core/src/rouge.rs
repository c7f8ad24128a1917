//! ROUGE-N, ROUGE-L and ROUGE-SU over lowercased tokens.
//!
//! No stemming and no stopword removal. With several references the
//! per-reference scores are combined by [`MultiRef`].

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Precision, recall and F1 for one candidate against its references.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    pub const ZERO: RougeScore = RougeScore {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };

    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        RougeScore {
            precision,
            recall,
            f1,
        }
    }

    /// Score from a matched-unit count and the unit totals of each side.
    /// A side with no units gets 0 for its ratio.
    pub fn from_counts(overlap: usize, candidate_total: usize, reference_total: usize) -> Self {
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        Self::from_pr(
            ratio(overlap, candidate_total),
            ratio(overlap, reference_total),
        )
    }
}

/// Field-wise arithmetic mean; zero for an empty slice.
pub fn mean_score(scores: &[RougeScore]) -> RougeScore {
    if scores.is_empty() {
        return RougeScore::ZERO;
    }
    let n = scores.len() as f64;
    RougeScore {
        precision: scores.iter().map(|s| s.precision).sum::<f64>() / n,
        recall: scores.iter().map(|s| s.recall).sum::<f64>() / n,
        f1: scores.iter().map(|s| s.f1).sum::<f64>() / n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RougeVariant {
    N(usize),
    L,
    /// Skip-bigrams with at most `skip` positions between partners, plus unigrams.
    SU(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MultiRef {
    /// The reference with the highest F1 (first on ties), with its own P and R.
    #[default]
    Max,
    /// Field-wise mean over references.
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RougeConfig {
    pub variant: RougeVariant,
    pub multi_ref: MultiRef,
}

impl RougeConfig {
    pub fn new(variant: RougeVariant, multi_ref: MultiRef) -> Result<Self> {
        match variant {
            RougeVariant::N(0) => Err(Error::InvalidArgument("ROUGE-N needs n >= 1".into())),
            RougeVariant::SU(0) => Err(Error::InvalidArgument("ROUGE-SU needs skip >= 1".into())),
            _ => Ok(RougeConfig { variant, multi_ref }),
        }
    }

    pub fn score<T, R>(&self, candidate: &[T], references: &[R]) -> RougeScore
    where
        T: AsRef<str>,
        R: AsRef<[T]>,
    {
        let cand = lowered(candidate);
        let per_ref: Vec<RougeScore> = references
            .iter()
            .map(|r| {
                let r = lowered(r.as_ref());
                match self.variant {
                    RougeVariant::N(n) => single_ngram(&cand, &r, n),
                    RougeVariant::L => single_lcs(&cand, &r),
                    RougeVariant::SU(skip) => single_su(&cand, &r, skip),
                }
            })
            .collect();
        combine(&per_ref, self.multi_ref)
    }
}

fn combine(per_ref: &[RougeScore], strategy: MultiRef) -> RougeScore {
    match strategy {
        MultiRef::Max => per_ref
            .iter()
            .copied()
            .reduce(|best, s| if s.f1 > best.f1 { s } else { best })
            .unwrap_or(RougeScore::ZERO),
        MultiRef::Average => mean_score(per_ref),
    }
}

fn lowered<T: AsRef<str>>(tokens: &[T]) -> Vec<String> {
    tokens.iter().map(|t| t.as_ref().to_lowercase()).collect()
}

fn overlap_count<'a>(cand: &HashMap<Vec<&'a str>, usize>, refs: &HashMap<Vec<&'a str>, usize>) -> usize {
    cand.iter()
        .map(|(unit, &c)| c.min(refs.get(unit).copied().unwrap_or(0)))
        .sum()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts
                .entry(w.iter().map(String::as_str).collect())
                .or_insert(0) += 1;
        }
    }
    counts
}

fn single_ngram(cand: &[String], reference: &[String], n: usize) -> RougeScore {
    let c = ngram_counts(cand, n);
    let r = ngram_counts(reference, n);
    RougeScore::from_counts(
        overlap_count(&c, &r),
        c.values().sum(),
        r.values().sum(),
    )
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn single_lcs(cand: &[String], reference: &[String]) -> RougeScore {
    RougeScore::from_counts(lcs_len(cand, reference), cand.len(), reference.len())
}

/// Unigrams plus pairs `(t_i, t_j)` with `i < j <= i + skip`.
fn su_units(tokens: &[String], skip: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = ngram_counts(tokens, 1);
    for i in 0..tokens.len() {
        for j in (i + 1)..tokens.len().min(i + skip + 1) {
            *counts
                .entry(vec![tokens[i].as_str(), tokens[j].as_str()])
                .or_insert(0) += 1;
        }
    }
    counts
}

fn single_su(cand: &[String], reference: &[String], skip: usize) -> RougeScore {
    let c = su_units(cand, skip);
    let r = su_units(reference, skip);
    RougeScore::from_counts(
        overlap_count(&c, &r),
        c.values().sum(),
        r.values().sum(),
    )
}

/// Clipped n-gram overlap, best reference by F1.
pub fn rouge_n<T, R>(candidate: &[T], references: &[R], n: usize) -> RougeScore
where
    T: AsRef<str>,
    R: AsRef<[T]>,
{
    assert!(n >= 1, "ROUGE-N needs n >= 1");
    RougeConfig {
        variant: RougeVariant::N(n),
        multi_ref: MultiRef::Max,
    }
    .score(candidate, references)
}

/// Longest-common-subsequence score, best reference by F1.
pub fn rouge_l<T, R>(candidate: &[T], references: &[R]) -> RougeScore
where
    T: AsRef<str>,
    R: AsRef<[T]>,
{
    RougeConfig {
        variant: RougeVariant::L,
        multi_ref: MultiRef::Max,
    }
    .score(candidate, references)
}

/// Skip-bigram plus unigram score, best reference by F1.
pub fn rouge_su<T, R>(candidate: &[T], references: &[R], skip: usize) -> RougeScore
where
    T: AsRef<str>,
    R: AsRef<[T]>,
{
    assert!(skip >= 1, "ROUGE-SU needs skip >= 1");
    RougeConfig {
        variant: RougeVariant::SU(skip),
        multi_ref: MultiRef::Max,
    }
    .score(candidate, references)
}

/// Default skip distance for ROUGE-SU.
pub const DEFAULT_SKIP: usize = 4;

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn w(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identical_texts_score_one() {
        let x = w("the cat sat on the mat");
        let one = RougeScore::from_pr(1.0, 1.0);
        assert_eq!(rouge_n(&x, std::slice::from_ref(&x), 1), one);
        assert_eq!(rouge_n(&x, std::slice::from_ref(&x), 2), one);
        assert_eq!(rouge_l(&x, std::slice::from_ref(&x)), one);
        assert_eq!(rouge_su(&x, std::slice::from_ref(&x), 4), one);
    }

    #[test]
    fn unigram_subset() {
        let s = rouge_n(&w("the cat sat"), &[w("the cat sat on the mat")], 1);
        assert_abs_diff_eq!(s.precision, 1.0);
        assert_abs_diff_eq!(s.recall, 0.5);
        assert_abs_diff_eq!(s.f1, 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn clipping_limits_repeats() {
        let s = rouge_n(&w("the the the"), &[w("the cat")], 1);
        assert_abs_diff_eq!(s.precision, 1.0 / 3.0);
        assert_abs_diff_eq!(s.recall, 0.5);
    }

    #[test]
    fn lowercased_matching() {
        let s = rouge_n(&w("The CAT"), &[w("the cat")], 2);
        assert_eq!(s.f1, 1.0);
    }

    #[test]
    fn too_short_sides_contribute_nothing() {
        assert_eq!(rouge_n(&w("a"), &[w("a")], 2), RougeScore::ZERO);
        let s = rouge_n(&w("a b"), &[w("a")], 2);
        assert_eq!(s, RougeScore::ZERO);
    }

    #[test]
    fn lcs_examples() {
        let s = rouge_l(&w("a c b"), &[w("a b c")]);
        assert_abs_diff_eq!(s.precision, 2.0 / 3.0);
        assert_abs_diff_eq!(s.recall, 2.0 / 3.0);
        assert_abs_diff_eq!(s.f1, 2.0 / 3.0, epsilon = 1e-12);
        assert_eq!(rouge_l(&w("x y z"), &[w("a b c")]), RougeScore::ZERO);
        assert_eq!(rouge_l(&w(""), &[w("a b c")]), RougeScore::ZERO);
        assert_eq!(rouge_l(&w("a"), &[w("")]), RougeScore::ZERO);
    }

    #[test]
    fn su_examples() {
        let s = rouge_su(&w("a b"), &[w("b a")], 4);
        assert_abs_diff_eq!(s.precision, 2.0 / 3.0);
        assert_abs_diff_eq!(s.recall, 2.0 / 3.0);
        assert_abs_diff_eq!(s.f1, 2.0 / 3.0, epsilon = 1e-12);
        assert_eq!(rouge_su(&w(""), &[w("a b")], 4), RougeScore::ZERO);
    }

    #[test]
    fn su_respects_skip_distance() {
        // "a x y b": with skip=1 the pair (a, b) is too far apart
        let cand = w("a b");
        let reference = w("a x y b");
        let near = rouge_su(&cand, std::slice::from_ref(&reference), 1);
        let far = rouge_su(&cand, &[reference], 3);
        assert!(far.precision > near.precision);
        assert_abs_diff_eq!(far.precision, 1.0);
    }

    #[test]
    fn multi_reference_strategies() {
        let cand = w("a b c d");
        let refs = [w("a b"), w("a b c d e f g h")];
        // per ref: P=0.5,R=1 (F1 .6667) and P=1,R=0.5 (F1 .6667) -> tie keeps the first
        let best = rouge_n(&cand, &refs, 1);
        assert_abs_diff_eq!(best.precision, 0.5);
        let avg = RougeConfig::new(RougeVariant::N(1), MultiRef::Average)
            .unwrap()
            .score(&cand, &refs);
        assert_abs_diff_eq!(avg.precision, 0.75);
        assert_abs_diff_eq!(avg.recall, 0.75);
        assert_eq!(rouge_n(&cand, &Vec::<Vec<&str>>::new(), 1), RougeScore::ZERO);
    }

    #[test]
    fn config_validates() {
        assert!(RougeConfig::new(RougeVariant::N(0), MultiRef::Max).is_err());
        assert!(RougeConfig::new(RougeVariant::SU(0), MultiRef::Max).is_err());
        assert!(RougeConfig::new(RougeVariant::L, MultiRef::Average).is_ok());
    }

    #[test]
    fn mean_of_scores() {
        let m = mean_score(&[RougeScore::from_pr(1.0, 1.0), RougeScore::ZERO]);
        assert_abs_diff_eq!(m.f1, 0.5);
        assert_eq!(mean_score(&[]), RougeScore::ZERO);
    }
}
