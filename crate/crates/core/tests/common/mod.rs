//! Brute-force oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

use apes::decode::{StepOutput, TokenId, ToyModel};
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures").join(name)
}

pub fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

/// Matched units by greedy one-to-one pairing of equal units.
fn greedy_match(cand: &[Vec<String>], reference: &[Vec<String>]) -> usize {
    let mut used = vec![false; reference.len()];
    let mut matched = 0;
    for unit in cand {
        if let Some(k) = (0..reference.len()).find(|&k| !used[k] && reference[k] == *unit) {
            used[k] = true;
            matched += 1;
        }
    }
    matched
}

fn lower(tokens: &[String]) -> Vec<String> {
    tokens.iter().map(|t| t.to_lowercase()).collect()
}

fn ngrams(tokens: &[String], n: usize) -> Vec<Vec<String>> {
    let t = lower(tokens);
    let mut out = Vec::new();
    let mut i = 0;
    while i + n <= t.len() {
        out.push(t[i..i + n].to_vec());
        i += 1;
    }
    out
}

fn su_units(tokens: &[String], skip: usize) -> Vec<Vec<String>> {
    let t = lower(tokens);
    let mut out: Vec<Vec<String>> = t.iter().map(|w| vec![w.clone()]).collect();
    for i in 0..t.len() {
        for j in 0..t.len() {
            if i < j && j - i <= skip {
                out.push(vec![t[i].clone(), t[j].clone()]);
            }
        }
    }
    out
}

/// (precision, recall, f1) from matched units and the two unit totals.
pub fn prf(matched: usize, cand_total: usize, ref_total: usize) -> (f64, f64, f64) {
    let p = if cand_total == 0 { 0.0 } else { matched as f64 / cand_total as f64 };
    let r = if ref_total == 0 { 0.0 } else { matched as f64 / ref_total as f64 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

pub fn brute_rouge_n(cand: &[String], reference: &[String], n: usize) -> (f64, f64, f64) {
    let c = ngrams(cand, n);
    let r = ngrams(reference, n);
    prf(greedy_match(&c, &r), c.len(), r.len())
}

pub fn brute_rouge_su(cand: &[String], reference: &[String], skip: usize) -> (f64, f64, f64) {
    let c = su_units(cand, skip);
    let r = su_units(reference, skip);
    prf(greedy_match(&c, &r), c.len(), r.len())
}

fn is_subsequence(needle: &[&String], hay: &[String]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|x| it.any(|y| y == *x))
}

/// Longest common subsequence by trying every subset of `a`.
pub fn brute_lcs(a: &[String], b: &[String]) -> usize {
    assert!(a.len() <= 16, "subset enumeration is exponential");
    let a = lower(a);
    let b = lower(b);
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let size = mask.count_ones() as usize;
        if size <= best {
            continue;
        }
        let pick: Vec<&String> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| &a[i]).collect();
        if is_subsequence(&pick, &b) {
            best = size;
        }
    }
    best
}

pub fn brute_rouge_l(cand: &[String], reference: &[String]) -> (f64, f64, f64) {
    prf(brute_lcs(cand, reference), cand.len(), reference.len())
}

/// Random text over a small vocabulary so that overlaps are common.
pub fn random_text<R: Rng>(rng: &mut R, max_len: usize) -> Vec<String> {
    const VOCAB: &[&str] = &["the", "The", "cat", "sat", "on", "mat", "a", "dog", "ran"];
    let len = rng.gen_range(0..=max_len);
    (0..len).map(|_| VOCAB[rng.gen_range(0..VOCAB.len())].to_string()).collect()
}

/// Pearson correlation from raw sums.
pub fn pearson_closed_form(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

fn random_distribution<R: Rng>(rng: &mut R, n: usize, allow_zero: bool) -> Vec<f64> {
    loop {
        let w: Vec<f64> = (0..n)
            .map(|_| if allow_zero && rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.05..1.0) })
            .collect();
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            return w.iter().map(|x| x / total).collect();
        }
    }
}

/// A random table model: every prefix of non-EOS tokens shorter than
/// `max_len` has its own next-token distribution (some tokens impossible)
/// and attention row. Token `vocab - 1` is EOS.
pub fn random_toy_model<R: Rng>(rng: &mut R, vocab: usize, source_len: usize, max_len: usize) -> ToyModel {
    let eos = vocab - 1;
    let mut steps = HashMap::new();
    let mut frontier: Vec<Vec<TokenId>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for prefix in frontier {
            let probs = random_distribution(rng, vocab, true);
            let attention = random_distribution(rng, source_len, false);
            let logp = probs.iter().map(|p| if *p == 0.0 { f64::NEG_INFINITY } else { p.ln() }).collect();
            for t in 0..vocab {
                if t != eos {
                    let mut p = prefix.clone();
                    p.push(t);
                    next.push(p);
                }
            }
            steps.insert(prefix, StepOutput { logp, attention });
        }
        frontier = next;
    }
    let names = (0..vocab)
        .map(|t| if t == eos { "</s>".to_string() } else { format!("w{t}") })
        .collect();
    let saliency = (0..source_len).map(|_| rng.gen_range(0.0..=1.0)).collect();
    ToyModel::new(names, eos, source_len, steps, Some(saliency)).expect("valid random model")
}

/// `tanh` attention computed one scalar at a time.
pub fn elementwise_attention(h: &[Vec<f64>], u: &[Vec<f64>], b: &[f64], v: &[f64]) -> Vec<(f64, f64)> {
    h.iter()
        .map(|row| {
            let mut e = 0.0;
            for k in 0..u.len() {
                let mut z = b[k];
                for (j, x) in row.iter().enumerate() {
                    z += u[k][j] * x;
                }
                e += v[k] * z.tanh();
            }
            (e, 1.0 / (1.0 + (-e).exp()))
        })
        .collect()
}
