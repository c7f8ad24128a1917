//! Beam search with length, coverage and entity penalties.
//!
//! A finished hypothesis `Y` for source `X` is scored as
//!
//! ```text
//! s(Y, X) = log P(Y|X) / lp(Y) - cp(X; Y) - ep(X; Y)
//! lp(Y)   = ((5 + |Y|) / 6)^alpha
//! cp(X;Y) = beta  * (-T_X + sum_i max(c_i, 1))
//! ep(X;Y) = gamma * sum_i max(a^e_i - c_i, 0)
//! ```
//!
//! where `c_i` is the attention mass accumulated on source position `i`
//! and `a^e` the per-position saliency. While the beam is expanding,
//! hypotheses are ranked by `log P - cp` at every step; `lp` and `ep` only
//! enter when the finished set is rescored.

mod toy;

pub use toy::ToyModel;

use std::cmp::Ordering;

use crate::error::{Error, Result};

pub type TokenId = usize;

/// Next-token distribution and attention row for one decoding step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// Log-probability per vocabulary entry; `-inf` marks impossible tokens.
    pub logp: Vec<f64>,
    /// Attention over source positions; non-negative, sums to 1.
    pub attention: Vec<f64>,
}

/// A conditional next-token model over a fixed source.
pub trait StepModel {
    fn vocab_size(&self) -> usize;
    fn eos(&self) -> TokenId;
    /// Number of source positions `T_X`.
    fn source_len(&self) -> usize;
    fn step(&self, prefix: &[TokenId]) -> StepOutput;
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub beam_width: usize,
    pub max_len: usize,
    pub block_repeated_trigrams: bool,
    /// Per-source saliency `a^e` in [0, 1]; required when `gamma > 0`.
    pub saliency: Option<Vec<f64>>,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            alpha: 0.9,
            beta: 0.5,
            gamma: 0.5,
            beam_width: 4,
            max_len: 100,
            block_repeated_trigrams: false,
            saliency: None,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self, source_len: usize) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be a finite value >= 0")));
            }
        }
        if self.beam_width == 0 {
            return Err(Error::InvalidArgument("beam width must be at least 1".into()));
        }
        if self.max_len == 0 {
            return Err(Error::InvalidArgument("max_len must be at least 1".into()));
        }
        match &self.saliency {
            Some(s) => {
                if s.len() != source_len {
                    return Err(Error::LengthMismatch {
                        what: "saliency vs source length",
                        left: s.len(),
                        right: source_len,
                    });
                }
                if s.iter().any(|x| !(0.0..=1.0).contains(x)) {
                    return Err(Error::InvalidArgument("saliency values must lie in [0, 1]".into()));
                }
            }
            None if self.gamma > 0.0 => {
                return Err(Error::InvalidArgument(
                    "gamma > 0 requires a saliency vector".into(),
                ))
            }
            None => {}
        }
        Ok(())
    }
}

/// Beam width that keeps every hypothesis: `vocab^max_len`, saturating.
pub fn full_width(vocab: usize, max_len: usize) -> usize {
    u32::try_from(max_len)
        .ok()
        .and_then(|l| vocab.checked_pow(l))
        .unwrap_or(usize::MAX)
}

pub fn length_penalty(len: usize, alpha: f64) -> f64 {
    ((5.0 + len as f64) / 6.0).powf(alpha)
}

pub fn coverage_penalty(coverage: &[f64], beta: f64) -> f64 {
    let clamped: f64 = coverage.iter().map(|&c| c.max(1.0)).sum();
    beta * (clamped - coverage.len() as f64)
}

pub fn entity_penalty(coverage: &[f64], saliency: &[f64], gamma: f64) -> Result<f64> {
    if coverage.len() != saliency.len() {
        return Err(Error::LengthMismatch {
            what: "coverage vs saliency",
            left: coverage.len(),
            right: saliency.len(),
        });
    }
    let unmet: f64 = saliency
        .iter()
        .zip(coverage)
        .map(|(&a, &c)| (a - c).max(0.0))
        .sum();
    Ok(gamma * unmet)
}

/// A partial or complete decoder output.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<TokenId>,
    /// Sum of step log-probabilities.
    pub logp: f64,
    /// Attention accumulated per source position.
    pub coverage: Vec<f64>,
    /// Ended with end-of-sequence or reached `max_len`.
    pub finished: bool,
}

impl Hypothesis {
    pub fn root(source_len: usize) -> Self {
        Hypothesis {
            tokens: Vec::new(),
            logp: 0.0,
            coverage: vec![0.0; source_len],
            finished: false,
        }
    }

    fn extend(&self, token: TokenId, logp: f64, attention: &[f64], eos: TokenId, max_len: usize) -> Self {
        let mut tokens = self.tokens.clone();
        tokens.push(token);
        let finished = token == eos || tokens.len() >= max_len;
        Hypothesis {
            tokens,
            logp: self.logp + logp,
            coverage: self
                .coverage
                .iter()
                .zip(attention)
                .map(|(c, a)| c + a)
                .collect(),
            finished,
        }
    }

    /// Whether appending `token` would repeat a trigram already present.
    pub fn creates_repeated_trigram(&self, token: TokenId) -> bool {
        let t = &self.tokens;
        let n = t.len();
        if n < 2 {
            return false;
        }
        let tri = [t[n - 2], t[n - 1], token];
        t.windows(3).any(|w| w == tri)
    }

    fn step_score(&self, beta: f64) -> f64 {
        self.logp - coverage_penalty(&self.coverage, beta)
    }
}

/// Components of a final score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreBreakdown {
    pub logp: f64,
    pub lp: f64,
    pub cp: f64,
    pub ep: f64,
    pub score: f64,
}

fn breakdown(h: &Hypothesis, cfg: &PenaltyConfig) -> Result<ScoreBreakdown> {
    let lp = length_penalty(h.tokens.len(), cfg.alpha);
    let cp = coverage_penalty(&h.coverage, cfg.beta);
    let ep = match &cfg.saliency {
        Some(s) => entity_penalty(&h.coverage, s, cfg.gamma)?,
        None if cfg.gamma > 0.0 => {
            return Err(Error::InvalidArgument(
                "gamma > 0 requires a saliency vector".into(),
            ))
        }
        None => 0.0,
    };
    Ok(ScoreBreakdown {
        logp: h.logp,
        lp,
        cp,
        ep,
        score: h.logp / lp - cp - ep,
    })
}

/// Itemized final score of a finished hypothesis.
pub fn score_breakdown(h: &Hypothesis, cfg: &PenaltyConfig) -> Result<ScoreBreakdown> {
    if !h.finished {
        return Err(Error::InvalidArgument("hypothesis is not finished".into()));
    }
    breakdown(h, cfg)
}

/// `logp / lp - cp - ep` for a finished hypothesis.
pub fn final_score(h: &Hypothesis, cfg: &PenaltyConfig) -> Result<f64> {
    score_breakdown(h, cfg).map(|b| b.score)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub tokens: Vec<TokenId>,
    pub score: f64,
    pub breakdown: ScoreBreakdown,
    /// False when no hypothesis could finish and the best partial one is returned.
    pub finished: bool,
}

fn checked_step(model: &dyn StepModel, prefix: &[TokenId]) -> Result<StepOutput> {
    let out = model.step(prefix);
    if out.logp.len() != model.vocab_size() {
        return Err(Error::InvalidModel(format!(
            "step returned {} log-probabilities for a vocabulary of {}",
            out.logp.len(),
            model.vocab_size()
        )));
    }
    if out.attention.len() != model.source_len() {
        return Err(Error::InvalidModel(format!(
            "step returned {} attention weights for {} source positions",
            out.attention.len(),
            model.source_len()
        )));
    }
    Ok(out)
}

fn expansions(
    model: &dyn StepModel,
    h: &Hypothesis,
    cfg: &PenaltyConfig,
) -> Result<Vec<Hypothesis>> {
    let out = checked_step(model, &h.tokens)?;
    let eos = model.eos();
    Ok(out
        .logp
        .iter()
        .enumerate()
        .filter(|(_, lp)| lp.is_finite())
        .filter(|&(tok, _)| !(cfg.block_repeated_trigrams && h.creates_repeated_trigram(tok)))
        .map(|(tok, &lp)| h.extend(tok, lp, &out.attention, eos, cfg.max_len))
        .collect())
}

/// Higher score first; equal scores by lexicographically smaller tokens.
fn rank(a_score: f64, a: &[TokenId], b_score: f64, b: &[TokenId]) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a.cmp(b))
}

fn pick_best(finished: Vec<Hypothesis>, cfg: &PenaltyConfig) -> Result<Option<DecodeResult>> {
    let mut best: Option<(Hypothesis, ScoreBreakdown)> = None;
    for h in finished {
        let b = breakdown(&h, cfg)?;
        let better = match &best {
            None => true,
            Some((bh, bb)) => rank(b.score, &h.tokens, bb.score, &bh.tokens) == Ordering::Less,
        };
        if better {
            best = Some((h, b));
        }
    }
    Ok(best.map(|(h, b)| DecodeResult {
        tokens: h.tokens,
        score: b.score,
        breakdown: b,
        finished: true,
    }))
}

/// Beam search. Finished hypotheses are set aside without taking beam
/// slots; once no live hypothesis remains, the finished set is rescored
/// with [`final_score`].
pub fn beam_search(model: &dyn StepModel, cfg: &PenaltyConfig) -> Result<DecodeResult> {
    cfg.validate(model.source_len())?;
    let mut beam = vec![Hypothesis::root(model.source_len())];
    let mut finished = Vec::new();
    let mut last_live = beam.clone();
    while !beam.is_empty() {
        let mut candidates = Vec::new();
        for h in &beam {
            candidates.extend(expansions(model, h, cfg)?);
        }
        let mut scored: Vec<(f64, Hypothesis)> = candidates
            .into_iter()
            .map(|h| (h.step_score(cfg.beta), h))
            .collect();
        scored.sort_by(|(sa, a), (sb, b)| rank(*sa, &a.tokens, *sb, &b.tokens));
        let mut next = Vec::with_capacity(cfg.beam_width);
        for (_, h) in scored {
            if next.len() == cfg.beam_width {
                break;
            }
            if h.finished {
                finished.push(h);
            } else {
                next.push(h);
            }
        }
        last_live = std::mem::replace(&mut beam, next);
    }

    if let Some(best) = pick_best(finished, cfg)? {
        return Ok(best);
    }
    // nothing could finish: fall back to the best partial hypothesis
    let h = last_live
        .into_iter()
        .min_by(|a, b| rank(a.step_score(cfg.beta), &a.tokens, b.step_score(cfg.beta), &b.tokens))
        .expect("the beam starts non-empty");
    let b = breakdown(&h, cfg)?;
    Ok(DecodeResult {
        tokens: h.tokens,
        score: b.score,
        breakdown: b,
        finished: false,
    })
}

/// Upper bound on `vocab^max_len` for [`exhaustive_search`].
pub const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

/// Enumerate every finished sequence and return the argmax of
/// [`final_score`] (lexicographically smallest on ties).
pub fn exhaustive_search(model: &dyn StepModel, cfg: &PenaltyConfig) -> Result<DecodeResult> {
    cfg.validate(model.source_len())?;
    let space = (model.vocab_size() as u128)
        .checked_pow(cfg.max_len.min(u32::MAX as usize) as u32)
        .unwrap_or(u128::MAX);
    if space > EXHAUSTIVE_LIMIT {
        return Err(Error::SearchSpaceTooLarge(space));
    }
    let mut stack = vec![Hypothesis::root(model.source_len())];
    let mut finished = Vec::new();
    while let Some(h) = stack.pop() {
        for next in expansions(model, &h, cfg)? {
            if next.finished {
                finished.push(next);
            } else {
                stack.push(next);
            }
        }
    }
    pick_best(finished, cfg)?
        .ok_or_else(|| Error::InvalidModel("no sequence can finish within max_len".into()))
}
