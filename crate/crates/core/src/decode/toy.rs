//! Table-driven step model loaded from JSON.
//!
//! ```json
//! {"vocab": ["a", "b", "</s>"], "eos": "</s>", "t_x": 2,
//!  "steps": {"": {"logp": {"a": -0.1, "b": -2.4}, "attn": [0.5, 0.5]},
//!            "a": {"logp": {"</s>": 0.0}, "attn": [1.0, 0.0]}},
//!  "saliency": [0.8, 0.2]}
//! ```
//!
//! Prefix keys are space-joined tokens (`""` is the empty prefix). A prefix
//! without an entry gets a uniform next-token distribution and uniform
//! attention; tokens missing from a listed `logp` map are impossible.
//! `saliency` is optional.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{StepModel, StepOutput, TokenId};
use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StepRecord {
    logp: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attn: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ToyModelFile {
    vocab: Vec<String>,
    eos: String,
    #[serde(default)]
    steps: BTreeMap<String, StepRecord>,
    t_x: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    saliency: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    vocab: Vec<String>,
    eos: TokenId,
    source_len: usize,
    steps: HashMap<Vec<TokenId>, StepOutput>,
    saliency: Option<Vec<f64>>,
}

fn check_distribution(what: &str, values: &[f64]) -> Result<()> {
    let sum: f64 = values.iter().map(|v| v.exp()).sum();
    if values.iter().any(|v| v.is_nan() || *v > 0.0) || (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::InvalidModel(format!(
            "{what}: log-probabilities must exponentiate to a distribution (sum {sum})"
        )));
    }
    Ok(())
}

fn check_attention(what: &str, row: &[f64], source_len: usize) -> Result<()> {
    if row.len() != source_len {
        return Err(Error::InvalidModel(format!(
            "{what}: attention has {} entries, expected {source_len}",
            row.len()
        )));
    }
    let sum: f64 = row.iter().sum();
    if row.iter().any(|a| !(a.is_finite() && *a >= 0.0)) || (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::InvalidModel(format!(
            "{what}: attention must be non-negative and sum to 1 (sum {sum})"
        )));
    }
    Ok(())
}

impl ToyModel {
    /// Build and validate a model from explicit per-prefix steps.
    pub fn new(
        vocab: Vec<String>,
        eos: TokenId,
        source_len: usize,
        steps: HashMap<Vec<TokenId>, StepOutput>,
        saliency: Option<Vec<f64>>,
    ) -> Result<Self> {
        if vocab.is_empty() {
            return Err(Error::InvalidModel("empty vocabulary".into()));
        }
        let mut sorted = vocab.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != vocab.len() {
            return Err(Error::InvalidModel("duplicate vocabulary entries".into()));
        }
        if eos >= vocab.len() {
            return Err(Error::InvalidModel("end-of-sequence token outside the vocabulary".into()));
        }
        if source_len == 0 {
            return Err(Error::InvalidModel("t_x must be at least 1".into()));
        }
        for (prefix, out) in &steps {
            let what = format!("prefix {prefix:?}");
            if prefix.iter().any(|&t| t >= vocab.len()) {
                return Err(Error::InvalidModel(format!("{what}: token outside the vocabulary")));
            }
            if out.logp.len() != vocab.len() {
                return Err(Error::InvalidModel(format!(
                    "{what}: {} log-probabilities for {} tokens",
                    out.logp.len(),
                    vocab.len()
                )));
            }
            check_distribution(&what, &out.logp)?;
            check_attention(&what, &out.attention, source_len)?;
        }
        if let Some(s) = &saliency {
            if s.len() != source_len || s.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::InvalidModel(format!(
                    "saliency must have {source_len} entries in [0, 1]"
                )));
            }
        }
        Ok(ToyModel {
            vocab,
            eos,
            source_len,
            steps,
            saliency,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ToyModelFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidModel(e.to_string()))?;
        let index: HashMap<&str, TokenId> = file
            .vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect();
        let lookup = |t: &str| {
            index
                .get(t)
                .copied()
                .ok_or_else(|| Error::InvalidModel(format!("unknown token {t:?}")))
        };
        let eos = lookup(&file.eos)?;
        let mut steps = HashMap::new();
        for (key, rec) in &file.steps {
            let prefix = key
                .split_whitespace()
                .map(lookup)
                .collect::<Result<Vec<_>>>()?;
            let mut logp = vec![f64::NEG_INFINITY; file.vocab.len()];
            for (tok, &lp) in &rec.logp {
                logp[lookup(tok)?] = lp;
            }
            let attention = rec
                .attn
                .clone()
                .unwrap_or_else(|| vec![1.0 / file.t_x.max(1) as f64; file.t_x]);
            if steps.insert(prefix, StepOutput { logp, attention }).is_some() {
                return Err(Error::InvalidModel(format!("duplicate prefix {key:?}")));
            }
        }
        Self::new(file.vocab, eos, file.t_x, steps, file.saliency)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let steps = self
            .steps
            .iter()
            .map(|(prefix, out)| {
                let key = prefix
                    .iter()
                    .map(|&t| self.vocab[t].as_str())
                    .collect::<Vec<_>>()
                    .join(" ");
                let logp = out
                    .logp
                    .iter()
                    .enumerate()
                    .filter(|(_, lp)| lp.is_finite())
                    .map(|(t, &lp)| (self.vocab[t].clone(), lp))
                    .collect();
                (
                    key,
                    StepRecord {
                        logp,
                        attn: Some(out.attention.clone()),
                    },
                )
            })
            .collect();
        let file = ToyModelFile {
            vocab: self.vocab.clone(),
            eos: self.vocab[self.eos].clone(),
            steps,
            t_x: self.source_len,
            saliency: self.saliency.clone(),
        };
        serde_json::to_string_pretty(&file).expect("toy model serializes")
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn saliency(&self) -> Option<&[f64]> {
        self.saliency.as_deref()
    }

    pub fn render(&self, tokens: &[TokenId]) -> String {
        tokens
            .iter()
            .map(|&t| self.vocab[t].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl StepModel for ToyModel {
    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn eos(&self) -> TokenId {
        self.eos
    }

    fn source_len(&self) -> usize {
        self.source_len
    }

    fn step(&self, prefix: &[TokenId]) -> StepOutput {
        self.steps.get(prefix).cloned().unwrap_or_else(|| StepOutput {
            logp: vec![-(self.vocab.len() as f64).ln(); self.vocab.len()],
            attention: vec![1.0 / self.source_len as f64; self.source_len],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIMPLE: &str = r#"{"vocab": ["a", "b", "</s>"], "eos": "</s>", "t_x": 2,
        "steps": {"": {"logp": {"a": -0.1053605156578263, "b": -2.3025850929940455}, "attn": [0.5, 0.5]},
                  "a": {"logp": {"</s>": 0.0}, "attn": [1.0, 0.0]}},
        "saliency": [0.8, 0.2]}"#;

    #[test]
    fn parses_and_defaults() {
        let m = ToyModel::from_json(SIMPLE).unwrap();
        assert_eq!(m.vocab_size(), 3);
        assert_eq!(m.eos(), 2);
        let root = m.step(&[]);
        assert_eq!(root.logp[2], f64::NEG_INFINITY);
        // unlisted prefix: uniform
        let other = m.step(&[1]);
        assert!((other.logp[0] + 3f64.ln()).abs() < 1e-15);
        assert_eq!(other.attention, vec![0.5, 0.5]);
        assert_eq!(m.saliency(), Some(&[0.8, 0.2][..]));
    }

    #[test]
    fn json_round_trip() {
        let m = ToyModel::from_json(SIMPLE).unwrap();
        assert_eq!(ToyModel::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn rejects_bad_models() {
        for bad in [
            r#"{"vocab": [], "eos": "x", "t_x": 1}"#,
            r#"{"vocab": ["a"], "eos": "b", "t_x": 1}"#,
            r#"{"vocab": ["a", "a"], "eos": "a", "t_x": 1}"#,
            r#"{"vocab": ["a"], "eos": "a", "t_x": 0}"#,
            r#"{"vocab": ["a", "b"], "eos": "a", "t_x": 1, "steps": {"": {"logp": {"a": -0.1}}}}"#,
            r#"{"vocab": ["a", "b"], "eos": "a", "t_x": 2, "steps": {"": {"logp": {"a": 0.0}, "attn": [0.7, 0.7]}}}"#,
            r#"{"vocab": ["a", "b"], "eos": "a", "t_x": 1, "steps": {"c": {"logp": {"a": 0.0}}}}"#,
            r#"{"vocab": ["a"], "eos": "a", "t_x": 1, "saliency": [2.0]}"#,
            r#"not json"#,
        ] {
            assert!(ToyModel::from_json(bad).is_err(), "{bad}");
        }
    }
}
