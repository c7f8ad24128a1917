//! Joint ROUGE + APES evaluation and its JSON report.
//!
//! Reals are written as JSON numbers with exactly six decimals (round half
//! to even) and objects have their keys in sorted order, so parsing a report
//! and writing it back reproduces it byte for byte.

use std::collections::{BTreeMap, HashMap};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::apes::{entity_stats, score_apes, EntityStats};
use crate::corpus::{Corpus, SystemSummary};
use crate::error::{Error, Result};
use crate::qgen::ClozeQuestion;
use crate::reader::ReaderChoice;
use crate::rouge::{mean_score, MultiRef, RougeConfig, RougeScore, RougeVariant, DEFAULT_SKIP};

/// `x` with six decimals, ties to even; negative zero prints as zero.
pub fn fixed6(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

/// A real serialized as a six-decimal JSON number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fixed6(pub f64);

impl Serialize for Fixed6 {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(serde::ser::Error::custom(format!("non-finite value {} in report", self.0)));
        }
        serde_json::Number::from_str(&fixed6(self.0))
            .map_err(serde::ser::Error::custom)?
            .serialize(serializer)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreJson {
    pub f1: Fixed6,
    pub precision: Fixed6,
    pub recall: Fixed6,
}

impl From<RougeScore> for ScoreJson {
    fn from(s: RougeScore) -> Self {
        ScoreJson {
            f1: Fixed6(s.f1),
            precision: Fixed6(s.precision),
            recall: Fixed6(s.recall),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RougeJson {
    pub r1: ScoreJson,
    pub r2: ScoreJson,
    pub rl: ScoreJson,
    pub rsu4: ScoreJson,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocScoreJson {
    pub correct: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApesJson {
    #[serde(rename = "macro")]
    pub macro_avg: Fixed6,
    pub overall: Fixed6,
    pub per_doc: BTreeMap<String, DocScoreJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntityStatsJson {
    pub avg_entities: Fixed6,
    pub avg_salient_entities: Fixed6,
    pub salient_density: Fixed6,
}

impl From<EntityStats> for EntityStatsJson {
    fn from(s: EntityStats) -> Self {
        EntityStatsJson {
            avg_entities: Fixed6(s.avg_entities),
            avg_salient_entities: Fixed6(s.avg_salient_entities),
            salient_density: Fixed6(s.salient_density),
        }
    }
}

/// Fields are declared in key order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub apes: ApesJson,
    pub entity_stats: EntityStatsJson,
    pub n_docs: usize,
    pub n_questions: usize,
    pub rouge: RougeJson,
}

impl EvaluationReport {
    /// Pretty-printed JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Re-serialize a report read back from JSON, for round-trip checks.
pub fn canonicalize(json: &str) -> Result<String> {
    let value: serde_json::Value = serde_json::from_str(json)?;
    let mut s = serde_json::to_string_pretty(&value)?;
    s.push('\n');
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvaluationReport,
    pub warnings: Vec<String>,
}

fn rouge_configs() -> [RougeConfig; 4] {
    [
        RougeVariant::N(1),
        RougeVariant::N(2),
        RougeVariant::L,
        RougeVariant::SU(DEFAULT_SKIP),
    ]
    .map(|v| RougeConfig::new(v, MultiRef::Max).expect("valid variant"))
}

/// ROUGE of each summary against its document's highlights, averaged over
/// all documents in id order. A document without a summary scores zero.
pub fn corpus_rouge(corpus: &Corpus, summaries: &[SystemSummary]) -> Result<(RougeJson, Vec<String>)> {
    let mut by_doc: HashMap<&str, &SystemSummary> = HashMap::new();
    for s in summaries {
        if corpus.get(&s.doc_id).is_none() {
            let mut missing: Vec<String> = summaries
                .iter()
                .filter(|s| corpus.get(&s.doc_id).is_none())
                .map(|s| s.doc_id.clone())
                .collect();
            missing.sort();
            missing.dedup();
            return Err(Error::MissingIds(missing));
        }
        if by_doc.insert(&s.doc_id, s).is_some() {
            return Err(Error::DuplicateId(s.doc_id.clone()));
        }
    }
    let configs = rouge_configs();
    let per_doc: Vec<[RougeScore; 4]> = corpus
        .documents()
        .par_iter()
        .map(|doc| {
            let reference = [doc.reference_tokens()];
            let candidate = by_doc.get(doc.id.as_str()).map_or(&[][..], |s| &s.tokens[..]);
            configs.each_ref().map(|c| c.score(candidate, &reference))
        })
        .collect();
    let warnings = corpus
        .documents()
        .iter()
        .filter(|d| !by_doc.contains_key(d.id.as_str()))
        .map(|d| format!("no summary for document {}; ROUGE counts it as empty", d.id))
        .collect();
    let column = |k: usize| -> ScoreJson {
        let scores: Vec<RougeScore> = per_doc.iter().map(|s| s[k]).collect();
        mean_score(&scores).into()
    };
    Ok((
        RougeJson {
            r1: column(0),
            r2: column(1),
            rl: column(2),
            rsu4: column(3),
        },
        warnings,
    ))
}

/// ROUGE, APES and entity statistics in one pass.
pub fn evaluate(
    corpus: &Corpus,
    summaries: &[SystemSummary],
    questions: &[ClozeQuestion],
    reader: &ReaderChoice,
) -> Result<Evaluation> {
    let (rouge, mut warnings) = corpus_rouge(corpus, summaries)?;
    let apes = score_apes(corpus, summaries, questions, reader)?;
    let stats = entity_stats(summaries, corpus)?;
    warnings.extend(apes.warnings.iter().cloned());
    let report = EvaluationReport {
        n_docs: corpus.len(),
        n_questions: apes.n_questions(),
        apes: ApesJson {
            macro_avg: Fixed6(apes.macro_avg),
            overall: Fixed6(apes.overall),
            per_doc: apes
                .per_doc
                .iter()
                .map(|(id, d)| {
                    (
                        id.clone(),
                        DocScoreJson {
                            correct: d.correct,
                            total: d.total,
                        },
                    )
                })
                .collect(),
        },
        entity_stats: stats.into(),
        rouge,
    };
    Ok(Evaluation { report, warnings })
}
