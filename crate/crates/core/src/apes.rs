//! APES: the share of cloze questions a reader answers correctly when given
//! only the system summary, plus entity-saliency statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{anonymize_spans, Corpus, Document, StreamId, SystemSummary};
use crate::error::{Error, Result};
use crate::qgen::ClozeQuestion;
use crate::reader::{ReaderChoice, ReaderRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DocScore {
    pub correct: usize,
    pub total: usize,
}

impl DocScore {
    /// Fraction answered correctly; `None` when the document has no questions.
    pub fn fraction(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ApesReport {
    /// Correct answers over all questions (micro average).
    pub overall: f64,
    /// Mean per-document fraction over documents with at least one question.
    pub macro_avg: f64,
    pub per_doc: BTreeMap<String, DocScore>,
    pub warnings: Vec<String>,
}

impl ApesReport {
    pub fn n_questions(&self) -> usize {
        self.per_doc.values().map(|d| d.total).sum()
    }
}

/// Anonymized reader context for a summary: mentions of the document's
/// entities become `@entity<k>`, anything else stays as written.
pub fn summary_context(doc: &Document, summary: &SystemSummary) -> Vec<String> {
    let mentions = doc.entities.match_mentions(&summary.tokens);
    anonymize_spans(&summary.tokens, &mentions)
        .expect("matched mentions are ordered and in bounds")
        .into_iter()
        .map(|t| t.as_str().to_string())
        .collect()
}

fn check_known<'a>(corpus: &Corpus, ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let missing: BTreeSet<&str> = ids.filter(|id| corpus.get(id).is_none()).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingIds(missing.into_iter().map(String::from).collect()))
    }
}

/// Score system summaries against cloze questions with the given reader.
///
/// Every summary and question must refer to a document in `corpus`.
/// Questions whose document has no summary count as incorrect.
pub fn score_apes(
    corpus: &Corpus,
    summaries: &[SystemSummary],
    questions: &[ClozeQuestion],
    reader: &ReaderChoice,
) -> Result<ApesReport> {
    check_known(corpus, summaries.iter().map(|s| s.doc_id.as_str()))?;
    check_known(corpus, questions.iter().map(|q| q.doc_id.as_str()))?;

    let mut by_doc: HashMap<&str, &SystemSummary> = HashMap::new();
    for s in summaries {
        if by_doc.insert(&s.doc_id, s).is_some() {
            return Err(Error::DuplicateId(s.doc_id.clone()));
        }
    }

    let mut ordered: Vec<&ClozeQuestion> = questions.iter().collect();
    ordered.sort_by(|a, b| (&a.doc_id, &a.qid).cmp(&(&b.doc_id, &b.qid)));

    let contexts: BTreeMap<&str, Vec<String>> = by_doc
        .par_iter()
        .map(|(&id, s)| (id, summary_context(corpus.get(id).expect("checked above"), s)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect();

    let mut warnings = Vec::new();
    let mut per_doc: BTreeMap<String, DocScore> = corpus
        .documents()
        .iter()
        .map(|d| (d.id.clone(), DocScore::default()))
        .collect();
    let mut requests = Vec::new();
    let mut unsummarized = BTreeSet::new();
    for q in &ordered {
        per_doc.get_mut(&q.doc_id).expect("checked above").total += 1;
        match contexts.get(q.doc_id.as_str()) {
            Some(context) => requests.push(ReaderRequest {
                qid: q.qid.clone(),
                question: q.question.clone(),
                context: context.clone(),
                candidates: q.candidates.clone(),
                gold: Some(q.answer.clone()),
            }),
            None => {
                unsummarized.insert(q.doc_id.as_str());
            }
        }
    }
    for id in unsummarized {
        warnings.push(format!("no summary for document {id}; its questions are scored incorrect"));
    }
    for (id, score) in &per_doc {
        if score.total == 0 {
            warnings.push(format!("document {id} has no questions"));
        }
    }

    let output = reader.answer_all(&requests)?;
    warnings.extend(output.warnings);
    if output.answers.len() != requests.len() {
        return Err(Error::Invariant(format!(
            "reader returned {} answers for {} questions",
            output.answers.len(),
            requests.len()
        )));
    }
    let doc_of: HashMap<&str, &str> = ordered
        .iter()
        .map(|q| (q.qid.as_str(), q.doc_id.as_str()))
        .collect();
    for (req, ans) in requests.iter().zip(&output.answers) {
        if ans.qid != req.qid {
            return Err(Error::Invariant(format!(
                "answer for {} returned in place of {}",
                ans.qid, req.qid
            )));
        }
        if let Some(a) = &ans.answer {
            if !req.candidates.contains(a) {
                return Err(Error::Invariant(format!("answer {a} for {} is not a candidate", req.qid)));
            }
        }
        if ans.answer.is_some() && ans.answer == req.gold {
            per_doc.get_mut(doc_of[req.qid.as_str()]).expect("known doc").correct += 1;
        }
    }

    let correct: usize = per_doc.values().map(|d| d.correct).sum();
    let total: usize = per_doc.values().map(|d| d.total).sum();
    let fractions: Vec<f64> = per_doc.values().filter_map(DocScore::fraction).collect();
    Ok(ApesReport {
        overall: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        macro_avg: if fractions.is_empty() {
            0.0
        } else {
            fractions.iter().sum::<f64>() / fractions.len() as f64
        },
        per_doc,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EntityStats {
    /// Mean number of distinct entities per summary.
    pub avg_entities: f64,
    /// Mean number of those that also appear in the reference summary.
    pub avg_salient_entities: f64,
    /// Mean over documents of source mentions of salient entities divided by
    /// the number of distinct salient entities.
    pub salient_density: f64,
}

/// Salient entities of a document: those mentioned in any highlight.
pub fn salient_entities(doc: &Document) -> BTreeSet<usize> {
    (0..doc.highlights.len())
        .flat_map(|k| doc.entities.entities_in(StreamId::Highlight(k)))
        .collect()
}

/// Source mentions of salient entities per distinct salient entity, or
/// `None` when the document has no salient entity.
pub fn salient_density(doc: &Document) -> Option<f64> {
    let salient = salient_entities(doc);
    if salient.is_empty() {
        return None;
    }
    let mentions = doc
        .entities
        .mentions(StreamId::Source)
        .iter()
        .filter(|m| salient.contains(&m.entity))
        .count();
    Some(mentions as f64 / salient.len() as f64)
}

pub fn entity_stats(summaries: &[SystemSummary], corpus: &Corpus) -> Result<EntityStats> {
    check_known(corpus, summaries.iter().map(|s| s.doc_id.as_str()))?;
    if summaries.is_empty() {
        return Ok(EntityStats::default());
    }
    let mut entities = 0usize;
    let mut salient_total = 0usize;
    let mut densities = Vec::new();
    for s in summaries {
        let doc = corpus.get(&s.doc_id).expect("checked above");
        let found: BTreeSet<usize> = doc
            .entities
            .match_mentions(&s.tokens)
            .into_iter()
            .map(|m| m.entity)
            .collect();
        let salient = salient_entities(doc);
        entities += found.len();
        salient_total += found.intersection(&salient).count();
        densities.extend(salient_density(doc));
    }
    let n = summaries.len() as f64;
    Ok(EntityStats {
        avg_entities: entities as f64 / n,
        avg_salient_entities: salient_total as f64 / n,
        salient_density: if densities.is_empty() {
            0.0
        } else {
            densities.iter().sum::<f64>() / densities.len() as f64
        },
    })
}
