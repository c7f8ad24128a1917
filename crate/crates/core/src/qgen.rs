//! Fill-in-the-blank question generation from annotated reference summaries.
//!
//! Each highlight is split into sentences. For every sentence and every
//! distinct entity mentioned in it, one question is emitted: the sentence
//! with all mentions of that entity replaced by `@placeholder` and every
//! other mention replaced by its `@entity<k>` token.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    entity_token, sentence_spans, Document, EntityTable, Mention, StreamId, Token, PLACEHOLDER,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClozeQuestion {
    pub doc_id: String,
    pub qid: String,
    pub question: Vec<String>,
    pub answer: String,
    pub candidates: Vec<String>,
}

impl ClozeQuestion {
    pub fn question_text(&self) -> String {
        self.question.join(" ")
    }
}

/// One sentence of a highlight with the mentions it contains, offsets
/// relative to the sentence.
struct Sentence<'a> {
    tokens: &'a [Token],
    mentions: Vec<Mention>,
}

fn highlight_sentences<'a>(tokens: &'a [Token], mentions: &[Mention]) -> Vec<Sentence<'a>> {
    let protected: Vec<_> = mentions.iter().map(Mention::range).collect();
    sentence_spans(tokens, &protected)
        .into_iter()
        .map(|span| Sentence {
            tokens: &tokens[span.clone()],
            mentions: mentions
                .iter()
                .filter(|m| m.start >= span.start && m.end <= span.end)
                .map(|m| Mention {
                    start: m.start - span.start,
                    end: m.end - span.start,
                    ..*m
                })
                .collect(),
        })
        .collect()
}

fn blank_sentence(sentence: &Sentence<'_>, target: usize, table: &EntityTable) -> Vec<String> {
    let mut out = Vec::with_capacity(sentence.tokens.len());
    let mut i = 0;
    let mut mentions = sentence.mentions.iter().peekable();
    let target_entity = table.get(target);
    while i < sentence.tokens.len() {
        if let Some(m) = mentions.next_if(|m| m.start == i) {
            out.push(if m.entity == target {
                PLACEHOLDER.to_string()
            } else {
                entity_token(m.entity)
            });
            i = m.end;
            continue;
        }
        // unannotated spellings of the answer are blanked too
        let next_start = mentions.peek().map_or(sentence.tokens.len(), |m| m.start);
        let leak = target_entity.and_then(|e| {
            e.surfaces
                .iter()
                .map(Vec::len)
                .filter(|&len| i + len <= next_start)
                .filter(|&len| e.matches(&sentence.tokens[i..i + len]))
                .max()
        });
        match leak {
            Some(len) => {
                out.push(PLACEHOLDER.to_string());
                i += len;
            }
            None => {
                out.push(sentence.tokens[i].as_str().to_string());
                i += 1;
            }
        }
    }
    out
}

/// All cloze questions for a document, ordered by (sentence index, entity id).
pub fn generate_questions(doc: &Document) -> Vec<ClozeQuestion> {
    let table = &doc.entities;
    let candidates: Vec<String> = (0..table.len()).map(entity_token).collect();
    let mut out = Vec::new();
    let mut sentence_index = 0;
    for (k, highlight) in doc.highlights.iter().enumerate() {
        let mentions = table.mentions(StreamId::Highlight(k));
        for sentence in highlight_sentences(highlight, mentions) {
            let targets: BTreeSet<usize> = sentence.mentions.iter().map(|m| m.entity).collect();
            for target in targets {
                out.push(ClozeQuestion {
                    doc_id: doc.id.clone(),
                    qid: format!("{}:{}:{}", doc.id, sentence_index, target),
                    question: blank_sentence(&sentence, target, table),
                    answer: entity_token(target),
                    candidates: candidates.clone(),
                });
            }
            sentence_index += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DocumentRecord;

    fn doc(line: &str) -> Document {
        serde_json::from_str::<DocumentRecord>(line)
            .unwrap()
            .into_document()
            .unwrap()
            .0
    }

    #[test]
    fn single_entity_highlight() {
        let d = doc(r#"{"id":"d","source":"Chelsea played .","highlights":["Chelsea won"]}"#);
        let qs = generate_questions(&d);
        assert_eq!(qs.len(), 1);
        assert_eq!(qs[0].question_text(), "@placeholder won");
        assert_eq!(qs[0].answer, "@entity0");
        assert_eq!(qs[0].qid, "d:0:0");
        assert!(qs[0].candidates.contains(&qs[0].answer));
    }

    #[test]
    fn repeated_entity_blanked_everywhere() {
        let d = doc(
            r#"{"id":"d","source":"x","highlights":["then Chelsea beat Spurs and Chelsea celebrated"],
                "entities":[{"id":0,"surfaces":["Chelsea"]},{"id":1,"surfaces":["Spurs"]}]}"#,
        );
        let qs = generate_questions(&d);
        assert_eq!(qs.len(), 2);
        assert_eq!(
            qs[0].question_text(),
            "then @placeholder beat @entity1 and @placeholder celebrated"
        );
        assert_eq!(
            qs[1].question_text(),
            "then @entity0 beat @placeholder and @entity0 celebrated"
        );
    }

    #[test]
    fn unannotated_answer_spelling_is_blanked() {
        let d = doc(
            r#"{"id":"d","source":"x","highlights":["Chelsea lost but chelsea fans cheered"],
                "entities":[{"id":0,"surfaces":["Chelsea"]}],
                "mentions":{"highlight_0":[[0,0,1]]}}"#,
        );
        let qs = generate_questions(&d);
        assert_eq!(qs.len(), 1);
        assert_eq!(qs[0].question_text(), "@placeholder lost but @placeholder fans cheered");
    }

    #[test]
    fn entity_free_highlight_yields_nothing() {
        let d = doc(r#"{"id":"d","source":"x","highlights":["nothing here ."]}"#);
        assert!(generate_questions(&d).is_empty());
    }

    #[test]
    fn sentence_index_runs_across_highlights() {
        let d = doc(
            r#"{"id":"d","source":"x","highlights":["a Paris b . c Rome","d London"],
                "entities":[{"id":0,"surfaces":["Paris"]},{"id":1,"surfaces":["Rome"]},{"id":2,"surfaces":["London"]}]}"#,
        );
        let qids: Vec<_> = generate_questions(&d).into_iter().map(|q| q.qid).collect();
        assert_eq!(qids, ["d:0:0", "d:1:1", "d:2:2"]);
    }
}
