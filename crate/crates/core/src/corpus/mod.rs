//! Documents, tokens, entity tables, and `@entityN` anonymization.

mod entities;
mod io;
mod tokenize;

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use entities::{
    anonymize, anonymize_spans, de_anonymize, detect_entities, detect_entities_heuristic, Entity,
    EntityTable, Mention, RawEntity, StreamId,
};
pub use io::{
    read_corpus, read_jsonl, read_summaries, write_jsonl, Corpus, DocumentRecord, EntityRecord,
    LoadedCorpus, SummaryRecord,
};
pub use tokenize::{is_sentence_terminator, sentence_spans, tokenize};

use crate::error::{Error, Result};

/// Placeholder token marking the blank in a cloze question.
pub const PLACEHOLDER: &str = "@placeholder";

const ENTITY_PREFIX: &str = "@entity";

/// Anonymized token for entity `id`, e.g. `@entity3`.
pub fn entity_token(id: usize) -> String {
    format!("{ENTITY_PREFIX}{id}")
}

/// Inverse of [`entity_token`].
pub fn parse_entity_token(token: &str) -> Option<usize> {
    let digits = token.strip_prefix(ENTITY_PREFIX)?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if digits.len() > 1 && digits.starts_with('0') {
        return None;
    }
    digits.parse().ok()
}

/// True for any `@entity<k>` token.
pub fn is_entity_token(token: &str) -> bool {
    parse_entity_token(token).is_some()
}

/// A single non-empty, whitespace-free token with its lowercase form cached.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token {
    text: String,
    lower: String,
}

impl Token {
    /// Returns `None` for empty strings or strings containing whitespace.
    pub fn new(text: &str) -> Option<Self> {
        if text.is_empty() || text.chars().any(char::is_whitespace) {
            return None;
        }
        Some(Token {
            text: text.to_string(),
            lower: text.to_lowercase(),
        })
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn lower(&self) -> &str {
        &self.lower
    }

    /// First character is an uppercase letter.
    pub fn is_capitalized(&self) -> bool {
        self.text.chars().next().is_some_and(char::is_uppercase)
    }
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.text
    }
}

impl fmt::Debug for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(&self.text, f)
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl Serialize for Token {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.text)
    }
}

impl<'de> Deserialize<'de> for Token {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Token::new(&s).ok_or_else(|| serde::de::Error::custom(format!("invalid token {s:?}")))
    }
}

/// Convert strings to tokens, rejecting empty or whitespace-bearing entries.
pub fn tokens_from_strs<S: AsRef<str>>(words: &[S]) -> Result<Vec<Token>> {
    words
        .iter()
        .map(|w| {
            Token::new(w.as_ref())
                .ok_or_else(|| Error::InvalidArgument(format!("invalid token {:?}", w.as_ref())))
        })
        .collect()
}

/// Space-joined surface text of a token slice.
pub fn join_tokens<T: AsRef<str>>(tokens: &[T]) -> String {
    tokens
        .iter()
        .map(AsRef::as_ref)
        .collect::<Vec<_>>()
        .join(" ")
}

/// A source article with its reference highlights and entity annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub source: Vec<Token>,
    pub highlights: Vec<Vec<Token>>,
    pub entities: EntityTable,
}

impl Document {
    pub fn new(
        id: impl Into<String>,
        source: Vec<Token>,
        highlights: Vec<Vec<Token>>,
        entities: EntityTable,
    ) -> Result<Self> {
        let id = id.into();
        if source.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "document {id:?} has an empty source"
            )));
        }
        Ok(Document {
            id,
            source,
            highlights,
            entities,
        })
    }

    pub fn stream(&self, stream: StreamId) -> Option<&[Token]> {
        match stream {
            StreamId::Source => Some(&self.source),
            StreamId::Highlight(k) => self.highlights.get(k).map(Vec::as_slice),
        }
    }

    /// All text streams in canonical order: source, then highlights.
    pub fn streams(&self) -> Vec<(StreamId, &[Token])> {
        std::iter::once((StreamId::Source, self.source.as_slice()))
            .chain(
                self.highlights
                    .iter()
                    .enumerate()
                    .map(|(k, h)| (StreamId::Highlight(k), h.as_slice())),
            )
            .collect()
    }

    /// Reference summary: all highlights concatenated.
    pub fn reference_tokens(&self) -> Vec<Token> {
        self.highlights.iter().flatten().cloned().collect()
    }
}

/// A system-produced summary for one document.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSummary {
    pub doc_id: String,
    pub tokens: Vec<Token>,
}

impl SystemSummary {
    pub fn from_text(doc_id: impl Into<String>, text: &str) -> Self {
        SystemSummary {
            doc_id: doc_id.into(),
            tokens: tokenize(text),
        }
    }
}
