//! JSONL corpus and summary files.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::entities::{detect_entities, EntityTable, RawEntity, StreamId};
use super::{join_tokens, tokenize, Document, SystemSummary};
use crate::error::{Error, Result};

/// One line of a corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub id: String,
    pub source: String,
    #[serde(default)]
    pub highlights: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entities: Option<Vec<EntityRecord>>,
    /// Stream name (`source`, `highlight_<k>`) to `[entity_id, start, end]` spans.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mentions: Option<BTreeMap<String, Vec<[i64; 3]>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub id: i64,
    #[serde(default)]
    pub surfaces: Vec<String>,
    #[serde(default, rename = "type", skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
}

/// One line of a system-summary file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub doc_id: String,
    pub summary: String,
}

impl DocumentRecord {
    /// Tokenize and resolve entities. The flag is true when no annotations
    /// were supplied and the heuristic detector was used.
    pub fn into_document(self) -> Result<(Document, bool)> {
        let source = tokenize(&self.source);
        let highlights: Vec<_> = self.highlights.iter().map(|h| tokenize(h)).collect();
        let mut streams = vec![(StreamId::Source, source.as_slice())];
        streams.extend(
            highlights
                .iter()
                .enumerate()
                .map(|(k, h)| (StreamId::Highlight(k), h.as_slice())),
        );

        let raw_entities = self.entities.map(|es| {
            es.into_iter()
                .map(|e| RawEntity {
                    key: e.id,
                    surfaces: e
                        .surfaces
                        .iter()
                        .map(|s| tokenize(s))
                        .filter(|s| !s.is_empty())
                        .collect(),
                    kind: e.kind,
                })
                .collect::<Vec<_>>()
        });
        let mentions = match self.mentions {
            Some(map) => {
                let mut out = BTreeMap::new();
                for (name, spans) in map {
                    let stream: StreamId = name.parse()?;
                    let spans = spans
                        .into_iter()
                        .map(|[id, s, e]| {
                            if s < 0 || e < 0 {
                                return Err(Error::InvalidEntityTable(format!(
                                    "negative span [{id}, {s}, {e}] in {name}"
                                )));
                            }
                            Ok((id, s as usize, e as usize))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    out.insert(stream, spans);
                }
                Some(out)
            }
            None => None,
        };

        let (table, heuristic) = match (raw_entities, mentions) {
            (None, None) => (detect_entities(&streams), true),
            (Some(entities), None) => (EntityTable::from_surfaces(&streams, entities)?, false),
            (entities, Some(mentions)) => {
                let entities = entities.unwrap_or_else(|| {
                    let mut keys: Vec<i64> = mentions.values().flatten().map(|m| m.0).collect();
                    keys.sort_unstable();
                    keys.dedup();
                    keys.into_iter()
                        .map(|key| RawEntity {
                            key,
                            surfaces: Vec::new(),
                            kind: None,
                        })
                        .collect()
                });
                (EntityTable::from_annotations(&streams, entities, mentions)?, false)
            }
        };
        let doc = Document::new(self.id, source, highlights, table)?;
        Ok((doc, heuristic))
    }
}

impl Document {
    /// Serialize back to a corpus record with explicit annotations.
    pub fn to_record(&self) -> DocumentRecord {
        let entities = self
            .entities
            .entries()
            .iter()
            .map(|e| EntityRecord {
                id: e.id as i64,
                surfaces: e.surfaces.iter().map(|s| join_tokens(s)).collect(),
                kind: e.kind.clone(),
            })
            .collect();
        let mentions = self
            .entities
            .mention_map()
            .iter()
            .map(|(stream, ms)| {
                let spans = ms
                    .iter()
                    .map(|m| [m.entity as i64, m.start as i64, m.end as i64])
                    .collect();
                (stream.to_string(), spans)
            })
            .collect();
        DocumentRecord {
            id: self.id.clone(),
            source: join_tokens(&self.source),
            highlights: self.highlights.iter().map(|h| join_tokens(h)).collect(),
            entities: Some(entities),
            mentions: Some(mentions),
        }
    }
}

/// Documents ordered by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    docs: Vec<Document>,
}

impl Corpus {
    pub fn new(mut docs: Vec<Document>) -> Result<Self> {
        docs.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = docs.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::DuplicateId(w[0].id.clone()));
        }
        Ok(Corpus { docs })
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.docs
            .binary_search_by(|d| d.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.docs[i])
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn records(&self) -> Vec<DocumentRecord> {
        self.docs.iter().map(Document::to_record).collect()
    }
}

pub struct LoadedCorpus {
    pub corpus: Corpus,
    /// Ids of documents whose entities came from the heuristic detector.
    pub heuristic_docs: Vec<String>,
}

/// Read a JSONL file, skipping blank lines. Parse failures report the
/// 1-based line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_corpus(path: &Path) -> Result<LoadedCorpus> {
    let records: Vec<DocumentRecord> = read_jsonl(path)?;
    let mut docs = Vec::with_capacity(records.len());
    let mut heuristic_docs = Vec::new();
    for rec in records {
        let (doc, heuristic) = rec.into_document()?;
        if heuristic {
            heuristic_docs.push(doc.id.clone());
        }
        docs.push(doc);
    }
    heuristic_docs.sort();
    Ok(LoadedCorpus {
        corpus: Corpus::new(docs)?,
        heuristic_docs,
    })
}

/// Read system summaries; a document may have at most one summary.
pub fn read_summaries(path: &Path) -> Result<Vec<SystemSummary>> {
    let records: Vec<SummaryRecord> = read_jsonl(path)?;
    let mut seen = HashSet::new();
    records
        .into_iter()
        .map(|r| {
            if !seen.insert(r.doc_id.clone()) {
                return Err(Error::DuplicateId(r.doc_id));
            }
            Ok(SystemSummary::from_text(r.doc_id, &r.summary))
        })
        .collect()
}
