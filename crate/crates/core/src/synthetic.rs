//! Seeded generator of small annotated news-like documents.
//!
//! Entity names are capitalized one- or two-word strings with distinct first
//! words; all other words are lowercase, so the annotations agree with the
//! longest-match entity matcher. Output depends only on the seed.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Document, DocumentRecord, EntityRecord, SystemSummary, Token};
use crate::error::Result;

const FIRST: &[&str] = &[
    "Alder", "Brennan", "Calloway", "Dunmore", "Ellery", "Fenwick", "Galloway", "Harlow",
    "Ingram", "Jessop", "Kendrick", "Lachlan", "Marlowe", "Norwood", "Oakley", "Pemberton",
    "Quincey", "Rowan", "Sutton", "Thorne", "Upton", "Vickers", "Whitby", "Yardley",
];
const SECOND: &[&str] = &["Rovers", "United", "Holdings", "Council", "Brook", "Academy"];
const WORDS: &[&str] = &[
    "said", "after", "the", "match", "a", "new", "plan", "for", "with", "report", "on",
    "week", "against", "over", "deal", "signed", "fans", "were", "told", "by", "city",
    "officials", "in", "late", "goal", "season", "vote", "court", "ruled", "that", "its",
    "bid", "was", "rejected", "because", "of", "early", "talks", "and", "then", "again",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticConfig {
    pub entities_per_doc: (usize, usize),
    pub highlights_per_doc: (usize, usize),
    pub sentences_per_highlight: (usize, usize),
    pub filler_sentences: (usize, usize),
    /// Distinct entities per highlight sentence.
    pub entities_per_sentence: (usize, usize),
    pub words_per_sentence: (usize, usize),
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            entities_per_doc: (3, 6),
            highlights_per_doc: (1, 3),
            sentences_per_highlight: (1, 2),
            filler_sentences: (2, 5),
            entities_per_sentence: (1, 3),
            words_per_sentence: (3, 8),
        }
    }
}

struct Builder {
    tokens: Vec<String>,
    mentions: Vec<[i64; 3]>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            tokens: Vec::new(),
            mentions: Vec::new(),
        }
    }

    fn push_entity(&mut self, key: usize, name: &[&str]) {
        let start = self.tokens.len();
        self.tokens.extend(name.iter().map(|w| w.to_string()));
        self.mentions.push([key as i64, start as i64, self.tokens.len() as i64]);
    }

    fn append(&mut self, other: &Builder) {
        let offset = self.tokens.len() as i64;
        self.tokens.extend(other.tokens.iter().cloned());
        self.mentions
            .extend(other.mentions.iter().map(|&[k, s, e]| [k, s + offset, e + offset]));
    }
}

fn pick(rng: &mut ChaCha8Rng, range: (usize, usize)) -> usize {
    rng.gen_range(range.0..=range.1)
}

fn sentence(rng: &mut ChaCha8Rng, cfg: &SyntheticConfig, names: &[Vec<&'static str>], entities: &[usize]) -> Builder {
    let mut slots: Vec<Option<usize>> = (0..pick(rng, cfg.words_per_sentence)).map(|_| None).collect();
    slots.extend(entities.iter().map(|&e| Some(e)));
    slots.shuffle(rng);
    let mut b = Builder::new();
    for slot in slots {
        match slot {
            Some(e) => b.push_entity(e, &names[e]),
            None => b.tokens.push(WORDS.choose(rng).expect("non-empty").to_string()),
        }
    }
    b.tokens.push(".".into());
    b
}

fn document(rng: &mut ChaCha8Rng, cfg: &SyntheticConfig, id: String) -> DocumentRecord {
    let n_entities = pick(rng, cfg.entities_per_doc).min(FIRST.len());
    let firsts: Vec<&'static str> = FIRST.choose_multiple(rng, n_entities).copied().collect();
    let names: Vec<Vec<&'static str>> = firsts
        .into_iter()
        .map(|f| {
            if rng.gen_bool(0.5) {
                vec![f, SECOND.choose(rng).expect("non-empty")]
            } else {
                vec![f]
            }
        })
        .collect();
    let keys: Vec<usize> = (0..n_entities).collect();

    let mut highlights = Vec::new();
    let mut source_sentences = Vec::new();
    for _ in 0..pick(rng, cfg.highlights_per_doc) {
        let mut h = Builder::new();
        for _ in 0..pick(rng, cfg.sentences_per_highlight) {
            let k = pick(rng, cfg.entities_per_sentence).min(n_entities);
            let chosen: Vec<usize> = keys.choose_multiple(rng, k).copied().collect();
            let s = sentence(rng, cfg, &names, &chosen);
            h.append(&s);
            source_sentences.push(s);
        }
        highlights.push(h);
    }
    for _ in 0..pick(rng, cfg.filler_sentences) {
        let k = rng.gen_range(0..=1.min(n_entities));
        let chosen: Vec<usize> = keys.choose_multiple(rng, k).copied().collect();
        source_sentences.push(sentence(rng, cfg, &names, &chosen));
    }
    source_sentences.shuffle(rng);
    let mut source = Builder::new();
    for s in &source_sentences {
        source.append(s);
    }

    let mut mentions = BTreeMap::new();
    mentions.insert("source".to_string(), source.mentions.clone());
    for (k, h) in highlights.iter().enumerate() {
        mentions.insert(format!("highlight_{k}"), h.mentions.clone());
    }
    DocumentRecord {
        id,
        source: source.tokens.join(" "),
        highlights: highlights.iter().map(|h| h.tokens.join(" ")).collect(),
        entities: Some(
            names
                .iter()
                .enumerate()
                .map(|(k, n)| EntityRecord {
                    id: k as i64,
                    surfaces: vec![n.join(" ")],
                    kind: None,
                })
                .collect(),
        ),
        mentions: Some(mentions),
    }
}

/// `n_docs` annotated document records with ids `doc0000`, `doc0001`, ...
pub fn synthetic_records(seed: u64, n_docs: usize, cfg: &SyntheticConfig) -> Vec<DocumentRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_docs)
        .map(|i| document(&mut rng, cfg, format!("doc{i:04}")))
        .collect()
}

pub fn synthetic_corpus(seed: u64, n_docs: usize) -> Result<Corpus> {
    let docs = synthetic_records(seed, n_docs, &SyntheticConfig::default())
        .into_iter()
        .map(|r| r.into_document().map(|(d, _)| d))
        .collect::<Result<Vec<Document>>>()?;
    Corpus::new(docs)
}

/// Each document's highlights, concatenated, used as its system summary.
pub fn reference_summaries(corpus: &Corpus) -> Vec<SystemSummary> {
    corpus
        .documents()
        .iter()
        .map(|d| SystemSummary {
            doc_id: d.id.clone(),
            tokens: d.reference_tokens(),
        })
        .collect()
}

/// Uniformly shuffled copy of `tokens`.
pub fn shuffle_tokens(tokens: &[Token], rng: &mut ChaCha8Rng) -> Vec<Token> {
    let mut out = tokens.to_vec();
    out.shuffle(rng);
    out
}

/// Reference summaries with their tokens shuffled, one stream per seed.
pub fn shuffled_summaries(corpus: &Corpus, seed: u64) -> Vec<SystemSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    reference_summaries(corpus)
        .into_iter()
        .map(|s| SystemSummary {
            tokens: shuffle_tokens(&s.tokens, &mut rng),
            ..s
        })
        .collect()
}
