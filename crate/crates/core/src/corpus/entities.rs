use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use super::tokenize::is_sentence_terminator;
use super::{entity_token, parse_entity_token, Token};
use crate::error::{Error, Result};

/// A text stream of a document that can carry entity mentions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StreamId {
    Source,
    Highlight(usize),
}

impl fmt::Display for StreamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StreamId::Source => f.write_str("source"),
            StreamId::Highlight(k) => write!(f, "highlight_{k}"),
        }
    }
}

impl FromStr for StreamId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "source" {
            return Ok(StreamId::Source);
        }
        s.strip_prefix("highlight_")
            .and_then(|k| k.parse().ok())
            .map(StreamId::Highlight)
            .ok_or_else(|| Error::InvalidEntityTable(format!("unknown stream {s:?}")))
    }
}

/// One mention: a half-open token span in a stream, the entity it refers to,
/// and which of the entity's surfaces it spells exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Mention {
    pub entity: usize,
    pub start: usize,
    pub end: usize,
    pub surface: usize,
}

impl Mention {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub id: usize,
    /// Distinct exact-case spellings; the first is the canonical name.
    pub surfaces: Vec<Vec<Token>>,
    pub kind: Option<String>,
}

impl Entity {
    pub fn name(&self) -> String {
        self.surfaces
            .first()
            .map(|s| super::join_tokens(s))
            .unwrap_or_default()
    }

    /// Whether `tokens` spells one of this entity's surfaces, ignoring case.
    pub fn matches(&self, tokens: &[Token]) -> bool {
        self.surfaces.iter().any(|s| same_lower(s, tokens))
    }
}

/// An entity as supplied by an annotation file, before canonical renumbering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawEntity {
    pub key: i64,
    pub surfaces: Vec<Vec<Token>>,
    pub kind: Option<String>,
}

fn same_lower(a: &[Token], b: &[Token]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.lower() == y.lower())
}

/// Entities of one document and their mentions per stream.
///
/// Ids are contiguous from 0 in order of first mention (source first, then
/// highlights in order); entities that are never mentioned come last.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityTable {
    entries: Vec<Entity>,
    mentions: BTreeMap<StreamId, Vec<Mention>>,
}

impl EntityTable {
    pub fn entries(&self) -> &[Entity] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&Entity> {
        self.entries.get(id)
    }

    /// Mentions in `stream`, sorted by start.
    pub fn mentions(&self, stream: StreamId) -> &[Mention] {
        self.mentions.get(&stream).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn mention_map(&self) -> &BTreeMap<StreamId, Vec<Mention>> {
        &self.mentions
    }

    /// Distinct entity ids mentioned in `stream`.
    pub fn entities_in(&self, stream: StreamId) -> BTreeSet<usize> {
        self.mentions(stream).iter().map(|m| m.entity).collect()
    }

    /// Build a table from explicit annotations, validating spans against the
    /// streams and renumbering ids into canonical first-mention order.
    pub fn from_annotations(
        streams: &[(StreamId, &[Token])],
        entities: Vec<RawEntity>,
        mentions: BTreeMap<StreamId, Vec<(i64, usize, usize)>>,
    ) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, e) in entities.iter().enumerate() {
            if index.insert(e.key, i).is_some() {
                return Err(Error::InvalidEntityTable(format!(
                    "duplicate entity id {}",
                    e.key
                )));
            }
        }
        let mut surfaces: Vec<Vec<Vec<Token>>> =
            entities.iter().map(|e| e.surfaces.clone()).collect();
        let stream_tokens: HashMap<StreamId, &[Token]> = streams.iter().copied().collect();

        // (stream, raw entity index, start, end, surface index)
        let mut resolved: BTreeMap<StreamId, Vec<(usize, usize, usize, usize)>> = BTreeMap::new();
        for (stream, spans) in mentions {
            let tokens = stream_tokens.get(&stream).ok_or_else(|| {
                Error::InvalidEntityTable(format!("mentions for missing stream {stream}"))
            })?;
            let mut spans = spans;
            spans.sort_by_key(|&(_, s, e)| (s, e));
            let mut prev_end = 0;
            let mut out = Vec::with_capacity(spans.len());
            for (key, start, end) in spans {
                let raw = *index.get(&key).ok_or_else(|| {
                    Error::InvalidEntityTable(format!("mention of unknown entity {key}"))
                })?;
                if start >= end || end > tokens.len() {
                    return Err(Error::InvalidEntityTable(format!(
                        "span {start}..{end} out of bounds for {stream} ({} tokens)",
                        tokens.len()
                    )));
                }
                if start < prev_end {
                    return Err(Error::OverlappingMentions {
                        stream: stream.to_string(),
                        start,
                        end,
                    });
                }
                prev_end = end;
                let span = &tokens[start..end];
                let known = &mut surfaces[raw];
                let surface = match known.iter().position(|s| s.as_slice() == span) {
                    Some(i) => i,
                    None => {
                        if !entities[raw].surfaces.is_empty()
                            && !entities[raw].surfaces.iter().any(|s| same_lower(s, span))
                        {
                            return Err(Error::InvalidEntityTable(format!(
                                "mention {:?} in {stream} matches no surface of entity {key}",
                                super::join_tokens(span)
                            )));
                        }
                        known.push(span.to_vec());
                        known.len() - 1
                    }
                };
                out.push((raw, start, end, surface));
            }
            resolved.insert(stream, out);
        }

        let mut order: Vec<usize> = Vec::with_capacity(entities.len());
        let mut seen = HashSet::new();
        for spans in resolved.values() {
            for &(raw, ..) in spans {
                if seen.insert(raw) {
                    order.push(raw);
                }
            }
        }
        let mut unmentioned: Vec<usize> = (0..entities.len()).filter(|i| !seen.contains(i)).collect();
        unmentioned.sort_by_key(|&i| entities[i].key);
        for &raw in &unmentioned {
            if surfaces[raw].is_empty() {
                return Err(Error::InvalidEntityTable(format!(
                    "entity {} has neither surfaces nor mentions",
                    entities[raw].key
                )));
            }
        }
        order.extend(unmentioned);

        let mut new_id = vec![0; entities.len()];
        for (id, &raw) in order.iter().enumerate() {
            new_id[raw] = id;
        }
        let entries = order
            .iter()
            .enumerate()
            .map(|(id, &raw)| Entity {
                id,
                surfaces: std::mem::take(&mut surfaces[raw]),
                kind: entities[raw].kind.clone(),
            })
            .collect();
        let mentions = resolved
            .into_iter()
            .map(|(stream, spans)| {
                let ms = spans
                    .into_iter()
                    .map(|(raw, start, end, surface)| Mention {
                        entity: new_id[raw],
                        start,
                        end,
                        surface,
                    })
                    .collect();
                (stream, ms)
            })
            .collect();
        Ok(EntityTable { entries, mentions })
    }

    /// Build a table from entity surfaces alone, locating mentions by
    /// case-insensitive longest match in every stream.
    pub fn from_surfaces(streams: &[(StreamId, &[Token])], entities: Vec<RawEntity>) -> Result<Self> {
        let provisional = EntityTable {
            entries: entities
                .iter()
                .enumerate()
                .map(|(id, e)| Entity {
                    id,
                    surfaces: e.surfaces.clone(),
                    kind: e.kind.clone(),
                })
                .collect(),
            mentions: BTreeMap::new(),
        };
        let mut mentions = BTreeMap::new();
        for &(stream, tokens) in streams {
            let found: Vec<_> = provisional
                .match_mentions(tokens)
                .into_iter()
                .map(|m| (entities[m.entity].key, m.start, m.end))
                .collect();
            if !found.is_empty() {
                mentions.insert(stream, found);
            }
        }
        Self::from_annotations(streams, entities, mentions)
    }

    /// Find mentions of this table's entities in arbitrary tokens.
    ///
    /// Scans left to right taking the longest case-insensitive surface match
    /// at each position; equal-length matches go to the lower entity id.
    pub fn match_mentions(&self, tokens: &[Token]) -> Vec<Mention> {
        let mut by_head: HashMap<&str, Vec<(usize, &[Token])>> = HashMap::new();
        for e in &self.entries {
            for s in &e.surfaces {
                if let Some(head) = s.first() {
                    by_head.entry(head.lower()).or_default().push((e.id, s));
                }
            }
        }
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let best = by_head.get(tokens[i].lower()).and_then(|cands| {
                cands
                    .iter()
                    .filter(|(_, s)| i + s.len() <= tokens.len() && same_lower(s, &tokens[i..i + s.len()]))
                    .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(&a.0)))
                    .map(|&(id, s)| (id, s.len()))
            });
            match best {
                Some((entity, len)) => {
                    let span = &tokens[i..i + len];
                    let surfaces = &self.entries[entity].surfaces;
                    let surface = surfaces
                        .iter()
                        .position(|s| s.as_slice() == span)
                        .or_else(|| surfaces.iter().position(|s| same_lower(s, span)))
                        .unwrap_or(0);
                    out.push(Mention {
                        entity,
                        start: i,
                        end: i + len,
                        surface,
                    });
                    i += len;
                }
                None => i += 1,
            }
        }
        out
    }
}

/// Sentence-initial words that are never entity names on their own.
const OPENERS: &[&str] = &[
    "a", "about", "after", "all", "also", "an", "and", "as", "at", "before", "but", "by", "during",
    "each", "every", "for", "from", "he", "her", "here", "his", "how", "i", "if", "in", "it", "its",
    "just", "last", "many", "more", "most", "my", "new", "no", "not", "now", "of", "on", "one",
    "only", "or", "our", "she", "since", "so", "some", "that", "the", "their", "then", "there",
    "these", "they", "this", "those", "to", "two", "under", "we", "what", "when", "where", "which",
    "while", "who", "why", "with", "yet", "you", "your",
];

/// Heuristic entity detection over several streams of one document.
///
/// Maximal runs of capitalized tokens become mentions, except a lone
/// capitalized word at sentence start, which is accepted only if the same
/// word is found as an entity elsewhere or never occurs in lowercase and is
/// not a common function word. A leading function word is dropped from a
/// sentence-initial run. Surfaces are unified case-insensitively.
pub fn detect_entities(streams: &[(StreamId, &[Token])]) -> EntityTable {
    let lowercase_words: HashSet<&str> = streams
        .iter()
        .flat_map(|(_, toks)| toks.iter())
        .filter(|t| t.as_str() == t.lower() && t.as_str().chars().any(char::is_alphabetic))
        .map(|t| t.lower())
        .collect();

    // (stream, start, end, confident)
    let mut runs: Vec<(StreamId, usize, usize, bool)> = Vec::new();
    for &(stream, tokens) in streams {
        let mut i = 0;
        while i < tokens.len() {
            if !tokens[i].is_capitalized() {
                i += 1;
                continue;
            }
            let mut end = i;
            while end < tokens.len() && tokens[end].is_capitalized() {
                end += 1;
            }
            let mut start = i;
            let at_sentence_start = i == 0 || is_sentence_terminator(tokens[i - 1].as_str());
            let mut confident = !at_sentence_start;
            if at_sentence_start {
                if OPENERS.contains(&tokens[start].lower()) {
                    start += 1;
                    confident = true;
                } else if end - start >= 2 {
                    confident = true;
                }
            }
            if start < end {
                runs.push((stream, start, end, confident));
            }
            i = end;
        }
    }

    let stream_tokens: HashMap<StreamId, &[Token]> = streams.iter().copied().collect();
    let key_of = |stream: &StreamId, s: usize, e: usize| -> String {
        stream_tokens[stream][s..e]
            .iter()
            .map(Token::lower)
            .collect::<Vec<_>>()
            .join(" ")
    };
    let confident_keys: HashSet<String> = runs
        .iter()
        .filter(|r| r.3)
        .map(|(st, s, e, _)| key_of(st, *s, *e))
        .collect();

    let mut keys: HashMap<String, i64> = HashMap::new();
    let mut raw: Vec<RawEntity> = Vec::new();
    let mut mentions: BTreeMap<StreamId, Vec<(i64, usize, usize)>> = BTreeMap::new();
    for (stream, s, e, confident) in runs {
        let key = key_of(&stream, s, e);
        let accept = confident
            || confident_keys.contains(&key)
            || (!OPENERS.contains(&key.as_str()) && !lowercase_words.contains(key.as_str()));
        if !accept {
            continue;
        }
        let next = raw.len() as i64;
        let k = *keys.entry(key).or_insert_with(|| {
            raw.push(RawEntity {
                key: next,
                surfaces: Vec::new(),
                kind: None,
            });
            next
        });
        mentions.entry(stream).or_default().push((k, s, e));
    }
    EntityTable::from_annotations(streams, raw, mentions)
        .expect("heuristic mentions are in bounds and non-overlapping")
}

/// Heuristic detection over a single token sequence (treated as the source).
pub fn detect_entities_heuristic(tokens: &[Token]) -> EntityTable {
    detect_entities(&[(StreamId::Source, tokens)])
}

fn anonymize_labeled(tokens: &[Token], mentions: &[Mention], label: &str) -> Result<Vec<Token>> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut cursor = 0;
    for m in mentions {
        if m.start < cursor {
            return Err(Error::OverlappingMentions {
                stream: label.to_string(),
                start: m.start,
                end: m.end,
            });
        }
        if m.start >= m.end || m.end > tokens.len() {
            return Err(Error::InvalidEntityTable(format!(
                "span {}..{} out of bounds for {label} ({} tokens)",
                m.start,
                m.end,
                tokens.len()
            )));
        }
        out.extend_from_slice(&tokens[cursor..m.start]);
        out.push(Token::new(&entity_token(m.entity)).expect("entity tokens are well-formed"));
        cursor = m.end;
    }
    out.extend_from_slice(&tokens[cursor..]);
    Ok(out)
}

/// Replace each mention span (sorted by start) with its `@entity<k>` token.
pub fn anonymize_spans(tokens: &[Token], mentions: &[Mention]) -> Result<Vec<Token>> {
    anonymize_labeled(tokens, mentions, "tokens")
}

/// Anonymize one stream of a document using the table's mentions for it.
pub fn anonymize(tokens: &[Token], table: &EntityTable, stream: StreamId) -> Result<Vec<Token>> {
    anonymize_labeled(tokens, table.mentions(stream), &stream.to_string())
}

/// Undo [`anonymize`], restoring each mention's exact original spelling.
pub fn de_anonymize(tokens: &[Token], table: &EntityTable, stream: StreamId) -> Result<Vec<Token>> {
    let mentions = table.mentions(stream);
    let mut next = mentions.iter().peekable();
    let mut out = Vec::with_capacity(tokens.len());
    for tok in tokens {
        match (parse_entity_token(tok.as_str()), next.peek()) {
            (Some(id), Some(m)) if m.entity == id => {
                let entity = table.get(id).ok_or_else(|| {
                    Error::InvalidEntityTable(format!("mention of unknown entity {id}"))
                })?;
                out.extend(entity.surfaces[m.surface].iter().cloned());
                next.next();
            }
            _ => out.push(tok.clone()),
        }
    }
    if next.peek().is_some() {
        return Err(Error::InvalidEntityTable(format!(
            "{} mentions of {stream} were not found in the anonymized tokens",
            next.count()
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokens_from_strs;

    fn toks(words: &[&str]) -> Vec<Token> {
        tokens_from_strs(words).unwrap()
    }

    fn spans(table: &EntityTable, id: usize) -> Vec<(usize, usize)> {
        table
            .mentions(StreamId::Source)
            .iter()
            .filter(|m| m.entity == id)
            .map(|m| (m.start, m.end))
            .collect()
    }

    #[test]
    fn heuristic_multi_token_run_at_start() {
        let t = toks(&["Aaron", "Ramsey", "scored"]);
        let table = detect_entities_heuristic(&t);
        assert_eq!(table.len(), 1);
        assert_eq!(table.get(0).unwrap().name(), "Aaron Ramsey");
        assert_eq!(spans(&table, 0), vec![(0, 2)]);
    }

    #[test]
    fn heuristic_mid_sentence_single() {
        let t = toks(&["win", "cuts", "Chelsea", "'s", "lead"]);
        let table = detect_entities_heuristic(&t);
        assert_eq!(table.len(), 1);
        assert_eq!(table.get(0).unwrap().name(), "Chelsea");
        assert_eq!(spans(&table, 0), vec![(2, 3)]);
    }

    #[test]
    fn heuristic_unifies_repeated_surfaces() {
        let t = toks(&["Arsenal", "beat", "Burnley", ".", "Arsenal", "won"]);
        let table = detect_entities_heuristic(&t);
        assert_eq!(table.len(), 2);
        assert_eq!(table.get(0).unwrap().name(), "Arsenal");
        assert_eq!(spans(&table, 0), vec![(0, 1), (4, 5)]);
        assert_eq!(table.get(1).unwrap().name(), "Burnley");
        assert_eq!(spans(&table, 1), vec![(2, 3)]);
    }

    #[test]
    fn heuristic_skips_sentence_initial_function_words() {
        let t = toks(&["The", "match", "ended", ".", "The", "Gunners", "won"]);
        let table = detect_entities_heuristic(&t);
        assert_eq!(table.len(), 1);
        assert_eq!(table.get(0).unwrap().name(), "Gunners");
        // a capitalized sentence opener that also occurs in lowercase is not a name
        let t = toks(&["Goals", "came", "late", ".", "two", "goals", "for", "Spurs"]);
        let table = detect_entities_heuristic(&t);
        assert_eq!(table.len(), 1);
        assert_eq!(table.get(0).unwrap().name(), "Spurs");
    }

    #[test]
    fn ids_follow_first_mention_across_streams() {
        let src = toks(&["in", "London", "today"]);
        let hl = toks(&["Paris", "and", "London"]);
        let table = detect_entities(&[(StreamId::Source, &src), (StreamId::Highlight(0), &hl)]);
        assert_eq!(table.get(0).unwrap().name(), "London");
        assert_eq!(table.get(1).unwrap().name(), "Paris");
        assert_eq!(table.entities_in(StreamId::Highlight(0)).len(), 2);
    }

    #[test]
    fn annotations_are_renumbered() {
        let src = toks(&["Burnley", "lost", "to", "Arsenal"]);
        let entities = vec![
            RawEntity { key: 7, surfaces: vec![toks(&["Burnley"])], kind: None },
            RawEntity { key: 0, surfaces: vec![toks(&["Arsenal"])], kind: None },
            RawEntity { key: 4, surfaces: vec![toks(&["EPL"])], kind: None },
        ];
        let mut mentions = BTreeMap::new();
        mentions.insert(StreamId::Source, vec![(0, 3, 4), (7, 0, 1)]);
        let table =
            EntityTable::from_annotations(&[(StreamId::Source, &src)], entities, mentions).unwrap();
        let names: Vec<_> = table.entries().iter().map(Entity::name).collect();
        assert_eq!(names, ["Burnley", "Arsenal", "EPL"]);
        assert_eq!(spans(&table, 0), vec![(0, 1)]);
        assert_eq!(spans(&table, 1), vec![(3, 4)]);
    }

    #[test]
    fn overlapping_annotations_rejected() {
        let src = toks(&["Aaron", "Ramsey", "scored"]);
        let entities = vec![
            RawEntity { key: 0, surfaces: vec![], kind: None },
            RawEntity { key: 1, surfaces: vec![], kind: None },
        ];
        let mut mentions = BTreeMap::new();
        mentions.insert(StreamId::Source, vec![(0, 0, 2), (1, 1, 2)]);
        let err = EntityTable::from_annotations(&[(StreamId::Source, &src)], entities, mentions)
            .unwrap_err();
        assert!(err.to_string().contains("overlapping entity mentions"));
    }

    #[test]
    fn mention_must_match_surface() {
        let src = toks(&["Aaron", "scored"]);
        let entities = vec![RawEntity { key: 0, surfaces: vec![toks(&["Ramsey"])], kind: None }];
        let mut mentions = BTreeMap::new();
        mentions.insert(StreamId::Source, vec![(0, 0, 1)]);
        assert!(EntityTable::from_annotations(&[(StreamId::Source, &src)], entities, mentions).is_err());
    }

    #[test]
    fn case_variant_surfaces_are_recorded() {
        let src = toks(&["ARSENAL", "beat", "Burnley"]);
        let entities = vec![RawEntity { key: 0, surfaces: vec![toks(&["Arsenal"])], kind: None }];
        let table = EntityTable::from_surfaces(&[(StreamId::Source, &src)], entities).unwrap();
        let e = table.get(0).unwrap();
        assert_eq!(e.surfaces.len(), 2);
        let anon = anonymize(&src, &table, StreamId::Source).unwrap();
        assert_eq!(de_anonymize(&anon, &table, StreamId::Source).unwrap(), src);
    }

    #[test]
    fn anonymize_substitutes_mentions() {
        let src = toks(&["Arsenal", "beat", "Burnley"]);
        let table = detect_entities_heuristic(&src);
        let anon = anonymize(&src, &table, StreamId::Source).unwrap();
        assert_eq!(anon, toks(&["@entity0", "beat", "@entity1"]));
    }

    #[test]
    fn anonymize_without_entities_is_identity() {
        let src = toks(&["nothing", "to", "see"]);
        let table = detect_entities_heuristic(&src);
        assert!(table.is_empty());
        assert_eq!(anonymize(&src, &table, StreamId::Source).unwrap(), src);
    }

    #[test]
    fn anonymize_spans_rejects_overlap() {
        let src = toks(&["a", "b", "c"]);
        let ms = [
            Mention { entity: 0, start: 0, end: 2, surface: 0 },
            Mention { entity: 1, start: 1, end: 3, surface: 0 },
        ];
        let err = anonymize_spans(&src, &ms).unwrap_err();
        assert!(err.to_string().contains("overlapping entity mentions"));
    }

    #[test]
    fn match_prefers_longest_surface() {
        let src = toks(&["Jack", "Wilshere", "met", "Wilshere"]);
        let entities = vec![
            RawEntity { key: 0, surfaces: vec![toks(&["Wilshere"])], kind: None },
            RawEntity { key: 1, surfaces: vec![toks(&["Jack", "Wilshere"])], kind: None },
        ];
        let table = EntityTable::from_surfaces(&[(StreamId::Source, &src)], entities).unwrap();
        let ms = table.mentions(StreamId::Source);
        assert_eq!(ms.len(), 2);
        assert_eq!((ms[0].start, ms[0].end), (0, 2));
        assert_eq!((ms[1].start, ms[1].end), (3, 4));
        // first-mention renumbering: "Jack Wilshere" comes first
        assert_eq!(table.get(ms[0].entity).unwrap().name(), "Jack Wilshere");
        assert_eq!(ms[0].entity, 0);
    }

    #[test]
    fn stream_ids_parse() {
        assert_eq!("source".parse::<StreamId>().unwrap(), StreamId::Source);
        assert_eq!("highlight_3".parse::<StreamId>().unwrap(), StreamId::Highlight(3));
        assert!("summary".parse::<StreamId>().is_err());
        assert_eq!(StreamId::Highlight(2).to_string(), "highlight_2");
    }
}
