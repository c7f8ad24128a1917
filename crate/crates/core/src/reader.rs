//! Readers that answer cloze questions from a context passage.
//!
//! Three implementations: an oracle that only checks whether the gold entity
//! is present, a deterministic lexical-window baseline, and a bridge to an
//! external process speaking line-delimited JSON over stdin/stdout.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::process::{Command, Stdio};

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::corpus::PLACEHOLDER;
use crate::error::{Error, Result};

/// Wire format of one question sent to a reader.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReaderRequest {
    pub qid: String,
    pub question: Vec<String>,
    pub context: Vec<String>,
    pub candidates: Vec<String>,
    /// Gold answer; never sent to external readers.
    #[serde(skip)]
    pub gold: Option<String>,
}

/// Wire format of one answer; `null` (or `"NONE"`) means no answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReaderAnswer {
    pub qid: String,
    #[serde(deserialize_with = "none_or_string")]
    pub answer: Option<String>,
}

fn none_or_string<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<String>, D::Error> {
    let v: Option<String> = Option::deserialize(d)?;
    Ok(v.filter(|s| s != "NONE"))
}

impl ReaderAnswer {
    pub fn none(qid: &str) -> Self {
        ReaderAnswer {
            qid: qid.to_string(),
            answer: None,
        }
    }
}

/// Answers aligned with the requests, plus any warnings raised on the way.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReaderOutput {
    pub answers: Vec<ReaderAnswer>,
    pub warnings: Vec<String>,
}

/// Gold answer if its token occurs in the context, otherwise no answer.
pub fn answer_oracle(req: &ReaderRequest) -> Result<ReaderAnswer> {
    let gold = req
        .gold
        .as_deref()
        .ok_or_else(|| Error::MissingGold(req.qid.clone()))?;
    let present = req.context.iter().any(|t| t == gold) && req.candidates.iter().any(|c| c == gold);
    Ok(ReaderAnswer {
        qid: req.qid.clone(),
        answer: present.then(|| gold.to_string()),
    })
}

pub const DEFAULT_WINDOW: usize = 5;

/// Lexical-window baseline.
///
/// Only candidates that occur in the context are considered. A candidate
/// scores, at each of its context positions, the number of distinct
/// (lowercased) question tokens other than `@placeholder` and its own id
/// found within `window` tokens on either side; its score is the best over
/// positions. Highest score wins; ties go to the candidate that occurs
/// earliest in the context.
pub fn answer_lexical(req: &ReaderRequest, window: usize) -> ReaderAnswer {
    assert!(window >= 1, "window must be at least 1");
    let content: BTreeSet<String> = req
        .question
        .iter()
        .filter(|t| t.as_str() != PLACEHOLDER)
        .map(|t| t.to_lowercase())
        .collect();
    let context: Vec<String> = req.context.iter().map(|t| t.to_lowercase()).collect();
    let candidates: BTreeSet<&str> = req.candidates.iter().map(String::as_str).collect();

    let mut best: Option<(usize, usize, &str)> = None;
    for cand in candidates {
        let positions: Vec<usize> = req
            .context
            .iter()
            .enumerate()
            .filter(|(_, t)| t.as_str() == cand)
            .map(|(i, _)| i)
            .collect();
        let Some(&first) = positions.first() else {
            continue;
        };
        let own = cand.to_lowercase();
        let score = positions
            .iter()
            .map(|&p| {
                let lo = p.saturating_sub(window);
                let hi = (p + window).min(context.len() - 1);
                content
                    .iter()
                    .filter(|q| **q != own)
                    .filter(|q| (lo..=hi).any(|i| i != p && context[i] == **q))
                    .count()
            })
            .max()
            .unwrap_or(0);
        let better = match best {
            None => true,
            Some((s, f, _)) => score > s || (score == s && first < f),
        };
        if better {
            best = Some((score, first, cand));
        }
    }
    ReaderAnswer {
        qid: req.qid.clone(),
        answer: best.map(|(_, _, c)| c.to_string()),
    }
}

/// Send all requests to `command` (run via `sh -c`) as JSONL on stdin and
/// read JSONL answers from its stdout, joined back by qid.
pub fn run_external_reader(requests: &[ReaderRequest], command: &str) -> Result<ReaderOutput> {
    let mut payload = Vec::new();
    for req in requests {
        serde_json::to_writer(&mut payload, req)?;
        payload.push(b'\n');
    }

    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| Error::ExternalReader(format!("cannot start {command:?}: {e}")))?;

    let mut stdin = child.stdin.take().expect("stdin is piped");
    let writer = std::thread::spawn(move || match stdin.write_all(&payload) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e),
        _ => Ok(()),
    });
    let mut stdout = String::new();
    child
        .stdout
        .take()
        .expect("stdout is piped")
        .read_to_string(&mut stdout)
        .map_err(|e| Error::ExternalReader(format!("reading answers: {e}")))?;
    let status = child
        .wait()
        .map_err(|e| Error::ExternalReader(e.to_string()))?;
    writer
        .join()
        .map_err(|_| Error::ExternalReader("writer thread panicked".into()))?
        .map_err(|e| Error::ExternalReader(format!("writing requests: {e}")))?;
    if !status.success() {
        return Err(Error::ExternalReader(format!("{command:?} exited with {status}")));
    }

    let mut warnings = Vec::new();
    let mut by_qid: HashMap<String, Option<String>> = HashMap::new();
    for (i, line) in stdout.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ans: ReaderAnswer = serde_json::from_str(line).map_err(|e| Error::MalformedLine {
            path: "<external reader stdout>".into(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if by_qid.contains_key(&ans.qid) {
            warnings.push(format!("duplicate answer for {}; keeping the first", ans.qid));
            continue;
        }
        by_qid.insert(ans.qid, ans.answer);
    }

    let answers = requests
        .iter()
        .map(|req| match by_qid.remove(&req.qid) {
            None => {
                warnings.push(format!("no answer for {}; scored incorrect", req.qid));
                ReaderAnswer::none(&req.qid)
            }
            Some(Some(a)) if !req.candidates.contains(&a) => {
                warnings.push(format!("answer {a:?} for {} is not a candidate; scored incorrect", req.qid));
                ReaderAnswer::none(&req.qid)
            }
            Some(answer) => ReaderAnswer {
                qid: req.qid.clone(),
                answer,
            },
        })
        .collect();
    let mut unknown: Vec<_> = by_qid.into_keys().collect();
    unknown.sort();
    for qid in unknown {
        warnings.push(format!("answer for unknown question {qid} ignored"));
    }
    Ok(ReaderOutput { answers, warnings })
}

/// Which reader to use.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReaderChoice {
    Oracle,
    Lexical { window: usize },
    External { command: String },
}

impl ReaderChoice {
    pub fn lexical() -> Self {
        ReaderChoice::Lexical {
            window: DEFAULT_WINDOW,
        }
    }

    /// Answer a batch. Per-request readers are pure; the external reader is
    /// invoked once for the whole batch.
    pub fn answer_all(&self, requests: &[ReaderRequest]) -> Result<ReaderOutput> {
        match self {
            ReaderChoice::Oracle => Ok(ReaderOutput {
                answers: requests.iter().map(answer_oracle).collect::<Result<_>>()?,
                warnings: Vec::new(),
            }),
            ReaderChoice::Lexical { window } => {
                if *window == 0 {
                    return Err(Error::InvalidArgument("reader window must be at least 1".into()));
                }
                Ok(ReaderOutput {
                    answers: requests.par_iter().map(|r| answer_lexical(r, *window)).collect(),
                    warnings: Vec::new(),
                })
            }
            ReaderChoice::External { command } => run_external_reader(requests, command),
        }
    }

    pub fn is_external(&self) -> bool {
        matches!(self, ReaderChoice::External { .. })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(question: &str, context: &str, candidates: &[&str], gold: Option<&str>) -> ReaderRequest {
        let split = |s: &str| s.split_whitespace().map(String::from).collect();
        ReaderRequest {
            qid: "q".into(),
            question: split(question),
            context: split(context),
            candidates: candidates.iter().map(|s| s.to_string()).collect(),
            gold: gold.map(String::from),
        }
    }

    #[test]
    fn oracle_cases() {
        let r = req("@placeholder won", "@entity0 won", &["@entity0"], Some("@entity0"));
        assert_eq!(answer_oracle(&r).unwrap().answer.as_deref(), Some("@entity0"));
        let r = req("@placeholder won", "@entity1 won", &["@entity0", "@entity1"], Some("@entity0"));
        assert_eq!(answer_oracle(&r).unwrap().answer, None);
        let r = req("@placeholder won", "", &["@entity0"], Some("@entity0"));
        assert_eq!(answer_oracle(&r).unwrap().answer, None);
        let r = req("@placeholder won", "@entity0", &["@entity0"], None);
        assert!(matches!(answer_oracle(&r), Err(Error::MissingGold(_))));
    }

    #[test]
    fn lexical_singleton() {
        let r = req("@placeholder won", "yesterday @entity3 lost", &["@entity0", "@entity3"], None);
        assert_eq!(answer_lexical(&r, 5).answer.as_deref(), Some("@entity3"));
    }

    #[test]
    fn lexical_prefers_aligned_candidate() {
        let r = req(
            "@placeholder beat @entity1 1-0",
            "@entity0 beat @entity1 1-0",
            &["@entity0", "@entity1"],
            None,
        );
        assert_eq!(answer_lexical(&r, 5).answer.as_deref(), Some("@entity0"));
    }

    #[test]
    fn lexical_tie_goes_to_earliest() {
        let r = req("@placeholder", "x @entity1 y @entity0", &["@entity0", "@entity1"], None);
        assert_eq!(answer_lexical(&r, 5).answer.as_deref(), Some("@entity1"));
    }

    #[test]
    fn lexical_window_locality() {
        let ctx = "@entity0 a b c d e f g h i j k l m @entity1 q r s @entity2 scored twice late";
        let r = req(
            "@placeholder scored twice late",
            ctx,
            &["@entity0", "@entity1", "@entity2"],
            None,
        );
        assert_eq!(answer_lexical(&r, 5).answer.as_deref(), Some("@entity2"));
    }

    #[test]
    fn lexical_no_candidate_in_context() {
        let r = req("@placeholder won", "nobody won", &["@entity0"], None);
        assert_eq!(answer_lexical(&r, 5).answer, None);
    }

    #[test]
    fn gold_is_not_serialized() {
        let r = req("@placeholder", "@entity0", &["@entity0"], Some("@entity0"));
        let line = serde_json::to_string(&r).unwrap();
        assert!(!line.contains("gold"));
    }

    #[test]
    fn answer_wire_accepts_null_and_none() {
        let a: ReaderAnswer = serde_json::from_str(r#"{"qid":"x","answer":null}"#).unwrap();
        assert_eq!(a.answer, None);
        let a: ReaderAnswer = serde_json::from_str(r#"{"qid":"x","answer":"NONE"}"#).unwrap();
        assert_eq!(a.answer, None);
        let a: ReaderAnswer = serde_json::from_str(r#"{"qid":"x","answer":"@entity2"}"#).unwrap();
        assert_eq!(a.answer.as_deref(), Some("@entity2"));
    }
}
