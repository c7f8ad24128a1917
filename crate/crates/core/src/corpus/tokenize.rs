//! Canonical whitespace + punctuation tokenizer.
//!
//! Every downstream count (ROUGE units, mention spans, question tokens) is
//! defined over the output of [`tokenize`], so its behaviour is fixed:
//!
//! * split on Unicode whitespace;
//! * peel leading and trailing characters from `. , : ; ! ? ' "` off each
//!   chunk, one token per character;
//! * an apostrophe clitic (`'s`, `'t`, `'d`, `'m`, `'re`, `'ve`, `'ll`) at
//!   the start of a chunk stays attached, so `Chelsea 's` keeps `'s` whole;
//! * case is preserved.

use std::ops::Range;

use super::Token;

const SPLIT_PUNCT: [char; 8] = ['.', ',', ':', ';', '!', '?', '\'', '"'];
const CLITICS: [&str; 7] = ["s", "t", "d", "m", "re", "ve", "ll"];

fn is_split_punct(c: char) -> bool {
    SPLIT_PUNCT.contains(&c)
}

fn is_clitic(rest: &[char]) -> bool {
    let word: String = rest.iter().collect::<String>().to_ascii_lowercase();
    CLITICS.contains(&word.as_str())
}

fn push_chars(out: &mut Vec<Token>, chars: &[char]) {
    let text: String = chars.iter().collect();
    if let Some(tok) = Token::new(&text) {
        out.push(tok);
    }
}

/// Split raw text into tokens.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let mut end = chars.len();
        while end > 0 && is_split_punct(chars[end - 1]) {
            end -= 1;
        }
        if end == 0 {
            for c in &chars {
                push_chars(&mut out, std::slice::from_ref(c));
            }
            continue;
        }
        let mut start = 0;
        while is_split_punct(chars[start]) {
            if chars[start] == '\'' && is_clitic(&chars[start + 1..end]) {
                break;
            }
            push_chars(&mut out, &chars[start..=start]);
            start += 1;
        }
        push_chars(&mut out, &chars[start..end]);
        for c in &chars[end..] {
            push_chars(&mut out, std::slice::from_ref(c));
        }
    }
    out
}

/// Tokens that terminate a sentence.
pub fn is_sentence_terminator(token: &str) -> bool {
    matches!(token, "." | "!" | "?")
}

/// Sentence ranges over `tokens`, excluding the terminator tokens.
///
/// A terminator covered by one of `protected` (e.g. an entity mention) does
/// not split. Empty sentences are dropped.
pub fn sentence_spans(tokens: &[Token], protected: &[Range<usize>]) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start = 0;
    for (i, tok) in tokens.iter().enumerate() {
        if is_sentence_terminator(tok.as_str()) && !protected.iter().any(|r| r.contains(&i)) {
            if start < i {
                spans.push(start..i);
            }
            start = i + 1;
        }
    }
    if start < tokens.len() {
        spans.push(start..tokens.len());
    }
    spans
}
