//! Trigger-trigram selection over per-token scores and highlight rendering.
//!
//! Candidates are visited by descending score (lower index first on ties).
//! A candidate is accepted when it is not excluded and the trigram centred
//! on it, clipped to the sequence, shares no token with an accepted trigram.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::Token;

#[derive(Debug, Error, PartialEq)]
pub enum ExplainError {
    #[error("span centred at token {center} is outside a sequence of {len} tokens")]
    SpanOutOfRange { center: usize, len: usize },
    #[error("span [{first}, {last}] is not the clipped trigram around token {center}")]
    MalformedSpan { center: usize, first: usize, last: usize },
    #[error("token {index} span {start}..{end} does not fit the text")]
    TokenOutsideText { index: usize, start: usize, end: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerSpan {
    pub center: usize,
    /// First and last token index of the clipped trigram, inclusive.
    pub first: usize,
    pub last: usize,
    pub score: f64,
}

impl TriggerSpan {
    fn around(center: usize, len: usize, score: f64) -> Self {
        TriggerSpan {
            center,
            first: center.saturating_sub(1),
            last: (center + 1).min(len - 1),
            score,
        }
    }

    /// Token surface forms covered by the span.
    pub fn surface<'a, T: AsRef<str>>(&self, tokens: &'a [(T, f64)]) -> Vec<&'a str> {
        tokens[self.first..=self.last].iter().map(|(t, _)| t.as_ref()).collect()
    }
}

/// Marker tokens such as `[CLS]`, `[SEP]` or `<s>` emitted by subword models.
pub fn is_special_token(token: &str) -> bool {
    let bracketed = |open: char, close: char| {
        token.len() > 2
            && token.starts_with(open)
            && token.ends_with(close)
            && token[1..token.len() - 1]
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '/')
    };
    bracketed('[', ']') || bracketed('<', '>')
}

/// Greedy selection of up to `n` non-overlapping trigger trigrams.
///
/// NaN scores are never selected.
pub fn select_trigger_trigrams<T, F>(tokens: &[(T, f64)], n: usize, excluded: F) -> Vec<TriggerSpan>
where
    T: AsRef<str>,
    F: Fn(&str) -> bool,
{
    let len = tokens.len();
    let mut order: Vec<usize> = (0..len).filter(|&i| !tokens[i].1.is_nan()).collect();
    order.sort_by(|&a, &b| tokens[b].1.total_cmp(&tokens[a].1).then(a.cmp(&b)));

    let mut taken = vec![false; len];
    let mut accepted = Vec::new();
    for i in order {
        if accepted.len() >= n {
            break;
        }
        if excluded(tokens[i].0.as_ref()) {
            continue;
        }
        let span = TriggerSpan::around(i, len, tokens[i].1);
        if taken[span.first..=span.last].iter().any(|&t| t) {
            continue;
        }
        taken[span.first..=span.last].iter_mut().for_each(|t| *t = true);
        accepted.push(span);
    }
    accepted
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightSpan {
    /// Character (Unicode scalar) offsets into the text, end exclusive.
    pub start: usize,
    pub end: usize,
    pub center_token: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Highlight {
    pub id: String,
    pub text: String,
    pub spans: Vec<HighlightSpan>,
}

impl Highlight {
    /// Substring of the text covered by `span`.
    pub fn excerpt(&self, span: &HighlightSpan) -> String {
        self.text.chars().skip(span.start).take(span.end - span.start).collect()
    }
}

/// Maps trigger spans onto character offsets of `text`.
///
/// `tokens` must be the tokenization the spans were selected from, with
/// byte offsets into `text`.
pub fn render_highlight(
    id: &str,
    text: &str,
    tokens: &[Token],
    spans: &[TriggerSpan],
) -> Result<Highlight, ExplainError> {
    for (index, t) in tokens.iter().enumerate() {
        let fits =
            t.start <= t.end && t.end <= text.len() && text.is_char_boundary(t.start) && text.is_char_boundary(t.end);
        if !fits {
            return Err(ExplainError::TokenOutsideText {
                index,
                start: t.start,
                end: t.end,
            });
        }
    }
    let char_offset = |byte: usize| text[..byte].chars().count();
    let mut out = Vec::with_capacity(spans.len());
    for s in spans {
        if s.center >= tokens.len() {
            return Err(ExplainError::SpanOutOfRange {
                center: s.center,
                len: tokens.len(),
            });
        }
        let expected = TriggerSpan::around(s.center, tokens.len(), s.score);
        if (expected.first, expected.last) != (s.first, s.last) {
            return Err(ExplainError::MalformedSpan {
                center: s.center,
                first: s.first,
                last: s.last,
            });
        }
        let start = tokens[s.first..=s.last].iter().map(|t| t.start).min().unwrap();
        let end = tokens[s.first..=s.last].iter().map(|t| t.end).max().unwrap();
        out.push(HighlightSpan {
            start: char_offset(start),
            end: char_offset(end),
            center_token: tokens[s.center].text.clone(),
            score: s.score,
        });
    }
    Ok(Highlight {
        id: id.to_string(),
        text: text.to_string(),
        spans: out,
    })
}

/// Locates externally produced tokens (possibly `##`-prefixed word pieces,
/// possibly lowercased) in `text`, in order. Special tokens get an empty
/// span at the current position. Returns `None` when some token cannot be
/// found.
pub fn align_tokens(text: &str, tokens: &[&str]) -> Option<Vec<Token>> {
    let mut cursor = 0;
    let mut out = Vec::with_capacity(tokens.len());
    for &raw in tokens {
        if is_special_token(raw) {
            out.push(Token {
                text: raw.to_string(),
                start: cursor,
                end: cursor,
            });
            continue;
        }
        let piece = raw.strip_prefix("##").unwrap_or(raw);
        if piece.is_empty() {
            return None;
        }
        let (start, end) = find_caseless(text, cursor, piece)?;
        out.push(Token {
            text: raw.to_string(),
            start,
            end,
        });
        cursor = end;
    }
    Some(out)
}

fn find_caseless(text: &str, from: usize, needle: &str) -> Option<(usize, usize)> {
    let needle: Vec<char> = needle.chars().flat_map(char::to_lowercase).collect();
    for (offset, _) in text[from..].char_indices() {
        let start = from + offset;
        let mut matched = 0;
        for (i, c) in text[start..].char_indices() {
            let lower: Vec<char> = c.to_lowercase().collect();
            if needle.len() < matched + lower.len() || needle[matched..matched + lower.len()] != lower[..] {
                break;
            }
            matched += lower.len();
            if matched == needle.len() {
                return Some((start, start + i + c.len_utf8()));
            }
        }
    }
    None
}
