use serde::{Deserialize, Serialize};

/// A lowercased token and the byte range it occupies in the source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Splits on every character that is neither alphanumeric nor an apostrophe
/// flanked by alphanumerics, lowercasing each token.
///
/// Spans are UTF-8 byte offsets into `text`.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    for (k, &(pos, c)) in chars.iter().enumerate() {
        let keep = if c.is_alphanumeric() {
            true
        } else if is_apostrophe(c) {
            let prev_ok = start.is_some();
            let next_ok = chars.get(k + 1).is_some_and(|&(_, n)| n.is_alphanumeric());
            prev_ok && next_ok
        } else {
            false
        };
        match (keep, start) {
            (true, None) => start = Some(pos),
            (false, Some(s)) => {
                tokens.push(make(text, s, pos));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        tokens.push(make(text, s, text.len()));
    }
    tokens
}

fn make(text: &str, start: usize, end: usize) -> Token {
    Token {
        text: text[start..end].to_lowercase(),
        start,
        end,
    }
}
