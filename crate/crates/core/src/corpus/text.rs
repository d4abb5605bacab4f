//! Deterministic sentence splitting and tokenization.
//!
//! Tokens are produced by splitting on whitespace and then peeling any
//! leading or trailing non-alphanumeric characters off as one-character
//! tokens. Characters inside a word (apostrophes, hyphens) stay attached.
//! A sentence ends at `.`, `!` or `?` followed by whitespace, or at the end
//! of the text.

fn is_peelable(c: char) -> bool {
    !c.is_alphanumeric()
}

/// Tokenize a single chunk of text.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let mut start = 0;
        let mut end = chars.len();
        while start < end && is_peelable(chars[start]) {
            start += 1;
        }
        while end > start && is_peelable(chars[end - 1]) {
            end -= 1;
        }
        for &c in &chars[..start] {
            out.push(c.to_string());
        }
        if start < end {
            out.push(chars[start..end].iter().collect());
        }
        for &c in &chars[end..] {
            out.push(c.to_string());
        }
    }
    out
}

/// Split text into sentence strings. Terminal punctuation stays with its
/// sentence.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if matches!(c, '.' | '!' | '?') {
            if let Some(&(_, next)) = iter.peek() {
                if next.is_whitespace() {
                    let end = i + c.len_utf8();
                    let piece = text[start..end].trim();
                    if !piece.is_empty() {
                        out.push(piece);
                    }
                    start = end;
                }
            }
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Lowercase, sentence-split and tokenize a review text. Empty sentences are
/// dropped.
pub fn analyze(text: &str) -> Vec<Vec<String>> {
    let lowered = text.to_lowercase();
    split_sentences(&lowered)
        .into_iter()
        .map(tokenize)
        .filter(|s| !s.is_empty())
        .collect()
}

pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(t.as_ref());
    }
    out
}
