//! Whitespace and punctuation tokenizer for Ge'ez-script text.
//!
//! Ethiopic punctuation and a small ASCII set are split into their own
//! tokens. The Ethiopic wordspace `፡` separates words and is dropped. There
//! is no case folding or normalization.

use crate::error::{Error, Result};

/// Ethiopic wordspace; separates tokens and is never emitted.
pub const WORDSPACE: char = '\u{1361}';

const ETHIOPIC_PUNCT: [char; 6] = ['።', '፣', '፤', '፥', '፦', '፧'];
const ASCII_PUNCT: [char; 9] = ['.', ',', ';', ':', '!', '?', '"', '(', ')'];

fn is_punct(c: char) -> bool {
    ETHIOPIC_PUNCT.contains(&c) || ASCII_PUNCT.contains(&c)
}

pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() || ch == WORDSPACE {
            flush(&mut current, &mut tokens);
        } else if is_punct(ch) {
            flush(&mut current, &mut tokens);
            tokens.push(ch.to_string());
        } else {
            current.push(ch);
        }
    }
    flush(&mut current, &mut tokens);
    tokens
}

/// Tokenizes raw bytes, reporting the offset of the first invalid UTF-8 byte.
pub fn tokenize_bytes(bytes: &[u8]) -> Result<Vec<String>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Encoding {
        offset: e.valid_up_to(),
    })?;
    Ok(tokenize(text))
}

fn flush(current: &mut String, tokens: &mut Vec<String>) {
    if !current.is_empty() {
        tokens.push(std::mem::take(current));
    }
}
