//! Corpus ingestion: JSON Lines archives, tokenization, vocabulary, encoding
//! and train/val/test splitting.

mod encode;
mod tokenize;
mod vocab;

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use encode::{decode_ids, encode_article, encode_example, EncodedExample};
pub use tokenize::{tokenize, tokenize_bytes, WORDSPACE};
pub use vocab::{
    build_vocabulary, TokenId, Vocabulary, NUM_RESERVED, PAD, PAD_TOKEN, START, START_TOKEN,
    STOP, STOP_TOKEN, UNK, UNK_TOKEN,
};

use crate::error::{Error, Result};

/// One scraped article and its title.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawExample {
    pub article: String,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl RawExample {
    pub fn new(article: impl Into<String>, title: impl Into<String>) -> Self {
        Self {
            article: article.into(),
            title: title.into(),
            source: None,
        }
    }

    fn validate(&self) -> std::result::Result<(), &'static str> {
        if self.article.trim().is_empty() {
            return Err("empty article");
        }
        if self.title.trim().is_empty() {
            return Err("empty title");
        }
        Ok(())
    }
}

/// Reads a JSON Lines corpus. Blank lines are skipped; a record with an
/// empty article or title is a format error.
pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<RawExample>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).split(b'\n').enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let text = std::str::from_utf8(&line).map_err(|e| Error::Format {
            line: i + 1,
            message: format!("invalid UTF-8 at byte offset {}", e.valid_up_to()),
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let ex: RawExample =
            serde_json::from_str(text).map_err(|source| Error::Json { line: i + 1, source })?;
        ex.validate().map_err(|m| Error::format(i + 1, m))?;
        out.push(ex);
    }
    Ok(out)
}

pub fn write_jsonl(path: impl AsRef<Path>, corpus: &[RawExample]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for ex in corpus {
        serde_json::to_writer(&mut buf, ex).map_err(|source| Error::Json { line: 0, source })?;
        buf.push(b'\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Keeps the examples whose tokenized title has at least `min_tokens` tokens.
pub fn filter_by_title_length(corpus: &[RawExample], min_tokens: usize) -> Vec<RawExample> {
    corpus
        .iter()
        .filter(|ex| tokenize(&ex.title).len() >= min_tokens)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSplit {
    pub train: Vec<RawExample>,
    pub val: Vec<RawExample>,
    pub test: Vec<RawExample>,
}

/// Seeded shuffle followed by a contiguous partition. Val and test sizes are
/// `floor(n * ratio)`; the remainder goes to train.
pub fn split_corpus(corpus: &[RawExample], ratios: (f64, f64, f64), seed: u64) -> Result<CorpusSplit> {
    let (tr, va, te) = ratios;
    if !(tr > 0.0 && va > 0.0 && te > 0.0) || ((tr + va + te) - 1.0).abs() > 1e-9 {
        return Err(Error::Argument(format!(
            "split ratios {ratios:?} must be positive and sum to 1"
        )));
    }
    if corpus.len() < 3 {
        return Err(Error::Corpus(format!(
            "need at least 3 examples to split, got {}",
            corpus.len()
        )));
    }
    let n = corpus.len();
    // nudge so that e.g. 0.29 * 100 floors to 29
    let n_val = (n as f64 * va + 1e-9).floor() as usize;
    let n_test = (n as f64 * te + 1e-9).floor() as usize;
    let n_train = n - n_val - n_test;

    let mut shuffled = corpus.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = shuffled.split_off(n_train + n_val);
    let val = shuffled.split_off(n_train);
    Ok(CorpusSplit {
        train: shuffled,
        val,
        test,
    })
}
