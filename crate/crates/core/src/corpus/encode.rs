use super::tokenize::tokenize;
use super::vocab::{TokenId, Vocabulary, PAD, START, STOP, UNK, UNK_TOKEN};
use super::RawExample;
use crate::error::{Error, Result};

/// An article/title pair as id sequences, with the per-example extended ids
/// the copy mechanism needs.
///
/// Article tokens missing from the vocabulary get temporary ids
/// `vocab_size + k` in first-occurrence order. Title tokens that are one of
/// those article OOVs are targeted through their extended id; other title
/// OOVs become `UNK`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedExample {
    /// Size of the vocabulary the ids were produced against.
    pub vocab_size: usize,
    pub encoder_ids: Vec<TokenId>,
    pub encoder_extended_ids: Vec<TokenId>,
    pub article_oovs: Vec<String>,
    pub decoder_input_ids: Vec<TokenId>,
    pub target_ids: Vec<TokenId>,
    pub encoder_mask: Vec<bool>,
    pub decoder_mask: Vec<bool>,
    /// The truncated title tokens, used as the scoring reference.
    pub reference: Vec<String>,
}

impl EncodedExample {
    /// Number of unpadded encoder positions.
    pub fn article_len(&self) -> usize {
        self.encoder_mask.iter().filter(|&&m| m).count()
    }

    /// Number of unpadded decoder steps.
    pub fn title_len(&self) -> usize {
        self.decoder_mask.iter().filter(|&&m| m).count()
    }

    pub fn extended_vocab_size(&self) -> usize {
        self.vocab_size + self.article_oovs.len()
    }

    /// Right-pads encoder and decoder sequences with `PAD` to the given
    /// lengths, marking the new positions as padding.
    pub fn pad_to(&mut self, enc_len: usize, dec_len: usize) -> Result<()> {
        if enc_len < self.encoder_ids.len() || dec_len < self.decoder_input_ids.len() {
            return Err(Error::Argument(format!(
                "cannot pad ({}, {}) down to ({enc_len}, {dec_len})",
                self.encoder_ids.len(),
                self.decoder_input_ids.len()
            )));
        }
        self.encoder_ids.resize(enc_len, PAD);
        self.encoder_extended_ids.resize(enc_len, PAD);
        self.encoder_mask.resize(enc_len, false);
        self.decoder_input_ids.resize(dec_len, PAD);
        self.target_ids.resize(dec_len, PAD);
        self.decoder_mask.resize(dec_len, false);
        Ok(())
    }
}

pub fn encode_example(
    raw: &RawExample,
    vocab: &Vocabulary,
    max_enc_len: usize,
    max_dec_len: usize,
) -> Result<EncodedExample> {
    if max_enc_len < 2 || max_dec_len < 2 {
        return Err(Error::Argument(format!(
            "max lengths must be at least 2, got ({max_enc_len}, {max_dec_len})"
        )));
    }
    let mut article = tokenize(&raw.article);
    let mut title = tokenize(&raw.title);
    if article.is_empty() {
        return Err(Error::ExampleRejected("article has no tokens".into()));
    }
    if title.is_empty() {
        return Err(Error::ExampleRejected("title has no tokens".into()));
    }
    article.truncate(max_enc_len);
    title.truncate(max_dec_len - 1);

    let vocab_size = vocab.len();
    let mut article_oovs: Vec<String> = Vec::new();
    let mut encoder_ids = Vec::with_capacity(article.len());
    let mut encoder_extended_ids = Vec::with_capacity(article.len());
    for tok in &article {
        match vocab.id(tok) {
            Some(id) => {
                encoder_ids.push(id);
                encoder_extended_ids.push(id);
            }
            None => {
                let k = match article_oovs.iter().position(|o| o == tok) {
                    Some(k) => k,
                    None => {
                        article_oovs.push(tok.clone());
                        article_oovs.len() - 1
                    }
                };
                encoder_ids.push(UNK);
                encoder_extended_ids.push(vocab_size + k);
            }
        }
    }

    let mut decoder_input_ids = Vec::with_capacity(title.len() + 1);
    let mut target_ids = Vec::with_capacity(title.len() + 1);
    decoder_input_ids.push(START);
    for tok in &title {
        let base = vocab.id_or_unk(tok);
        decoder_input_ids.push(base);
        let target = if base == UNK {
            article_oovs
                .iter()
                .position(|o| o == tok)
                .map_or(UNK, |k| vocab_size + k)
        } else {
            base
        };
        target_ids.push(target);
    }
    target_ids.push(STOP);

    let enc_len = encoder_ids.len();
    let dec_len = target_ids.len();
    Ok(EncodedExample {
        vocab_size,
        encoder_ids,
        encoder_extended_ids,
        article_oovs,
        decoder_input_ids,
        target_ids,
        encoder_mask: vec![true; enc_len],
        decoder_mask: vec![true; dec_len],
        reference: title,
    })
}

/// Encodes an article alone, for inference. The decoder side holds just
/// `START` → `STOP` and the reference is empty.
pub fn encode_article(text: &str, vocab: &Vocabulary, max_enc_len: usize) -> Result<EncodedExample> {
    if max_enc_len < 1 {
        return Err(Error::Argument("max_enc_len must be at least 1".into()));
    }
    let mut article = tokenize(text);
    if article.is_empty() {
        return Err(Error::ExampleRejected("article has no tokens".into()));
    }
    article.truncate(max_enc_len);
    let vocab_size = vocab.len();
    let mut article_oovs: Vec<String> = Vec::new();
    let mut encoder_extended_ids = Vec::with_capacity(article.len());
    for tok in &article {
        let id = vocab.id(tok).unwrap_or_else(|| {
            let k = article_oovs.iter().position(|o| o == tok).unwrap_or_else(|| {
                article_oovs.push(tok.clone());
                article_oovs.len() - 1
            });
            vocab_size + k
        });
        encoder_extended_ids.push(id);
    }
    let encoder_ids = encoder_extended_ids
        .iter()
        .map(|&id| if id >= vocab_size { UNK } else { id })
        .collect();
    Ok(EncodedExample {
        vocab_size,
        encoder_ids,
        encoder_extended_ids,
        article_oovs,
        decoder_input_ids: vec![START],
        target_ids: vec![STOP],
        encoder_mask: vec![true; article.len()],
        decoder_mask: vec![true],
        reference: Vec::new(),
    })
}

/// Maps ids from the extended space back to surface tokens.
pub fn decode_ids(ids: &[TokenId], vocab: &Vocabulary, article_oovs: &[String]) -> Vec<String> {
    ids.iter()
        .map(|&id| {
            if let Some(t) = vocab.token(id) {
                t.to_string()
            } else {
                article_oovs
                    .get(id - vocab.len())
                    .cloned()
                    .unwrap_or_else(|| UNK_TOKEN.to_string())
            }
        })
        .collect()
}
