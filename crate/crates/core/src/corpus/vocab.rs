use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::tokenize::tokenize;
use super::RawExample;
use crate::error::{Error, Result};

pub type TokenId = usize;

pub const PAD: TokenId = 0;
pub const UNK: TokenId = 1;
pub const START: TokenId = 2;
pub const STOP: TokenId = 3;
pub const NUM_RESERVED: usize = 4;

pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = "[UNK]";
pub const START_TOKEN: &str = "[START]";
pub const STOP_TOKEN: &str = "[STOP]";

const RESERVED: [&str; NUM_RESERVED] = [PAD_TOKEN, UNK_TOKEN, START_TOKEN, STOP_TOKEN];

/// Bidirectional token/id map over a fixed-size vocabulary.
///
/// Ids 0..4 are the reserved symbols; the rest are ordered by descending
/// corpus frequency, ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    ids: HashMap<String, TokenId>,
    tokens: Vec<String>,
    counts: Vec<u64>,
}

impl Vocabulary {
    /// Builds a vocabulary from `(token, count)` pairs already in id order.
    pub fn from_ranked(entries: Vec<(String, u64)>) -> Result<Self> {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut counts = vec![0; NUM_RESERVED];
        let mut ids: HashMap<String, TokenId> =
            tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        for (token, count) in entries {
            if ids.contains_key(&token) {
                return Err(Error::Corpus(format!("duplicate vocabulary token {token:?}")));
            }
            ids.insert(token.clone(), tokens.len());
            tokens.push(token);
            counts.push(count);
        }
        Ok(Self { ids, tokens, counts })
    }

    /// Total size including the reserved ids.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> TokenId {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn count(&self, id: TokenId) -> u64 {
        self.counts.get(id).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = format!("#vocab {}\n", self.len());
        for (token, count) in self.tokens.iter().zip(&self.counts).skip(NUM_RESERVED) {
            let _ = writeln!(out, "{token}\t{count}");
        }
        std::fs::write(&path, out).map_err(|e| Error::io(&path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::parse(&text)
    }

    /// Parses the vocabulary text format: a `#vocab <size>` header followed
    /// by one `token<TAB>count` line per non-reserved id, starting at id 4.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::format(1, "empty vocabulary file"))?;
        let size: usize = header
            .strip_prefix("#vocab ")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::format(1, format!("bad header {header:?}")))?;
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let (token, count) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(lineno, "expected token<TAB>count"))?;
            let count: u64 = count
                .parse()
                .map_err(|_| Error::format(lineno, format!("bad count {count:?}")))?;
            if token.is_empty() {
                return Err(Error::format(lineno, "empty token"));
            }
            entries.push((token.to_string(), count));
        }
        if entries.len() + NUM_RESERVED != size {
            return Err(Error::format(
                1,
                format!(
                    "header declares {size} entries, file has {}",
                    entries.len() + NUM_RESERVED
                ),
            ));
        }
        Self::from_ranked(entries)
    }
}

/// Counts tokens over articles and titles, drops those below `min_count`
/// and keeps the `max_size - 4` most frequent.
pub fn build_vocabulary(
    corpus: &[RawExample],
    max_size: usize,
    min_count: u64,
) -> Result<Vocabulary> {
    if max_size < NUM_RESERVED + 1 {
        return Err(Error::Argument(format!("max_size {max_size} is below 5")));
    }
    if corpus.is_empty() {
        return Err(Error::Corpus("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    for ex in corpus {
        for tok in tokenize(&ex.article).into_iter().chain(tokenize(&ex.title)) {
            *counts.entry(tok).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, u64)> = counts
        .into_iter()
        .filter(|(tok, c)| *c >= min_count && !RESERVED.contains(&tok.as_str()))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_size - NUM_RESERVED);
    Vocabulary::from_ranked(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ex(article: &str, title: &str) -> RawExample {
        RawExample::new(article, title)
    }

    #[test]
    fn min_count_filter() {
        let v = build_vocabulary(&[ex("a a a b", "a")], 10, 2).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.id("a"), Some(4));
        assert_eq!(v.count(4), 4);
        assert_eq!(v.id("b"), None);
    }

    #[test]
    fn lexicographic_tie_break() {
        let v = build_vocabulary(&[ex("b b a", "a")], 10, 1).unwrap();
        assert_eq!(v.id("a"), Some(4));
        assert_eq!(v.id("b"), Some(5));
    }

    #[test]
    fn capacity() {
        let v = build_vocabulary(&[ex("t0 t1 t2 t3 t4 t5 t6 t7 t8", "t9")], 6, 1).unwrap();
        assert_eq!(v.len(), 6);
        assert_eq!(v.tokens()[NUM_RESERVED..].len(), 2);
    }

    #[test]
    fn reserved_ids_fixed() {
        let v = build_vocabulary(&[ex("[UNK] x", "x")], 10, 1).unwrap();
        assert_eq!(v.token(PAD), Some(PAD_TOKEN));
        assert_eq!(v.token(UNK), Some(UNK_TOKEN));
        assert_eq!(v.token(START), Some(START_TOKEN));
        assert_eq!(v.token(STOP), Some(STOP_TOKEN));
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn empty_corpus() {
        assert!(matches!(build_vocabulary(&[], 10, 1), Err(Error::Corpus(_))));
        assert!(matches!(
            build_vocabulary(&[ex("a", "b")], 4, 1),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn file_round_trip() {
        let v = build_vocabulary(&[ex("ሰላም ሰላም ሀገር", "ቤት")], 50, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.txt");
        v.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("#vocab 7\nሰላም\t2\n"));
        assert_eq!(Vocabulary::load(&path).unwrap(), v);
    }

    #[test]
    fn parse_errors_carry_line() {
        assert!(matches!(Vocabulary::parse(""), Err(Error::Format { line: 1, .. })));
        assert!(matches!(
            Vocabulary::parse("#vocab 6\na\t1\nb 1\n"),
            Err(Error::Format { line: 3, .. })
        ));
        assert!(matches!(
            Vocabulary::parse("#vocab 9\na\t1\n"),
            Err(Error::Format { line: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn size_bound_and_inverse(words in proptest::collection::vec("[a-e]{1,2}", 1..60), max in 5usize..20) {
            let article = words.join(" ");
            let v = build_vocabulary(&[ex(&article, "a")], max, 1).unwrap();
            prop_assert!(v.len() <= max);
            for id in 0..v.len() {
                prop_assert_eq!(v.id(v.token(id).unwrap()), Some(id));
            }
            for w in &words {
                if let Some(id) = v.id(w) {
                    prop_assert!(id >= NUM_RESERVED);
                    prop_assert_eq!(v.token(id), Some(w.as_str()));
                }
            }
        }
    }
}
