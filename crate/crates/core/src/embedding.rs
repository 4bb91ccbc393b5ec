//! Skip-gram word embeddings trained with negative sampling, and the plain
//! text interchange format used to share them.

use std::fmt::Write as _;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{TokenId, NUM_RESERVED};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{dot, sigmoid, Tensor2D};

/// Input ("center") and output ("context") vectors, one row per vocabulary
/// id. Downstream consumers use the input vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T> {
    pub input: Tensor2D<T>,
    pub output: Tensor2D<T>,
}

impl<T: Scalar> EmbeddingTable<T> {
    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        Self {
            input: Tensor2D::zeros(vocab_size, dim),
            output: Tensor2D::zeros(vocab_size, dim),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.input.rows()
    }

    pub fn dim(&self) -> usize {
        self.input.cols()
    }

    pub fn vector(&self, id: TokenId) -> &[T] {
        self.input.row_slice(id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    /// Starting learning rate; decays linearly to `min_learning_rate` over
    /// all training pairs.
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    pub epochs: usize,
    pub noise_exponent: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            window: 5,
            negatives: 5,
            learning_rate: 0.025,
            min_learning_rate: 0.0001,
            epochs: 5,
            noise_exponent: 0.75,
            seed: 1,
        }
    }
}

impl SkipGramConfig {
    fn validate(&self) -> Result<()> {
        if self.window < 1 || self.negatives < 1 || self.dim < 1 || self.epochs < 1 {
            return Err(Error::Argument(
                "skip-gram dim, window, negatives and epochs must all be at least 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Argument("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// `(center, context)` pairs for every position and every neighbour within
/// `window`, position-major.
pub fn generate_pairs(tokens: &[TokenId], window: usize) -> Vec<(TokenId, TokenId)> {
    let mut pairs = Vec::new();
    for (i, &center) in tokens.iter().enumerate() {
        let lo = i.saturating_sub(window);
        let hi = (i + window).min(tokens.len().saturating_sub(1));
        for j in lo..=hi {
            if j != i {
                pairs.push((center, tokens[j]));
            }
        }
    }
    pairs
}

/// Negative-sampling noise distribution `P(w) ∝ count(w)^exponent` over
/// observed non-reserved ids. Reserved ids and unseen tokens get zero.
pub fn noise_distribution(counts: &[u64], exponent: f64) -> Result<Vec<f64>> {
    let mut weights: Vec<f64> = counts
        .iter()
        .enumerate()
        .map(|(id, &c)| {
            if id < NUM_RESERVED || c == 0 {
                0.0
            } else {
                (c as f64).powf(exponent)
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Argument("noise distribution needs a nonzero count".into()));
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(weights)
}

/// Loss and gradients of one skip-gram pair:
/// `−ln σ(u_o·v_c) − Σ_n ln σ(−u_n·v_c)`.
#[derive(Debug, Clone)]
pub struct PairGradient<T> {
    pub loss: T,
    pub center: Vec<T>,
    pub context: Vec<T>,
    pub negatives: Vec<Vec<T>>,
}

pub fn pair_loss<T: Scalar>(center: &[T], context: &[T], negatives: &[&[T]]) -> PairGradient<T> {
    let s = dot(context, center);
    let sig = sigmoid(s);
    let mut loss = -sig.ln();
    let coef = sig - T::one();
    let mut g_center: Vec<T> = context.iter().map(|&u| coef * u).collect();
    let g_context: Vec<T> = center.iter().map(|&v| coef * v).collect();
    let mut g_neg = Vec::with_capacity(negatives.len());
    for &u_n in negatives {
        let sn = sigmoid(dot(u_n, center));
        // -ln σ(-x) = -ln(1 - σ(x))
        loss -= (T::one() - sn).ln();
        for (g, &u) in g_center.iter_mut().zip(u_n) {
            *g += sn * u;
        }
        g_neg.push(center.iter().map(|&v| sn * v).collect());
    }
    PairGradient {
        loss,
        center: g_center,
        context: g_context,
        negatives: g_neg,
    }
}

#[derive(Debug, Clone)]
pub struct SkipGramOutcome<T> {
    pub table: EmbeddingTable<T>,
    /// Mean pair loss for each epoch.
    pub epoch_losses: Vec<T>,
}

/// Trains skip-gram embeddings by SGD over `sentences` (vocabulary ids).
///
/// Reserved ids (including `UNK`) are removed from each sentence before
/// pairing. `counts` is indexed by id and sizes the table. Frequent-word
/// subsampling is not applied.
pub fn train_skipgram<T: Scalar>(
    sentences: &[Vec<TokenId>],
    counts: &[u64],
    config: &SkipGramConfig,
) -> Result<SkipGramOutcome<T>> {
    config.validate()?;
    let vocab_size = counts.len();
    let pairs: Vec<(TokenId, TokenId)> = sentences
        .iter()
        .flat_map(|s| {
            let kept: Vec<TokenId> = s.iter().copied().filter(|&id| id >= NUM_RESERVED).collect();
            generate_pairs(&kept, config.window)
        })
        .collect();
    if pairs.is_empty() {
        return Err(Error::Corpus("no skip-gram training pairs in corpus".into()));
    }
    if let Some(&(c, o)) = pairs.iter().find(|&&(c, o)| c >= vocab_size || o >= vocab_size) {
        return Err(Error::Index {
            index: c.max(o),
            len: vocab_size,
        });
    }
    let noise = WeightedIndex::new(noise_distribution(counts, config.noise_exponent)?)
        .map_err(|e| Error::Argument(e.to_string()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.dim;
    let half = 0.5 / dim as f64;
    let mut table = EmbeddingTable {
        input: Tensor2D::from_fn(vocab_size, dim, |_, _| T::lit(rng.gen_range(-half..half))),
        output: Tensor2D::zeros(vocab_size, dim),
    };

    let total = (pairs.len() * config.epochs) as f64;
    let mut seen = 0usize;
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut negs = vec![0; config.negatives];
    for _ in 0..config.epochs {
        let mut epoch_loss = T::zero();
        for &(center, context) in &pairs {
            let lr = config.learning_rate
                - (config.learning_rate - config.min_learning_rate) * (seen as f64 / total);
            let lr = T::lit(lr.max(config.min_learning_rate));
            seen += 1;
            for n in negs.iter_mut() {
                *n = noise.sample(&mut rng);
            }
            let grad = {
                let neg_rows: Vec<&[T]> =
                    negs.iter().map(|&n| table.output.row_slice(n)).collect();
                pair_loss(
                    table.input.row_slice(center),
                    table.output.row_slice(context),
                    &neg_rows,
                )
            };
            epoch_loss += grad.loss;
            for (w, &g) in table.input.row_slice_mut(center).iter_mut().zip(&grad.center) {
                *w -= lr * g;
            }
            for (w, &g) in table.output.row_slice_mut(context).iter_mut().zip(&grad.context) {
                *w -= lr * g;
            }
            for (&n, g_n) in negs.iter().zip(&grad.negatives) {
                for (w, &g) in table.output.row_slice_mut(n).iter_mut().zip(g_n) {
                    *w -= lr * g;
                }
            }
        }
        epoch_losses.push(epoch_loss / T::lit(pairs.len() as f64));
    }
    Ok(SkipGramOutcome {
        table,
        epoch_losses,
    })
}

fn cosine<T: Scalar>(a: &[T], b: &[T]) -> T {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if nb == T::zero() {
        return T::zero();
    }
    dot(a, b) / (na * nb)
}

/// Top-`k` ids by cosine similarity of input vectors, excluding the query
/// and reserved ids; ties go to the lower id.
pub fn nearest_neighbors<T: Scalar>(
    table: &EmbeddingTable<T>,
    query: TokenId,
    k: usize,
) -> Result<Vec<(TokenId, T)>> {
    let vocab_size = table.vocab_size();
    if query >= vocab_size {
        return Err(Error::Index {
            index: query,
            len: vocab_size,
        });
    }
    if k >= vocab_size {
        return Err(Error::Argument(format!(
            "k = {k} must be below the vocabulary size {vocab_size}"
        )));
    }
    let q = table.vector(query);
    if dot(q, q) == T::zero() {
        return Err(Error::DegenerateVector(format!("token {query} has a zero vector")));
    }
    let mut scored: Vec<(TokenId, T)> = (NUM_RESERVED.min(vocab_size)..vocab_size)
        .filter(|&id| id != query)
        .map(|id| (id, cosine(q, table.vector(id))))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}

/// Writes input vectors as `<vocab_size> <dim>` followed by one
/// `<token> <v1> ... <vdim>` line per id, values with 10 significant digits.
pub fn save_embeddings<T: Scalar>(
    table: &EmbeddingTable<T>,
    tokens: &[String],
    path: impl AsRef<Path>,
) -> Result<()> {
    if tokens.len() != table.vocab_size() {
        return Err(Error::Argument(format!(
            "{} tokens for a table of {} rows",
            tokens.len(),
            table.vocab_size()
        )));
    }
    let mut out = format!("{} {}\n", table.vocab_size(), table.dim());
    for (id, token) in tokens.iter().enumerate() {
        out.push_str(token);
        for v in table.vector(id) {
            let _ = write!(out, " {:.9e}", v.as_f64());
        }
        out.push('\n');
    }
    std::fs::write(&path, out).map_err(|e| Error::io(&path, e))
}

/// Reads the text format written by [`save_embeddings`]. Output vectors are
/// not stored in the file and come back zeroed.
pub fn load_embeddings<T: Scalar>(path: impl AsRef<Path>) -> Result<(Vec<String>, EmbeddingTable<T>)> {
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    parse_embeddings(&text)
}

pub fn parse_embeddings<T: Scalar>(text: &str) -> Result<(Vec<String>, EmbeddingTable<T>)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::format(1, "empty embedding file"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|s| s.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::format(1, format!("bad header {header:?}")))?;
    let &[vocab_size, dim] = dims.as_slice() else {
        return Err(Error::format(1, format!("bad header {header:?}")));
    };
    if vocab_size == 0 || dim == 0 {
        return Err(Error::format(1, "header dimensions must be positive"));
    }
    let mut tokens = Vec::with_capacity(vocab_size);
    let mut data = Vec::with_capacity(vocab_size * dim);
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        if i >= vocab_size {
            if line.trim().is_empty() {
                continue;
            }
            return Err(Error::format(lineno, "more rows than the header declares"));
        }
        let mut fields = line.split(' ');
        let token = fields.next().filter(|t| !t.is_empty()).ok_or_else(|| Error::format(lineno, "missing token"))?;
        let values: Vec<&str> = fields.collect();
        if values.len() != dim {
            return Err(Error::format(
                lineno,
                format!("expected {dim} values, found {}", values.len()),
            ));
        }
        for v in values {
            let x: f64 = v
                .parse()
                .map_err(|_| Error::format(lineno, format!("bad number {v:?}")))?;
            if !x.is_finite() {
                return Err(Error::format(lineno, format!("non-finite value {v:?}")));
            }
            data.push(T::lit(x));
        }
        tokens.push(token.to_string());
    }
    if tokens.len() != vocab_size {
        return Err(Error::format(
            tokens.len() + 2,
            format!("expected {vocab_size} rows, found {}", tokens.len()),
        ));
    }
    Ok((
        tokens,
        EmbeddingTable {
            input: Tensor2D::new(vocab_size, dim, data)?,
            output: Tensor2D::zeros(vocab_size, dim),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_difference_check, GradientRecord, DEFAULT_STEP};
    use proptest::prelude::{prop_assert, prop_assert_eq, prop_assume, proptest};

    #[test]
    fn pairs_window_one() {
        assert_eq!(
            generate_pairs(&[0, 1, 2], 1),
            vec![(0, 1), (1, 0), (1, 2), (2, 1)]
        );
        assert!(generate_pairs(&[7], 3).is_empty());
        assert!(generate_pairs(&[], 3).is_empty());
        assert_eq!(generate_pairs(&[0, 1, 2], 5).len(), 6);
    }

    #[test]
    fn noise_closed_form() {
        let p = noise_distribution(&[0, 0, 0, 0, 4, 1], 0.75).unwrap();
        let expect = 4f64.powf(0.75) / (4f64.powf(0.75) + 1.0);
        assert!((p[4] - expect).abs() < 1e-12);
        assert!((p[4] - 0.73879).abs() < 1e-5);
        assert_eq!(&p[..4], &[0.0; 4]);
    }

    #[test]
    fn noise_uniform_and_single() {
        let p = noise_distribution(&[5, 5, 5, 5, 9, 1, 0, 3], 0.0).unwrap();
        assert_eq!(p, vec![0.0, 0.0, 0.0, 0.0, 1.0 / 3.0, 1.0 / 3.0, 0.0, 1.0 / 3.0]);
        let p = noise_distribution(&[0, 0, 0, 0, 7], 0.75).unwrap();
        assert_eq!(p[4], 1.0);
        assert!(noise_distribution(&[3, 3, 3, 3, 0], 0.75).is_err());
    }

    #[test]
    fn zero_vectors_initial_loss() {
        let z = [0.0f64; 4];
        let negs: Vec<&[f64]> = vec![&z; 5];
        let g = pair_loss(&z, &z, &negs);
        assert!((g.loss - 6.0 * 2f64.ln()).abs() < 1e-12);
        assert!((g.loss - 4.158883).abs() < 1e-6);
    }

    #[test]
    fn pair_gradient_matches_finite_differences() {
        // 3-token vocabulary, dim 2: center 0, context 1, negatives [2, 1]
        let input = Tensor2D::from_rows(&[vec![0.3, -0.7], vec![0.1, 0.4], vec![-0.5, 0.2]]).unwrap();
        let output = Tensor2D::from_rows(&[vec![0.2, 0.6], vec![-0.4, 0.9], vec![0.8, -0.3]]).unwrap();
        let loss = |inp: &Tensor2D<f64>, out: &Tensor2D<f64>| {
            pair_loss(inp.row_slice(0), out.row_slice(1), &[out.row_slice(2), out.row_slice(1)])
        };
        let g = loss(&input, &output);
        let mut g_in = Tensor2D::zeros(3, 2);
        let mut g_out = Tensor2D::zeros(3, 2);
        g_in.row_slice_mut(0).copy_from_slice(&g.center);
        g_out.row_slice_mut(1).copy_from_slice(&g.context);
        for (row, gn) in [2, 1].iter().zip(&g.negatives) {
            for (a, &b) in g_out.row_slice_mut(*row).iter_mut().zip(gn) {
                *a += b;
            }
        }
        let records = vec![
            GradientRecord::with_gradient("input", input, g_in).unwrap(),
            GradientRecord::with_gradient("output", output, g_out).unwrap(),
        ];
        let report =
            finite_difference_check(|v| loss(&v[0], &v[1]).loss, &records, DEFAULT_STEP).unwrap();
        assert!(report.max_relative_error < 1e-4, "{report:?}");
    }

    fn toy_corpus() -> (Vec<Vec<TokenId>>, Vec<u64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vocab = 20;
        let sentences: Vec<Vec<TokenId>> = (0..100)
            .map(|_| {
                // two topical clusters so there is structure to learn
                let base = if rng.gen_bool(0.5) { 4 } else { 12 };
                (0..8).map(|_| base + rng.gen_range(0..8)).collect()
            })
            .collect();
        let mut counts = vec![0u64; vocab];
        for s in &sentences {
            for &t in s {
                counts[t] += 1;
            }
        }
        (sentences, counts)
    }

    #[test]
    fn deterministic_for_seed() {
        let (s, c) = toy_corpus();
        let cfg = SkipGramConfig { dim: 8, epochs: 2, ..Default::default() };
        let a = train_skipgram::<f64>(&s, &c, &cfg).unwrap();
        let b = train_skipgram::<f64>(&s, &c, &cfg).unwrap();
        assert_eq!(a.table, b.table);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn loss_decreases_on_toy_corpus() {
        let (s, c) = toy_corpus();
        let cfg = SkipGramConfig { dim: 16, epochs: 10, ..Default::default() };
        let out = train_skipgram::<f64>(&s, &c, &cfg).unwrap();
        let initial = 6.0 * 2f64.ln();
        let last = *out.epoch_losses.last().unwrap();
        assert!(last < initial, "{:?}", out.epoch_losses);
        assert!(last < out.epoch_losses[0], "{:?}", out.epoch_losses);
        assert!(out.table.input.is_finite() && out.table.output.is_finite());
    }

    #[test]
    fn empty_corpus_rejected() {
        let cfg = SkipGramConfig::default();
        let res = train_skipgram::<f64>(&[vec![5]], &[0, 0, 0, 0, 0, 1], &cfg);
        assert!(matches!(res, Err(Error::Corpus(_))));
    }

    fn table(rows: &[Vec<f64>]) -> EmbeddingTable<f64> {
        let input = Tensor2D::from_rows(rows).unwrap();
        let (r, c) = input.shape();
        EmbeddingTable { input, output: Tensor2D::zeros(r, c) }
    }

    #[test]
    fn neighbours_by_cosine() {
        let mut rows = vec![vec![0.0, 0.0]; NUM_RESERVED];
        rows.extend([vec![1.0, 0.0], vec![2.0, 0.0], vec![0.0, 1.0]]);
        let t = table(&rows);
        let nn = nearest_neighbors(&t, 4, 2).unwrap();
        assert_eq!(nn, vec![(5, 1.0), (6, 0.0)]);
        assert!(matches!(nearest_neighbors(&t, 0, 2), Err(Error::DegenerateVector(_))));
        assert!(nearest_neighbors(&t, 4, 7).is_err());
    }

    #[test]
    fn neighbour_ties_by_id() {
        let mut rows = vec![vec![0.0, 0.0]; NUM_RESERVED];
        rows.extend([vec![1.0, 1.0], vec![3.0, 3.0], vec![2.0, 2.0]]);
        let nn = nearest_neighbors(&table(&rows), 4, 2).unwrap();
        assert_eq!(nn.iter().map(|p| p.0).collect::<Vec<_>>(), vec![5, 6]);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse_embeddings::<f64>(""), Err(Error::Format { line: 1, .. })));
        assert!(matches!(parse_embeddings::<f64>("2 x\n"), Err(Error::Format { line: 1, .. })));
        let bad = format!("2 8\na {}\nb {}\n", ["0.1"; 8].join(" "), ["0.1"; 7].join(" "));
        assert!(matches!(parse_embeddings::<f64>(&bad), Err(Error::Format { line: 3, .. })));
        assert!(matches!(
            parse_embeddings::<f64>("2 1\na 0.5\n"),
            Err(Error::Format { line: 3, .. })
        ));
    }

    proptest! {
        #[test]
        fn file_round_trip(values in proptest::collection::vec(-10.0f64..10.0, 12)) {
            let t = EmbeddingTable {
                input: Tensor2D::new(4, 3, values).unwrap(),
                output: Tensor2D::zeros(4, 3),
            };
            let tokens: Vec<String> = ["[PAD]", "ሰላም", "b", "c"].iter().map(|s| s.to_string()).collect();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("e.txt");
            save_embeddings(&t, &tokens, &path).unwrap();
            let (tok2, t2) = load_embeddings::<f64>(&path).unwrap();
            prop_assert_eq!(tok2, tokens);
            for (a, b) in t.input.data().iter().zip(t2.input.data()) {
                prop_assert!((a - b).abs() <= 1e-6);
            }
        }

        #[test]
        fn pair_count_matches_neighbourhoods(len in 0usize..30, window in 1usize..6) {
            let toks: Vec<TokenId> = (0..len).collect();
            let expected: usize = (0..len)
                .map(|i| (i + window).min(len - 1) - i.saturating_sub(window))
                .sum();
            prop_assert_eq!(generate_pairs(&toks, window).len(), expected);
        }

        #[test]
        fn noise_normalized(counts in proptest::collection::vec(0u64..50, 5..30), e in 0.0f64..1.5) {
            prop_assume!(counts[NUM_RESERVED..].iter().any(|&c| c > 0));
            let p = noise_distribution(&counts, e).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p[..NUM_RESERVED].iter().all(|&x| x == 0.0));
        }
    }
}
