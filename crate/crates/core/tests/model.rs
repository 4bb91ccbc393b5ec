use amsum::corpus::{encode_example, EncodedExample, RawExample, TokenId, Vocabulary, START};
use amsum::model::{
    beam_search, decode_step, encode, final_distribution, greedy_decode, parse_checkpoint, sequence_loss,
    summarize_example, write_checkpoint, ArticleDecoder, Checkpoint, DecodeConfig, DecoderState,
    DecoderStepOutput, ModelConfig, ModelParams, StepDecoder,
};
use amsum::tensor::softmax;
use amsum::Error;
use proptest::collection::vec;
use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig, Strategy};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn vocab() -> Vocabulary {
    Vocabulary::from_ranked((0..10).map(|i| (format!("w{i}"), 10 - i)).collect()).unwrap()
}

fn config(use_pointer: bool) -> ModelConfig {
    ModelConfig {
        vocab_size: vocab().len(),
        emb_dim: 5,
        hidden_dim: 6,
        attn_dim: 4,
        use_pointer,
    }
}

/// A short random article with some out-of-vocabulary words and a title
/// drawn from it.
fn random_example(seed: u64) -> EncodedExample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let article: Vec<String> = (0..rng.gen_range(1..8))
        .map(|_| {
            if rng.gen_bool(0.3) {
                format!("x{}", rng.gen_range(0..4))
            } else {
                format!("w{}", rng.gen_range(0..10))
            }
        })
        .collect();
    let title: Vec<String> = (0..rng.gen_range(1..4))
        .map(|_| article.choose(&mut rng).unwrap().clone())
        .collect();
    encode_example(&RawExample::new(article.join(" "), title.join(" ")), &vocab(), 8, 5).unwrap()
}

fn teacher(_: usize, gold: TokenId, _: &[f64]) -> amsum::Result<TokenId> {
    Ok(gold)
}

fn distribution(len: usize) -> impl Strategy<Value = Vec<f64>> {
    vec(-8.0f64..8.0, len).prop_map(|l| softmax(&l).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn final_distribution_is_normalized(
        (p_vocab, alpha, ids, n_oov, p_gen) in (1usize..30, 1usize..20, 0usize..5).prop_flat_map(|(v, n, k)| {
            (distribution(v), distribution(n), vec(0..v + k, n), proptest::strategy::Just(k), 0.0f64..=1.0)
        })
    ) {
        let out = DecoderStepOutput {
            p_vocab: p_vocab.clone(),
            p_gen,
            alpha,
            context: Vec::new(),
            state: DecoderState { h: Vec::new(), c: Vec::new() },
        };
        let d = final_distribution(&out, &ids, n_oov).unwrap();
        prop_assert_eq!(d.len(), p_vocab.len() + n_oov);
        prop_assert!(d.iter().all(|&p| p >= 0.0));
        prop_assert!((d.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn pure_copy_of_one_hot_attention_is_one_hot(
        (v, k, ids, pos) in (4usize..20, 0usize..4, 1usize..10).prop_flat_map(|(v, k, n)| {
            (proptest::strategy::Just(v), proptest::strategy::Just(k), vec(0..v + k, n), 0..n)
        })
    ) {
        let mut alpha = vec![0.0; ids.len()];
        alpha[pos] = 1.0;
        let out = DecoderStepOutput {
            p_vocab: vec![1.0 / v as f64; v],
            p_gen: 0.0,
            alpha,
            context: Vec::new(),
            state: DecoderState { h: Vec::new(), c: Vec::new() },
        };
        let d = final_distribution(&out, &ids, k).unwrap();
        for (w, &p) in d.iter().enumerate() {
            prop_assert_eq!(p, if w == ids[pos] { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn padded_positions_get_no_attention(seed in any::<u64>(), extra in 1usize..5) {
        let params = ModelParams::<f64>::init_with_scale(config(true), seed, 0.5).unwrap();
        let mut ex = random_example(seed);
        let len = ex.encoder_ids.len();
        ex.pad_to(len + extra, ex.decoder_input_ids.len()).unwrap();
        let enc = encode(&params, &ex.encoder_ids, Some(&ex.encoder_mask)).unwrap();
        let mut state = enc.initial_state.clone();
        let mut ctx = vec![0.0; params.config.enc_state_dim()];
        let mut token = START;
        for &gold in &ex.target_ids[..ex.title_len()] {
            let out = decode_step(&params, token, &state, &ctx, &enc).unwrap();
            prop_assert!(out.alpha[len..].iter().all(|&a| a == 0.0));
            prop_assert!((out.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            state = out.state;
            ctx = out.context;
            token = gold;
        }
    }

    #[test]
    fn suffix_padding_leaves_loss_and_gradient_unchanged(
        seed in any::<u64>(),
        enc_extra in 0usize..4,
        dec_extra in 0usize..4,
        use_pointer in any::<bool>(),
    ) {
        let params = ModelParams::<f64>::init_with_scale(config(use_pointer), seed, 0.5).unwrap();
        let ex = random_example(seed ^ 0x5555);
        let mut padded = ex.clone();
        padded.pad_to(ex.encoder_ids.len() + enc_extra, ex.decoder_input_ids.len() + dec_extra).unwrap();
        let mut ga = params.zeros_like();
        let mut gb = params.zeros_like();
        let a = sequence_loss(&params, &ex, teacher, Some(&mut ga), 1.0).unwrap();
        let b = sequence_loss(&params, &padded, teacher, Some(&mut gb), 1.0).unwrap();
        prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        for ((name, x), (_, y)) in ga.tensors().into_iter().zip(gb.tensors()) {
            for (p, q) in x.data().iter().zip(y.data()) {
                prop_assert!((p - q).abs() <= 1e-12, "{name}: {p} vs {q}");
            }
        }
    }

    #[test]
    fn decoded_ids_stay_in_extended_vocabulary(seed in any::<u64>(), width in 1usize..5, max_len in 1usize..8) {
        let params = ModelParams::<f64>::init_with_scale(config(true), seed, 1.0).unwrap();
        let ex = random_example(seed);
        let cfg = DecodeConfig { beam_width: width, max_len };
        let ids = summarize_example(&params, &ex, &cfg).unwrap();
        prop_assert!(ids.len() <= max_len);
        prop_assert!(ids.iter().all(|&id| id < ex.extended_vocab_size()));
    }

    #[test]
    fn width_one_beam_is_greedy(seed in any::<u64>(), max_len in 1usize..8) {
        let params = ModelParams::<f64>::init_with_scale(config(true), seed, 1.0).unwrap();
        let ex = random_example(seed);
        let dec = ArticleDecoder::new(&params, &ex).unwrap();
        prop_assert_eq!(greedy_decode(&dec, max_len).unwrap(), beam_search(&dec, 1, max_len).unwrap());
    }

    #[test]
    fn full_width_beam_matches_exhaustive_search(table_seed in any::<u64>(), max_len in 1usize..4) {
        let toy = Table::random(table_seed);
        let (tokens, score) = exhaustive(&toy, max_len);
        let width = 3usize.pow(max_len as u32);
        let best = beam_search(&toy, width, max_len).unwrap();
        prop_assert_eq!(&best.tokens, &tokens);
        prop_assert!((best.score() - score).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_text_round_trips_bit_exact(seed in any::<u64>(), scale in 0.01f64..10.0, use_pointer in any::<bool>()) {
        let params = ModelParams::<f64>::init_with_scale(config(use_pointer), seed, scale).unwrap();
        let ckpt = Checkpoint { params, seed };
        let mut buf = Vec::new();
        write_checkpoint(&ckpt, &mut buf).unwrap();
        let back = parse_checkpoint::<f64>(std::str::from_utf8(&buf).unwrap()).unwrap();
        prop_assert!(back == ckpt);
    }
}

/// Three tokens with stop = 2; the next-token distribution depends on the
/// last two tokens through a seeded lookup table.
struct Table {
    logp: Vec<Vec<f64>>,
}

impl Table {
    fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logp = (0..16)
            .map(|_| {
                let l: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
                softmax(&l).unwrap().iter().map(|p| p.ln()).collect()
            })
            .collect();
        Self { logp }
    }
}

impl StepDecoder for Table {
    type State = (TokenId, TokenId);

    fn initial_state(&self) -> amsum::Result<(TokenId, TokenId)> {
        Ok((3, 3))
    }

    fn step(&self, state: &(TokenId, TokenId), token: TokenId) -> amsum::Result<(Vec<f64>, (TokenId, TokenId))> {
        let next = (state.1, token);
        Ok((self.logp[next.0 * 4 + next.1].clone(), next))
    }

    fn start_token(&self) -> TokenId {
        3
    }

    fn stop_token(&self) -> TokenId {
        2
    }
}

fn exhaustive(toy: &Table, max_len: usize) -> (Vec<TokenId>, f64) {
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    let mut stack = vec![(Vec::<TokenId>::new(), 0.0, toy.initial_state().unwrap())];
    while let Some((seq, lp, state)) = stack.pop() {
        let last = seq.last().copied().unwrap_or(3);
        let (logp, next) = toy.step(&state, last).unwrap();
        for (t, l) in logp.into_iter().enumerate() {
            let mut s = seq.clone();
            s.push(t);
            if t == 2 || s.len() == max_len {
                let score = (lp + l) / s.len() as f64;
                if score > best.1 {
                    if t == 2 {
                        s.pop();
                    }
                    best = (s, score);
                }
            } else {
                stack.push((s, lp + l, next));
            }
        }
    }
    best
}

#[test]
fn decoder_rejects_mismatched_vocabulary() {
    let params = ModelParams::<f64>::init(ModelConfig { vocab_size: 20, ..config(true) }, 1).unwrap();
    let ex = random_example(1);
    assert!(matches!(ArticleDecoder::new(&params, &ex), Err(Error::Config(_))));
    assert!(matches!(sequence_loss(&params, &ex, teacher, None, 1.0), Err(Error::Config(_))));
}

#[test]
fn beam_rejects_zero_width_and_length() {
    let toy = Table::random(0);
    assert!(beam_search(&toy, 0, 3).is_err());
    assert!(beam_search(&toy, 2, 0).is_err());
    assert!(greedy_decode(&toy, 0).is_err());
}

#[test]
fn truncated_checkpoint_is_a_format_error() {
    let ckpt = Checkpoint { params: ModelParams::<f64>::init(config(true), 2).unwrap(), seed: 2 };
    let mut buf = Vec::new();
    write_checkpoint(&ckpt, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let cut = &text[..text.len() / 2];
    assert!(matches!(parse_checkpoint::<f64>(cut), Err(Error::Format { .. })));
    assert!(parse_checkpoint::<f64>(&format!("{text}extra\n")).is_err());
}
