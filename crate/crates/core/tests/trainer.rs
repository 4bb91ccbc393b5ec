use amsum::corpus::{encode_example, EncodedExample, RawExample, Vocabulary};
use amsum::model::{load_checkpoint, ModelConfig, ModelParams};
use amsum::trainer::{
    clip_global_norm, epsilon_at, fit, global_norm, sample_decoder_input, train_step, Adagrad, CheckpointPlan,
    DecaySchedule, SamplingMode, TrainConfig,
};
use amsum::Error;
use proptest::collection::vec;
use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig, Strategy};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn vocab() -> Vocabulary {
    Vocabulary::from_ranked((0..8).map(|i| (format!("t{i}"), 1)).collect()).unwrap()
}

fn config() -> ModelConfig {
    ModelConfig {
        vocab_size: vocab().len(),
        emb_dim: 4,
        hidden_dim: 5,
        attn_dim: 4,
        use_pointer: true,
    }
}

fn dataset(n: usize, seed: u64) -> Vec<EncodedExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = vocab();
    (0..n)
        .map(|_| {
            let art: Vec<String> = (0..rng.gen_range(2..6))
                .map(|_| {
                    if rng.gen_bool(0.25) {
                        format!("o{}", rng.gen_range(0..3))
                    } else {
                        format!("t{}", rng.gen_range(0..8))
                    }
                })
                .collect();
            let title: Vec<String> = (0..rng.gen_range(1..3)).map(|_| art.choose(&mut rng).unwrap().clone()).collect();
            encode_example(&RawExample::new(art.join(" "), title.join(" ")), &v, 6, 4).unwrap()
        })
        .collect()
}

fn train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 3,
        epochs: 2,
        schedule: DecaySchedule::inverse_sigmoid(2.0, 0.05).unwrap(),
        seed,
        ..TrainConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn clipped_norm_never_exceeds_bound(seed in any::<u64>(), scale in 0.001f64..100.0, max_norm in 0.01f64..10.0) {
        let mut grads = ModelParams::<f64>::init_with_scale(config(), seed, scale).unwrap();
        let before = grads.clone();
        let norm = clip_global_norm(&mut grads, max_norm);
        prop_assert_eq!(norm, global_norm(&before));
        let after = global_norm(&grads);
        prop_assert!(after <= max_norm * (1.0 + 1e-12), "{after} > {max_norm}");
        if norm <= max_norm {
            prop_assert!(grads == before);
        } else {
            prop_assert!((after - max_norm).abs() <= 1e-9 * max_norm);
        }
    }

    #[test]
    fn zero_learning_rate_is_identity(seed in any::<u64>(), eps in 0.0f64..=1.0) {
        let data = dataset(4, seed);
        let batch: Vec<&EncodedExample> = data.iter().collect();
        let start = ModelParams::<f64>::init(config(), seed).unwrap();
        let mut params = start.clone();
        let mut opt = Adagrad::new(&params, 0.0, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let loss = train_step(&mut params, &mut opt, &batch, eps, &train_config(seed), &mut rng).unwrap();
        prop_assert!(loss.is_finite() && loss > 0.0);
        prop_assert!(params == start);
    }

    #[test]
    fn adagrad_moves_against_the_gradient(seed in any::<u64>(), lr in 0.001f64..1.0) {
        let mut params = ModelParams::<f64>::init(config(), seed).unwrap();
        let grads = ModelParams::<f64>::init_with_scale(config(), seed.wrapping_add(1), 1.0).unwrap();
        let start = params.clone();
        let mut opt = Adagrad::new(&params, lr, 0.1);
        opt.step(&mut params, &grads);
        for (((_, p), (_, s)), (_, g)) in params.tensors().into_iter().zip(start.tensors()).zip(grads.tensors()) {
            for ((&p, &s), &g) in p.data().iter().zip(s.data()).zip(g.data()) {
                let expected = s - lr * g / (0.1 + g * g).sqrt();
                prop_assert!((p - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
            }
        }
    }

    #[test]
    fn schedules_are_bounded_and_non_increasing(
        kind in 0usize..4,
        k in 0.01f64..200.0,
        c in 0.0f64..0.1,
        eps_min in 0.0f64..=1.0,
        steps in vec(0u64..100_000, 2..20),
    ) {
        let schedule = match kind {
            0 => DecaySchedule::linear(k.min(1.0), c, eps_min),
            1 => DecaySchedule::exponential(k.min(1.0), eps_min),
            2 => DecaySchedule::inverse_sigmoid(k, eps_min),
            _ => DecaySchedule::constant(k.min(1.0)),
        }.unwrap();
        let mut steps = steps;
        steps.sort_unstable();
        let eps: Vec<f64> = steps.iter().map(|&s| epsilon_at(&schedule, s)).collect();
        for w in eps.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        prop_assert!(eps.iter().all(|&e| (schedule.eps_min..=1.0).contains(&e) || kind == 3));
    }

    #[test]
    fn epsilon_zero_uses_the_model(
        (dist, gold) in (1usize..10).prop_flat_map(|n| (vec(0.01f64..1.0, n), 0..n)),
        seed in any::<u64>(),
    ) {
        let total: f64 = dist.iter().sum();
        let dist: Vec<f64> = dist.iter().map(|p| p / total).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = sample_decoder_input(gold, &dist, 0.0, SamplingMode::Argmax, &mut rng).unwrap();
        let best = dist.iter().cloned().fold(f64::MIN, f64::max);
        prop_assert_eq!(dist[a], best);
        let s = sample_decoder_input(gold, &dist, 0.0, SamplingMode::Sample, &mut rng).unwrap();
        prop_assert!(s < dist.len());
        prop_assert_eq!(sample_decoder_input(gold, &dist, 1.0, SamplingMode::Sample, &mut rng).unwrap(), gold);
    }
}

#[test]
fn invalid_distributions_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for bad in [vec![], vec![0.5, 0.4], vec![1.2, -0.2]] {
        assert!(sample_decoder_input(0, &bad, 0.5, SamplingMode::Sample, &mut rng).is_err());
    }
}

#[test]
fn train_step_rejects_vocabulary_mismatch() {
    let data = dataset(2, 1);
    let batch: Vec<&EncodedExample> = data.iter().collect();
    let mut params = ModelParams::<f64>::init(ModelConfig { vocab_size: 30, ..config() }, 1).unwrap();
    let mut opt = Adagrad::new(&params, 0.1, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let err = train_step(&mut params, &mut opt, &batch, 1.0, &train_config(1), &mut rng).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn fit_is_deterministic_per_seed() {
    let data = dataset(9, 2);
    let params = ModelParams::<f64>::init(config(), 2).unwrap();
    let (pa, ha) = fit(params.clone(), &data, &data, &train_config(5), None).unwrap();
    let (pb, hb) = fit(params.clone(), &data, &data, &train_config(5), None).unwrap();
    assert!(pa == pb);
    assert_eq!(ha, hb);
    let (pc, _) = fit(params, &data, &data, &train_config(6), None).unwrap();
    assert!(pa != pc);
    assert_eq!(ha.steps.len(), 2 * 3);
    assert_eq!(ha.epoch_losses.len(), 2);
    assert_eq!(ha.val_losses.len(), 2);
}

#[test]
fn fit_reduces_training_loss() {
    let data = dataset(6, 3);
    let params = ModelParams::<f64>::init(config(), 3).unwrap();
    let cfg = TrainConfig {
        epochs: 40,
        schedule: DecaySchedule::constant(1.0).unwrap(),
        ..train_config(3)
    };
    let (_, hist) = fit(params, &data, &data, &cfg, None).unwrap();
    assert!(hist.val_losses.last().unwrap() < &(0.5 * hist.val_losses[0]), "{:?}", hist.val_losses);
}

#[test]
fn fit_writes_named_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let plan = CheckpointPlan {
        dir: dir.path().to_path_buf(),
        run_name: "run".into(),
    };
    let data = dataset(6, 4);
    let cfg = TrainConfig {
        checkpoint_every: 3,
        epochs: 3,
        ..train_config(4)
    };
    let (params, hist) = fit(ModelParams::<f64>::init(config(), 4).unwrap(), &data, &data, &cfg, Some(&plan)).unwrap();
    assert_eq!(hist.steps.len(), 6);
    for step in [3, 6] {
        assert!(hist.checkpoints.contains(&plan.step_path(step)));
        assert!(plan.step_path(step).exists());
    }
    assert!(plan.best_path().exists());
    assert_eq!(plan.step_path(6).file_name().unwrap(), "run.step000006.ckpt");
    assert_eq!(plan.best_path().file_name().unwrap(), "run.best.ckpt");
    let last = load_checkpoint::<f64>(plan.step_path(6)).unwrap();
    assert!(last.params == params);
    assert_eq!(last.seed, 4);

    let csv = dir.path().join("history.csv");
    hist.save_csv(&csv).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("step,epsilon,loss"));
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn unwritable_checkpoint_dir_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let plan = CheckpointPlan {
        dir: dir.path().join("missing").join("deeper"),
        run_name: "run".into(),
    };
    let data = dataset(3, 5);
    let err = fit(ModelParams::<f64>::init(config(), 5).unwrap(), &data, &data, &train_config(5), Some(&plan)).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err}");
}

#[test]
fn fit_rejects_invalid_configuration() {
    let data = dataset(3, 6);
    let params = ModelParams::<f64>::init(config(), 6).unwrap();
    for cfg in [
        TrainConfig { batch_size: 0, ..train_config(6) },
        TrainConfig { learning_rate: 0.0, ..train_config(6) },
        TrainConfig { grad_clip_norm: -1.0, ..train_config(6) },
    ] {
        assert!(matches!(fit(params.clone(), &data, &data, &cfg, None), Err(Error::Config(_))));
    }
    assert!(fit(params, &[], &data, &train_config(6), None).is_err());
}
