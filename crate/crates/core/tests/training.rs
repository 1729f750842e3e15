mod common;

use avse_core::data::{format_manifest, save_wav, synth_batch, write_tensor, ManifestEntry, SynthConfig};
use avse_core::model::{enhance, init_parameters, ModelConfig, ModelParams};
use avse_core::numerics::Tensor;
use avse_core::rng::Xorshift64Star;
use avse_core::training::*;
use avse_core::Error;
use common::{fd_check, normal_tensor};
use proptest::prelude::*;

fn tiny_scenes(count: usize) -> Vec<TrainScene> {
    synthetic_scenes(count, 0.5, 3, &SynthConfig::default()).unwrap()
}

fn quick(epochs: usize, seed: u64) -> TrainOptions {
    TrainOptions {
        epochs,
        seed,
        ..TrainOptions::default()
    }
}

// ------------------------------------------------------------------ loss

#[test]
fn loss_gradient_matches_finite_differences() {
    let mut rng = Xorshift64Star::new(1);
    for _ in 0..5 {
        let clean = normal_tensor(&mut rng, &[200], 1.0);
        let noise = normal_tensor(&mut rng, &[200], 1.0);
        let est = Tensor::from_fn([200], |i| 0.8 * clean.data()[i] + 0.5 * noise.data()[i] + 0.3);
        let (_, grad) = si_sdr_loss_grad(clean.data(), est.data()).unwrap();
        let analytic = Tensor::vector(grad);
        let loss = |e: &Tensor<f64>| si_sdr_loss(clean.data(), e.data()).unwrap();
        let err = fd_check(loss, &est, &analytic, 200, &mut rng);
        assert!(err < 1e-4, "{err:e}");
    }
}

#[test]
fn loss_value_and_gradient_agree() {
    let clean: Vec<f64> = (0..64).map(|i| (i as f64 * 0.3).sin()).collect();
    let est: Vec<f64> = (0..64).map(|i| (i as f64 * 0.3).sin() + 0.1 * (i as f64).cos()).collect();
    let (l, _) = si_sdr_loss_grad(&clean, &est).unwrap();
    assert_eq!(l, si_sdr_loss(&clean, &est).unwrap());
    assert!(si_sdr_loss(&clean, &clean).unwrap() <= -60.0);
    assert!(matches!(si_sdr_loss(&[0.0f64; 8], &[1.0; 8]), Err(Error::DegenerateSignal(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loss_ignores_positive_scaling(seed in 0u64..10_000, a in 0.01f64..100.0) {
        let mut rng = Xorshift64Star::new(seed);
        let clean: Vec<f64> = (0..100).map(|_| rng.normal()).collect();
        let est: Vec<f64> = clean.iter().map(|c| c + rng.normal()).collect();
        let scaled: Vec<f64> = est.iter().map(|e| a * e).collect();
        let (l1, l2) = (si_sdr_loss(&clean, &est).unwrap(), si_sdr_loss(&clean, &scaled).unwrap());
        prop_assert!((l1 - l2).abs() < 1e-6, "{} vs {}", l1, l2);
    }
}

// ------------------------------------------------------------- optimizer

#[test]
fn zero_gradient_leaves_parameters_and_decays_moments() {
    let cfg = ModelConfig::tiny();
    let mut params = init_parameters(&cfg, 1).unwrap();
    let before = params.clone();
    let mut state = OptimizerState::new(&cfg, AdamConfig::default());
    for (_, t) in state.first_moment.iter_mut() {
        t.data_mut().fill(1.0);
    }
    for (_, t) in state.second_moment.iter_mut() {
        t.data_mut().fill(1.0);
    }
    let zeros = ModelParams::zeros(&cfg);
    adam_step(&mut params, &zeros, &mut state).unwrap();
    assert_eq!(state.step, 1);
    let m = state.first_moment.get("encoder.weight").unwrap().data()[0];
    let v = state.second_moment.get("encoder.weight").unwrap().data()[0];
    assert!((m - 0.9).abs() < 1e-7 && (v - 0.999).abs() < 1e-7);
    // Stale moments still move parameters, so check the pure zero case.
    let mut fresh = OptimizerState::new(&cfg, AdamConfig::default());
    let mut p = before.clone();
    for _ in 0..3 {
        adam_step(&mut p, &zeros, &mut fresh).unwrap();
    }
    assert_eq!(p, before);
}

#[test]
fn first_step_with_unit_gradient() {
    let cfg = ModelConfig::tiny();
    let mut params = init_parameters(&cfg, 2).unwrap();
    let before = params.clone();
    let mut grads = ModelParams::zeros(&cfg);
    for (_, t) in grads.iter_mut() {
        t.data_mut().fill(1.0);
    }
    let adam = AdamConfig::default();
    let mut state = OptimizerState::new(&cfg, adam);
    adam_step(&mut params, &grads, &mut state).unwrap();
    let expected = adam.lr / (1.0 + adam.eps);
    for ((_, a), (_, b)) in before.iter().zip(params.iter()) {
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!(((x - y) as f64 - expected).abs() < 1e-6, "{x} -> {y}");
        }
    }
}

#[test]
fn adam_is_deterministic_and_checks_shapes() {
    let cfg = ModelConfig::tiny();
    let init = init_parameters(&cfg, 3).unwrap();
    let mut rng = Xorshift64Star::new(4);
    let mut grads = ModelParams::zeros(&cfg);
    for (_, t) in grads.iter_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = rng.normal() as f32);
    }
    let run = || {
        let mut p = init.clone();
        let mut s = OptimizerState::new(&cfg, AdamConfig::default());
        for _ in 0..4 {
            adam_step(&mut p, &grads, &mut s).unwrap();
        }
        (p, s)
    };
    assert_eq!(run(), run());

    let mut p = init.clone();
    let mut s = OptimizerState::new(&cfg, AdamConfig::default());
    let other = ModelParams::zeros(&ModelConfig::small());
    assert!(matches!(adam_step(&mut p, &other, &mut s), Err(Error::Shape(_) | Error::Config(_))));
}

#[test]
fn clipping_bounds_the_global_norm() {
    let cfg = ModelConfig::tiny();
    let mut grads = ModelParams::zeros(&cfg);
    for (_, t) in grads.iter_mut() {
        t.data_mut().fill(1.0);
    }
    let n = grads.parameter_count() as f64;
    let norm = clip_grad_norm(&mut grads, 5.0);
    assert!((norm - n.sqrt()).abs() < 1e-9);
    assert!((grads.sum_squares().sqrt() - 5.0).abs() < 1e-4);
    let before = grads.clone();
    clip_grad_norm(&mut grads, 100.0);
    assert_eq!(grads, before);
}

// ----------------------------------------------------------------- train

#[test]
fn zero_epochs_returns_the_initialization() {
    let cfg = ModelConfig::tiny();
    let out = train(&cfg, &tiny_scenes(2), &quick(0, 8), |_| panic!("no epochs")).unwrap();
    assert!(out.log.is_empty());
    assert_eq!(out.checkpoint.params, init_parameters(&cfg, 8).unwrap());
    assert_eq!(out.checkpoint.optimizer.unwrap().step, 0);
}

#[test]
fn training_is_bit_reproducible_and_learns() {
    let cfg = ModelConfig::tiny();
    let scenes = tiny_scenes(2);
    let run = || {
        let mut seen = Vec::new();
        let out = train(&cfg, &scenes, &quick(6, 5), |e| seen.push(e.clone())).unwrap();
        assert_eq!(seen, out.log);
        out
    };
    let (a, b) = (run(), run());
    assert_eq!(a.log, b.log);
    assert_eq!(a.checkpoint, b.checkpoint);
    assert_eq!(a.checkpoint.to_bytes().unwrap(), b.checkpoint.to_bytes().unwrap());
    assert_eq!(a.log.iter().map(|e| e.epoch).collect::<Vec<_>>(), [1, 2, 3, 4, 5, 6]);
    assert!(a.log[5].mean_loss < a.log[0].mean_loss);
    assert_eq!(a.checkpoint.optimizer.as_ref().unwrap().step, 12);
    let c = train(&cfg, &scenes, &quick(6, 6), |_| {}).unwrap();
    assert_ne!(c.log, a.log);
}

#[test]
fn training_errors() {
    let cfg = ModelConfig::tiny();
    assert!(matches!(train(&cfg, &[], &quick(1, 0), |_| {}), Err(Error::EmptyDataset)));
    let mut scenes = tiny_scenes(3);
    scenes[1].mixture.data_mut()[100] = f32::NAN;
    match train(&cfg, &scenes, &quick(2, 0), |_| {}) {
        Err(Error::NonFinite { step, message }) => {
            assert!((1..=3).contains(&step), "{step}");
            assert!(message.contains("S00002"), "{message}");
        }
        other => panic!("{other:?}"),
    }
}

// ------------------------------------------------------------ grad check

#[test]
fn grad_check_on_the_tiny_config() {
    let cfg = ModelConfig::tiny();
    let names: Vec<String> = init_parameters(&cfg, 0).unwrap().names().map(str::to_owned).collect();
    let mut covered = std::collections::BTreeSet::new();
    for seed in 0..5 {
        let r = grad_check(&cfg, seed).unwrap();
        assert!(r.max_rel_error < 1e-3, "seed {seed}: {:e} at {}", r.max_rel_error, r.worst_parameter);
        assert!(r.entries_checked >= GRAD_CHECK_MIN_ENTRIES);
        covered.extend(r.tensors);
    }
    assert_eq!(covered.into_iter().collect::<Vec<_>>(), names);
    assert_eq!(grad_check(&cfg, 3).unwrap(), grad_check(&cfg, 3).unwrap());
}

// ------------------------------------------------------------ checkpoint

#[test]
fn checkpoint_round_trips_byte_for_byte() {
    let cfg = ModelConfig::tiny();
    let scenes = tiny_scenes(1);
    let trained = train(&cfg, &scenes, &quick(2, 1), |_| {}).unwrap().checkpoint;
    let dir = tempfile::tempdir().unwrap();
    for ckpt in [trained.clone(), Checkpoint { optimizer: None, ..trained.clone() }] {
        let path = dir.path().join("m.avck");
        save_checkpoint(&path, &ckpt).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], CHECKPOINT_MAGIC);
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.to_bytes().unwrap(), bytes);

        let s = &scenes[0];
        let before = enhance(&s.mixture, &s.frames, &ckpt.params, &cfg).unwrap();
        let after = enhance(&s.mixture, &s.frames, &back.params, &back.config).unwrap();
        let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&before), bits(&after));
    }
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let cfg = ModelConfig::tiny();
    let ckpt = Checkpoint {
        config: cfg.clone(),
        params: init_parameters(&cfg, 0).unwrap(),
        optimizer: Some(OptimizerState::new(&cfg, AdamConfig::default())),
    };
    let good = ckpt.to_bytes().unwrap();
    let corrupt = |b: &[u8]| matches!(Checkpoint::from_bytes(b), Err(Error::CorruptCheckpoint(_)));

    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    assert!(corrupt(&bad_magic));
    let mut bad_version = good.clone();
    bad_version[4] = 2;
    assert!(corrupt(&bad_version));
    assert!(corrupt(&good[..good.len() - 3]));
    let mut trailing = good.clone();
    trailing.push(0);
    assert!(corrupt(&trailing));

    // Parameters of one shape under a config that implies another.
    let mismatched = Checkpoint {
        config: ModelConfig {
            enc_channels: 12,
            ..cfg.clone()
        },
        optimizer: None,
        ..ckpt.clone()
    };
    assert!(corrupt(&mismatched.to_bytes().unwrap()));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.avck");
    std::fs::write(&path, &bad_magic).unwrap();
    match load_checkpoint(&path) {
        Err(Error::CorruptCheckpoint(m)) => assert!(m.contains("bad.avck")),
        other => panic!("{other:?}"),
    }
}

// --------------------------------------------------------------- dataset

#[test]
fn scenes_load_from_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig::default();
    let batch = synth_batch(2, 0.5, 3, &cfg).unwrap();
    let mut entries = Vec::new();
    for sub in ["clean", "interferer", "frames"] {
        std::fs::create_dir(dir.path().join(sub)).unwrap();
    }
    for s in &batch {
        save_wav(dir.path().join(format!("clean/{}.wav", s.id)), &s.target, 16_000).unwrap();
        save_wav(dir.path().join(format!("interferer/{}.wav", s.id)), &s.interferer, 16_000).unwrap();
        write_tensor(dir.path().join(format!("frames/{}.avst", s.id)), &s.frames).unwrap();
        entries.push(ManifestEntry {
            id: s.id.clone(),
            target_path: format!("clean/{}.wav", s.id).into(),
            interferer_path: format!("interferer/{}.wav", s.id).into(),
            frames_path: format!("frames/{}.avst", s.id).into(),
            snr_db: s.snr_db,
        });
    }
    let manifest = dir.path().join("manifest.jsonl");
    std::fs::write(&manifest, format_manifest(&entries)).unwrap();

    let loaded = load_scenes(&manifest).unwrap();
    let direct = synthetic_scenes(2, 0.5, 3, &cfg).unwrap();
    for (a, b) in loaded.iter().zip(&direct) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.frames, b.frames);
        for (x, y) in a.target.data().iter().zip(b.target.data()) {
            assert!((x - y).abs() <= 1.0 / 32768.0);
        }
        for (x, y) in a.mixture.data().iter().zip(b.mixture.data()) {
            assert!((x - y).abs() < 1e-3);
        }
    }

    std::fs::write(&manifest, "").unwrap();
    assert!(matches!(load_scenes(&manifest), Err(Error::EmptyDataset)));
}
