use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seq2lpc::diff::{grad_check, Tensor, GRAD_CHECK_TOLERANCE};
use seq2lpc::model::{Model, ModelConfig, N_LPC, N_MEL};
use seq2lpc::signal::{dequantize_log_pitch, quantize_log_pitch, FeatureFrame, F0_MAX, F0_MIN};
use seq2lpc::training::*;

fn rand_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor<f64> {
    Tensor::new(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn offset(t: &Tensor<f64>, f: impl Fn(usize, usize) -> f64) -> Tensor<f64> {
    let mut o = t.clone();
    let c = t.cols();
    for (i, v) in o.data_mut().iter_mut().enumerate() {
        *v += f(i / c, i % c);
    }
    o
}

fn perfect_batch(rng: &mut ChaCha8Rng, frames: usize) -> SpectralBatch<f64> {
    let q_m = rand_tensor(rng, frames, N_MEL);
    let q_l = rand_tensor(rng, frames, N_LPC);
    SpectralBatch {
        y_m: q_m.clone(),
        q_m,
        y_l: q_l.clone(),
        z_l: q_l.clone(),
        q_l,
        stop_logits: vec![-40.0; frames],
        stop_targets: vec![0.0; frames],
    }
}

#[test]
fn perfect_prediction_has_zero_spectral_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let b = perfect_batch(&mut rng, 5);
    let l = combined_spectral_loss(&b).unwrap();
    assert_eq!(l.total, 0.0);
    assert_eq!(l.spectral(), 0.0);
}

/// Every raw term equals one: mel and pre-net errors are +1 everywhere;
/// the post-net error is +1 on half the channels and `[1, 1, -1]` over
/// time on the others, so squared errors average 1 and squared deltas
/// (0 or 4) average 1 as well.
fn unit_error_batch() -> SpectralBatch<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut b = perfect_batch(&mut rng, 3);
    b.y_m = offset(&b.q_m, |_, _| 1.0);
    b.y_l = offset(&b.q_l, |_, _| 1.0);
    b.z_l = offset(&b.q_l, |t, c| if c % 2 == 0 && t == 2 { -1.0 } else { 1.0 });
    b
}

#[test]
fn unit_errors_give_weight_sum() {
    let l = combined_spectral_loss(&unit_error_batch()).unwrap();
    assert_eq!((l.mel, l.lpc_pre, l.lpc_post, l.lpc_diff), (1.0, 1.0, 1.0, 1.0));
    assert_eq!(l.total, 2.6);
    assert_eq!(
        (MEL_WEIGHT, LPC_PRE_WEIGHT, LPC_POST_WEIGHT, LPC_DIFF_WEIGHT),
        (1.0, 0.8, 0.4, 0.4)
    );
}

#[test]
fn differential_term_is_translation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut b = perfect_batch(&mut rng, 6);
    let base = combined_spectral_loss(&b).unwrap();
    let delta: Vec<f64> = (0..N_LPC).map(|_| rng.gen_range(-2.0..2.0)).collect();
    b.z_l = offset(&b.z_l, |_, c| delta[c]);
    let shifted = combined_spectral_loss(&b).unwrap();
    assert!((shifted.lpc_diff - base.lpc_diff).abs() < 1e-12);

    let mut b = perfect_batch(&mut rng, 6);
    b.z_l = offset(&b.z_l, |_, _| 0.7);
    let l = combined_spectral_loss(&b).unwrap();
    assert!(l.lpc_diff.abs() < 1e-12);
    assert!((l.lpc_post - 0.49).abs() < 1e-12);
}

#[test]
fn stop_term_reference_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut b = perfect_batch(&mut rng, 4);
    b.stop_logits = vec![0.0; 4];
    b.stop_targets = stop_targets(4);
    assert_eq!(b.stop_targets, vec![0.0, 0.0, 0.0, 1.0]);
    let l = total_loss(&b).unwrap();
    assert!((l.stop - std::f64::consts::LN_2).abs() < 1e-15);

    b.stop_logits = vec![-60.0, -60.0, -60.0, 60.0];
    let l = total_loss(&b).unwrap();
    assert!(l.stop < 1e-20);
    assert_eq!(l.total, l.spectral() + l.stop);

    b.stop_targets[0] = 0.5;
    assert!(total_loss(&b).is_err());
}

#[test]
fn loss_rejects_bad_batches() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut b = perfect_batch(&mut rng, 3);
    b.z_l = rand_tensor(&mut rng, 2, N_LPC);
    assert!(combined_spectral_loss(&b).is_err());
    let mut b = perfect_batch(&mut rng, 3);
    b.stop_logits.pop();
    assert!(combined_spectral_loss(&b).is_err());
    let empty = SpectralBatch::<f64> {
        y_m: Tensor::zeros(0, N_MEL),
        q_m: Tensor::zeros(0, N_MEL),
        y_l: Tensor::zeros(0, N_LPC),
        z_l: Tensor::zeros(0, N_LPC),
        q_l: Tensor::zeros(0, N_LPC),
        stop_logits: vec![],
        stop_targets: vec![],
    };
    assert!(combined_spectral_loss(&empty).is_err());
}

#[test]
fn tape_loss_matches_plain_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let t = 4;
    let b = SpectralBatch {
        y_m: rand_tensor(&mut rng, t, N_MEL),
        q_m: rand_tensor(&mut rng, t, N_MEL),
        y_l: rand_tensor(&mut rng, t, N_LPC),
        z_l: rand_tensor(&mut rng, t, N_LPC),
        q_l: rand_tensor(&mut rng, t, N_LPC),
        stop_logits: (0..t).map(|_| rng.gen_range(-3.0..3.0)).collect(),
        stop_targets: stop_targets(t),
    };
    let plain = total_loss(&b).unwrap();
    let mut tape = seq2lpc::diff::Tape::new(0);
    let c = |tape: &mut seq2lpc::diff::Tape<f64>, x: &Tensor<f64>| tape.constant(x.clone());
    let (ym, qm, yl, zl, ql) = (
        c(&mut tape, &b.y_m),
        c(&mut tape, &b.q_m),
        c(&mut tape, &b.y_l),
        c(&mut tape, &b.z_l),
        c(&mut tape, &b.q_l),
    );
    let sl = tape.constant(Tensor::new(t, 1, b.stop_logits.clone()).unwrap());
    let st = tape.constant(Tensor::new(t, 1, b.stop_targets.clone()).unwrap());
    let lv = total_loss_var(&mut tape, ym, qm, yl, zl, ql, sl, st).unwrap();
    let tb = lv.breakdown(&tape);
    for (a, e) in [
        (tb.mel, plain.mel),
        (tb.lpc_pre, plain.lpc_pre),
        (tb.lpc_post, plain.lpc_post),
        (tb.lpc_diff, plain.lpc_diff),
        (tb.stop, plain.stop),
        (tb.total, plain.total),
    ] {
        assert!((a - e).abs() < 1e-12, "{a} vs {e}");
    }
}

#[test]
fn spectral_loss_gradient() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(50 + seed);
        let t = 3;
        let q_m = rand_tensor(&mut rng, t, N_MEL);
        let q_l = rand_tensor(&mut rng, t, N_LPC);
        let inputs = vec![
            rand_tensor(&mut rng, t, N_MEL),
            rand_tensor(&mut rng, t, N_LPC),
            rand_tensor(&mut rng, t, N_LPC),
        ];
        let r = grad_check(&inputs, GRAD_CHECK_TOLERANCE, |tape, v| {
            let qm = tape.constant(q_m.clone());
            let ql = tape.constant(q_l.clone());
            Ok(spectral_loss_var(tape, v[0], qm, v[1], v[2], ql)?.4)
        })
        .unwrap();
        assert!(r.passed(), "seed {seed}: {r:?}");
    }
}

fn frame(log_pitch: f64, corr: f64) -> FeatureFrame<f64> {
    FeatureFrame {
        cepstra: [0.0; 20],
        log_pitch,
        pitch_corr: corr,
    }
}

#[test]
fn percentiles_interpolate_linearly() {
    let v = [1.0, 2.0, 3.0, 4.0, 5.0];
    assert_eq!(percentile(&v, 0.0), 1.0);
    assert_eq!(percentile(&v, 0.5), 3.0);
    assert!((percentile(&v, 0.95) - 4.8).abs() < 1e-12);
    assert_eq!(percentile(&[7.0], 0.3), 7.0);
}

#[test]
fn pitch_span_of_full_ramp() {
    let (lo, hi) = (F0_MIN.ln(), F0_MAX.ln());
    let n = 101;
    let frames: Vec<_> = (0..n)
        .map(|i| frame(lo + (hi - lo) * i as f64 / (n - 1) as f64, 0.9))
        .collect();
    let raw = prosody_observations(&frames, 4.0).unwrap();
    assert!((raw.log_pitch_span - 0.9 * (hi - lo)).abs() < 1e-12);
    assert!((raw.log_duration - 4f64.ln()).abs() < 1e-15);
}

#[test]
fn unvoiced_frames_do_not_count() {
    let mut frames = vec![frame(5.0, 0.9); 10];
    frames.push(frame(4.2, 0.1));
    let raw = prosody_observations(&frames, 2.0).unwrap();
    assert_eq!(raw.log_pitch_span, 0.0);
    let silent = vec![frame(5.0, 0.0); 4];
    assert_eq!(prosody_observations(&silent, 2.0).unwrap().log_pitch_span, 0.0);
    assert!(prosody_observations(&silent, 0.0).is_err());
}

#[test]
fn normalization_reference_cases() {
    let same = RawProsody {
        log_duration: 1.2,
        log_pitch_span: 0.3,
    };
    let stats = ProsodyStats::from_observations(&[same; 3]).unwrap();
    let z = stats.normalize::<f64>(&same);
    assert_eq!((z.log_duration, z.log_pitch_span), (0.0, 0.0));

    let obs = [
        RawProsody {
            log_duration: 3f64.ln(),
            log_pitch_span: 0.2,
        },
        RawProsody {
            log_duration: 4f64.ln(),
            log_pitch_span: 0.4,
        },
    ];
    let stats = ProsodyStats::from_observations(&obs).unwrap();
    let mean_fps = stats.mean[0].exp();
    let slow = RawProsody {
        log_duration: (2.0 * mean_fps).ln(),
        log_pitch_span: 0.3,
    };
    assert!(stats.normalize::<f64>(&slow).log_duration > 0.0);
    assert!(ProsodyStats::from_observations(&[]).is_err());
}

#[test]
fn toy_corpus_is_deterministic_and_valid() {
    let spec = ToyCorpusSpec::default();
    let a = toy_corpus(&spec, 7).unwrap();
    assert_eq!(a, toy_corpus(&spec, 7).unwrap());
    assert_ne!(a, toy_corpus(&spec, 8).unwrap());
    assert_eq!(a.utterances.len(), 3);
    for (u, fps) in a.utterances.iter().zip([3, 4, 5]) {
        assert_eq!(u.frames(), u.symbols.len() * fps);
        for f in u.feature_frames().unwrap() {
            assert!(f.is_valid());
            let idx = quantize_log_pitch(f.log_pitch);
            assert_eq!(dequantize_log_pitch::<f64>(idx), f.log_pitch);
        }
    }
    // Longer frames per symbol map to larger normalized durations.
    let d: Vec<f64> = a.utterances.iter().map(|u| u.prosody.log_duration).collect();
    assert!(d[0] < d[1] && d[1] < d[2]);
}

#[test]
fn train_config_toml() {
    let c = TrainConfig::from_toml("steps = 5\nlearning_rate = 0.0\nprev_alignment = \"final\"\n")
        .unwrap();
    assert_eq!(c.steps, 5);
    assert_eq!(c.learning_rate, 0.0);
    assert_eq!(c.clip_norm, 1.0);
    assert_eq!(TrainConfig::from_toml(&c.to_toml()).unwrap(), c);
    assert!(TrainConfig::from_toml("stepz = 3").is_err());
    assert!(TrainConfig::from_toml("learning_rate = -1.0").is_err());
}

fn small_setup(cfg: &TrainConfig) -> (Model<f64>, Corpus) {
    let spec = ToyCorpusSpec {
        lengths: vec![3, 4, 3],
        frames_per_symbol: vec![2, 2, 3],
        ..Default::default()
    };
    let corpus = toy_corpus(&spec, 1).unwrap();
    let model = Model::new(cfg.apply(ModelConfig::toy(corpus.vocab)), 3).unwrap();
    (model, corpus)
}

#[test]
fn same_seed_same_curve() {
    let cfg = TrainConfig {
        steps: 4,
        ..Default::default()
    };
    let (m, c) = small_setup(&cfg);
    let a = train(m.clone(), &c, &cfg, |_, _| {}).unwrap();
    let b = train(m, &c, &cfg, |_, _| {}).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.model.params(), b.model.params());
    assert!(a.aborted_at.is_none());
    assert!(a.log[3].total < a.log[0].total);
}

#[test]
fn zero_learning_rate_keeps_loss_constant() {
    let cfg = TrainConfig {
        steps: 4,
        learning_rate: 0.0,
        prenet_dropout: 0.0,
        ..Default::default()
    };
    let (m, c) = small_setup(&cfg);
    let out = train(m.clone(), &c, &cfg, |_, _| {}).unwrap();
    for l in &out.log[1..] {
        assert_eq!(l, &out.log[0]);
    }
    assert_eq!(out.model.params(), m.params());
}

#[test]
fn loss_csv_has_header_and_rows() {
    let cfg = TrainConfig {
        steps: 2,
        ..Default::default()
    };
    let (m, c) = small_setup(&cfg);
    let out = train(m, &c, &cfg, |_, _| {}).unwrap();
    let csv = out.loss_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "step,mel,lpc_pre,lpc_post,lpc_diff,stop,total");
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("2,"));
    assert_eq!(lines[1].split(',').count(), 7);
}

#[test]
fn non_finite_loss_aborts_with_last_good_params() {
    let cfg = TrainConfig {
        steps: 3,
        ..Default::default()
    };
    let (mut m, c) = small_setup(&cfg);
    m.params_mut().get_mut("backend.mel.b").unwrap().data_mut()[0] = f64::INFINITY;
    let before = m.params().clone();
    let out = train(m, &c, &cfg, |_, _| {}).unwrap();
    assert_eq!(out.aborted_at, Some(1));
    assert!(out.log.is_empty());
    assert_eq!(out.model.params(), &before);
}

#[test]
fn evaluation_reports_alignments() {
    let cfg = TrainConfig::default();
    let (m, c) = small_setup(&cfg);
    let ev = evaluate(&m, &c).unwrap();
    assert_eq!(ev.alignments.len(), 3);
    for (a, u) in ev.alignments.iter().zip(&c.utterances) {
        assert_eq!(a.shape(), (u.frames(), u.symbols.len()));
    }
    assert!((0.0..=1.0).contains(&ev.mean_structure_fit));
    assert!(ev.loss.total.is_finite());
}
