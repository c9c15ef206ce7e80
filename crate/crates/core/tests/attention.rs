use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seq2lpc::attention::*;
use seq2lpc::diff::{grad_check, Tape, Tensor, GRAD_CHECK_TOLERANCE};

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn rand_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Tensor<f64> {
    Tensor::new(r, c, rand_vec(rng, r * c, -scale, scale)).unwrap()
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn one_hot(n: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[k] = 1.0;
    v
}

#[test]
fn structure_fit_reference_values() {
    for n in [1, 2, 7, 100] {
        for k in [0, n / 2, n - 1] {
            assert_eq!(structure_fit(&one_hot(n, k)).unwrap(), 1.0);
        }
    }
    let uniform = vec![0.01f64; 100];
    assert!((structure_fit(&uniform).unwrap() - 0.0005).abs() < 1e-15);
    let mut two = vec![0.0; 10];
    two[1] = 0.5;
    two[7] = 0.5;
    assert_eq!(structure_fit(&two).unwrap(), 0.25);
    assert_eq!(structure_fit(&[0.0; 4]).unwrap(), 0.0);
    assert!(structure_fit(&[0.5, -0.1]).is_err());
    assert!(structure_fit(&[f64::NAN]).is_err());
}

#[test]
fn structure_fit_stays_in_unit_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let n = rng.gen_range(1..40);
        let c = normalized(rand_vec(&mut rng, n, 0.0, 1.0));
        let f = structure_fit(&c).unwrap();
        assert!((0.0..=1.0).contains(&f));
    }
}

#[test]
fn structure_fit_prefers_sharp_unimodal() {
    let sharp = [0.0, 0.05, 0.9, 0.05, 0.0, 0.0, 0.0, 0.0];
    let wide = [0.1, 0.15, 0.2, 0.15, 0.1, 0.1, 0.1, 0.1];
    let bimodal = [0.45, 0.05, 0.0, 0.0, 0.0, 0.05, 0.45, 0.0];
    let fs = structure_fit(&sharp).unwrap();
    assert!(fs > structure_fit(&wide).unwrap());
    assert!(fs > structure_fit(&bimodal).unwrap());
}

#[test]
fn confined_log_reference_values() {
    assert_eq!(confined_log(1.0f64).unwrap(), 0.0);
    assert_eq!(confined_log(0.0f64).unwrap(), -50.0);
    assert_eq!(confined_log((-60.0f64).exp()).unwrap(), -50.0);
    assert!((confined_log(0.5f64).unwrap() - 0.5f64.ln()).abs() < 1e-15);
    assert!(confined_log(-1e-9f64).is_err());
}

#[test]
fn candidate_shift_semantics() {
    let c = candidate_set(&[0.2, 0.3, 0.5], &[0.0, 1.0, 0.0], 3).unwrap();
    assert_eq!(c[2], vec![0.0, 0.0, 1.0]);
    let c = candidate_set(&[0.2, 0.3, 0.5], &[0.0, 0.0, 1.0], 3).unwrap();
    assert_eq!(c[2], vec![0.0, 0.0, 0.0]);
    let e2 = one_hot(5, 2);
    let c = candidate_set(&e2, &e2, 3).unwrap();
    assert_eq!(c, vec![e2.clone(), e2.clone(), one_hot(5, 3)]);
    assert!(candidate_set(&[1.0], &[0.5, 0.5], 3).is_err());
    assert!(candidate_set(&[1.0], &[1.0], 2).is_err());
}

#[test]
fn four_candidates_add_double_shift() {
    let prev = [0.6, 0.4, 0.0, 0.0, 0.0];
    let c = candidate_set(&[0.2; 5], &prev, 4).unwrap();
    assert_eq!(c.len(), 4);
    assert_eq!(c[3], vec![0.0, 0.0, 0.6, 0.4, 0.0]);
    let sel = soft_select_logits(&c, &[0.1, -0.3, 0.2, 0.5]).unwrap();
    assert!((sel.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(sel.alignment.iter().all(|&v| v >= 0.0));
    assert!(sel.alignment.iter().sum::<f64>() <= 1.0 + 1e-6);
}

#[test]
fn four_candidate_suppression() {
    let prev = [0.0, 0.0, 0.0, 0.0, 0.0, 1.0];
    let mut b_t = vec![0.0; 6];
    b_t[5] = 1.0;
    let c = candidate_set(&b_t, &prev, 4).unwrap();
    let sel = soft_select_logits(&c, &[-10.0, -10.0, 10.0, 10.0]).unwrap();
    assert!(sel.alpha[2] < 1e-10 && sel.alpha[3] < 1e-10);
}

#[test]
fn soft_select_reference_values() {
    let e = |k| one_hot(4, k);
    let sel = soft_select_logits(&[e(0), e(1), e(2)], &[0.0; 3]).unwrap();
    assert_eq!(sel.penalties, vec![0.0; 3]);
    for a in &sel.alpha {
        assert!((a - 1.0 / 3.0).abs() < 1e-15);
    }

    // A candidate with zero structure fit is suppressed even when its
    // logit is at the upper bound and the others at the lower bound.
    let dead = vec![0.0; 4];
    let sel = soft_select_logits(&[dead, e(1), e(2)], &[10.0, -10.0, -10.0]).unwrap();
    assert_eq!(sel.penalties[0], -50.0);
    assert!(sel.alpha[0] < 1e-10, "{}", sel.alpha[0]);

    let same = normalized(vec![0.1, 0.5, 0.3, 0.1]);
    let sel = soft_select_logits(&[same.clone(), same.clone(), same.clone()], &[3.0, -1.0, 0.2])
        .unwrap();
    for (a, b) in sel.alignment.iter().zip(&same) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn suppression_holds_for_random_bounded_logits() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let n = rng.gen_range(3..20);
        let good = normalized(rand_vec(&mut rng, n, 0.0, 1.0));
        let good2 = normalized(rand_vec(&mut rng, n, 0.0, 1.0));
        let logits = rand_vec(&mut rng, 3, -10.0, 10.0);
        let sel = soft_select_logits(&[vec![0.0; n], good, good2], &logits).unwrap();
        assert!(sel.alpha[0] < 1e-10);
        let s: f64 = sel.alpha.iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
    }
}

#[test]
fn soft_select_with_dense_layer() {
    let state = DecoderState {
        s_p: vec![1.0, 0.0],
        x_c: vec![0.0],
        h_c: vec![0.5],
    };
    let w = Tensor::new(4, 3, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0])
        .unwrap();
    let b = Tensor::new(1, 3, vec![0.0, 0.0, -1.0]).unwrap();
    let c = vec![one_hot(3, 0), one_hot(3, 1), one_hot(3, 2)];
    let sel = soft_select(&c, &state, &w, &b).unwrap();
    let z = [1.0f64, 1.0, -1.0];
    let s: f64 = z.iter().map(|v| v.exp()).sum();
    for (a, zi) in sel.alpha.iter().zip(z) {
        assert!((a - zi.exp() / s).abs() < 1e-15);
    }
    let bad = Tensor::zeros(3, 3);
    assert!(soft_select(&c, &state, &bad, &b).is_err());
}

#[test]
fn context_reference_values() {
    let enc = Tensor::new(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    assert_eq!(context(&one_hot(3, 1), &enc).unwrap(), vec![3.0, 4.0]);
    let same = Tensor::new(3, 2, vec![7.0, -1.0, 7.0, -1.0, 7.0, -1.0]).unwrap();
    let u: Vec<f64> = context(&[1.0 / 3.0; 3], &same).unwrap();
    assert!((u[0] - 7.0).abs() < 1e-14 && (u[1] + 1.0).abs() < 1e-15);
    let two = Tensor::new(2, 2, vec![1.0, 2.0, 3.0, 6.0]).unwrap();
    assert_eq!(context(&[0.5, 0.5], &two).unwrap(), vec![2.0, 4.0]);
    assert!(context(&[1.0], &two).is_err());
}

fn attention_weights(rng: &mut ChaCha8Rng, d: &AttentionDims) -> Vec<Tensor<f64>> {
    LocationAttention::param_shapes(d)
        .into_iter()
        .map(|(_, (r, c))| rand_tensor(rng, r, c, 0.5))
        .collect()
}

const DIMS: AttentionDims = AttentionDims {
    query: 6,
    encoding: 5,
    attention: 4,
    location_filters: 3,
    location_kernel: 5,
};

#[test]
fn initial_attention_is_a_distribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let w = attention_weights(&mut rng, &DIMS);
    for n in [1usize, 2, 9] {
        let enc = rand_tensor(&mut rng, n, 5, 1.0);
        let h = rand_vec(&mut rng, 6, -1.0, 1.0);
        let cum = rand_vec(&mut rng, n, 0.0, 2.0);
        let b = initial_attention(&w, 5, &h, &enc, &cum).unwrap();
        assert_eq!(b.len(), n);
        assert!(b.iter().all(|&v| v >= 0.0));
        assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        if n == 1 {
            assert_eq!(b, vec![1.0]);
        }
        let again = initial_attention(&w, 5, &h, &enc, &cum).unwrap();
        assert_eq!(
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            again.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
    let empty = Tensor::zeros(0, 5);
    assert!(initial_attention(&w, 5, &[0.0; 6], &empty, &[]).is_err());
    let enc = rand_tensor(&mut rng, 3, 5, 1.0);
    assert!(initial_attention(&w, 5, &[0.0; 6], &enc, &[0.0; 2]).is_err());
}

#[test]
fn location_term_moves_attention() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = attention_weights(&mut rng, &DIMS);
    let enc = rand_tensor(&mut rng, 6, 5, 1.0);
    let h = vec![0.1; 6];
    let a = initial_attention(&w, 5, &h, &enc, &one_hot(6, 0)).unwrap();
    let b = initial_attention(&w, 5, &h, &enc, &one_hot(6, 4)).unwrap();
    assert_ne!(a, b);
}

#[test]
fn structure_fit_gradient() {
    // Points with a clear argmax, so the window does not move under the
    // finite-difference step.
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = rand_vec(&mut rng, 8, 0.0, 0.5);
        let peak = rng.gen_range(0..8);
        c[peak] = 1.0;
        let x = Tensor::new(1, 8, c).unwrap();
        let r = grad_check(&[x], GRAD_CHECK_TOLERANCE, |t, v| structure_fit_var(t, v[0])).unwrap();
        assert!(r.passed(), "seed {seed}: {r:?}");
    }
}

#[test]
fn soft_select_composite_gradient() {
    for k in [3usize, 4] {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let n = 7;
            let mut bt = rand_vec(&mut rng, n, 0.05, 0.3);
            bt[rng.gen_range(0..n)] = 1.0;
            let mut bp = rand_vec(&mut rng, n, 0.05, 0.3);
            bp[rng.gen_range(0..n - k + 1)] = 1.0;
            let inputs = vec![
                Tensor::new(1, n, normalized(bt)).unwrap(),
                Tensor::new(1, n, normalized(bp)).unwrap(),
                rand_tensor(&mut rng, 1, 5, 1.0),
                rand_tensor(&mut rng, 5, k, 1.0),
                rand_tensor(&mut rng, 1, k, 1.0),
                rand_tensor(&mut rng, n, 3, 1.0),
            ];
            let r = grad_check(&inputs, GRAD_CHECK_TOLERANCE, |t: &mut Tape<f64>, v| {
                let cands = candidate_set_var(t, v[0], v[1], k)?;
                let layer = SoftSelection {
                    weight: v[3],
                    bias: v[4],
                };
                let sel = layer.select(t, &cands, v[2])?;
                let ctx = t.matmul(sel.alignment, v[5])?;
                let sq = t.mul(ctx, ctx)?;
                let a = t.sum(sq);
                let p = t.sum(sel.alpha);
                t.add(a, p)
            })
            .unwrap();
            assert!(r.passed(), "k {k} seed {seed}: {r:?}");
        }
    }
}

#[test]
fn tape_selection_matches_plain() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for k in [3usize, 4] {
        let n = 6;
        let bt = normalized(rand_vec(&mut rng, n, 0.0, 1.0));
        let bp = normalized(rand_vec(&mut rng, n, 0.0, 1.0));
        let state = rand_vec(&mut rng, 4, -1.0, 1.0);
        let w = rand_tensor(&mut rng, 4, k, 1.0);
        let b = rand_tensor(&mut rng, 1, k, 1.0);

        let ds = DecoderState {
            s_p: state[..2].to_vec(),
            x_c: state[2..3].to_vec(),
            h_c: state[3..].to_vec(),
        };
        let plain = soft_select(&candidate_set(&bt, &bp, k).unwrap(), &ds, &w, &b).unwrap();

        let mut t = Tape::inference(0);
        let vt = t.constant(Tensor::row(&bt));
        let vp = t.constant(Tensor::row(&bp));
        let vs = t.constant(Tensor::row(&state));
        let layer = SoftSelection {
            weight: t.constant(w.clone()),
            bias: t.constant(b.clone()),
        };
        let cands = candidate_set_var(&mut t, vt, vp, k).unwrap();
        let sel = layer.select(&mut t, &cands, vs).unwrap();
        for (a, b) in t.value(sel.alignment).data().iter().zip(&plain.alignment) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in t.value(sel.alpha).data().iter().zip(&plain.alpha) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn confined_log_on_tape_has_zero_gradient_when_clamped() {
    let mut t = Tape::<f64>::new(0);
    let x = t.param(Tensor::row(&[0.0, (-60.0f64).exp(), 0.25]));
    let y = confined_log_var(&mut t, x);
    assert_eq!(t.value(y).data()[..2], [-50.0, -50.0]);
    let s = t.sum(y);
    let g = t.backward(s).unwrap();
    assert_eq!(g.get(x).unwrap()[..2], [0.0, 0.0]);
    assert!((g.get(x).unwrap()[2] - 4.0).abs() < 1e-12);
}
