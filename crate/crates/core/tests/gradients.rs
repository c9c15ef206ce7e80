use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seq2lpc::diff::{grad_check, Tape, Tensor, Var, GRAD_CHECK_TOLERANCE};
use seq2lpc::Result;

const POINTS: u64 = 10;

fn rand_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: f64, hi: f64) -> Tensor<f64> {
    let data = (0..r * c).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::new(r, c, data).unwrap()
}

/// Reduces any output to a scalar through a fixed random weighting so
/// every output element contributes a distinct gradient.
fn weighted(t: &mut Tape<f64>, v: Var, seed: u64) -> Result<Var> {
    let (r, c) = t.shape(v);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let w = t.constant(rand_tensor(&mut rng, r, c, -1.0, 1.0));
    let p = t.mul(v, w)?;
    Ok(t.sum(p))
}

fn check_points<G, F>(name: &str, gen: G, f: F)
where
    G: Fn(&mut ChaCha8Rng) -> Vec<Tensor<f64>>,
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var> + Copy,
{
    for seed in 0..POINTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = gen(&mut rng);
        let report = grad_check(&inputs, GRAD_CHECK_TOLERANCE, f).unwrap();
        assert!(
            report.passed(),
            "{name} seed {seed}: {report:?}"
        );
    }
}

#[test]
fn matmul() {
    check_points(
        "matmul",
        |r| vec![rand_tensor(r, 3, 4, -1.0, 1.0), rand_tensor(r, 4, 5, -1.0, 1.0)],
        |t, v| {
            let y = t.matmul(v[0], v[1])?;
            weighted(t, y, 1)
        },
    );
}

#[test]
fn add_sub_mul() {
    check_points(
        "add/sub/mul",
        |r| vec![rand_tensor(r, 2, 3, -1.0, 1.0), rand_tensor(r, 2, 3, -1.0, 1.0)],
        |t, v| {
            let a = t.add(v[0], v[1])?;
            let s = t.sub(v[0], v[1])?;
            let m = t.mul(a, s)?;
            weighted(t, m, 2)
        },
    );
}

#[test]
fn add_row_and_scale() {
    check_points(
        "add_row/scale",
        |r| vec![rand_tensor(r, 4, 3, -1.0, 1.0), rand_tensor(r, 1, 3, -1.0, 1.0)],
        |t, v| {
            let y = t.add_row(v[0], v[1])?;
            let y = t.scale(y, -1.7);
            weighted(t, y, 3)
        },
    );
}

#[test]
fn concat_slice_reshape() {
    check_points(
        "concat/slice/reshape",
        |r| vec![rand_tensor(r, 2, 3, -1.0, 1.0), rand_tensor(r, 2, 2, -1.0, 1.0)],
        |t, v| {
            let c = t.concat_cols(&[v[0], v[1], v[0]])?;
            let s = t.slice_cols(c, 1, 5)?;
            let rws = t.concat_rows(&[s, s])?;
            let sr = t.slice_rows(rws, 1, 2)?;
            let re = t.reshape(sr, 5, 2)?;
            weighted(t, re, 4)
        },
    );
}

#[test]
fn sigmoid_tanh() {
    check_points(
        "sigmoid/tanh",
        |r| vec![rand_tensor(r, 3, 3, -3.0, 3.0)],
        |t, v| {
            let a = t.sigmoid(v[0]);
            let b = t.tanh(v[0]);
            let m = t.mul(a, b)?;
            weighted(t, m, 5)
        },
    );
}

#[test]
fn relu() {
    check_points(
        "relu",
        |r| {
            // Keep samples away from the kink.
            let mut x = rand_tensor(r, 3, 4, 0.05, 1.0);
            for (i, v) in x.data_mut().iter_mut().enumerate() {
                if i % 2 == 0 {
                    *v = -*v;
                }
            }
            vec![x]
        },
        |t, v| {
            let y = t.relu(v[0]);
            weighted(t, y, 6)
        },
    );
}

#[test]
fn log_and_max_const() {
    check_points(
        "log/max_const",
        |r| vec![rand_tensor(r, 2, 4, 0.1, 2.0)],
        |t, v| {
            let l = t.log(v[0]);
            let m = t.max_const(l, -0.2);
            weighted(t, m, 7)
        },
    );
}

#[test]
fn softmax_with_bias() {
    check_points(
        "softmax",
        |r| vec![rand_tensor(r, 2, 5, -2.0, 2.0), rand_tensor(r, 2, 5, -2.0, 2.0)],
        |t, v| {
            let y = t.softmax(v[0], v[1])?;
            weighted(t, y, 8)
        },
    );
}

#[test]
fn lstm_cell() {
    check_points(
        "lstm_cell",
        |r| {
            vec![
                rand_tensor(r, 1, 3, -1.0, 1.0),
                rand_tensor(r, 1, 2, -1.0, 1.0),
                rand_tensor(r, 1, 2, -1.0, 1.0),
                rand_tensor(r, 5, 8, -1.0, 1.0),
                rand_tensor(r, 1, 8, -1.0, 1.0),
            ]
        },
        |t, v| {
            let y = t.lstm_cell(v[0], v[1], v[2], v[3], v[4])?;
            weighted(t, y, 9)
        },
    );
}

#[test]
fn lstm_cell_chained() {
    check_points(
        "lstm_cell x2",
        |r| {
            vec![
                rand_tensor(r, 1, 2, -1.0, 1.0),
                rand_tensor(r, 4, 8, -1.0, 1.0),
                rand_tensor(r, 1, 8, -1.0, 1.0),
            ]
        },
        |t, v| {
            let h0 = t.constant(Tensor::zeros(1, 2));
            let s1 = t.lstm_cell(v[0], h0, h0, v[1], v[2])?;
            let h1 = t.slice_cols(s1, 0, 2)?;
            let c1 = t.slice_cols(s1, 2, 2)?;
            let s2 = t.lstm_cell(v[0], h1, c1, v[1], v[2])?;
            weighted(t, s2, 10)
        },
    );
}

#[test]
fn conv1d() {
    check_points(
        "conv1d",
        |r| {
            vec![
                rand_tensor(r, 6, 2, -1.0, 1.0),
                rand_tensor(r, 3 * 2, 4, -1.0, 1.0),
                rand_tensor(r, 1, 4, -1.0, 1.0),
            ]
        },
        |t, v| {
            let y = t.conv1d(v[0], v[1], v[2], 3, 1)?;
            weighted(t, y, 11)
        },
    );
}

#[test]
fn mse_and_bce() {
    check_points(
        "mse/bce",
        |r| {
            vec![
                rand_tensor(r, 2, 3, -2.0, 2.0),
                rand_tensor(r, 2, 3, -2.0, 2.0),
                rand_tensor(r, 2, 3, 0.0, 1.0),
            ]
        },
        |t, v| {
            let m = t.mse(v[0], v[1])?;
            let b = t.bce_with_logits(v[0], v[2])?;
            t.add(m, b)
        },
    );
}

#[test]
fn reductions() {
    check_points(
        "reduce_max/window_sum",
        |r| vec![rand_tensor(r, 1, 9, 0.0, 1.0)],
        |t, v| {
            let m = t.reduce_max(v[0])?;
            let w = t.window_sum_at_argmax(v[0], 2)?;
            let p = t.mul(m, w)?;
            let s = t.sum(v[0]);
            t.add(p, s)
        },
    );
}

#[test]
fn gather() {
    check_points(
        "gather",
        |r| vec![rand_tensor(r, 4, 3, -1.0, 1.0)],
        |t, v| {
            let y = t.gather(v[0], &[2, 0, 2, 3])?;
            weighted(t, y, 12)
        },
    );
}

#[test]
fn shape_errors_name_the_primitive() {
    let mut t = Tape::<f64>::new(0);
    let a = t.param(Tensor::zeros(2, 3));
    let b = t.param(Tensor::zeros(2, 3));
    let err = t.matmul(a, b).unwrap_err().to_string();
    assert!(err.starts_with("matmul"), "{err}");
    let wide = t.param(Tensor::zeros(2, 4));
    assert!(t.softmax(a, wide).unwrap_err().to_string().starts_with("softmax"));
    let c = t.param(Tensor::zeros(1, 4));
    assert!(t.add_row(a, c).unwrap_err().to_string().starts_with("add_row"));
    assert!(t.mse(a, c).unwrap_err().to_string().starts_with("mse"));
    assert!(t.backward(a).is_err());
}

#[test]
fn detach_and_constants_get_no_gradient() {
    let mut t = Tape::<f64>::new(0);
    let a = t.param(Tensor::row(&[1.0, 2.0]));
    let d = t.detach(a);
    let k = t.constant(Tensor::row(&[3.0, 4.0]));
    let p = t.mul(d, k).unwrap();
    let q = t.mul(a, a).unwrap();
    let s = t.add(p, q).unwrap();
    let l = t.sum(s);
    let g = t.backward(l).unwrap();
    assert_eq!(g.get(a).unwrap(), &[2.0, 4.0]);
    assert!(g.get(d).is_none());
    assert!(g.get(k).is_none());
}

#[test]
fn dropout_is_seeded_and_off_at_inference() {
    let run = |seed| {
        let mut t = Tape::<f64>::new(seed);
        let a = t.param(Tensor::row(&[1.0; 64]));
        let y = t.dropout(a, 0.5);
        t.value(y).clone()
    };
    assert_eq!(run(3), run(3));
    assert_ne!(run(3), run(4));
    let kept = run(3).data().iter().filter(|&&v| v > 0.0).count();
    assert!(kept > 16 && kept < 48);
    assert!(run(3).data().iter().all(|&v| v == 0.0 || v == 2.0));

    let mut t = Tape::<f64>::inference(3);
    let a = t.param(Tensor::row(&[1.0; 8]));
    let y = t.dropout(a, 0.5);
    assert_eq!(y, a);
}

#[test]
fn confined_log_gradient_is_finite_at_zero() {
    let mut t = Tape::<f64>::new(0);
    let a = t.param(Tensor::row(&[0.0, 0.5]));
    let l = t.log(a);
    let m = t.max_const(l, -50.0);
    let s = t.sum(m);
    assert_eq!(t.value(s).item(), -50.0 + 0.5f64.ln());
    let g = t.backward(s).unwrap();
    assert_eq!(g.get(a).unwrap(), &[0.0, 2.0]);
}

#[test]
fn forward_reference_values() {
    let mut t = Tape::<f64>::new(0);
    let z = t.constant(Tensor::zeros(1, 3));
    let s = t.softmax(z, z).unwrap();
    for &v in t.value(s).data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
    let g = t.sigmoid(z);
    assert_eq!(t.value(g).data(), &[0.5; 3]);
    let l = t.log(z);
    let c = t.max_const(l, -50.0);
    assert_eq!(t.value(c).data(), &[-50.0; 3]);
}

#[test]
fn failing_gradient_is_reported() {
    // A deliberately wrong tolerance of zero cannot pass a real check.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = rand_tensor(&mut rng, 1, 4, -1.0, 1.0);
    let report = grad_check(&[x], 0.0, |t, v| {
        let y = t.tanh(v[0]);
        Ok(t.sum(y))
    })
    .unwrap();
    assert!(!report.passed());
    assert!(report.index < 4);
}
