//! Location-sensitive attention and augmented candidate soft-selection.
//!
//! Each decoder step first computes an initial alignment `b_t` with
//! content- and location-based attention. A candidate set is then formed
//! from `b_t`, the previous alignment and its one-step shift toward later
//! encoder positions. Every candidate is scored by [`structure_fit`], the
//! scores are turned into penalties with [`confined_log`], and the final
//! alignment is the convex combination
//!
//! ```text
//! alpha = softmax(FC(s_p, x_c, h_c) + p)
//! a     = sum_k alpha_k c_k
//! ```
//!
//! The free functions operate on plain slices. The `*_var` functions and
//! the layer structs record the same computation on a [`Tape`].

use serde::{Deserialize, Serialize};

use crate::diff::{peak_index, Tape, Tensor, Var};
use crate::error::Error;
use crate::{Real, Result};

/// Lower clamp of [`confined_log`].
pub const CONFINED_LOG_FLOOR: f64 = -50.0;
/// Half-width of the peak window used by [`structure_fit`].
pub const PEAK_RADIUS: usize = 2;
/// Candidate count of the standard augmented attention.
pub const DEFAULT_CANDIDATES: usize = 3;

/// Which alignment of the previous step seeds the candidate set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrevAlignment {
    /// The previous initial alignment `b_{t-1}`.
    #[default]
    Initial,
    /// The previous final alignment `a_{t-1}`.
    Final,
}

impl PrevAlignment {
    pub fn as_str(self) -> &'static str {
        match self {
            PrevAlignment::Initial => "initial",
            PrevAlignment::Final => "final",
        }
    }
}

impl std::str::FromStr for PrevAlignment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "initial" => Ok(PrevAlignment::Initial),
            "final" => Ok(PrevAlignment::Final),
            other => Err(Error::Config(format!(
                "unknown previous-alignment mode `{other}` (expected initial or final)"
            ))),
        }
    }
}

/// The decoder variables fed to the selection layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState<T> {
    pub s_p: Vec<T>,
    pub x_c: Vec<T>,
    pub h_c: Vec<T>,
}

impl<T: Real> DecoderState<T> {
    pub fn concat(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.s_p.len() + self.x_c.len() + self.h_c.len());
        v.extend_from_slice(&self.s_p);
        v.extend_from_slice(&self.x_c);
        v.extend_from_slice(&self.h_c);
        v
    }
}

/// Result of one soft-selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection<T> {
    pub penalties: Vec<T>,
    pub alpha: Vec<T>,
    pub alignment: Vec<T>,
}

fn check_alignment<T: Real>(c: &[T]) -> Result<()> {
    if c.iter().any(|v| !v.is_finite() || *v < T::zero()) {
        return Err(Error::invalid(
            "alignment weights must be finite and nonnegative",
        ));
    }
    Ok(())
}

/// `max(c) * sum(c[n] for |n - n*| <= 2)` with `n*` the argmax; zero for
/// an all-zero vector. Tied maxima resolve to the one whose window holds
/// the most mass.
pub fn structure_fit<T: Real>(c: &[T]) -> Result<T> {
    check_alignment(c)?;
    if c.is_empty() {
        return Err(Error::invalid("empty alignment"));
    }
    let n_star = peak_index(c, PEAK_RADIUS);
    let lo = n_star.saturating_sub(PEAK_RADIUS);
    let hi = (n_star + PEAK_RADIUS + 1).min(c.len());
    let mass: T = c[lo..hi].iter().copied().sum();
    Ok(c[n_star] * mass)
}

/// `max(ln x, -50)`.
pub fn confined_log<T: Real>(x: T) -> Result<T> {
    if !(x >= T::zero()) || !x.is_finite() {
        return Err(Error::invalid(format!(
            "confined log needs a finite nonnegative input, got {x}"
        )));
    }
    Ok(x.ln().max(T::lit(CONFINED_LOG_FLOOR)))
}

/// `b` moved `steps` positions toward higher indices, zero-filled.
pub fn shift<T: Real>(b: &[T], steps: usize) -> Vec<T> {
    let n = b.len();
    let mut out = vec![T::zero(); n];
    if steps < n {
        out[steps..].copy_from_slice(&b[..n - steps]);
    }
    out
}

/// `{b_t, b_prev, shift(b_prev, 1), ..., shift(b_prev, k - 2)}`.
pub fn candidate_set<T: Real>(b_t: &[T], b_prev: &[T], k: usize) -> Result<Vec<Vec<T>>> {
    if b_t.len() != b_prev.len() {
        return Err(Error::shape(
            "candidate_set",
            format!("b_t has {} positions, b_prev {}", b_t.len(), b_prev.len()),
        ));
    }
    if k < DEFAULT_CANDIDATES {
        return Err(Error::invalid(format!("need at least 3 candidates, got {k}")));
    }
    let mut out = Vec::with_capacity(k);
    out.push(b_t.to_vec());
    for s in 0..k - 1 {
        out.push(shift(b_prev, s));
    }
    Ok(out)
}

/// The `t = 0` previous alignment: one-hot at the first position.
pub fn bootstrap_alignment<T: Real>(n: usize) -> Result<Vec<T>> {
    if n == 0 {
        return Err(Error::invalid("empty encoder sequence"));
    }
    let mut v = vec![T::zero(); n];
    v[0] = T::one();
    Ok(v)
}

/// Penalised softmax selection among `candidates` given raw FC outputs.
pub fn soft_select_logits<T: Real>(candidates: &[Vec<T>], logits: &[T]) -> Result<Selection<T>> {
    let k = candidates.len();
    if k < DEFAULT_CANDIDATES || logits.len() != k {
        return Err(Error::shape(
            "soft_select",
            format!("{k} candidates, {} selection logits", logits.len()),
        ));
    }
    let n = candidates[0].len();
    if candidates.iter().any(|c| c.len() != n) {
        return Err(Error::shape("soft_select", "candidate lengths differ"));
    }
    let penalties = candidates
        .iter()
        .map(|c| confined_log(structure_fit(c)?))
        .collect::<Result<Vec<T>>>()?;
    let z: Vec<T> = logits.iter().zip(&penalties).map(|(&l, &p)| l + p).collect();
    let m = z.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = z.iter().map(|&v| (v - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    let alpha: Vec<T> = e.iter().map(|&v| v / s).collect();
    let mut alignment = vec![T::zero(); n];
    for (c, &w) in candidates.iter().zip(&alpha) {
        for (o, &v) in alignment.iter_mut().zip(c) {
            *o += w * v;
        }
    }
    Ok(Selection {
        penalties,
        alpha,
        alignment,
    })
}

/// Soft-selection with a dense layer `FC(S) = S W + b` where `W` is
/// `|S| x K` and `b` is `1 x K`.
pub fn soft_select<T: Real>(
    candidates: &[Vec<T>],
    state: &DecoderState<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Selection<T>> {
    let s = state.concat();
    let k = candidates.len();
    if weight.shape() != (s.len(), k) || bias.shape() != (1, k) {
        return Err(Error::shape(
            "soft_select",
            format!(
                "state of {} with weight {:?} and bias {:?} for {k} candidates",
                s.len(),
                weight.shape(),
                bias.shape()
            ),
        ));
    }
    let logits: Vec<T> = (0..k)
        .map(|j| {
            bias.get(0, j) + s.iter().enumerate().map(|(i, &x)| x * weight.get(i, j)).sum::<T>()
        })
        .collect();
    soft_select_logits(candidates, &logits)
}

/// `sum_n a[n] * encodings[n]` for `encodings` of shape `N x E`.
pub fn context<T: Real>(a: &[T], encodings: &Tensor<T>) -> Result<Vec<T>> {
    if a.len() != encodings.rows() {
        return Err(Error::shape(
            "context",
            format!("{} weights for {} encodings", a.len(), encodings.rows()),
        ));
    }
    let mut out = vec![T::zero(); encodings.cols()];
    for (n, &w) in a.iter().enumerate() {
        for (o, &e) in out.iter_mut().zip(encodings.row_slice(n)) {
            *o += w * e;
        }
    }
    Ok(out)
}

/// [`structure_fit`] of a `1 x N` value.
pub fn structure_fit_var<T: Real>(tape: &mut Tape<T>, c: Var) -> Result<Var> {
    let m = tape.reduce_max(c)?;
    let w = tape.window_sum_at_argmax(c, PEAK_RADIUS)?;
    tape.mul(m, w)
}

/// Elementwise [`confined_log`].
pub fn confined_log_var<T: Real>(tape: &mut Tape<T>, x: Var) -> Var {
    let l = tape.log(x);
    tape.max_const(l, T::lit(CONFINED_LOG_FLOOR))
}

/// `1 x N` value shifted `steps` positions right with zero fill.
pub fn shift_var<T: Real>(tape: &mut Tape<T>, b: Var, steps: usize) -> Result<Var> {
    let n = tape.shape(b).1;
    if steps == 0 {
        return Ok(b);
    }
    if steps >= n {
        return Ok(tape.constant(Tensor::zeros(1, n)));
    }
    let zeros = tape.constant(Tensor::zeros(1, steps));
    let kept = tape.slice_cols(b, 0, n - steps)?;
    tape.concat_cols(&[zeros, kept])
}

/// Tape form of [`candidate_set`].
pub fn candidate_set_var<T: Real>(
    tape: &mut Tape<T>,
    b_t: Var,
    b_prev: Var,
    k: usize,
) -> Result<Vec<Var>> {
    let (st, sp) = (tape.shape(b_t), tape.shape(b_prev));
    if st != sp || st.0 != 1 {
        return Err(Error::shape(
            "candidate_set",
            format!("b_t {st:?}, b_prev {sp:?}"),
        ));
    }
    if k < DEFAULT_CANDIDATES {
        return Err(Error::invalid(format!("need at least 3 candidates, got {k}")));
    }
    let mut out = vec![b_t];
    for s in 0..k - 1 {
        out.push(shift_var(tape, b_prev, s)?);
    }
    Ok(out)
}

/// Tape outputs of a soft-selection.
#[derive(Debug, Clone, Copy)]
pub struct SelectionVars {
    pub penalties: Var,
    pub alpha: Var,
    pub alignment: Var,
}

/// Dense layer producing one selection logit per candidate.
#[derive(Debug, Clone, Copy)]
pub struct SoftSelection {
    pub weight: Var,
    pub bias: Var,
}

impl SoftSelection {
    pub fn param_shapes(state_dim: usize, k: usize) -> Vec<(&'static str, (usize, usize))> {
        vec![("weight", (state_dim, k)), ("bias", (1, k))]
    }

    pub fn bind(mut lookup: impl FnMut(&str) -> Result<Var>) -> Result<Self> {
        Ok(Self {
            weight: lookup("weight")?,
            bias: lookup("bias")?,
        })
    }

    /// `state` is the `1 x |S|` row `[s_p, x_c, h_c]`.
    pub fn select<T: Real>(
        &self,
        tape: &mut Tape<T>,
        candidates: &[Var],
        state: Var,
    ) -> Result<SelectionVars> {
        let k = tape.shape(self.bias).1;
        if candidates.len() != k {
            return Err(Error::shape(
                "soft_select",
                format!("{} candidates for a {k}-way selection layer", candidates.len()),
            ));
        }
        let mut pens = Vec::with_capacity(k);
        for &c in candidates {
            let f = structure_fit_var(tape, c)?;
            pens.push(confined_log_var(tape, f));
        }
        let penalties = tape.concat_cols(&pens)?;
        let logits = tape.matmul(state, self.weight)?;
        let logits = tape.add(logits, self.bias)?;
        let alpha = tape.softmax(logits, penalties)?;
        let stacked = tape.concat_rows(candidates)?;
        let alignment = tape.matmul(alpha, stacked)?;
        Ok(SelectionVars {
            penalties,
            alpha,
            alignment,
        })
    }
}

/// Sizes of the content- and location-based attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionDims {
    pub query: usize,
    pub encoding: usize,
    pub attention: usize,
    pub location_filters: usize,
    pub location_kernel: usize,
}

/// Content- and location-based attention producing `b_t`.
///
/// Energies are `v . tanh(W_q h + W_m e_n + W_l conv(cum)_n)` where `cum`
/// is the running sum of previous final alignments.
#[derive(Debug, Clone, Copy)]
pub struct LocationAttention {
    pub query: Var,
    pub memory: Var,
    pub location_conv: Var,
    pub location_bias: Var,
    pub location_dense: Var,
    pub v: Var,
    pub kernel: usize,
}

impl LocationAttention {
    pub fn param_shapes(d: &AttentionDims) -> Vec<(&'static str, (usize, usize))> {
        vec![
            ("query", (d.query, d.attention)),
            ("memory", (d.encoding, d.attention)),
            ("location_conv", (d.location_kernel, d.location_filters)),
            ("location_bias", (1, d.location_filters)),
            ("location_dense", (d.location_filters, d.attention)),
            ("v", (d.attention, 1)),
        ]
    }

    pub fn bind(kernel: usize, mut lookup: impl FnMut(&str) -> Result<Var>) -> Result<Self> {
        if kernel % 2 == 0 {
            return Err(Error::Config(format!(
                "location kernel must be odd, got {kernel}"
            )));
        }
        Ok(Self {
            query: lookup("query")?,
            memory: lookup("memory")?,
            location_conv: lookup("location_conv")?,
            location_bias: lookup("location_bias")?,
            location_dense: lookup("location_dense")?,
            v: lookup("v")?,
            kernel,
        })
    }

    /// Projects the `N x E` encodings once per utterance.
    pub fn project_memory<T: Real>(&self, tape: &mut Tape<T>, encodings: Var) -> Result<Var> {
        tape.matmul(encodings, self.memory)
    }

    /// Initial alignment `b_t` as a `1 x N` row.
    pub fn attend<T: Real>(
        &self,
        tape: &mut Tape<T>,
        h_c: Var,
        memory: Var,
        cumulative: Var,
    ) -> Result<Var> {
        let n = tape.shape(memory).0;
        if n == 0 {
            return Err(Error::invalid("empty encoder sequence"));
        }
        if tape.shape(cumulative) != (1, n) {
            return Err(Error::shape(
                "initial_attention",
                format!("cumulative {:?} for {n} positions", tape.shape(cumulative)),
            ));
        }
        let q = tape.matmul(h_c, self.query)?;
        let cum = tape.reshape(cumulative, n, 1)?;
        let loc = tape.conv1d(
            cum,
            self.location_conv,
            self.location_bias,
            self.kernel,
            self.kernel / 2,
        )?;
        let loc = tape.matmul(loc, self.location_dense)?;
        let pre = tape.add(memory, loc)?;
        let pre = tape.add_row(pre, q)?;
        let act = tape.tanh(pre);
        let e = tape.matmul(act, self.v)?;
        let e = tape.reshape(e, 1, n)?;
        let zero = tape.constant(Tensor::zeros(1, n));
        tape.softmax(e, zero)
    }
}

/// Initial alignment for plain inputs, evaluated on a scratch tape.
///
/// `weights` lists tensors in the order of [`LocationAttention::param_shapes`].
pub fn initial_attention<T: Real>(
    weights: &[Tensor<T>],
    kernel: usize,
    h_c: &[T],
    encodings: &Tensor<T>,
    cumulative: &[T],
) -> Result<Vec<T>> {
    if encodings.rows() == 0 {
        return Err(Error::invalid("empty encoder sequence"));
    }
    if weights.len() != 6 {
        return Err(Error::shape(
            "initial_attention",
            format!("expected 6 weight tensors, got {}", weights.len()),
        ));
    }
    let mut tape = Tape::inference(0);
    let mut it = weights.iter();
    let att = LocationAttention::bind(kernel, |_| {
        Ok(tape.constant(it.next().expect("six weights").clone()))
    })?;
    let enc = tape.constant(encodings.clone());
    let h = tape.constant(Tensor::row(h_c));
    let cum = tape.constant(Tensor::row(cumulative));
    let mem = att.project_memory(&mut tape, enc)?;
    let b = att.attend(&mut tape, h, mem, cum)?;
    Ok(tape.value(b).data().to_vec())
}
