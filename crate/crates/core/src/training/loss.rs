use crate::diff::{Tape, Tensor, Var};
use crate::error::Error;
use crate::model::{N_LPC, N_MEL};
use crate::{Real, Result};

pub const MEL_WEIGHT: f64 = 1.0;
pub const LPC_PRE_WEIGHT: f64 = 0.8;
pub const LPC_POST_WEIGHT: f64 = 0.4;
pub const LPC_DIFF_WEIGHT: f64 = 0.4;

/// Predictions and targets of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBatch<T> {
    pub y_m: Tensor<T>,
    pub q_m: Tensor<T>,
    pub y_l: Tensor<T>,
    pub z_l: Tensor<T>,
    pub q_l: Tensor<T>,
    pub stop_logits: Vec<T>,
    pub stop_targets: Vec<T>,
}

impl<T: Real> SpectralBatch<T> {
    pub fn frames(&self) -> usize {
        self.q_m.rows()
    }

    fn validate(&self) -> Result<()> {
        let t = self.q_m.rows();
        if t == 0 {
            return Err(Error::invalid("empty batch"));
        }
        let shapes = [
            ("y_m", self.y_m.shape(), N_MEL),
            ("q_m", self.q_m.shape(), N_MEL),
            ("y_l", self.y_l.shape(), N_LPC),
            ("z_l", self.z_l.shape(), N_LPC),
            ("q_l", self.q_l.shape(), N_LPC),
        ];
        for (name, shape, cols) in shapes {
            if shape != (t, cols) {
                return Err(Error::shape(
                    "spectral_loss",
                    format!("{name} is {shape:?}, expected ({t}, {cols})"),
                ));
            }
        }
        if self.stop_logits.len() != t || self.stop_targets.len() != t {
            return Err(Error::shape(
                "spectral_loss",
                format!(
                    "{} stop logits and {} targets for {t} frames",
                    self.stop_logits.len(),
                    self.stop_targets.len()
                ),
            ));
        }
        if self
            .stop_targets
            .iter()
            .any(|&s| s != T::zero() && s != T::one())
        {
            return Err(Error::invalid("stop targets must be 0 or 1"));
        }
        Ok(())
    }
}

/// Unweighted loss terms and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub mel: f64,
    pub lpc_pre: f64,
    pub lpc_post: f64,
    pub lpc_diff: f64,
    pub stop: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn spectral(&self) -> f64 {
        weighted(self.mel, self.lpc_pre, self.lpc_post, self.lpc_diff)
    }

    pub fn csv_header() -> &'static str {
        "step,mel,lpc_pre,lpc_post,lpc_diff,stop,total"
    }

    pub fn csv_row(&self, step: usize) -> String {
        format!(
            "{step},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.mel, self.lpc_pre, self.lpc_post, self.lpc_diff, self.stop, self.total
        )
    }

    /// Element-wise mean of several breakdowns.
    pub fn mean(items: &[LossBreakdown]) -> LossBreakdown {
        let n = items.len().max(1) as f64;
        let mut m = LossBreakdown::default();
        for b in items {
            m.mel += b.mel / n;
            m.lpc_pre += b.lpc_pre / n;
            m.lpc_post += b.lpc_post / n;
            m.lpc_diff += b.lpc_diff / n;
            m.stop += b.stop / n;
            m.total += b.total / n;
        }
        m
    }
}

fn weighted(mel: f64, pre: f64, post: f64, diff: f64) -> f64 {
    MEL_WEIGHT * mel + LPC_PRE_WEIGHT * pre + LPC_POST_WEIGHT * post + LPC_DIFF_WEIGHT * diff
}

fn mse<T: Real>(a: &[T], b: &[T]) -> f64 {
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = (x - y).to_f64_lossy();
            d * d
        })
        .sum();
    s / a.len() as f64
}

fn deltas<T: Real>(x: &Tensor<T>) -> Vec<T> {
    let c = x.cols();
    x.data()[c..]
        .iter()
        .zip(&x.data()[..x.len() - c])
        .map(|(&b, &a)| b - a)
        .collect()
}

/// Spectral loss terms with `stop = 0` and `total` the weighted spectral sum.
/// The differential term uses frame deltas for `t >= 1` and is zero for a
/// single-frame batch.
pub fn combined_spectral_loss<T: Real>(batch: &SpectralBatch<T>) -> Result<LossBreakdown> {
    batch.validate()?;
    let mel = mse(batch.y_m.data(), batch.q_m.data());
    let lpc_pre = mse(batch.y_l.data(), batch.q_l.data());
    let lpc_post = mse(batch.z_l.data(), batch.q_l.data());
    let lpc_diff = if batch.frames() > 1 {
        mse(&deltas(&batch.z_l), &deltas(&batch.q_l))
    } else {
        0.0
    };
    Ok(LossBreakdown {
        mel,
        lpc_pre,
        lpc_post,
        lpc_diff,
        stop: 0.0,
        total: weighted(mel, lpc_pre, lpc_post, lpc_diff),
    })
}

/// Mean binary cross-entropy of `sigmoid(logits)` against `targets`.
pub fn stop_cross_entropy<T: Real>(logits: &[T], targets: &[T]) -> f64 {
    let s: f64 = logits
        .iter()
        .zip(targets)
        .map(|(&x, &t)| {
            let (x, t) = (x.to_f64_lossy(), t.to_f64_lossy());
            x.max(0.0) - x * t + (-x.abs()).exp().ln_1p()
        })
        .sum();
    s / logits.len() as f64
}

/// Spectral loss plus the stop-flag cross-entropy.
pub fn total_loss<T: Real>(batch: &SpectralBatch<T>) -> Result<LossBreakdown> {
    let mut b = combined_spectral_loss(batch)?;
    b.stop = stop_cross_entropy(&batch.stop_logits, &batch.stop_targets);
    b.total += b.stop;
    Ok(b)
}

/// Stop targets: zero everywhere except one on the last frame.
pub fn stop_targets<T: Real>(frames: usize) -> Vec<T> {
    let mut v = vec![T::zero(); frames];
    if let Some(last) = v.last_mut() {
        *last = T::one();
    }
    v
}

/// Tape handles of every loss term.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub mel: Var,
    pub lpc_pre: Var,
    pub lpc_post: Var,
    pub lpc_diff: Var,
    pub stop: Var,
    pub total: Var,
}

impl LossVars {
    pub fn breakdown<T: Real>(&self, tape: &Tape<T>) -> LossBreakdown {
        let v = |x: Var| tape.value(x).item().to_f64_lossy();
        LossBreakdown {
            mel: v(self.mel),
            lpc_pre: v(self.lpc_pre),
            lpc_post: v(self.lpc_post),
            lpc_diff: v(self.lpc_diff),
            stop: v(self.stop),
            total: v(self.total),
        }
    }
}

fn delta_var<T: Real>(tape: &mut Tape<T>, x: Var) -> Result<Var> {
    let t = tape.shape(x).0;
    let late = tape.slice_rows(x, 1, t - 1)?;
    let early = tape.slice_rows(x, 0, t - 1)?;
    tape.sub(late, early)
}

/// Weighted spectral loss recorded on `tape`.
///
/// Shapes: `y_m, q_m: T x 80`; `y_l, z_l, q_l: T x 22`.
pub fn spectral_loss_var<T: Real>(
    tape: &mut Tape<T>,
    y_m: Var,
    q_m: Var,
    y_l: Var,
    z_l: Var,
    q_l: Var,
) -> Result<(Var, Var, Var, Var, Var)> {
    let t = tape.shape(q_m).0;
    let mel = tape.mse(y_m, q_m)?;
    let pre = tape.mse(y_l, q_l)?;
    let post = tape.mse(z_l, q_l)?;
    let diff = if t > 1 {
        let dz = delta_var(tape, z_l)?;
        let dq = delta_var(tape, q_l)?;
        tape.mse(dz, dq)?
    } else {
        tape.constant(Tensor::scalar(T::zero()))
    };
    let a = tape.scale(pre, T::lit(LPC_PRE_WEIGHT));
    let b = tape.scale(post, T::lit(LPC_POST_WEIGHT));
    let c = tape.scale(diff, T::lit(LPC_DIFF_WEIGHT));
    let m = tape.scale(mel, T::lit(MEL_WEIGHT));
    let s = tape.add(m, a)?;
    let s = tape.add(s, b)?;
    let spc = tape.add(s, c)?;
    Ok((mel, pre, post, diff, spc))
}

/// Spectral loss plus stop cross-entropy recorded on `tape`.
#[allow(clippy::too_many_arguments)]
pub fn total_loss_var<T: Real>(
    tape: &mut Tape<T>,
    y_m: Var,
    q_m: Var,
    y_l: Var,
    z_l: Var,
    q_l: Var,
    stop_logits: Var,
    stop_targets: Var,
) -> Result<LossVars> {
    let (mel, lpc_pre, lpc_post, lpc_diff, spc) = spectral_loss_var(tape, y_m, q_m, y_l, z_l, q_l)?;
    let stop = tape.bce_with_logits(stop_logits, stop_targets)?;
    let total = tape.add(spc, stop)?;
    Ok(LossVars {
        mel,
        lpc_pre,
        lpc_post,
        lpc_diff,
        stop,
        total,
    })
}
