use super::params::{BoundParams, Init};
use super::{ModelConfig, N_LPC, N_MEL};
use crate::attention::{
    candidate_set_var, AttentionDims, LocationAttention, PrevAlignment, SoftSelection,
};
use crate::diff::{Tape, Tensor, Var};
use crate::signal::N_CEPSTRA;
use crate::{Real, Result};

type Spec = (String, (usize, usize), Init);

#[derive(Debug, Clone, Copy)]
struct Dense {
    w: Var,
    b: Var,
}

impl Dense {
    fn bind(p: &BoundParams, name: &str) -> Result<Self> {
        Ok(Self {
            w: p.get(&format!("{name}.w"))?,
            b: p.get(&format!("{name}.b"))?,
        })
    }

    fn apply<T: Real>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let y = tape.matmul(x, self.w)?;
        tape.add_row(y, self.b)
    }
}

fn dense(specs: &mut Vec<Spec>, name: &str, fan_in: usize, out: usize) {
    specs.push((format!("{name}.w"), (fan_in, out), Init::FanIn));
    specs.push((format!("{name}.b"), (1, out), Init::Zeros));
}

fn lstm(specs: &mut Vec<Spec>, name: &str, input: usize, hidden: usize) {
    specs.push((format!("{name}.w"), (input + hidden, 4 * hidden), Init::FanIn));
    specs.push((format!("{name}.b"), (1, 4 * hidden), Init::ForgetBias));
}

fn conv_stack(specs: &mut Vec<Spec>, name: &str, channels: usize, spec: &super::PostnetSpec) {
    for i in 0..spec.layers {
        let cin = if i == 0 { channels } else { spec.filters };
        let cout = if i + 1 == spec.layers { channels } else { spec.filters };
        dense(specs, &format!("{name}.conv{i}"), spec.kernel * cin, cout);
    }
}

fn attention_dims(c: &ModelConfig) -> AttentionDims {
    AttentionDims {
        query: c.decoder,
        encoding: c.encoding_dim(),
        attention: c.attention,
        location_filters: c.location_filters,
        location_kernel: c.location_kernel,
    }
}

fn selection_state_dim(c: &ModelConfig) -> usize {
    c.prenet + c.encoding_dim() + c.decoder
}

/// Every parameter tensor of a model with configuration `c`.
pub(super) fn param_specs(c: &ModelConfig) -> Vec<Spec> {
    let mut s = Vec::new();
    s.push(("embedding".into(), (c.vocab, c.embedding), Init::Uniform(0.5)));
    for i in 0..c.encoder_conv_layers {
        let cin = if i == 0 { c.embedding } else { c.encoder };
        dense(&mut s, &format!("encoder.conv{i}"), c.encoder_kernel * cin, c.encoder);
    }
    let half = c.encoder / 2;
    lstm(&mut s, "encoder.forward", c.encoder, half);
    lstm(&mut s, "encoder.backward", c.encoder, half);
    dense(&mut s, "prenet.fc0", c.feedback_dim(), c.prenet);
    dense(&mut s, "prenet.fc1", c.prenet, c.prenet);
    for (name, shape) in LocationAttention::param_shapes(&attention_dims(c)) {
        let init = if name == "location_bias" { Init::Zeros } else { Init::FanIn };
        s.push((format!("attention.{name}"), shape, init));
    }
    for (name, shape) in SoftSelection::param_shapes(selection_state_dim(c), c.candidates) {
        let init = if name == "bias" { Init::Zeros } else { Init::FanIn };
        s.push((format!("selection.{name}"), shape, init));
    }
    let enc = c.encoding_dim();
    lstm(&mut s, "decoder.lstm0", c.prenet + enc, c.decoder);
    lstm(&mut s, "decoder.lstm1", c.decoder, c.decoder);
    let hx = c.decoder + enc;
    dense(&mut s, "backend.mel", hx, N_MEL);
    dense(&mut s, "backend.stop", hx, 1);
    dense(&mut s, "lpc_head.fc0", hx, c.lpc_hidden[0]);
    dense(&mut s, "lpc_head.fc1", c.lpc_hidden[0], c.lpc_hidden[1]);
    dense(&mut s, "lpc_head.out", c.lpc_hidden[1], N_LPC);
    conv_stack(&mut s, "postnet_cepstra", N_CEPSTRA, &c.postnet_cepstra);
    conv_stack(&mut s, "postnet_pitch", N_LPC - N_CEPSTRA, &c.postnet_pitch);
    s.sort_by(|a, b| a.0.cmp(&b.0));
    s
}

/// Recurrent state carried between decoder steps.
#[derive(Debug, Clone)]
pub(crate) struct Carry<T> {
    h0: Var,
    c0: Var,
    pub(crate) h1: Var,
    c1: Var,
    pub(crate) x_c: Var,
    b_prev: Var,
    cumulative: Vec<T>,
}

/// Outputs of one decoder step.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StepVars {
    pub mel: Var,
    pub lpc: Var,
    pub stop_logit: Var,
    pub initial: Var,
    pub alpha: Var,
    pub alignment: Var,
}

/// Whole-utterance teacher-forced outputs.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    /// `T x 80`
    pub mel: Var,
    /// `T x 22` before the post-nets.
    pub lpc_pre: Var,
    /// `T x 22` after the post-nets.
    pub lpc_post: Var,
    /// `T x 1`
    pub stop_logits: Var,
    /// Final alignment per frame (`1 x N` each).
    pub alignments: Vec<Var>,
}

/// Parameter handles of a bound model.
#[derive(Debug, Clone)]
pub(crate) struct Net {
    config: ModelConfig,
    embedding: Var,
    encoder_convs: Vec<Dense>,
    encoder_forward: Dense,
    encoder_backward: Dense,
    prenet: [Dense; 2],
    attention: LocationAttention,
    selection: SoftSelection,
    lstm0: Dense,
    lstm1: Dense,
    mel: Dense,
    stop: Dense,
    lpc: [Dense; 3],
    post_cepstra: Vec<Dense>,
    post_pitch: Vec<Dense>,
}

impl Net {
    pub(crate) fn bind(config: &ModelConfig, p: &BoundParams) -> Result<Self> {
        let stack = |name: &str, layers: usize| -> Result<Vec<Dense>> {
            (0..layers)
                .map(|i| Dense::bind(p, &format!("{name}.conv{i}")))
                .collect()
        };
        Ok(Self {
            config: config.clone(),
            embedding: p.get("embedding")?,
            encoder_convs: stack("encoder", config.encoder_conv_layers)?,
            encoder_forward: Dense::bind(p, "encoder.forward")?,
            encoder_backward: Dense::bind(p, "encoder.backward")?,
            prenet: [Dense::bind(p, "prenet.fc0")?, Dense::bind(p, "prenet.fc1")?],
            attention: LocationAttention::bind(config.location_kernel, |n| {
                p.get(&format!("attention.{n}"))
            })?,
            selection: SoftSelection::bind(|n| p.get(&format!("selection.{n}")))?,
            lstm0: Dense::bind(p, "decoder.lstm0")?,
            lstm1: Dense::bind(p, "decoder.lstm1")?,
            mel: Dense::bind(p, "backend.mel")?,
            stop: Dense::bind(p, "backend.stop")?,
            lpc: [
                Dense::bind(p, "lpc_head.fc0")?,
                Dense::bind(p, "lpc_head.fc1")?,
                Dense::bind(p, "lpc_head.out")?,
            ],
            post_cepstra: stack("postnet_cepstra", config.postnet_cepstra.layers)?,
            post_pitch: stack("postnet_pitch", config.postnet_pitch.layers)?,
        })
    }

    fn lstm_step<T: Real>(
        tape: &mut Tape<T>,
        cell: &Dense,
        x: Var,
        h: Var,
        c: Var,
    ) -> Result<(Var, Var)> {
        let hd = tape.shape(h).1;
        let s = tape.lstm_cell(x, h, c, cell.w, cell.b)?;
        Ok((tape.slice_cols(s, 0, hd)?, tape.slice_cols(s, hd, hd)?))
    }

    fn run_lstm<T: Real>(
        tape: &mut Tape<T>,
        cell: &Dense,
        rows: &[Var],
        hidden: usize,
        reverse: bool,
    ) -> Result<Vec<Var>> {
        let mut h = tape.constant(Tensor::zeros(1, hidden));
        let mut c = h;
        let mut out = vec![h; rows.len()];
        let order: Vec<usize> = if reverse {
            (0..rows.len()).rev().collect()
        } else {
            (0..rows.len()).collect()
        };
        for n in order {
            (h, c) = Self::lstm_step(tape, cell, rows[n], h, c)?;
            out[n] = h;
        }
        Ok(out)
    }

    /// `N x (encoder + 2)` encodings with prosody in the last two columns.
    pub(crate) fn encode<T: Real>(
        &self,
        tape: &mut Tape<T>,
        ids: &[usize],
        prosody: [T; 2],
    ) -> Result<Var> {
        let n = ids.len();
        let mut x = tape.gather(self.embedding, ids)?;
        let k = self.config.encoder_kernel;
        for conv in &self.encoder_convs {
            let y = tape.conv1d(x, conv.w, conv.b, k, k / 2)?;
            x = tape.relu(y);
        }
        let rows = (0..n)
            .map(|i| tape.slice_rows(x, i, 1))
            .collect::<Result<Vec<_>>>()?;
        let half = self.config.encoder / 2;
        let fwd = Self::run_lstm(tape, &self.encoder_forward, &rows, half, false)?;
        let bwd = Self::run_lstm(tape, &self.encoder_backward, &rows, half, true)?;
        let joined = (0..n)
            .map(|i| tape.concat_cols(&[fwd[i], bwd[i]]))
            .collect::<Result<Vec<_>>>()?;
        let enc = tape.concat_rows(&joined)?;
        let pros: Vec<T> = (0..n).flat_map(|_| prosody).collect();
        let pros = tape.constant(Tensor::from_parts(n, 2, pros));
        tape.concat_cols(&[enc, pros])
    }

    pub(crate) fn start<T: Real>(&self, tape: &mut Tape<T>, enc: Var) -> Result<(Carry<T>, Var)> {
        let n = tape.shape(enc).0;
        let memory = self.attention.project_memory(tape, enc)?;
        let zh = tape.constant(Tensor::zeros(1, self.config.decoder));
        let x_c = tape.constant(Tensor::zeros(1, self.config.encoding_dim()));
        let mut boot = vec![T::zero(); n];
        boot[0] = T::one();
        let b_prev = tape.constant(Tensor::row(&boot));
        Ok((
            Carry {
                h0: zh,
                c0: zh,
                h1: zh,
                c1: zh,
                x_c,
                b_prev,
                cumulative: vec![T::zero(); n],
            },
            memory,
        ))
    }

    pub(crate) fn step<T: Real>(
        &self,
        tape: &mut Tape<T>,
        carry: &mut Carry<T>,
        enc: Var,
        memory: Var,
        feedback: Var,
    ) -> Result<StepVars> {
        let p = self.config.prenet_dropout;
        let mut s = feedback;
        for layer in &self.prenet {
            let y = layer.apply(tape, s)?;
            let y = tape.relu(y);
            s = tape.dropout(y, p);
        }

        let cum = tape.constant(Tensor::row(&carry.cumulative));
        let initial = self.attention.attend(tape, carry.h1, memory, cum)?;
        let cands = candidate_set_var(tape, initial, carry.b_prev, self.config.candidates)?;
        let state = tape.concat_cols(&[s, carry.x_c, carry.h1])?;
        let sel = self.selection.select(tape, &cands, state)?;
        let x_c = tape.matmul(sel.alignment, enc)?;

        let in0 = tape.concat_cols(&[s, x_c])?;
        let (h0, c0) = Self::lstm_step(tape, &self.lstm0, in0, carry.h0, carry.c0)?;
        let (h1, c1) = Self::lstm_step(tape, &self.lstm1, h0, carry.h1, carry.c1)?;

        let hx = tape.concat_cols(&[h1, x_c])?;
        let mel = self.mel.apply(tape, hx)?;
        let stop_logit = self.stop.apply(tape, hx)?;
        let l = self.lpc[0].apply(tape, hx)?;
        let l = tape.tanh(l);
        let l = self.lpc[1].apply(tape, l)?;
        let l = tape.tanh(l);
        let lpc = self.lpc[2].apply(tape, l)?;

        for (c, &a) in carry
            .cumulative
            .iter_mut()
            .zip(tape.value(sel.alignment).data())
        {
            *c += a;
        }
        carry.b_prev = match self.config.prev_alignment {
            PrevAlignment::Initial => initial,
            PrevAlignment::Final => sel.alignment,
        };
        carry.h0 = h0;
        carry.c0 = c0;
        carry.h1 = h1;
        carry.c1 = c1;
        carry.x_c = x_c;
        Ok(StepVars {
            mel,
            lpc,
            stop_logit,
            initial,
            alpha: sel.alpha,
            alignment: sel.alignment,
        })
    }

    fn residual_stack<T: Real>(
        tape: &mut Tape<T>,
        layers: &[Dense],
        kernel: usize,
        x: Var,
    ) -> Result<Var> {
        let mut h = x;
        for (i, l) in layers.iter().enumerate() {
            h = tape.conv1d(h, l.w, l.b, kernel, kernel / 2)?;
            if i + 1 < layers.len() {
                h = tape.tanh(h);
            }
        }
        tape.add(x, h)
    }

    /// `z = y + net(y)` with separate nets for cepstra and pitch channels.
    pub(crate) fn postnet<T: Real>(&self, tape: &mut Tape<T>, y: Var) -> Result<Var> {
        let c = tape.slice_cols(y, 0, N_CEPSTRA)?;
        let p = tape.slice_cols(y, N_CEPSTRA, N_LPC - N_CEPSTRA)?;
        let zc = Self::residual_stack(tape, &self.post_cepstra, self.config.postnet_cepstra.kernel, c)?;
        let zp = Self::residual_stack(tape, &self.post_pitch, self.config.postnet_pitch.kernel, p)?;
        tape.concat_cols(&[zc, zp])
    }

    fn feedback<T: Real>(&self, tape: &mut Tape<T>, target: Var, predicted: Var) -> Result<Var> {
        if self.config.double_feedback {
            let p = tape.detach(predicted);
            tape.concat_cols(&[target, p])
        } else {
            Ok(target)
        }
    }

    /// Teacher-forced pass over `mel_targets` (`T x 80`).
    pub(crate) fn teacher_forced<T: Real>(
        &self,
        tape: &mut Tape<T>,
        ids: &[usize],
        prosody: [T; 2],
        mel_targets: &Tensor<T>,
    ) -> Result<ForwardVars> {
        let frames = mel_targets.rows();
        let enc = self.encode(tape, ids, prosody)?;
        let (mut carry, memory) = self.start(tape, enc)?;
        let go = tape.constant(Tensor::zeros(1, N_MEL));
        let (mut prev_target, mut prev_pred) = (go, go);
        let mut mels = Vec::with_capacity(frames);
        let mut lpcs = Vec::with_capacity(frames);
        let mut stops = Vec::with_capacity(frames);
        let mut alignments = Vec::with_capacity(frames);
        for t in 0..frames {
            let fb = self.feedback(tape, prev_target, prev_pred)?;
            let out = self.step(tape, &mut carry, enc, memory, fb)?;
            mels.push(out.mel);
            lpcs.push(out.lpc);
            stops.push(out.stop_logit);
            alignments.push(out.alignment);
            prev_target = tape.constant(Tensor::row(mel_targets.row_slice(t)));
            prev_pred = out.mel;
        }
        let mel = tape.concat_rows(&mels)?;
        let lpc_pre = tape.concat_rows(&lpcs)?;
        let lpc_post = self.postnet(tape, lpc_pre)?;
        let stop_logits = tape.concat_rows(&stops)?;
        Ok(ForwardVars {
            mel,
            lpc_pre,
            lpc_post,
            stop_logits,
            alignments,
        })
    }

    /// Inference feedback: the previous prediction in every slot.
    pub(crate) fn inference_feedback<T: Real>(&self, tape: &mut Tape<T>, predicted: Var) -> Result<Var> {
        if self.config.double_feedback {
            tape.concat_cols(&[predicted, predicted])
        } else {
            Ok(predicted)
        }
    }
}
