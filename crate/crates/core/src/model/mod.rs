//! Encoder-decoder acoustic model.
//!
//! Symbols are embedded, passed through a convolution stack and a
//! bidirectional LSTM, and the two prosody values are appended to every
//! encoding. The decoder runs a two-layer pre-net on the fed-back mel
//! frame, attends with [`crate::attention`], updates two stacked LSTMs
//! and predicts from `[h, x_c]`:
//!
//! * a mel frame and an end-of-sequence logit (linear),
//! * 22 LPCNet features through a two-layer tanh head.
//!
//! Two residual convolutional post-nets refine the whole predicted
//! feature track, one on the 20 cepstra and one on pitch and correlation.

mod config;
mod network;
mod params;

pub use config::{ModelConfig, PostnetSpec};
pub use network::ForwardVars;
pub use params::{BoundParams, Init, ParamStore};

use crate::diff::{Tape, Tensor, Var};
use crate::error::Error;
use crate::signal::{FeatureFrame, N_FEATURES};
use crate::{Real, Result};
use network::{Carry, Net};

pub const N_MEL: usize = crate::signal::N_MEL;
pub const N_LPC: usize = N_FEATURES;
pub const PROSODY_DIM: usize = 2;

/// Validated symbol ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolSequence {
    ids: Vec<usize>,
}

impl SymbolSequence {
    pub fn new(ids: Vec<usize>, vocab: usize) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::invalid("empty symbol sequence"));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
            return Err(Error::invalid(format!(
                "symbol id {bad} out of range for vocabulary of {vocab}"
            )));
        }
        Ok(Self { ids })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Normalized utterance-level prosody values.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProsodyInfo<T> {
    pub log_duration: T,
    pub log_pitch_span: T,
}

impl<T: Real> ProsodyInfo<T> {
    pub fn new(log_duration: T, log_pitch_span: T) -> Result<Self> {
        if !log_duration.is_finite() || !log_pitch_span.is_finite() {
            return Err(Error::invalid("prosody values must be finite"));
        }
        Ok(Self {
            log_duration,
            log_pitch_span,
        })
    }

    /// The corpus-mean setting shifted by user offsets `(a, b)`.
    pub fn from_offsets(a: T, b: T) -> Result<Self> {
        Self::new(a, b)
    }

    pub fn to_array(self) -> [T; 2] {
        [self.log_duration, self.log_pitch_span]
    }
}

/// One decoder step's predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderOutput<T> {
    pub mel: Vec<T>,
    pub lpc: Vec<T>,
    /// End-of-sequence probability in `(0, 1)`.
    pub stop: T,
    pub initial_alignment: Vec<T>,
    pub selection: Vec<T>,
    pub alignment: Vec<T>,
}

/// Result of autoregressive synthesis.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis<T> {
    /// `T x 80`
    pub mel: Tensor<T>,
    /// `T x 22` before the post-nets.
    pub lpc_pre: Tensor<T>,
    /// `T x 22` after the post-nets.
    pub lpc: Tensor<T>,
    /// `T x N` final alignments.
    pub alignment: Tensor<T>,
    /// Frame on which the stop flag fired.
    pub stop_step: Option<usize>,
    /// True when decoding hit `max_frames` without a stop.
    pub truncated: bool,
}

impl<T: Real> Synthesis<T> {
    pub fn frames(&self) -> usize {
        self.mel.rows()
    }

    /// Post-net features as clamped feature frames.
    pub fn feature_frames(&self) -> Result<Vec<FeatureFrame<T>>> {
        (0..self.lpc.rows())
            .map(|t| FeatureFrame::from_prediction(self.lpc.row_slice(t)))
            .collect()
    }
}

/// Network configuration plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    params: ParamStore<T>,
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Real> Model<T> {
    /// Freshly initialised weights drawn from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = ParamStore::initialize(&network::param_specs(&config), seed);
        Ok(Self { config, params })
    }

    /// Wraps loaded weights after checking names and shapes.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        config.validate()?;
        params.check_against(&network::param_specs(&config))?;
        Ok(Self { config, params })
    }

    pub fn param_specs(config: &ModelConfig) -> Vec<(String, (usize, usize), Init)> {
        network::param_specs(config)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn into_parts(self) -> (ModelConfig, ParamStore<T>) {
        (self.config, self.params)
    }

    fn symbols_ok(&self, symbols: &SymbolSequence) -> Result<()> {
        SymbolSequence::new(symbols.ids().to_vec(), self.config.vocab).map(|_| ())
    }

    /// Binds the parameters on `tape` for a custom forward pass.
    pub fn bind(&self, tape: &mut Tape<T>) -> BoundParams {
        self.params.bind(tape)
    }

    /// Teacher-forced pass recorded on `tape` with parameters `bound`.
    pub fn teacher_forced(
        &self,
        tape: &mut Tape<T>,
        bound: &BoundParams,
        symbols: &SymbolSequence,
        prosody: ProsodyInfo<T>,
        mel_targets: &Tensor<T>,
    ) -> Result<ForwardVars> {
        self.symbols_ok(symbols)?;
        if mel_targets.cols() != N_MEL || mel_targets.rows() == 0 {
            return Err(Error::shape(
                "teacher_forced",
                format!("mel targets {:?}, expected T x {N_MEL}", mel_targets.shape()),
            ));
        }
        let net = Net::bind(&self.config, bound)?;
        net.teacher_forced(tape, symbols.ids(), prosody.to_array(), mel_targets)
    }

    /// `N x (encoder + 2)` encodings.
    pub fn encode(&self, symbols: &SymbolSequence, prosody: ProsodyInfo<T>) -> Result<Tensor<T>> {
        self.symbols_ok(symbols)?;
        let mut tape = Tape::inference(0);
        let bound = self.bind(&mut tape);
        let net = Net::bind(&self.config, &bound)?;
        let enc = net.encode(&mut tape, symbols.ids(), prosody.to_array())?;
        Ok(tape.value(enc).clone())
    }

    /// Applies both residual post-nets to a `T x 22` track.
    pub fn postnet_refine(&self, y: &Tensor<T>) -> Result<Tensor<T>> {
        if y.rows() == 0 || y.cols() != N_LPC {
            return Err(Error::shape(
                "postnet_refine",
                format!("{:?}, expected T x {N_LPC} with T >= 1", y.shape()),
            ));
        }
        let mut tape = Tape::inference(0);
        let bound = self.bind(&mut tape);
        let net = Net::bind(&self.config, &bound)?;
        let yv = tape.constant(y.clone());
        let z = net.postnet(&mut tape, yv)?;
        Ok(tape.value(z).clone())
    }

    /// Starts an inference decoding session.
    pub fn decoder(&self, symbols: &SymbolSequence, prosody: ProsodyInfo<T>) -> Result<Decoder<T>> {
        self.symbols_ok(symbols)?;
        let mut tape = Tape::inference(0);
        let bound = self.bind(&mut tape);
        let net = Net::bind(&self.config, &bound)?;
        let enc = net.encode(&mut tape, symbols.ids(), prosody.to_array())?;
        let (carry, memory) = net.start(&mut tape, enc)?;
        Ok(Decoder {
            tape,
            net,
            enc,
            memory,
            carry,
            feedback_dim: self.config.feedback_dim(),
        })
    }

    /// Autoregressive synthesis until the stop flag exceeds 0.5 or
    /// `max_frames` frames have been produced.
    pub fn synthesize(
        &self,
        symbols: &SymbolSequence,
        offsets: (T, T),
        max_frames: usize,
    ) -> Result<Synthesis<T>> {
        if max_frames == 0 {
            return Err(Error::invalid("max_frames must be positive"));
        }
        let prosody = ProsodyInfo::from_offsets(offsets.0, offsets.1)?;
        let mut dec = self.decoder(symbols, prosody)?;
        let n = symbols.len();
        let go = dec.tape.constant(Tensor::zeros(1, N_MEL));
        let mut prev = go;
        let (mut mel, mut lpc, mut align) = (Vec::new(), Vec::new(), Vec::new());
        let mut stop_step = None;
        for t in 0..max_frames {
            let fb = dec.net.inference_feedback(&mut dec.tape, prev)?;
            let out = dec.net.step(&mut dec.tape, &mut dec.carry, dec.enc, dec.memory, fb)?;
            mel.extend_from_slice(dec.tape.value(out.mel).data());
            lpc.extend_from_slice(dec.tape.value(out.lpc).data());
            align.extend_from_slice(dec.tape.value(out.alignment).data());
            prev = out.mel;
            if sigmoid(dec.tape.value(out.stop_logit).item()) > T::lit(0.5) {
                stop_step = Some(t);
                break;
            }
        }
        let frames = mel.len() / N_MEL;
        let lpc_pre = Tensor::from_parts(frames, N_LPC, lpc);
        let post_in = dec.tape.constant(lpc_pre.clone());
        let post = dec.net.postnet(&mut dec.tape, post_in)?;
        Ok(Synthesis {
            mel: Tensor::from_parts(frames, N_MEL, mel),
            lpc: dec.tape.value(post).clone(),
            lpc_pre,
            alignment: Tensor::from_parts(frames, n, align),
            stop_step,
            truncated: stop_step.is_none(),
        })
    }
}

/// One inference decoding stream; owns its recurrent state.
pub struct Decoder<T> {
    tape: Tape<T>,
    net: Net,
    enc: Var,
    memory: Var,
    carry: Carry<T>,
    feedback_dim: usize,
}

impl<T: Real> Decoder<T> {
    /// Runs one step on an explicit feedback vector (`80` values, or
    /// `160` with double feedback).
    pub fn step(&mut self, feedback: &[T]) -> Result<DecoderOutput<T>> {
        if feedback.len() != self.feedback_dim {
            return Err(Error::shape(
                "decoder_step",
                format!("feedback of {}, expected {}", feedback.len(), self.feedback_dim),
            ));
        }
        let fb = self.tape.constant(Tensor::row(feedback));
        let out = self
            .net
            .step(&mut self.tape, &mut self.carry, self.enc, self.memory, fb)?;
        let v = |x: Var| self.tape.value(x).data().to_vec();
        Ok(DecoderOutput {
            mel: v(out.mel),
            lpc: v(out.lpc),
            stop: sigmoid(self.tape.value(out.stop_logit).item()),
            initial_alignment: v(out.initial),
            selection: v(out.alpha),
            alignment: v(out.alignment),
        })
    }

    /// Encodings the decoder attends over.
    pub fn encodings(&self) -> &Tensor<T> {
        self.tape.value(self.enc)
    }

    /// Current top decoder hidden state.
    pub fn hidden(&self) -> &[T] {
        self.tape.value(self.carry.h1).data()
    }
}
