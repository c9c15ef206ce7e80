//! Loss functions, prosody observations, the synthetic corpus and the
//! teacher-forced training loop.
//!
//! The spectral loss is
//!
//! ```text
//! MSE(y_M, q_M) + 0.8 MSE(y_L, q_L) + 0.4 MSE(z_L, q_L) + 0.4 MSE(dz_L, dq_L)
//! ```
//!
//! with mean reductions and frame deltas taken over `t >= 1`. The stop flag
//! adds a mean binary cross-entropy.

mod corpus;
mod loss;
mod optim;
mod prosody;

pub use corpus::{toy_corpus, Corpus, ToyCorpusSpec, Utterance};
pub use loss::{
    combined_spectral_loss, spectral_loss_var, stop_cross_entropy, stop_targets, total_loss,
    total_loss_var, LossBreakdown, LossVars, SpectralBatch, LPC_DIFF_WEIGHT, LPC_POST_WEIGHT,
    LPC_PRE_WEIGHT, MEL_WEIGHT,
};
pub use optim::Adam;
pub use prosody::{percentile, prosody_observations, ProsodyStats, RawProsody};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{structure_fit, PrevAlignment};
use crate::diff::{Tape, Tensor};
use crate::error::Error;
use crate::model::{Model, ModelConfig};
use crate::Result;

/// Training hyper-parameters, readable from a TOML key-value file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub seed: u64,
    pub prev_alignment: PrevAlignment,
    pub double_feedback: bool,
    pub prenet_dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            learning_rate: 1e-3,
            clip_norm: 1.0,
            seed: 0,
            prev_alignment: PrevAlignment::Initial,
            double_feedback: true,
            prenet_dropout: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("train config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be finite and >= 0".into()));
        }
        if !(self.clip_norm >= 0.0) {
            return Err(Error::Config("clip_norm must be >= 0".into()));
        }
        Ok(())
    }

    /// Copies the model-side switches into `base`.
    pub fn apply(&self, mut base: ModelConfig) -> ModelConfig {
        base.prev_alignment = self.prev_alignment;
        base.double_feedback = self.double_feedback;
        base.prenet_dropout = self.prenet_dropout;
        base
    }
}

/// Trained model and per-step losses.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model<f64>,
    /// Mean loss over the corpus at each step, before that step's update.
    pub log: Vec<LossBreakdown>,
    /// Step (1-based) at which a non-finite loss stopped training; the
    /// returned model holds the parameters from before that step.
    pub aborted_at: Option<usize>,
}

impl TrainOutcome {
    /// Loss log as CSV with a header row; steps are 1-based.
    pub fn loss_csv(&self) -> String {
        let mut s = String::from(LossBreakdown::csv_header());
        s.push('\n');
        for (i, b) in self.log.iter().enumerate() {
            s.push_str(&b.csv_row(i + 1));
            s.push('\n');
        }
        s
    }
}

/// Teacher-forced evaluation without dropout.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: LossBreakdown,
    /// Final alignment matrices (`T x N`), one per utterance.
    pub alignments: Vec<Tensor<f64>>,
    /// Mean structure fit over every alignment row of the corpus.
    pub mean_structure_fit: f64,
}

fn step_loss(
    model: &Model<f64>,
    corpus: &Corpus,
    tape: &mut Tape<f64>,
) -> Result<(crate::diff::Var, crate::model::BoundParams, Vec<LossBreakdown>, Vec<Tensor<f64>>)> {
    let bound = model.bind(tape);
    let mut totals = Vec::with_capacity(corpus.utterances.len());
    let mut parts = Vec::with_capacity(corpus.utterances.len());
    let mut aligns = Vec::with_capacity(corpus.utterances.len());
    for utt in &corpus.utterances {
        let fw = model.teacher_forced(tape, &bound, &utt.symbols, utt.prosody, &utt.mel)?;
        let q_m = tape.constant(utt.mel.clone());
        let q_l = tape.constant(utt.lpc.clone());
        let st = tape.constant(Tensor::new(utt.frames(), 1, stop_targets(utt.frames()))?);
        let lv = total_loss_var(
            tape,
            fw.mel,
            q_m,
            fw.lpc_pre,
            fw.lpc_post,
            q_l,
            fw.stop_logits,
            st,
        )?;
        totals.push(lv.total);
        parts.push(lv.breakdown(tape));
        let n = utt.symbols.len();
        let mut a = Vec::with_capacity(utt.frames() * n);
        for &v in &fw.alignments {
            a.extend_from_slice(tape.value(v).data());
        }
        aligns.push(Tensor::new(utt.frames(), n, a)?);
    }
    let joined = tape.concat_cols(&totals)?;
    let sum = tape.sum(joined);
    let loss = tape.scale(sum, 1.0 / totals.len() as f64);
    Ok((loss, bound, parts, aligns))
}

/// Teacher-forced loss and alignments of `model` on `corpus`.
pub fn evaluate(model: &Model<f64>, corpus: &Corpus) -> Result<Evaluation> {
    let mut tape = Tape::inference(0);
    let (_, _, parts, alignments) = step_loss(model, corpus, &mut tape)?;
    let mut fits = Vec::new();
    for a in &alignments {
        for t in 0..a.rows() {
            fits.push(structure_fit(a.row_slice(t))?);
        }
    }
    Ok(Evaluation {
        loss: LossBreakdown::mean(&parts),
        mean_structure_fit: fits.iter().sum::<f64>() / fits.len().max(1) as f64,
        alignments,
    })
}

/// Runs `config.steps` full-corpus Adam steps starting from `model`.
///
/// `on_step` sees each step's mean loss. Dropout masks come from one
/// generator seeded with `config.seed`, so runs are reproducible.
pub fn train(
    mut model: Model<f64>,
    corpus: &Corpus,
    config: &TrainConfig,
    mut on_step: impl FnMut(usize, &LossBreakdown),
) -> Result<TrainOutcome> {
    config.validate()?;
    if corpus.utterances.is_empty() {
        return Err(Error::invalid("empty training corpus"));
    }
    if corpus.vocab > model.config().vocab {
        return Err(Error::invalid(format!(
            "corpus vocabulary of {} exceeds model vocabulary of {}",
            corpus.vocab,
            model.config().vocab
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(config.learning_rate, config.clip_norm);
    let mut log = Vec::with_capacity(config.steps);
    for step in 1..=config.steps {
        let mut tape = Tape::new(rng.gen());
        let (loss, bound, parts, _) = step_loss(&model, corpus, &mut tape)?;
        let mean = LossBreakdown::mean(&parts);
        if !tape.value(loss).item().is_finite() {
            return Ok(TrainOutcome {
                model,
                log,
                aborted_at: Some(step),
            });
        }
        let grads = tape.backward(loss)?;
        let grads = bound.collect_grads(model.params(), &grads);
        if grads.iter().any(|(_, g)| g.iter().any(|v| !v.is_finite())) {
            return Ok(TrainOutcome {
                model,
                log,
                aborted_at: Some(step),
            });
        }
        on_step(step, &mean);
        log.push(mean);
        adam.update(model.params_mut(), &grads);
    }
    Ok(TrainOutcome {
        model,
        log,
        aborted_at: None,
    })
}
