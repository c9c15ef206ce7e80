use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::prosody::{prosody_observations, ProsodyStats, RawProsody};
use crate::diff::Tensor;
use crate::error::Error;
use crate::model::{ProsodyInfo, SymbolSequence, N_LPC, N_MEL};
use crate::signal::{
    cepstrum_from_bands, dequantize_log_pitch, quantize_log_pitch, BandLayout, FeatureFrame,
    FrameSpec, MelFilterbank, N_CEPSTRA,
};
use crate::Result;

/// One training utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub symbols: SymbolSequence,
    /// `T x 80` log mel targets.
    pub mel: Tensor<f64>,
    /// `T x 22` LPCNet feature targets.
    pub lpc: Tensor<f64>,
    pub raw_prosody: RawProsody,
    pub prosody: ProsodyInfo<f64>,
}

impl Utterance {
    pub fn frames(&self) -> usize {
        self.mel.rows()
    }

    pub fn feature_frames(&self) -> Result<Vec<FeatureFrame<f64>>> {
        (0..self.lpc.rows())
            .map(|t| FeatureFrame::from_prediction(self.lpc.row_slice(t)))
            .collect()
    }
}

/// Utterances with their shared vocabulary and prosody statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub vocab: usize,
    pub utterances: Vec<Utterance>,
    pub stats: ProsodyStats,
}

impl Corpus {
    /// Normalizes prosody over `items` of `(symbols, mel, lpc)`.
    pub fn from_tracks(
        vocab: usize,
        items: Vec<(SymbolSequence, Tensor<f64>, Tensor<f64>)>,
    ) -> Result<Self> {
        let mut raws = Vec::with_capacity(items.len());
        for (sym, mel, lpc) in &items {
            if mel.cols() != N_MEL || lpc.cols() != N_LPC || mel.rows() != lpc.rows() {
                return Err(Error::shape(
                    "corpus",
                    format!("mel {:?} and features {:?}", mel.shape(), lpc.shape()),
                ));
            }
            let frames = (0..lpc.rows())
                .map(|t| FeatureFrame::from_prediction(lpc.row_slice(t)))
                .collect::<Result<Vec<_>>>()?;
            raws.push(prosody_observations(
                &frames,
                mel.rows() as f64 / sym.len() as f64,
            )?);
        }
        let stats = ProsodyStats::from_observations(&raws)?;
        let utterances = items
            .into_iter()
            .zip(raws)
            .map(|((symbols, mel, lpc), raw)| Utterance {
                symbols,
                mel,
                lpc,
                prosody: stats.normalize(&raw),
                raw_prosody: raw,
            })
            .collect();
        Ok(Self {
            vocab,
            utterances,
            stats,
        })
    }
}

/// Parameters of the synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyCorpusSpec {
    pub vocab: usize,
    /// Symbol count of each utterance.
    pub lengths: Vec<usize>,
    /// Frames per symbol of each utterance.
    pub frames_per_symbol: Vec<usize>,
    /// Start and end pitch in Hz of each utterance.
    pub pitch_hz: Vec<(f64, f64)>,
}

impl Default for ToyCorpusSpec {
    fn default() -> Self {
        Self {
            vocab: 8,
            lengths: vec![6, 7, 8],
            frames_per_symbol: vec![3, 4, 5],
            pitch_hz: vec![(110.0, 150.0), (200.0, 130.0), (150.0, 260.0)],
        }
    }
}

/// Spectral shape of one symbol: log energy as a function of frequency.
#[derive(Debug, Clone)]
struct Template {
    base: f64,
    tilt: f64,
    formants: Vec<(f64, f64, f64)>,
    voiced: bool,
}

impl Template {
    fn random(rng: &mut ChaCha8Rng, voiced: bool) -> Self {
        let n = if voiced { 3 } else { 1 };
        let formants = (0..n)
            .map(|k| {
                let lo = [250.0, 900.0, 2200.0][k];
                let hi = [900.0, 2200.0, 3800.0][k];
                let f = if voiced {
                    rng.gen_range(lo..hi)
                } else {
                    rng.gen_range(3000.0..7000.0)
                };
                (f, rng.gen_range(1.0..3.0), rng.gen_range(150.0..500.0))
            })
            .collect();
        Self {
            base: if voiced { rng.gen_range(-1.0..0.5) } else { -2.0 },
            tilt: rng.gen_range(-3.0..-1.0),
            formants,
            voiced,
        }
    }

    fn log_energy(&self, hz: f64) -> f64 {
        let mut v = self.base + self.tilt * hz / 11025.0;
        for &(f, a, w) in &self.formants {
            v += a * (-(hz - f).powi(2) / (2.0 * w * w)).exp();
        }
        v
    }
}

/// Deterministic corpus of symbol sequences with matching features.
///
/// Each symbol owns a spectral envelope; its mel and cepstral targets are
/// sampled from that envelope on the mel-filter and band centres. Symbol 0
/// is unvoiced. Log-pitch follows a per-utterance ramp and passes through
/// the 256-level quantizer.
pub fn toy_corpus(spec: &ToyCorpusSpec, seed: u64) -> Result<Corpus> {
    let n_utts = spec.lengths.len();
    if n_utts == 0
        || spec.frames_per_symbol.len() != n_utts
        || spec.pitch_hz.len() != n_utts
        || spec.vocab < 2
    {
        return Err(Error::invalid("inconsistent toy corpus specification"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let templates: Vec<Template> = (0..spec.vocab)
        .map(|i| Template::random(&mut rng, i != 0))
        .collect();
    let mel_centers = MelFilterbank::<f64>::new().centers_hz().to_vec();
    let band_centers = BandLayout::lpcnet_22k(&FrameSpec::default()).centers();

    let mut items = Vec::with_capacity(n_utts);
    for u in 0..n_utts {
        let len = spec.lengths[u];
        let fps = spec.frames_per_symbol[u];
        if len == 0 || fps == 0 {
            return Err(Error::invalid("toy utterances need symbols and frames"));
        }
        let mut ids: Vec<usize> = (1..spec.vocab).collect();
        ids.shuffle(&mut rng);
        let mut ids: Vec<usize> = ids.into_iter().cycle().take(len).collect();
        let gap = rng.gen_range(1..len.max(2));
        if len > 2 {
            ids[gap.min(len - 2)] = 0;
        }
        let frames = len * fps;
        let (f_start, f_end) = spec.pitch_hz[u];
        let mut mel = Vec::with_capacity(frames * N_MEL);
        let mut lpc = Vec::with_capacity(frames * N_LPC);
        for t in 0..frames {
            let tpl = &templates[ids[t / fps]];
            mel.extend(mel_centers.iter().map(|&hz| tpl.log_energy(hz)));
            let mut bands = [0.0; N_CEPSTRA];
            for (b, &hz) in bands.iter_mut().zip(&band_centers) {
                *b = tpl.log_energy(hz).exp();
            }
            lpc.extend_from_slice(&cepstrum_from_bands(&bands));
            let r = if frames > 1 { t as f64 / (frames - 1) as f64 } else { 0.0 };
            let lp = f_start.ln() + r * (f_end.ln() - f_start.ln());
            lpc.push(dequantize_log_pitch::<f64>(quantize_log_pitch(lp)));
            lpc.push(if tpl.voiced { 0.9 } else { 0.1 });
        }
        items.push((
            SymbolSequence::new(ids, spec.vocab)?,
            Tensor::new(frames, N_MEL, mel)?,
            Tensor::new(frames, N_LPC, lpc)?,
        ));
    }
    Corpus::from_tracks(spec.vocab, items)
}
