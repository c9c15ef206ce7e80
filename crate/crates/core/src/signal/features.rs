use rayon::prelude::*;

use super::mel::MelAnalyzer;
use super::pitch::PitchSearch;
use super::{
    cepstrum_from_bands, frame_count, periodic_hann, process_pitch_track,
    AudioClip, BandLayout, FeatureFrame, FrameSpec, MelFrame, PitchEstimate, PitchTrack,
    SpectralAnalyzer, N_CEPSTRA,
};
use crate::{Error, Real, Result};

/// Extracted features plus pitch metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTrack<T> {
    pub frames: Vec<FeatureFrame<T>>,
    /// Quantizer level of each frame's log-pitch.
    pub pitch_index: Vec<u8>,
    /// No voiced frame was found; log-pitch is the default constant.
    pub all_unvoiced: bool,
}

impl<T> FeatureTrack<T> {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Precomputed analysis state shared by all frames of a clip.
pub struct FeatureExtractor<T: Real> {
    spec: FrameSpec,
    window: Vec<T>,
    spectral: SpectralAnalyzer<T>,
    pitch: PitchSearch,
    mel: MelAnalyzer<T>,
}

struct FrameOutput<T> {
    cepstra: [T; N_CEPSTRA],
    pitch: PitchEstimate<T>,
    mel: Option<MelFrame<T>>,
}

impl<T: Real> FeatureExtractor<T> {
    pub fn new(spec: &FrameSpec, layout: &BandLayout) -> Result<Self> {
        Ok(Self {
            spec: *spec,
            window: periodic_hann(spec.window),
            spectral: SpectralAnalyzer::new(spec, layout)?,
            pitch: PitchSearch::new(crate::SAMPLE_RATE),
            mel: MelAnalyzer::new(),
        })
    }

    fn frame(&self, x: &[T], i: usize, with_mel: bool) -> Result<FrameOutput<T>> {
        let start = i * self.spec.hop;
        let windowed: Vec<T> = x[start..start + self.spec.window]
            .iter()
            .zip(&self.window)
            .map(|(&s, &w)| s * w)
            .collect();
        let bands = self.spectral.band_energies(&windowed)?;
        let span = PitchSearch::span(x, &self.spec, i);
        Ok(FrameOutput {
            cepstra: cepstrum_from_bands(&bands),
            pitch: self.pitch.estimate(&span, crate::SAMPLE_RATE),
            mel: with_mel.then(|| self.mel.frame(x, &self.spec, i)),
        })
    }

    fn assemble(
        &self,
        outputs: Vec<FrameOutput<T>>,
    ) -> Result<(FeatureTrack<T>, Vec<MelFrame<T>>)> {
        let mut mel = Vec::new();
        let mut cepstra = Vec::with_capacity(outputs.len());
        let mut pitch = Vec::with_capacity(outputs.len());
        for o in outputs {
            cepstra.push(o.cepstra);
            pitch.push(o.pitch);
            mel.extend(o.mel);
        }
        let processed = process_pitch_track(&PitchTrack { frames: pitch })?;
        let frames = cepstra
            .into_iter()
            .enumerate()
            .map(|(i, c)| FeatureFrame {
                cepstra: c,
                log_pitch: processed.log_pitch[i],
                pitch_corr: processed.corr[i],
            })
            .collect();
        Ok((
            FeatureTrack {
                frames,
                pitch_index: processed.index,
                all_unvoiced: processed.all_unvoiced,
            },
            mel,
        ))
    }

    fn check(&self, clip: &AudioClip<T>) -> Result<usize> {
        if clip.len() < self.spec.window {
            return Err(Error::invalid(format!(
                "clip of {} samples is shorter than one analysis window ({})",
                clip.len(),
                self.spec.window
            )));
        }
        Ok(frame_count(clip.len(), &self.spec))
    }

    /// LPCNet features and, when `with_mel` is set, the matching mel frames.
    /// Frames are split across `threads` workers; the output does not depend
    /// on the thread count.
    pub fn run(
        &self,
        clip: &AudioClip<T>,
        with_mel: bool,
        threads: usize,
    ) -> Result<(FeatureTrack<T>, Vec<MelFrame<T>>)> {
        let n = self.check(clip)?;
        let x = clip.samples();
        let outputs: Result<Vec<_>> = if threads <= 1 {
            (0..n).map(|i| self.frame(x, i, with_mel)).collect()
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            pool.install(|| {
                (0..n)
                    .into_par_iter()
                    .map(|i| self.frame(x, i, with_mel))
                    .collect()
            })
        };
        self.assemble(outputs?)
    }
}

/// The 22-value LPCNet feature track of a clip.
pub fn extract_features<T: Real>(
    clip: &AudioClip<T>,
    spec: &FrameSpec,
    layout: &BandLayout,
) -> Result<FeatureTrack<T>> {
    Ok(FeatureExtractor::new(spec, layout)?.run(clip, false, 1)?.0)
}

/// [`extract_features`] with frames split across `threads` workers.
pub fn extract_features_par<T: Real>(
    clip: &AudioClip<T>,
    spec: &FrameSpec,
    layout: &BandLayout,
    threads: usize,
) -> Result<FeatureTrack<T>> {
    Ok(FeatureExtractor::new(spec, layout)?.run(clip, false, threads)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{mel_spectrogram, ENERGY_FLOOR, F0_MAX, F0_MIN};
    use crate::SAMPLE_RATE;

    fn saw(hz: f64, n: usize, gain: f64) -> AudioClip<f64> {
        AudioClip::new(
            (0..n)
                .map(|i| gain * (2.0 * (hz * i as f64 / SAMPLE_RATE as f64).fract() - 1.0))
                .collect(),
            SAMPLE_RATE,
        )
        .unwrap()
    }

    fn defaults() -> (FrameSpec, BandLayout) {
        let spec = FrameSpec::default();
        let layout = BandLayout::lpcnet_22k(&spec);
        (spec, layout)
    }

    #[test]
    fn saw_220_one_second() {
        let (spec, layout) = defaults();
        let clip = saw(220.0, SAMPLE_RATE as usize, 0.5);
        let track = extract_features(&clip, &spec, &layout).unwrap();
        assert_eq!(track.len(), 85);
        for f in &track.frames {
            assert!(f.is_valid());
            let hz = f.log_pitch.exp();
            // quantization step is ~0.35 %, well inside the 2 % budget
            assert!((hz - 220.0).abs() / 220.0 < 0.02, "{hz}");
        }
        assert_eq!(track.len(), mel_spectrogram(&clip).unwrap().len());
    }

    #[test]
    fn silence() {
        let (spec, layout) = defaults();
        let clip = AudioClip::new(vec![0.0f64; 4096], SAMPLE_RATE).unwrap();
        let track = extract_features(&clip, &spec, &layout).unwrap();
        assert!(track.all_unvoiced);
        let c0 = 20f64.sqrt() * ENERGY_FLOOR.ln();
        for f in &track.frames {
            assert!((f.cepstra[0] - c0).abs() < 1e-9);
            assert!(f.cepstra[1..].iter().all(|v| v.abs() < 1e-9));
            assert_eq!(f.pitch_corr, 0.0);
        }
    }

    #[test]
    fn gain_shifts_c0_only() {
        let (spec, layout) = defaults();
        let g: f64 = 0.25;
        let a = extract_features(&saw(150.0, 6000, 0.8), &spec, &layout).unwrap();
        let b = extract_features(&saw(150.0, 6000, 0.8 * g), &spec, &layout).unwrap();
        for (x, y) in a.frames.iter().zip(&b.frames) {
            let shift = 2.0 * 20f64.sqrt() * g.ln();
            assert!((y.cepstra[0] - x.cepstra[0] - shift).abs() < 1e-9);
            for k in 1..20 {
                assert!((y.cepstra[k] - x.cepstra[k]).abs() < 1e-9);
            }
            assert!((y.log_pitch - x.log_pitch).abs() < 1e-9);
            assert!((y.pitch_corr - x.pitch_corr).abs() < 1e-9);
        }
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let (spec, layout) = defaults();
        let clip = saw(180.0, 10_000, 0.5);
        let one = extract_features_par(&clip, &spec, &layout, 1).unwrap();
        let two = extract_features_par(&clip, &spec, &layout, 2).unwrap();
        assert_eq!(one, two);
    }

    #[test]
    fn ranges_hold() {
        let (spec, layout) = defaults();
        let track = extract_features(&saw(75.0, 8000, 0.9), &spec, &layout).unwrap();
        for f in &track.frames {
            assert!(f.log_pitch >= F0_MIN.ln() && f.log_pitch <= F0_MAX.ln());
            assert!((0.0..=1.0).contains(&f.pitch_corr));
        }
    }

    #[test]
    fn short_clip_rejected() {
        let (spec, layout) = defaults();
        let clip = AudioClip::new(vec![0.1f64; 300], SAMPLE_RATE).unwrap();
        assert!(extract_features(&clip, &spec, &layout).is_err());
    }
}
