use super::{AudioClip, FrameSpec};
use crate::{Error, Real, Result};

pub const F0_MIN: f64 = 60.0;
pub const F0_MAX: f64 = 360.0;
/// Frames whose best normalized autocorrelation reaches this value are voiced.
pub const VOICING_THRESHOLD: f64 = 0.3;
/// Peaks within this fraction of the best correlation compete; the shortest
/// lag wins.
const OCTAVE_TOLERANCE: f64 = 0.01;
/// All-unvoiced utterances get this pitch (geometric mean of the range).
const DEFAULT_F0: f64 = 147.0;
const PITCH_LEVELS: f64 = 255.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchEstimate<T> {
    /// `Some` for voiced frames.
    pub f0_hz: Option<T>,
    /// Normalized autocorrelation at the selected lag, in `[-1, 1]`.
    pub corr: T,
}

impl<T> PitchEstimate<T> {
    pub fn voiced(&self) -> bool {
        self.f0_hz.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PitchTrack<T> {
    pub frames: Vec<PitchEstimate<T>>,
}

/// Pitch features ready to be placed into feature frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedPitch<T> {
    /// Dequantized log-pitch per frame.
    pub log_pitch: Vec<T>,
    /// Quantizer level per frame, `0..=255`.
    pub index: Vec<u8>,
    pub corr: Vec<T>,
    /// Set when no frame was voiced and the default pitch was used.
    pub all_unvoiced: bool,
}

fn log_range() -> (f64, f64) {
    (F0_MIN.ln(), F0_MAX.ln())
}

/// Uniform 256-level quantizer on `[ln 60, ln 360]`; values outside are
/// clipped first.
pub fn quantize_log_pitch<T: Real>(log_pitch: T) -> u8 {
    let (lo, hi) = log_range();
    let x = log_pitch.to_f64_lossy().clamp(lo, hi);
    (PITCH_LEVELS * (x - lo) / (hi - lo)).round() as u8
}

pub fn dequantize_log_pitch<T: Real>(index: u8) -> T {
    let (lo, hi) = log_range();
    T::lit(lo + index as f64 * (hi - lo) / PITCH_LEVELS)
}

pub(crate) struct PitchSearch {
    min_lag: usize,
    max_lag: usize,
}

impl PitchSearch {
    pub(crate) fn new(sample_rate: u32) -> Self {
        let sr = sample_rate as f64;
        Self {
            min_lag: (sr / F0_MAX).floor() as usize,
            max_lag: (sr / F0_MIN).ceil() as usize,
        }
    }

    /// Analysis span for frame `i`: `2 * window` samples centered on the
    /// frame center, zero-padded past the clip edges.
    pub(crate) fn span<T: Real>(samples: &[T], spec: &FrameSpec, i: usize) -> Vec<T> {
        let center = spec.center(i) as isize;
        let half = spec.window as isize;
        (center - half..center + half)
            .map(|n| {
                if n >= 0 && (n as usize) < samples.len() {
                    samples[n as usize]
                } else {
                    T::zero()
                }
            })
            .collect()
    }

    pub(crate) fn estimate<T: Real>(&self, x: &[T], sample_rate: u32) -> PitchEstimate<T> {
        let len = x.len();
        if len <= self.max_lag + 1 {
            return PitchEstimate {
                f0_hz: None,
                corr: T::zero(),
            };
        }
        // prefix[n] = sum of x[..n]^2
        let mut prefix = Vec::with_capacity(len + 1);
        prefix.push(0.0f64);
        for &v in x {
            let v = v.to_f64_lossy();
            prefix.push(prefix.last().unwrap() + v * v);
        }
        let xs: Vec<f64> = x.iter().map(|v| v.to_f64_lossy()).collect();
        let lags = self.min_lag..=self.max_lag;
        let corr: Vec<f64> = lags
            .clone()
            .map(|lag| {
                let m = len - lag;
                let num: f64 = xs[..m].iter().zip(&xs[lag..]).map(|(a, b)| a * b).sum();
                let e0 = prefix[m];
                let e1 = prefix[len] - prefix[lag];
                let den = (e0 * e1).sqrt();
                if den > 0.0 {
                    (num / den).clamp(-1.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect();

        let best = corr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if best <= 0.0 {
            return PitchEstimate {
                f0_hz: None,
                corr: T::lit(best.max(-1.0)),
            };
        }
        let is_peak = |j: usize| {
            let left = j == 0 || corr[j] >= corr[j - 1];
            let right = j + 1 == corr.len() || corr[j] >= corr[j + 1];
            left && right
        };
        let j = (0..corr.len())
            .find(|&j| is_peak(j) && corr[j] >= best * (1.0 - OCTAVE_TOLERANCE))
            .unwrap_or(0);

        // Parabolic refinement of the lag.
        let mut lag = (self.min_lag + j) as f64;
        if j > 0 && j + 1 < corr.len() {
            let (a, b, c) = (corr[j - 1], corr[j], corr[j + 1]);
            let denom = a - 2.0 * b + c;
            if denom < 0.0 {
                lag += (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
            }
        }
        let voiced = corr[j] >= VOICING_THRESHOLD;
        PitchEstimate {
            f0_hz: voiced.then(|| T::lit(sample_rate as f64 / lag)),
            corr: T::lit(corr[j]),
        }
    }
}

/// Per-frame maximal normalized autocorrelation pitch search over lags for
/// 60..360 Hz.
pub fn estimate_pitch<T: Real>(clip: &AudioClip<T>, spec: &FrameSpec) -> Result<PitchTrack<T>> {
    spec.validate()?;
    if clip.len() < spec.window {
        return Err(Error::invalid(format!(
            "clip of {} samples is shorter than one analysis window ({})",
            clip.len(),
            spec.window
        )));
    }
    let search = PitchSearch::new(clip.sample_rate());
    let n = super::frame_count(clip.len(), spec);
    Ok(PitchTrack {
        frames: (0..n)
            .map(|i| {
                let span = PitchSearch::span(clip.samples(), spec, i);
                search.estimate(&span, clip.sample_rate())
            })
            .collect(),
    })
}

/// Interpolates log-pitch over unvoiced gaps, clips it to `[ln 60, ln 360]`,
/// quantizes to 256 levels and clamps negative correlations to zero.
pub fn process_pitch_track<T: Real>(track: &PitchTrack<T>) -> Result<ProcessedPitch<T>> {
    let n = track.frames.len();
    if n == 0 {
        return Err(Error::invalid("empty pitch track"));
    }
    let voiced: Vec<(usize, f64)> = track
        .frames
        .iter()
        .enumerate()
        .filter_map(|(i, f)| f.f0_hz.map(|hz| (i, hz.to_f64_lossy().ln())))
        .collect();

    let all_unvoiced = voiced.is_empty();
    let raw: Vec<f64> = if all_unvoiced {
        vec![DEFAULT_F0.ln(); n]
    } else {
        let mut out = vec![0.0; n];
        let (first_i, first_v) = voiced[0];
        let (last_i, last_v) = *voiced.last().unwrap();
        out[..=first_i].fill(first_v);
        out[last_i..].fill(last_v);
        for w in voiced.windows(2) {
            let ((i0, v0), (i1, v1)) = (w[0], w[1]);
            for (i, o) in out.iter_mut().enumerate().take(i1 + 1).skip(i0) {
                let t = (i - i0) as f64 / (i1 - i0) as f64;
                *o = v0 + t * (v1 - v0);
            }
        }
        out
    };

    let index: Vec<u8> = raw.iter().map(|&v| quantize_log_pitch(v)).collect();
    Ok(ProcessedPitch {
        log_pitch: index.iter().map(|&i| dequantize_log_pitch(i)).collect(),
        index,
        corr: track
            .frames
            .iter()
            .map(|f| f.corr.max(T::zero()).min(T::one()))
            .collect(),
        all_unvoiced,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::SAMPLE_RATE;

    fn voiced(hz: f64, corr: f64) -> PitchEstimate<f64> {
        PitchEstimate {
            f0_hz: Some(hz),
            corr,
        }
    }

    fn unvoiced() -> PitchEstimate<f64> {
        PitchEstimate {
            f0_hz: None,
            corr: 0.1,
        }
    }

    fn tone(hz: f64, secs: f64, saw: bool) -> AudioClip<f64> {
        let n = (secs * SAMPLE_RATE as f64) as usize;
        let s = (0..n)
            .map(|i| {
                let ph = (hz * i as f64 / SAMPLE_RATE as f64).fract();
                if saw {
                    0.8 * (2.0 * ph - 1.0)
                } else {
                    0.8 * (2.0 * std::f64::consts::PI * ph).sin()
                }
            })
            .collect();
        AudioClip::new(s, SAMPLE_RATE).unwrap()
    }

    fn interior(track: &PitchTrack<f64>) -> &[PitchEstimate<f64>] {
        &track.frames[2..track.frames.len() - 2]
    }

    #[test]
    fn quantizer_levels() {
        assert_eq!(quantize_log_pitch(60f64.ln()), 0);
        assert_eq!(quantize_log_pitch(360f64.ln()), 255);
        let frac = (147f64.ln() - 60f64.ln()) / (360f64.ln() - 60f64.ln());
        assert!((frac - 0.5001).abs() < 1e-4);
        assert_eq!((255.0 * frac).round() as u8, 128);
        assert_eq!(quantize_log_pitch(147f64.ln()), 128);
        assert_eq!(dequantize_log_pitch::<f64>(255), 360f64.ln());
    }

    #[test]
    fn saw_110() {
        let track = estimate_pitch(&tone(110.0, 0.5, true), &FrameSpec::default()).unwrap();
        for f in interior(&track) {
            let hz = f.f0_hz.expect("voiced");
            assert!((hz - 110.0).abs() / 110.0 < 0.02, "{hz}");
        }
    }

    #[test]
    fn sine_220() {
        let track = estimate_pitch(&tone(220.0, 0.5, false), &FrameSpec::default()).unwrap();
        for f in interior(&track) {
            let hz = f.f0_hz.expect("voiced");
            assert!((hz - 220.0).abs() / 220.0 < 0.02, "{hz}");
            assert!(f.corr >= 0.95);
        }
    }

    #[test]
    fn silence_is_unvoiced() {
        let clip = AudioClip::new(vec![0.0f64; 4096], SAMPLE_RATE).unwrap();
        let track = estimate_pitch(&clip, &FrameSpec::default()).unwrap();
        assert!(track.frames.iter().all(|f| !f.voiced() && f.corr == 0.0));
    }

    #[test]
    fn short_clip_rejected() {
        let clip = AudioClip::new(vec![0.0f64; 100], SAMPLE_RATE).unwrap();
        assert!(estimate_pitch(&clip, &FrameSpec::default()).is_err());
    }

    #[test]
    fn clipping_and_negative_corr() {
        let p = process_pitch_track(&PitchTrack {
            frames: vec![voiced(400.0, -0.2)],
        })
        .unwrap();
        assert_eq!(p.index[0], 255);
        assert_eq!(p.log_pitch[0], 360f64.ln());
        assert_eq!(p.corr[0], 0.0);
    }

    #[test]
    fn interpolates_gaps_and_holds_edges() {
        let track = PitchTrack {
            frames: vec![
                unvoiced(),
                voiced(100.0, 0.9),
                unvoiced(),
                unvoiced(),
                voiced(200.0, 0.9),
                unvoiced(),
            ],
        };
        let p = process_pitch_track(&track).unwrap();
        let q = |hz: f64| dequantize_log_pitch::<f64>(quantize_log_pitch(hz.ln()));
        assert_eq!(p.log_pitch[0], q(100.0));
        assert_eq!(p.log_pitch[5], q(200.0));
        let mid = (100f64.ln() * 2.0 + 200f64.ln()) / 3.0;
        assert_eq!(p.log_pitch[2], dequantize_log_pitch(quantize_log_pitch(mid)));
        assert!(!p.all_unvoiced);
    }

    #[test]
    fn all_unvoiced_uses_default() {
        let p = process_pitch_track(&PitchTrack {
            frames: vec![unvoiced(); 3],
        })
        .unwrap();
        assert!(p.all_unvoiced);
        assert!(p.index.iter().all(|&i| i == 128));
    }

    #[test]
    fn empty_track_rejected() {
        assert!(process_pitch_track::<f64>(&PitchTrack { frames: vec![] }).is_err());
    }
}
