use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{frame_count, periodic_hann, AudioClip, FrameSpec, ENERGY_FLOOR};
use crate::{Error, Real, Result, SAMPLE_RATE};

pub const N_MEL: usize = 80;
pub const MEL_WINDOW: usize = 1024;
pub const MEL_FFT: usize = 1024;

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// 80 log mel energies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelFrame<T> {
    pub log_energies: [T; N_MEL],
}

impl<T: Real> MelFrame<T> {
    pub fn new(values: &[T]) -> Result<Self> {
        if values.len() != N_MEL {
            return Err(Error::invalid(format!(
                "mel frame has {} values, expected {N_MEL}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite mel value"));
        }
        let mut log_energies = [T::zero(); N_MEL];
        log_energies.copy_from_slice(values);
        Ok(Self { log_energies })
    }
}

/// Triangular filters on the HTK mel scale over 0..11 025 Hz. Each filter's
/// weights sum to one, so a channel reports the weighted mean power of its
/// bins and a flat spectrum maps to a flat mel frame.
#[derive(Debug, Clone)]
pub struct MelFilterbank<T> {
    /// `(first bin, weights)` per channel.
    filters: Vec<(usize, Vec<T>)>,
    centers_hz: Vec<f64>,
}

impl<T: Real> MelFilterbank<T> {
    pub fn new() -> Self {
        let nyquist = SAMPLE_RATE as f64 / 2.0;
        let bin_hz = SAMPLE_RATE as f64 / MEL_FFT as f64;
        let n_bins = MEL_FFT / 2 + 1;
        let top = hz_to_mel(nyquist);
        let points: Vec<f64> = (0..N_MEL + 2)
            .map(|i| mel_to_hz(top * i as f64 / (N_MEL + 1) as f64))
            .collect();
        let mut filters = Vec::with_capacity(N_MEL);
        for m in 0..N_MEL {
            let (lo, c, hi) = (points[m], points[m + 1], points[m + 2]);
            let mut w: Vec<f64> = (0..n_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= c {
                        (f - lo) / (c - lo)
                    } else {
                        (hi - f) / (hi - c)
                    }
                })
                .collect();
            if w.iter().all(|&v| v == 0.0) {
                w[((c / bin_hz).round() as usize).min(n_bins - 1)] = 1.0;
            }
            let first = w.iter().position(|&v| v > 0.0).unwrap();
            let last = w.iter().rposition(|&v| v > 0.0).unwrap();
            let sum: f64 = w.iter().sum();
            filters.push((first, w[first..=last].iter().map(|&v| T::lit(v / sum)).collect()));
        }
        Self {
            filters,
            centers_hz: points[1..=N_MEL].to_vec(),
        }
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn apply(&self, power: &[T]) -> [T; N_MEL] {
        let mut out = [T::zero(); N_MEL];
        for (o, (first, w)) in out.iter_mut().zip(&self.filters) {
            *o = w
                .iter()
                .zip(&power[*first..])
                .map(|(&a, &b)| a * b)
                .sum();
        }
        out
    }
}

impl<T: Real> Default for MelFilterbank<T> {
    fn default() -> Self {
        Self::new()
    }
}

pub(crate) struct MelAnalyzer<T: Real> {
    window: Vec<T>,
    fft: Arc<dyn Fft<T>>,
    bank: MelFilterbank<T>,
}

impl<T: Real> MelAnalyzer<T> {
    pub(crate) fn new() -> Self {
        Self {
            window: periodic_hann(MEL_WINDOW),
            fft: FftPlanner::new().plan_fft_forward(MEL_FFT),
            bank: MelFilterbank::new(),
        }
    }

    /// Mel frame centered on the center of LPC frame `i`.
    pub(crate) fn frame(&self, samples: &[T], spec: &FrameSpec, i: usize) -> MelFrame<T> {
        let start = spec.center(i) as isize - (MEL_WINDOW / 2) as isize;
        let mut buf = vec![Complex::new(T::zero(), T::zero()); MEL_FFT];
        for (j, (b, &w)) in buf.iter_mut().zip(&self.window).enumerate() {
            let n = start + j as isize;
            if n >= 0 && (n as usize) < samples.len() {
                b.re = samples[n as usize] * w;
            }
        }
        self.fft.process(&mut buf);
        let power: Vec<T> = buf[..MEL_FFT / 2 + 1].iter().map(|c| c.norm_sqr()).collect();
        let floor = T::lit(ENERGY_FLOOR);
        let mut log_energies = self.bank.apply(&power);
        for v in log_energies.iter_mut() {
            *v = v.max(floor).ln();
        }
        MelFrame { log_energies }
    }
}

/// 80-channel log mel-spectrogram at the LPC frame rate (hop 256). Frame `i`
/// is a 1024-sample window centered on the center of LPC frame `i`.
pub fn mel_spectrogram<T: Real>(clip: &AudioClip<T>) -> Result<Vec<MelFrame<T>>> {
    let spec = FrameSpec::default();
    let analyzer = MelAnalyzer::new();
    Ok((0..frame_count(clip.len(), &spec))
        .map(|i| analyzer.frame(clip.samples(), &spec, i))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silence_hits_floor() {
        let clip = AudioClip::new(vec![0.0f64; 4096], SAMPLE_RATE).unwrap();
        let mel = mel_spectrogram(&clip).unwrap();
        assert_eq!(mel.len(), frame_count(4096, &FrameSpec::default()));
        for f in mel {
            assert!(f.log_energies.iter().all(|&v| v == ENERGY_FLOOR.ln()));
        }
    }

    #[test]
    fn every_filter_has_weight() {
        let bank = MelFilterbank::<f64>::new();
        for (_, w) in &bank.filters {
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(bank.centers_hz().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn sine_1khz_peaks_near_1khz() {
        let n = 8192;
        let s: Vec<f64> = (0..n)
            .map(|i| 0.5 * (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / 22050.0).sin())
            .collect();
        let clip = AudioClip::new(s, SAMPLE_RATE).unwrap();
        let mel = mel_spectrogram(&clip).unwrap();
        let bank = MelFilterbank::<f64>::new();
        let f = &mel[mel.len() / 2];
        let argmax = (0..N_MEL)
            .max_by(|&a, &b| f.log_energies[a].total_cmp(&f.log_energies[b]))
            .unwrap();
        // Oracle: the filter whose center is nearest 1 kHz.
        let nearest = (0..N_MEL)
            .min_by(|&a, &b| {
                (bank.centers_hz()[a] - 1000.0)
                    .abs()
                    .total_cmp(&(bank.centers_hz()[b] - 1000.0).abs())
            })
            .unwrap();
        assert!((argmax as isize - nearest as isize).abs() <= 1);
        let spacing = hz_to_mel(11025.0) / (N_MEL + 1) as f64;
        assert!((hz_to_mel(bank.centers_hz()[argmax]) - hz_to_mel(1000.0)).abs() <= spacing);
    }

    #[test]
    fn mel_frame_validation() {
        assert!(MelFrame::<f64>::new(&[0.0; 79]).is_err());
        assert!(MelFrame::new(&[f64::NAN; 80]).is_err());
    }
}
