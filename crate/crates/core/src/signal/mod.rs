//! LPCNet feature extraction and mel-spectrogram targets for 22 050 Hz audio.
//!
//! Every operation here is a pure function of its inputs. The per-frame
//! pipeline is
//!
//! ```text
//! samples -> periodic Hann (512) -> FFT (512) -> 20 band means -> log -> DCT-II
//!         -> normalized autocorrelation pitch search [60, 360] Hz
//!         -> interpolate / clip / quantize log-pitch, clamp correlation
//! ```
//!
//! and the mel branch uses a 1024-point window centered on the same frame
//! centers, so both tracks always have the same length.

mod bands;
mod cepstrum;
mod features;
mod frame;
mod mel;
mod pitch;

pub use bands::{band_energies, bark, bark_to_hz, BandLayout, SpectralAnalyzer};
pub use cepstrum::{bands_from_cepstrum, cepstrum_from_bands, dct_ii_ortho, dct_iii_ortho};
pub use features::{extract_features, extract_features_par, FeatureExtractor, FeatureTrack};
pub use frame::{frame_count, frame_signal, periodic_hann, AudioClip, FrameSpec};
pub use mel::{hz_to_mel, mel_spectrogram, mel_to_hz, MelFilterbank, MelFrame, N_MEL, MEL_FFT, MEL_WINDOW};
pub use pitch::{
    dequantize_log_pitch, estimate_pitch, process_pitch_track, quantize_log_pitch, PitchEstimate,
    PitchTrack, ProcessedPitch, F0_MAX, F0_MIN, VOICING_THRESHOLD,
};

use crate::Real;

/// Number of band cepstra per frame.
pub const N_CEPSTRA: usize = 20;
/// Total LPCNet features per frame (cepstra, log-pitch, pitch correlation).
pub const N_FEATURES: usize = 22;
/// Floor applied to band and mel energies before taking the log.
pub const ENERGY_FLOOR: f64 = 1e-10;

/// One LPCNet acoustic vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureFrame<T> {
    pub cepstra: [T; N_CEPSTRA],
    /// Dequantized log-pitch, in `[ln 60, ln 360]`.
    pub log_pitch: T,
    /// Pitch correlation, in `[0, 1]`.
    pub pitch_corr: T,
}

impl<T: Real> FeatureFrame<T> {
    pub fn to_array(&self) -> [T; N_FEATURES] {
        let mut out = [T::zero(); N_FEATURES];
        out[..N_CEPSTRA].copy_from_slice(&self.cepstra);
        out[N_CEPSTRA] = self.log_pitch;
        out[N_CEPSTRA + 1] = self.pitch_corr;
        out
    }

    /// Builds a frame from 22 raw values, clamping log-pitch and correlation
    /// into their valid ranges. Used for network predictions, which are not
    /// range-constrained.
    pub fn from_prediction(values: &[T]) -> crate::Result<Self> {
        if values.len() != N_FEATURES {
            return Err(crate::Error::invalid(format!(
                "feature vector has {} values, expected {N_FEATURES}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(crate::Error::invalid("non-finite feature value"));
        }
        let mut cepstra = [T::zero(); N_CEPSTRA];
        cepstra.copy_from_slice(&values[..N_CEPSTRA]);
        let lo = T::lit(F0_MIN.ln());
        let hi = T::lit(F0_MAX.ln());
        Ok(Self {
            cepstra,
            log_pitch: values[N_CEPSTRA].max(lo).min(hi),
            pitch_corr: values[N_CEPSTRA + 1].max(T::zero()).min(T::one()),
        })
    }

    /// Checks the frame invariants: finite values, log-pitch within the clip
    /// range and correlation within `[0, 1]`.
    pub fn is_valid(&self) -> bool {
        let eps = 1e-9;
        let lp = self.log_pitch.to_f64_lossy();
        let pc = self.pitch_corr.to_f64_lossy();
        self.to_array().iter().all(|v| v.is_finite())
            && lp >= F0_MIN.ln() - eps
            && lp <= F0_MAX.ln() + eps
            && (0.0..=1.0).contains(&pc)
    }
}
