use crate::error::Error;
use crate::model::ProsodyInfo;
use crate::signal::{FeatureFrame, VOICING_THRESHOLD};
use crate::{Real, Result};

/// Prosody observations before corpus normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawProsody {
    /// `ln(frames per symbol)`.
    pub log_duration: f64,
    /// 95th minus 5th percentile of voiced log-pitch; zero when unvoiced.
    pub log_pitch_span: f64,
}

/// Linear-interpolation percentile of a sorted slice, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => 0.0,
        1 => sorted[0],
        n => {
            let pos = q * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            sorted[lo] + (sorted[hi] - sorted[lo]) * frac
        }
    }
}

/// Raw observations of one utterance.
pub fn prosody_observations<T: Real>(
    features: &[FeatureFrame<T>],
    frames_per_symbol: f64,
) -> Result<RawProsody> {
    if !(frames_per_symbol > 0.0) || !frames_per_symbol.is_finite() {
        return Err(Error::invalid(format!(
            "frames per symbol must be positive, got {frames_per_symbol}"
        )));
    }
    let mut voiced: Vec<f64> = features
        .iter()
        .filter(|f| f.pitch_corr.to_f64_lossy() >= VOICING_THRESHOLD)
        .map(|f| f.log_pitch.to_f64_lossy())
        .collect();
    voiced.sort_by(f64::total_cmp);
    let span = if voiced.is_empty() {
        0.0
    } else {
        percentile(&voiced, 0.95) - percentile(&voiced, 0.05)
    };
    Ok(RawProsody {
        log_duration: frames_per_symbol.ln(),
        log_pitch_span: span,
    })
}

/// Corpus mean and standard deviation of both observations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProsodyStats {
    pub mean: [f64; 2],
    pub std: [f64; 2],
}

impl ProsodyStats {
    pub fn from_observations(obs: &[RawProsody]) -> Result<Self> {
        if obs.is_empty() {
            return Err(Error::invalid("no prosody observations"));
        }
        let n = obs.len() as f64;
        let vals = |o: &RawProsody| [o.log_duration, o.log_pitch_span];
        let mut mean = [0.0; 2];
        for o in obs {
            for (m, v) in mean.iter_mut().zip(vals(o)) {
                *m += v / n;
            }
        }
        let mut var = [0.0; 2];
        for o in obs {
            for ((s, v), m) in var.iter_mut().zip(vals(o)).zip(mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        Ok(Self {
            mean,
            std: [var[0].sqrt(), var[1].sqrt()],
        })
    }

    /// z-scores; a zero spread maps to zero.
    pub fn normalize<T: Real>(&self, raw: &RawProsody) -> ProsodyInfo<T> {
        let z = |v: f64, i: usize| {
            if self.std[i] > 1e-12 {
                (v - self.mean[i]) / self.std[i]
            } else {
                0.0
            }
        };
        ProsodyInfo {
            log_duration: T::lit(z(raw.log_duration, 0)),
            log_pitch_span: T::lit(z(raw.log_pitch_span, 1)),
        }
    }
}
