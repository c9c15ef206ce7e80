use crate::{Error, Real, Result, SAMPLE_RATE};

/// Mono audio at 22 050 Hz with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip<T> {
    samples: Vec<T>,
    sample_rate: u32,
}

impl<T: Real> AudioClip<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(Error::UnsupportedSampleRate(sample_rate));
        }
        if samples.is_empty() {
            return Err(Error::invalid("empty audio clip"));
        }
        if let Some(i) = samples
            .iter()
            .position(|s| !s.is_finite() || s.abs() > T::one())
        {
            return Err(Error::invalid(format!(
                "sample {i} is not a finite value in [-1, 1]"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Framing parameters, in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameSpec {
    pub hop: usize,
    pub window: usize,
    pub fft_size: usize,
}

impl Default for FrameSpec {
    fn default() -> Self {
        Self {
            hop: 256,
            window: 512,
            fft_size: 512,
        }
    }
}

impl FrameSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.window == 0 || self.fft_size == 0 {
            return Err(Error::invalid("frame spec sizes must be positive"));
        }
        if !(self.hop <= self.window && self.window <= self.fft_size) {
            return Err(Error::invalid(format!(
                "frame spec requires hop <= window <= fft_size, got {}/{}/{}",
                self.hop, self.window, self.fft_size
            )));
        }
        Ok(())
    }

    /// Center sample of frame `i`.
    pub fn center(&self, i: usize) -> usize {
        i * self.hop + self.window / 2
    }
}

/// `floor((len - window) / hop) + 1`, or 0 when the clip is shorter than
/// one window.
pub fn frame_count(len: usize, spec: &FrameSpec) -> usize {
    if len < spec.window {
        0
    } else {
        (len - spec.window) / spec.hop + 1
    }
}

/// Periodic Hann window: `0.5 - 0.5 cos(2 pi n / len)`.
pub fn periodic_hann<T: Real>(len: usize) -> Vec<T> {
    (0..len)
        .map(|n| {
            let x = 2.0 * std::f64::consts::PI * n as f64 / len as f64;
            T::lit(0.5 - 0.5 * x.cos())
        })
        .collect()
}

/// Splits the clip into overlapping windowed frames.
pub fn frame_signal<T: Real>(clip: &AudioClip<T>, spec: &FrameSpec) -> Result<Vec<Vec<T>>> {
    spec.validate()?;
    let window = periodic_hann::<T>(spec.window);
    let x = clip.samples();
    Ok((0..frame_count(x.len(), spec))
        .map(|i| {
            let start = i * spec.hop;
            x[start..start + spec.window]
                .iter()
                .zip(&window)
                .map(|(&s, &w)| s * w)
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(n: usize) -> AudioClip<f64> {
        AudioClip::new(
            (0..n).map(|i| (i as f64 * 0.01).sin() * 0.5).collect(),
            SAMPLE_RATE,
        )
        .unwrap()
    }

    #[test]
    fn frame_counts() {
        let spec = FrameSpec::default();
        assert_eq!(frame_signal(&clip(512), &spec).unwrap().len(), 1);
        assert_eq!(frame_signal(&clip(1024), &spec).unwrap().len(), 3);
        assert_eq!(frame_signal(&clip(511), &spec).unwrap().len(), 0);
        assert_eq!(frame_count(22_050, &spec), 85);
    }

    #[test]
    fn silence_frames_are_zero() {
        let c = AudioClip::new(vec![0.0f64; 2048], SAMPLE_RATE).unwrap();
        for f in frame_signal(&c, &FrameSpec::default()).unwrap() {
            assert!(f.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn rejects_bad_clips() {
        assert!(matches!(
            AudioClip::<f64>::new(vec![0.0; 10], 44_100),
            Err(Error::UnsupportedSampleRate(44_100))
        ));
        assert!(AudioClip::<f64>::new(vec![], SAMPLE_RATE).is_err());
        assert!(AudioClip::new(vec![0.0, f64::NAN], SAMPLE_RATE).is_err());
        assert!(AudioClip::new(vec![1.5f64], SAMPLE_RATE).is_err());
    }

    #[test]
    fn rejects_bad_spec() {
        let spec = FrameSpec {
            hop: 600,
            window: 512,
            fft_size: 512,
        };
        assert!(spec.validate().is_err());
        assert!(frame_signal(&clip(1024), &spec).is_err());
    }

    #[test]
    fn hann_is_periodic() {
        let w = periodic_hann::<f64>(512);
        assert_eq!(w[0], 0.0);
        assert!((w[256] - 1.0).abs() < 1e-15);
        assert!((w[1] - w[511]).abs() < 1e-15);
    }
}
