use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{FrameSpec, N_CEPSTRA};
use crate::{Error, Real, Result, SAMPLE_RATE};

const N_BANDS: usize = N_CEPSTRA;
/// Bands below this frequency are laid out on an equal-Bark grid.
const BARK_GRID_TOP_HZ: f64 = 8000.0;
const N_BARK_BANDS: usize = 18;
const TOP_BAND_EDGES: [f64; 3] = [8000.0, 9500.0, 11025.0];

/// Zwicker–Terhardt critical-band rate.
pub fn bark(hz: f64) -> f64 {
    13.0 * (0.00076 * hz).atan() + 3.5 * (hz / 7500.0).powi(2).atan()
}

/// Inverse of [`bark`] by bisection on `[0, 22050]` Hz.
pub fn bark_to_hz(z: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 22_050.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if bark(mid) < z {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Twenty contiguous analysis bands covering 0..11 025 Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct BandLayout {
    edges: [f64; N_BANDS + 1],
}

impl BandLayout {
    pub fn new(edges: [f64; N_BANDS + 1]) -> Result<Self> {
        if edges[0] != 0.0 || edges[N_BANDS] != SAMPLE_RATE as f64 / 2.0 {
            return Err(Error::invalid("band edges must span 0..11025 Hz"));
        }
        if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("band edges must be strictly ascending"));
        }
        if edges[N_BANDS - 2..] != TOP_BAND_EDGES {
            return Err(Error::invalid(
                "top two bands must be [8000, 9500] and [9500, 11025] Hz",
            ));
        }
        Ok(Self { edges })
    }

    /// The 22 kHz layout: 18 equal-Bark bands up to 8 kHz with edges rounded
    /// to the nearest FFT bin of `spec`, then the two fixed high bands.
    pub fn lpcnet_22k(spec: &FrameSpec) -> Self {
        let bin_hz = SAMPLE_RATE as f64 / spec.fft_size as f64;
        let step = bark(BARK_GRID_TOP_HZ) / N_BARK_BANDS as f64;
        let mut edges = [0.0; N_BANDS + 1];
        for (i, e) in edges.iter_mut().enumerate().take(N_BARK_BANDS).skip(1) {
            let hz = bark_to_hz(step * i as f64);
            *e = (hz / bin_hz).round() * bin_hz;
        }
        edges[N_BANDS - 2..].copy_from_slice(&TOP_BAND_EDGES);
        Self::new(edges).expect("default band layout is valid")
    }

    pub fn edges(&self) -> &[f64; N_BANDS + 1] {
        &self.edges
    }

    /// Midpoint of each band, in Hz.
    pub fn centers(&self) -> [f64; N_BANDS] {
        let mut c = [0.0; N_BANDS];
        for (b, v) in c.iter_mut().enumerate() {
            *v = 0.5 * (self.edges[b] + self.edges[b + 1]);
        }
        c
    }

    /// Half-open FFT bin range `[start, end)` of every band for an FFT of
    /// `fft_size` points. A bin belongs to the band whose lower edge is at or
    /// below its center frequency; the Nyquist bin belongs to the top band.
    pub fn bin_ranges(&self, fft_size: usize) -> Result<[(usize, usize); N_BANDS]> {
        let bin_hz = SAMPLE_RATE as f64 / fft_size as f64;
        let n_bins = fft_size / 2 + 1;
        let start = |hz: f64| ((hz / bin_hz - 1e-9).ceil().max(0.0) as usize).min(n_bins);
        let mut out = [(0, 0); N_BANDS];
        for (b, r) in out.iter_mut().enumerate() {
            let end = if b + 1 == N_BANDS {
                n_bins
            } else {
                start(self.edges[b + 1])
            };
            *r = (start(self.edges[b]), end);
            if r.1 <= r.0 {
                return Err(Error::invalid(format!(
                    "band {b} has no FFT bins at fft_size {fft_size}"
                )));
            }
        }
        Ok(out)
    }
}

/// Reusable FFT power-spectrum and band aggregation state for one frame spec.
pub struct SpectralAnalyzer<T: Real> {
    spec: FrameSpec,
    fft: Arc<dyn Fft<T>>,
    bins: [(usize, usize); N_BANDS],
}

impl<T: Real> SpectralAnalyzer<T> {
    pub fn new(spec: &FrameSpec, layout: &BandLayout) -> Result<Self> {
        spec.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(spec.fft_size);
        Ok(Self {
            spec: *spec,
            fft,
            bins: layout.bin_ranges(spec.fft_size)?,
        })
    }

    /// `|X_k|^2` for `k = 0..=fft_size/2` of the zero-padded frame.
    pub fn power_spectrum(&self, frame: &[T]) -> Result<Vec<T>> {
        if frame.len() != self.spec.window {
            return Err(Error::invalid(format!(
                "frame has {} samples, expected {}",
                frame.len(),
                self.spec.window
            )));
        }
        let mut buf = vec![Complex::new(T::zero(), T::zero()); self.spec.fft_size];
        for (b, &x) in buf.iter_mut().zip(frame) {
            b.re = x;
        }
        self.fft.process(&mut buf);
        Ok(buf[..self.spec.fft_size / 2 + 1]
            .iter()
            .map(|c| c.norm_sqr())
            .collect())
    }

    /// Mean power over each band's bins.
    pub fn band_means(&self, power: &[T]) -> [T; N_BANDS] {
        let mut out = [T::zero(); N_BANDS];
        for (o, &(s, e)) in out.iter_mut().zip(&self.bins) {
            let sum: T = power[s..e].iter().copied().sum();
            *o = sum / T::lit((e - s) as f64);
        }
        out
    }

    pub fn band_energies(&self, frame: &[T]) -> Result<[T; N_BANDS]> {
        Ok(self.band_means(&self.power_spectrum(frame)?))
    }
}

/// Band energies of one windowed frame: the FFT power spectrum averaged over
/// the bins of each band.
pub fn band_energies<T: Real>(
    frame: &[T],
    layout: &BandLayout,
    spec: &FrameSpec,
) -> Result<[T; N_BANDS]> {
    SpectralAnalyzer::new(spec, layout)?.band_energies(frame)
}
