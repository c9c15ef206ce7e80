//! Linear-prediction envelopes from band cepstra and from mel frames.
//!
//! Both paths build a per-bin power spectrum, take its inverse DFT to get an
//! autocorrelation sequence and solve the normal equations with the
//! Levinson–Durbin recursion. Filters use the convention
//! `A(z) = 1 - sum_i a_i z^-i`.

use rustfft::num_complex::Complex;

use crate::signal::{
    bands_from_cepstrum, hz_to_mel, BandLayout, FrameSpec, MelFilterbank, MelFrame, MEL_FFT,
    N_CEPSTRA, N_MEL,
};
use crate::{Error, Real, Result, SAMPLE_RATE};

pub const DEFAULT_ORDER: usize = 16;
/// Relative white-noise floor added to `r[0]` before the recursion.
const NOISE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LpFilter<T> {
    /// `a_1..a_p`.
    pub coefficients: Vec<T>,
    /// `k_1..k_p`, all of magnitude below one.
    pub reflection: Vec<T>,
    pub prediction_error: T,
}

impl<T: Real> LpFilter<T> {
    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_stable(&self) -> bool {
        self.reflection.iter().all(|k| k.abs() < T::one())
    }

    /// Model power spectrum `E / |A(e^jw)|^2` at `n` frequencies evenly spaced
    /// on `[0, pi]`.
    pub fn power_envelope(&self, n: usize) -> Vec<f64> {
        let e = self.prediction_error.to_f64_lossy();
        (0..n)
            .map(|i| {
                let w = std::f64::consts::PI * i as f64 / (n - 1).max(1) as f64;
                let mut z = Complex::new(1.0, 0.0);
                for (k, a) in self.coefficients.iter().enumerate() {
                    z -= Complex::from_polar(a.to_f64_lossy(), -w * (k + 1) as f64);
                }
                e / z.norm_sqr()
            })
            .collect()
    }

    /// Roots of `z^p - a_1 z^(p-1) - ... - a_p` (Durand–Kerner iteration).
    pub fn poles(&self) -> Vec<Complex<f64>> {
        let p = self.order();
        if p == 0 {
            return Vec::new();
        }
        // monic coefficients, highest power first
        let mut poly = vec![Complex::new(1.0, 0.0)];
        poly.extend(
            self.coefficients
                .iter()
                .map(|a| Complex::new(-a.to_f64_lossy(), 0.0)),
        );
        let eval = |z: Complex<f64>| poly.iter().fold(Complex::new(0.0, 0.0), |acc, &c| acc * z + c);
        let seed = Complex::new(0.4, 0.9);
        let mut roots: Vec<Complex<f64>> = (0..p).map(|i| seed.powu(i as u32) * 0.9).collect();
        for _ in 0..500 {
            let mut delta = 0.0f64;
            for i in 0..p {
                let mut den = Complex::new(1.0, 0.0);
                for j in 0..p {
                    if i != j {
                        den *= roots[i] - roots[j];
                    }
                }
                let step = eval(roots[i]) / den;
                roots[i] -= step;
                delta = delta.max(step.norm());
            }
            if delta < 1e-14 {
                break;
            }
        }
        roots
    }

    /// Frequency (Hz) of the pole closest to the unit circle, i.e. the
    /// sharpest resonance of the envelope.
    pub fn dominant_resonance_hz(&self) -> Option<f64> {
        self.poles()
            .into_iter()
            .filter(|z| z.im >= 0.0)
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .map(|z| z.arg() * SAMPLE_RATE as f64 / (2.0 * std::f64::consts::PI))
    }
}

/// Levinson–Durbin recursion on `autocorr[0..=p]`.
pub fn levinson<T: Real>(autocorr: &[T]) -> Result<LpFilter<T>> {
    let Some(&r0) = autocorr.first() else {
        return Err(Error::invalid("empty autocorrelation"));
    };
    if autocorr.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite autocorrelation"));
    }
    if r0 <= T::zero() {
        return Err(Error::invalid("autocorrelation r[0] must be positive"));
    }
    let p = autocorr.len() - 1;
    let mut a = vec![T::zero(); p];
    let mut k = vec![T::zero(); p];
    let mut err = r0;
    let mut prev = vec![T::zero(); p];
    for i in 1..=p {
        let mut acc = autocorr[i];
        for j in 1..i {
            acc -= a[j - 1] * autocorr[i - j];
        }
        let ki = acc / err;
        if !(ki.abs() < T::one()) {
            return Err(Error::NotPositiveDefinite {
                stage: i,
                reflection: ki.abs().to_f64_lossy(),
            });
        }
        prev[..i - 1].copy_from_slice(&a[..i - 1]);
        for j in 1..i {
            a[j - 1] = prev[j - 1] - ki * prev[i - j - 1];
        }
        a[i - 1] = ki;
        k[i - 1] = ki;
        err *= T::one() - ki * ki;
    }
    Ok(LpFilter {
        coefficients: a,
        reflection: k,
        prediction_error: err,
    })
}

/// Autocorrelation lags `0..=order` of a real signal whose one-sided power
/// spectrum (bins `0..=n/2` of an `n`-point DFT) is `power`.
pub fn autocorr_from_power<T: Real>(power: &[T], order: usize) -> Vec<T> {
    let n = 2 * (power.len() - 1);
    let nyq = power.len() - 1;
    (0..=order)
        .map(|lag| {
            let mut s = power[0].to_f64_lossy() + power[nyq].to_f64_lossy() * if lag % 2 == 0 { 1.0 } else { -1.0 };
            for (k, p) in power.iter().enumerate().take(nyq).skip(1) {
                let ph = 2.0 * std::f64::consts::PI * ((k * lag) % n) as f64 / n as f64;
                s += 2.0 * p.to_f64_lossy() * ph.cos();
            }
            T::lit(s / n as f64)
        })
        .collect()
}

fn solve_power<T: Real>(power: &[T], order: usize) -> Result<LpFilter<T>> {
    let mut r = autocorr_from_power(power, order);
    r[0] *= T::lit(1.0 + NOISE_FLOOR);
    levinson(&r)
}

/// Piecewise-linear interpolation of `ys` (given at ascending `xs`) at `x`,
/// holding the end values outside the range.
fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let j = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[j - 1], xs[j]);
    let t = (x - x0) / (x1 - x0);
    ys[j - 1] + t * (ys[j] - ys[j - 1])
}

/// LP filter from 20 band cepstra: cepstra -> band levels -> per-bin power
/// (log-linear between band centers) -> autocorrelation -> Levinson.
pub fn lp_from_cepstrum<T: Real>(
    cepstra: &[T; N_CEPSTRA],
    layout: &BandLayout,
    order: usize,
) -> Result<LpFilter<T>> {
    if cepstra.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite cepstrum"));
    }
    let fft_size = FrameSpec::default().fft_size;
    let log_bands: Vec<f64> = bands_from_cepstrum(cepstra)
        .iter()
        .map(|b| b.to_f64_lossy().ln())
        .collect();
    let centers = layout.centers();
    let bin_hz = SAMPLE_RATE as f64 / fft_size as f64;
    let power: Vec<T> = (0..=fft_size / 2)
        .map(|k| T::lit(interp(&centers, &log_bands, k as f64 * bin_hz).exp()))
        .collect();
    solve_power(&power, order)
}

/// LP filter from an 80-channel log mel frame: 3-channel moving average,
/// log-linear resampling from mel centers to linear FFT bins, then
/// autocorrelation and Levinson.
pub fn lp_from_mel<T: Real>(mel: &MelFrame<T>, order: usize) -> Result<LpFilter<T>> {
    let raw: Vec<f64> = mel.log_energies.iter().map(|v| v.to_f64_lossy()).collect();
    let smooth: Vec<f64> = (0..N_MEL)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(N_MEL - 1);
            raw[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    let bank = MelFilterbank::<f64>::new();
    let centers: Vec<f64> = bank.centers_hz().iter().map(|&f| hz_to_mel(f)).collect();
    let bin_hz = SAMPLE_RATE as f64 / MEL_FFT as f64;
    let power: Vec<T> = (0..=MEL_FFT / 2)
        .map(|k| T::lit(interp(&centers, &smooth, hz_to_mel(k as f64 * bin_hz)).exp()))
        .collect();
    solve_power(&power, order)
}

/// RMS difference in dB between two envelopes over `n` frequencies.
pub fn log_spectral_distance<T: Real>(a: &LpFilter<T>, b: &LpFilter<T>, n: usize) -> f64 {
    let pa = a.power_envelope(n);
    let pb = b.power_envelope(n);
    let ms: f64 = pa
        .iter()
        .zip(&pb)
        .map(|(x, y)| (10.0 * (x / y).log10()).powi(2))
        .sum::<f64>()
        / n as f64;
    ms.sqrt()
}
