//! Real-time factor measurement.
//!
//! A stage is timed `runs` times and the median wall time is divided by the
//! duration of the audio it covers. Reports carry a hardware description and
//! published reference figures as context; they are never compared against
//! them.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::lp::{lp_from_cepstrum, DEFAULT_ORDER};
use crate::model::{Model, SymbolSequence};
use crate::signal::{AudioClip, BandLayout, FeatureExtractor, FrameSpec};
use crate::{Error, Real, Result, SAMPLE_RATE};

pub const DEFAULT_RUNS: usize = 5;

/// Published figures for a full-size system on a 2.7 GHz Xeon, reported
/// alongside measurements for orientation only.
pub const REFERENCE_CONTEXT: &str = "published reference on a 2.7 GHz Xeon with a full-size model: \
acoustic model 0.43 RTF at 1 thread and 0.27 RTF at 2 threads, vocoder 0.25 RTF; \
not comparable to this measurement";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchStage {
    /// LPCNet features and mel frames from audio.
    Extract,
    /// Autoregressive synthesis plus post-nets.
    AcousticModel,
    /// Synthesis followed by per-frame LP estimation from the predicted
    /// cepstra; everything up to the waveform generator.
    EndToEnd,
}

impl BenchStage {
    pub fn name(self) -> &'static str {
        match self {
            BenchStage::Extract => "extract",
            BenchStage::AcousticModel => "acoustic-model",
            BenchStage::EndToEnd => "end-to-end",
        }
    }
}

impl fmt::Display for BenchStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchStage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "extract" => Ok(BenchStage::Extract),
            "acoustic-model" => Ok(BenchStage::AcousticModel),
            "end-to-end" => Ok(BenchStage::EndToEnd),
            other => Err(Error::invalid(format!("unknown bench stage `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub stage: BenchStage,
    pub threads: usize,
    pub audio_seconds: f64,
    pub wall_seconds: f64,
    pub rtf: f64,
    /// Every run's wall time, in run order.
    pub runs: Vec<f64>,
    pub hardware: String,
    pub reference: &'static str,
}

impl BenchReport {
    pub fn new(stage: BenchStage, threads: usize, audio_seconds: f64, runs: Vec<f64>) -> Result<Self> {
        if !(audio_seconds > 0.0) {
            return Err(Error::invalid("benchmark needs audio longer than zero seconds"));
        }
        let wall_seconds = median(&runs).ok_or_else(|| Error::invalid("no benchmark runs"))?;
        // Timer resolution can report zero for tiny inputs.
        let wall_seconds = wall_seconds.max(1e-9);
        Ok(Self {
            stage,
            threads,
            audio_seconds,
            wall_seconds,
            rtf: wall_seconds / audio_seconds,
            runs,
            hardware: hardware_description(),
            reference: REFERENCE_CONTEXT,
        })
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// CPU model name and logical core count.
pub fn hardware_description() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| std::env::consts::ARCH.to_string());
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!("{cpu}, {cores} logical cores, {}", std::env::consts::OS)
}

/// Wall time of each of `runs` calls to `f`.
pub fn time_runs(runs: usize, mut f: impl FnMut() -> Result<()>) -> Result<Vec<f64>> {
    (0..runs.max(1))
        .map(|_| {
            let t0 = Instant::now();
            f()?;
            Ok(t0.elapsed().as_secs_f64())
        })
        .collect()
}

/// Times feature and mel extraction of `clip` split over `threads` workers.
pub fn bench_extract<T: Real>(clip: &AudioClip<T>, threads: usize, runs: usize) -> Result<BenchReport> {
    let spec = FrameSpec::default();
    let extractor = FeatureExtractor::<T>::new(&spec, &BandLayout::lpcnet_22k(&spec))?;
    let times = time_runs(runs, || extractor.run(clip, true, threads).map(|_| ()))?;
    BenchReport::new(BenchStage::Extract, threads.max(1), clip.duration_seconds(), times)
}

/// Times synthesis of `symbols` at zero prosody offsets. With
/// [`BenchStage::EndToEnd`] every predicted frame is also turned into an LP
/// filter. The network runs on one thread.
pub fn bench_model(
    model: &Model<f64>,
    symbols: &SymbolSequence,
    stage: BenchStage,
    max_frames: usize,
    runs: usize,
) -> Result<BenchReport> {
    if stage == BenchStage::Extract {
        return Err(Error::invalid("extract stage does not use a model"));
    }
    let hop = FrameSpec::default().hop as f64;
    let layout = BandLayout::lpcnet_22k(&FrameSpec::default());
    let mut frames = 0;
    let times = time_runs(runs, || {
        let out = model.synthesize(symbols, (0.0, 0.0), max_frames)?;
        frames = out.frames();
        if stage == BenchStage::EndToEnd {
            for f in out.feature_frames()? {
                lp_from_cepstrum(&f.cepstra, &layout, DEFAULT_ORDER)?;
            }
        }
        Ok(())
    })?;
    BenchReport::new(stage, 1, frames as f64 * hop / SAMPLE_RATE as f64, times)
}
