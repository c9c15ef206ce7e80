use std::path::Path;

use super::{count_u32, put_u32, read_file, write_file, Reader};
use crate::error::Error;
use crate::lp::LpFilter;
use crate::signal::{FeatureFrame, FrameSpec, MelFrame, N_FEATURES, N_MEL};
use crate::{Real, Result, SAMPLE_RATE};

pub const FORMAT_VERSION: u32 = 1;

/// Which frame container a [`FrameFile`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    /// LPCNet features.
    Lpcf,
    /// Log mel-spectra.
    Melf,
}

impl FrameKind {
    fn magic(self) -> &'static [u8; 4] {
        match self {
            FrameKind::Lpcf => b"LPCF",
            FrameKind::Melf => b"MELF",
        }
    }

    fn name(self) -> &'static str {
        match self {
            FrameKind::Lpcf => "LPCF",
            FrameKind::Melf => "MELF",
        }
    }

    pub fn width(self) -> usize {
        match self {
            FrameKind::Lpcf => N_FEATURES,
            FrameKind::Melf => N_MEL,
        }
    }
}

/// Frame-major `f32` matrix with sample rate and hop metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFile {
    pub kind: FrameKind,
    pub sample_rate: u32,
    pub hop: u32,
    values: Vec<f32>,
}

impl FrameFile {
    pub fn new(kind: FrameKind, values: Vec<f32>) -> Result<Self> {
        if values.len() % kind.width() != 0 {
            return Err(Error::Format {
                kind: kind.name(),
                detail: format!("{} values is not a multiple of {}", values.len(), kind.width()),
            });
        }
        Ok(Self {
            kind,
            sample_rate: SAMPLE_RATE,
            hop: FrameSpec::default().hop as u32,
            values,
        })
    }

    /// Features as stored; with `pitch_index` the log-pitch slot holds the
    /// quantizer level instead.
    pub fn from_features<T: Real>(frames: &[FeatureFrame<T>], pitch_index: Option<&[u8]>) -> Result<Self> {
        if let Some(idx) = pitch_index {
            if idx.len() != frames.len() {
                return Err(Error::invalid(format!(
                    "{} pitch indices for {} frames",
                    idx.len(),
                    frames.len()
                )));
            }
        }
        let mut values = Vec::with_capacity(frames.len() * N_FEATURES);
        for (i, f) in frames.iter().enumerate() {
            let mut a = f.to_array();
            if let Some(idx) = pitch_index {
                a[N_FEATURES - 2] = T::lit(idx[i] as f64);
            }
            values.extend(a.iter().map(|v| v.to_f64_lossy() as f32));
        }
        Self::new(FrameKind::Lpcf, values)
    }

    pub fn from_mel<T: Real>(frames: &[MelFrame<T>]) -> Result<Self> {
        let values = frames
            .iter()
            .flat_map(|f| f.log_energies.iter().map(|v| v.to_f64_lossy() as f32))
            .collect();
        Self::new(FrameKind::Melf, values)
    }

    pub fn width(&self) -> usize {
        self.kind.width()
    }

    pub fn n_frames(&self) -> usize {
        self.values.len() / self.width()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        let w = self.width();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 4 * self.values.len());
        out.extend_from_slice(self.kind.magic());
        put_u32(&mut out, FORMAT_VERSION);
        put_u32(&mut out, self.width() as u32);
        put_u32(&mut out, self.sample_rate);
        put_u32(&mut out, self.hop);
        put_u32(&mut out, self.n_frames() as u32);
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(kind: FrameKind, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(kind.name(), bytes);
        r.magic(kind.magic())?;
        r.version()?;
        let width = r.u32()? as usize;
        if width != kind.width() {
            return Err(r.fail(format!("{width} values per frame, expected {}", kind.width())));
        }
        let sample_rate = r.u32()?;
        let hop = r.u32()?;
        let n = r.u32()? as usize;
        let count = n
            .checked_mul(width)
            .ok_or_else(|| r.fail("frame count overflows"))?;
        if bytes.len().saturating_sub(24) / 4 < count {
            return Err(r.fail(format!("header promises {n} frames, data is shorter")));
        }
        let values = (0..count).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Ok(Self {
            kind,
            sample_rate,
            hop,
            values,
        })
    }

    pub fn read(kind: FrameKind, path: &Path) -> Result<Self> {
        Self::decode(kind, &read_file(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        count_u32(self.kind.name(), self.n_frames())?;
        write_file(path, &self.encode())
    }
}

/// LP analysis of one frame as stored in `LPCA`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpcRecord {
    pub coefficients: Vec<f32>,
    pub reflection: Vec<f32>,
    pub error: f32,
}

impl<T: Real> From<&LpFilter<T>> for LpcRecord {
    fn from(f: &LpFilter<T>) -> Self {
        let c = |v: &[T]| v.iter().map(|x| x.to_f64_lossy() as f32).collect();
        Self {
            coefficients: c(&f.coefficients),
            reflection: c(&f.reflection),
            error: f.prediction_error.to_f64_lossy() as f32,
        }
    }
}

/// Per-frame LP coefficients (`LPCA`).
#[derive(Debug, Clone, PartialEq)]
pub struct LpcFile {
    pub order: usize,
    pub records: Vec<LpcRecord>,
}

impl LpcFile {
    pub fn new(order: usize, records: Vec<LpcRecord>) -> Result<Self> {
        if records
            .iter()
            .any(|r| r.coefficients.len() != order || r.reflection.len() != order)
        {
            return Err(Error::Format {
                kind: "LPCA",
                detail: format!("every record needs {order} coefficients and reflections"),
            });
        }
        Ok(Self { order, records })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"LPCA");
        put_u32(&mut out, FORMAT_VERSION);
        put_u32(&mut out, self.order as u32);
        put_u32(&mut out, self.records.len() as u32);
        for r in &self.records {
            for v in r.coefficients.iter().chain(&r.reflection).chain([&r.error]) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new("LPCA", bytes);
        r.magic(b"LPCA")?;
        r.version()?;
        let order = r.u32()? as usize;
        let n = r.u32()? as usize;
        let per = 2 * order + 1;
        if (bytes.len().saturating_sub(16) / 4) / per < n {
            return Err(r.fail(format!("header promises {n} frames, data is shorter")));
        }
        let mut records = Vec::with_capacity(n);
        for _ in 0..n {
            let coefficients = (0..order).map(|_| r.f32()).collect::<Result<_>>()?;
            let reflection = (0..order).map(|_| r.f32()).collect::<Result<_>>()?;
            records.push(LpcRecord {
                coefficients,
                reflection,
                error: r.f32()?,
            });
        }
        r.finish()?;
        Ok(Self { order, records })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&read_file(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        count_u32("LPCA", self.records.len())?;
        write_file(path, &self.encode())
    }
}
