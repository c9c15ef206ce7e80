//! File formats.
//!
//! | Magic  | Content                                   | Values      |
//! |--------|-------------------------------------------|-------------|
//! | `LPCF` | 22-value LPCNet feature frames            | `f32` LE    |
//! | `MELF` | 80-channel log mel frames                 | `f32` LE    |
//! | `LPCA` | LP coefficients, reflections, error       | `f32` LE    |
//! | `S2LW` | model configuration and named tensors     | `f64` LE    |
//!
//! Every container starts with its four-byte magic and a `u32` version.
//! Header integers are little-endian `u32`. Writers are deterministic, so
//! decode followed by encode reproduces the input bytes.

mod frames;
mod text;
mod wav;
mod weights;

pub use frames::{FrameFile, FrameKind, LpcFile, LpcRecord, FORMAT_VERSION};
pub use text::{format_alignment_grid, parse_alignment_grid, SymbolTable};
pub use wav::{read_wav, write_wav};
pub use weights::{load_model, save_model, WeightFile};

use std::path::Path;

use crate::error::Error;
use crate::Result;

pub(crate) struct Reader<'a> {
    kind: &'static str,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(kind: &'static str, buf: &'a [u8]) -> Self {
        Self { kind, buf, pos: 0 }
    }

    pub(crate) fn fail(&self, detail: impl Into<String>) -> Error {
        Error::Format {
            kind: self.kind,
            detail: detail.into(),
        }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.fail(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let m = self.take(4)?;
        if m != magic {
            return Err(self.fail(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(m),
                String::from_utf8_lossy(magic)
            )));
        }
        Ok(())
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn version(&mut self) -> Result<()> {
        let v = self.u32()?;
        if v != FORMAT_VERSION {
            return Err(self.fail(format!("unsupported version {v}")));
        }
        Ok(())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(self.fail(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn count_u32(kind: &'static str, n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Format {
        kind,
        detail: format!("count {n} exceeds u32"),
    })
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    Ok(std::fs::read(path)?)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    Ok(std::fs::write(path, bytes)?)
}
