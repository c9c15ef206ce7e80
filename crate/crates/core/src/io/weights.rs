use std::path::Path;

use super::{count_u32, put_u32, read_file, write_file, Reader, FORMAT_VERSION};
use crate::diff::Tensor;
use crate::error::Error;
use crate::model::{Model, ModelConfig, ParamStore};
use crate::Result;

/// Model weight container (`S2LW`): a metadata string followed by named
/// `f64` tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFile {
    /// Model configuration as TOML.
    pub metadata: String,
    pub tensors: ParamStore<f64>,
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

impl WeightFile {
    pub fn from_model(model: &Model<f64>) -> Self {
        Self {
            metadata: model.config().to_toml(),
            tensors: model.params().clone(),
        }
    }

    pub fn into_model(self) -> Result<Model<f64>> {
        let config = ModelConfig::from_toml(&self.metadata)?;
        Model::from_params(config, self.tensors)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"S2LW");
        put_u32(&mut out, FORMAT_VERSION);
        put_str(&mut out, &self.metadata);
        put_u32(&mut out, self.tensors.len() as u32);
        for (name, t) in self.tensors.iter() {
            put_str(&mut out, name);
            put_u32(&mut out, t.rows() as u32);
            put_u32(&mut out, t.cols() as u32);
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new("S2LW", bytes);
        r.magic(b"S2LW")?;
        r.version()?;
        let read_str = |r: &mut Reader| -> Result<String> {
            let n = r.u32()? as usize;
            let b = r.take(n)?;
            String::from_utf8(b.to_vec()).map_err(|_| r.fail("string is not UTF-8"))
        };
        let metadata = read_str(&mut r)?;
        let n = r.u32()?;
        let mut tensors = ParamStore::new();
        for _ in 0..n {
            let name = read_str(&mut r)?;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let count = rows
                .checked_mul(cols)
                .filter(|c| c.saturating_mul(8) <= bytes.len())
                .ok_or_else(|| r.fail(format!("tensor `{name}` is larger than the file")))?;
            let data = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            let t = Tensor::new(rows, cols, data).map_err(|e| r.fail(format!("`{name}`: {e}")))?;
            if tensors.get(&name).is_ok() {
                return Err(r.fail(format!("duplicate tensor `{name}`")));
            }
            tensors.insert(name, t);
        }
        r.finish()?;
        Ok(Self { metadata, tensors })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&read_file(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        count_u32("S2LW", self.tensors.len())?;
        write_file(path, &self.encode())
    }
}

pub fn save_model(path: &Path, model: &Model<f64>) -> Result<()> {
    WeightFile::from_model(model).write(path)
}

pub fn load_model(path: &Path) -> Result<Model<f64>> {
    let wf = WeightFile::read(path).map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(
            io.kind(),
            format!("cannot read weights {}: {io}", path.display()),
        )),
        other => other,
    })?;
    wf.into_model()
}
