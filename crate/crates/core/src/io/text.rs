use std::collections::HashMap;
use std::path::Path;

use crate::diff::Tensor;
use crate::error::Error;
use crate::{Real, Result};

/// Symbol names; the line number of a name is its id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolTable {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl SymbolTable {
    pub fn new(symbols: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            if s.is_empty() || s.chars().any(char::is_whitespace) {
                return Err(Error::Format {
                    kind: "symbol table",
                    detail: format!("line {}: symbols must be non-empty without spaces", i + 1),
                });
            }
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::Format {
                    kind: "symbol table",
                    detail: format!("line {}: duplicate symbol `{s}`", i + 1),
                });
            }
        }
        if symbols.is_empty() {
            return Err(Error::Format {
                kind: "symbol table",
                detail: "no symbols".into(),
            });
        }
        Ok(Self { symbols, index })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::new(text.lines().map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = self.symbols.join("\n");
        s.push('\n');
        s
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.symbols.get(id).map(String::as_str)
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Ids of whitespace-separated symbol names.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.split_whitespace()
            .map(|w| {
                self.id(w)
                    .ok_or_else(|| Error::invalid(format!("unknown symbol `{w}`")))
            })
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        let names = ids
            .iter()
            .map(|&i| {
                self.name(i)
                    .ok_or_else(|| Error::invalid(format!("symbol id {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(names.join(" "))
    }
}

/// One line per decoder step, one value per encoder position.
pub fn format_alignment_grid<T: Real>(alignment: &Tensor<T>) -> String {
    let mut s = String::new();
    for r in 0..alignment.rows() {
        let line: Vec<String> = alignment
            .row_slice(r)
            .iter()
            .map(|v| format!("{}", v.to_f64_lossy()))
            .collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

pub fn parse_alignment_grid(text: &str) -> Result<Tensor<f64>> {
    let fail = |detail: String| Error::Format {
        kind: "alignment grid",
        detail,
    };
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        let row = line
            .split_whitespace()
            .map(|w| w.parse::<f64>().map_err(|e| fail(format!("line {}: {e}", i + 1))))
            .collect::<Result<Vec<_>>>()?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(fail(format!("line {} has {} values, expected {c}", i + 1, row.len())))
            }
            _ => {}
        }
        values.extend(row);
        rows += 1;
    }
    Tensor::new(rows, cols.unwrap_or(0), values)
}
