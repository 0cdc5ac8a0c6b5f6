//! Flat named-tensor text format: one tensor per line,
//! `name rows cols v0 v1 ...` with values in row-major order.
//!
//! Values are written in shortest round-trip exponent form, so reading a file
//! back reproduces the weights bit for bit.

use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::DMatrix;

use crate::{EmbedError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl Tensor {
    pub fn from_matrix(name: impl Into<String>, m: &DMatrix<f64>) -> Self {
        let values = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect();
        Self { name: name.into(), rows: m.nrows(), cols: m.ncols(), values }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.values)
    }
}

pub fn write_tensors(tensors: &[Tensor], mut out: impl Write) -> Result<()> {
    for t in tensors {
        if t.name.is_empty() || t.name.contains(char::is_whitespace) {
            return Err(EmbedError::Format(format!("tensor name '{}' must be non-empty without spaces", t.name)));
        }
        write!(out, "{} {} {}", t.name, t.rows, t.cols)?;
        for v in &t.values {
            write!(out, " {v:e}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_tensors(input: impl Read) -> Result<Vec<Tensor>> {
    let mut out = Vec::new();
    for (n, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| EmbedError::Format(format!("tensor line {}: {what}", n + 1));
        let mut it = line.split_ascii_whitespace();
        let name = it.next().ok_or_else(|| bad("missing name"))?.to_string();
        let rows: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad rows"))?;
        let cols: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad cols"))?;
        let values = it.map(|s| s.parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>().map_err(|_| bad("bad value"))?;
        if values.len() != rows * cols {
            return Err(bad(&format!("{} values for shape {rows}x{cols}", values.len())));
        }
        out.push(Tensor { name, rows, cols, values });
    }
    Ok(out)
}

/// Looks up a tensor by name.
pub fn find<'a>(tensors: &'a [Tensor], name: &str) -> Result<&'a Tensor> {
    tensors.iter().find(|t| t.name == name).ok_or_else(|| EmbedError::Format(format!("missing tensor '{name}'")))
}
