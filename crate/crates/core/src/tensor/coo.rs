//! Plain-text coordinate format.
//!
//! ```text
//! # shape: 4x4x3x10
//! 1,1,1,1,2.5
//! 3,2,1,7,1
//! ```
//!
//! Indices are one-based. Further `#` lines and blank lines are ignored.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{Shape, SparseTensor};

const SHAPE_PREFIX: &str = "# shape:";

pub fn write_coo<W: Write>(mut w: W, t: &SparseTensor) -> std::io::Result<()> {
    writeln!(w, "{SHAPE_PREFIX} {}", t.shape())?;
    let mut line = String::new();
    for (index, v) in t.iter() {
        line.clear();
        for i in index {
            line.push_str(&(i + 1).to_string());
            line.push(',');
        }
        line.push_str(&v.to_string());
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_coo<R: BufRead>(r: R) -> Result<SparseTensor> {
    let mut shape: Option<Shape> = None;
    let mut entries = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix(SHAPE_PREFIX) {
            if shape.is_some() {
                return Err(Error::Parse { line: lineno, msg: "repeated shape header".into() });
            }
            shape = Some(rest.trim().parse().map_err(|e: Error| Error::Parse {
                line: lineno,
                msg: e.to_string(),
            })?);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let Some(shape) = shape.as_ref() else {
            return Err(Error::Parse { line: lineno, msg: "entry before `# shape:` header".into() });
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != shape.order() + 1 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {} fields, found {}", shape.order() + 1, fields.len()),
            });
        }
        let mut index = Vec::with_capacity(shape.order());
        for f in &fields[..shape.order()] {
            let i: usize = f
                .parse()
                .map_err(|_| Error::Parse { line: lineno, msg: format!("bad index {f:?}") })?;
            if i == 0 {
                return Err(Error::Parse { line: lineno, msg: "indices are one-based".into() });
            }
            index.push(i - 1);
        }
        let last = fields[shape.order()];
        let v: f64 = last
            .parse()
            .map_err(|_| Error::Parse { line: lineno, msg: format!("bad value {last:?}") })?;
        entries.push((index, v));
    }
    let shape = shape.ok_or(Error::Parse { line: 0, msg: "missing `# shape:` header".into() })?;
    SparseTensor::new(shape, entries)
}

pub fn write_coo_file(path: &Path, t: &SparseTensor) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_coo(&mut w, t).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_coo_file(path: &Path) -> Result<SparseTensor> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_coo(BufReader::new(f))
}
