//! Line-oriented text checkpoints.
//!
//! A checkpoint is a magic header line followed by `key value...` lines.
//! Matrices are written as `name rows cols` followed by one line per row.
//! Floats use Rust's shortest round-trip formatting, so save/load is exact.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub(crate) struct Writer {
    out: String,
}

impl Writer {
    pub fn new(magic: &str) -> Self {
        Writer {
            out: format!("{magic}\n"),
        }
    }

    pub fn field(&mut self, key: &str, values: &[String]) {
        let _ = writeln!(self.out, "{key} {}", values.join(" "));
    }

    pub fn tensor(&mut self, name: &str, t: &Tensor) {
        let _ = writeln!(self.out, "{name} {} {}", t.rows(), t.cols());
        for r in 0..t.rows() {
            let row: Vec<String> = t.row(r).iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(self.out, "{}", row.join(" "));
        }
    }

    pub fn finish(self) -> String {
        self.out
    }
}

pub(crate) struct Reader<'s> {
    lines: std::iter::Enumerate<std::str::Lines<'s>>,
}

fn bad(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Checkpoint(format!("line {line}: {msg}"))
}

impl<'s> Reader<'s> {
    pub fn new(text: &'s str, magic: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, first)) if first.trim() == magic => Ok(Reader { lines }),
            Some((_, first)) => Err(Error::Checkpoint(format!(
                "expected header {magic:?}, found {first:?}"
            ))),
            None => Err(Error::Checkpoint("empty checkpoint".into())),
        }
    }

    fn next_line(&mut self) -> Result<(usize, &'s str)> {
        self.lines
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| Error::Checkpoint("unexpected end of checkpoint".into()))
    }

    /// Reads `key v1 v2 ...` and returns the values.
    pub fn field(&mut self, key: &str) -> Result<Vec<&'s str>> {
        let (no, line) = self.next_line()?;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some(k) if k == key => Ok(toks.collect()),
            other => Err(bad(no, format!("expected {key:?}, found {other:?}"))),
        }
    }

    pub fn scalar<T: FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let vals = self.field(key)?;
        match vals.as_slice() {
            [v] => v
                .parse()
                .map_err(|e| Error::Checkpoint(format!("{key}: {e}"))),
            _ => Err(Error::Checkpoint(format!("{key}: expected one value"))),
        }
    }

    pub fn tensor(&mut self, name: &str) -> Result<Tensor> {
        let dims = self.field(name)?;
        let [rows, cols] = dims.as_slice() else {
            return Err(Error::Checkpoint(format!("{name}: expected rows and cols")));
        };
        let parse_dim = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::Checkpoint(format!("{name}: {e}")))
        };
        let (rows, cols) = (parse_dim(rows)?, parse_dim(cols)?);
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (no, line) = self.next_line()?;
            let row = line
                .split_whitespace()
                .map(f64::from_str)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(no, e))?;
            if row.len() != cols {
                return Err(bad(
                    no,
                    format!("{name}: expected {cols} values, found {}", row.len()),
                ));
            }
            data.extend(row);
        }
        let t = Tensor::from_vec(rows, cols, data)?;
        if !t.is_finite() {
            return Err(Error::Checkpoint(format!("{name}: non-finite values")));
        }
        Ok(t)
    }
}
