//! Line-oriented text helpers shared by the checkpoint, feature and report formats.
//!
//! Reals are written with `{:?}`, the shortest representation that parses back
//! to the identical `f64`, so every container round-trips bit-exactly.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub(crate) fn write_reals<W: Write>(w: &mut W, values: &[f64]) -> std::io::Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            w.write_all(b" ")?;
        }
        write!(w, "{v:?}")?;
        first = false;
    }
    w.write_all(b"\n")
}

pub(crate) fn parse_real(token: &str) -> Option<f64> {
    token.parse::<f64>().ok()
}

/// Reads non-empty, non-comment lines while tracking line numbers for diagnostics.
pub(crate) struct LineReader<R> {
    inner: R,
    name: String,
    line_no: usize,
    peeked: Option<String>,
}

impl<R: BufRead> LineReader<R> {
    pub(crate) fn new(inner: R, name: impl Into<String>) -> Self {
        Self {
            inner,
            name: name.into(),
            line_no: 0,
            peeked: None,
        }
    }

    pub(crate) fn line_no(&self) -> usize {
        self.line_no
    }

    pub(crate) fn error(&self, message: impl Into<String>) -> Error {
        Error::parse(self.name.clone(), self.line_no, message)
    }

    fn read_raw(&mut self) -> Result<Option<String>> {
        loop {
            let mut buf = String::new();
            if self.inner.read_line(&mut buf)? == 0 {
                return Ok(None);
            }
            self.line_no += 1;
            let trimmed = buf.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            return Ok(Some(trimmed.to_string()));
        }
    }

    pub(crate) fn next_line(&mut self) -> Result<Option<String>> {
        if let Some(line) = self.peeked.take() {
            return Ok(Some(line));
        }
        self.read_raw()
    }

    pub(crate) fn peek(&mut self) -> Result<Option<&str>> {
        if self.peeked.is_none() {
            self.peeked = self.read_raw()?;
        }
        Ok(self.peeked.as_deref())
    }

    pub(crate) fn expect_line(&mut self, what: &str) -> Result<String> {
        self.next_line()?
            .ok_or_else(|| self.error(format!("unexpected end of file, expected {what}")))
    }

    /// Reads a line and requires its first token to equal `keyword`; returns the remaining tokens.
    pub(crate) fn expect_keyword(&mut self, keyword: &str) -> Result<Vec<String>> {
        let line = self.expect_line(keyword)?;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some(t) if t == keyword => Ok(tokens.map(str::to_string).collect()),
            other => Err(self.error(format!(
                "expected `{keyword}`, found `{}`",
                other.unwrap_or("")
            ))),
        }
    }

    pub(crate) fn read_reals(&mut self, expected: usize, what: &str) -> Result<Vec<f64>> {
        let line = self.expect_line(what)?;
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| parse_real(t).ok_or_else(|| self.error(format!("bad real `{t}` in {what}"))))
            .collect::<Result<_>>()?;
        if values.len() != expected {
            return Err(self.error(format!(
                "{what}: expected {expected} values, found {}",
                values.len()
            )));
        }
        Ok(values)
    }

    /// Collects raw lines (blank lines preserved) until a line equal to `terminator`.
    pub(crate) fn read_block(&mut self, terminator: &str) -> Result<String> {
        debug_assert!(self.peeked.is_none());
        let mut out = String::new();
        loop {
            let mut buf = String::new();
            if self.inner.read_line(&mut buf)? == 0 {
                return Err(self.error(format!("unterminated block, expected `{terminator}`")));
            }
            self.line_no += 1;
            if buf.trim() == terminator {
                return Ok(out);
            }
            out.push_str(&buf);
        }
    }
}

pub(crate) fn parse_usize(reader: &LineReader<impl BufRead>, token: &str, what: &str) -> Result<usize> {
    token
        .parse()
        .map_err(|_| reader.error(format!("bad {what} `{token}`")))
}
