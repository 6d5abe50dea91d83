//! Modular update streams and the plain-text stream file format.
//!
//! ```text
//! n=4 p=2
//! 0 1
//! 3 -1
//! ```
//!
//! The header fixes the dimension and modulus; each following line is one
//! update `<coordinate> <increment>`. Increments are arbitrary integers and
//! are reduced modulo `p` only when applied.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `x_coord <- (x_coord + delta) mod p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Update {
    pub coord: usize,
    pub delta: i64,
}

impl Update {
    pub fn new(coord: usize, delta: i64) -> Self {
        Self { coord, delta }
    }

    /// A single XOR-stream flip of `coord`.
    pub fn flip(coord: usize) -> Self {
        Self { coord, delta: 1 }
    }
}

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("bad header {0:?}: expected \"n=<int> p=<int>\"")]
    BadHeader(String),
    #[error("missing header line")]
    MissingHeader,
    #[error("line {line}: coordinate {coord} out of range for n={n}")]
    Coordinate { line: usize, coord: usize, n: usize },
    #[error("line {line}: cannot parse {text:?} as \"<coordinate> <increment>\"")]
    BadLine { line: usize, text: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A parsed stream file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamFile {
    pub n: usize,
    pub p: u32,
    pub updates: Vec<Update>,
}

fn parse_header(line: &str) -> Result<(usize, u32), StreamError> {
    let bad = || StreamError::BadHeader(line.to_string());
    let mut parts = line.split_whitespace();
    let n = parts
        .next()
        .and_then(|t| t.strip_prefix("n="))
        .and_then(|v| v.parse::<usize>().ok())
        .ok_or_else(bad)?;
    let p = parts
        .next()
        .and_then(|t| t.strip_prefix("p="))
        .and_then(|v| v.parse::<u32>().ok())
        .ok_or_else(bad)?;
    if parts.next().is_some() || p < 2 {
        return Err(bad());
    }
    Ok((n, p))
}

impl StreamFile {
    pub fn parse(text: &str) -> Result<Self, StreamError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(StreamError::MissingHeader)?;
        let (n, p) = parse_header(header)?;
        let mut updates = Vec::new();
        for (i, line) in lines {
            let line_no = i + 1;
            let bad = || StreamError::BadLine {
                line: line_no,
                text: line.to_string(),
            };
            let mut parts = line.split_whitespace();
            let coord = parts.next().and_then(|t| t.parse::<usize>().ok()).ok_or_else(bad)?;
            let delta = parts.next().and_then(|t| t.parse::<i64>().ok()).ok_or_else(bad)?;
            if parts.next().is_some() {
                return Err(bad());
            }
            if coord >= n {
                return Err(StreamError::Coordinate { line: line_no, coord, n });
            }
            updates.push(Update { coord, delta });
        }
        Ok(Self { n, p, updates })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("n={} p={}\n", self.n, self.p);
        for u in &self.updates {
            let _ = writeln!(out, "{} {}", u.coord, u.delta);
        }
        out
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, StreamError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), StreamError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// The vector `x` the stream produces from `0^n`.
    pub fn accumulate(&self) -> Vec<u32> {
        accumulate(self.n, self.p, &self.updates)
    }
}

/// Offline accumulation of updates into `x in Z_p^n`.
pub fn accumulate(n: usize, p: u32, updates: &[Update]) -> Vec<u32> {
    let mut x = vec![0i64; n];
    for u in updates {
        x[u.coord] = (x[u.coord] + u.delta).rem_euclid(p as i64);
    }
    x.into_iter().map(|v| v as u32).collect()
}
