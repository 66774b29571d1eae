//! Plain-text chain files.
//!
//! ```text
//! # comment
//! states 3
//! m: 1 1 1
//! Q:
//! -3 1 2
//! 1 -1 0
//! 2 0 -2
//! F: 1 2
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{ChainError, SubsetSpec, SymmetricChain};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

/// Parsed chain file: the chain and the optional trace set.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainFile<T> {
    pub chain: SymmetricChain<T>,
    pub subset: Option<SubsetSpec>,
}

fn perr(line: usize, message: impl Into<String>) -> ChainError {
    ChainError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_values<T: Scalar>(line: usize, text: &str) -> Result<Vec<T>, ChainError> {
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<T>()
                .map_err(|_| perr(line, format!("cannot parse number `{tok}`")))
        })
        .collect()
}

pub fn parse_chain<T: Scalar>(text: &str) -> Result<ChainFile<T>, ChainError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (ln, head) = lines.next().ok_or_else(|| perr(0, "empty chain file"))?;
    let n: usize = head
        .strip_prefix("states")
        .ok_or_else(|| perr(ln, "expected `states n`"))?
        .trim()
        .parse()
        .map_err(|_| perr(ln, "state count is not an integer"))?;
    if n == 0 {
        return Err(perr(ln, "state count must be positive"));
    }

    let (ln, mline) = lines.next().ok_or_else(|| perr(ln, "missing `m:` line"))?;
    let weights: Vec<T> = parse_values(
        ln,
        mline
            .strip_prefix("m:")
            .ok_or_else(|| perr(ln, "expected `m: ...`"))?,
    )?;
    if weights.len() != n {
        return Err(perr(ln, format!("expected {n} weights, found {}", weights.len())));
    }

    let (ln, qline) = lines.next().ok_or_else(|| perr(ln, "missing `Q:` line"))?;
    if qline != "Q:" {
        return Err(perr(ln, "expected `Q:`"));
    }
    let mut rows = Vec::with_capacity(n);
    let mut last = ln;
    for _ in 0..n {
        let (ln, row) = lines
            .next()
            .ok_or_else(|| perr(last, format!("expected {n} rate rows")))?;
        let vals: Vec<T> = parse_values(ln, row)?;
        if vals.len() != n {
            return Err(perr(ln, format!("expected {n} rates, found {}", vals.len())));
        }
        rows.push(vals);
        last = ln;
    }
    let subset = match lines.next() {
        None => None,
        Some((ln, fline)) => {
            let body = fline
                .strip_prefix("F:")
                .ok_or_else(|| perr(ln, "expected `F: ...` or end of file"))?;
            let idx = body
                .split_whitespace()
                .map(|t| {
                    t.parse::<usize>()
                        .map_err(|_| perr(ln, format!("bad state index `{t}`")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            if let Some((ln, _)) = lines.next() {
                return Err(perr(ln, "trailing content after `F:`"));
            }
            Some(SubsetSpec::new(n, &idx)?)
        }
    };
    let rates = DenseMatrix::from_rows(&rows).map_err(ChainError::from)?;
    let chain = SymmetricChain::validate(rates, weights)?;
    Ok(ChainFile { chain, subset })
}

/// Writes a chain in the format read by [`parse_chain`]. Numbers use their
/// `Display` form, which round-trips for `f64`, `f32` and rationals.
pub fn format_chain<T: Scalar>(chain: &SymmetricChain<T>, subset: Option<&SubsetSpec>) -> String {
    let n = chain.len();
    let mut s = String::new();
    let join = |v: &[T]| {
        v.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let _ = writeln!(s, "states {n}");
    let _ = writeln!(s, "m: {}", join(chain.weights()));
    let _ = writeln!(s, "Q:");
    for x in 0..n {
        let _ = writeln!(s, "{}", join(chain.rates().row(x)));
    }
    if let Some(f) = subset {
        let idx: Vec<String> = f.trace().iter().map(ToString::to_string).collect();
        let _ = writeln!(s, "F: {}", idx.join(" "));
    }
    s
}

#[derive(Debug, thiserror::Error)]
pub enum ChainFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Chain { path: String, source: ChainError },
}

pub fn read_chain_file<T: Scalar>(path: &Path) -> Result<ChainFile<T>, ChainFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| ChainFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_chain(&text).map_err(|source| ChainFileError::Chain {
        path: path.display().to_string(),
        source,
    })
}
