//! MacKay's alist format for sparse parity-check matrices.
//!
//! ```text
//! n m
//! max_col_weight max_row_weight
//! col weights (n entries)
//! row weights (m entries)
//! n lines: 1-based row indices of each column
//! m lines: 1-based column indices of each row
//! ```

use crate::error::{Error, Result};
use crate::gf2::BinaryMatrix;
use std::fmt::Write;

pub fn to_alist(h: &BinaryMatrix) -> String {
    let (m, n) = (h.rows(), h.cols());
    let t = h.transpose();
    let col_w: Vec<usize> = (0..n).map(|c| t.row_weight(c)).collect();
    let row_w: Vec<usize> = (0..m).map(|r| h.row_weight(r)).collect();
    let mut s = String::new();
    let _ = writeln!(s, "{n} {m}");
    let _ = writeln!(
        s,
        "{} {}",
        col_w.iter().max().unwrap_or(&0),
        row_w.iter().max().unwrap_or(&0)
    );
    let join = |v: &[usize]| {
        if v.is_empty() {
            return "0".to_string();
        }
        v.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let _ = writeln!(s, "{}", join(&col_w));
    let _ = writeln!(s, "{}", join(&row_w));
    for c in 0..n {
        let idx: Vec<usize> = t.row_support(c).iter().map(|r| r + 1).collect();
        let _ = writeln!(s, "{}", join(&idx));
    }
    for r in 0..m {
        let idx: Vec<usize> = h.row_support(r).iter().map(|c| c + 1).collect();
        let _ = writeln!(s, "{}", join(&idx));
    }
    s
}

pub fn from_alist(text: &str) -> Result<BinaryMatrix> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let mut next_nums = |what: &str| -> Result<Vec<usize>> {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("alist truncated before {what}")))?;
        line.split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|e| Error::Parse(format!("{what}: `{t}`: {e}")))
            })
            .collect()
    };
    let dims = next_nums("dimensions")?;
    let [n, m] = dims[..] else {
        return Err(Error::Parse("first line must hold `n m`".into()));
    };
    let _max = next_nums("max weights")?;
    let col_w = next_nums("column weights")?;
    let row_w = next_nums("row weights")?;
    if col_w.len() != n || row_w.len() != m {
        return Err(Error::Parse("weight vectors do not match dimensions".into()));
    }
    let mut h = BinaryMatrix::zeros(m, n);
    for (c, &w) in col_w.iter().enumerate() {
        // Zero-padded entries (weight < max) are allowed and skipped.
        let idx: Vec<usize> = next_nums("column list")?.into_iter().filter(|&x| x != 0).collect();
        if idx.len() != w {
            return Err(Error::Parse(format!("column {} lists {} rows, weight {w}", c + 1, idx.len())));
        }
        for r in idx {
            if r > m {
                return Err(Error::Parse(format!("row index {r} out of range")));
            }
            h.set(r - 1, c, true);
        }
    }
    for (r, &w) in row_w.iter().enumerate() {
        let idx: Vec<usize> = next_nums("row list")?.into_iter().filter(|&x| x != 0).collect();
        if idx.len() != w {
            return Err(Error::Parse(format!("row {} lists {} columns, weight {w}", r + 1, idx.len())));
        }
        let mut cols: Vec<usize> = idx.iter().map(|c| c - 1).collect();
        cols.sort_unstable();
        if cols != h.row_support(r) {
            return Err(Error::Parse(format!(
                "row {} inconsistent with column lists",
                r + 1
            )));
        }
    }
    Ok(h)
}
