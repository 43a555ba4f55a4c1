//! Dense GF(2) matrices and the eliminations needed to turn a parity-check
//! matrix into a systematic encoder.

use crate::error::{Error, Result};
use std::fmt;

const WORD: usize = 64;

/// Row-major dense bit matrix over GF(2).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMatrix {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    bits: Vec<u64>,
}

impl BinaryMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let words_per_row = cols.div_ceil(WORD);
        BinaryMatrix {
            rows,
            cols,
            words_per_row,
            bits: vec![0; rows * words_per_row],
        }
    }

    pub fn identity(size: usize) -> Self {
        let mut m = Self::zeros(size, size);
        for i in 0..size {
            m.set(i, i, true);
        }
        m
    }

    /// Builds a matrix from 0/1 rows. All rows must have equal length.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut m = Self::zeros(rows.len(), cols);
        for (r, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::Dimension(format!(
                    "row {r} has {} entries, expected {cols}",
                    row.len()
                )));
            }
            for (c, &v) in row.iter().enumerate() {
                match v {
                    0 => {}
                    1 => m.set(r, c, true),
                    other => {
                        return Err(Error::Parse(format!("entry {other} is not a bit")));
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        assert!(r < self.rows && c < self.cols, "({r},{c}) out of bounds");
        (self.bits[r * self.words_per_row + c / WORD] >> (c % WORD)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        assert!(r < self.rows && c < self.cols, "({r},{c}) out of bounds");
        let w = &mut self.bits[r * self.words_per_row + c / WORD];
        if value {
            *w |= 1 << (c % WORD);
        } else {
            *w &= !(1 << (c % WORD));
        }
    }

    fn row_words(&self, r: usize) -> &[u64] {
        &self.bits[r * self.words_per_row..(r + 1) * self.words_per_row]
    }

    /// `row[dst] ^= row[src]`
    fn xor_row_into(&mut self, src: usize, dst: usize) {
        let w = self.words_per_row;
        for k in 0..w {
            let v = self.bits[src * w + k];
            self.bits[dst * w + k] ^= v;
        }
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let w = self.words_per_row;
        for k in 0..w {
            self.bits.swap(a * w + k, b * w + k);
        }
    }

    fn row_is_zero(&self, r: usize) -> bool {
        self.row_words(r).iter().all(|&w| w == 0)
    }

    pub fn row_weight(&self, r: usize) -> usize {
        self.row_words(r).iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn col_weight(&self, c: usize) -> usize {
        (0..self.rows).filter(|&r| self.get(r, c)).count()
    }

    /// Column indices of the ones in row `r`, ascending.
    pub fn row_support(&self, r: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for (k, &word) in self.row_words(r).iter().enumerate() {
            let mut w = word;
            while w != 0 {
                let b = w.trailing_zeros() as usize;
                out.push(k * WORD + b);
                w &= w - 1;
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.bits.iter().all(|&w| w == 0)
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in self.row_support(r) {
                t.set(c, r, true);
            }
        }
        t
    }

    /// GF(2) product `self * other`.
    pub fn mul(&self, other: &BinaryMatrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        let w = out.words_per_row;
        for r in 0..self.rows {
            for k in self.row_support(r) {
                for i in 0..w {
                    out.bits[r * w + i] ^= other.bits[k * w + i];
                }
            }
        }
        Ok(out)
    }

    /// New matrix whose column `i` is column `perm[i]` of `self`.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.cols)?;
        let mut out = Self::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (new, &old) in perm.iter().enumerate() {
                if self.get(r, old) {
                    out.set(r, new, true);
                }
            }
        }
        Ok(out)
    }

    pub fn rank(&self) -> usize {
        let mut m = self.clone();
        let order: Vec<usize> = (0..self.cols).collect();
        m.eliminate(&order).len()
    }

    /// Gauss-Jordan elimination visiting candidate pivot columns in `order`.
    /// Returns `(row, column)` pivots; pivot rows occupy the leading rows.
    fn eliminate(&mut self, order: &[usize]) -> Vec<(usize, usize)> {
        let mut pivots = Vec::new();
        let mut next = 0;
        for &c in order {
            if next == self.rows {
                break;
            }
            let Some(p) = (next..self.rows).find(|&r| self.get(r, c)) else {
                continue;
            };
            self.swap_rows(next, p);
            for r in 0..self.rows {
                if r != next && self.get(r, c) {
                    self.xor_row_into(next, r);
                }
            }
            pivots.push((next, c));
            next += 1;
        }
        pivots
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.get(r, c) as u8).collect())
            .collect()
    }
}

impl fmt::Debug for BinaryMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BinaryMatrix {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows {
            for c in 0..self.cols {
                f.write_str(if self.get(r, c) { "1" } else { "0" })?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

pub(crate) fn check_permutation(perm: &[usize], len: usize) -> Result<()> {
    if perm.len() != len {
        return Err(Error::Dimension(format!(
            "permutation has {} entries, expected {len}",
            perm.len()
        )));
    }
    let mut seen = vec![false; len];
    for &p in perm {
        if p >= len || std::mem::replace(&mut seen[p], true) {
            return Err(Error::Dimension(format!("not a permutation of 0..{len}")));
        }
    }
    Ok(())
}

/// Systematic generator `G = [I | P]` for a full-row-rank parity-check matrix.
///
/// Returns `(G, perm)` where `perm[i]` is the column of `h` that sits at
/// position `i` of the codeword; the first `k = n - m` positions carry data.
/// Pivot columns are chosen from the right so that `perm` is the identity
/// whenever the trailing `m` columns of `h` are already invertible.
pub fn systematic_generator(h: &BinaryMatrix) -> Result<(BinaryMatrix, Vec<usize>)> {
    let (m, n) = (h.rows(), h.cols());
    let mut reduced = h.clone();
    let order: Vec<usize> = (0..n).rev().collect();
    let pivots = reduced.eliminate(&order);
    if pivots.len() != m {
        return Err(Error::RankDeficient {
            rank: pivots.len(),
            expected: m,
        });
    }
    let mut is_pivot = vec![false; n];
    for &(_, c) in &pivots {
        is_pivot[c] = true;
    }
    let data: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();
    let mut parity: Vec<(usize, usize)> = pivots.iter().map(|&(r, c)| (c, r)).collect();
    parity.sort_unstable();
    let k = data.len();
    let mut g = BinaryMatrix::zeros(k, n);
    for (a, &dc) in data.iter().enumerate() {
        g.set(a, a, true);
        for (b, &(_, row)) in parity.iter().enumerate() {
            if reduced.get(row, dc) {
                g.set(a, k + b, true);
            }
        }
    }
    let perm = data
        .iter()
        .copied()
        .chain(parity.iter().map(|&(c, _)| c))
        .collect();
    Ok((g, perm))
}

/// Linear encoder for a code whose first `data_len` coordinates carry data.
///
/// Accepts rank-deficient parity-check matrices provided the trailing parity
/// columns span the whole column space; parity coordinates left without a
/// pivot are fixed to zero.
#[derive(Clone, Debug)]
pub struct PrefixEncoder {
    n: usize,
    data_len: usize,
    /// For each parity coordinate `data_len + b`, the data coordinates XORed into it.
    parity_sources: Vec<Vec<usize>>,
}

impl PrefixEncoder {
    pub fn new(h: &BinaryMatrix, data_len: usize) -> Result<Self> {
        let n = h.cols();
        if data_len > n {
            return Err(Error::Dimension(format!("data length {data_len} > {n}")));
        }
        let mut reduced = h.clone();
        let order: Vec<usize> = (data_len..n).collect();
        let pivots = reduced.eliminate(&order);
        if let Some(r) = (pivots.len()..h.rows()).find(|&r| !reduced.row_is_zero(r)) {
            let _ = r;
            return Err(Error::RankDeficient {
                rank: pivots.len(),
                expected: h.rank(),
            });
        }
        let mut parity_sources = vec![Vec::new(); n - data_len];
        for &(row, col) in &pivots {
            parity_sources[col - data_len] = reduced
                .row_support(row)
                .into_iter()
                .filter(|&c| c < data_len)
                .collect();
        }
        Ok(PrefixEncoder {
            n,
            data_len,
            parity_sources,
        })
    }

    pub fn data_len(&self) -> usize {
        self.data_len
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn parity_sources(&self) -> &[Vec<usize>] {
        &self.parity_sources
    }

    /// Generator matrix (`data_len x n`) realised by this encoder.
    pub fn generator(&self) -> BinaryMatrix {
        let mut g = BinaryMatrix::zeros(self.data_len, self.n);
        for a in 0..self.data_len {
            g.set(a, a, true);
        }
        for (b, src) in self.parity_sources.iter().enumerate() {
            for &a in src {
                g.set(a, self.data_len + b, true);
            }
        }
        g
    }

    /// Encodes byte-string symbols; every symbol must have the same length.
    pub fn encode(&self, data: &[Vec<u8>]) -> Result<Vec<Vec<u8>>> {
        if data.len() != self.data_len {
            return Err(Error::Dimension(format!(
                "{} data symbols, expected {}",
                data.len(),
                self.data_len
            )));
        }
        let width = data.first().map(|s| s.len()).unwrap_or(0);
        if data.iter().any(|s| s.len() != width) {
            return Err(Error::Dimension("data symbols differ in length".into()));
        }
        let mut out = data.to_vec();
        for src in &self.parity_sources {
            let mut sym = vec![0u8; width];
            for &a in src {
                xor_into(&mut sym, &data[a]);
            }
            out.push(sym);
        }
        Ok(out)
    }
}

pub(crate) fn xor_into(dst: &mut [u8], src: &[u8]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d ^= s;
    }
}

/// Column permutation (new position -> old column) that makes the first
/// `data_len` columns of `h` a subset of an information set, using the
/// fewest data/parity swaps. Returns the identity when no swap is needed.
pub fn information_prefix_permutation(h: &BinaryMatrix, data_len: usize) -> Result<Vec<usize>> {
    let n = h.cols();
    if data_len > n {
        return Err(Error::Dimension(format!("data length {data_len} > {n}")));
    }
    let mut reduced = h.clone();
    let parity_order: Vec<usize> = (data_len..n).collect();
    let parity_pivots = reduced.eliminate(&parity_order);
    let mut is_pivot = vec![false; n];
    for &(_, c) in &parity_pivots {
        is_pivot[c] = true;
    }
    // Continue on the leftover rows with data columns, latest first.
    let mut rest = BinaryMatrix::zeros(h.rows() - parity_pivots.len(), n);
    for (i, r) in (parity_pivots.len()..h.rows()).enumerate() {
        for c in reduced.row_support(r) {
            rest.set(i, c, true);
        }
    }
    let data_order: Vec<usize> = (0..data_len).rev().collect();
    let extra: Vec<usize> = rest.eliminate(&data_order).into_iter().map(|(_, c)| c).collect();
    let free_parity: Vec<usize> = (data_len..n).rev().filter(|&c| !is_pivot[c]).collect();
    let mut perm: Vec<usize> = (0..n).collect();
    for (&d, &p) in extra.iter().zip(&free_parity) {
        perm.swap(d, p);
    }
    Ok(perm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> BinaryMatrix {
        let mut m = BinaryMatrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.set(r, c, rng.gen_bool(0.5));
            }
        }
        m
    }

    #[test]
    fn single_check_generator() {
        let h = BinaryMatrix::from_rows(&[[1u8, 1]]).unwrap();
        let (g, perm) = systematic_generator(&h).unwrap();
        assert_eq!(g.to_rows(), vec![vec![1, 1]]);
        assert_eq!(perm, vec![0, 1]);
    }

    #[test]
    fn path_code_is_repetition() {
        let h = BinaryMatrix::from_rows(&[[1u8, 1, 0], [0, 1, 1]]).unwrap();
        let (g, perm) = systematic_generator(&h).unwrap();
        assert_eq!(g.rows(), 1);
        assert_eq!(g.to_rows(), vec![vec![1, 1, 1]]);
        assert_eq!(perm, vec![0, 1, 2]);
    }

    #[test]
    fn rank_deficient_is_rejected() {
        let h = BinaryMatrix::from_rows(&[[1u8, 1, 0], [1, 1, 0]]).unwrap();
        assert!(matches!(
            systematic_generator(&h),
            Err(Error::RankDeficient { rank: 1, expected: 2 })
        ));
    }

    #[test]
    fn random_full_rank_generators_annihilate_h() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut tested = 0;
        while tested < 20 {
            let h = random_matrix(8, 16, &mut rng);
            if h.rank() < 8 {
                continue;
            }
            tested += 1;
            let (g, perm) = systematic_generator(&h).unwrap();
            let hp = h.permute_columns(&perm).unwrap();
            assert!(g.mul(&hp.transpose()).unwrap().is_zero());
            for a in 0..g.rows() {
                for b in 0..g.rows() {
                    assert_eq!(g.get(a, b), a == b);
                }
            }
        }
    }

    #[test]
    fn prefix_encoder_handles_even_column_weight() {
        // Every column has weight 2, so the rows sum to zero.
        let h = BinaryMatrix::from_rows(&[
            [1u8, 0, 1, 1, 0, 0],
            [1, 1, 0, 0, 1, 0],
            [0, 1, 1, 1, 1, 0],
            [0, 0, 0, 0, 0, 0],
        ])
        .unwrap();
        let enc = PrefixEncoder::new(&h, 3).unwrap();
        let g = enc.generator();
        assert!(g.mul(&h.transpose()).unwrap().is_zero());
    }

    #[test]
    fn information_prefix_swaps_dependent_data_columns() {
        // Parity columns 2,3 are identical, so one swap is required.
        let h = BinaryMatrix::from_rows(&[[1u8, 0, 1, 1], [0, 1, 0, 0]]).unwrap();
        assert!(PrefixEncoder::new(&h, 2).is_err());
        let perm = information_prefix_permutation(&h, 2).unwrap();
        let hp = h.permute_columns(&perm).unwrap();
        let enc = PrefixEncoder::new(&hp, 2).unwrap();
        assert!(enc.generator().mul(&hp.transpose()).unwrap().is_zero());
        let moved = perm.iter().enumerate().filter(|(i, &p)| *i != p).count();
        assert_eq!(moved, 2);
    }

    #[test]
    fn rank_of_identity() {
        assert_eq!(BinaryMatrix::identity(70).rank(), 70);
    }
}
