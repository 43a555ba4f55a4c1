//! Coded Merkle trees: construction, Merkle proofs, symbol verification and
//! the hash-aware peeling decoder.
//!
//! Layers are numbered `1..=l` from the top (just below the root) to the
//! base; symbol indices are 0-based.

use crate::error::{Error, Result};
use crate::gf2::{xor_into, BinaryMatrix, PrefixEncoder};
use crate::tanner::TannerGraph;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::VecDeque;

pub const HASH_LEN: usize = 32;
pub type Hash = [u8; HASH_LEN];

pub fn hash(bytes: &[u8]) -> Hash {
    Sha256::digest(bytes).into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CmtParams {
    /// Base-layer code length.
    pub n_l: usize,
    pub rate: f64,
    /// Hashes aggregated into each parent data symbol.
    pub q: usize,
    /// Number of coded layers.
    pub l: usize,
    /// Maximum block size in bytes.
    pub block_size: usize,
}

fn exact_mul(rate: f64, n: usize) -> Option<usize> {
    let v = rate * n as f64;
    let r = v.round();
    ((v - r).abs() < 1e-9).then_some(r as usize)
}

fn exact_div(n: usize, rate: f64) -> Option<usize> {
    let v = n as f64 / rate;
    let r = v.round();
    ((v - r).abs() < 1e-9).then_some(r as usize)
}

impl CmtParams {
    pub fn new(n_l: usize, rate: f64, q: usize, l: usize, block_size: usize) -> Result<Self> {
        let p = CmtParams {
            n_l,
            rate,
            q,
            l,
            block_size,
        };
        p.validate()?;
        Ok(p)
    }

    /// Layer lengths `n_1..n_l`.
    pub fn layer_lengths(&self) -> Result<Vec<usize>> {
        let bad = |msg: String| Error::InvalidParams(msg);
        if !(self.rate > 0.0 && self.rate < 1.0) {
            return Err(bad(format!("rate {} outside (0, 1)", self.rate)));
        }
        if self.l == 0 || self.q == 0 {
            return Err(bad("need at least one layer and q >= 1".into()));
        }
        if self.q as f64 * self.rate <= 1.0 {
            return Err(bad(format!("qR = {} must exceed 1", self.q as f64 * self.rate)));
        }
        let mut lens = vec![self.n_l];
        let mut n = self.n_l;
        for _ in 1..self.l {
            if !n.is_multiple_of(self.q) {
                return Err(bad(format!("layer of length {n} not divisible by q = {}", self.q)));
            }
            let s_parent = n / self.q;
            n = exact_div(s_parent, self.rate)
                .ok_or_else(|| bad(format!("parent layer length {s_parent}/R not integral")))?;
            lens.push(n);
        }
        lens.reverse();
        Ok(lens)
    }

    pub fn validate(&self) -> Result<()> {
        let lens = self.layer_lengths()?;
        let mut data = Vec::new();
        for &n in &lens {
            let s = exact_mul(self.rate, n).ok_or_else(|| {
                Error::InvalidParams(format!("R * {n} not integral"))
            })?;
            if s == 0 || s == n {
                return Err(Error::InvalidParams(format!("layer of length {n} has no data or no parity")));
            }
            data.push(s);
        }
        if lens[0] <= 1 {
            return Err(Error::InvalidParams("root needs t > 1 hashes".into()));
        }
        // Proof indices taken directly from the base index must stay on the
        // Merkle path, which needs s_{j-1} to divide both s_j and p_j.
        for j in 1..lens.len() {
            let (sp, s, p) = (data[j - 1], data[j], lens[j] - data[j]);
            if s % sp != 0 || p % sp != 0 {
                return Err(Error::InvalidParams(format!(
                    "s_{} = {sp} must divide s_{} = {s} and p_{} = {p}",
                    j,
                    j + 1,
                    j + 1
                )));
            }
        }
        Ok(())
    }

    /// `n_j` for 1-based layer `j`.
    pub fn n(&self, j: usize) -> usize {
        self.layer_lengths().expect("validated params")[j - 1]
    }

    /// `s_j = R n_j`.
    pub fn s(&self, j: usize) -> usize {
        exact_mul(self.rate, self.n(j)).expect("validated params")
    }

    /// `p_j = (1 - R) n_j`.
    pub fn p(&self, j: usize) -> usize {
        self.n(j) - self.s(j)
    }

    pub fn t(&self) -> usize {
        self.n(1)
    }

    /// Base-layer symbol size in bytes (block plus 8-byte length prefix).
    pub fn base_symbol_size(&self) -> usize {
        (self.block_size + 8).div_ceil(self.s(self.l)).max(1)
    }

    pub fn symbol_size(&self, j: usize) -> usize {
        if j == self.l {
            self.base_symbol_size()
        } else {
            self.q * HASH_LEN
        }
    }

    /// Indices `(data, parity)` in layer `jp` hit by the proof of symbol `i`
    /// of a lower layer.
    pub fn proof_indices(&self, jp: usize, i: usize) -> (usize, usize) {
        let (s, p) = (self.s(jp), self.p(jp));
        (i % s, s + i % p)
    }
}

/// Per-layer parity-check matrices with their encoders, top to base.
#[derive(Clone, Debug)]
pub struct CmtCodes {
    pub parity_checks: Vec<BinaryMatrix>,
    graphs: Vec<TannerGraph>,
    encoders: Vec<PrefixEncoder>,
}

impl CmtCodes {
    pub fn new(params: &CmtParams, parity_checks: Vec<BinaryMatrix>) -> Result<Self> {
        params.validate()?;
        if parity_checks.len() != params.l {
            return Err(Error::Dimension(format!(
                "{} codes for {} layers",
                parity_checks.len(),
                params.l
            )));
        }
        let mut encoders = Vec::new();
        for (j, h) in parity_checks.iter().enumerate() {
            if h.cols() != params.n(j + 1) {
                return Err(Error::Dimension(format!(
                    "layer {} code has {} columns, expected {}",
                    j + 1,
                    h.cols(),
                    params.n(j + 1)
                )));
            }
            encoders.push(PrefixEncoder::new(h, params.s(j + 1))?);
        }
        let graphs = parity_checks.iter().map(TannerGraph::from_matrix).collect();
        Ok(CmtCodes {
            parity_checks,
            graphs,
            encoders,
        })
    }

    pub fn graph(&self, j: usize) -> &TannerGraph {
        &self.graphs[j - 1]
    }

    pub fn max_cn_degree(&self, j: usize) -> usize {
        self.graphs[j - 1].max_cn_degree()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodedMerkleTree {
    /// `layers[j - 1]` holds the `n_j` symbols of layer `j`.
    pub layers: Vec<Vec<Vec<u8>>>,
    pub root: Vec<Hash>,
}

impl CodedMerkleTree {
    pub fn layer(&self, j: usize) -> &[Vec<u8>] {
        &self.layers[j - 1]
    }

    pub fn root_hex(&self) -> Vec<String> {
        self.root.iter().map(hex::encode).collect()
    }
}

/// Length-prefixed, zero-padded base-layer data symbols.
pub fn pad_block(block: &[u8], params: &CmtParams) -> Result<Vec<Vec<u8>>> {
    if block.len() > params.block_size {
        return Err(Error::InvalidParams(format!(
            "block of {} bytes exceeds block size {}",
            block.len(),
            params.block_size
        )));
    }
    let (k, c) = (params.s(params.l), params.base_symbol_size());
    let mut bytes = (block.len() as u64).to_le_bytes().to_vec();
    bytes.extend_from_slice(block);
    bytes.resize(k * c, 0);
    Ok(bytes.chunks(c).map(<[u8]>::to_vec).collect())
}

/// Inverse of [`pad_block`].
pub fn unpad_block(data: &[Vec<u8>]) -> Result<Vec<u8>> {
    let bytes: Vec<u8> = data.concat();
    if bytes.len() < 8 {
        return Err(Error::MalformedInput("base layer shorter than length prefix".into()));
    }
    let len = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    if 8 + len > bytes.len() {
        return Err(Error::MalformedInput(format!("length prefix {len} exceeds data")));
    }
    Ok(bytes[8..8 + len].to_vec())
}

/// Data symbols of layer `j - 1` from the coded symbols of layer `j`.
pub fn parent_data(params: &CmtParams, j: usize, symbols: &[Vec<u8>]) -> Vec<Vec<u8>> {
    let s_parent = params.s(j - 1);
    let mut data = vec![Vec::with_capacity(params.q * HASH_LEN); s_parent];
    for (x, sym) in symbols.iter().enumerate() {
        data[x % s_parent].extend_from_slice(&hash(sym));
    }
    data
}

pub fn build_cmt(block: &[u8], params: &CmtParams, codes: &CmtCodes) -> Result<CodedMerkleTree> {
    let l = params.l;
    let mut layers = vec![Vec::new(); l];
    layers[l - 1] = codes.encoders[l - 1].encode(&pad_block(block, params)?)?;
    for j in (2..=l).rev() {
        let data = parent_data(params, j, &layers[j - 1]);
        layers[j - 2] = codes.encoders[j - 2].encode(&data)?;
    }
    Ok(tree_from_layers(layers))
}

/// Recomputes the root over given layers without re-encoding; a dishonest
/// producer uses this to commit to an incorrectly coded layer.
pub fn tree_from_layers(layers: Vec<Vec<Vec<u8>>>) -> CodedMerkleTree {
    let root = layers[0].iter().map(|s| hash(s)).collect();
    CodedMerkleTree { layers, root }
}

/// Rebuilds the hash links above layer `j` after its symbols were changed.
pub fn rehash_above(params: &CmtParams, tree: &mut CodedMerkleTree, codes: &CmtCodes, j: usize) -> Result<()> {
    for jj in (2..=j).rev() {
        let data = parent_data(params, jj, &tree.layers[jj - 1]);
        tree.layers[jj - 2] = codes.encoders[jj - 2].encode(&data)?;
    }
    tree.root = tree.layers[0].iter().map(|s| hash(s)).collect();
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofEntry {
    pub layer: usize,
    pub data_index: usize,
    #[serde(with = "hex::serde")]
    pub data: Vec<u8>,
    pub parity_index: usize,
    #[serde(with = "hex::serde")]
    pub parity: Vec<u8>,
}

/// Merkle proof of symbol `index` of `layer`: one data and one parity symbol
/// from each layer above it, ordered top to bottom.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MerkleProof {
    pub layer: usize,
    pub index: usize,
    pub entries: Vec<ProofEntry>,
}

impl MerkleProof {
    pub fn symbol_count(&self) -> usize {
        2 * self.entries.len()
    }
}

pub fn merkle_proof(params: &CmtParams, tree: &CodedMerkleTree, j: usize, i: usize) -> Result<MerkleProof> {
    if j == 0 || j > params.l {
        return Err(Error::OutOfRange(format!("layer {j} outside 1..={}", params.l)));
    }
    if i >= params.n(j) {
        return Err(Error::OutOfRange(format!("symbol {i} outside layer {j}")));
    }
    let entries = (1..j)
        .map(|jp| {
            let (d, p) = params.proof_indices(jp, i);
            ProofEntry {
                layer: jp,
                data_index: d,
                data: tree.layers[jp - 1][d].clone(),
                parity_index: p,
                parity: tree.layers[jp - 1][p].clone(),
            }
        })
        .collect();
    Ok(MerkleProof {
        layer: j,
        index: i,
        entries,
    })
}

/// True iff `hash` sits in the slot of `child` (index in layer `jp + 1`)
/// inside the parent data symbol `data` of layer `jp`.
fn slot_matches(params: &CmtParams, jp: usize, data: &[u8], child: usize, h: &Hash) -> bool {
    let slot = child / params.s(jp);
    data.get(slot * HASH_LEN..(slot + 1) * HASH_LEN) == Some(&h[..])
}

pub fn verify_symbol(
    root: &[Hash],
    params: &CmtParams,
    j: usize,
    i: usize,
    symbol: &[u8],
    proof: &MerkleProof,
) -> bool {
    if j == 0 || j > params.l || i >= params.n(j) || root.len() != params.t() {
        return false;
    }
    if proof.layer != j || proof.index != i || proof.entries.len() != j - 1 {
        return false;
    }
    for (k, e) in proof.entries.iter().enumerate() {
        let jp = k + 1;
        if e.layer != jp || (e.data_index, e.parity_index) != params.proof_indices(jp, i) {
            return false;
        }
    }
    // Chain from the symbol up to the root through the data entries.
    let mut h = hash(symbol);
    let mut child = i;
    for e in proof.entries.iter().rev() {
        if !slot_matches(params, e.layer, &e.data, child, &h) {
            return false;
        }
        h = hash(&e.data);
        child = e.data_index;
    }
    if root[child] != h {
        return false;
    }
    // Parity entries are checked against the data entry one layer up.
    for (k, e) in proof.entries.iter().enumerate() {
        let ph = hash(&e.parity);
        let ok = if k == 0 {
            root[e.parity_index] == ph
        } else {
            let up = &proof.entries[k - 1];
            e.parity_index % params.s(up.layer) == up.data_index
                && slot_matches(params, up.layer, &up.data, e.parity_index, &ph)
        };
        if !ok {
            return false;
        }
    }
    true
}

/// Outcome of [`hash_aware_peel`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PeelOutcome {
    /// Every layer was recovered; `layers` is the full tree content.
    Success { layers: Vec<Vec<Vec<u8>>> },
    /// Peeling got stuck on `layer`; `unresolved` is the stopping set left.
    Stall { layer: usize, unresolved: Vec<usize> },
    /// Incorrect coding detected at check node `cn` of `layer`.
    IcProof(IcProof),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IcProof {
    pub layer: usize,
    pub cn: usize,
    /// `(index, symbol)` pairs of the check's members that the proof carries.
    pub symbols: Vec<(usize, Vec<u8>)>,
}

impl IcProof {
    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    /// True iff the carried symbols and the expected hash of the missing
    /// member (if any) are inconsistent with the check equation.
    pub fn verify(&self, codes: &CmtCodes, expected: &[Hash]) -> bool {
        let g = codes.graph(self.layer);
        if self.cn >= g.n_cns() {
            return false;
        }
        let members = g.cn_neighbors(self.cn);
        let width = self.symbols.first().map_or(0, |s| s.1.len());
        let mut acc = vec![0u8; width];
        for (idx, sym) in &self.symbols {
            if !members.contains(idx) || hash(sym) != expected[*idx] {
                return false;
            }
            xor_into(&mut acc, sym);
        }
        match members.len() - self.symbols.len() {
            0 => acc.iter().any(|&b| b != 0),
            1 => {
                let missing = members
                    .iter()
                    .find(|m| !self.symbols.iter().any(|s| s.0 == **m))
                    .expect("one member missing");
                hash(&acc) != expected[*missing]
            }
            _ => false,
        }
    }
}

/// Peeling decode of one layer. `known` is updated in place.
fn peel_layer(
    g: &TannerGraph,
    known: &mut [Option<Vec<u8>>],
    expected: &[Hash],
    layer: usize,
) -> std::result::Result<(), PeelOutcome> {
    let mut missing_count: Vec<usize> = (0..g.n_cns())
        .map(|c| g.cn_neighbors(c).iter().filter(|&&v| known[v].is_none()).count())
        .collect();
    let mut queue: VecDeque<usize> = (0..g.n_cns()).filter(|&c| missing_count[c] == 1).collect();
    while let Some(c) = queue.pop_front() {
        if missing_count[c] != 1 {
            continue;
        }
        let members = g.cn_neighbors(c);
        let v = *members.iter().find(|&&v| known[v].is_none()).expect("one missing");
        let width = members
            .iter()
            .find_map(|&u| known[u].as_ref().map(Vec::len))
            .unwrap_or(0);
        let mut sym = vec![0u8; width];
        let mut carried = Vec::new();
        for &u in members {
            if let Some(s) = &known[u] {
                xor_into(&mut sym, s);
                carried.push((u, s.clone()));
            }
        }
        if hash(&sym) != expected[v] {
            return Err(PeelOutcome::IcProof(IcProof {
                layer,
                cn: c,
                symbols: carried,
            }));
        }
        known[v] = Some(sym);
        for &c2 in g.vn_neighbors(v) {
            missing_count[c2] -= 1;
            if missing_count[c2] == 1 {
                queue.push_back(c2);
            }
        }
    }
    let unresolved: Vec<usize> = (0..known.len()).filter(|&v| known[v].is_none()).collect();
    if !unresolved.is_empty() {
        return Err(PeelOutcome::Stall { layer, unresolved });
    }
    for c in 0..g.n_cns() {
        let members = g.cn_neighbors(c);
        let width = known[members[0]].as_ref().map_or(0, Vec::len);
        let mut acc = vec![0u8; width];
        for &u in members {
            xor_into(&mut acc, known[u].as_ref().expect("all known"));
        }
        if acc.iter().any(|&b| b != 0) {
            return Err(PeelOutcome::IcProof(IcProof {
                layer,
                cn: c,
                symbols: members
                    .iter()
                    .map(|&u| (u, known[u].clone().expect("all known")))
                    .collect(),
            }));
        }
    }
    Ok(())
}

/// Decodes layer by layer from the top. `available[j - 1][i]` is the symbol
/// `i` of layer `j` if it was received (and proof-checked).
pub fn hash_aware_peel(
    available: &[Vec<Option<Vec<u8>>>],
    root: &[Hash],
    codes: &CmtCodes,
    params: &CmtParams,
) -> Result<PeelOutcome> {
    if available.len() != params.l || root.len() != params.t() {
        return Err(Error::MalformedInput("layer count or root size mismatch".into()));
    }
    let mut layers: Vec<Vec<Vec<u8>>> = Vec::with_capacity(params.l);
    let mut expected: Vec<Hash> = root.to_vec();
    for j in 1..=params.l {
        let mut known = available[j - 1].clone();
        if known.len() != params.n(j) {
            return Err(Error::MalformedInput(format!(
                "layer {j} has {} slots, expected {}",
                known.len(),
                params.n(j)
            )));
        }
        let size = params.symbol_size(j);
        if known.iter().flatten().any(|s| s.len() != size) {
            return Err(Error::MalformedInput(format!("layer {j} symbol not {size} bytes")));
        }
        if let Err(outcome) = peel_layer(codes.graph(j), &mut known, &expected, j) {
            return Ok(outcome);
        }
        let decoded: Vec<Vec<u8>> = known.into_iter().map(|s| s.expect("decoded")).collect();
        if j < params.l {
            let s = params.s(j);
            expected = (0..params.n(j + 1))
                .map(|x| {
                    let slot = x / s;
                    decoded[x % s][slot * HASH_LEN..(slot + 1) * HASH_LEN]
                        .try_into()
                        .expect("hash slot")
                })
                .collect();
        }
        layers.push(decoded);
    }
    Ok(PeelOutcome::Success { layers })
}

/// Every symbol available except `hidden[j - 1]` on each layer.
pub fn availability(tree: &CodedMerkleTree, hidden: &[Vec<usize>]) -> Vec<Vec<Option<Vec<u8>>>> {
    tree.layers
        .iter()
        .enumerate()
        .map(|(k, layer)| {
            let mut avail: Vec<Option<Vec<u8>>> = layer.iter().cloned().map(Some).collect();
            if let Some(h) = hidden.get(k) {
                for &i in h {
                    avail[i] = None;
                }
            }
            avail
        })
        .collect()
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend_from_slice(&(b.len() as u32).to_le_bytes());
    out.extend_from_slice(b);
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Parse("truncated binary input".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn bytes(&mut self) -> Result<Vec<u8>> {
        let n = self.u32()? as usize;
        Ok(self.take(n)?.to_vec())
    }
}

const TREE_MAGIC: &[u8; 4] = b"CMT1";

/// Binary layout: magic, layer count, then per layer a symbol count followed
/// by length-prefixed symbols (all integers little-endian `u32`).
pub fn tree_to_bytes(tree: &CodedMerkleTree) -> Vec<u8> {
    let mut out = TREE_MAGIC.to_vec();
    out.extend_from_slice(&(tree.layers.len() as u32).to_le_bytes());
    for layer in &tree.layers {
        out.extend_from_slice(&(layer.len() as u32).to_le_bytes());
        for s in layer {
            put_bytes(&mut out, s);
        }
    }
    out
}

pub fn tree_from_bytes(bytes: &[u8]) -> Result<CodedMerkleTree> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != TREE_MAGIC {
        return Err(Error::Parse("not a serialized tree".into()));
    }
    let l = r.u32()? as usize;
    let mut layers = Vec::new();
    for _ in 0..l {
        let n = r.u32()? as usize;
        layers.push((0..n).map(|_| r.bytes()).collect::<Result<Vec<_>>>()?);
    }
    if r.pos != bytes.len() || layers.is_empty() {
        return Err(Error::Parse("trailing bytes or empty tree".into()));
    }
    Ok(tree_from_layers(layers))
}

/// JSON sidecar for a serialized tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeMetadata {
    pub params: CmtParams,
    pub root: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::{construct_peg, ConstructionConfig};
    use crate::gf2::information_prefix_permutation;
    use crate::stopping::enumerate_stopping_sets;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_setup() -> (CmtParams, CmtCodes) {
        let params = CmtParams::new(32, 0.5, 4, 3, 300).unwrap();
        let hs = (1..=3)
            .map(|j| {
                let n = params.n(j);
                let mut cfg = ConstructionConfig::new(n, n - params.s(j), 3);
                cfg.seed = j as u64;
                let h = construct_peg(&cfg).unwrap().to_matrix();
                let perm = information_prefix_permutation(&h, params.s(j)).unwrap();
                h.permute_columns(&perm).unwrap()
            })
            .collect();
        let codes = CmtCodes::new(&params, hs).unwrap();
        (params, codes)
    }

    fn block(len: usize) -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        (0..len).map(|_| rng.gen()).collect()
    }

    #[test]
    fn layer_sizes() {
        let p = CmtParams::new(128, 0.5, 4, 4, 1024).unwrap();
        assert_eq!(p.layer_lengths().unwrap(), vec![16, 32, 64, 128]);
        assert_eq!(p.t(), 16);
        assert_eq!(p.proof_indices(2, 0), (0, 16));
        for (n, r, q, l) in [(208, 0.5, 4, 4), (200, 0.5, 4, 3), (200, 0.4, 5, 4), (200, 0.8, 5, 2)] {
            assert!(CmtParams::new(n, r, q, l, 1).is_ok(), "{n} {r} {q} {l}");
        }
        assert!(CmtParams::new(100, 0.5, 4, 4, 1).is_err());
        assert!(CmtParams::new(128, 0.25, 4, 2, 1).is_err());
    }

    #[test]
    fn roundtrip_and_proofs() {
        let (params, codes) = small_setup();
        let b = block(250);
        let tree = build_cmt(&b, &params, &codes).unwrap();
        assert_eq!(tree, build_cmt(&b, &params, &codes).unwrap());
        let avail = availability(&tree, &[]);
        match hash_aware_peel(&avail, &tree.root, &codes, &params).unwrap() {
            PeelOutcome::Success { layers } => {
                assert_eq!(layers, tree.layers);
                let base = &layers[2][..params.s(3)];
                assert_eq!(unpad_block(base).unwrap(), b);
            }
            other => panic!("{other:?}"),
        }
        for j in 1..=3 {
            for i in 0..params.n(j) {
                let proof = merkle_proof(&params, &tree, j, i).unwrap();
                assert_eq!(proof.symbol_count(), 2 * (j - 1));
                assert!(verify_symbol(&tree.root, &params, j, i, &tree.layers[j - 1][i], &proof));
                let mut bad = tree.layers[j - 1][i].clone();
                bad[0] ^= 1;
                assert!(!verify_symbol(&tree.root, &params, j, i, &bad, &proof));
                if j > 1 {
                    let other = (i + 1) % params.n(j);
                    let wrong = merkle_proof(&params, &tree, j, other).unwrap();
                    let mut relabeled = wrong.clone();
                    relabeled.index = i;
                    assert!(!verify_symbol(&tree.root, &params, j, i, &tree.layers[j - 1][i], &relabeled));
                }
            }
        }
    }

    #[test]
    fn stopping_sets_stall_at_their_layer() {
        let (params, codes) = small_setup();
        let tree = build_cmt(&block(100), &params, &codes).unwrap();
        for j in 1..=3 {
            let cat = enumerate_stopping_sets(codes.graph(j), 7).unwrap();
            for set in cat.sets() {
                let mut hidden = vec![Vec::new(); 3];
                hidden[j - 1] = set.clone();
                let out = hash_aware_peel(&availability(&tree, &hidden), &tree.root, &codes, &params).unwrap();
                assert_eq!(out, PeelOutcome::Stall { layer: j, unresolved: set.clone() });
            }
        }
    }

    #[test]
    fn incorrect_coding_is_caught() {
        let (params, codes) = small_setup();
        let mut tree = build_cmt(&block(100), &params, &codes).unwrap();
        let l = params.l;
        let victim = params.n(l) - 1;
        tree.layers[l - 1][victim][0] ^= 0xff;
        rehash_above(&params, &mut tree, &codes, l).unwrap();
        // Hide a data symbol sharing a check with the corrupted parity.
        let g = codes.graph(l);
        let c = g.vn_neighbors(victim)[0];
        let other = *g.cn_neighbors(c).iter().find(|&&v| v != victim).unwrap();
        let mut hidden = vec![Vec::new(); l];
        hidden[l - 1] = vec![other];
        let out = hash_aware_peel(&availability(&tree, &hidden), &tree.root, &codes, &params).unwrap();
        let PeelOutcome::IcProof(proof) = out else {
            panic!("expected IC proof, got {out:?}");
        };
        assert_eq!(proof.layer, l);
        assert!(proof.size() <= codes.max_cn_degree(l));
        let expected: Vec<Hash> = tree.layers[l - 1].iter().map(|s| hash(s)).collect();
        assert!(proof.verify(&codes, &expected));
    }

    #[test]
    fn binary_roundtrip() {
        let (params, codes) = small_setup();
        let tree = build_cmt(&block(10), &params, &codes).unwrap();
        let bytes = tree_to_bytes(&tree);
        assert_eq!(tree_from_bytes(&bytes).unwrap(), tree);
        assert!(tree_from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn oversized_block_rejected() {
        let (params, codes) = small_setup();
        assert!(build_cmt(&block(301), &params, &codes).is_err());
    }
}
