//! Progressive-edge-growth constructions: PEG, EC-PEG (cycle-entropy
//! selection), MC-PEG (fewest new cycles) and LC-PEG (cycle LP cost).

use crate::alist::to_alist;
use crate::error::{Error, Result};
use crate::lp::lp_objective_sets;
use crate::rng::rng_from_seed;
use crate::tanner::{Cycle, TannerGraph};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashSet};
use std::path::Path;

/// Relative tolerance used when comparing entropies and LP costs for ties.
const TIE_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Construction {
    Peg,
    EcPeg,
    McPeg,
    LcPeg,
}

impl Construction {
    pub fn name(self) -> &'static str {
        match self {
            Construction::Peg => "peg",
            Construction::EcPeg => "ec-peg",
            Construction::McPeg => "mc-peg",
            Construction::LcPeg => "lc-peg",
        }
    }
}

impl std::str::FromStr for Construction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "peg" => Ok(Construction::Peg),
            "ec-peg" => Ok(Construction::EcPeg),
            "mc-peg" => Ok(Construction::McPeg),
            "lc-peg" => Ok(Construction::LcPeg),
            other => Err(Error::Config(format!("unknown construction `{other}`"))),
        }
    }
}

fn default_g_c() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstructionConfig {
    pub n: usize,
    pub m: usize,
    pub d_v: usize,
    /// Cycles shorter than this are tracked.
    #[serde(default = "default_g_c")]
    pub g_c: usize,
    /// EMD threshold for bad cycles (LC-PEG).
    #[serde(default)]
    pub t_th: usize,
    #[serde(default)]
    pub theta_hat: f64,
    #[serde(default)]
    pub mu_hat: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ConstructionConfig {
    pub fn new(n: usize, m: usize, d_v: usize) -> Self {
        ConstructionConfig {
            n,
            m,
            d_v,
            g_c: default_g_c(),
            t_th: 0,
            theta_hat: 0.0,
            mu_hat: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.n == 0 || self.m == 0 {
            return bad("code needs at least one VN and one CN".into());
        }
        if self.d_v == 0 || self.d_v > self.m {
            return bad(format!("d_v = {} not realisable with {} CNs", self.d_v, self.m));
        }
        if self.g_c < 6 || !self.g_c.is_multiple_of(2) {
            return bad(format!("g_c must be even and >= 6, got {}", self.g_c));
        }
        if !(0.0..=1.0).contains(&self.theta_hat) {
            return bad(format!("theta_hat {} outside [0, 1]", self.theta_hat));
        }
        if !(self.mu_hat >= 0.0 && self.mu_hat.is_finite()) {
            return bad(format!("mu_hat {} must be finite and >= 0", self.mu_hat));
        }
        Ok(())
    }
}

/// Candidate CNs for a new edge at `v` and the length of the shortest cycle
/// that edge would close (`None` when some CN is unreachable).
pub fn peg_candidates(g: &TannerGraph, v: usize) -> (Vec<usize>, Option<usize>) {
    let (n, m) = (g.n_vns(), g.n_cns());
    let mut cn_seen = vec![false; m];
    let mut vn_seen = vec![false; n];
    vn_seen[v] = true;
    let mut level: Vec<usize> = g.vn_neighbors(v).to_vec();
    for &c in &level {
        cn_seen[c] = true;
    }
    let mut reached = level.len();
    let mut depth = 0;
    loop {
        if reached == m {
            // Only possible at depth 0 when v already touches every CN.
            return (Vec::new(), None);
        }
        let mut next = Vec::new();
        for &c in &level {
            for &w in g.cn_neighbors(c) {
                if vn_seen[w] {
                    continue;
                }
                vn_seen[w] = true;
                for &c2 in g.vn_neighbors(w) {
                    if !cn_seen[c2] {
                        cn_seen[c2] = true;
                        next.push(c2);
                    }
                }
            }
        }
        depth += 1;
        if next.is_empty() {
            let unreached: Vec<usize> = (0..m).filter(|&c| !cn_seen[c]).collect();
            return (unreached, None);
        }
        reached += next.len();
        if reached == m {
            next.sort_unstable();
            return (next, Some(2 * depth + 2));
        }
        level = next;
    }
}

/// Per-length VN-to-cycle counts `Lambda^(g')` for `g' < g_c`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleCounts {
    pub n: usize,
    pub by_length: BTreeMap<usize, Vec<u64>>,
}

impl CycleCounts {
    pub fn zeros(n: usize, g_c: usize) -> Self {
        let by_length = (4..g_c).step_by(2).map(|len| (len, vec![0; n])).collect();
        CycleCounts { n, by_length }
    }

    /// Counts from a full enumeration of the cycles of `g` shorter than `g_c`.
    pub fn from_graph(g: &TannerGraph, g_c: usize) -> Result<Self> {
        let mut counts = CycleCounts::zeros(g.n_vns(), g_c);
        if g_c > 4 {
            let cycles = g.enumerate_cycles(g_c - 2)?;
            for (len, v) in counts.by_length.iter_mut() {
                *v = cycles.vn_counts(*len, g.n_vns());
            }
        }
        Ok(counts)
    }

    /// `zeta^len`: fraction of `len`-cycles touched by each VN.
    pub fn fractions(&self, len: usize, total_cycles: usize) -> Vec<f64> {
        match self.by_length.get(&len) {
            Some(v) if total_cycles > 0 => {
                v.iter().map(|&c| c as f64 / total_cycles as f64).collect()
            }
            _ => vec![0.0; self.n],
        }
    }
}

/// Entropy (bits) of the class-averaged normalised cycle counts; `0/0 = 0`.
pub fn joint_cycle_entropy(counts: &CycleCounts, g_c: usize) -> f64 {
    let lengths: Vec<usize> = (4..g_c).step_by(2).collect();
    if lengths.is_empty() {
        return 0.0;
    }
    let t = lengths.len() as f64;
    let mut joint = vec![0.0; counts.n];
    for len in lengths {
        let Some(v) = counts.by_length.get(&len) else {
            continue;
        };
        let total: u64 = v.iter().sum();
        if total == 0 {
            continue;
        }
        for (j, &c) in joint.iter_mut().zip(v) {
            *j += c as f64 / total as f64 / t;
        }
    }
    entropy_bits(&joint)
}

pub(crate) fn entropy_bits(p: &[f64]) -> f64 {
    p.iter()
        .filter(|&&q| q > 0.0)
        .map(|&q| -q * q.log2())
        .sum()
}

fn pick(rng: &mut ChaCha8Rng, set: &[usize]) -> usize {
    *set.choose(rng).expect("candidate set is never empty")
}

fn min_degree(g: &TannerGraph, k: &[usize]) -> Vec<usize> {
    let best = k.iter().map(|&c| g.cn_degree(c)).min().unwrap_or(0);
    k.iter().copied().filter(|&c| g.cn_degree(c) == best).collect()
}

/// Indices of `values` within `TIE_EPS` (relative) of the minimum.
fn argmin_ties(values: &[f64]) -> Vec<usize> {
    let best = values.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = TIE_EPS * best.abs().max(1.0);
    (0..values.len()).filter(|&i| values[i] <= best + tol).collect()
}

/// One LC-PEG decision in the cycle regime, for instrumentation.
#[derive(Clone, Debug, PartialEq)]
pub struct LcDecision {
    pub vn: usize,
    pub costs: Vec<(usize, f64)>,
    pub chosen: usize,
}

struct Builder {
    cfg: ConstructionConfig,
    g: TannerGraph,
    rng: ChaCha8Rng,
}

impl Builder {
    fn new(cfg: &ConstructionConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Builder {
            cfg: cfg.clone(),
            g: TannerGraph::new(cfg.n, cfg.m),
            rng: rng_from_seed(cfg.seed),
        })
    }

    /// Runs the outer VN/edge loops; `choose` returns the selected CN.
    fn run(
        mut self,
        mut choose: impl FnMut(&TannerGraph, &mut ChaCha8Rng, usize, Vec<usize>, Option<usize>) -> Result<usize>,
    ) -> Result<TannerGraph> {
        for v in 0..self.cfg.n {
            for _ in 0..self.cfg.d_v {
                let (k, g) = peg_candidates(&self.g, v);
                if k.is_empty() {
                    return Err(Error::InvalidParams(format!("no candidate CN for v{v}")));
                }
                let c = choose(&self.g, &mut self.rng, v, k, g)?;
                self.g.add_edge(c, v)?;
            }
        }
        Ok(self.g)
    }
}

pub fn construct_peg(cfg: &ConstructionConfig) -> Result<TannerGraph> {
    Builder::new(cfg)?.run(|g, rng, _, k, _| Ok(pick(rng, &min_degree(g, &k))))
}

pub fn construct_ec_peg(cfg: &ConstructionConfig) -> Result<TannerGraph> {
    let b = Builder::new(cfg)?;
    let g_c = cfg.g_c;
    let mut lambda = CycleCounts::zeros(cfg.n, g_c);
    let threshold = b.cfg.g_c;
    b.run(move |g, rng, v, k, len| {
        let Some(len) = len.filter(|&l| l < threshold) else {
            return Ok(pick(rng, &min_degree(g, &k)));
        };
        let cycles = g.new_cycles_by_cn(v, len);
        let tallies: Vec<Vec<u64>> = k
            .iter()
            .map(|c| {
                let mut t = lambda.by_length[&len].clone();
                for cyc in cycles.get(c).map(Vec::as_slice).unwrap_or(&[]) {
                    for &u in cyc.vns() {
                        t[u] += 1;
                    }
                }
                t
            })
            .collect();
        let entropies: Vec<f64> = tallies
            .iter()
            .map(|t| {
                let mut trial = lambda.clone();
                trial.by_length.insert(len, t.clone());
                joint_cycle_entropy(&trial, g_c)
            })
            .collect();
        let ties = argmin_ties(&entropies);
        let idx = pick(rng, &ties);
        let chosen = k[idx];
        lambda.by_length.insert(len, tallies[idx].clone());
        Ok(chosen)
    })
}

/// CNs of `k_mindeg` closing the fewest new `len`-cycles, with their cycles.
fn min_cycle_candidates(
    g: &TannerGraph,
    v: usize,
    len: usize,
    k_mindeg: &[usize],
) -> Vec<(usize, Vec<Cycle>)> {
    let mut by_cn = g.new_cycles_by_cn(v, len);
    let counts: Vec<usize> = k_mindeg
        .iter()
        .map(|c| by_cn.get(c).map_or(0, Vec::len))
        .collect();
    let best = counts.iter().copied().min().unwrap_or(0);
    k_mindeg
        .iter()
        .zip(&counts)
        .filter(|(_, &n)| n == best)
        .map(|(&c, _)| (c, by_cn.remove(&c).unwrap_or_default()))
        .collect()
}

pub fn construct_mc_peg(cfg: &ConstructionConfig) -> Result<TannerGraph> {
    let b = Builder::new(cfg)?;
    let threshold = b.cfg.g_c;
    b.run(move |g, rng, v, k, len| {
        let k_mindeg = min_degree(g, &k);
        match len.filter(|&l| l < threshold) {
            None => Ok(pick(rng, &k_mindeg)),
            Some(len) => {
                let cands: Vec<usize> = min_cycle_candidates(g, v, len, &k_mindeg)
                    .into_iter()
                    .map(|(c, _)| c)
                    .collect();
                Ok(pick(rng, &cands))
            }
        }
    })
}

pub fn construct_lc_peg(cfg: &ConstructionConfig) -> Result<TannerGraph> {
    construct_lc_peg_traced(cfg).map(|(g, _)| g)
}

/// LC-PEG that also reports every cost-based decision.
pub fn construct_lc_peg_traced(cfg: &ConstructionConfig) -> Result<(TannerGraph, Vec<LcDecision>)> {
    let b = Builder::new(cfg)?;
    let (g_c, t_th, theta, mu) = (cfg.g_c, cfg.t_th, cfg.theta_hat, cfg.mu_hat);
    let n = cfg.n;
    let mut bad: Vec<Vec<usize>> = Vec::new();
    let mut bad_seen: HashSet<Vec<usize>> = HashSet::new();
    let mut trace = Vec::new();
    let graph = b.run(|g, rng, v, k, len| {
        let k_mindeg = min_degree(g, &k);
        let Some(len) = len.filter(|&l| l < g_c) else {
            return Ok(pick(rng, &k_mindeg));
        };
        let cands = min_cycle_candidates(g, v, len, &k_mindeg);
        let costs: Vec<f64> = cands
            .par_iter()
            .map(|(_, cycles)| {
                let mut sets: Vec<Vec<usize>> = bad.clone();
                for cyc in cycles {
                    let mut s = cyc.vns().to_vec();
                    s.sort_unstable();
                    sets.push(s);
                }
                lp_objective_sets(sets.iter().map(Vec::as_slice), n, theta, mu)
            })
            .collect::<Result<_>>()?;
        let ties = argmin_ties(&costs);
        let idx = pick(rng, &ties);
        let (chosen, cycles) = &cands[idx];
        let mut after = g.clone();
        after.add_edge(*chosen, v)?;
        for cyc in cycles {
            if after.emd(cyc.vns()) <= t_th {
                let mut s = cyc.vns().to_vec();
                s.sort_unstable();
                if bad_seen.insert(s.clone()) {
                    bad.push(s);
                }
            }
        }
        trace.push(LcDecision {
            vn: v,
            costs: cands.iter().map(|(c, _)| *c).zip(costs.iter().copied()).collect(),
            chosen: *chosen,
        });
        Ok(*chosen)
    })?;
    Ok((graph, trace))
}

pub fn construct(kind: Construction, cfg: &ConstructionConfig) -> Result<TannerGraph> {
    match kind {
        Construction::Peg => construct_peg(cfg),
        Construction::EcPeg => construct_ec_peg(cfg),
        Construction::McPeg => construct_mc_peg(cfg),
        Construction::LcPeg => construct_lc_peg(cfg),
    }
}

/// Sidecar written next to an exported alist file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeMetadata {
    pub construction: Construction,
    pub config: ConstructionConfig,
    pub seed: u64,
    /// SHA-256 of `blob <len>\0<alist>`, the git object hashing scheme.
    pub content_hash: String,
}

pub fn content_hash(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", text.len()).as_bytes());
    h.update(text.as_bytes());
    hex::encode(h.finalize())
}

/// Writes `<stem>.alist` and `<stem>.json` into `dir`.
pub fn export_code(
    dir: &Path,
    stem: &str,
    kind: Construction,
    cfg: &ConstructionConfig,
    g: &TannerGraph,
) -> Result<CodeMetadata> {
    std::fs::create_dir_all(dir)?;
    let text = to_alist(&g.to_matrix());
    let meta = CodeMetadata {
        construction: kind,
        config: cfg.clone(),
        seed: cfg.seed,
        content_hash: content_hash(&text),
    };
    std::fs::write(dir.join(format!("{stem}.alist")), &text)?;
    std::fs::write(
        dir.join(format!("{stem}.json")),
        serde_json::to_string_pretty(&meta)? + "\n",
    )?;
    Ok(meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf2::BinaryMatrix;

    fn graph(rows: &[&[u8]]) -> TannerGraph {
        TannerGraph::from_matrix(&BinaryMatrix::from_rows(rows).unwrap())
    }

    #[test]
    fn candidates_examples() {
        let g = TannerGraph::new(3, 4);
        assert_eq!(peg_candidates(&g, 0), (vec![0, 1, 2, 3], None));

        let g = graph(&[&[1, 1], &[0, 1]]);
        assert_eq!(peg_candidates(&g, 0), (vec![1], Some(4)));

        // v0 - c0 - v1; c1 isolated.
        let g = graph(&[&[1, 1], &[0, 0]]);
        assert_eq!(peg_candidates(&g, 0), (vec![1], None));
    }

    #[test]
    fn forced_small_code() {
        let mut cfg = ConstructionConfig::new(4, 2, 2);
        cfg.g_c = 6;
        for kind in [Construction::Peg, Construction::EcPeg, Construction::McPeg, Construction::LcPeg] {
            let g = construct(kind, &cfg).unwrap();
            for v in 0..4 {
                assert_eq!(g.vn_neighbors(v), &[0, 1]);
            }
        }
    }

    #[test]
    fn peg_is_regular_and_deterministic() {
        let mut cfg = ConstructionConfig::new(64, 32, 3);
        cfg.seed = 4;
        let a = construct_peg(&cfg).unwrap();
        let b = construct_peg(&cfg).unwrap();
        assert_eq!(a, b);
        assert!((0..64).all(|v| a.vn_degree(v) == 3));
        assert!(a.girth().unwrap() >= 6);
    }

    #[test]
    fn entropy_examples() {
        let mut c = CycleCounts::zeros(3, 6);
        c.by_length.insert(4, vec![0, 5, 0]);
        assert_eq!(joint_cycle_entropy(&c, 6), 0.0);

        let mut c = CycleCounts::zeros(8, 6);
        c.by_length.insert(4, vec![3; 8]);
        assert!((joint_cycle_entropy(&c, 6) - 3.0).abs() < 1e-12);

        let mut c = CycleCounts::zeros(3, 8);
        c.by_length.insert(4, vec![2, 2, 0]);
        c.by_length.insert(6, vec![0, 0, 4]);
        let expected = -(2.0 * 0.25 * 0.25f64.log2() + 0.5 * 0.5f64.log2());
        assert!((joint_cycle_entropy(&c, 8) - expected).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut cfg = ConstructionConfig::new(10, 5, 3);
        assert!(cfg.validate().is_ok());
        cfg.g_c = 5;
        assert!(cfg.validate().is_err());
        cfg.g_c = 8;
        cfg.theta_hat = 1.5;
        assert!(cfg.validate().is_err());
        let json = r#"{"n": 4, "m": 2, "d_v": 2, "bogus": 1}"#;
        assert!(serde_json::from_str::<ConstructionConfig>(json).is_err());
    }

    #[test]
    fn lc_peg_picks_minimum_cost() {
        let mut cfg = ConstructionConfig::new(40, 20, 3);
        cfg.g_c = 8;
        cfg.t_th = 4;
        cfg.theta_hat = 0.997;
        cfg.mu_hat = 8.0;
        cfg.seed = 2;
        let (_, trace) = construct_lc_peg_traced(&cfg).unwrap();
        assert!(!trace.is_empty());
        for d in trace {
            let min = d.costs.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
            let chosen = d.costs.iter().find(|c| c.0 == d.chosen).unwrap().1;
            assert!(chosen <= min + 1e-12);
        }
    }

    #[test]
    fn content_hash_is_stable() {
        assert_eq!(content_hash("x"), content_hash("x"));
        assert_ne!(content_hash("x"), content_hash("y"));
    }
}
