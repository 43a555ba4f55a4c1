//! Stopping sets: membership test, bounded enumeration, distributions and the
//! VN-to-stopping-set adjacency matrix.
//!
//! Enumeration is a branch-and-bound over VN inclusion. Every stopping set is
//! generated from its smallest VN; the search repeatedly picks a check node
//! with exactly one included neighbour and branches on which undecided
//! neighbour becomes the next included VN.

use crate::error::{Error, Result};
use crate::gf2::BinaryMatrix;
use crate::tanner::TannerGraph;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::fmt::Write;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

/// Default cap on branch-and-bound node expansions.
pub const DEFAULT_NODE_CAP: u64 = 20_000_000_000;

/// `|Psi| x n` binary matrix; row `k` marks the VNs of stopping set `k`.
pub type AdjacencyPi = BinaryMatrix;

/// True iff no check node has exactly one edge into `vns`.
pub fn is_stopping_set(g: &TannerGraph, vns: &[usize]) -> bool {
    g.emd(vns) == 0
}

/// All nonempty stopping sets of size `< mu`, sorted by weight then indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoppingSetCatalog {
    n: usize,
    mu: usize,
    sets: Vec<Vec<usize>>,
    by_weight: BTreeMap<usize, Vec<usize>>,
}

impl StoppingSetCatalog {
    /// Builds a catalog from arbitrary sets, sorting and deduplicating them.
    pub fn from_sets(n: usize, mu: usize, mut sets: Vec<Vec<usize>>) -> Result<Self> {
        for s in &mut sets {
            s.sort_unstable();
            s.dedup();
            if s.is_empty() || s.len() >= mu {
                return Err(Error::InvalidParams(format!(
                    "catalog member of size {} outside 1..{mu}",
                    s.len()
                )));
            }
            if let Some(&v) = s.iter().find(|&&v| v >= n) {
                return Err(Error::OutOfRange(format!("VN {v} in a code of length {n}")));
            }
        }
        sets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        sets.dedup();
        let mut by_weight: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (k, s) in sets.iter().enumerate() {
            by_weight.entry(s.len()).or_default().push(k);
        }
        Ok(StoppingSetCatalog {
            n,
            mu,
            sets,
            by_weight,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mu(&self) -> usize {
        self.mu
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Members of weight `kappa`.
    pub fn of_weight(&self, kappa: usize) -> impl Iterator<Item = &[usize]> {
        self.by_weight
            .get(&kappa)
            .into_iter()
            .flatten()
            .map(|&k| self.sets[k].as_slice())
    }

    pub fn count_of_weight(&self, kappa: usize) -> usize {
        self.by_weight.get(&kappa).map_or(0, Vec::len)
    }

    /// Weights present in the catalog, ascending.
    pub fn weights(&self) -> Vec<usize> {
        self.by_weight.keys().copied().collect()
    }

    pub fn min_weight(&self) -> Option<usize> {
        self.by_weight.keys().next().copied()
    }

    /// Restriction to members of size `< mu`.
    pub fn truncated(&self, mu: usize) -> StoppingSetCatalog {
        let sets = self.sets.iter().filter(|s| s.len() < mu).cloned().collect();
        StoppingSetCatalog::from_sets(self.n, mu.min(self.mu), sets)
            .expect("members of a valid catalog stay valid")
    }

    /// Same catalog with VN `i` renamed to `perm_inv[i]`.
    pub fn relabel(&self, perm_inv: &[usize]) -> Result<StoppingSetCatalog> {
        crate::gf2::check_permutation(perm_inv, self.n)?;
        let sets = self
            .sets
            .iter()
            .map(|s| s.iter().map(|&v| perm_inv[v]).collect())
            .collect();
        StoppingSetCatalog::from_sets(self.n, self.mu, sets)
    }

    /// Header `n mu`, then one set per line as sorted 1-based indices.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.n, self.mu);
        for set in &self.sets {
            let line: Vec<String> = set.iter().map(|v| (v + 1).to_string()).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<StoppingSetCatalog> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty catalog file".into()))?;
        let nums = parse_line(header)?;
        let [n, mu] = nums[..] else {
            return Err(Error::Parse("catalog header must be `n mu`".into()));
        };
        let mut sets = Vec::new();
        for line in lines {
            let idx = parse_line(line)?;
            if idx.contains(&0) {
                return Err(Error::Parse("catalog indices are 1-based".into()));
            }
            sets.push(idx.into_iter().map(|v| v - 1).collect());
        }
        StoppingSetCatalog::from_sets(n, mu, sets)
    }
}

fn parse_line(line: &str) -> Result<Vec<usize>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|e| Error::Parse(format!("`{t}`: {e}")))
        })
        .collect()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Status {
    Undecided,
    In,
    Out,
}

struct Search<'a> {
    g: &'a TannerGraph,
    /// Largest admissible set size (`mu - 1`).
    max_size: usize,
    status: Vec<Status>,
    /// Included neighbours per check node.
    incl: Vec<u32>,
    /// Undecided neighbours per check node.
    open: Vec<u32>,
    members: Vec<usize>,
    /// Check nodes with exactly one included neighbour.
    lonely: Vec<usize>,
    found: Vec<Vec<usize>>,
    nodes: &'a AtomicU64,
    cap: u64,
    local_nodes: u64,
    stop_at_first: Option<&'a AtomicBool>,
    scratch: Vec<u32>,
    stamp: u32,
}

impl<'a> Search<'a> {
    fn new(g: &'a TannerGraph, max_size: usize, nodes: &'a AtomicU64, cap: u64) -> Self {
        let open = (0..g.n_cns()).map(|c| g.cn_degree(c) as u32).collect();
        Search {
            g,
            max_size,
            status: vec![Status::Undecided; g.n_vns()],
            incl: vec![0; g.n_cns()],
            open,
            members: Vec::new(),
            lonely: Vec::new(),
            found: Vec::new(),
            nodes,
            cap,
            local_nodes: 0,
            stop_at_first: None,
            scratch: vec![0; g.n_vns()],
            stamp: 0,
        }
    }

    fn exclude(&mut self, v: usize) {
        debug_assert!(self.status[v] == Status::Undecided);
        self.status[v] = Status::Out;
        for &c in self.g.vn_neighbors(v) {
            self.open[c] -= 1;
        }
    }

    fn unexclude(&mut self, v: usize) {
        self.status[v] = Status::Undecided;
        for &c in self.g.vn_neighbors(v) {
            self.open[c] += 1;
        }
    }

    fn include(&mut self, v: usize) {
        self.status[v] = Status::In;
        self.members.push(v);
        for &c in self.g.vn_neighbors(v) {
            self.open[c] -= 1;
            self.incl[c] += 1;
            match self.incl[c] {
                1 => self.lonely.push(c),
                2 => {
                    let p = self.lonely.iter().rposition(|&x| x == c).unwrap();
                    self.lonely.swap_remove(p);
                }
                _ => {}
            }
        }
    }

    fn uninclude(&mut self, v: usize) {
        self.status[v] = Status::Undecided;
        self.members.pop();
        for &c in self.g.vn_neighbors(v).iter().rev() {
            self.open[c] += 1;
            self.incl[c] -= 1;
            match self.incl[c] {
                0 => {
                    let p = self.lonely.iter().rposition(|&x| x == c).unwrap();
                    self.lonely.swap_remove(p);
                }
                1 => self.lonely.push(c),
                _ => {}
            }
        }
    }

    /// Lower bound on further VNs needed: lonely check nodes whose undecided
    /// neighbourhoods are pairwise disjoint each need their own VN.
    fn lower_bound(&mut self) -> usize {
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.scratch.iter_mut().for_each(|x| *x = 0);
            self.stamp = 1;
        }
        let mut order: Vec<usize> = self.lonely.clone();
        order.sort_unstable_by_key(|&c| self.open[c]);
        let mut packed = 0;
        for c in order {
            let nbrs = self.g.cn_neighbors(c);
            let clash = nbrs
                .iter()
                .any(|&u| self.status[u] == Status::Undecided && self.scratch[u] == self.stamp);
            if !clash {
                packed += 1;
                for &u in nbrs {
                    if self.status[u] == Status::Undecided {
                        self.scratch[u] = self.stamp;
                    }
                }
            }
        }
        packed
    }

    fn halted(&self) -> bool {
        self.stop_at_first
            .is_some_and(|f| f.load(Ordering::Relaxed))
    }

    fn tick(&mut self) -> Result<()> {
        self.local_nodes += 1;
        if self.local_nodes >= 4096 {
            let total = self.nodes.fetch_add(self.local_nodes, Ordering::Relaxed) + self.local_nodes;
            self.local_nodes = 0;
            if total > self.cap {
                return Err(Error::ResourceLimit {
                    what: "stopping-set search nodes",
                    cap: self.cap,
                });
            }
        }
        Ok(())
    }

    fn run(&mut self) -> Result<()> {
        self.tick()?;
        if self.halted() {
            return Ok(());
        }
        let size = self.members.len();
        if self.lonely.is_empty() {
            let mut set = self.members.clone();
            set.sort_unstable();
            self.found.push(set);
            if let Some(flag) = self.stop_at_first {
                flag.store(true, Ordering::Relaxed);
                return Ok(());
            }
            if size < self.max_size {
                self.extend()?;
            }
            return Ok(());
        }
        // Most constrained lonely check node.
        let mut best = usize::MAX;
        let mut best_open = u32::MAX;
        for &c in &self.lonely {
            if self.open[c] < best_open {
                best_open = self.open[c];
                best = c;
            }
        }
        if best_open == 0 {
            return Ok(());
        }
        if size + self.lower_bound() > self.max_size {
            return Ok(());
        }
        let cands: Vec<usize> = self
            .g
            .cn_neighbors(best)
            .iter()
            .copied()
            .filter(|&u| self.status[u] == Status::Undecided)
            .collect();
        self.branch_over(&cands)
    }

    /// The current set is a stopping set; grow it by any undecided VN.
    fn extend(&mut self) -> Result<()> {
        let cands: Vec<usize> = (0..self.g.n_vns())
            .filter(|&u| self.status[u] == Status::Undecided)
            .collect();
        self.branch_over(&cands)
    }

    /// Branch `i` includes `cands[i]` and excludes `cands[..i]`.
    fn branch_over(&mut self, cands: &[usize]) -> Result<()> {
        let mut excluded = 0;
        let mut result = Ok(());
        for &u in cands {
            self.include(u);
            result = self.run();
            self.uninclude(u);
            if result.is_err() || self.halted() {
                break;
            }
            self.exclude(u);
            excluded += 1;
        }
        for &u in cands[..excluded].iter().rev() {
            self.unexclude(u);
        }
        result
    }
}

fn search_from_roots(
    g: &TannerGraph,
    max_size: usize,
    cap: u64,
    stop_at_first: bool,
) -> Result<Vec<Vec<usize>>> {
    let nodes = AtomicU64::new(0);
    let flag = AtomicBool::new(false);
    let per_root: Vec<Result<Vec<Vec<usize>>>> = (0..g.n_vns())
        .into_par_iter()
        .map(|root| {
            if stop_at_first && flag.load(Ordering::Relaxed) {
                return Ok(Vec::new());
            }
            let mut s = Search::new(g, max_size, &nodes, cap);
            if stop_at_first {
                s.stop_at_first = Some(&flag);
            }
            for v in 0..root {
                s.exclude(v);
            }
            s.include(root);
            s.run()?;
            Ok(s.found)
        })
        .collect();
    let mut all = Vec::new();
    for r in per_root {
        all.extend(r?);
    }
    Ok(all)
}

/// Enumerates every nonempty stopping set of size `< mu`.
pub fn enumerate_stopping_sets(g: &TannerGraph, mu: usize) -> Result<StoppingSetCatalog> {
    enumerate_stopping_sets_capped(g, mu, DEFAULT_NODE_CAP)
}

pub fn enumerate_stopping_sets_capped(
    g: &TannerGraph,
    mu: usize,
    node_cap: u64,
) -> Result<StoppingSetCatalog> {
    if mu == 0 {
        return Err(Error::InvalidParams("mu must be at least 1".into()));
    }
    let sets = if mu == 1 {
        Vec::new()
    } else {
        search_from_roots(g, mu - 1, node_cap, false)?
    };
    StoppingSetCatalog::from_sets(g.n_vns(), mu, sets)
}

/// Smallest nonempty stopping set size, searching sizes up to `search_cap`.
pub fn min_stopping_set_size(g: &TannerGraph, search_cap: usize) -> Result<usize> {
    for size in 1..=search_cap.min(g.n_vns()) {
        let hits = search_from_roots(g, size, DEFAULT_NODE_CAP, true)?;
        if let Some(k) = hits.iter().map(Vec::len).min() {
            return Ok(k);
        }
    }
    Err(Error::NoStoppingSet(search_cap))
}

/// `ss^kappa`: fraction of weight-`kappa` stopping sets touched by each VN.
pub fn vn_stopping_distribution(cat: &StoppingSetCatalog, kappa: usize) -> Result<Vec<f64>> {
    let total = cat.count_of_weight(kappa);
    if total == 0 {
        return Err(Error::EmptyWeightClass(kappa));
    }
    let mut counts = vec![0usize; cat.n()];
    for set in cat.of_weight(kappa) {
        for &v in set {
            counts[v] += 1;
        }
    }
    Ok(counts.iter().map(|&c| c as f64 / total as f64).collect())
}

/// `Pi[k][i] = 1` iff VN `i` belongs to catalog member `k`.
pub fn adjacency_pi(cat: &StoppingSetCatalog) -> AdjacencyPi {
    let mut pi = BinaryMatrix::zeros(cat.len(), cat.n());
    for (k, set) in cat.sets().iter().enumerate() {
        for &v in set {
            pi.set(k, v, true);
        }
    }
    pi
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn graph(rows: &[&[u8]]) -> TannerGraph {
        TannerGraph::from_matrix(&BinaryMatrix::from_rows(rows).unwrap())
    }

    fn random_regular(n: usize, m: usize, dv: usize, rng: &mut ChaCha8Rng) -> TannerGraph {
        let mut g = TannerGraph::new(n, m);
        for v in 0..n {
            while g.vn_degree(v) < dv {
                let c = rng.gen_range(0..m);
                let _ = g.add_edge(c, v);
            }
        }
        g
    }

    /// Exhaustive filter over all `2^n` subsets using per-CN bit masks.
    fn brute_force(g: &TannerGraph, mu: usize) -> Vec<Vec<usize>> {
        let n = g.n_vns();
        let masks: Vec<u32> = (0..g.n_cns())
            .map(|c| g.cn_neighbors(c).iter().fold(0u32, |m, &v| m | (1 << v)))
            .collect();
        let mut out = Vec::new();
        for s in 1u32..(1u32 << n) {
            if s.count_ones() as usize >= mu {
                continue;
            }
            if masks.iter().all(|&m| (s & m).count_ones() != 1) {
                out.push((0..n).filter(|&v| s >> v & 1 == 1).collect());
            }
        }
        out
    }

    #[test]
    fn membership_examples() {
        let g = graph(&[&[1, 1, 0], &[0, 1, 1]]);
        assert!(is_stopping_set(&g, &[0, 1, 2]));
        assert!(!is_stopping_set(&g, &[0, 1]));
        assert!(is_stopping_set(&g, &[]));
    }

    #[test]
    fn enumeration_examples() {
        let g = graph(&[&[1, 1, 0], &[0, 1, 1]]);
        let cat = enumerate_stopping_sets(&g, 4).unwrap();
        assert_eq!(cat.sets(), &[vec![0, 1, 2]]);
        let g = graph(&[&[1, 1], &[1, 1]]);
        let cat = enumerate_stopping_sets(&g, 3).unwrap();
        assert_eq!(cat.sets(), &[vec![0, 1]]);
        assert!(enumerate_stopping_sets(&g, 2).unwrap().is_empty());
        assert!(enumerate_stopping_sets(&g, 0).is_err());
    }

    #[test]
    fn min_size_examples() {
        assert_eq!(min_stopping_set_size(&graph(&[&[1, 1], &[1, 1]]), 10).unwrap(), 2);
        assert_eq!(
            min_stopping_set_size(&graph(&[&[1, 1, 0], &[0, 1, 1]]), 10).unwrap(),
            3
        );
        let g = graph(&[&[1, 1, 0], &[0, 1, 1]]);
        assert!(matches!(
            min_stopping_set_size(&g, 2),
            Err(Error::NoStoppingSet(2))
        ));
    }

    #[test]
    fn isolated_vn_is_a_stopping_set() {
        let g = graph(&[&[1, 0], &[1, 0]]);
        let cat = enumerate_stopping_sets(&g, 3).unwrap();
        assert_eq!(cat.sets(), &[vec![1]]);
    }

    #[test]
    fn matches_exhaustive_oracle_on_small_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..12 {
            let n = 8 + trial % 7;
            let m = n / 2;
            let dv = 2 + trial % 2;
            let g = random_regular(n, m, dv, &mut rng);
            for mu in [3, 6, n + 1] {
                let cat = enumerate_stopping_sets(&g, mu).unwrap();
                let mut expected = brute_force(&g, mu);
                expected.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
                assert_eq!(cat.sets(), expected.as_slice(), "trial {trial} mu {mu}");
            }
        }
    }

    #[test]
    fn node_cap_is_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_regular(16, 8, 3, &mut rng);
        assert!(matches!(
            enumerate_stopping_sets_capped(&g, 17, 10),
            Err(Error::ResourceLimit { .. })
        ));
    }

    #[test]
    fn distribution_and_pi() {
        let cat = StoppingSetCatalog::from_sets(3, 4, vec![vec![0, 1, 2]]).unwrap();
        assert_eq!(vn_stopping_distribution(&cat, 3).unwrap(), vec![1.0; 3]);
        assert!(matches!(
            vn_stopping_distribution(&cat, 2),
            Err(Error::EmptyWeightClass(2))
        ));
        assert_eq!(adjacency_pi(&cat).to_rows(), vec![vec![1, 1, 1]]);

        let cat = StoppingSetCatalog::from_sets(4, 3, vec![vec![2, 3], vec![0, 1]]).unwrap();
        assert_eq!(vn_stopping_distribution(&cat, 2).unwrap(), vec![0.5; 4]);

        let cat = StoppingSetCatalog::from_sets(3, 3, vec![vec![1, 2], vec![0, 1]]).unwrap();
        let pi = adjacency_pi(&cat);
        assert_eq!(pi.to_rows(), vec![vec![1, 1, 0], vec![0, 1, 1]]);
        for (k, set) in cat.sets().iter().enumerate() {
            assert_eq!(pi.row_weight(k), set.len());
        }
    }

    #[test]
    fn text_roundtrip() {
        let cat = StoppingSetCatalog::from_sets(5, 4, vec![vec![0, 4], vec![1, 2, 3]]).unwrap();
        let text = cat.to_text();
        assert_eq!(text, "5 4\n1 5\n2 3 4\n");
        assert_eq!(StoppingSetCatalog::from_text(&text).unwrap(), cat);
        assert!(StoppingSetCatalog::from_text("5 4\n0 1\n").is_err());
    }
}
