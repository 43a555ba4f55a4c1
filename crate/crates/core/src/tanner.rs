//! Tanner graphs: girth, cycle enumeration, new-cycle counting and EMD.

use crate::error::{Error, Result};
use crate::gf2::BinaryMatrix;
use rayon::prelude::*;
use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};

/// Default cap on the number of cycles a single enumeration may return.
pub const DEFAULT_CYCLE_CAP: u64 = 10_000_000;

/// Bipartite graph between variable nodes (columns) and check nodes (rows).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TannerGraph {
    vn_adj: Vec<Vec<usize>>,
    cn_adj: Vec<Vec<usize>>,
}

impl TannerGraph {
    pub fn new(n_vns: usize, n_cns: usize) -> Self {
        TannerGraph {
            vn_adj: vec![Vec::new(); n_vns],
            cn_adj: vec![Vec::new(); n_cns],
        }
    }

    pub fn from_matrix(h: &BinaryMatrix) -> Self {
        let mut g = TannerGraph::new(h.cols(), h.rows());
        for c in 0..h.rows() {
            for v in h.row_support(c) {
                g.vn_adj[v].push(c);
                g.cn_adj[c].push(v);
            }
        }
        g
    }

    pub fn to_matrix(&self) -> BinaryMatrix {
        let mut h = BinaryMatrix::zeros(self.n_cns(), self.n_vns());
        for (c, vs) in self.cn_adj.iter().enumerate() {
            for &v in vs {
                h.set(c, v, true);
            }
        }
        h
    }

    pub fn n_vns(&self) -> usize {
        self.vn_adj.len()
    }

    pub fn n_cns(&self) -> usize {
        self.cn_adj.len()
    }

    pub fn n_edges(&self) -> usize {
        self.vn_adj.iter().map(Vec::len).sum()
    }

    /// Check nodes adjacent to `v`, ascending.
    pub fn vn_neighbors(&self, v: usize) -> &[usize] {
        &self.vn_adj[v]
    }

    /// Variable nodes adjacent to `c`, ascending.
    pub fn cn_neighbors(&self, c: usize) -> &[usize] {
        &self.cn_adj[c]
    }

    pub fn vn_degree(&self, v: usize) -> usize {
        self.vn_adj[v].len()
    }

    pub fn cn_degree(&self, c: usize) -> usize {
        self.cn_adj[c].len()
    }

    pub fn max_cn_degree(&self) -> usize {
        self.cn_adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn has_edge(&self, c: usize, v: usize) -> bool {
        self.vn_adj
            .get(v)
            .is_some_and(|cs| cs.binary_search(&c).is_ok())
    }

    pub fn add_edge(&mut self, c: usize, v: usize) -> Result<()> {
        if c >= self.n_cns() || v >= self.n_vns() {
            return Err(Error::OutOfRange(format!("edge (c{c}, v{v})")));
        }
        let pos = match self.vn_adj[v].binary_search(&c) {
            Ok(_) => return Err(Error::InvalidEdge(format!("(c{c}, v{v}) already present"))),
            Err(p) => p,
        };
        self.vn_adj[v].insert(pos, c);
        let pos = self.cn_adj[c].binary_search(&v).unwrap_err();
        self.cn_adj[c].insert(pos, v);
        Ok(())
    }

    /// Removes every edge incident to `v`; the node itself stays.
    pub fn purge_vn(&mut self, v: usize) {
        for c in std::mem::take(&mut self.vn_adj[v]) {
            if let Ok(p) = self.cn_adj[c].binary_search(&v) {
                self.cn_adj[c].remove(p);
            }
        }
    }

    /// Length of the shortest cycle, `None` for a forest.
    pub fn girth(&self) -> Option<usize> {
        let n = self.n_vns();
        let total = n + self.n_cns();
        
        (0..n)
            .into_par_iter()
            .filter_map(|root| self.shortest_cycle_through_bfs(root, total))
            .min()
    }

    /// BFS from VN `root`; node ids are VNs `0..n` and CNs `n..`.
    fn shortest_cycle_through_bfs(&self, root: usize, total: usize) -> Option<usize> {
        let n = self.n_vns();
        let mut dist = vec![usize::MAX; total];
        let mut parent = vec![usize::MAX; total];
        let mut queue = VecDeque::new();
        dist[root] = 0;
        queue.push_back(root);
        let mut best: Option<usize> = None;
        while let Some(u) = queue.pop_front() {
            if let Some(b) = best {
                if 2 * dist[u] + 1 >= b {
                    break;
                }
            }
            let neighbors: Box<dyn Iterator<Item = usize>> = if u < n {
                Box::new(self.vn_adj[u].iter().map(|&c| c + n))
            } else {
                Box::new(self.cn_adj[u - n].iter().copied())
            };
            for w in neighbors {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    parent[w] = u;
                    queue.push_back(w);
                } else if parent[u] != w {
                    let len = dist[u] + dist[w] + 1;
                    best = Some(best.map_or(len, |b| b.min(len)));
                }
            }
        }
        best
    }

    /// Number of check nodes with exactly one edge into `vns`.
    pub fn emd(&self, vns: &[usize]) -> usize {
        let mut count = vec![0u32; self.n_cns()];
        for &v in vns {
            for &c in &self.vn_adj[v] {
                count[c] += 1;
            }
        }
        count.iter().filter(|&&k| k == 1).count()
    }

    /// Enumerates every cycle of length `4..=g_max`, keyed by length.
    pub fn enumerate_cycles(&self, g_max: usize) -> Result<CycleSet> {
        self.enumerate_cycles_capped(g_max, DEFAULT_CYCLE_CAP)
    }

    pub fn enumerate_cycles_capped(&self, g_max: usize, cap: u64) -> Result<CycleSet> {
        if g_max < 4 || !g_max.is_multiple_of(2) {
            return Err(Error::InvalidParams(format!(
                "g_max must be even and >= 4, got {g_max}"
            )));
        }
        let found = AtomicU64::new(0);
        let per_root: Vec<Result<Vec<Cycle>>> = (0..self.n_vns())
            .into_par_iter()
            .map(|root| {
                let mut out = Vec::new();
                let mut walker = CycleWalker {
                    graph: self,
                    root,
                    max_vns: g_max / 2,
                    vns: vec![root],
                    cns: Vec::new(),
                    on_path_vn: vec![false; self.n_vns()],
                    on_path_cn: vec![false; self.n_cns()],
                    out: &mut out,
                    found: &found,
                    cap,
                };
                walker.on_path_vn[root] = true;
                walker.extend()?;
                Ok(out)
            })
            .collect();
        let mut set = CycleSet::default();
        for cycles in per_root {
            for cyc in cycles? {
                set.by_length.entry(cyc.len()).or_default().push(cyc);
            }
        }
        for list in set.by_length.values_mut() {
            list.sort();
        }
        Ok(set)
    }

    /// Cycles closed by adding edge `(c, v)`: one per simple alternating path
    /// of `len - 1` edges from `v` to `c` in the current graph.
    pub fn new_cycles(&self, c: usize, v: usize, len: usize) -> Result<Vec<Cycle>> {
        if self.has_edge(c, v) {
            return Err(Error::InvalidEdge(format!("(c{c}, v{v}) already present")));
        }
        if len < 4 || !len.is_multiple_of(2) {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        let mut vns = vec![v];
        let mut cns = Vec::new();
        let mut on_vn = vec![false; self.n_vns()];
        let mut on_cn = vec![false; self.n_cns()];
        on_vn[v] = true;
        self.paths_to_cn(c, len / 2, &mut vns, &mut cns, &mut on_vn, &mut on_cn, &mut out);
        out.sort();
        Ok(out)
    }

    /// Count of cycles closed by adding `(c, v)` together with the cycles.
    pub fn count_new_cycles(&self, c: usize, v: usize, len: usize) -> Result<(usize, Vec<Cycle>)> {
        let cycles = self.new_cycles(c, v, len)?;
        Ok((cycles.len(), cycles))
    }

    /// New `len`-cycles for every check node `c` not yet adjacent to `v`,
    /// gathered in one depth-first pass. Check nodes that would close no
    /// cycle are absent from the map.
    pub fn new_cycles_by_cn(&self, v: usize, len: usize) -> BTreeMap<usize, Vec<Cycle>> {
        let mut out: BTreeMap<usize, Vec<Cycle>> = BTreeMap::new();
        if len < 4 || !len.is_multiple_of(2) {
            return out;
        }
        let mut vns = vec![v];
        let mut cns = Vec::new();
        let mut on_vn = vec![false; self.n_vns()];
        let mut on_cn = vec![false; self.n_cns()];
        on_vn[v] = true;
        self.paths_any_cn(v, len / 2, &mut vns, &mut cns, &mut on_vn, &mut on_cn, &mut out);
        for list in out.values_mut() {
            list.sort();
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn paths_any_cn(
        &self,
        start: usize,
        want_vns: usize,
        vns: &mut Vec<usize>,
        cns: &mut Vec<usize>,
        on_vn: &mut [bool],
        on_cn: &mut [bool],
        out: &mut BTreeMap<usize, Vec<Cycle>>,
    ) {
        let last = *vns.last().expect("path starts at a VN");
        if vns.len() == want_vns {
            for &t in &self.vn_adj[last] {
                if on_cn[t] || self.has_edge(t, start) {
                    continue;
                }
                let mut cyc_cns = cns.clone();
                cyc_cns.push(t);
                out.entry(t)
                    .or_default()
                    .push(Cycle::canonical(vns.clone(), cyc_cns));
            }
            return;
        }
        for &c in &self.vn_adj[last] {
            if on_cn[c] {
                continue;
            }
            on_cn[c] = true;
            cns.push(c);
            for &w in &self.cn_adj[c] {
                if on_vn[w] {
                    continue;
                }
                on_vn[w] = true;
                vns.push(w);
                self.paths_any_cn(start, want_vns, vns, cns, on_vn, on_cn, out);
                vns.pop();
                on_vn[w] = false;
            }
            cns.pop();
            on_cn[c] = false;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn paths_to_cn(
        &self,
        target: usize,
        want_vns: usize,
        vns: &mut Vec<usize>,
        cns: &mut Vec<usize>,
        on_vn: &mut [bool],
        on_cn: &mut [bool],
        out: &mut Vec<Cycle>,
    ) {
        let last = *vns.last().expect("path starts at a VN");
        for &c in &self.vn_adj[last] {
            if on_cn[c] || c == target {
                continue;
            }
            on_cn[c] = true;
            cns.push(c);
            for &w in &self.cn_adj[c] {
                if on_vn[w] {
                    continue;
                }
                vns.push(w);
                if vns.len() == want_vns {
                    if self.has_edge(target, w) {
                        let mut cyc_cns = cns.clone();
                        cyc_cns.push(target);
                        out.push(Cycle::canonical(vns.clone(), cyc_cns));
                    }
                } else {
                    on_vn[w] = true;
                    self.paths_to_cn(target, want_vns, vns, cns, on_vn, on_cn, out);
                    on_vn[w] = false;
                }
                vns.pop();
            }
            cns.pop();
            on_cn[c] = false;
        }
    }
}

struct CycleWalker<'a> {
    graph: &'a TannerGraph,
    root: usize,
    max_vns: usize,
    vns: Vec<usize>,
    cns: Vec<usize>,
    on_path_vn: Vec<bool>,
    on_path_cn: Vec<bool>,
    out: &'a mut Vec<Cycle>,
    found: &'a AtomicU64,
    cap: u64,
}

impl CycleWalker<'_> {
    // Grows the path root-c0-v1-c1-...; every VN on the path exceeds the root.
    fn extend(&mut self) -> Result<()> {
        let g = self.graph;
        let last = *self.vns.last().unwrap();
        for &c in &g.vn_adj[last] {
            if self.on_path_cn[c] {
                continue;
            }
            // Closing edge c -> root.
            if self.vns.len() >= 2 && c != self.cns[0] && g.has_edge(c, self.root) && c > self.cns[0]
            {
                let mut cns = self.cns.clone();
                cns.push(c);
                let total = self.found.fetch_add(1, Ordering::Relaxed) + 1;
                if total > self.cap {
                    return Err(Error::ResourceLimit {
                        what: "cycle enumeration",
                        cap: self.cap,
                    });
                }
                self.out.push(Cycle::canonical(self.vns.clone(), cns));
            }
            if self.vns.len() == self.max_vns {
                continue;
            }
            self.on_path_cn[c] = true;
            self.cns.push(c);
            for &w in &g.cn_adj[c] {
                if w <= self.root || self.on_path_vn[w] {
                    continue;
                }
                self.on_path_vn[w] = true;
                self.vns.push(w);
                self.extend()?;
                self.vns.pop();
                self.on_path_vn[w] = false;
            }
            self.cns.pop();
            self.on_path_cn[c] = false;
        }
        Ok(())
    }
}

/// A cycle `v0 - c0 - v1 - c1 - ... - v(k-1) - c(k-1) - v0`.
///
/// Stored canonically: rotated so the smallest VN comes first, in the
/// direction whose interleaved node sequence is lexicographically smaller.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cycle {
    vns: Vec<usize>,
    cns: Vec<usize>,
}

impl Cycle {
    /// `cns[i]` joins `vns[i]` and `vns[(i + 1) % k]`.
    pub fn canonical(vns: Vec<usize>, cns: Vec<usize>) -> Cycle {
        assert_eq!(vns.len(), cns.len());
        let k = vns.len();
        let start = (0..k).min_by_key(|&i| vns[i]).unwrap_or(0);
        let forward: (Vec<usize>, Vec<usize>) = (
            (0..k).map(|i| vns[(start + i) % k]).collect(),
            (0..k).map(|i| cns[(start + i) % k]).collect(),
        );
        // Reverse walk: v_start, c_{start-1}, v_{start-1}, ...
        let backward: (Vec<usize>, Vec<usize>) = (
            (0..k).map(|i| vns[(start + k - i) % k]).collect(),
            (0..k).map(|i| cns[(start + k - 1 - i) % k]).collect(),
        );
        let key = |(v, c): &(Vec<usize>, Vec<usize>)| -> Vec<usize> {
            v.iter().zip(c).flat_map(|(&a, &b)| [a, b]).collect()
        };
        let pick = if key(&backward) < key(&forward) {
            backward
        } else {
            forward
        };
        Cycle {
            vns: pick.0,
            cns: pick.1,
        }
    }

    pub fn len(&self) -> usize {
        self.vns.len() + self.cns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vns.is_empty()
    }

    pub fn vns(&self) -> &[usize] {
        &self.vns
    }

    pub fn cns(&self) -> &[usize] {
        &self.cns
    }
}

/// Cycles grouped by length.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CycleSet {
    pub by_length: BTreeMap<usize, Vec<Cycle>>,
}

impl CycleSet {
    pub fn total(&self) -> usize {
        self.by_length.values().map(Vec::len).sum()
    }

    pub fn of_length(&self, len: usize) -> &[Cycle] {
        self.by_length.get(&len).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn shortest(&self) -> Option<usize> {
        self.by_length
            .iter()
            .find(|(_, v)| !v.is_empty())
            .map(|(&k, _)| k)
    }

    /// Per-VN number of `len`-cycles touched.
    pub fn vn_counts(&self, len: usize, n_vns: usize) -> Vec<u64> {
        let mut counts = vec![0u64; n_vns];
        for cyc in self.of_length(len) {
            for &v in cyc.vns() {
                counts[v] += 1;
            }
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(rows: &[&[u8]]) -> TannerGraph {
        TannerGraph::from_matrix(&BinaryMatrix::from_rows(rows).unwrap())
    }

    fn complete(n_vns: usize, n_cns: usize) -> TannerGraph {
        let rows: Vec<Vec<u8>> = vec![vec![1; n_vns]; n_cns];
        TannerGraph::from_matrix(&BinaryMatrix::from_rows(&rows).unwrap())
    }

    /// Brute-force oracle: all closed alternating walks without repeated
    /// nodes, counted once per (vertex set, edge set).
    fn brute_cycle_count(g: &TannerGraph, len: usize) -> usize {
        use std::collections::BTreeSet;
        let mut seen = BTreeSet::new();
        let k = len / 2;
        fn rec(
            g: &TannerGraph,
            k: usize,
            vns: &mut Vec<usize>,
            cns: &mut Vec<usize>,
            seen: &mut std::collections::BTreeSet<Vec<(usize, usize)>>,
        ) {
            let last = *vns.last().unwrap();
            for &c in g.vn_neighbors(last) {
                if cns.contains(&c) {
                    continue;
                }
                if vns.len() == k {
                    if g.has_edge(c, vns[0]) && k >= 2 {
                        let mut edges = Vec::new();
                        for i in 0..k {
                            edges.push((vns[i], if i == 0 { c } else { cns[i - 1] }));
                            edges.push((vns[i], if i < k - 1 { cns[i] } else { c }));
                        }
                        edges.sort();
                        seen.insert(edges);
                    }
                    continue;
                }
                for &w in g.cn_neighbors(c) {
                    if vns.contains(&w) {
                        continue;
                    }
                    vns.push(w);
                    cns.push(c);
                    rec(g, k, vns, cns, seen);
                    cns.pop();
                    vns.pop();
                }
            }
        }
        for v in 0..g.n_vns() {
            rec(g, k, &mut vec![v], &mut Vec::new(), &mut seen);
        }
        seen.len()
    }

    #[test]
    fn girth_of_small_graphs() {
        assert_eq!(graph(&[&[1, 1], &[1, 1]]).girth(), Some(4));
        assert_eq!(graph(&[&[1, 1, 0], &[0, 1, 1]]).girth(), None);
        assert_eq!(complete(3, 3).girth(), Some(4));
    }

    #[test]
    fn cycles_of_k22_and_k33() {
        let g = graph(&[&[1, 1], &[1, 1]]);
        let set = g.enumerate_cycles(8).unwrap();
        assert_eq!(set.total(), 1);
        let c = &set.of_length(4)[0];
        assert_eq!(c.vns(), &[0, 1]);
        assert_eq!(c.cns(), &[0, 1]);

        let k33 = complete(3, 3);
        let set = k33.enumerate_cycles(6).unwrap();
        assert_eq!(set.of_length(4).len(), 9);
        assert_eq!(set.of_length(6).len(), 6);
        assert_eq!(brute_cycle_count(&k33, 4), 9);
        assert_eq!(brute_cycle_count(&k33, 6), 6);
    }

    #[test]
    fn tree_has_no_cycles() {
        let g = graph(&[&[1, 1, 0, 0], &[0, 1, 1, 0], &[0, 0, 1, 1]]);
        assert_eq!(g.enumerate_cycles(12).unwrap().total(), 0);
    }

    #[test]
    fn cycle_cap_is_enforced() {
        let g = complete(4, 4);
        assert!(matches!(
            g.enumerate_cycles_capped(8, 5),
            Err(Error::ResourceLimit { .. })
        ));
    }

    #[test]
    fn new_cycles_small_cases() {
        let g = graph(&[&[1, 1], &[1, 0]]);
        let (count, cycles) = g.count_new_cycles(1, 1, 4).unwrap();
        assert_eq!(count, 1);
        assert_eq!(cycles[0].vns(), &[0, 1]);

        let empty = TannerGraph::new(3, 3);
        assert_eq!(empty.count_new_cycles(0, 0, 4).unwrap().0, 0);

        // K_{2,3} (2 CNs, 3 VNs) with edge (c1, v2) removed.
        let mut k23 = graph(&[&[1, 1, 1], &[1, 1, 0]]);
        assert_eq!(k23.count_new_cycles(1, 2, 4).unwrap().0, 2);
        k23.add_edge(1, 2).unwrap();
        assert_eq!(brute_cycle_count(&k23, 4), 3);
    }

    #[test]
    fn new_cycles_by_cn_matches_single_target_search() {
        let mut rng = 7u64;
        let mut next = || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng >> 33) as usize
        };
        for _ in 0..10 {
            let mut g = TannerGraph::new(10, 6);
            for v in 0..10 {
                for _ in 0..3 {
                    let _ = g.add_edge(next() % 6, v);
                }
            }
            let v = next() % 10;
            for len in [4, 6, 8] {
                let all = g.new_cycles_by_cn(v, len);
                for c in 0..6 {
                    if g.has_edge(c, v) {
                        assert!(!all.contains_key(&c));
                        continue;
                    }
                    let single = g.new_cycles(c, v, len).unwrap();
                    assert_eq!(all.get(&c).cloned().unwrap_or_default(), single);
                }
            }
        }
    }

    #[test]
    fn emd_small_cases() {
        let path = graph(&[&[1, 1, 0], &[0, 1, 1]]);
        assert_eq!(path.emd(&[0]), 1);
        assert_eq!(path.emd(&[0, 1, 2]), 0);
        assert_eq!(graph(&[&[1, 1], &[1, 1]]).emd(&[0]), 2);
    }

    #[test]
    fn canonical_form_is_rotation_and_reflection_invariant() {
        let a = Cycle::canonical(vec![3, 1, 5], vec![7, 2, 9]);
        let b = Cycle::canonical(vec![1, 5, 3], vec![2, 9, 7]);
        let c = Cycle::canonical(vec![1, 3, 5], vec![7, 9, 2]);
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(a.vns()[0], 1);
    }

    #[test]
    fn matrix_roundtrip() {
        let h = BinaryMatrix::from_rows(&[[1u8, 0, 1, 1], [0, 1, 1, 0]]).unwrap();
        assert_eq!(TannerGraph::from_matrix(&h).to_matrix(), h);
    }
}
