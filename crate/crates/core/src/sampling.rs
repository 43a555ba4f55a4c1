//! Light-node sampling: greedy sets, parity-check alignment, LP-sampling
//! coupling matrices and the failure-probability and soundness formulas.

use crate::cmt::CmtParams;
use crate::error::{Error, Result};
use crate::gf2::BinaryMatrix;
use crate::lp::LpSolution;
use crate::stopping::{adjacency_pi, StoppingSetCatalog};
use crate::tanner::TannerGraph;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Greedy sampling order: VNs ordered by how many shortest cycles they break.
///
/// Starting at length `g_min`, repeatedly takes the VN touching the most
/// `g`-cycles of the working graph (seeded tie-break) and purges it; `g`
/// grows by two whenever no `g`-cycle is left, and once `g >= g_max` the
/// remaining picks are uniform without replacement.
pub fn greedy_set<R: Rng>(
    g: &TannerGraph,
    g_min: usize,
    g_max: usize,
    s: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = g.n_vns();
    if g_min < 4 || !g_min.is_multiple_of(2) {
        return Err(Error::InvalidParams(format!("g_min must be even and >= 4, got {g_min}")));
    }
    if s > n {
        return Err(Error::InvalidParams(format!("cannot pick {s} of {n} VNs")));
    }
    let mut work = g.clone();
    let mut taken = vec![false; n];
    let mut out = Vec::with_capacity(s);
    let mut len = g_min;
    let mut cycles: Vec<Vec<usize>> = Vec::new();
    let mut counts = vec![0u64; n];
    let load = |work: &TannerGraph, len: usize, counts: &mut Vec<u64>| -> Result<Vec<Vec<usize>>> {
        let found: Vec<Vec<usize>> = work
            .enumerate_cycles(len)?
            .of_length(len)
            .iter()
            .map(|c| c.vns().to_vec())
            .collect();
        counts.iter_mut().for_each(|c| *c = 0);
        for c in &found {
            for &v in c {
                counts[v] += 1;
            }
        }
        Ok(found)
    };
    if len < g_max {
        cycles = load(&work, len, &mut counts)?;
    }
    while out.len() < s {
        while cycles.is_empty() && len < g_max {
            len += 2;
            if len < g_max {
                cycles = load(&work, len, &mut counts)?;
            }
        }
        if len >= g_max {
            let mut rest: Vec<usize> = (0..n).filter(|&v| !taken[v]).collect();
            rest.shuffle(rng);
            out.extend(rest.into_iter().take(s - out.len()));
            break;
        }
        let best = (0..n).filter(|&v| !taken[v]).map(|v| counts[v]).max().unwrap_or(0);
        let ties: Vec<usize> = (0..n).filter(|&v| !taken[v] && counts[v] == best).collect();
        let v = *ties.choose(rng).expect("an untaken VN exists");
        out.push(v);
        taken[v] = true;
        work.purge_vn(v);
        cycles.retain(|c| {
            if c.contains(&v) {
                for &u in c {
                    counts[u] -= 1;
                }
                false
            } else {
                true
            }
        });
    }
    Ok(out)
}

/// Fraction of weight-`kappa` stopping sets touched by `sample`.
pub fn tau(sample: &[usize], cat: &StoppingSetCatalog, kappa: usize) -> Result<f64> {
    let total = cat.count_of_weight(kappa);
    if total == 0 {
        return Err(Error::EmptyWeightClass(kappa));
    }
    let mut in_sample = vec![false; cat.n()];
    for &v in sample {
        if v >= cat.n() {
            return Err(Error::OutOfRange(format!("VN {v} outside code of length {}", cat.n())));
        }
        in_sample[v] = true;
    }
    let hit = cat
        .of_weight(kappa)
        .filter(|set| set.iter().any(|&v| in_sample[v]))
        .count();
    Ok(hit as f64 / total as f64)
}

/// `(1 - tau)(1 - omega/n)^(s - floor(rho s))`.
pub fn pf_weak_greedy(tau_val: f64, omega: usize, n_layer: usize, s: usize, rho: f64) -> f64 {
    let random = s - deterministic_samples(s, rho);
    (1.0 - tau_val) * pf_random(omega, n_layer, random)
}

/// Number of greedy samples `floor(rho s)`.
pub fn deterministic_samples(s: usize, rho: f64) -> usize {
    ((rho * s as f64).floor() as usize).min(s)
}

/// `(1 - omega/n)^s`.
pub fn pf_random(omega: usize, n_layer: usize, s: usize) -> f64 {
    pf_ratio(omega as f64 / n_layer as f64, s)
}

/// `(1 - nu)^s` for a stopping ratio `nu`.
pub fn pf_ratio(nu: f64, s: usize) -> f64 {
    (1.0 - nu).clamp(0.0, 1.0).powi(s as i32)
}

/// Layer-`j` symbols hit by the Merkle proofs of base symbols `0..k`, in
/// order of first hit.
pub fn layer_hits(params: &CmtParams, j: usize, k: usize) -> Vec<usize> {
    if j == params.l {
        return (0..k.min(params.n_l)).collect();
    }
    let mut seen = vec![false; params.n(j)];
    let mut out = Vec::new();
    for i in 0..k.min(params.n_l) {
        let (d, p) = params.proof_indices(j, i);
        for x in [d, p] {
            if !seen[x] {
                seen[x] = true;
                out.push(x);
            }
        }
    }
    out
}

/// Result of [`align_matrices`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alignment {
    /// Aligned parity-check matrices, top to base.
    pub matrices: Vec<BinaryMatrix>,
    /// `columns[j - 1][slot]` is the original column placed at `slot`.
    pub columns: Vec<Vec<usize>>,
}

/// Permutes each layer's columns so that the Merkle proofs of
/// base symbols taken in order visit every layer in its greedy order.
pub fn align_matrices(
    params: &CmtParams,
    h_list: &[BinaryMatrix],
    orders: &[Vec<usize>],
) -> Result<Alignment> {
    let l = params.l;
    if h_list.len() != l || orders.len() != l {
        return Err(Error::Dimension(format!(
            "{} matrices and {} orders for {l} layers",
            h_list.len(),
            orders.len()
        )));
    }
    let mut columns = Vec::with_capacity(l);
    for j in 1..=l {
        let n = params.n(j);
        if h_list[j - 1].cols() != n {
            return Err(Error::Dimension(format!("layer {j} matrix is not {n} columns wide")));
        }
        crate::gf2::check_permutation(&orders[j - 1], n)?;
        if j == l {
            columns.push(orders[j - 1].clone());
            continue;
        }
        let mut slot_col = vec![usize::MAX; n];
        let mut counter = 0;
        for x in layer_hits(params, j, params.n_l) {
            slot_col[x] = orders[j - 1][counter];
            counter += 1;
        }
        if counter != n {
            return Err(Error::Dimension(format!("base proofs reach only {counter} of {n} symbols in layer {j}")));
        }
        columns.push(slot_col);
    }
    let matrices = h_list
        .iter()
        .zip(&columns)
        .map(|(h, c)| h.permute_columns(c))
        .collect::<Result<_>>()?;
    Ok(Alignment { matrices, columns })
}

/// `A^(j)`: base symbol `i` hits rows `i mod s_j` and `s_j + i mod p_j`.
pub fn coupling_matrix(params: &CmtParams, j: usize) -> BinaryMatrix {
    if j == params.l {
        return BinaryMatrix::identity(params.n_l);
    }
    let mut a = BinaryMatrix::zeros(params.n(j), params.n_l);
    for i in 0..params.n_l {
        let (d, p) = params.proof_indices(j, i);
        a.set(d, i, true);
        a.set(p, i, true);
    }
    a
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CouplingMatrices {
    /// `A^(1..l)`, the last one the identity.
    pub a: Vec<BinaryMatrix>,
    /// `Delta^(j) = min(Pi^(j) A^(j), 1)`.
    pub delta: Vec<BinaryMatrix>,
}

impl CouplingMatrices {
    /// The intermediate-layer matrices `A^(1..l-1)` used by the LP.
    pub fn intermediate(&self) -> &[BinaryMatrix] {
        &self.a[..self.a.len() - 1]
    }
}

/// Boolean product `min(P A, 1)`.
pub fn clamp_product(p: &BinaryMatrix, a: &BinaryMatrix) -> Result<BinaryMatrix> {
    if p.cols() != a.rows() {
        return Err(Error::Dimension(format!("{}x{} times {}x{}", p.rows(), p.cols(), a.rows(), a.cols())));
    }
    let mut out = BinaryMatrix::zeros(p.rows(), a.cols());
    for r in 0..p.rows() {
        for k in p.row_support(r) {
            for c in a.row_support(k) {
                out.set(r, c, true);
            }
        }
    }
    Ok(out)
}

/// `catalogs[j - 1]` lists the stopping sets of the aligned layer-`j` code.
pub fn build_coupling(params: &CmtParams, catalogs: &[StoppingSetCatalog]) -> Result<CouplingMatrices> {
    params.validate()?;
    if catalogs.len() != params.l {
        return Err(Error::Dimension(format!("{} catalogs for {} layers", catalogs.len(), params.l)));
    }
    let mut a = Vec::new();
    let mut delta = Vec::new();
    for j in 1..=params.l {
        if catalogs[j - 1].n() != params.n(j) {
            return Err(Error::Dimension(format!("layer {j} catalog has wrong code length")));
        }
        let aj = coupling_matrix(params, j);
        delta.push(clamp_product(&adjacency_pi(&catalogs[j - 1]), &aj)?);
        a.push(aj);
    }
    Ok(CouplingMatrices { a, delta })
}

/// Largest per-sample miss probability `max_k (1 - Delta_k x)`.
pub fn worst_miss(delta: &BinaryMatrix, x: &[f64]) -> Result<f64> {
    if delta.rows() == 0 {
        return Err(Error::EmptyCatalog);
    }
    if delta.cols() != x.len() {
        return Err(Error::Dimension(format!("Delta has {} columns, x has {}", delta.cols(), x.len())));
    }
    Ok((0..delta.rows())
        .map(|k| 1.0 - delta.row_support(k).iter().map(|&i| x[i]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
        .clamp(0.0, 1.0))
}

/// `[max(1 - Delta x)]^s`.
pub fn pf_medium(delta: &BinaryMatrix, x: &[f64], s: usize) -> Result<f64> {
    Ok(worst_miss(delta, x)?.powi(s as i32))
}

/// Per layer `max(pf_medium, (1 - xi beta mu)^s)` with `xi = 1/2` above the
/// base; layers with an empty catalog report the strong term alone.
pub fn pf_strong_bound(
    x: &[f64],
    betas: &[f64],
    mus: &[f64],
    deltas: &[BinaryMatrix],
    s: usize,
) -> Result<Vec<f64>> {
    let l = deltas.len();
    if betas.len() != l || mus.len() != l {
        return Err(Error::Dimension("betas, mus and deltas differ in length".into()));
    }
    (0..l)
        .map(|j| {
            let xi = if j + 1 < l { 0.5 } else { 1.0 };
            let strong = (1.0 - xi * betas[j] * mus[j]).clamp(0.0, 1.0).powi(s as i32);
            let medium = match pf_medium(&deltas[j], x, s) {
                Ok(p) => p,
                Err(Error::EmptyCatalog) => 0.0,
                Err(e) => return Err(e),
            };
            Ok(strong.max(medium))
        })
        .collect()
}

/// `eta_rec = max_j (n_j - omega_j + 1) / n_j`.
pub fn eta_rec(params: &CmtParams, omegas: &[usize]) -> Result<f64> {
    if omegas.len() != params.l {
        return Err(Error::Dimension(format!("{} omegas for {} layers", omegas.len(), params.l)));
    }
    Ok((1..=params.l)
        .map(|j| {
            let n = params.n(j) as f64;
            (n - omegas[j - 1] as f64 + 1.0) / n
        })
        .fold(f64::NEG_INFINITY, f64::max))
}

pub(crate) fn binary_entropy(p: f64) -> f64 {
    crate::construction::entropy_bits(&[p, 1.0 - p])
}

/// One `(layer, weight)` term of the weak-adversary soundness bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakTerm {
    pub n_layer: usize,
    pub omega: usize,
    /// Coverage of the layer's greedy-prefix samples on weight `omega`.
    pub tau: f64,
}

/// Weak-adversary soundness/agreement bound under the overall greedy
/// strategy, capped at 1.
pub fn soundness_bound_weak(terms: &[WeakTerm], eta: f64, n_l: usize, s: usize, rho: f64, m_nodes: usize) -> f64 {
    let first = terms
        .iter()
        .map(|t| pf_weak_greedy(t.tau, t.omega, t.n_layer, s, rho))
        .fold(0.0, f64::max);
    let random = (s - deterministic_samples(s, rho)) as f64;
    let exponent = binary_entropy(eta) * n_l as f64 - m_nodes as f64 * random * (1.0 / eta).log2();
    first.max(exponent.exp2()).min(1.0)
}

/// LP-sampling soundness/agreement bound, capped at 1. The top-entry sum
/// uses `ceil(eta n_l)` entries.
pub fn soundness_bound_lp(x: &[f64], pf_per_layer: &[f64], eta: f64, s: usize, m_nodes: usize) -> f64 {
    let n_l = x.len();
    let first = pf_per_layer.iter().copied().fold(0.0, f64::max);
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let top = ((eta * n_l as f64) - 1e-9).ceil().max(0.0) as usize;
    let mass: f64 = sorted.iter().take(top).sum::<f64>().min(1.0);
    let exponent = binary_entropy(eta) * n_l as f64 - m_nodes as f64 * s as f64 * (1.0 / mass).log2();
    first.max(exponent.exp2()).min(1.0)
}

/// Overall greedy strategy: the first `floor(rho s)` base symbols of
/// `ordered_vns`, then uniform samples with replacement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreedyStrategy {
    pub ordered_vns: Vec<usize>,
    pub rho: f64,
    pub s: usize,
}

impl GreedyStrategy {
    pub fn new(ordered_vns: Vec<usize>, rho: f64, s: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::InvalidParams(format!("rho {rho} outside [0, 1)")));
        }
        let mut seen = std::collections::HashSet::new();
        if !ordered_vns.iter().all(|v| seen.insert(*v)) {
            return Err(Error::InvalidParams("greedy order repeats a VN".into()));
        }
        if deterministic_samples(s, rho) > ordered_vns.len() {
            return Err(Error::InvalidParams("greedy order shorter than floor(rho s)".into()));
        }
        Ok(GreedyStrategy { ordered_vns, rho, s })
    }

    pub fn greedy_prefix(&self) -> &[usize] {
        &self.ordered_vns[..deterministic_samples(self.s, self.rho)]
    }
}

/// LP-sampling strategy `(x, beta^(1..l))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingStrategy {
    pub x: Vec<f64>,
    pub betas: Vec<f64>,
    /// Where the strategy came from, e.g. a config hash.
    #[serde(default)]
    pub provenance: String,
}

impl SamplingStrategy {
    pub fn uniform(n: usize, layers: usize) -> Self {
        SamplingStrategy {
            x: vec![1.0 / n as f64; n],
            betas: vec![0.0; layers],
            provenance: "uniform".into(),
        }
    }

    pub fn from_lp(sol: &LpSolution, provenance: impl Into<String>) -> Self {
        SamplingStrategy {
            x: sol.x.clone(),
            betas: sol.betas.clone(),
            provenance: provenance.into(),
        }
    }

    /// Checks the simplex, the base floor and the intermediate floors.
    pub fn validate(&self, a_mats: &[BinaryMatrix], tol: f64) -> Result<()> {
        let sum: f64 = self.x.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(Error::InvalidParams(format!("x sums to {sum}")));
        }
        let base = *self.betas.last().unwrap_or(&0.0);
        if self.betas.iter().any(|&b| b < -tol) || self.x.iter().any(|&xi| xi < base - tol || xi > 1.0 + tol) {
            return Err(Error::InvalidParams("x or beta outside bounds".into()));
        }
        for (j, a) in a_mats.iter().enumerate() {
            for k in 0..a.rows() {
                let mass: f64 = a.row_support(k).iter().map(|&i| self.x[i]).sum();
                if mass < self.betas[j] - tol {
                    return Err(Error::InvalidParams(format!("layer {} floor violated at row {k}", j + 1)));
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.12}")).collect::<Vec<_>>().join(" ");
        format!(
            "provenance {}\nx {}\nbetas {}\n",
            self.provenance,
            fmt(&self.x),
            fmt(&self.betas)
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut provenance = String::new();
        let mut x = None;
        let mut betas = None;
        let nums = |rest: &str| -> Result<Vec<f64>> {
            rest.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("`{t}`: {e}"))))
                .collect()
        };
        for line in text.lines() {
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            match key {
                "provenance" => provenance = rest.to_string(),
                "x" => x = Some(nums(rest)?),
                "betas" => betas = Some(nums(rest)?),
                "" => {}
                other => return Err(Error::Parse(format!("unknown strategy field `{other}`"))),
            }
        }
        Ok(SamplingStrategy {
            x: x.ok_or_else(|| Error::Parse("missing x".into()))?,
            betas: betas.ok_or_else(|| Error::Parse("missing betas".into()))?,
            provenance,
        })
    }
}
