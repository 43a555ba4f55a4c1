//! Weak, medium and strong adversaries and Monte Carlo simulation of light
//! nodes sampling a coded Merkle tree.

use crate::cmt::CmtParams;
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::sampling::{deterministic_samples, GreedyStrategy, SamplingStrategy};
use crate::stopping::StoppingSetCatalog;
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::IteratorRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdversaryModel {
    Weak,
    Medium,
    Strong,
}

impl AdversaryModel {
    pub fn name(self) -> &'static str {
        match self {
            AdversaryModel::Weak => "weak",
            AdversaryModel::Medium => "medium",
            AdversaryModel::Strong => "strong",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySpec {
    pub model: AdversaryModel,
    /// Per-layer size bound `mu_j`, top to base.
    pub mus: Vec<usize>,
    /// 1-based attack layer; `None` picks the worst layer.
    #[serde(default)]
    pub target_layer: Option<usize>,
}

impl AdversarySpec {
    pub fn validate(&self, layers: usize) -> Result<()> {
        if self.mus.len() != layers || self.mus.iter().any(|&m| m < 1) {
            return Err(Error::InvalidParams(format!("need {layers} values mu_j >= 1")));
        }
        if let Some(t) = self.target_layer {
            if t == 0 || t > layers {
                return Err(Error::InvalidParams(format!("target layer {t} outside 1..={layers}")));
            }
        }
        Ok(())
    }
}

/// Uniform choice among the weight-`kappa` sets of the catalog.
pub fn weak_hide<R: Rng>(cat: &StoppingSetCatalog, kappa: usize, rng: &mut R) -> Result<Vec<usize>> {
    cat.of_weight(kappa)
        .choose(rng)
        .map(<[usize]>::to_vec)
        .ok_or(Error::EmptyWeightClass(kappa))
}

/// The set least likely to be sampled under per-VN probabilities `x_layer`
/// and its failure probability `(1 - sum x)^s`; ties go to the
/// lexicographically smallest set.
pub fn medium_hide(cat: &StoppingSetCatalog, x_layer: &[f64], s: usize) -> Result<(Vec<usize>, f64)> {
    if x_layer.len() != cat.n() {
        return Err(Error::Dimension(format!("x has {} entries, code {}", x_layer.len(), cat.n())));
    }
    worst_set(cat.sets().iter().map(|set| {
        let hit: f64 = set.iter().map(|&v| x_layer[v]).sum();
        (set.as_slice(), 1.0 - hit)
    }), s)
}

/// [`medium_hide`] for layer `j` of a tree sampled through base symbols
/// drawn from `x`, accounting for proofs that hit one set twice.
pub fn medium_hide_layer(
    params: &CmtParams,
    j: usize,
    cat: &StoppingSetCatalog,
    x: &[f64],
    s: usize,
) -> Result<(Vec<usize>, f64)> {
    if x.len() != params.n_l {
        return Err(Error::Dimension(format!("x has {} entries, base {}", x.len(), params.n_l)));
    }
    worst_set(cat.sets().iter().map(|set| {
        let hit: f64 = touching_base(params, j, set).iter().map(|&i| x[i]).sum();
        (set.as_slice(), 1.0 - hit)
    }), s)
}

fn worst_set<'a>(candidates: impl Iterator<Item = (&'a [usize], f64)>, s: usize) -> Result<(Vec<usize>, f64)> {
    let mut best: Option<(&[usize], f64)> = None;
    for (set, miss) in candidates {
        let better = match best {
            None => true,
            Some((b, m)) => miss > m + 1e-15 || ((miss - m).abs() <= 1e-15 && set < b),
        };
        if better {
            best = Some((set, miss));
        }
    }
    let (set, miss) = best.ok_or(Error::EmptyCatalog)?;
    Ok((set.to_vec(), miss.clamp(0.0, 1.0).powi(s as i32)))
}

/// 1-based argmax; ties go to the deepest layer.
pub fn choose_attack_layer(pfs: &[f64]) -> usize {
    let mut best = 0;
    for (j, &p) in pfs.iter().enumerate() {
        if p >= pfs[best] {
            best = j;
        }
    }
    best + 1
}

/// Base symbols whose sample (with its Merkle proof) touches `set` on layer `j`.
pub fn touching_base(params: &CmtParams, j: usize, set: &[usize]) -> Vec<usize> {
    if j == params.l {
        return set.to_vec();
    }
    let mut mask = vec![false; params.n(j)];
    for &v in set {
        mask[v] = true;
    }
    (0..params.n_l)
        .filter(|&i| {
            let (d, p) = params.proof_indices(j, i);
            mask[d] || mask[p]
        })
        .collect()
}

/// A light node's sampling rule.
#[derive(Clone, Debug, PartialEq)]
pub enum LightStrategy {
    Greedy(GreedyStrategy),
    Lp(SamplingStrategy),
}

impl LightStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            LightStrategy::Greedy(_) => "greedy",
            LightStrategy::Lp(_) => "lp",
        }
    }

    /// Exact probability that `s` samples all miss the base symbols `touch`.
    pub fn miss_probability(&self, touch: &[usize], n_l: usize, s: usize) -> f64 {
        match self {
            LightStrategy::Lp(st) => {
                let hit: f64 = touch.iter().map(|&i| st.x[i]).sum();
                (1.0 - hit).clamp(0.0, 1.0).powi(s as i32)
            }
            LightStrategy::Greedy(g) => {
                let k = deterministic_samples(s, g.rho);
                if g.ordered_vns[..k].iter().any(|v| touch.contains(v)) {
                    0.0
                } else {
                    (1.0 - touch.len() as f64 / n_l as f64).powi((s - k) as i32)
                }
            }
        }
    }
}

/// Draws `s` base-symbol requests.
pub fn draw_samples<R: Rng>(strategy: &LightStrategy, n_l: usize, s: usize, rng: &mut R) -> Result<Vec<usize>> {
    match strategy {
        LightStrategy::Lp(st) => {
            let dist = WeightedIndex::new(st.x.iter().map(|&p| p.max(0.0)))
                .map_err(|e| Error::InvalidParams(format!("sampling distribution: {e}")))?;
            Ok((0..s).map(|_| dist.sample(rng)).collect())
        }
        LightStrategy::Greedy(g) => {
            let k = deterministic_samples(s, g.rho);
            let mut out = g.ordered_vns[..k].to_vec();
            out.extend((k..s).map(|_| rng.gen_range(0..n_l)));
            Ok(out)
        }
    }
}

/// True iff some requested base symbol, or a symbol of its Merkle proof, is
/// hidden. `hidden[j - 1]` lists the hidden symbols of layer `j`.
pub fn simulate_light_node<R: Rng>(
    strategy: &LightStrategy,
    hidden: &[Vec<usize>],
    params: &CmtParams,
    s: usize,
    rng: &mut R,
) -> Result<bool> {
    let masks = hidden_masks(params, hidden)?;
    let samples = draw_samples(strategy, params.n_l, s, rng)?;
    Ok(samples.iter().any(|&i| touches(params, &masks, i)))
}

fn hidden_masks(params: &CmtParams, hidden: &[Vec<usize>]) -> Result<Vec<Vec<bool>>> {
    if hidden.len() > params.l {
        return Err(Error::Dimension(format!("{} hidden lists for {} layers", hidden.len(), params.l)));
    }
    let mut masks: Vec<Vec<bool>> = (1..=params.l).map(|j| vec![false; params.n(j)]).collect();
    for (k, set) in hidden.iter().enumerate() {
        for &v in set {
            *masks[k]
                .get_mut(v)
                .ok_or_else(|| Error::OutOfRange(format!("hidden symbol {v} in layer {}", k + 1)))? = true;
        }
    }
    Ok(masks)
}

fn touches(params: &CmtParams, masks: &[Vec<bool>], i: usize) -> bool {
    if masks[params.l - 1][i] {
        return true;
    }
    (1..params.l).any(|j| {
        let (d, p) = params.proof_indices(j, i);
        masks[j - 1][d] || masks[j - 1][p]
    })
}

/// What the adversary hides in each simulated attack.
#[derive(Clone, Debug, PartialEq)]
pub enum Hiding {
    /// The same set on `layer` every trial.
    Fixed { layer: usize, set: Vec<usize> },
    /// A fresh uniformly chosen weight-`kappa` set on `layer` each trial.
    WeakClass { layer: usize, kappa: usize },
}

impl Hiding {
    pub fn layer(&self) -> usize {
        match self {
            Hiding::Fixed { layer, .. } | Hiding::WeakClass { layer, .. } => *layer,
        }
    }
}

/// Analytic failure probability of `strategy` against `hiding`.
pub fn analytic_pf(
    hiding: &Hiding,
    strategy: &LightStrategy,
    params: &CmtParams,
    catalogs: &[StoppingSetCatalog],
    s: usize,
) -> Result<f64> {
    match hiding {
        Hiding::Fixed { layer, set } => {
            Ok(strategy.miss_probability(&touching_base(params, *layer, set), params.n_l, s))
        }
        Hiding::WeakClass { layer, kappa } => {
            let cat = catalog_for(catalogs, *layer)?;
            let total = cat.count_of_weight(*kappa);
            if total == 0 {
                return Err(Error::EmptyWeightClass(*kappa));
            }
            let sum: f64 = cat
                .of_weight(*kappa)
                .map(|set| strategy.miss_probability(&touching_base(params, *layer, set), params.n_l, s))
                .sum();
            Ok(sum / total as f64)
        }
    }
}

fn catalog_for(catalogs: &[StoppingSetCatalog], layer: usize) -> Result<&StoppingSetCatalog> {
    catalogs
        .get(layer.wrapping_sub(1))
        .ok_or_else(|| Error::OutOfRange(format!("no catalog for layer {layer}")))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub failures: u64,
    pub trials: u64,
    pub estimate: f64,
    /// Binomial standard error `sqrt(p (1 - p) / trials)`.
    pub stderr: f64,
}

impl McEstimate {
    pub fn from_counts(failures: u64, trials: u64) -> Self {
        let p = failures as f64 / trials as f64;
        McEstimate {
            failures,
            trials,
            estimate: p,
            stderr: (p * (1.0 - p) / trials as f64).sqrt(),
        }
    }

    /// True iff the estimate is within `k` binomial standard errors of
    /// `value`, the errors taken at success probability `value`.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        let sigma = (value * (1.0 - value) / self.trials as f64).sqrt();
        (self.estimate - value).abs() <= k * sigma.max(1.0 / self.trials as f64)
    }
}

/// Failure rate of light nodes over `trials` independent attacks. Trial `t`
/// draws from stream `t` of `seed`, so the result does not depend on the
/// thread count.
pub fn monte_carlo_pf(
    hiding: &Hiding,
    strategy: &LightStrategy,
    params: &CmtParams,
    catalogs: &[StoppingSetCatalog],
    s: usize,
    trials: u64,
    seed: u64,
) -> Result<McEstimate> {
    if trials == 0 {
        return Err(Error::InvalidParams("trials must be >= 1".into()));
    }
    let layer = hiding.layer();
    if layer == 0 || layer > params.l {
        return Err(Error::OutOfRange(format!("layer {layer} outside 1..={}", params.l)));
    }
    if let Hiding::WeakClass { kappa, .. } = hiding {
        if catalog_for(catalogs, layer)?.count_of_weight(*kappa) == 0 {
            return Err(Error::EmptyWeightClass(*kappa));
        }
    }
    let failures: u64 = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<u64> {
            let mut rng = stream(seed, t);
            let set = match hiding {
                Hiding::Fixed { set, .. } => set.clone(),
                Hiding::WeakClass { kappa, .. } => weak_hide(&catalogs[layer - 1], *kappa, &mut rng)?,
            };
            let mut hidden = vec![Vec::new(); params.l];
            hidden[layer - 1] = set;
            let detected = simulate_light_node(strategy, &hidden, params, s, &mut rng)?;
            Ok(u64::from(!detected))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(McEstimate::from_counts(failures, trials))
}

/// One CSV result row; columns appear in field order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub construction: String,
    pub strategy: String,
    pub adversary: String,
    pub layer: usize,
    pub s: usize,
    pub analytic_pf: f64,
    pub mc_estimate: Option<f64>,
    pub stderr: Option<f64>,
    pub seed: u64,
}

pub fn write_rows<W: std::io::Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record([
            "construction",
            "strategy",
            "adversary",
            "layer",
            "s",
            "analytic_pf",
            "mc_estimate",
            "stderr",
            "seed",
        ])
        .map_err(csv_err)?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Parse(format!("csv: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_sets() -> StoppingSetCatalog {
        StoppingSetCatalog::from_sets(4, 5, vec![vec![0, 1], vec![2, 3]]).unwrap()
    }

    #[test]
    fn weak_hide_is_uniform() {
        let cat = two_sets();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws = 10_000;
        let first = (0..draws)
            .filter(|_| weak_hide(&cat, 2, &mut rng).unwrap() == vec![0, 1])
            .count() as f64;
        let sigma = (draws as f64 * 0.25).sqrt();
        assert!((first - draws as f64 / 2.0).abs() < 3.0 * sigma);
        let single = StoppingSetCatalog::from_sets(4, 5, vec![vec![1, 3]]).unwrap();
        assert_eq!(weak_hide(&single, 2, &mut rng).unwrap(), vec![1, 3]);
        assert!(weak_hide(&single, 3, &mut rng).is_err());
    }

    #[test]
    fn medium_hide_examples() {
        let cat = StoppingSetCatalog::from_sets(5, 5, vec![vec![0, 1], vec![2, 3, 4]]).unwrap();
        let (set, pf) = medium_hide(&cat, &[0.2; 5], 3).unwrap();
        assert_eq!(set, vec![0, 1]);
        assert!((pf - 0.6f64.powi(3)).abs() < 1e-15);
        let (set, _) = medium_hide(&cat, &[0.5, 0.5, 0.0, 0.0, 0.0], 3).unwrap();
        assert_eq!(set, vec![2, 3, 4]);
        let (set, pf) = medium_hide(&two_sets(), &[0.25; 4], 2).unwrap();
        assert_eq!(set, vec![0, 1]);
        let pi = crate::stopping::adjacency_pi(&two_sets());
        assert!((pf - crate::sampling::pf_medium(&pi, &[0.25; 4], 2).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn attack_layer_choice() {
        assert_eq!(choose_attack_layer(&[0.1, 0.2, 0.3]), 3);
        assert_eq!(choose_attack_layer(&[0.4]), 1);
        assert_eq!(choose_attack_layer(&[0.3, 0.3, 0.1]), 2);
    }

    #[test]
    fn detection_edge_cases() {
        let params = CmtParams::new(8, 0.5, 4, 2, 1).unwrap();
        let st = LightStrategy::Lp(SamplingStrategy::uniform(8, 2));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            assert!(!simulate_light_node(&st, &[], &params, 5, &mut rng).unwrap());
            let all = vec![Vec::new(), (0..8).collect()];
            assert!(simulate_light_node(&st, &all, &params, 1, &mut rng).unwrap());
        }
        let est = monte_carlo_pf(
            &Hiding::Fixed { layer: 2, set: vec![0] },
            &st,
            &params,
            &[],
            1,
            1,
            0,
        )
        .unwrap();
        assert!(est.estimate == 0.0 || est.estimate == 1.0);
    }

    #[test]
    fn monte_carlo_matches_closed_form() {
        let params = CmtParams::new(8, 0.5, 4, 2, 1).unwrap();
        let st = LightStrategy::Lp(SamplingStrategy {
            x: vec![0.05, 0.05, 0.2, 0.2, 0.1, 0.1, 0.15, 0.15],
            betas: vec![0.0, 0.05],
            provenance: String::new(),
        });
        // Symbol 1 of layer 1 is on the proof of every odd base symbol.
        let hiding = Hiding::Fixed { layer: 1, set: vec![1] };
        let exact = analytic_pf(&hiding, &st, &params, &[], 3).unwrap();
        assert!((exact - (1.0f64 - 0.5).powi(3)).abs() < 1e-12);
        let est = monte_carlo_pf(&hiding, &st, &params, &[], 3, 20_000, 11).unwrap();
        assert!(est.agrees_with(exact, 3.0), "{est:?} vs {exact}");
        let again = monte_carlo_pf(&hiding, &st, &params, &[], 3, 20_000, 11).unwrap();
        assert_eq!(est, again);
    }

    #[test]
    fn csv_header_on_empty() {
        let mut buf = Vec::new();
        write_rows(&mut buf, &[]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "construction,strategy,adversary,layer,s,analytic_pf,mc_estimate,stderr,seed\n"
        );
    }
}
