//! Configuration-driven experiments: code construction and selection,
//! stopping-set catalogs, alignment, LP-sampling, attacks and reports.

use crate::adversary::{
    analytic_pf, medium_hide, medium_hide_layer, monte_carlo_pf, write_rows, Hiding, LightStrategy, ResultRow,
};
use crate::alist::to_alist;
use crate::cmt::{CmtCodes, CmtParams};
use crate::construction::{construct, content_hash, Construction, ConstructionConfig, CycleCounts};
use crate::error::{Error, Result};
use crate::gf2::information_prefix_permutation;
use crate::lp::{lp_base, lp_full, LpSolution};
use crate::rng::{derive_seed, rng_from_seed};
use crate::sampling::{
    align_matrices, build_coupling, pf_medium, pf_random, pf_ratio, pf_strong_bound, pf_weak_greedy, tau,
    CouplingMatrices, GreedyStrategy, SamplingStrategy,
};
use crate::stopping::{adjacency_pi, enumerate_stopping_sets, min_stopping_set_size, StoppingSetCatalog};
use crate::tanner::TannerGraph;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

fn default_theta_hat() -> f64 {
    0.997
}

fn one() -> f64 {
    1.0
}

/// Per-layer code and sampling parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    pub d_v: usize,
    pub g_c: usize,
    #[serde(default)]
    pub t_th: usize,
    #[serde(default = "default_theta_hat")]
    pub theta_hat: f64,
    /// Adversary size bound; derived from `gamma` when absent.
    #[serde(default)]
    pub mu: Option<usize>,
    /// LC-PEG LP parameter; defaults to `mu`.
    #[serde(default)]
    pub mu_hat: Option<f64>,
    /// LP trade-off weight of the strong term.
    #[serde(default = "one")]
    pub theta: f64,
    /// Greedy cycle-length cap; defaults to girth + 4.
    #[serde(default)]
    pub g_max: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancePolicy {
    /// Monte Carlo agreement band in binomial standard errors.
    pub mc_sigmas: f64,
    /// Allowed relative excess over a reference value.
    pub relative_slack: f64,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        TolerancePolicy {
            mc_sigmas: 3.0,
            relative_slack: 0.5,
        }
    }
}

fn default_batch() -> usize {
    1
}

fn default_rho() -> f64 {
    0.9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Master seed; every stage seed is derived from it.
    pub seed: u64,
    pub cmt: CmtParams,
    pub constructions: Vec<Construction>,
    /// Layer settings, top to base.
    pub layers: Vec<LayerConfig>,
    /// Candidate codes per construction and layer; the best is kept.
    #[serde(default = "default_batch")]
    pub seed_batch: usize,
    /// `mu_j = omega_min(PEG_j) + gamma` for layers without an explicit `mu`.
    #[serde(default)]
    pub gamma: Option<usize>,
    /// Sample count for the table; defaults to `n_l / 4`.
    #[serde(default)]
    pub table_s: Option<usize>,
    #[serde(default)]
    pub s_grid: Vec<usize>,
    #[serde(default)]
    pub theta_grid: Vec<f64>,
    /// Sample count of the theta trade-off curves; defaults to `table_s`.
    #[serde(default)]
    pub theta_s: Option<usize>,
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Stopping ratio of the ensemble baseline.
    #[serde(default)]
    pub ensemble_nu: Option<f64>,
    #[serde(default)]
    pub trials: u64,
    #[serde(default)]
    pub tolerance: TolerancePolicy,
    /// Reference values keyed `construction/column`, e.g. `lc-peg/random`.
    #[serde(default)]
    pub reference: BTreeMap<String, f64>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.cmt.validate()?;
        if self.layers.len() != self.cmt.l {
            return bad(format!("{} layer entries for {} layers", self.layers.len(), self.cmt.l));
        }
        if self.constructions.is_empty() {
            return bad("no constructions listed".into());
        }
        if self.seed_batch == 0 {
            return bad("seed_batch must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho {} outside [0, 1)", self.rho));
        }
        for (k, lc) in self.layers.iter().enumerate() {
            let j = k + 1;
            self.construction_config(j, 0)?.validate()?;
            if !(0.0..=1.0).contains(&lc.theta) {
                return bad(format!("layer {j}: theta {} outside [0, 1]", lc.theta));
            }
            if lc.mu.is_none() && self.gamma.is_none() {
                return bad(format!("layer {j}: neither mu nor gamma given"));
            }
            if lc.mu == Some(0) {
                return bad(format!("layer {j}: mu must be >= 1"));
            }
        }
        if let Some(nu) = self.ensemble_nu {
            if !(0.0..=1.0).contains(&nu) {
                return bad(format!("ensemble_nu {nu} outside [0, 1]"));
            }
        }
        if self.theta_grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return bad("theta_grid values must lie in [0, 1]".into());
        }
        Ok(())
    }

    pub fn table_s(&self) -> usize {
        self.table_s.unwrap_or(self.cmt.n_l / 4)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// Construction parameters for layer `j` with `mu_hat` left at zero.
    fn construction_config(&self, j: usize, seed: u64) -> Result<ConstructionConfig> {
        let lc = &self.layers[j - 1];
        let n = self.cmt.n(j);
        Ok(ConstructionConfig {
            n,
            m: n - self.cmt.s(j),
            d_v: lc.d_v,
            g_c: lc.g_c,
            t_th: lc.t_th,
            theta_hat: lc.theta_hat,
            mu_hat: 0.0,
            seed,
        })
    }
}

/// Stage seeds, recorded in the manifest.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedLog(pub BTreeMap<String, u64>);

impl SeedLog {
    fn derive(&mut self, master: u64, label: String) -> u64 {
        let s = derive_seed(master, &label);
        self.0.insert(label, s);
        s
    }
}

/// One selected, aligned layer code.
#[derive(Clone, Debug)]
pub struct LayerCode {
    pub layer: usize,
    pub config: ConstructionConfig,
    pub candidate: usize,
    /// Aligned Tanner graph.
    pub graph: TannerGraph,
    /// Stopping sets of size `< mu_j` in aligned labels.
    pub catalog: StoppingSetCatalog,
    pub omega_min: usize,
    pub girth: Option<usize>,
    /// Greedy order in original labels.
    pub order: Vec<usize>,
    /// `columns[slot]` is the original column placed at `slot`.
    pub columns: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Scheme {
    pub construction: Construction,
    pub layers: Vec<LayerCode>,
    pub coupling: CouplingMatrices,
    pub lp: LpSolution,
}

impl Scheme {
    pub fn base(&self) -> &LayerCode {
        self.layers.last().expect("at least one layer")
    }

    pub fn strategy(&self, provenance: &str) -> SamplingStrategy {
        SamplingStrategy::from_lp(&self.lp, provenance)
    }

    /// After alignment the base greedy order is the identity.
    pub fn greedy_strategy(&self, rho: f64, s: usize) -> Result<GreedyStrategy> {
        GreedyStrategy::new((0..self.base().graph.n_vns()).collect(), rho, s)
    }

    pub fn deltas(&self) -> &[crate::gf2::BinaryMatrix] {
        &self.coupling.delta
    }
}

#[derive(Clone, Debug)]
pub struct PipelineState {
    pub config: ExperimentConfig,
    pub mus: Vec<usize>,
    pub schemes: Vec<Scheme>,
    pub seeds: SeedLog,
}

impl PipelineState {
    pub fn scheme(&self, kind: Construction) -> Option<&Scheme> {
        self.schemes.iter().find(|s| s.construction == kind)
    }
}

struct Candidate {
    index: usize,
    config: ConstructionConfig,
    graph: TannerGraph,
    catalog: StoppingSetCatalog,
    omega_min: usize,
    objective: f64,
}

fn omega_of(g: &TannerGraph, cat: &StoppingSetCatalog) -> Result<usize> {
    match cat.min_weight() {
        Some(w) => Ok(w),
        None => min_stopping_set_size(g, g.n_vns()),
    }
}

fn build_candidates(
    cfg: &ExperimentConfig,
    kind: Construction,
    j: usize,
    mu: usize,
    seeds: &[u64],
) -> Result<Vec<Candidate>> {
    let lc = &cfg.layers[j - 1];
    seeds
        .par_iter()
        .enumerate()
        .map(|(index, &seed)| {
            let mut config = cfg.construction_config(j, seed)?;
            config.mu_hat = lc.mu_hat.unwrap_or(mu as f64);
            let graph = construct(kind, &config)?;
            let catalog = enumerate_stopping_sets(&graph, mu)?;
            let omega_min = omega_of(&graph, &catalog)?;
            let objective = lp_base(&adjacency_pi(&catalog), mu as f64, lc.theta)?.objective;
            Ok(Candidate {
                index,
                config,
                graph,
                catalog,
                omega_min,
                objective,
            })
        })
        .collect()
}

/// Largest `omega_min`, then lowest per-layer LP objective, then earliest seed.
fn select(cands: Vec<Candidate>) -> Candidate {
    cands
        .into_iter()
        .reduce(|best, c| {
            let tol = 1e-12;
            let better = c.omega_min > best.omega_min
                || (c.omega_min == best.omega_min && c.objective < best.objective - tol);
            if better {
                c
            } else {
                best
            }
        })
        .expect("batch is nonempty")
}

/// Resolves `mu_j`, building the first PEG candidate where `gamma` applies.
fn resolve_mus(cfg: &ExperimentConfig, seeds: &mut SeedLog) -> Result<Vec<usize>> {
    (1..=cfg.cmt.l)
        .map(|j| {
            if let Some(mu) = cfg.layers[j - 1].mu {
                return Ok(mu);
            }
            let gamma = cfg.gamma.expect("validated");
            let seed = seeds.derive(cfg.seed, format!("construct/peg/layer{j}/0"));
            let g = construct(Construction::Peg, &cfg.construction_config(j, seed)?)?;
            Ok(min_stopping_set_size(&g, g.n_vns())? + gamma)
        })
        .collect()
}

fn build_scheme(cfg: &ExperimentConfig, kind: Construction, mus: &[usize], seeds: &mut SeedLog) -> Result<Scheme> {
    let params = &cfg.cmt;
    let l = params.l;
    let mut picked = Vec::with_capacity(l);
    for j in 1..=l {
        let batch: Vec<u64> = (0..cfg.seed_batch)
            .map(|c| seeds.derive(cfg.seed, format!("construct/{}/layer{j}/{c}", kind.name())))
            .collect();
        let cands = build_candidates(cfg, kind, j, mus[j - 1], &batch).map_err(|e| e.in_stage("construct"))?;
        picked.push(select(cands));
    }
    let mut orders = Vec::with_capacity(l);
    for (k, c) in picked.iter().enumerate() {
        let j = k + 1;
        let seed = seeds.derive(cfg.seed, format!("greedy/{}/layer{j}", kind.name()));
        let girth = c.graph.girth();
        let g_min = girth.unwrap_or(4);
        let g_max = cfg.layers[k].g_max.unwrap_or(g_min + 4);
        let order = crate::sampling::greedy_set(&c.graph, g_min, g_max, c.graph.n_vns(), &mut rng_from_seed(seed))
            .map_err(|e| e.in_stage("greedy"))?;
        orders.push(order);
    }
    let h: Vec<_> = picked.iter().map(|c| c.graph.to_matrix()).collect();
    let alignment = align_matrices(params, &h, &orders).map_err(|e| e.in_stage("align"))?;
    let mut layers = Vec::with_capacity(l);
    for (k, (c, order)) in picked.into_iter().zip(orders).enumerate() {
        let columns = alignment.columns[k].clone();
        let mut inv = vec![0; columns.len()];
        for (slot, &col) in columns.iter().enumerate() {
            inv[col] = slot;
        }
        layers.push(LayerCode {
            layer: k + 1,
            candidate: c.index,
            girth: c.graph.girth(),
            graph: TannerGraph::from_matrix(&alignment.matrices[k]),
            catalog: c.catalog.relabel(&inv)?,
            omega_min: c.omega_min,
            config: c.config,
            order,
            columns,
        });
    }
    let catalogs: Vec<StoppingSetCatalog> = layers.iter().map(|c| c.catalog.clone()).collect();
    let coupling = build_coupling(params, &catalogs).map_err(|e| e.in_stage("coupling"))?;
    let mus_f: Vec<f64> = mus.iter().map(|&m| m as f64).collect();
    let thetas: Vec<f64> = cfg.layers.iter().map(|lc| lc.theta).collect();
    let lp = lp_full(&coupling.delta, coupling.intermediate(), &mus_f, &thetas).map_err(|e| e.in_stage("lp"))?;
    Ok(Scheme {
        construction: kind,
        layers,
        coupling,
        lp,
    })
}

/// Builds, selects and aligns codes and solves LP-sampling for every
/// construction of the config.
pub fn prepare(cfg: &ExperimentConfig) -> Result<PipelineState> {
    cfg.validate()?;
    let mut seeds = SeedLog::default();
    let mus = resolve_mus(cfg, &mut seeds).map_err(|e| e.in_stage("mu"))?;
    let mut schemes = Vec::new();
    for &kind in &cfg.constructions {
        schemes.push(build_scheme(cfg, kind, &mus, &mut seeds)?);
    }
    Ok(PipelineState {
        config: cfg.clone(),
        mus,
        schemes,
        seeds,
    })
}

/// Failure probabilities of one scheme at `s` on the base layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeCells {
    pub random: f64,
    pub lp_strong: f64,
    pub lp_medium: f64,
    /// Attack layer maximising the LP medium probability.
    pub attack_layer: usize,
}

pub fn scheme_cells(state: &PipelineState, scheme: &Scheme, s: usize) -> Result<SchemeCells> {
    let n_l = state.config.cmt.n_l;
    let mus: Vec<f64> = state.mus.iter().map(|&m| m as f64).collect();
    let strong = pf_strong_bound(&scheme.lp.x, &scheme.lp.betas, &mus, scheme.deltas(), s)?;
    let medium: Vec<f64> = scheme
        .deltas()
        .iter()
        .map(|d| match pf_medium(d, &scheme.lp.x, s) {
            Err(Error::EmptyCatalog) => Ok(0.0),
            other => other,
        })
        .collect::<Result<_>>()?;
    Ok(SchemeCells {
        random: pf_random(scheme.base().omega_min, n_l, s),
        lp_strong: *strong.last().expect("layers"),
        lp_medium: *medium.last().expect("layers"),
        attack_layer: crate::adversary::choose_attack_layer(&medium),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub cmt: String,
    pub construction: String,
    pub column: String,
    pub s: usize,
    pub pf: f64,
    pub reference: Option<f64>,
    pub within_tolerance: Option<bool>,
}

fn cmt_label(p: &CmtParams) -> String {
    format!("({},{},{},{})", p.n_l, p.rate, p.q, p.l)
}

/// Ensemble baseline and, per construction, random sampling and LP-sampling
/// against strong and medium adversaries, at `s = table_s`.
pub fn failure_table(state: &PipelineState) -> Result<Vec<FailureRow>> {
    let cfg = &state.config;
    let s = cfg.table_s();
    let label = cmt_label(&cfg.cmt);
    let mut rows = Vec::new();
    let mut push = |construction: &str, column: &str, pf: f64| {
        let reference = cfg.reference.get(&format!("{construction}/{column}")).copied();
        rows.push(FailureRow {
            cmt: label.clone(),
            construction: construction.to_string(),
            column: column.to_string(),
            s,
            pf,
            reference,
            within_tolerance: reference.map(|r| pf <= r * (1.0 + cfg.tolerance.relative_slack)),
        });
    };
    if let Some(nu) = cfg.ensemble_nu {
        push("ensemble", "random", pf_ratio(nu, s));
    }
    for scheme in &state.schemes {
        let cells = scheme_cells(state, scheme, s)?;
        let name = scheme.construction.name();
        push(name, "random", cells.random);
        push(name, "lp-strong", cells.lp_strong);
        push(name, "lp-medium", cells.lp_medium);
    }
    Ok(rows)
}

/// Attack simulations on the base layer, one row per adversary/strategy.
pub fn attack_rows(state: &PipelineState, s: usize, trials: u64) -> Result<Vec<ResultRow>> {
    let cfg = &state.config;
    let params = &cfg.cmt;
    let l = params.l;
    let mut rows = Vec::new();
    for scheme in &state.schemes {
        let name = scheme.construction.name();
        let catalogs: Vec<StoppingSetCatalog> = scheme.layers.iter().map(|c| c.catalog.clone()).collect();
        let base = &catalogs[l - 1];
        let lp = LightStrategy::Lp(scheme.strategy(name));
        let uniform = LightStrategy::Lp(SamplingStrategy::uniform(params.n_l, l));
        let greedy = LightStrategy::Greedy(scheme.greedy_strategy(cfg.rho, s)?);
        let mut cases: Vec<(&str, &LightStrategy, Hiding, f64)> = Vec::new();
        if let Some(kappa) = base.min_weight() {
            let LightStrategy::Greedy(gs) = &greedy else { unreachable!() };
            let t = tau(gs.greedy_prefix(), base, kappa)?;
            let formula = pf_weak_greedy(t, kappa, params.n_l, s, cfg.rho);
            cases.push(("weak", &greedy, Hiding::WeakClass { layer: l, kappa }, formula));
            let (set, pf) = medium_hide_layer(params, l, base, &scheme.lp.x, s)?;
            cases.push(("medium", &lp, Hiding::Fixed { layer: l, set }, pf));
            let (set, pf) = medium_hide(base, &vec![1.0 / params.n_l as f64; params.n_l], s)?;
            cases.push(("medium", &uniform, Hiding::Fixed { layer: l, set }, pf));
        }
        for (adv, strat, hiding, formula) in cases {
            let exact = analytic_pf(&hiding, strat, params, &catalogs, s)?;
            debug_assert!((exact - formula).abs() < 1e-9);
            let strat_name = match strat {
                LightStrategy::Lp(st) if st.provenance == "uniform" => "uniform",
                other => other.name(),
            };
            let label = format!("mc/{name}/{adv}/{strat_name}/{s}");
            let seed = derive_seed(cfg.seed, &label);
            let (mc, se) = if trials > 0 {
                let est = monte_carlo_pf(&hiding, strat, params, &catalogs, s, trials, seed)?;
                (Some(est.estimate), Some(est.stderr))
            } else {
                (None, None)
            };
            rows.push(ResultRow {
                construction: name.into(),
                strategy: strat_name.into(),
                adversary: adv.into(),
                layer: l,
                s,
                analytic_pf: formula,
                mc_estimate: mc,
                stderr: se,
                seed,
            });
        }
        let cells = scheme_cells(state, scheme, s)?;
        rows.push(ResultRow {
            construction: name.into(),
            strategy: "lp".into(),
            adversary: "strong".into(),
            layer: l,
            s,
            analytic_pf: cells.lp_strong,
            mc_estimate: None,
            stderr: None,
            seed: 0,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub curve: String,
    pub value: f64,
}

pub const FIGURES: [&str; 3] = ["pf-vs-s", "theta-tradeoff", "cycle-distribution"];

/// Analytic curves of one figure family.
///
/// * `pf-vs-s`: base-layer failure probability against `s` for every
///   construction and strategy.
/// * `theta-tradeoff`: LP-sampling medium probability and strong term at
///   `theta_s` as the base-layer `theta` runs over `theta_grid`.
/// * `cycle-distribution`: per base VN, ranked by decreasing 6-cycle
///   fraction, the 6-cycle fraction and the minimum-weight stopping-set
///   fraction (`x` is the rank).
pub fn emit_figure_curves(state: &PipelineState, figure: &str) -> Result<Vec<CurvePoint>> {
    let cfg = &state.config;
    let n_l = cfg.cmt.n_l;
    let mut out = Vec::new();
    match figure {
        "pf-vs-s" => {
            for scheme in &state.schemes {
                let name = scheme.construction.name();
                for &s in &cfg.s_grid {
                    let cells = scheme_cells(state, scheme, s)?;
                    out.push(CurvePoint { x: s as f64, curve: format!("{name}/random"), value: cells.random });
                    out.push(CurvePoint { x: s as f64, curve: format!("{name}/lp-medium"), value: cells.lp_medium });
                    out.push(CurvePoint { x: s as f64, curve: format!("{name}/lp-strong"), value: cells.lp_strong });
                    let base = &scheme.base().catalog;
                    if let Some(kappa) = base.min_weight() {
                        let gs = scheme.greedy_strategy(cfg.rho, s)?;
                        let t = tau(gs.greedy_prefix(), base, kappa)?;
                        out.push(CurvePoint {
                            x: s as f64,
                            curve: format!("{name}/weak-greedy"),
                            value: pf_weak_greedy(t, kappa, n_l, s, cfg.rho),
                        });
                    }
                }
            }
        }
        "theta-tradeoff" => {
            let s = cfg.theta_s.unwrap_or_else(|| cfg.table_s());
            let l = cfg.cmt.l;
            let mus: Vec<f64> = state.mus.iter().map(|&m| m as f64).collect();
            for scheme in &state.schemes {
                let name = scheme.construction.name();
                for &theta in &cfg.theta_grid {
                    let mut thetas: Vec<f64> = cfg.layers.iter().map(|lc| lc.theta).collect();
                    thetas[l - 1] = theta;
                    let sol = lp_full(scheme.deltas(), scheme.coupling.intermediate(), &mus, &thetas)?;
                    let medium = match pf_medium(&scheme.deltas()[l - 1], &sol.x, s) {
                        Err(Error::EmptyCatalog) => 0.0,
                        other => other?,
                    };
                    let strong = (1.0 - sol.betas[l - 1] * mus[l - 1]).clamp(0.0, 1.0).powi(s as i32);
                    out.push(CurvePoint { x: theta, curve: format!("{name}/medium"), value: medium });
                    out.push(CurvePoint { x: theta, curve: format!("{name}/strong-term"), value: strong });
                }
            }
        }
        "cycle-distribution" => {
            for scheme in &state.schemes {
                let name = scheme.construction.name();
                let base = scheme.base();
                let zeta = cycle_fractions(&base.graph, 6)?;
                let order = ranked_by(&zeta);
                let ss = match base.catalog.min_weight() {
                    Some(k) => crate::stopping::vn_stopping_distribution(&base.catalog, k)?,
                    None => vec![0.0; n_l],
                };
                for (rank, &v) in order.iter().enumerate() {
                    out.push(CurvePoint { x: rank as f64, curve: format!("{name}/zeta6"), value: zeta[v] });
                    out.push(CurvePoint { x: rank as f64, curve: format!("{name}/ss-min"), value: ss[v] });
                }
            }
        }
        other => return Err(Error::Config(format!("unknown figure `{other}`; known: {FIGURES:?}"))),
    }
    Ok(out)
}

/// `zeta^len`: fraction of the graph's `len`-cycles touched by each VN.
pub fn cycle_fractions(g: &TannerGraph, len: usize) -> Result<Vec<f64>> {
    let counts = CycleCounts::from_graph(g, len + 2)?;
    let total = g.enumerate_cycles(len)?.of_length(len).len();
    Ok(counts.fractions(len, total))
}

/// VN indices by decreasing value, ties by index.
pub fn ranked_by(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

/// Fraction of weight-`kappa` stopping sets touched by the `top` VNs with the
/// largest `len`-cycle fractions.
pub fn top_cycle_coverage(g: &TannerGraph, cat: &StoppingSetCatalog, len: usize, top: usize, kappa: usize) -> Result<f64> {
    let order = ranked_by(&cycle_fractions(g, len)?);
    tau(&order[..top.min(order.len())], cat, kappa)
}

pub fn write_failure_table<W: std::io::Write>(out: W, rows: &[FailureRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(crate::adversary::csv_err)?;
    }
    if rows.is_empty() {
        w.write_record(["cmt", "construction", "column", "s", "pf", "reference", "within_tolerance"])
            .map_err(crate::adversary::csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_curves<W: std::io::Write>(out: W, figure: &str, points: &[CurvePoint]) -> Result<()> {
    let first = if figure == "cycle-distribution" {
        "rank"
    } else if figure == "theta-tradeoff" {
        "theta"
    } else {
        "s"
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record([first, "curve", "value"]).map_err(crate::adversary::csv_err)?;
    for p in points {
        w.write_record([p.x.to_string(), p.curve.clone(), p.value.to_string()])
            .map_err(crate::adversary::csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub mus: Vec<usize>,
    pub seeds: BTreeMap<String, u64>,
    /// SHA-256 of every file written, keyed by relative path.
    pub files: BTreeMap<String, String>,
}

/// Output directory that records a hash of every file it writes.
pub struct OutDir<'a> {
    root: &'a Path,
    files: BTreeMap<String, String>,
}

impl<'a> OutDir<'a> {
    pub fn new(root: &'a Path) -> Self {
        OutDir {
            root,
            files: BTreeMap::new(),
        }
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes)?;
        self.files.insert(rel.to_string(), hex::encode(Sha256::digest(bytes)));
        Ok(())
    }

    /// Writes `manifest.json` listing everything written so far.
    pub fn finish(self, state: &PipelineState) -> Result<Manifest> {
        let cfg = &state.config;
        let manifest = Manifest {
            name: cfg.name.clone(),
            config_hash: cfg.hash(),
            master_seed: cfg.seed,
            mus: state.mus.clone(),
            seeds: state.seeds.0.clone(),
            files: self.files,
        };
        std::fs::create_dir_all(self.root)?;
        std::fs::write(self.root.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(manifest)
    }
}

fn pretty<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    Ok((serde_json::to_string_pretty(v)? + "\n").into_bytes())
}

/// Aligned parity-check matrices (`.alist`) with a JSON sidecar per layer.
pub fn write_codes(state: &PipelineState, dir: &mut OutDir) -> Result<()> {
    dir.write("config.json", &pretty(&state.config)?)?;
    for scheme in &state.schemes {
        let name = scheme.construction.name();
        for lc in &scheme.layers {
            let alist = to_alist(&lc.graph.to_matrix());
            let meta = serde_json::json!({
                "construction": name,
                "layer": lc.layer,
                "config": lc.config,
                "candidate": lc.candidate,
                "girth": lc.girth,
                "omega_min": lc.omega_min,
                "columns": lc.columns,
                "content_hash": content_hash(&alist),
            });
            dir.write(&format!("codes/{name}/layer{}.alist", lc.layer), alist.as_bytes())?;
            dir.write(&format!("codes/{name}/layer{}.json", lc.layer), &pretty(&meta)?)?;
        }
    }
    Ok(())
}

/// Stopping-set catalogs in aligned labels.
pub fn write_catalogs(state: &PipelineState, dir: &mut OutDir) -> Result<()> {
    for scheme in &state.schemes {
        let name = scheme.construction.name();
        for lc in &scheme.layers {
            dir.write(&format!("catalogs/{name}/layer{}.txt", lc.layer), lc.catalog.to_text().as_bytes())?;
        }
    }
    Ok(())
}

/// LP-sampling strategies, one file per construction.
pub fn write_strategies(state: &PipelineState, dir: &mut OutDir) -> Result<()> {
    let provenance = format!("lp config {}", state.config.hash());
    for scheme in &state.schemes {
        let name = scheme.construction.name();
        dir.write(&format!("strategies/{name}.txt"), scheme.strategy(&provenance).to_text().as_bytes())?;
    }
    Ok(())
}

/// `failure_table.csv` and one CSV per figure family under `curves/`.
pub fn write_reports(state: &PipelineState, dir: &mut OutDir) -> Result<()> {
    let mut buf = Vec::new();
    write_failure_table(&mut buf, &failure_table(state)?)?;
    dir.write("failure_table.csv", &buf)?;
    for fig in FIGURES {
        let points = emit_figure_curves(state, fig)?;
        let mut buf = Vec::new();
        write_curves(&mut buf, fig, &points)?;
        dir.write(&format!("curves/{fig}.csv"), &buf)?;
    }
    Ok(())
}

/// `attacks.csv` at `s = table_s`.
pub fn write_attacks(state: &PipelineState, dir: &mut OutDir, trials: u64) -> Result<()> {
    let rows = attack_rows(state, state.config.table_s(), trials).map_err(|e| e.in_stage("attack"))?;
    let mut buf = Vec::new();
    write_rows(&mut buf, &rows)?;
    dir.write("attacks.csv", &buf)
}

/// Writes every output under `out`, plus `manifest.json`.
pub fn write_outputs(state: &PipelineState, out: &Path, trials: u64) -> Result<Manifest> {
    let mut dir = OutDir::new(out);
    write_codes(state, &mut dir)?;
    write_catalogs(state, &mut dir)?;
    write_strategies(state, &mut dir)?;
    write_reports(state, &mut dir).map_err(|e| e.in_stage("report"))?;
    write_attacks(state, &mut dir, trials)?;
    dir.finish(state)
}

/// Full pipeline: [`prepare`] then [`write_outputs`] with the configured
/// number of Monte Carlo trials.
pub fn run_pipeline(cfg: &ExperimentConfig, out: &Path) -> Result<Manifest> {
    let state = prepare(cfg)?;
    write_outputs(&state, out, cfg.trials)
}

/// CMT codes from a scheme's aligned matrices. A layer whose data prefix is
/// not part of an information set gets the fewest column swaps that fix it;
/// the applied permutations (new position -> aligned column) are returned.
pub fn scheme_cmt_codes(params: &CmtParams, scheme: &Scheme) -> Result<(CmtCodes, Vec<Vec<usize>>)> {
    let mut hs = Vec::new();
    let mut perms = Vec::new();
    for lc in &scheme.layers {
        let h = lc.graph.to_matrix();
        let perm = information_prefix_permutation(&h, params.s(lc.layer))?;
        hs.push(h.permute_columns(&perm)?);
        perms.push(perm);
    }
    Ok((CmtCodes::new(params, hs)?, perms))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        let layer = |mu| LayerConfig {
            d_v: 3,
            g_c: 8,
            t_th: 3,
            theta_hat: 0.997,
            mu: Some(mu),
            mu_hat: None,
            theta: 1.0,
            g_max: None,
        };
        ExperimentConfig {
            name: "small".into(),
            seed: 7,
            cmt: CmtParams::new(32, 0.5, 4, 2, 64).unwrap(),
            constructions: vec![Construction::Peg, Construction::LcPeg],
            layers: vec![layer(4), layer(6)],
            seed_batch: 2,
            gamma: None,
            table_s: None,
            s_grid: vec![4, 8],
            theta_grid: vec![0.0, 0.5, 1.0],
            theta_s: None,
            rho: 0.5,
            ensemble_nu: Some(0.1),
            trials: 200,
            tolerance: TolerancePolicy::default(),
            reference: BTreeMap::new(),
        }
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_sizes() {
        let cfg = small_config();
        let mut v = serde_json::to_value(&cfg).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
        let mut v = serde_json::to_value(&cfg).unwrap();
        v["cmt"]["n_l"] = serde_json::json!(30);
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
        assert!(ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).is_ok());
    }

    #[test]
    fn pipeline_is_deterministic() {
        let cfg = small_config();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = run_pipeline(&cfg, a.path()).unwrap();
        let mb = run_pipeline(&cfg, b.path()).unwrap();
        assert_eq!(ma, mb);
        for rel in ma.files.keys() {
            assert_eq!(
                std::fs::read(a.path().join(rel)).unwrap(),
                std::fs::read(b.path().join(rel)).unwrap(),
                "{rel}"
            );
        }
        assert!(ma.files.contains_key("failure_table.csv"));
    }

    #[test]
    fn lp_solutions_are_feasible() {
        let state = prepare(&small_config()).unwrap();
        for scheme in &state.schemes {
            let st = scheme.strategy("t");
            st.validate(scheme.coupling.intermediate(), 1e-9).unwrap();
            let uniform = SamplingStrategy::uniform(32, 2);
            let mus: Vec<f64> = state.mus.iter().map(|&m| m as f64).collect();
            let thetas = [1.0, 1.0];
            let p = crate::lp::lp_full_problem(scheme.deltas(), scheme.coupling.intermediate(), &mus, &thetas).unwrap();
            p.check(&scheme.lp, 1e-9).unwrap();
            let betas = p.max_betas(&uniform.x);
            assert!(scheme.lp.objective <= p.value(&uniform.x, &betas) + 1e-9);
        }
    }

    #[test]
    fn unknown_figure_and_empty_grid() {
        let mut cfg = small_config();
        cfg.s_grid.clear();
        let state = prepare(&cfg).unwrap();
        assert!(emit_figure_curves(&state, "nope").is_err());
        let pts = emit_figure_curves(&state, "pf-vs-s").unwrap();
        assert!(pts.is_empty());
        let mut buf = Vec::new();
        write_curves(&mut buf, "pf-vs-s", &pts).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "s,curve,value\n");
    }
}
