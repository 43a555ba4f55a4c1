//! Minimax linear programs over sampling distributions.
//!
//! A problem minimises `max_k f_k(x, beta)` over the probability simplex in
//! `x`, where every `f_k` is affine and each `beta_j` is bounded above by
//! linear "floor" forms in `x`. The epigraph LP (`min t` subject to
//! `f_k <= t`) has few variables and many rows, so the solver runs a dense
//! tableau simplex on its dual and reads the primal point off the final
//! reduced costs.

use crate::error::{Error, Result};
use crate::gf2::BinaryMatrix;
use crate::tanner::{Cycle, TannerGraph};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt::Write;

/// Feasibility and optimality tolerance.
pub const LP_TOL: f64 = 1e-9;

/// `constant + sum coeff * var` over the `x` and `beta` variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearForm {
    pub constant: f64,
    pub x_coeffs: Vec<(usize, f64)>,
    pub beta_coeffs: Vec<(usize, f64)>,
}

impl LinearForm {
    /// `1 - sum_{i in support} x_i`.
    pub fn miss(support: &[usize]) -> Self {
        LinearForm {
            constant: 1.0,
            x_coeffs: support.iter().map(|&i| (i, -1.0)).collect(),
            beta_coeffs: Vec::new(),
        }
    }

    /// `theta * (1 - xi * mu * beta_j)`.
    pub fn strong(beta: usize, theta: f64, xi: f64, mu: f64) -> Self {
        LinearForm {
            constant: theta,
            x_coeffs: Vec::new(),
            beta_coeffs: vec![(beta, -theta * xi * mu)],
        }
    }

    pub fn eval(&self, x: &[f64], betas: &[f64]) -> f64 {
        self.constant
            + self.x_coeffs.iter().map(|&(i, a)| a * x[i]).sum::<f64>()
            + self.beta_coeffs.iter().map(|&(j, a)| a * betas[j]).sum::<f64>()
    }
}

/// `beta_j <= sum w_i x_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Floor {
    pub beta: usize,
    pub x_coeffs: Vec<(usize, f64)>,
}

impl Floor {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.x_coeffs.iter().map(|&(i, w)| w * x[i]).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimaxLpProblem {
    pub n: usize,
    pub n_betas: usize,
    pub forms: Vec<LinearForm>,
    pub floors: Vec<Floor>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpStatus {
    Optimal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub betas: Vec<f64>,
    pub objective: f64,
    pub status: LpStatus,
}

impl MinimaxLpProblem {
    pub fn new(n: usize, n_betas: usize) -> Self {
        MinimaxLpProblem {
            n,
            n_betas,
            forms: Vec::new(),
            floors: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParams("LP needs at least one x variable".into()));
        }
        let bad_x = |c: &[(usize, f64)]| c.iter().any(|&(i, a)| i >= self.n || !a.is_finite());
        let bad_b = |c: &[(usize, f64)]| c.iter().any(|&(j, a)| j >= self.n_betas || !a.is_finite());
        for f in &self.forms {
            if !f.constant.is_finite() || bad_x(&f.x_coeffs) || bad_b(&f.beta_coeffs) {
                return Err(Error::InvalidParams("malformed inner form".into()));
            }
        }
        for fl in &self.floors {
            if fl.beta >= self.n_betas || bad_x(&fl.x_coeffs) {
                return Err(Error::InvalidParams("malformed floor constraint".into()));
            }
        }
        if self.forms.is_empty() {
            return Err(Error::InvalidParams("LP has no inner forms".into()));
        }
        Ok(())
    }

    /// Largest feasible `beta_j` for a given `x` (no floor means unbounded,
    /// reported as `+inf`).
    pub fn max_betas(&self, x: &[f64]) -> Vec<f64> {
        let mut b = vec![f64::INFINITY; self.n_betas];
        for fl in &self.floors {
            b[fl.beta] = b[fl.beta].min(fl.eval(x));
        }
        b
    }

    /// `max_k f_k(x, beta)`.
    pub fn value(&self, x: &[f64], betas: &[f64]) -> f64 {
        self.forms
            .iter()
            .map(|f| f.eval(x, betas))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Objective of the uniform strategy with the largest feasible floors.
    pub fn uniform_value(&self) -> f64 {
        let x = vec![1.0 / self.n as f64; self.n];
        let b: Vec<f64> = self.max_betas(&x).into_iter().map(|v| v.max(0.0)).collect();
        self.value(&x, &b)
    }

    /// Verifies the solution invariants to `tol`.
    pub fn check(&self, sol: &LpSolution, tol: f64) -> Result<()> {
        let fail = |msg: String| Err(Error::LpNumerical(msg));
        if sol.x.len() != self.n || sol.betas.len() != self.n_betas {
            return fail("solution has wrong dimensions".into());
        }
        let sum: f64 = sol.x.iter().sum();
        if (sum - 1.0).abs() > tol {
            return fail(format!("sum of x is {sum}"));
        }
        if let Some(v) = sol.x.iter().find(|&&v| !(-tol..=1.0 + tol).contains(&v)) {
            return fail(format!("x entry {v} outside [0, 1]"));
        }
        if let Some(b) = sol.betas.iter().find(|&&b| b < -tol) {
            return fail(format!("negative beta {b}"));
        }
        for fl in &self.floors {
            if sol.betas[fl.beta] > fl.eval(&sol.x) + tol {
                return fail(format!("floor on beta {} violated", fl.beta));
            }
        }
        let v = self.value(&sol.x, &sol.betas);
        if (v - sol.objective).abs() > tol {
            return fail(format!("objective {} but recomputed {v}", sol.objective));
        }
        Ok(())
    }

    /// Plain-text dump for cross-checking with external solvers.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# minimise max_k form_k over x in simplex");
        let _ = writeln!(
            s,
            "dims n={} betas={} forms={} floors={}",
            self.n,
            self.n_betas,
            self.forms.len(),
            self.floors.len()
        );
        for f in &self.forms {
            let _ = write!(s, "form {}", f.constant);
            for &(i, a) in &f.x_coeffs {
                let _ = write!(s, " x{i}:{a}");
            }
            for &(j, a) in &f.beta_coeffs {
                let _ = write!(s, " b{j}:{a}");
            }
            s.push('\n');
        }
        for fl in &self.floors {
            let _ = write!(s, "floor b{} <=", fl.beta);
            for &(i, w) in &fl.x_coeffs {
                let _ = write!(s, " x{i}:{w}");
            }
            s.push('\n');
        }
        s
    }

    /// Drops duplicate miss-forms and miss-forms whose support contains
    /// another one (their value can never be the maximum).
    fn pruned(&self) -> MinimaxLpProblem {
        let is_miss = |f: &LinearForm| {
            f.constant == 1.0
                && f.beta_coeffs.is_empty()
                && f.x_coeffs.iter().all(|&(_, a)| a == -1.0)
        };
        let words = self.n.div_ceil(64);
        let mut miss: Vec<Vec<u64>> = Vec::new();
        let mut seen = HashSet::new();
        let mut other = Vec::new();
        for f in &self.forms {
            if is_miss(f) {
                let mut bits = vec![0u64; words];
                for &(i, _) in &f.x_coeffs {
                    bits[i / 64] |= 1 << (i % 64);
                }
                if seen.insert(bits.clone()) {
                    miss.push(bits);
                }
            } else {
                other.push(f.clone());
            }
        }
        miss.sort_by_key(|b| b.iter().map(|w| w.count_ones()).sum::<u32>());
        let mut kept: Vec<Vec<u64>> = Vec::new();
        for b in miss {
            let dominated = kept
                .iter()
                .any(|k| k.iter().zip(&b).all(|(kw, bw)| kw & !bw == 0));
            if !dominated {
                kept.push(b);
            }
        }
        let mut forms: Vec<LinearForm> = kept
            .iter()
            .map(|b| {
                let support: Vec<usize> = (0..self.n).filter(|&i| b[i / 64] >> (i % 64) & 1 == 1).collect();
                LinearForm::miss(&support)
            })
            .collect();
        forms.extend(other);
        MinimaxLpProblem {
            n: self.n,
            n_betas: self.n_betas,
            forms,
            floors: self.floors.clone(),
        }
    }
}

/// Solves the epigraph LP of `p`.
pub fn solve_minimax(p: &MinimaxLpProblem) -> Result<LpSolution> {
    p.validate()?;
    let q = p.pruned();
    let raw = solve_dual(&q)?;
    Ok(polish(p, raw))
}

/// Projects a numerically-noisy optimum back onto the feasible set.
fn polish(p: &MinimaxLpProblem, (x_raw, b_raw): (Vec<f64>, Vec<f64>)) -> LpSolution {
    let mut x: Vec<f64> = x_raw.iter().map(|v| v.max(0.0)).collect();
    let sum: f64 = x.iter().sum();
    if sum > 0.0 {
        x.iter_mut().for_each(|v| *v /= sum);
    } else {
        x = vec![1.0 / p.n as f64; p.n];
    }
    let caps = p.max_betas(&x);
    let betas: Vec<f64> = b_raw
        .iter()
        .zip(&caps)
        .enumerate()
        .map(|(j, (&b, &cap))| {
            // A beta without a floor and with no negative weight is irrelevant;
            // otherwise take the largest admissible value.
            let weight: f64 = p
                .forms
                .iter()
                .flat_map(|f| f.beta_coeffs.iter())
                .filter(|&&(jj, _)| jj == j)
                .map(|&(_, a)| a)
                .fold(0.0, f64::min);
            let v = if weight < 0.0 && cap.is_finite() { cap } else { b.min(cap) };
            v.max(0.0)
        })
        .collect();
    let objective = p.value(&x, &betas);
    LpSolution {
        x,
        betas,
        objective,
        status: LpStatus::Optimal,
    }
}

/// Builds the dual of the epigraph LP in standard form and solves it.
///
/// Rows: one per `x_i`, one per `beta_j`, one for the epigraph variable.
/// Columns: form multipliers, floor multipliers, `w+`, `w-`, slacks for the
/// `x`/`beta` rows, and one artificial for the epigraph row.
fn solve_dual(p: &MinimaxLpProblem) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = p.n;
    let nb = p.n_betas;
    let rows = n + nb + 1;
    let nf = p.forms.len();
    let nfl = p.floors.len();
    let col_w = nf + nfl;
    let col_slack = col_w + 2;
    let col_art = col_slack + n + nb;
    let cols = col_art + 1;
    let t_row = n + nb;

    let mut tab = Tableau::new(rows, cols);
    let mut cost = vec![0.0; cols];
    for (k, f) in p.forms.iter().enumerate() {
        for &(i, a) in &f.x_coeffs {
            *tab.at(i, k) -= a;
        }
        for &(j, a) in &f.beta_coeffs {
            *tab.at(n + j, k) -= a;
        }
        *tab.at(t_row, k) = 1.0;
        cost[k] = -f.constant;
    }
    for (f, fl) in p.floors.iter().enumerate() {
        for &(i, w) in &fl.x_coeffs {
            *tab.at(i, nf + f) += w;
        }
        *tab.at(n + fl.beta, nf + f) -= 1.0;
    }
    for i in 0..n {
        *tab.at(i, col_w) = 1.0;
        *tab.at(i, col_w + 1) = -1.0;
    }
    cost[col_w] = -1.0;
    cost[col_w + 1] = 1.0;
    for r in 0..n + nb {
        *tab.at(r, col_slack + r) = 1.0;
        tab.basis[r] = col_slack + r;
    }
    *tab.at(t_row, col_art) = 1.0;
    *tab.rhs(t_row) = 1.0;
    tab.basis[t_row] = col_art;

    // Phase 1: drive the artificial out.
    let mut phase1 = vec![0.0; cols];
    phase1[col_art] = 1.0;
    tab.set_costs(&phase1);
    tab.optimise(&[])?;
    if tab.objective_value() > 1e-9 {
        return Err(Error::LpUnbounded);
    }
    tab.set_costs(&cost);
    tab.optimise(&[col_art])?;

    let x: Vec<f64> = (0..n).map(|i| tab.reduced_cost(col_slack + i)).collect();
    let betas: Vec<f64> = (0..nb).map(|j| tab.reduced_cost(col_slack + n + j)).collect();
    Ok((x, betas))
}

/// Dense simplex tableau for `min c^T z, A z = b, z >= 0` with a known
/// feasible basis.
struct Tableau {
    rows: usize,
    cols: usize,
    /// Row-major `rows x (cols + 1)`; the last column is the right-hand side.
    a: Vec<f64>,
    /// Reduced costs, last entry is minus the objective value.
    d: Vec<f64>,
    basis: Vec<usize>,
}

const PIVOT_EPS: f64 = 1e-11;
const MAX_PIVOTS: usize = 200_000;
/// Degenerate pivots tolerated before switching to Bland's rule.
const STALL_LIMIT: usize = 50;

impl Tableau {
    fn new(rows: usize, cols: usize) -> Self {
        Tableau {
            rows,
            cols,
            a: vec![0.0; rows * (cols + 1)],
            d: vec![0.0; cols + 1],
            basis: vec![usize::MAX; rows],
        }
    }

    fn at(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.a[r * (self.cols + 1) + c]
    }

    fn rhs(&mut self, r: usize) -> &mut f64 {
        let w = self.cols + 1;
        &mut self.a[r * w + self.cols]
    }

    fn set_costs(&mut self, c: &[f64]) {
        self.d[..self.cols].copy_from_slice(c);
        self.d[self.cols] = 0.0;
        let w = self.cols + 1;
        for r in 0..self.rows {
            let cb = c[self.basis[r]];
            if cb != 0.0 {
                let row = &self.a[r * w..(r + 1) * w];
                for (dj, &aj) in self.d.iter_mut().zip(row) {
                    *dj -= cb * aj;
                }
            }
        }
    }

    fn objective_value(&self) -> f64 {
        -self.d[self.cols]
    }

    fn reduced_cost(&self, c: usize) -> f64 {
        self.d[c]
    }

    fn optimise(&mut self, banned: &[usize]) -> Result<()> {
        let mut stall = 0usize;
        let mut is_banned = vec![false; self.cols];
        for &b in banned {
            is_banned[b] = true;
        }
        for _ in 0..MAX_PIVOTS {
            let bland = stall >= STALL_LIMIT;
            let mut enter = usize::MAX;
            let mut best = -LP_TOL;
            for j in 0..self.cols {
                if is_banned[j] {
                    continue;
                }
                let dj = self.d[j];
                if dj < best {
                    enter = j;
                    if bland {
                        break;
                    }
                    best = dj;
                }
            }
            if enter == usize::MAX {
                return Ok(());
            }
            let w = self.cols + 1;
            let mut leave = usize::MAX;
            let mut ratio = f64::INFINITY;
            let mut piv = 0.0;
            for r in 0..self.rows {
                let arj = self.a[r * w + enter];
                if arj > PIVOT_EPS {
                    let q = self.a[r * w + self.cols].max(0.0) / arj;
                    let better = if q < ratio - 1e-12 {
                        true
                    } else if q <= ratio + 1e-12 {
                        if bland {
                            self.basis[r] < self.basis[leave]
                        } else {
                            arj > piv
                        }
                    } else {
                        false
                    };
                    if better {
                        leave = r;
                        ratio = q;
                        piv = arj;
                    }
                }
            }
            if leave == usize::MAX {
                return Err(Error::LpInfeasible);
            }
            if ratio <= 1e-12 {
                stall += 1;
            } else {
                stall = 0;
            }
            self.pivot(leave, enter);
        }
        Err(Error::LpNumerical(format!("no convergence after {MAX_PIVOTS} pivots")))
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.cols + 1;
        let p = self.a[r * w + c];
        let (before, rest) = self.a.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for v in prow.iter_mut() {
            *v /= p;
        }
        prow[c] = 1.0;
        let nz: Vec<usize> = (0..w).filter(|&j| prow[j] != 0.0).collect();
        let eliminate = |row: &mut [f64]| {
            let f = row[c];
            if f != 0.0 {
                for &j in &nz {
                    row[j] -= f * prow[j];
                }
                row[c] = 0.0;
            }
        };
        for row in before.chunks_mut(w) {
            eliminate(row);
        }
        for row in after.chunks_mut(w) {
            eliminate(row);
        }
        eliminate(&mut self.d);
        self.basis[r] = c;
    }
}

/// LP (base layer): forms `1 - Pi_k x` and `theta (1 - beta mu)` with
/// `beta <= x_i`.
pub fn lp_base(pi: &BinaryMatrix, mu: f64, theta: f64) -> Result<LpSolution> {
    check_theta(theta)?;
    let n = pi.cols();
    if n == 0 {
        return Err(Error::InvalidParams("empty code".into()));
    }
    let mut p = MinimaxLpProblem::new(n, 1);
    for k in 0..pi.rows() {
        p.forms.push(LinearForm::miss(&pi.row_support(k)));
    }
    p.forms.push(LinearForm::strong(0, theta, 1.0, mu));
    for i in 0..n {
        p.floors.push(Floor {
            beta: 0,
            x_coeffs: vec![(i, 1.0)],
        });
    }
    if pi.rows() == 0 {
        return Ok(uniform_solution(&p));
    }
    solve_minimax(&p)
}

fn uniform_solution(p: &MinimaxLpProblem) -> LpSolution {
    let x = vec![1.0 / p.n as f64; p.n];
    let betas: Vec<f64> = p.max_betas(&x).into_iter().map(|b| b.clamp(0.0, 1.0)).collect();
    let objective = p.value(&x, &betas);
    LpSolution {
        x,
        betas,
        objective,
        status: LpStatus::Optimal,
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidParams(format!("theta {theta} outside [0, 1]")));
    }
    Ok(())
}

/// Builds LP (all layers). `deltas[j]` is `|Psi_j| x n_l`, `a_mats[j]` is
/// `n_j x n_l` for the `l - 1` intermediate layers; layer order is top to
/// base.
pub fn lp_full_problem(
    deltas: &[BinaryMatrix],
    a_mats: &[BinaryMatrix],
    mus: &[f64],
    thetas: &[f64],
) -> Result<MinimaxLpProblem> {
    let l = deltas.len();
    if l == 0 || a_mats.len() + 1 != l || mus.len() != l || thetas.len() != l {
        return Err(Error::Dimension(format!(
            "{} deltas, {} coupling matrices, {} mus, {} thetas",
            deltas.len(),
            a_mats.len(),
            mus.len(),
            thetas.len()
        )));
    }
    let n = deltas[l - 1].cols();
    if deltas.iter().any(|d| d.cols() != n) || a_mats.iter().any(|a| a.cols() != n) {
        return Err(Error::Dimension("all matrices must have n_l columns".into()));
    }
    for &t in thetas {
        check_theta(t)?;
    }
    let mut p = MinimaxLpProblem::new(n, l);
    for d in deltas {
        for k in 0..d.rows() {
            p.forms.push(LinearForm::miss(&d.row_support(k)));
        }
    }
    for j in 0..l {
        let xi = if j + 1 < l { 0.5 } else { 1.0 };
        p.forms.push(LinearForm::strong(j, thetas[j], xi, mus[j]));
    }
    for (j, a) in a_mats.iter().enumerate() {
        for k in 0..a.rows() {
            p.floors.push(Floor {
                beta: j,
                x_coeffs: a.row_support(k).into_iter().map(|i| (i, 1.0)).collect(),
            });
        }
    }
    for i in 0..n {
        p.floors.push(Floor {
            beta: l - 1,
            x_coeffs: vec![(i, 1.0)],
        });
    }
    Ok(p)
}

pub fn lp_full(
    deltas: &[BinaryMatrix],
    a_mats: &[BinaryMatrix],
    mus: &[f64],
    thetas: &[f64],
) -> Result<LpSolution> {
    let p = lp_full_problem(deltas, a_mats, mus, thetas)?;
    if deltas.iter().all(|d| d.rows() == 0) {
        return Ok(uniform_solution(&p));
    }
    solve_minimax(&p)
}

/// Optimal value of the cycle-based LP used to score candidate edges.
pub fn lp_objective(
    cycles: &[Cycle],
    g: &TannerGraph,
    theta_hat: f64,
    mu_hat: f64,
) -> Result<f64> {
    lp_objective_sets(cycles.iter().map(|c| c.vns()), g.n_vns(), theta_hat, mu_hat)
}

/// Same as [`lp_objective`] with cycles given by their VN sets.
pub fn lp_objective_sets<'a>(
    sets: impl IntoIterator<Item = &'a [usize]>,
    n: usize,
    theta_hat: f64,
    mu_hat: f64,
) -> Result<f64> {
    check_theta(theta_hat)?;
    let mut p = MinimaxLpProblem::new(n, 1);
    for s in sets {
        if let Some(&v) = s.iter().find(|&&v| v >= n) {
            return Err(Error::OutOfRange(format!("cycle VN {v} outside graph")));
        }
        p.forms.push(LinearForm::miss(s));
    }
    let has_rows = !p.forms.is_empty();
    p.forms.push(LinearForm::strong(0, theta_hat, 1.0, mu_hat));
    for i in 0..n {
        p.floors.push(Floor {
            beta: 0,
            x_coeffs: vec![(i, 1.0)],
        });
    }
    if !has_rows {
        return Ok(uniform_solution(&p).objective);
    }
    Ok(solve_minimax(&p)?.objective)
}
