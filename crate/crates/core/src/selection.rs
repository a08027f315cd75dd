//! Choosing which nodes to control: greedy over equilibrium (or GF) costs,
//! the L1-relaxation pick, and degree/distance centrality baselines.

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::InfluenceModel;
use crate::equilibrium::{convex_relaxation, feasibility_for_set, reachable_from, substochastic_inverse, tf_equilibrium_with};
use crate::error::{FermentError, Result};
use crate::graph::{degree_centers, distance_centers, InfluenceGraph};
use crate::ocp::{solve_gf, GfProblem};
use crate::solver::{QpSettings, QpSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Greedy,
    GreedyGf,
    Lasso,
    Degree,
    Distance,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Greedy => "greedy",
            Method::GreedyGf => "greedy-gf",
            Method::Lasso => "lasso",
            Method::Degree => "degree",
            Method::Distance => "distance",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionResult {
    pub method: Method,
    pub nodes: Vec<usize>,
    /// cost after each addition; `+∞` (JSON `null`) while infeasible
    pub per_step_costs: Vec<f64>,
    pub final_cost: f64,
}

impl SelectionResult {
    pub fn is_feasible(&self) -> bool {
        self.final_cost.is_finite()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "method": self.method,
            "nodes": self.nodes,
            "per_step_costs": self.per_step_costs.iter().map(|&c| finite_or_null(c)).collect::<Vec<_>>(),
            "final_cost": finite_or_null(self.final_cost),
        })
    }
}

fn finite_or_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else {
        serde_json::Value::Null
    }
}

#[derive(Debug, Clone)]
pub struct GreedyOptions {
    /// cover nodes count toward `m`
    pub cover_counts: bool,
    pub qp: QpSettings,
}

impl Default for GreedyOptions {
    fn default() -> Self {
        Self { cover_counts: true, qp: QpSettings::default() }
    }
}

/// Evaluates equilibrium costs of controlled sets over a fixed `(A, q, R)`.
pub struct EquilibriumCosts<'a> {
    base: &'a InfluenceModel,
    tau: &'a DVector<f64>,
    inverse: DMatrix<f64>,
    settings: QpSettings,
}

impl<'a> EquilibriumCosts<'a> {
    pub fn new(base: &'a InfluenceModel, tau: &'a DVector<f64>, settings: QpSettings) -> Result<Self> {
        if tau.len() != base.n() {
            return Err(FermentError::DimensionMismatch(format!("tau has length {}", tau.len())));
        }
        Ok(Self { base, tau, inverse: substochastic_inverse(base.a())?, settings })
    }

    /// `+∞` for sets that fail the reachability test.
    pub fn cost(&self, set: &[usize], warm: Option<&QpSolution>) -> Result<(f64, Option<QpSolution>)> {
        if !feasibility_for_set(self.base.a(), self.base.q(), self.tau, set).is_feasible() {
            return Ok((f64::INFINITY, None));
        }
        let model = self.base.with_controlled(set.to_vec())?;
        let (eq, sol) = tf_equilibrium_with(&model, self.tau, &self.inverse, &self.settings, warm)?;
        Ok((eq.cost, Some(sol)))
    }

    /// Costs of every prefix of `nodes`.
    pub fn prefix_costs(&self, nodes: &[usize]) -> Result<Vec<f64>> {
        let mut warm: Option<QpSolution> = None;
        let mut out = Vec::with_capacity(nodes.len());
        for k in 1..=nodes.len() {
            let w = warm.as_ref().map(|w| pad(w, k));
            let (c, sol) = self.cost(&nodes[..k], w.as_ref())?;
            out.push(c);
            warm = sol;
        }
        Ok(out)
    }
}

/// Warm start for one extra variable: the new control starts at zero.
fn pad(sol: &QpSolution, vars: usize) -> QpSolution {
    let mut w = sol.clone();
    w.z = DVector::from_fn(vars, |i, _| if i < sol.z.len() { sol.z[i] } else { 0.0 });
    w
}

/// Rows that need lifting (`τ_i > q_i`).
fn demand(q: &DVector<f64>, tau: &DVector<f64>) -> Vec<bool> {
    (0..q.len()).map(|i| tau[i] > q[i]).collect()
}

/// Greedy set cover of the rows needing a lift by forward-reachable sets.
/// Ties go to the cheaper equilibrium once the set is feasible, then to the
/// smaller index.
pub fn reachability_cover(costs: &EquilibriumCosts<'_>) -> Result<Vec<usize>> {
    let a = costs.base.a();
    let n = a.nrows();
    let need = demand(costs.base.q(), costs.tau);
    let reach: Vec<Vec<bool>> = (0..n).map(|j| reachable_from(a, &[j])).collect();
    let mut covered = vec![false; n];
    let mut cover = Vec::new();
    while (0..n).any(|i| need[i] && !covered[i]) {
        let gain = |j: usize| (0..n).filter(|&i| need[i] && !covered[i] && reach[j][i]).count();
        let best = (0..n).filter(|j| !cover.contains(j)).map(gain).max().unwrap_or(0);
        if best == 0 {
            return Err(FermentError::Infeasible("some rows cannot be reached by any node".into()));
        }
        let tied: Vec<usize> = (0..n).filter(|j| !cover.contains(j) && gain(*j) == best).collect();
        let pick = if tied.len() > 1 {
            let scored: Vec<(usize, f64)> = tied
                .par_iter()
                .map(|&j| {
                    let mut set = cover.clone();
                    set.push(j);
                    (j, costs.cost(&set, None).map(|c| c.0).unwrap_or(f64::INFINITY))
                })
                .collect();
            argmin(&scored).unwrap_or(tied[0])
        } else {
            tied[0]
        };
        for i in 0..n {
            covered[i] |= reach[pick][i];
        }
        cover.push(pick);
    }
    Ok(cover)
}

/// Smallest cost with a relative tie tolerance, ties to the earlier entry.
fn argmin(scored: &[(usize, f64)]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &(j, c) in scored {
        if !c.is_finite() {
            continue;
        }
        match best {
            Some((_, b)) if c >= b - 1e-9 * b.abs().max(1.0) => {}
            _ => best = Some((j, c)),
        }
    }
    best.map(|b| b.0)
}

/// Greedy selection over equilibrium costs starting from the reachability
/// cover. `base` supplies `A`, `q` and the cost scale; its own controlled
/// set is ignored.
pub fn greedy_select_tf(base: &InfluenceModel, tau: &DVector<f64>, m: usize, opts: &GreedyOptions) -> Result<SelectionResult> {
    let costs = EquilibriumCosts::new(base, tau, opts.qp.clone())?;
    let cover = reachability_cover(&costs)?;
    let target = if opts.cover_counts { m } else { m + cover.len() };
    if cover.len() > target {
        return Err(FermentError::Infeasible(format!("reachability cover needs {} nodes, m = {m}", cover.len())));
    }
    if target > base.n() {
        return Err(FermentError::InvalidParameter(format!("cannot pick {target} of {} nodes", base.n())));
    }
    let mut nodes = Vec::with_capacity(target);
    let mut per_step = Vec::with_capacity(target);
    let mut warm: Option<QpSolution> = None;
    for &c in &cover {
        nodes.push(c);
        let (cost, sol) = costs.cost(&nodes, warm.as_ref().map(|w| pad(w, nodes.len())).as_ref())?;
        per_step.push(cost);
        warm = sol;
    }
    while nodes.len() < target {
        let w = warm.as_ref().map(|w| pad(w, nodes.len() + 1));
        let candidates: Vec<usize> = (0..base.n()).filter(|j| !nodes.contains(j)).collect();
        let scored: Vec<(usize, f64, Option<QpSolution>)> = candidates
            .par_iter()
            .map(|&j| {
                let mut set = nodes.clone();
                set.push(j);
                match costs.cost(&set, w.as_ref()) {
                    Ok((c, s)) => (j, c, s),
                    Err(e) => {
                        warn!("candidate {j} skipped: {e}");
                        (j, f64::INFINITY, None)
                    }
                }
            })
            .collect();
        let flat: Vec<(usize, f64)> = scored.iter().map(|s| (s.0, s.1)).collect();
        let pick = argmin(&flat).ok_or_else(|| FermentError::NotConverged("no candidate could be scored".into()))?;
        let (_, cost, sol) = scored.into_iter().find(|s| s.0 == pick).expect("pick among candidates");
        nodes.push(pick);
        per_step.push(cost);
        warm = sol;
    }
    let final_cost = per_step.last().copied().unwrap_or(f64::INFINITY);
    Ok(SelectionResult { method: Method::Greedy, nodes, per_step_costs: per_step, final_cost })
}

#[derive(Debug, Clone, Copy)]
pub struct GfSelectionParams {
    pub tau: f64,
    pub k: f64,
    pub a: f64,
    pub t0: usize,
    pub horizon: usize,
}

/// Greedy selection scored by the full GF optimal-control cost.
pub fn greedy_select_gf(
    base: &InfluenceModel,
    x0: &DVector<f64>,
    params: GfSelectionParams,
    m: usize,
    opts: &GreedyOptions,
) -> Result<SelectionResult> {
    let tau_vec = DVector::from_element(base.n(), params.tau);
    let costs = EquilibriumCosts::new(base, &tau_vec, opts.qp.clone())?;
    let cover = reachability_cover(&costs)?;
    let target = if opts.cover_counts { m } else { m + cover.len() };
    if cover.len() > target {
        return Err(FermentError::Infeasible(format!("reachability cover needs {} nodes, m = {m}", cover.len())));
    }
    let score = |set: &[usize]| -> f64 {
        let run = || -> Result<f64> {
            let model = base.with_controlled(set.to_vec())?;
            let p = GfProblem::new(model, x0.clone(), params.tau, params.a, params.k, params.t0, params.horizon)?;
            Ok(solve_gf(&p)?.cost)
        };
        run().unwrap_or_else(|e| {
            warn!("GF candidate {set:?} skipped: {e}");
            f64::INFINITY
        })
    };
    let mut nodes = Vec::with_capacity(target);
    let mut per_step = Vec::with_capacity(target);
    for &c in &cover {
        nodes.push(c);
        per_step.push(score(&nodes));
    }
    while nodes.len() < target {
        let candidates: Vec<usize> = (0..base.n()).filter(|j| !nodes.contains(j)).collect();
        let scored: Vec<(usize, f64)> = candidates
            .par_iter()
            .map(|&j| {
                let mut set = nodes.clone();
                set.push(j);
                (j, score(&set))
            })
            .collect();
        let pick = argmin(&scored).ok_or_else(|| FermentError::NotConverged("no GF candidate converged".into()))?;
        nodes.push(pick);
        per_step.push(scored.iter().find(|s| s.0 == pick).map(|s| s.1).unwrap_or(f64::INFINITY));
    }
    let final_cost = per_step.last().copied().unwrap_or(f64::INFINITY);
    Ok(SelectionResult { method: Method::GreedyGf, nodes, per_step_costs: per_step, final_cost })
}

/// Runs the L1 relaxation over an ascending `mu_grid`, keeps the smallest `μ`
/// whose support fits in `m` (else the largest `μ`) and takes the `m`
/// largest magnitudes.
pub fn lasso_select(base: &InfluenceModel, tau: &DVector<f64>, m: usize, mu_grid: &[f64]) -> Result<SelectionResult> {
    if mu_grid.is_empty() || mu_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(FermentError::InvalidParameter("mu_grid must be nonempty and ascending".into()));
    }
    if m > base.n() {
        return Err(FermentError::InvalidParameter(format!("cannot pick {m} of {} nodes", base.n())));
    }
    let mut chosen = None;
    for &mu in mu_grid {
        let r = convex_relaxation(base, tau, mu)?;
        let fits = r.support.len() <= m;
        chosen = Some(r);
        if fits {
            break;
        }
    }
    let r = chosen.expect("grid nonempty");
    info!("lasso pick at mu = {} with support {}", r.mu, r.support.len());
    let mut order: Vec<usize> = (0..base.n()).collect();
    order.sort_by(|&i, &j| r.u_tilde[j].abs().total_cmp(&r.u_tilde[i].abs()).then(i.cmp(&j)));
    order.truncate(m);
    let costs = EquilibriumCosts::new(base, tau, QpSettings::default())?;
    let (final_cost, _) = costs.cost(&order, None)?;
    Ok(SelectionResult { method: Method::Lasso, nodes: order, per_step_costs: vec![final_cost], final_cost })
}

/// Centrality baselines; infeasible sets score `+∞`.
pub fn baseline_select(g: &InfluenceGraph, base: &InfluenceModel, tau: &DVector<f64>, m: usize, method: Method) -> Result<SelectionResult> {
    let nodes = match method {
        Method::Degree => degree_centers(g, m),
        Method::Distance => distance_centers(g, m),
        other => return Err(FermentError::InvalidParameter(format!("{} is not a baseline", other.tag()))),
    };
    let costs = EquilibriumCosts::new(base, tau, QpSettings::default())?;
    let per_step = costs.prefix_costs(&nodes)?;
    let final_cost = per_step.last().copied().unwrap_or(f64::INFINITY);
    Ok(SelectionResult { method, nodes, per_step_costs: per_step, final_cost })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star(n: usize) -> InfluenceModel {
        let mut a = DMatrix::zeros(n, n);
        for i in 1..n {
            a[(i, 0)] = 0.45;
            a[(i, i)] = 0.45;
        }
        a[(0, 0)] = 0.9;
        InfluenceModel::new(a, DVector::zeros(n), vec![], DMatrix::zeros(0, 0)).unwrap()
    }

    #[test]
    fn star_greedy_picks_hub() {
        let base = star(5);
        let tau = DVector::from_element(5, 0.7);
        let r = greedy_select_tf(&base, &tau, 1, &GreedyOptions::default()).unwrap();
        assert_eq!(r.nodes, vec![0]);
        assert!(r.final_cost.is_finite());
    }

    #[test]
    fn cover_too_large_is_an_error() {
        // two isolated nodes need a lift, the third already sits above τ
        let q = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let base = InfluenceModel::new(DMatrix::zeros(3, 3), q, vec![], DMatrix::zeros(0, 0)).unwrap();
        let tau = DVector::from_element(3, 0.7);
        assert!(greedy_select_tf(&base, &tau, 1, &GreedyOptions::default()).is_err());
        let r = greedy_select_tf(&base, &tau, 1, &GreedyOptions { cover_counts: false, ..Default::default() }).unwrap();
        assert_eq!(r.nodes, vec![0, 1, 2]);
        assert!((r.final_cost - 0.98).abs() < 1e-6);
    }

    #[test]
    fn json_uses_null_for_infeasible() {
        let r = SelectionResult { method: Method::Degree, nodes: vec![1], per_step_costs: vec![f64::INFINITY], final_cost: f64::INFINITY };
        let j = r.to_json();
        assert!(j["final_cost"].is_null());
        assert_eq!(j["method"], "degree");
    }
}
