//! JSON-configured single runs and seeded ensembles with aggregated tables.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::InfluenceModel;
use crate::equilibrium::{tf_equilibrium, EquilibriumPoint};
use crate::error::{FermentError, Result};
use crate::graph::{generate, GraphSpec, InfluenceGraph};
use crate::maxmin::{solve_mf_with, MfParams, MfProblem, MfSolution};
use crate::ocp::{
    cheap_reachability_bound, certify_first_order, solve_gf_with, solve_tf_with, GfOptions, GfProblem, OcpSolution,
    TfOptions, TfProblem,
};
use crate::psi::Sigmoid;
use crate::selection::{baseline_select, greedy_select_gf, greedy_select_tf, lasso_select, GfSelectionParams, GreedyOptions, Method, SelectionResult};
use crate::solver::{NlpSettings, QpSettings};
use crate::turnpike::{turnpike_report, TurnpikeReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Tf,
    Gf,
    Mf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// uniform quiescent opinion
    pub q: f64,
    pub tau: f64,
    /// `R = r·I`
    pub r: f64,
    /// uniform initial opinion; 0.5 for TF/GF and 2 for MF when absent
    pub x0: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { q: 0.0, tau: 0.7, r: 1.0, x0: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    #[serde(rename = "type")]
    pub kind: ProblemKind,
    pub horizon: usize,
    pub t0: usize,
    pub k: f64,
    pub a: f64,
    /// MF budgets; the MF grid axis
    pub budget: Vec<f64>,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self { kind: ProblemKind::Tf, horizon: 100, t0: 10, k: 0.5, a: 10.0, budget: vec![10.0] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    pub methods: Vec<Method>,
    /// controlled-set sizes; the TF/GF grid axis
    pub m: Vec<usize>,
    pub mu_grid: Vec<f64>,
    pub cover_counts: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { methods: vec![Method::Greedy], m: vec![5], mu_grid: vec![0.0, 0.01, 0.1, 1.0, 10.0], cover_counts: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub qp_tol: f64,
    pub qp_max_iter: usize,
    pub nlp_tol: f64,
    pub nlp_max_outer: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { qp_tol: 1e-8, qp_max_iter: 200_000, nlp_tol: 1e-6, nlp_max_outer: 5000 }
    }
}

impl SolverConfig {
    fn qp(&self) -> QpSettings {
        QpSettings { tol: self.qp_tol, max_iter: self.qp_max_iter, ..QpSettings::default() }
    }
    fn nlp(&self) -> NlpSettings {
        NlpSettings { tol: self.nlp_tol, max_outer: self.nlp_max_outer, ..NlpSettings::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub realizations: usize,
    pub base_seed: u64,
    pub parallel_workers: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { realizations: 1, base_seed: 0, parallel_workers: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphSpec,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub problem: ProblemConfig,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// per-run trajectory CSVs
    #[serde(default = "default_true")]
    pub trajectories: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_epsilon() -> f64 {
    0.01
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| FermentError::Parse { line: e.line(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FermentError::InvalidParameter(m));
        if self.selection.methods.is_empty() {
            return bad("selection.methods is empty".into());
        }
        if self.selection.m.is_empty() || self.selection.m.contains(&0) {
            return bad("selection.m needs positive sizes".into());
        }
        if self.ensemble.realizations == 0 {
            return bad("ensemble.realizations must be ≥ 1".into());
        }
        if self.problem.t0 == 0 || self.problem.t0 > self.problem.horizon {
            return bad(format!("need 0 < t0 ≤ horizon, got {} and {}", self.problem.t0, self.problem.horizon));
        }
        if self.problem.kind == ProblemKind::Mf && (self.problem.budget.is_empty() || self.problem.budget.iter().any(|&c| !(c >= 0.0))) {
            return bad("problem.budget needs nonnegative values for mf".into());
        }
        if !(self.model.r > 0.0) {
            return bad("model.r must be positive".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn x0_level(&self) -> f64 {
        self.model.x0.unwrap_or(if self.problem.kind == ProblemKind::Mf { 2.0 } else { 0.5 })
    }

    /// Seed of realization `index`.
    pub fn seed(&self, index: usize) -> u64 {
        self.ensemble.base_seed.wrapping_add(index as u64)
    }

    /// The grid the table columns run over.
    pub fn grid(&self) -> Vec<f64> {
        match self.problem.kind {
            ProblemKind::Mf => self.problem.budget.clone(),
            _ => self.selection.m.iter().map(|&m| m as f64).collect(),
        }
    }
}

/// One generated network with its uncontrolled model.
#[derive(Debug, Clone)]
pub struct Instance {
    pub seed: u64,
    pub graph: InfluenceGraph,
    pub base: InfluenceModel,
    pub tau: DVector<f64>,
    pub x0: DVector<f64>,
}

pub fn build_instance(cfg: &ExperimentConfig, seed: u64) -> Result<Instance> {
    let graph = generate(&cfg.graph.with_seed(seed))?;
    let base = InfluenceModel::from_graph(&graph, cfg.model.q, vec![], cfg.model.r)?;
    let n = graph.n();
    Ok(Instance { seed, graph, base, tau: DVector::from_element(n, cfg.model.tau), x0: DVector::from_element(n, cfg.x0_level()) })
}

pub fn select(cfg: &ExperimentConfig, inst: &Instance, method: Method, m: usize) -> Result<SelectionResult> {
    let greedy = GreedyOptions { cover_counts: cfg.selection.cover_counts, qp: cfg.solver.qp() };
    match method {
        Method::Greedy => greedy_select_tf(&inst.base, &inst.tau, m, &greedy),
        Method::GreedyGf => {
            let params = GfSelectionParams {
                tau: cfg.model.tau,
                k: cfg.problem.k,
                a: cfg.problem.a,
                t0: cfg.problem.t0,
                horizon: cfg.problem.horizon,
            };
            greedy_select_gf(&inst.base, &inst.x0, params, m, &greedy)
        }
        Method::Lasso => lasso_select(&inst.base, &inst.tau, m, &cfg.selection.mu_grid),
        Method::Degree | Method::Distance => baseline_select(&inst.graph, &inst.base, &inst.tau, m, method),
    }
}

#[derive(Debug, Clone)]
pub struct TfOutcome {
    pub problem: TfProblem,
    pub solution: OcpSolution,
    pub equilibrium: EquilibriumPoint,
    /// `(T c(u_e) + D*, D*)` when `D*` exists
    pub bound: Option<(f64, f64)>,
    pub turnpike: TurnpikeReport,
    pub first_order_residual: f64,
}

pub fn run_tf(cfg: &ExperimentConfig, inst: &Instance, nodes: &[usize]) -> Result<TfOutcome> {
    let model = inst.base.with_controlled(nodes.to_vec())?;
    let problem = TfProblem::new(model, inst.x0.clone(), inst.tau.clone(), cfg.problem.t0, cfg.problem.horizon)?;
    let solution = solve_tf_with(&problem, &TfOptions { qp: cfg.solver.qp() }, None)?;
    let equilibrium = tf_equilibrium(&problem.model, &problem.tau)?;
    let bound = cheap_reachability_bound(&solution, &problem, &equilibrium);
    let turnpike = turnpike_report(&solution, &equilibrium, cfg.epsilon);
    let first_order_residual = certify_first_order(&solution, &problem).max();
    Ok(TfOutcome { problem, solution, equilibrium, bound, turnpike, first_order_residual })
}

pub fn run_gf(cfg: &ExperimentConfig, inst: &Instance, nodes: &[usize]) -> Result<OcpSolution> {
    let model = inst.base.with_controlled(nodes.to_vec())?;
    let p = GfProblem::new(model, inst.x0.clone(), cfg.model.tau, cfg.problem.a, cfg.problem.k, cfg.problem.t0, cfg.problem.horizon)?;
    solve_gf_with(&p, &GfOptions { nlp: cfg.solver.nlp(), ..GfOptions::default() })
}

pub fn run_mf(cfg: &ExperimentConfig, inst: &Instance, nodes: &[usize], budget: f64) -> Result<MfSolution> {
    let model = inst.base.with_controlled(nodes.to_vec())?;
    let p = MfProblem::new(model, inst.x0.clone(), Sigmoid::new(cfg.problem.a, cfg.model.tau)?, cfg.problem.horizon, budget)?;
    solve_mf_with(&p, &MfParams::default())
}

/// One cell entry of an ensemble.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub seed: u64,
    pub method: Method,
    /// `m` for TF/GF, budget for MF
    pub grid_value: f64,
    pub nodes: Vec<usize>,
    /// J* for TF/GF, attained record for MF; `None` when infeasible
    pub value: Option<f64>,
    pub equilibrium_cost: Option<f64>,
    pub d_star: Option<f64>,
    pub bound_holds: Option<bool>,
    pub exceedance_count: Option<usize>,
    pub cheap_gap: Option<f64>,
    pub residual: Option<f64>,
    pub status: String,
}

impl RunRecord {
    fn infeasible(seed: u64, method: Method, grid_value: f64, nodes: Vec<usize>, why: &str) -> Self {
        Self {
            seed,
            method,
            grid_value,
            nodes,
            value: None,
            equilibrium_cost: None,
            d_star: None,
            bound_holds: None,
            exceedance_count: None,
            cheap_gap: None,
            residual: None,
            status: format!("infeasible: {why}"),
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.value.is_some()
    }
}

/// Aggregate of one `(method, grid value)` cell.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CellStats {
    pub method: Method,
    pub grid_value: f64,
    pub count: usize,
    pub infeasible: usize,
    pub mean: Option<f64>,
    /// sample standard deviation; zero for a single record
    pub std: Option<f64>,
}

/// Streaming mean and sample variance.
#[derive(Debug, Clone, Copy, Default)]
pub struct Welford {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then_some(self.mean)
    }

    pub fn sample_std(&self) -> Option<f64> {
        match self.count {
            0 => None,
            1 => Some(0.0),
            c => Some((self.m2 / (c - 1) as f64).sqrt()),
        }
    }
}

/// Groups records by `(method, grid value)` in first-seen method order and
/// ascending grid order; infeasible records are counted, not averaged.
pub fn aggregate(records: &[RunRecord]) -> Result<Vec<CellStats>> {
    if records.is_empty() {
        return Err(FermentError::InvalidParameter("no records to aggregate".into()));
    }
    let mut methods: Vec<Method> = Vec::new();
    for r in records {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    let mut cells = Vec::new();
    for method in methods {
        let mut by_grid: BTreeMap<u64, (f64, Welford, usize)> = BTreeMap::new();
        for r in records.iter().filter(|r| r.method == method) {
            let key = r.grid_value.to_bits();
            let e = by_grid.entry(key).or_insert((r.grid_value, Welford::default(), 0));
            match r.value {
                Some(v) => e.1.push(v),
                None => e.2 += 1,
            }
        }
        let mut entries: Vec<_> = by_grid.into_values().collect();
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (grid_value, w, infeasible) in entries {
            if w.count() == 0 {
                warn!("cell ({}, {grid_value}) has no feasible record", method.tag());
            }
            cells.push(CellStats { method, grid_value, count: w.count(), infeasible, mean: w.mean(), std: w.sample_std() });
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultBundle {
    pub config_sha256: String,
    pub base_seed: u64,
    pub seeds: Vec<u64>,
    pub records: Vec<RunRecord>,
    pub cells: Vec<CellStats>,
}

impl ResultBundle {
    /// Rows are methods, columns grid values, cells `mean±std`.
    pub fn table_csv(&self, grid_label: &str) -> String {
        let mut grid: Vec<f64> = self.cells.iter().map(|c| c.grid_value).collect();
        grid.sort_by(|a, b| a.total_cmp(b));
        grid.dedup();
        let mut methods: Vec<Method> = Vec::new();
        for c in &self.cells {
            if !methods.contains(&c.method) {
                methods.push(c.method);
            }
        }
        let mut out = format!("# config_sha256={} base_seed={}\n", self.config_sha256, self.base_seed);
        out.push_str(&format!("method\\{grid_label}"));
        for g in &grid {
            out.push_str(&format!(",{g}"));
        }
        out.push('\n');
        for m in methods {
            out.push_str(m.tag());
            for g in &grid {
                let cell = self.cells.iter().find(|c| c.method == m && c.grid_value == *g);
                match cell.and_then(|c| c.mean.zip(c.std)) {
                    Some((mean, std)) => out.push_str(&format!(",{mean:.6}±{std:.6}")),
                    None => out.push_str(",infeasible"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Node lists per grid value for one method; greedy and centrality picks are
/// nested, so they are computed once at the largest `m`.
fn selections(cfg: &ExperimentConfig, inst: &Instance, method: Method, m_values: &[usize]) -> Result<Vec<(usize, Result<SelectionResult>)>> {
    let nested = matches!(method, Method::Greedy | Method::GreedyGf | Method::Degree | Method::Distance);
    if !nested {
        return Ok(m_values.iter().map(|&m| (m, select(cfg, inst, method, m))).collect());
    }
    let top = *m_values.iter().max().expect("nonempty m grid");
    let full = match select(cfg, inst, method, top) {
        Ok(s) => s,
        Err(e) if e.is_infeasible() => return Ok(m_values.iter().map(|&m| (m, select(cfg, inst, method, m))).collect()),
        Err(e) => return Err(e),
    };
    let extra = full.nodes.len() - top;
    Ok(m_values
        .iter()
        .map(|&m| {
            let k = m + extra;
            if full.per_step_costs[k - 1].is_infinite() && matches!(method, Method::Greedy | Method::GreedyGf) {
                return (m, Err(FermentError::Infeasible(format!("reachability cover does not fit in m = {m}"))));
            }
            let res = SelectionResult {
                method,
                nodes: full.nodes[..k].to_vec(),
                per_step_costs: full.per_step_costs[..k].to_vec(),
                final_cost: full.per_step_costs[k - 1],
            };
            (m, Ok(res))
        })
        .collect())
}

/// Writes state and control CSVs for one run.
fn write_trajectory(dir: &Path, stem: &str, traj: &crate::dynamics::Trajectory, provenance: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    traj.write_state_csv(fs::File::create(dir.join(format!("{stem}_x.csv")))?, Some(provenance))?;
    traj.write_control_csv(fs::File::create(dir.join(format!("{stem}_u.csv")))?, Some(provenance))?;
    Ok(())
}

/// Runs every method and grid value on realization `index`.
pub fn run_realization(cfg: &ExperimentConfig, index: usize, traj_dir: Option<&Path>) -> Result<Vec<RunRecord>> {
    let seed = cfg.seed(index);
    let inst = build_instance(cfg, seed)?;
    let hash = cfg.hash();
    let mut out = Vec::new();
    for &method in &cfg.selection.methods {
        let m_values: Vec<usize> = match cfg.problem.kind {
            ProblemKind::Mf => vec![cfg.selection.m[0]],
            _ => cfg.selection.m.clone(),
        };
        for (m, sel) in selections(cfg, &inst, method, &m_values)? {
            let sel = match sel {
                Ok(s) => s,
                Err(e) if e.is_infeasible() => {
                    let grid: Vec<f64> = if cfg.problem.kind == ProblemKind::Mf { cfg.problem.budget.clone() } else { vec![m as f64] };
                    out.extend(grid.into_iter().map(|g| RunRecord::infeasible(seed, method, g, vec![], &e.to_string())));
                    continue;
                }
                Err(e) => return Err(e),
            };
            let provenance = format!("config_sha256={hash} seed={seed} method={} m={m}", method.tag());
            match cfg.problem.kind {
                ProblemKind::Tf => out.push(tf_record(cfg, &inst, method, m, sel, traj_dir, &provenance)?),
                ProblemKind::Gf => {
                    let rec = match run_gf(cfg, &inst, &sel.nodes) {
                        Ok(sol) => {
                            if let Some(dir) = traj_dir {
                                write_trajectory(dir, &format!("seed{seed}_{}_m{m}", method.tag()), &sol.trajectory, &provenance)?;
                            }
                            RunRecord {
                                seed,
                                method,
                                grid_value: m as f64,
                                nodes: sel.nodes,
                                value: Some(sol.cost),
                                equilibrium_cost: None,
                                d_star: None,
                                bound_holds: None,
                                exceedance_count: None,
                                cheap_gap: None,
                                residual: Some(sol.stationarity_residual),
                                status: "optimal".into(),
                            }
                        }
                        Err(e) if e.is_infeasible() => RunRecord::infeasible(seed, method, m as f64, sel.nodes, &e.to_string()),
                        Err(e) => return Err(e),
                    };
                    out.push(rec);
                }
                ProblemKind::Mf => {
                    for &budget in &cfg.problem.budget {
                        let sol = run_mf(cfg, &inst, &sel.nodes, budget)?;
                        if let Some(dir) = traj_dir {
                            write_trajectory(dir, &format!("seed{seed}_{}_C{budget}", method.tag()), &sol.trajectory, &provenance)?;
                        }
                        out.push(RunRecord {
                            seed,
                            method,
                            grid_value: budget,
                            nodes: sel.nodes.clone(),
                            value: Some(sol.attained),
                            equilibrium_cost: None,
                            d_star: None,
                            bound_holds: None,
                            exceedance_count: None,
                            cheap_gap: None,
                            residual: Some(sol.complementarity_residual),
                            status: serde_json::to_value(sol.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

fn tf_record(
    cfg: &ExperimentConfig,
    inst: &Instance,
    method: Method,
    m: usize,
    sel: SelectionResult,
    traj_dir: Option<&Path>,
    provenance: &str,
) -> Result<RunRecord> {
    let out = match run_tf(cfg, inst, &sel.nodes) {
        Ok(o) => o,
        Err(e) if e.is_infeasible() => return Ok(RunRecord::infeasible(inst.seed, method, m as f64, sel.nodes, &e.to_string())),
        Err(e) => return Err(e),
    };
    if let Some(dir) = traj_dir {
        write_trajectory(dir, &format!("seed{}_{}_m{m}", inst.seed, method.tag()), &out.solution.trajectory, provenance)?;
    }
    let bound_holds = out.bound.map(|(b, _)| out.solution.cost <= b * (1.0 + 1e-9) + 1e-9);
    if bound_holds == Some(false) {
        warn!("cheap-reachability bound violated: J* = {} > {:?}", out.solution.cost, out.bound);
    }
    Ok(RunRecord {
        seed: inst.seed,
        method,
        grid_value: m as f64,
        nodes: sel.nodes,
        value: Some(out.solution.cost),
        equilibrium_cost: Some(out.equilibrium.cost),
        d_star: out.bound.map(|b| b.1),
        bound_holds,
        exceedance_count: Some(out.turnpike.exceedance_count),
        cheap_gap: Some(out.turnpike.cheap_gap),
        residual: Some(out.first_order_residual),
        status: "optimal".into(),
    })
}

/// Runs the whole ensemble on a bounded worker pool. With `out` set, writes
/// `summary.json`, `table.csv` and (if enabled) per-run trajectories.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ResultBundle> {
    let workers = cfg.ensemble.parallel_workers.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| FermentError::InvalidParameter(format!("worker pool: {e}")))?;
    let traj_dir = out.filter(|_| cfg.trajectories).map(|o| o.join("runs"));
    let indices: Vec<usize> = (0..cfg.ensemble.realizations).collect();
    let per_run: Vec<Result<Vec<RunRecord>>> = pool.install(|| {
        indices
            .par_iter()
            .map(|&i| {
                info!("realization {i} (seed {})", cfg.seed(i));
                run_realization(cfg, i, traj_dir.as_deref())
            })
            .collect()
    });
    let mut records = Vec::new();
    for r in per_run {
        records.extend(r?);
    }
    let cells = aggregate(&records)?;
    let bundle = ResultBundle {
        config_sha256: cfg.hash(),
        base_seed: cfg.ensemble.base_seed,
        seeds: indices.iter().map(|&i| cfg.seed(i)).collect(),
        records,
        cells,
    };
    if let Some(dir) = out {
        write_bundle(cfg, &bundle, dir)?;
    }
    Ok(bundle)
}

pub fn write_bundle(cfg: &ExperimentConfig, bundle: &ResultBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let summary = serde_json::json!({
        "config_sha256": bundle.config_sha256,
        "base_seed": bundle.base_seed,
        "seeds": bundle.seeds,
        "config": cfg,
        "cells": bundle.cells,
        "records": bundle.records,
    });
    let mut f = fs::File::create(dir.join("summary.json"))?;
    f.write_all(serde_json::to_string_pretty(&summary)?.as_bytes())?;
    f.write_all(b"\n")?;
    let label = if cfg.problem.kind == ProblemKind::Mf { "budget" } else { "m" };
    fs::write(dir.join("table.csv"), bundle.table_csv(label))?;
    Ok(())
}
