//! Finite-horizon threshold (TF) and sigmoid (GF) ferment control.
//!
//! TF is transcribed into one sparse QP over `[u(0), x(1), u(1), x(2), …]`,
//! an ordering that keeps the ADMM system banded. GF is solved in condensed
//! form over the controls with adjoint-computed constraint gradients.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dynamics::{InfluenceModel, Trajectory};
use crate::equilibrium::{feasibility_check, gf_equilibrium, EquilibriumPoint, Feasibility};
use crate::error::{FermentError, Result};
use crate::psi::Sigmoid;
use crate::solver::nlp::{solve_nlp_with, NlpSettings, NlpSolution, SmoothNlp};
use crate::solver::{solve_qp_with, CsrMatrix, QpSettings, QpSolution, QpStatus, QuadraticProgram};

#[derive(Debug, Clone)]
pub struct TfProblem {
    pub model: InfluenceModel,
    pub x0: DVector<f64>,
    pub tau: DVector<f64>,
    pub t0: usize,
    pub horizon: usize,
}

#[derive(Debug, Clone)]
pub struct GfProblem {
    pub model: InfluenceModel,
    pub x0: DVector<f64>,
    pub tau: f64,
    pub a: f64,
    pub k: f64,
    pub t0: usize,
    pub horizon: usize,
}

fn check_horizon(model: &InfluenceModel, x0: &DVector<f64>, t0: usize, horizon: usize) -> Result<()> {
    if x0.len() != model.n() {
        return Err(FermentError::DimensionMismatch(format!("x0 has length {} for n={}", x0.len(), model.n())));
    }
    if t0 == 0 || t0 > horizon {
        return Err(FermentError::InvalidParameter(format!("need 0 < T0 ≤ T, got T0={t0}, T={horizon}")));
    }
    Ok(())
}

impl TfProblem {
    pub fn new(model: InfluenceModel, x0: DVector<f64>, tau: DVector<f64>, t0: usize, horizon: usize) -> Result<Self> {
        check_horizon(&model, &x0, t0, horizon)?;
        if tau.len() != model.n() {
            return Err(FermentError::DimensionMismatch(format!("tau has length {}", tau.len())));
        }
        Ok(Self { model, x0, tau, t0, horizon })
    }

    /// Rows that no admissible control can lift in time: a free-run
    /// violation at some `t ≥ T0` on a node more than `t − 1` hops from
    /// every controlled node.
    pub fn unreachable_rows(&self) -> Vec<usize> {
        let model = &self.model;
        let hops = hop_distance_from_controlled(model);
        let free = model.simulate(&self.x0, &[], self.horizon).expect("dimensions checked");
        (0..model.n())
            .filter(|&i| (self.t0..=self.horizon).any(|t| free.x[t][i] < self.tau[i] && hops[i].is_none_or(|d| d + 1 > t)))
            .collect()
    }
}

impl GfProblem {
    pub fn new(model: InfluenceModel, x0: DVector<f64>, tau: f64, a: f64, k: f64, t0: usize, horizon: usize) -> Result<Self> {
        check_horizon(&model, &x0, t0, horizon)?;
        if !(k > 0.0 && k < 1.0) {
            return Err(FermentError::InvalidParameter(format!("k must lie in (0,1), got {k}")));
        }
        Sigmoid::new(a, tau)?;
        Ok(Self { model, x0, tau, a, k, t0, horizon })
    }

    pub fn sigmoid(&self) -> Sigmoid {
        Sigmoid::new(self.a, self.tau).expect("validated on construction")
    }

    pub fn level(&self) -> f64 {
        self.k * self.model.n() as f64
    }
}

/// Directed hop distance from the controlled set along influence edges.
fn hop_distance_from_controlled(model: &InfluenceModel) -> Vec<Option<usize>> {
    let n = model.n();
    let a = model.a();
    let mut dist = vec![None; n];
    let mut frontier: Vec<usize> = model.controlled().to_vec();
    for &c in &frontier {
        dist[c] = Some(0);
    }
    let mut d = 0;
    while !frontier.is_empty() {
        d += 1;
        let mut next = Vec::new();
        for &j in &frontier {
            for i in 0..n {
                if dist[i].is_none() && a[(i, j)] > 0.0 {
                    dist[i] = Some(d);
                    next.push(i);
                }
            }
        }
        frontier = next;
    }
    dist
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OcpStatus {
    Optimal,
}

#[derive(Debug, Clone)]
pub struct OcpSolution {
    pub trajectory: Trajectory,
    pub cost: f64,
    /// constraint multipliers for `t = T0..=T` (vector per step for TF, one
    /// entry per step for GF)
    pub duals: Vec<DVector<f64>>,
    pub t0: usize,
    pub stationarity_residual: f64,
    pub primal_residual: f64,
    pub complementarity_residual: f64,
    pub status: OcpStatus,
    pub iterations: usize,
    /// raw QP solution, kept for warm starts
    pub qp: Option<QpSolution>,
}

impl OcpSolution {
    pub fn horizon(&self) -> usize {
        self.trajectory.horizon()
    }

    /// Multiplier at step `t`, zero before `T0`.
    pub fn dual_at(&self, t: usize, width: usize) -> DVector<f64> {
        if t >= self.t0 && t - self.t0 < self.duals.len() {
            self.duals[t - self.t0].clone()
        } else {
            DVector::zeros(width)
        }
    }
}

#[derive(Debug, Clone)]
#[derive(Default)]
pub struct TfOptions {
    pub qp: QpSettings,
}


struct Layout {
    n: usize,
    m: usize,
}

impl Layout {
    fn block(&self) -> usize {
        self.n + self.m
    }
    fn u(&self, t: usize) -> usize {
        t * self.block()
    }
    /// column of `x(t)`, `t ≥ 1`
    fn x(&self, t: usize) -> usize {
        (t - 1) * self.block() + self.m
    }
}

/// Builds the TF transcription.
pub fn tf_qp(p: &TfProblem) -> Result<QuadraticProgram> {
    let model = &p.model;
    let (n, m, horizon) = (model.n(), model.m(), p.horizon);
    let lay = Layout { n, m };
    let nv = horizon * lay.block();
    let mut h = Vec::with_capacity(horizon * m * m);
    for t in 0..horizon {
        for r in 0..m {
            for c in 0..m {
                let v = 2.0 * model.r()[(r, c)];
                if v != 0.0 {
                    h.push((lay.u(t) + r, lay.u(t) + c, v));
                }
            }
        }
    }
    let a = model.a();
    let mut eq = Vec::new();
    let mut b_eq = DVector::zeros(horizon * n);
    let ax0 = a * &p.x0;
    for t in 0..horizon {
        let row0 = t * n;
        for i in 0..n {
            eq.push((row0 + i, lay.x(t + 1) + i, 1.0));
            if t > 0 {
                for j in 0..n {
                    if a[(i, j)] != 0.0 {
                        eq.push((row0 + i, lay.x(t) + j, -a[(i, j)]));
                    }
                }
            }
            b_eq[row0 + i] = model.drift()[i] + if t == 0 { ax0[i] } else { 0.0 };
        }
        for (c, &node) in model.controlled().iter().enumerate() {
            eq.push((row0 + node, lay.u(t) + c, -1.0));
        }
    }
    let n_steps = horizon - p.t0 + 1;
    let mut ineq = Vec::with_capacity(n_steps * n);
    let mut b_in = DVector::zeros(n_steps * n);
    for (k, t) in (p.t0..=horizon).enumerate() {
        for i in 0..n {
            ineq.push((k * n + i, lay.x(t) + i, 1.0));
            b_in[k * n + i] = p.tau[i];
        }
    }
    QuadraticProgram::new(
        CsrMatrix::from_triplets(nv, nv, &h),
        DVector::zeros(nv),
        CsrMatrix::from_triplets(horizon * n, nv, &eq),
        b_eq,
        CsrMatrix::from_triplets(n_steps * n, nv, &ineq),
        b_in,
    )
}

/// Solves TF to the configured QP tolerance.
pub fn solve_tf(p: &TfProblem) -> Result<OcpSolution> {
    solve_tf_with(p, &TfOptions::default(), None)
}

pub fn solve_tf_with(p: &TfProblem, opts: &TfOptions, warm: Option<&QpSolution>) -> Result<OcpSolution> {
    if let Feasibility::Infeasible { rows } = feasibility_check(&p.model, &p.tau) {
        return Err(FermentError::Unreachable { rows });
    }
    let rows = p.unreachable_rows();
    if !rows.is_empty() {
        return Err(FermentError::Unreachable { rows });
    }
    let qp = tf_qp(p)?;
    let guess;
    let warm = match warm {
        Some(w) => Some(w),
        None => {
            guess = equilibrium_warm_start(p);
            guess.as_ref()
        }
    };
    let sol = solve_qp_with(&qp, &opts.qp, warm);
    match sol.status {
        QpStatus::Optimal => {}
        QpStatus::Infeasible => return Err(FermentError::Infeasible("TF transcription certified infeasible".into())),
        status => {
            return Err(FermentError::NotConverged(format!(
                "TF QP {status:?} after {} iterations: primal {:.2e}, dual {:.2e}, complementarity {:.2e}",
                sol.iterations, sol.primal_residual, sol.dual_residual, sol.complementarity_residual
            )))
        }
    }
    let (n, m) = (p.model.n(), p.model.m());
    let lay = Layout { n, m };
    let mut x = vec![p.x0.clone()];
    let mut u = Vec::with_capacity(p.horizon);
    for t in 0..p.horizon {
        u.push(sol.z.rows(lay.u(t), m).into_owned());
        x.push(sol.z.rows(lay.x(t + 1), n).into_owned());
    }
    let trajectory = Trajectory::new(&p.model, x, u);
    let duals = (0..=p.horizon - p.t0).map(|k| sol.ineq_duals.rows(k * n, n).into_owned()).collect();
    Ok(OcpSolution {
        cost: trajectory.cost,
        trajectory,
        duals,
        t0: p.t0,
        stationarity_residual: sol.dual_residual,
        primal_residual: sol.primal_residual,
        complementarity_residual: sol.complementarity_residual,
        status: OcpStatus::Optimal,
        iterations: sol.iterations,
        qp: Some(sol),
    })
}

/// Primal-dual guess that sits on the turnpike: adjoint held at the
/// equilibrium value `p_e = (I − A)⁻ᵀ μ_e` on `[T0, T)`, the matching
/// controls, and the simulated states.
fn equilibrium_warm_start(p: &TfProblem) -> Option<QpSolution> {
    let model = &p.model;
    let inverse = crate::equilibrium::substochastic_inverse(model.a()).ok()?;
    let (_, eq_qp) = crate::equilibrium::tf_equilibrium_with(model, &p.tau, &inverse, &QpSettings::default(), None).ok()?;
    let mu = &eq_qp.ineq_duals;
    let p_e = inverse.tr_mul(mu);
    let (n, m, horizon) = (model.n(), model.m(), p.horizon);
    let lay = Layout { n, m };
    let mut adj = vec![DVector::zeros(n); horizon + 1];
    let mut lam = vec![DVector::zeros(n); horizon + 1];
    adj[horizon] = p_e.clone();
    lam[horizon] = p_e.clone();
    for t in (1..horizon).rev() {
        if t >= p.t0 {
            lam[t] = mu.clone();
        }
        adj[t] = model.a().tr_mul(&adj[t + 1]) + &lam[t];
    }
    let mut z = DVector::zeros(horizon * lay.block());
    let mut nu = DVector::zeros(horizon * n);
    let mut x = p.x0.clone();
    for t in 0..horizon {
        let u = model.r_inv() * model.apply_bt(&adj[t + 1]) * 0.5;
        x = model.step_unchecked(&x, &u);
        z.rows_mut(lay.u(t), m).copy_from(&u);
        z.rows_mut(lay.x(t + 1), n).copy_from(&x);
        nu.rows_mut(t * n, n).copy_from(&(-&adj[t + 1]));
    }
    let mut ineq = DVector::zeros((horizon - p.t0 + 1) * n);
    for (k, t) in (p.t0..=horizon).enumerate() {
        ineq.rows_mut(k * n, n).copy_from(&lam[t]);
    }
    Some(QpSolution {
        z,
        eq_duals: nu,
        ineq_duals: ineq,
        primal_residual: f64::NAN,
        dual_residual: f64::NAN,
        complementarity_residual: f64::NAN,
        objective: f64::NAN,
        status: QpStatus::IterationLimit,
        iterations: 0,
        polished: false,
    })
}

/// Residuals of the constrained-LQ necessary conditions rebuilt from the
/// state-constraint multipliers alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FirstOrderReport {
    /// `max_t ‖2R u(t) − Bᵀ p(t+1)‖∞` with `p(T) = λ(T)`, `p(t) = Aᵀp(t+1) + λ(t)`
    pub stationarity: f64,
    pub dynamics: f64,
    pub constraint_violation: f64,
    pub dual_sign: f64,
    pub complementarity: f64,
}

impl FirstOrderReport {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.dynamics).max(self.constraint_violation).max(self.dual_sign).max(self.complementarity)
    }
}

pub fn certify_first_order(sol: &OcpSolution, p: &TfProblem) -> FirstOrderReport {
    let model = &p.model;
    let traj = &sol.trajectory;
    let n = model.n();
    let horizon = traj.horizon();
    let mut adj = vec![DVector::zeros(n); horizon + 1];
    adj[horizon] = sol.dual_at(horizon, n);
    for t in (1..horizon).rev() {
        adj[t] = model.a().tr_mul(&adj[t + 1]) + sol.dual_at(t, n);
    }
    let mut stationarity = 0.0f64;
    for t in 0..horizon {
        let lhs = model.r() * &traj.u[t] * 2.0;
        let rhs = model.apply_bt(&adj[t + 1]);
        stationarity = stationarity.max((lhs - rhs).amax());
    }
    let mut violation = 0.0f64;
    let mut sign = 0.0f64;
    let mut comp = 0.0f64;
    for t in p.t0..=horizon {
        let lam = sol.dual_at(t, n);
        for i in 0..n {
            let slack = traj.x[t][i] - p.tau[i];
            violation = violation.max(-slack);
            sign = sign.max(-lam[i]);
            comp = comp.max((lam[i] * slack).abs());
        }
    }
    FirstOrderReport {
        stationarity,
        dynamics: traj.dynamics_residual(model),
        constraint_violation: violation,
        dual_sign: sign,
        complementarity: comp,
    }
}

/// Minimum cost of steering `x0` onto `x_e` in exactly `T0` steps: the
/// minimum-norm solution of the `R`-weighted reachability equations, by SVD.
/// `None` when `x_e` is not reachable in `T0` steps.
pub fn steering_cost(model: &InfluenceModel, x0: &DVector<f64>, x_e: &DVector<f64>, t0: usize) -> Option<f64> {
    let (n, m) = (model.n(), model.m());
    let a = model.a();
    let l = model.r_inv().clone().cholesky()?.l();
    let mut blk = model.b_matrix() * l;
    let mut c = DMatrix::zeros(n, m * t0);
    let mut drift = x0 - model.q();
    for s in 0..t0 {
        c.view_mut((0, s * m), (n, m)).copy_from(&blk);
        blk = a * blk;
        drift = a * drift;
    }
    let d = x_e - model.q() - drift;
    if c.ncols() == 0 {
        return (d.amax() <= 1e-12).then_some(0.0);
    }
    let svd = c.svd(true, false);
    let u = svd.u.as_ref()?;
    let top = svd.singular_values.amax();
    let mut cost = 0.0;
    let mut reached = DVector::zeros(n);
    for (k, &sv) in svd.singular_values.iter().enumerate() {
        if top > 0.0 && sv > 1e-12 * top {
            let col = u.column(k);
            let p = col.dot(&d);
            cost += (p / sv).powi(2);
            reached += col * p;
        }
    }
    let lost = (&d - reached).norm();
    if lost > 1e-8 * d.norm() && lost > 1e-12 {
        return None;
    }
    Some(cost)
}

/// `J* ≤ T c(u_e) + D*`; `None` when `D*` is unavailable (logged).
pub fn cheap_reachability_bound(sol: &OcpSolution, p: &TfProblem, eq: &EquilibriumPoint) -> Option<(f64, f64)> {
    match steering_cost(&p.model, &p.x0, &eq.x_e, p.t0) {
        Some(d_star) => Some((p.horizon as f64 * eq.cost + d_star, d_star)),
        None => {
            warn!("equilibrium not reachable in T0={} steps; cheap-reachability check skipped", p.t0);
            let _ = sol;
            None
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OcpSummary {
    pub cost: f64,
    pub status: OcpStatus,
    pub stationarity_residual: f64,
    pub equilibrium_cost: f64,
    pub cheap_reachability_gap: f64,
}

pub fn summarize(sol: &OcpSolution, eq: &EquilibriumPoint) -> OcpSummary {
    OcpSummary {
        cost: sol.cost,
        status: sol.status,
        stationarity_residual: sol.stationarity_residual,
        equilibrium_cost: eq.cost,
        cheap_reachability_gap: sol.cost - sol.horizon() as f64 * eq.cost,
    }
}

/// GF in condensed form: variables `u(0..T)` stacked, states by simulation.
struct GfNlp<'a> {
    p: &'a GfProblem,
    sigmoid: Sigmoid,
    level: f64,
}

impl GfNlp<'_> {
    fn controls(&self, z: &DVector<f64>) -> Vec<DVector<f64>> {
        let m = self.p.model.m();
        (0..self.p.horizon).map(|t| z.rows(t * m, m).into_owned()).collect()
    }

    fn states(&self, z: &DVector<f64>) -> Vec<DVector<f64>> {
        let u = self.controls(z);
        let mut x = Vec::with_capacity(self.p.horizon + 1);
        x.push(self.p.x0.clone());
        for ut in &u {
            let next = self.p.model.step_unchecked(x.last().unwrap(), ut);
            x.push(next);
        }
        x
    }
}

impl SmoothNlp for GfNlp<'_> {
    fn num_vars(&self) -> usize {
        self.p.horizon * self.p.model.m()
    }
    fn num_ineq(&self) -> usize {
        self.p.horizon - self.p.t0 + 1
    }
    fn objective(&self, z: &DVector<f64>, grad: &mut DVector<f64>) -> f64 {
        let m = self.p.model.m();
        let r = self.p.model.r();
        let mut val = 0.0;
        for t in 0..self.p.horizon {
            let ut = z.rows(t * m, m);
            let ru = r * ut;
            val += ut.dot(&ru);
            grad.rows_mut(t * m, m).copy_from(&(ru * 2.0));
        }
        val
    }
    fn ineq_values(&self, z: &DVector<f64>) -> DVector<f64> {
        let x = self.states(z);
        DVector::from_iterator(self.num_ineq(), (self.p.t0..=self.p.horizon).map(|t| self.sigmoid.value(&x[t]) - self.level))
    }
    fn ineq_jac_t(&self, z: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let x = self.states(z);
        let model = &self.p.model;
        let m = model.m();
        let horizon = self.p.horizon;
        let mut out = DVector::zeros(self.num_vars());
        let mut adj = DVector::zeros(model.n());
        for t in (1..=horizon).rev() {
            if t >= self.p.t0 {
                adj += self.sigmoid.gradient(&x[t]) * w[t - self.p.t0];
            }
            out.rows_mut((t - 1) * m, m).copy_from(&model.apply_bt(&adj));
            adj = model.a().tr_mul(&adj);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct GfOptions {
    pub nlp: NlpSettings,
    /// extra initial control sequences tried after the held-equilibrium start
    pub extra_starts: Vec<Vec<DVector<f64>>>,
}

impl Default for GfOptions {
    fn default() -> Self {
        Self { nlp: NlpSettings { tol: 1e-6, ..NlpSettings::default() }, extra_starts: Vec::new() }
    }
}

pub fn solve_gf(p: &GfProblem) -> Result<OcpSolution> {
    solve_gf_with(p, &GfOptions::default())
}

/// Local NLP solve started from the GF equilibrium held constant, then from
/// each extra start; the cheapest converged point is returned.
pub fn solve_gf_with(p: &GfProblem, opts: &GfOptions) -> Result<OcpSolution> {
    let model = &p.model;
    let m = model.m();
    let nlp = GfNlp { p, sigmoid: p.sigmoid(), level: p.level() };
    let mut starts: Vec<DVector<f64>> = Vec::new();
    match gf_equilibrium(model, p.tau, p.k, p.a) {
        Ok(eq) => starts.push(DVector::from_iterator(p.horizon * m, (0..p.horizon).flat_map(|_| eq.u_e.iter().copied()))),
        Err(e) => warn!("GF equilibrium unavailable for initialization: {e}"),
    }
    for s in &opts.extra_starts {
        if s.len() == p.horizon && s.iter().all(|u| u.len() == m) {
            starts.push(DVector::from_iterator(p.horizon * m, s.iter().flat_map(|u| u.iter().copied())));
        }
    }
    if starts.is_empty() {
        starts.push(DVector::zeros(p.horizon * m));
    }
    let mut best: Option<NlpSolution> = None;
    let mut failure = String::new();
    for z0 in &starts {
        let sol = solve_nlp_with(&nlp, z0, &opts.nlp, None);
        if sol.is_converged() {
            if best.as_ref().is_none_or(|b| sol.objective < b.objective) {
                best = Some(sol);
            }
        } else {
            failure = format!(
                "{:?}: stationarity {:.2e}, violation {:.2e}, complementarity {:.2e}",
                sol.status, sol.stationarity_residual, sol.constraint_violation, sol.complementarity_residual
            );
        }
    }
    let sol = best.ok_or_else(|| FermentError::NotConverged(format!("GF solve: {failure}")))?;
    let x = nlp.states(&sol.z);
    let u = nlp.controls(&sol.z);
    let trajectory = Trajectory::new(model, x, u);
    Ok(OcpSolution {
        cost: trajectory.cost,
        trajectory,
        duals: sol.ineq_duals.iter().map(|&l| DVector::from_element(1, l)).collect(),
        t0: p.t0,
        stationarity_residual: sol.stationarity_residual,
        primal_residual: sol.constraint_violation,
        complementarity_residual: sol.complementarity_residual,
        status: OcpStatus::Optimal,
        iterations: sol.inner_iterations,
        qp: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::tf_equilibrium;

    fn decoupled(n: usize) -> InfluenceModel {
        InfluenceModel::new(DMatrix::zeros(n, n), DVector::zeros(n), (0..n).collect(), DMatrix::identity(n, n)).unwrap()
    }

    #[test]
    fn memoryless_case() {
        let n = 3;
        let p = TfProblem::new(decoupled(n), DVector::zeros(n), DVector::from_element(n, 0.7), 1, 3).unwrap();
        let sol = solve_tf(&p).unwrap();
        assert!((sol.cost - 3.0 * 0.49 * n as f64).abs() < 1e-8);
        for u in &sol.trajectory.u {
            assert!((u - DVector::from_element(n, 0.7)).amax() < 1e-8);
        }
        assert!(certify_first_order(&sol, &p).max() < 1e-6);
    }

    #[test]
    fn quiescent_above_threshold_needs_no_control() {
        let n = 3;
        let model = InfluenceModel::new(DMatrix::zeros(n, n), DVector::from_element(n, 0.7), vec![0], DMatrix::identity(1, 1)).unwrap();
        let p = TfProblem::new(model, DVector::zeros(n), DVector::from_element(n, 0.7), 1, 4).unwrap();
        let sol = solve_tf(&p).unwrap();
        assert!(sol.cost.abs() < 1e-12);
    }

    #[test]
    fn zero_control_is_flagged() {
        let n = 2;
        let p = TfProblem::new(decoupled(n), DVector::zeros(n), DVector::from_element(n, 0.7), 1, 3).unwrap();
        let mut sol = solve_tf(&p).unwrap();
        let x0 = p.x0.clone();
        sol.trajectory = p.model.simulate(&x0, &[], 3).unwrap();
        assert!(certify_first_order(&sol, &p).max() > 0.1);
    }

    #[test]
    fn unreachable_in_time() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.5, 0.0]);
        let model = InfluenceModel::new(a, DVector::zeros(3), vec![0], DMatrix::identity(1, 1)).unwrap();
        // node 2 is two hops away: needs T0 ≥ 3
        let p = TfProblem::new(model.clone(), DVector::zeros(3), DVector::from_element(3, 0.1), 2, 5).unwrap();
        assert!(matches!(solve_tf(&p), Err(FermentError::Unreachable { rows }) if rows == vec![2]));
        let p = TfProblem::new(model, DVector::zeros(3), DVector::from_element(3, 0.1), 3, 5).unwrap();
        assert!(solve_tf(&p).is_ok());
    }

    #[test]
    fn steering_cost_scalar() {
        // x(t+1) = 0.5 x + u, from 0 to 1 in 2 steps: min u0² + u1² s.t. 0.5u0 + u1 = 1 → 1/1.25
        let model = InfluenceModel::new(DMatrix::from_element(1, 1, 0.5), DVector::zeros(1), vec![0], DMatrix::identity(1, 1)).unwrap();
        let d = steering_cost(&model, &DVector::zeros(1), &DVector::from_element(1, 1.0), 2).unwrap();
        assert!((d - 0.8).abs() < 1e-12);
        let unreachable = InfluenceModel::new(DMatrix::zeros(2, 2), DVector::zeros(2), vec![0], DMatrix::identity(1, 1)).unwrap();
        assert!(steering_cost(&unreachable, &DVector::zeros(2), &DVector::from_element(2, 1.0), 3).is_none());
    }

    #[test]
    fn chain_bound_and_summary() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.5, 0.0]);
        let model = InfluenceModel::new(a, DVector::zeros(2), vec![0], DMatrix::identity(1, 1)).unwrap();
        let tau = DVector::from_element(2, 0.7);
        let p = TfProblem::new(model.clone(), DVector::zeros(2), tau.clone(), 2, 6).unwrap();
        let sol = solve_tf(&p).unwrap();
        let eq = tf_equilibrium(&model, &tau).unwrap();
        let (bound, _) = cheap_reachability_bound(&sol, &p, &eq).unwrap();
        assert!(sol.cost <= bound + 1e-8);
        let s = serde_json::to_value(summarize(&sol, &eq)).unwrap();
        assert_eq!(s["status"], "optimal");
        assert!(s["cheap_reachability_gap"].is_number());
    }

    #[test]
    fn gf_gradients_match_finite_differences() {
        use rand::SeedableRng;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.3, 0.5, 0.0]);
        let model = InfluenceModel::new(a, DVector::zeros(2), vec![0], DMatrix::identity(1, 1)).unwrap();
        let p = GfProblem::new(model, DVector::zeros(2), 0.7, 8.0, 0.5, 2, 5).unwrap();
        let nlp = GfNlp { p: &p, sigmoid: p.sigmoid(), level: p.level() };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let z = DVector::from_fn(5, |i, _| 0.3 + 0.2 * i as f64);
        assert!(crate::solver::nlp::gradient_check(&nlp, &z, 20, &mut rng) < 1e-6);
    }
}
