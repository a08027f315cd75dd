//! Equilibrium points, reachability feasibility and the sparse relaxation.

use std::collections::VecDeque;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dynamics::InfluenceModel;
use crate::error::{FermentError, Result};
use crate::psi::Sigmoid;
use crate::solver::nlp::{solve_nlp_with, NlpSettings, SmoothNlp};
use crate::solver::{solve_qp_with, CsrMatrix, QpSettings, QpSolution, QpStatus, QuadraticProgram};

/// Constant state and input holding the dynamics at rest.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumPoint {
    pub x_e: DVector<f64>,
    pub u_e: DVector<f64>,
    pub cost: f64,
    pub controlled: Vec<usize>,
}

#[derive(Serialize)]
struct EquilibriumJson<'a> {
    x_e: Vec<f64>,
    u_e: Vec<f64>,
    cost: f64,
    controlled: &'a [usize],
}

impl EquilibriumPoint {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(EquilibriumJson {
            x_e: self.x_e.iter().copied().collect(),
            u_e: self.u_e.iter().copied().collect(),
            cost: self.cost,
            controlled: &self.controlled,
        })
        .expect("plain data serializes")
    }

    /// Largest violation of `x_e = A x_e + B u_e + (I − A) q`.
    pub fn fixed_point_residual(&self, model: &InfluenceModel) -> f64 {
        (model.step_unchecked(&self.x_e, &self.u_e) - &self.x_e).amax()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Feasibility {
    Feasible,
    /// rows with `τ_i > q_i` that no controlled node reaches
    Infeasible { rows: Vec<usize> },
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible)
    }
}

/// Nodes reachable from `sources` along influence edges of `A`'s support
/// (node `j` reaches `i` when `a_ij > 0`).
pub fn reachable_from(a: &DMatrix<f64>, sources: &[usize]) -> Vec<bool> {
    let n = a.nrows();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    for &s in sources {
        if !seen[s] {
            seen[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(j) = queue.pop_front() {
        for i in 0..n {
            if !seen[i] && a[(i, j)] > 0.0 {
                seen[i] = true;
                queue.push_back(i);
            }
        }
    }
    seen
}

/// Rows needing a lift (`τ_i > q_i`) that the controlled set of `model`
/// cannot influence. Exact graph reachability, no floating-point test.
pub fn feasibility_check(model: &InfluenceModel, tau: &DVector<f64>) -> Feasibility {
    feasibility_for_set(model.a(), model.q(), tau, model.controlled())
}

pub fn feasibility_for_set(a: &DMatrix<f64>, q: &DVector<f64>, tau: &DVector<f64>, controlled: &[usize]) -> Feasibility {
    let reach = reachable_from(a, controlled);
    let rows: Vec<usize> = (0..a.nrows()).filter(|&i| tau[i] > q[i] && !reach[i]).collect();
    if rows.is_empty() {
        Feasibility::Feasible
    } else {
        Feasibility::Infeasible { rows }
    }
}

/// `(I − A)⁻¹` by dense LU.
pub fn substochastic_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    (DMatrix::identity(n, n) - a)
        .lu()
        .try_inverse()
        .ok_or_else(|| FermentError::InvalidModel("I − A is singular".into()))
}

fn check_tau(model: &InfluenceModel, tau: &DVector<f64>) -> Result<()> {
    if tau.len() != model.n() {
        return Err(FermentError::DimensionMismatch(format!("tau has length {} for n={}", tau.len(), model.n())));
    }
    if tau.iter().any(|t| !t.is_finite()) {
        return Err(FermentError::InvalidParameter("tau must be finite".into()));
    }
    Ok(())
}

/// Minimum-cost equilibrium with `x_e ≥ τ`.
pub fn tf_equilibrium(model: &InfluenceModel, tau: &DVector<f64>) -> Result<EquilibriumPoint> {
    let inv = substochastic_inverse(model.a())?;
    tf_equilibrium_with(model, tau, &inv, &QpSettings::default(), None).map(|(p, _)| p)
}

/// As [`tf_equilibrium`] with a precomputed `(I − A)⁻¹` and an optional warm
/// start; also returns the QP solution for reuse.
pub fn tf_equilibrium_with(
    model: &InfluenceModel,
    tau: &DVector<f64>,
    inverse: &DMatrix<f64>,
    settings: &QpSettings,
    warm: Option<&QpSolution>,
) -> Result<(EquilibriumPoint, QpSolution)> {
    check_tau(model, tau)?;
    if let Feasibility::Infeasible { rows } = feasibility_check(model, tau) {
        return Err(FermentError::Unreachable { rows });
    }
    let n = model.n();
    let m = model.m();
    let mb = DMatrix::from_fn(n, m, |i, c| inverse[(i, model.controlled()[c])]);
    let qp = QuadraticProgram::new(
        CsrMatrix::from_dense(&(model.r() * 2.0)),
        DVector::zeros(m),
        CsrMatrix::zeros(0, m),
        DVector::zeros(0),
        CsrMatrix::from_dense(&mb),
        tau - model.q(),
    )?;
    let sol = solve_qp_with(&qp, settings, warm);
    match sol.status {
        QpStatus::Optimal => {}
        QpStatus::Infeasible => return Err(FermentError::Infeasible("equilibrium QP certified infeasible".into())),
        _ => {
            return Err(FermentError::NotConverged(format!(
                "equilibrium QP: {:?} after {} iterations (primal {:.2e}, dual {:.2e})",
                sol.status, sol.iterations, sol.primal_residual, sol.dual_residual
            )))
        }
    }
    let u_e = sol.z.clone();
    let x_e = model.q() + &mb * &u_e;
    let cost = model.control_cost(&u_e);
    Ok((EquilibriumPoint { x_e, u_e, cost, controlled: model.controlled().to_vec() }, sol))
}

/// Equilibrium program with the sigmoid constraint `ψ(x_e) ≥ k n`.
struct GfEquilibriumNlp<'a> {
    model: &'a InfluenceModel,
    mb: DMatrix<f64>,
    sigmoid: Sigmoid,
    level: f64,
}

impl GfEquilibriumNlp<'_> {
    fn state(&self, u: &DVector<f64>) -> DVector<f64> {
        self.model.q() + &self.mb * u
    }
}

impl SmoothNlp for GfEquilibriumNlp<'_> {
    fn num_vars(&self) -> usize {
        self.model.m()
    }
    fn num_ineq(&self) -> usize {
        1
    }
    fn objective(&self, u: &DVector<f64>, grad: &mut DVector<f64>) -> f64 {
        let ru = self.model.r() * u;
        grad.copy_from(&(&ru * 2.0));
        u.dot(&ru)
    }
    fn ineq_values(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, self.sigmoid.value(&self.state(u)) - self.level)
    }
    fn ineq_jac_t(&self, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        self.mb.tr_mul(&self.sigmoid.gradient(&self.state(u))) * w[0]
    }
}

fn check_gf_params(k: f64, a: f64) -> Result<()> {
    if !(k > 0.0 && k < 1.0) {
        return Err(FermentError::InvalidParameter(format!("k must lie in (0,1), got {k}")));
    }
    if !(a > 0.0) {
        return Err(FermentError::InvalidParameter(format!("sigmoid slope must be positive, got {a}")));
    }
    Ok(())
}

/// Minimum-cost equilibrium with `ψ(x_e) ≥ k n`. Local solver, multistarted
/// from the threshold equilibrium and from zero.
pub fn gf_equilibrium(model: &InfluenceModel, tau: f64, k: f64, a: f64) -> Result<EquilibriumPoint> {
    check_gf_params(k, a)?;
    let sigmoid = Sigmoid::new(a, tau)?;
    let n = model.n();
    let level = k * n as f64;
    let inverse = substochastic_inverse(model.a())?;
    let mb = DMatrix::from_fn(n, model.m(), |i, c| inverse[(i, model.controlled()[c])]);
    if model.m() == 0 {
        return if sigmoid.value(model.q()) >= level {
            Ok(EquilibriumPoint { x_e: model.q().clone(), u_e: DVector::zeros(0), cost: 0.0, controlled: vec![] })
        } else {
            Err(FermentError::Infeasible("no controlled nodes and ψ(q) < kn".into()))
        };
    }
    let nlp = GfEquilibriumNlp { model, mb, sigmoid, level };
    let mut starts = vec![DVector::zeros(model.m())];
    let tau_vec = DVector::from_element(n, tau);
    if let Ok((tf, _)) = tf_equilibrium_with(model, &tau_vec, &inverse, &QpSettings::default(), None) {
        starts.insert(0, tf.u_e);
    }
    let settings = NlpSettings { tol: 1e-9, ..NlpSettings::default() };
    let mut best: Option<crate::solver::NlpSolution> = None;
    let mut last_err = String::new();
    for z0 in &starts {
        let sol = solve_nlp_with(&nlp, z0, &settings, None);
        if sol.is_converged() {
            if best.as_ref().is_none_or(|b| sol.objective < b.objective) {
                best = Some(sol);
            }
        } else {
            last_err = format!(
                "{:?}: stationarity {:.2e}, violation {:.2e}",
                sol.status, sol.stationarity_residual, sol.constraint_violation
            );
            warn!("GF equilibrium start failed: {last_err}");
        }
    }
    let sol = best.ok_or_else(|| FermentError::NotConverged(format!("GF equilibrium: {last_err}")))?;
    let x_e = nlp.state(&sol.z);
    Ok(EquilibriumPoint { cost: model.control_cost(&sol.z), x_e, u_e: sol.z, controlled: model.controlled().to_vec() })
}

/// Result of the sparse (L1-weighted) equilibrium program over all nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationResult {
    pub u_tilde: DVector<f64>,
    pub support: Vec<usize>,
    pub mu: f64,
    pub x_e: DVector<f64>,
}

/// Minimizes `‖ũ‖² + μ‖ũ‖₁` over fully actuated equilibria with `x_e ≥ τ`,
/// splitting `ũ = p − n` with `p, n ≥ 0`. The controlled set of `model` is
/// ignored.
pub fn convex_relaxation(model: &InfluenceModel, tau: &DVector<f64>, mu: f64) -> Result<RelaxationResult> {
    check_tau(model, tau)?;
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(FermentError::InvalidParameter(format!("mu must be finite and nonnegative, got {mu}")));
    }
    let n = model.n();
    let inverse = substochastic_inverse(model.a())?;
    let mut h = Vec::with_capacity(4 * n);
    for i in 0..n {
        h.push((i, i, 2.0));
        h.push((n + i, n + i, 2.0));
        h.push((i, n + i, -2.0));
        h.push((n + i, i, -2.0));
    }
    let mut rows = Vec::with_capacity(2 * n * n + 2 * n);
    for i in 0..n {
        for j in 0..n {
            let v = inverse[(i, j)];
            if v != 0.0 {
                rows.push((i, j, v));
                rows.push((i, n + j, -v));
            }
        }
    }
    for j in 0..2 * n {
        rows.push((n + j, j, 1.0));
    }
    let mut b = DVector::zeros(3 * n);
    b.rows_mut(0, n).copy_from(&(tau - model.q()));
    let qp = QuadraticProgram::new(
        CsrMatrix::from_triplets(2 * n, 2 * n, &h),
        DVector::from_element(2 * n, mu),
        CsrMatrix::zeros(0, 2 * n),
        DVector::zeros(0),
        CsrMatrix::from_triplets(3 * n, 2 * n, &rows),
        b,
    )?;
    let sol = solve_qp_with(&qp, &QpSettings::default(), None);
    if !sol.is_optimal() {
        return Err(FermentError::NotConverged(format!(
            "relaxation QP: {:?} (primal {:.2e}, dual {:.2e})",
            sol.status, sol.primal_residual, sol.dual_residual
        )));
    }
    let u_tilde = sol.z.rows(0, n) - sol.z.rows(n, n);
    let threshold = 1e-6 * u_tilde.amax();
    let support = (0..n).filter(|&i| u_tilde[i].abs() > threshold).collect();
    let x_e = model.q() + &inverse * &u_tilde;
    Ok(RelaxationResult { u_tilde, support, mu, x_e })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(controlled: Vec<usize>) -> InfluenceModel {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.5, 0.0]);
        let m = controlled.len();
        InfluenceModel::new(a, DVector::zeros(2), controlled, DMatrix::identity(m, m)).unwrap()
    }

    #[test]
    fn chain_equilibrium_matches_hand_kkt() {
        let eq = tf_equilibrium(&chain(vec![0]), &DVector::from_element(2, 0.7)).unwrap();
        assert!((eq.u_e[0] - 1.4).abs() < 1e-6);
        assert!((eq.cost - 1.96).abs() < 1e-6);
        assert!((eq.x_e[0] - 1.4).abs() < 1e-6 && (eq.x_e[1] - 0.7).abs() < 1e-6);
        assert!(eq.fixed_point_residual(&chain(vec![0])) < 1e-12);
    }

    #[test]
    fn sink_control_is_unreachable() {
        let model = chain(vec![1]);
        let tau = DVector::from_element(2, 0.7);
        assert_eq!(feasibility_check(&model, &tau), Feasibility::Infeasible { rows: vec![0] });
        match tf_equilibrium(&model, &tau) {
            Err(FermentError::Unreachable { rows }) => assert_eq!(rows, vec![0]),
            other => panic!("expected unreachable, got {other:?}"),
        }
        // rows already above threshold do not matter
        let tau = DVector::from_vec(vec![0.0, 0.7]);
        assert!(feasibility_check(&model, &tau).is_feasible());
    }

    #[test]
    fn decoupled_full_actuation() {
        let n = 5;
        let model = InfluenceModel::new(DMatrix::zeros(n, n), DVector::zeros(n), (0..n).collect(), DMatrix::identity(n, n)).unwrap();
        let eq = tf_equilibrium(&model, &DVector::from_element(n, 0.7)).unwrap();
        assert!((eq.cost - 0.49 * n as f64).abs() <= 1e-12 * n as f64);
        assert!((&eq.u_e - DVector::from_element(n, 0.7)).amax() < 1e-12);
        let json = eq.to_json();
        assert_eq!(json["controlled"].as_array().unwrap().len(), n);
        assert_eq!(json["u_e"].as_array().unwrap().len(), n);
    }

    #[test]
    fn relaxation_on_decoupled_and_chain() {
        let n = 4;
        let model = InfluenceModel::new(DMatrix::zeros(n, n), DVector::zeros(n), vec![], DMatrix::zeros(0, 0)).unwrap();
        let r = convex_relaxation(&model, &DVector::from_element(n, 0.7), 0.0).unwrap();
        assert!((&r.u_tilde - DVector::from_element(n, 0.7)).amax() < 1e-8);
        assert_eq!(r.support, vec![0, 1, 2, 3]);

        let model = chain(vec![]);
        let tau = DVector::from_element(2, 0.7);
        let full = tf_equilibrium(&chain(vec![0, 1]), &tau).unwrap();
        let r0 = convex_relaxation(&model, &tau, 0.0).unwrap();
        assert!((&r0.u_tilde - &full.u_e).amax() < 1e-8);
        // hand KKT: u₁ = 0.7 binding, u₂ = 0.35 for every μ ≥ 0
        for mu in [0.0, 1.0, 10.0] {
            let r = convex_relaxation(&model, &tau, mu).unwrap();
            assert!((r.u_tilde[0] - 0.7).abs() < 1e-8 && (r.u_tilde[1] - 0.35).abs() < 1e-8, "mu {mu}");
            assert_eq!(r.support, vec![0, 1]);
        }
    }

    #[test]
    fn relaxation_concentrates_on_hub() {
        let n = 4;
        let mut a = DMatrix::zeros(n, n);
        for i in 1..n {
            a[(i, 0)] = 0.45;
        }
        let model = InfluenceModel::new(a, DVector::zeros(n), vec![], DMatrix::zeros(0, 0)).unwrap();
        let tau = DVector::from_element(n, 0.7);
        assert_eq!(convex_relaxation(&model, &tau, 0.0).unwrap().support, vec![0, 1, 2, 3]);
        let r = convex_relaxation(&model, &tau, 10.0).unwrap();
        assert_eq!(r.support, vec![0]);
        assert!((r.u_tilde[0] - 0.7 / 0.45).abs() < 1e-8);
    }

    #[test]
    fn gf_equilibrium_midpoint_and_containment() {
        let n = 2;
        let model = InfluenceModel::new(DMatrix::zeros(n, n), DVector::zeros(n), vec![0, 1], DMatrix::identity(n, n)).unwrap();
        let gf = gf_equilibrium(&model, 0.7, 0.5, 10.0).unwrap();
        let tf = tf_equilibrium(&model, &DVector::from_element(n, 0.7)).unwrap();
        assert!(gf.cost <= tf.cost + 1e-8);
        let s = Sigmoid::new(10.0, 0.7).unwrap();
        assert!(s.value(&gf.x_e) >= 1.0 - 1e-8);
        assert!(gf_equilibrium(&model, 0.7, 1.0, 10.0).is_err());
    }
}
