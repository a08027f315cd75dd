//! Budget-constrained max-min ferment by forward-backward sweeps.
//!
//! Costates are indexed by the state they price: `λ(t)` belongs to
//! `(x(t), r(t), y(t))`, the transition `t → t+1` is priced by `λ(t+1)`, and
//! the control is `u(t) = R⁻¹Bᵀλ_x(t+1) / (2λ_y)`. The record only looks at
//! `x(0..T−1)`, so `u(T−1)` is always zero.

use log::{info, warn};
use nalgebra::DVector;
use serde::Serialize;

use crate::dynamics::{InfluenceModel, Trajectory};
use crate::error::{FermentError, Result};
use crate::psi::Sigmoid;

#[derive(Debug, Clone, PartialEq)]
pub struct MaxminState {
    pub x: DVector<f64>,
    pub r: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointState {
    pub lambda_x: DVector<f64>,
    pub lambda_r: f64,
    pub lambda_y: f64,
}

/// Which adjoint update a backward step used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// record not attained at this step, `φ < 0`
    Carry,
    /// record attained and binding, `φ > 1`
    Reset,
    /// interpolated, `φ ∈ [0, 1]`
    Split,
}

#[derive(Debug, Clone)]
pub struct BackwardSweep {
    /// `λ(0..=T)`
    pub adjoints: Vec<AdjointState>,
    /// candidate controls `ũ(0..T)`
    pub controls: Vec<DVector<f64>>,
    /// `φ` used when computing `λ(s)` from `λ(s+1)`; index `T` unused
    pub phi: Vec<f64>,
    pub branches: Vec<Branch>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MfStatus {
    Converged,
    /// `|λ_y(T)|` collapsed below 1e-12
    Abnormal,
    InnerLimit,
    OuterLimit,
    Oscillation,
}

#[derive(Debug, Clone)]
pub struct MfParams {
    pub eps1: f64,
    pub eps2: f64,
    pub w: f64,
    /// printed shooting step; `None` means `1e-3·C`
    pub mu_step: Option<f64>,
    pub inner_cap: usize,
    pub outer_cap: usize,
}

impl Default for MfParams {
    fn default() -> Self {
        Self { eps1: 1e-6, eps2: 1e-6, w: 0.9, mu_step: None, inner_cap: 5000, outer_cap: 500 }
    }
}

#[derive(Debug, Clone)]
pub struct MfProblem {
    pub model: InfluenceModel,
    pub x0: DVector<f64>,
    pub sigmoid: Sigmoid,
    pub horizon: usize,
    pub budget: f64,
}

impl MfProblem {
    pub fn new(model: InfluenceModel, x0: DVector<f64>, sigmoid: Sigmoid, horizon: usize, budget: f64) -> Result<Self> {
        if x0.len() != model.n() {
            return Err(FermentError::DimensionMismatch(format!("x0 has length {} for n={}", x0.len(), model.n())));
        }
        if horizon == 0 {
            return Err(FermentError::InvalidParameter("horizon must be positive".into()));
        }
        if !(budget >= 0.0 && budget.is_finite()) {
            return Err(FermentError::InvalidParameter(format!("budget must be finite and ≥ 0, got {budget}")));
        }
        Ok(Self { model, x0, sigmoid, horizon, budget })
    }
}

#[derive(Debug, Clone)]
pub struct MfSolution {
    pub trajectory: Trajectory,
    pub states: Vec<MaxminState>,
    pub attained: f64,
    pub expenditure: f64,
    pub budget: f64,
    pub lambda_y_terminal: f64,
    pub complementarity_residual: f64,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
    pub status: MfStatus,
    /// the printed shooting direction was reversed at runtime
    pub sign_flipped: bool,
}

impl MfSolution {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "attained": self.attained,
            "expenditure": self.expenditure,
            "budget": self.budget,
            "lambda_y_T": self.lambda_y_terminal,
            "complementarity_residual": self.complementarity_residual,
            "iterations": {"inner": self.inner_iterations, "outer": self.outer_iterations},
            "status": self.status,
        })
    }
}

/// Propagates `(x, r, y)`; returns `T + 1` states.
pub fn forward_sweep(model: &InfluenceModel, sigmoid: &Sigmoid, x0: &DVector<f64>, u: &[DVector<f64>]) -> Vec<MaxminState> {
    let mut states = Vec::with_capacity(u.len() + 1);
    let mut cur = MaxminState { x: x0.clone(), r: sigmoid.value(x0), y: 0.0 };
    for ut in u {
        let next = MaxminState {
            x: model.step_unchecked(&cur.x, ut),
            r: cur.r.min(sigmoid.value(&cur.x)),
            y: cur.y + model.control_cost(ut),
        };
        states.push(std::mem::replace(&mut cur, next));
    }
    states.push(cur);
    states
}

fn control_from(model: &InfluenceModel, lambda_x: &DVector<f64>, lambda_y: f64) -> DVector<f64> {
    model.r_inv() * model.apply_bt(lambda_x) / (2.0 * lambda_y)
}

/// One backward pass for fixed `λ_y(T)`.
pub fn backward_sweep(model: &InfluenceModel, sigmoid: &Sigmoid, states: &[MaxminState], lambda_y: f64) -> BackwardSweep {
    let horizon = states.len() - 1;
    let n = model.n();
    let mut adjoints = vec![AdjointState { lambda_x: DVector::zeros(n), lambda_r: 1.0, lambda_y }; horizon + 1];
    let mut controls = vec![DVector::zeros(model.m()); horizon];
    let mut phi = vec![0.0; horizon + 1];
    let mut branches = vec![Branch::Split; horizon + 1];
    // transition s → s+1 is priced by λ(s+1) and reads ψ(x(s)); its φ shapes
    // λ_x(s), hence u(s−1), hence x(s)
    for s in (0..horizon).rev() {
        let next = adjoints[s + 1].clone();
        let base = model.a().tr_mul(&next.lambda_x);
        let grad = sigmoid.gradient(&states[s].x);
        let (f, branch) = if s == 0 {
            // r(0) = ψ(x(0)) is fixed; the remaining weight lands there
            (1.0, Branch::Reset)
        } else {
            let prev = &states[s - 1].x;
            let reference = sigmoid.value(prev);
            let free = model.a() * prev + model.drift() + model.apply_b(&control_from(model, &base, lambda_y));
            let push = model.apply_b(&control_from(model, &(&grad * next.lambda_r), lambda_y));
            find_phi(|f| sigmoid.value(&(&free + &push * f)) - reference)
        };
        adjoints[s].lambda_x = base + grad * (f * next.lambda_r);
        adjoints[s].lambda_r = (1.0 - f) * next.lambda_r;
        if s >= 1 {
            controls[s - 1] = control_from(model, &adjoints[s].lambda_x, lambda_y);
        }
        phi[s] = f;
        branches[s] = branch;
    }
    debug_assert!(adjoints.iter().all(|a| a.lambda_r >= 0.0));
    BackwardSweep { adjoints, controls, phi, branches }
}

/// Root of the nondecreasing `g` on `[−2, 3]` by bisection, clipped to `[0, 1]`.
fn find_phi(g: impl Fn(f64) -> f64) -> (f64, Branch) {
    let (mut lo, mut hi) = (-2.0, 3.0);
    let (g_lo, g_hi) = (g(lo), g(hi));
    if g_lo > 0.0 {
        return (0.0, Branch::Carry);
    }
    if g_hi < 0.0 {
        return (1.0, Branch::Reset);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 {
            break;
        }
    }
    let root = 0.5 * (lo + hi);
    if root < 0.0 {
        (0.0, Branch::Carry)
    } else if root > 1.0 {
        (1.0, Branch::Reset)
    } else {
        (root, Branch::Split)
    }
}

/// `H = λ_xᵀ(Ax + Bu + (I−A)q) + λ_r min(r, ψ(x)) + λ_y (y + c(u))`.
pub fn hamiltonian(model: &InfluenceModel, sigmoid: &Sigmoid, adj: &AdjointState, state: &MaxminState, u: &DVector<f64>) -> f64 {
    adj.lambda_x.dot(&model.step_unchecked(&state.x, u))
        + adj.lambda_r * state.r.min(sigmoid.value(&state.x))
        + adj.lambda_y * (state.y + model.control_cost(u))
}

/// One-sided derivative of `H` along `(v_x, v_r)` in the `(x, r)` slots.
pub fn hamiltonian_directional_derivative(
    model: &InfluenceModel,
    sigmoid: &Sigmoid,
    adj: &AdjointState,
    state: &MaxminState,
    v_x: &DVector<f64>,
    v_r: f64,
) -> f64 {
    let smooth = adj.lambda_x.dot(&(model.a() * v_x));
    let psi = sigmoid.value(&state.x);
    let dpsi = sigmoid.gradient(&state.x).dot(v_x);
    let record = if state.r < psi {
        v_r
    } else if state.r > psi {
        dpsi
    } else {
        dpsi.min(v_r)
    };
    smooth + adj.lambda_r * record
}

struct InnerResult {
    u: Vec<DVector<f64>>,
    states: Vec<MaxminState>,
    iterations: usize,
    converged: bool,
}

/// Relaxed sweeps `u ← w·u + (1−w)·ũ`. When the change stops shrinking over
/// a window of 100 sweeps the step `1−w` is halved, which averages out the
/// chatter between branches on flat stretches of the record.
fn inner_loop(p: &MfProblem, params: &MfParams, lambda_y: f64, mut u: Vec<DVector<f64>>) -> InnerResult {
    let model = &p.model;
    let mut step = 1.0 - params.w;
    let mut window_best = f64::INFINITY;
    let mut last_window = f64::INFINITY;
    for j in 1..=params.inner_cap {
        let states = forward_sweep(model, &p.sigmoid, &p.x0, &u);
        let sweep = backward_sweep(model, &p.sigmoid, &states, lambda_y);
        let mut change = 0.0;
        for (ut, ct) in u.iter_mut().zip(&sweep.controls) {
            let next = &*ut * (1.0 - step) + ct * step;
            change += (&next - &*ut).norm_squared();
            *ut = next;
        }
        let change = change.sqrt();
        if change < params.eps1 {
            let states = forward_sweep(model, &p.sigmoid, &p.x0, &u);
            return InnerResult { u, states, iterations: j, converged: true };
        }
        window_best = window_best.min(change);
        if j % 100 == 0 {
            if window_best > 0.5 * last_window {
                step *= 0.5;
            }
            last_window = window_best;
            window_best = f64::INFINITY;
        }
    }
    let states = forward_sweep(model, &p.sigmoid, &p.x0, &u);
    InnerResult { u, states, iterations: params.inner_cap, converged: false }
}

/// Sweeps for fixed `λ_y(T)` with a warm start; exposed for budget scans.
pub fn sweep_for_multiplier(p: &MfProblem, params: &MfParams, lambda_y: f64) -> (Vec<DVector<f64>>, f64, bool) {
    let r = inner_loop(p, params, lambda_y, vec![DVector::zeros(p.model.m()); p.horizon]);
    let spent = r.states.last().map_or(0.0, |s| s.y);
    (r.u, spent, r.converged)
}

pub fn solve_mf(p: &MfProblem) -> Result<MfSolution> {
    solve_mf_with(p, &MfParams::default())
}

/// Outer shooting on `λ_y(T)`, inner relaxed sweeps.
///
/// The outer step is `λ ← λ·(E/C)^{γ/2}`, exact when spending scales like
/// `λ⁻²`, kept inside the bracket seen so far; `γ` halves on oscillation.
pub fn solve_mf_with(p: &MfProblem, params: &MfParams) -> Result<MfSolution> {
    if !(params.w > 0.0 && params.w < 1.0) || params.eps1 <= 0.0 || params.eps2 <= 0.0 {
        return Err(FermentError::InvalidParameter("need w ∈ (0,1) and eps1, eps2 > 0".into()));
    }
    let model = &p.model;
    let zeros = vec![DVector::zeros(model.m()); p.horizon];
    if p.budget == 0.0 {
        let states = forward_sweep(model, &p.sigmoid, &p.x0, &zeros);
        return Ok(package(p, zeros, states, f64::INFINITY, 0, 0, MfStatus::Converged, false));
    }
    let budget = p.budget;
    let mu = params.mu_step.unwrap_or(1e-3 * budget);
    let mut lambda = 1.0f64;
    let mut u = zeros;
    let mut inner_total = 0;
    // λ values known to overspend / underspend
    let mut over: Option<f64> = None;
    let mut under: Option<f64> = None;
    let mut gamma = 1.0f64;
    let mut halvings = 0;
    let mut last_gap: Option<f64> = None;
    let mut direction = -1.0f64;
    let mut sign_flipped = false;
    let mut prev_point: Option<(f64, f64)> = None;
    for outer in 1..=params.outer_cap {
        let inner = inner_loop(p, params, lambda, u);
        inner_total += inner.iterations;
        u = inner.u;
        let spent = inner.states.last().map_or(0.0, |s| s.y);
        let gap = spent - budget;
        if !inner.converged {
            warn!("inner sweep hit its cap at λ_y = {lambda:.6e}");
        }
        if gap > 0.0 {
            over = Some(over.map_or(lambda, |o: f64| o.max(lambda)));
        } else {
            under = Some(under.map_or(lambda, |o: f64| o.min(lambda)));
        }
        // the printed update moves λ by −μ(E − C); keep it only if spending
        // responds in that direction
        if let Some((l_prev, e_prev)) = prev_point {
            let slope = (spent - e_prev) / (lambda - l_prev);
            if slope.is_finite() && slope != 0.0 && (slope > 0.0) != (direction < 0.0) {
                direction = -direction;
                sign_flipped = !sign_flipped;
                info!("shooting direction reversed: spending falls as λ_y grows");
            }
        }
        prev_point = Some((lambda, spent));
        if gap.abs() <= 1e-10 * budget {
            let status = if inner.converged { MfStatus::Converged } else { MfStatus::InnerLimit };
            return Ok(package(p, u, inner.states, lambda, inner_total, outer, status, sign_flipped));
        }
        if let Some(prev) = last_gap {
            if prev * gap < 0.0 && gap.abs() > prev.abs() {
                halvings += 1;
                gamma *= 0.5;
                if halvings > 10 {
                    return Ok(package(p, u, inner.states, lambda, inner_total, outer, MfStatus::Oscillation, sign_flipped));
                }
            }
        }
        last_gap = Some(gap);
        let mut next = if spent > 0.0 {
            lambda * (spent / budget).powf(0.5 * gamma)
        } else {
            lambda + direction * mu * gap
        };
        let (lo, hi) = (over, under);
        if let (Some(lo), Some(hi)) = (lo, hi) {
            if !(next > lo.min(hi) && next < lo.max(hi)) {
                next = (lo * hi).sqrt();
            }
        }
        let step = next - lambda;
        lambda = next;
        if lambda.abs() < 1e-12 {
            return Ok(package(p, u, inner.states, lambda, inner_total, outer, MfStatus::Abnormal, sign_flipped));
        }
        if step.abs() < params.eps2 * lambda.abs() {
            let status = if inner.converged { MfStatus::Converged } else { MfStatus::InnerLimit };
            return Ok(package(p, u, inner.states, lambda - step, inner_total, outer, status, sign_flipped));
        }
    }
    let states = forward_sweep(model, &p.sigmoid, &p.x0, &u);
    Ok(package(p, u, states, lambda, inner_total, params.outer_cap, MfStatus::OuterLimit, sign_flipped))
}

#[allow(clippy::too_many_arguments)]
fn package(
    p: &MfProblem,
    mut u: Vec<DVector<f64>>,
    mut states: Vec<MaxminState>,
    lambda_y: f64,
    inner: usize,
    outer: usize,
    status: MfStatus,
    sign_flipped: bool,
) -> MfSolution {
    let spent = states.last().map_or(0.0, |s| s.y);
    // trim a residual overshoot onto the budget
    if spent > p.budget && spent > 0.0 {
        let s = (p.budget / spent).sqrt();
        u.iter_mut().for_each(|ut| *ut *= s);
        states = forward_sweep(&p.model, &p.sigmoid, &p.x0, &u);
    }
    let last = states.last().expect("at least one state");
    let expenditure = last.y;
    let attained = last.r;
    let trajectory = Trajectory::new(&p.model, states.iter().map(|s| s.x.clone()).collect(), u);
    let complementarity_residual = if lambda_y.is_finite() { (lambda_y * (expenditure - p.budget)).abs() } else { 0.0 };
    MfSolution {
        trajectory,
        states,
        attained,
        expenditure,
        budget: p.budget,
        lambda_y_terminal: lambda_y,
        complementarity_residual,
        inner_iterations: inner,
        outer_iterations: outer,
        status,
        sign_flipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn toy() -> MfProblem {
        let a = DMatrix::from_row_slice(2, 2, &[0.6, 0.3, 0.2, 0.7]);
        let model = InfluenceModel::new(a, DVector::zeros(2), vec![0], DMatrix::identity(1, 1)).unwrap();
        MfProblem::new(model, DVector::from_element(2, 2.0), Sigmoid::new(0.5, 0.7).unwrap(), 3, 1.0).unwrap()
    }

    #[test]
    fn zero_control_spends_nothing() {
        let p = toy();
        let u = vec![DVector::zeros(1); 3];
        let s = forward_sweep(&p.model, &p.sigmoid, &p.x0, &u);
        assert_eq!(s.last().unwrap().y, 0.0);
        let scan = s[..3].iter().map(|st| p.sigmoid.value(&st.x)).fold(f64::INFINITY, f64::min);
        assert_eq!(s.last().unwrap().r, scan);
    }

    #[test]
    fn terminal_step_gives_no_control() {
        let p = toy();
        let s = forward_sweep(&p.model, &p.sigmoid, &p.x0, &vec![DVector::zeros(1); 3]);
        let b = backward_sweep(&p.model, &p.sigmoid, &s, 1.0);
        assert_eq!(b.controls[2], DVector::zeros(1));
        assert!(b.adjoints.iter().all(|a| (0.0..=1.0).contains(&a.lambda_r)));
    }

    #[test]
    fn zero_budget_returns_free_run() {
        let mut p = toy();
        p.budget = 0.0;
        let sol = solve_mf(&p).unwrap();
        assert_eq!(sol.expenditure, 0.0);
        let free = forward_sweep(&p.model, &p.sigmoid, &p.x0, &vec![DVector::zeros(1); 3]);
        assert_eq!(sol.attained, free.last().unwrap().r);
    }

    #[test]
    fn budget_is_met() {
        let mut p = toy();
        p.budget = 0.1;
        let sol = solve_mf(&p).unwrap();
        assert_eq!(sol.status, MfStatus::Converged);
        assert!(sol.expenditure <= p.budget * (1.0 + 1e-6));
        assert!(sol.complementarity_residual <= 1e-3 * p.budget);
    }

    #[test]
    fn slack_budget_is_abnormal() {
        let p = toy();
        let sol = solve_mf(&p).unwrap();
        assert_eq!(sol.status, MfStatus::Abnormal);
        assert!(sol.expenditure <= p.budget);
        assert!(sol.attained >= p.sigmoid.value(&p.x0) - 1e-6);
    }
}
