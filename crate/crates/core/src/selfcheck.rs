//! Small closed-form instances run as a smoke suite by `ferment selfcheck`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dynamics::InfluenceModel;
use crate::equilibrium::{feasibility_check, tf_equilibrium, Feasibility};
use crate::error::Result;
use crate::maxmin::{forward_sweep, solve_mf, MfProblem};
use crate::ocp::{certify_first_order, solve_tf, TfProblem};
use crate::psi::Sigmoid;
use crate::turnpike::dissipativity_certificate;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

fn chain(controlled: Vec<usize>) -> Result<InfluenceModel> {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.5, 0.0]);
    let m = controlled.len();
    InfluenceModel::new(a, DVector::zeros(2), controlled, DMatrix::identity(m, m))
}

fn decoupled(n: usize) -> Result<InfluenceModel> {
    InfluenceModel::new(DMatrix::zeros(n, n), DVector::zeros(n), (0..n).collect(), DMatrix::identity(n, n))
}

fn chain_equilibrium() -> Result<Check> {
    let eq = tf_equilibrium(&chain(vec![0])?, &DVector::from_element(2, 0.7))?;
    Ok(Check {
        name: "chain equilibrium",
        passed: (eq.u_e[0] - 1.4).abs() < 1e-6 && (eq.cost - 1.96).abs() < 1e-6,
        detail: format!("u_e = {:.9}, cost = {:.9}", eq.u_e[0], eq.cost),
    })
}

fn sink_unreachable() -> Result<Check> {
    let f = feasibility_check(&chain(vec![1])?, &DVector::from_element(2, 0.7));
    Ok(Check {
        name: "sink control infeasible",
        passed: matches!(&f, Feasibility::Infeasible { rows } if rows == &[0]),
        detail: format!("{f:?}"),
    })
}

fn decoupled_tf() -> Result<Check> {
    let n = 4;
    let p = TfProblem::new(decoupled(n)?, DVector::zeros(n), DVector::from_element(n, 0.7), 1, 3)?;
    let sol = solve_tf(&p)?;
    let kkt = certify_first_order(&sol, &p).max();
    Ok(Check {
        name: "decoupled threshold cost",
        passed: close(sol.cost, 3.0 * 0.49 * n as f64, 1e-8) && kkt <= 1e-6,
        detail: format!("J* = {:.12}, kkt = {kkt:.2e}", sol.cost),
    })
}

fn threshold_scaling() -> Result<Check> {
    let model = chain(vec![0])?;
    let x0 = DVector::zeros(2);
    let cost = |tau: f64| -> Result<(f64, f64)> {
        let tau = DVector::from_element(2, tau);
        let eq = tf_equilibrium(&model, &tau)?;
        let sol = solve_tf(&TfProblem::new(model.clone(), x0.clone(), tau, 2, 6)?)?;
        Ok((eq.cost, sol.cost))
    };
    let (e1, j1) = cost(0.35)?;
    let (e2, j2) = cost(0.7)?;
    Ok(Check {
        name: "quadratic threshold scaling",
        passed: close(e2 / e1, 4.0, 1e-6) && close(j2 / j1, 4.0, 1e-6),
        detail: format!("ratios {:.9} and {:.9}", e2 / e1, j2 / j1),
    })
}

fn sigmoid_midpoint() -> Result<Check> {
    let s = Sigmoid::new(10.0, 0.7)?;
    let v = s.value(&DVector::from_element(6, 0.7));
    Ok(Check { name: "sigmoid midpoint", passed: v == 3.0, detail: format!("psi = {v}") })
}

fn zero_budget() -> Result<Check> {
    let a = DMatrix::from_row_slice(2, 2, &[0.6, 0.3, 0.2, 0.7]);
    let model = InfluenceModel::new(a, DVector::zeros(2), vec![0], DMatrix::identity(1, 1))?;
    let x0 = DVector::from_element(2, 2.0);
    let sig = Sigmoid::new(0.5, 0.7)?;
    let free = forward_sweep(&model, &sig, &x0, &vec![DVector::zeros(1); 3]);
    let sol = solve_mf(&MfProblem::new(model, x0, sig, 3, 0.0)?)?;
    Ok(Check {
        name: "zero budget max-min",
        passed: sol.expenditure == 0.0 && sol.attained == free[3].r,
        detail: format!("attained {} vs free {}", sol.attained, free[3].r),
    })
}

fn storage_counterexample() -> Result<Check> {
    let c = dissipativity_certificate(&DMatrix::from_row_slice(2, 2, &[0.45, 0.45, 0.9, 0.0]))?;
    Ok(Check {
        name: "storage counterexample",
        passed: c.identity_gap < 0.0 && c.min_eig_gap >= 1.0 - 1e-9,
        detail: format!("identity gap {:.6}, certificate gap {:.9}", c.identity_gap, c.min_eig_gap),
    })
}

/// Runs every check; errors count as failures.
pub fn run() -> Vec<Check> {
    let checks: [(&'static str, fn() -> Result<Check>); 7] = [
        ("chain equilibrium", chain_equilibrium),
        ("sink control infeasible", sink_unreachable),
        ("decoupled threshold cost", decoupled_tf),
        ("quadratic threshold scaling", threshold_scaling),
        ("sigmoid midpoint", sigmoid_midpoint),
        ("zero budget max-min", zero_budget),
        ("storage counterexample", storage_counterexample),
    ];
    checks
        .iter()
        .map(|(name, f)| f().unwrap_or_else(|e| Check { name, passed: false, detail: e.to_string() }))
        .collect()
}
