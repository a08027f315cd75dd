//! Turnpike diagnostics: distance of an optimal trajectory to the
//! equilibrium, horizon-independent exceedance counts and a Lyapunov
//! storage certificate for the free dynamics.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::dynamics::{format_sig17, spectral_radius};
use crate::equilibrium::EquilibriumPoint;
use crate::error::{FermentError, Result};
use crate::ocp::OcpSolution;

#[derive(Debug, Clone, Serialize)]
pub struct TurnpikeReport {
    pub epsilon: f64,
    pub t0: usize,
    /// `‖x(t) − x_e‖₂ / ‖x_e‖₂` for `t = T0..=T`
    pub distances: Vec<f64>,
    pub exceedance_count: usize,
    /// `J* − T c(u_e)`
    pub cheap_gap: f64,
}

impl TurnpikeReport {
    pub fn distance_at(&self, t: usize) -> Option<f64> {
        t.checked_sub(self.t0).and_then(|k| self.distances.get(k).copied())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }

    pub fn write_csv<W: Write>(&self, mut out: W, provenance: Option<&str>) -> std::io::Result<()> {
        if let Some(p) = provenance {
            writeln!(out, "# {p}")?;
        }
        writeln!(out, "t,distance")?;
        for (k, d) in self.distances.iter().enumerate() {
            writeln!(out, "{},{}", self.t0 + k, format_sig17(*d))?;
        }
        Ok(())
    }
}

pub fn turnpike_report(sol: &OcpSolution, eq: &EquilibriumPoint, epsilon: f64) -> TurnpikeReport {
    let horizon = sol.horizon();
    let scale = eq.x_e.norm();
    let distances: Vec<f64> = (sol.t0..=horizon)
        .map(|t| {
            let d = (&sol.trajectory.x[t] - &eq.x_e).norm();
            if scale > 0.0 {
                d / scale
            } else {
                d
            }
        })
        .collect();
    let exceedance_count = distances.iter().filter(|&&d| d > epsilon).count();
    TurnpikeReport {
        epsilon,
        t0: sol.t0,
        distances,
        exceedance_count,
        cheap_gap: sol.cost - horizon as f64 * eq.cost,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DissipativityCertificate {
    pub rho: f64,
    #[serde(serialize_with = "rows")]
    pub p: DMatrix<f64>,
    /// `λ_min(P − AᵀPA)`
    pub min_eig_gap: f64,
    /// `λ_min(I − AᵀA)`, the gap the identity storage would give
    pub identity_gap: f64,
    pub iterations: usize,
}

impl DissipativityCertificate {
    pub fn identity_storage_suffices(&self) -> bool {
        self.identity_gap > 0.0
    }
}

fn rows<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let v: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    v.serialize(s)
}

fn min_eig(m: DMatrix<f64>) -> f64 {
    let sym = (&m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

/// Solves `P − AᵀPA = I` by the series `P ← I + AᵀPA`.
pub fn dissipativity_certificate(a: &DMatrix<f64>) -> Result<DissipativityCertificate> {
    if !a.is_square() {
        return Err(FermentError::DimensionMismatch(format!("A is {}x{}", a.nrows(), a.ncols())));
    }
    let n = a.nrows();
    let rho = spectral_radius(a)?;
    if rho >= 1.0 {
        return Err(FermentError::InvalidModel(format!("spectral radius {rho} ≥ 1, no storage function")));
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let mut p = eye.clone();
    let mut iterations = 0;
    loop {
        let next = &eye + a.transpose() * &p * a;
        let change = (&next - &p).amax();
        p = next;
        iterations += 1;
        if change <= 1e-12 * p.amax() {
            break;
        }
        if iterations >= 1_000_000 {
            return Err(FermentError::NotConverged(format!("Lyapunov series stalled at change {change:.3e}")));
        }
    }
    let p = (&p + p.transpose()) * 0.5;
    let min_eig_gap = min_eig(&p - a.transpose() * &p * a);
    let identity_gap = min_eig(&eye - a.transpose() * a);
    Ok(DissipativityCertificate { rho, p, min_eig_gap, identity_gap, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_matrix_gives_identity_storage() {
        let c = dissipativity_certificate(&DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(c.p, DMatrix::identity(3, 3));
        assert!((c.min_eig_gap - 1.0).abs() < 1e-12);
        assert_eq!(c.rho, 0.0);
    }

    #[test]
    fn scaled_identity_geometric_series() {
        let c = dissipativity_certificate(&(DMatrix::identity(2, 2) * 0.9)).unwrap();
        assert!((&c.p - DMatrix::identity(2, 2) / 0.19).amax() < 1e-9);
        assert!((c.min_eig_gap - 1.0).abs() < 1e-9);
    }

    #[test]
    fn identity_storage_can_fail() {
        let a = DMatrix::from_row_slice(2, 2, &[0.45, 0.45, 0.9, 0.0]);
        let c = dissipativity_certificate(&a).unwrap();
        assert!(!c.identity_storage_suffices());
        assert!(c.min_eig_gap >= 1.0 - 1e-9);
    }

    #[test]
    fn unstable_matrix_rejected() {
        assert!(dissipativity_certificate(&DMatrix::identity(2, 2)).is_err());
    }
}
