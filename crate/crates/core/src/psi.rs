//! Sigmoid aggregate `ψ(x) = Σ_i 1 / (1 + exp(-a (x_i - τ)))`.

use nalgebra::DVector;

use crate::error::{FermentError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sigmoid {
    pub steepness: f64,
    pub threshold: f64,
}

impl Sigmoid {
    pub fn new(steepness: f64, threshold: f64) -> Result<Self> {
        if !(steepness > 0.0 && steepness.is_finite()) {
            return Err(FermentError::InvalidParameter(format!("sigmoid steepness must be positive, got {steepness}")));
        }
        if !threshold.is_finite() {
            return Err(FermentError::InvalidParameter("sigmoid threshold must be finite".into()));
        }
        Ok(Self { steepness, threshold })
    }

    /// Logistic of a single entry, evaluated without overflow.
    pub fn unit(&self, xi: f64) -> f64 {
        let z = self.steepness * (xi - self.threshold);
        if z >= 0.0 {
            1.0 / (1.0 + (-z).exp())
        } else {
            let e = z.exp();
            e / (1.0 + e)
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        x.iter().map(|&xi| self.unit(xi)).sum()
    }

    /// `∂ψ/∂x_i = a σ_i (1 - σ_i)`.
    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        x.map(|xi| {
            let s = self.unit(xi);
            self.steepness * s * (1.0 - s)
        })
    }

    /// Diagonal of the Hessian, `a² σ (1-σ)(1-2σ)`.
    pub fn hessian_diag(&self, x: &DVector<f64>) -> DVector<f64> {
        x.map(|xi| {
            let s = self.unit(xi);
            self.steepness * self.steepness * s * (1.0 - s) * (1.0 - 2.0 * s)
        })
    }
}
