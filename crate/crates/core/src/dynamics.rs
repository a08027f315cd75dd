//! Controlled opinion dynamics `x(t+1) = A x(t) + B u(t) + (I - A) q`.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{FermentError, Result};
use crate::graph::InfluenceGraph;

/// The tuple `(A, q, B, R)`. `B` is stored as the list of controlled nodes:
/// column `c` of `B` is the unit vector of node `controlled[c]`.
#[derive(Debug, Clone)]
pub struct InfluenceModel {
    a: DMatrix<f64>,
    q: DVector<f64>,
    controlled: Vec<usize>,
    r: DMatrix<f64>,
    r_inv: DMatrix<f64>,
    /// `(I - A) q`, the constant input of the dynamics
    drift: DVector<f64>,
}

impl InfluenceModel {
    pub fn new(a: DMatrix<f64>, q: DVector<f64>, controlled: Vec<usize>, r: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || n == 0 {
            return Err(FermentError::DimensionMismatch(format!("A is {}x{}", a.nrows(), a.ncols())));
        }
        if q.len() != n {
            return Err(FermentError::DimensionMismatch(format!("q has length {} for n={n}", q.len())));
        }
        if a.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(FermentError::InvalidModel("A must be finite and nonnegative".into()));
        }
        for i in 0..n {
            let s: f64 = a.row(i).sum();
            if s >= 1.0 {
                return Err(FermentError::InvalidModel(format!("row {i} of A sums to {s}; A must be substochastic")));
            }
        }
        if q.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(FermentError::InvalidModel("q must be finite and nonnegative".into()));
        }
        let mut seen = vec![false; n];
        for &c in &controlled {
            if c >= n {
                return Err(FermentError::InvalidModel(format!("controlled node {c} out of range")));
            }
            if std::mem::replace(&mut seen[c], true) {
                return Err(FermentError::InvalidModel(format!("controlled node {c} listed twice")));
            }
        }
        let m = controlled.len();
        if r.nrows() != m || r.ncols() != m {
            return Err(FermentError::DimensionMismatch(format!("R is {}x{} for m={m}", r.nrows(), r.ncols())));
        }
        if (&r - r.transpose()).amax() > 1e-12 * (1.0 + r.amax()) {
            return Err(FermentError::InvalidModel("R must be symmetric".into()));
        }
        let r_inv = if m == 0 {
            DMatrix::zeros(0, 0)
        } else {
            Cholesky::new(r.clone())
                .ok_or_else(|| FermentError::InvalidModel("R must be positive definite".into()))?
                .inverse()
        };
        let drift = (DMatrix::identity(n, n) - &a) * &q;
        Ok(Self { a, q, controlled, r, r_inv, drift })
    }

    /// Model over a graph with uniform quiescent level and `R = r_scale * I`.
    pub fn from_graph(g: &InfluenceGraph, q: f64, controlled: Vec<usize>, r_scale: f64) -> Result<Self> {
        let m = controlled.len();
        Self::new(
            g.influence_matrix(),
            DVector::from_element(g.n(), q),
            controlled,
            DMatrix::identity(m, m) * r_scale,
        )
    }

    /// Same `A`, `q` and diagonal cost scale, different controlled set.
    pub fn with_controlled(&self, controlled: Vec<usize>) -> Result<Self> {
        let scale = if self.m() > 0 { self.r[(0, 0)] } else { 1.0 };
        let m = controlled.len();
        Self::new(self.a.clone(), self.q.clone(), controlled, DMatrix::identity(m, m) * scale)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.controlled.len()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn r_inv(&self) -> &DMatrix<f64> {
        &self.r_inv
    }

    pub fn controlled(&self) -> &[usize] {
        &self.controlled
    }

    pub fn drift(&self) -> &DVector<f64> {
        &self.drift
    }

    pub fn b_matrix(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.n(), self.m());
        for (c, &node) in self.controlled.iter().enumerate() {
            b[(node, c)] = 1.0;
        }
        b
    }

    /// `B u` without forming `B`.
    pub fn apply_b(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n());
        for (c, &node) in self.controlled.iter().enumerate() {
            out[node] += u[c];
        }
        out
    }

    /// `Bᵀ v`: picks the controlled entries of `v`.
    pub fn apply_bt(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.m(), self.controlled.iter().map(|&node| v[node]))
    }

    /// Control cost `uᵀ R u`.
    pub fn control_cost(&self, u: &DVector<f64>) -> f64 {
        u.dot(&(&self.r * u))
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.n() || u.len() != self.m() {
            return Err(FermentError::DimensionMismatch(format!(
                "step expects x of length {} and u of length {}, got {} and {}",
                self.n(),
                self.m(),
                x.len(),
                u.len()
            )));
        }
        Ok(self.step_unchecked(x, u))
    }

    pub(crate) fn step_unchecked(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut next = &self.a * x + &self.drift;
        for (c, &node) in self.controlled.iter().enumerate() {
            next[node] += u[c];
        }
        next
    }

    /// Runs the dynamics for `controls.len()` steps. An empty slice with
    /// `horizon > 0` means free evolution.
    pub fn simulate(&self, x0: &DVector<f64>, controls: &[DVector<f64>], horizon: usize) -> Result<Trajectory> {
        let u: Vec<DVector<f64>> = if controls.is_empty() {
            vec![DVector::zeros(self.m()); horizon]
        } else if controls.len() == horizon {
            controls.to_vec()
        } else {
            return Err(FermentError::DimensionMismatch(format!(
                "{} controls supplied for horizon {horizon}",
                controls.len()
            )));
        };
        if x0.len() != self.n() {
            return Err(FermentError::DimensionMismatch(format!("x0 has length {}", x0.len())));
        }
        let mut x = Vec::with_capacity(horizon + 1);
        x.push(x0.clone());
        for ut in &u {
            let next = self.step(x.last().unwrap(), ut)?;
            x.push(next);
        }
        Ok(Trajectory::new(self, x, u))
    }
}

/// States `x(0..=T)` and controls `u(0..T)` with cached cost `Σ u(t)ᵀ R u(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub cost: f64,
}

impl Trajectory {
    pub fn new(model: &InfluenceModel, x: Vec<DVector<f64>>, u: Vec<DVector<f64>>) -> Self {
        let cost = u.iter().map(|ut| model.control_cost(ut)).sum();
        Self { x, u, cost }
    }

    pub fn horizon(&self) -> usize {
        self.u.len()
    }

    /// Largest entrywise violation of the step recursion.
    pub fn dynamics_residual(&self, model: &InfluenceModel) -> f64 {
        self.u
            .iter()
            .enumerate()
            .map(|(t, ut)| (model.step_unchecked(&self.x[t], ut) - &self.x[t + 1]).amax())
            .fold(0.0, f64::max)
    }

    pub fn write_state_csv<W: Write>(&self, out: W, provenance: Option<&str>) -> std::io::Result<()> {
        write_series_csv(out, "x", &self.x, provenance)
    }

    pub fn write_control_csv<W: Write>(&self, out: W, provenance: Option<&str>) -> std::io::Result<()> {
        write_series_csv(out, "u", &self.u, provenance)
    }
}

/// Writes `t,<p>0,...` rows with 17 significant digits.
pub fn write_series_csv<W: Write>(
    mut out: W,
    prefix: &str,
    series: &[DVector<f64>],
    provenance: Option<&str>,
) -> std::io::Result<()> {
    if let Some(p) = provenance {
        writeln!(out, "# {p}")?;
    }
    let width = series.first().map_or(0, |v| v.len());
    let mut header = String::from("t");
    for i in 0..width {
        header.push_str(&format!(",{prefix}{i}"));
    }
    writeln!(out, "{header}")?;
    for (t, v) in series.iter().enumerate() {
        let mut line = t.to_string();
        for value in v.iter() {
            line.push(',');
            line.push_str(&format_sig17(*value));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Formats with 17 significant digits, which round-trips any f64.
pub fn format_sig17(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    format!("{v:.16e}")
}

/// Largest eigenvalue modulus by power iteration from the all-ones vector.
///
/// Entrywise nonnegative inputs are shifted by the identity, which makes the
/// Perron root strictly dominant; the shift is removed from the estimate.
pub fn spectral_radius(a: &DMatrix<f64>) -> Result<f64> {
    const TOL: f64 = 1e-10;
    const MAX_ITER: usize = 100_000;
    let n = a.nrows();
    if a.ncols() != n {
        return Err(FermentError::DimensionMismatch("spectral radius of a non-square matrix".into()));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let shift = if a.iter().all(|&v| v >= 0.0) { 1.0 } else { 0.0 };
    let mut op = a.clone();
    for i in 0..n {
        op[(i, i)] += shift;
    }
    let mut v = DVector::from_element(n, 1.0);
    let mut estimate = f64::NAN;
    for _ in 0..MAX_ITER {
        let w = &op * &v;
        let norm = w.amax();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let next = norm - shift;
        if (next - estimate).abs() < TOL * next.abs().max(1.0) {
            return Ok(next.max(0.0));
        }
        estimate = next;
        v = w / norm;
    }
    Err(FermentError::NotConverged(format!("power iteration exceeded {MAX_ITER} iterations")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate, GraphSpec};

    fn two_node(controlled: Vec<usize>, q: f64) -> InfluenceModel {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.5, 0.0]);
        let m = controlled.len();
        InfluenceModel::new(a, DVector::from_element(2, q), controlled, DMatrix::identity(m, m)).unwrap()
    }

    #[test]
    fn step_with_zero_a() {
        let a = DMatrix::zeros(3, 3);
        let model = InfluenceModel::new(a.clone(), DVector::zeros(3), vec![0, 2], DMatrix::identity(2, 2)).unwrap();
        let x = DVector::from_vec(vec![3.0, -1.0, 2.0]);
        let u = DVector::from_vec(vec![0.25, 0.5]);
        assert_eq!(model.step(&x, &u).unwrap(), DVector::from_vec(vec![0.25, 0.0, 0.5]));

        let q = DVector::from_vec(vec![0.1, 0.2, 0.3]);
        let model = InfluenceModel::new(a, q.clone(), vec![1], DMatrix::identity(1, 1)).unwrap();
        assert_eq!(model.step(&x, &DVector::zeros(1)).unwrap(), q);
    }

    #[test]
    fn step_matches_naive_loops_on_karate() {
        let g = generate(&GraphSpec::karate()).unwrap();
        let model = InfluenceModel::from_graph(&g, 0.2, vec![0, 33], 1.0).unwrap();
        let a = g.influence_matrix();
        let x = DVector::from_fn(34, |i, _| ((i * 7919) % 101) as f64 / 101.0);
        let got = model.step(&x, &DVector::zeros(2)).unwrap();
        for i in 0..34 {
            let mut acc = 0.0;
            for j in 0..34 {
                acc += a[(i, j)] * (x[j] - 0.2);
            }
            assert!((got[i] - (0.2 + acc)).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_checks() {
        let model = two_node(vec![0], 0.0);
        assert!(model.step(&DVector::zeros(3), &DVector::zeros(1)).is_err());
        assert!(model.step(&DVector::zeros(2), &DVector::zeros(2)).is_err());
        assert!(model.simulate(&DVector::zeros(2), &[DVector::zeros(1)], 3).is_err());
    }

    #[test]
    fn model_validation() {
        let bad_a = DMatrix::from_row_slice(2, 2, &[0.6, 0.5, 0.0, 0.0]);
        assert!(InfluenceModel::new(bad_a, DVector::zeros(2), vec![], DMatrix::zeros(0, 0)).is_err());
        let a = DMatrix::zeros(2, 2);
        assert!(InfluenceModel::new(a.clone(), DVector::zeros(2), vec![0, 0], DMatrix::identity(2, 2)).is_err());
        let indefinite = DMatrix::from_row_slice(1, 1, &[-1.0]);
        assert!(InfluenceModel::new(a.clone(), DVector::zeros(2), vec![0], indefinite).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]);
        assert!(InfluenceModel::new(a.clone(), DVector::zeros(2), vec![0, 1], asym).is_err());
        assert!(InfluenceModel::new(a, DVector::from_element(2, -0.1), vec![], DMatrix::zeros(0, 0)).is_err());
    }

    #[test]
    fn quiescent_state_is_fixed_point() {
        let g = generate(&GraphSpec::karate()).unwrap();
        let model = InfluenceModel::from_graph(&g, 0.3, vec![], 1.0).unwrap();
        let traj = model.simulate(model.q(), &[], 50).unwrap();
        for x in &traj.x {
            assert!((x - model.q()).amax() < 1e-14);
        }
        assert_eq!(traj.cost, 0.0);
    }

    #[test]
    fn karate_free_run_decays() {
        let g = generate(&GraphSpec::karate()).unwrap();
        let model = InfluenceModel::from_graph(&g, 0.0, vec![], 1.0).unwrap();
        let traj = model.simulate(&DVector::from_element(34, 0.5), &[], 100).unwrap();
        assert!(traj.x[100].amax() <= 1e-4);
        assert!(traj.x[100].amax() <= 0.9f64.powi(100) * 0.5 * (1.0 + 1e-12));
    }

    #[test]
    fn spectral_radius_examples() {
        let a = DMatrix::identity(3, 3) * 0.5;
        assert!((spectral_radius(&a).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(spectral_radius(&DMatrix::zeros(3, 3)).unwrap(), 0.0);
        let g = generate(&GraphSpec::karate()).unwrap();
        assert!(spectral_radius(&g.influence_matrix()).unwrap() <= 0.9 + 1e-12);
        // reducible diagonal: dominant block wins
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, 0.5]));
        assert!((spectral_radius(&d).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn csv_export_has_header_and_17_digits() {
        let model = two_node(vec![0], 0.0);
        let traj = model
            .simulate(&DVector::from_element(2, 1.0 / 3.0), &[DVector::from_element(1, 0.1)], 1)
            .unwrap();
        let mut buf = Vec::new();
        traj.write_state_csv(&mut buf, None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x0,x1"));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[1].parse::<f64>().unwrap(), 1.0 / 3.0);
        let mut buf = Vec::new();
        traj.write_control_csv(&mut buf, Some("seed=1")).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("# seed=1\nt,u0\n"));
    }
}
