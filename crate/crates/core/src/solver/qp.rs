//! Operator-splitting (ADMM) solver for convex quadratic programs
//!
//! ```text
//! minimize ½ zᵀHz + fᵀz   subject to   A_eq z = b_eq,   A_in z ≥ b_in
//! ```
//!
//! with Ruiz equilibration, adaptive step, infeasibility certificates and
//! active-set polishing.

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::banded::BandedCholesky;
use super::sparse::CsrMatrix;
use crate::error::{FermentError, Result};

#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    pub h: CsrMatrix,
    pub f: DVector<f64>,
    pub a_eq: CsrMatrix,
    pub b_eq: DVector<f64>,
    pub a_in: CsrMatrix,
    pub b_in: DVector<f64>,
}

impl QuadraticProgram {
    pub fn new(
        h: CsrMatrix,
        f: DVector<f64>,
        a_eq: CsrMatrix,
        b_eq: DVector<f64>,
        a_in: CsrMatrix,
        b_in: DVector<f64>,
    ) -> Result<Self> {
        let n = f.len();
        let dims_ok = h.nrows() == n
            && h.ncols() == n
            && a_eq.ncols() == n
            && a_in.ncols() == n
            && a_eq.nrows() == b_eq.len()
            && a_in.nrows() == b_in.len();
        if !dims_ok {
            return Err(FermentError::DimensionMismatch(format!(
                "QP with {n} variables: H {}x{}, A_eq {}x{} / {}, A_in {}x{} / {}",
                h.nrows(),
                h.ncols(),
                a_eq.nrows(),
                a_eq.ncols(),
                b_eq.len(),
                a_in.nrows(),
                a_in.ncols(),
                b_in.len()
            )));
        }
        if !h.is_symmetric(1e-12) {
            return Err(FermentError::InvalidParameter("H must be symmetric".into()));
        }
        let finite = f.iter().chain(b_eq.iter()).chain(b_in.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(FermentError::InvalidParameter("QP data must be finite".into()));
        }
        Ok(Self { h, f, a_eq, b_eq, a_in, b_in })
    }

    /// Dense convenience constructor; pass `None` for absent constraint blocks.
    pub fn from_dense(
        h: &DMatrix<f64>,
        f: &DVector<f64>,
        eq: Option<(&DMatrix<f64>, &DVector<f64>)>,
        ineq: Option<(&DMatrix<f64>, &DVector<f64>)>,
    ) -> Result<Self> {
        let n = f.len();
        let (a_eq, b_eq) = match eq {
            Some((a, b)) => (CsrMatrix::from_dense(a), b.clone()),
            None => (CsrMatrix::zeros(0, n), DVector::zeros(0)),
        };
        let (a_in, b_in) = match ineq {
            Some((a, b)) => (CsrMatrix::from_dense(a), b.clone()),
            None => (CsrMatrix::zeros(0, n), DVector::zeros(0)),
        };
        Self::new(CsrMatrix::from_dense(h), f.clone(), a_eq, b_eq, a_in, b_in)
    }

    pub fn num_vars(&self) -> usize {
        self.f.len()
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&self.h.mul_vec(z)) + self.f.dot(z)
    }

    /// Residuals of a candidate primal-dual point under the sign convention
    /// `Hz + f − A_eqᵀν − A_inᵀλ = 0`, `λ ≥ 0`.
    pub fn kkt_residuals(&self, z: &DVector<f64>, nu: &DVector<f64>, lambda: &DVector<f64>) -> KktResiduals {
        let eq_viol = (self.a_eq.mul_vec(z) - &self.b_eq).amax();
        let slack = self.a_in.mul_vec(z) - &self.b_in;
        let in_viol = slack.iter().fold(0.0f64, |a, &s| a.max(-s));
        let stat = self.h.mul_vec(z) + &self.f - self.a_eq.tmul_vec(nu) - self.a_in.tmul_vec(lambda);
        let dual_sign = lambda.iter().fold(0.0f64, |a, &l| a.max(-l));
        let scale = lambda.amax().max(1.0);
        let comp = lambda.iter().zip(slack.iter()).fold(0.0f64, |a, (l, s)| a.max((l * s).abs())) / scale;
        KktResiduals {
            primal: eq_viol.max(in_viol),
            dual: stat.amax(),
            dual_sign,
            complementarity: comp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub primal: f64,
    pub dual: f64,
    pub dual_sign: f64,
    /// `max_i |λ_i s_i| / max(1, ‖λ‖∞)`
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.dual_sign).max(self.complementarity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub z: DVector<f64>,
    /// multipliers `ν` of the equality rows
    pub eq_duals: DVector<f64>,
    /// multipliers `λ ≥ 0` of the inequality rows
    pub ineq_duals: DVector<f64>,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub complementarity_residual: f64,
    pub objective: f64,
    pub status: QpStatus,
    pub iterations: usize,
    pub polished: bool,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

#[derive(Debug, Clone)]
pub struct QpSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub scaling_iters: usize,
    pub adaptive_rho: bool,
    pub polish: bool,
    pub infeasibility_tol: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            scaling_iters: 10,
            adaptive_rho: true,
            polish: true,
            infeasibility_tol: 1e-6,
        }
    }
}

/// Solves with default settings apart from `tol` and `max_iter`.
pub fn solve_qp(p: &QuadraticProgram, tol: f64, max_iter: usize) -> QpSolution {
    let settings = QpSettings { tol, max_iter, ..QpSettings::default() };
    solve_qp_with(p, &settings, None)
}

/// Full entry point. `warm` supplies a previous `(z, ν, λ)` of matching size.
pub fn solve_qp_with(p: &QuadraticProgram, s: &QpSettings, warm: Option<&QpSolution>) -> QpSolution {
    assert!(s.tol > 0.0, "QP tolerance must be positive");
    if p.num_vars() == 0 {
        return solve_trivial(p, s.tol);
    }
    Admm::new(p, s).run(warm)
}

fn solve_trivial(p: &QuadraticProgram, tol: f64) -> QpSolution {
    let z = DVector::zeros(0);
    let nu = DVector::zeros(p.b_eq.len());
    let lambda = DVector::zeros(p.b_in.len());
    let r = p.kkt_residuals(&z, &nu, &lambda);
    let status = if r.primal <= tol { QpStatus::Optimal } else { QpStatus::Infeasible };
    QpSolution {
        z,
        eq_duals: nu,
        ineq_duals: lambda,
        primal_residual: r.primal,
        dual_residual: 0.0,
        complementarity_residual: 0.0,
        objective: 0.0,
        status,
        iterations: 0,
        polished: false,
    }
}

const EQ_RHO_FACTOR: f64 = 1e3;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const POLISH_DELTA: f64 = 1e-7;

struct Admm<'a> {
    p: &'a QuadraticProgram,
    s: &'a QpSettings,
    n: usize,
    n_eq: usize,
    /// unscaled stacked constraint matrix
    a: CsrMatrix,
    /// scaled problem data
    ps: CsrMatrix,
    qs: DVector<f64>,
    as_: CsrMatrix,
    ls: DVector<f64>,
    us: DVector<f64>,
    d: DVector<f64>,
    e: DVector<f64>,
    c: f64,
    bandwidth: usize,
}

struct Iterate {
    x: DVector<f64>,
    z: DVector<f64>,
    y: DVector<f64>,
}

impl<'a> Admm<'a> {
    fn new(p: &'a QuadraticProgram, s: &'a QpSettings) -> Self {
        let n = p.num_vars();
        let n_eq = p.b_eq.len();
        let a = p.a_eq.vstack(&p.a_in);
        let l = concat(&p.b_eq, &p.b_in);
        let u = concat(&p.b_eq, &DVector::from_element(p.b_in.len(), f64::INFINITY));
        let (d, e, c) = ruiz(&p.h, &p.f, &a, s.scaling_iters);
        let ps = p.h.scale(&d.map(|v| v * c), &d);
        let qs = p.f.component_mul(&d) * c;
        let as_ = a.scale(&e, &d);
        let ls = l.component_mul(&e);
        let us = u.zip_map(&e, |ui, ei| if ui.is_finite() { ui * ei } else { ui });
        let bandwidth = ps.bandwidth().max(BandedCholesky::gram_bandwidth(&as_));
        Self { p, s, n, n_eq, a, ps, qs, as_, ls, us, d, e, c, bandwidth }
    }

    fn rho_vec(&self, rho: f64) -> DVector<f64> {
        DVector::from_fn(self.ls.len(), |i, _| if i < self.n_eq { (rho * EQ_RHO_FACTOR).min(RHO_MAX) } else { rho })
    }

    fn factor_kkt(&self, rho: &DVector<f64>) -> BandedCholesky {
        let mut k = BandedCholesky::zeros(self.n, self.bandwidth);
        k.add_symmetric(&self.ps, 1.0);
        for i in 0..self.n {
            k.add(i, i, self.s.sigma);
        }
        k.add_gram(&self.as_, rho);
        assert!(k.factor(), "ADMM system matrix is positive definite by construction");
        k
    }

    fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(v.len(), |i, _| v[i].max(self.ls[i]).min(self.us[i]))
    }

    /// Maps a scaled iterate to the caller's convention.
    fn unscale(&self, it: &Iterate) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let z = it.x.component_mul(&self.d);
        let y = it.y.component_mul(&self.e) / self.c;
        let nu = -y.rows(0, self.n_eq).into_owned();
        let lambda = -y.rows(self.n_eq, y.len() - self.n_eq).into_owned();
        (z, nu, lambda)
    }

    fn package(&self, z: DVector<f64>, nu: DVector<f64>, lambda: DVector<f64>, status: QpStatus, iters: usize, polished: bool) -> QpSolution {
        let r = self.p.kkt_residuals(&z, &nu, &lambda);
        QpSolution {
            objective: self.p.objective(&z),
            primal_residual: r.primal,
            dual_residual: r.dual.max(r.dual_sign),
            complementarity_residual: r.complementarity,
            z,
            eq_duals: nu,
            ineq_duals: lambda,
            status,
            iterations: iters,
            polished,
        }
    }

    fn accept(&self, r: &KktResiduals) -> bool {
        r.max() <= self.s.tol
    }

    fn run(&self, warm: Option<&QpSolution>) -> QpSolution {
        let m = self.ls.len();
        let mut it = Iterate { x: DVector::zeros(self.n), z: DVector::zeros(m), y: DVector::zeros(m) };
        if let Some(w) = warm.filter(|w| w.z.len() == self.n && w.eq_duals.len() == self.n_eq && w.ineq_duals.len() == m - self.n_eq) {
            it.x = w.z.component_div(&self.d);
            let y = concat(&(-&w.eq_duals), &(-&w.ineq_duals));
            it.y = y.component_div(&self.e) * self.c;
            it.z = self.project(&self.as_.mul_vec(&it.x));
        }

        let mut rho = self.s.rho;
        let mut rho_v = self.rho_vec(rho);
        let mut kkt = self.factor_kkt(&rho_v);
        let alpha = self.s.alpha;
        let sigma = self.s.sigma;
        let check_every = 5;
        let adapt_every = 100;
        let mut next_polish = 25usize;
        let mut best: Option<QpSolution> = None;

        for k in 1..=self.s.max_iter {
            let mut rhs = &it.x * sigma - &self.qs + self.as_.tmul_vec(&(rho_v.component_mul(&it.z) - &it.y));
            kkt.solve_in_place(&mut rhs);
            let x_tilde = rhs;
            let z_tilde = self.as_.mul_vec(&x_tilde);
            let x_new = &x_tilde * alpha + &it.x * (1.0 - alpha);
            let z_relaxed = &z_tilde * alpha + &it.z * (1.0 - alpha);
            let z_new = self.project(&(&z_relaxed + it.y.component_div(&rho_v)));
            let y_new = &it.y + rho_v.component_mul(&(&z_relaxed - &z_new));
            let dy = &y_new - &it.y;
            let dx = &x_new - &it.x;
            it = Iterate { x: x_new, z: z_new, y: y_new };

            if k % check_every != 0 && k != self.s.max_iter {
                continue;
            }

            if self.primal_infeasible(&dy) {
                debug!("QP primal infeasibility certificate at iteration {k}");
                let (z, nu, lambda) = self.unscale(&it);
                return self.package(z, nu, lambda, QpStatus::Infeasible, k, false);
            }
            if self.dual_infeasible(&dx) {
                debug!("QP dual infeasibility certificate at iteration {k}");
                let (z, nu, lambda) = self.unscale(&it);
                return self.package(z, nu, lambda, QpStatus::Unbounded, k, false);
            }

            let (z, nu, lambda) = self.unscale(&it);
            let r = self.p.kkt_residuals(&z, &nu, &lambda);
            let converged = self.accept(&r);
            if (converged || k >= next_polish) && self.s.polish {
                next_polish = (next_polish * 2).max(k + 1);
                if let Some(sol) = self.polish(&it, k) {
                    return sol;
                }
            }
            if converged {
                return self.package(z, nu, lambda, QpStatus::Optimal, k, false);
            }
            if best.as_ref().is_none_or(|b| r.max() < b.primal_residual.max(b.dual_residual).max(b.complementarity_residual)) {
                best = Some(self.package(z, nu, lambda, QpStatus::IterationLimit, k, false));
            }

            if self.s.adaptive_rho && k % adapt_every == 0 {
                let new_rho = self.adapted_rho(&it, rho);
                if new_rho > 5.0 * rho || new_rho < 0.2 * rho {
                    rho = new_rho;
                    rho_v = self.rho_vec(rho);
                    kkt = self.factor_kkt(&rho_v);
                }
            }
        }
        let mut sol = best.unwrap_or_else(|| {
            let (z, nu, lambda) = self.unscale(&it);
            self.package(z, nu, lambda, QpStatus::IterationLimit, self.s.max_iter, false)
        });
        sol.iterations = self.s.max_iter;
        sol
    }

    fn adapted_rho(&self, it: &Iterate, rho: f64) -> f64 {
        let ax = self.as_.mul_vec(&it.x);
        let px = self.ps.mul_vec(&it.x);
        let aty = self.as_.tmul_vec(&it.y);
        let prim = (&ax - &it.z).amax() / ax.amax().max(it.z.amax()).max(1e-30);
        let dual = (&px + &self.qs + &aty).amax() / px.amax().max(aty.amax()).max(self.qs.amax()).max(1e-30);
        (rho * (prim / dual.max(1e-30)).sqrt()).clamp(RHO_MIN, RHO_MAX)
    }

    fn primal_infeasible(&self, dy: &DVector<f64>) -> bool {
        let dy_u = dy.component_mul(&self.e) / self.c;
        let norm = dy_u.amax();
        if norm <= 1e-30 {
            return false;
        }
        let eps = self.s.infeasibility_tol * norm;
        if self.a.tmul_vec(&dy_u).amax() > eps {
            return false;
        }
        let mut support = 0.0;
        for i in 0..dy_u.len() {
            let (lo, hi) = if i < self.n_eq { (self.p.b_eq[i], self.p.b_eq[i]) } else { (self.p.b_in[i - self.n_eq], f64::INFINITY) };
            if dy_u[i] > 0.0 {
                if hi.is_infinite() {
                    if dy_u[i] > eps {
                        return false;
                    }
                } else {
                    support += hi * dy_u[i];
                }
            } else {
                support += lo * dy_u[i];
            }
        }
        support < -eps
    }

    fn dual_infeasible(&self, dx: &DVector<f64>) -> bool {
        let dx_u = dx.component_mul(&self.d);
        let norm = dx_u.amax();
        if norm <= 1e-30 {
            return false;
        }
        let eps = self.s.infeasibility_tol * norm;
        if self.p.h.mul_vec(&dx_u).amax() > eps || self.p.f.dot(&dx_u) >= -eps {
            return false;
        }
        let eq = self.p.a_eq.mul_vec(&dx_u);
        let ineq = self.p.a_in.mul_vec(&dx_u);
        eq.amax() <= eps && ineq.iter().all(|&v| v >= -eps)
    }

    /// Solves the equality-constrained problem on the guessed active set by
    /// GMRES on the exact KKT system preconditioned by a regularized
    /// reduced solve, then corrects the guess (drop rows with wrong-signed
    /// multipliers, add violated rows) for a few rounds. Returns a solution
    /// only if it meets the tolerance.
    fn polish(&self, it: &Iterate, k: usize) -> Option<QpSolution> {
        const ROUNDS: usize = 20;
        const SIGN_TOL: f64 = 1e-11;
        let m = self.ls.len();
        let mut is_active: Vec<bool> = (0..m).map(|i| i < self.n_eq || it.z[i] - self.ls[i] < -it.y[i]).collect();
        let mut prev = f64::INFINITY;
        for round in 0..ROUNDS {
            let active: Vec<usize> = (0..m).filter(|&i| is_active[i]).collect();
            let (x, y) = self.solve_active(&active)?;
            let mut y_full = DVector::zeros(m);
            for (j, &i) in active.iter().enumerate() {
                y_full[i] = y[j];
            }
            let ax = self.as_.mul_vec(&x);
            let polished = Iterate { z: ax.clone(), x, y: y_full };
            let (z, nu, lambda) = self.unscale(&polished);
            let r = self.p.kkt_residuals(&z, &nu, &lambda);
            debug!("QP polish at iteration {k}, round {round}: {} active, residual {:.3e}", active.len(), r.max());
            if self.accept(&r) {
                return Some(self.package(z, nu, lambda, QpStatus::Optimal, k, true));
            }
            if r.max() >= prev {
                return None;
            }
            prev = r.max();
            let mut changed = false;
            for i in self.n_eq..m {
                if is_active[i] && polished.y[i] > SIGN_TOL {
                    is_active[i] = false;
                    changed = true;
                } else if !is_active[i] && ax[i] < self.ls[i] - SIGN_TOL {
                    is_active[i] = true;
                    changed = true;
                }
            }
            if !changed {
                return None;
            }
        }
        None
    }

    fn solve_active(&self, active: &[usize]) -> Option<(DVector<f64>, DVector<f64>)> {
        let a_act = self.as_.select_rows(active);
        let b_act = DVector::from_iterator(active.len(), active.iter().map(|&i| self.ls[i]));
        let delta = POLISH_DELTA;
        let bw = self.ps.bandwidth().max(BandedCholesky::gram_bandwidth(&a_act));
        let mut kred = BandedCholesky::zeros(self.n, bw);
        kred.add_symmetric(&self.ps, 1.0);
        for i in 0..self.n {
            kred.add(i, i, delta);
        }
        kred.add_gram(&a_act, &DVector::from_element(active.len(), 1.0 / delta));
        if !kred.factor() {
            return None;
        }
        // regularized solve of [P+δI, Aᵀ; A, −δI][x; y] = [r1; r2]
        let reg_solve = |r1: &DVector<f64>, r2: &DVector<f64>| {
            let mut x = r1 + a_act.tmul_vec(r2) / delta;
            kred.solve_in_place(&mut x);
            let y = (a_act.mul_vec(&x) - r2) / delta;
            (x, y)
        };
        let (n, k) = (self.n, active.len());
        let split = |v: &DVector<f64>| (v.rows(0, n).into_owned(), v.rows(n, k).into_owned());
        let kkt = |v: &DVector<f64>| {
            let (x, y) = split(v);
            concat(&(self.ps.mul_vec(&x) + a_act.tmul_vec(&y)), &a_act.mul_vec(&x))
        };
        let precond = |v: &DVector<f64>| {
            let (r1, r2) = split(v);
            let (x, y) = reg_solve(&r1, &r2);
            concat(&x, &y)
        };
        let rhs = concat(&(-&self.qs), &b_act);
        let scale = rhs.amax().max(1.0);
        let mut w = DVector::zeros(n + k);
        let mut prev = f64::INFINITY;
        for _ in 0..40 {
            let r = &rhs - kkt(&w);
            let res = r.amax();
            if res <= 1e-14 * scale || res > 0.5 * prev {
                break;
            }
            prev = res;
            w += precond(&r);
        }
        for _ in 0..2 {
            let r = &rhs - kkt(&w);
            if r.amax() <= 1e-14 * scale || r.amax() > 1e-6 * scale {
                break;
            }
            w += gmres(&kkt, &precond, &r, 30, 1e-14 * scale);
        }
        let (x, y) = split(&w);
        Some((x, y))
    }
}

/// One cycle of right-preconditioned GMRES for `K d = r`, started at zero.
fn gmres(k: &impl Fn(&DVector<f64>) -> DVector<f64>, m_inv: &impl Fn(&DVector<f64>) -> DVector<f64>, r: &DVector<f64>, restart: usize, tol: f64) -> DVector<f64> {
    let beta = r.norm();
    if beta == 0.0 {
        return DVector::zeros(r.len());
    }
    let mut basis = vec![r / beta];
    let mut h = DMatrix::<f64>::zeros(restart + 1, restart);
    let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
    let mut g = DVector::<f64>::zeros(restart + 1);
    g[0] = beta;
    let mut used = 0;
    for j in 0..restart {
        let mut w = k(&m_inv(&basis[j]));
        for (i, v) in basis.iter().enumerate() {
            h[(i, j)] = w.dot(v);
            w.axpy(-h[(i, j)], v, 1.0);
        }
        h[(j + 1, j)] = w.norm();
        for i in 0..j {
            let t = cs[i] * h[(i, j)] + sn[i] * h[(i + 1, j)];
            h[(i + 1, j)] = -sn[i] * h[(i, j)] + cs[i] * h[(i + 1, j)];
            h[(i, j)] = t;
        }
        let d = h[(j, j)].hypot(h[(j + 1, j)]);
        if d == 0.0 {
            break;
        }
        cs[j] = h[(j, j)] / d;
        sn[j] = h[(j + 1, j)] / d;
        h[(j, j)] = d;
        h[(j + 1, j)] = 0.0;
        g[j + 1] = -sn[j] * g[j];
        g[j] *= cs[j];
        used = j + 1;
        if g[j + 1].abs() <= tol || h[(j, j)] == 0.0 {
            break;
        }
        let hn = w.norm();
        if hn == 0.0 {
            break;
        }
        basis.push(w / hn);
    }
    let mut coef = DVector::zeros(used);
    for i in (0..used).rev() {
        let mut acc = g[i];
        for c in i + 1..used {
            acc -= h[(i, c)] * coef[c];
        }
        coef[i] = acc / h[(i, i)];
    }
    let mut z = DVector::zeros(r.len());
    for (i, v) in basis.iter().take(used).enumerate() {
        z.axpy(coef[i], v, 1.0);
    }
    m_inv(&z)
}

fn concat(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

/// Ruiz equilibration: returns variable scaling `D`, row scaling `E` and
/// cost scaling `c`.
fn ruiz(h: &CsrMatrix, f: &DVector<f64>, a: &CsrMatrix, iters: usize) -> (DVector<f64>, DVector<f64>, f64) {
    let n = f.len();
    let clamp = |v: f64| if v < 1e-4 { 1.0 } else { v.min(1e4) };
    let mut d = DVector::from_element(n, 1.0);
    let mut e = DVector::from_element(a.nrows(), 1.0);
    let mut c = 1.0;
    let mut hs = h.clone();
    let mut as_ = a.clone();
    for _ in 0..iters {
        let hc = hs.col_inf_norms();
        let ac = as_.col_inf_norms();
        let dd = DVector::from_fn(n, |j, _| 1.0 / clamp(hc[j].max(ac[j])).sqrt());
        let ee = as_.row_inf_norms().map(|v| 1.0 / clamp(v).sqrt());
        hs = hs.scale(&dd, &dd);
        as_ = as_.scale(&ee, &dd);
        d.component_mul_assign(&dd);
        e.component_mul_assign(&ee);
    }
    if iters > 0 {
        let hc = hs.col_inf_norms();
        let mean = if n > 0 { hc.sum() / n as f64 } else { 0.0 };
        let qn = f.component_mul(&d).amax();
        c = 1.0 / clamp(mean.max(qn));
    }
    (d, e, c)
}
