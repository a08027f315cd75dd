//! Augmented-Lagrangian (PHR) solver for smooth nonlinear programs
//!
//! ```text
//! minimize f(z)   subject to   c_eq(z) = 0,   c_in(z) ≥ 0
//! ```
//!
//! Inner problems are minimized by L-BFGS with a strong Wolfe line search.

use std::collections::VecDeque;

use log::debug;
use nalgebra::DVector;
use rand::Rng;
use serde::Serialize;

/// Callbacks of a smooth program. Constraint Jacobians are accessed only
/// through transposed products `Jᵀw`.
pub trait SmoothNlp {
    fn num_vars(&self) -> usize;

    fn num_eq(&self) -> usize {
        0
    }

    fn num_ineq(&self) -> usize {
        0
    }

    /// Objective value; writes the gradient into `grad`.
    fn objective(&self, z: &DVector<f64>, grad: &mut DVector<f64>) -> f64;

    fn eq_values(&self, _z: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(0)
    }

    fn ineq_values(&self, _z: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(0)
    }

    fn eq_jac_t(&self, _z: &DVector<f64>, _w: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.num_vars())
    }

    fn ineq_jac_t(&self, _z: &DVector<f64>, _w: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.num_vars())
    }

    /// True when every constraint is affine.
    fn linear_constraints(&self) -> bool {
        false
    }
}

/// Compares analytic derivatives with central differences along random
/// directions. Returns the largest relative discrepancy.
pub fn gradient_check<P: SmoothNlp + ?Sized, R: Rng>(p: &P, z: &DVector<f64>, probes: usize, rng: &mut R) -> f64 {
    let n = p.num_vars();
    let h = 1e-6;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
    let mut worst = 0.0f64;
    let mut grad = DVector::zeros(n);
    p.objective(z, &mut grad);
    let mut scratch = DVector::zeros(n);
    for _ in 0..probes {
        let v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let zp = z + &v * h;
        let zm = z - &v * h;
        let fd = (p.objective(&zp, &mut scratch) - p.objective(&zm, &mut scratch)) / (2.0 * h);
        worst = worst.max(rel(fd, grad.dot(&v)));
        if p.num_eq() > 0 {
            let w = DVector::from_fn(p.num_eq(), |_, _| rng.gen_range(-1.0..1.0));
            let fd = (p.eq_values(&zp).dot(&w) - p.eq_values(&zm).dot(&w)) / (2.0 * h);
            worst = worst.max(rel(fd, p.eq_jac_t(z, &w).dot(&v)));
        }
        if p.num_ineq() > 0 {
            let w = DVector::from_fn(p.num_ineq(), |_, _| rng.gen_range(-1.0..1.0));
            let fd = (p.ineq_values(&zp).dot(&w) - p.ineq_values(&zm).dot(&w)) / (2.0 * h);
            worst = worst.max(rel(fd, p.ineq_jac_t(z, &w).dot(&v)));
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NlpStatus {
    Converged,
    IterationLimit,
    /// stationary for the penalty function but constraints not met
    ViolationAboveTolerance,
}

#[derive(Debug, Clone)]
pub struct NlpSolution {
    pub z: DVector<f64>,
    pub eq_duals: DVector<f64>,
    pub ineq_duals: DVector<f64>,
    pub objective: f64,
    pub stationarity_residual: f64,
    pub constraint_violation: f64,
    pub complementarity_residual: f64,
    pub status: NlpStatus,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
}

impl NlpSolution {
    pub fn is_converged(&self) -> bool {
        self.status == NlpStatus::Converged
    }
}

#[derive(Debug, Clone)]
pub struct NlpSettings {
    pub tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub rho0: f64,
    pub rho_max: f64,
    pub memory: usize,
}

impl Default for NlpSettings {
    fn default() -> Self {
        Self { tol: 1e-6, max_outer: 5_000, max_inner: 5_000, rho0: 10.0, rho_max: 1e10, memory: 12 }
    }
}

/// Solves with default settings apart from `tol` and the outer cap.
pub fn solve_nlp<P: SmoothNlp + ?Sized>(p: &P, z0: &DVector<f64>, tol: f64, max_iter: usize) -> NlpSolution {
    solve_nlp_with(p, z0, &NlpSettings { tol, max_outer: max_iter, ..NlpSettings::default() }, None)
}

/// Full entry point; `duals` optionally seeds `(ν, λ)`.
pub fn solve_nlp_with<P: SmoothNlp + ?Sized>(
    p: &P,
    z0: &DVector<f64>,
    s: &NlpSettings,
    duals: Option<(&DVector<f64>, &DVector<f64>)>,
) -> NlpSolution {
    assert_eq!(z0.len(), p.num_vars(), "start point has wrong dimension");
    let (mut nu, mut lambda) = match duals {
        Some((n, l)) if n.len() == p.num_eq() && l.len() == p.num_ineq() => (n.clone(), l.map(|v| v.max(0.0))),
        _ => (DVector::zeros(p.num_eq()), DVector::zeros(p.num_ineq())),
    };
    let mut z = z0.clone();
    let mut rho = s.rho0;
    let mut omega = 1e-2f64.max(s.tol);
    let mut prev_viol = f64::INFINITY;
    let mut inner_total = 0;
    let constrained = p.num_eq() + p.num_ineq() > 0;

    for outer in 1..=s.max_outer {
        let al = AugLag { p, nu: &nu, lambda: &lambda, rho };
        let (z_new, inner_iters, _) = lbfgs(&al, &z, omega.max(0.1 * s.tol), s.max_inner, s.memory);
        inner_total += inner_iters;
        z = z_new;

        let ce = p.eq_values(&z);
        let ci = p.ineq_values(&z);
        nu -= &ce * rho;
        lambda = (&lambda - &ci * rho).map(|v| v.max(0.0));
        let report = residuals(p, &z, &nu, &lambda);
        let viol = report.1;
        debug!(
            "NLP outer {outer}: stationarity {:.3e} violation {:.3e} complementarity {:.3e} rho {rho:.1e}",
            report.0, viol, report.2
        );
        if report.0 <= s.tol && viol <= s.tol && report.2 <= s.tol {
            return finish(p, z, nu, lambda, report, NlpStatus::Converged, outer, inner_total);
        }
        if !constrained {
            omega = (omega * 0.1).max(0.1 * s.tol);
            continue;
        }
        if viol > 0.25 * prev_viol {
            if rho >= s.rho_max && report.0 <= s.tol {
                return finish(p, z, nu, lambda, report, NlpStatus::ViolationAboveTolerance, outer, inner_total);
            }
            rho = (rho * 10.0).min(s.rho_max);
        }
        prev_viol = viol;
        omega = (omega * 0.1).max(0.1 * s.tol);
    }
    let report = residuals(p, &z, &nu, &lambda);
    finish(p, z, nu, lambda, report, NlpStatus::IterationLimit, s.max_outer, inner_total)
}

#[allow(clippy::too_many_arguments)]
fn finish<P: SmoothNlp + ?Sized>(
    p: &P,
    z: DVector<f64>,
    nu: DVector<f64>,
    lambda: DVector<f64>,
    report: (f64, f64, f64),
    status: NlpStatus,
    outer: usize,
    inner: usize,
) -> NlpSolution {
    let mut g = DVector::zeros(p.num_vars());
    let objective = p.objective(&z, &mut g);
    NlpSolution {
        z,
        eq_duals: nu,
        ineq_duals: lambda,
        objective,
        stationarity_residual: report.0,
        constraint_violation: report.1,
        complementarity_residual: report.2,
        status,
        outer_iterations: outer,
        inner_iterations: inner,
    }
}

/// `(‖∇f − J_eqᵀν − J_inᵀλ‖∞, max violation, max |λ_i c_i|)`.
pub fn residuals<P: SmoothNlp + ?Sized>(p: &P, z: &DVector<f64>, nu: &DVector<f64>, lambda: &DVector<f64>) -> (f64, f64, f64) {
    let mut g = DVector::zeros(p.num_vars());
    p.objective(z, &mut g);
    if p.num_eq() > 0 {
        g -= p.eq_jac_t(z, nu);
    }
    if p.num_ineq() > 0 {
        g -= p.ineq_jac_t(z, lambda);
    }
    let ce = p.eq_values(z);
    let ci = p.ineq_values(z);
    let viol = ce.amax().max(ci.iter().fold(0.0f64, |a, &c| a.max(-c)));
    let comp = lambda.iter().zip(ci.iter()).fold(0.0f64, |a, (l, c)| a.max((l * c).abs()));
    (g.amax(), viol, comp)
}

struct AugLag<'a, P: SmoothNlp + ?Sized> {
    p: &'a P,
    nu: &'a DVector<f64>,
    lambda: &'a DVector<f64>,
    rho: f64,
}

impl<P: SmoothNlp + ?Sized> AugLag<'_, P> {
    fn eval(&self, z: &DVector<f64>, grad: &mut DVector<f64>) -> f64 {
        let mut val = self.p.objective(z, grad);
        if self.p.num_eq() > 0 {
            let ce = self.p.eq_values(z);
            val += -self.nu.dot(&ce) + 0.5 * self.rho * ce.norm_squared();
            let w = self.nu - &ce * self.rho;
            *grad -= self.p.eq_jac_t(z, &w);
        }
        if self.p.num_ineq() > 0 {
            let ci = self.p.ineq_values(z);
            let shifted = (self.lambda - &ci * self.rho).map(|v| v.max(0.0));
            val += (shifted.norm_squared() - self.lambda.norm_squared()) / (2.0 * self.rho);
            *grad -= self.p.ineq_jac_t(z, &shifted);
        }
        val
    }
}

/// L-BFGS to `‖∇‖∞ ≤ gtol`. Returns the point, iteration count and final
/// gradient norm.
fn lbfgs<P: SmoothNlp + ?Sized>(
    f: &AugLag<'_, P>,
    z0: &DVector<f64>,
    gtol: f64,
    max_iter: usize,
    memory: usize,
) -> (DVector<f64>, usize, f64) {
    let n = z0.len();
    let mut z = z0.clone();
    let mut g = DVector::zeros(n);
    let mut fz = f.eval(&z, &mut g);
    let mut hist: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::with_capacity(memory);
    for k in 0..max_iter {
        let gnorm = g.amax();
        if gnorm <= gtol {
            return (z, k, gnorm);
        }
        let mut d = -&g;
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * s.dot(&d);
            d -= y * a;
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.back() {
            d *= s.dot(y) / y.norm_squared();
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * y.dot(&d);
            d += s * (a - b);
        }
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            hist.clear();
            d = -&g;
            slope = -g.norm_squared();
        }
        let step0 = if hist.is_empty() { (1.0 / g.norm()).min(1.0) } else { 1.0 };
        match wolfe(f, &z, fz, slope, &d, step0) {
            Some((t, f_new, g_new)) => {
                let s = &d * t;
                let y = &g_new - &g;
                let sy = s.dot(&y);
                z += &s;
                if sy > 1e-16 * s.norm() * y.norm() {
                    if hist.len() == memory {
                        hist.pop_front();
                    }
                    hist.push_back((s, y, 1.0 / sy));
                }
                let stalled = (fz - f_new).abs() <= 1e-16 * fz.abs().max(1.0) && hist.is_empty();
                fz = f_new;
                g = g_new;
                if stalled {
                    return (z, k + 1, g.amax());
                }
            }
            None => {
                if hist.is_empty() {
                    return (z, k, gnorm);
                }
                hist.clear();
            }
        }
    }
    let gnorm = g.amax();
    (z, max_iter, gnorm)
}

/// Strong Wolfe line search (c1 = 1e-4, c2 = 0.9) by bracketing and zoom.
fn wolfe<P: SmoothNlp + ?Sized>(
    f: &AugLag<'_, P>,
    z: &DVector<f64>,
    f0: f64,
    slope0: f64,
    d: &DVector<f64>,
    step0: f64,
) -> Option<(f64, f64, DVector<f64>)> {
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    let n = z.len();
    let eval = |t: f64| {
        let mut g = DVector::zeros(n);
        let v = f.eval(&(z + d * t), &mut g);
        let s = g.dot(d);
        (v, g, s)
    };
    let mut t_prev = 0.0;
    let mut f_prev = f0;
    let mut s_prev = slope0;
    let mut t = step0;
    // slack covering rounding in f, so the curvature test drives acceptance near the optimum
    let f0 = f0 + 1e-13 * f0.abs();
    for i in 0..40 {
        let (ft, gt, st) = eval(t);
        if !ft.is_finite() {
            t *= 0.5;
            continue;
        }
        if ft > f0 + C1 * t * slope0 || (i > 0 && ft >= f_prev) {
            return zoom(&eval, f0, slope0, (t_prev, f_prev, s_prev), (t, ft, st));
        }
        if st.abs() <= -C2 * slope0 {
            return Some((t, ft, gt));
        }
        if st >= 0.0 {
            return zoom(&eval, f0, slope0, (t, ft, st), (t_prev, f_prev, s_prev));
        }
        t_prev = t;
        f_prev = ft;
        s_prev = st;
        t *= 2.0;
    }
    None
}

fn zoom<E>(eval: &E, f0: f64, slope0: f64, mut lo: (f64, f64, f64), mut hi: (f64, f64, f64)) -> Option<(f64, f64, DVector<f64>)>
where
    E: Fn(f64) -> (f64, DVector<f64>, f64),
{
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    let mut best: Option<(f64, f64, DVector<f64>)> = None;
    for _ in 0..60 {
        // cubic interpolation safeguarded to the middle of the bracket
        let (a, fa, da) = lo;
        let (b, fb, db) = hi;
        let d1 = da + db - 3.0 * (fa - fb) / (a - b);
        let disc = d1 * d1 - da * db;
        let mut t = if disc >= 0.0 {
            let d2 = disc.sqrt() * (b - a).signum();
            b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2)
        } else {
            0.5 * (a + b)
        };
        let (mn, mx) = (a.min(b), a.max(b));
        let margin = 0.1 * (mx - mn);
        if !t.is_finite() || t < mn + margin || t > mx - margin {
            t = 0.5 * (a + b);
        }
        if (mx - mn) <= 1e-16 * mx.max(1e-300) {
            break;
        }
        let (ft, gt, st) = eval(t);
        if ft > f0 + C1 * t * slope0 || ft >= lo.1 {
            hi = (t, ft, st);
        } else {
            if st.abs() <= -C2 * slope0 {
                return Some((t, ft, gt));
            }
            if st * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = (t, ft, st);
            best = Some((t, ft, gt));
        }
    }
    best.or_else(|| {
        let (t, ft, _) = lo;
        (t > 0.0 && ft < f0).then(|| {
            let (v, g, _) = eval(t);
            (t, v, g)
        })
    })
}
