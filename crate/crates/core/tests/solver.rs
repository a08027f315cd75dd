use ferment::solver::nlp::{solve_nlp, SmoothNlp};
use ferment::solver::{solve_qp, QuadraticProgram};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Instance {
    h: DMatrix<f64>,
    f: DVector<f64>,
    a_eq: DMatrix<f64>,
    b_eq: DVector<f64>,
    a_in: DMatrix<f64>,
    b_in: DVector<f64>,
}

fn random_instance(seed: u64, n: usize, n_eq: usize, n_in: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0));
    let m = g(n, n);
    let h = &m * m.transpose() + DMatrix::identity(n, n) * 0.5;
    let f = g(n, 1).column(0).into_owned();
    let a_eq = g(n_eq, n);
    let b_eq = g(n_eq, 1).column(0).into_owned();
    let a_in = g(n_in, n);
    // offsets keep the feasible set nonempty around a random point
    let z0 = g(n, 1).column(0).into_owned();
    let b_eq = if n_eq > 0 { &a_eq * &z0 } else { b_eq };
    let b_in = &a_in * &z0 - g(n_in, 1).column(0).map(|v: f64| v.abs() * 0.5) + g(n_in, 1).column(0).map(|v: f64| v * 0.8);
    Instance { h, f, a_eq, b_eq, a_in, b_in }
}

/// Enumerates active sets, solves each equality-constrained KKT system and
/// keeps the feasible point with nonnegative multipliers and least cost.
fn active_set_oracle(p: &Instance) -> Option<(DVector<f64>, f64)> {
    let n = p.f.len();
    let n_eq = p.b_eq.len();
    let n_in = p.b_in.len();
    let mut best: Option<(DVector<f64>, f64)> = None;
    for mask in 0u32..(1 << n_in) {
        let act: Vec<usize> = (0..n_in).filter(|i| mask & (1 << i) != 0).collect();
        let k = n_eq + act.len();
        if k > n {
            continue;
        }
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p.h);
        rhs.rows_mut(0, n).copy_from(&(-&p.f));
        for r in 0..k {
            let row = if r < n_eq { p.a_eq.row(r).into_owned() } else { p.a_in.row(act[r - n_eq]).into_owned() };
            let b = if r < n_eq { p.b_eq[r] } else { p.b_in[act[r - n_eq]] };
            for j in 0..n {
                kkt[(n + r, j)] = row[j];
                kkt[(j, n + r)] = -row[j];
            }
            rhs[n + r] = b;
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        let z = sol.rows(0, n).into_owned();
        let lam_ok = (0..act.len()).all(|r| sol[n + n_eq + r] >= -1e-10);
        let feas = (&p.a_in * &z - &p.b_in).iter().all(|&s| s >= -1e-10);
        if lam_ok && feas {
            let obj = 0.5 * z.dot(&(&p.h * &z)) + p.f.dot(&z);
            if best.as_ref().is_none_or(|b| obj < b.1) {
                best = Some((z, obj));
            }
        }
    }
    best
}

fn to_qp(p: &Instance) -> QuadraticProgram {
    let eq = (!p.b_eq.is_empty()).then_some((&p.a_eq, &p.b_eq));
    QuadraticProgram::from_dense(&p.h, &p.f, eq, Some((&p.a_in, &p.b_in))).unwrap()
}

#[test]
fn random_qps_match_active_set_oracle() {
    for seed in 0..40 {
        let n_eq = (seed % 3) as usize;
        let inst = random_instance(seed, 10, n_eq, 6);
        let (z_star, obj_star) = active_set_oracle(&inst).expect("instance built feasible");
        let sol = solve_qp(&to_qp(&inst), 1e-8, 200_000);
        assert!(sol.is_optimal(), "seed {seed}: {:?}", sol.status);
        assert!((&sol.z - &z_star).amax() < 1e-6, "seed {seed}: z off by {}", (&sol.z - &z_star).amax());
        assert!((sol.objective - obj_star).abs() < 1e-6);
    }
}

#[test]
fn scaling_cost_leaves_minimizer_unchanged() {
    let inst = random_instance(7, 8, 1, 5);
    let base = solve_qp(&to_qp(&inst), 1e-9, 200_000);
    for alpha in [1e-3, 0.5, 7.0, 1e3] {
        let scaled = Instance { h: &inst.h * alpha, f: &inst.f * alpha, ..random_instance(7, 8, 1, 5) };
        let sol = solve_qp(&to_qp(&scaled), 1e-9, 200_000);
        assert!(sol.is_optimal());
        assert!((&sol.z - &base.z).amax() < 1e-6, "alpha {alpha}");
        assert!((sol.objective - alpha * base.objective).abs() <= 1e-6 * alpha.max(1.0));
    }
}

struct QpAsNlp<'a>(&'a Instance);

impl SmoothNlp for QpAsNlp<'_> {
    fn num_vars(&self) -> usize {
        self.0.f.len()
    }
    fn num_eq(&self) -> usize {
        self.0.b_eq.len()
    }
    fn num_ineq(&self) -> usize {
        self.0.b_in.len()
    }
    fn objective(&self, z: &DVector<f64>, grad: &mut DVector<f64>) -> f64 {
        let hz = &self.0.h * z;
        grad.copy_from(&(&hz + &self.0.f));
        0.5 * z.dot(&hz) + self.0.f.dot(z)
    }
    fn eq_values(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.0.a_eq * z - &self.0.b_eq
    }
    fn ineq_values(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.0.a_in * z - &self.0.b_in
    }
    fn eq_jac_t(&self, _z: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        self.0.a_eq.transpose() * w
    }
    fn ineq_jac_t(&self, _z: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        self.0.a_in.transpose() * w
    }
}

#[test]
fn nlp_reproduces_qp_answer() {
    for seed in 100..110 {
        let inst = random_instance(seed, 6, 1, 4);
        let qp = solve_qp(&to_qp(&inst), 1e-9, 200_000);
        let nlp = solve_nlp(&QpAsNlp(&inst), &DVector::zeros(6), 1e-9, 5_000);
        assert!(qp.is_optimal() && nlp.is_converged(), "seed {seed}: {:?}", nlp.status);
        assert!((&qp.z - &nlp.z).amax() < 1e-6, "seed {seed}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn optimal_solutions_satisfy_kkt(seed in 0u64..10_000, n in 2usize..9, n_in in 0usize..7) {
        let inst = random_instance(seed, n, 0, n_in);
        let qp = to_qp(&inst);
        let sol = solve_qp(&qp, 1e-8, 200_000);
        if active_set_oracle(&inst).is_none() {
            prop_assert_eq!(sol.status, ferment::solver::QpStatus::Infeasible);
            return Ok(());
        }
        prop_assert!(sol.is_optimal());
        let r = qp.kkt_residuals(&sol.z, &sol.eq_duals, &sol.ineq_duals);
        prop_assert!(r.primal <= 1e-8 && r.dual <= 1e-8 && r.dual_sign <= 1e-8 && r.complementarity <= 1e-8);
    }
}

