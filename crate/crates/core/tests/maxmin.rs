use ferment::maxmin::{
    backward_sweep, forward_sweep, hamiltonian, hamiltonian_directional_derivative, solve_mf, AdjointState, Branch,
    MaxminState, MfProblem, MfStatus,
};
use ferment::{InfluenceModel, Sigmoid};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy(budget: f64) -> MfProblem {
    let a = DMatrix::from_row_slice(2, 2, &[0.6, 0.3, 0.2, 0.7]);
    let model = InfluenceModel::new(a, DVector::zeros(2), vec![0], DMatrix::identity(1, 1)).unwrap();
    MfProblem::new(model, DVector::from_element(2, 2.0), Sigmoid::new(0.5, 0.7).unwrap(), 3, budget).unwrap()
}

/// Best record over a lattice of `(u(0), u(1))` inside the budget disc;
/// `u(2)` cannot move the record.
fn grid_record(p: &MfProblem, points: usize) -> f64 {
    let s = p.budget.sqrt();
    let mut best = f64::NEG_INFINITY;
    for i in 0..points {
        for j in 0..points {
            let u0 = -s + 2.0 * s * i as f64 / (points - 1) as f64;
            let u1 = -s + 2.0 * s * j as f64 / (points - 1) as f64;
            if u0 * u0 + u1 * u1 > p.budget {
                continue;
            }
            let u = [DVector::from_element(1, u0), DVector::from_element(1, u1), DVector::zeros(1)];
            let mut x = p.x0.clone();
            let mut rec = p.sigmoid.value(&x);
            for ut in &u[..2] {
                x = p.model.a() * &x + p.model.apply_b(ut) + p.model.drift();
                rec = rec.min(p.sigmoid.value(&x));
            }
            best = best.max(rec);
        }
    }
    best
}

#[test]
fn toy_matches_grid_oracle() {
    let p = toy(0.1);
    let sol = solve_mf(&p).unwrap();
    let grid = grid_record(&p, 400);
    assert_eq!(sol.status, MfStatus::Converged);
    assert!(sol.attained >= 0.99 * grid, "attained {} vs grid {grid}", sol.attained);
    assert!(sol.attained <= grid + 1e-3, "attained {} beats grid {grid} by too much", sol.attained);
    assert!(sol.expenditure <= p.budget * (1.0 + 1e-6));
    assert!(sol.complementarity_residual <= 1e-3 * p.budget);
}

#[test]
fn record_is_running_minimum() {
    let p = toy(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let u: Vec<_> = (0..3).map(|_| DVector::from_element(1, rng.gen_range(-1.0..1.0))).collect();
    let states = forward_sweep(&p.model, &p.sigmoid, &p.x0, &u);
    let scan = states[..3].iter().map(|s| p.sigmoid.value(&s.x)).fold(f64::INFINITY, f64::min);
    assert_eq!(states[3].r, scan);
    assert!(states.windows(2).all(|w| w[1].r <= w[0].r && w[1].y >= w[0].y));
}

#[test]
fn attained_grows_with_budget() {
    let mut last = f64::NEG_INFINITY;
    for c in [0.02, 0.05, 0.1, 0.15, 0.25] {
        let sol = solve_mf(&toy(c)).unwrap();
        assert!(sol.attained >= last - 1e-6, "budget {c}: {} < {last}", sol.attained);
        assert!((sol.expenditure - c).abs() <= 1e-5 * c, "budget {c} not binding");
        last = sol.attained;
    }
}

#[test]
fn record_weight_stays_in_unit_interval() {
    let p = toy(1.0);
    let u = vec![DVector::from_element(1, 0.3); 3];
    let states = forward_sweep(&p.model, &p.sigmoid, &p.x0, &u);
    let sweep = backward_sweep(&p.model, &p.sigmoid, &states, 0.7);
    for adj in &sweep.adjoints {
        assert!((0.0..=1.0).contains(&adj.lambda_r));
    }
    assert!(sweep.phi.iter().all(|f| (0.0..=1.0).contains(f)));
}

fn random_model(rng: &mut ChaCha8Rng, n: usize) -> InfluenceModel {
    let mut a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(0.0..1.0));
    for i in 0..n {
        let s: f64 = a.row(i).sum();
        a.row_mut(i).scale_mut(0.9 / s);
    }
    let q = DVector::from_fn(n, |_, _| rng.gen_range(0.0..1.0));
    InfluenceModel::new(a, q, vec![0, 2], DMatrix::identity(2, 2)).unwrap()
}

#[test]
fn directional_derivative_matches_one_sided_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let sig = Sigmoid::new(0.5, 0.7).unwrap();
    let n = 4;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let model = random_model(&mut rng, n);
        let x = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..3.0));
        let state = MaxminState { r: sig.value(&x), x, y: rng.gen_range(0.0..2.0) };
        let adj = AdjointState {
            lambda_x: DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)),
            lambda_r: rng.gen_range(0.0..1.0),
            lambda_y: rng.gen_range(0.1..2.0),
        };
        let u = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
        let v_x = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let v_r = rng.gen_range(-1.0..1.0);
        let theta = 1e-7;
        let moved = MaxminState { x: &state.x + &v_x * theta, r: state.r + v_r * theta, y: state.y };
        let fd = (hamiltonian(&model, &sig, &adj, &moved, &u) - hamiltonian(&model, &sig, &adj, &state, &u)) / theta;
        let exact = hamiltonian_directional_derivative(&model, &sig, &adj, &state, &v_x, v_r);
        worst = worst.max((fd - exact).abs());
    }
    assert!(worst <= 1e-5, "worst one-sided gap {worst:.3e}");
}

#[test]
fn split_adjoint_dominates_directional_derivative() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sig = Sigmoid::new(0.5, 0.7).unwrap();
    let n = 4;
    let model = random_model(&mut rng, n);
    let x = DVector::from_fn(n, |_, _| rng.gen_range(0.0..2.0));
    let state = MaxminState { r: sig.value(&x), x, y: 0.0 };
    let next = AdjointState { lambda_x: DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)), lambda_r: 0.8, lambda_y: 1.0 };
    let grad = sig.gradient(&state.x);
    for phi in [0.0, 0.25, 0.5, 1.0] {
        let lam_x = model.a().tr_mul(&next.lambda_x) + &grad * (phi * next.lambda_r);
        let lam_r = (1.0 - phi) * next.lambda_r;
        for _ in 0..1000 {
            let v_x = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let v_r = rng.gen_range(-1.0..1.0);
            let lhs = lam_x.dot(&v_x) + lam_r * v_r;
            let rhs = hamiltonian_directional_derivative(&model, &sig, &next, &state, &v_x, v_r);
            assert!(lhs >= rhs - 1e-8, "phi {phi}: {lhs} < {rhs}");
        }
    }
}

#[test]
fn decaying_network_reports_branches() {
    let p = toy(0.5);
    let sol = solve_mf(&p).unwrap();
    let sweep = backward_sweep(&p.model, &p.sigmoid, &sol.states, sol.lambda_y_terminal);
    assert!(sweep.branches[1..3].iter().any(|b| *b != Branch::Carry));
}
