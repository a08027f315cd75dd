use ferment::experiment::{aggregate, ExperimentConfig, RunRecord, Welford};
use ferment::selection::Method;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn record(method: Method, grid_value: f64, value: Option<f64>, seed: u64) -> RunRecord {
    RunRecord {
        seed,
        method,
        grid_value,
        nodes: vec![],
        value,
        equilibrium_cost: None,
        d_star: None,
        bound_holds: None,
        exceedance_count: None,
        cheap_gap: None,
        residual: None,
        status: String::new(),
    }
}

#[test]
fn streaming_matches_two_pass() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let values: Vec<f64> = (0..20).map(|_| rng.gen_range(100.0..300.0)).collect();
    let records: Vec<RunRecord> = values.iter().enumerate().map(|(i, &v)| record(Method::Greedy, 2.0, Some(v), i as u64)).collect();
    let cells = aggregate(&records).unwrap();
    assert_eq!(cells.len(), 1);
    let mean = values.iter().sum::<f64>() / 20.0;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 19.0;
    assert!((cells[0].mean.unwrap() - mean).abs() <= 1e-12 * mean);
    assert!((cells[0].std.unwrap() - var.sqrt()).abs() <= 1e-12 * var.sqrt());
}

#[test]
fn identical_records_have_zero_spread() {
    let mut w = Welford::default();
    for _ in 0..7 {
        w.push(3.25);
    }
    assert_eq!(w.sample_std(), Some(0.0));
    assert_eq!(w.mean(), Some(3.25));
}

#[test]
fn infeasible_records_are_counted_not_averaged() {
    let records = vec![
        record(Method::Degree, 2.0, Some(1.0), 0),
        record(Method::Degree, 2.0, None, 1),
        record(Method::Degree, 2.0, Some(3.0), 2),
        record(Method::Degree, 4.0, None, 0),
        record(Method::Greedy, 2.0, Some(0.5), 0),
    ];
    let cells = aggregate(&records).unwrap();
    assert_eq!(cells.len(), 3);
    let c = &cells[0];
    assert_eq!((c.method, c.grid_value, c.count, c.infeasible), (Method::Degree, 2.0, 2, 1));
    assert_eq!(c.mean, Some(2.0));
    assert!((c.std.unwrap() - 2f64.sqrt()).abs() < 1e-15);
    let flagged = &cells[1];
    assert_eq!((flagged.count, flagged.infeasible, flagged.mean), (0, 1, None));
    assert_eq!(cells[2].method, Method::Greedy);
}

#[test]
fn empty_records_rejected() {
    assert!(aggregate(&[]).is_err());
}

#[test]
fn hash_tracks_content() {
    let a = ExperimentConfig::from_json_str(r#"{"graph": {"family": "karate"}}"#).unwrap();
    let b = ExperimentConfig::from_json_str(r#"{ "graph": { "family": "karate" } }"#).unwrap();
    let c = ExperimentConfig::from_json_str(r#"{"graph": {"family": "karate"}, "model": {"tau": 0.8}}"#).unwrap();
    assert_eq!(a.hash(), b.hash());
    assert_ne!(a.hash(), c.hash());
}

#[test]
fn bad_values_rejected() {
    for text in [
        r#"{"graph": {"family": "karate"}, "selection": {"m": []}}"#,
        r#"{"graph": {"family": "karate"}, "problem": {"t0": 0}}"#,
        r#"{"graph": {"family": "karate"}, "ensemble": {"realizations": 0}}"#,
        r#"{"graph": {"family": "karate"}, "problem": {"type": "mf", "budget": [-1.0]}}"#,
        r#"{"graph": {"family": "karate"}, "problem": {"type": "qp"}}"#,
    ] {
        assert!(ExperimentConfig::from_json_str(text).is_err(), "{text}");
    }
}
