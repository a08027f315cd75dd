use ferment::graph::{degree_centers, distance_centers, generate, parse_edge_file};
use ferment::{GraphFamily, GraphSpec, InfluenceModel};
use nalgebra::DVector;

#[test]
fn karate_degree_centers_match_full_sort() {
    let g = generate(&GraphSpec::karate()).unwrap();
    let deg = g.out_degrees();
    let mut order: Vec<usize> = (0..g.n()).collect();
    order.sort_by(|&i, &j| deg[j].cmp(&deg[i]).then(i.cmp(&j)));
    assert_eq!(degree_centers(&g, 5), order[..5].to_vec());
    assert_eq!(degree_centers(&g, 5)[..2], [33, 0]);
}

#[test]
fn generated_families_are_substochastic() {
    for (family, param) in [(GraphFamily::ErdosRenyi, 0.12), (GraphFamily::BarabasiAlbert, 3.0), (GraphFamily::KRegular, 6.0)] {
        let g = generate(&GraphSpec::new(family, 50, param, 9)).unwrap();
        assert!(g.row_sums().iter().all(|&s| (s - 0.9).abs() < 1e-12 || s < 0.9));
        let a = g.influence_matrix();
        assert!(a.iter().all(|&v| (0.0..1.0).contains(&v)));
        assert_eq!(generate(&GraphSpec::new(family, 50, param, 9)).unwrap().edges(), g.edges());
    }
}

#[test]
fn distance_centers_cover_all_nodes_at_full_size() {
    let g = generate(&GraphSpec::new(GraphFamily::BarabasiAlbert, 20, 2.0, 1)).unwrap();
    let mut all = distance_centers(&g, 20);
    all.sort();
    assert_eq!(all, (0..20).collect::<Vec<_>>());
}

#[test]
fn edge_file_roundtrip_builds_a_model() {
    let g = generate(&GraphSpec::new(GraphFamily::KRegular, 6, 2.0, 0)).unwrap();
    let parsed = parse_edge_file(&g.to_edge_file()).unwrap();
    assert_eq!(parsed.n, 6);
    assert_eq!(parsed.edges.len(), g.edges().len());
    let model = InfluenceModel::from_graph(&g, 0.2, vec![1], 1.0).unwrap();
    let x = model.simulate(&DVector::from_element(6, 0.2), &[], 10).unwrap();
    assert!(x.x.iter().all(|v| (v - &DVector::from_element(6, 0.2)).amax() < 1e-15));
}

#[test]
fn edge_file_errors_carry_line_numbers() {
    let err = parse_edge_file("n 3\n0 1 0.3\n\n1 1 0.2\n").unwrap_err();
    assert!(err.to_string().contains("line 4"), "{err}");
}
