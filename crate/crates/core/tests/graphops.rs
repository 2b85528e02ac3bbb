use std::io::BufReader;

use graphop_core::graphops::{
    check_positivity, check_self_adjoint, empirical_graphop, graphon_operator, numerical_radius, operator_norm,
    power_law_graphon, read_edge_list, spherical_graphop, write_edge_list, Graphop, GraphonKernel, NetworkSpace,
    PowerLawParams, SpaceKind,
};
use graphop_core::particles::{generate_erdos_renyi, generate_power_law_graph};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dense_spectrum(a: &dyn Graphop) -> Vec<f64> {
    let dense = a.to_dense();
    let w = a.space().weights();
    let n = w.len();
    let s = DMatrix::from_fn(n, n, |i, j| w[i].sqrt() * dense[[i, j]] / w[j].sqrt());
    let mut eig: Vec<f64> = SymmetricEigen::new((&s + s.transpose()) * 0.5).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    eig
}

#[test]
fn radius_matches_dense_eigensolver() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [5usize, 40, 200, 512] {
        let raw: Vec<f64> = (0..n).map(|_| 0.2 + rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let space = NetworkSpace::new(SpaceKind::Custom, raw.iter().map(|w| w / total).collect(), vec![]).unwrap();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = rng.random::<f64>();
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        let kernel = GraphonKernel::from_fn(n, |i, j| values[i * n + j]).unwrap();
        let a = graphon_operator(kernel, space).unwrap();
        let spectrum = dense_spectrum(&a);
        let top = spectrum[n - 1];
        let estimate = numerical_radius(&a, 1e-13).unwrap();
        assert!(estimate.converged);
        assert!(((estimate.value - top) / top).abs() < 1e-8, "n = {n}: {} vs {top}", estimate.value);
        let largest = spectrum.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let norm = operator_norm(&a, 1e-13).value;
        assert!(((norm - largest) / largest).abs() < 1e-8);
    }
}

#[test]
fn erdos_renyi_radius_concentrates() {
    let adjacency = generate_erdos_renyi(500, 0.3, 2024).unwrap();
    let a = empirical_graphop(adjacency, 1.0).unwrap();
    check_self_adjoint(&a, 1e-12).unwrap();
    check_positivity(&a, 1e-12).unwrap();
    let radius = numerical_radius(&a, 1e-10).unwrap().value;
    assert!((0.25..=0.35).contains(&radius), "{radius}");
}

#[test]
fn power_law_graph_has_heavy_degrees() {
    let params = PowerLawParams::graphon(0.25).unwrap();
    let (adjacency, r_n) = generate_power_law_graph(400, params, 5).unwrap();
    assert!(r_n > 0.0 && r_n <= 1.0);
    let a = empirical_graphop(adjacency.clone(), r_n).unwrap();
    check_self_adjoint(&a, 1e-12).unwrap();
    // low indices carry the hubs
    let head: usize = (0..20).map(|i| adjacency.degree(i)).sum();
    let tail: usize = (380..400).map(|i| adjacency.degree(i)).sum();
    assert!(head > 2 * tail, "{head} vs {tail}");
}

#[test]
fn edge_list_file_round_trip() {
    let adjacency = generate_erdos_renyi(60, 0.1, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("graph.txt");
    write_edge_list(std::fs::File::create(&path).unwrap(), &adjacency).unwrap();
    let back = read_edge_list(BufReader::new(std::fs::File::open(&path).unwrap()), Some(60)).unwrap();
    assert_eq!(back.edges(), adjacency.edges());
    assert_eq!(back.nodes(), 60);
}

#[test]
fn edge_list_errors_name_the_line() {
    let text = "# header\n0 1\n\n2 x\n";
    let err = read_edge_list(text.as_bytes(), None).unwrap_err().to_string();
    assert!(err.contains("line 4"), "{err}");
}

#[test]
fn graphon_refinement_of_subcritical_power_law_is_bounded() {
    let params = PowerLawParams::graphon(0.25).unwrap();
    let mut previous = 0.0;
    for m in [64, 128, 256, 512] {
        let (space, kernel) = power_law_graphon(params, m).unwrap();
        let r = numerical_radius(&graphon_operator(kernel, space).unwrap(), 1e-12).unwrap().value;
        assert!(r >= previous - 1e-12 && r <= 1.125);
        previous = r;
    }
}

#[test]
fn spherical_operator_is_a_markov_graphop() {
    let a = spherical_graphop(16, 32).unwrap();
    check_self_adjoint(&a, 1e-10).unwrap();
    check_positivity(&a, 1e-12).unwrap();
    let spectrum = dense_spectrum(&a);
    assert!((spectrum[spectrum.len() - 1] - 1.0).abs() < 1e-10);
    assert!(spectrum[0] >= -1.0 - 1e-10);
}
