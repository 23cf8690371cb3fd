use nalgebra::DMatrix;
use odkla::graph::{incidence, metropolis_weights, random_connected_graph};

#[test]
fn random_graphs_are_connected_and_consistent() {
    for seed in 0..100 {
        let n = 2 + (seed as usize % 12);
        let g = random_connected_graph(n, 0.3, seed).unwrap();
        let lap = g.laplacian();
        let s = incidence(&g);
        // D - W = S- S-^T / 2 and D + W = S+ S+^T / 2
        let minus = s.s_minus.dot(&s.s_minus.t());
        let plus = s.s_plus.dot(&s.s_plus.t());
        assert_eq!(minus, &lap * 2);
        assert_eq!(plus, (g.degree_matrix() + g.adjacency()) * 2);

        let l = DMatrix::from_fn(n, n, |i, j| lap[[i, j]] as f64);
        let eig = l.symmetric_eigen().eigenvalues;
        let zeros = eig.iter().filter(|v| v.abs() < 1e-9).count();
        assert_eq!(zeros, 1, "seed {seed}: eigenvalues {eig}");
        assert!(eig.iter().all(|v| *v > -1e-9));
    }
}

#[test]
fn metropolis_weights_are_doubly_stochastic() {
    for seed in 0..100 {
        let g = random_connected_graph(3 + seed as usize % 9, 0.4, seed).unwrap();
        let w = metropolis_weights(&g);
        let n = g.n();
        for i in 0..n {
            let row: f64 = w.row(i).sum();
            let col: f64 = w.column(i).sum();
            assert!((row - 1.0).abs() < 1e-12 && (col - 1.0).abs() < 1e-12);
            for j in 0..n {
                assert_eq!(w[[i, j]], w[[j, i]]);
                assert!(w[[i, j]] >= 0.0);
                if i != j && !g.has_edge(i, j) {
                    assert_eq!(w[[i, j]], 0.0);
                }
            }
        }
    }
}

#[test]
fn same_seed_same_graph() {
    let a = random_connected_graph(10, 0.3, 99).unwrap();
    let b = random_connected_graph(10, 0.3, 99).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_edge_list(), b.to_edge_list());
}
