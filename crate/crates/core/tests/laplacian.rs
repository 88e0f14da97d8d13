mod common;

use common::{brute_edge_sum, dense_adjacency, random_graph, rng};
use lineage_core::graphs::{laplacian, laplacian_quadratic, Laplacian};
use lineage_core::Matrix;
use proptest::prelude::*;

fn random_matrix(seed: u64, rows: usize, cols: usize) -> Matrix<f64> {
    Matrix::random_normal(rows, cols, 1.0, &mut rng(seed))
}

proptest! {
    #[test]
    fn trace_form_equals_edge_sum(seed in any::<u64>(), n in 1usize..20, p in 0.0f64..1.0, d in 1usize..6, weighted: bool) {
        let g = random_graph(&mut rng(seed), n, p, weighted);
        let l: Laplacian<f64> = laplacian(&g);
        let m = random_matrix(seed ^ 0xabc, n, d);
        let trace = laplacian_quadratic(&l, &m).unwrap();
        let rows: Vec<Vec<f64>> = (0..n).map(|u| m.row(u).to_vec()).collect();
        let oracle = brute_edge_sum(&dense_adjacency(&g), &rows);
        let scale = oracle.abs().max(1e-300);
        prop_assert!((trace - oracle).abs() <= 1e-9 * scale || trace == oracle);
        let edge = l.edge_sum_quadratic(&m).unwrap();
        prop_assert!((edge - oracle).abs() <= 1e-9 * scale || edge == oracle);
    }

    #[test]
    fn laplacian_is_psd(seed in any::<u64>(), n in 1usize..15, p in 0.0f64..1.0, d in 1usize..4) {
        let g = random_graph(&mut rng(seed), n, p, true);
        let m = random_matrix(seed.wrapping_add(1), n, d);
        prop_assert!(laplacian_quadratic(&laplacian::<f64>(&g), &m).unwrap() >= 0.0);
    }

    #[test]
    fn rows_sum_to_zero_and_dense_is_symmetric(seed in any::<u64>(), n in 1usize..15, p in 0.0f64..1.0) {
        let g = random_graph(&mut rng(seed), n, p, true);
        let l = laplacian::<f64>(&g);
        let dense = l.to_dense();
        let ones = Matrix::from_fn(n, 1, |_, _| 1.0);
        for v in l.apply(&ones).unwrap().as_slice() {
            prop_assert!(v.abs() < 1e-12);
        }
        for a in 0..n {
            for b in 0..n {
                prop_assert_eq!(dense.get(a, b), dense.get(b, a));
            }
        }
    }

    #[test]
    fn single_precision_agrees(seed in any::<u64>(), n in 2usize..12, p in 0.0f64..1.0) {
        let g = random_graph(&mut rng(seed), n, p, false);
        let m = random_matrix(seed, n, 3);
        let want = laplacian_quadratic(&laplacian::<f64>(&g), &m).unwrap();
        let got = laplacian_quadratic(&laplacian::<f32>(&g), &m.cast::<f32>()).unwrap();
        prop_assert!((f64::from(got) - want).abs() <= 1e-4 * want.abs().max(1.0));
    }
}

#[test]
fn path_graph_example() {
    // path a-b-c with rows 0, 1, 3: (1-0)² + (3-1)² = 5
    let g = lineage_core::graphs::Graph::from_pairs(common::ids("n", 3), [(0, 1), (1, 2)]).unwrap();
    let m = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![3.0]]).unwrap();
    assert_eq!(laplacian_quadratic(&laplacian::<f64>(&g), &m).unwrap(), 5.0);
}
