//! Fixed graph propagation operators used by the GNN layers.

use std::sync::Arc;

use super::SparseMatrix;
use crate::graph::Graph;

#[derive(Debug, Clone)]
pub struct PropagationOperators {
    /// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃ = D + I`.
    pub sym_norm: Arc<SparseMatrix>,
    /// Mean over the 1-hop neighbors; zero row for isolated nodes.
    pub mean_1hop: Arc<SparseMatrix>,
    /// Mean over nodes at exact distance 2 (neither the ego nor a 1-hop
    /// neighbor); zero row when there are none.
    pub mean_2hop: Arc<SparseMatrix>,
}

pub fn build_propagation_matrices(g: &Graph) -> PropagationOperators {
    let n = g.n_nodes();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|u| 1.0 / ((g.degree(u) + 1) as f64).sqrt())
        .collect();

    let sym_rows = (0..n)
        .map(|u| {
            let mut row: Vec<(usize, f64)> = g
                .neighbors(u)
                .iter()
                .map(|&v| (v, inv_sqrt[u] * inv_sqrt[v]))
                .collect();
            let pos = row.partition_point(|&(v, _)| v < u);
            row.insert(pos, (u, inv_sqrt[u] * inv_sqrt[u]));
            row
        })
        .collect();

    let mean1_rows = (0..n)
        .map(|u| {
            let nb = g.neighbors(u);
            let w = 1.0 / nb.len().max(1) as f64;
            nb.iter().map(|&v| (v, w)).collect()
        })
        .collect();

    let mut mark = vec![usize::MAX; n];
    let mean2_rows = (0..n)
        .map(|u| {
            mark[u] = u;
            for &v in g.neighbors(u) {
                mark[v] = u;
            }
            let mut two: Vec<usize> = Vec::new();
            for &v in g.neighbors(u) {
                for &w in g.neighbors(v) {
                    if mark[w] != u {
                        mark[w] = u;
                        two.push(w);
                    }
                }
            }
            two.sort_unstable();
            let w = 1.0 / two.len().max(1) as f64;
            two.into_iter().map(|v| (v, w)).collect()
        })
        .collect();

    PropagationOperators {
        sym_norm: Arc::new(SparseMatrix::from_rows(n, sym_rows)),
        mean_1hop: Arc::new(SparseMatrix::from_rows(n, mean1_rows)),
        mean_2hop: Arc::new(SparseMatrix::from_rows(n, mean2_rows)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edge_sym_norm_is_all_half() {
        let g = Graph::from_edges(2, [(0, 1)]).unwrap();
        let ops = build_propagation_matrices(&g);
        for r in 0..2 {
            for c in 0..2 {
                assert!((ops.sym_norm.get(r, c) - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn star_center_averages_leaves() {
        let g = Graph::from_edges(4, [(0, 1), (0, 2), (0, 3)]).unwrap();
        let ops = build_propagation_matrices(&g);
        let row: Vec<_> = ops.mean_1hop.row(0).collect();
        assert_eq!(row, vec![(1, 1.0 / 3.0), (2, 1.0 / 3.0), (3, 1.0 / 3.0)]);
        // leaves reach each other at distance 2
        let leaf: Vec<_> = ops.mean_2hop.row(1).collect();
        assert_eq!(leaf, vec![(2, 0.5), (3, 0.5)]);
        assert_eq!(ops.mean_2hop.row(0).count(), 0);
    }

    #[test]
    fn path_exact_two_hop() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let ops = build_propagation_matrices(&g);
        assert_eq!(ops.mean_2hop.row(0).collect::<Vec<_>>(), vec![(2, 1.0)]);
        assert_eq!(ops.mean_2hop.row(1).count(), 0);
    }

    #[test]
    fn triangle_has_no_exact_two_hop() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        let ops = build_propagation_matrices(&g);
        assert_eq!(ops.mean_2hop.nnz(), 0);
    }

    #[test]
    fn isolated_rows_are_zero() {
        let g = Graph::from_edges(3, [(0, 1)]).unwrap();
        let ops = build_propagation_matrices(&g);
        assert_eq!(ops.mean_1hop.row_sum(2), 0.0);
        assert_eq!(ops.sym_norm.get(2, 2), 1.0);
    }
}
