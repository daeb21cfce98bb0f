//! Graph propagation kernels shared by the models.

use ndarray::{Array2, ArrayView2, Axis, Zip};

use crate::graph::{Csr, TemporalGraph};

/// Row-wise neighbor mean. Rows of isolated vertices are zero.
pub fn neighbor_mean(adj: &Csr, h: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = Array2::zeros(h.raw_dim());
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let nbrs = adj.neighbors(i);
        if nbrs.is_empty() {
            continue;
        }
        for &j in nbrs {
            row += &h.row(j);
        }
        row /= nbrs.len() as f64;
    }
    out
}

/// Adjoint of [`neighbor_mean`]: scatters each row's gradient back to its
/// neighbors, scaled by `1 / deg`.
pub fn neighbor_mean_backward(adj: &Csr, grad: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = Array2::zeros(grad.raw_dim());
    for j in 0..grad.nrows() {
        let mut row = out.row_mut(j);
        for &i in adj.neighbors(j) {
            let scale = 1.0 / adj.degree(i) as f64;
            Zip::from(&mut row).and(&grad.row(i)).for_each(|o, &g| *o += scale * g);
        }
    }
    out
}

/// `S^k X` with `S = D^-1/2 (A + I) D^-1/2`, degrees counted with the
/// added self-loop. `k = 0` returns the input unchanged.
pub fn sgc_precompute(g: &TemporalGraph, x: &Array2<f64>, k: usize) -> Array2<f64> {
    let adj = g.adjacency();
    let inv_sqrt: Vec<f64> = (0..g.num_vertices())
        .map(|v| 1.0 / ((adj.degree(v) + 1) as f64).sqrt())
        .collect();
    let mut cur = x.clone();
    for _ in 0..k {
        let mut next = Array2::zeros(cur.raw_dim());
        for (i, mut row) in next.axis_iter_mut(Axis(0)).enumerate() {
            let di = inv_sqrt[i];
            row.scaled_add(di * di, &cur.row(i));
            for &j in adj.neighbors(i) {
                row.scaled_add(di * inv_sqrt[j], &cur.row(j));
            }
        }
        cur = next;
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn graph(n: usize, edges: Vec<(usize, usize)>) -> TemporalGraph {
        TemporalGraph::new(vec![0; n], vec![None; n], vec![0.0; n], 1, 1, edges)
            .unwrap()
            .0
    }

    /// Dense oracle: build S explicitly and take matrix powers.
    fn dense_propagation(g: &TemporalGraph, x: &Array2<f64>, k: usize) -> Array2<f64> {
        let n = g.num_vertices();
        let mut a = Array2::<f64>::eye(n);
        for &(u, v) in g.edges() {
            a[[u, v]] = 1.0;
            a[[v, u]] = 1.0;
        }
        let deg: Vec<f64> = a.rows().into_iter().map(|r| r.sum()).collect();
        let s = Array2::from_shape_fn((n, n), |(i, j)| a[[i, j]] / (deg[i] * deg[j]).sqrt());
        let mut out = x.clone();
        for _ in 0..k {
            out = s.dot(&out);
        }
        out
    }

    #[test]
    fn k_zero_is_identity() {
        let g = graph(3, vec![(0, 1), (1, 2)]);
        let x = array![[1.5, -2.0], [0.25, 3.0], [7.0, 0.0]];
        assert_eq!(sgc_precompute(&g, &x, 0), x);
    }

    #[test]
    fn single_vertex_is_fixed_point() {
        let g = graph(1, vec![]);
        let x = array![[0.3, -1.0, 2.0]];
        for k in 0..4 {
            assert_eq!(sgc_precompute(&g, &x, k), x);
        }
    }

    #[test]
    fn two_vertices_average() {
        let g = graph(2, vec![(0, 1)]);
        let x = Array2::eye(2);
        let out = sgc_precompute(&g, &x, 1);
        for v in out.iter() {
            assert!((v - 0.5).abs() < 1e-15);
        }
        let dense = dense_propagation(&g, &x, 1);
        assert!((&out - &dense).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn matches_dense_oracle() {
        let g = graph(5, vec![(0, 1), (1, 2), (2, 0), (3, 4)]);
        let x = Array2::from_shape_fn((5, 3), |(i, j)| (i * 3 + j) as f64 * 0.1 - 0.4);
        for k in 0..4 {
            let diff = &sgc_precompute(&g, &x, k) - &dense_propagation(&g, &x, k);
            assert!(diff.iter().all(|d| d.abs() < 1e-12));
        }
    }

    #[test]
    fn mean_backward_is_adjoint() {
        let g = graph(4, vec![(0, 1), (1, 2), (1, 3)]);
        let adj = g.adjacency();
        let h = Array2::from_shape_fn((4, 2), |(i, j)| (i + 2 * j) as f64 - 1.5);
        let r = Array2::from_shape_fn((4, 2), |(i, j)| (i * j) as f64 + 0.5);
        let lhs = (neighbor_mean(adj, h.view()) * &r).sum();
        let rhs = (&h * &neighbor_mean_backward(adj, r.view())).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
