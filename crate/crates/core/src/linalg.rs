//! Dense symmetric positive-definite kernels.
//!
//! Matrices are row-major `Vec<f64>` of size `n * n`. The factorization works
//! on the envelope of each row (first structurally nonzero column onward), so
//! banded lattice matrices in canonical order factor in roughly
//! `n * bandwidth^2` operations.

use crate::error::{Error, Result};

/// Relative pivot floor: pivots must exceed this times the largest diagonal.
pub const PIVOT_FLOOR: f64 = 1e-12;

/// Lower-triangular Cholesky factor `A = L L^T`.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    n: usize,
    l: Vec<f64>,
    first: Vec<usize>,
}

/// Factor the symmetric matrix `a`. `labels[i]` names row `i` in error
/// reports (typically the graph vertex).
pub fn cholesky(a: &[f64], n: usize, labels: &[usize]) -> Result<SpdFactor> {
    cholesky_with_floor(a, n, labels, PIVOT_FLOOR)
}

/// As [`cholesky`] with an explicit relative pivot floor; `0.0` only asks
/// for strictly positive pivots.
pub fn cholesky_with_floor(a: &[f64], n: usize, labels: &[usize], rel_floor: f64) -> Result<SpdFactor> {
    debug_assert_eq!(a.len(), n * n);
    let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0f64, f64::max);
    let floor = rel_floor * max_diag;
    let mut first = vec![0usize; n];
    for i in 0..n {
        first[i] = (0..i).find(|&j| a[i * n + j] != 0.0).unwrap_or(i);
    }
    // fill never precedes the first nonzero of a row
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        let fi = first[i];
        for j in fi..=i {
            let fj = first[j];
            let start = fi.max(fj);
            let mut s = a[i * n + j];
            let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
            for k in start..j {
                s -= ri[k] * rj[k];
            }
            if j == i {
                if !(s > floor) || !s.is_finite() {
                    return Err(Error::Degenerate {
                        vertex: labels.get(i).copied().unwrap_or(i),
                        pivot: s,
                        floor,
                    });
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Ok(SpdFactor { n, l, first })
}

impl SpdFactor {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let mut s = b[i];
            for k in self.first[i]..i {
                s -= row[k] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            b[i] /= self.l[i * n + i];
            let bi = b[i];
            let row = &self.l[i * n..i * n + i];
            for k in self.first[i]..i {
                b[k] -= row[k] * bi;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn log_det(&self) -> f64 {
        (0..self.n).map(|i| 2.0 * self.l[i * self.n + i].ln()).sum()
    }

    /// Full inverse, row-major, symmetrized.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[j] = 1.0;
            self.solve_in_place(&mut e);
            for i in 0..n {
                inv[i * n + j] = e[i];
            }
        }
        for i in 0..n {
            for j in 0..i {
                let s = 0.5 * (inv[i * n + j] + inv[j * n + i]);
                inv[i * n + j] = s;
                inv[j * n + i] = s;
            }
        }
        inv
    }
}

pub fn mat_vec(a: &[f64], n: usize, x: &[f64]) -> Vec<f64> {
    (0..n)
        .map(|i| a[i * n..(i + 1) * n].iter().zip(x).map(|(p, q)| p * q).sum())
        .collect()
}

/// Certified upper bound on the Perron root of a nonnegative square matrix
/// via the Collatz-Wielandt ratio `max_i (S x)_i / x_i` at a power-iterated
/// positive vector.
pub fn perron_upper_bound(s: &[f64], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut x = vec![1.0; n];
    // iterate with S + I so bipartite patterns do not oscillate
    for _ in 0..500 {
        let y: Vec<f64> = mat_vec(s, n, &x).iter().zip(&x).map(|(a, b)| a + b).collect();
        let norm = y.iter().cloned().fold(0.0f64, f64::max);
        if norm == 0.0 {
            return 0.0;
        }
        // keep strictly positive so the ratio bound stays valid
        x = y.iter().map(|v| (v / norm).max(1e-300)).collect();
    }
    let y = mat_vec(s, n, &x);
    y.iter().zip(&x).map(|(a, b)| a / b).fold(0.0f64, f64::max)
}

/// Greedy minimum-degree elimination order on the symmetric pattern
/// `adjacency`, ties broken by smallest index.
pub fn minimum_degree_order(adjacency: &[Vec<usize>]) -> Vec<usize> {
    use std::collections::BTreeSet;
    let n = adjacency.len();
    let mut nbrs: Vec<BTreeSet<usize>> = adjacency
        .iter()
        .enumerate()
        .map(|(i, a)| a.iter().copied().filter(|&j| j != i).collect())
        .collect();
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|i| (nbrs[i].len(), i)).collect();
    let mut order = Vec::with_capacity(n);
    while let Some((_, v)) = queue.pop_first() {
        order.push(v);
        let vn: Vec<usize> = std::mem::take(&mut nbrs[v]).into_iter().collect();
        for &a in &vn {
            queue.remove(&(nbrs[a].len(), a));
            nbrs[a].remove(&v);
        }
        for (i, &a) in vn.iter().enumerate() {
            for &b in &vn[i + 1..] {
                nbrs[a].insert(b);
                nbrs[b].insert(a);
            }
        }
        for &a in &vn {
            queue.insert((nbrs[a].len(), a));
        }
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_spd(n: usize, seed: &[f64]) -> Vec<f64> {
        // A = B B^T + n I
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += seed[(i * n + k) % seed.len()] * seed[(j * n + k) % seed.len()];
                }
                a[i * n + j] = s + if i == j { n as f64 } else { 0.0 };
            }
        }
        a
    }

    #[test]
    fn two_by_two_inverse_by_hand() {
        let (b1, b2, w) = (3.0, 2.0, 1.5);
        let a = vec![b1, -w, -w, b2];
        let inv = cholesky(&a, 2, &[0, 1]).unwrap().inverse();
        let det = b1 * b2 - w * w;
        assert!((inv[0] - b2 / det).abs() < 1e-15);
        assert!((inv[1] - w / det).abs() < 1e-15);
        assert!((inv[3] - b1 / det).abs() < 1e-15);
    }

    #[test]
    fn degenerate_pivot_names_label() {
        let a = vec![1.0, 1.0, 1.0, 1.0];
        match cholesky(&a, 2, &[7, 9]) {
            Err(Error::Degenerate { vertex, .. }) => assert_eq!(vertex, 9),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn perron_bound_of_path() {
        // adjacency of a 3-path has spectral radius sqrt(2)
        let s = vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let r = perron_upper_bound(&s, 3);
        assert!(r >= 2f64.sqrt() - 1e-12 && r < 2f64.sqrt() + 1e-9);
    }

    #[test]
    fn minimum_degree_on_star() {
        let adj = vec![vec![1, 2, 3], vec![0], vec![0], vec![0]];
        // after two leaves the hub has degree 1 and wins the tie by index
        assert_eq!(minimum_degree_order(&adj), vec![1, 2, 0, 3]);
    }

    proptest! {
        #[test]
        fn solve_and_inverse_are_consistent(n in 1usize..8, seed in proptest::collection::vec(-1.0f64..1.0, 64)) {
            let a = random_spd(n, &seed);
            let f = cholesky(&a, n, &(0..n).collect::<Vec<_>>()).unwrap();
            let inv = f.inverse();
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for k in 0..n {
                        s += a[i * n + k] * inv[k * n + j];
                    }
                    let target = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((s - target).abs() < 1e-10);
                }
            }
            let b: Vec<f64> = (0..n).map(|i| i as f64 - 1.5).collect();
            let x = f.solve(&b);
            let r = mat_vec(&a, n, &x);
            for i in 0..n {
                prop_assert!((r[i] - b[i]).abs() < 1e-10);
            }
        }

        #[test]
        fn min_degree_is_a_permutation(n in 1usize..20, edges in proptest::collection::vec((0usize..20, 0usize..20), 0..40)) {
            let mut adj = vec![Vec::new(); n];
            for (a, b) in edges {
                if a < n && b < n && a != b {
                    adj[a].push(b);
                    adj[b].push(a);
                }
            }
            let mut order = minimum_degree_order(&adj);
            order.sort();
            prop_assert_eq!(order, (0..n).collect::<Vec<_>>());
        }
    }
}
