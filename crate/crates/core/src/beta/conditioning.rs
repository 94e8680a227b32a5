use super::{dense_conductances, schrodinger_block};
use crate::error::{invalid, Result};
use crate::graph::{VertexClass, WeightedGraph};
use crate::linalg::cholesky;

/// Law of the potential on `support` given its values elsewhere: effective
/// conductances (with diagonal self-terms) and boundary field.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalSpec {
    /// Graph vertices of the unsampled remainder, increasing.
    pub support: Vec<usize>,
    /// Row-major `|support|^2` effective conductances.
    pub w_check: Vec<f64>,
    pub eta_check: Vec<f64>,
}

impl ConditionalSpec {
    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn w(&self, a: usize, b: usize) -> f64 {
        self.w_check[a * self.len() + b]
    }

    /// The conditional law as a stand-alone graph on `support` (same order),
    /// carrying classes and coordinates of the original vertices.
    pub fn to_graph(&self, g: &WeightedGraph) -> Result<WeightedGraph> {
        let n = self.len();
        let mut out = WeightedGraph::new();
        for (i, &v) in self.support.iter().enumerate() {
            let class = match g.class(v) {
                VertexClass::Interior => VertexClass::Interior,
                _ => VertexClass::Plain,
            };
            let nv = out.add_vertex(class, self.eta_check[i].max(0.0))?;
            out.set_coords(nv, g.coords(v).map(<[i64]>::to_vec))?;
        }
        for a in 0..n {
            for b in a..n {
                let c = self.w_check[a * n + b];
                if c > 0.0 {
                    out.add_conductance(a, b, c)?;
                }
            }
        }
        let root = g.root().and_then(|r| self.support.iter().position(|&v| v == r));
        out.set_root(root)?;
        Ok(out)
    }
}

/// Restriction of the law to the free vertices `subset`: the returned graph
/// has the vertices of `subset` (sorted, in that order), their mutual
/// conductances, and boundary field `eta + W(u, outside)`.
pub fn marginal_params(g: &WeightedGraph, subset: &[usize]) -> Result<WeightedGraph> {
    let mut u: Vec<usize> = subset.to_vec();
    u.sort_unstable();
    u.dedup();
    if u.is_empty() {
        return invalid("marginal subset must be nonempty");
    }
    let n = g.num_vertices();
    let mut pos = vec![usize::MAX; n];
    for (i, &v) in u.iter().enumerate() {
        if v >= n || g.is_absorbing(v) {
            return invalid(format!("vertex {v} is not a free vertex"));
        }
        pos[v] = i;
    }
    let mut out = WeightedGraph::new();
    for &v in &u {
        let outside: f64 = g
            .neighbors(v)
            .filter(|&(y, _)| y != v && pos[y] == usize::MAX)
            .map(|(_, c)| c)
            .sum();
        let nv = out.add_vertex(g.class(v), g.eta(v) + outside)?;
        out.set_coords(nv, g.coords(v).map(<[i64]>::to_vec))?;
    }
    for (a, b, c) in g.edges() {
        if pos[a] != usize::MAX && pos[b] != usize::MAX {
            out.add_conductance(pos[a], pos[b], c)?;
        }
    }
    out.set_root(g.root().filter(|&r| pos[r] != usize::MAX).map(|r| pos[r]))?;
    Ok(out)
}

/// Conditional parameters of the free vertices outside `sampled` given the
/// potential values `beta` on `sampled` (entries of `beta` elsewhere are
/// ignored): a Schur complement through `diag(beta) - W` on the sampled block.
pub fn condition_params(g: &WeightedGraph, sampled: &[usize], beta: &[f64]) -> Result<ConditionalSpec> {
    let n = g.num_vertices();
    let mut is_sampled = vec![false; n];
    for &v in sampled {
        if v >= n || g.is_absorbing(v) {
            return invalid(format!("sampled vertex {v} is not a free vertex"));
        }
        is_sampled[v] = true;
    }
    let mut u: Vec<usize> = (0..n).filter(|&v| is_sampled[v]).collect();
    u.dedup();
    let support: Vec<usize> = (0..n).filter(|&v| !is_sampled[v] && !g.is_absorbing(v)).collect();
    let eta_all = g.boundary_field();
    let s = support.len();
    let mut w_check = dense_conductances(g, &support);
    let mut eta_check: Vec<f64> = support.iter().map(|&v| eta_all[v]).collect();
    if u.is_empty() || s == 0 {
        return Ok(ConditionalSpec { support, w_check, eta_check });
    }

    let k = u.len();
    let h = schrodinger_block(g, beta, &u);
    let f = cholesky(&h, k, &u)?;
    let mut pos_u = vec![usize::MAX; n];
    for (i, &v) in u.iter().enumerate() {
        pos_u[v] = i;
    }
    // columns W_{U, x} for x in support
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(s);
    for &x in &support {
        let mut col = vec![0.0; k];
        for (y, c) in g.neighbors(x) {
            if pos_u[y] != usize::MAX {
                col[pos_u[y]] = c;
            }
        }
        cols.push(col);
    }
    let eta_u: Vec<f64> = u.iter().map(|&v| eta_all[v]).collect();
    let solved: Vec<Option<Vec<f64>>> = cols
        .iter()
        .map(|c| if c.iter().all(|&x| x == 0.0) { None } else { Some(f.solve(c)) })
        .collect();
    for a in 0..s {
        let Some(ga) = &solved[a] else { continue };
        eta_check[a] += ga.iter().zip(&eta_u).map(|(p, q)| p * q).sum::<f64>();
        for b in a..s {
            if solved[b].is_none() {
                continue;
            }
            let v: f64 = ga.iter().zip(&cols[b]).map(|(p, q)| p * q).sum();
            w_check[a * s + b] += v;
            if a != b {
                w_check[b * s + a] += v;
            }
        }
    }
    Ok(ConditionalSpec { support, w_check, eta_check })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_box_lattice;

    fn edge(w: f64, e0: f64, e1: f64) -> WeightedGraph {
        let mut g = WeightedGraph::new();
        g.add_vertex(VertexClass::Plain, e0).unwrap();
        g.add_vertex(VertexClass::Plain, e1).unwrap();
        g.add_conductance(0, 1, w).unwrap();
        g
    }

    #[test]
    fn full_marginal_is_identity() {
        let g = build_box_lattice(2, 1, 1.0).unwrap();
        let m = marginal_params(&g, &g.free_vertices()).unwrap();
        let eta = g.boundary_field();
        for v in 0..m.num_vertices() {
            assert_eq!(m.eta(v), eta[v]);
            for u in 0..m.num_vertices() {
                assert_eq!(m.conductance(u, v), g.conductance(u, v));
            }
        }
    }

    #[test]
    fn one_vertex_marginal_of_an_edge() {
        let m = marginal_params(&edge(1.7, 0.0, 0.0), &[1]).unwrap();
        assert_eq!(m.num_vertices(), 1);
        assert_eq!(m.eta(0), 1.7);
    }

    #[test]
    fn marginal_shell_field_is_cemetery_conductance() {
        let g = build_box_lattice(2, 2, 0.6).unwrap();
        let star = g.cemetery().unwrap();
        let m = marginal_params(&g, &g.free_vertices()).unwrap();
        for v in 0..m.num_vertices() {
            assert_eq!(m.eta(v), g.conductance(v, star));
        }
    }

    #[test]
    fn empty_conditioning_is_identity() {
        let g = edge(2.0, 0.3, 0.4);
        let spec = condition_params(&g, &[], &[f64::NAN; 2]).unwrap();
        assert_eq!(spec.support, vec![0, 1]);
        assert_eq!(spec.w_check, vec![0.0, 2.0, 2.0, 0.0]);
        assert_eq!(spec.eta_check, vec![0.3, 0.4]);
    }

    #[test]
    fn scalar_schur_complement_by_hand() {
        let (w, e0, e1, b0) = (1.5, 0.7, 0.2, 3.0);
        let g = edge(w, e0, e1);
        let spec = condition_params(&g, &[0], &[b0, f64::NAN]).unwrap();
        assert_eq!(spec.support, vec![1]);
        assert!((spec.w_check[0] - w * w / b0).abs() < 1e-15);
        assert!((spec.eta_check[0] - (e1 + w * e0 / b0)).abs() < 1e-15);
    }

    #[test]
    fn degenerate_block_is_reported() {
        let mut g = edge(2.0, 0.0, 0.0);
        let v = g.add_vertex(VertexClass::Plain, 1.0).unwrap();
        g.add_conductance(1, v, 1.0).unwrap();
        assert!(condition_params(&g, &[0, 1], &[1.0, 1.0, f64::NAN]).is_err());
    }
}
