use std::collections::BTreeSet;

use super::{VertexClass, WeightedGraph};
use crate::error::{invalid, Result};

/// Merge every vertex of `contract` into a single cemetery appended last.
/// Parallel edges into the merged set are summed, edges inside it and the
/// boundary field on it are dropped. Coordinates and classes of the
/// remaining vertices are kept; the root is dropped if it gets contracted.
pub fn wire_boundary(g: &WeightedGraph, contract: &BTreeSet<usize>) -> Result<WeightedGraph> {
    let n = g.num_vertices();
    if contract.is_empty() {
        return invalid("contracted set must be nonempty");
    }
    if contract.len() >= n {
        return invalid("contracted set must not contain every vertex");
    }
    if let Some(&v) = contract.iter().find(|&&v| v >= n) {
        return invalid(format!("vertex {v} out of range"));
    }
    if let Some(c) = g.cemetery() {
        if !contract.contains(&c) {
            return invalid("existing cemetery must be part of the contracted set");
        }
    }

    let mut map = vec![usize::MAX; n];
    let mut out = WeightedGraph::new();
    for v in (0..n).filter(|v| !contract.contains(v)) {
        let nv = out.add_vertex(g.class(v), g.eta(v))?;
        out.set_coords(nv, g.coords(v).map(<[i64]>::to_vec))?;
        map[v] = nv;
    }
    let star = out.add_vertex(VertexClass::Cemetery, 0.0)?;
    for v in contract {
        map[*v] = star;
    }
    for (u, v, c) in g.edges() {
        let (a, b) = (map[u], map[v]);
        if a == star && b == star {
            continue;
        }
        out.add_conductance(a, b, c)?;
    }
    let root = g.root().filter(|r| !contract.contains(r)).map(|r| map[r]);
    out.set_root(root)?;
    Ok(out)
}

/// Parameters for duplicating a line of vertices `u_0, ..., u_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct LineDuplication {
    /// The line, in order along its axis.
    pub line: Vec<usize>,
    /// New conductance of `(u_i, u_{i+1})`; must not exceed the old one.
    pub line_conductance: f64,
    /// Conductance of `(u'_i, u'_{i+1})` on the copy.
    pub copy_conductance: f64,
    /// Amount of cemetery conductance moved from each line endpoint to its
    /// copy.
    pub endpoint_share: f64,
    /// Move the root from `u_i` to `u'_i` when the root lies on the line.
    pub root_on_copy: bool,
}

/// One monotone surgery step between comparison graphs.
#[derive(Clone, Debug, PartialEq)]
pub enum ComparisonStep {
    RemoveEdges(Vec<(usize, usize)>),
    DuplicateLine(LineDuplication),
    /// `(u, v, new_conductance)`; the new value must not exceed the old one.
    LowerWeights(Vec<(usize, usize, f64)>),
}

/// Apply one comparison step. Only removals, lowerings and the line
/// duplication (whose cross edges have unit conductance) are accepted.
pub fn transform_comparison_step(g: &WeightedGraph, step: &ComparisonStep) -> Result<WeightedGraph> {
    match step {
        ComparisonStep::RemoveEdges(edges) => {
            let mut out = g.clone();
            for &(u, v) in edges {
                if u >= g.num_vertices() || v >= g.num_vertices() {
                    return invalid(format!("edge ({u},{v}) out of range"));
                }
                out.set_conductance(u, v, 0.0)?;
            }
            Ok(out)
        }
        ComparisonStep::LowerWeights(changes) => {
            let mut out = g.clone();
            for &(u, v, c) in changes {
                if u >= g.num_vertices() || v >= g.num_vertices() {
                    return invalid(format!("edge ({u},{v}) out of range"));
                }
                let old = g.conductance(u, v);
                if c > old {
                    return invalid(format!("refusing to raise conductance of ({u},{v}) from {old} to {c}"));
                }
                out.set_conductance(u, v, c)?;
            }
            Ok(out)
        }
        ComparisonStep::DuplicateLine(dup) => duplicate_line(g, dup),
    }
}

fn duplicate_line(g: &WeightedGraph, dup: &LineDuplication) -> Result<WeightedGraph> {
    let n = g.num_vertices();
    let line = &dup.line;
    if line.is_empty() {
        return invalid("line must be nonempty");
    }
    let distinct: BTreeSet<usize> = line.iter().copied().collect();
    if distinct.len() != line.len() {
        return invalid("line vertices must be distinct");
    }
    for &u in line {
        if u >= n || g.is_absorbing(u) {
            return invalid(format!("line vertex {u} must be a free vertex"));
        }
    }
    for c in [dup.line_conductance, dup.copy_conductance, dup.endpoint_share] {
        if !(c >= 0.0) || !c.is_finite() {
            return invalid("duplication conductances must be finite and >= 0");
        }
    }
    for w in line.windows(2) {
        let old = g.conductance(w[0], w[1]);
        if dup.line_conductance > old {
            return invalid(format!(
                "refusing to raise line conductance of ({},{}) from {old} to {}",
                w[0], w[1], dup.line_conductance
            ));
        }
    }
    let star = g.cemetery();
    let ends: BTreeSet<usize> = [line[0], line[line.len() - 1]].into_iter().collect();
    if dup.endpoint_share > 0.0 {
        let Some(star) = star else {
            return invalid("endpoint share requires a cemetery");
        };
        for &e in &ends {
            if g.conductance(e, star) < dup.endpoint_share {
                return invalid(format!("endpoint {e} has less cemetery conductance than the share"));
            }
        }
    }

    // Layout: old free vertices, then the copies in line order, then the
    // old absorbing vertices.
    let free: Vec<usize> = (0..n).filter(|&v| !g.is_absorbing(v)).collect();
    let absorbing: Vec<usize> = (0..n).filter(|&v| g.is_absorbing(v)).collect();
    let mut map = vec![0usize; n];
    let mut out = WeightedGraph::new();
    for &v in &free {
        map[v] = out.add_vertex(g.class(v), g.eta(v))?;
        out.set_coords(map[v], g.coords(v).map(<[i64]>::to_vec))?;
    }
    let copies: Vec<usize> = line
        .iter()
        .map(|&u| out.add_vertex(g.class(u), 0.0))
        .collect::<Result<_>>()?;
    for &v in &absorbing {
        map[v] = out.add_vertex(g.class(v), g.eta(v))?;
        out.set_coords(map[v], g.coords(v).map(<[i64]>::to_vec))?;
    }
    for (u, v, c) in g.edges() {
        out.add_conductance(map[u], map[v], c)?;
    }
    for w in line.windows(2) {
        out.set_conductance(map[w[0]], map[w[1]], dup.line_conductance)?;
    }
    for w in copies.windows(2) {
        out.add_conductance(w[0], w[1], dup.copy_conductance)?;
    }
    for (&u, &c) in line.iter().zip(&copies) {
        out.add_conductance(map[u], c, 1.0)?;
    }
    if let (Some(star), true) = (star, dup.endpoint_share > 0.0) {
        for (k, &u) in line.iter().enumerate() {
            if ends.contains(&u) {
                let old = g.conductance(u, star);
                out.set_conductance(map[u], map[star], old - dup.endpoint_share)?;
                out.add_conductance(copies[k], map[star], dup.endpoint_share)?;
            }
        }
    }
    let root = match g.root() {
        Some(r) => match line.iter().position(|&u| u == r) {
            Some(k) if dup.root_on_copy => Some(copies[k]),
            _ => Some(map[r]),
        },
        None => None,
    };
    out.set_root(root)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_box_lattice;

    fn triangle() -> WeightedGraph {
        let mut g = WeightedGraph::new();
        for _ in 0..3 {
            g.add_vertex(VertexClass::Plain, 0.0).unwrap();
        }
        g.add_conductance(0, 1, 1.0).unwrap();
        g.add_conductance(1, 2, 1.0).unwrap();
        g.add_conductance(0, 2, 1.0).unwrap();
        g
    }

    #[test]
    fn triangle_contraction_sums_parallel_edges() {
        let g = wire_boundary(&triangle(), &BTreeSet::from([1, 2])).unwrap();
        assert_eq!(g.num_vertices(), 2);
        assert_eq!(g.conductance(0, 1), 2.0);
        assert_eq!(g.class(1), VertexClass::Cemetery);
    }

    #[test]
    fn single_vertex_contraction_is_relabeling() {
        let g = triangle();
        let w = wire_boundary(&g, &BTreeSet::from([2])).unwrap();
        assert_eq!(w.num_vertices(), 3);
        for (u, v, c) in g.edges() {
            assert_eq!(w.conductance(u, v), c);
        }
    }

    #[test]
    fn outer_shell_contraction_reproduces_box() {
        for (d, n) in [(1, 2), (2, 1), (2, 2), (3, 1)] {
            let big = build_box_lattice(d, n + 1, 0.7).unwrap();
            let shell: BTreeSet<usize> = (0..big.num_vertices())
                .filter(|&v| match big.coords(v) {
                    Some(x) => x.iter().any(|c| c.abs() == n + 1),
                    None => true,
                })
                .collect();
            let wired = wire_boundary(&big, &shell).unwrap();
            assert_eq!(wired, build_box_lattice(d, n, 0.7).unwrap(), "d={d} n={n}");
        }
    }

    #[test]
    fn contraction_rejects_bad_sets() {
        let g = triangle();
        assert!(wire_boundary(&g, &BTreeSet::new()).is_err());
        assert!(wire_boundary(&g, &BTreeSet::from([0, 1, 2])).is_err());
    }

    #[test]
    fn empty_removal_is_identity() {
        let g = build_box_lattice(2, 1, 1.0).unwrap();
        let h = transform_comparison_step(&g, &ComparisonStep::RemoveEdges(vec![])).unwrap();
        assert_eq!(g, h);
    }

    #[test]
    fn raising_is_rejected() {
        let g = triangle();
        assert!(transform_comparison_step(&g, &ComparisonStep::LowerWeights(vec![(0, 1, 2.0)])).is_err());
        let h = transform_comparison_step(&g, &ComparisonStep::LowerWeights(vec![(0, 1, 0.5)])).unwrap();
        assert_eq!(h.conductance(0, 1), 0.5);
    }

    #[test]
    fn duplicating_three_vertex_line() {
        let mut g = WeightedGraph::new();
        for _ in 0..3 {
            g.add_vertex(VertexClass::Interior, 0.0).unwrap();
        }
        let star = g.add_vertex(VertexClass::Cemetery, 0.0).unwrap();
        g.add_conductance(0, 1, 2.0).unwrap();
        g.add_conductance(1, 2, 2.0).unwrap();
        g.add_conductance(0, star, 2.0).unwrap();
        g.add_conductance(2, star, 2.0).unwrap();
        g.set_root(Some(1)).unwrap();
        let dup = LineDuplication {
            line: vec![0, 1, 2],
            line_conductance: 1.5,
            copy_conductance: 0.5,
            endpoint_share: 0.5,
            root_on_copy: true,
        };
        let h = transform_comparison_step(&g, &ComparisonStep::DuplicateLine(dup)).unwrap();
        assert_eq!(h.num_vertices(), 7);
        let star = h.cemetery().unwrap();
        assert_eq!(star, 6);
        let crosses = (0..3).filter(|&i| h.conductance(i, i + 3) == 1.0).count();
        assert_eq!(crosses, 3);
        assert_eq!(h.conductance(0, 1), 1.5);
        assert_eq!(h.conductance(3, 4), 0.5);
        assert_eq!(h.conductance(0, star), 1.5);
        assert_eq!(h.conductance(3, star), 0.5);
        assert_eq!(h.root(), Some(4));
        assert!(h.invariant_violation().is_none());
    }

    #[test]
    fn duplication_refuses_raising_line() {
        let g = triangle();
        let dup = LineDuplication {
            line: vec![0, 1],
            line_conductance: 3.0,
            copy_conductance: 1.0,
            endpoint_share: 0.0,
            root_on_copy: false,
        };
        assert!(transform_comparison_step(&g, &ComparisonStep::DuplicateLine(dup)).is_err());
    }
}
