use std::collections::BTreeMap;

use super::{VertexClass, WeightedGraph};
use crate::error::{invalid, Result};

/// Sites `i` in `(2m+1)Z` with `|i| <= n - m - 2`, in increasing order.
pub fn toy_eligible_sites(n: i64, m: i64) -> Vec<i64> {
    let period = 2 * m + 1;
    let reach = n - m - 2;
    if reach < 0 {
        return Vec::new();
    }
    (-reach..=reach).filter(|i| i.rem_euclid(period) == 0).collect()
}

/// Path `[-n, n]` with conductance `epsilon` on every edge, both ends tied to
/// a cemetery by `epsilon`, and extra edges `(i, cemetery)` of weight
/// `side_weights[i]` at the eligible sites.
pub fn build_toy_graph(
    n: i64,
    m: i64,
    epsilon: f64,
    side_weights: &BTreeMap<i64, f64>,
) -> Result<WeightedGraph> {
    if n < 0 || m < 0 {
        return invalid("n and m must be >= 0");
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return invalid(format!("epsilon must be positive, got {epsilon}"));
    }
    let eligible = toy_eligible_sites(n, m);
    for (&i, &w) in side_weights {
        if eligible.binary_search(&i).is_err() {
            return invalid(format!("side weight at ineligible site {i}"));
        }
        if !(w > 0.0) || !w.is_finite() {
            return invalid(format!("side weight at {i} must be positive, got {w}"));
        }
    }
    if let Some(i) = eligible.iter().find(|i| !side_weights.contains_key(i)) {
        return invalid(format!("missing side weight at eligible site {i}"));
    }

    let mut g = WeightedGraph::new();
    for i in -n..=n {
        g.add_lattice_vertex(VertexClass::Plain, vec![i])?;
    }
    let star = g.add_vertex(VertexClass::Cemetery, 0.0)?;
    let at = |i: i64| (i + n) as usize;
    for i in -n..n {
        g.add_conductance(at(i), at(i + 1), epsilon)?;
    }
    g.add_conductance(at(-n), star, epsilon)?;
    g.add_conductance(at(n), star, epsilon)?;
    for (&i, &w) in side_weights {
        g.add_conductance(at(i), star, w)?;
    }
    g.set_root(Some(at(0)))?;
    Ok(g)
}

/// Chain `0 - 1 - ... - ell - cemetery` with conductance `epsilon` along the
/// chain and `eta0` on the last edge. Root is vertex 0.
pub fn build_toy_chain(ell: usize, epsilon: f64, eta0: f64) -> Result<WeightedGraph> {
    if !(epsilon > 0.0) || !(eta0 > 0.0) || !epsilon.is_finite() || !eta0.is_finite() {
        return invalid("chain conductances must be positive");
    }
    let mut g = WeightedGraph::new();
    for i in 0..=ell {
        g.add_lattice_vertex(VertexClass::Plain, vec![i as i64])?;
    }
    let star = g.add_vertex(VertexClass::Cemetery, 0.0)?;
    for i in 0..ell {
        g.add_conductance(i, i + 1, epsilon)?;
    }
    g.add_conductance(ell, star, eta0)?;
    g.set_root(Some(0))?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_path_has_no_side_edges() {
        let g = build_toy_graph(1, 0, 1.0, &BTreeMap::new()).unwrap();
        assert_eq!(g.num_vertices(), 4);
        let star = g.cemetery().unwrap();
        assert_eq!(g.conductance(0, star), 1.0);
        assert_eq!(g.conductance(2, star), 1.0);
        assert_eq!(g.conductance(1, star), 0.0);
        assert_eq!(g.conductance(0, 1), 1.0);
        assert_eq!(g.root(), Some(1));
    }

    #[test]
    fn single_eligible_site() {
        assert_eq!(toy_eligible_sites(4, 1), vec![0]);
        let w = BTreeMap::from([(0, 2.0)]);
        let g = build_toy_graph(4, 1, 0.5, &w).unwrap();
        let star = g.cemetery().unwrap();
        let zero = g.vertex_at(&[0]).unwrap();
        assert_eq!(g.conductance(zero, star), 2.0);
        let side_edges = (0..star).filter(|&v| g.conductance(v, star) > 0.0).count();
        assert_eq!(side_edges, 3);
    }

    #[test]
    fn three_eligible_sites() {
        // brute force over [-4, 4]
        let brute: Vec<i64> = (-4..=4).filter(|i: &i64| i % 3 == 0).collect();
        assert_eq!(toy_eligible_sites(7, 1), brute);
        assert_eq!(brute, vec![-3, 0, 3]);
        let w = BTreeMap::from([(-3, 1.0), (0, 1.5), (3, 2.0)]);
        let g = build_toy_graph(7, 1, 1.0, &w).unwrap();
        let star = g.cemetery().unwrap();
        let blue = [-3i64, 0, 3]
            .iter()
            .filter(|&&i| g.conductance(g.vertex_at(&[i]).unwrap(), star) > 0.0)
            .count();
        assert_eq!(blue, 3);
    }

    #[test]
    fn rejects_ineligible_and_missing_keys() {
        assert!(build_toy_graph(4, 1, 0.5, &BTreeMap::from([(1, 2.0)])).is_err());
        assert!(build_toy_graph(4, 1, 0.5, &BTreeMap::from([(0, 2.0), (3, 1.0)])).is_err());
        assert!(build_toy_graph(4, 1, 0.5, &BTreeMap::new()).is_err());
    }

    #[test]
    fn zero_length_toy_ties_vertex_twice() {
        let g = build_toy_graph(0, 0, 0.5, &BTreeMap::new()).unwrap();
        assert_eq!(g.conductance(0, 1), 1.0);
    }

    #[test]
    fn chain_layout() {
        let g = build_toy_chain(3, 0.5, 2.0).unwrap();
        assert_eq!(g.num_vertices(), 5);
        assert_eq!(g.conductance(2, 3), 0.5);
        assert_eq!(g.conductance(3, 4), 2.0);
        assert_eq!(g.conductance(0, 4), 0.0);
    }
}
