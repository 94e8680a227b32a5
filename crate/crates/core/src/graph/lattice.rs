use super::{VertexClass, WeightedGraph};
use crate::error::{invalid, Result};

/// Treatment of the lateral faces of a half-space box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SideBoundary {
    /// Lateral exits are wired to the `side` absorbing vertex.
    Wired,
    /// Lateral edges are dropped; the box is a finite piece of an infinite
    /// strip and the `side` vertex stays edge-less.
    Free,
}

/// Odometer over a product of integer ranges, first coordinate slowest.
fn lexicographic(ranges: &[(i64, i64)]) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    if ranges.iter().any(|&(lo, hi)| lo > hi) {
        return out;
    }
    let mut cur: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    loop {
        out.push(cur.clone());
        let mut i = ranges.len();
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < ranges[i].1 {
                cur[i] += 1;
                for (j, c) in cur.iter_mut().enumerate().skip(i + 1) {
                    *c = ranges[j].0;
                }
                break;
            }
        }
    }
}

/// The box `[-n, n]^d` with its outer boundary wired into one cemetery.
pub fn build_box_lattice(d: usize, n: i64, w: f64) -> Result<WeightedGraph> {
    if d == 0 {
        return invalid("dimension must be >= 1");
    }
    if n < 0 {
        return invalid("radius must be >= 0");
    }
    if !(w > 0.0) || !w.is_finite() {
        return invalid(format!("conductance must be positive, got {w}"));
    }
    let ranges = vec![(-n, n); d];
    let mut g = WeightedGraph::new();
    for x in lexicographic(&ranges) {
        g.add_lattice_vertex(VertexClass::Interior, x)?;
    }
    let star = g.add_vertex(VertexClass::Cemetery, 0.0)?;
    for v in 0..star {
        let x = g.coords(v).expect("lattice vertex").to_vec();
        for axis in 0..d {
            for step in [-1i64, 1] {
                let mut y = x.clone();
                y[axis] += step;
                match g.vertex_at(&y) {
                    Some(u) if step > 0 => g.add_conductance(v, u, w)?,
                    Some(_) => {}
                    None => g.add_conductance(v, star, w)?,
                }
            }
        }
    }
    let origin = g.vertex_at(&vec![0; d]).expect("origin present");
    g.set_root(Some(origin))?;
    Ok(g)
}

/// Half-space box `{0 <= x_d <= n-1, |x_i| <= m-1}` with the top exits wired
/// into a `top` vertex and the lateral exits wired into a `side` vertex.
pub fn build_halfspace_box(d: usize, n: i64, m: i64, w: f64) -> Result<WeightedGraph> {
    build_halfspace_strip(d, n, m, w, SideBoundary::Wired)
}

/// Half-space box with a configurable lateral boundary. Exits below level 0
/// do not exist (the half-space has no vertices there).
pub fn build_halfspace_strip(
    d: usize,
    n: i64,
    m: i64,
    w: f64,
    side: SideBoundary,
) -> Result<WeightedGraph> {
    if d == 0 {
        return invalid("dimension must be >= 1");
    }
    if n < 1 || m < 1 {
        return invalid(format!("half-space box needs n >= 1 and m >= 1, got n={n}, m={m}"));
    }
    if !(w > 0.0) || !w.is_finite() {
        return invalid(format!("conductance must be positive, got {w}"));
    }
    let mut ranges = vec![(-(m - 1), m - 1); d - 1];
    ranges.push((0, n - 1));
    let mut g = WeightedGraph::new();
    for x in lexicographic(&ranges) {
        g.add_lattice_vertex(VertexClass::Interior, x)?;
    }
    let top = g.add_vertex(VertexClass::Top, 0.0)?;
    let side_v = g.add_vertex(VertexClass::Side, 0.0)?;
    for v in 0..top {
        let x = g.coords(v).expect("lattice vertex").to_vec();
        for axis in 0..d {
            for step in [-1i64, 1] {
                let mut y = x.clone();
                y[axis] += step;
                match g.vertex_at(&y) {
                    Some(u) if step > 0 => g.add_conductance(v, u, w)?,
                    Some(_) => {}
                    None if axis == d - 1 => {
                        if step > 0 {
                            g.add_conductance(v, top, w)?;
                        }
                    }
                    None => {
                        if side == SideBoundary::Wired {
                            g.add_conductance(v, side_v, w)?;
                        }
                    }
                }
            }
        }
    }
    let origin = g.vertex_at(&vec![0; d]).expect("origin present");
    g.set_root(Some(origin))?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_point_box() {
        let g = build_box_lattice(1, 0, 2.0).unwrap();
        assert_eq!(g.num_vertices(), 2);
        assert_eq!(g.conductance(0, 1), 4.0);
        assert_eq!(g.class(1), VertexClass::Cemetery);
        assert_eq!(g.root(), Some(0));
    }

    #[test]
    fn square_box_corner_and_edge_conductances() {
        let g = build_box_lattice(2, 1, 1.0).unwrap();
        assert_eq!(g.num_vertices(), 10);
        let star = g.cemetery().unwrap();
        assert_eq!(star, 9);
        let corner = g.vertex_at(&[1, 1]).unwrap();
        let mid = g.vertex_at(&[0, 1]).unwrap();
        let centre = g.vertex_at(&[0, 0]).unwrap();
        assert_eq!(g.conductance(corner, star), 2.0);
        assert_eq!(g.conductance(mid, star), 1.0);
        assert_eq!(g.conductance(centre, star), 0.0);
        assert_eq!(g.root(), Some(centre));
    }

    #[test]
    fn cube_wired_mass_matches_enumerated_boundary_edges() {
        let g = build_box_lattice(3, 2, 0.5).unwrap();
        assert_eq!(g.num_vertices(), 126);
        // brute force: count lattice edges leaving [-2,2]^3
        let mut count = 0;
        for x in -2i64..=2 {
            for y in -2i64..=2 {
                for z in -2i64..=2 {
                    for (dx, dy, dz) in [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)] {
                        let (a, b, c) = (x + dx, y + dy, z + dz);
                        if a.abs() > 2 || b.abs() > 2 || c.abs() > 2 {
                            count += 1;
                        }
                    }
                }
            }
        }
        assert_eq!(count, 150);
        let star = g.cemetery().unwrap();
        let total: f64 = g.neighbors(star).map(|(_, c)| c).sum();
        assert!((total - 0.5 * count as f64).abs() < 1e-12);
    }

    #[test]
    fn halfspace_column_in_one_dimension() {
        let g = build_halfspace_box(1, 2, 1, 1.0).unwrap();
        let top = g.vertices_of_class(VertexClass::Top)[0];
        let side = g.vertices_of_class(VertexClass::Side)[0];
        assert_eq!(g.conductance(0, 1), 1.0);
        assert_eq!(g.conductance(1, top), 1.0);
        assert_eq!(g.conductance(0, top), 0.0);
        assert_eq!(g.neighbors(side).count(), 0);
    }

    #[test]
    fn halfspace_strip_boundary_split() {
        let g = build_halfspace_box(2, 2, 2, 1.0).unwrap();
        assert_eq!(g.free_vertices().len(), 6);
        let top = g.vertices_of_class(VertexClass::Top)[0];
        let side = g.vertices_of_class(VertexClass::Side)[0];
        assert_eq!(g.neighbors(top).count(), 3);
        let top_mass: f64 = g.neighbors(top).map(|(_, c)| c).sum();
        assert_eq!(top_mass, 3.0);
        // brute force lateral exits: x1 in {-1,0,1}, x2 in {0,1}; step in x1 leaves when |x1+s|>1
        let mut lateral = 0;
        for x1 in -1i64..=1 {
            for _x2 in 0..2 {
                for s in [-1i64, 1] {
                    if (x1 + s).abs() > 1 {
                        lateral += 1;
                    }
                }
            }
        }
        let side_mass: f64 = g.neighbors(side).map(|(_, c)| c).sum();
        assert_eq!(side_mass, lateral as f64);
    }

    #[test]
    fn single_cell_column_conductances() {
        let g = build_halfspace_box(2, 1, 1, 1.5).unwrap();
        let top = g.vertices_of_class(VertexClass::Top)[0];
        let side = g.vertices_of_class(VertexClass::Side)[0];
        assert_eq!(g.conductance(0, top), 1.5);
        assert_eq!(g.conductance(0, side), 3.0);
    }

    #[test]
    fn free_side_strip_has_edgeless_side() {
        let g = build_halfspace_strip(2, 3, 2, 1.0, SideBoundary::Free).unwrap();
        let side = g.vertices_of_class(VertexClass::Side)[0];
        assert_eq!(g.neighbors(side).count(), 0);
    }

    #[test]
    fn rejects_nonpositive_conductance() {
        assert!(build_box_lattice(2, 1, 0.0).is_err());
        assert!(build_box_lattice(2, 1, -1.0).is_err());
        assert!(build_halfspace_box(2, 0, 1, 1.0).is_err());
    }

    #[test]
    fn builders_are_deterministic() {
        assert_eq!(build_box_lattice(2, 2, 0.7).unwrap(), build_box_lattice(2, 2, 0.7).unwrap());
    }
}
