//! Solves with `H = diag(beta) - W`: Green functions, the partition
//! function `psi` (equal to 1 off the region, harmonic for `H` inside), exit
//! masses split by boundary class, and a truncated path-sum oracle.
//!
//! Paths are weighted start-inclusively: a path `x_0, ..., x_k` leaving the
//! region at step `k` carries `prod_{i<k} W(x_i, x_{i+1}) / beta(x_i)`.

use std::collections::BTreeMap;

use crate::beta::{dense_conductances, schrodinger_block};
use crate::error::{invalid, Error, Result};
use crate::graph::{VertexClass, WeightedGraph};
use crate::linalg::{cholesky, mat_vec, perron_upper_bound, SpdFactor};

/// Relative agreement demanded between `psi` by solve and by `G * eta`.
pub const SOLVE_TOLERANCE: f64 = 1e-10;

/// Result of a positive-definite solve on a region.
#[derive(Clone, Debug)]
pub struct PolymerSolve {
    /// Region vertices (graph ids, increasing).
    pub region: Vec<usize>,
    /// Row-major inverse of `H` restricted to the region.
    pub green: Vec<f64>,
    /// Indexed by graph vertex; 1 off the region.
    pub psi: Vec<f64>,
    /// Exit mass from the root split by the class of the exit vertex.
    /// Explicit boundary field counts as `cemetery`. Empty when the root is
    /// missing or outside the region.
    pub boundary_mass: BTreeMap<VertexClass, f64>,
    /// `max |H psi - eta_hat|` over the region.
    pub residual: f64,
}

impl PolymerSolve {
    pub fn green_entry(&self, x: usize, y: usize) -> Option<f64> {
        let i = self.region.binary_search(&x).ok()?;
        let j = self.region.binary_search(&y).ok()?;
        Some(self.green[i * self.region.len() + j])
    }
}

fn normalize_region(g: &WeightedGraph, region: &[usize]) -> Result<Vec<usize>> {
    let mut u = region.to_vec();
    u.sort_unstable();
    u.dedup();
    for &v in &u {
        if v >= g.num_vertices() || g.is_absorbing(v) {
            return invalid(format!("region vertex {v} is not a free vertex"));
        }
    }
    Ok(u)
}

/// Per-region exit field: for each region vertex, the conductance leaving
/// the region, optionally filtered by the class of the exit vertex.
pub(crate) fn exit_field(g: &WeightedGraph, region: &[usize], class: Option<VertexClass>) -> Vec<f64> {
    let mut inside = vec![false; g.num_vertices()];
    for &v in region {
        inside[v] = true;
    }
    region
        .iter()
        .map(|&v| {
            let explicit = match class {
                None | Some(VertexClass::Cemetery) => g.eta(v),
                _ => 0.0,
            };
            explicit
                + g.neighbors(v)
                    .filter(|&(y, _)| y != v && !inside[y] && class.is_none_or(|c| g.class(y) == c))
                    .map(|(_, c)| c)
                    .sum::<f64>()
        })
        .collect()
}

/// Factor `H` on a region.
pub fn factor_region(g: &WeightedGraph, beta: &[f64], region: &[usize]) -> Result<SpdFactor> {
    let h = schrodinger_block(g, beta, region);
    cholesky(&h, region.len(), region)
}

/// Inverse of `H` on `region` (row-major, region sorted increasing).
pub fn green(g: &WeightedGraph, beta: &[f64], region: &[usize]) -> Result<Vec<f64>> {
    let u = normalize_region(g, region)?;
    Ok(factor_region(g, beta, &u)?.inverse())
}

/// Full solve: Green matrix, `psi`, residual and the root's boundary split.
/// `psi` from the linear solve is cross-checked against `G * eta_hat`.
pub fn psi(g: &WeightedGraph, beta: &[f64], region: &[usize]) -> Result<PolymerSolve> {
    let u = normalize_region(g, region)?;
    let n = u.len();
    let mut out_psi = vec![1.0; g.num_vertices()];
    if n == 0 {
        return Ok(PolymerSolve {
            region: u,
            green: Vec::new(),
            psi: out_psi,
            boundary_mass: BTreeMap::new(),
            residual: 0.0,
        });
    }
    let h = schrodinger_block(g, beta, &u);
    let f = cholesky(&h, n, &u)?;
    let eta_hat = exit_field(g, &u, None);
    let mut x = f.solve(&eta_hat);
    let mut residual = max_residual(&h, n, &x, &eta_hat);
    if residual > SOLVE_TOLERANCE * max_abs(&eta_hat).max(f64::MIN_POSITIVE) {
        // one step of iterative refinement
        let r: Vec<f64> = mat_vec(&h, n, &x).iter().zip(&eta_hat).map(|(a, b)| b - a).collect();
        let dx = f.solve(&r);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
        residual = max_residual(&h, n, &x, &eta_hat);
    }
    let green = f.inverse();
    let via_green = mat_vec(&green, n, &eta_hat);
    for i in 0..n {
        let rel = (via_green[i] - x[i]).abs() / x[i].abs().max(f64::MIN_POSITIVE);
        if rel > SOLVE_TOLERANCE {
            return Err(Error::IdentityViolation {
                instance: format!("psi at vertex {} by solve vs green", u[i]),
                relative_error: rel,
                tolerance: SOLVE_TOLERANCE,
            });
        }
    }
    for (i, &v) in u.iter().enumerate() {
        out_psi[v] = x[i];
    }
    let boundary_mass = match g.root().and_then(|r| u.binary_search(&r).ok()) {
        Some(ri) => split_from_green_row(g, &u, &green[ri * n..(ri + 1) * n]),
        None => BTreeMap::new(),
    };
    Ok(PolymerSolve { region: u, green, psi: out_psi, boundary_mass, residual })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn max_residual(h: &[f64], n: usize, x: &[f64], b: &[f64]) -> f64 {
    mat_vec(h, n, x).iter().zip(b).fold(0.0f64, |m, (a, c)| m.max((a - c).abs()))
}

fn split_from_green_row(g: &WeightedGraph, region: &[usize], row: &[f64]) -> BTreeMap<VertexClass, f64> {
    let mut out = BTreeMap::new();
    let classes: Vec<VertexClass> = {
        let mut c: Vec<VertexClass> = region
            .iter()
            .flat_map(|&v| g.neighbors(v).map(|(y, _)| g.class(y)))
            .collect();
        c.push(VertexClass::Cemetery);
        c.sort();
        c.dedup();
        c
    };
    for class in classes {
        let field = exit_field(g, region, Some(class));
        let mass: f64 = row.iter().zip(&field).map(|(a, b)| a * b).sum();
        if field.iter().any(|&x| x > 0.0) || class.is_absorbing() {
            out.insert(class, mass);
        }
    }
    out
}

/// `psi(root)` only, from one factorization and one solve.
pub fn root_psi(g: &WeightedGraph, beta: &[f64], region: &[usize]) -> Result<f64> {
    let root = g.root().ok_or_else(|| Error::InvalidParameter("graph has no root".into()))?;
    let u = normalize_region(g, region)?;
    let Ok(ri) = u.binary_search(&root) else {
        return Ok(1.0);
    };
    let f = factor_region(g, beta, &u)?;
    let eta_hat = exit_field(g, &u, None);
    Ok(f.solve(&eta_hat)[ri])
}

/// `psi(root)` from a solve followed by one unconditional step of iterative
/// refinement.
pub fn root_psi_refined(g: &WeightedGraph, beta: &[f64], region: &[usize]) -> Result<f64> {
    let root = g.root().ok_or_else(|| Error::InvalidParameter("graph has no root".into()))?;
    let u = normalize_region(g, region)?;
    let Ok(ri) = u.binary_search(&root) else {
        return Ok(1.0);
    };
    let n = u.len();
    let h = schrodinger_block(g, beta, &u);
    let f = cholesky(&h, n, &u)?;
    let eta_hat = exit_field(g, &u, None);
    let mut x = f.solve(&eta_hat);
    let r: Vec<f64> = mat_vec(&h, n, &x).iter().zip(&eta_hat).map(|(a, b)| b - a).collect();
    let dx = f.solve(&r);
    for (xi, di) in x.iter_mut().zip(&dx) {
        *xi += di;
    }
    Ok(x[ri])
}

/// Exit mass from the root by class of the exit vertex (`top`, `side`,
/// `cemetery`, or a free class when the region is a proper subset). The
/// masses add up to `psi(root)`.
pub fn boundary_split(g: &WeightedGraph, beta: &[f64], region: &[usize]) -> Result<BTreeMap<VertexClass, f64>> {
    let root = g.root().ok_or_else(|| Error::InvalidParameter("graph has no root".into()))?;
    let u = normalize_region(g, region)?;
    let Ok(ri) = u.binary_search(&root) else {
        return invalid("root must lie in the region");
    };
    let f = factor_region(g, beta, &u)?;
    let mut e = vec![0.0; u.len()];
    e[ri] = 1.0;
    f.solve_in_place(&mut e);
    Ok(split_from_green_row(g, &u, &e))
}

/// What a truncated path sum targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathTarget {
    /// Any exit from the region (`psi`).
    Exit,
    /// Exits into vertices of one class.
    Class(VertexClass),
    /// The Green entry `G(x, y)` for `y` in the region.
    Vertex(usize),
}

/// Truncated path sum and a certified bound on the omitted tail.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathSum {
    pub value: f64,
    pub tail_bound: f64,
    /// Certified upper bound on the spectral radius of the transfer matrix.
    pub spectral_bound: f64,
}

/// Largest region accepted by [`path_sum_oracle`].
pub const PATH_ORACLE_MAX_REGION: usize = 12;

/// Sum over all paths of at most `lmax` edges from `x` to `target` that stay
/// in `region` before the last step. The region size is capped at
/// [`PATH_ORACLE_MAX_REGION`]; see [`path_sum_oracle_unguarded`].
pub fn path_sum_oracle(
    g: &WeightedGraph,
    beta: &[f64],
    region: &[usize],
    x: usize,
    target: PathTarget,
    lmax: usize,
) -> Result<PathSum> {
    if region.len() > PATH_ORACLE_MAX_REGION {
        return invalid(format!(
            "path oracle limited to {PATH_ORACLE_MAX_REGION} region vertices, got {}",
            region.len()
        ));
    }
    path_sum_oracle_unguarded(g, beta, region, x, target, lmax)
}

pub fn path_sum_oracle_unguarded(
    g: &WeightedGraph,
    beta: &[f64],
    region: &[usize],
    x: usize,
    target: PathTarget,
    lmax: usize,
) -> Result<PathSum> {
    let u = normalize_region(g, region)?;
    let n = u.len();
    let Ok(xi) = u.binary_search(&x) else {
        // already outside: the empty path
        let hit = match target {
            PathTarget::Exit => true,
            PathTarget::Class(c) => g.class(x) == c,
            PathTarget::Vertex(_) => false,
        };
        return Ok(PathSum { value: if hit { 1.0 } else { 0.0 }, tail_bound: 0.0, spectral_bound: 0.0 });
    };
    let w = dense_conductances(g, &u);
    let b: Vec<f64> = u.iter().map(|&v| beta[v]).collect();
    if b.iter().any(|&v| !(v > 0.0)) {
        return invalid("potential must be positive on the region");
    }
    // symmetric transfer D^{-1/2} W D^{-1/2}
    let mut s = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            s[i * n + j] = w[i * n + j] / (b[i] * b[j]).sqrt();
        }
    }
    let rho = perron_upper_bound(&s, n);
    if rho >= 1.0 - 1e-12 {
        return Err(Error::OracleInapplicable(rho));
    }
    // terminal vector and step count
    let (terminal, steps, scale) = match target {
        PathTarget::Exit | PathTarget::Class(_) => {
            let class = match target {
                PathTarget::Class(c) => Some(c),
                _ => None,
            };
            let field = exit_field(g, &u, class);
            let t: Vec<f64> = field.iter().zip(&b).map(|(e, bi)| e / bi).collect();
            let norm = t.iter().zip(&b).map(|(ti, bi)| ti * ti * bi).sum::<f64>().sqrt();
            // a path of length k + 1 makes k inner steps
            (t, lmax, norm / b[xi].sqrt())
        }
        PathTarget::Vertex(y) => {
            let Ok(yi) = u.binary_search(&y) else {
                return invalid(format!("target vertex {y} is not in the region"));
            };
            let mut t = vec![0.0; n];
            t[yi] = 1.0 / b[yi];
            (t, lmax + 1, 1.0 / (b[xi] * b[yi]).sqrt())
        }
    };
    // value = sum_{k < steps} (P^k t)(x), P = D^{-1} W
    let mut v = terminal.clone();
    let mut value = 0.0;
    for _ in 0..steps {
        value += v[xi];
        let next: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| w[i * n + j] * v[j]).sum::<f64>() / b[i])
            .collect();
        v = next;
    }
    let tail_bound = scale * rho.powi(steps as i32) / (1.0 - rho);
    Ok(PathSum { value, tail_bound, spectral_bound: rho })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_box_lattice, build_halfspace_box};

    #[test]
    fn scalar_green_and_wired_vertex() {
        let g = build_box_lattice(1, 0, 1.5).unwrap();
        let beta = [4.0, f64::NAN];
        let gr = green(&g, &beta, &[0]).unwrap();
        assert_eq!(gr, vec![0.25]);
        let s = psi(&g, &beta, &[0]).unwrap();
        assert!((s.psi[0] - 2.0 * 1.5 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn two_vertex_chain_green_by_hand() {
        let mut g = WeightedGraph::new();
        g.add_vertex(VertexClass::Plain, 1.0).unwrap();
        g.add_vertex(VertexClass::Plain, 1.0).unwrap();
        g.add_conductance(0, 1, 0.9).unwrap();
        let (b1, b2) = (2.0, 1.5);
        let gr = green(&g, &[b1, b2], &[0, 1]).unwrap();
        assert!((gr[0] - b2 / (b1 * b2 - 0.81)).abs() < 1e-14);
    }

    #[test]
    fn empty_region_psi_is_one() {
        let g = build_box_lattice(2, 1, 1.0).unwrap();
        let s = psi(&g, &vec![2.0; 10], &[]).unwrap();
        assert!(s.psi.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn edgeless_side_has_zero_mass() {
        let g = build_halfspace_box(1, 3, 1, 1.0).unwrap();
        let beta = vec![2.5; g.num_vertices()];
        let split = boundary_split(&g, &beta, &g.free_vertices()).unwrap();
        assert_eq!(split.get(&VertexClass::Side).copied().unwrap_or(0.0), 0.0);
    }

    #[test]
    fn single_column_split_ratio() {
        let g = build_halfspace_box(2, 1, 1, 1.0).unwrap();
        let beta = vec![5.0; g.num_vertices()];
        let split = boundary_split(&g, &beta, &g.free_vertices()).unwrap();
        let ratio = split[&VertexClass::Top] / split[&VertexClass::Side];
        assert!((ratio - 0.5).abs() < 1e-15);
    }

    #[test]
    fn split_sums_to_psi() {
        let g = build_halfspace_box(2, 2, 2, 1.0).unwrap();
        let beta: Vec<f64> = (0..g.num_vertices()).map(|i| 4.0 + 0.1 * i as f64).collect();
        let free = g.free_vertices();
        let s = psi(&g, &beta, &free).unwrap();
        let split = boundary_split(&g, &beta, &free).unwrap();
        let total: f64 = split.values().sum();
        let root = g.root().unwrap();
        assert!((total - s.psi[root]).abs() < 1e-12 * s.psi[root]);
        let from_solve: f64 = s.boundary_mass.values().sum();
        assert!((from_solve - s.psi[root]).abs() < 1e-12 * s.psi[root]);
        assert!((root_psi(&g, &beta, &free).unwrap() - s.psi[root]).abs() < 1e-13);
    }

    #[test]
    fn oracle_empty_path_and_single_step() {
        let g = build_box_lattice(1, 0, 1.0).unwrap();
        let beta = [3.0, f64::NAN];
        let r = path_sum_oracle(&g, &beta, &[0], 1, PathTarget::Exit, 0).unwrap();
        assert_eq!(r.value, 1.0);
        let r = path_sum_oracle(&g, &beta, &[0], 0, PathTarget::Exit, 5).unwrap();
        assert!((r.value - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.tail_bound, 0.0);
    }

    #[test]
    fn oracle_brackets_solve_on_small_block() {
        let g = build_box_lattice(2, 1, 1.0).unwrap();
        let region: Vec<usize> = g.free_vertices().into_iter().take(4).collect();
        let beta: Vec<f64> = (0..10).map(|i| 4.5 + 0.2 * i as f64).collect();
        let s = psi(&g, &beta, &region).unwrap();
        for lmax in [5, 20, 60] {
            let r = path_sum_oracle(&g, &beta, &region, region[0], PathTarget::Exit, lmax).unwrap();
            let gap = s.psi[region[0]] - r.value;
            assert!(gap >= -1e-14 && gap <= r.tail_bound + 1e-14, "lmax={lmax}");
        }
        let r = path_sum_oracle(&g, &beta, &region, region[0], PathTarget::Exit, 60).unwrap();
        assert!((r.value - s.psi[region[0]]).abs() < 1e-8);
        let gr = path_sum_oracle(&g, &beta, &region, region[0], PathTarget::Vertex(region[3]), 60).unwrap();
        assert!((gr.value - s.green_entry(region[0], region[3]).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn oracle_refuses_supercritical_transfer() {
        let g = build_box_lattice(2, 1, 1.0).unwrap();
        let beta = vec![1.0; 10];
        let region: Vec<usize> = (0..9).collect();
        assert!(matches!(
            path_sum_oracle(&g, &beta, &region, 4, PathTarget::Exit, 10),
            Err(Error::OracleInapplicable(_))
        ));
    }

    #[test]
    fn oracle_guard_on_region_size() {
        let g = build_box_lattice(2, 2, 1.0).unwrap();
        let beta = vec![10.0; g.num_vertices()];
        let free = g.free_vertices();
        assert!(path_sum_oracle(&g, &beta, &free, 12, PathTarget::Exit, 3).is_err());
        assert!(path_sum_oracle_unguarded(&g, &beta, &free, 12, PathTarget::Exit, 3).is_ok());
    }
}
