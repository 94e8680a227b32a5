use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ig::sample_ig;
use super::{dense_conductances, BetaField};
use crate::error::{invalid, Error, Result};
use crate::graph::WeightedGraph;
use crate::linalg::minimum_degree_order;

/// A pivot `beta_j - W_jj` below this fraction of `beta_j` aborts the draw.
pub const SAMPLE_PIVOT_TOLERANCE: f64 = 1e-12;

/// The part of a one-vertex draw above the self-conductance: `eta / Y` with
/// `Y ~ IG(1, eta)`, or a chi-square(1) draw when `eta == 0`.
fn one_vertex_excess<R: Rng + ?Sized>(eta: f64, rng: &mut R) -> f64 {
    if eta > 0.0 {
        eta / sample_ig(1.0, eta, rng)
    } else {
        let n: f64 = StandardNormal.sample(rng);
        n * n
    }
}

/// One draw of the potential on a single vertex carrying a self-loop of
/// conductance `w_self` and boundary field `eta`.
///
/// The density carries `diag(beta) - W` with the self-loop on the diagonal,
/// so the self-loop shifts the potential by `w_self` (not `2 w_self`).
pub fn sample_beta_single<R: Rng + ?Sized>(w_self: f64, eta: f64, rng: &mut R) -> f64 {
    debug_assert!(w_self >= 0.0 && eta >= 0.0);
    w_self + one_vertex_excess(eta, rng)
}

/// Sequential sampler prepared for one graph: dense local conductances,
/// boundary field, an elimination order and its symbolic fill pattern.
#[derive(Clone, Debug)]
pub struct BetaSampler {
    vertices: Vec<usize>,
    num_graph_vertices: usize,
    w: Vec<f64>,
    eta: Vec<f64>,
    order: Vec<usize>,
    /// Live neighbors of each local vertex at its elimination step.
    fill: Vec<Vec<usize>>,
}

impl BetaSampler {
    /// Prepare a sampler. `order` lists the free vertices (graph ids) in the
    /// order they are drawn; `None` uses a minimum-degree order.
    pub fn new(g: &WeightedGraph, order: Option<&[usize]>) -> Result<Self> {
        let vertices = g.free_vertices();
        let n = vertices.len();
        let mut pos = vec![usize::MAX; g.num_vertices()];
        for (i, &v) in vertices.iter().enumerate() {
            pos[v] = i;
        }
        let w = dense_conductances(g, &vertices);
        let field = g.boundary_field();
        let eta: Vec<f64> = vertices.iter().map(|&v| field[v]).collect();
        let pattern: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..n).filter(|&j| j != i && w[i * n + j] != 0.0).collect())
            .collect();
        let order: Vec<usize> = match order {
            Some(o) => {
                let mut seen = vec![false; n];
                let mut local = Vec::with_capacity(n);
                for &v in o {
                    let i = *pos.get(v).unwrap_or(&usize::MAX);
                    if i == usize::MAX || seen[i] {
                        return invalid(format!("order entry {v} is not a distinct free vertex"));
                    }
                    seen[i] = true;
                    local.push(i);
                }
                if local.len() != n {
                    return invalid("order must list every free vertex");
                }
                local
            }
            None => minimum_degree_order(&pattern),
        };
        // symbolic elimination
        let mut nbrs: Vec<std::collections::BTreeSet<usize>> =
            pattern.iter().map(|p| p.iter().copied().collect()).collect();
        let mut fill = vec![Vec::new(); n];
        for &j in &order {
            let live: Vec<usize> = std::mem::take(&mut nbrs[j]).into_iter().collect();
            for &a in &live {
                nbrs[a].remove(&j);
                for &b in &live {
                    if a != b {
                        nbrs[a].insert(b);
                    }
                }
            }
            fill[j] = live;
        }
        Ok(BetaSampler { vertices, num_graph_vertices: g.num_vertices(), w, eta, order, fill })
    }

    /// Number of sampled (free) vertices.
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Elimination order as graph vertex ids.
    pub fn order(&self) -> Vec<usize> {
        self.order.iter().map(|&i| self.vertices[i]).collect()
    }

    /// Draw one potential vector indexed by graph vertex (`NaN` on absorbing
    /// vertices). One inverse Gaussian (or chi-square) draw is consumed per
    /// vertex, in elimination order.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let n = self.vertices.len();
        let mut w = self.w.clone();
        let mut eta = self.eta.clone();
        let mut out = vec![f64::NAN; self.num_graph_vertices];
        for &j in &self.order {
            let live = &self.fill[j];
            let eff: f64 = eta[j] + live.iter().map(|&k| w[j * n + k]).sum::<f64>();
            let h = one_vertex_excess(eff, rng);
            let beta_j = w[j * n + j] + h;
            if !(h > SAMPLE_PIVOT_TOLERANCE * beta_j) || !beta_j.is_finite() {
                return Err(Error::DegenerateSample { vertex: self.vertices[j], pivot: h });
            }
            out[self.vertices[j]] = beta_j;
            let inv = 1.0 / h;
            let ej = eta[j];
            for &a in live {
                let waj = w[a * n + j];
                eta[a] += waj * ej * inv;
                let sa = waj * inv;
                for &b in live {
                    w[a * n + b] += sa * w[j * n + b];
                }
            }
        }
        Ok(out)
    }

    pub fn sample_field<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<BetaField> {
        Ok(BetaField::new(self.sample(rng)?))
    }
}

/// Exact draw of the potential on the free vertices of `g`.
pub fn sample_beta<R: Rng + ?Sized>(g: &WeightedGraph, rng: &mut R, order: Option<&[usize]>) -> Result<BetaField> {
    BetaSampler::new(g, order)?.sample_field(rng)
}
