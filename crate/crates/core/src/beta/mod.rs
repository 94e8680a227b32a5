//! The random potential law on a finite weighted graph: inverse Gaussian
//! primitives, its Laplace transform and density, marginal and conditional
//! parameters, and an exact sequential sampler.
//!
//! Absorbing vertices (`top`, `side`, `cemetery`) are not part of the field;
//! their conductances enter through the effective boundary field
//! [`WeightedGraph::boundary_field`]. Potential vectors are indexed by graph
//! vertex and hold `NaN` on absorbing vertices.

mod conditioning;
mod ig;
mod law;
mod sampler;

pub use conditioning::{condition_params, marginal_params, ConditionalSpec};
pub use ig::{
    ig_density, ig_moment, ig_moment_quadrature, ig_truncated_second_moment, ig_upper_tail, sample_ig,
};
pub use law::{laplace_analytic, log_density};
pub use sampler::{sample_beta, sample_beta_single, BetaSampler, SAMPLE_PIVOT_TOLERANCE};

use crate::graph::WeightedGraph;

/// Where a sampled field came from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Provenance {
    pub master_seed: Option<u64>,
    pub replicate: Option<u64>,
}

/// A potential value per vertex (`NaN` on absorbing vertices).
#[derive(Clone, Debug, PartialEq)]
pub struct BetaField {
    pub beta: Vec<f64>,
    pub provenance: Provenance,
}

impl BetaField {
    pub fn new(beta: Vec<f64>) -> Self {
        BetaField { beta, provenance: Provenance::default() }
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn get(&self, v: usize) -> f64 {
        self.beta[v]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.beta
    }
}

/// Dense conductance block `W[a][b]` between the listed vertices (row-major),
/// diagonal self-loops included.
pub(crate) fn dense_conductances(g: &WeightedGraph, vertices: &[usize]) -> Vec<f64> {
    let n = vertices.len();
    let mut pos = vec![usize::MAX; g.num_vertices()];
    for (i, &v) in vertices.iter().enumerate() {
        pos[v] = i;
    }
    let mut w = vec![0.0; n * n];
    for (i, &v) in vertices.iter().enumerate() {
        for (u, c) in g.neighbors(v) {
            let j = pos[u];
            if j != usize::MAX {
                w[i * n + j] = c;
            }
        }
    }
    w
}

/// `H = diag(beta) - W` on the listed vertices (row-major).
pub(crate) fn schrodinger_block(g: &WeightedGraph, beta: &[f64], vertices: &[usize]) -> Vec<f64> {
    let n = vertices.len();
    let mut h = dense_conductances(g, vertices);
    for x in h.iter_mut() {
        *x = -*x;
    }
    for (i, &v) in vertices.iter().enumerate() {
        h[i * n + i] += beta[v];
    }
    h
}
