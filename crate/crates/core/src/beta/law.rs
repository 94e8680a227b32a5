use super::schrodinger_block;
use crate::error::{invalid, Result};
use crate::graph::WeightedGraph;
use crate::linalg::cholesky_with_floor;

/// `E[exp(-<lambda, beta>/2)]` in closed form. `lambda` is indexed by graph
/// vertex; entries on absorbing vertices are ignored.
pub fn laplace_analytic(g: &WeightedGraph, lambda: &[f64]) -> Result<f64> {
    if lambda.len() != g.num_vertices() {
        return invalid("lambda must have one entry per vertex");
    }
    let eta = g.boundary_field();
    let mut log = 0.0;
    for v in g.free_vertices() {
        let l = lambda[v];
        if !(l >= 0.0) {
            return invalid(format!("lambda must be >= 0, got {l} at {v}"));
        }
        let r = (1.0 + l).sqrt();
        log -= eta[v] * (r - 1.0) + 0.5 * (1.0 + l).ln();
    }
    for (u, v, c) in g.edges() {
        if g.is_absorbing(u) || g.is_absorbing(v) {
            continue;
        }
        if u == v {
            log -= 0.5 * c * lambda[u];
        } else {
            log -= c * (((1.0 + lambda[u]) * (1.0 + lambda[v])).sqrt() - 1.0);
        }
    }
    Ok(log.exp())
}

/// Log-density of the potential law at `beta`, or `-inf` when
/// `diag(beta) - W` is not positive definite.
pub fn log_density(g: &WeightedGraph, beta: &[f64]) -> f64 {
    let free = g.free_vertices();
    let n = free.len();
    if free.iter().any(|&v| !beta[v].is_finite()) {
        return f64::NEG_INFINITY;
    }
    let h = schrodinger_block(g, beta, &free);
    let Ok(f) = cholesky_with_floor(&h, n, &free, 0.0) else {
        return f64::NEG_INFINITY;
    };
    let eta_all = g.boundary_field();
    let eta: Vec<f64> = free.iter().map(|&v| eta_all[v]).collect();
    let ones_h_ones: f64 = h.iter().sum();
    let g_eta = f.solve(&eta);
    let eta_g_eta: f64 = eta.iter().zip(&g_eta).map(|(a, b)| a * b).sum();
    let eta_sum: f64 = eta.iter().sum();
    -(n as f64) / 2.0 * (2.0 * std::f64::consts::PI).ln() - 0.5 * f.log_det() - 0.5 * ones_h_ones
        - 0.5 * eta_g_eta
        + eta_sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::VertexClass;
    use crate::quad;

    fn one_vertex(eta: f64) -> WeightedGraph {
        let mut g = WeightedGraph::new();
        g.add_vertex(VertexClass::Plain, eta).unwrap();
        g
    }

    #[test]
    fn laplace_normalization_and_single_vertex() {
        let g = one_vertex(0.0);
        assert_eq!(laplace_analytic(&g, &[0.0]).unwrap(), 1.0);
        assert!((laplace_analytic(&g, &[3.0]).unwrap() - 0.5).abs() < 1e-15);
        let g = one_vertex(1.0);
        assert!((laplace_analytic(&g, &[3.0]).unwrap() - 0.5 * (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn log_density_single_vertex_by_hand() {
        let g = one_vertex(1.0);
        let v = log_density(&g, &[1.0]);
        assert!((v + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-14);
    }

    #[test]
    fn log_density_rejects_indefinite() {
        let mut g = WeightedGraph::new();
        g.add_vertex(VertexClass::Plain, 0.0).unwrap();
        g.add_vertex(VertexClass::Plain, 0.0).unwrap();
        g.add_conductance(0, 1, 2.0).unwrap();
        assert_eq!(log_density(&g, &[1.0, 1.0]), f64::NEG_INFINITY);
        assert_eq!(log_density(&g, &[-1.0, 5.0]), f64::NEG_INFINITY);
    }

    #[test]
    fn density_integrates_to_one_on_an_edge() {
        // edge of conductance w, both vertices tied to a boundary
        let (w, e0, e1) = (0.8, 0.5, 1.2);
        let mut g = WeightedGraph::new();
        g.add_vertex(VertexClass::Plain, e0).unwrap();
        g.add_vertex(VertexClass::Plain, e1).unwrap();
        g.add_conductance(0, 1, w).unwrap();
        // integrate over beta0 in (0, inf); for fixed beta0 > 0 the beta1 range
        // is (w^2 / beta0, inf). Substitute beta1 = w^2/beta0 + s^2 to remove
        // the inverse square-root singularity of the determinant.
        let inner = |b0: f64| {
            let lo = w * w / b0;
            let f = |s: f64| 2.0 * s * log_density(&g, &[b0, lo + s * s]).exp();
            quad::integrate(f, 0.0, 1.0, 1e-11, 0.0).unwrap()
                + quad::integrate_to_infinity(f, 1.0, 1.0, 1e-11).unwrap()
        };
        let total = quad::integrate(inner, 0.0, 1.0, 1e-9, 0.0).unwrap()
            + quad::integrate_to_infinity(inner, 1.0, 1.0, 1e-9).unwrap();
        assert!((total - 1.0).abs() < 1e-6, "total {total}");
    }
}
