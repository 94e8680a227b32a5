use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::Rng;
use vrjp_core::beta::{laplace_analytic, log_density, BetaSampler};
use vrjp_core::graph::{
    build_box_lattice, build_halfspace_strip, wire_boundary, write_graph, SideBoundary, VertexClass, WeightedGraph,
};
use vrjp_core::mc::replicate_rng;
use vrjp_core::renewal::renewal_decompose;
use vrjp_core::schrodinger::{factor_region, psi};
use vrjp_core::vrjp::{simulate_vrjp, StopRule};

fn random_graph(seed: u64, n: usize) -> WeightedGraph {
    let mut rng = replicate_rng(seed, 0);
    let mut g = WeightedGraph::new();
    for _ in 0..n {
        let eta = if rng.random_bool(0.3) { rng.random_range(0.1..1.0) } else { 0.0 };
        g.add_vertex(VertexClass::Plain, eta).unwrap();
    }
    let star = g.add_vertex(VertexClass::Cemetery, 0.0).unwrap();
    for i in 0..n - 1 {
        g.add_conductance(i, i + 1, rng.random_range(0.3..1.5)).unwrap();
    }
    for i in 0..n {
        for j in i + 2..n {
            if rng.random_bool(0.3) {
                g.add_conductance(i, j, rng.random_range(0.2..1.2)).unwrap();
            }
        }
        if i == 0 || rng.random_bool(0.4) {
            g.add_conductance(i, star, rng.random_range(0.2..1.0)).unwrap();
        }
    }
    g.set_root(Some(0)).unwrap();
    g
}

fn symmetric_nonnegative(g: &WeightedGraph) -> bool {
    (0..g.num_vertices()).all(|u| {
        g.neighbors(u).all(|(v, c)| c >= 0.0 && c.is_finite() && g.conductance(v, u) == c)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn builders_are_symmetric_and_deterministic(d in 1usize..4, n in 0i64..3, levels in 1i64..5, m in 1i64..3,
                                                w in 0.1f64..5.0, free in any::<bool>()) {
        let side = if free { SideBoundary::Free } else { SideBoundary::Wired };
        for g in [build_box_lattice(d, n, w).unwrap(), build_halfspace_strip(d, levels, m, w, side).unwrap()] {
            prop_assert_eq!(g.invariant_violation(), None);
            prop_assert!(symmetric_nonnegative(&g));
        }
        prop_assert_eq!(write_graph(&build_box_lattice(d, n, w).unwrap()),
                        write_graph(&build_box_lattice(d, n, w).unwrap()));
        prop_assert_eq!(write_graph(&build_halfspace_strip(d, levels, m, w, side).unwrap()),
                        write_graph(&build_halfspace_strip(d, levels, m, w, side).unwrap()));
    }

    #[test]
    fn wiring_preserves_mass_into_the_contracted_set(seed in 0u64..10_000, n in 3usize..9, mask in 1u32..255) {
        let g = random_graph(seed, n);
        // the existing cemetery always joins the contracted set
        let contract: BTreeSet<usize> = (0..n).filter(|i| mask & (1 << i) != 0).chain([n]).collect();
        prop_assume!(contract.len() < n + 1);
        let wired = wire_boundary(&g, &contract).unwrap();
        prop_assert!(symmetric_nonnegative(&wired));
        let star = wired.num_vertices() - 1;
        let into: f64 = wired.neighbors(star).filter(|&(x, _)| x != star).map(|(_, c)| c).sum();
        let mut expected = 0.0;
        for x in 0..g.num_vertices() {
            if contract.contains(&x) {
                continue;
            }
            expected += g.neighbors(x).filter(|(y, _)| contract.contains(y)).map(|(_, c)| c).sum::<f64>();
        }
        prop_assert!((into - expected).abs() <= 1e-12 * expected.max(1.0), "{} vs {}", into, expected);
    }

    #[test]
    fn sampled_potentials_are_admissible(seed in 0u64..10_000, n in 2usize..8) {
        let g = random_graph(seed, n);
        let beta = BetaSampler::new(&g, None).unwrap().sample(&mut replicate_rng(seed, 1)).unwrap();
        let free = g.free_vertices();
        prop_assert!(factor_region(&g, &beta, &free).is_ok());
        prop_assert!(log_density(&g, &beta).is_finite());
        prop_assert_eq!(laplace_analytic(&g, &vec![0.0; g.num_vertices()]).unwrap(), 1.0);
    }

    #[test]
    fn green_function_inverts_and_is_monotone(seed in 0u64..10_000, n in 2usize..8, drop in 0usize..8) {
        let g = random_graph(seed, n);
        let beta = BetaSampler::new(&g, None).unwrap().sample(&mut replicate_rng(seed, 2)).unwrap();
        let free = g.free_vertices();
        let s = psi(&g, &beta, &free).unwrap();
        let k = free.len();
        for i in 0..k {
            for j in 0..k {
                let gij = s.green[i * k + j];
                prop_assert!(gij >= 0.0);
                prop_assert!((gij - s.green[j * k + i]).abs() <= 1e-12 * gij.abs().max(1e-300));
                // (H G)_{ij}
                let x = free[i];
                let mut hg = beta[x] * gij;
                for (y, c) in g.neighbors(x) {
                    if let Ok(l) = free.binary_search(&y) {
                        hg -= c * s.green[l * k + j];
                    }
                }
                let target = if i == j { 1.0 } else { 0.0 };
                prop_assert!((hg - target).abs() <= 1e-10, "H G - I = {}", hg - target);
            }
        }
        prop_assert!(free.iter().all(|&v| s.psi[v] > 0.0));
        // removing a vertex can only lower the Green function
        let removed = free[drop % k];
        let smaller: Vec<usize> = free.iter().copied().filter(|&v| v != removed).collect();
        prop_assume!(!smaller.is_empty());
        let t = psi(&g, &beta, &smaller).unwrap();
        for &x in &smaller {
            for &y in &smaller {
                let (a, b) = (t.green_entry(x, y).unwrap(), s.green_entry(x, y).unwrap());
                prop_assert!(a <= b * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn renewal_identity_on_random_strips(seed in 0u64..10_000, d in 1usize..3, levels in 2i64..6, m in 1i64..3,
                                         w in 0.3f64..3.0, k in 1usize..5, ell in 1usize..5, free in any::<bool>()) {
        prop_assume!(((k + ell) as i64) <= levels);
        let side = if free { SideBoundary::Free } else { SideBoundary::Wired };
        let g = build_halfspace_strip(d, levels, m, w, side).unwrap();
        let beta = BetaSampler::new(&g, None).unwrap().sample(&mut replicate_rng(seed, 3)).unwrap();
        let r = renewal_decompose(&g, &beta, k, ell).unwrap();
        prop_assert!(r.relative_error < 1e-10);
    }

    #[test]
    fn local_times_match_the_event_list(seed in 0u64..10_000, n in 2usize..7, horizon in 0.0f64..20.0) {
        let g = random_graph(seed, n);
        let stop = StopRule { horizon, jump_budget: 10_000 };
        let tr = simulate_vrjp(&g, 0, stop, &mut replicate_rng(seed, 4)).unwrap();
        prop_assert_eq!(tr.local_time_from_events(), tr.local_time.clone());
        prop_assert!(tr.clock <= horizon || tr.exit_class.is_some() || tr.truncated);
    }
}
