//! The identity suite behind `vrjp validate`.

use rand::Rng;
use vrjp_core::beta::{condition_params, laplace_analytic, marginal_params, BetaSampler};
use vrjp_core::graph::{build_box_lattice, build_halfspace_box, build_halfspace_strip, SideBoundary, VertexClass, WeightedGraph};
use vrjp_core::mc::{derive_seed, map_replicates, moment_suite, replicate_rng, tail_suite, EstimatorSummary, Table};
use vrjp_core::renewal::{ig_tail_check, renewal_decompose};
use vrjp_core::toy::{chain_partition_identity, relative_gap, toy_moment_check, ToyMomentSpec};
use vrjp_core::vrjp::{exit_probability_annealed, StopRule};
use vrjp_core::{Error, Result};

use crate::config::RunConfig;

pub const MEMBERS: [&str; 9] =
    ["laplace", "conditioning", "renewal", "exitprob", "chain", "toy", "rapenne", "tail", "igtail"];

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        Verdict { name: name.into(), passed, detail }
    }
}

pub fn verdict_table(vs: &[Verdict]) -> Table {
    let mut t = Table::new(["check", "passed", "detail"]);
    for v in vs {
        t.push(vec![v.name.clone(), v.passed.to_string(), v.detail.clone()]);
    }
    t
}

/// Random connected graph on `n` plain vertices with a cemetery, rooted at 0.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize) -> Result<WeightedGraph> {
    let mut g = WeightedGraph::new();
    for _ in 0..n {
        let eta = if rng.random_bool(0.3) { rng.random_range(0.1..1.0) } else { 0.0 };
        g.add_vertex(VertexClass::Plain, eta)?;
    }
    let star = g.add_vertex(VertexClass::Cemetery, 0.0)?;
    for i in 0..n.saturating_sub(1) {
        g.add_conductance(i, i + 1, rng.random_range(0.3..1.5))?;
    }
    for i in 0..n {
        for j in i + 2..n {
            if rng.random_bool(0.35) {
                g.add_conductance(i, j, rng.random_range(0.2..1.2))?;
            }
        }
        if i == 0 || rng.random_bool(0.4) {
            g.add_conductance(i, star, rng.random_range(0.2..1.0))?;
        }
    }
    g.set_root(Some(0))?;
    Ok(g)
}

fn draws(g: &WeightedGraph, n: usize, seed: u64, workers: usize) -> Result<Vec<Vec<f64>>> {
    let s = BetaSampler::new(g, None)?;
    Ok(map_replicates(n, seed, workers, |rng| s.sample(rng))?.values)
}

/// Largest |z| of the empirical Laplace transform against the exact one
/// over `probes` random directions.
fn laplace_probe(g: &WeightedGraph, samples: &[Vec<f64>], probes: usize, seed: u64) -> Result<f64> {
    let mut rng = replicate_rng(seed, 0);
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let lambda: Vec<f64> = (0..g.num_vertices())
            .map(|v| if g.is_absorbing(v) { 0.0 } else { rng.random_range(0.0..1.0) })
            .collect();
        let exact = laplace_analytic(g, &lambda)?;
        let mut s = EstimatorSummary::new();
        for b in samples {
            let dot: f64 = (0..g.num_vertices()).filter(|&v| !g.is_absorbing(v)).map(|v| lambda[v] * b[v]).sum();
            s.push((-0.5 * dot).exp());
        }
        worst = worst.max(s.z_against(exact).abs());
    }
    Ok(worst)
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    workers: usize,
}

impl Ctx<'_> {
    fn seed(&self, tag: u64) -> u64 {
        derive_seed(self.cfg.run.seed, tag)
    }
}

fn laplace(c: &Ctx) -> Result<Verdict> {
    let v = &c.cfg.validate;
    let graphs = [build_box_lattice(2, 1, v.w)?, random_graph(&mut replicate_rng(c.seed(1), 0), 6)?];
    let mut worst = 0.0f64;
    for (i, g) in graphs.iter().enumerate() {
        let samples = draws(g, v.replicates, c.seed(10 + i as u64), c.workers)?;
        worst = worst.max(laplace_probe(g, &samples, 5, c.seed(20 + i as u64))?);
    }
    Ok(Verdict::new(
        "laplace",
        worst <= c.cfg.tolerances.sigma,
        format!("max |z| {worst:.3} over 2 graphs x 5 probes"),
    ))
}

fn conditioning(c: &Ctx) -> Result<Verdict> {
    let v = &c.cfg.validate;
    let mut rng = replicate_rng(c.seed(2), 0);
    let mut worst = 0.0f64;
    for gi in 0..5u64 {
        let n = 5 + gi as usize;
        let g = random_graph(&mut rng, n)?;
        let beta = draws(&g, 1, c.seed(30 + gi), 1)?.remove(0);
        let s: Vec<usize> = (0..n).filter(|&i| i < 3 || rng.random_bool(0.6)).collect();
        let t: Vec<usize> = vec![s[0], s[s.len() - 1]];
        let marg = marginal_params(&g, &s)?;
        let local_t: Vec<usize> = t.iter().map(|x| s.binary_search(x).expect("t within s")).collect();
        let local_beta: Vec<f64> = s.iter().map(|&x| beta[x]).collect();
        let a = condition_params(&marg, &local_t, &local_beta)?;
        let full = condition_params(&g, &t, &beta)?;
        let cg = full.to_graph(&g)?;
        let keep: Vec<usize> =
            full.support.iter().enumerate().filter(|(_, x)| s.contains(x)).map(|(i, _)| i).collect();
        let b = marginal_params(&cg, &keep)?;
        for i in 0..a.len() {
            worst = worst.max((a.eta_check[i] - b.eta(i)).abs() / b.eta(i).abs().max(1.0));
            for j in 0..a.len() {
                worst = worst.max((a.w(i, j) - b.conductance(i, j)).abs() / b.conductance(i, j).abs().max(1.0));
            }
        }
    }
    let g = build_box_lattice(2, 1, v.w)?;
    let subset = [0usize, 1, 3, 4];
    let m = marginal_params(&g, &subset)?;
    let restricted: Vec<Vec<f64>> = draws(&g, v.replicates, c.seed(40), c.workers)?
        .into_iter()
        .map(|b| subset.iter().map(|&x| b[x]).collect())
        .collect();
    let z = laplace_probe(&m, &restricted, 5, c.seed(41))?;
    Ok(Verdict::new(
        "conditioning",
        worst <= c.cfg.tolerances.algebraic && z <= c.cfg.tolerances.sigma,
        format!("tower gap {worst:.2e} on 5 graphs; restricted law max |z| {z:.3}"),
    ))
}

fn renewal(c: &Ctx) -> Result<Verdict> {
    let v = &c.cfg.validate;
    let g = build_halfspace_strip(2, 6, 2, v.w, SideBoundary::Free)?;
    let mut worst = 0.0f64;
    let mut violations = 0;
    for b in draws(&g, v.exact_replicates, c.seed(3), c.workers)? {
        for (k, ell) in [(1, 1), (2, 2), (2, 3)] {
            match renewal_decompose(&g, &b, k, ell) {
                Ok(d) => worst = worst.max(d.relative_error),
                Err(Error::IdentityViolation { relative_error, .. }) => {
                    violations += 1;
                    worst = worst.max(relative_error);
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(Verdict::new(
        "renewal",
        violations == 0 && worst <= c.cfg.tolerances.algebraic,
        format!("max relative error {worst:.2e} over {} decompositions", 3 * v.exact_replicates),
    ))
}

fn exitprob(c: &Ctx) -> Result<Verdict> {
    let v = &c.cfg.validate;
    let g = build_halfspace_box(2, 2, 3, v.w)?;
    let e = exit_probability_annealed(&g, v.walks, c.seed(4), c.workers, StopRule::default())?;
    let z = e.z();
    Ok(Verdict::new(
        "exitprob",
        e.walk_estimate_valid() && z.abs() <= c.cfg.tolerances.exit_sigma,
        format!("mass ratio {:.4}, walk frequency {:.4}, z {z:.2}", e.mass_ratio.mean, e.walk_frequency.mean),
    ))
}

fn chain(c: &Ctx) -> Result<Verdict> {
    let mut rng = replicate_rng(c.seed(5), 0);
    let mut worst = 0.0f64;
    for ell in 0..=8 {
        for &(eps, eta0) in &[(1.0, 1.0), (0.5, 1.0), (0.2, 0.1)] {
            for _ in 0..c.cfg.validate.exact_replicates {
                let (s, prod) = chain_partition_identity(ell, eps, eta0, &mut rng)?;
                worst = worst.max(relative_gap(s, prod));
            }
        }
    }
    Ok(Verdict::new("chain", worst <= c.cfg.tolerances.algebraic, format!("max gap {worst:.2e} for lengths 0..=8")))
}

fn toy(c: &Ctx) -> Result<Verdict> {
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, &(p, k, m, eps, eta0)) in [(2, 1, 0, 1.0, 1.0), (3, 1, 0, 1.0, 1.0)].iter().enumerate() {
        let spec = ToyMomentSpec::new(p, k, m, eps, eta0)?;
        let r = toy_moment_check(&spec, c.cfg.validate.replicates, c.seed(60 + i as u64), c.workers)?;
        ok &= r.z().abs() <= c.cfg.tolerances.sigma;
        parts.push(format!("p={p} z {:.2}", r.z()));
    }
    Ok(Verdict::new("toy", ok, parts.join("; ")))
}

fn rapenne(c: &Ctx) -> Result<Verdict> {
    let v = &c.cfg.validate;
    let t = moment_suite(|w| build_box_lattice(2, 2, w), &[v.w], &[1], v.replicates, c.seed(7), c.workers)?;
    let z = t.row(v.w, None).and_then(|r| r.z()).unwrap_or(f64::INFINITY);
    let z1 = t.row(v.w, Some(1)).and_then(|r| r.z()).unwrap_or(f64::INFINITY);
    let sigma = c.cfg.tolerances.sigma;
    Ok(Verdict::new(
        "rapenne",
        z.abs() <= sigma && z1.abs() <= sigma,
        format!("E[psi^-2 - psi^3] z {z:.2}; E[psi] - 1 z {z1:.2}"),
    ))
}

fn tail(c: &Ctx) -> Result<Verdict> {
    let v = &c.cfg.validate;
    let g = build_halfspace_strip(2, 6, 2, v.w, SideBoundary::Free)?;
    let rows = tail_suite(&g, &[2.0, 4.0, 8.0], v.replicates, c.seed(8), c.workers)?;
    let sigma = c.cfg.tolerances.sigma;
    let ok = rows.iter().all(|r| r.exceed.mean <= r.bound() + sigma * r.exceed.std_error().unwrap_or(0.0));
    let ps: Vec<String> = rows.iter().map(|r| format!("{:.4}", r.exceed.mean)).collect();
    Ok(Verdict::new("tail", ok, format!("P(max M >= t) for t = 2, 4, 8: {}", ps.join(", "))))
}

fn igtail(_: &Ctx) -> Result<Verdict> {
    let rows = ig_tail_check(0.5, &[0.5, 1.0, 2.0], &[2.0, 4.0, 8.0])?;
    let worst = rows.iter().map(|r| r.ratio / r.bound).fold(0.0f64, f64::max);
    Ok(Verdict::new("igtail", rows.iter().all(|r| r.holds()), format!("largest ratio / constant {worst:.3}")))
}

/// Run the selected members (all when `only` is empty) in registry order.
pub fn run_suite(cfg: &RunConfig, only: &[String]) -> Result<Vec<Verdict>> {
    let members: [fn(&Ctx) -> Result<Verdict>; 9] =
        [laplace, conditioning, renewal, exitprob, chain, toy, rapenne, tail, igtail];
    let ctx = Ctx { cfg, workers: cfg.run.workers };
    let mut out = Vec::new();
    for (name, member) in MEMBERS.iter().zip(members) {
        if only.is_empty() || only.iter().any(|o| o == name) {
            out.push(member(&ctx)?);
        }
    }
    Ok(out)
}
