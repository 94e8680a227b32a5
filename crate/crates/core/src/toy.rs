//! One-dimensional toy graphs: the inverse Gaussian product form of chain
//! partition functions, their moments, the uniform moment bound on the toy
//! graph and the comparison chain of box surgeries.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::beta::{ig_moment, sample_ig, BetaSampler};
use crate::error::{invalid, Error, Result};
use crate::graph::{
    build_box_lattice, build_toy_chain, build_toy_graph, toy_eligible_sites, transform_comparison_step,
    ComparisonStep, LineDuplication, WeightedGraph,
};
use crate::mc::suites::{root_psi_draw, weighted_slope};
use crate::mc::{
    cell, map_replicates, median_of_means, opt_cell, run_replicates, z_score, EstimatorSummary, Table, SIGMA_POLICY,
};
use crate::schrodinger::{root_psi, root_psi_refined};

use dd::Dd;

/// Per-replicate agreement required between the chain solve and the
/// product of its inverse Gaussian factors.
pub const CHAIN_TOLERANCE: f64 = 1e-12;

/// Moment orders from which the toy check switches to median of means.
pub const MEDIAN_OF_MEANS_FROM: u32 = 3;

pub const MOM_BUCKETS: usize = 16;

/// Relative standard error above which a moment estimate is flagged as
/// heavy tailed.
pub const HEAVY_TAIL_RELATIVE_ERROR: f64 = 0.1;

/// Factors `A_0..A_ell` and the potential they induce on
/// [`build_toy_chain`]`(ell, epsilon, eta0)` (`NaN` on the cemetery).
pub fn chain_beta<R: Rng + ?Sized>(ell: usize, epsilon: f64, eta0: f64, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(epsilon > 0.0) || !(eta0 > 0.0) || !epsilon.is_finite() || !eta0.is_finite() {
        return invalid("chain conductances must be positive");
    }
    let a: Vec<f64> = (0..=ell)
        .map(|i| sample_ig(1.0, if i < ell { epsilon } else { eta0 }, rng))
        .collect();
    let mut beta = vec![f64::NAN; ell + 2];
    for i in 0..=ell {
        let up = if i < ell { epsilon } else { eta0 };
        let down = if i > 0 { epsilon * a[i - 1] } else { 0.0 };
        beta[i] = down + up / a[i];
    }
    Ok((a, beta))
}

/// `psi(0)` on the chain computed by a linear solve and as `prod A_i`, for
/// one draw of the factors.
///
/// The potential is formed and the system solved in double-double
/// arithmetic: `eps A_{i-1} + eps / A_i` rounded to `f64` already moves
/// `psi(0)` by about `A_{i-1} A_i` ulps through the cancellation in the
/// elimination.
pub fn chain_partition_identity<R: Rng + ?Sized>(ell: usize, epsilon: f64, eta0: f64, rng: &mut R) -> Result<(f64, f64)> {
    let g = build_toy_chain(ell, epsilon, eta0)?;
    let (a, _) = chain_beta(ell, epsilon, eta0, rng)?;
    let eps = Dd::from(epsilon);
    let beta: Vec<Dd> = (0..=ell)
        .map(|i| {
            let up = Dd::from(if i < ell { epsilon } else { eta0 });
            let down = if i > 0 { eps * Dd::from(a[i - 1]) } else { Dd::from(0.0) };
            down + up / Dd::from(a[i])
        })
        .collect();
    let solved = dd::root_solve(&g, &beta)?;
    Ok((solved, a.iter().product()))
}

/// Same identity with the potential rounded to `f64` and the general solver
/// (one refinement step); accurate to roughly `max A_{i-1} A_i` ulps.
pub fn chain_partition_identity_f64<R: Rng + ?Sized>(
    ell: usize,
    epsilon: f64,
    eta0: f64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let g = build_toy_chain(ell, epsilon, eta0)?;
    let (a, beta) = chain_beta(ell, epsilon, eta0, rng)?;
    let solved = root_psi_refined(&g, &beta, &g.free_vertices())?;
    Ok((solved, a.iter().product()))
}

/// `|a - b| / |b|`.
pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// A moment of the chain partition function and its product formula.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyMomentSpec {
    pub p: u32,
    pub k: usize,
    pub m: usize,
    pub epsilon: f64,
    pub eta0: f64,
    pub closed_form: f64,
}

fn chain_moment(p: u32, factors: usize, epsilon: f64, eta0: f64) -> Result<f64> {
    let per = ig_moment(p, epsilon)?;
    let last = ig_moment(p, eta0)?;
    let mut v = last;
    for _ in 0..factors {
        v *= per;
    }
    Ok(v)
}

impl ToyMomentSpec {
    pub fn new(p: u32, k: usize, m: usize, epsilon: f64, eta0: f64) -> Result<Self> {
        let ell = (2 * m + 1) * k;
        let closed_form = chain_moment(p, ell, epsilon, eta0)?;
        if !closed_form.is_finite() {
            return invalid(format!("closed form overflows for p={p}, chain length {ell}"));
        }
        Ok(ToyMomentSpec { p, k, m, epsilon, eta0, closed_form })
    }

    /// Index of the last chain vertex, `(2m+1)k`.
    pub fn chain_length(&self) -> usize {
        (2 * self.m + 1) * self.k
    }

    /// `Var[M^p] / E[M^p]^2` from the closed forms of orders `p` and `2p`;
    /// `+inf` on overflow.
    pub fn relative_variance(&self) -> f64 {
        match chain_moment(2 * self.p, self.chain_length(), self.epsilon, self.eta0) {
            Ok(v) => (v / self.closed_form / self.closed_form - 1.0).max(0.0),
            Err(_) => f64::INFINITY,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyMomentCheck {
    pub spec: ToyMomentSpec,
    pub estimate: f64,
    /// Standard error used for the z-score.
    pub std_error: f64,
    /// Sample standard error (or median-of-means spread).
    pub sample_std_error: f64,
    /// Standard error of the plain mean implied by the closed forms.
    pub model_std_error: f64,
    pub median_of_means: bool,
    pub heavy_tail: bool,
    pub replicates: usize,
    pub aborted: usize,
}

impl ToyMomentCheck {
    pub fn z(&self) -> f64 {
        z_score(self.estimate, self.std_error, self.spec.closed_form)
    }

    pub fn passes(&self) -> bool {
        self.z().abs() <= SIGMA_POLICY
    }
}

/// Monte Carlo estimate of `E[psi(0)^p]` on the chain of the spec, with the
/// potential drawn by the general sampler. Plain means use the larger of
/// the sample and the closed-form standard errors, since heavy tails make
/// the sample one too small.
pub fn toy_moment_check(spec: &ToyMomentSpec, replicates: usize, seed: u64, workers: usize) -> Result<ToyMomentCheck> {
    if !spec.closed_form.is_finite() {
        return invalid("closed form must be finite");
    }
    let g = build_toy_chain(spec.chain_length(), spec.epsilon, spec.eta0)?;
    let sampler = BetaSampler::new(&g, None)?;
    let p = spec.p as i32;
    let out = map_replicates(replicates, seed, workers, |rng| Ok(root_psi_draw(&g, &sampler, rng)?.powi(p)))?;
    let n = out.values.len();
    let rel_var = spec.relative_variance();
    let model_std_error = spec.closed_form * (rel_var / n as f64).sqrt();
    let heavy_tail = !((rel_var / n as f64).sqrt() <= HEAVY_TAIL_RELATIVE_ERROR);
    let use_mom = spec.p >= MEDIAN_OF_MEANS_FROM;
    let (estimate, sample_std_error, std_error) = if use_mom {
        let mom = median_of_means(&out.values, MOM_BUCKETS)?;
        (mom.estimate, mom.std_error, mom.std_error)
    } else {
        let s = EstimatorSummary::from_slice(&out.values);
        let se = s.std_error().unwrap_or(f64::INFINITY);
        (s.mean, se, se.max(model_std_error))
    };
    Ok(ToyMomentCheck {
        spec: *spec,
        estimate,
        std_error,
        sample_std_error,
        model_std_error,
        median_of_means: use_mom,
        heavy_tail,
        replicates,
        aborted: out.aborted,
    })
}

pub const TOY_MOMENT_HEADER: [&str; 13] = [
    "p", "k", "m", "epsilon", "eta0", "closed_form", "estimate", "std_error", "sample_std_error", "model_std_error",
    "z", "median_of_means", "heavy_tail",
];

impl ToyMomentCheck {
    pub fn to_row(&self) -> Vec<String> {
        vec![
            self.spec.p.to_string(),
            self.spec.k.to_string(),
            self.spec.m.to_string(),
            cell(self.spec.epsilon),
            cell(self.spec.eta0),
            cell(self.spec.closed_form),
            cell(self.estimate),
            cell(self.std_error),
            cell(self.sample_std_error),
            cell(self.model_std_error),
            cell(self.z()),
            self.median_of_means.to_string(),
            self.heavy_tail.to_string(),
        ]
    }
}

/// Law of the extra conductances of the toy graph.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightSampler {
    PointMass(f64),
    Uniform { lo: f64, hi: f64 },
    /// Uniform choice among the listed values.
    Empirical(Vec<f64>),
}

impl WeightSampler {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x > 0.0 && x.is_finite();
        match self {
            WeightSampler::PointMass(x) if ok(*x) => Ok(()),
            WeightSampler::Uniform { lo, hi } if ok(*lo) && ok(*hi) && lo < hi => Ok(()),
            WeightSampler::Empirical(xs) if !xs.is_empty() && xs.iter().all(|&x| ok(x)) => Ok(()),
            _ => invalid(format!("invalid weight sampler {self:?}")),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            WeightSampler::PointMass(x) => *x,
            WeightSampler::Uniform { lo, hi } => rng.random_range(*lo..*hi),
            WeightSampler::Empirical(xs) => xs[rng.random_range(0..xs.len())],
        }
    }

    /// Probability of a value strictly below `x`.
    pub fn mass_below(&self, x: f64) -> f64 {
        match self {
            WeightSampler::PointMass(v) => f64::from(u8::from(*v < x)),
            WeightSampler::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            WeightSampler::Empirical(xs) => xs.iter().filter(|&&v| v < x).count() as f64 / xs.len() as f64,
        }
    }

    /// One positive decimal per line; blank lines are skipped.
    pub fn parse_empirical(text: &str) -> Result<Self> {
        let mut xs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let x: f64 = t
                .parse()
                .map_err(|e| Error::Parse { line: i + 1, message: format!("{t:?}: {e}") })?;
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::Parse { line: i + 1, message: format!("weight must be positive, got {t}") });
            }
            xs.push(x);
        }
        if xs.is_empty() {
            return Err(Error::Parse { line: 0, message: "no weights".into() });
        }
        Ok(WeightSampler::Empirical(xs))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse_empirical(&std::fs::read_to_string(path)?)
    }
}

/// Settings of the uniform moment bound experiment on toy graphs.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyBoundConfig {
    pub n_grid: Vec<i64>,
    pub m: i64,
    pub epsilon: f64,
    pub eta0: f64,
    /// Claimed bound on the mass of the weight law below `eta0`.
    pub epsilon0: f64,
    pub p: u32,
    pub replicates: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyBoundRow {
    pub n: i64,
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KRow {
    pub k: usize,
    pub count: usize,
    /// Empirical `P(K >= k)`.
    pub tail: EstimatorSummary,
    /// `epsilon0^k`.
    pub bound: f64,
}

impl KRow {
    pub fn within_bound(&self) -> bool {
        self.tail.mean <= self.bound + SIGMA_POLICY * self.tail.std_error().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyBoundReport {
    pub config: ToyBoundConfig,
    pub rows: Vec<ToyBoundRow>,
    /// Histogram of the first nonnegative site with weight at least `eta0`,
    /// from the largest `n` (censored at the number of sites).
    pub k_rows: Vec<KRow>,
    /// Exact mass of the weight law below `eta0`.
    pub mass_below: f64,
    /// Weighted least-squares slope of the estimates against `n`.
    pub slope: f64,
    pub slope_std_error: f64,
    /// `c1 = E[IG(1, eta0)^p]` and `C0 = E[IG(1, epsilon)^p]^(2m+1)`.
    pub c1: f64,
    pub c0: f64,
}

impl ToyBoundReport {
    /// Whether the mass condition holds so the experiment may assert.
    pub fn mass_condition(&self) -> bool {
        self.mass_below < self.config.epsilon0
    }

    /// No upward trend in `n`: `None` when the mass condition fails.
    pub fn no_upward_trend(&self) -> Option<bool> {
        self.mass_condition()
            .then(|| self.slope - SIGMA_POLICY * self.slope_std_error <= 0.0)
    }

    /// `2 c1`, valid when `epsilon0 <= 1 / (2 C0)` and the mass condition holds.
    pub fn lemma_bound(&self) -> Option<f64> {
        (self.mass_condition() && self.config.epsilon0 <= 0.5 / self.c0).then_some(2.0 * self.c1)
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["section", "index", "value", "std_error", "bound", "holds"]);
        let bound = self.lemma_bound();
        for r in &self.rows {
            let holds = bound.map(|b| r.estimate - SIGMA_POLICY * r.std_error <= b);
            t.push(vec![
                "moment".into(),
                r.n.to_string(),
                cell(r.estimate),
                cell(r.std_error),
                opt_cell(bound),
                holds.map_or("na".into(), |h| h.to_string()),
            ]);
        }
        for k in &self.k_rows {
            t.push(vec![
                "k_tail".into(),
                k.k.to_string(),
                cell(k.tail.mean),
                opt_cell(k.tail.std_error()),
                cell(k.bound),
                k.within_bound().to_string(),
            ]);
        }
        t.push(vec![
            "slope".into(),
            String::new(),
            cell(self.slope),
            cell(self.slope_std_error),
            cell(0.0),
            self.no_upward_trend().map_or("na".into(), |h| h.to_string()),
        ]);
        t.push(vec![
            "mass_below_eta0".into(),
            String::new(),
            cell(self.mass_below),
            String::new(),
            cell(self.config.epsilon0),
            self.mass_condition().to_string(),
        ]);
        t
    }
}

/// `K`: first `j >= 0` with weight at least `eta0` at site `(2m+1)j`, or the
/// number of nonnegative sites when there is none.
fn first_strong_site(weights: &BTreeMap<i64, f64>, m: i64, eta0: f64) -> usize {
    let period = 2 * m + 1;
    let sites: Vec<(&i64, &f64)> = weights.range(0..).collect();
    sites
        .iter()
        .position(|(&i, &w)| i % period == 0 && w >= eta0)
        .unwrap_or(sites.len())
}

/// `E[psi(0)^p]` on toy graphs across `n_grid` with i.i.d. extra weights
/// from `mu0`, plus the distribution of `K`.
pub fn toy_uniform_bound_experiment(
    config: &ToyBoundConfig,
    mu0: &WeightSampler,
    seed: u64,
    workers: usize,
) -> Result<ToyBoundReport> {
    mu0.validate()?;
    if config.n_grid.is_empty() || config.n_grid.iter().any(|&n| n < 1) {
        return invalid("n grid must be nonempty with n >= 1");
    }
    if config.m < 0 || config.p == 0 {
        return invalid("need m >= 0 and p >= 1");
    }
    if !(config.eta0 > 0.0) || !(config.epsilon > 0.0) || !(config.epsilon0 > 0.0 && config.epsilon0 < 1.0) {
        return invalid("need eta0 > 0, epsilon > 0 and 0 < epsilon0 < 1");
    }
    let p = config.p as i32;
    let n_max = *config.n_grid.iter().max().expect("nonempty");
    let mut rows = Vec::new();
    let mut ks: Vec<usize> = Vec::new();
    for &n in &config.n_grid {
        let sites = toy_eligible_sites(n, config.m);
        let out = map_replicates(config.replicates, seed, workers, |rng: &mut ChaCha8Rng| {
            let weights: BTreeMap<i64, f64> = sites.iter().map(|&i| (i, mu0.sample(rng))).collect();
            let g = build_toy_graph(n, config.m, config.epsilon, &weights)?;
            let beta = BetaSampler::new(&g, None)?.sample(rng)?;
            let psi = root_psi(&g, &beta, &g.free_vertices())?;
            Ok((psi.powi(p), first_strong_site(&weights, config.m, config.eta0)))
        })?;
        let values: Vec<f64> = out.values.iter().map(|v| v.0).collect();
        let (estimate, std_error) = if config.p >= MEDIAN_OF_MEANS_FROM {
            let mom = median_of_means(&values, MOM_BUCKETS)?;
            (mom.estimate, mom.std_error)
        } else {
            let s = EstimatorSummary::from_slice(&values);
            (s.mean, s.std_error().unwrap_or(f64::INFINITY))
        };
        rows.push(ToyBoundRow { n, estimate, std_error });
        if n == n_max {
            ks = out.values.iter().map(|v| v.1).collect();
        }
    }
    let k_max = ks.iter().copied().max().unwrap_or(0);
    let k_rows = (0..=k_max)
        .map(|k| {
            let tail: Vec<f64> = ks.iter().map(|&x| f64::from(u8::from(x >= k))).collect();
            KRow {
                k,
                count: ks.iter().filter(|&&x| x == k).count(),
                tail: EstimatorSummary::from_slice(&tail),
                bound: config.epsilon0.powi(k as i32),
            }
        })
        .collect();
    let (slope, slope_std_error) = if rows.len() >= 2 {
        let pts: Vec<(f64, f64, f64)> = rows.iter().map(|r| (r.n as f64, r.estimate, r.std_error)).collect();
        weighted_slope(&pts)
    } else {
        (0.0, f64::INFINITY)
    };
    let c1 = ig_moment(config.p, config.eta0)?;
    let c0 = ig_moment(config.p, config.epsilon)?.powi(2 * config.m as i32 + 1);
    Ok(ToyBoundReport {
        config: config.clone(),
        rows,
        k_rows,
        mass_below: mu0.mass_below(config.eta0),
        slope,
        slope_std_error,
        c1,
        c0,
    })
}

/// The box of the comparison chain and its surgery parameters: box
/// `[-n, n]^d` at conductance `w`, slabs of `2m+1` levels along the last
/// axis, slab conductance `w - epsilon` and copy-line conductance `epsilon`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComparisonParams {
    pub d: usize,
    pub n: i64,
    pub m: i64,
    pub w: f64,
    pub epsilon: f64,
}

impl ComparisonParams {
    fn slab_of(&self, level: i64) -> i64 {
        (level + self.m).div_euclid(2 * self.m + 1)
    }

    fn is_centre(&self, level: i64) -> bool {
        level.rem_euclid(2 * self.m + 1) == 0
    }

    fn slab_weight(&self) -> f64 {
        self.w - self.epsilon
    }
}

fn last(x: &[i64]) -> i64 {
    *x.last().expect("lattice vertex")
}

fn on_line(x: &[i64]) -> bool {
    x[..x.len() - 1].iter().all(|&c| c == 0)
}

/// Vertical lattice edge between `u` and `v`, lower end first.
fn vertical(g: &WeightedGraph, u: usize, v: usize) -> Option<(Vec<i64>, Vec<i64>)> {
    let (a, b) = (g.coords(u)?, g.coords(v)?);
    let d = a.len();
    if a[..d - 1] != b[..d - 1] || (a[d - 1] - b[d - 1]).abs() != 1 {
        return None;
    }
    if a[d - 1] < b[d - 1] {
        Some((a.to_vec(), b.to_vec()))
    } else {
        Some((b.to_vec(), a.to_vec()))
    }
}

/// The four graphs of the comparison chain: the wired box; slabs joined
/// only through the vertical line; the line duplicated (root on the copy);
/// and the slabs detached from the original line, tied to the copy only at
/// their centres, with slab conductances lowered.
pub fn comparison_chain(params: &ComparisonParams) -> Result<Vec<WeightedGraph>> {
    let ComparisonParams { d, n, m, w, epsilon } = *params;
    if d < 2 || n < 1 || m < 0 {
        return invalid("comparison chain needs d >= 2, n >= 1, m >= 0");
    }
    if !(epsilon > 0.0) || !(2.0 * epsilon <= w) {
        return invalid(format!("need 0 < epsilon <= w/2, got epsilon={epsilon}, w={w}"));
    }
    let g0 = build_box_lattice(d, n, w)?;
    let star = g0.cemetery().expect("wired box");

    let cut: Vec<(usize, usize)> = g0
        .edges()
        .filter_map(|(u, v, _)| {
            let (a, b) = vertical(&g0, u, v)?;
            (params.slab_of(last(&a)) != params.slab_of(last(&b)) && !on_line(&a)).then_some((u, v))
        })
        .collect();
    let g1 = transform_comparison_step(&g0, &ComparisonStep::RemoveEdges(cut))?;

    let mut line: Vec<usize> = (0..star).filter(|&v| on_line(g1.coords(v).expect("lattice"))).collect();
    line.sort_by_key(|&v| last(g1.coords(v).expect("lattice")));
    let g2 = transform_comparison_step(
        &g1,
        &ComparisonStep::DuplicateLine(LineDuplication {
            line: line.clone(),
            line_conductance: params.slab_weight(),
            copy_conductance: epsilon,
            endpoint_share: epsilon,
            root_on_copy: true,
        }),
    )?;

    // free lattice vertices keep their ids; copies follow in line order
    let copies: Vec<usize> = (0..g2.num_vertices())
        .filter(|&v| !g2.is_absorbing(v) && g2.coords(v).is_none())
        .collect();
    let star2 = g2.cemetery().expect("cemetery kept");
    let mut removed = Vec::new();
    for pair in line.windows(2) {
        let (a, b) = (last(g2.coords(pair[0]).expect("lattice")), last(g2.coords(pair[1]).expect("lattice")));
        if params.slab_of(a) != params.slab_of(b) {
            removed.push((pair[0], pair[1]));
        }
    }
    for (&u, &c) in line.iter().zip(&copies) {
        if !params.is_centre(last(g2.coords(u).expect("lattice"))) {
            removed.push((u, c));
        }
    }
    let g2b = transform_comparison_step(&g2, &ComparisonStep::RemoveEdges(removed))?;

    let target = params.slab_weight();
    let mut lowered = Vec::new();
    for (u, v, c) in g2b.edges() {
        let in_slabs = |x: usize| g2b.coords(x).is_some() && !g2b.is_absorbing(x);
        if in_slabs(u) && in_slabs(v) {
            if c > target {
                lowered.push((u, v, target));
            }
        } else if (in_slabs(u) && v == star2) || (in_slabs(v) && u == star2) {
            let x = if u == star2 { v } else { u };
            let outside = (g0.conductance(x, star) / w).round();
            let t = (target * outside).min(c);
            if t < c {
                lowered.push((u, v, t));
            }
        }
    }
    let g3 = transform_comparison_step(&g2b, &ComparisonStep::LowerWeights(lowered))?;
    Ok(vec![g0, g1, g2, g3])
}

/// Convex test functions of the comparison experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ConvexFn {
    Identity,
    Square,
    Cube,
    CenteredSquare,
}

impl ConvexFn {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            ConvexFn::Identity => x,
            ConvexFn::Square => x * x,
            ConvexFn::Cube => x * x * x,
            ConvexFn::CenteredSquare => (x - 1.0) * (x - 1.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ConvexFn::Identity => "x",
            ConvexFn::Square => "x^2",
            ConvexFn::Cube => "x^3",
            ConvexFn::CenteredSquare => "(x-1)^2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "x" => Ok(ConvexFn::Identity),
            "x^2" => Ok(ConvexFn::Square),
            "x^3" => Ok(ConvexFn::Cube),
            "(x-1)^2" => Ok(ConvexFn::CenteredSquare),
            _ => invalid(format!("unknown test function {s:?}")),
        }
    }
}

/// Outcome of comparing two stages that should satisfy `E[f(a)] <= E[f(b)]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrderStatus {
    /// `b` exceeds `a` by more than the resolution.
    Resolved,
    /// Difference within the resolution either way.
    Inconclusive,
    /// `a` exceeds `b` by more than the resolution.
    Violated,
}

impl OrderStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            OrderStatus::Resolved => "resolved",
            OrderStatus::Inconclusive => "inconclusive",
            OrderStatus::Violated => "violated",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrderCheck {
    pub f: ConvexFn,
    /// Labels of the smaller and the larger stage.
    pub lower: String,
    pub upper: String,
    /// `E[f(upper)] - E[f(lower)]`.
    pub difference: f64,
    pub std_error: f64,
    pub status: OrderStatus,
}

impl OrderCheck {
    fn new(f: ConvexFn, lower: (&str, &EstimatorSummary), upper: (&str, &EstimatorSummary)) -> Self {
        let difference = upper.1.mean - lower.1.mean;
        let se = (lower.1.std_error().unwrap_or(f64::INFINITY).powi(2)
            + upper.1.std_error().unwrap_or(f64::INFINITY).powi(2))
        .sqrt();
        let status = if difference > SIGMA_POLICY * se {
            OrderStatus::Resolved
        } else if difference < -SIGMA_POLICY * se {
            OrderStatus::Violated
        } else {
            OrderStatus::Inconclusive
        };
        OrderCheck { f, lower: lower.0.into(), upper: upper.0.into(), difference, std_error: se, status }
    }

    pub fn holds(&self) -> bool {
        self.status != OrderStatus::Violated
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageRow {
    pub label: String,
    /// One summary per test function, in the order given.
    pub summaries: Vec<EstimatorSummary>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvexOrderReport {
    pub fs: Vec<ConvexFn>,
    pub stages: Vec<StageRow>,
    pub checks: Vec<OrderCheck>,
}

impl ConvexOrderReport {
    pub fn monotone(&self) -> bool {
        self.checks.iter().all(OrderCheck::holds)
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["kind", "f", "stage", "other", "n", "value", "std_error", "status"]);
        for s in &self.stages {
            for (f, sum) in self.fs.iter().zip(&s.summaries) {
                t.push(vec![
                    "stage".into(),
                    f.name().into(),
                    s.label.clone(),
                    String::new(),
                    sum.n.to_string(),
                    cell(sum.mean),
                    opt_cell(sum.std_error()),
                    String::new(),
                ]);
            }
        }
        for c in &self.checks {
            t.push(vec![
                "order".into(),
                c.f.name().into(),
                c.lower.clone(),
                c.upper.clone(),
                String::new(),
                cell(c.difference),
                cell(c.std_error),
                c.status.as_str().into(),
            ]);
        }
        t
    }
}

/// `E[f(psi(root))]` on each graph with the same replicate streams.
pub fn stage_summaries(
    graphs: &[(String, WeightedGraph)],
    fs: &[ConvexFn],
    replicates: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<StageRow>> {
    graphs
        .iter()
        .map(|(label, g)| {
            let sampler = BetaSampler::new(g, None)?;
            let run = run_replicates(
                |rng| {
                    let psi = root_psi_draw(g, &sampler, rng)?;
                    Ok(fs.iter().map(|f| f.eval(psi)).collect())
                },
                replicates,
                seed,
                workers,
            )?;
            Ok(StageRow { label: label.clone(), summaries: run.summaries })
        })
        .collect()
}

/// Checks `E[f]` non-decreasing along `stages` (in the given order) for
/// every function.
pub fn order_checks(fs: &[ConvexFn], stages: &[StageRow]) -> Vec<OrderCheck> {
    let mut out = Vec::new();
    for (i, &f) in fs.iter().enumerate() {
        for pair in stages.windows(2) {
            out.push(OrderCheck::new(
                f,
                (&pair[0].label, &pair[0].summaries[i]),
                (&pair[1].label, &pair[1].summaries[i]),
            ));
        }
    }
    out
}

/// The comparison chain G0..G3 must make `E[f(M)]` non-decreasing; on the
/// box, raising the conductance from `w` to `w + w_step` must not increase
/// it. Both families are returned in one report, the conductance pair
/// ordered so that the check direction is the same.
pub fn convex_order_chain_test(
    params: &ComparisonParams,
    fs: &[ConvexFn],
    w_step: f64,
    replicates: usize,
    seed: u64,
    workers: usize,
) -> Result<ConvexOrderReport> {
    if fs.is_empty() {
        return invalid("need at least one test function");
    }
    if !(w_step > 0.0) {
        return invalid("conductance step must be positive");
    }
    let chain = comparison_chain(params)?;
    let labelled: Vec<(String, WeightedGraph)> =
        chain.into_iter().enumerate().map(|(j, g)| (format!("G{j}"), g)).collect();
    let stages = stage_summaries(&labelled, fs, replicates, seed, workers)?;
    let mut checks = order_checks(fs, &stages);
    let pair = vec![
        (format!("w={}", params.w + w_step), build_box_lattice(params.d, params.n, params.w + w_step)?),
        (format!("w={}", params.w), build_box_lattice(params.d, params.n, params.w)?),
    ];
    let two = stage_summaries(&pair, fs, replicates, seed, workers)?;
    checks.extend(order_checks(fs, &two));
    let mut all = stages;
    all.extend(two);
    Ok(ConvexOrderReport { fs: fs.to_vec(), stages: all, checks })
}

mod dd {
    //! Double-double numbers: an unevaluated sum `hi + lo` with `|lo| <=
    //! ulp(hi) / 2`, enough for about 32 significant digits.

    use std::ops::{Add, Div, Mul, Neg, Sub};

    use crate::error::{invalid, Result};
    use crate::graph::WeightedGraph;

    #[derive(Clone, Copy, Debug, PartialEq)]
    pub struct Dd {
        hi: f64,
        lo: f64,
    }

    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        (s, b - (s - a))
    }

    fn two_prod(a: f64, b: f64) -> (f64, f64) {
        let p = a * b;
        (p, a.mul_add(b, -p))
    }

    impl From<f64> for Dd {
        fn from(x: f64) -> Self {
            Dd { hi: x, lo: 0.0 }
        }
    }

    impl Dd {
        pub fn to_f64(self) -> f64 {
            self.hi + self.lo
        }
    }

    impl Add for Dd {
        type Output = Dd;
        fn add(self, o: Dd) -> Dd {
            let (s, e) = two_sum(self.hi, o.hi);
            let (t, f) = two_sum(self.lo, o.lo);
            let (s, e) = quick_two_sum(s, e + t);
            let (hi, lo) = quick_two_sum(s, e + f);
            Dd { hi, lo }
        }
    }

    impl Neg for Dd {
        type Output = Dd;
        fn neg(self) -> Dd {
            Dd { hi: -self.hi, lo: -self.lo }
        }
    }

    impl Sub for Dd {
        type Output = Dd;
        fn sub(self, o: Dd) -> Dd {
            self + (-o)
        }
    }

    impl Mul for Dd {
        type Output = Dd;
        fn mul(self, o: Dd) -> Dd {
            let (p, e) = two_prod(self.hi, o.hi);
            let e = e + (self.hi * o.lo + self.lo * o.hi);
            let (hi, lo) = quick_two_sum(p, e);
            Dd { hi, lo }
        }
    }

    impl Div for Dd {
        type Output = Dd;
        fn div(self, o: Dd) -> Dd {
            // long division: two quotient digits and a correction
            let q1 = self.hi / o.hi;
            let r = self - o * Dd::from(q1);
            let q2 = r.hi / o.hi;
            let r = r - o * Dd::from(q2);
            let q3 = r.hi / o.hi;
            let (hi, lo) = quick_two_sum(q1, q2);
            Dd { hi, lo } + Dd::from(q3)
        }
    }

    /// `psi(root)` of `H psi = eta_hat` over all free vertices, by Gaussian
    /// elimination without pivoting in double-double. `beta` lists the
    /// potential on the free vertices in increasing order. Meant for small
    /// graphs.
    pub fn root_solve(g: &WeightedGraph, beta: &[Dd]) -> Result<f64> {
        let free = g.free_vertices();
        let n = free.len();
        if beta.len() != n {
            return invalid("one potential value per free vertex");
        }
        let Some(root) = g.root().and_then(|r| free.iter().position(|&v| v == r)) else {
            return invalid("root must be a free vertex");
        };
        let field = g.boundary_field();
        let zero = Dd::from(0.0);
        let mut h = vec![zero; n * n];
        let mut b: Vec<Dd> = free.iter().map(|&v| Dd::from(field[v])).collect();
        for i in 0..n {
            h[i * n + i] = beta[i] - Dd::from(g.conductance(free[i], free[i]));
            for j in 0..n {
                if i != j {
                    h[i * n + j] = -Dd::from(g.conductance(free[i], free[j]));
                }
            }
        }
        for k in 0..n {
            let piv = h[k * n + k];
            if !(piv.hi > 0.0) {
                return invalid(format!("nonpositive pivot at vertex {}", free[k]));
            }
            for i in k + 1..n {
                if h[i * n + k].hi == 0.0 {
                    continue;
                }
                let f = h[i * n + k] / piv;
                for j in k..n {
                    h[i * n + j] = h[i * n + j] - f * h[k * n + j];
                }
                b[i] = b[i] - f * b[k];
            }
        }
        let mut x = vec![zero; n];
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..n {
                s = s - h[i * n + j] * x[j];
            }
            x[i] = s / h[i * n + i];
        }
        Ok(x[root].to_f64())
    }

}
