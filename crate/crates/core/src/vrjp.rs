//! Continuous-time simulation of the reinforced walk (annealed dynamics)
//! and of the Markov jump process it mixes (quenched dynamics).
//!
//! Both processes run until they enter an absorbing vertex, reach the time
//! horizon, or exhaust the jump budget.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::beta::{schrodinger_block, BetaSampler};
use crate::error::{invalid, Result};
use crate::graph::{VertexClass, WeightedGraph};
use crate::linalg::cholesky;
use crate::mc::{derive_seed, map_replicates, run_replicates, two_sample_z, EstimatorSummary};
use crate::schrodinger::boundary_split;

pub const DEFAULT_JUMP_BUDGET: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StopRule {
    pub horizon: f64,
    pub jump_budget: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule { horizon: f64::INFINITY, jump_budget: DEFAULT_JUMP_BUDGET }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub start: usize,
    /// `(vertex entered, jump time)`, one per jump.
    pub events: Vec<(usize, f64)>,
    /// Time spent at each vertex.
    pub local_time: Vec<f64>,
    /// Class of the absorbing vertex entered, or `cemetery` for a jump
    /// through explicit boundary field (which has no event vertex).
    pub exit_class: Option<VertexClass>,
    pub clock: f64,
    /// The jump budget ran out first.
    pub truncated: bool,
}

impl Trajectory {
    /// Local times rebuilt from the event list.
    pub fn local_time_from_events(&self) -> Vec<f64> {
        let mut l = vec![0.0; self.local_time.len()];
        let mut at = self.start;
        let mut since = 0.0;
        for &(v, t) in &self.events {
            l[at] += t - since;
            at = v;
            since = t;
        }
        if !l.is_empty() {
            l[at] += self.clock - since;
        }
        l
    }
}

/// Outgoing rates at `x`: `(target, rate)`; target `None` is explicit
/// boundary field.
fn race<R: Rng + ?Sized>(rates: &[(Option<usize>, f64)], rng: &mut R) -> Option<(Option<usize>, f64)> {
    let total: f64 = rates.iter().map(|r| r.1).sum();
    if !(total > 0.0) {
        return None;
    }
    let e: f64 = Exp1.sample(rng);
    let hold = e / total;
    let mut u = rng.random::<f64>() * total;
    for &(y, r) in rates {
        if u < r {
            return Some((y, hold));
        }
        u -= r;
    }
    // rounding at the far end
    rates.iter().rev().find(|r| r.1 > 0.0).map(|r| (r.0, hold))
}

fn run<R, F>(g: &WeightedGraph, start: usize, stop: StopRule, rng: &mut R, mut rates_at: F) -> Result<Trajectory>
where
    R: Rng + ?Sized,
    F: FnMut(usize, &[f64], &mut Vec<(Option<usize>, f64)>),
{
    if start >= g.num_vertices() || g.is_absorbing(start) {
        return invalid(format!("start {start} must be a non-absorbing vertex"));
    }
    if !(stop.horizon >= 0.0) {
        return invalid("horizon must be nonnegative");
    }
    let mut tr = Trajectory {
        start,
        events: Vec::new(),
        local_time: vec![0.0; g.num_vertices()],
        exit_class: None,
        clock: 0.0,
        truncated: false,
    };
    let mut x = start;
    let mut rates = Vec::new();
    loop {
        if tr.events.len() >= stop.jump_budget {
            tr.truncated = true;
            return Ok(tr);
        }
        rates.clear();
        rates_at(x, &tr.local_time, &mut rates);
        let step = race(&rates, rng);
        let (y, hold) = match step {
            Some(s) if tr.clock + s.1 < stop.horizon => s,
            _ => {
                // no move before the horizon (or nowhere to go)
                if stop.horizon.is_finite() {
                    tr.local_time[x] += stop.horizon - tr.clock;
                    tr.clock = stop.horizon;
                }
                return Ok(tr);
            }
        };
        // increments as differences of event times, so the event list
        // reproduces the local times exactly
        let next = tr.clock + hold;
        tr.local_time[x] += next - tr.clock;
        tr.clock = next;
        match y {
            None => {
                tr.exit_class = Some(VertexClass::Cemetery);
                return Ok(tr);
            }
            Some(y) => {
                tr.events.push((y, tr.clock));
                if g.is_absorbing(y) {
                    tr.exit_class = Some(g.class(y));
                    return Ok(tr);
                }
                x = y;
            }
        }
    }
}

/// The reinforced walk: from `x` jump to `y` at rate `W(x,y) (1 + L_y)`.
/// Local times of other vertices are frozen during a sojourn, so each
/// sojourn is a single exponential race.
pub fn simulate_vrjp<R: Rng + ?Sized>(g: &WeightedGraph, start: usize, stop: StopRule, rng: &mut R) -> Result<Trajectory> {
    run(g, start, stop, rng, |x, l, out| {
        for (y, c) in g.neighbors(x) {
            if y != x {
                out.push((Some(y), c * (1.0 + l[y])));
            }
        }
        if g.eta(x) > 0.0 {
            out.push((None, g.eta(x)));
        }
    })
}

/// `G(i0, .)` on every vertex of `g`, absorbing ones included.
fn green_row_closed(g: &WeightedGraph, beta: &[f64], i0: usize) -> Result<Vec<f64>> {
    let n = g.num_vertices();
    if beta.len() != n || beta.iter().any(|b| !b.is_finite()) {
        return invalid("quenched dynamics need a finite potential on every vertex");
    }
    if (0..n).any(|v| g.eta(v) != 0.0) {
        return invalid("quenched dynamics run on a closed graph (no explicit boundary field)");
    }
    let all: Vec<usize> = (0..n).collect();
    let f = cholesky(&schrodinger_block(g, beta, &all), n, &all)?;
    let mut e = vec![0.0; n];
    e[i0] = 1.0;
    f.solve_in_place(&mut e);
    Ok(e)
}

/// The mixed Markov jump process: rate `W(i,j) G(i0,j) / G(i0,i)` with the
/// Green function of `diag(beta) - W` on all of `g`. `beta` must cover every
/// vertex (for instance a draw on [`WeightedGraph::closed`]); the process
/// still stops on entering a vertex that is absorbing in `g`.
pub fn simulate_quenched<R: Rng + ?Sized>(
    g: &WeightedGraph,
    beta: &[f64],
    i0: usize,
    stop: StopRule,
    rng: &mut R,
) -> Result<Trajectory> {
    if i0 >= g.num_vertices() {
        return invalid(format!("start {i0} out of range"));
    }
    let h = green_row_closed(g, beta, i0)?;
    run(g, i0, stop, rng, |x, _, out| {
        for (y, c) in g.neighbors(x) {
            if y != x {
                out.push((Some(y), c * h[y] / h[x]));
            }
        }
    })
}

/// Jump chain of [`simulate_quenched`].
#[derive(Clone, Debug, PartialEq)]
pub struct Skeleton {
    /// `G(i0, .)`.
    pub h: Vec<f64>,
    /// Total jump rate out of each vertex, scaled by `1 / h`: equals
    /// `beta` away from the start.
    pub beta_tilde: Vec<f64>,
    /// Row-major transition matrix over all vertices (rows of absorbing
    /// vertices are zero).
    pub p: Vec<f64>,
}

pub fn quenched_skeleton(g: &WeightedGraph, beta: &[f64], i0: usize) -> Result<Skeleton> {
    let n = g.num_vertices();
    let h = green_row_closed(g, beta, i0)?;
    let mut p = vec![0.0; n * n];
    let mut beta_tilde = vec![0.0; n];
    for x in 0..n {
        if g.is_absorbing(x) {
            continue;
        }
        let total: f64 = g.neighbors(x).filter(|&(y, _)| y != x).map(|(y, c)| c * h[y] / h[x]).sum();
        beta_tilde[x] = total;
        for (y, c) in g.neighbors(x) {
            if y != x {
                p[x * n + y] = c * h[y] / h[x] / total;
            }
        }
    }
    Ok(Skeleton { h, beta_tilde, p })
}

/// Probability that the jump chain from `i0` leaves through each edge
/// `(free vertex, absorbing vertex)`, from expected visit counts of the
/// transient part. Reversibility makes `diag(beta_tilde h^2) (I - P)`
/// symmetric positive definite there.
pub fn skeleton_exit_flux(g: &WeightedGraph, sk: &Skeleton, i0: usize) -> Result<BTreeMap<(usize, usize), f64>> {
    let n = g.num_vertices();
    let free: Vec<usize> = (0..n).filter(|&v| !g.is_absorbing(v)).collect();
    let k = free.len();
    let weight: Vec<f64> = free.iter().map(|&v| sk.beta_tilde[v] * sk.h[v] * sk.h[v]).collect();
    let mut s = vec![0.0; k * k];
    for (a, &u) in free.iter().enumerate() {
        for (b, &v) in free.iter().enumerate() {
            let id = if a == b { 1.0 } else { 0.0 };
            s[a * k + b] = weight[a] * (id - sk.p[u * n + v]);
        }
    }
    for a in 0..k {
        for b in 0..a {
            let m = 0.5 * (s[a * k + b] + s[b * k + a]);
            s[a * k + b] = m;
            s[b * k + a] = m;
        }
    }
    let f = cholesky(&s, k, &free)?;
    let Some(start) = free.iter().position(|&v| v == i0) else {
        return invalid("start must be a free vertex");
    };
    let mut y = vec![0.0; k];
    y[start] = 1.0;
    f.solve_in_place(&mut y);
    let mut out = BTreeMap::new();
    for (a, &u) in free.iter().enumerate() {
        let visits = y[a] * weight[a];
        for (v, _) in g.neighbors(u) {
            if g.is_absorbing(v) {
                out.insert((u, v), visits * sk.p[u * n + v]);
            }
        }
    }
    Ok(out)
}

/// Two estimates of the probability that the walk from the root leaves a
/// half-space box through its side.
#[derive(Clone, Debug, PartialEq)]
pub struct ExitEstimate {
    /// Mean over potential draws of `side mass / total mass`.
    pub mass_ratio: EstimatorSummary,
    /// Side-exit frequency of the reinforced walk (truncated runs excluded).
    pub walk_frequency: EstimatorSummary,
    pub truncated: usize,
    pub walks: usize,
}

impl ExitEstimate {
    pub fn truncation_rate(&self) -> f64 {
        self.truncated as f64 / self.walks.max(1) as f64
    }

    /// The walk estimate is void when more than 1% of runs were cut short.
    pub fn walk_estimate_valid(&self) -> bool {
        self.truncation_rate() <= 0.01
    }

    pub fn z(&self) -> f64 {
        two_sample_z(&self.mass_ratio, &self.walk_frequency)
    }
}

pub fn exit_probability_annealed(
    g: &WeightedGraph,
    replicates: usize,
    seed: u64,
    workers: usize,
    stop: StopRule,
) -> Result<ExitEstimate> {
    let root = g.root().ok_or_else(|| crate::Error::InvalidParameter("graph has no root".into()))?;
    let free = g.free_vertices();
    let sampler = BetaSampler::new(g, None)?;
    let ratio = run_replicates(
        |rng| {
            let beta = sampler.sample(rng)?;
            let split = boundary_split(g, &beta, &free)?;
            let total: f64 = split.iter().filter(|(c, _)| c.is_absorbing()).map(|(_, m)| m).sum();
            let side = split.get(&VertexClass::Side).copied().unwrap_or(0.0);
            Ok(vec![side / total])
        },
        replicates,
        derive_seed(seed, 0),
        workers,
    )?;
    let walks = map_replicates(replicates, derive_seed(seed, 1), workers, |rng| {
        let tr = simulate_vrjp(g, root, stop, rng)?;
        Ok((!tr.truncated).then(|| if tr.exit_class == Some(VertexClass::Side) { 1.0 } else { 0.0 }))
    })?;
    let truncated = walks.values.iter().filter(|v| v.is_none()).count();
    let xs: Vec<f64> = walks.values.into_iter().flatten().collect();
    let walk_frequency = EstimatorSummary::from_slice(&xs);
    Ok(ExitEstimate { mass_ratio: ratio.summaries[0], walk_frequency, truncated, walks: replicates })
}
