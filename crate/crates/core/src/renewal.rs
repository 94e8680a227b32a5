//! Level masses on half-space strips and their renewal structure across a
//! horizontal cut: exit distribution on the cut, the effective graph above
//! it, slab masses, the conditional-expectation sequence built by revealing
//! cut vertices one at a time, and an inverse Gaussian tail check.
//!
//! Levels are read from the last coordinate of free vertices. `M_k` is the
//! start-inclusive path mass from the root through levels `< k` into level
//! `k` (into `top` when `k` is the height). `M_0 = 1`.

use std::collections::BTreeMap;

use crate::beta::{condition_params, ig_truncated_second_moment, ig_upper_tail};
use crate::error::{invalid, Error, Result};
use crate::graph::{VertexClass, WeightedGraph};
use crate::linalg::SpdFactor;
use crate::schrodinger::{exit_field, factor_region};

/// Relative tolerance of the renewal identity.
pub const RENEWAL_TOLERANCE: f64 = 1e-10;
/// Relative tolerance when comparing the two Schur complement routes.
pub const SCHUR_TOLERANCE: f64 = 1e-12;

/// Level of a vertex: last coordinate, `None` for vertices without one.
pub fn level_of(g: &WeightedGraph, v: usize) -> Option<i64> {
    g.coords(v).and_then(|c| c.last().copied())
}

/// Number of levels spanned by the free vertices.
pub fn height(g: &WeightedGraph) -> Result<usize> {
    let mut top = -1i64;
    for v in g.free_vertices() {
        match level_of(g, v) {
            Some(l) if l >= 0 => top = top.max(l),
            _ => return invalid(format!("free vertex {v} has no nonnegative level")),
        }
    }
    if top < 0 {
        return invalid("graph has no free vertices");
    }
    Ok(top as usize + 1)
}

fn levels_in(g: &WeightedGraph, lo: usize, hi: usize) -> Vec<usize> {
    g.free_vertices()
        .into_iter()
        .filter(|&v| level_of(g, v).is_some_and(|l| l >= lo as i64 && l < hi as i64))
        .collect()
}

/// Free vertices below level `k`.
pub fn region_below(g: &WeightedGraph, k: usize) -> Vec<usize> {
    levels_in(g, 0, k)
}

/// Free vertices on level `k`, in lexicographic coordinate order.
pub fn cut_vertices(g: &WeightedGraph, k: usize) -> Vec<usize> {
    let mut cut = levels_in(g, k, k + 1);
    cut.sort_by(|&a, &b| g.coords(a).cmp(&g.coords(b)));
    cut
}

/// Conductance from each region vertex into level `target` (into `top`
/// when `target` equals the height).
fn target_field(g: &WeightedGraph, region: &[usize], target: usize, h: usize) -> Vec<f64> {
    region
        .iter()
        .map(|&v| {
            g.neighbors(v)
                .filter(|&(y, _)| {
                    y != v
                        && if target == h {
                            g.class(y) == VertexClass::Top
                        } else {
                            !g.is_absorbing(y) && level_of(g, y) == Some(target as i64)
                        }
                })
                .map(|(_, c)| c)
                .sum()
        })
        .collect()
}

fn check_root(g: &WeightedGraph) -> Result<usize> {
    match g.root() {
        Some(r) if level_of(g, r) == Some(0) && !g.is_absorbing(r) => Ok(r),
        _ => invalid("root must be a free vertex on level 0"),
    }
}

/// `M_k`.
pub fn level_mass(g: &WeightedGraph, beta: &[f64], k: usize) -> Result<f64> {
    let h = height(g)?;
    let root = check_root(g)?;
    if k > h {
        return invalid(format!("level {k} exceeds height {h}"));
    }
    if k == 0 {
        return Ok(1.0);
    }
    let region = region_below(g, k);
    let f = factor_region(g, beta, &region)?;
    let x = f.solve(&target_field(g, &region, k, h));
    Ok(x[region.binary_search(&root).expect("root is below every positive level")])
}

/// `M_1, ..., M_N` with `N` the height.
pub fn martingale_path(g: &WeightedGraph, beta: &[f64]) -> Result<Vec<f64>> {
    let h = height(g)?;
    (1..=h).map(|k| level_mass(g, beta, k)).collect()
}

/// Where paths from the root first reach level `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct CutExit {
    pub cut_level: usize,
    /// `M_k`.
    pub mass: f64,
    /// Cut vertex to probability; sums to one.
    pub alpha: BTreeMap<usize, f64>,
}

/// Exit distribution on level `k` (`0 <= k < height`).
pub fn exit_distribution(g: &WeightedGraph, beta: &[f64], k: usize) -> Result<CutExit> {
    let h = height(g)?;
    let root = check_root(g)?;
    if k >= h {
        return invalid(format!("cut level {k} must be below the height {h}"));
    }
    if k == 0 {
        return Ok(CutExit { cut_level: 0, mass: 1.0, alpha: BTreeMap::from([(root, 1.0)]) });
    }
    let region = region_below(g, k);
    let f = factor_region(g, beta, &region)?;
    let mut row = vec![0.0; region.len()];
    row[region.binary_search(&root).expect("root below cut")] = 1.0;
    f.solve_in_place(&mut row);
    let mut alpha = BTreeMap::new();
    let mut mass = 0.0;
    for z in cut_vertices(g, k) {
        let num: f64 = region.iter().zip(&row).map(|(&u, r)| r * g.conductance(u, z)).sum();
        mass += num;
        alpha.insert(z, num);
    }
    if !(mass > 0.0) {
        return invalid(format!("no mass reaches level {k}"));
    }
    alpha.values_mut().for_each(|a| *a /= mass);
    Ok(CutExit { cut_level: k, mass, alpha })
}

/// Vertices kept above cut level `k`, in the order of the graph returned by
/// [`check_conductances`]: free vertices on levels `>= k` (increasing id),
/// then every absorbing vertex (increasing id).
pub fn above_cut_vertices(g: &WeightedGraph, k: usize) -> Vec<usize> {
    let mut out: Vec<usize> = g
        .free_vertices()
        .into_iter()
        .filter(|&v| level_of(g, v).is_some_and(|l| l >= k as i64))
        .collect();
    out.extend((0..g.num_vertices()).filter(|&v| g.is_absorbing(v)));
    out
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// The graph above cut level `k` after integrating out the region below:
/// each pair of kept vertices gains the excursion mass `W Ĝ W` through the
/// region (self-loops included), and explicit boundary field of the region
/// is pushed onto the kept vertices. The result is cross-checked against
/// [`condition_params`] on the region below.
pub fn check_conductances(g: &WeightedGraph, beta: &[f64], k: usize) -> Result<WeightedGraph> {
    let h = height(g)?;
    if k >= h {
        return invalid(format!("cut level {k} must be below the height {h}"));
    }
    let region = region_below(g, k);
    let kept = above_cut_vertices(g, k);
    let mut pos = vec![usize::MAX; g.num_vertices()];
    let mut out = WeightedGraph::new();
    for (i, &v) in kept.iter().enumerate() {
        pos[v] = i;
        let nv = out.add_vertex(g.class(v), g.eta(v))?;
        out.set_coords(nv, g.coords(v).map(<[i64]>::to_vec))?;
    }
    for (a, b, c) in g.edges() {
        if pos[a] != usize::MAX && pos[b] != usize::MAX {
            out.add_conductance(pos[a], pos[b], c)?;
        }
    }
    let root = g.root().filter(|&r| pos[r] != usize::MAX).map(|r| pos[r]);
    out.set_root(root)?;

    if !region.is_empty() {
        let f = factor_region(g, beta, &region)?;
        schur_onto(g, &region, &f, &kept, &pos, &mut out)?;
    }
    verify_against_conditioning(g, beta, &region, &kept, &out)?;
    Ok(out)
}

fn schur_onto(
    g: &WeightedGraph,
    region: &[usize],
    f: &SpdFactor,
    kept: &[usize],
    pos: &[usize],
    out: &mut WeightedGraph,
) -> Result<()> {
    let n = region.len();
    let mut in_region = vec![usize::MAX; g.num_vertices()];
    for (i, &u) in region.iter().enumerate() {
        in_region[u] = i;
    }
    // kept vertices touching the region, with their column into it
    let mut touching: Vec<(usize, Vec<f64>)> = Vec::new();
    for &x in kept {
        let mut col = vec![0.0; n];
        let mut any = false;
        for (y, c) in g.neighbors(x) {
            if in_region[y] != usize::MAX {
                col[in_region[y]] = c;
                any = true;
            }
        }
        if any {
            touching.push((x, col));
        }
    }
    let explicit: Vec<f64> = region.iter().map(|&u| g.eta(u)).collect();
    for (i, (x, col_x)) in touching.iter().enumerate() {
        if g.is_absorbing(*x) {
            continue;
        }
        let sol = f.solve(col_x);
        let extra_eta: f64 = sol.iter().zip(&explicit).map(|(a, b)| a * b).sum();
        if extra_eta != 0.0 {
            let px = pos[*x];
            out.set_eta(px, out.eta(px) + extra_eta)?;
        }
        for (j, (y, col_y)) in touching.iter().enumerate() {
            // free pairs once each; free-to-absorbing always from the free side
            if !g.is_absorbing(*y) && j < i {
                continue;
            }
            let v: f64 = sol.iter().zip(col_y).map(|(a, b)| a * b).sum();
            if v > 0.0 {
                out.add_conductance(pos[*x], pos[*y], v)?;
            }
        }
    }
    Ok(())
}

fn verify_against_conditioning(
    g: &WeightedGraph,
    beta: &[f64],
    region: &[usize],
    kept: &[usize],
    out: &WeightedGraph,
) -> Result<()> {
    let spec = condition_params(g, region, beta)?;
    let free_kept: Vec<usize> = kept.iter().copied().filter(|&v| !g.is_absorbing(v)).collect();
    if spec.support != free_kept {
        return invalid("conditioning support differs from the kept free vertices");
    }
    let field = out.boundary_field();
    let s = spec.len();
    for a in 0..s {
        let e = relative_gap(spec.eta_check[a], field[a]);
        if e > SCHUR_TOLERANCE {
            return Err(Error::IdentityViolation {
                instance: format!("boundary field above cut at vertex {}", spec.support[a]),
                relative_error: e,
                tolerance: SCHUR_TOLERANCE,
            });
        }
        for b in a..s {
            let e = relative_gap(spec.w(a, b), out.conductance(a, b));
            if e > SCHUR_TOLERANCE {
                return Err(Error::IdentityViolation {
                    instance: format!("conductance above cut {}-{}", spec.support[a], spec.support[b]),
                    relative_error: e,
                    tolerance: SCHUR_TOLERANCE,
                });
            }
        }
    }
    Ok(())
}

/// Restrict a potential vector to the graph of [`check_conductances`].
pub fn potential_above_cut(g: &WeightedGraph, beta: &[f64], k: usize) -> Vec<f64> {
    above_cut_vertices(g, k)
        .into_iter()
        .map(|v| if g.is_absorbing(v) { f64::NAN } else { beta[v] })
        .collect()
}

/// Slab masses from each vertex on level `k` of `above` (a graph from
/// [`check_conductances`]) through levels `k..k+ell` into level `k + ell`.
pub fn slab_masses(above: &WeightedGraph, beta: &[f64], k: usize, ell: usize) -> Result<BTreeMap<usize, f64>> {
    let h = height(above)?;
    if k + ell > h {
        return invalid(format!("slab {k}+{ell} exceeds height {h}"));
    }
    let cut = cut_vertices(above, k);
    if ell == 0 {
        return Ok(cut.into_iter().map(|z| (z, 1.0)).collect());
    }
    let region = levels_in(above, k, k + ell);
    let f = factor_region(above, beta, &region)?;
    let x = f.solve(&target_field(above, &region, k + ell, h));
    Ok(cut
        .into_iter()
        .map(|z| (z, x[region.binary_search(&z).expect("cut lies in the slab")]))
        .collect())
}

/// Factorization of `M_{k+ell}` across the cut at level `k`.
#[derive(Clone, Debug)]
pub struct RenewalDecomposition {
    pub cut_level: usize,
    pub slab: usize,
    /// Keyed by vertex of the original graph.
    pub alpha: BTreeMap<usize, f64>,
    /// The graph above the cut; see [`above_cut_vertices`] for its order.
    pub w_check_graph: WeightedGraph,
    /// Keyed by vertex of the original graph.
    pub m_check: BTreeMap<usize, f64>,
    pub mass_at_cut: f64,
    pub product_value: f64,
    pub direct_value: f64,
    pub relative_error: f64,
}

/// Compute both sides of `M_{k+ell} = M_k sum_z alpha_z Mcheck_ell(z)` and
/// fail with [`Error::IdentityViolation`] beyond [`RENEWAL_TOLERANCE`].
pub fn renewal_decompose(g: &WeightedGraph, beta: &[f64], k: usize, ell: usize) -> Result<RenewalDecomposition> {
    let h = height(g)?;
    if k >= h || k + ell > h {
        return invalid(format!("need k < {h} and k + ell <= {h}, got k={k} ell={ell}"));
    }
    let cut = exit_distribution(g, beta, k)?;
    let above = check_conductances(g, beta, k)?;
    let kept = above_cut_vertices(g, k);
    let beta_above = potential_above_cut(g, beta, k);
    let local = slab_masses(&above, &beta_above, k, ell)?;
    let m_check: BTreeMap<usize, f64> = local.into_iter().map(|(z, m)| (kept[z], m)).collect();
    let sum: f64 = cut.alpha.iter().map(|(z, a)| a * m_check[z]).sum();
    let product_value = cut.mass * sum;
    let direct_value = level_mass(g, beta, k + ell)?;
    let relative_error = relative_gap(product_value, direct_value);
    if !(relative_error <= RENEWAL_TOLERANCE) {
        return Err(Error::IdentityViolation {
            instance: format!("renewal at cut {k}, slab {ell}"),
            relative_error,
            tolerance: RENEWAL_TOLERANCE,
        });
    }
    Ok(RenewalDecomposition {
        cut_level: k,
        slab: ell,
        alpha: cut.alpha,
        w_check_graph: above,
        m_check,
        mass_at_cut: cut.mass,
        product_value,
        direct_value,
        relative_error,
    })
}

/// Order in which cut vertices are revealed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Enumeration {
    #[default]
    Lexicographic,
    Reversed,
}

/// Cut vertices of level `k` in revealing order.
pub fn enumerate_cut(g: &WeightedGraph, k: usize, order: Enumeration) -> Vec<usize> {
    let mut cut = cut_vertices(g, k);
    if order == Enumeration::Reversed {
        cut.reverse();
    }
    cut
}

/// The region below level `k` together with the first `n` revealed cut
/// vertices, sorted.
pub fn revealed_region(g: &WeightedGraph, k: usize, order: Enumeration, n: usize) -> Vec<usize> {
    let mut r = region_below(g, k);
    r.extend(enumerate_cut(g, k, order).into_iter().take(n));
    r.sort_unstable();
    r
}

fn require_edgeless_side(g: &WeightedGraph) -> Result<()> {
    for v in g.vertices_of_class(VertexClass::Side) {
        if g.degree(v) > 0 {
            return invalid("conditional slab expectations need a strip with free side boundary");
        }
    }
    Ok(())
}

/// `psi` on a region as a region-indexed vector.
fn region_psi(g: &WeightedGraph, beta: &[f64], region: &[usize]) -> Result<Vec<f64>> {
    if region.is_empty() {
        return Ok(Vec::new());
    }
    let f = factor_region(g, beta, region)?;
    Ok(f.solve(&exit_field(g, region, None)))
}

/// Conditional mean of the one-level slab mass from cut vertex `z` given the
/// potential on the revealed region `Λ_n`: `psi` of `Λ_n` at `z` when
/// `z` is revealed, else 1. Only `beta` on `Λ_n` is read.
pub fn conditional_expectation_mcheck(
    g: &WeightedGraph,
    beta: &[f64],
    k: usize,
    order: Enumeration,
    n: usize,
    z: usize,
) -> Result<f64> {
    require_edgeless_side(g)?;
    let region = revealed_region(g, k, order, n);
    let Ok(i) = region.binary_search(&z) else {
        return Ok(1.0);
    };
    Ok(region_psi(g, beta, &region)?[i])
}

/// One revealing step `n-1 -> n`.
#[derive(Clone, Debug, PartialEq)]
pub struct OvershootStep {
    pub n: usize,
    pub vertex: usize,
    pub x_prev: f64,
    pub y_prev: f64,
    /// `psi` of `Λ_n` at the revealed vertex.
    pub z: f64,
    /// Inverse Gaussian shape of `z` given the previous step.
    pub z_shape: f64,
    /// `|X + Y - R_{n-1}| / R_{n-1}`.
    pub split_error: f64,
    /// `|X Z + Y - R_n| / R_n`.
    pub step_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OvershootTrace {
    pub cut_level: usize,
    pub threshold_t: f64,
    pub threshold_b: f64,
    /// `M_1, ..., M_N`.
    pub martingale_path: Vec<f64>,
    /// First `n >= 1` with `M_n > t`.
    pub tau: Option<usize>,
    pub enumeration: Vec<usize>,
    /// `R_0, ..., R_m` with `m` the number of cut vertices.
    pub r_sequence: Vec<f64>,
    pub steps: Vec<OvershootStep>,
    /// First `n` with `R_n >= 2B`.
    pub big_t: Option<usize>,
}

/// Reveal the cut at level `k` vertex by vertex and record the
/// conditional-expectation sequence with its one-step decomposition, plus
/// the level-mass path and both stopping times.
pub fn overshoot_trace(
    g: &WeightedGraph,
    beta: &[f64],
    k: usize,
    t: f64,
    b: f64,
    order: Enumeration,
) -> Result<OvershootTrace> {
    require_edgeless_side(g)?;
    let path = martingale_path(g, beta)?;
    let tau = path.iter().position(|&m| m > t).map(|i| i + 1);
    let cut = exit_distribution(g, beta, k)?;
    let seq = enumerate_cut(g, k, order);
    let mut r_sequence = Vec::with_capacity(seq.len() + 1);
    let mut steps = Vec::with_capacity(seq.len());
    r_sequence.push(cut.alpha.values().sum::<f64>());
    let alpha = |v: usize| cut.alpha.get(&v).copied().unwrap_or(0.0);

    for n in 1..=seq.len() {
        let zn = seq[n - 1];
        let prev = revealed_region(g, k, order, n - 1);
        let cur = revealed_region(g, k, order, n);
        let revealed_prev = &seq[..n - 1];
        let hidden_now = &seq[n..];

        // R_n from psi on Λ_n
        let psi_cur = region_psi(g, beta, &cur)?;
        let psi_at = |v: usize| cur.binary_search(&v).map(|i| psi_cur[i]).unwrap_or(1.0);
        let r_n: f64 = seq.iter().map(|&z| alpha(z) * psi_at(z)).sum();
        let z_val = psi_at(zn);

        // X, Y from the Green function of Λ_{n-1}
        let mut a = vec![0.0; prev.len()];
        if !prev.is_empty() {
            for &z in revealed_prev {
                a[prev.binary_search(&z).expect("revealed")] = alpha(z);
            }
            factor_region(g, beta, &prev)?.solve_in_place(&mut a);
        }
        let exits_cur = exit_field(g, &cur, None);
        let mut x_prev = alpha(zn);
        let mut y_prev: f64 = hidden_now.iter().map(|&z| alpha(z)).sum();
        for (i, &w) in prev.iter().enumerate() {
            x_prev += a[i] * g.conductance(w, zn);
            y_prev += a[i] * exits_cur[cur.binary_search(&w).expect("nested")];
        }

        let spec = condition_params(g, &prev, beta)?;
        let j = spec.support.binary_search(&zn).expect("unrevealed vertex is in the support");
        let z_shape =
            spec.eta_check[j] + (0..spec.len()).filter(|&c| c != j).map(|c| spec.w(j, c)).sum::<f64>();

        let r_prev = r_sequence[n - 1];
        steps.push(OvershootStep {
            n,
            vertex: zn,
            x_prev,
            y_prev,
            z: z_val,
            z_shape,
            split_error: relative_gap(x_prev + y_prev, r_prev),
            step_error: relative_gap(x_prev * z_val + y_prev, r_n),
        });
        r_sequence.push(r_n);
    }
    let big_t = r_sequence.iter().position(|&r| r >= 2.0 * b);
    Ok(OvershootTrace {
        cut_level: k,
        threshold_t: t,
        threshold_b: b,
        martingale_path: path,
        tau,
        enumeration: seq,
        r_sequence,
        steps,
        big_t,
    })
}

/// `sum_{j>=1} (j+1)^2 exp(-(j-1) lambda0 / 2)`.
pub fn ig_tail_constant(lambda0: f64) -> Result<f64> {
    if !(lambda0 > 0.0) {
        return invalid("lambda0 must be positive");
    }
    let q = (-lambda0 / 2.0).exp();
    let mut sum = 0.0;
    let mut j = 1u32;
    loop {
        let term = ((j + 1) as f64).powi(2) * q.powi(j as i32 - 1);
        sum += term;
        if term < 1e-17 * sum || j > 1_000_000 {
            return Ok(sum);
        }
        j += 1;
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IgTailRow {
    pub lambda: f64,
    pub a: f64,
    /// `E[Z^2 1{Z >= A}] / (A^2 P(Z >= A))` for `Z ~ IG(1, lambda)`.
    pub ratio: f64,
    pub bound: f64,
}

impl IgTailRow {
    pub fn holds(&self) -> bool {
        self.ratio <= self.bound
    }
}

/// Truncated second-moment ratios on a grid, each against the constant for
/// `lambda0`. Requires every `lambda >= lambda0` and `A >= 2`.
pub fn ig_tail_check(lambda0: f64, lambdas: &[f64], a_grid: &[f64]) -> Result<Vec<IgTailRow>> {
    let bound = ig_tail_constant(lambda0)?;
    let mut rows = Vec::new();
    for &lambda in lambdas {
        if !(lambda >= lambda0) {
            return invalid(format!("lambda {lambda} below lambda0 {lambda0}"));
        }
        for &a in a_grid {
            if !(a >= 2.0) {
                return invalid(format!("threshold {a} below 2"));
            }
            let tail = ig_upper_tail(a, lambda)?;
            let second = ig_truncated_second_moment(a, lambda)?;
            if !(tail > 0.0) {
                return Err(Error::Quadrature { lo: a, hi: f64::INFINITY, estimate: tail });
            }
            rows.push(IgTailRow { lambda, a, ratio: second / (a * a * tail), bound });
        }
    }
    Ok(rows)
}

/// `(x, t, P(Z >= x + t), exp(-t lambda / 4) P(Z >= x))` for `Z ~ IG(1, lambda)`.
pub fn ig_tail_shift_check(lambda: f64, xs: &[f64], ts: &[f64]) -> Result<Vec<(f64, f64, f64, f64)>> {
    let mut out = Vec::new();
    for &x in xs {
        let base = ig_upper_tail(x, lambda)?;
        for &t in ts {
            out.push((x, t, ig_upper_tail(x + t, lambda)?, (-t * lambda / 4.0).exp() * base));
        }
    }
    Ok(out)
}
