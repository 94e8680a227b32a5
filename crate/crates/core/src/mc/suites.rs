use super::{cell, derive_seed, opt_cell, run_replicates, two_sample_z, EstimatorSummary, Table, SIGMA_POLICY};
use crate::beta::BetaSampler;
use crate::error::{invalid, Error, Result};
use crate::graph::{build_box_lattice, WeightedGraph};
use crate::renewal::martingale_path;
use crate::schrodinger::root_psi;

/// Values below this are treated as a failed draw rather than raised to a
/// negative power.
const NEGATIVE_MOMENT_FLOOR: f64 = 1e-300;

/// Conductance grid of a suite.
pub type WeightGrid = Vec<f64>;

pub(crate) fn root_psi_draw(g: &WeightedGraph, sampler: &BetaSampler, rng: &mut rand_chacha::ChaCha8Rng) -> Result<f64> {
    let beta = sampler.sample(rng)?;
    let psi = root_psi(g, &beta, &g.free_vertices())?;
    if !(psi > NEGATIVE_MOMENT_FLOOR) {
        let root = g.root().unwrap_or(0);
        return Err(Error::DegenerateSample { vertex: root, pivot: psi });
    }
    Ok(psi)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentRow {
    pub w: f64,
    /// Moment order, or `None` for the paired difference `psi^-2 - psi^3`.
    pub p: Option<i32>,
    pub summary: EstimatorSummary,
}

impl MomentRow {
    /// Exact value the row is tested against, when there is one.
    pub fn target(&self) -> Option<f64> {
        match self.p {
            None => Some(0.0),
            Some(1) => Some(1.0),
            _ => None,
        }
    }

    pub fn z(&self) -> Option<f64> {
        self.target().map(|t| self.summary.z_against(t))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentTable {
    pub rows: Vec<MomentRow>,
    pub aborted: usize,
}

impl MomentTable {
    pub fn row(&self, w: f64, p: Option<i32>) -> Option<&MomentRow> {
        self.rows.iter().find(|r| r.w == w && r.p == p)
    }

    /// `E[psi^2]` does not increase along the grid beyond 4 joint standard
    /// errors, comparing neighbours in increasing `W`.
    pub fn second_moment_nonincreasing(&self) -> bool {
        let mut rows: Vec<&MomentRow> = self.rows.iter().filter(|r| r.p == Some(2)).collect();
        rows.sort_by(|a, b| a.w.total_cmp(&b.w));
        rows.windows(2).all(|p| two_sample_z(&p[1].summary, &p[0].summary) <= SIGMA_POLICY)
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["w", "statistic", "n", "mean", "ci95", "z"]);
        for r in &self.rows {
            let stat = match r.p {
                Some(p) => format!("psi^{p}"),
                None => "psi^-2-psi^3".to_string(),
            };
            t.push(vec![
                cell(r.w),
                stat,
                r.summary.n.to_string(),
                cell(r.summary.mean),
                opt_cell(r.summary.ci95()),
                opt_cell(r.z()),
            ]);
        }
        t
    }
}

/// `E[psi(root)^p]` for each conductance and moment order, plus the paired
/// difference `psi^-2 - psi^3` whose mean vanishes. Every conductance uses
/// the same replicate streams.
pub fn moment_suite<B>(build: B, w_grid: &[f64], p_set: &[i32], n: usize, seed: u64, workers: usize) -> Result<MomentTable>
where
    B: Fn(f64) -> Result<WeightedGraph>,
{
    if let Some(p) = p_set.iter().find(|p| ![-2, 1, 2, 3].contains(*p)) {
        return invalid(format!("moment order {p} not in {{-2, 1, 2, 3}}"));
    }
    let mut rows = Vec::new();
    let mut aborted = 0;
    for &w in w_grid {
        let g = build(w)?;
        let sampler = BetaSampler::new(&g, None)?;
        let run = run_replicates(
            |rng| {
                let psi = root_psi_draw(&g, &sampler, rng)?;
                let mut v: Vec<f64> = p_set.iter().map(|&p| psi.powi(p)).collect();
                v.push(psi.powi(-2) - psi.powi(3));
                Ok(v)
            },
            n,
            seed,
            workers,
        )?;
        aborted += run.aborted;
        for (i, &p) in p_set.iter().enumerate() {
            rows.push(MomentRow { w, p: Some(p), summary: run.summaries[i] });
        }
        rows.push(MomentRow { w, p: None, summary: run.summaries[p_set.len()] });
    }
    Ok(MomentTable { rows, aborted })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseRow {
    pub w: f64,
    pub n: i64,
    pub log_psi: EstimatorSummary,
    /// Fraction of replicates with `psi` below each threshold.
    pub below: Vec<(f64, EstimatorSummary)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSlope {
    pub w: f64,
    /// Weighted least-squares slope of `E[log psi_n]` against `n`.
    pub slope: f64,
    pub std_error: f64,
}

impl PhaseSlope {
    pub fn clearly_negative(&self) -> bool {
        self.slope + 1.96 * self.std_error < 0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseScan {
    pub rows: Vec<PhaseRow>,
    pub slopes: Vec<PhaseSlope>,
    /// Adjacent conductances between which the slope stops being clearly
    /// negative. An uncertified window, not an estimate of a critical point.
    pub crossover: Option<(f64, f64)>,
}

pub const PHASE_THRESHOLDS: [f64; 3] = [0.5, 0.1, 0.01];

impl PhaseScan {
    /// Slopes do not decrease along the grid beyond 4 joint standard errors.
    pub fn slopes_nondecreasing(&self) -> bool {
        self.slopes.windows(2).all(|p| {
            let se = (p[0].std_error.powi(2) + p[1].std_error.powi(2)).sqrt();
            p[1].slope >= p[0].slope - SIGMA_POLICY * se
        })
    }

    pub fn to_table(&self) -> Table {
        let mut header = vec!["w".to_string(), "n".into(), "replicates".into(), "mean_log_psi".into(), "ci95".into()];
        header.extend(PHASE_THRESHOLDS.iter().map(|t| format!("frac_below_{t}")));
        header.extend(["slope", "slope_se", "slope_nondecreasing"].map(String::from));
        let mut t = Table::new(header);
        for r in &self.rows {
            let s = self.slopes.iter().position(|s| s.w == r.w).expect("slope per conductance");
            let mono = s == 0 || {
                let (a, b) = (&self.slopes[s - 1], &self.slopes[s]);
                b.slope >= a.slope - SIGMA_POLICY * (a.std_error.powi(2) + b.std_error.powi(2)).sqrt()
            };
            let mut row = vec![
                cell(r.w),
                r.n.to_string(),
                r.log_psi.n.to_string(),
                cell(r.log_psi.mean),
                opt_cell(r.log_psi.ci95()),
            ];
            row.extend(r.below.iter().map(|(_, s)| cell(s.mean)));
            row.extend([cell(self.slopes[s].slope), cell(self.slopes[s].std_error), mono.to_string()]);
            t.push(row);
        }
        t
    }
}

pub(crate) fn weighted_slope(points: &[(f64, f64, f64)]) -> (f64, f64) {
    // (x, y, se); zero standard errors get a tiny floor
    let w: Vec<f64> = points.iter().map(|p| 1.0 / p.2.max(1e-12).powi(2)).collect();
    let sw: f64 = w.iter().sum();
    let xb = points.iter().zip(&w).map(|(p, wi)| wi * p.0).sum::<f64>() / sw;
    let yb = points.iter().zip(&w).map(|(p, wi)| wi * p.1).sum::<f64>() / sw;
    let sxx: f64 = points.iter().zip(&w).map(|(p, wi)| wi * (p.0 - xb).powi(2)).sum();
    let sxy: f64 = points.iter().zip(&w).map(|(p, wi)| wi * (p.0 - xb) * (p.1 - yb)).sum();
    (sxy / sxx, (1.0 / sxx).sqrt())
}

/// `E[log psi_n(0)]` on wired boxes of each radius and conductance, with
/// the fraction of small values and a per-conductance decay slope.
pub fn phase_scan(d: usize, n_grid: &[i64], w_grid: &[f64], reps: usize, seed: u64, workers: usize) -> Result<PhaseScan> {
    if d == 0 || d > 3 {
        return invalid("phase scan supports 1 <= d <= 3");
    }
    if n_grid.len() < 2 || n_grid.iter().any(|&n| !(1..=10).contains(&n)) {
        return invalid("phase scan needs at least two radii in 1..=10");
    }
    if w_grid.is_empty() || w_grid.len() > 16 {
        return invalid("phase scan needs 1 to 16 conductances");
    }
    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    for &w in w_grid {
        let mut points = Vec::new();
        for &n in n_grid {
            let g = build_box_lattice(d, n, w)?;
            let sampler = BetaSampler::new(&g, None)?;
            let run = run_replicates(
                |rng| {
                    let psi = root_psi_draw(&g, &sampler, rng)?;
                    let mut v = vec![psi.ln()];
                    v.extend(PHASE_THRESHOLDS.iter().map(|&t| if psi < t { 1.0 } else { 0.0 }));
                    Ok(v)
                },
                reps,
                derive_seed(seed, n as u64),
                workers,
            )?;
            let log_psi = run.summaries[0];
            points.push((n as f64, log_psi.mean, log_psi.std_error().unwrap_or(0.0)));
            let below = PHASE_THRESHOLDS.iter().zip(&run.summaries[1..]).map(|(&t, s)| (t, *s)).collect();
            rows.push(PhaseRow { w, n, log_psi, below });
        }
        let (slope, std_error) = weighted_slope(&points);
        slopes.push(PhaseSlope { w, slope, std_error });
    }
    let mut sorted = slopes.clone();
    sorted.sort_by(|a, b| a.w.total_cmp(&b.w));
    let crossover = sorted
        .windows(2)
        .find(|p| p[0].clearly_negative() && !p[1].clearly_negative())
        .map(|p| (p[0].w, p[1].w));
    Ok(PhaseScan { rows, slopes, crossover })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TailRow {
    pub t: f64,
    /// Indicator of `max_n M_n >= t`.
    pub exceed: EstimatorSummary,
}

impl TailRow {
    pub fn bound(&self) -> f64 {
        1.0 / self.t
    }

    pub fn holds(&self) -> bool {
        self.exceed.below(self.bound())
    }

    pub fn to_row(&self) -> Vec<String> {
        vec![
            cell(self.t),
            self.exceed.n.to_string(),
            cell(self.exceed.mean),
            opt_cell(self.exceed.ci95()),
            cell(self.bound()),
            cell(self.t * self.exceed.mean),
            self.holds().to_string(),
        ]
    }
}

pub const TAIL_HEADER: [&str; 7] = ["t", "n", "p_exceed", "ci95", "bound", "t_times_p", "holds"];

/// Probability that the level-mass path `M_1..M_N` of a strip reaches each
/// threshold.
pub fn tail_suite(g: &WeightedGraph, t_grid: &[f64], reps: usize, seed: u64, workers: usize) -> Result<Vec<TailRow>> {
    if t_grid.iter().any(|&t| !(t > 0.0)) {
        return invalid("thresholds must be positive");
    }
    let sampler = BetaSampler::new(g, None)?;
    let run = run_replicates(
        |rng| {
            let beta = sampler.sample(rng)?;
            let top = martingale_path(g, &beta)?.into_iter().fold(0.0f64, f64::max);
            Ok(t_grid.iter().map(|&t| if top >= t { 1.0 } else { 0.0 }).collect())
        },
        reps,
        seed,
        workers,
    )?;
    Ok(t_grid.iter().zip(&run.summaries).map(|(&t, &exceed)| TailRow { t, exceed }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_halfspace_strip, SideBoundary};

    #[test]
    fn first_moment_is_one() {
        let table = moment_suite(|w| build_box_lattice(2, 1, w), &[1.0], &[1, 2], 4000, 5, 0).unwrap();
        let r = table.row(1.0, Some(1)).unwrap();
        assert!(r.summary.within_sigma(1.0), "{r:?}");
        assert_eq!(table.to_table().rows.len(), 3);
    }

    #[test]
    fn rejects_unknown_orders() {
        assert!(moment_suite(|w| build_box_lattice(2, 1, w), &[1.0], &[4], 10, 5, 1).is_err());
    }

    #[test]
    fn tail_rows_are_probabilities() {
        let g = build_halfspace_strip(2, 3, 2, 1.0, SideBoundary::Free).unwrap();
        let rows = tail_suite(&g, &[1.0, 2.0], 2000, 9, 0).unwrap();
        assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.exceed.mean)));
        assert!(rows[1].exceed.mean <= rows[0].exceed.mean);
        assert!(rows[1].holds());
    }

    #[test]
    fn slope_of_exact_line() {
        let (s, _) = weighted_slope(&[(1.0, 1.0, 0.1), (2.0, 3.0, 0.1), (3.0, 5.0, 0.1)]);
        assert!((s - 2.0).abs() < 1e-12);
    }

    #[test]
    fn scan_shape() {
        let scan = phase_scan(2, &[1, 2], &[0.5, 2.0], 200, 1, 0).unwrap();
        assert_eq!(scan.rows.len(), 4);
        assert_eq!(scan.slopes.len(), 2);
        assert_eq!(scan.to_table().header.len(), 11);
    }
}
