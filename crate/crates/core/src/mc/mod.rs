//! Replicated Monte Carlo: per-replicate RNG streams, parallel batches with
//! a fixed merge order, running summaries, and the statistical helpers
//! every experiment asserts through.

pub(crate) mod suites;

pub use suites::{
    moment_suite, phase_scan, tail_suite, MomentRow, MomentTable, PhaseRow, PhaseScan, PhaseSlope, TailRow,
    WeightGrid, PHASE_THRESHOLDS, TAIL_HEADER,
};

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Number of standard errors every statistical assertion allows.
pub const SIGMA_POLICY: f64 = 4.0;
/// Largest tolerated fraction of aborted replicates.
pub const ABORT_FRACTION: f64 = 1e-3;
/// Replicates per parallel work unit. Merge order is by batch index, so
/// results do not depend on the worker count.
pub const BATCH: usize = 1024;

/// Count, mean and centered sum of squares of a sample.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EstimatorSummary {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl EstimatorSummary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut s = Self::new();
        xs.iter().for_each(|&x| s.push(x));
        s
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Pairwise combination of two disjoint samples.
    pub fn merge(&self, other: &Self) -> Self {
        if other.n == 0 {
            return *self;
        }
        if self.n == 0 {
            return *other;
        }
        let n = self.n + other.n;
        let (na, nb) = (self.n as f64, other.n as f64);
        let d = other.mean - self.mean;
        EstimatorSummary {
            n,
            mean: self.mean + d * nb / n as f64,
            m2: self.m2 + other.m2 + d * d * na * nb / n as f64,
        }
    }

    /// Unbiased sample variance; `None` below two observations.
    pub fn variance(&self) -> Option<f64> {
        (self.n >= 2).then(|| self.m2 / (self.n - 1) as f64)
    }

    pub fn std_error(&self) -> Option<f64> {
        (self.n >= 2).then(|| (self.m2 / (self.n as f64 * (self.n - 1) as f64)).sqrt())
    }

    /// Half-width of the normal 95% interval.
    pub fn ci95(&self) -> Option<f64> {
        self.std_error().map(|s| 1.96 * s)
    }

    /// Standard errors between the mean and `target`.
    pub fn z_against(&self, target: f64) -> f64 {
        z_score(self.mean, self.std_error().unwrap_or(0.0), target)
    }

    pub fn within_sigma(&self, target: f64) -> bool {
        self.z_against(target).abs() <= SIGMA_POLICY
    }

    /// One-sided check `mean <= bound + 4 se`.
    pub fn below(&self, bound: f64) -> bool {
        self.mean <= bound + SIGMA_POLICY * self.std_error().unwrap_or(0.0)
    }
}

/// `(estimate - target) / se`; zero error gives 0 on equality and an
/// infinite score otherwise.
pub fn z_score(estimate: f64, se: f64, target: f64) -> f64 {
    let d = estimate - target;
    if se > 0.0 {
        d / se
    } else if d == 0.0 {
        0.0
    } else {
        d.signum() * f64::INFINITY
    }
}

/// z-score of the difference of two independent estimates.
pub fn two_sample_z(a: &EstimatorSummary, b: &EstimatorSummary) -> f64 {
    let se = (a.std_error().unwrap_or(0.0).powi(2) + b.std_error().unwrap_or(0.0).powi(2)).sqrt();
    z_score(a.mean - b.mean, se, 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MedianOfMeans {
    pub estimate: f64,
    /// Spread of the bucket means scaled by `sqrt(pi/2) / sqrt(buckets)`.
    pub std_error: f64,
    pub buckets: usize,
}

impl MedianOfMeans {
    pub fn z_against(&self, target: f64) -> f64 {
        z_score(self.estimate, self.std_error, target)
    }
}

/// Median of `buckets` contiguous bucket means.
pub fn median_of_means(xs: &[f64], buckets: usize) -> Result<MedianOfMeans> {
    if buckets == 0 || xs.len() < 2 * buckets {
        return Err(Error::InvalidParameter(format!(
            "median of means needs at least two values per bucket ({} values, {buckets} buckets)",
            xs.len()
        )));
    }
    let size = xs.len() / buckets;
    let mut means: Vec<f64> = xs.chunks_exact(size).take(buckets).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let spread = EstimatorSummary::from_slice(&means).std_error().unwrap_or(0.0);
    means.sort_by(f64::total_cmp);
    let estimate = if buckets % 2 == 1 {
        means[buckets / 2]
    } else {
        0.5 * (means[buckets / 2 - 1] + means[buckets / 2])
    };
    Ok(MedianOfMeans { estimate, std_error: spread * (std::f64::consts::PI / 2.0).sqrt(), buckets })
}

/// Stream `replicate` of the master seed.
pub fn replicate_rng(master_seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replicate);
    rng
}

/// Independent-looking child seed for a labelled sub-experiment.
pub fn derive_seed(master_seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = master_seed ^ tag.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn is_abort(e: &Error) -> bool {
    matches!(e, Error::DegenerateSample { .. } | Error::Degenerate { .. })
}

fn check_budget(aborted: usize, total: usize) -> Result<()> {
    let limit = (ABORT_FRACTION * total as f64).floor() as usize;
    if aborted > limit {
        return Err(Error::AbortBudget { aborted, total, limit });
    }
    Ok(())
}

fn with_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    Ok(pool.install(job))
}

/// Successful replicate outputs in replicate order plus abort accounting.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateOutcome<T> {
    pub values: Vec<T>,
    pub aborted: usize,
    pub total: usize,
}

/// Run `experiment` on replicate streams `0..n` of `master_seed`.
/// Degenerate-sample errors count as aborts (more than a 1e-3 fraction fails
/// the run); any other error is returned. `workers == 0` uses all cores.
pub fn map_replicates<T, F>(n: usize, master_seed: u64, workers: usize, experiment: F) -> Result<ReplicateOutcome<T>>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> Result<T> + Sync,
{
    let batches: Vec<Result<(Vec<T>, usize)>> = with_pool(workers, || {
        (0..n.div_ceil(BATCH))
            .into_par_iter()
            .map(|b| {
                let mut out = Vec::with_capacity(BATCH);
                let mut aborted = 0;
                for r in b * BATCH..((b + 1) * BATCH).min(n) {
                    match experiment(&mut replicate_rng(master_seed, r as u64)) {
                        Ok(v) => out.push(v),
                        Err(e) if is_abort(&e) => aborted += 1,
                        Err(e) => return Err(e),
                    }
                }
                Ok((out, aborted))
            })
            .collect()
    })?;
    let mut values = Vec::with_capacity(n);
    let mut aborted = 0;
    for b in batches {
        let (v, a) = b?;
        values.extend(v);
        aborted += a;
    }
    check_budget(aborted, n)?;
    Ok(ReplicateOutcome { values, aborted, total: n })
}

/// Per-coordinate summaries of a vector-valued experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateRun {
    pub summaries: Vec<EstimatorSummary>,
    pub aborted: usize,
    pub total: usize,
}

/// As [`map_replicates`], summarizing each output coordinate batch by batch
/// and merging batches in index order.
pub fn run_replicates<F>(experiment: F, n: usize, master_seed: u64, workers: usize) -> Result<ReplicateRun>
where
    F: Fn(&mut ChaCha8Rng) -> Result<Vec<f64>> + Sync,
{
    let batches: Vec<Result<(Vec<EstimatorSummary>, usize)>> = with_pool(workers, || {
        (0..n.div_ceil(BATCH))
            .into_par_iter()
            .map(|b| {
                let mut sums: Vec<EstimatorSummary> = Vec::new();
                let mut aborted = 0;
                for r in b * BATCH..((b + 1) * BATCH).min(n) {
                    match experiment(&mut replicate_rng(master_seed, r as u64)) {
                        Ok(v) => {
                            if sums.is_empty() {
                                sums = vec![EstimatorSummary::new(); v.len()];
                            } else if sums.len() != v.len() {
                                return Err(Error::InvalidParameter(
                                    "experiment output length changed between replicates".into(),
                                ));
                            }
                            sums.iter_mut().zip(&v).for_each(|(s, &x)| s.push(x));
                        }
                        Err(e) if is_abort(&e) => aborted += 1,
                        Err(e) => return Err(e),
                    }
                }
                Ok((sums, aborted))
            })
            .collect()
    })?;
    let mut summaries: Vec<EstimatorSummary> = Vec::new();
    let mut aborted = 0;
    for b in batches {
        let (s, a) = b?;
        aborted += a;
        if s.is_empty() {
            continue;
        }
        if summaries.is_empty() {
            summaries = s;
        } else if summaries.len() != s.len() {
            return Err(Error::InvalidParameter("experiment output length changed between replicates".into()));
        } else {
            summaries = summaries.iter().zip(&s).map(|(x, y)| x.merge(y)).collect();
        }
    }
    check_budget(aborted, n)?;
    Ok(ReplicateRun { summaries, aborted, total: n })
}

/// A header plus rows of preformatted cells.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header).map_err(std::io::Error::from)?;
        for r in &self.rows {
            w.write_record(r).map_err(std::io::Error::from)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// Shortest round-trip decimal; `NaN` and infinities spelled out.
pub fn cell(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x}")
    }
}

pub fn opt_cell(x: Option<f64>) -> String {
    x.map(cell).unwrap_or_default()
}
