//! Run configuration: one TOML file with a section per experiment.
//! Every section has defaults, unknown keys are rejected, and [`RunConfig::check`]
//! validates all values before anything runs.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vrjp_core::toy::ConvexFn;
use vrjp_core::vrjp::DEFAULT_JUMP_BUDGET;

/// A rejected configuration value, located by key and, when the key was
/// written in the file, by line.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config error at line {l}, key `{}`: {}", self.key, self.message),
            None => write!(f, "config error, key `{}`: {}", self.key, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Validate,
    Scan,
    Simulate,
    Toy,
    Renewal,
    Exitprob,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Validate => "validate",
            Experiment::Scan => "scan",
            Experiment::Simulate => "simulate",
            Experiment::Toy => "toy",
            Experiment::Renewal => "renewal",
            Experiment::Exitprob => "exitprob",
        }
    }

    /// Names accepted by `--only`.
    pub fn parts(self) -> &'static [&'static str] {
        match self {
            Experiment::Validate => &crate::suite::MEMBERS,
            Experiment::Scan => &["phase", "moments", "tail"],
            Experiment::Simulate => &["trajectory", "exit"],
            Experiment::Toy => &["moments", "chain", "bound", "convex"],
            Experiment::Renewal => &["identity", "overshoot", "igtail"],
            Experiment::Exitprob => &["exitprob"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub tolerances: Tolerances,
    pub validate: ValidateSection,
    pub scan: ScanSection,
    pub simulate: SimulateSection,
    pub toy: ToySection,
    pub renewal: RenewalSection,
    pub exitprob: ExitSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Experiment run when no subcommand is given.
    pub experiment: Option<Experiment>,
    pub seed: u64,
    /// 0 uses every core.
    pub workers: usize,
    pub out: PathBuf,
    /// Restrict to these suite members or experiment parts.
    pub only: Vec<String>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { experiment: None, seed: 20_240_611, workers: 0, out: PathBuf::from("runs"), only: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative error allowed for exact identities.
    pub algebraic: f64,
    /// Standard errors allowed for statistical checks.
    pub sigma: f64,
    /// Joint standard errors allowed between the two exit estimators.
    pub exit_sigma: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { algebraic: 1e-10, sigma: 4.0, exit_sigma: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateSection {
    pub w: f64,
    /// Draws for statistical members.
    pub replicates: usize,
    /// Draws for exact identities.
    pub exact_replicates: usize,
    /// Walks for the exit-probability member.
    pub walks: usize,
}

impl Default for ValidateSection {
    fn default() -> Self {
        ValidateSection { w: 1.0, replicates: 20_000, exact_replicates: 100, walks: 5_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    pub d_set: Vec<usize>,
    /// Box radii of the decay scan.
    pub n_grid: Vec<i64>,
    pub w_grid: Vec<f64>,
    pub replicates: usize,
    pub p_set: Vec<i32>,
    /// Box radius of the moment table.
    pub moment_radius: i64,
    pub t_grid: Vec<f64>,
    /// Strip of the tail table: levels and lateral size `m` (width `2m - 1`).
    pub strip_levels: i64,
    pub strip_m: i64,
}

impl Default for ScanSection {
    fn default() -> Self {
        ScanSection {
            d_set: vec![2],
            n_grid: vec![1, 2, 3],
            w_grid: vec![0.5, 1.0, 2.0, 4.0],
            replicates: 2_000,
            p_set: vec![-2, 1, 2, 3],
            moment_radius: 1,
            t_grid: vec![2.0, 4.0, 8.0],
            strip_levels: 6,
            strip_m: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    /// Wired box of radius `n` in dimension `d`.
    Box,
    /// Half-space box with `n` levels, lateral size `m`, wired top and side.
    Halfspace,
    /// Two vertices joined by one edge, no boundary.
    Pair,
    /// Graph text file.
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub graph: GraphKind,
    pub graph_file: Option<PathBuf>,
    pub d: usize,
    pub n: i64,
    pub m: i64,
    pub w: f64,
    /// Start vertex; the graph root when absent.
    pub start: Option<usize>,
    pub horizon: f64,
    pub budget: usize,
    pub replicates: usize,
    /// Replicates of the two exit estimators.
    pub exit_replicates: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            graph: GraphKind::Halfspace,
            graph_file: None,
            d: 2,
            n: 2,
            m: 3,
            w: 1.0,
            start: None,
            horizon: f64::INFINITY,
            budget: DEFAULT_JUMP_BUDGET,
            replicates: 10,
            exit_replicates: 2_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyMoment {
    pub p: u32,
    pub k: usize,
    pub m: usize,
    pub epsilon: f64,
    pub eta0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Weights {
    Point { value: f64 },
    Uniform { lo: f64, hi: f64 },
    /// One positive weight per line.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyBoundSection {
    pub n_grid: Vec<i64>,
    pub m: i64,
    pub epsilon: f64,
    pub eta0: f64,
    pub epsilon0: f64,
    pub p: u32,
    pub replicates: usize,
    pub weights: Weights,
}

impl Default for ToyBoundSection {
    fn default() -> Self {
        ToyBoundSection {
            n_grid: vec![1, 2, 4],
            m: 0,
            epsilon: 0.5,
            eta0: 1.0,
            epsilon0: 0.2,
            p: 2,
            replicates: 2_000,
            weights: Weights::Uniform { lo: 0.9, hi: 2.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvexSection {
    pub d: usize,
    pub n: i64,
    pub m: i64,
    pub w: f64,
    pub epsilon: f64,
    pub f_set: Vec<String>,
    /// Conductance increment of the plain monotonicity pair.
    pub w_step: f64,
    pub replicates: usize,
}

impl Default for ConvexSection {
    fn default() -> Self {
        ConvexSection {
            d: 2,
            n: 2,
            m: 0,
            w: 1.0,
            epsilon: 0.25,
            f_set: vec!["x^2".into()],
            w_step: 1.0,
            replicates: 1_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToySection {
    pub moments: Vec<ToyMoment>,
    pub moment_replicates: usize,
    pub chain_max_length: usize,
    /// `(epsilon, eta0)` pairs of the chain identity.
    pub chain_params: Vec<[f64; 2]>,
    pub chain_replicates: usize,
    pub bound: ToyBoundSection,
    pub convex: ConvexSection,
}

impl Default for ToySection {
    fn default() -> Self {
        ToySection {
            moments: vec![
                ToyMoment { p: 2, k: 1, m: 0, epsilon: 1.0, eta0: 1.0 },
                ToyMoment { p: 3, k: 1, m: 0, epsilon: 1.0, eta0: 1.0 },
            ],
            moment_replicates: 20_000,
            chain_max_length: 8,
            chain_params: vec![[1.0, 1.0], [0.5, 1.0], [0.2, 0.1]],
            chain_replicates: 100,
            bound: ToyBoundSection::default(),
            convex: ConvexSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    Lexicographic,
    Reversed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenewalSection {
    pub d: usize,
    pub levels: i64,
    pub m: i64,
    pub w: f64,
    /// `(cut level, slab height)` pairs.
    pub cuts: Vec<[usize; 2]>,
    pub replicates: usize,
    pub overshoot_cut: usize,
    pub t: f64,
    pub b: f64,
    pub order: Order,
    pub lambda0: f64,
    pub lambdas: Vec<f64>,
    pub a_grid: Vec<f64>,
}

impl Default for RenewalSection {
    fn default() -> Self {
        RenewalSection {
            d: 2,
            levels: 6,
            m: 2,
            w: 1.0,
            cuts: vec![[1, 1], [2, 2], [2, 3]],
            replicates: 100,
            overshoot_cut: 1,
            t: 2.0,
            b: 1.0,
            order: Order::Lexicographic,
            lambda0: 0.5,
            lambdas: vec![0.5, 1.0, 2.0],
            a_grid: vec![2.0, 4.0, 8.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExitSection {
    pub d: usize,
    pub levels: i64,
    pub m: i64,
    pub w_grid: Vec<f64>,
    pub replicates: usize,
    pub budget: usize,
}

impl Default for ExitSection {
    fn default() -> Self {
        ExitSection { d: 2, levels: 2, m: 3, w_grid: vec![0.5, 1.0, 2.0], replicates: 5_000, budget: DEFAULT_JUMP_BUDGET }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            run: RunSection::default(),
            tolerances: Tolerances::default(),
            validate: ValidateSection::default(),
            scan: ScanSection::default(),
            simulate: SimulateSection::default(),
            toy: ToySection::default(),
            renewal: RenewalSection::default(),
            exitprob: ExitSection::default(),
        }
    }
}

/// Line of `section.key` in the source text, found by tracking table
/// headers. An index suffix such as `[0]` is ignored; a key naming a table
/// matches its header.
fn locate(source: &str, key: &str) -> Option<usize> {
    let key = key.split('[').next().unwrap_or(key);
    let mut current = String::new();
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[') {
            current = h.trim_start_matches('[').trim_end_matches(']').trim().to_string();
            if current == key {
                return Some(i + 1);
            }
            continue;
        }
        let Some((k, _)) = line.split_once('=') else { continue };
        let k = k.trim();
        let full = if current.is_empty() { k.to_string() } else { format!("{current}.{k}") };
        if full == key {
            return Some(i + 1);
        }
    }
    None
}

struct Checker<'a> {
    source: Option<&'a str>,
    error: Option<ConfigError>,
}

impl Checker<'_> {
    fn require(&mut self, ok: bool, key: &str, message: impl FnOnce() -> String) {
        if !ok && self.error.is_none() {
            self.error = Some(ConfigError {
                key: key.to_string(),
                line: self.source.and_then(|s| locate(s, key)),
                message: message(),
            });
        }
    }

    fn positive(&mut self, x: f64, key: &str) {
        self.require(x > 0.0 && x.is_finite(), key, || format!("must be positive and finite, got {x}"));
    }

    fn positive_all(&mut self, xs: &[f64], key: &str) {
        self.require(!xs.is_empty(), key, || "must not be empty".into());
        for &x in xs {
            self.positive(x, key);
        }
    }

    fn count(&mut self, n: usize, key: &str) {
        self.require(n >= 1, key, || "must be at least 1".into());
    }

    fn dimension(&mut self, d: usize, key: &str) {
        self.require((1..=3).contains(&d), key, || format!("dimension must be 1, 2 or 3, got {d}"));
    }
}

impl RunConfig {
    /// Parse TOML text. Unknown keys and type errors are reported with the
    /// parser's line and column.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError {
            key: e.span().map_or_else(String::new, |s| text[s].trim().to_string()),
            line: e.span().map(|s| text[..s.start].matches('\n').count() + 1),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<(Self, String), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            key: String::new(),
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Ok((Self::parse(&text)?, text))
    }

    /// Validate every value. `source` is the file text, used to report
    /// lines.
    pub fn check(&self, source: Option<&str>) -> Result<(), ConfigError> {
        let mut c = Checker { source, error: None };

        let t = &self.tolerances;
        c.require(t.algebraic > 0.0 && t.algebraic < 1.0, "tolerances.algebraic", || {
            format!("must lie in (0, 1), got {}", t.algebraic)
        });
        c.positive(t.sigma, "tolerances.sigma");
        c.positive(t.exit_sigma, "tolerances.exit_sigma");

        let v = &self.validate;
        c.positive(v.w, "validate.w");
        c.require(v.replicates >= 2, "validate.replicates", || "must be at least 2".into());
        c.count(v.exact_replicates, "validate.exact_replicates");
        c.require(v.walks >= 2, "validate.walks", || "must be at least 2".into());

        let s = &self.scan;
        c.require(!s.d_set.is_empty(), "scan.d_set", || "must not be empty".into());
        for &d in &s.d_set {
            c.dimension(d, "scan.d_set");
        }
        c.require(s.n_grid.len() >= 2, "scan.n_grid", || "needs at least two radii".into());
        c.require(s.n_grid.iter().all(|n| (1..=10).contains(n)), "scan.n_grid", || "radii must lie in 1..=10".into());
        c.positive_all(&s.w_grid, "scan.w_grid");
        c.require(s.w_grid.windows(2).all(|p| p[0] < p[1]), "scan.w_grid", || "must be strictly increasing".into());
        c.require(s.replicates >= 2, "scan.replicates", || "must be at least 2".into());
        c.require(s.p_set.iter().all(|p| [-2, 1, 2, 3].contains(p)), "scan.p_set", || {
            "moment orders must be among -2, 1, 2, 3".into()
        });
        c.require(s.moment_radius >= 0, "scan.moment_radius", || "must be nonnegative".into());
        c.positive_all(&s.t_grid, "scan.t_grid");
        c.require(s.strip_levels >= 2, "scan.strip_levels", || "must be at least 2".into());
        c.require(s.strip_m >= 1, "scan.strip_m", || "must be at least 1".into());

        let m = &self.simulate;
        c.dimension(m.d, "simulate.d");
        c.require(m.n >= 1, "simulate.n", || "must be at least 1".into());
        c.require(m.m >= 1, "simulate.m", || "must be at least 1".into());
        c.positive(m.w, "simulate.w");
        c.require(m.graph != GraphKind::File || m.graph_file.is_some(), "simulate.graph_file", || {
            "required when graph = \"file\"".into()
        });
        c.require(m.horizon >= 0.0, "simulate.horizon", || format!("must be nonnegative, got {}", m.horizon));
        c.count(m.budget, "simulate.budget");
        c.require(m.exit_replicates >= 2, "simulate.exit_replicates", || "must be at least 2".into());

        let y = &self.toy;
        for (i, s) in y.moments.iter().enumerate() {
            let key = format!("toy.moments[{i}]");
            c.require((1..=4).contains(&s.p), &key, || format!("moment order must lie in 1..=4, got {}", s.p));
            c.require(s.k >= 1, &key, || "k must be at least 1".into());
            c.require(s.epsilon > 0.0 && s.epsilon.is_finite(), &key, || "epsilon must be positive".into());
            c.require(s.eta0 > 0.0 && s.eta0.is_finite(), &key, || "eta0 must be positive".into());
        }
        c.require(y.moment_replicates >= 2, "toy.moment_replicates", || "must be at least 2".into());
        c.require(!y.chain_params.is_empty(), "toy.chain_params", || "must not be empty".into());
        for p in &y.chain_params {
            c.require(p.iter().all(|x| *x > 0.0 && x.is_finite()), "toy.chain_params", || {
                format!("epsilon and eta0 must be positive, got {p:?}")
            });
        }
        c.count(y.chain_replicates, "toy.chain_replicates");
        let b = &y.bound;
        c.require(!b.n_grid.is_empty() && b.n_grid.iter().all(|&n| n >= 1), "toy.bound.n_grid", || {
            "must be nonempty with every n >= 1".into()
        });
        c.require(b.m >= 0, "toy.bound.m", || "must be nonnegative".into());
        c.positive(b.epsilon, "toy.bound.epsilon");
        c.positive(b.eta0, "toy.bound.eta0");
        c.require(b.epsilon0 > 0.0 && b.epsilon0 < 1.0, "toy.bound.epsilon0", || "must lie in (0, 1)".into());
        c.require(b.p >= 1, "toy.bound.p", || "must be at least 1".into());
        c.require(b.replicates >= 2, "toy.bound.replicates", || "must be at least 2".into());
        match &b.weights {
            Weights::Point { value } => c.positive(*value, "toy.bound.weights.value"),
            Weights::Uniform { lo, hi } => {
                c.positive(*lo, "toy.bound.weights.lo");
                c.require(hi > lo && hi.is_finite(), "toy.bound.weights.hi", || format!("must exceed lo, got {hi}"));
            }
            Weights::File { .. } => {}
        }
        let cv = &y.convex;
        c.dimension(cv.d, "toy.convex.d");
        c.require(cv.n >= 1, "toy.convex.n", || "must be at least 1".into());
        c.require(cv.m >= 0, "toy.convex.m", || "must be nonnegative".into());
        c.positive(cv.w, "toy.convex.w");
        c.require(cv.epsilon > 0.0 && cv.epsilon < cv.w, "toy.convex.epsilon", || {
            format!("must lie in (0, w), got {}", cv.epsilon)
        });
        c.require(!cv.f_set.is_empty(), "toy.convex.f_set", || "must not be empty".into());
        for f in &cv.f_set {
            c.require(ConvexFn::parse(f).is_ok(), "toy.convex.f_set", || format!("unknown function {f:?}"));
        }
        c.positive(cv.w_step, "toy.convex.w_step");
        c.require(cv.replicates >= 2, "toy.convex.replicates", || "must be at least 2".into());

        let r = &self.renewal;
        c.dimension(r.d, "renewal.d");
        c.require(r.levels >= 2, "renewal.levels", || "must be at least 2".into());
        c.require(r.m >= 1, "renewal.m", || "must be at least 1".into());
        c.positive(r.w, "renewal.w");
        for &[k, ell] in &r.cuts {
            c.require(k >= 1 && ell >= 1 && ((k + ell) as i64) <= r.levels, "renewal.cuts", || {
                format!("cut ({k}, {ell}) needs k, ell >= 1 and k + ell <= levels")
            });
        }
        c.count(r.replicates, "renewal.replicates");
        c.require(r.overshoot_cut >= 1 && (r.overshoot_cut as i64) < r.levels, "renewal.overshoot_cut", || {
            "must lie in 1..levels".into()
        });
        c.require(r.t > 1.0 && r.t.is_finite(), "renewal.t", || format!("must exceed 1, got {}", r.t));
        c.positive(r.b, "renewal.b");
        c.positive(r.lambda0, "renewal.lambda0");
        c.positive_all(&r.lambdas, "renewal.lambdas");
        c.require(r.lambdas.iter().all(|&l| l >= r.lambda0), "renewal.lambdas", || "every lambda must be >= lambda0".into());
        c.require(!r.a_grid.is_empty() && r.a_grid.iter().all(|&a| a >= 2.0 && a.is_finite()), "renewal.a_grid", || {
            "thresholds must be finite and >= 2".into()
        });

        let e = &self.exitprob;
        c.dimension(e.d, "exitprob.d");
        c.require(e.levels >= 1, "exitprob.levels", || "must be at least 1".into());
        c.require(e.m >= 2, "exitprob.m", || "must be at least 2 so the box has a side".into());
        c.positive_all(&e.w_grid, "exitprob.w_grid");
        c.require(e.replicates >= 2, "exitprob.replicates", || "must be at least 2".into());
        c.count(e.budget, "exitprob.budget");

        match c.error {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// SHA-256 of the experiment settings. The `[run]` section is left out:
    /// the seed is recorded on its own and workers, output directory and
    /// filters do not change results.
    pub fn fingerprint(&self) -> String {
        let mut copy = self.clone();
        copy.run = RunSection::default();
        let text = toml::to_string(&copy).expect("config serializes");
        hex(&Sha256::digest(text.as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
