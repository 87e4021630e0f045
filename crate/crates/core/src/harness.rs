//! Experiment harness: configuration, innate sampling, repetitions and
//! output.
//!
//! Repetition `k` uses seed `base_seed + k`. Within a repetition the graph
//! generator receives that seed directly; innate sampling and media
//! assignment receive [`stream_seed`] derivations of it so the three draws
//! are independent. Repetitions run in parallel but rows are merged in
//! repetition order, so output bytes depend on the configuration only.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::error::ModelError;
use crate::fj::{EquilibriumMethod, OpinionVector};
use crate::graph::{gen_barabasi_albert, gen_random_regular, load_edge_list_from_reader, Graph, GraphError};
use crate::media::{
    assign_media, equilibrium_with_media, media_count, source_opinions, sum_bounds, truncated_lower_bound,
    truncated_regular_sum, MediaConfig, ZetaVector,
};
use crate::nonstubborn::{nonstubborn_equilibrium, NonStubbornEquilibrium};
use crate::periods::{ell_star, run_periods, StopCriteria, DEFAULT_FIXED_POINT_TOL, DEFAULT_MAX_PERIODS};

pub const DEFAULT_REPETITIONS: usize = 20;
pub const DEFAULT_INNATE_MU: f64 = 0.5;
pub const DEFAULT_INNATE_VAR: f64 = 0.2;

const INNATE_STREAM: u64 = 1;
const MEDIA_STREAM: u64 = 2;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("loading graph {path}: {source}")]
    GraphFile {
        path: PathBuf,
        #[source]
        source: GraphError,
    },
    #[error("repetition {rep}: {source}")]
    Repetition {
        rep: usize,
        #[source]
        source: ModelError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("manifest: {0}")]
    Manifest(String),
}

/// Seed for an independent random stream derived from a repetition seed
/// (SplitMix64 finalizer applied to `seed ^ stream·φ`).
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// i.i.d. `Normal(mu, sigma²)` draws clipped into `[0, 1]`.
pub fn sample_innate(n: usize, mu: f64, sigma: f64, seed: u64) -> Result<OpinionVector, ModelError> {
    if !(sigma.is_finite() && sigma > 0.0) || !mu.is_finite() {
        return Err(ModelError::InvalidParameter(format!(
            "innate sampler needs finite mu and sigma > 0 (mu = {mu}, sigma = {sigma})"
        )));
    }
    let normal = Normal::new(mu, sigma).map_err(|e| ModelError::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    OpinionVector::new((0..n).map(|_| normal.sample(&mut rng).clamp(0.0, 1.0)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Equilibrium,
    Periods,
    NonStubborn,
    Bounds,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Equilibrium => "equilibrium",
            Mode::Periods => "periods",
            Mode::NonStubborn => "nonstubborn",
            Mode::Bounds => "bounds",
        }
    }
}

impl FromStr for Mode {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "equilibrium" => Ok(Mode::Equilibrium),
            "periods" => Ok(Mode::Periods),
            "nonstubborn" => Ok(Mode::NonStubborn),
            "bounds" => Ok(Mode::Bounds),
            other => Err(HarnessError::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphSource {
    File(PathBuf),
    BarabasiAlbert { n: usize, m: usize },
    RandomRegular { n: usize, d: usize },
}

impl GraphSource {
    /// Builds the graph for one repetition; files ignore the seed.
    pub fn build(&self, seed: u64) -> Result<Graph, HarnessError> {
        match self {
            GraphSource::File(path) => {
                let file = fs::File::open(path).map_err(|source| HarnessError::Io { path: path.clone(), source })?;
                load_edge_list_from_reader(std::io::BufReader::new(file))
                    .map_err(|source| HarnessError::GraphFile { path: path.clone(), source })
            }
            GraphSource::BarabasiAlbert { n, m } => {
                gen_barabasi_albert(*n, *m, seed).map_err(|e| HarnessError::Model(e.into()))
            }
            GraphSource::RandomRegular { n, d } => {
                gen_random_regular(*n, *d, seed).map_err(|e| HarnessError::Model(e.into()))
            }
        }
    }

    fn is_random(&self) -> bool {
        !matches!(self, GraphSource::File(_))
    }
}

impl std::fmt::Display for GraphSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GraphSource::File(p) => write!(f, "file:{}", p.display()),
            GraphSource::BarabasiAlbert { n, m } => write!(f, "ba:n={n},m={m}"),
            GraphSource::RandomRegular { n, d } => write!(f, "dreg:n={n},d={d}"),
        }
    }
}

impl FromStr for GraphSource {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HarnessError::Config(format!("unrecognized graph source {s:?}"));
        if let Some(path) = s.strip_prefix("file:") {
            return Ok(GraphSource::File(PathBuf::from(path)));
        }
        let (kind, params) = s.split_once(':').ok_or_else(bad)?;
        let mut n = None;
        let mut k = None;
        for kv in params.split(',') {
            let (key, value) = kv.split_once('=').ok_or_else(bad)?;
            let value: usize = value.parse().map_err(|_| bad())?;
            match key {
                "n" => n = Some(value),
                "m" | "d" => k = Some(value),
                _ => return Err(bad()),
            }
        }
        let (n, k) = (n.ok_or_else(bad)?, k.ok_or_else(bad)?);
        match kind {
            "ba" => Ok(GraphSource::BarabasiAlbert { n, m: k }),
            "dreg" => Ok(GraphSource::RandomRegular { n, d: k }),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub graph: GraphSource,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub innate_mu: f64,
    /// Variance of the innate Gaussian; the standard deviation is its root.
    pub innate_var: f64,
    pub repetitions: usize,
    pub base_seed: u64,
    pub tol: f64,
    pub max_periods: usize,
    /// `None` resolves to `10/n` per repetition.
    pub epsilon: Option<f64>,
    pub fixed_point_tol: f64,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(mode: Mode, graph: GraphSource) -> Self {
        Self {
            mode,
            graph,
            alpha: 1.0,
            beta: 0.025,
            gamma: 0.01,
            innate_mu: DEFAULT_INNATE_MU,
            innate_var: DEFAULT_INNATE_VAR,
            repetitions: DEFAULT_REPETITIONS,
            base_seed: 0,
            tol: crate::numerics::DEFAULT_TOL,
            max_periods: DEFAULT_MAX_PERIODS,
            epsilon: None,
            fixed_point_tol: DEFAULT_FIXED_POINT_TOL,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.repetitions == 0 {
            return Err(HarnessError::Config("repetitions must be >= 1".into()));
        }
        if !(self.innate_var.is_finite() && self.innate_var > 0.0) {
            return Err(HarnessError::Config(format!("innate variance must be > 0, got {}", self.innate_var)));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(HarnessError::Config(format!("tolerance must be > 0, got {}", self.tol)));
        }
        MediaConfig::new(self.alpha, self.beta, self.gamma)?;
        if self.mode == Mode::NonStubborn && self.alpha != 1.0 {
            return Err(HarnessError::Config("nonstubborn mode requires --alpha 1".into()));
        }
        Ok(())
    }

    pub fn media(&self) -> MediaConfig {
        MediaConfig { alpha: self.alpha, beta: self.beta, gamma: self.gamma }
    }

    pub fn innate_sigma(&self) -> f64 {
        self.innate_var.sqrt()
    }

    pub fn repetition_seed(&self, rep: usize) -> u64 {
        self.base_seed.wrapping_add(rep as u64)
    }

    fn manifest_entries(&self) -> Vec<(String, String)> {
        let opt = |v: Option<f64>| v.map_or_else(|| "default".to_string(), |x| format!("{x:?}"));
        vec![
            ("config.mode".into(), self.mode.as_str().into()),
            ("config.graph".into(), self.graph.to_string()),
            ("config.alpha".into(), format!("{:?}", self.alpha)),
            ("config.beta".into(), format!("{:?}", self.beta)),
            ("config.gamma".into(), format!("{:?}", self.gamma)),
            ("config.innate_mu".into(), format!("{:?}", self.innate_mu)),
            ("config.innate_var".into(), format!("{:?}", self.innate_var)),
            ("config.repetitions".into(), self.repetitions.to_string()),
            ("config.base_seed".into(), self.base_seed.to_string()),
            ("config.tol".into(), format!("{:?}", self.tol)),
            ("config.max_periods".into(), self.max_periods.to_string()),
            ("config.epsilon".into(), opt(self.epsilon)),
            ("config.fixed_point_tol".into(), format!("{:?}", self.fixed_point_tol)),
            (
                "config.output".into(),
                self.output.as_ref().map_or_else(|| "-".to_string(), |p| p.display().to_string()),
            ),
        ]
    }

    /// Reconstructs the configuration recorded in a manifest.
    pub fn from_manifest(text: &str) -> Result<Self, HarnessError> {
        let entries = RunManifest::parse(text)?;
        let get = |key: &str| {
            entries
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| HarnessError::Manifest(format!("missing key {key}")))
        };
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, HarnessError> {
            v.parse().map_err(|_| HarnessError::Manifest(format!("bad value {v:?} for {key}")))
        }
        let mut cfg = ExperimentConfig::new(get("config.mode")?.parse()?, get("config.graph")?.parse()?);
        cfg.alpha = num("alpha", get("config.alpha")?)?;
        cfg.beta = num("beta", get("config.beta")?)?;
        cfg.gamma = num("gamma", get("config.gamma")?)?;
        cfg.innate_mu = num("innate_mu", get("config.innate_mu")?)?;
        cfg.innate_var = num("innate_var", get("config.innate_var")?)?;
        cfg.repetitions = num("repetitions", get("config.repetitions")?)?;
        cfg.base_seed = num("base_seed", get("config.base_seed")?)?;
        cfg.tol = num("tol", get("config.tol")?)?;
        cfg.max_periods = num("max_periods", get("config.max_periods")?)?;
        cfg.epsilon = match get("config.epsilon")? {
            "default" => None,
            v => Some(num("epsilon", v)?),
        };
        cfg.fixed_point_tol = num("fixed_point_tol", get("config.fixed_point_tol")?)?;
        cfg.output = match get("config.output")? {
            "-" => None,
            p => Some(PathBuf::from(p)),
        };
        Ok(cfg)
    }
}

/// Key-value record of a run, one `key = value` line per entry.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunManifest {
    pub entries: Vec<(String, String)>,
}

impl RunManifest {
    fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# fjmedia run manifest\n");
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Vec<(String, String)>, HarnessError> {
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                l.split_once(" = ")
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| HarnessError::Manifest(format!("malformed line {l:?}")))
            })
            .collect()
    }
}

fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodRow {
    pub rep: usize,
    pub period: usize,
    pub sum_z: f64,
    pub mean_z: f64,
    pub z_m: f64,
    pub z_mprime: f64,
    pub truncated: bool,
    pub stop_cause: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumRow {
    pub rep: usize,
    pub n: usize,
    pub sum_s: f64,
    pub sum_z: f64,
    pub mean_z: f64,
    pub z_m: f64,
    pub z_mprime: f64,
    pub truncated: bool,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// Exact regular-graph sum, or the truncated-regime sum when `M` is capped.
    pub exact_if_regular: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonStubbornRow {
    pub rep: usize,
    pub n: usize,
    pub sum_s: f64,
    pub s_m: f64,
    pub sum_z: f64,
    pub z_m_star: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsRow {
    pub rep: usize,
    pub n: usize,
    pub d_min: f64,
    pub d_max: f64,
    pub sum_s: f64,
    pub truncated: bool,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub exact_if_regular: Option<f64>,
    pub ell_star: Option<f64>,
    pub truncated_regular_sum: Option<f64>,
    pub truncated_lower_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentRows {
    Periods(Vec<PeriodRow>),
    Equilibrium(Vec<EquilibriumRow>),
    NonStubborn(Vec<NonStubbornRow>),
    Bounds(Vec<BoundsRow>),
}

impl ExperimentRows {
    pub fn len(&self) -> usize {
        match self {
            ExperimentRows::Periods(r) => r.len(),
            ExperimentRows::Equilibrium(r) => r.len(),
            ExperimentRows::NonStubborn(r) => r.len(),
            ExperimentRows::Bounds(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// CSV with a header row, LF endings and 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        match self {
            ExperimentRows::Periods(rows) => {
                out.push_str("rep,period,sum_z,mean_z,z_M,z_Mprime,truncated,stop_cause\n");
                for r in rows {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{}",
                        r.rep,
                        r.period,
                        fmt_f(r.sum_z),
                        fmt_f(r.mean_z),
                        fmt_f(r.z_m),
                        fmt_f(r.z_mprime),
                        r.truncated,
                        r.stop_cause
                    );
                }
            }
            ExperimentRows::Equilibrium(rows) => {
                out.push_str("rep,n,sum_s,sum_z,mean_z,z_M,z_Mprime,truncated,lower,upper,exact_if_regular\n");
                for r in rows {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{},{},{},{}",
                        r.rep,
                        r.n,
                        fmt_f(r.sum_s),
                        fmt_f(r.sum_z),
                        fmt_f(r.mean_z),
                        fmt_f(r.z_m),
                        fmt_f(r.z_mprime),
                        r.truncated,
                        fmt_opt(r.lower),
                        fmt_opt(r.upper),
                        fmt_opt(r.exact_if_regular)
                    );
                }
            }
            ExperimentRows::NonStubborn(rows) => {
                out.push_str("rep,n,sum_s,s_M,sum_z,z_M_star,bound\n");
                for r in rows {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{}",
                        r.rep,
                        r.n,
                        fmt_f(r.sum_s),
                        fmt_f(r.s_m),
                        fmt_f(r.sum_z),
                        fmt_f(r.z_m_star),
                        fmt_f(r.bound)
                    );
                }
            }
            ExperimentRows::Bounds(rows) => {
                out.push_str(
                    "rep,n,d_min,d_max,sum_s,truncated,lower,upper,exact_if_regular,ell_star,truncated_regular_sum,truncated_lower_bound\n",
                );
                for r in rows {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{},{},{},{},{}",
                        r.rep,
                        r.n,
                        fmt_f(r.d_min),
                        fmt_f(r.d_max),
                        fmt_f(r.sum_s),
                        r.truncated,
                        fmt_opt(r.lower),
                        fmt_opt(r.upper),
                        fmt_opt(r.exact_if_regular),
                        fmt_opt(r.ell_star),
                        fmt_opt(r.truncated_regular_sum),
                        fmt_f(r.truncated_lower_bound)
                    );
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub manifest: RunManifest,
    pub rows: ExperimentRows,
}

enum RepRows {
    Periods(Vec<PeriodRow>),
    Equilibrium(EquilibriumRow),
    NonStubborn(NonStubbornRow),
    Bounds(BoundsRow),
}

struct RepOutput {
    entries: Vec<(String, String)>,
    rows: RepRows,
}

/// Runs every repetition of `cfg` and collects rows plus the manifest.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput, HarnessError> {
    cfg.validate()?;
    let shared = match &cfg.graph {
        GraphSource::File(_) => Some(cfg.graph.build(0)?),
        _ => None,
    };
    let reps: Vec<RepOutput> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| run_repetition(cfg, shared.as_ref(), rep))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_, _>>()?;

    let mut manifest = RunManifest::default();
    manifest.push("software.name", env!("CARGO_PKG_NAME"));
    manifest.push("software.version", env!("CARGO_PKG_VERSION"));
    manifest.entries.extend(cfg.manifest_entries());
    manifest.push("decision.innate_sampler", format!(
        "normal(mu={:?}, sigma=sqrt(var)={:?}) clipped to [0, 1]",
        cfg.innate_mu,
        cfg.innate_sigma()
    ));
    manifest.push("decision.alpha_rounding", "count_M = round(alpha * n), ties away from zero");
    manifest.push("decision.media_selection", "uniform without replacement, fixed across periods");
    manifest.push("decision.seed_scheme", format!(
        "rep seed = base_seed + rep; graph <- rep seed; innate <- stream_seed(rep seed, {INNATE_STREAM}); media <- stream_seed(rep seed, {MEDIA_STREAM})"
    ));
    manifest.push("decision.graph_per_repetition", if cfg.graph.is_random() { "regenerated" } else { "shared file" });
    manifest.push("decision.truncation_boundary", "(1+gamma)*mean == 1 counts as not truncated");
    manifest.push("decision.bounds_alpha", "bounds and ell* use the realized fraction count_M / n");
    manifest.push("decision.stop_order", "radicalized_up, radicalized_down, fixed_point, max_periods");
    manifest.push("decision.nonstubborn_source", "s_M = min((1+gamma) * mean, 1), edges beta*(1+d_i) to every node");
    manifest.push("decision.equilibrium_solver", "conjugate gradient, l-inf accuracy = tol");

    let mut rows = match cfg.mode {
        Mode::Periods => ExperimentRows::Periods(Vec::new()),
        Mode::Equilibrium => ExperimentRows::Equilibrium(Vec::new()),
        Mode::NonStubborn => ExperimentRows::NonStubborn(Vec::new()),
        Mode::Bounds => ExperimentRows::Bounds(Vec::new()),
    };
    for rep in reps {
        manifest.entries.extend(rep.entries);
        match (&mut rows, rep.rows) {
            (ExperimentRows::Periods(all), RepRows::Periods(r)) => all.extend(r),
            (ExperimentRows::Equilibrium(all), RepRows::Equilibrium(r)) => all.push(r),
            (ExperimentRows::NonStubborn(all), RepRows::NonStubborn(r)) => all.push(r),
            (ExperimentRows::Bounds(all), RepRows::Bounds(r)) => all.push(r),
            _ => unreachable!("repetition rows always match the run mode"),
        }
    }
    Ok(RunOutput { manifest, rows })
}

fn run_repetition(cfg: &ExperimentConfig, shared: Option<&Graph>, rep: usize) -> Result<RepOutput, HarnessError> {
    let wrap = |source: ModelError| HarnessError::Repetition { rep, source };
    let seed = cfg.repetition_seed(rep);
    let owned;
    let g = match shared {
        Some(g) => g,
        None => {
            owned = cfg.graph.build(seed).map_err(|e| match e {
                HarnessError::Model(m) => wrap(m),
                other => other,
            })?;
            &owned
        }
    };
    let n = g.node_count();
    let st = g.stats();
    let s = sample_innate(n, cfg.innate_mu, cfg.innate_sigma(), stream_seed(seed, INNATE_STREAM)).map_err(wrap)?;
    let count_m = media_count(n, cfg.alpha);
    let effective = cfg.media().with_alpha(count_m as f64 / n as f64);

    let key = |name: &str| format!("rep.{rep}.{name}");
    let mut entries = vec![
        (key("seed"), seed.to_string()),
        (key("n"), n.to_string()),
        (key("edges"), g.edge_count().to_string()),
        (key("d_min"), format!("{:?}", st.d_min)),
        (key("d_max"), format!("{:?}", st.d_max)),
        (key("is_regular"), st.is_regular.to_string()),
        (key("count_m"), count_m.to_string()),
        (key("alpha_effective"), format!("{:?}", effective.alpha)),
        (key("sum_s"), format!("{:?}", s.sum())),
    ];

    let rows = match cfg.mode {
        Mode::Periods => {
            let assignment = assign_media(g, cfg.alpha, stream_seed(seed, MEDIA_STREAM)).map_err(wrap)?;
            let defaults = StopCriteria::for_instance(n, cfg.gamma);
            let stop = StopCriteria {
                epsilon: cfg.epsilon.unwrap_or(defaults.epsilon),
                max_periods: cfg.max_periods,
                fixed_point_tol: cfg.fixed_point_tol,
                ..defaults
            };
            let tr = run_periods(g, &s, &cfg.media(), &assignment, &stop, cfg.tol).map_err(wrap)?;
            let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
            entries.push((key("epsilon"), format!("{:?}", stop.epsilon)));
            entries.push((key("up_threshold"), format!("{:?}", stop.up_threshold)));
            entries.push((key("stop_cause"), tr.stop_cause.to_string()));
            entries.push((key("periods"), tr.periods_run().to_string()));
            entries.push((key("ell_star"), opt(tr.ell_star_predicted.map(|v| format!("{v:?}")))));
            entries.push((key("predicted_crossing"), opt(tr.predicted_crossing.map(|v| v.to_string()))));
            entries.push((key("observed_crossing"), opt(tr.observed_crossing.map(|v| v.to_string()))));
            let cause = tr.stop_cause.to_string();
            RepRows::Periods(
                tr.records
                    .iter()
                    .map(|r| PeriodRow {
                        rep,
                        period: r.period,
                        sum_z: r.sum_z,
                        mean_z: r.mean_z,
                        z_m: r.z_m,
                        z_mprime: r.z_mprime,
                        truncated: r.truncated,
                        stop_cause: cause.clone(),
                    })
                    .collect(),
            )
        }
        Mode::Equilibrium => {
            let assignment = assign_media(g, cfg.alpha, stream_seed(seed, MEDIA_STREAM)).map_err(wrap)?;
            let src = source_opinions(&s, cfg.gamma).map_err(wrap)?;
            let zeta = ZetaVector::from_sources(&assignment, &src);
            let z = equilibrium_with_media(g, &s, &assignment, cfg.beta, &zeta, EquilibriumMethod::DirectSolve, cfg.tol)
                .map_err(wrap)?;
            let (lower, upper, exact) = if src.truncated {
                let exact = st.is_regular.then(|| truncated_regular_sum(st.d_max, n, s.sum(), &effective));
                (None, None, exact)
            } else {
                let b = sum_bounds(g, &s, &effective).map_err(wrap)?;
                (Some(b.lower), Some(b.upper), b.exact_if_regular)
            };
            RepRows::Equilibrium(EquilibriumRow {
                rep,
                n,
                sum_s: s.sum(),
                sum_z: z.sum(),
                mean_z: z.mean(),
                z_m: src.z_m,
                z_mprime: src.z_mprime,
                truncated: src.truncated,
                lower,
                upper,
                exact_if_regular: exact,
            })
        }
        Mode::NonStubborn => {
            let eq = nonstubborn_equilibrium(g, &s, &cfg.media(), cfg.tol).map_err(wrap)?;
            RepRows::NonStubborn(NonStubbornRow {
                rep,
                n,
                sum_s: s.sum(),
                s_m: eq.s_m,
                sum_z: eq.node_opinions.sum(),
                z_m_star: eq.z_m_star,
                bound: NonStubbornEquilibrium::sum_bound(s.sum(), n, cfg.gamma),
            })
        }
        Mode::Bounds => {
            let src = source_opinions(&s, cfg.gamma).map_err(wrap)?;
            let (lower, upper, exact) = if src.truncated {
                (None, None, None)
            } else {
                let b = sum_bounds(g, &s, &effective).map_err(wrap)?;
                (Some(b.lower), Some(b.upper), b.exact_if_regular)
            };
            RepRows::Bounds(BoundsRow {
                rep,
                n,
                d_min: st.d_min,
                d_max: st.d_max,
                sum_s: s.sum(),
                truncated: src.truncated,
                lower,
                upper,
                exact_if_regular: exact,
                ell_star: if st.is_regular { ell_star(n, s.sum(), st.d_max, &effective).ok() } else { None },
                truncated_regular_sum: st
                    .is_regular
                    .then(|| truncated_regular_sum(st.d_max, n, s.sum(), &effective)),
                truncated_lower_bound: truncated_lower_bound(s.sum(), effective.alpha, cfg.gamma),
            })
        }
    };
    Ok(RepOutput { entries, rows })
}

/// Path of the manifest written next to a CSV file.
pub fn manifest_path(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_owned();
    name.push(".manifest");
    PathBuf::from(name)
}

/// Writes the CSV and its manifest, removing both if either write fails.
pub fn write_outputs(out: &RunOutput, csv_path: &Path) -> Result<(), HarnessError> {
    let manifest = manifest_path(csv_path);
    let result = fs::write(csv_path, out.rows.to_csv())
        .map_err(|source| HarnessError::Io { path: csv_path.to_path_buf(), source })
        .and_then(|_| {
            fs::write(&manifest, out.manifest.to_text())
                .map_err(|source| HarnessError::Io { path: manifest.clone(), source })
        });
    if result.is_err() {
        let _ = fs::remove_file(csv_path);
        let _ = fs::remove_file(&manifest);
    }
    result
}
