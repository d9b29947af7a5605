//! Experiment runner: JSON configuration, repeated seeded runs, CSV output.
//!
//! Output layout under `output_dir`:
//!
//! | file | contents |
//! |------|----------|
//! | `run_NNN.csv` | one row per evaluation of run `NNN` |
//! | `summary.csv` | per-iteration mean best-so-far and standard error over runs |
//! | `manifest.json` | config echo, version, per-run seeds and outcomes, wall time |

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mercbo::afo::{RelaxationConfig, BRUTE_FORCE_CAP};
use mercbo::benchmarks::{load_tabular, make_ising, Alphabet, Labs, ObjectiveSpec, TabularSpec};
use mercbo::driver::{run_bo, AfoKind, DedupePolicy, InitStrategy, RunConfig, RunHistory};
use mercbo::seed::derive_seed;
use mercbo::surrogate::{log_space, HyperConfig, PriorSpec, DEFAULT_JITTER};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const RUN_COLUMNS: [&str; 8] =
    ["run_id", "iteration", "batch_id", "point_bits", "objective", "best_so_far", "batch_diversity", "wall_time_s"];
pub const SUMMARY_COLUMNS: [&str; 4] = ["iteration", "mean_best_so_far", "stderr", "n_runs"];

pub const BENCHMARKS: [&str; 4] = ["labs", "ising", "tabular", "synthetic_tabular"];

fn default_init_count() -> usize {
    5
}
fn default_one() -> usize {
    1
}
fn default_max_order() -> usize {
    2
}
fn default_afo() -> String {
    "submodular_relaxation".into()
}
fn default_iterations() -> usize {
    5
}
fn default_step() -> f64 {
    0.2
}
fn default_true() -> bool {
    true
}
fn default_restarts() -> usize {
    20
}
fn default_dedupe() -> String {
    "resample".into()
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}
fn default_prior() -> String {
    "isotropic".into()
}
fn default_sign() -> f64 {
    1.0
}
fn default_alphabet() -> String {
    "ACGT".into()
}

/// Flat experiment configuration as read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// One of [`BENCHMARKS`].
    pub benchmark: String,
    #[serde(default)]
    pub labs_n: Option<usize>,
    #[serde(default)]
    pub ising_seed: Option<u64>,
    #[serde(default)]
    pub ising_lambda: Option<f64>,
    /// CSV with `sequence,value` rows.
    #[serde(default)]
    pub tabular_path: Option<PathBuf>,
    /// Multiplies table values; use -1 to maximize a table.
    #[serde(default = "default_sign")]
    pub tabular_sign: f64,
    #[serde(default)]
    pub tabular_length: Option<usize>,
    #[serde(default = "default_alphabet")]
    pub tabular_alphabet: String,
    #[serde(default)]
    pub tabular_seed: Option<u64>,
    /// Draw the initial design from this worst fraction of the table.
    #[serde(default)]
    pub tabular_init: Option<f64>,

    pub budget: usize,
    #[serde(default = "default_init_count")]
    pub init_count: usize,
    #[serde(default = "default_one")]
    pub batch_size: usize,
    #[serde(default = "default_max_order")]
    pub max_order: usize,
    #[serde(default = "default_afo")]
    pub afo: String,
    #[serde(default = "default_iterations")]
    pub relaxation_iterations: usize,
    #[serde(default = "default_step")]
    pub relaxation_step: f64,
    #[serde(default = "default_true")]
    pub relaxation_polish: bool,
    #[serde(default = "default_restarts")]
    pub local_search_restarts: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dedupe")]
    pub dedupe: String,
    #[serde(default = "default_one")]
    pub repeats: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_prior")]
    pub prior: String,
    #[serde(default)]
    pub prior_scales: Option<Vec<f64>>,
    #[serde(default)]
    pub beta_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub noise_grid: Option<Vec<f64>>,
    #[serde(default = "default_one")]
    pub refit_every: usize,
    /// Write measured wall time; otherwise the column is 0 so reruns are
    /// byte-identical.
    #[serde(default)]
    pub record_timing: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config:\n{}", .0.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Violation>),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Core(#[from] mercbo::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{failed} of {total} runs failed; see manifest.json")]
    RunsFailed { failed: usize, total: usize },
}

impl CliError {
    /// 1 for configuration problems, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Read { .. } | CliError::Parse(_) | CliError::Invalid(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CliError::Read { path: path.to_owned(), source })?;
    Ok(serde_json::from_str(&text)?)
}

fn grid_ok(grid: &[f64]) -> bool {
    !grid.is_empty() && grid.iter().all(|v| v.is_finite() && *v > 0.0)
}

impl ExperimentConfig {
    /// A minimal config for `benchmark` with every other field at its default.
    pub fn new(benchmark: &str, budget: usize) -> Self {
        serde_json::from_value(serde_json::json!({ "benchmark": benchmark, "budget": budget }))
            .expect("defaults are complete")
    }

    /// Every violated constraint, each named by its field.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut bad = |field: &str, message: String| out.push(Violation { field: field.into(), message });

        if self.init_count == 0 {
            bad("init_count", "must be >= 1".into());
        }
        if self.budget < self.init_count {
            bad("budget", format!("{} is smaller than init_count {}", self.budget, self.init_count));
        }
        if self.batch_size == 0 {
            bad("batch_size", "must be >= 1".into());
        }
        if self.repeats == 0 {
            bad("repeats", "must be >= 1".into());
        }
        if self.max_order == 0 {
            bad("max_order", "must be >= 1".into());
        }
        if self.relaxation_iterations == 0 {
            bad("relaxation_iterations", "must be >= 1".into());
        }
        if !(self.relaxation_step.is_finite() && self.relaxation_step > 0.0) {
            bad("relaxation_step", "must be a positive number".into());
        }
        if self.local_search_restarts == 0 {
            bad("local_search_restarts", "must be >= 1".into());
        }
        if self.refit_every == 0 {
            bad("refit_every", "must be >= 1".into());
        }
        match self.afo_kind() {
            Some(AfoKind::LocalSearch) | None => {}
            Some(_) if self.max_order != 2 => {
                bad("max_order", format!("{} requires max_order = 2; use local_search", self.afo))
            }
            Some(_) => {}
        }
        if self.afo_kind().is_none() {
            bad("afo", format!("unknown solver {:?}; expected submodular_relaxation, local_search or brute_force", self.afo));
        }
        if self.dedupe_policy().is_none() {
            bad("dedupe", format!("unknown policy {:?}; expected allow, resample or forbid", self.dedupe));
        }
        match self.prior.as_str() {
            "isotropic" => {
                if self.prior_scales.is_some() {
                    bad("prior_scales", "only used with prior = \"hierarchical\"".into());
                }
            }
            "hierarchical" => {
                if let Some(s) = &self.prior_scales {
                    if !grid_ok(s) {
                        bad("prior_scales", "entries must be positive and finite".into());
                    }
                }
            }
            other => bad("prior", format!("unknown prior {other:?}; expected isotropic or hierarchical")),
        }
        for (field, grid) in [("beta_grid", &self.beta_grid), ("noise_grid", &self.noise_grid)] {
            if let Some(g) = grid {
                if !grid_ok(g) {
                    bad(field, "must be a non-empty list of positive numbers".into());
                }
            }
        }
        if self.tabular_sign != 1.0 && self.tabular_sign != -1.0 {
            bad("tabular_sign", format!("must be 1 or -1, got {}", self.tabular_sign));
        }
        if let Some(f) = self.tabular_init {
            if !(f > 0.0 && f <= 1.0) {
                bad("tabular_init", format!("fraction must lie in (0, 1], got {f}"));
            }
            if !self.benchmark.ends_with("tabular") {
                bad("tabular_init", "only applies to tabular benchmarks".into());
            }
        }
        if self.output_dir.is_file() {
            bad("output_dir", format!("{} is a file", self.output_dir.display()));
        }

        let dimension = match self.benchmark.as_str() {
            "labs" => match self.labs_n {
                Some(n) if n >= 2 => Some(n),
                Some(n) => {
                    bad("labs_n", format!("must be >= 2, got {n}"));
                    None
                }
                None => {
                    bad("labs_n", "required for benchmark \"labs\"".into());
                    None
                }
            },
            "ising" => {
                if self.ising_seed.is_none() {
                    bad("ising_seed", "required for benchmark \"ising\"".into());
                }
                match self.ising_lambda {
                    Some(l) if l.is_finite() && l >= 0.0 => {}
                    Some(l) => bad("ising_lambda", format!("must be >= 0, got {l}")),
                    None => bad("ising_lambda", "required for benchmark \"ising\"".into()),
                }
                Some(mercbo::benchmarks::ISING_EDGES)
            }
            "tabular" => match &self.tabular_path {
                None => {
                    bad("tabular_path", "required for benchmark \"tabular\"".into());
                    None
                }
                Some(p) if !p.is_file() => {
                    bad("tabular_path", format!("{} does not exist", p.display()));
                    None
                }
                Some(p) => match load_tabular(p, 1.0) {
                    Ok(spec) => Some(spec.sequence_length() * spec.alphabet().width()),
                    Err(e) => {
                        bad("tabular_path", e.to_string());
                        None
                    }
                },
            },
            "synthetic_tabular" => {
                let alphabet = Alphabet::new(self.tabular_alphabet.chars());
                if let Err(e) = &alphabet {
                    bad("tabular_alphabet", e.to_string());
                }
                if self.tabular_seed.is_none() {
                    bad("tabular_seed", "required for benchmark \"synthetic_tabular\"".into());
                }
                match (self.tabular_length, alphabet) {
                    (Some(_), Err(_)) => None,
                    (Some(len), Ok(a)) if len >= 1 && len * a.width() <= 24 => Some(len * a.width()),
                    (Some(len), Ok(a)) if len >= 1 => {
                        bad("tabular_length", format!("table would have {} bits; the limit is 24", len * a.width()));
                        None
                    }
                    (Some(_), _) => {
                        bad("tabular_length", "must be >= 1".into());
                        None
                    }
                    (None, _) => {
                        bad("tabular_length", "required for benchmark \"synthetic_tabular\"".into());
                        None
                    }
                }
            }
            other => {
                bad("benchmark", format!("unknown benchmark {other:?}; expected one of {}", BENCHMARKS.join(", ")));
                None
            }
        };

        if let Some(n) = dimension {
            if self.max_order > n {
                bad("max_order", format!("{} exceeds the problem dimension {n}", self.max_order));
            }
            if self.afo_kind() == Some(AfoKind::BruteForce) && n > BRUTE_FORCE_CAP {
                bad("afo", format!("brute_force is limited to {BRUTE_FORCE_CAP} bits, problem has {n}"));
            }
            if let Some(s) = &self.prior_scales {
                if s.len() != n {
                    bad("prior_scales", format!("expected {n} entries, found {}", s.len()));
                }
            }
            if self.dedupe_policy() == Some(DedupePolicy::Forbid) && n < 64 && (self.budget as u128) > (1u128 << n) {
                bad("budget", format!("exceeds the {} points of the search space under dedupe = forbid", 1u128 << n));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(CliError::Invalid(v))
        }
    }

    fn afo_kind(&self) -> Option<AfoKind> {
        match self.afo.as_str() {
            "submodular_relaxation" => Some(AfoKind::SubmodularRelaxation),
            "local_search" => Some(AfoKind::LocalSearch),
            "brute_force" => Some(AfoKind::BruteForce),
            _ => None,
        }
    }

    fn dedupe_policy(&self) -> Option<DedupePolicy> {
        match self.dedupe.as_str() {
            "allow" => Some(DedupePolicy::Allow),
            "resample" => Some(DedupePolicy::Resample),
            "forbid" => Some(DedupePolicy::Forbid),
            _ => None,
        }
    }

    /// Builds a fresh objective; call once per run so evaluation counters are
    /// independent.
    pub fn build_objective(&self) -> Result<ObjectiveSpec> {
        self.validate()?;
        let spec = match self.benchmark.as_str() {
            "labs" => ObjectiveSpec::new(Labs::new(self.labs_n.expect("validated"))?),
            "ising" => ObjectiveSpec::new(make_ising(
                self.ising_seed.expect("validated"),
                self.ising_lambda.expect("validated"),
            )?),
            "tabular" => ObjectiveSpec::new(load_tabular(
                self.tabular_path.as_ref().expect("validated"),
                self.tabular_sign,
            )?),
            _ => ObjectiveSpec::new(self.synthetic_table()?),
        };
        Ok(spec)
    }

    fn synthetic_table(&self) -> Result<TabularSpec> {
        let alphabet = Alphabet::new(self.tabular_alphabet.chars())?;
        let spec = TabularSpec::synthetic(
            alphabet,
            self.tabular_length.expect("validated"),
            self.tabular_seed.expect("validated"),
        )?;
        Ok(spec.with_sign(self.tabular_sign)?)
    }

    /// Seed of run `run_index`.
    pub fn run_seed(&self, run_index: usize) -> u64 {
        derive_seed(self.seed, &[run_index as u64])
    }

    pub fn run_config(&self, run_index: usize) -> Result<RunConfig> {
        self.validate()?;
        let defaults = HyperConfig::default();
        let prior = match self.prior.as_str() {
            "hierarchical" => PriorSpec::Hierarchical { dimension_scales: self.prior_scales.clone() },
            _ => PriorSpec::Isotropic,
        };
        Ok(RunConfig {
            budget: self.budget,
            init_count: self.init_count,
            batch_size: self.batch_size,
            max_order: self.max_order,
            afo: self.afo_kind().expect("validated"),
            relaxation: RelaxationConfig {
                iterations: self.relaxation_iterations,
                step: self.relaxation_step,
                polish: self.relaxation_polish,
            },
            local_search_restarts: self.local_search_restarts,
            seed: self.run_seed(run_index),
            dedupe: self.dedupe_policy().expect("validated"),
            init: match self.tabular_init {
                Some(f) => InitStrategy::WorstFraction(f),
                None => InitStrategy::Uniform,
            },
            hyper: HyperConfig {
                beta_grid: self.beta_grid.clone().unwrap_or(defaults.beta_grid),
                noise_grid: self.noise_grid.clone().unwrap_or(defaults.noise_grid),
                jitter: DEFAULT_JITTER,
                prior,
            },
            refit_every: self.refit_every,
        })
    }
}

/// Default evidence grids, exposed for documentation and tests.
pub fn default_grids() -> (Vec<f64>, Vec<f64>) {
    (log_space(0.01, 2.0, 10), log_space(1e-4, 1.0, 6))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: usize,
    pub seed: u64,
    pub csv: String,
    pub evaluations: usize,
    pub best_value: Option<f64>,
    pub best_point: Option<String>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: ExperimentConfig,
    pub runs: Vec<RunSummary>,
    pub total_wall_time_s: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub output_dir: PathBuf,
    pub histories: Vec<RunHistory>,
    pub manifest: Manifest,
}

pub fn run_csv_name(run_id: usize) -> String {
    format!("run_{run_id:03}.csv")
}

/// Writes one run's history in the per-run CSV schema.
pub fn write_run_csv(path: &Path, run_id: usize, history: &RunHistory, record_timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RUN_COLUMNS)?;
    for r in &history.records {
        let diversity = history.batch_diversity(r.batch_id).map(|d| d.to_string()).unwrap_or_default();
        let wall = if record_timing { r.wall_time } else { 0.0 };
        w.write_record([
            run_id.to_string(),
            r.iteration.to_string(),
            r.batch_id.to_string(),
            r.point.to_string(),
            r.value.to_string(),
            r.best_so_far.to_string(),
            diversity,
            wall.to_string(),
        ])?;
    }
    w.flush().map_err(|source| CliError::Write { path: path.to_owned(), source })?;
    Ok(())
}

/// `(iteration, mean, stderr, n_runs)` rows over the runs that reached each
/// iteration. The standard error is the sample standard deviation over √n,
/// and 0 for a single run.
pub fn summarize(histories: &[RunHistory]) -> Vec<(usize, f64, f64, usize)> {
    let longest = histories.iter().map(RunHistory::len).max().unwrap_or(0);
    (0..longest)
        .map(|t| {
            let vals: Vec<f64> = histories.iter().filter_map(|h| h.records.get(t).map(|r| r.best_so_far)).collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let stderr = if vals.len() > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
            } else {
                0.0
            };
            (t + 1, mean, stderr, vals.len())
        })
        .collect()
}

pub fn write_summary_csv(path: &Path, histories: &[RunHistory]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_COLUMNS)?;
    for (t, mean, se, n) in summarize(histories) {
        w.write_record([t.to_string(), mean.to_string(), se.to_string(), n.to_string()])?;
    }
    w.flush().map_err(|source| CliError::Write { path: path.to_owned(), source })?;
    Ok(())
}

/// Runs every repeat, writes all output files, and returns the report.
///
/// Runs that fail keep their partial CSV and are listed with their error in
/// the manifest; the call then returns [`CliError::RunsFailed`] after all
/// files are written.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|source| CliError::Write { path: dir.clone(), source })?;

    let outcomes: Vec<Result<(RunHistory, RunSummary)>> = (0..cfg.repeats)
        .into_par_iter()
        .map(|run_id| {
            let run_cfg = cfg.run_config(run_id)?;
            let objective = cfg.build_objective()?;
            let (history, error) = match run_bo(&run_cfg, &objective) {
                Ok(h) => (h, None),
                Err(f) => (f.history, Some(f.error.to_string())),
            };
            let csv_name = run_csv_name(run_id);
            write_run_csv(&dir.join(&csv_name), run_id, &history, cfg.record_timing)?;
            let best = history.best();
            let summary = RunSummary {
                run_id,
                seed: run_cfg.seed,
                csv: csv_name,
                evaluations: history.len(),
                best_value: best.map(|b| b.value),
                best_point: best.map(|b| b.point.to_string()),
                error,
            };
            Ok((history, summary))
        })
        .collect();

    let mut histories = Vec::with_capacity(cfg.repeats);
    let mut runs = Vec::with_capacity(cfg.repeats);
    for o in outcomes {
        let (h, s) = o?;
        histories.push(h);
        runs.push(s);
    }
    write_summary_csv(&dir.join("summary.csv"), &histories)?;

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        runs,
        total_wall_time_s: start.elapsed().as_secs_f64(),
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|source| CliError::Write { path, source })?;

    let failed = manifest.runs.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        return Err(CliError::RunsFailed { failed, total: cfg.repeats });
    }
    Ok(ExperimentReport { output_dir: dir, histories, manifest })
}
