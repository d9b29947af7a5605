//! The Bayesian optimization loop.
//!
//! Each round refits `(β, σ²)` on standardized outputs, fits the weight-space
//! posterior, draws one Thompson sample per batch slot, minimizes each sample
//! with the configured solver, resolves duplicates, and evaluates the batch.
//! Sequential mode is the batch loop with one slot per round.

use std::collections::HashSet;
use std::time::Instant;

use nalgebra::DVector;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::afo::{
    brute_force_minimize, build_bqp, local_search_minimize, submodular_relaxation_solve, BqpProblem, FeatureObjective,
    RelaxationConfig,
};
use crate::benchmarks::ObjectiveSpec;
use crate::features::FeatureBasis;
use crate::seed::derive_seed;
use crate::surrogate::{fit_hyperparameters, fit_posterior, HyperConfig, PosteriorModel, TrainingSet};
use crate::{BinaryPoint, Error, Result};

const STREAM_INIT: u64 = 1;
const STREAM_SAMPLE: u64 = 2;
const STREAM_FALLBACK: u64 = 3;
const STREAM_RANDOM_SEARCH: u64 = 4;

/// Fresh Thompson draws tried before falling back to a neighbour.
pub const RESAMPLE_ATTEMPTS: u64 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AfoKind {
    SubmodularRelaxation,
    LocalSearch,
    BruteForce,
}

/// What to do when the solver proposes an already evaluated point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DedupePolicy {
    /// Evaluate it again.
    Allow,
    /// Redraw, then try neighbours; re-evaluate only as a last resort.
    Resample,
    /// Like `Resample`, but never re-evaluate; fails once the space is exhausted.
    Forbid,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitStrategy {
    Uniform,
    /// Draw the initial design from the worst `fraction` of a table-backed
    /// objective.
    WorstFraction(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub budget: usize,
    pub init_count: usize,
    pub batch_size: usize,
    pub max_order: usize,
    pub afo: AfoKind,
    pub relaxation: RelaxationConfig,
    pub local_search_restarts: usize,
    pub seed: u64,
    pub dedupe: DedupePolicy,
    pub init: InitStrategy,
    pub hyper: HyperConfig,
    /// Hyperparameters are refit every this many rounds.
    pub refit_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            budget: 100,
            init_count: 5,
            batch_size: 1,
            max_order: 2,
            afo: AfoKind::SubmodularRelaxation,
            relaxation: RelaxationConfig::default(),
            local_search_restarts: 20,
            seed: 0,
            dedupe: DedupePolicy::Resample,
            init: InitStrategy::Uniform,
            hyper: HyperConfig::default(),
            refit_every: 1,
        }
    }
}

impl RunConfig {
    /// Checks the configuration against a problem of dimension `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if n == 0 {
            return bad("objective dimension must be >= 1".into());
        }
        if self.init_count == 0 {
            return bad("init_count must be >= 1".into());
        }
        if self.budget < self.init_count {
            return bad(format!("budget {} is smaller than init_count {}", self.budget, self.init_count));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.max_order > n {
            return bad(format!("max_order {} exceeds dimension {n}", self.max_order));
        }
        if self.afo != AfoKind::LocalSearch && self.max_order != 2 {
            return bad(format!("{:?} needs max_order = 2; use local_search for other orders", self.afo));
        }
        if self.afo == AfoKind::BruteForce && n > crate::afo::BRUTE_FORCE_CAP {
            return bad(format!("brute_force is limited to n <= {}", crate::afo::BRUTE_FORCE_CAP));
        }
        if self.relaxation.iterations == 0 || !(self.relaxation.step > 0.0 && self.relaxation.step.is_finite()) {
            return bad("relaxation needs iterations >= 1 and a positive step".into());
        }
        if self.local_search_restarts == 0 {
            return bad("local_search_restarts must be >= 1".into());
        }
        if self.refit_every == 0 {
            return bad("refit_every must be >= 1".into());
        }
        if let InitStrategy::WorstFraction(f) = self.init {
            if !(f > 0.0 && f <= 1.0) {
                return bad(format!("worst-fraction init needs a fraction in (0, 1], got {f}"));
            }
        }
        self.hyper.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    /// 1-based evaluation index.
    pub iteration: usize,
    /// 0 for the initial design, then one id per round.
    pub batch_id: usize,
    pub point: BinaryPoint,
    pub value: f64,
    pub best_so_far: f64,
    /// Seconds since the start of the run when the evaluation finished.
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub batch_id: usize,
    /// Mean pairwise Hamming distance; `None` for single-point batches.
    pub diversity: Option<f64>,
    /// Hyperparameters used to propose the batch (absent for the initial design).
    pub beta: Option<f64>,
    pub noise_variance: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub records: Vec<EvaluationRecord>,
    pub batches: Vec<BatchRecord>,
}

impl RunHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// First record attaining the minimum value.
    pub fn best(&self) -> Option<&EvaluationRecord> {
        self.records.iter().fold(None, |acc: Option<&EvaluationRecord>, r| match acc {
            Some(b) if b.value <= r.value => Some(b),
            _ => Some(r),
        })
    }

    pub fn best_so_far(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.best_so_far).collect()
    }

    pub fn points(&self) -> impl Iterator<Item = &BinaryPoint> {
        self.records.iter().map(|r| &r.point)
    }

    pub fn batch_diversity(&self, batch_id: usize) -> Option<f64> {
        self.batches.iter().find(|b| b.batch_id == batch_id).and_then(|b| b.diversity)
    }

    fn push(&mut self, batch_id: usize, point: BinaryPoint, value: f64, wall_time: f64) {
        let best_so_far = self.records.last().map_or(value, |r| r.best_so_far.min(value));
        self.records.push(EvaluationRecord {
            iteration: self.records.len() + 1,
            batch_id,
            point,
            value,
            best_so_far,
            wall_time,
        });
    }
}

/// A run that stopped early; `history` holds everything evaluated so far.
#[derive(Debug, thiserror::Error)]
#[error("run aborted after {} evaluations: {error}", history.len())]
pub struct RunFailure {
    pub error: Error,
    pub history: RunHistory,
}

/// Mean Hamming distance over all unordered pairs.
pub fn batch_diversity(points: &[BinaryPoint]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidConfig("diversity needs at least two points".into()));
    }
    let mut total = 0usize;
    let mut pairs = 0usize;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            total += points[i].hamming(&points[j])?;
            pairs += 1;
        }
    }
    Ok(total as f64 / pairs as f64)
}

/// Posterior plus the basis it was fitted under.
#[derive(Clone, Debug)]
pub struct FittedSurrogate {
    pub basis: FeatureBasis,
    pub model: PosteriorModel,
    pub beta: f64,
    pub noise_variance: f64,
}

/// Fits hyperparameters and the posterior on outputs standardized to zero
/// mean and unit variance.
pub fn fit_surrogate(
    points: &[BinaryPoint],
    values: &[f64],
    max_order: usize,
    hyper: &HyperConfig,
    fixed: Option<(f64, f64)>,
) -> Result<FittedSurrogate> {
    let n = points.first().map(BinaryPoint::len).ok_or(Error::InvalidConfig("no training data".into()))?;
    let ys = standardize(values);
    let (beta, noise_variance) = match fixed {
        Some(h) => h,
        None => {
            let basis = FeatureBasis::new(n, max_order, hyper.beta_grid[0])?;
            let train = TrainingSet::new(basis, points.to_vec(), ys.clone())?;
            fit_hyperparameters(&train, hyper)?
        }
    };
    let basis = FeatureBasis::new(n, max_order, beta)?;
    let train = TrainingSet::new(basis.clone(), points.to_vec(), ys)?;
    let prior = hyper.prior.scales(&basis)?;
    let model = fit_posterior(&train, noise_variance, prior.as_ref())?;
    Ok(FittedSurrogate { basis, model, beta, noise_variance })
}

fn standardize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    values.iter().map(|v| (v - mean) / sd).collect()
}

/// One Thompson draw minimized by the configured solver, without dedupe.
/// Returns the candidate and the sampled weights.
pub fn propose(surrogate: &FittedSurrogate, cfg: &RunConfig, seed: u64) -> Result<(BinaryPoint, DVector<f64>)> {
    let theta = surrogate.model.sample_theta(seed);
    let n = surrogate.basis.n();
    let point = match cfg.afo {
        AfoKind::SubmodularRelaxation => {
            let p = build_bqp(&theta, &surrogate.basis)?;
            submodular_relaxation_solve(&p, &cfg.relaxation)?.point
        }
        AfoKind::BruteForce => brute_force_minimize(&build_bqp(&theta, &surrogate.basis)?)?.0,
        AfoKind::LocalSearch => {
            let ls_seed = derive_seed(seed, &[0]);
            if surrogate.basis.max_order() == 2 {
                let p = build_bqp(&theta, &surrogate.basis)?;
                local_search_minimize(n, |x| p.value(x).expect("dimension checked"), cfg.local_search_restarts, ls_seed)?
                    .point
            } else {
                let obj = FeatureObjective { theta: &theta, basis: &surrogate.basis };
                local_search_minimize(n, |x| obj.value(x).expect("dimension checked"), cfg.local_search_restarts, ls_seed)?
                    .point
            }
        }
    };
    Ok((point, theta))
}

fn sampled_value(surrogate: &FittedSurrogate, theta: &DVector<f64>, x: &BinaryPoint) -> Result<f64> {
    if surrogate.basis.max_order() == 2 {
        let p: BqpProblem = build_bqp(theta, &surrogate.basis)?;
        p.value(x)
    } else {
        FeatureObjective { theta, basis: &surrogate.basis }.value(x)
    }
}

/// Proposes a point and applies the dedupe policy against `taken`.
///
/// `Resample` and `Forbid` first try up to [`RESAMPLE_ATTEMPTS`] fresh draws,
/// then the single-bit-flip neighbour of the first candidate that is best
/// under its own Thompson sample. If every neighbour is taken, `Resample`
/// accepts the duplicate while `Forbid` picks a uniformly random untaken
/// point.
pub fn select_next(
    surrogate: &FittedSurrogate,
    cfg: &RunConfig,
    seed: u64,
    taken: &HashSet<BinaryPoint>,
) -> Result<BinaryPoint> {
    let first = propose(surrogate, cfg, derive_seed(seed, &[0]))?;
    resolve_duplicate(surrogate, cfg, seed, taken, first)
}

fn resolve_duplicate(
    surrogate: &FittedSurrogate,
    cfg: &RunConfig,
    seed: u64,
    taken: &HashSet<BinaryPoint>,
    first: (BinaryPoint, DVector<f64>),
) -> Result<BinaryPoint> {
    if cfg.dedupe == DedupePolicy::Allow || !taken.contains(&first.0) {
        return Ok(first.0);
    }
    for attempt in 1..=RESAMPLE_ATTEMPTS {
        let (x, _) = propose(surrogate, cfg, derive_seed(seed, &[attempt]))?;
        if !taken.contains(&x) {
            return Ok(x);
        }
    }

    let (candidate, theta) = first;
    let mut best: Option<(f64, BinaryPoint)> = None;
    for i in 0..candidate.len() {
        let nb = candidate.flipped(i);
        if taken.contains(&nb) {
            continue;
        }
        let v = sampled_value(surrogate, &theta, &nb)?;
        if best.as_ref().is_none_or(|(bv, bx)| v < *bv || (v == *bv && nb < *bx)) {
            best = Some((v, nb));
        }
    }
    if let Some((_, x)) = best {
        return Ok(x);
    }

    match cfg.dedupe {
        DedupePolicy::Resample | DedupePolicy::Allow => Ok(candidate),
        DedupePolicy::Forbid => random_untaken(candidate.len(), taken, derive_seed(seed, &[STREAM_FALLBACK])),
    }
}

fn random_untaken(n: usize, taken: &HashSet<BinaryPoint>, seed: u64) -> Result<BinaryPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if n < 64 && (taken.len() as u128) >= (1u128 << n) {
        return Err(Error::ExhaustedSpace);
    }
    if n <= 20 {
        let free: Vec<u64> = (0..1u64 << n)
            .filter(|&i| !taken.contains(&BinaryPoint::from_index(n, i)))
            .collect();
        let idx = free.choose(&mut rng).ok_or(Error::ExhaustedSpace)?;
        return Ok(BinaryPoint::from_index(n, *idx));
    }
    loop {
        let x = BinaryPoint::random(n, &mut rng);
        if !taken.contains(&x) {
            return Ok(x);
        }
    }
}

fn initial_design(cfg: &RunConfig, objective: &ObjectiveSpec) -> Result<Vec<BinaryPoint>> {
    let n = objective.dimension();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[STREAM_INIT]));
    match cfg.init {
        InitStrategy::Uniform => {
            let distinct = cfg.dedupe != DedupePolicy::Allow && (n >= 64 || (cfg.init_count as u128) <= (1u128 << n));
            let mut seen = HashSet::new();
            let mut out = Vec::with_capacity(cfg.init_count);
            while out.len() < cfg.init_count {
                let x = BinaryPoint::random(n, &mut rng);
                if !distinct || seen.insert(x.clone()) {
                    out.push(x);
                }
            }
            Ok(out)
        }
        InitStrategy::WorstFraction(fraction) => {
            let mut table = objective
                .table()
                .ok_or_else(|| Error::InvalidConfig("worst-fraction init needs a table-backed objective".into()))?;
            table.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            let keep = ((table.len() as f64 * fraction).ceil() as usize).max(cfg.init_count).min(table.len());
            let mut pool: Vec<BinaryPoint> = table.into_iter().take(keep).map(|e| e.0).collect();
            pool.shuffle(&mut rng);
            if pool.len() < cfg.init_count {
                return Err(Error::InvalidConfig("table is smaller than init_count".into()));
            }
            pool.truncate(cfg.init_count);
            Ok(pool)
        }
    }
}

fn evaluate_batch(
    objective: &ObjectiveSpec,
    points: &[BinaryPoint],
    start: Instant,
) -> Vec<Result<(f64, f64)>> {
    points
        .par_iter()
        .map(|x| objective.evaluate(x).map(|v| (v, start.elapsed().as_secs_f64())))
        .collect()
}

fn record_batch(
    history: &mut RunHistory,
    batch_id: usize,
    points: Vec<BinaryPoint>,
    results: Vec<Result<(f64, f64)>>,
    hypers: Option<(f64, f64)>,
) -> Result<()> {
    let diversity = if points.len() >= 2 { Some(batch_diversity(&points)?) } else { None };
    history.batches.push(BatchRecord {
        batch_id,
        diversity,
        beta: hypers.map(|h| h.0),
        noise_variance: hypers.map(|h| h.1),
    });
    for (x, r) in points.into_iter().zip(results) {
        let (v, t) = r?;
        if !v.is_finite() {
            return Err(Error::NonFinite("objective value"));
        }
        history.push(batch_id, x, v, t);
    }
    Ok(())
}

/// Runs the loop with `cfg.batch_size` proposals per round.
pub fn run_bo(cfg: &RunConfig, objective: &ObjectiveSpec) -> std::result::Result<RunHistory, RunFailure> {
    let mut history = RunHistory::default();
    match run_inner(cfg, objective, &mut history) {
        Ok(()) => Ok(history),
        Err(error) => Err(RunFailure { error, history }),
    }
}

/// Sequential mode: one proposal per round regardless of `cfg.batch_size`.
pub fn run_sequential(cfg: &RunConfig, objective: &ObjectiveSpec) -> std::result::Result<RunHistory, RunFailure> {
    run_bo(&RunConfig { batch_size: 1, ..cfg.clone() }, objective)
}

/// Batch mode: `cfg.batch_size` independent Thompson samples per round,
/// solved concurrently.
pub fn run_batch_bo(cfg: &RunConfig, objective: &ObjectiveSpec) -> std::result::Result<RunHistory, RunFailure> {
    run_bo(cfg, objective)
}

fn run_inner(cfg: &RunConfig, objective: &ObjectiveSpec, history: &mut RunHistory) -> Result<()> {
    let n = objective.dimension();
    cfg.validate(n)?;
    let start = Instant::now();

    let init = initial_design(cfg, objective)?;
    let results = evaluate_batch(objective, &init, start);
    record_batch(history, 0, init, results, None)?;

    let mut hypers = None;
    let mut round = 0usize;
    while history.len() < cfg.budget {
        round += 1;
        let slots = cfg.batch_size.min(cfg.budget - history.len());
        let points: Vec<BinaryPoint> = history.points().cloned().collect();
        let values: Vec<f64> = history.records.iter().map(|r| r.value).collect();
        let refit = (round - 1).is_multiple_of(cfg.refit_every);
        let surrogate = fit_surrogate(&points, &values, cfg.max_order, &cfg.hyper, if refit { None } else { hypers })?;
        hypers = Some((surrogate.beta, surrogate.noise_variance));

        let slot_seed = |k: usize| derive_seed(cfg.seed, &[STREAM_SAMPLE, round as u64, k as u64]);
        let proposals: Vec<(BinaryPoint, DVector<f64>)> = (0..slots)
            .into_par_iter()
            .map(|k| propose(&surrogate, cfg, derive_seed(slot_seed(k), &[0])))
            .collect::<Result<_>>()?;

        let mut taken: HashSet<BinaryPoint> = points.into_iter().collect();
        let mut batch = Vec::with_capacity(slots);
        for (k, first) in proposals.into_iter().enumerate() {
            let x = resolve_duplicate(&surrogate, cfg, slot_seed(k), &taken, first)?;
            taken.insert(x.clone());
            batch.push(x);
        }

        let results = evaluate_batch(objective, &batch, start);
        record_batch(history, round, batch, results, hypers)?;
    }
    Ok(())
}

/// Uniform random search baseline with the same budget accounting.
pub fn random_search(objective: &ObjectiveSpec, budget: usize, seed: u64) -> Result<RunHistory> {
    let n = objective.dimension();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[STREAM_RANDOM_SEARCH]));
    let start = Instant::now();
    let mut history = RunHistory::default();
    let points: Vec<BinaryPoint> = (0..budget).map(|_| BinaryPoint::random(n, &mut rng)).collect();
    history.batches.push(BatchRecord { batch_id: 0, diversity: None, beta: None, noise_variance: None });
    for x in points {
        let v = objective.evaluate(&x)?;
        history.push(0, x, v, start.elapsed().as_secs_f64());
    }
    Ok(history)
}
