//! Bayesian linear surrogate `f(x) = θᵀφ(x)` with a Gaussian prior on `θ`.
//!
//! Everything is solved in weight space: with `D` features the posterior needs
//! one `D × D` factorization regardless of how many observations there are.
//! Hyperparameters `(β, σ²)` are chosen by maximizing the marginal likelihood
//! over a fixed grid.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::features::{FeatureBasis, FeatureVector};
use crate::{BinaryPoint, Error, Result};

/// Relative jitter seed: the first jitter is this times `trace / D`.
pub const DEFAULT_JITTER: f64 = 1e-10;
const JITTER_ESCALATIONS: usize = 6;

/// Observed points with their feature rows under the active basis.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    basis: FeatureBasis,
    points: Vec<BinaryPoint>,
    features: DMatrix<f64>,
    outputs: DVector<f64>,
}

impl TrainingSet {
    pub fn new(basis: FeatureBasis, points: Vec<BinaryPoint>, outputs: Vec<f64>) -> Result<Self> {
        if points.len() != outputs.len() {
            return Err(Error::DimensionMismatch { expected: points.len(), found: outputs.len() });
        }
        if outputs.iter().any(|y| !y.is_finite()) {
            return Err(Error::NonFinite("training outputs"));
        }
        let features = basis.feature_matrix(&points)?;
        Ok(Self { basis, points, features, outputs: DVector::from_vec(outputs) })
    }

    /// Rebuilds the feature rows for a different diffusion scale.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        let basis = self.basis.with_beta(beta)?;
        let features = basis.feature_matrix(&self.points)?;
        Ok(Self { basis, points: self.points.clone(), features, outputs: self.outputs.clone() })
    }

    pub fn basis(&self) -> &FeatureBasis {
        &self.basis
    }

    pub fn points(&self) -> &[BinaryPoint] {
        &self.points
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn outputs(&self) -> &DVector<f64> {
        &self.outputs
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// How the diagonal prior covariance `Υ` over `θ` is formed.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum PriorSpec {
    /// `θ ~ N(0, I)`.
    #[default]
    Isotropic,
    /// Strong-hierarchy prior: the variance of the feature for subset `S` is
    /// `Π_{i∈S} s_i`. `None` uses the basis diffusion scale for every `s_i`.
    Hierarchical { dimension_scales: Option<Vec<f64>> },
}

impl PriorSpec {
    /// Diagonal of `Υ` for `basis`, or `None` for the identity.
    pub fn scales(&self, basis: &FeatureBasis) -> Result<Option<DVector<f64>>> {
        match self {
            PriorSpec::Isotropic => Ok(None),
            PriorSpec::Hierarchical { dimension_scales } => {
                let per_dim = match dimension_scales {
                    Some(s) if s.len() != basis.n() => {
                        return Err(Error::DimensionMismatch { expected: basis.n(), found: s.len() })
                    }
                    Some(s) => s.clone(),
                    None => vec![basis.beta(); basis.n()],
                };
                if per_dim.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
                    return Err(Error::InvalidConfig("hierarchical prior scales must be finite and > 0".into()));
                }
                Ok(Some(hierarchical_scales(basis, &per_dim)))
            }
        }
    }
}

/// `Υ_S = Π_{i∈S} s_i` (empty product 1 for the constant feature).
pub fn hierarchical_scales(basis: &FeatureBasis, per_dim: &[f64]) -> DVector<f64> {
    DVector::from_iterator(basis.len(), basis.subsets().iter().map(|s| s.iter().map(|&i| per_dim[i]).product()))
}

/// Grid for evidence maximization.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperConfig {
    pub beta_grid: Vec<f64>,
    pub noise_grid: Vec<f64>,
    /// Relative jitter seed for the factorizations.
    pub jitter: f64,
    pub prior: PriorSpec,
}

impl Default for HyperConfig {
    fn default() -> Self {
        Self {
            beta_grid: log_space(0.01, 2.0, 10),
            noise_grid: log_space(1e-4, 1.0, 6),
            jitter: DEFAULT_JITTER,
            prior: PriorSpec::Isotropic,
        }
    }
}

impl HyperConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta_grid.is_empty() || self.noise_grid.is_empty() {
            return Err(Error::InvalidConfig("hyperparameter grids must be non-empty".into()));
        }
        if self.beta_grid.iter().any(|&b| !(b.is_finite() && b >= 0.0)) {
            return Err(Error::InvalidConfig("beta grid values must be finite and >= 0".into()));
        }
        if self.noise_grid.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::InvalidConfig("noise grid values must be finite and > 0".into()));
        }
        if !(self.jitter.is_finite() && self.jitter > 0.0) {
            return Err(Error::InvalidConfig("jitter must be > 0".into()));
        }
        Ok(())
    }
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp()).collect()
}

/// Gaussian posterior `N(μ, Σ)` over the feature weights.
#[derive(Clone, Debug)]
pub struct PosteriorModel {
    mean: DVector<f64>,
    covariance_factor: DMatrix<f64>,
    noise_variance: f64,
    prior_scales: Option<DVector<f64>>,
}

impl PosteriorModel {
    /// Assembles a model from a mean and a lower-triangular factor `L` with `Σ = LLᵀ`.
    pub fn from_parts(
        mean: DVector<f64>,
        covariance_factor: DMatrix<f64>,
        noise_variance: f64,
        prior_scales: Option<DVector<f64>>,
    ) -> Result<Self> {
        let d = mean.len();
        if covariance_factor.shape() != (d, d) {
            return Err(Error::DimensionMismatch { expected: d, found: covariance_factor.nrows() });
        }
        if let Some(s) = &prior_scales {
            if s.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: s.len() });
            }
        }
        if !(noise_variance.is_finite() && noise_variance > 0.0) {
            return Err(Error::InvalidConfig(format!("noise variance must be > 0, got {noise_variance}")));
        }
        if mean.iter().chain(covariance_factor.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("posterior parameters"));
        }
        Ok(Self { mean, covariance_factor: covariance_factor.lower_triangle(), noise_variance, prior_scales })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance_factor(&self) -> &DMatrix<f64> {
        &self.covariance_factor
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.covariance_factor * self.covariance_factor.transpose()
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn prior_scales(&self) -> Option<&DVector<f64>> {
        self.prior_scales.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Thompson draw `θ* = μ + Lz`, `z ~ N(0, I)`, from a seeded stream.
    pub fn sample_theta(&self, seed: u64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DVector::from_iterator(self.dim(), (0..self.dim()).map(|_| StandardNormal.sample(&mut rng)));
        &self.mean + &self.covariance_factor * z
    }

    /// Predictive mean `μᵀφ` and variance `φᵀΣφ + σ²`.
    pub fn predict(&self, phi: &FeatureVector) -> Result<(f64, f64)> {
        if phi.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: phi.len() });
        }
        let mean = self.mean.dot(phi.values());
        let projected = self.covariance_factor.tr_mul(phi.values());
        Ok((mean, projected.norm_squared() + self.noise_variance))
    }
}

/// `rel · trace(m) / dim`, falling back to `rel` for a zero trace.
fn jitter_base(m: &DMatrix<f64>, rel: f64) -> f64 {
    let mean_diag = m.trace() / m.nrows().max(1) as f64;
    rel * if mean_diag > 0.0 { mean_diag } else { 1.0 }
}

/// Cholesky with escalating diagonal jitter: plain first, then
/// `base · 10^k` for `k = 0..=6`.
fn cholesky_jittered(mut m: DMatrix<f64>, base: f64, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let mut jitter = base;
    let mut applied = 0.0;
    for _ in 0..=JITTER_ESCALATIONS {
        for k in 0..m.nrows() {
            m[(k, k)] += jitter - applied;
        }
        applied = jitter;
        if let Some(c) = Cholesky::new(m.clone()) {
            return Ok(c);
        }
        jitter *= 10.0;
    }
    Err(Error::Singular(format!("{what} is not positive definite after jitter {applied:e}")))
}

fn check_prior(prior_scales: Option<&DVector<f64>>, d: usize) -> Result<()> {
    if let Some(s) = prior_scales {
        if s.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: s.len() });
        }
        if s.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(Error::InvalidConfig("prior scales must be finite and > 0".into()));
        }
    }
    Ok(())
}

/// `μ = (ΦᵀΦ + σ²Υ⁻¹)⁻¹Φᵀy`, `Σ = σ²(ΦᵀΦ + σ²Υ⁻¹)⁻¹`.
pub fn fit_posterior(
    train: &TrainingSet,
    noise_variance: f64,
    prior_scales: Option<&DVector<f64>>,
) -> Result<PosteriorModel> {
    if train.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    if !(noise_variance.is_finite() && noise_variance > 0.0) {
        return Err(Error::InvalidConfig(format!("noise variance must be > 0, got {noise_variance}")));
    }
    let phi = train.features();
    let d = phi.ncols();
    check_prior(prior_scales, d)?;
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature matrix"));
    }

    let gram = phi.tr_mul(phi);
    let base = jitter_base(&gram, DEFAULT_JITTER);
    let mut precision = gram;
    for k in 0..d {
        let prior = prior_scales.map_or(1.0, |s| s[k]);
        precision[(k, k)] += noise_variance / prior;
    }
    let chol = cholesky_jittered(precision, base, "posterior precision")?;
    let mean = chol.solve(&phi.tr_mul(train.outputs()));

    let mut cov = chol.inverse() * noise_variance;
    cov = (&cov + cov.transpose()) * 0.5;
    let base = jitter_base(&cov, DEFAULT_JITTER);
    let factor = cholesky_jittered(cov, base, "posterior covariance")?.l();

    PosteriorModel::from_parts(mean, factor, noise_variance, prior_scales.cloned())
}

/// `Φ diag(Υ) Φᵀ` for the rows of `train` under its current basis.
fn weighted_gram(phi: &DMatrix<f64>, prior_scales: Option<&DVector<f64>>) -> DMatrix<f64> {
    match prior_scales {
        None => phi * phi.transpose(),
        Some(s) => {
            let mut scaled = phi.clone();
            for (k, mut col) in scaled.column_iter_mut().enumerate() {
                col *= s[k].sqrt();
            }
            &scaled * scaled.transpose()
        }
    }
}

fn log_evidence_from_gram(gram: &DMatrix<f64>, y: &DVector<f64>, noise_variance: f64, rel_jitter: f64) -> Result<f64> {
    let n = y.len();
    let mut cov = gram.clone();
    for k in 0..n {
        cov[(k, k)] += noise_variance;
    }
    let base = jitter_base(&cov, rel_jitter);
    let chol = cholesky_jittered(cov, base, "marginal covariance")?;
    let alpha = chol.solve(y);
    let logdet: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(-0.5 * (y.dot(&alpha) + logdet + n as f64 * (2.0 * std::f64::consts::PI).ln()))
}

/// Log marginal likelihood of the outputs under `y ~ N(0, σ²I + ΦΥΦᵀ)`, with
/// `Φ` rebuilt for the candidate `β`.
pub fn log_evidence(
    train: &TrainingSet,
    beta: f64,
    noise_variance: f64,
    prior_scales: Option<&DVector<f64>>,
) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    if !(noise_variance.is_finite() && noise_variance > 0.0) {
        return Err(Error::InvalidConfig(format!("noise variance must be > 0, got {noise_variance}")));
    }
    let rebuilt = train.with_beta(beta)?;
    check_prior(prior_scales, rebuilt.basis().len())?;
    let gram = weighted_gram(rebuilt.features(), prior_scales);
    log_evidence_from_gram(&gram, rebuilt.outputs(), noise_variance, DEFAULT_JITTER)
}

/// Grid argmax of [`log_evidence`]. Ties go to the smaller `β`, then the
/// smaller `σ²`.
pub fn fit_hyperparameters(train: &TrainingSet, cfg: &HyperConfig) -> Result<(f64, f64)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    let mut best: Option<(f64, f64, f64)> = None;
    let mut last_err = None;
    for &beta in &cfg.beta_grid {
        let rebuilt = train.with_beta(beta)?;
        let scales = cfg.prior.scales(rebuilt.basis())?;
        let gram = weighted_gram(rebuilt.features(), scales.as_ref());
        for &noise in &cfg.noise_grid {
            let ev = match log_evidence_from_gram(&gram, rebuilt.outputs(), noise, cfg.jitter) {
                Ok(v) if v.is_finite() => v,
                Ok(_) => continue,
                Err(e) => {
                    last_err = Some(e);
                    continue;
                }
            };
            let better = match best {
                None => true,
                Some((b, s, v)) => ev > v || (ev == v && (beta < b || (beta == b && noise < s))),
            };
            if better {
                best = Some((beta, noise, ev));
            }
        }
    }
    match best {
        Some((b, s, _)) => Ok((b, s)),
        None => Err(last_err.unwrap_or_else(|| Error::Singular("every grid evaluation failed".into()))),
    }
}
