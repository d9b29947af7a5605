use nalgebra::DMatrix;

use super::{graphcut_minimize, relax, BqpProblem};
use crate::{BinaryPoint, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelaxationConfig {
    /// Outer iterations (cut + parameter update).
    pub iterations: usize,
    /// Base step; iteration `t` uses `step / √t`.
    pub step: f64,
    /// Descend each cut assignment by single bit flips under the true
    /// objective before scoring it. Bounds are unaffected.
    pub polish: bool,
}

impl Default for RelaxationConfig {
    fn default() -> Self {
        Self { iterations: 5, step: 0.2, polish: true }
    }
}

/// Steepest single-flip descent under `p`, starting from `x`.
pub fn polish_point(p: &BqpProblem, x: &BinaryPoint) -> (BinaryPoint, f64) {
    let n = p.n();
    let a = p.quadratic();
    let mut x = x.clone();
    let mut value = p.value_unchecked(&x);
    // field[i] = b_i + Σ_j A_ij x_j over both triangles
    let mut field: Vec<f64> = (0..n)
        .map(|i| p.linear()[i] + (0..n).filter(|&j| j != i && x.get(j)).map(|j| sym(a, i, j)).sum::<f64>())
        .collect();
    loop {
        let mut best: Option<(usize, f64)> = None;
        for (i, f) in field.iter().enumerate() {
            let delta = if x.get(i) { -f } else { *f };
            if delta < -1e-12 && best.is_none_or(|(_, d)| delta < d) {
                best = Some((i, delta));
            }
        }
        let Some((i, delta)) = best else { break };
        let sign = if x.get(i) { -1.0 } else { 1.0 };
        x.flip(i);
        value += delta;
        for (j, f) in field.iter_mut().enumerate() {
            if j != i {
                *f += sign * sym(a, i, j);
            }
        }
    }
    let exact = p.value_unchecked(&x);
    debug_assert!((exact - value).abs() <= 1e-8 * (1.0 + exact.abs()));
    (x, exact)
}

#[inline]
fn sym(a: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    if i < j {
        a[(i, j)]
    } else {
        a[(j, i)]
    }
}

/// Relaxation parameters and bookkeeping after a solve.
#[derive(Clone, Debug)]
pub struct RelaxationState {
    /// `γ_ij ∈ [0, 1]` on the support of `A⁺`, zero elsewhere.
    pub gamma: DMatrix<f64>,
    /// Step used in the last update.
    pub step_size: f64,
    pub best_x: BinaryPoint,
    /// True objective value of `best_x`.
    pub best_value: f64,
    /// Relaxed minimum of every iteration; each is a lower bound on the optimum.
    pub bound_trace: Vec<f64>,
}

impl RelaxationState {
    /// Running maximum of the bound trace.
    pub fn best_bounds(&self) -> Vec<f64> {
        self.bound_trace
            .iter()
            .scan(f64::NEG_INFINITY, |acc, &b| {
                *acc = acc.max(b);
                Some(*acc)
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct RelaxationOutcome {
    pub point: BinaryPoint,
    pub value: f64,
    pub state: RelaxationState,
}

/// Minimizes a quadratic program by iterated submodular relaxation.
///
/// Starting from `γ = 0.5` on the positive terms, each iteration solves the
/// relaxed problem exactly by graph cut, scores the cut's assignment under the
/// true objective, and takes a projected supergradient ascent step
/// `γ_ij ← clip(γ_ij + η_t A⁺_ij (x_i + x_j - 1), 0, 1)` on the bound. The
/// best true value seen is returned, so the answer never degrades across
/// iterations. Stops early when the bound meets the incumbent.
pub fn submodular_relaxation_solve(p: &BqpProblem, cfg: &RelaxationConfig) -> Result<RelaxationOutcome> {
    if cfg.iterations == 0 {
        return Err(Error::InvalidConfig("relaxation needs at least one iteration".into()));
    }
    if !(cfg.step.is_finite() && cfg.step > 0.0) {
        return Err(Error::InvalidConfig(format!("relaxation step must be > 0, got {}", cfg.step)));
    }
    let n = p.n();
    let positive = p.positive_terms();
    let mut gamma = DMatrix::zeros(n, n);
    for &(i, j, _) in &positive {
        gamma[(i, j)] = 0.5;
    }

    let mut best: Option<(BinaryPoint, f64)> = None;
    let mut bound_trace = Vec::with_capacity(cfg.iterations);
    let mut step_size = cfg.step;
    let iterations = if positive.is_empty() { 1 } else { cfg.iterations };

    for t in 1..=iterations {
        let relaxed = relax(p, &gamma)?;
        let (x, bound) = graphcut_minimize(&relaxed)?;
        bound_trace.push(bound);
        let (candidate, value) = if cfg.polish { polish_point(p, &x) } else { (x.clone(), p.value_unchecked(&x)) };
        let improves = match &best {
            None => true,
            Some((bx, bv)) => value < *bv || (value == *bv && candidate < *bx),
        };
        if improves {
            best = Some((candidate, value));
        }

        let incumbent = best.as_ref().map(|b| b.1).unwrap_or(f64::INFINITY);
        let best_bound = bound_trace.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if incumbent - best_bound <= 1e-12 * (1.0 + incumbent.abs()) {
            break;
        }

        step_size = cfg.step / (t as f64).sqrt();
        for &(i, j, a) in &positive {
            let slope = a * (x.bit(i) + x.bit(j) - 1.0);
            gamma[(i, j)] = (gamma[(i, j)] + step_size * slope).clamp(0.0, 1.0);
        }
    }

    let (best_x, best_value) = best.expect("at least one iteration ran");
    Ok(RelaxationOutcome {
        point: best_x.clone(),
        value: best_value,
        state: RelaxationState { gamma, step_size, best_x, best_value, bound_trace },
    })
}
