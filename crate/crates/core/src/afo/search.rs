use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::BqpProblem;
use crate::features::FeatureBasis;
use crate::{BinaryPoint, Error, Result};

/// Largest `n` accepted by exhaustive enumeration.
pub const BRUTE_FORCE_CAP: usize = 22;

/// Exhaustive minimum of `f` over `{0,1}^n`, scanning in integer order so
/// that exact ties resolve to the smallest encoding.
pub fn brute_force_minimize_by<F>(n: usize, mut f: F) -> Result<(BinaryPoint, f64)>
where
    F: FnMut(&BinaryPoint) -> f64,
{
    if n == 0 {
        return Err(Error::InvalidConfig("dimension n must be at least 1".into()));
    }
    if n > BRUTE_FORCE_CAP {
        return Err(Error::TooLarge { n, cap: BRUTE_FORCE_CAP });
    }
    let mut best = (BinaryPoint::zeros(n), f64::INFINITY);
    for idx in 0..1u64 << n {
        let x = BinaryPoint::from_index(n, idx);
        let v = f(&x);
        if v < best.1 {
            best = (x, v);
        }
    }
    Ok(best)
}

/// Exhaustive minimum of a quadratic program.
pub fn brute_force_minimize(p: &BqpProblem) -> Result<(BinaryPoint, f64)> {
    brute_force_minimize_by(p.n(), |x| p.value_unchecked(x))
}

/// `x ↦ θᵀφ(x)` for a basis of any order.
#[derive(Clone, Debug)]
pub struct FeatureObjective<'a> {
    pub theta: &'a DVector<f64>,
    pub basis: &'a FeatureBasis,
}

impl FeatureObjective<'_> {
    pub fn value(&self, x: &BinaryPoint) -> Result<f64> {
        if self.theta.len() != self.basis.len() {
            return Err(Error::DimensionMismatch { expected: self.basis.len(), found: self.theta.len() });
        }
        Ok(self.theta.dot(self.basis.features(x)?.values()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalSearchResult {
    pub point: BinaryPoint,
    pub value: f64,
    /// Best objective value among the random starting points.
    pub best_start_value: f64,
}

/// Best-improvement single-bit-flip descent from `restarts` uniform random
/// starts. Each descent flips the bit with the largest decrease (lowest index
/// on ties) until no flip improves.
pub fn local_search_minimize<F>(n: usize, objective: F, restarts: usize, seed: u64) -> Result<LocalSearchResult>
where
    F: Fn(&BinaryPoint) -> f64,
{
    if restarts == 0 {
        return Err(Error::InvalidConfig("local search needs at least one restart".into()));
    }
    if n == 0 {
        return Err(Error::InvalidConfig("dimension n must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(BinaryPoint, f64)> = None;
    let mut best_start = f64::INFINITY;

    for _ in 0..restarts {
        let mut x = BinaryPoint::random(n, &mut rng);
        let mut value = objective(&x);
        best_start = best_start.min(value);
        loop {
            let mut step: Option<(usize, f64)> = None;
            for i in 0..n {
                x.flip(i);
                let v = objective(&x);
                x.flip(i);
                if v < value && step.is_none_or(|(_, sv)| v < sv) {
                    step = Some((i, v));
                }
            }
            match step {
                Some((i, v)) => {
                    x.flip(i);
                    value = v;
                }
                None => break,
            }
        }
        let better = match &best {
            None => true,
            Some((bx, bv)) => value < *bv || (value == *bv && x < *bx),
        };
        if better {
            best = Some((x, value));
        }
    }
    let (point, value) = best.expect("restarts >= 1");
    Ok(LocalSearchResult { point, value, best_start_value: best_start })
}
