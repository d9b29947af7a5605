//! Black-box objectives (all minimized).

mod ising;
mod labs;
mod tabular;

pub use ising::{ising_edges, ising_objective, make_ising, IsingExport, IsingSpec, ISING_EDGES, ISING_SIDE};
pub use labs::{labs_energy, labs_objective, merit_factor, Labs};
pub use tabular::{decode_categorical, encode_categorical, load_tabular, Alphabet, TabularSpec};

use std::sync::atomic::{AtomicU64, Ordering};

use crate::{BinaryPoint, Error, Result};

/// A deterministic function `{0,1}^n → ℝ` to be minimized.
pub trait Objective: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn evaluate(&self, x: &BinaryPoint) -> Result<f64>;

    /// Every `(point, value)` pair, for objectives backed by a finite table.
    fn table(&self) -> Option<Vec<(BinaryPoint, f64)>> {
        None
    }
}

/// An objective plus an evaluation counter that is safe to bump from
/// concurrent batch evaluations.
pub struct ObjectiveSpec {
    inner: Box<dyn Objective>,
    evaluations: AtomicU64,
}

impl ObjectiveSpec {
    pub fn new(inner: impl Objective + 'static) -> Self {
        Self { inner: Box::new(inner), evaluations: AtomicU64::new(0) }
    }

    pub fn name(&self) -> &str {
        self.inner.name()
    }

    pub fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    /// Evaluates `x`; every call counts, including failed ones.
    pub fn evaluate(&self, x: &BinaryPoint) -> Result<f64> {
        self.evaluations.fetch_add(1, Ordering::SeqCst);
        if x.len() != self.dimension() {
            return Err(Error::DimensionMismatch { expected: self.dimension(), found: x.len() });
        }
        self.inner.evaluate(x)
    }

    pub fn evaluation_count(&self) -> u64 {
        self.evaluations.load(Ordering::SeqCst)
    }

    pub fn table(&self) -> Option<Vec<(BinaryPoint, f64)>> {
        self.inner.table()
    }
}

impl std::fmt::Debug for ObjectiveSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ObjectiveSpec")
            .field("name", &self.name())
            .field("dimension", &self.dimension())
            .field("evaluations", &self.evaluation_count())
            .finish()
    }
}

/// Wraps a closure as an objective.
pub struct FnObjective<F> {
    name: String,
    n: usize,
    f: F,
}

impl<F> FnObjective<F>
where
    F: Fn(&BinaryPoint) -> Result<f64> + Send + Sync,
{
    pub fn new(name: impl Into<String>, n: usize, f: F) -> Self {
        Self { name: name.into(), n, f }
    }
}

impl<F> Objective for FnObjective<F>
where
    F: Fn(&BinaryPoint) -> Result<f64> + Send + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.n
    }

    fn evaluate(&self, x: &BinaryPoint) -> Result<f64> {
        (self.f)(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counter_counts_every_call() {
        let spec = ObjectiveSpec::new(FnObjective::new("const", 3, |_| Ok(1.0)));
        for _ in 0..5 {
            spec.evaluate(&BinaryPoint::zeros(3)).unwrap();
        }
        assert!(spec.evaluate(&BinaryPoint::zeros(2)).is_err());
        assert_eq!(spec.evaluation_count(), 6);
    }

    #[test]
    fn counter_is_thread_safe() {
        use rayon::prelude::*;
        let spec = ObjectiveSpec::new(FnObjective::new("const", 2, |_| Ok(0.0)));
        (0..1000).into_par_iter().for_each(|_| {
            spec.evaluate(&BinaryPoint::zeros(2)).unwrap();
        });
        assert_eq!(spec.evaluation_count(), 1000);
    }
}
