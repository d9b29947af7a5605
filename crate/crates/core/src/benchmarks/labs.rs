//! Low-autocorrelation binary sequences.

use super::Objective;
use crate::{BinaryPoint, Error, Result};

/// Sidelobe energy `E = Σ_{k=1}^{n-1} C_k²`, `C_k = Σ_i s_i s_{i+k}`, with
/// bit 0 ↦ +1 and bit 1 ↦ -1.
pub fn labs_energy(x: &BinaryPoint) -> i64 {
    let s: Vec<i64> = x.bits().iter().map(|&b| if b { -1 } else { 1 }).collect();
    let n = s.len();
    (1..n)
        .map(|k| {
            let c: i64 = (0..n - k).map(|i| s[i] * s[i + k]).sum();
            c * c
        })
        .sum()
}

/// Merit factor `n² / E`.
pub fn merit_factor(x: &BinaryPoint) -> Result<f64> {
    let n = x.len();
    if n < 2 {
        return Err(Error::InvalidConfig("LABS needs n >= 2".into()));
    }
    let e = labs_energy(x);
    // the k = n-1 term is (s_1 s_n)^2 = 1
    assert!(e >= 1, "LABS energy must be positive for n >= 2");
    Ok((n * n) as f64 / e as f64)
}

/// `-MF(x)`, the minimization form.
pub fn labs_objective(x: &BinaryPoint) -> Result<f64> {
    Ok(-merit_factor(x)?)
}

#[derive(Clone, Debug)]
pub struct Labs {
    n: usize,
    name: String,
}

impl Labs {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidConfig("LABS needs n >= 2".into()));
        }
        Ok(Self { n, name: format!("labs{n}") })
    }
}

impl Objective for Labs {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.n
    }

    fn evaluate(&self, x: &BinaryPoint) -> Result<f64> {
        labs_objective(x)
    }
}
