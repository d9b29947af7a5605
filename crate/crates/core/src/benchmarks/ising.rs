//! Ising sparsification on a 4×4 zero-field lattice.
//!
//! `p(z) ∝ exp(Σ_e J^p_e z_i z_j)` over `z ∈ {±1}^16`. A candidate `x ∈
//! {0,1}^24` keeps edge `e` iff `x_e = 1`, giving `q` with `J^q_e = x_e J^p_e`.
//! The objective is `KL(p‖q) + λ‖x‖₁`, computed exactly by enumerating all
//! `2^16` spin states.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Objective;
use crate::{BinaryPoint, Error, Result};

pub const ISING_SIDE: usize = 4;
pub const ISING_EDGES: usize = 24;
const SPINS: usize = ISING_SIDE * ISING_SIDE;

/// Lattice edges: horizontal edges in row-major order, then vertical ones.
pub fn ising_edges() -> Vec<(usize, usize)> {
    let mut edges = Vec::with_capacity(ISING_EDGES);
    for r in 0..ISING_SIDE {
        for c in 0..ISING_SIDE - 1 {
            edges.push((r * ISING_SIDE + c, r * ISING_SIDE + c + 1));
        }
    }
    for r in 0..ISING_SIDE - 1 {
        for c in 0..ISING_SIDE {
            edges.push((r * ISING_SIDE + c, (r + 1) * ISING_SIDE + c));
        }
    }
    edges
}

/// Per-state edge-disagreement masks: bit `e` is set iff the endpoints of
/// edge `e` carry opposite spins, i.e. `z_i z_j = -1`.
fn disagreement_masks(edges: &[(usize, usize)]) -> Vec<u32> {
    (0..1u32 << SPINS)
        .map(|s| {
            edges
                .iter()
                .enumerate()
                .fold(0u32, |m, (e, &(i, j))| m | ((((s >> i) ^ (s >> j)) & 1) << e))
        })
        .collect()
}

/// `log Σ_z exp(Σ_e J_e z_i z_j)`, shifted by `Σ|J_e|` for stability.
fn log_partition(couplings: &[f64], masks: &[u32]) -> f64 {
    let shift: f64 = couplings.iter().map(|j| j.abs()).sum();
    let total: f64 = couplings.iter().sum();
    let sum: f64 = masks
        .iter()
        .map(|&m| {
            let mut energy = total;
            let mut bits = m;
            while bits != 0 {
                let e = bits.trailing_zeros() as usize;
                energy -= 2.0 * couplings[e];
                bits &= bits - 1;
            }
            (energy - shift).exp()
        })
        .sum();
    sum.ln() + shift
}

#[derive(Clone, Debug)]
pub struct IsingSpec {
    seed: u64,
    couplings: Vec<f64>,
    reg_weight: f64,
    edges: Vec<(usize, usize)>,
    masks: Vec<u32>,
    log_z: f64,
    moments: Vec<f64>,
}

/// Serialized form of an Ising instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsingExport {
    pub seed: u64,
    /// Horizontal edges row-major, then vertical edges row-major.
    pub couplings: Vec<f64>,
    pub lambda: f64,
}

/// Draws `|J^p_e| ~ U[0.05, 5]` with an independent random sign per edge and
/// caches `log Z_p` and the edge moments `E_p[z_i z_j]`.
pub fn make_ising(seed: u64, reg_weight: f64) -> Result<IsingSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let couplings = (0..ISING_EDGES)
        .map(|_| {
            let mag = rng.random_range(0.05..=5.0);
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect();
    IsingSpec::from_couplings(seed, couplings, reg_weight)
}

impl IsingSpec {
    pub fn from_couplings(seed: u64, couplings: Vec<f64>, reg_weight: f64) -> Result<Self> {
        if couplings.len() != ISING_EDGES {
            return Err(Error::DimensionMismatch { expected: ISING_EDGES, found: couplings.len() });
        }
        if couplings.iter().any(|j| !j.is_finite()) {
            return Err(Error::NonFinite("Ising couplings"));
        }
        if !(reg_weight.is_finite() && reg_weight >= 0.0) {
            return Err(Error::InvalidConfig(format!("regularization weight must be >= 0, got {reg_weight}")));
        }
        let edges = ising_edges();
        let masks = disagreement_masks(&edges);
        let log_z = log_partition(&couplings, &masks);

        let total: f64 = couplings.iter().sum();
        let mut acc = vec![0.0; ISING_EDGES];
        for &m in &masks {
            let mut energy = total;
            let mut bits = m;
            while bits != 0 {
                let e = bits.trailing_zeros() as usize;
                energy -= 2.0 * couplings[e];
                bits &= bits - 1;
            }
            let w = (energy - log_z).exp();
            for (e, a) in acc.iter_mut().enumerate() {
                if m >> e & 1 == 1 {
                    *a -= w;
                } else {
                    *a += w;
                }
            }
        }
        Ok(Self { seed, couplings, reg_weight, edges, masks, log_z, moments: acc })
    }

    pub fn from_export(export: &IsingExport) -> Result<Self> {
        Self::from_couplings(export.seed, export.couplings.clone(), export.lambda)
    }

    pub fn export(&self) -> IsingExport {
        IsingExport { seed: self.seed, couplings: self.couplings.clone(), lambda: self.reg_weight }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn reg_weight(&self) -> f64 {
        self.reg_weight
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn log_partition(&self) -> f64 {
        self.log_z
    }

    /// `E_p[z_i z_j]` per edge.
    pub fn moments(&self) -> &[f64] {
        &self.moments
    }

    /// `KL(p‖q)` for the sparsified model selected by `x`. Rounding below zero
    /// is clipped; the divergence is non-negative.
    pub fn kl_divergence(&self, x: &BinaryPoint) -> Result<f64> {
        if x.len() != ISING_EDGES {
            return Err(Error::DimensionMismatch { expected: ISING_EDGES, found: x.len() });
        }
        let q: Vec<f64> = self.couplings.iter().enumerate().map(|(e, &j)| if x.get(e) { j } else { 0.0 }).collect();
        let log_zq = log_partition(&q, &self.masks);
        let linear: f64 = (0..ISING_EDGES).map(|e| (self.couplings[e] - q[e]) * self.moments[e]).sum();
        Ok((linear + log_zq - self.log_z).max(0.0))
    }
}

/// `KL(p‖q) + λ‖x‖₁`.
pub fn ising_objective(x: &BinaryPoint, spec: &IsingSpec) -> Result<f64> {
    let kl = spec.kl_divergence(x)?;
    Ok(kl + spec.reg_weight * x.count_ones() as f64)
}

impl Objective for IsingSpec {
    fn name(&self) -> &str {
        "ising"
    }

    fn dimension(&self) -> usize {
        ISING_EDGES
    }

    fn evaluate(&self, x: &BinaryPoint) -> Result<f64> {
        ising_objective(x, self)
    }
}
