use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A structure `x ∈ {0,1}^n`.
///
/// Ordering is lexicographic with bit 0 first, which coincides with the
/// integer encoding that treats bit 0 as the most significant bit. Every
/// solver uses this order to break ties.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct BinaryPoint(Vec<bool>);

impl BinaryPoint {
    pub fn new(bits: Vec<bool>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::InvalidConfig("binary point must have n >= 1".into()));
        }
        Ok(Self(bits))
    }

    /// Builds a point from 0/1 bytes; anything else is rejected.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        let bits = bits
            .iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::InvalidConfig(format!("bit value {other} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(bits)
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "binary point must have n >= 1");
        Self(vec![false; n])
    }

    pub fn ones(n: usize) -> Self {
        assert!(n >= 1, "binary point must have n >= 1");
        Self(vec![true; n])
    }

    /// Decodes `index` with bit 0 as the most significant bit.
    pub fn from_index(n: usize, index: u64) -> Self {
        assert!((1..=64).contains(&n), "index encoding supports 1..=64 bits");
        Self((0..n).map(|i| (index >> (n - 1 - i)) & 1 == 1).collect())
    }

    /// Integer encoding (bit 0 most significant), for `n <= 64`.
    pub fn to_index(&self) -> Option<u64> {
        if self.0.len() > 64 {
            return None;
        }
        Some(self.0.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64))
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        assert!(n >= 1, "binary point must have n >= 1");
        Self((0..n).map(|_| rng.random::<bool>()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    #[inline]
    pub fn bit(&self, i: usize) -> f64 {
        self.0[i] as u8 as f64
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] = !self.0[i];
    }

    pub fn flipped(&self, i: usize) -> Self {
        let mut out = self.clone();
        out.flip(i);
        out
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn hamming(&self, other: &Self) -> Result<usize> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), found: other.len() });
        }
        Ok(self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count())
    }

    pub fn complement(&self) -> Self {
        Self(self.0.iter().map(|b| !b).collect())
    }

    pub fn reversed(&self) -> Self {
        Self(self.0.iter().rev().copied().collect())
    }
}

impl fmt::Display for BinaryPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BinaryPoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidConfig(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(bits)
    }
}

impl From<BinaryPoint> for String {
    fn from(x: BinaryPoint) -> String {
        x.to_string()
    }
}

impl TryFrom<String> for BinaryPoint {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}
