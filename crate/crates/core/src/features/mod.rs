//! Closed-form Mercer features of the diffusion kernel on `{0,1}^n`.
//!
//! The combinatorial graph over `{0,1}^n` (edges between points at Hamming
//! distance one) is the Cartesian product of `n` single-edge graphs. Its
//! Laplacian eigenvectors are the Walsh/Hadamard characters
//! `x ↦ (-1)^{Σ_{i∈S} x_i}` indexed by subsets `S`, with eigenvalue `2|S|`.
//! The feature for subset `S` is therefore `e^{-β|S|} (-1)^{Σ_{i∈S} x_i}` and
//! the kernel is the inner product of two feature vectors. Truncating to
//! `|S| <= max_order` gives the finite feature map used by the surrogate.

pub mod spectrum;

use nalgebra::{DMatrix, DVector};

use crate::{BinaryPoint, Error, Result};

/// Canonically ordered subsets `S ⊆ {0..n}` with `|S| <= max_order`, plus the
/// diffusion scale `β`.
///
/// Order: ascending by size, then lexicographic on sorted indices. The empty
/// set is always entry 0; for `max_order >= 2` the pair `(i, j)` sits at
/// [`FeatureBasis::pair_index`].
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBasis {
    n: usize,
    max_order: usize,
    beta: f64,
    subsets: Vec<Vec<usize>>,
}

impl FeatureBasis {
    /// Enumerates the basis for dimension `n` truncated at `max_order`.
    pub fn new(n: usize, max_order: usize, beta: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig("dimension n must be at least 1".into()));
        }
        if max_order > n {
            return Err(Error::InvalidConfig(format!("max_order {max_order} exceeds dimension {n}")));
        }
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::InvalidConfig(format!("diffusion scale beta must be finite and >= 0, got {beta}")));
        }
        let mut subsets = Vec::with_capacity(basis_size(n, max_order));
        for k in 0..=max_order {
            push_combinations(n, k, &mut subsets);
        }
        Ok(Self { n, max_order, beta, subsets })
    }

    /// Same subsets under a different diffusion scale.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::InvalidConfig(format!("diffusion scale beta must be finite and >= 0, got {beta}")));
        }
        Ok(Self { beta, ..self.clone() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    /// Laplacian eigenvalue attached to feature `idx`: twice the subset size.
    pub fn eigenvalue(&self, idx: usize) -> f64 {
        2.0 * self.subsets[idx].len() as f64
    }

    /// `sqrt(e^{-β·2k}) = e^{-βk}` for a subset of size `k`.
    pub fn order_weight(&self, k: usize) -> f64 {
        (-self.beta * k as f64).exp()
    }

    /// Position of the order-1 feature for variable `i`.
    pub fn single_index(&self, i: usize) -> usize {
        debug_assert!(self.max_order >= 1 && i < self.n);
        1 + i
    }

    /// Position of the order-2 feature for the pair `i < j`.
    pub fn pair_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(self.max_order >= 2 && i < j && j < self.n);
        let n = self.n;
        1 + n + i * (2 * n - i - 1) / 2 + (j - i - 1)
    }

    /// Mercer feature vector `φ(x)`.
    pub fn features(&self, x: &BinaryPoint) -> Result<FeatureVector> {
        self.check_dim(x)?;
        let values = self
            .subsets
            .iter()
            .map(|s| {
                let ones = s.iter().filter(|&&i| x.get(i)).count();
                let w = self.order_weight(s.len());
                if ones & 1 == 1 {
                    -w
                } else {
                    w
                }
            })
            .collect::<Vec<_>>();
        Ok(FeatureVector(DVector::from_vec(values)))
    }

    /// Feature matrix with one row per point.
    pub fn feature_matrix(&self, points: &[BinaryPoint]) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(points.len(), self.len());
        for (r, x) in points.iter().enumerate() {
            let phi = self.features(x)?;
            m.row_mut(r).copy_from(&phi.0.transpose());
        }
        Ok(m)
    }

    fn check_dim(&self, x: &BinaryPoint) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: x.len() });
        }
        Ok(())
    }
}

/// `Σ_{k=0}^{max_order} C(n, k)`.
pub fn basis_size(n: usize, max_order: usize) -> usize {
    (0..=max_order.min(n)).map(|k| binomial(n, k)).sum()
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

fn push_combinations(n: usize, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == 0 {
        out.push(Vec::new());
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        // advance to the next combination in lexicographic order
        let mut pos = k;
        while pos > 0 && idx[pos - 1] == n - k + pos - 1 {
            pos -= 1;
        }
        if pos == 0 {
            return;
        }
        idx[pos - 1] += 1;
        for p in pos..k {
            idx[p] = idx[p - 1] + 1;
        }
    }
}

/// A Mercer feature vector `φ(x)`; entry 0 is the constant feature.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector(pub DVector<f64>);

impl FeatureVector {
    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dot(&self, other: &FeatureVector) -> f64 {
        self.0.dot(&other.0)
    }
}

/// `φ(x)` under `basis`.
pub fn mercer_features(x: &BinaryPoint, basis: &FeatureBasis) -> Result<FeatureVector> {
    basis.features(x)
}

/// The untruncated diffusion kernel, summed in closed form:
/// `(1 + e^{-2β})^{n-d} (1 - e^{-2β})^d` with `d` the Hamming distance.
pub fn exact_kernel(x: &BinaryPoint, y: &BinaryPoint, beta: f64) -> Result<f64> {
    let d = x.hamming(y)?;
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::InvalidConfig(format!("diffusion scale beta must be finite and >= 0, got {beta}")));
    }
    let q = (-2.0 * beta).exp();
    let n = x.len();
    Ok((1.0 + q).powi((n - d) as i32) * (1.0 - q).powi(d as i32))
}

/// Kernel as the inner product of (possibly truncated) feature vectors.
pub fn kernel_from_features(x: &BinaryPoint, y: &BinaryPoint, basis: &FeatureBasis) -> Result<f64> {
    Ok(basis.features(x)?.dot(&basis.features(y)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pt(s: &str) -> BinaryPoint {
        s.parse().unwrap()
    }

    #[test]
    fn enumerates_complete_basis_for_two_bits() {
        let b = FeatureBasis::new(2, 2, 0.0).unwrap();
        assert_eq!(b.subsets(), &[vec![], vec![0], vec![1], vec![0, 1]]);
    }

    #[test]
    fn first_order_basis() {
        let b = FeatureBasis::new(3, 1, 1.0).unwrap();
        assert_eq!(b.subsets(), &[vec![], vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn basis_size_counts_binomials() {
        assert_eq!(FeatureBasis::new(10, 2, 0.3).unwrap().len(), 56);
        assert_eq!(basis_size(10, 10), 1024);
        assert_eq!(basis_size(20, 2), 211);
    }

    #[test]
    fn canonical_order_is_size_then_lexicographic() {
        let b = FeatureBasis::new(5, 3, 0.1).unwrap();
        for w in b.subsets().windows(2) {
            let (a, c) = (&w[0], &w[1]);
            assert!(a.len() < c.len() || (a.len() == c.len() && a < c));
        }
        for (k, s) in b.subsets().iter().enumerate() {
            assert_eq!(b.eigenvalue(k), 2.0 * s.len() as f64);
        }
    }

    #[test]
    fn pair_index_matches_enumeration() {
        let b = FeatureBasis::new(7, 2, 0.1).unwrap();
        for i in 0..7 {
            assert_eq!(b.subsets()[b.single_index(i)], vec![i]);
            for j in i + 1..7 {
                assert_eq!(b.subsets()[b.pair_index(i, j)], vec![i, j]);
            }
        }
    }

    #[test]
    fn invalid_configurations() {
        assert!(matches!(FeatureBasis::new(0, 0, 1.0), Err(Error::InvalidConfig(_))));
        assert!(matches!(FeatureBasis::new(3, 4, 1.0), Err(Error::InvalidConfig(_))));
        assert!(FeatureBasis::new(3, 2, -1.0).is_err());
    }

    #[test]
    fn features_at_beta_zero_origin_are_all_one() {
        let b = FeatureBasis::new(2, 2, 0.0).unwrap();
        let phi = mercer_features(&pt("00"), &b).unwrap();
        assert_eq!(phi.values().as_slice(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn features_hand_values() {
        let beta = 2f64.ln() / 2.0;
        let b = FeatureBasis::new(2, 2, beta).unwrap();
        let r = 2f64.powf(-0.5);
        let phi = mercer_features(&pt("10"), &b).unwrap();
        for (a, e) in phi.values().iter().zip([1.0, -r, r, -0.5]) {
            assert!((a - e).abs() < 1e-15, "{a} vs {e}");
        }
        let phi = mercer_features(&pt("11"), &b).unwrap();
        for (a, e) in phi.values().iter().zip([1.0, -r, -r, 0.5]) {
            assert!((a - e).abs() < 1e-15, "{a} vs {e}");
        }
    }

    #[test]
    fn features_reject_wrong_dimension() {
        let b = FeatureBasis::new(3, 2, 0.5).unwrap();
        assert!(matches!(
            mercer_features(&pt("01"), &b),
            Err(Error::DimensionMismatch { expected: 3, found: 2 })
        ));
    }

    #[test]
    fn exact_kernel_values() {
        let beta = 2f64.ln() / 2.0;
        assert!((exact_kernel(&pt("00"), &pt("00"), beta).unwrap() - 2.25).abs() < 1e-14);
        assert!((exact_kernel(&pt("00"), &pt("10"), beta).unwrap() - 0.75).abs() < 1e-14);
        assert_eq!(exact_kernel(&pt("0101"), &pt("0101"), 0.0).unwrap(), 16.0);
        assert_eq!(exact_kernel(&pt("0101"), &pt("0111"), 0.0).unwrap(), 0.0);
        assert!(exact_kernel(&pt("01"), &pt("011"), 0.1).is_err());
    }

    #[test]
    fn kernel_from_features_small_cases() {
        let beta = 2f64.ln() / 2.0;
        let full = FeatureBasis::new(2, 2, beta).unwrap();
        assert!((kernel_from_features(&pt("00"), &pt("10"), &full).unwrap() - 0.75).abs() < 1e-14);

        let constant = FeatureBasis::new(4, 0, 0.7).unwrap();
        assert_eq!(kernel_from_features(&pt("0110"), &pt("1011"), &constant).unwrap(), 1.0);

        let n = 6;
        let second = FeatureBasis::new(n, 2, 0.4).unwrap();
        let x = pt("011010");
        let q = (-0.8f64).exp();
        let expected = 1.0 + n as f64 * q + binomial(n, 2) as f64 * q * q;
        assert!((kernel_from_features(&x, &x, &second).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn full_order_matches_product_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=8 {
            for &beta in &[0.1, 0.5, 1.0] {
                let basis = FeatureBasis::new(n, n, beta).unwrap();
                for _ in 0..20 {
                    let x = BinaryPoint::random(n, &mut rng);
                    let y = BinaryPoint::random(n, &mut rng);
                    let k = kernel_from_features(&x, &y, &basis).unwrap();
                    let e = exact_kernel(&x, &y, beta).unwrap();
                    let scale = exact_kernel(&x, &x, beta).unwrap();
                    assert!((k - e).abs() <= 1e-9 * scale);
                }
            }
        }
    }

    #[test]
    fn diagonal_kernel_grows_with_order() {
        let n = 7;
        let x = pt("1011001");
        let mut prev = 0.0;
        for order in 0..=n {
            let k = kernel_from_features(&x, &x, &FeatureBasis::new(n, order, 0.3).unwrap()).unwrap();
            assert!(k >= prev);
            prev = k;
        }
        assert!((prev - exact_kernel(&x, &x, 0.3).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn gram_matrix_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let basis = FeatureBasis::new(9, 2, 0.2).unwrap();
        let pts: Vec<_> = (0..20).map(|_| BinaryPoint::random(9, &mut rng)).collect();
        let gram = DMatrix::from_fn(20, 20, |i, j| kernel_from_features(&pts[i], &pts[j], &basis).unwrap());
        let eig = gram.symmetric_eigenvalues();
        assert!(eig.min() >= -1e-8);
    }
}
