//! Acquisition function optimization.
//!
//! A Thompson draw `θ*` over second-order Mercer features is a binary quadratic
//! program `c + bᵀx + xᵀAx` with `A` strictly upper triangular. The main solver
//! lower-bounds the positive part of `A` by linear terms, which leaves a
//! submodular problem solvable exactly by one s-t min-cut, and then tightens
//! the bound by projected supergradient steps on the relaxation parameters.

mod graphcut;
pub mod maxflow;
mod relaxation;
mod search;

pub use graphcut::graphcut_minimize;
pub use relaxation::{polish_point, submodular_relaxation_solve, RelaxationConfig, RelaxationOutcome, RelaxationState};
pub use search::{
    brute_force_minimize, brute_force_minimize_by, local_search_minimize, FeatureObjective, LocalSearchResult,
    BRUTE_FORCE_CAP,
};

use nalgebra::{DMatrix, DVector};

use crate::features::FeatureBasis;
use crate::{BinaryPoint, Error, Result};

/// `value(x) = c + bᵀx + Σ_{i<j} A_ij x_i x_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct BqpProblem {
    constant: f64,
    linear: Vec<f64>,
    quadratic: DMatrix<f64>,
}

fn check_quadratic(n: usize, quadratic: &DMatrix<f64>) -> Result<()> {
    if quadratic.shape() != (n, n) {
        return Err(Error::DimensionMismatch { expected: n, found: quadratic.nrows() });
    }
    for i in 0..n {
        for j in 0..=i {
            if quadratic[(i, j)] != 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "quadratic entry ({i}, {j}) lies on or below the diagonal"
                )));
            }
        }
    }
    Ok(())
}

fn check_finite(constant: f64, linear: &[f64], quadratic: &DMatrix<f64>) -> Result<()> {
    if !constant.is_finite() || linear.iter().chain(quadratic.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("quadratic program coefficients"));
    }
    Ok(())
}

#[inline]
fn quadratic_value(constant: f64, linear: &[f64], quadratic: &DMatrix<f64>, x: &BinaryPoint) -> f64 {
    let ones: Vec<usize> = (0..x.len()).filter(|&i| x.get(i)).collect();
    let mut v = constant;
    for (k, &i) in ones.iter().enumerate() {
        v += linear[i];
        for &j in &ones[k + 1..] {
            v += quadratic[(i, j)];
        }
    }
    v
}

impl BqpProblem {
    pub fn new(constant: f64, linear: Vec<f64>, quadratic: DMatrix<f64>) -> Result<Self> {
        if linear.is_empty() {
            return Err(Error::InvalidConfig("quadratic program needs n >= 1".into()));
        }
        check_quadratic(linear.len(), &quadratic)?;
        check_finite(constant, &linear, &quadratic)?;
        Ok(Self { constant, linear, quadratic })
    }

    pub fn n(&self) -> usize {
        self.linear.len()
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn quadratic(&self) -> &DMatrix<f64> {
        &self.quadratic
    }

    /// Same problem shifted by a constant.
    pub fn shifted(&self, delta: f64) -> Self {
        Self { constant: self.constant + delta, ..self.clone() }
    }

    pub fn value(&self, x: &BinaryPoint) -> Result<f64> {
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: x.len() });
        }
        Ok(quadratic_value(self.constant, &self.linear, &self.quadratic, x))
    }

    pub(crate) fn value_unchecked(&self, x: &BinaryPoint) -> f64 {
        quadratic_value(self.constant, &self.linear, &self.quadratic, x)
    }

    /// Strictly positive quadratic terms `(i, j, A_ij)`.
    pub fn positive_terms(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let a = self.quadratic[(i, j)];
                if a > 0.0 {
                    out.push((i, j, a));
                }
            }
        }
        out
    }
}

/// `c + bᵀx + xᵀAx` for `x ∈ {0,1}^n`.
pub fn bqp_value(p: &BqpProblem, x: &BinaryPoint) -> Result<f64> {
    p.value(x)
}

/// Turns `θ*` over a second-order basis into the equivalent quadratic program,
/// so that `value(x) = θ*ᵀφ(x)` for every `x`.
///
/// With `s_i = 1 - 2x_i`, order-1 features are `e^{-β} s_i` and order-2
/// features are `e^{-2β} s_i s_j`; expanding the products gives the
/// coefficients below. Each `b_i` collects every pair term containing `i`.
pub fn build_bqp(theta: &DVector<f64>, basis: &FeatureBasis) -> Result<BqpProblem> {
    if basis.max_order() != 2 {
        return Err(Error::InvalidConfig(format!(
            "quadratic program requires a second-order basis, got order {}",
            basis.max_order()
        )));
    }
    if theta.len() != basis.len() {
        return Err(Error::DimensionMismatch { expected: basis.len(), found: theta.len() });
    }
    let n = basis.n();
    let w1 = basis.order_weight(1);
    let w2 = basis.order_weight(2);

    let mut constant = theta[0];
    let mut linear = vec![0.0; n];
    let mut quadratic = DMatrix::zeros(n, n);
    for i in 0..n {
        let t = theta[basis.single_index(i)] * w1;
        constant += t;
        linear[i] -= 2.0 * t;
    }
    for i in 0..n {
        for j in i + 1..n {
            let t = theta[basis.pair_index(i, j)] * w2;
            constant += t;
            linear[i] -= 2.0 * t;
            linear[j] -= 2.0 * t;
            quadratic[(i, j)] = 4.0 * t;
        }
    }
    BqpProblem::new(constant, linear, quadratic)
}

/// `A = A⁺ + A⁻` with `A⁺ ≥ 0` and `A⁻ ≤ 0` entrywise.
pub fn split_posneg(p: &BqpProblem) -> (DMatrix<f64>, DMatrix<f64>) {
    let plus = p.quadratic.map(|a| if a > 0.0 { a } else { 0.0 });
    let minus = p.quadratic.map(|a| if a < 0.0 { a } else { 0.0 });
    (plus, minus)
}

/// Quadratic program whose pair terms are all non-positive.
#[derive(Clone, Debug, PartialEq)]
pub struct SubmodularQuadratic {
    constant: f64,
    linear: Vec<f64>,
    quadratic: DMatrix<f64>,
}

impl SubmodularQuadratic {
    /// Rejects any positive pair term rather than dropping it.
    pub fn new(constant: f64, linear: Vec<f64>, quadratic: DMatrix<f64>) -> Result<Self> {
        if linear.is_empty() {
            return Err(Error::InvalidConfig("quadratic program needs n >= 1".into()));
        }
        let n = linear.len();
        check_quadratic(n, &quadratic)?;
        check_finite(constant, &linear, &quadratic)?;
        for i in 0..n {
            for j in i + 1..n {
                let value = quadratic[(i, j)];
                if value > 0.0 {
                    return Err(Error::NotSubmodular { i, j, value });
                }
            }
        }
        Ok(Self { constant, linear, quadratic })
    }

    pub fn n(&self) -> usize {
        self.linear.len()
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn quadratic(&self) -> &DMatrix<f64> {
        &self.quadratic
    }

    pub fn value(&self, x: &BinaryPoint) -> Result<f64> {
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: x.len() });
        }
        Ok(quadratic_value(self.constant, &self.linear, &self.quadratic, x))
    }

    /// View as a general quadratic program.
    pub fn as_bqp(&self) -> BqpProblem {
        BqpProblem { constant: self.constant, linear: self.linear.clone(), quadratic: self.quadratic.clone() }
    }
}

/// Submodular lower bound of `p`: each positive term `A⁺_ij x_i x_j` is
/// replaced by `A⁺_ij γ_ij (x_i + x_j - 1)`, which never exceeds it for
/// `γ_ij ∈ [0, 1]`. Entries of `gamma` off the support of `A⁺` are ignored.
pub fn relax(p: &BqpProblem, gamma: &DMatrix<f64>) -> Result<SubmodularQuadratic> {
    let n = p.n();
    if gamma.shape() != (n, n) {
        return Err(Error::DimensionMismatch { expected: n, found: gamma.nrows() });
    }
    let mut constant = p.constant;
    let mut linear = p.linear.clone();
    let mut quadratic = p.quadratic.clone();
    for (i, j, a) in p.positive_terms() {
        let g = gamma[(i, j)];
        if !(0.0..=1.0).contains(&g) {
            return Err(Error::GammaOutOfRange { i, j, value: g });
        }
        let t = a * g;
        linear[i] += t;
        linear[j] += t;
        constant -= t;
        quadratic[(i, j)] = 0.0;
    }
    SubmodularQuadratic::new(constant, linear, quadratic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn example() -> BqpProblem {
        let mut a = DMatrix::zeros(2, 2);
        a[(0, 1)] = 8.0;
        BqpProblem::new(2.0, vec![-6.0, -2.0], a).unwrap()
    }

    fn pt(s: &str) -> BinaryPoint {
        s.parse().unwrap()
    }

    #[test]
    fn build_bqp_two_variable_example() {
        let basis = FeatureBasis::new(2, 2, 0.0).unwrap();
        let theta = DVector::from_vec(vec![0.0, 1.0, -1.0, 2.0]);
        let p = build_bqp(&theta, &basis).unwrap();
        assert_eq!(p, example());
        for idx in 0..4 {
            let x = BinaryPoint::from_index(2, idx);
            let direct = theta.dot(basis.features(&x).unwrap().values());
            assert_eq!(p.value(&x).unwrap(), direct);
        }
    }

    #[test]
    fn build_bqp_zero_theta() {
        let basis = FeatureBasis::new(4, 2, 0.3).unwrap();
        let p = build_bqp(&DVector::zeros(basis.len()), &basis).unwrap();
        assert_eq!(p.constant(), 0.0);
        assert!(p.linear().iter().all(|&b| b == 0.0));
        assert!(p.quadratic().iter().all(|&a| a == 0.0));
    }

    #[test]
    fn build_bqp_matches_features_exhaustively() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let basis = FeatureBasis::new(3, 2, 0.5).unwrap();
        let theta = DVector::from_fn(basis.len(), |_, _| rng.random_range(-2.0..2.0));
        let p = build_bqp(&theta, &basis).unwrap();
        for idx in 0..8 {
            let x = BinaryPoint::from_index(3, idx);
            let direct = theta.dot(basis.features(&x).unwrap().values());
            assert!((p.value(&x).unwrap() - direct).abs() <= 1e-10);
        }
    }

    #[test]
    fn build_bqp_rejects_wrong_basis() {
        let b1 = FeatureBasis::new(3, 1, 0.5).unwrap();
        assert!(build_bqp(&DVector::zeros(b1.len()), &b1).is_err());
        let b2 = FeatureBasis::new(3, 2, 0.5).unwrap();
        assert!(matches!(build_bqp(&DVector::zeros(3), &b2), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn value_examples() {
        let p = example();
        assert_eq!(bqp_value(&p, &pt("00")).unwrap(), 2.0);
        assert_eq!(bqp_value(&p, &pt("11")).unwrap(), 2.0 - 8.0 + 8.0);
        assert_eq!(bqp_value(&p, &pt("10")).unwrap(), -4.0);
        assert_eq!(bqp_value(&p, &pt("01")).unwrap(), 0.0);
        assert!(bqp_value(&p, &pt("011")).is_err());
    }

    #[test]
    fn rejects_lower_triangular_entries() {
        let mut a = DMatrix::zeros(2, 2);
        a[(1, 0)] = 1.0;
        assert!(BqpProblem::new(0.0, vec![0.0, 0.0], a).is_err());
        let mut d = DMatrix::zeros(2, 2);
        d[(0, 0)] = 1.0;
        assert!(BqpProblem::new(0.0, vec![0.0, 0.0], d).is_err());
    }

    #[test]
    fn split_signs() {
        let mut a = DMatrix::zeros(3, 3);
        a[(0, 1)] = 8.0;
        a[(0, 2)] = -3.0;
        let p = BqpProblem::new(0.0, vec![0.0; 3], a.clone()).unwrap();
        let (plus, minus) = split_posneg(&p);
        assert_eq!(plus[(0, 1)], 8.0);
        assert_eq!(plus[(0, 2)], 0.0);
        assert_eq!(minus[(0, 2)], -3.0);
        assert_eq!(minus[(0, 1)], 0.0);
        assert_eq!(plus + minus, a);

        let neg = BqpProblem::new(0.0, vec![0.0; 3], a.map(|v| -v.abs())).unwrap();
        let (plus, minus) = split_posneg(&neg);
        assert!(plus.iter().all(|&v| v == 0.0));
        assert_eq!(&minus, neg.quadratic());
    }

    #[test]
    fn relax_without_positive_terms_is_identity() {
        let mut a = DMatrix::zeros(3, 3);
        a[(0, 2)] = -1.5;
        let p = BqpProblem::new(1.0, vec![0.5, -1.0, 2.0], a).unwrap();
        let q = relax(&p, &DMatrix::from_element(3, 3, 0.3)).unwrap();
        assert_eq!(q.as_bqp(), p);
    }

    #[test]
    fn relax_with_zero_gamma_drops_positive_terms() {
        let p = example();
        let q = relax(&p, &DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(q.constant(), p.constant());
        assert_eq!(q.linear(), p.linear());
        assert_eq!(q.quadratic()[(0, 1)], 0.0);
    }

    #[test]
    fn relax_full_gamma_is_tight_at_ones() {
        let p = example();
        let q = relax(&p, &DMatrix::from_element(2, 2, 1.0)).unwrap();
        assert_eq!(q.value(&pt("11")).unwrap(), p.value(&pt("11")).unwrap());
    }

    #[test]
    fn relax_rejects_gamma_outside_unit_interval() {
        let p = example();
        let mut g = DMatrix::zeros(2, 2);
        g[(0, 1)] = 1.5;
        assert!(matches!(relax(&p, &g), Err(Error::GammaOutOfRange { i: 0, j: 1, .. })));
    }

    #[test]
    fn submodular_constructor_rejects_positive_terms() {
        let mut a = DMatrix::zeros(2, 2);
        a[(0, 1)] = 0.1;
        assert!(matches!(
            SubmodularQuadratic::new(0.0, vec![0.0, 0.0], a),
            Err(Error::NotSubmodular { i: 0, j: 1, .. })
        ));
    }
}
