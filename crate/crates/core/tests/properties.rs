use mercbo::afo::{
    brute_force_minimize, build_bqp, graphcut_minimize, polish_point, relax, submodular_relaxation_solve, BqpProblem,
    RelaxationConfig, SubmodularQuadratic,
};
use mercbo::driver::batch_diversity;
use mercbo::features::{exact_kernel, kernel_from_features, FeatureBasis};
use mercbo::BinaryPoint;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn point(n: usize) -> impl Strategy<Value = BinaryPoint> {
    prop::collection::vec(any::<bool>(), n).prop_map(|b| BinaryPoint::new(b).unwrap())
}

fn bqp(max_n: usize) -> impl Strategy<Value = BqpProblem> {
    (2..=max_n).prop_flat_map(|n| {
        (
            -3.0..3.0f64,
            prop::collection::vec(-3.0..3.0f64, n),
            prop::collection::vec(-3.0..3.0f64, n * (n - 1) / 2),
        )
            .prop_map(move |(c, b, upper)| {
                let mut a = DMatrix::zeros(n, n);
                let mut k = 0;
                for i in 0..n {
                    for j in i + 1..n {
                        a[(i, j)] = upper[k];
                        k += 1;
                    }
                }
                BqpProblem::new(c, b, a).unwrap()
            })
    })
}

fn gamma_for(p: &BqpProblem, raw: &[f64]) -> DMatrix<f64> {
    let n = p.n();
    let mut g = DMatrix::zeros(n, n);
    for (k, (i, j, _)) in p.positive_terms().into_iter().enumerate() {
        g[(i, j)] = raw[k % raw.len()];
    }
    g
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn full_order_features_reproduce_kernel(
        (x, y) in (1usize..=7).prop_flat_map(|n| (point(n), point(n))),
        beta in 0.01..2.0f64,
    ) {
        let basis = FeatureBasis::new(x.len(), x.len(), beta).unwrap();
        let exact = exact_kernel(&x, &y, beta).unwrap();
        let approx = kernel_from_features(&x, &y, &basis).unwrap();
        prop_assert!((exact - approx).abs() <= 1e-9 * exact.abs());
    }

    #[test]
    fn bqp_matches_feature_inner_product(
        (x, theta) in (2usize..=10).prop_flat_map(|n| {
            let d = 1 + n + n * (n - 1) / 2;
            (point(n), prop::collection::vec(-2.0..2.0f64, d))
        }),
        beta in 0.05..1.5f64,
    ) {
        let basis = FeatureBasis::new(x.len(), 2, beta).unwrap();
        let theta = DVector::from_vec(theta);
        let p = build_bqp(&theta, &basis).unwrap();
        let direct = theta.dot(basis.features(&x).unwrap().values());
        prop_assert!((p.value(&x).unwrap() - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
    }

    #[test]
    fn relaxation_is_a_lower_bound(p in bqp(8), raw in prop::collection::vec(0.0..=1.0f64, 1..8)) {
        let q = relax(&p, &gamma_for(&p, &raw)).unwrap();
        for idx in 0..1u64 << p.n() {
            let x = BinaryPoint::from_index(p.n(), idx);
            prop_assert!(q.value(&x).unwrap() <= p.value(&x).unwrap() + 1e-12);
        }
    }

    #[test]
    fn graph_cut_matches_enumeration(p in bqp(9)) {
        let a = p.quadratic().map(|v| -v.abs());
        let q = SubmodularQuadratic::new(p.constant(), p.linear().to_vec(), a).unwrap();
        let (x, v) = graphcut_minimize(&q).unwrap();
        let (bx, bv) = brute_force_minimize(&q.as_bqp()).unwrap();
        prop_assert!((v - bv).abs() <= 1e-9 * (1.0 + bv.abs()));
        prop_assert_eq!(x, bx);
    }

    #[test]
    fn solver_brackets_the_optimum(p in bqp(10)) {
        let out = submodular_relaxation_solve(&p, &RelaxationConfig::default()).unwrap();
        let (_, opt) = brute_force_minimize(&p).unwrap();
        prop_assert!(out.state.bound_trace.iter().all(|&b| b <= opt + 1e-9));
        prop_assert!(opt <= out.value + 1e-12);
        prop_assert_eq!(out.value, p.value(&out.point).unwrap());
    }

    #[test]
    fn polish_never_increases_value((p, x) in bqp(10).prop_flat_map(|p| { let n = p.n(); (Just(p), point(n)) })) {
        let (y, v) = polish_point(&p, &x);
        prop_assert!(v <= p.value(&x).unwrap());
        prop_assert_eq!(v, p.value(&y).unwrap());
        for i in 0..y.len() {
            prop_assert!(p.value(&y.flipped(i)).unwrap() >= v - 1e-9);
        }
    }

    #[test]
    fn diversity_is_bounded(pts in (1usize..12).prop_flat_map(|n| prop::collection::vec(point(n), 2..8))) {
        let d = batch_diversity(&pts).unwrap();
        prop_assert!(d >= 0.0 && d <= pts[0].len() as f64);
        let mut rev = pts.clone();
        rev.reverse();
        prop_assert_eq!(d, batch_diversity(&rev).unwrap());
    }

    #[test]
    fn point_text_roundtrip(x in (1usize..40).prop_flat_map(point)) {
        let parsed: BinaryPoint = x.to_string().parse().unwrap();
        prop_assert_eq!(&parsed, &x);
        let json = serde_json::to_string(&x).unwrap();
        prop_assert_eq!(serde_json::from_str::<BinaryPoint>(&json).unwrap(), x);
    }
}
