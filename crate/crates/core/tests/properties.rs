use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sdlk::kernels::{eval_kernel, pdqk_eval, pdqk_gram, psd_check};
use sdlk::learner::{euclidean_gradient, objective};
use sdlk::mmd::{gamma_vector, joint_gram, learnable_part, mean_feature_difference, mmd_decomposed, mmd_value};
use sdlk::spd::{egrad_to_rgrad, retract};
use sdlk::subspace::{mmd_matrix, sstca_fit, tca_fit};
use sdlk::types::validate_domain_pair;
use sdlk::{AnchorSet, DataMatrix, DomainPair, KernelSpec, LabeledDataset, Pdqk, SpdPoint, TangentMatrix};

fn matrix(rows: usize, cols: usize, scale: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-scale..scale, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn kernel_spec() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        (0.01f64..2.0, 0.0f64..2.0, 1u32..4).prop_map(|(a, b, degree)| KernelSpec::Polynomial { a, b, degree }),
        (0.1f64..10.0).prop_map(|sigma| KernelSpec::Rbf { sigma }),
        (0.1f64..10.0).prop_map(|sigma| KernelSpec::Cauchy { sigma }),
        (0.1f64..10.0).prop_map(|sigma| KernelSpec::Exponential { sigma }),
    ]
}

fn stationary_spec() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        (0.1f64..10.0).prop_map(|sigma| KernelSpec::Rbf { sigma }),
        (0.1f64..10.0).prop_map(|sigma| KernelSpec::Cauchy { sigma }),
        (0.1f64..10.0).prop_map(|sigma| KernelSpec::Exponential { sigma }),
    ]
}

/// Source and target with shared dimension `d`.
fn domain_pair() -> impl Strategy<Value = DomainPair> {
    (1usize..5, 1usize..8, 1usize..8).prop_flat_map(|(d, ns, nt)| {
        (
            matrix(d, ns, 3.0),
            matrix(d, nt, 3.0),
            prop::collection::vec(0i64..3, ns),
        )
            .prop_map(|(xs, xt, labels)| {
                DomainPair::new(
                    LabeledDataset::new(DataMatrix::new(xs), labels).unwrap(),
                    LabeledDataset::unlabeled(DataMatrix::new(xt)),
                )
                .unwrap()
            })
    })
}

fn pdqk_for(pair: &DomainPair, seed: u64, h: usize, eta: f64) -> Pdqk {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let joint = pair.joint_features();
    let h = h.min(joint.ncols());
    let anchors = AnchorSet::new(joint.columns(0, h).into_owned()).unwrap();
    let m = SpdPoint::random(h, &mut rng).into_matrix();
    Pdqk::new(
        KernelSpec::Polynomial {
            a: 0.5,
            b: 1.0,
            degree: 2,
        },
        KernelSpec::Rbf { sigma: 2.0 },
        anchors,
        m,
        eta,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernels_are_exactly_symmetric(spec in kernel_spec(), xy in matrix(4, 2, 5.0)) {
        let (x, y) = (xy.column(0).into_owned(), xy.column(1).into_owned());
        prop_assert_eq!(eval_kernel(&spec, &x, &y).unwrap(), eval_kernel(&spec, &y, &x).unwrap());
    }

    #[test]
    fn stationary_kernels_bounded_by_one(spec in stationary_spec(), xy in matrix(3, 2, 5.0)) {
        let (x, y) = (xy.column(0).into_owned(), xy.column(1).into_owned());
        let k = eval_kernel(&spec, &x, &y).unwrap();
        prop_assert!(k > 0.0 && k <= 1.0);
        prop_assert_eq!(eval_kernel(&spec, &x, &x).unwrap(), 1.0);
        if x != y {
            prop_assert!(k < 1.0);
        }
    }

    #[test]
    fn pdqk_gram_is_psd_and_matches_scalar(pair in domain_pair(), seed in any::<u64>(), eta in 0.1f64..2.0) {
        let k = pdqk_for(&pair, seed, 4, eta);
        let x = pair.joint_features();
        let g = pdqk_gram(&k, &x, &x).unwrap();
        prop_assert_eq!(&g, &g.transpose());
        prop_assert!(psd_check(&g, 1e-8));
        for i in 0..x.ncols() {
            for j in 0..x.ncols() {
                let e = pdqk_eval(&k, &x.column(i).into_owned(), &x.column(j).into_owned()).unwrap();
                prop_assert!((e - g[(i, j)]).abs() <= 1e-10 * (1.0 + e.abs()));
            }
        }
    }

    #[test]
    fn mmd_nonnegative_for_psd_kernels(pair in domain_pair(), spec in kernel_spec()) {
        let k = joint_gram(&spec, &pair).unwrap();
        if k.is_psd(1e-8) {
            let gamma = gamma_vector(pair.n_source(), pair.n_target()).unwrap();
            prop_assert!(mmd_value(&k, &gamma).unwrap() >= -1e-10);
        }
    }

    #[test]
    fn decomposition_identity(pair in domain_pair(), seed in any::<u64>(), eta in 0.1f64..2.0) {
        let k = pdqk_for(&pair, seed, 5, eta);
        let gamma = gamma_vector(pair.n_source(), pair.n_target()).unwrap();
        let full = mmd_value(&joint_gram(&k, &pair).unwrap(), &gamma).unwrap();
        let (base, learned) = mmd_decomposed(&k, &pair).unwrap();
        prop_assert!((base + learned - full).abs() <= 1e-10 * (1.0 + full.abs()));
    }

    #[test]
    fn mmd_invariant_to_within_domain_permutation(
        pair in domain_pair(),
        spec in kernel_spec(),
        shuffle_seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
        let mut ps: Vec<usize> = (0..pair.n_source()).collect();
        let mut pt: Vec<usize> = (0..pair.n_target()).collect();
        ps.shuffle(&mut rng);
        pt.shuffle(&mut rng);
        let permuted = DomainPair::new(pair.source.select(&ps), pair.target.select(&pt)).unwrap();
        let gamma = gamma_vector(pair.n_source(), pair.n_target()).unwrap();
        let a = mmd_value(&joint_gram(&spec, &pair).unwrap(), &gamma).unwrap();
        let b = mmd_value(&joint_gram(&spec, &permuted).unwrap(), &gamma).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn doubling_eta_doubles_learnable_part(v in matrix(4, 1, 2.0), seed in any::<u64>(), eta in 0.1f64..2.0) {
        let m = SpdPoint::random(4, &mut ChaCha8Rng::seed_from_u64(seed)).into_matrix();
        let v = v.column(0).into_owned();
        prop_assert_eq!(learnable_part(&m, &v, 2.0 * eta), 2.0 * learnable_part(&m, &v, eta));
    }

    #[test]
    fn objective_minus_regularizer_is_learnable_part(pair in domain_pair(), seed in any::<u64>(), mu in 1.0f64..1e5) {
        let k = pdqk_for(&pair, seed, 4, 1.0);
        let gamma = gamma_vector(pair.n_source(), pair.n_target()).unwrap();
        let v = mean_feature_difference(k.beta(), k.anchors(), &pair, &gamma).unwrap();
        let obj = objective(k.m(), &v, mu).unwrap();
        let (_, learned) = mmd_decomposed(&k, &pair).unwrap();
        let diff = obj - mu * k.m().norm_squared();
        prop_assert!((diff - learned).abs() <= 1e-10 * (1.0 + obj.abs()));
    }

    #[test]
    fn rgrad_is_symmetric_and_retraction_stays_spd(seed in any::<u64>(), g in matrix(3, 3, 2.0), xi in matrix(3, 3, 1.0)) {
        let m = SpdPoint::random(3, &mut ChaCha8Rng::seed_from_u64(seed));
        let r = egrad_to_rgrad(&m, &g).unwrap();
        prop_assert_eq!(r.matrix(), &r.matrix().transpose());
        let xi = TangentMatrix::sym_part(&xi);
        let xi = if xi.matrix().norm() > m.matrix().norm() {
            xi.scale(m.matrix().norm() / xi.matrix().norm())
        } else {
            xi
        };
        let p = retract(&m, &xi).unwrap();
        prop_assert!(p.min_eigenvalue() > 0.0);
    }

    #[test]
    fn domain_pair_json_round_trip_is_bit_identical(pair in domain_pair()) {
        let json = serde_json::to_string(&pair).unwrap();
        let back: DomainPair = serde_json::from_str(&json).unwrap();
        let bits = |m: &DMatrix<f64>| m.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(back.source.data.features()), bits(pair.source.data.features()));
        prop_assert_eq!(bits(back.target.data.features()), bits(pair.target.data.features()));
        prop_assert_eq!(back, pair);
    }

    #[test]
    fn validation_matches_invariants(
        ds in 1usize..4,
        dt in 1usize..4,
        ns in 0usize..4,
        nt in 0usize..4,
        poison in prop::option::of((any::<bool>(), 0usize..16)),
    ) {
        let mut xs = DMatrix::from_fn(ds, ns, |i, j| (i + 2 * j) as f64);
        let mut xt = DMatrix::from_fn(dt, nt, |i, j| (i * j) as f64 - 1.0);
        let mut finite = true;
        if let Some((in_source, at)) = poison {
            let target = if in_source { &mut xs } else { &mut xt };
            if !target.is_empty() {
                let n = target.len();
                target[at % n] = f64::NAN;
                finite = false;
            }
        }
        let pair = DomainPair {
            source: LabeledDataset { data: DataMatrix::new(xs), labels: vec![0; ns] },
            target: LabeledDataset { data: DataMatrix::new(xt), labels: vec![-1; nt] },
        };
        let valid = ns > 0 && nt > 0 && ds == dt && finite;
        prop_assert_eq!(validate_domain_pair(&pair).is_ok(), valid);
    }

    #[test]
    fn gradient_matches_central_differences(seed in any::<u64>(), v in matrix(3, 1, 1.0), mu in 0.1f64..10.0) {
        let m = SpdPoint::random(3, &mut ChaCha8Rng::seed_from_u64(seed)).into_matrix();
        let v: DVector<f64> = v.column(0).into_owned();
        let g = euclidean_gradient(&m, &v, mu).unwrap();
        let h = 1e-5;
        let mut fd = DMatrix::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                let mut e = DMatrix::zeros(3, 3);
                e[(i, j)] = h;
                fd[(i, j)] = (objective(&(&m + &e), &v, mu).unwrap() - objective(&(&m - &e), &v, mu).unwrap()) / (2.0 * h);
            }
        }
        prop_assert!((&fd - &g).norm() <= 1e-6 * g.norm().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn subspace_identities(seed in any::<u64>(), ns in 3usize..10, nt in 3usize..10) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(3, ns + nt, |_, _| rng.random_range(-2.0..2.0));
        let pair = DomainPair::new(
            LabeledDataset::new(DataMatrix::new(x.columns(0, ns).into_owned()), (0..ns as i64).map(|i| i % 2).collect()).unwrap(),
            LabeledDataset::unlabeled(DataMatrix::new(x.columns(ns, nt).into_owned())),
        )
        .unwrap();
        let k = joint_gram(&KernelSpec::Rbf { sigma: 2.0 }, &pair).unwrap();
        let gamma = gamma_vector(ns, nt).unwrap();
        let model = tca_fit(&k, &gamma, 1.0, 2).unwrap();
        prop_assert!(model.constraint_residual() <= 1e-6);

        // γγᵀ quadratic form on a single direction.
        let w = model.w().column(0).into_owned();
        let kw = k.matrix() * &w;
        let quad = (kw.transpose() * mmd_matrix(&gamma) * &kw)[(0, 0)];
        let direct = gamma.as_vector().dot(&kw).powi(2);
        prop_assert!((quad - direct).abs() <= 1e-12 * (1.0 + direct));

        // SSTCA with no locality term and an identity label kernel is TCA.
        let n = ns + nt;
        let lap = DMatrix::zeros(n, n);
        let s = sstca_fit(&k, &gamma, &lap, &DMatrix::identity(n, n), 1.0, 0.0, 2).unwrap();
        prop_assert!(sdlk::linalg::max_principal_angle(s.w(), model.w()) <= 1e-6);
    }
}
