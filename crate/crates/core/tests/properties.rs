use num_bigint::BigUint;
use num_traits::Zero;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nonlocal_core::ghz::DEFAULT_ENUMERATION_CAP;
use nonlocal_core::model::{self, all_vectors, MixedLhv};
use nonlocal_core::protocol::{induced_distribution, to_detector_model};
use nonlocal_core::rational::{int, le_scaled_sqrt, rat, Rational};
use nonlocal_core::rect::{self, ScanOptions, Symmetry};
use nonlocal_core::search::{self, LpVariant};
use nonlocal_core::zgroup::{self, MultisetZ, Subgroup};
use nonlocal_core::{sample, GhzInstance, Rectangle};

fn multiset(t: u64) -> impl Strategy<Value = MultisetZ> {
    prop::collection::vec(0u64..7, t as usize)
        .prop_filter("nonempty", |c| c.iter().any(|&v| v > 0))
        .prop_map(move |c| MultisetZ::from_counts(t, &c).unwrap())
}

fn modulus() -> impl Strategy<Value = u64> {
    prop::sample::select(vec![2u64, 4, 8, 16])
}

fn triple() -> impl Strategy<Value = (MultisetZ, MultisetZ, MultisetZ)> {
    modulus().prop_flat_map(|t| (multiset(t), multiset(t), multiset(t)))
}

proptest! {
    #[test]
    fn sum_is_commutative_and_associative((a, b, c) in triple()) {
        let ab = zgroup::multiset_sum(&a, &b).unwrap();
        prop_assert_eq!(&ab, &zgroup::multiset_sum(&b, &a).unwrap());
        let left = zgroup::multiset_sum(&ab, &c).unwrap();
        let right = zgroup::multiset_sum(&a, &zgroup::multiset_sum(&b, &c).unwrap()).unwrap();
        prop_assert_eq!(&left, &right);
        prop_assert_eq!(left.total(), a.total() * b.total() * c.total());
    }

    #[test]
    fn adding_never_raises_bias((a, b, _) in triple(), d in 0u64..16) {
        let t = a.modulus();
        let sum = zgroup::multiset_sum(&a, &b).unwrap();
        let shifted = zgroup::multiset_sum(&a, &MultisetZ::singleton(t, d % t)).unwrap();
        prop_assert_eq!(&shifted, &a.translate(d % t));
        for i in 0..t.trailing_zeros() {
            let h = Subgroup::generated_by(t, 1 << i);
            let ba = zgroup::subgroup_bias(&a, &h).unwrap();
            prop_assert!(zgroup::subgroup_bias(&sum, &h).unwrap() <= ba);
            prop_assert_eq!(zgroup::subgroup_bias(&shifted, &h).unwrap(), ba);
        }
    }

    #[test]
    fn rectangle_counts_match_set_sums(seed in any::<u64>(), n in 1usize..8, k in 2u32..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = rect::random_rectangle(&mut rng, n, k);
        let modulus = 2 * k as u64;
        let sets: Vec<Vec<u64>> = r.sets().iter().map(|s| s.iter().map(|&v| v as u64).collect()).collect();
        let via_group = zgroup::sum_of_sets(modulus, &sets).unwrap();
        prop_assert_eq!(rect::residue_counts(&r, modulus), via_group.multiplicities().to_vec());
        prop_assert_eq!(via_group.total(), r.size());
    }

    #[test]
    fn sqrt_comparison_agrees_with_floats(lhs in 0i64..10_000, c in 1i64..100, rad in 1i64..10_000) {
        let exact = le_scaled_sqrt(&int(lhs), &rat(c, 7), &int(rad));
        let approx = lhs as f64 - c as f64 / 7.0 * (rad as f64).sqrt();
        if approx.abs() > 1e-6 {
            prop_assert_eq!(exact, approx <= 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn variation_dominates_error(seed in any::<u64>()) {
        let g = GhzInstance::new(3, 2).unwrap();
        let p = g.problem(DEFAULT_ENUMERATION_CAP).unwrap();
        let m = sample::random_mixed_lhv(&mut ChaCha8Rng::seed_from_u64(seed), 3, 2, 2, 25, 4);
        let d = model::evaluate_mixed_lhv(&m, &p).unwrap();
        let met = model::metrics(&d, &p).unwrap();
        if let (Some(e), Some(v)) = (met.error, met.total_variation) {
            prop_assert!(v.0 >= e.0);
        }
    }

    #[test]
    fn efficiency_is_linear_in_mixtures(seed in any::<u64>()) {
        let g = GhzInstance::new(3, 2).unwrap();
        let p = g.problem(DEFAULT_ENUMERATION_CAP).unwrap();
        let m = sample::random_mixed_lhv(&mut ChaCha8Rng::seed_from_u64(seed), 3, 2, 2, 40, 5);
        let whole = model::detection_efficiency(&model::evaluate_mixed_lhv(&m, &p).unwrap(), &p).unwrap();
        let parts: Rational = m
            .components()
            .iter()
            .map(|(lhv, w)| {
                let single = MixedLhv::deterministic(lhv.clone());
                let d = model::evaluate_mixed_lhv(&single, &p).unwrap();
                model::detection_efficiency(&d, &p).unwrap().eta_n * w
            })
            .sum();
        prop_assert_eq!(whole.eta_n, parts);
    }

    #[test]
    fn conversations_partition_inputs(seed in any::<u64>(), n in 1usize..5, k in 2u32..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = sample::random_tree(&mut rng, n, k, 2, 3);
        t.validate(n, k, 2).unwrap();
        let convs = t.conversations(n, k);
        prop_assert_eq!(convs.len(), t.leaf_count());
        for x in all_vectors(n, k) {
            let hits: Vec<usize> = convs
                .iter()
                .enumerate()
                .filter(|(_, c)| c.allowed.iter().zip(&x).all(|(ok, &v)| ok[v as usize]))
                .map(|(i, _)| i)
                .collect();
            prop_assert_eq!(hits.len(), 1);
            let (leaf, out) = t.execute(&x).unwrap();
            prop_assert_eq!(hits[0], leaf);
            prop_assert_eq!(out, t.run(&x).unwrap());
            prop_assert!(convs[leaf].bits <= t.cost());
        }
    }

    #[test]
    fn mixtures_never_beat_the_vertex_optimum(seed in any::<u64>()) {
        let g = GhzInstance::new(3, 2).unwrap();
        let p = g.problem(DEFAULT_ENUMERATION_CAP).unwrap();
        let best = search::best_deterministic_error(&p, 1 << 10).unwrap().optimum.0;
        let m = sample::random_mixed_lhv(&mut ChaCha8Rng::seed_from_u64(seed), 3, 2, 2, 0, 6);
        let d = model::evaluate_mixed_lhv(&m, &p).unwrap();
        prop_assert!(model::error_probability(&d, &p).unwrap() >= best);
    }

    #[test]
    fn preimages_are_rectangles(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lhv = sample::random_lossy_lhv(&mut rng, 3, 3, 2, 20);
        for x in all_vectors(3, 3) {
            let a = lhv.apply(&x);
            let sets = lhv.preimage(&a);
            let r = Rectangle::new(sets).unwrap();
            for y in all_vectors(3, 3) {
                prop_assert_eq!(r.contains(&y), lhv.apply(&y) == a);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn lp_is_monotone_in_error_budget(a in 0i64..16, b in 0i64..16) {
        let g = GhzInstance::new(3, 2).unwrap();
        let p = g.problem(DEFAULT_ENUMERATION_CAP).unwrap();
        let (lo, hi) = (a.min(b), a.max(b));
        let q_lo = search::eta_star_lp(&p, &rat(lo, 16), LpVariant::InputIndependent, 1000).unwrap();
        let q_hi = search::eta_star_lp(&p, &rat(hi, 16), LpVariant::InputIndependent, 1000).unwrap();
        prop_assert!(q_lo.verified && q_hi.verified);
        prop_assert!(q_lo.optimum.0 <= q_hi.optimum.0);
    }
}

#[test]
fn constructed_protocols_respect_the_rectangle_bound() {
    for (n, k) in [(3, 2), (4, 2), (3, 4)] {
        let g = GhzInstance::new(n, k).unwrap();
        let p = g.problem(DEFAULT_ENUMERATION_CAP).unwrap();
        let deltas = [rat(1, 2), rat(3, 4), rat(7, 8), rat(15, 16)];
        let opts = ScanOptions {
            symmetry: Symmetry::Full,
            ..Default::default()
        };
        let scans = rect::scan_rectangles_grid(&g, &deltas, &opts).unwrap();
        let mut protocols = vec![g.broadcast_mixture().unwrap()];
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64 * 10 + k as u64);
        protocols.extend((0..20).map(|_| sample::random_mixed_protocol(&mut rng, n, k, 2, 3, 3)));
        for m in &protocols {
            let d = induced_distribution(m, &p).unwrap();
            let eta_n = model::detection_efficiency(&d, &p).unwrap().eta_n;
            let eps = model::error_probability(&d, &p).unwrap();
            let det = to_detector_model(m).unwrap();
            let dd = model::evaluate_mixed_lhv(&det, &p).unwrap();
            let conv_eta = model::detection_efficiency(&dd, &p).unwrap().eta_n;
            let conv_eps = model::error_probability(&dd, &p).unwrap();
            assert_eq!(conv_eps, eps);
            for s in &scans {
                assert!(rect::theorem2_check(&s.delta, &s.r_cap, m.cost(), &eta_n, &eps, 2, n).unwrap());
                assert!(rect::theorem2_check(&s.delta, &s.r_cap, 0, &conv_eta, &conv_eps, 2, n).unwrap());
            }
        }
    }
}

#[test]
fn empty_rectangle_weight_is_rejected() {
    let g = GhzInstance::new(3, 2).unwrap();
    let r = Rectangle::new(vec![vec![1], vec![0], vec![0]]).unwrap();
    assert!(rect::stats(&r, &g).unwrap().bias.is_none());
    assert_eq!(rect::residue_counts(&r, 4)[1], BigUint::from(1u32));
    assert!(rect::residue_counts(&r, 4)[0].is_zero());
}
