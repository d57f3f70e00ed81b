use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use srcscreen::linalg::{
    condition_number_sym, haar_orthonormal, inf_to_one_norm, principal_angle_distance, spectral_norm, stable_rank,
    NormMode,
};
use srcscreen::DenseMatrix;

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn union_condition_number_is_bounded(seed in any::<u64>(), k in 1usize..6, extra in 0usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian(k, k + extra, &mut rng);
        let b = gaussian(k, k + extra / 2, &mut rng);
        let (ga, gb) = (&a * a.transpose(), &b * b.transpose());
        let bound = condition_number_sym(&ga).max(condition_number_sym(&gb));
        prop_assert!(condition_number_sym(&(&ga + &gb)) <= bound * (1.0 + 1e-10));
    }

    #[test]
    fn stable_rank_is_rotation_invariant(seed in any::<u64>(), k in 1usize..6, d_extra in 0usize..10, m in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = haar_orthonormal(k + d_extra, k, &mut rng);
        let a = gaussian(k, m, &mut rng);
        let lifted = stable_rank(&(&q * &a)).unwrap();
        let base = stable_rank(&a).unwrap();
        prop_assert!((lifted - base).abs() <= 1e-9 * base.max(1.0));
        prop_assert!(base >= 1.0 - 1e-12 && base <= k.min(m) as f64 + 1e-9);
    }

    #[test]
    fn principal_angle_ignores_basis_choice(seed in any::<u64>(), k in 1usize..5, d_extra in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = k + d_extra;
        let b1 = haar_orthonormal(d, k, &mut rng);
        let b2 = haar_orthonormal(d, k, &mut rng);
        let r = haar_orthonormal(k, k, &mut rng);
        let base = principal_angle_distance(&b1, &b2).unwrap();
        prop_assert!((principal_angle_distance(&(&b1 * &r), &b2).unwrap() - base).abs() < 1e-10);
        prop_assert!((principal_angle_distance(&b2, &b1).unwrap() - base).abs() < 1e-10);
        prop_assert!(principal_angle_distance(&b1, &(&b1 * &r)).unwrap() < 1e-7);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&base));
    }

    #[test]
    fn inf_to_one_sits_between_spectral_bounds(seed in any::<u64>(), s in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = gaussian(s, s, &mut rng);
        let v = inf_to_one_norm(&h, NormMode::default()).unwrap().lower;
        let op = spectral_norm(&h);
        prop_assert!(v <= s as f64 * op * (1.0 + 1e-12));
        // The all-ones vector is one of the enumerated sign vectors.
        let ones = nalgebra::DVector::from_element(s, 1.0);
        prop_assert!(v + 1e-9 >= (&h * ones).abs().sum());
    }
}
