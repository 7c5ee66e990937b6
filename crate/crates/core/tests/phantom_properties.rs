use cfd_core::phantom::{conditional_prior, generate, stratify, PhantomParams};
use cfd_core::SeededRng;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_masks_are_consistent(seed in any::<u64>(), lesion in any::<bool>(), gain in 0.0f64..2.5) {
        let params = PhantomParams { gain, ..PhantomParams::default() };
        let s = generate(&params, lesion, &mut SeededRng::new(seed)).unwrap();
        prop_assert!(s.pathology.is_subset_of(&s.brain).unwrap());
        prop_assert!(s.ventricles.is_subset_of(&s.brain).unwrap());
        prop_assert_eq!(s.pathology.overlap(&s.ventricles).unwrap(), 0);
        prop_assert_eq!(lesion, !s.pathology.is_empty());
    }

    #[test]
    fn prior_mean_is_the_noiseless_phantom(seed in any::<u64>(), lesion in any::<bool>()) {
        let params = PhantomParams { tissue_noise: 0.0, ..PhantomParams::default() };
        let s = generate(&params, lesion, &mut SeededRng::new(seed)).unwrap();
        let prior = conditional_prior(&s.brain, &s.pathology, &params).unwrap();
        prop_assert_eq!(prior.mean_image(), s.image);
    }

    #[test]
    fn generation_is_seeded(seed in any::<u64>()) {
        let params = PhantomParams::default();
        let a = generate(&params, true, &mut SeededRng::new(seed)).unwrap();
        let b = generate(&params, true, &mut SeededRng::new(seed)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn strata_partition_by_rank(areas in prop::collection::vec(1usize..500, 1..200)) {
        let s = stratify(&areas).unwrap();
        let mut all: Vec<usize> = s.small.iter().chain(&s.medium).chain(&s.large).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..areas.len()).collect::<Vec<_>>());
        prop_assert_eq!(s.small.len(), s.large.len());
        let max_small = s.small.iter().map(|&i| areas[i]).max();
        let min_medium = s.medium.iter().map(|&i| areas[i]).min();
        if let (Some(a), Some(b)) = (max_small, min_medium) {
            prop_assert!(a <= b);
        }
        prop_assert!(s.q25 <= s.q75);
    }
}

#[test]
fn zero_gain_ventricles_match_healthy_distribution() {
    let params = PhantomParams {
        gain: 0.0,
        ..PhantomParams::default()
    };
    let mut rng = SeededRng::new(1);
    for _ in 0..50 {
        let l = generate(&params, true, &mut rng).unwrap();
        let h = generate(&params, false, &mut rng).unwrap();
        assert_eq!(l.ventricle_radii, h.ventricle_radii);
    }
}
