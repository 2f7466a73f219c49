mod common;

use common::*;
use heartformer::evalmetrics::{cd, hd, sa_cd};
use heartformer::geokernels::{adaptive_quotas, class_balanced_fps, LabeledPointCloud, NUM_CLASSES};
use heartformer::rng::rng_from_seed;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn fps_matches_brute_force() {
    fps_oracle(250, 100);
}

#[test]
fn knn_group_matches_brute_force() {
    knn_oracle(250, 101);
}

#[test]
fn kdtree_nearest_matches_brute_force() {
    kdtree_oracle(200, 102);
}

#[test]
fn cd_hd_sacd_match_brute_force() {
    metric_oracle(250, 103);
}

#[test]
fn quotas_match_direct_evaluation() {
    quota_oracle(300, 104);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn quotas_sum_and_cap(counts in prop::array::uniform6(0usize..500), alpha in 0.0f64..2.0, n_s in 1usize..1500) {
        prop_assume!(counts.iter().any(|&c| c > 0));
        check_quotas(counts, alpha, n_s);
    }

    #[test]
    fn class_balanced_fps_respects_quotas(seed in any::<u64>(), n in 6usize..64, alpha in 0.0f64..1.5) {
        let mut rng = rng_from_seed(seed);
        let cloud = random_cloud(n, 6, &mut rng);
        let target = rng.gen_range(1..=n);
        let plan = adaptive_quotas(&cloud.class_counts(), alpha, target).unwrap();
        let idx = class_balanced_fps(&cloud, &plan).unwrap();
        prop_assert_eq!(idx.len(), target);
        let mut seen = idx.clone();
        seen.sort();
        seen.dedup();
        prop_assert_eq!(seen.len(), idx.len());
        for c in 0..NUM_CLASSES {
            let got = idx.iter().filter(|&&i| cloud.label(i) as usize == c).count();
            prop_assert_eq!(got, plan.quotas[c]);
        }
    }

    #[test]
    fn fps_prefix_radii_decrease(seed in any::<u64>(), n in 2usize..64) {
        let mut rng = rng_from_seed(seed);
        let cloud = random_cloud(n, 1, &mut rng);
        let (_, radii) = heartformer::geokernels::fps_points(cloud.points(), n, 0).unwrap();
        for w in radii.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn cd_symmetric_and_bounded_by_hd(seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let p = random_cloud(rng.gen_range(1..40), 1, &mut rng);
        let g = random_cloud(rng.gen_range(1..40), 1, &mut rng);
        let a = cd(&p, &g, None).unwrap();
        prop_assert!((a - cd(&g, &p, None).unwrap()).abs() < 1e-12);
        prop_assert!(a <= hd(&p, &g, None).unwrap() + 1e-12);
        prop_assert_eq!(cd(&p, &p, None).unwrap(), 0.0);
    }

    #[test]
    fn sa_cd_label_permutation_invariant(seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let p = random_cloud(rng.gen_range(2..40), 4, &mut rng);
        let g = random_cloud(rng.gen_range(2..40), 4, &mut rng);
        let perm = [3u8, 0, 2, 1, 4, 5];
        let relabel = |c: &LabeledPointCloud| {
            LabeledPointCloud::new(c.points().to_vec(), c.labels().iter().map(|&l| perm[l as usize]).collect()).unwrap()
        };
        match (sa_cd(&p, &g), sa_cd(&relabel(&p), &relabel(&g))) {
            (Ok(a), Ok(b)) => prop_assert!((a.value - b.value).abs() < 1e-12),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "one side failed"),
        }
    }
}
