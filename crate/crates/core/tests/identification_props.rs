mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

use common::{max_abs_diff, random_stationary, rng};
use spvar_core::identification::{identify, identify_cholesky, structural_irf, IdentScheme};
use spvar_core::model::{impulse_responses, longrun_cumulative};

fn staircase_patterns(m: usize) -> Vec<(Vec<(usize, usize)>, Vec<(usize, usize)>)> {
    match m {
        2 => vec![
            (vec![(1, 2)], vec![]),
            (vec![], vec![(1, 2)]),
            (vec![], vec![(2, 1)]),
            (vec![(2, 1)], vec![]),
        ],
        _ => vec![
            (vec![(1, 2), (1, 3), (2, 3)], vec![]),
            (vec![], vec![(1, 2), (1, 3), (2, 3)]),
            (vec![(1, 2), (1, 3)], vec![(2, 3)]),
            (vec![(1, 2)], vec![(1, 3), (2, 3)]),
        ],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn short_long_factors_sigma_and_meets_zeros(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = r.random_range(2..=3);
        let s_count = [1, 2, 4][r.random_range(0..3)];
        let orders = (0..s_count).map(|_| r.random_range(1..=2)).collect();
        let params = random_stationary(&mut r, orders, m, 0.9);
        let patterns = staircase_patterns(m);
        let (short, long) = patterns[r.random_range(0..patterns.len())].clone();
        let fit = identify(&params, &IdentScheme::short_long(short.clone(), long.clone())).unwrap();
        let c = longrun_cumulative(&params).unwrap();
        for s in 1..=s_count {
            let h = &fit.h0[s - 1];
            prop_assert!(max_abs_diff(&(h * h.transpose()), params.sigma(s)) < 1e-10);
            for &(i, j) in &short {
                prop_assert!(h[(i - 1, j - 1)].abs() < 1e-8);
            }
            let d = &c[s - 1] * h;
            for &(i, j) in &long {
                prop_assert!(d[(i - 1, j - 1)].abs() < 1e-8);
            }
        }
    }

    #[test]
    fn upper_short_zeros_reproduce_cholesky(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = r.random_range(1..=4);
        let params = random_stationary(&mut r, vec![1, 1], m, 0.9);
        let zeros: Vec<(usize, usize)> = (1..=m).flat_map(|i| (i + 1..=m).map(move |j| (i, j))).collect();
        let a = identify(&params, &IdentScheme::short_long(zeros, vec![])).unwrap();
        let b = identify_cholesky(params.sigmas()).unwrap();
        for (x, y) in a.h0.iter().zip(&b) {
            prop_assert!(max_abs_diff(x, y) < 1e-10);
        }
    }

    #[test]
    fn cholesky_factor_is_lower_with_positive_diagonal(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = r.random_range(1..=5);
        let sigma = vec![common::random_spd(&mut r, m)];
        let h = &identify_cholesky(&sigma).unwrap()[0];
        prop_assert!(max_abs_diff(&(h * h.transpose()), &sigma[0]) < 1e-10);
        for i in 0..m {
            prop_assert!(h[(i, i)] > 0.0);
            for j in i + 1..m {
                prop_assert_eq!(h[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn normalization_fixes_the_chosen_entry(seed in any::<u64>(), size in 0.1f64..3.0) {
        let mut r = rng(seed);
        let m = r.random_range(2..=3);
        let params = random_stationary(&mut r, vec![1, 1, 1], m, 0.9);
        let shock = r.random_range(1..=m);
        let scheme = IdentScheme::cholesky().with_normalization(shock, shock, size);
        let irf = impulse_responses(&params, 3);
        let scaled = structural_irf(&irf, &identify(&params, &scheme).unwrap()).unwrap();
        let plain = structural_irf(&irf, &identify(&params, &IdentScheme::cholesky()).unwrap()).unwrap();
        for s in 1..=3 {
            prop_assert!((scaled.get(s, 0)[(shock - 1, shock - 1)] - size).abs() < 1e-12);
            let ratio = size / plain.get(s, 0)[(shock - 1, shock - 1)];
            for k in 0..=3 {
                let mut expect: DMatrix<f64> = plain.get(s, k).clone();
                expect.column_mut(shock - 1).scale_mut(ratio);
                prop_assert!(max_abs_diff(scaled.get(s, k), &expect) < 1e-10);
            }
        }
    }
}
