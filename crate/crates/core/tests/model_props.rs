mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;

use common::{max_abs_diff, random_shape, random_stationary, rng};
use spvar_core::identification::{identify, structural_irf, IdentScheme};
use spvar_core::model::{
    build_stacked_var, impulse_responses, longrun_cumulative, ma_coefficients, stack_var_irf, stationarity_margin,
    PvarParams,
};

/// Response of a zero-history, zero-intercept path to a unit impulse in
/// variable `shock` at season `season`, for `horizon` further steps.
fn impulse_path(params: &PvarParams, season: usize, shock: usize, horizon: usize) -> Vec<Vec<f64>> {
    let spec = params.spec();
    let (s_count, m) = (spec.num_seasons(), spec.num_vars());
    let mut path: Vec<Vec<f64>> = Vec::new();
    for k in 0..=horizon {
        let season_now = (season - 1 + k) % s_count + 1;
        let mut y = vec![0.0; m];
        if k == 0 {
            y[shock] = 1.0;
        } else {
            for lag in 1..=spec.order(season_now).min(k) {
                let a = params.coeff(season_now, lag).unwrap();
                let prev = &path[k - lag];
                for i in 0..m {
                    for j in 0..m {
                        y[i] += a[(i, j)] * prev[j];
                    }
                }
            }
        }
        path.push(y);
    }
    path
}

/// `J A^h J' A0^{-1}` from a companion matrix assembled from scratch.
fn companion_stacked_irf(params: &PvarParams, h: usize) -> DMatrix<f64> {
    let spec = params.spec();
    let (s_count, m) = (spec.num_seasons(), spec.num_vars());
    let n = s_count * m;
    let big_p = spec.max_order().div_ceil(s_count).max(1);
    let block = |r: usize, lag: i64| -> DMatrix<f64> {
        if lag <= 0 || lag as usize > spec.order(r) {
            DMatrix::zeros(m, m)
        } else {
            params.coeff(r, lag as usize).unwrap().clone()
        }
    };
    let mut a0 = DMatrix::<f64>::identity(n, n);
    for r in 1..=s_count {
        for c in 1..r {
            let b = block(r, (r - c) as i64);
            a0.view_mut(((r - 1) * m, (c - 1) * m), (m, m)).copy_from(&(-b));
        }
    }
    let a0_inv = a0.clone().try_inverse().unwrap();
    let mut comp = DMatrix::zeros(n * big_p, n * big_p);
    for i in 1..=big_p {
        let mut ai = DMatrix::zeros(n, n);
        for r in 1..=s_count {
            for c in 1..=s_count {
                let b = block(r, (s_count * i + r) as i64 - c as i64);
                ai.view_mut(((r - 1) * m, (c - 1) * m), (m, m)).copy_from(&b);
            }
        }
        comp.view_mut((0, (i - 1) * n), (n, n)).copy_from(&(&a0_inv * ai));
        if i < big_p {
            comp.view_mut((i * n, (i - 1) * n), (n, n)).fill_with_identity();
        }
    }
    let power = comp.pow(h as u32);
    power.view((0, 0), (n, n)) * a0_inv
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn recursion_matches_impulse_simulation(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (orders, m) = random_shape(&mut r, 5);
        let params = random_stationary(&mut r, orders, m, 0.95);
        let irf = impulse_responses(&params, 30);
        for s in 1..=params.spec().num_seasons() {
            for j in 0..m {
                let path = impulse_path(&params, s, j, 30);
                for (k, y) in path.iter().enumerate() {
                    for i in 0..m {
                        prop_assert!((irf.get(s, k)[(i, j)] - y[i]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn stacked_irf_matches_companion_power(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (orders, m) = random_shape(&mut r, 5);
        let params = random_stationary(&mut r, orders, m, 0.95);
        let s_count = params.spec().num_seasons();
        let irf = impulse_responses(&params, s_count * 6);
        for h in 0..=5 {
            let ours = stack_var_irf(&irf, h).unwrap();
            let oracle = companion_stacked_irf(&params, h);
            prop_assert!(max_abs_diff(&ours, &oracle) < 1e-10);
        }
    }

    #[test]
    fn ma_and_shifted_ir_start_at_identity(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (orders, m) = random_shape(&mut r, 3);
        let params = random_stationary(&mut r, orders, m, 0.9);
        let ma = ma_coefficients(&params, 4);
        let irf = impulse_responses(&params, 4);
        let s_count = params.spec().num_seasons();
        for s in 1..=s_count {
            prop_assert_eq!(ma.get(s, 0), &DMatrix::identity(m, m));
            prop_assert_eq!(irf.get(s, 0), &DMatrix::identity(m, m));
            for k in 0..=4 {
                prop_assert_eq!(irf.get(s, k), ma.get((s - 1 + k) % s_count + 1, k));
            }
        }
    }

    #[test]
    fn structural_products_do_not_depend_on_factor(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (orders, m) = random_shape(&mut r, 3);
        let params = random_stationary(&mut r, orders, m, 0.9);
        let irf = impulse_responses(&params, 8);
        let fit = identify(&params, &IdentScheme::cholesky()).unwrap();
        let sirf = structural_irf(&irf, &fit).unwrap();
        for s in 1..=params.spec().num_seasons() {
            for k in 0..=8 {
                let theta = sirf.get(s, k);
                let phi = irf.get(s, k);
                let lhs = theta * theta.transpose();
                let rhs = phi * params.sigma(s) * phi.transpose();
                prop_assert!(max_abs_diff(&lhs, &rhs) < 1e-10 * rhs.amax().max(1.0));
            }
        }
    }

    #[test]
    fn longrun_matches_truncated_sum(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (orders, m) = random_shape(&mut r, 3);
        let s_count = orders.len();
        // per-step decay of at most 0.95
        let params = random_stationary(&mut r, orders, m, 0.95f64.powi(s_count as i32));
        let irf = impulse_responses(&params, 500);
        let closed = longrun_cumulative(&params).unwrap();
        for s in 1..=s_count {
            let mut sum = DMatrix::zeros(m, m);
            for k in 0..=500 {
                sum += irf.get(s, k);
            }
            prop_assert!(max_abs_diff(&sum, &closed[s - 1]) < 1e-8);
        }
    }

    #[test]
    fn stacked_form_has_unit_lower_a0(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (orders, m) = random_shape(&mut r, 4);
        let params = random_stationary(&mut r, orders, m, 0.95);
        let st = build_stacked_var(&params);
        let n = st.dim();
        for i in 0..n {
            prop_assert_eq!(st.a0[(i, i)], 1.0);
            for j in i + 1..n {
                prop_assert_eq!(st.a0[(i, j)], 0.0);
            }
        }
        prop_assert!((st.a0.determinant() - 1.0).abs() < 1e-9);
        prop_assert!(stationarity_margin(&params).unwrap() <= 0.95);
    }
}

#[test]
fn stationary_irfs_decay_by_cycle() {
    let mut r = rng(11);
    for _ in 0..10 {
        let (orders, m) = random_shape(&mut r, 3);
        let s_count = orders.len();
        let params = random_stationary(&mut r, orders, m, 0.8);
        let irf = impulse_responses(&params, 60 * s_count);
        let window_max = |w: usize| -> f64 {
            (1..=s_count)
                .flat_map(|s| (w * s_count * 10..(w + 1) * s_count * 10).map(move |k| (s, k)))
                .map(|(s, k)| irf.get(s, k).amax())
                .fold(0.0, f64::max)
        };
        for w in 1..5 {
            assert!(window_max(w + 1) <= window_max(w) + 1e-300);
        }
    }
}
