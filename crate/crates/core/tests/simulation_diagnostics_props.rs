mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;

use common::{max_abs_diff, random_stationary, rng, uniform_matrix};
use spvar_core::diagnostics::{
    periodic_acf, sample_acf, sample_autocov, seasonal_demean, smoothed_periodogram, whiteness_summary, Transform,
};
use spvar_core::identification::identify_cholesky;
use spvar_core::simulation::{garch_shocks, implied_means, simulate_spvar, simulate_with_burn_in, GarchSpec, ShockMapping};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn demeaning_is_idempotent_and_linear(
        seed in any::<u64>(), s_count in 1usize..6, cycles in 1usize..8, a in -3.0f64..3.0,
    ) {
        let mut r = rng(seed);
        let t_len = s_count * cycles;
        let x = uniform_matrix(&mut r, t_len, 2, 5.0);
        let y = uniform_matrix(&mut r, t_len, 2, 5.0);
        let (dx, _) = seasonal_demean(&x, s_count).unwrap();
        let (dy, _) = seasonal_demean(&y, s_count).unwrap();
        let (ddx, means) = seasonal_demean(&dx, s_count).unwrap();
        prop_assert!(max_abs_diff(&ddx, &dx) < 1e-12);
        prop_assert!(means.means.iter().all(|m| m.amax() < 1e-12));
        let (dz, _) = seasonal_demean(&(&x * a + &y), s_count).unwrap();
        prop_assert!(max_abs_diff(&dz, &(&dx * a + &dy)) < 1e-11);
    }

    #[test]
    fn acf_is_affine_invariant(
        xs in prop::collection::vec(-10.0f64..10.0, 12..60), scale in 0.1f64..10.0, shift in -100.0f64..100.0,
    ) {
        prop_assume!(xs.iter().any(|&v| (v - xs[0]).abs() > 1e-3));
        let ys: Vec<f64> = xs.iter().map(|v| scale * v + shift).collect();
        let a = sample_acf(&xs, 5).unwrap();
        let b = sample_acf(&ys, 5).unwrap();
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u - v).abs() < 1e-9);
            prop_assert!(u.abs() <= 1.0 + 1e-12);
        }
        let pa = periodic_acf(&xs[..12], 3, 2);
        let pb = periodic_acf(&ys[..12], 3, 2);
        if let (Ok(pa), Ok(pb)) = (pa, pb) {
            for (u, v) in pa.iter().flatten().zip(pb.iter().flatten()) {
                prop_assert!((u - v).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn parseval_holds_for_smoothed_periodogram(
        xs in prop::collection::vec(-10.0f64..10.0, 8..200), bw in 0usize..6,
    ) {
        let g0 = sample_autocov(&xs, 0).unwrap()[0];
        let full = smoothed_periodogram(&xs, bw);
        let mass = 2.0 * std::f64::consts::PI / xs.len() as f64 * full.iter().sum::<f64>();
        prop_assert!((mass - g0).abs() < 1e-8 * g0.max(1.0));
        prop_assert!(full.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn simulated_shocks_are_recovered_by_whitening(seed in any::<u64>()) {
        let mut r = rng(seed);
        let params = random_stationary(&mut r, vec![1, 2, 1], 2, 0.9);
        let h0 = identify_cholesky(params.sigmas()).unwrap();
        let depth = params.spec().presample_depth();
        let pre = uniform_matrix(&mut r, depth, 2, 1.0);
        let shocks = uniform_matrix(&mut r, 30, 2, 1.0);
        for mapping in [ShockMapping::Impact, ShockMapping::InverseImpact] {
            let panel = simulate_spvar(&params, &h0, &shocks, &pre, &[], mapping).unwrap();
            // invert the recursion by hand
            let data = panel.data();
            for t in 1..=30usize {
                let s = (t - 1) % 3 + 1;
                let mut e = data.row(t - 1).transpose() - params.intercept(s);
                for (j, a) in params.coeffs(s).iter().enumerate() {
                    let idx = t as i64 - j as i64 - 1;
                    let lagged = if idx >= 1 {
                        data.row(idx as usize - 1).transpose()
                    } else {
                        pre.row((depth as i64 + idx - 1) as usize).transpose()
                    };
                    e -= a * lagged;
                }
                let w = match mapping {
                    ShockMapping::Impact => h0[s - 1].clone().try_inverse().unwrap() * e,
                    ShockMapping::InverseImpact => &h0[s - 1] * e,
                };
                prop_assert!((w - shocks.row(t - 1).transpose()).amax() < 1e-9);
            }
        }
    }
}

fn moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let kurt = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n / (var * var);
    (var, kurt)
}

#[test]
fn garch_tails_grow_with_arch_effect() {
    let mut r = rng(3);
    let g0 = garch_shocks(&GarchSpec::G0, 200_000, 1, &mut r).unwrap();
    let g3 = garch_shocks(&GarchSpec::G3, 200_000, 1, &mut r).unwrap();
    let (v0, k0) = moments(g0.as_slice());
    let (_, k3) = moments(g3.as_slice());
    assert!((v0 - 1.0).abs() < 0.02);
    assert!((k0 - 3.0).abs() < 0.1);
    // G3 has finite fourth moment since 3 a1^2 < 1; theory gives 3 (1 - a1^2) / (1 - 3 a1^2) = 9
    assert!(k3 > 5.0);
    let flags = whiteness_summary(&g3, 1).unwrap();
    assert!(flags.iter().any(|f| f.transform == Transform::Square && f.flagged));
    assert!(GarchSpec::new(0.6, 0.4).is_err());
    assert!(GarchSpec::new(-0.1, 0.0).is_err());
}

#[test]
fn long_simulation_matches_periodic_means() {
    let mut r = rng(21);
    let params = random_stationary(&mut r, vec![1, 1, 2, 1], 2, 0.6);
    let h0 = identify_cholesky(params.sigmas()).unwrap();
    let panel = simulate_with_burn_in(&params, &h0, &GarchSpec::G0, 20_000, &[], ShockMapping::Impact, &mut r).unwrap();
    let (_, means) = seasonal_demean(panel.data(), 4).unwrap();
    let truth = implied_means(&params).unwrap();
    for (est, mu) in means.means.iter().zip(&truth) {
        assert!((est - mu).amax() < 0.1, "{est} vs {mu}");
    }
}

#[test]
fn floors_clip_and_feed_later_lags() {
    let spec = spvar_core::model::PvarSpec::uniform(1, 1, 1).unwrap();
    let params = spvar_core::model::PvarParams::new(
        spec,
        vec![nalgebra::DVector::zeros(1)],
        vec![vec![DMatrix::from_element(1, 1, 0.5)]],
        vec![DMatrix::identity(1, 1)],
    )
    .unwrap();
    let shocks = DMatrix::from_column_slice(3, 1, &[-4.0, 0.0, 0.0]);
    let pre = DMatrix::from_element(1, 1, 0.0);
    let h0 = vec![DMatrix::identity(1, 1)];
    let panel = simulate_spvar(&params, &h0, &shocks, &pre, &[Some(-1.0)], ShockMapping::Impact).unwrap();
    assert_eq!(panel.data().as_slice(), &[-1.0, -0.5, -0.25]);
}
