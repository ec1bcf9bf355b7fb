#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spvar_core::model::{stationarity_margin, PvarParams, PvarSpec};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

pub fn random_spd<R: Rng>(rng: &mut R, m: usize) -> DMatrix<f64> {
    let a = uniform_matrix(rng, m, m, 1.0);
    &a * a.transpose() + DMatrix::identity(m, m) * 0.2
}

/// Random PVAR whose coefficients are shrunk until the companion radius is
/// at most `max_radius`.
pub fn random_stationary<R: Rng>(rng: &mut R, orders: Vec<usize>, m: usize, max_radius: f64) -> PvarParams {
    let s_count = orders.len();
    let names = (1..=m).map(|i| format!("y{i}")).collect();
    let spec = PvarSpec::new(s_count, m, orders.clone(), names).unwrap();
    let intercepts: Vec<DVector<f64>> = (0..s_count)
        .map(|_| DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0)))
        .collect();
    let mut coeffs: Vec<Vec<DMatrix<f64>>> = orders
        .iter()
        .map(|&p| (0..p).map(|_| uniform_matrix(rng, m, m, 0.6)).collect())
        .collect();
    let sigma: Vec<DMatrix<f64>> = (0..s_count).map(|_| random_spd(rng, m)).collect();
    loop {
        let params = PvarParams::new(spec.clone(), intercepts.clone(), coeffs.clone(), sigma.clone()).unwrap();
        if stationarity_margin(&params).unwrap() <= max_radius {
            return params;
        }
        for season in coeffs.iter_mut() {
            for a in season.iter_mut() {
                *a *= 0.8;
            }
        }
    }
}

/// Random shape: S from {1, 2, 4, 12}, m from 1..=3, per-season orders in 0..=max_order.
pub fn random_shape<R: Rng>(rng: &mut R, max_order: usize) -> (Vec<usize>, usize) {
    let s_count = [1, 2, 4, 12][rng.random_range(0..4)];
    let m = rng.random_range(1..=3);
    let mut orders: Vec<usize> = (0..s_count).map(|_| rng.random_range(0..=max_order)).collect();
    if orders.iter().all(|&p| p == 0) {
        orders[0] = 1;
    }
    (orders, m)
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    (a - b).amax()
}
