//! Seasonal means, autocorrelations, smoothed periodograms and whiteness checks.

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Result, SpvarError};
use crate::model::wrap_season;

/// Per-season sample means `mu(s) = N^{-1} sum_n y_{Sn+s}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeasonalMeans {
    pub means: Vec<DVector<f64>>,
}

fn check_cycles(t_len: usize, num_seasons: usize) -> Result<usize> {
    if num_seasons == 0 || t_len == 0 || t_len % num_seasons != 0 {
        return Err(SpvarError::Data(format!(
            "{t_len} observations do not form complete cycles of {num_seasons} seasons"
        )));
    }
    Ok(t_len / num_seasons)
}

/// Subtracts the season mean from every observation (row 0 is season 1).
pub fn seasonal_demean(data: &DMatrix<f64>, num_seasons: usize) -> Result<(DMatrix<f64>, SeasonalMeans)> {
    let n = check_cycles(data.nrows(), num_seasons)?;
    let m = data.ncols();
    let means: Vec<DVector<f64>> = (0..num_seasons)
        .map(|s| {
            let mut acc = DVector::zeros(m);
            for c in 0..n {
                acc += data.row(c * num_seasons + s).transpose();
            }
            acc / n as f64
        })
        .collect();
    let out = DMatrix::from_fn(data.nrows(), m, |t, i| data[(t, i)] - means[t % num_seasons][i]);
    Ok((out, SeasonalMeans { means }))
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Biased autocovariances `T^{-1} sum_{t=1}^{T-h} (x_t - xbar)(x_{t+h} - xbar)`.
pub fn sample_autocov(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let t_len = series.len();
    if t_len <= max_lag {
        return Err(SpvarError::Data(format!("series of length {t_len} is too short for lag {max_lag}")));
    }
    let xbar = mean(series);
    let dev: Vec<f64> = series.iter().map(|x| x - xbar).collect();
    Ok((0..=max_lag)
        .map(|h| dev[..t_len - h].iter().zip(&dev[h..]).map(|(a, b)| a * b).sum::<f64>() / t_len as f64)
        .collect())
}

pub fn sample_acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let gamma = sample_autocov(series, max_lag)?;
    if !(gamma[0] > 0.0) {
        return Err(SpvarError::Data("series has zero variance".into()));
    }
    Ok(gamma.iter().map(|g| g / gamma[0]).collect())
}

/// Periodic autocorrelations `rho_s(h)` between `x_{Sn+s}` and `x_{Sn+s-h}`,
/// indexed `[s - 1][h]`.
pub fn periodic_acf(series: &[f64], num_seasons: usize, max_lag: usize) -> Result<Vec<Vec<f64>>> {
    let n = check_cycles(series.len(), num_seasons)?;
    if series.len() <= max_lag {
        return Err(SpvarError::Data(format!("series too short for lag {max_lag}")));
    }
    let data = DMatrix::from_column_slice(series.len(), 1, series);
    let (dev, _) = seasonal_demean(&data, num_seasons)?;
    let gamma = |s: usize, h: usize| -> f64 {
        let mut acc = 0.0;
        for c in 0..n {
            let t = c * num_seasons + s;
            if t > h {
                acc += dev[(t - 1, 0)] * dev[(t - 1 - h, 0)];
            }
        }
        acc / n as f64
    };
    let var: Vec<f64> = (1..=num_seasons).map(|s| gamma(s, 0)).collect();
    if let Some(s) = var.iter().position(|v| !(*v > 0.0)) {
        return Err(SpvarError::Data(format!("season {} has zero variance", s + 1)));
    }
    Ok((1..=num_seasons)
        .map(|s| {
            (0..=max_lag)
                .map(|h| {
                    let lagged = wrap_season(s as i64 - h as i64, num_seasons);
                    gamma(s, h) / (var[s - 1] * var[lagged - 1]).sqrt()
                })
                .collect()
        })
        .collect())
}

/// Smoothed periodogram on the half grid `lambda_j = 2 pi j / T`, `j = 0..=T/2`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralEstimate {
    pub freqs: Vec<f64>,
    pub values: Vec<f64>,
    pub bandwidth: usize,
}

/// Periodogram `(2 pi T)^{-1} |sum_t (x_t - xbar) e^{-i lambda_j t}|^2` at all
/// `T` Fourier frequencies.
pub fn periodogram(series: &[f64]) -> Vec<f64> {
    let t_len = series.len();
    if t_len == 0 {
        return Vec::new();
    }
    let xbar = mean(series);
    let mut buf: Vec<Complex<f64>> = series.iter().map(|x| Complex::new(x - xbar, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(t_len).process(&mut buf);
    let scale = 1.0 / (2.0 * std::f64::consts::PI * t_len as f64);
    buf.iter().map(|z| z.norm_sqr() * scale).collect()
}

/// Daniell smoothing of half-width `bandwidth` over the full circle of frequencies.
pub fn smoothed_periodogram(series: &[f64], bandwidth: usize) -> Vec<f64> {
    let raw = periodogram(series);
    let t_len = raw.len() as i64;
    let width = (2 * bandwidth + 1) as f64;
    (0..t_len)
        .map(|j| {
            (-(bandwidth as i64)..=bandwidth as i64)
                .map(|l| raw[(j + l).rem_euclid(t_len) as usize])
                .sum::<f64>()
                / width
        })
        .collect()
}

pub fn spectral_density(series: &[f64], bandwidth: usize) -> Result<SpectralEstimate> {
    let t_len = series.len();
    if t_len < 8 {
        return Err(SpvarError::Data(format!("spectral estimate needs at least 8 observations, got {t_len}")));
    }
    let full = smoothed_periodogram(series, bandwidth);
    let half = t_len / 2;
    Ok(SpectralEstimate {
        freqs: (0..=half).map(|j| 2.0 * std::f64::consts::PI * j as f64 / t_len as f64).collect(),
        values: full[..=half].to_vec(),
        bandwidth,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Level,
    Square,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WhitenessRow {
    pub component: usize,
    pub transform: Transform,
    pub lag: usize,
    pub acf: f64,
    pub flagged: bool,
}

/// Autocorrelations of each column and of its square for lags `1..=max_lag`,
/// flagged outside `+-2 / sqrt(T)`.
pub fn whiteness_summary(series: &DMatrix<f64>, max_lag: usize) -> Result<Vec<WhitenessRow>> {
    let band = 2.0 / (series.nrows() as f64).sqrt();
    let mut rows = Vec::new();
    for i in 0..series.ncols() {
        let level: Vec<f64> = series.column(i).iter().copied().collect();
        let square: Vec<f64> = level.iter().map(|x| x * x).collect();
        for (transform, x) in [(Transform::Level, &level), (Transform::Square, &square)] {
            let acf = sample_acf(x, max_lag)?;
            rows.extend(acf.iter().enumerate().skip(1).map(|(lag, &r)| WhitenessRow {
                component: i + 1,
                transform,
                lag,
                acf: r,
                flagged: r.abs() > band,
            }));
        }
    }
    Ok(rows)
}
