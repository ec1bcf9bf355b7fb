//! Regression form `Z = B X + E`, restricted least squares and periodic
//! innovation covariances.

mod restrictions;

pub use restrictions::{build_restrictions, EntryCode, PeersmanVariant, RestrictionPattern, RestrictionSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpvarError};
use crate::linalg;
use crate::model::{PvarParams, PvarSpec};

/// Upper bound on the condition number of `R'(XX' ⊗ I)R`.
pub const MAX_CONDITION: f64 = 1e12;

/// Observed series `y_1, ..., y_T` (rows), optionally preceded by presample rows.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesPanel {
    data: DMatrix<f64>,
    presample: Option<DMatrix<f64>>,
    num_seasons: usize,
}

impl TimeSeriesPanel {
    pub fn new(data: DMatrix<f64>, num_seasons: usize, presample: Option<DMatrix<f64>>) -> Result<Self> {
        if num_seasons == 0 {
            return Err(SpvarError::InvalidSpec("number of seasons must be at least 1".into()));
        }
        if data.nrows() == 0 {
            return Err(SpvarError::Data("no observations".into()));
        }
        if data.nrows() % num_seasons != 0 {
            return Err(SpvarError::Data(format!(
                "{} observations do not form complete cycles of {num_seasons} seasons",
                data.nrows()
            )));
        }
        if let Some(pre) = &presample {
            if pre.ncols() != data.ncols() {
                return Err(SpvarError::Dimension("presample and data column counts differ".into()));
            }
        }
        let all = data.iter().chain(presample.iter().flat_map(|p| p.iter()));
        if all.clone().any(|x| !x.is_finite()) {
            return Err(SpvarError::Data("panel contains non-finite values".into()));
        }
        Ok(Self { data, presample, num_seasons })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn presample(&self) -> Option<&DMatrix<f64>> {
        self.presample.as_ref()
    }

    pub fn num_seasons(&self) -> usize {
        self.num_seasons
    }

    pub fn num_vars(&self) -> usize {
        self.data.ncols()
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn num_cycles(&self) -> usize {
        self.data.nrows() / self.num_seasons
    }
}

/// How presample values are obtained when the panel carries none.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresamplePolicy {
    /// Use the leading whole cycles of the sample as presample.
    #[default]
    Consume,
    /// Demand explicit presample rows.
    Require,
}

/// Regressor layout of the periodic VAR.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrices {
    spec: PvarSpec,
    /// `m x SN` matrix of observations.
    pub z: DMatrix<f64>,
    /// Block-diagonal-by-season regressors, `sum_s (m p(s) + 1) x SN`.
    pub x: DMatrix<f64>,
    sample: DMatrix<f64>,
    presample: DMatrix<f64>,
}

impl DesignMatrices {
    pub fn spec(&self) -> &PvarSpec {
        &self.spec
    }

    /// Effective sample `y_1..y_SN` (rows).
    pub fn sample(&self) -> &DMatrix<f64> {
        &self.sample
    }

    /// Presample rows `y_{s'}..y_0` actually used.
    pub fn presample(&self) -> &DMatrix<f64> {
        &self.presample
    }

    pub fn num_cycles(&self) -> usize {
        self.sample.nrows() / self.spec.num_seasons()
    }

    /// Regressor vector `X_n(s) = (1, y'_{Sn+s-1}, ..., y'_{Sn+s-p(s)})'` at time `t` (1-based).
    pub fn regressors(&self, t: usize) -> DVector<f64> {
        let s = self.spec.season_of(t as i64);
        let off = self.spec.regressor_offset(s);
        self.x.column(t - 1).rows(off, self.spec.regressor_len(s)).into_owned()
    }
}

pub fn build_design(panel: &TimeSeriesPanel, spec: &PvarSpec, policy: PresamplePolicy) -> Result<DesignMatrices> {
    if panel.num_seasons() != spec.num_seasons() || panel.num_vars() != spec.num_vars() {
        return Err(SpvarError::Dimension(format!(
            "panel has S={} m={}, model has S={} m={}",
            panel.num_seasons(),
            panel.num_vars(),
            spec.num_seasons(),
            spec.num_vars()
        )));
    }
    let depth = spec.presample_depth();
    let s_count = spec.num_seasons();
    if let Some(pre) = panel.presample() {
        if pre.nrows() >= depth {
            let pre = pre.rows(pre.nrows() - depth, depth).into_owned();
            return design_from_parts(spec, &pre, panel.data());
        }
        if policy == PresamplePolicy::Require {
            return Err(SpvarError::Data(format!(
                "presample has {} rows, the model needs {depth}",
                pre.nrows()
            )));
        }
    } else if policy == PresamplePolicy::Require && depth > 0 {
        return Err(SpvarError::Data(format!("model needs {depth} presample rows, none supplied")));
    }
    let consumed = depth.div_ceil(s_count) * s_count;
    if consumed >= panel.len() {
        return Err(SpvarError::Data(format!(
            "{} observations leave no complete cycle after using {consumed} as presample",
            panel.len()
        )));
    }
    let data = panel.data();
    let pre = data.rows(consumed - depth, depth).into_owned();
    let sample = data.rows(consumed, data.nrows() - consumed).into_owned();
    design_from_parts(spec, &pre, &sample)
}

/// Builds `Z` and `X` from explicit presample rows (at least the required
/// depth; extra leading rows are ignored) and sample rows.
pub fn design_from_parts(spec: &PvarSpec, presample: &DMatrix<f64>, sample: &DMatrix<f64>) -> Result<DesignMatrices> {
    let (m, s_count) = (spec.num_vars(), spec.num_seasons());
    let depth = spec.presample_depth();
    if sample.ncols() != m || presample.ncols() != m {
        return Err(SpvarError::Dimension(format!("series must have {m} columns")));
    }
    if sample.nrows() == 0 || sample.nrows() % s_count != 0 {
        return Err(SpvarError::Data(format!(
            "sample length {} is not a positive multiple of {s_count}",
            sample.nrows()
        )));
    }
    if presample.nrows() < depth {
        return Err(SpvarError::Data(format!("presample has {} rows, need {depth}", presample.nrows())));
    }
    let presample = presample.rows(presample.nrows() - depth, depth).into_owned();
    let t_len = sample.nrows();
    let mut x = DMatrix::zeros(spec.regressor_dim(), t_len);
    for t in 1..=t_len {
        let s = spec.season_of(t as i64);
        let off = spec.regressor_offset(s);
        x[(off, t - 1)] = 1.0;
        for j in 1..=spec.order(s) {
            let idx = t as i64 - j as i64;
            let src = if idx >= 1 {
                sample.row(idx as usize - 1)
            } else {
                presample.row((depth as i64 + idx - 1) as usize)
            };
            for i in 0..m {
                x[(off + 1 + (j - 1) * m + i, t - 1)] = src[i];
            }
        }
    }
    Ok(DesignMatrices {
        spec: spec.clone(),
        z: sample.transpose(),
        x,
        sample: sample.clone(),
        presample,
    })
}

/// Divisor used for the periodic covariance estimates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaDivisor {
    /// `N - k(s)`; fails when `N <= k(s)`.
    #[default]
    FreeParameters,
    /// `N - k(s)` when positive, otherwise `N`.
    FreeParametersOrCycles,
    /// Always `N`.
    Cycles,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub sigma_divisor: SigmaDivisor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub beta: DVector<f64>,
    pub gamma: DVector<f64>,
    pub params: PvarParams,
    /// `SN x m` residuals aligned with the effective sample.
    pub residuals: DMatrix<f64>,
    pub free_counts: Vec<usize>,
    pub effective_n: usize,
    /// Condition number of `R'(XX' ⊗ I)R`.
    pub condition: f64,
}

/// Restricted least squares: `gamma = argmin |z - (X' ⊗ I)(R gamma + r)|`,
/// solved by QR of the reduced design `(X' ⊗ I) R`.
pub fn fit_constrained(design: &DesignMatrices, restr: &RestrictionSet, opts: &FitOptions) -> Result<FitResult> {
    let spec = design.spec();
    let m = spec.num_vars();
    if restr.dim() != spec.coeff_dim() {
        return Err(SpvarError::Dimension(format!(
            "restrictions act on {} coordinates, the model has {}",
            restr.dim(),
            spec.coeff_dim()
        )));
    }
    let big_m = restr.num_free();
    let t_len = design.sample.nrows();
    let rows = restr.sparse_rows();
    let r_vec = restr.r_vector();
    let mut w = DMatrix::zeros(t_len * m, big_m);
    let mut rhs = DVector::zeros(t_len * m);
    for t in 1..=t_len {
        let s = spec.season_of(t as i64);
        let xoff = spec.regressor_offset(s);
        let boff = spec.beta_offset(s);
        for k in 0..spec.regressor_len(s) {
            let xv = design.x[(xoff + k, t - 1)];
            if xv == 0.0 {
                continue;
            }
            for i in 0..m {
                let coord = boff + k * m + i;
                let row = (t - 1) * m + i;
                for &(c, v) in &rows[coord] {
                    w[(row, c)] += xv * v;
                }
                rhs[row] -= xv * r_vec[coord];
            }
        }
        for i in 0..m {
            rhs[(t - 1) * m + i] += design.z[(i, t - 1)];
        }
    }

    let (gamma, condition) = if big_m == 0 {
        (DVector::zeros(0), 1.0)
    } else {
        if w.nrows() < big_m {
            return Err(SpvarError::Singular {
                condition: f64::INFINITY,
                seasons: (1..=spec.num_seasons()).collect(),
            });
        }
        let qr = w.qr();
        let r_tri = qr.r();
        let condition = squared_condition(&r_tri);
        if !(condition < MAX_CONDITION) {
            return Err(SpvarError::Singular {
                condition,
                seasons: offending_seasons(spec, restr, &r_tri),
            });
        }
        let qtz = qr.q().tr_mul(&rhs);
        let gamma = r_tri
            .solve_upper_triangular(&qtz)
            .ok_or_else(|| SpvarError::Numerical("triangular solve failed".into()))?;
        (gamma, condition)
    };
    let beta = restr.beta(&gamma);

    let zero_sigma = vec![DMatrix::zeros(m, m); spec.num_seasons()];
    let fitted_params = PvarParams::from_beta(spec.clone(), &beta, zero_sigma)?;
    let residuals = compute_residuals(design, &fitted_params);
    let free_counts = free_counts(spec, restr);
    let sigma = estimate_sigma(
        &residuals,
        spec.num_seasons(),
        &free_counts,
        opts.sigma_divisor,
    )?;
    let params = fitted_params.with_sigma(sigma)?;
    Ok(FitResult {
        beta,
        gamma,
        params,
        residuals,
        free_counts,
        effective_n: design.num_cycles(),
        condition,
    })
}

/// Unrestricted fit (`R = I`, `r = 0`).
pub fn fit_unrestricted(design: &DesignMatrices, opts: &FitOptions) -> Result<FitResult> {
    fit_constrained(design, &RestrictionSet::identity(design.spec()), opts)
}

fn squared_condition(r_tri: &DMatrix<f64>) -> f64 {
    let sv = r_tri.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        (max / min).powi(2)
    }
}

fn offending_seasons(spec: &PvarSpec, restr: &RestrictionSet, r_tri: &DMatrix<f64>) -> Vec<usize> {
    let svd = r_tri.clone().svd(false, true);
    let Some(v_t) = svd.v_t else {
        return Vec::new();
    };
    let idx = svd.singular_values.imin();
    let dir = restr.r_matrix() * v_t.row(idx).transpose();
    let scale = dir.amax().max(f64::MIN_POSITIVE);
    (1..=spec.num_seasons())
        .filter(|&s| {
            let off = spec.beta_offset(s);
            let len = spec.num_vars() * spec.regressor_len(s);
            dir.rows(off, len).amax() > 1e-6 * scale
        })
        .collect()
}

fn compute_residuals(design: &DesignMatrices, params: &PvarParams) -> DMatrix<f64> {
    let spec = design.spec();
    let t_len = design.sample.nrows();
    let mut res = DMatrix::zeros(t_len, spec.num_vars());
    for t in 1..=t_len {
        let s = spec.season_of(t as i64);
        let x = design.regressors(t);
        let mut fitted = params.intercept(s).clone();
        for (j, a) in params.coeffs(s).iter().enumerate() {
            let m = spec.num_vars();
            fitted += a * x.rows(1 + j * m, m);
        }
        let e = design.z.column(t - 1) - fitted;
        res.set_row(t - 1, &e.transpose());
    }
    res
}

/// Free parameters per season: the number of `gamma` coordinates that reach
/// the season-`s` block of `beta`, divided by `m`; when that is not an integer,
/// the largest per-equation count.
pub fn free_counts(spec: &PvarSpec, restr: &RestrictionSet) -> Vec<usize> {
    let m = spec.num_vars();
    let rm = restr.r_matrix();
    (1..=spec.num_seasons())
        .map(|s| {
            let off = spec.beta_offset(s);
            let len = m * spec.regressor_len(s);
            let block = rm.rows(off, len);
            let total = (0..rm.ncols())
                .filter(|&c| block.column(c).iter().any(|&v| v != 0.0))
                .count();
            if total % m == 0 {
                return total / m;
            }
            (0..m)
                .map(|i| {
                    (0..rm.ncols())
                        .filter(|&c| (i..len).step_by(m).any(|row| block[(row, c)] != 0.0))
                        .count()
                })
                .max()
                .unwrap_or(0)
        })
        .collect()
}

/// `Sigma(s) = (N - k(s))^{-1} sum_n e_{Sn+s} e'_{Sn+s}` for residual rows
/// aligned so that row 0 belongs to season 1.
pub fn estimate_sigma(
    residuals: &DMatrix<f64>,
    num_seasons: usize,
    free_counts: &[usize],
    divisor: SigmaDivisor,
) -> Result<Vec<DMatrix<f64>>> {
    if num_seasons == 0 || residuals.nrows() % num_seasons != 0 {
        return Err(SpvarError::Dimension("residual rows must form complete cycles".into()));
    }
    if free_counts.len() != num_seasons {
        return Err(SpvarError::Dimension("one free-parameter count per season required".into()));
    }
    let n = residuals.nrows() / num_seasons;
    let m = residuals.ncols();
    (1..=num_seasons)
        .map(|s| {
            let k = free_counts[s - 1];
            let denom = match divisor {
                SigmaDivisor::FreeParameters if n <= k => {
                    return Err(SpvarError::InsufficientCycles { season: s, cycles: n, free: k });
                }
                SigmaDivisor::FreeParameters => n - k,
                SigmaDivisor::FreeParametersOrCycles if n > k => n - k,
                _ => n,
            };
            let mut acc = DMatrix::zeros(m, m);
            for cycle in 0..n {
                let e = residuals.row(cycle * num_seasons + s - 1);
                acc += e.transpose() * e;
            }
            Ok(linalg::symmetrized(&(acc / denom as f64)))
        })
        .collect()
}

/// Lower-triangular half of a symmetric matrix, column by column.
pub fn vech(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for c in 0..n {
        for r in c..n {
            out.push(m[(r, c)]);
        }
    }
    out
}
