//! Periodic VAR processes: parameters, the stacked stationary VAR form,
//! periodic stationarity, moving-average coefficients and impulse responses.
//!
//! Seasons are 1-based throughout (`1..=S`); lag and variable indices that
//! address matrices are 0-based as usual in Rust. Time `t = S*n + s` with
//! `n >= 0` the cycle and `s` the season, so the first observation of a
//! sample is season 1.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpvarError};
use crate::linalg;

/// Default slack used when deciding periodic stationarity from the spectral
/// radius of the stacked companion matrix.
pub const DEFAULT_STATIONARITY_TOL: f64 = 1e-10;

/// Maps any integer time or season index onto its season in `1..=S`.
pub fn wrap_season(idx: i64, num_seasons: usize) -> usize {
    assert!(num_seasons >= 1, "number of seasons must be positive");
    let s = num_seasons as i64;
    ((idx - 1).rem_euclid(s) + 1) as usize
}

/// Dimensions of a periodic VAR.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PvarSpec {
    num_seasons: usize,
    num_vars: usize,
    orders: Vec<usize>,
    var_names: Vec<String>,
}

impl PvarSpec {
    pub fn new(
        num_seasons: usize,
        num_vars: usize,
        orders: Vec<usize>,
        var_names: Vec<String>,
    ) -> Result<Self> {
        if num_seasons == 0 {
            return Err(SpvarError::InvalidSpec("number of seasons must be at least 1".into()));
        }
        if num_vars == 0 {
            return Err(SpvarError::InvalidSpec("number of variables must be at least 1".into()));
        }
        if orders.len() != num_seasons {
            return Err(SpvarError::InvalidSpec(format!(
                "expected {num_seasons} seasonal orders, got {}",
                orders.len()
            )));
        }
        if var_names.len() != num_vars {
            return Err(SpvarError::InvalidSpec(format!(
                "expected {num_vars} variable names, got {}",
                var_names.len()
            )));
        }
        Ok(Self { num_seasons, num_vars, orders, var_names })
    }

    /// Same order in every season, variables named `y1..ym`.
    pub fn uniform(num_seasons: usize, num_vars: usize, order: usize) -> Result<Self> {
        let names = (1..=num_vars).map(|i| format!("y{i}")).collect();
        Self::new(num_seasons, num_vars, vec![order; num_seasons], names)
    }

    pub fn num_seasons(&self) -> usize {
        self.num_seasons
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn orders(&self) -> &[usize] {
        &self.orders
    }

    /// Order `p(s)` of season `s` (1-based).
    pub fn order(&self, season: usize) -> usize {
        self.orders[season - 1]
    }

    pub fn var_names(&self) -> &[String] {
        &self.var_names
    }

    pub fn max_order(&self) -> usize {
        self.orders.iter().copied().max().unwrap_or(0)
    }

    /// Order `P = ceil(p / S)` of the stacked VAR.
    pub fn stacked_order(&self) -> usize {
        self.max_order().div_ceil(self.num_seasons)
    }

    /// Length `m p(s) + 1` of the season-`s` regressor vector.
    pub fn regressor_len(&self, season: usize) -> usize {
        self.num_vars * self.order(season) + 1
    }

    /// Row offset of the season-`s` block in the regressor matrix.
    pub fn regressor_offset(&self, season: usize) -> usize {
        (1..season).map(|s| self.regressor_len(s)).sum()
    }

    /// Total regressor rows `sum_s (m p(s) + 1)`.
    pub fn regressor_dim(&self) -> usize {
        (1..=self.num_seasons).map(|s| self.regressor_len(s)).sum()
    }

    /// Length `d = m sum_s (m p(s) + 1)` of the coefficient vector.
    pub fn coeff_dim(&self) -> usize {
        self.num_vars * self.regressor_dim()
    }

    /// Offset of the season-`s` block `beta(s)` in the coefficient vector.
    pub fn beta_offset(&self, season: usize) -> usize {
        self.num_vars * self.regressor_offset(season)
    }

    /// Number of presample observations `y_{s'}, ..., y_0` needed so that every
    /// lag of the first cycle is available.
    pub fn presample_depth(&self) -> usize {
        (1..=self.num_seasons)
            .map(|s| self.order(s) as i64 - s as i64 + 1)
            .max()
            .unwrap_or(0)
            .max(0) as usize
    }

    /// Season of the time index `t` (1-based time).
    pub fn season_of(&self, t: i64) -> usize {
        wrap_season(t, self.num_seasons)
    }
}

/// Reduced-form parameters of a periodic VAR.
#[derive(Clone, Debug, PartialEq)]
pub struct PvarParams {
    spec: PvarSpec,
    intercepts: Vec<DVector<f64>>,
    coeffs: Vec<Vec<DMatrix<f64>>>,
    sigma: Vec<DMatrix<f64>>,
}

impl PvarParams {
    /// Validates shapes and symmetry of the innovation covariances.
    /// Positive definiteness is checked where a factorization is required.
    pub fn new(
        spec: PvarSpec,
        intercepts: Vec<DVector<f64>>,
        coeffs: Vec<Vec<DMatrix<f64>>>,
        sigma: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let (s_count, m) = (spec.num_seasons(), spec.num_vars());
        if intercepts.len() != s_count || coeffs.len() != s_count || sigma.len() != s_count {
            return Err(SpvarError::Dimension(format!(
                "expected {s_count} seasonal intercepts, coefficient lists and covariances"
            )));
        }
        for s in 1..=s_count {
            if intercepts[s - 1].len() != m {
                return Err(SpvarError::Dimension(format!("intercept of season {s} must have length {m}")));
            }
            if coeffs[s - 1].len() != spec.order(s) {
                return Err(SpvarError::Dimension(format!(
                    "season {s} needs {} coefficient matrices, got {}",
                    spec.order(s),
                    coeffs[s - 1].len()
                )));
            }
            if coeffs[s - 1].iter().any(|a| a.shape() != (m, m)) {
                return Err(SpvarError::Dimension(format!("coefficient matrices of season {s} must be {m}x{m}")));
            }
            let sig = &sigma[s - 1];
            if sig.shape() != (m, m) {
                return Err(SpvarError::Dimension(format!("covariance of season {s} must be {m}x{m}")));
            }
            if linalg::max_abs(&(sig - sig.transpose())) > 1e-12 {
                return Err(SpvarError::Precondition(format!("covariance of season {s} is not symmetric")));
            }
        }
        Ok(Self { spec, intercepts, coeffs, sigma })
    }

    /// Parameters with all coefficients zero, zero intercepts and identity covariances.
    pub fn zeros(spec: PvarSpec) -> Self {
        let m = spec.num_vars();
        let s_count = spec.num_seasons();
        let coeffs = (1..=s_count)
            .map(|s| vec![DMatrix::zeros(m, m); spec.order(s)])
            .collect();
        Self {
            intercepts: vec![DVector::zeros(m); s_count],
            sigma: vec![DMatrix::identity(m, m); s_count],
            coeffs,
            spec,
        }
    }

    pub fn spec(&self) -> &PvarSpec {
        &self.spec
    }

    pub fn intercept(&self, season: usize) -> &DVector<f64> {
        &self.intercepts[season - 1]
    }

    pub fn intercepts(&self) -> &[DVector<f64>] {
        &self.intercepts
    }

    /// `A_j(s)`; `None` for `j = 0` or `j > p(s)` (implicitly zero).
    pub fn coeff(&self, season: usize, lag: usize) -> Option<&DMatrix<f64>> {
        if lag == 0 {
            return None;
        }
        self.coeffs[season - 1].get(lag - 1)
    }

    pub fn coeffs(&self, season: usize) -> &[DMatrix<f64>] {
        &self.coeffs[season - 1]
    }

    pub fn sigma(&self, season: usize) -> &DMatrix<f64> {
        &self.sigma[season - 1]
    }

    pub fn sigmas(&self) -> &[DMatrix<f64>] {
        &self.sigma
    }

    pub fn with_sigma(mut self, sigma: Vec<DMatrix<f64>>) -> Result<Self> {
        let spec = self.spec.clone();
        self.sigma = sigma;
        Self::new(spec, self.intercepts, self.coeffs, self.sigma)
    }

    /// Canonical coefficient vector `beta = (beta(1)', ..., beta(S)')'` with
    /// `beta(s) = vec(nu(s), A_1(s), ..., A_p(s)(s))` in column-major order.
    pub fn to_beta(&self) -> DVector<f64> {
        let m = self.spec.num_vars();
        let mut beta = DVector::zeros(self.spec.coeff_dim());
        for s in 1..=self.spec.num_seasons() {
            let off = self.spec.beta_offset(s);
            beta.rows_mut(off, m).copy_from(self.intercept(s));
            for (j, a) in self.coeffs(s).iter().enumerate() {
                let base = off + m * (1 + j * m);
                beta.rows_mut(base, m * m).copy_from_slice(a.as_slice());
            }
        }
        beta
    }

    /// Inverse of [`PvarParams::to_beta`].
    pub fn from_beta(spec: PvarSpec, beta: &DVector<f64>, sigma: Vec<DMatrix<f64>>) -> Result<Self> {
        if beta.len() != spec.coeff_dim() {
            return Err(SpvarError::Dimension(format!(
                "coefficient vector has length {}, expected {}",
                beta.len(),
                spec.coeff_dim()
            )));
        }
        let m = spec.num_vars();
        let mut intercepts = Vec::with_capacity(spec.num_seasons());
        let mut coeffs = Vec::with_capacity(spec.num_seasons());
        for s in 1..=spec.num_seasons() {
            let off = spec.beta_offset(s);
            intercepts.push(beta.rows(off, m).into_owned());
            coeffs.push(
                (0..spec.order(s))
                    .map(|j| {
                        let base = off + m * (1 + j * m);
                        DMatrix::from_column_slice(m, m, beta.rows(base, m * m).as_slice())
                    })
                    .collect(),
            );
        }
        Self::new(spec, intercepts, coeffs, sigma)
    }
}

/// Time-invariant VAR(P) form `A0 Y_n = nu + A1 Y_{n-1} + ... + AP Y_{n-P} + xi_n`
/// of the stacked cycle vector `Y_n = (y_{Sn+1}', ..., y_{Sn+S}')'`.
#[derive(Clone, Debug, PartialEq)]
pub struct StackedVar {
    pub a0: DMatrix<f64>,
    pub lag_coeffs: Vec<DMatrix<f64>>,
    pub intercept: DVector<f64>,
}

impl StackedVar {
    pub fn dim(&self) -> usize {
        self.a0.nrows()
    }

    /// `A0^{-1} A_i` for `i = 1..P`. `A0` is unit lower triangular.
    pub fn reduced_lags(&self) -> Vec<DMatrix<f64>> {
        self.lag_coeffs
            .iter()
            .map(|a| {
                self.a0
                    .solve_lower_triangular(a)
                    .expect("unit lower-triangular A0 is invertible")
            })
            .collect()
    }

    pub fn a0_inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        self.a0
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .expect("unit lower-triangular A0 is invertible")
    }

    /// Companion matrix of the reduced stacked VAR, of size `SmP x SmP`.
    pub fn companion(&self) -> DMatrix<f64> {
        let n = self.dim();
        let lags = self.reduced_lags();
        let p = lags.len();
        let mut c = DMatrix::zeros(n * p, n * p);
        for (i, a) in lags.iter().enumerate() {
            c.view_mut((0, i * n), (n, n)).copy_from(a);
        }
        for i in 1..p {
            c.view_mut((i * n, (i - 1) * n), (n, n)).fill_with_identity();
        }
        c
    }
}

pub fn build_stacked_var(params: &PvarParams) -> StackedVar {
    let spec = params.spec();
    let (s_count, m) = (spec.num_seasons(), spec.num_vars());
    let n = s_count * m;
    let coeff = |season: usize, lag: i64| -> Option<&DMatrix<f64>> {
        if lag <= 0 {
            None
        } else {
            params.coeff(season, lag as usize)
        }
    };

    let mut a0 = DMatrix::identity(n, n);
    for r in 1..=s_count {
        for c in 1..r {
            if let Some(a) = coeff(r, (r - c) as i64) {
                a0.view_mut(((r - 1) * m, (c - 1) * m), (m, m)).copy_from(&(-a));
            }
        }
    }
    let lag_coeffs = (1..=spec.stacked_order())
        .map(|i| {
            let mut ai = DMatrix::zeros(n, n);
            for r in 1..=s_count {
                for c in 1..=s_count {
                    let lag = (s_count * i + r) as i64 - c as i64;
                    if let Some(a) = coeff(r, lag) {
                        ai.view_mut(((r - 1) * m, (c - 1) * m), (m, m)).copy_from(a);
                    }
                }
            }
            ai
        })
        .collect();
    let mut intercept = DVector::zeros(n);
    for s in 1..=s_count {
        intercept.rows_mut((s - 1) * m, m).copy_from(params.intercept(s));
    }
    StackedVar { a0, lag_coeffs, intercept }
}

/// Spectral radius of the stacked companion matrix. The process is
/// periodically stationary iff this is below one.
pub fn stationarity_margin(params: &PvarParams) -> Result<f64> {
    linalg::spectral_radius(&build_stacked_var(params).companion())
}

pub fn is_periodically_stationary(params: &PvarParams, tol: f64) -> Result<bool> {
    Ok(stationarity_margin(params)? < 1.0 - tol)
}

/// Kind of matrices stored in an [`IrfSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IrfKind {
    MaCoefficient,
    ReducedIr,
    StructuralIr,
}

/// Periodic impulse-response (or moving-average) matrices indexed by season
/// `1..=S` and lag `0..=K`.
#[derive(Clone, Debug, PartialEq)]
pub struct IrfSet {
    spec: PvarSpec,
    horizon: usize,
    kind: IrfKind,
    values: Vec<Vec<DMatrix<f64>>>,
}

impl IrfSet {
    pub fn new(spec: PvarSpec, kind: IrfKind, values: Vec<Vec<DMatrix<f64>>>) -> Result<Self> {
        let m = spec.num_vars();
        if values.len() != spec.num_seasons() || values.is_empty() {
            return Err(SpvarError::Dimension("one response sequence per season required".into()));
        }
        let len = values[0].len();
        if len == 0 || values.iter().any(|v| v.len() != len) {
            return Err(SpvarError::Dimension("response sequences must share a horizon".into()));
        }
        if values.iter().flatten().any(|v| v.shape() != (m, m)) {
            return Err(SpvarError::Dimension(format!("responses must be {m}x{m}")));
        }
        Ok(Self { spec, horizon: len - 1, kind, values })
    }

    pub fn spec(&self) -> &PvarSpec {
        &self.spec
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn kind(&self) -> IrfKind {
        self.kind
    }

    /// Matrix for season `s` (1-based) and lag `k`.
    pub fn get(&self, season: usize, lag: usize) -> &DMatrix<f64> {
        &self.values[season - 1][lag]
    }

    pub fn season(&self, season: usize) -> &[DMatrix<f64>] {
        &self.values[season - 1]
    }

    pub fn map<F>(&self, kind: IrfKind, mut f: F) -> IrfSet
    where
        F: FnMut(usize, usize, &DMatrix<f64>) -> DMatrix<f64>,
    {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(si, seq)| seq.iter().enumerate().map(|(k, v)| f(si + 1, k, v)).collect())
            .collect();
        IrfSet { spec: self.spec.clone(), horizon: self.horizon, kind, values }
    }

    /// Entries flattened in (season, lag, column-major entry) order.
    pub fn flatten(&self) -> Vec<f64> {
        self.values
            .iter()
            .flatten()
            .flat_map(|v| v.iter().copied())
            .collect()
    }
}

/// Moving-average coefficients `Phi_k(s)`, `k = 0..=K`.
pub fn ma_coefficients(params: &PvarParams, horizon: usize) -> IrfSet {
    let spec = params.spec();
    let (s_count, m) = (spec.num_seasons(), spec.num_vars());
    let mut values: Vec<Vec<DMatrix<f64>>> = vec![Vec::with_capacity(horizon + 1); s_count];
    for seq in values.iter_mut() {
        seq.push(DMatrix::identity(m, m));
    }
    for k in 1..=horizon {
        for s in 1..=s_count {
            let mut phi = DMatrix::zeros(m, m);
            for j in 1..=k.min(spec.order(s)) {
                let a = params.coeff(s, j).expect("lag within order");
                let prev = wrap_season(s as i64 - j as i64, s_count);
                phi += a * &values[prev - 1][k - j];
            }
            values[s - 1].push(phi);
        }
    }
    IrfSet { spec: spec.clone(), horizon, kind: IrfKind::MaCoefficient, values }
}

/// Reduced-form impulse responses `Phi^IR_k(s) = Phi_k(s + k)`.
pub fn impulse_responses(params: &PvarParams, horizon: usize) -> IrfSet {
    let ma = ma_coefficients(params, horizon);
    let s_count = params.spec().num_seasons();
    let values = (1..=s_count)
        .map(|s| {
            (0..=horizon)
                .map(|k| ma.get(wrap_season((s + k) as i64, s_count), k).clone())
                .collect()
        })
        .collect();
    IrfSet { spec: params.spec().clone(), horizon, kind: IrfKind::ReducedIr, values }
}

/// Assembles the `Sm x Sm` stacked impulse-response matrix at cycle lag `h`:
/// block `(r, c)` holds the response at lag `S h + r - c` to a shock in season `c`.
pub fn stack_irf(irf: &IrfSet, h: usize) -> Result<DMatrix<f64>> {
    let spec = irf.spec();
    let (s_count, m) = (spec.num_seasons(), spec.num_vars());
    let needed = s_count * h + s_count - 1;
    if irf.horizon() < needed {
        return Err(SpvarError::Precondition(format!(
            "stacking at h = {h} needs horizon {needed}, have {}",
            irf.horizon()
        )));
    }
    let mut out = DMatrix::zeros(s_count * m, s_count * m);
    for r in 1..=s_count {
        for c in 1..=s_count {
            let lag = (s_count * h + r) as i64 - c as i64;
            if lag >= 0 {
                out.view_mut(((r - 1) * m, (c - 1) * m), (m, m))
                    .copy_from(irf.get(c, lag as usize));
            }
        }
    }
    Ok(out)
}

/// Stacked reduced-form impulse responses `Pi^IR_h`.
pub fn stack_var_irf(irf: &IrfSet, h: usize) -> Result<DMatrix<f64>> {
    stack_irf(irf, h)
}

/// Long-run cumulative responses `C(s) = sum_k Phi^IR_k(s)`, from the stacked
/// closed form `(A0 - sum_i A_i)^{-1}`.
pub fn longrun_cumulative(params: &PvarParams) -> Result<Vec<DMatrix<f64>>> {
    longrun_cumulative_with_tol(params, DEFAULT_STATIONARITY_TOL)
}

pub fn longrun_cumulative_with_tol(params: &PvarParams, tol: f64) -> Result<Vec<DMatrix<f64>>> {
    let radius = stationarity_margin(params)?;
    if radius >= 1.0 - tol {
        return Err(SpvarError::NotStationary { radius });
    }
    let stacked = build_stacked_var(params);
    let mut lhs = stacked.a0.clone();
    for a in &stacked.lag_coeffs {
        lhs -= a;
    }
    let n = lhs.nrows();
    let total = lhs
        .lu()
        .solve(&DMatrix::identity(n, n))
        .ok_or_else(|| SpvarError::Numerical("long-run matrix is singular".into()))?;
    let (s_count, m) = (params.spec().num_seasons(), params.spec().num_vars());
    Ok((1..=s_count)
        .map(|c| {
            let mut acc = DMatrix::zeros(m, m);
            for r in 1..=s_count {
                acc += total.view(((r - 1) * m, (c - 1) * m), (m, m));
            }
            acc
        })
        .collect())
}

/// Runs the model recursion forward for `innovations.nrows()` periods, starting
/// after the presample rows `y_{s'}, ..., y_0`. `floors[i]`, when set, clips
/// variable `i` from below before it feeds later lags.
pub fn run_recursion(
    params: &PvarParams,
    presample: &DMatrix<f64>,
    innovations: &DMatrix<f64>,
    floors: &[Option<f64>],
) -> Result<DMatrix<f64>> {
    let spec = params.spec();
    let m = spec.num_vars();
    if innovations.ncols() != m || presample.ncols() != m {
        return Err(SpvarError::Dimension(format!("paths must have {m} columns")));
    }
    if presample.nrows() < spec.presample_depth() {
        return Err(SpvarError::Precondition(format!(
            "presample has {} rows, the recursion needs {}",
            presample.nrows(),
            spec.presample_depth()
        )));
    }
    if !floors.is_empty() && floors.len() != m {
        return Err(SpvarError::Dimension("one clip rule per variable required".into()));
    }
    let pre = presample.nrows();
    let t_len = innovations.nrows();
    let mut hist = DMatrix::zeros(pre + t_len, m);
    hist.rows_mut(0, pre).copy_from(presample);
    for t in 1..=t_len {
        let s = spec.season_of(t as i64);
        let row = pre + t - 1;
        let mut y = params.intercept(s) + innovations.row(t - 1).transpose();
        for (j, a) in params.coeffs(s).iter().enumerate() {
            y += a * hist.row(row - j - 1).transpose();
        }
        for (i, floor) in floors.iter().enumerate() {
            if let Some(lb) = floor {
                if y[i] < *lb {
                    y[i] = *lb;
                }
            }
        }
        hist.set_row(row, &y.transpose());
    }
    Ok(hist.rows(pre, t_len).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_params(a: &[f64]) -> PvarParams {
        let spec = PvarSpec::uniform(a.len(), 1, 1).unwrap();
        let coeffs = a.iter().map(|&x| vec![DMatrix::from_element(1, 1, x)]).collect();
        PvarParams::new(
            spec,
            vec![DVector::zeros(1); a.len()],
            coeffs,
            vec![DMatrix::identity(1, 1); a.len()],
        )
        .unwrap()
    }

    #[test]
    fn wrap_season_examples() {
        assert_eq!(wrap_season(13, 12), 1);
        assert_eq!(wrap_season(0, 12), 12);
        assert_eq!(wrap_season(-3, 12), 9);
        assert_eq!(wrap_season(12, 12), 12);
        assert_eq!(wrap_season(5, 1), 1);
    }

    #[test]
    fn stacked_form_two_seasons() {
        let st = build_stacked_var(&scalar_params(&[0.3, 0.7]));
        assert_eq!(st.a0, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -0.7, 1.0]));
        assert_eq!(st.lag_coeffs.len(), 1);
        assert_eq!(st.lag_coeffs[0], DMatrix::from_row_slice(2, 2, &[0.0, 0.3, 0.0, 0.0]));
    }

    #[test]
    fn stacked_form_single_season_is_plain_var() {
        let spec = PvarSpec::uniform(1, 2, 2).unwrap();
        let a1 = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.2]);
        let a2 = DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.3, -0.1]);
        let p = PvarParams::new(
            spec,
            vec![DVector::from_vec(vec![1.0, 2.0])],
            vec![vec![a1.clone(), a2.clone()]],
            vec![DMatrix::identity(2, 2)],
        )
        .unwrap();
        let st = build_stacked_var(&p);
        assert_eq!(st.a0, DMatrix::identity(2, 2));
        assert_eq!(st.lag_coeffs, vec![a1, a2]);
    }

    #[test]
    fn stacked_form_zero_coefficients() {
        let st = build_stacked_var(&scalar_params(&[0.0, 0.0, 0.0]));
        assert_eq!(st.a0, DMatrix::identity(3, 3));
        assert!(st.lag_coeffs.iter().all(|a| a.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn stationarity_examples() {
        assert!((stationarity_margin(&scalar_params(&[0.8, 1.2])).unwrap() - 0.96).abs() < 1e-12);
        assert_eq!(stationarity_margin(&scalar_params(&[0.0, 0.0])).unwrap(), 0.0);
        let unit = stationarity_margin(&scalar_params(&[1.0, 1.0])).unwrap();
        assert!((unit - 1.0).abs() < 1e-12);
        assert!(!is_periodically_stationary(&scalar_params(&[1.0, 1.0]), DEFAULT_STATIONARITY_TOL).unwrap());
    }

    #[test]
    fn ma_recursion_by_hand() {
        let ma = ma_coefficients(&scalar_params(&[0.5, 0.25]), 3);
        assert_eq!(ma.get(1, 0)[(0, 0)], 1.0);
        assert_eq!(ma.get(1, 1)[(0, 0)], 0.5);
        assert_eq!(ma.get(2, 1)[(0, 0)], 0.25);
        assert_eq!(ma.get(1, 2)[(0, 0)], 0.125);
        let zero = ma_coefficients(&scalar_params(&[0.0, 0.0]), 4);
        assert!((1..=4).all(|k| zero.get(1, k)[(0, 0)] == 0.0 && zero.get(2, k)[(0, 0)] == 0.0));
    }

    #[test]
    fn impulse_response_shift() {
        let ir = impulse_responses(&scalar_params(&[0.5, 0.25]), 3);
        assert_eq!(ir.get(1, 0)[(0, 0)], 1.0);
        assert_eq!(ir.get(1, 1)[(0, 0)], 0.25);
        assert_eq!(ir.get(2, 1)[(0, 0)], 0.5);
        let var = scalar_params(&[0.6]);
        let (ma, ir) = (ma_coefficients(&var, 5), impulse_responses(&var, 5));
        assert!((0..=5).all(|k| ma.get(1, k) == ir.get(1, k)));
    }

    #[test]
    fn stacking_examples() {
        let ir = impulse_responses(&scalar_params(&[0.5, 0.25]), 3);
        assert_eq!(stack_var_irf(&ir, 0).unwrap(), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.25, 1.0]));
        let zero = impulse_responses(&scalar_params(&[0.0, 0.0]), 3);
        assert_eq!(stack_var_irf(&zero, 0).unwrap(), DMatrix::identity(2, 2));
        assert_eq!(stack_var_irf(&zero, 1).unwrap(), DMatrix::zeros(2, 2));
        assert!(matches!(stack_var_irf(&zero, 2), Err(SpvarError::Precondition(_))));
    }

    #[test]
    fn longrun_examples() {
        let c = longrun_cumulative(&scalar_params(&[0.5, 0.25])).unwrap();
        assert!((c[0][(0, 0)] - 1.25 / 0.875).abs() < 1e-14);
        let zero = longrun_cumulative(&scalar_params(&[0.0, 0.0])).unwrap();
        assert_eq!(zero[0], DMatrix::identity(1, 1));
        assert!(matches!(
            longrun_cumulative(&scalar_params(&[1.0, 1.0])),
            Err(SpvarError::NotStationary { .. })
        ));
    }

    #[test]
    fn beta_round_trip() {
        let spec = PvarSpec::new(2, 2, vec![2, 1], vec!["a".into(), "b".into()]).unwrap();
        let beta = DVector::from_iterator(spec.coeff_dim(), (0..spec.coeff_dim()).map(|i| i as f64 * 0.1));
        let p = PvarParams::from_beta(spec, &beta, vec![DMatrix::identity(2, 2); 2]).unwrap();
        assert_eq!(p.to_beta(), beta);
        // nu(1) then A_1(1) column-major
        assert_eq!(p.intercept(1).as_slice(), &[0.0, 0.1]);
        assert_eq!(p.coeff(1, 1).unwrap()[(1, 0)], 0.30000000000000004);
    }

    #[test]
    fn recursion_by_hand_and_clipping() {
        let p = scalar_params(&[0.5]);
        let y = run_recursion(&p, &DMatrix::from_element(1, 1, 1.0), &DMatrix::zeros(2, 1), &[]).unwrap();
        assert_eq!(y.as_slice(), &[0.5, 0.25]);
        let y = run_recursion(
            &p,
            &DMatrix::from_element(1, 1, 0.0),
            &DMatrix::from_column_slice(2, 1, &[-0.3, 1.0]),
            &[Some(0.0)],
        )
        .unwrap();
        assert_eq!(y.as_slice(), &[0.0, 1.0]);
    }
}
