//! Structural impact matrices `H0(s)` with `H0(s) H0(s)' = Sigma(s)`.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpvarError};
use crate::linalg;
use crate::model::{longrun_cumulative, stack_irf, IrfKind, IrfSet, PvarParams};

/// Largest admissible restriction violation after identification.
pub const RESTRICTION_TOL: f64 = 1e-8;
/// Smallest admissible impact used as a normalization divisor.
pub const MIN_NORMALIZER: f64 = 1e-12;

const STARTS: usize = 8;
const MAX_LM_ITER: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentKind {
    Cholesky,
    ShortLong,
}

/// Rescales shock `shock` so that its impact on `variable` equals `size`
/// (indices are 1-based).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpactNormalization {
    pub variable: usize,
    pub shock: usize,
    pub size: f64,
}

/// Zero restrictions on `H0(s)` (short run) and `C(s) H0(s)` (long run),
/// given as 1-based `(row, column)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentScheme {
    pub kind: IdentKind,
    #[serde(default)]
    pub short_zeros: Vec<(usize, usize)>,
    #[serde(default)]
    pub long_zeros: Vec<(usize, usize)>,
    #[serde(default)]
    pub normalization: Option<ImpactNormalization>,
}

impl IdentScheme {
    pub fn cholesky() -> Self {
        Self { kind: IdentKind::Cholesky, short_zeros: Vec::new(), long_zeros: Vec::new(), normalization: None }
    }

    pub fn short_long(short_zeros: Vec<(usize, usize)>, long_zeros: Vec<(usize, usize)>) -> Self {
        Self { kind: IdentKind::ShortLong, short_zeros, long_zeros, normalization: None }
    }

    pub fn with_normalization(mut self, variable: usize, shock: usize, size: f64) -> Self {
        self.normalization = Some(ImpactNormalization { variable, shock, size });
        self
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        let in_range = |&(i, j): &(usize, usize)| (1..=m).contains(&i) && (1..=m).contains(&j);
        for (name, set) in [("short", &self.short_zeros), ("long", &self.long_zeros)] {
            if !set.iter().all(in_range) {
                return Err(SpvarError::InvalidSpec(format!("{name}-run zero outside 1..{m}")));
            }
            let mut sorted = set.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != set.len() {
                return Err(SpvarError::InvalidSpec(format!("duplicate {name}-run zero")));
            }
        }
        if self.kind == IdentKind::ShortLong {
            let count = self.short_zeros.len() + self.long_zeros.len();
            if count != m * (m - 1) / 2 {
                return Err(SpvarError::InvalidSpec(format!(
                    "exact identification with m = {m} needs {} zero restrictions, got {count}",
                    m * (m - 1) / 2
                )));
            }
        } else if !self.short_zeros.is_empty() || !self.long_zeros.is_empty() {
            return Err(SpvarError::InvalidSpec("cholesky scheme takes no zero lists".into()));
        }
        if let Some(n) = &self.normalization {
            if !(1..=m).contains(&n.variable) || !(1..=m).contains(&n.shock) {
                return Err(SpvarError::InvalidSpec("normalization index outside 1..m".into()));
            }
            if !n.size.is_finite() {
                return Err(SpvarError::InvalidSpec("normalization size must be finite".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StructuralFit {
    pub h0: Vec<DMatrix<f64>>,
    /// `D(s) = C(s) H0(s)` when long-run restrictions were used.
    pub longrun: Option<Vec<DMatrix<f64>>>,
    pub scheme: IdentScheme,
}

impl StructuralFit {
    /// Structural shocks `w_t = H0(s)^{-1} e_t` for residual rows starting in season 1.
    pub fn shocks(&self, residuals: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let s_count = self.h0.len();
        let inverses = self
            .h0
            .iter()
            .enumerate()
            .map(|(i, h)| {
                h.clone()
                    .try_inverse()
                    .ok_or(SpvarError::NotPositiveDefinite { season: i + 1 })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = DMatrix::zeros(residuals.nrows(), residuals.ncols());
        for t in 0..residuals.nrows() {
            let w = &inverses[t % s_count] * residuals.row(t).transpose();
            out.set_row(t, &w.transpose());
        }
        Ok(out)
    }
}

/// Lower-triangular Cholesky factors with positive diagonal. A covariance that
/// is exactly zero yields a zero factor.
pub fn identify_cholesky(sigma: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
    sigma
        .iter()
        .enumerate()
        .map(|(i, s)| cholesky_factor(s, i + 1))
        .collect()
}

fn cholesky_factor(sigma: &DMatrix<f64>, season: usize) -> Result<DMatrix<f64>> {
    if sigma.iter().all(|&v| v == 0.0) {
        return Ok(sigma.clone());
    }
    let (min, max) = linalg::sym_eigen_range(sigma).ok_or(SpvarError::NotPositiveDefinite { season })?;
    if !(max > 0.0) || min <= 1e-12 * max {
        return Err(SpvarError::NotPositiveDefinite { season });
    }
    Cholesky::new(linalg::symmetrized(sigma))
        .map(|c| c.l())
        .ok_or(SpvarError::NotPositiveDefinite { season })
}

/// Identifies `H0(s)` for every season under `scheme`.
pub fn identify(params: &PvarParams, scheme: &IdentScheme) -> Result<StructuralFit> {
    scheme.validate(params.spec().num_vars())?;
    match scheme.kind {
        IdentKind::Cholesky => Ok(StructuralFit {
            h0: identify_cholesky(params.sigmas())?,
            longrun: None,
            scheme: scheme.clone(),
        }),
        IdentKind::ShortLong => identify_short_long(params, scheme),
    }
}

/// `H0(s) = chol(Sigma(s)) Q(s)` with `Q(s)` orthogonal such that the short-run
/// zeros hold on `H0(s)` and the long-run zeros on `C(s) H0(s)`.
pub fn identify_short_long(params: &PvarParams, scheme: &IdentScheme) -> Result<StructuralFit> {
    let m = params.spec().num_vars();
    scheme.validate(m)?;
    let longrun = if scheme.long_zeros.is_empty() {
        None
    } else {
        Some(longrun_cumulative(params)?)
    };
    let mut h0 = Vec::with_capacity(params.spec().num_seasons());
    for (idx, sigma) in params.sigmas().iter().enumerate() {
        let season = idx + 1;
        let l = cholesky_factor(sigma, season)?;
        let cl = longrun.as_ref().map(|c| &c[idx] * &l);
        let constraints = constraint_rows(&l, cl.as_ref(), scheme, m);
        let q = solve_rotation(&constraints, m, season)?;
        h0.push(sign_normalize(&l * q));
    }
    let longrun = longrun.map(|c| c.iter().zip(&h0).map(|(c, h)| c * h).collect());
    Ok(StructuralFit { h0, longrun, scheme: scheme.clone() })
}

/// Per column `j`, the rows `a` with the requirement `a' q_j = 0`.
fn constraint_rows(
    l: &DMatrix<f64>,
    cl: Option<&DMatrix<f64>>,
    scheme: &IdentScheme,
    m: usize,
) -> Vec<Vec<DVector<f64>>> {
    let mut cols = vec![Vec::new(); m];
    for &(i, j) in &scheme.short_zeros {
        cols[j - 1].push(l.row(i - 1).transpose());
    }
    if let Some(cl) = cl {
        for &(i, j) in &scheme.long_zeros {
            cols[j - 1].push(cl.row(i - 1).transpose());
        }
    }
    cols
}

fn violation(constraints: &[Vec<DVector<f64>>], q: &DMatrix<f64>) -> f64 {
    constraints
        .iter()
        .enumerate()
        .flat_map(|(j, rows)| rows.iter().map(move |a| (a.dot(&q.column(j)) / a.norm().max(1.0)).abs()))
        .fold(0.0, f64::max)
}

fn solve_rotation(constraints: &[Vec<DVector<f64>>], m: usize, season: usize) -> Result<DMatrix<f64>> {
    if constraints.iter().all(|c| c.iter().all(|a| a.iter().all(|&v| v == 0.0))) {
        return Ok(DMatrix::identity(m, m));
    }
    if let Some(q) = staircase(constraints, m) {
        if violation(constraints, &q) <= RESTRICTION_TOL {
            return Ok(q);
        }
    }
    let mut best: Option<(f64, DMatrix<f64>)> = None;
    for start in 0..STARTS {
        let q = levenberg_marquardt(constraints, m, start);
        let v = violation(constraints, &q);
        if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
            best = Some((v, q));
        }
        if v < 1e-12 {
            break;
        }
    }
    let (residual, q) = best.expect("at least one start");
    if residual > RESTRICTION_TOL {
        return Err(SpvarError::Identification { season, residual });
    }
    Ok(q)
}

/// Column-by-column construction when the restriction counts form a staircase:
/// the most restricted column is fixed first and later columns are orthogonal
/// to the earlier ones.
fn staircase(constraints: &[Vec<DVector<f64>>], m: usize) -> Option<DMatrix<f64>> {
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| constraints[b].len().cmp(&constraints[a].len()).then(a.cmp(&b)));
    if order.iter().enumerate().any(|(k, &j)| constraints[j].len() + k > m - 1) {
        return None;
    }
    let mut q = DMatrix::zeros(m, m);
    let mut chosen: Vec<DVector<f64>> = Vec::with_capacity(m);
    for &j in &order {
        let rows: Vec<DVector<f64>> = constraints[j]
            .iter()
            .map(|a| a / a.norm().max(f64::MIN_POSITIVE))
            .chain(chosen.iter().cloned())
            .collect();
        let v = if rows.is_empty() {
            let mut e = DVector::zeros(m);
            e[j] = 1.0;
            e
        } else {
            let mat = DMatrix::from_fn(rows.len(), m, |r, c| rows[r][c]);
            let (v, gap) = linalg::null_vector(&mat);
            if gap < 1e-10 && rows.len() + 1 == m {
                return None;
            }
            v
        };
        q.set_column(j, &v);
        chosen.push(v);
    }
    Some(q)
}

/// Orthogonal matrix as a product of Givens rotations `G(i, k, theta)`, `i < k`.
fn givens_product(theta: &[f64], m: usize) -> DMatrix<f64> {
    let mut q = DMatrix::identity(m, m);
    let mut idx = 0;
    for i in 0..m {
        for k in (i + 1)..m {
            let (sn, cs) = theta[idx].sin_cos();
            idx += 1;
            for r in 0..m {
                let (a, b) = (q[(r, i)], q[(r, k)]);
                q[(r, i)] = cs * a - sn * b;
                q[(r, k)] = sn * a + cs * b;
            }
        }
    }
    q
}

fn residual_vector(constraints: &[Vec<DVector<f64>>], theta: &[f64], m: usize) -> DVector<f64> {
    let q = givens_product(theta, m);
    let vals: Vec<f64> = constraints
        .iter()
        .enumerate()
        .flat_map(|(j, rows)| {
            let col = q.column(j).into_owned();
            rows.iter().map(move |a| a.dot(&col) / a.norm().max(1.0))
        })
        .collect();
    DVector::from_vec(vals)
}

fn levenberg_marquardt(constraints: &[Vec<DVector<f64>>], m: usize, start: usize) -> DMatrix<f64> {
    let n = m * (m - 1) / 2;
    let mut theta: Vec<f64> = (0..n)
        .map(|k| {
            let u = (start as f64 * 0.618_033_988_749_895 + k as f64 * 0.414_213_562_373_095).fract();
            if start == 0 { 0.0 } else { (2.0 * u - 1.0) * std::f64::consts::PI }
        })
        .collect();
    let mut f = residual_vector(constraints, &theta, m);
    let mut cost = f.norm_squared();
    let mut lambda = 1e-3;
    for _ in 0..MAX_LM_ITER {
        if cost < 1e-32 {
            break;
        }
        let mut jac = DMatrix::zeros(f.len(), n);
        for p in 0..n {
            let h = 1e-7;
            let mut tp = theta.clone();
            tp[p] += h;
            let mut tm = theta.clone();
            tm[p] -= h;
            let d = (residual_vector(constraints, &tp, m) - residual_vector(constraints, &tm, m)) / (2.0 * h);
            jac.set_column(p, &d);
        }
        let jtj = jac.tr_mul(&jac);
        let jtf = jac.tr_mul(&f);
        let mut improved = false;
        for _ in 0..20 {
            let mut a = jtj.clone();
            for d in 0..n {
                a[(d, d)] += lambda * (1.0 + jtj[(d, d)]);
            }
            let Some(step) = a.lu().solve(&(-&jtf)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + s).collect();
            let ft = residual_vector(constraints, &trial, m);
            let ct = ft.norm_squared();
            if ct < cost {
                theta = trial;
                f = ft;
                cost = ct;
                lambda = (lambda / 10.0).max(1e-15);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    givens_product(&theta, m)
}

/// Flips columns so that the diagonal is nonnegative; a column with a
/// (numerically) zero diagonal entry is oriented by its largest entry.
fn sign_normalize(mut h: DMatrix<f64>) -> DMatrix<f64> {
    let scale = linalg::max_abs(&h);
    for j in 0..h.ncols() {
        let d = h[(j, j)];
        let pivot = if d.abs() > 1e-12 * scale {
            d
        } else {
            let col = h.column(j);
            col[col.iamax()]
        };
        if pivot < 0.0 {
            h.column_mut(j).neg_mut();
        }
    }
    h
}

/// `Theta_k(s) = Phi^IR_k(s) H0(s)`, optionally rescaled per season so that
/// the normalized shock has the requested impact.
pub fn structural_irf(irf: &IrfSet, fit: &StructuralFit) -> Result<IrfSet> {
    if irf.kind() != IrfKind::ReducedIr {
        return Err(SpvarError::Precondition("structural responses need reduced-form responses".into()));
    }
    let spec = irf.spec();
    if fit.h0.len() != spec.num_seasons() || fit.h0.iter().any(|h| h.nrows() != spec.num_vars()) {
        return Err(SpvarError::Dimension("impact matrices do not match the model".into()));
    }
    let mut h0 = fit.h0.clone();
    if let Some(n) = &fit.scheme.normalization {
        for (idx, h) in h0.iter_mut().enumerate() {
            let divisor = h[(n.variable - 1, n.shock - 1)];
            if divisor.abs() < MIN_NORMALIZER {
                return Err(SpvarError::NormalizationTooSmall { season: idx + 1, value: divisor });
            }
            let factor = n.size / divisor;
            h.column_mut(n.shock - 1).scale_mut(factor);
            h[(n.variable - 1, n.shock - 1)] = n.size;
        }
    }
    Ok(irf.map(IrfKind::StructuralIr, |s, _, phi| phi * &h0[s - 1]))
}

/// Stacked structural responses `Psi_h = Pi_h blockdiag(H0(1), ..., H0(S))`.
pub fn stack_structural_irf(irf: &IrfSet, h: usize) -> Result<DMatrix<f64>> {
    if irf.kind() != IrfKind::StructuralIr {
        return Err(SpvarError::Precondition("expected structural responses".into()));
    }
    stack_irf(irf, h)
}
