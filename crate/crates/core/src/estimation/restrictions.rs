//! Linear restrictions `beta = R gamma + r` on the canonical coefficient vector.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpvarError};
use crate::model::PvarSpec;

/// Per-entry restriction code.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryCode {
    /// A separate free parameter in every season.
    Seasonal,
    /// One free parameter shared by all seasons.
    Constant,
    Zero,
    Fixed(f64),
}

/// Code grid covering the intercept vector and every lag matrix.
///
/// `lags[j][i][c]` governs entry `(i, c)` of `A_{j+1}(s)` in every season
/// whose order reaches lag `j + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestrictionPattern {
    pub intercept: Vec<EntryCode>,
    pub lags: Vec<Vec<Vec<EntryCode>>>,
}

/// Which reading of the restricted monthly IP/INF/FFR model to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeersmanVariant {
    /// The displayed grid: first column of `A_1..A_4` seasonal in all three
    /// equations, seasonal intercepts for IP and INF.
    AsDisplayed,
    /// Additionally keeps every coefficient of the FFR equation constant.
    NonSeasonalFfr,
}

impl RestrictionPattern {
    pub fn uniform(spec: &PvarSpec, code: EntryCode) -> Self {
        let m = spec.num_vars();
        Self {
            intercept: vec![code; m],
            lags: vec![vec![vec![code; m]; m]; spec.max_order()],
        }
    }

    /// Every coefficient free in every season.
    pub fn unrestricted(spec: &PvarSpec) -> Self {
        Self::uniform(spec, EntryCode::Seasonal)
    }

    /// Every coefficient shared across seasons: the model collapses to a VAR.
    pub fn var_collapse(spec: &PvarSpec) -> Self {
        Self::uniform(spec, EntryCode::Constant)
    }

    /// Restricted three-variable (IP, INF, FFR) monthly model: seasonal
    /// responses to lagged IP up to lag 4, constant coefficients otherwise,
    /// seasonal intercepts for IP and INF and a constant FFR intercept.
    pub fn peersman(spec: &PvarSpec, variant: PeersmanVariant) -> Result<Self> {
        if spec.num_vars() != 3 {
            return Err(SpvarError::InvalidSpec(
                "the IP/INF/FFR restriction preset needs exactly 3 variables".into(),
            ));
        }
        let mut pat = Self::var_collapse(spec);
        pat.intercept = vec![EntryCode::Seasonal, EntryCode::Seasonal, EntryCode::Constant];
        for lag in pat.lags.iter_mut().take(4) {
            for (row, codes) in lag.iter_mut().enumerate() {
                if variant == PeersmanVariant::AsDisplayed || row != 2 {
                    codes[0] = EntryCode::Seasonal;
                }
            }
        }
        Ok(pat)
    }

    fn check(&self, spec: &PvarSpec) -> Result<()> {
        let m = spec.num_vars();
        if self.intercept.len() != m {
            return Err(SpvarError::InvalidSpec(format!(
                "intercept pattern has {} entries, expected {m}",
                self.intercept.len()
            )));
        }
        if self.lags.len() != spec.max_order() {
            return Err(SpvarError::InvalidSpec(format!(
                "pattern covers {} lags, the model has {}",
                self.lags.len(),
                spec.max_order()
            )));
        }
        for (j, lag) in self.lags.iter().enumerate() {
            if lag.len() != m || lag.iter().any(|r| r.len() != m) {
                return Err(SpvarError::InvalidSpec(format!("pattern for lag {} must be {m}x{m}", j + 1)));
            }
        }
        Ok(())
    }
}

/// The map `beta = R gamma + r` with `R` of full column rank.
#[derive(Clone, Debug, PartialEq)]
pub struct RestrictionSet {
    r_matrix: DMatrix<f64>,
    r_vector: DVector<f64>,
    provenance: String,
}

impl RestrictionSet {
    pub fn new(r_matrix: DMatrix<f64>, r_vector: DVector<f64>, provenance: impl Into<String>) -> Result<Self> {
        let (d, free) = r_matrix.shape();
        if r_vector.len() != d {
            return Err(SpvarError::Dimension(format!(
                "restriction vector has length {}, matrix has {d} rows",
                r_vector.len()
            )));
        }
        if free > d {
            return Err(SpvarError::InvalidSpec(format!("{free} free parameters exceed dimension {d}")));
        }
        if free > 0 {
            let sv = r_matrix.clone().svd(false, false).singular_values;
            let max = sv.max();
            let rank = sv.iter().filter(|&&x| x > 1e-10 * max).count();
            if rank < free {
                return Err(SpvarError::InvalidSpec(format!(
                    "restriction matrix has rank {rank} < {free} columns"
                )));
            }
        }
        Ok(Self { r_matrix, r_vector, provenance: provenance.into() })
    }

    /// No restrictions: `R = I_d`, `r = 0`.
    pub fn identity(spec: &PvarSpec) -> Self {
        let d = spec.coeff_dim();
        Self {
            r_matrix: DMatrix::identity(d, d),
            r_vector: DVector::zeros(d),
            provenance: "unrestricted".into(),
        }
    }

    pub fn r_matrix(&self) -> &DMatrix<f64> {
        &self.r_matrix
    }

    pub fn r_vector(&self) -> &DVector<f64> {
        &self.r_vector
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Number of free parameters `M`.
    pub fn num_free(&self) -> usize {
        self.r_matrix.ncols()
    }

    pub fn dim(&self) -> usize {
        self.r_matrix.nrows()
    }

    pub fn beta(&self, gamma: &DVector<f64>) -> DVector<f64> {
        &self.r_matrix * gamma + &self.r_vector
    }

    /// Nonzero entries of each row of `R` as `(column, value)` pairs.
    pub(crate) fn sparse_rows(&self) -> Vec<Vec<(usize, f64)>> {
        (0..self.dim())
            .map(|row| {
                self.r_matrix
                    .row(row)
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(c, &v)| (c, v))
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum EntryKey {
    Intercept(usize),
    Lag { lag: usize, row: usize, col: usize },
}

/// Compiles a code grid into `(R, r)` in the canonical coordinate order.
/// Free parameters are numbered in order of first appearance.
pub fn build_restrictions(spec: &PvarSpec, pattern: &RestrictionPattern) -> Result<RestrictionSet> {
    pattern.check(spec)?;
    let m = spec.num_vars();
    let d = spec.coeff_dim();
    let mut r_vector = DVector::zeros(d);
    let mut column_of_row: Vec<Option<usize>> = vec![None; d];
    let mut shared: HashMap<EntryKey, usize> = HashMap::new();
    let mut next = 0usize;

    for s in 1..=spec.num_seasons() {
        let off = spec.beta_offset(s);
        let mut coords: Vec<(usize, EntryKey, EntryCode)> = Vec::new();
        for i in 0..m {
            coords.push((off + i, EntryKey::Intercept(i), pattern.intercept[i]));
        }
        for lag in 1..=spec.order(s) {
            for col in 0..m {
                for row in 0..m {
                    let idx = off + m * (1 + (lag - 1) * m + col) + row;
                    coords.push((idx, EntryKey::Lag { lag, row, col }, pattern.lags[lag - 1][row][col]));
                }
            }
        }
        for (idx, key, code) in coords {
            match code {
                EntryCode::Seasonal => {
                    column_of_row[idx] = Some(next);
                    next += 1;
                }
                EntryCode::Constant => {
                    let c = *shared.entry(key).or_insert_with(|| {
                        next += 1;
                        next - 1
                    });
                    column_of_row[idx] = Some(c);
                }
                EntryCode::Zero => {}
                EntryCode::Fixed(v) => r_vector[idx] = v,
            }
        }
    }
    let mut r_matrix = DMatrix::zeros(d, next);
    for (row, col) in column_of_row.iter().enumerate() {
        if let Some(c) = col {
            r_matrix[(row, *c)] = 1.0;
        }
    }
    Ok(RestrictionSet { r_matrix, r_vector, provenance: describe(spec, pattern) })
}

fn describe(spec: &PvarSpec, pattern: &RestrictionPattern) -> String {
    let count = |c: fn(&EntryCode) -> bool| {
        pattern.intercept.iter().filter(|x| c(x)).count()
            + pattern.lags.iter().flatten().flatten().filter(|x| c(x)).count()
    };
    format!(
        "code grid S={} m={} p={:?}: {} seasonal, {} constant, {} zero, {} fixed entries",
        spec.num_seasons(),
        spec.num_vars(),
        spec.orders(),
        count(|c| matches!(c, EntryCode::Seasonal)),
        count(|c| matches!(c, EntryCode::Constant)),
        count(|c| matches!(c, EntryCode::Zero)),
        count(|c| matches!(c, EntryCode::Fixed(_))),
    )
}
