//! Synthetic PVAR data with GARCH(1,1) structural shocks and Monte Carlo
//! coverage of bootstrap bands for structural impulse responses.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_engine, irf_bands, point_estimate, sub_seed, BootstrapConfig};
use crate::error::{Result, SpvarError};
use crate::estimation::{design_from_parts, FitOptions, RestrictionSet, TimeSeriesPanel};
use crate::identification::{identify, structural_irf, IdentScheme};
use crate::model::{build_stacked_var, impulse_responses, run_recursion, IrfSet, PvarParams};

/// Discarded warm-up steps for GARCH and PVAR paths.
pub const BURN_IN: usize = 500;

/// GARCH(1,1) with unit unconditional variance: `a0 = 1 - a1 - b1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GarchSpec {
    pub a1: f64,
    pub b1: f64,
}

impl GarchSpec {
    pub const G0: GarchSpec = GarchSpec { a1: 0.0, b1: 0.0 };
    pub const G1: GarchSpec = GarchSpec { a1: 0.05, b1: 0.9 };
    pub const G2: GarchSpec = GarchSpec { a1: 0.3, b1: 0.6 };
    pub const G3: GarchSpec = GarchSpec { a1: 0.5, b1: 0.0 };

    pub fn new(a1: f64, b1: f64) -> Result<Self> {
        let g = Self { a1, b1 };
        g.validate()?;
        Ok(g)
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "G0" | "g0" => Some(Self::G0),
            "G1" | "g1" => Some(Self::G1),
            "G2" | "g2" => Some(Self::G2),
            "G3" | "g3" => Some(Self::G3),
            _ => None,
        }
    }

    /// Preset name when the parameters match one, otherwise `a1=..,b1=..`.
    pub fn label(&self) -> String {
        [("G0", Self::G0), ("G1", Self::G1), ("G2", Self::G2), ("G3", Self::G3)]
            .iter()
            .find(|(_, g)| g == self)
            .map(|(n, _)| n.to_string())
            .unwrap_or_else(|| format!("a1={},b1={}", self.a1, self.b1))
    }

    pub fn a0(&self) -> f64 {
        1.0 - self.a1 - self.b1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a1 >= 0.0 && self.b1 >= 0.0) {
            return Err(SpvarError::InvalidSpec("GARCH coefficients must be nonnegative".into()));
        }
        if self.a1 + self.b1 >= 1.0 {
            return Err(SpvarError::InvalidSpec(format!(
                "GARCH a1 + b1 = {} must be below 1",
                self.a1 + self.b1
            )));
        }
        Ok(())
    }
}

/// `T x m` independent GARCH(1,1) shocks `w = sigma_t v_t`, `v_t ~ N(0, 1)`,
/// started at `sigma^2 = 1`, `w = 0` after a burn-in of [`BURN_IN`] steps.
pub fn garch_shocks<R: Rng + ?Sized>(spec: &GarchSpec, t_len: usize, m: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let a0 = spec.a0();
    let mut var = vec![1.0; m];
    let mut prev = vec![0.0; m];
    let mut out = DMatrix::zeros(t_len, m);
    for t in 0..BURN_IN + t_len {
        for i in 0..m {
            let v: f64 = rng.sample(StandardNormal);
            var[i] = a0 + spec.a1 * prev[i] * prev[i] + spec.b1 * var[i];
            let w = var[i].sqrt() * v;
            prev[i] = w;
            if t >= BURN_IN {
                out[(t - BURN_IN, i)] = w;
            }
        }
    }
    Ok(out)
}

/// How structural shocks enter the reduced-form innovations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShockMapping {
    /// `e = H0(s) w`.
    #[default]
    Impact,
    /// `e = H0(s)^{-1} w`.
    InverseImpact,
}

fn innovations(h0: &[DMatrix<f64>], shocks: &DMatrix<f64>, mapping: ShockMapping) -> Result<DMatrix<f64>> {
    let s_count = h0.len();
    let maps = match mapping {
        ShockMapping::Impact => h0.to_vec(),
        ShockMapping::InverseImpact => h0
            .iter()
            .enumerate()
            .map(|(i, h)| {
                h.clone()
                    .try_inverse()
                    .ok_or_else(|| SpvarError::Numerical(format!("impact matrix of season {} is singular", i + 1)))
            })
            .collect::<Result<_>>()?,
    };
    let mut out = DMatrix::zeros(shocks.nrows(), shocks.ncols());
    for t in 0..shocks.nrows() {
        let e = &maps[t % s_count] * shocks.row(t).transpose();
        out.set_row(t, &e.transpose());
    }
    Ok(out)
}

fn check_impacts(params: &PvarParams, h0: &[DMatrix<f64>]) -> Result<()> {
    let spec = params.spec();
    let m = spec.num_vars();
    if h0.len() != spec.num_seasons() || h0.iter().any(|h| h.shape() != (m, m)) {
        return Err(SpvarError::Dimension(format!(
            "need {} impact matrices of size {m}x{m}",
            spec.num_seasons()
        )));
    }
    Ok(())
}

/// Runs the PVAR forward from `presample` with innovations built from
/// `shocks` (row 0 is season 1). `floors` clips variables from below.
pub fn simulate_spvar(
    params: &PvarParams,
    h0: &[DMatrix<f64>],
    shocks: &DMatrix<f64>,
    presample: &DMatrix<f64>,
    floors: &[Option<f64>],
    mapping: ShockMapping,
) -> Result<TimeSeriesPanel> {
    check_impacts(params, h0)?;
    let s_count = params.spec().num_seasons();
    if shocks.nrows() % s_count != 0 || shocks.ncols() != params.spec().num_vars() {
        return Err(SpvarError::Dimension("shocks must be complete cycles of m columns".into()));
    }
    let eps = innovations(h0, shocks, mapping)?;
    let path = run_recursion(params, presample, &eps, floors)?;
    TimeSeriesPanel::new(path, s_count, Some(presample.clone()))
}

/// Simulates `N` cycles of GARCH-driven data after a warm-up of at least
/// [`BURN_IN`] steps (rounded up to whole cycles); the last warm-up rows
/// become the presample.
pub fn simulate_with_burn_in<R: Rng + ?Sized>(
    params: &PvarParams,
    h0: &[DMatrix<f64>],
    garch: &GarchSpec,
    cycles: usize,
    floors: &[Option<f64>],
    mapping: ShockMapping,
    rng: &mut R,
) -> Result<TimeSeriesPanel> {
    check_impacts(params, h0)?;
    let spec = params.spec();
    let (s_count, m) = (spec.num_seasons(), spec.num_vars());
    let depth = spec.presample_depth();
    let burn = BURN_IN.max(depth).div_ceil(s_count) * s_count;
    let t_len = s_count * cycles;
    let shocks = garch_shocks(garch, burn + t_len, m, rng)?;
    let eps = innovations(h0, &shocks, mapping)?;
    let path = run_recursion(params, &DMatrix::zeros(depth, m), &eps, floors)?;
    let presample = path.rows(burn - depth, depth).into_owned();
    let data = path.rows(burn, t_len).into_owned();
    TimeSeriesPanel::new(data, s_count, Some(presample))
}

/// Periodic means `mu(s)` implied by the parameters, from the stacked form
/// `(A0 - sum_i A_i)^{-1} nu`.
pub fn implied_means(params: &PvarParams) -> Result<Vec<DVector<f64>>> {
    let st = build_stacked_var(params);
    let mut lhs = st.a0.clone();
    for a in &st.lag_coeffs {
        lhs -= a;
    }
    let mu = lhs
        .lu()
        .solve(&st.intercept)
        .ok_or_else(|| SpvarError::Numerical("periodic mean undefined: unit root".into()))?;
    let m = params.spec().num_vars();
    Ok((0..params.spec().num_seasons()).map(|s| mu.rows(s * m, m).into_owned()).collect())
}

#[derive(Clone, Debug)]
pub struct CoverageConfig {
    /// Reduced-form DGP; its covariances are replaced by `H0 H0'`.
    pub dgp: PvarParams,
    pub h0: Vec<DMatrix<f64>>,
    pub garch: GarchSpec,
    pub mc_reps: usize,
    pub cycles: usize,
    pub bootstrap: BootstrapConfig,
    pub horizons: Vec<usize>,
    pub nominal: f64,
    pub floors: Vec<Option<f64>>,
    pub restrictions: RestrictionSet,
    pub scheme: IdentScheme,
    pub mapping: ShockMapping,
    pub fit: FitOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverageCell {
    pub season: usize,
    pub shock: usize,
    pub response: usize,
    pub horizon: usize,
    pub coverage: f64,
    pub mc_se: f64,
    pub failures: usize,
    /// More than 5% of the Monte Carlo replicates failed.
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverageTable {
    pub garch: String,
    pub block_len: usize,
    pub cycles: usize,
    pub mc_reps: usize,
    pub nominal: f64,
    pub cells: Vec<CoverageCell>,
}

impl CoverageTable {
    pub fn mean_abs_deviation(&self) -> f64 {
        let n = self.cells.len().max(1) as f64;
        self.cells.iter().map(|c| (c.coverage - self.nominal).abs()).sum::<f64>() / n
    }
}

/// True structural responses of the DGP, checking that `h0` is what the
/// identification scheme recovers from `H0 H0'`.
pub fn true_structural_irf(config: &CoverageConfig, horizon: usize) -> Result<IrfSet> {
    let sigma = config.h0.iter().map(|h| h * h.transpose()).collect();
    let dgp = config.dgp.clone().with_sigma(sigma)?;
    let recovered = identify(&dgp, &config.scheme)?;
    for (s, (a, b)) in recovered.h0.iter().zip(&config.h0).enumerate() {
        let scale = b.amax().max(1.0);
        if (a - b).amax() > 1e-8 * scale {
            return Err(SpvarError::InvalidSpec(format!(
                "impact matrix of season {} does not satisfy the identification scheme",
                s + 1
            )));
        }
    }
    structural_irf(&impulse_responses(&dgp, horizon), &recovered)
}

/// Seeded Monte Carlo: simulate, estimate, bootstrap and record whether each
/// band contains the true response. Replicates run in parallel and are
/// aggregated by index.
pub fn coverage_experiment(config: &CoverageConfig) -> Result<CoverageTable> {
    if config.mc_reps == 0 || config.cycles == 0 {
        return Err(SpvarError::InvalidSpec("need at least one replicate and one cycle".into()));
    }
    config.bootstrap.validate()?;
    check_impacts(&config.dgp, &config.h0)?;
    let horizon = config.horizons.iter().copied().max().unwrap_or(0);
    let truth = true_structural_irf(config, horizon)?;
    let sigma = config.h0.iter().map(|h| h * h.transpose()).collect();
    let dgp = config.dgp.clone().with_sigma(sigma)?;
    let spec = dgp.spec().clone();
    let (s_count, m) = (spec.num_seasons(), spec.num_vars());

    let cell_keys: Vec<(usize, usize, usize, usize)> = (1..=s_count)
        .flat_map(|s| {
            config.horizons.iter().flat_map(move |&k| {
                (1..=m).flat_map(move |j| (1..=m).map(move |i| (s, k, i, j)))
            })
        })
        .collect();

    let outcomes: Vec<Option<Vec<bool>>> = (1..=config.mc_reps as u64)
        .into_par_iter()
        .map(|r| {
            let seed = sub_seed(config.bootstrap.seed, r);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut run = || -> Result<Vec<bool>> {
                let panel = simulate_with_burn_in(
                    &dgp,
                    &config.h0,
                    &config.garch,
                    config.cycles,
                    &config.floors,
                    config.mapping,
                    &mut rng,
                )?;
                let pre = panel.presample().expect("simulated panels carry a presample");
                let design = design_from_parts(&spec, pre, panel.data())?;
                let point = point_estimate(&design, &config.restrictions, &config.scheme, horizon, &config.fit)?;
                let boot_cfg = BootstrapConfig { seed: sub_seed(seed, u64::MAX), ..config.bootstrap };
                let draws = bootstrap_engine(&point, &config.restrictions, &boot_cfg, &config.fit)?;
                let bands = irf_bands(&point.sirf, &draws.sirf_draws, boot_cfg.alpha, boot_cfg.ci_method)?;
                Ok(cell_keys
                    .iter()
                    .map(|&(s, k, i, j)| {
                        let t = truth.get(s, k)[(i - 1, j - 1)];
                        bands.lower.get(s, k)[(i - 1, j - 1)] <= t && t <= bands.upper.get(s, k)[(i - 1, j - 1)]
                    })
                    .collect())
            };
            run().ok()
        })
        .collect();

    let failures = outcomes.iter().filter(|o| o.is_none()).count();
    let ok: Vec<&Vec<bool>> = outcomes.iter().flatten().collect();
    let cells = cell_keys
        .iter()
        .enumerate()
        .map(|(idx, &(season, horizon, response, shock))| {
            let n = ok.len();
            let hits = ok.iter().filter(|v| v[idx]).count();
            let coverage = if n == 0 { f64::NAN } else { hits as f64 / n as f64 };
            let mc_se = if n == 0 { f64::NAN } else { (coverage * (1.0 - coverage) / n as f64).sqrt() };
            CoverageCell {
                season,
                shock,
                response,
                horizon,
                coverage,
                mc_se,
                failures,
                flagged: failures as f64 > 0.05 * config.mc_reps as f64,
            }
        })
        .collect();
    Ok(CoverageTable {
        garch: config.garch.label(),
        block_len: config.bootstrap.effective_block_len(),
        cycles: config.cycles,
        mc_reps: config.mc_reps,
        nominal: config.nominal,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PvarSpec;

    #[test]
    fn garch_presets() {
        assert_eq!(GarchSpec::G0.a0(), 1.0);
        assert!((GarchSpec::G1.a0() - 0.05).abs() < 1e-15);
        assert!(GarchSpec::new(0.5, 0.5).is_err());
        assert!(GarchSpec::new(-0.1, 0.5).is_err());
        assert_eq!(GarchSpec::preset("G2"), Some(GarchSpec::G2));
        assert_eq!(GarchSpec::G3.label(), "G3");
    }

    #[test]
    fn g0_has_unit_conditional_variance() {
        // with a1 = b1 = 0 the shocks are the normal draws themselves
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let w = garch_shocks(&GarchSpec::G0, 10, 2, &mut a).unwrap();
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let raw: Vec<f64> = (0..(BURN_IN + 10) * 2).map(|_| b.sample(StandardNormal)).collect();
        for t in 0..10 {
            for i in 0..2 {
                assert_eq!(w[(t, i)], raw[(BURN_IN + t) * 2 + i]);
            }
        }
    }

    fn ar1(a: f64) -> PvarParams {
        let spec = PvarSpec::uniform(1, 1, 1).unwrap();
        PvarParams::new(
            spec,
            vec![DVector::zeros(1)],
            vec![vec![DMatrix::from_element(1, 1, a)]],
            vec![DMatrix::identity(1, 1)],
        )
        .unwrap()
    }

    #[test]
    fn hand_recursion_and_pass_through() {
        let h0 = vec![DMatrix::identity(1, 1)];
        let y = simulate_spvar(&ar1(0.5), &h0, &DMatrix::zeros(2, 1), &DMatrix::from_element(1, 1, 1.0), &[], ShockMapping::Impact)
            .unwrap();
        assert_eq!(y.data().as_slice(), &[0.5, 0.25]);
        let w = DMatrix::from_column_slice(3, 1, &[0.3, -1.0, 2.0]);
        let y = simulate_spvar(&ar1(0.0), &h0, &w, &DMatrix::zeros(1, 1), &[], ShockMapping::Impact).unwrap();
        assert_eq!(y.data(), &w);
    }

    #[test]
    fn clipping_feeds_lags() {
        let spec = PvarSpec::uniform(1, 2, 1).unwrap();
        let params = PvarParams::new(
            spec,
            vec![DVector::zeros(2)],
            vec![vec![DMatrix::identity(2, 2)]],
            vec![DMatrix::identity(2, 2)],
        )
        .unwrap();
        let shocks = DMatrix::from_row_slice(2, 2, &[0.0, -0.3, 0.0, 0.1]);
        let y = simulate_spvar(
            &params,
            &[DMatrix::identity(2, 2)],
            &shocks,
            &DMatrix::zeros(1, 2),
            &[None, Some(0.0)],
            ShockMapping::Impact,
        )
        .unwrap();
        assert_eq!(y.data()[(0, 1)], 0.0);
        assert_eq!(y.data()[(1, 1)], 0.1);
    }

    #[test]
    fn inverse_mapping() {
        let h0 = vec![DMatrix::from_element(1, 1, 2.0)];
        let w = DMatrix::from_column_slice(1, 1, &[1.0]);
        let y = simulate_spvar(&ar1(0.0), &h0, &w, &DMatrix::zeros(1, 1), &[], ShockMapping::InverseImpact).unwrap();
        assert_eq!(y.data()[(0, 0)], 0.5);
    }

    #[test]
    fn implied_mean_of_scalar_ar() {
        let spec = PvarSpec::uniform(1, 1, 1).unwrap();
        let p = PvarParams::new(
            spec,
            vec![DVector::from_element(1, 1.0)],
            vec![vec![DMatrix::from_element(1, 1, 0.5)]],
            vec![DMatrix::identity(1, 1)],
        )
        .unwrap();
        assert!((implied_means(&p).unwrap()[0][0] - 2.0).abs() < 1e-14);
    }
}
