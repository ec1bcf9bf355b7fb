//! Residual-based seasonal block bootstrap, moving-block bootstrap on
//! standardized residuals, replicate re-estimation and percentile bands.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpvarError};
use crate::estimation::{design_from_parts, fit_constrained, vech, DesignMatrices, FitOptions, FitResult, RestrictionSet};
use crate::identification::{identify, structural_irf, IdentScheme, StructuralFit};
use crate::linalg;
use crate::model::{impulse_responses, run_recursion, IrfKind, IrfSet, PvarParams};

/// Largest tolerated share of failed replicates.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapMethod {
    /// Blocks start at indices sharing the season of the target position.
    SeasonalBlock,
    /// Moving blocks of season-standardized residuals.
    MbbStandardized,
    /// `SeasonalBlock` with block length one.
    SeasonalIid,
    /// `MbbStandardized` with block length one.
    IidStandardized,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    MedianAdjusted,
    Percentile,
    HallPercentile,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub method: BootstrapMethod,
    pub block_len: usize,
    pub replicates: usize,
    pub seed: u64,
    pub ci_method: CiMethod,
    pub alpha: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            method: BootstrapMethod::SeasonalBlock,
            block_len: 7,
            replicates: 500,
            seed: 0,
            ci_method: CiMethod::MedianAdjusted,
            alpha: 0.32,
        }
    }
}

impl BootstrapConfig {
    /// Block length actually used (one for the iid variants).
    pub fn effective_block_len(&self) -> usize {
        match self.method {
            BootstrapMethod::SeasonalIid | BootstrapMethod::IidStandardized => 1,
            _ => self.block_len,
        }
    }

    /// `b^3 / T`, which should be small for the block bootstrap to be valid.
    pub fn block_ratio(&self, t_len: usize) -> f64 {
        (self.effective_block_len() as f64).powi(3) / t_len as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(SpvarError::InvalidSpec("at least one bootstrap replicate required".into()));
        }
        if self.effective_block_len() == 0 {
            return Err(SpvarError::InvalidSpec("block length must be at least 1".into()));
        }
        check_alpha(self.alpha)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(SpvarError::InvalidSpec(format!("alpha = {alpha} is outside (0, 1)")))
    }
}

/// Deterministic 64-bit mix of the master seed and a replicate index.
pub fn sub_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_block(t_len: usize, b: usize) -> Result<()> {
    if b == 0 || b > t_len {
        return Err(SpvarError::Precondition(format!("block length {b} must lie in 1..={t_len}")));
    }
    Ok(())
}

/// Target positions `1, b + 1, ..., (l - 1) b + 1` with `l = ceil(T / b)`.
pub fn block_positions(t_len: usize, b: usize) -> Vec<usize> {
    (0..t_len.div_ceil(b)).map(|i| i * b + 1).collect()
}

/// Admissible starts for the block placed at position `t`: indices
/// `t + S j`, `-R1 <= j <= R2`, with `R1 = floor((t - 1) / S)` and
/// `R2 = floor((T - b + 1 - t) / S)`, so the whole block lies in `1..=T`.
pub fn gsbb_candidates(t: usize, t_len: usize, num_seasons: usize, b: usize) -> Result<Vec<usize>> {
    check_block(t_len, b)?;
    let s = num_seasons as i64;
    let t_i = t as i64;
    let r1 = (t_i - 1).div_euclid(s);
    let r2 = (t_len as i64 - b as i64 + 1 - t_i).div_euclid(s);
    let out: Vec<usize> = (-r1..=r2).map(|j| (t_i + s * j) as usize).collect();
    if out.is_empty() {
        return Err(SpvarError::Precondition(format!(
            "no block of length {b} starting in the season of position {t} fits in {t_len} observations"
        )));
    }
    Ok(out)
}

/// One uniformly drawn seasonal start per block position.
pub fn gsbb_start_indices<R: Rng + ?Sized>(t_len: usize, num_seasons: usize, b: usize, rng: &mut R) -> Result<Vec<usize>> {
    block_positions(t_len, b)
        .into_iter()
        .map(|t| {
            let cands = gsbb_candidates(t, t_len, num_seasons, b)?;
            Ok(cands[rng.random_range(0..cands.len())])
        })
        .collect()
}

/// Uniform starts in `1..=T - b + 1`, one per block position.
pub fn mbb_start_indices<R: Rng + ?Sized>(t_len: usize, b: usize, rng: &mut R) -> Result<Vec<usize>> {
    check_block(t_len, b)?;
    Ok((0..t_len.div_ceil(b))
        .map(|_| rng.random_range(1..=t_len - b + 1))
        .collect())
}

/// Source index (1-based) of every output position when blocks of length `b`
/// starting at `starts` are concatenated and cut to length `T`.
pub fn block_sources(starts: &[usize], b: usize, t_len: usize) -> Vec<usize> {
    starts
        .iter()
        .flat_map(|&k| k..k + b)
        .take(t_len)
        .collect()
}

pub fn assemble_blocks(residuals: &DMatrix<f64>, starts: &[usize], b: usize) -> DMatrix<f64> {
    let t_len = residuals.nrows();
    let sources = block_sources(starts, b, t_len);
    DMatrix::from_fn(t_len, residuals.ncols(), |r, c| residuals[(sources[r] - 1, c)])
}

/// Seasonal block resampling of residual rows (row 0 is season 1).
pub fn resample_residuals_seasonal<R: Rng + ?Sized>(
    residuals: &DMatrix<f64>,
    num_seasons: usize,
    b: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let starts = gsbb_start_indices(residuals.nrows(), num_seasons, b, rng)?;
    Ok(assemble_blocks(residuals, &starts, b))
}

/// Moving-block resampling of `Sigma(s)^{-1/2} e_t`, rescaled by the square
/// root of the covariance of the destination season.
pub fn resample_residuals_mbb<R: Rng + ?Sized>(
    residuals: &DMatrix<f64>,
    sigma: &[DMatrix<f64>],
    b: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let s_count = sigma.len();
    let t_len = residuals.nrows();
    let roots = sigma
        .iter()
        .enumerate()
        .map(|(i, s)| linalg::sym_sqrt_pair(s).ok_or(SpvarError::NotPositiveDefinite { season: i + 1 }))
        .collect::<Result<Vec<_>>>()?;
    let mut standardized = DMatrix::zeros(t_len, residuals.ncols());
    for t in 0..t_len {
        let u = &roots[t % s_count].1 * residuals.row(t).transpose();
        standardized.set_row(t, &u.transpose());
    }
    let starts = mbb_start_indices(t_len, b, rng)?;
    let drawn = assemble_blocks(&standardized, &starts, b);
    let mut out = DMatrix::zeros(t_len, residuals.ncols());
    for t in 0..t_len {
        let e = &roots[t % s_count].0 * drawn.row(t).transpose();
        out.set_row(t, &e.transpose());
    }
    Ok(out)
}

/// Pseudo residuals for one replicate under `config`.
pub fn resample<R: Rng + ?Sized>(
    residuals: &DMatrix<f64>,
    sigma: &[DMatrix<f64>],
    config: &BootstrapConfig,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let b = config.effective_block_len();
    match config.method {
        BootstrapMethod::SeasonalBlock | BootstrapMethod::SeasonalIid => {
            resample_residuals_seasonal(residuals, sigma.len(), b, rng)
        }
        BootstrapMethod::MbbStandardized | BootstrapMethod::IidStandardized => {
            resample_residuals_mbb(residuals, sigma, b, rng)
        }
    }
}

/// Bootstrap observations from the fitted recursion, started at the original presample.
pub fn regenerate_path(params: &PvarParams, presample: &DMatrix<f64>, pseudo: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    run_recursion(params, presample, pseudo, &[])
}

/// Estimates on the observed sample that the bootstrap perturbs.
#[derive(Clone, Debug)]
pub struct PointEstimate {
    pub design: DesignMatrices,
    pub fit: FitResult,
    pub structural: StructuralFit,
    pub sirf: IrfSet,
}

pub fn point_estimate(
    design: &DesignMatrices,
    restr: &RestrictionSet,
    scheme: &IdentScheme,
    horizon: usize,
    opts: &FitOptions,
) -> Result<PointEstimate> {
    let (fit, structural, sirf) = estimate_all(design, restr, scheme, horizon, opts)?;
    Ok(PointEstimate { design: design.clone(), fit, structural, sirf })
}

fn estimate_all(
    design: &DesignMatrices,
    restr: &RestrictionSet,
    scheme: &IdentScheme,
    horizon: usize,
    opts: &FitOptions,
) -> Result<(FitResult, StructuralFit, IrfSet)> {
    let fit = fit_constrained(design, restr, opts)?;
    let structural = identify(&fit.params, scheme)?;
    let sirf = structural_irf(&impulse_responses(&fit.params, horizon), &structural)?;
    Ok((fit, structural, sirf))
}

#[derive(Clone, Debug)]
pub struct BootstrapDraws {
    /// One row per retained replicate.
    pub beta_draws: DMatrix<f64>,
    /// `vech(Sigma(1)), ..., vech(Sigma(S))` per retained replicate.
    pub sigma_draws: DMatrix<f64>,
    pub sirf_draws: Vec<IrfSet>,
    /// Replicate number `1..=L` of each retained draw.
    pub replicate_ids: Vec<usize>,
    /// Sub-seed of every replicate, retained or not.
    pub sub_seeds: Vec<u64>,
    pub failure_count: usize,
    pub master_seed: u64,
}

struct Replicate {
    beta: Vec<f64>,
    sigma: Vec<f64>,
    sirf: IrfSet,
}

/// Runs `L` replicates in parallel. Each replicate resamples residuals,
/// regenerates a path, refits with the same restrictions and re-identifies
/// with the same scheme. Failed replicates are skipped.
pub fn bootstrap_engine(
    point: &PointEstimate,
    restr: &RestrictionSet,
    config: &BootstrapConfig,
    opts: &FitOptions,
) -> Result<BootstrapDraws> {
    config.validate()?;
    let design = &point.design;
    let spec = design.spec();
    let t_len = design.sample().nrows();
    check_block(t_len, config.effective_block_len())?;
    let scheme = &point.structural.scheme;
    let horizon = point.sirf.horizon();
    let params = &point.fit.params;
    let residuals = &point.fit.residuals;

    let sub_seeds: Vec<u64> = (1..=config.replicates as u64).map(|l| sub_seed(config.seed, l)).collect();
    let outcomes: Vec<Result<Replicate>> = sub_seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pseudo = resample(residuals, params.sigmas(), config, &mut rng)?;
            let path = regenerate_path(params, design.presample(), &pseudo)?;
            let star = design_from_parts(spec, design.presample(), &path)?;
            let (fit, _, sirf) = estimate_all(&star, restr, scheme, horizon, opts)?;
            Ok(Replicate {
                beta: fit.beta.iter().copied().collect(),
                sigma: fit.params.sigmas().iter().flat_map(vech).collect(),
                sirf,
            })
        })
        .collect();

    // a resampling error hits every replicate alike; report it directly
    if let Some(Err(e)) = outcomes.first() {
        if outcomes.iter().all(|o| o.is_err()) && !e.is_numerical() {
            return Err(e.clone());
        }
    }
    let failure_count = outcomes.iter().filter(|o| o.is_err()).count();
    if failure_count as f64 > MAX_FAILURE_RATE * config.replicates as f64 {
        return Err(SpvarError::TooManyFailures { failed: failure_count, total: config.replicates });
    }
    let kept: Vec<(usize, Replicate)> = outcomes
        .into_iter()
        .enumerate()
        .filter_map(|(i, o)| o.ok().map(|r| (i + 1, r)))
        .collect();
    let d = spec.coeff_dim();
    let v = spec.num_seasons() * spec.num_vars() * (spec.num_vars() + 1) / 2;
    let beta_draws = DMatrix::from_fn(kept.len(), d, |r, c| kept[r].1.beta[c]);
    let sigma_draws = DMatrix::from_fn(kept.len(), v, |r, c| kept[r].1.sigma[c]);
    let replicate_ids = kept.iter().map(|(i, _)| *i).collect();
    let sirf_draws = kept.into_iter().map(|(_, r)| r.sirf).collect();
    Ok(BootstrapDraws {
        beta_draws,
        sigma_draws,
        sirf_draws,
        replicate_ids,
        sub_seeds,
        failure_count,
        master_seed: config.seed,
    })
}

/// Order statistic `x_(ceil(q L))` of sorted draws, index clamped to `1..=L`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let l = sorted.len();
    let k = ((q * l as f64) - 1e-9).ceil().clamp(1.0, l as f64) as usize;
    sorted[k - 1]
}

pub fn ci_bands(point: f64, draws: &[f64], alpha: f64, method: CiMethod) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    if draws.len() < 2 {
        return Err(SpvarError::Precondition(format!("need at least 2 draws, got {}", draws.len())));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = quantile_sorted(&sorted, alpha / 2.0);
    let hi = quantile_sorted(&sorted, 1.0 - alpha / 2.0);
    Ok(match method {
        CiMethod::MedianAdjusted => {
            let med = quantile_sorted(&sorted, 0.5);
            (point + lo - med, point + hi - med)
        }
        CiMethod::Percentile => (lo, hi),
        CiMethod::HallPercentile => (2.0 * point - hi, 2.0 * point - lo),
    })
}

/// Entrywise bands around a set of structural responses.
#[derive(Clone, Debug, PartialEq)]
pub struct IrfBands {
    pub lower: IrfSet,
    pub upper: IrfSet,
    pub method: CiMethod,
    pub alpha: f64,
}

pub fn irf_bands(point: &IrfSet, draws: &[IrfSet], alpha: f64, method: CiMethod) -> Result<IrfBands> {
    if draws.iter().any(|d| d.horizon() != point.horizon() || d.spec() != point.spec()) {
        return Err(SpvarError::Dimension("bootstrap responses do not match the point estimate".into()));
    }
    let m = point.spec().num_vars();
    let mut lower = Vec::with_capacity(point.spec().num_seasons());
    let mut upper = Vec::with_capacity(point.spec().num_seasons());
    let mut buf = vec![0.0; draws.len()];
    for s in 1..=point.spec().num_seasons() {
        let (mut lo_s, mut hi_s) = (Vec::new(), Vec::new());
        for k in 0..=point.horizon() {
            let mut lo = DMatrix::zeros(m, m);
            let mut hi = DMatrix::zeros(m, m);
            for i in 0..m {
                for j in 0..m {
                    for (b, d) in buf.iter_mut().zip(draws) {
                        *b = d.get(s, k)[(i, j)];
                    }
                    let (l, u) = ci_bands(point.get(s, k)[(i, j)], &buf, alpha, method)?;
                    lo[(i, j)] = l;
                    hi[(i, j)] = u;
                }
            }
            lo_s.push(lo);
            hi_s.push(hi);
        }
        lower.push(lo_s);
        upper.push(hi_s);
    }
    Ok(IrfBands {
        lower: IrfSet::new(point.spec().clone(), IrfKind::StructuralIr, lower)?,
        upper: IrfSet::new(point.spec().clone(), IrfKind::StructuralIr, upper)?,
        method,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    use crate::model::PvarSpec;

    #[test]
    fn worked_candidate_sets() {
        assert_eq!(gsbb_candidates(1, 24, 12, 7).unwrap(), vec![1, 13]);
        assert_eq!(gsbb_candidates(8, 24, 12, 7).unwrap(), vec![8]);
        assert_eq!(gsbb_candidates(22, 24, 12, 7).unwrap(), vec![10]);
        assert_eq!(gsbb_candidates(5, 24, 4, 1).unwrap(), vec![1, 5, 9, 13, 17, 21]);
        assert_eq!(gsbb_candidates(24, 24, 4, 1).unwrap().len(), 6);
        assert!(gsbb_candidates(1, 24, 12, 25).is_err());
        assert!(gsbb_candidates(1, 24, 12, 0).is_err());
    }

    #[test]
    fn forced_block_trace() {
        let res = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(assemble_blocks(&res, &[1, 3], 2), res);
        assert_eq!(block_sources(&[2, 1], 3, 4), vec![2, 3, 4, 1]);
    }

    #[test]
    fn full_length_block_is_identity() {
        let res = DMatrix::from_fn(12, 2, |r, c| (r * 2 + c) as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(resample_residuals_seasonal(&res, 4, 12, &mut rng).unwrap(), res);
    }

    #[test]
    fn mbb_rescales_to_destination_season() {
        let res = DMatrix::from_column_slice(2, 1, &[2.0, 0.5]);
        let sigma = vec![DMatrix::from_element(1, 1, 4.0), DMatrix::from_element(1, 1, 1.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // block of length 2 starting at 1 is the only option
        let out = resample_residuals_mbb(&res, &sigma, 2, &mut rng).unwrap();
        assert_eq!(out, res);
        // with b = 1, residual 2 from season 1 lands in season 2 as 2 / 2 * 1
        let mut seen = false;
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = resample_residuals_mbb(&res, &sigma, 1, &mut rng).unwrap();
            assert!([2.0, 1.0].contains(&out[(0, 0)]));
            assert!([1.0, 0.5].contains(&out[(1, 0)]));
            seen |= out[(1, 0)] == 1.0;
        }
        assert!(seen);
        let bad = vec![DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, 1.0)];
        assert!(resample_residuals_mbb(&res, &bad, 1, &mut rng).is_err());
    }

    #[test]
    fn regenerate_hand_recursion() {
        let spec = PvarSpec::uniform(1, 1, 1).unwrap();
        let params = PvarParams::new(
            spec,
            vec![DVector::zeros(1)],
            vec![vec![DMatrix::from_element(1, 1, 0.5)]],
            vec![DMatrix::identity(1, 1)],
        )
        .unwrap();
        let y = regenerate_path(&params, &DMatrix::from_element(1, 1, 1.0), &DMatrix::zeros(2, 1)).unwrap();
        assert_eq!(y.as_slice(), &[0.5, 0.25]);
    }

    #[test]
    fn ci_arithmetic() {
        let draws: Vec<f64> = (1..=101).map(f64::from).collect();
        assert_eq!(ci_bands(0.0, &draws, 0.32, CiMethod::MedianAdjusted).unwrap(), (-34.0, 34.0));
        assert_eq!(ci_bands(0.0, &draws, 0.32, CiMethod::Percentile).unwrap(), (17.0, 85.0));
        assert_eq!(ci_bands(0.0, &draws, 0.32, CiMethod::HallPercentile).unwrap(), (-85.0, -17.0));
        assert_eq!(ci_bands(1.5, &[2.0; 5], 0.1, CiMethod::MedianAdjusted).unwrap(), (1.5, 1.5));
        assert!(ci_bands(0.0, &draws, 1.0, CiMethod::Percentile).is_err());
        assert!(ci_bands(0.0, &[1.0], 0.3, CiMethod::Percentile).is_err());
    }

    #[test]
    fn sub_seeds_differ() {
        let seeds: Vec<u64> = (1..=100).map(|l| sub_seed(42, l)).collect();
        let mut uniq = seeds.clone();
        uniq.sort_unstable();
        uniq.dedup();
        assert_eq!(uniq.len(), 100);
        assert_eq!(sub_seed(42, 7), sub_seed(42, 7));
    }
}
