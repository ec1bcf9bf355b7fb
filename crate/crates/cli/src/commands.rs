use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use spvar_core::bootstrap::{bootstrap_engine, irf_bands, point_estimate, PointEstimate};
use spvar_core::diagnostics::{periodic_acf, sample_acf, seasonal_demean, spectral_density, whiteness_summary, Transform};
use spvar_core::estimation::{build_design, fit_constrained, DesignMatrices, FitOptions, RestrictionSet, TimeSeriesPanel};
use spvar_core::identification::{identify, structural_irf, IdentScheme};
use spvar_core::model::{impulse_responses, stationarity_margin, IrfSet, PvarSpec, DEFAULT_STATIONARITY_TOL};
use spvar_core::simulation::{coverage_experiment, simulate_with_burn_in, CoverageConfig};

use crate::config::{RestrictionConfig, RestrictionPreset, RunConfig};
use crate::io::{diff_log, fmt_f64, load_csv, write_csv, write_json};
use crate::{Cli, CliError, Command};

/// Reproducibility record written next to every output.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub files: Vec<String>,
    pub notes: Vec<String>,
}

/// Fitted reduced form as written to `params.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ParamsFile {
    pub seasons: usize,
    pub variables: Vec<String>,
    pub orders: Vec<usize>,
    pub restrictions: String,
    pub num_free: usize,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub intercepts: Vec<Vec<f64>>,
    pub coeffs: Vec<Vec<Vec<Vec<f64>>>>,
    pub sigma: Vec<Vec<Vec<f64>>>,
    pub free_counts: Vec<usize>,
    pub effective_n: usize,
    pub condition: f64,
    pub stationarity_margin: f64,
    pub periodically_stationary: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ImpactFile {
    pub scheme: IdentScheme,
    pub h0: Vec<Vec<Vec<f64>>>,
    pub longrun: Option<Vec<Vec<Vec<f64>>>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

struct Context {
    cfg: RunConfig,
    spec: PvarSpec,
    out: PathBuf,
    files: Vec<String>,
    notes: Vec<String>,
}

impl Context {
    fn output(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.out.join(name)
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions { sigma_divisor: self.cfg.sigma_divisor }
    }

    fn restrictions(&mut self) -> Result<RestrictionSet, CliError> {
        let restr = self.cfg.restriction_set(&self.spec)?;
        if let RestrictionConfig::Preset(p @ (RestrictionPreset::PeersmanPattern | RestrictionPreset::PeersmanPatternNonseasonalFfr)) =
            &self.cfg.restrictions
        {
            let note = format!(
                "{} preset: M = {} free parameters ({})",
                if *p == RestrictionPreset::PeersmanPattern { "peersman_pattern" } else { "peersman_pattern_nonseasonal_ffr" },
                restr.num_free(),
                "counts differ between the displayed grid and the non-seasonal FFR reading; see README"
            );
            eprintln!("note: {note}");
            self.notes.push(note);
        }
        Ok(restr)
    }

    fn panel(&self) -> Result<TimeSeriesPanel, CliError> {
        let path = self
            .cfg
            .data
            .as_ref()
            .ok_or_else(|| CliError::Config("data: a CSV path is required for this command".into()))?;
        let mut raw = load_csv(path, &self.cfg.variables)?;
        if !self.cfg.diff_log.is_empty() {
            let cols = self
                .cfg
                .diff_log
                .iter()
                .map(|v| self.cfg.var_index(v, "diff_log"))
                .collect::<Result<Vec<_>, _>>()?;
            raw = diff_log(&raw, &cols, self.cfg.seasons)?;
        }
        let k = self.cfg.presample_rows;
        if k >= raw.nrows() {
            return Err(CliError::Data("no observations after the presample rows".into()));
        }
        let data = raw.rows(k, raw.nrows() - k).into_owned();
        if data.nrows() % self.cfg.seasons != 0 {
            return Err(CliError::Data(format!(
                "{} observations are not divisible by S = {}",
                data.nrows(),
                self.cfg.seasons
            )));
        }
        let presample = (k > 0).then(|| raw.rows(0, k).into_owned());
        Ok(TimeSeriesPanel::new(data, self.cfg.seasons, presample)?)
    }

    fn design(&self) -> Result<DesignMatrices, CliError> {
        Ok(build_design(&self.panel()?, &self.spec, self.cfg.presample_policy)?)
    }

    fn point(&mut self) -> Result<(PointEstimate, RestrictionSet), CliError> {
        let design = self.design()?;
        let restr = self.restrictions()?;
        let scheme = self.cfg.scheme()?;
        let point = point_estimate(&design, &restr, &scheme, self.cfg.horizon, &self.fit_options())?;
        Ok((point, restr))
    }
}

/// Resolves the configuration and overrides, then runs the command on a
/// dedicated thread pool.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = RunConfig::from_path(path)?;
    if let Some(seed) = cli.seed {
        cfg.bootstrap.seed = seed;
    }
    if let Some(b) = cli.block_len {
        cfg.bootstrap.b = b;
    }
    if let Some(l) = cli.replicates {
        cfg.bootstrap.replicates = l;
    }
    if let Some(a) = cli.alpha {
        cfg.bootstrap.alpha = a;
    }
    if let Some(out) = &cli.out {
        cfg.output = out.clone();
    }
    let threads = match cli.threads {
        Some(t) => Some(t),
        None => match std::env::var("SPVAR_THREADS") {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| CliError::Config(format!("SPVAR_THREADS: not a thread count: {v:?}")))?,
            ),
            Err(_) => cfg.threads,
        },
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    pool.install(|| run_command(cli.command, cfg))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn config_hash(cfg: &RunConfig) -> Result<String, CliError> {
    let mut hashed = cfg.clone();
    hashed.output = PathBuf::new();
    hashed.threads = None;
    let data_digest = match hashed.data.take() {
        Some(p) => {
            let bytes = std::fs::read(&p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            hex(&Sha256::digest(&bytes))
        }
        None => String::new(),
    };
    // serde_json::Value keeps object keys sorted, which makes the text canonical
    let value = serde_json::to_value(&hashed).map_err(|e| CliError::Config(e.to_string()))?;
    let mut hasher = Sha256::new();
    hasher.update(value.to_string().as_bytes());
    hasher.update(b"\0");
    hasher.update(data_digest.as_bytes());
    Ok(hex(&hasher.finalize()))
}

fn run_command(command: Command, cfg: RunConfig) -> Result<(), CliError> {
    let spec = cfg.spec()?;
    let out = cfg.output.clone();
    std::fs::create_dir_all(&out).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
    let hash = config_hash(&cfg)?;
    let seed = cfg.bootstrap.seed;
    let mut ctx = Context { cfg, spec, out, files: Vec::new(), notes: Vec::new() };
    match command {
        Command::Fit => fit(&mut ctx)?,
        Command::Identify => identify_cmd(&mut ctx)?,
        Command::Irf => irf(&mut ctx)?,
        Command::BootstrapCi => bootstrap_ci(&mut ctx)?,
        Command::Simulate => simulate(&mut ctx)?,
        Command::Coverage => coverage(&mut ctx)?,
        Command::Diagnose => diagnose(&mut ctx)?,
    }
    let manifest = Manifest {
        command: command.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        config_hash: hash,
        files: ctx.files.clone(),
        notes: ctx.notes.clone(),
    };
    write_json(&ctx.out.join("manifest.json"), &manifest)
}

fn fit(ctx: &mut Context) -> Result<(), CliError> {
    let design = ctx.design()?;
    let restr = ctx.restrictions()?;
    let fit = fit_constrained(&design, &restr, &ctx.fit_options())?;
    let margin = stationarity_margin(&fit.params)?;
    let spec = &ctx.spec;
    let params = &fit.params;
    let file = ParamsFile {
        seasons: spec.num_seasons(),
        variables: spec.var_names().to_vec(),
        orders: spec.orders().to_vec(),
        restrictions: restr.provenance().to_string(),
        num_free: restr.num_free(),
        beta: fit.beta.iter().copied().collect(),
        gamma: fit.gamma.iter().copied().collect(),
        intercepts: params.intercepts().iter().map(|v| v.iter().copied().collect()).collect(),
        coeffs: (1..=spec.num_seasons())
            .map(|s| params.coeffs(s).iter().map(rows_of).collect())
            .collect(),
        sigma: params.sigmas().iter().map(rows_of).collect(),
        free_counts: fit.free_counts.clone(),
        effective_n: fit.effective_n,
        condition: fit.condition,
        stationarity_margin: margin,
        periodically_stationary: margin < 1.0 - DEFAULT_STATIONARITY_TOL,
    };
    let path = ctx.output("params.json");
    write_json(&path, &file)
}

fn identify_cmd(ctx: &mut Context) -> Result<(), CliError> {
    let design = ctx.design()?;
    let restr = ctx.restrictions()?;
    let fit = fit_constrained(&design, &restr, &ctx.fit_options())?;
    let sfit = identify(&fit.params, &ctx.cfg.scheme()?)?;
    let file = ImpactFile {
        scheme: sfit.scheme.clone(),
        h0: sfit.h0.iter().map(rows_of).collect(),
        longrun: sfit.longrun.as_ref().map(|d| d.iter().map(rows_of).collect()),
    };
    let path = ctx.output("h0.json");
    write_json(&path, &file)
}

fn irf_rows(irf: &IrfSet) -> Vec<Vec<String>> {
    let m = irf.spec().num_vars();
    let names = irf.spec().var_names();
    let mut rows = Vec::new();
    for s in 1..=irf.spec().num_seasons() {
        for k in 0..=irf.horizon() {
            for j in 0..m {
                for i in 0..m {
                    rows.push(vec![
                        s.to_string(),
                        k.to_string(),
                        names[i].clone(),
                        (j + 1).to_string(),
                        fmt_f64(irf.get(s, k)[(i, j)]),
                    ]);
                }
            }
        }
    }
    rows
}

fn irf(ctx: &mut Context) -> Result<(), CliError> {
    let design = ctx.design()?;
    let restr = ctx.restrictions()?;
    let fit = fit_constrained(&design, &restr, &ctx.fit_options())?;
    let sfit = identify(&fit.params, &ctx.cfg.scheme()?)?;
    let sirf = structural_irf(&impulse_responses(&fit.params, ctx.cfg.horizon), &sfit)?;
    let path = ctx.output("irf.csv");
    write_csv(&path, &["season", "horizon", "response", "shock", "value"], &irf_rows(&sirf))
}

fn bootstrap_ci(ctx: &mut Context) -> Result<(), CliError> {
    let (point, restr) = ctx.point()?;
    let config = ctx.cfg.bootstrap.to_core();
    let t_len = point.design.sample().nrows();
    let ratio = config.block_ratio(t_len);
    let note = format!("block length {} with T = {t_len}: b^3/T = {}", config.effective_block_len(), fmt_f64(ratio));
    eprintln!("note: {note}");
    ctx.notes.push(note);
    let draws = bootstrap_engine(&point, &restr, &config, &ctx.fit_options())?;
    ctx.notes.push(format!(
        "{} of {} replicates failed and were skipped",
        draws.failure_count, config.replicates
    ));
    let bands = irf_bands(&point.sirf, &draws.sirf_draws, config.alpha, config.ci_method)?;
    let method = serde_json::to_value(config.ci_method)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    let rows: Vec<Vec<String>> = irf_rows(&point.sirf)
        .into_iter()
        .zip(irf_rows(&bands.lower).into_iter().zip(irf_rows(&bands.upper)))
        .map(|(mut row, (lo, hi))| {
            row.push(lo[4].clone());
            row.push(hi[4].clone());
            row.push(method.clone());
            row
        })
        .collect();
    let path = ctx.output("bands.csv");
    write_csv(
        &path,
        &["season", "horizon", "response", "shock", "value", "lower", "upper", "ci_method"],
        &rows,
    )
}

fn simulate(ctx: &mut Context) -> Result<(), CliError> {
    let (params, h0) = ctx.cfg.dgp(&ctx.spec)?;
    let sim = ctx.cfg.simulation()?;
    let garch = sim.garch.resolve()?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.bootstrap.seed);
    let panel = simulate_with_burn_in(&params, &h0, &garch, sim.cycles, &ctx.cfg.floors()?, sim.shock_mapping, &mut rng)?;
    let pre = panel.presample().cloned().unwrap_or_else(|| DMatrix::zeros(0, ctx.spec.num_vars()));
    let mut rows = Vec::with_capacity(pre.nrows() + panel.len());
    for (r, row) in pre.row_iter().enumerate() {
        let t = r as i64 - pre.nrows() as i64 + 1;
        rows.push(std::iter::once(t.to_string()).chain(row.iter().map(|&x| fmt_f64(x))).collect());
    }
    for (r, row) in panel.data().row_iter().enumerate() {
        rows.push(std::iter::once((r + 1).to_string()).chain(row.iter().map(|&x| fmt_f64(x))).collect());
    }
    ctx.notes.push(format!("{} presample rows precede t = 1", pre.nrows()));
    let path = ctx.output("simulated.csv");
    let header: Vec<&str> = std::iter::once("t").chain(ctx.cfg.variables.iter().map(String::as_str)).collect();
    write_csv(&path, &header, &rows)
}

fn coverage(ctx: &mut Context) -> Result<(), CliError> {
    let (dgp, h0) = ctx.cfg.dgp(&ctx.spec)?;
    let sim = ctx.cfg.simulation()?.clone();
    let restrictions = ctx.restrictions()?;
    let horizon = sim.horizons.iter().copied().max().unwrap_or(0);
    if horizon > ctx.cfg.horizon {
        return Err(CliError::Config(format!(
            "simulation.horizons: {horizon} exceeds horizon {}",
            ctx.cfg.horizon
        )));
    }
    let config = CoverageConfig {
        dgp,
        h0,
        garch: sim.garch.resolve()?,
        mc_reps: sim.mc_reps,
        cycles: sim.cycles,
        bootstrap: ctx.cfg.bootstrap.to_core(),
        horizons: sim.horizons.clone(),
        nominal: sim.nominal,
        floors: ctx.cfg.floors()?,
        restrictions,
        scheme: ctx.cfg.scheme()?,
        mapping: sim.shock_mapping,
        fit: ctx.fit_options(),
    };
    let table = coverage_experiment(&config)?;
    let names = ctx.spec.var_names();
    let rows: Vec<Vec<String>> = table
        .cells
        .iter()
        .map(|c| {
            vec![
                table.garch.clone(),
                table.block_len.to_string(),
                table.cycles.to_string(),
                c.season.to_string(),
                c.shock.to_string(),
                names[c.response - 1].clone(),
                c.horizon.to_string(),
                fmt_f64(c.coverage),
                fmt_f64(c.mc_se),
                c.failures.to_string(),
            ]
        })
        .collect();
    if table.cells.iter().any(|c| c.flagged) {
        ctx.notes.push("more than 5% of Monte Carlo replicates failed".into());
    }
    let path = ctx.output("coverage.csv");
    write_csv(
        &path,
        &["spec", "b", "N", "season", "shock", "response", "horizon", "coverage", "mc_se", "failures"],
        &rows,
    )
}

fn diagnose(ctx: &mut Context) -> Result<(), CliError> {
    let panel = ctx.panel()?;
    let s_count = ctx.cfg.seasons;
    let diag = ctx.cfg.diagnostics.clone();
    let (demeaned, _) = seasonal_demean(panel.data(), s_count)?;
    let names = ctx.cfg.variables.clone();

    let mut acf_rows = Vec::new();
    let mut sd_rows = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let raw: Vec<f64> = panel.data().column(i).iter().copied().collect();
        let dm: Vec<f64> = demeaned.column(i).iter().copied().collect();
        for (label, series) in [("level", &raw), ("seasonally_demeaned", &dm)] {
            let max_lag = diag.max_lag.min(series.len() - 1);
            for (lag, v) in sample_acf(series, max_lag)?.iter().enumerate() {
                acf_rows.push(vec![format!("{name}:{label}"), "all".into(), lag.to_string(), fmt_f64(*v)]);
            }
            let sd = spectral_density(series, diag.bandwidth)?;
            for (j, (f, v)) in sd.freqs.iter().zip(&sd.values).enumerate() {
                sd_rows.push(vec![format!("{name}:{label}"), j.to_string(), fmt_f64(*f), fmt_f64(*v)]);
            }
        }
        let max_lag = diag.max_lag.min(raw.len() - 1);
        for (s, seq) in periodic_acf(&raw, s_count, max_lag)?.iter().enumerate() {
            for (lag, v) in seq.iter().enumerate() {
                acf_rows.push(vec![format!("{name}:periodic"), (s + 1).to_string(), lag.to_string(), fmt_f64(*v)]);
            }
        }
    }

    let (point, _) = ctx.point()?;
    let shocks = point.structural.shocks(&point.fit.residuals)?;
    let max_lag = diag.max_lag.min(shocks.nrows() - 1);
    let white_rows: Vec<Vec<String>> = whiteness_summary(&shocks, max_lag)?
        .into_iter()
        .map(|r| {
            vec![
                format!("shock{}", r.component),
                match r.transform {
                    Transform::Level => "level".into(),
                    Transform::Square => "square".into(),
                },
                r.lag.to_string(),
                fmt_f64(r.acf),
                r.flagged.to_string(),
            ]
        })
        .collect();

    let path = ctx.output("acf.csv");
    write_csv(&path, &["series", "season", "lag", "value"], &acf_rows)?;
    let path = ctx.output("sd.csv");
    write_csv(&path, &["series", "j", "frequency", "value"], &sd_rows)?;
    let path = ctx.output("whiteness.csv");
    write_csv(&path, &["series", "transform", "lag", "acf", "flagged"], &white_rows)
}

/// Reads a JSON output back, for round-trip checks.
pub fn read_params(path: &Path) -> Result<ParamsFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}
