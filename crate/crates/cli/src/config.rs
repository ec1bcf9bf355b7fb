//! Declarative run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use spvar_core::bootstrap::{BootstrapConfig, BootstrapMethod, CiMethod};
use spvar_core::estimation::{
    build_restrictions, PeersmanVariant, PresamplePolicy, RestrictionPattern, RestrictionSet, SigmaDivisor,
};
use spvar_core::identification::{IdentKind, IdentScheme, ImpactNormalization};
use spvar_core::model::{PvarParams, PvarSpec};
use spvar_core::simulation::{GarchSpec, ShockMapping};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// CSV file, relative to the configuration file.
    #[serde(default)]
    pub data: Option<PathBuf>,
    pub seasons: usize,
    pub variables: Vec<String>,
    pub orders: Orders,
    /// Leading CSV rows used only as presample.
    #[serde(default)]
    pub presample_rows: usize,
    #[serde(default)]
    pub presample_policy: PresamplePolicy,
    /// Variables replaced by first differences of their logarithm.
    #[serde(default)]
    pub diff_log: Vec<String>,
    #[serde(default = "default_restrictions")]
    pub restrictions: RestrictionConfig,
    #[serde(default = "default_identification")]
    pub identification: IdentificationConfig,
    #[serde(default)]
    pub sigma_divisor: SigmaDivisor,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub bootstrap: BootstrapSection,
    #[serde(default)]
    pub simulation: Option<SimulationSection>,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_restrictions() -> RestrictionConfig {
    RestrictionConfig::Preset(RestrictionPreset::Unrestricted)
}

fn default_identification() -> IdentificationConfig {
    IdentificationConfig::Preset(IdentPreset::Cholesky)
}

fn default_horizon() -> usize {
    24
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Orders {
    Uniform(usize),
    PerSeason(Vec<usize>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestrictionPreset {
    Unrestricted,
    VarCollapse,
    PeersmanPattern,
    PeersmanPatternNonseasonalFfr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RestrictionConfig {
    Preset(RestrictionPreset),
    Grid(GridConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub grid: RestrictionPattern,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentPreset {
    Cholesky,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IdentificationConfig {
    Preset(IdentPreset),
    Scheme(SchemeConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub kind: IdentKind,
    #[serde(default)]
    pub short_zeros: Vec<(usize, usize)>,
    #[serde(default)]
    pub long_zeros: Vec<(usize, usize)>,
    #[serde(default)]
    pub normalization: Option<NormalizationConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationConfig {
    pub variable: String,
    pub shock: usize,
    pub size: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSection {
    #[serde(default = "default_method")]
    pub method: BootstrapMethod,
    #[serde(default = "default_block")]
    pub b: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ci")]
    pub ci_method: CiMethod,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_method() -> BootstrapMethod {
    BootstrapMethod::SeasonalBlock
}

fn default_block() -> usize {
    7
}

fn default_replicates() -> usize {
    500
}

fn default_ci() -> CiMethod {
    CiMethod::MedianAdjusted
}

fn default_alpha() -> f64 {
    0.32
}

impl Default for BootstrapSection {
    fn default() -> Self {
        Self {
            method: default_method(),
            b: default_block(),
            replicates: default_replicates(),
            seed: 0,
            ci_method: default_ci(),
            alpha: default_alpha(),
        }
    }
}

impl BootstrapSection {
    pub fn to_core(&self) -> BootstrapConfig {
        BootstrapConfig {
            method: self.method,
            block_len: self.b,
            replicates: self.replicates,
            seed: self.seed,
            ci_method: self.ci_method,
            alpha: self.alpha,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GarchConfig {
    Preset(String),
    Params { a1: f64, b1: f64 },
}

impl GarchConfig {
    pub fn resolve(&self) -> Result<GarchSpec, CliError> {
        match self {
            GarchConfig::Preset(name) => GarchSpec::preset(name)
                .ok_or_else(|| CliError::Config(format!("simulation.garch: unknown preset {name:?}"))),
            GarchConfig::Params { a1, b1 } => {
                GarchSpec::new(*a1, *b1).map_err(|e| CliError::Config(format!("simulation.garch: {e}")))
            }
        }
    }
}

/// Data-generating process for `simulate` and `coverage`. Matrices are
/// written row by row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub intercepts: Vec<Vec<f64>>,
    pub coeffs: Vec<Vec<Vec<Vec<f64>>>>,
    pub h0: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub dgp: DgpConfig,
    #[serde(default = "default_garch")]
    pub garch: GarchConfig,
    pub cycles: usize,
    #[serde(default)]
    pub floors: BTreeMap<String, f64>,
    #[serde(default)]
    pub shock_mapping: ShockMapping,
    #[serde(default = "default_mc_reps")]
    pub mc_reps: usize,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<usize>,
    #[serde(default = "default_nominal")]
    pub nominal: f64,
}

fn default_garch() -> GarchConfig {
    GarchConfig::Preset("G0".into())
}

fn default_mc_reps() -> usize {
    500
}

fn default_horizons() -> Vec<usize> {
    vec![0, 12]
}

fn default_nominal() -> f64 {
    0.68
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    #[serde(default = "default_max_lag")]
    pub max_lag: usize,
    #[serde(default = "default_bandwidth")]
    pub bandwidth: usize,
}

fn default_max_lag() -> usize {
    24
}

fn default_bandwidth() -> usize {
    2
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self { max_lag: default_max_lag(), bandwidth: default_bandwidth() }
    }
}

fn matrix(rows: &[Vec<f64>], m: usize, what: &str) -> Result<DMatrix<f64>, CliError> {
    if rows.len() != m || rows.iter().any(|r| r.len() != m) {
        return Err(CliError::Config(format!("{what}: expected a {m}x{m} matrix")));
    }
    Ok(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(data) = &cfg.data {
            if data.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.data = Some(base.join(data));
            }
        }
        if cfg.output.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.output = base.join(&cfg.output);
        }
        cfg.spec()?;
        Ok(cfg)
    }

    pub fn spec(&self) -> Result<PvarSpec, CliError> {
        let orders = match &self.orders {
            Orders::Uniform(p) => vec![*p; self.seasons],
            Orders::PerSeason(v) => v.clone(),
        };
        PvarSpec::new(self.seasons, self.variables.len(), orders, self.variables.clone())
            .map_err(|e| CliError::Config(format!("model: {e}")))
    }

    pub fn var_index(&self, name: &str, field: &str) -> Result<usize, CliError> {
        self.variables
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| CliError::Config(format!("{field}: unknown variable {name:?}")))
    }

    pub fn restriction_set(&self, spec: &PvarSpec) -> Result<RestrictionSet, CliError> {
        let pattern = match &self.restrictions {
            RestrictionConfig::Preset(RestrictionPreset::Unrestricted) => RestrictionPattern::unrestricted(spec),
            RestrictionConfig::Preset(RestrictionPreset::VarCollapse) => RestrictionPattern::var_collapse(spec),
            RestrictionConfig::Preset(RestrictionPreset::PeersmanPattern) => {
                RestrictionPattern::peersman(spec, PeersmanVariant::AsDisplayed)
                    .map_err(|e| CliError::Config(format!("restrictions: {e}")))?
            }
            RestrictionConfig::Preset(RestrictionPreset::PeersmanPatternNonseasonalFfr) => {
                RestrictionPattern::peersman(spec, PeersmanVariant::NonSeasonalFfr)
                    .map_err(|e| CliError::Config(format!("restrictions: {e}")))?
            }
            RestrictionConfig::Grid(g) => g.grid.clone(),
        };
        build_restrictions(spec, &pattern).map_err(|e| CliError::Config(format!("restrictions: {e}")))
    }

    pub fn scheme(&self) -> Result<IdentScheme, CliError> {
        let m = self.variables.len();
        let scheme = match &self.identification {
            IdentificationConfig::Preset(IdentPreset::Cholesky) => IdentScheme::cholesky(),
            IdentificationConfig::Scheme(s) => {
                let normalization = match &s.normalization {
                    Some(n) => Some(ImpactNormalization {
                        variable: self.var_index(&n.variable, "identification.normalization.variable")? + 1,
                        shock: n.shock,
                        size: n.size,
                    }),
                    None => None,
                };
                IdentScheme {
                    kind: s.kind,
                    short_zeros: s.short_zeros.clone(),
                    long_zeros: s.long_zeros.clone(),
                    normalization,
                }
            }
        };
        scheme
            .validate(m)
            .map_err(|e| CliError::Config(format!("identification: {e}")))?;
        Ok(scheme)
    }

    pub fn simulation(&self) -> Result<&SimulationSection, CliError> {
        self.simulation
            .as_ref()
            .ok_or_else(|| CliError::Config("simulation: section required for this command".into()))
    }

    /// DGP parameters (covariances set to `H0 H0'`) and impact matrices.
    pub fn dgp(&self, spec: &PvarSpec) -> Result<(PvarParams, Vec<DMatrix<f64>>), CliError> {
        let sim = self.simulation()?;
        let (s_count, m) = (spec.num_seasons(), spec.num_vars());
        let dgp = &sim.dgp;
        if dgp.intercepts.len() != s_count || dgp.coeffs.len() != s_count || dgp.h0.len() != s_count {
            return Err(CliError::Config(format!("simulation.dgp: one entry per season ({s_count}) required")));
        }
        let mut intercepts = Vec::with_capacity(s_count);
        let mut coeffs = Vec::with_capacity(s_count);
        let mut h0 = Vec::with_capacity(s_count);
        for s in 0..s_count {
            if dgp.intercepts[s].len() != m {
                return Err(CliError::Config(format!("simulation.dgp.intercepts[{s}]: expected {m} values")));
            }
            intercepts.push(DVector::from_vec(dgp.intercepts[s].clone()));
            if dgp.coeffs[s].len() != spec.order(s + 1) {
                return Err(CliError::Config(format!(
                    "simulation.dgp.coeffs[{s}]: expected {} lag matrices",
                    spec.order(s + 1)
                )));
            }
            coeffs.push(
                dgp.coeffs[s]
                    .iter()
                    .enumerate()
                    .map(|(j, a)| matrix(a, m, &format!("simulation.dgp.coeffs[{s}][{j}]")))
                    .collect::<Result<Vec<_>, _>>()?,
            );
            h0.push(matrix(&dgp.h0[s], m, &format!("simulation.dgp.h0[{s}]"))?);
        }
        let sigma = h0.iter().map(|h| h * h.transpose()).collect();
        let params = PvarParams::new(spec.clone(), intercepts, coeffs, sigma)
            .map_err(|e| CliError::Config(format!("simulation.dgp: {e}")))?;
        Ok((params, h0))
    }

    pub fn floors(&self) -> Result<Vec<Option<f64>>, CliError> {
        let mut out = vec![None; self.variables.len()];
        if let Some(sim) = &self.simulation {
            for (name, &bound) in &sim.floors {
                out[self.var_index(name, "simulation.floors")?] = Some(bound);
            }
        }
        Ok(out)
    }
}
