//! Experiment configuration files (TOML).
//!
//! A config names the master seed and the blocks each task needs. Command-line
//! flags are applied on top with [`Overrides`]; the result is the resolved
//! config that every report embeds.

use std::fs;
use std::path::{Path, PathBuf};

use qpost::ising::GibbsConfig;
use qpost::logistic::DesignKind;
use qpost::prior::{select_rho_ising, select_rho_logistic, H2Constants, PriorSpec, SupportLaw};
use qpost::sampler::{ChainConfig, OracleGrid, Symmetrization};
use qpost::theory::{IsingBoundInputs, LogisticBoundInputs};
use qpost::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    GenLogistic,
    GenIsing,
    Fit,
    Oracle,
    Bounds,
    Verify,
    RateStudy,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::GenLogistic => "gen-logistic",
            Task::GenIsing => "gen-ising",
            Task::Fit => "fit",
            Task::Oracle => "oracle",
            Task::Bounds => "bounds",
            Task::Verify => "verify",
            Task::RateStudy => "rate-study",
        }
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Task named in the file; the subcommand takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    pub seed: u64,
    /// Independent data sets per rate-study cell.
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_study: Option<RateStudyConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Logistic(LogisticModelConfig),
    Ising(IsingModelConfig),
}

fn default_signal() -> f64 {
    1.0
}

/// Synthetic logistic data, or a dataset file when `data` is set.
///
/// The generated `θ⋆` has `s_star` nonzero leading coordinates with values
/// `signal, −signal, signal, …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default)]
    pub s_star: usize,
    #[serde(default = "default_signal")]
    pub signal: f64,
    #[serde(default)]
    pub design: DesignKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// vector file with `θ⋆` for an external dataset
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_star: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Graph {
    Empty,
    #[default]
    Chain,
    Cycle,
    Star,
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IsingSampler {
    #[default]
    Exact,
    Gibbs,
}

fn default_edge_weight() -> f64 {
    0.5
}

/// Synthetic Ising data: `θ⋆` has `edge_weight` on the edges of `graph` (or
/// the explicit `edges` list of `[i, j, weight]`) and `field` on the diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsingModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default)]
    pub graph: Graph,
    #[serde(default = "default_edge_weight")]
    pub edge_weight: f64,
    #[serde(default)]
    pub field: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(usize, usize, f64)>>,
    #[serde(default)]
    pub sampler: IsingSampler,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gibbs: Option<GibbsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// matrix file with `θ⋆` for an external dataset
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_star: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoRule {
    AutoLogistic,
    AutoIsing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RhoChoice {
    Value(f64),
    Rule(RhoRule),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPrior", into = "RawPrior")]
pub struct PriorConfig {
    pub law: SupportLaw,
    /// Defaults to the rule of the model kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<RhoChoice>,
    /// Required for explicit laws; beta-binomial laws default to their known constants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h2: Option<H2Constants>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum LawKind {
    #[default]
    BetaBinomial,
    Explicit,
}

/// File layout of `[prior]`: `support_law` defaults to beta-binomial, whose
/// `u` defaults to 2.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrior {
    #[serde(default)]
    support_law: LawKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    g: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho: Option<RhoChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    h2: Option<H2Constants>,
}

impl TryFrom<RawPrior> for PriorConfig {
    type Error = String;

    fn try_from(r: RawPrior) -> std::result::Result<Self, String> {
        let law = match (r.support_law, r.u, r.g) {
            (LawKind::BetaBinomial, u, None) => SupportLaw::BetaBinomial {
                u: u.unwrap_or(2.0),
            },
            (LawKind::Explicit, None, Some(g)) => SupportLaw::Explicit { g },
            (LawKind::BetaBinomial, _, Some(_)) => {
                return Err("`g` belongs to support_law = \"explicit\"".into())
            }
            (LawKind::Explicit, Some(_), _) => {
                return Err("`u` belongs to support_law = \"beta_binomial\"".into())
            }
            (LawKind::Explicit, None, None) => {
                return Err("support_law = \"explicit\" needs `g`".into())
            }
        };
        Ok(Self {
            law,
            rho: r.rho,
            h2: r.h2,
        })
    }
}

impl From<PriorConfig> for RawPrior {
    fn from(p: PriorConfig) -> Self {
        let (support_law, u, g) = match p.law {
            SupportLaw::BetaBinomial { u } => (LawKind::BetaBinomial, Some(u), None),
            SupportLaw::Explicit { g } => (LawKind::Explicit, None, Some(g)),
        };
        Self {
            support_law,
            u,
            g,
            rho: p.rho,
            h2: p.h2,
        }
    }
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            law: SupportLaw::BetaBinomial { u: 2.0 },
            rho: None,
            h2: None,
        }
    }
}

/// Quantities a `ρ` rule may need.
#[derive(Debug, Clone, Copy)]
pub struct RhoContext {
    pub n: usize,
    pub dim: usize,
    pub x_inf: f64,
    /// multiplies rule-based values, never explicit ones
    pub scale: f64,
}

impl PriorConfig {
    pub fn resolve_rho(&self, default: RhoRule, ctx: RhoContext) -> Result<f64> {
        match self.rho.unwrap_or(RhoChoice::Rule(default)) {
            RhoChoice::Value(v) => Ok(v),
            RhoChoice::Rule(RhoRule::AutoLogistic) => {
                Ok(ctx.scale * select_rho_logistic(ctx.x_inf, ctx.n, ctx.dim)?)
            }
            RhoChoice::Rule(RhoRule::AutoIsing) => {
                Ok(ctx.scale * select_rho_ising(ctx.n, ctx.dim)?)
            }
        }
    }

    pub fn h2(&self) -> Result<H2Constants> {
        match (&self.law, self.h2) {
            (_, Some(h)) => Ok(h),
            (SupportLaw::BetaBinomial { u }, None) => Ok(H2Constants::beta_binomial(*u)),
            (SupportLaw::Explicit { .. }, None) => Err(Error::config(
                "prior.h2",
                "explicit support laws need their constants c1..c4",
            )),
        }
    }

    pub fn build(&self, dim: usize, rho: f64) -> Result<PriorSpec> {
        PriorSpec::new(dim, rho, self.law.clone(), self.h2()?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    #[default]
    Zero,
    Truth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IsingMode {
    /// one independent chain per column
    #[default]
    Columns,
    /// one chain updating a random column per step
    Merged,
}

fn half() -> f64 {
    0.5
}

fn yes() -> bool {
    true
}

fn default_k_values() -> Vec<usize> {
    vec![0, 1, 2, 3]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub iterations: usize,
    /// Defaults to a tenth of `iterations`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burnin: Option<usize>,
    #[serde(default = "one")]
    pub thin: usize,
    #[serde(default = "half")]
    pub p_flip: f64,
    #[serde(default = "half")]
    pub rw_scale: f64,
    #[serde(default = "yes")]
    pub adapt: bool,
    #[serde(default)]
    pub init: Init,
    /// Radii `r` for the events `‖θ − θ⋆‖ > r`.
    #[serde(default)]
    pub radii: Vec<f64>,
    /// Offsets `k` for the events `‖θ‖₀ ≥ s⋆ + k`.
    #[serde(default = "default_k_values")]
    pub k_values: Vec<usize>,
    #[serde(default)]
    pub mode: IsingMode,
    #[serde(default)]
    pub symmetrization: Symmetrization,
    /// write the thinned draw store
    #[serde(default = "yes")]
    pub draws: bool,
}

impl SamplerConfig {
    pub fn chain(&self, seed: u64) -> ChainConfig {
        ChainConfig {
            iterations: self.iterations,
            burnin: self.burnin.unwrap_or(self.iterations / 10),
            thin: self.thin,
            p_flip: self.p_flip,
            rw_scale: self.rw_scale,
            adapt: self.adapt,
            seed,
        }
    }
}

fn default_points() -> usize {
    201
}

fn default_budget() -> usize {
    20_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// Defaults to `20/ρ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub radii: Vec<f64>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            half_width: None,
            points: default_points(),
            budget: default_budget(),
            radii: Vec::new(),
        }
    }
}

impl OracleConfig {
    pub fn grid(&self, rho: f64) -> OracleGrid {
        OracleGrid {
            half_width: self.half_width.unwrap_or(20.0 / rho),
            points: self.points,
            budget: self.budget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum BoundsConfig {
    Logistic(LogisticBoundInputs),
    Ising(IsingBoundInputs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    pub n: usize,
    pub d: usize,
    pub s_star: usize,
}

fn default_s_star_grid() -> Vec<usize> {
    vec![3]
}

fn default_rho_scale() -> f64 {
    1.0
}

/// Grid of `(n, d, s⋆)` cells: the product of the three lists, or `cells`
/// verbatim when given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateStudyConfig {
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub d: Vec<usize>,
    #[serde(default = "default_s_star_grid")]
    pub s_star: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<Cell>>,
    #[serde(default = "default_signal")]
    pub signal: f64,
    #[serde(default)]
    pub design: DesignKind,
    /// Multiplies rule-based `ρ`.
    #[serde(default = "default_rho_scale")]
    pub rho_scale: f64,
}

impl RateStudyConfig {
    pub fn grid(&self) -> Vec<Cell> {
        if let Some(c) = &self.cells {
            return c.clone();
        }
        let mut out = Vec::new();
        for &d in &self.d {
            for &s_star in &self.s_star {
                for &n in &self.n {
                    out.push(Cell { n, d, s_star });
                }
            }
        }
        out
    }
}

/// Command-line values that replace config fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub task: Option<Task>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("config", e.to_string()))
    }

    /// Apply flag overrides and check that the blocks the task needs are present.
    pub fn resolve(mut self, o: Overrides) -> Result<(Task, Self)> {
        if let Some(t) = o.task {
            self.task = Some(t);
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = o.out {
            self.output.dir = d;
        }
        if let Some(w) = o.workers {
            self.workers = Some(w);
        }
        let task = self.task.ok_or_else(|| {
            Error::config("task", "no task given on the command line or in the config")
        })?;
        self.validate(task)?;
        Ok((task, self))
    }

    pub fn validate(&self, task: Task) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::config("replications", "must be at least 1"));
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers", "must be at least 1"));
        }
        let need = |present: bool, block: &str| {
            if present {
                Ok(())
            } else {
                Err(Error::config(
                    block,
                    format!("task {} needs a [{block}] block", task.name()),
                ))
            }
        };
        match task {
            Task::GenLogistic => {
                need(
                    matches!(self.model, Some(ModelConfig::Logistic(_))),
                    "model",
                )?;
                self.logistic_model()?.check_generate()?;
            }
            Task::GenIsing => {
                need(matches!(self.model, Some(ModelConfig::Ising(_))), "model")?;
                self.ising_model()?.check_generate()?;
            }
            Task::Fit => {
                need(self.model.is_some(), "model")?;
                need(self.sampler.is_some(), "sampler")?;
                self.check_model()?;
                self.check_sampler()?;
            }
            Task::Oracle => {
                need(
                    matches!(self.model, Some(ModelConfig::Logistic(_))),
                    "model",
                )?;
                self.check_model()?;
            }
            Task::Bounds => need(self.bounds.is_some(), "bounds")?,
            Task::Verify => {}
            Task::RateStudy => {
                need(self.rate_study.is_some(), "rate_study")?;
                need(self.sampler.is_some(), "sampler")?;
                self.check_sampler()?;
                let rs = self.rate_study.as_ref().unwrap();
                if !(rs.rho_scale > 0.0 && rs.rho_scale.is_finite()) {
                    return Err(Error::config("rate_study.rho_scale", "must be positive"));
                }
                let grid = rs.grid();
                if grid.is_empty() {
                    return Err(Error::config("rate_study", "the grid has no cells"));
                }
                if let Some(c) = grid.iter().find(|c| c.s_star > c.d || c.d < 2 || c.n == 0) {
                    return Err(Error::config(
                        "rate_study",
                        format!("invalid cell n={} d={} s_star={}", c.n, c.d, c.s_star),
                    ));
                }
                let mut ns: Vec<usize> = grid.iter().map(|c| c.n).collect();
                ns.sort_unstable();
                ns.dedup();
                if ns.len() < 3 {
                    return Err(Error::config(
                        "rate_study.n",
                        format!(
                            "a slope needs at least 3 distinct n values, got {}",
                            ns.len()
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    fn check_model(&self) -> Result<()> {
        match self.model.as_ref().unwrap() {
            ModelConfig::Logistic(m) if m.data.is_none() => m.check_generate(),
            ModelConfig::Ising(m) if m.data.is_none() => m.check_generate(),
            _ => Ok(()),
        }
    }

    fn check_sampler(&self) -> Result<()> {
        let s = self.sampler.as_ref().unwrap();
        s.chain(self.seed)
            .validate()
            .map_err(|e| Error::config("sampler", e.to_string()))?;
        if s.radii.iter().any(|r| !(*r >= 0.0)) {
            return Err(Error::config("sampler.radii", "radii must be nonnegative"));
        }
        Ok(())
    }

    pub fn logistic_model(&self) -> Result<&LogisticModelConfig> {
        match &self.model {
            Some(ModelConfig::Logistic(m)) => Ok(m),
            _ => Err(Error::config("model", "expected kind = \"logistic\"")),
        }
    }

    pub fn ising_model(&self) -> Result<&IsingModelConfig> {
        match &self.model {
            Some(ModelConfig::Ising(m)) => Ok(m),
            _ => Err(Error::config("model", "expected kind = \"ising\"")),
        }
    }

    pub fn prior(&self) -> PriorConfig {
        self.prior.clone().unwrap_or_default()
    }
}

impl LogisticModelConfig {
    fn check_generate(&self) -> Result<()> {
        let (n, d) = match (self.n, self.d) {
            (Some(n), Some(d)) => (n, d),
            _ => {
                return Err(Error::config(
                    "model",
                    "generating logistic data needs n and d",
                ))
            }
        };
        if n == 0 || d == 0 {
            return Err(Error::config("model", "n and d must be positive"));
        }
        if self.s_star > d {
            return Err(Error::config(
                "model.s_star",
                format!("must not exceed d = {d}"),
            ));
        }
        if !self.signal.is_finite() {
            return Err(Error::config("model.signal", "must be finite"));
        }
        Ok(())
    }
}

impl IsingModelConfig {
    fn check_generate(&self) -> Result<()> {
        let (p, n) = match (self.p, self.n) {
            (Some(p), Some(n)) => (p, n),
            _ => {
                return Err(Error::config(
                    "model",
                    "generating Ising data needs p and n",
                ))
            }
        };
        if p < 2 || n == 0 {
            return Err(Error::config("model", "need p >= 2 and n >= 1"));
        }
        if let Some(e) = &self.edges {
            if let Some(bad) = e.iter().find(|(i, j, _)| i == j || *i >= p || *j >= p) {
                return Err(Error::config(
                    "model.edges",
                    format!(
                        "edge ({}, {}) is not a pair of distinct nodes below p = {p}",
                        bad.0, bad.1
                    ),
                ));
            }
        }
        if self.sampler == IsingSampler::Exact && p > qpost::ising::ENUMERATION_LIMIT {
            return Err(Error::config(
                "model.sampler",
                format!(
                    "exact sampling enumerates 2^p states; use \"gibbs\" for p > {}",
                    qpost::ising::ENUMERATION_LIMIT
                ),
            ));
        }
        Ok(())
    }
}
