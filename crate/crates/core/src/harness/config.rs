use std::collections::HashSet;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

use crate::environment::Scenario;
use crate::error::{Error, Result};
use crate::policies::{PolicyConfig, PolicyKind, RadiusKind, RadiusParams};

/// Sieving rates of the reference experiments.
pub const DEFAULT_SG_RATES: [f64; 3] = [0.2, 0.5, 0.8];

/// Where a run writes its artifacts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputPaths {
    pub csv: Option<PathBuf>,
    pub svg: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    /// Keep every `thin`-th round in the CSV.
    pub thin: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub horizon: usize,
    pub repetitions: usize,
    pub base_seed: u64,
    pub policies: Vec<PolicyConfig>,
    /// Reward noise scale.
    pub sigma: f64,
    pub lambda: f64,
    /// `𝛉` for the confidence radii; `√d` when unset.
    pub theta_bound: Option<f64>,
    pub parallel: bool,
    /// Record the restricted covariance norm every this many rounds.
    pub expansion_every: Option<usize>,
    pub outputs: OutputPaths,
}

impl ExperimentConfig {
    /// The reference setup for a scenario: `d = 120`, 10 arms, radius 5,
    /// `T = 10 000`, 50 repetitions, `σ = λ = 1`, and the six-policy lineup.
    pub fn preset(scenario: Scenario) -> Self {
        Self {
            scenario,
            horizon: 10_000,
            repetitions: 50,
            base_seed: 0,
            policies: default_policies(1.0, 1.0),
            sigma: 1.0,
            lambda: 1.0,
            theta_bound: None,
            parallel: true,
            expansion_every: None,
            outputs: OutputPaths {
                thin: 10,
                ..OutputPaths::default()
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.scenario.dim()
    }

    pub fn theta_bound(&self) -> f64 {
        self.theta_bound
            .unwrap_or_else(|| (self.dim() as f64).sqrt())
    }

    pub fn radius_params(&self) -> RadiusParams {
        RadiusParams {
            dim: self.dim(),
            horizon: self.horizon,
            action_bound: self.scenario.radius(),
            sigma: self.sigma,
            lambda: self.lambda,
            theta_bound: self.theta_bound(),
            max_actions: self.scenario.num_arms(),
            groups: self.scenario.groups().num_groups(),
            inflation: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.horizon < 2 {
            return Err(Error::Config("horizon must be at least 2".into()));
        }
        if self.scenario.num_arms() == 0 || self.dim() == 0 || !(self.scenario.radius() > 0.0) {
            return Err(Error::Config("scenario parameters must be positive".into()));
        }
        if !(self.sigma > 0.0 && self.lambda > 0.0) {
            return Err(Error::Config("sigma and lambda must be positive".into()));
        }
        if self.outputs.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.expansion_every == Some(0) {
            return Err(Error::Config(
                "expansion interval must be at least 1".into(),
            ));
        }
        let mut labels = HashSet::new();
        for p in &self.policies {
            p.validate().map_err(|e| Error::Config(e.to_string()))?;
            if !labels.insert(p.label()) {
                return Err(Error::Config(format!("duplicate policy '{}'", p.label())));
            }
        }
        Ok(())
    }
}

fn default_policies(sigma: f64, lambda: f64) -> Vec<PolicyConfig> {
    let mut v = vec![
        PolicyConfig::oful(),
        PolicyConfig::ts(1.0),
        PolicyConfig::greedy(),
    ];
    v.extend(DEFAULT_SG_RATES.iter().map(|&a| PolicyConfig::sg(a)));
    v.into_iter().map(|p| p.with_prior(lambda, sigma)).collect()
}

/// Flags of the `run` subcommand. Every flag may also be given as a key of
/// the TOML file passed with `--config`; flags win over the file.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunArgs {
    /// TOML file with the same keys as the flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// 1 (shared context copied into per-arm blocks) or 2 (uniform sphere).
    #[arg(long)]
    pub scenario: Option<String>,
    /// Ambient dimension.
    #[arg(long)]
    pub d: Option<usize>,
    /// Number of groups (scenario 1).
    #[arg(long)]
    pub k: Option<usize>,
    /// Actions per round.
    #[arg(long)]
    pub n: Option<usize>,
    /// Radius of the sphere the actions are drawn on.
    #[arg(long)]
    pub action_radius: Option<f64>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// oful | ts | greedy | sg (repeatable).
    #[arg(long = "policy")]
    pub policy: Option<Vec<String>>,
    /// Sieving rate for sg (repeatable).
    #[arg(long = "alpha")]
    pub alpha: Option<Vec<f64>>,
    /// Posterior inflation for ts.
    #[arg(long)]
    pub inflation: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// rho | rho-prime | rho-double-prime | eta.
    #[arg(long)]
    pub radius_kind: Option<String>,
    /// Fixed confidence radius for oful and sg.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Parameter-norm scale used by the radii (default √d).
    #[arg(long)]
    pub theta_bound: Option<f64>,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    #[arg(long)]
    pub out_svg: Option<PathBuf>,
    /// Per-round trace for `diagnose`.
    #[arg(long)]
    pub out_trace: Option<PathBuf>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// Record the restricted covariance norm every N rounds.
    #[arg(long)]
    pub expansion_every: Option<usize>,
    /// Run repetitions one after another.
    #[arg(long)]
    #[serde(default)]
    pub sequential: bool,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($field:ident),*) => {
        $( if $src.$field.is_some() { $dst.$field = $src.$field; } )*
    };
}

impl RunArgs {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
    }

    /// `self` with every field set in `other` replaced.
    fn overlaid(mut self, other: RunArgs) -> Self {
        overlay!(self, other; scenario, d, k, n, action_radius, horizon, reps, seed, policy,
            alpha, inflation, sigma, lambda, radius_kind, radius, theta_bound, out_csv,
            out_svg, out_trace, thin, expansion_every);
        self.sequential |= other.sequential;
        self
    }

    pub fn into_config(self) -> Result<ExperimentConfig> {
        let args = match &self.config {
            Some(path) => Self::from_toml_file(path)?.overlaid(self),
            None => self,
        };

        let scenario_one = match args.scenario.as_deref().unwrap_or("1") {
            "1" | "scenario1" | "one" => true,
            "2" | "scenario2" | "two" => false,
            other => return Err(Error::Config(format!("unknown scenario '{other}'"))),
        };
        let radius = args.action_radius.unwrap_or(5.0);
        let d = args.d.unwrap_or(120);
        let scenario = if scenario_one {
            let k = args.k.unwrap_or(10);
            if k == 0 || d % k != 0 {
                return Err(Error::Config(format!(
                    "scenario 1 needs d divisible by k (d = {d}, k = {k})"
                )));
            }
            if let Some(n) = args.n {
                if n != k {
                    return Err(Error::Config(format!(
                        "scenario 1 has one action per group: n = {n} but k = {k}"
                    )));
                }
            }
            Scenario::Grouped {
                num_arms: k,
                block_dim: d / k,
                radius,
            }
        } else {
            if args.k.is_some() {
                return Err(Error::Config("--k applies to scenario 1 only".into()));
            }
            Scenario::Sphere {
                num_arms: args.n.unwrap_or(10),
                dim: d,
                radius,
            }
        };

        let mut cfg = ExperimentConfig::preset(scenario);
        if let Some(t) = args.horizon {
            cfg.horizon = t;
        }
        if let Some(r) = args.reps {
            cfg.repetitions = r;
        }
        if let Some(s) = args.seed {
            cfg.base_seed = s;
        }
        if let Some(s) = args.sigma {
            cfg.sigma = s;
        }
        if let Some(l) = args.lambda {
            cfg.lambda = l;
        }
        cfg.theta_bound = args.theta_bound;
        cfg.parallel = !args.sequential;
        cfg.expansion_every = args.expansion_every;
        cfg.outputs = OutputPaths {
            csv: args.out_csv,
            svg: args.out_svg,
            trace: args.out_trace,
            thin: args.thin.unwrap_or(10),
        };

        let radius_kind = match &args.radius_kind {
            Some(s) => s.parse::<RadiusKind>()?,
            None => RadiusKind::Rho,
        };
        let inflation = args.inflation.unwrap_or(1.0);
        let alphas = args.alpha.unwrap_or_else(|| DEFAULT_SG_RATES.to_vec());
        let kinds: Vec<PolicyKind> = match &args.policy {
            Some(names) => names.iter().map(|n| n.parse()).collect::<Result<_>>()?,
            None => vec![
                PolicyKind::Oful,
                PolicyKind::Ts,
                PolicyKind::Greedy,
                PolicyKind::Sg,
            ],
        };
        let mut policies = Vec::new();
        for kind in kinds {
            let base = match kind {
                PolicyKind::Oful => vec![PolicyConfig::oful()],
                PolicyKind::Ts => vec![PolicyConfig::ts(inflation)],
                PolicyKind::Greedy => vec![PolicyConfig::greedy()],
                PolicyKind::Sg => alphas.iter().map(|&a| PolicyConfig::sg(a)).collect(),
            };
            for mut p in base {
                p = p
                    .with_prior(cfg.lambda, cfg.sigma)
                    .with_radius_kind(radius_kind);
                p.radius_override = args.radius;
                policies.push(p);
            }
        }
        cfg.policies = policies;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, clap::Parser)]
#[command(no_binary_name = true)]
struct RunOnly {
    #[command(flatten)]
    args: RunArgs,
}

/// Parses `run` flags (without the program or subcommand name).
pub fn parse_config<I, T>(argv: I) -> Result<ExperimentConfig>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    use clap::Parser;
    let parsed = RunOnly::try_parse_from(argv).map_err(|e| {
        let msg = e.to_string();
        Error::Config(
            msg.lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ")
                .to_string(),
        )
    })?;
    parsed.args.into_config()
}
