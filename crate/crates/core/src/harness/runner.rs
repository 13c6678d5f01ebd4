use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::seed::{policy_stream, stream, ROLE_ACTIONS, ROLE_NOISE, ROLE_THETA};
use crate::analytics::{restricted_op_norm, uncertainty_v, RegretTrace, Restriction, RoundRecord};
use crate::environment::{LinearEnvironment, Scenario};
use crate::error::{Error, Result};
use crate::policies::{Agent, PolicyConfig};

/// Output of one (repetition, policy) simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub repetition: usize,
    pub trace: RegretTrace,
    /// `(t, ‖WᵀΣ_tW‖_op)` for the optimal action's block, when recorded.
    pub expansion: Vec<(usize, f64)>,
}

/// Simulates `config.horizon` rounds of `policy` in repetition `repetition`.
///
/// `Θ⋆`, the action sets and the reward noise come from streams keyed by
/// `(base_seed, repetition)` only, so every policy of a repetition faces the
/// same environment. The policy's own randomness is keyed by its label.
pub fn run_episode(
    config: &ExperimentConfig,
    policy: &PolicyConfig,
    repetition: usize,
) -> Result<Episode> {
    config.validate()?;
    let label = policy.label();
    simulate(config, policy, repetition, &label).map_err(|e| Error::Episode {
        repetition,
        policy: label,
        source: Box::new(e),
    })
}

fn simulate(
    config: &ExperimentConfig,
    policy: &PolicyConfig,
    repetition: usize,
    label: &str,
) -> Result<Episode> {
    let scenario = config.scenario;
    let dim = scenario.dim();
    let seed = config.base_seed;

    let env = LinearEnvironment::from_prior(
        &mut stream(seed, repetition, ROLE_THETA),
        dim,
        config.sigma,
        scenario.radius(),
    )?;
    let mut action_rng = stream(seed, repetition, ROLE_ACTIONS);
    let mut noise_rng = stream(seed, repetition, ROLE_NOISE);
    let mut policy_rng = policy_stream(seed, repetition, label);

    let mut agent = Agent::new(policy.clone(), dim, &config.radius_params())?;
    let mut trace = RegretTrace::with_capacity(label, config.horizon);
    let mut expansion = Vec::new();
    let groups = scenario.groups();

    for t in 1..=config.horizon {
        let set = scenario.generate(&mut action_rng, t)?;
        let (best, best_value) = env.oracle_best(&set)?;
        let gap = env.gap_of_set(&set)?;

        let chosen = agent.select(&set, &mut policy_rng)?;
        let action = set.get(chosen);
        let uncertainty = uncertainty_v(agent.state(), action)?;
        let reward = env.draw_reward(action, &mut noise_rng)?;
        agent.observe(action, reward)?;

        let inst_regret = best_value - env.mean_reward(action)?;
        trace.push(RoundRecord {
            round: t,
            chosen,
            inst_regret,
            gap,
            uncertainty,
        })?;

        if let Some(every) = config.expansion_every {
            if t % every == 0 {
                let restriction = match scenario {
                    Scenario::Grouped { .. } => Restriction::Block {
                        groups,
                        block: groups.group_of(set.get(best)).unwrap_or(0),
                    },
                    Scenario::Sphere { .. } => Restriction::Full,
                };
                expansion.push((t, restricted_op_norm(agent.state().cov(), &restriction)?));
            }
        }
    }

    Ok(Episode {
        repetition,
        trace,
        expansion,
    })
}

/// Mean and standard deviation curves of one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyAggregate {
    pub label: String,
    pub mean: Vec<f64>,
    /// Sample standard deviation across repetitions (0 for one repetition).
    pub sd: Vec<f64>,
    /// Final cumulative regret of each repetition, by repetition index.
    pub finals: Vec<f64>,
}

impl PolicyAggregate {
    pub fn final_mean(&self) -> f64 {
        self.mean.last().copied().unwrap_or(0.0)
    }

    pub fn final_sd(&self) -> f64 {
        self.sd.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub horizon: usize,
    pub repetitions: usize,
    pub policies: Vec<PolicyAggregate>,
}

impl AggregateResult {
    pub fn policy(&self, label: &str) -> Option<&PolicyAggregate> {
        self.policies.iter().find(|p| p.label == label)
    }
}

/// Everything produced by a run: the aggregate plus, per repetition, one
/// episode per policy (in configuration order).
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub aggregate: AggregateResult,
    pub episodes: Vec<Vec<Episode>>,
}

/// Pointwise running mean / variance (Welford), fed in repetition order.
struct CurveAccumulator {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
    finals: Vec<f64>,
}

impl CurveAccumulator {
    fn new(horizon: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; horizon],
            m2: vec![0.0; horizon],
            finals: Vec::new(),
        }
    }

    fn add(&mut self, curve: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(curve) {
            let delta = x - *m;
            *m += delta / n;
            *s += delta * (x - *m);
        }
        self.finals.push(curve.last().copied().unwrap_or(0.0));
    }

    fn finish(self, label: String) -> PolicyAggregate {
        let denom = self.n.saturating_sub(1) as f64;
        let sd = self
            .m2
            .iter()
            .map(|&s| {
                if self.n > 1 {
                    (s / denom).max(0.0).sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        PolicyAggregate {
            label,
            mean: self.mean,
            sd,
            finals: self.finals,
        }
    }
}

fn run_repetition(config: &ExperimentConfig, repetition: usize) -> Result<Vec<Episode>> {
    config
        .policies
        .iter()
        .map(|p| run_episode(config, p, repetition))
        .collect()
}

fn aggregate<'a, I>(config: &ExperimentConfig, repetitions: I) -> AggregateResult
where
    I: IntoIterator<Item = &'a Vec<Episode>>,
{
    let mut accs: Vec<CurveAccumulator> = config
        .policies
        .iter()
        .map(|_| CurveAccumulator::new(config.horizon))
        .collect();
    for episodes in repetitions {
        for (acc, ep) in accs.iter_mut().zip(episodes) {
            acc.add(ep.trace.cumulative());
        }
    }
    AggregateResult {
        horizon: config.horizon,
        repetitions: config.repetitions,
        policies: accs
            .into_iter()
            .zip(&config.policies)
            .map(|(acc, p)| acc.finish(p.label()))
            .collect(),
    }
}

/// Runs every (repetition, policy) pair and keeps all episodes.
pub fn run_experiment_detailed(config: &ExperimentConfig) -> Result<ExperimentRun> {
    config.validate()?;
    let reps: Vec<usize> = (0..config.repetitions).collect();
    let episodes: Vec<Vec<Episode>> = if config.parallel {
        reps.par_iter()
            .map(|&r| run_repetition(config, r))
            .collect::<Result<_>>()?
    } else {
        reps.iter()
            .map(|&r| run_repetition(config, r))
            .collect::<Result<_>>()?
    };
    let aggregate = aggregate(config, &episodes);
    Ok(ExperimentRun {
        aggregate,
        episodes,
    })
}

/// Runs the experiment and returns the pointwise mean ± SD curves.
pub fn run_experiment(config: &ExperimentConfig) -> Result<AggregateResult> {
    Ok(run_experiment_detailed(config)?.aggregate)
}
