//! Ground-truth linear reward model and the two action-set generators.

use std::ops::Range;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Uniform draw on the sphere of the given radius in `ℝ^dim`.
pub fn sample_sphere<R: Rng + ?Sized>(rng: &mut R, dim: usize, radius: f64) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 0.0 {
            return v * (radius / norm);
        }
    }
}

/// The decision set revealed at one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSet {
    actions: Vec<DVector<f64>>,
    round: usize,
}

impl ActionSet {
    pub fn new(round: usize, actions: Vec<DVector<f64>>) -> Result<Self> {
        let first = actions.first().ok_or(Error::Empty("action set"))?;
        let d = first.len();
        if d == 0 {
            return Err(Error::InvalidParameter("zero-dimensional action".into()));
        }
        for a in &actions {
            check_dim(d, a.len())?;
        }
        Ok(Self { actions, round })
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.actions[0].len()
    }

    pub fn actions(&self) -> &[DVector<f64>] {
        &self.actions
    }

    pub fn get(&self, index: usize) -> &DVector<f64> {
        &self.actions[index]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, DVector<f64>> {
        self.actions.iter()
    }

    pub fn max_norm(&self) -> f64 {
        self.actions.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }
}

/// Partition of `ℝ^{k·d_block}` into `k` consecutive coordinate blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupStructure {
    num_groups: usize,
    block_dim: usize,
}

impl GroupStructure {
    pub fn new(num_groups: usize, block_dim: usize) -> Result<Self> {
        if num_groups == 0 || block_dim == 0 {
            return Err(Error::InvalidParameter(
                "group count and block dimension must be positive".into(),
            ));
        }
        Ok(Self {
            num_groups,
            block_dim,
        })
    }

    /// The trivial structure: one block covering the whole space.
    pub fn full(dim: usize) -> Result<Self> {
        Self::new(1, dim)
    }

    pub fn num_groups(&self) -> usize {
        self.num_groups
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn ambient_dim(&self) -> usize {
        self.num_groups * self.block_dim
    }

    pub fn block_of(&self, coordinate: usize) -> usize {
        coordinate / self.block_dim
    }

    pub fn block_range(&self, group: usize) -> Range<usize> {
        group * self.block_dim..(group + 1) * self.block_dim
    }

    /// The single block containing the support of `a`, if there is one.
    pub fn group_of(&self, a: &DVector<f64>) -> Option<usize> {
        let mut found = None;
        for (i, x) in a.iter().enumerate() {
            if *x != 0.0 {
                let g = self.block_of(i);
                match found {
                    None => found = Some(g),
                    Some(h) if h != g => return None,
                    _ => {}
                }
            }
        }
        found
    }
}

/// Embeds `v` into block `i` of the `i`-th action, for `i < num_arms`.
pub fn embed_blocks(v: &DVector<f64>, num_arms: usize) -> Vec<DVector<f64>> {
    let b = v.len();
    (0..num_arms)
        .map(|i| {
            let mut a = DVector::zeros(num_arms * b);
            a.rows_mut(i * b, b).copy_from(v);
            a
        })
        .collect()
}

/// Scenario I: one shared context vector copied into each arm's block.
pub fn gen_scenario_one<R: Rng + ?Sized>(
    rng: &mut R,
    num_arms: usize,
    block_dim: usize,
    radius: f64,
    round: usize,
) -> Result<ActionSet> {
    if num_arms == 0 || block_dim == 0 || !(radius > 0.0) {
        return Err(Error::InvalidParameter(
            "scenario parameters must be positive".into(),
        ));
    }
    let v = sample_sphere(rng, block_dim, radius);
    ActionSet::new(round, embed_blocks(&v, num_arms))
}

/// Scenario II: independent uniform actions on the sphere.
pub fn gen_scenario_two<R: Rng + ?Sized>(
    rng: &mut R,
    num_arms: usize,
    dim: usize,
    radius: f64,
    round: usize,
) -> Result<ActionSet> {
    if num_arms == 0 || dim == 0 || !(radius > 0.0) {
        return Err(Error::InvalidParameter(
            "scenario parameters must be positive".into(),
        ));
    }
    let actions = (0..num_arms)
        .map(|_| sample_sphere(rng, dim, radius))
        .collect();
    ActionSet::new(round, actions)
}

/// Which action-set generator drives an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    /// `num_arms` copies of a shared `block_dim` vector, one per block.
    Grouped {
        num_arms: usize,
        block_dim: usize,
        radius: f64,
    },
    /// `num_arms` independent uniform draws on the sphere in `ℝ^dim`.
    Sphere {
        num_arms: usize,
        dim: usize,
        radius: f64,
    },
}

impl Scenario {
    pub fn reference_grouped() -> Self {
        Scenario::Grouped {
            num_arms: 10,
            block_dim: 12,
            radius: 5.0,
        }
    }

    pub fn reference_sphere() -> Self {
        Scenario::Sphere {
            num_arms: 10,
            dim: 120,
            radius: 5.0,
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            Scenario::Grouped {
                num_arms,
                block_dim,
                ..
            } => num_arms * block_dim,
            Scenario::Sphere { dim, .. } => dim,
        }
    }

    pub fn num_arms(&self) -> usize {
        match *self {
            Scenario::Grouped { num_arms, .. } | Scenario::Sphere { num_arms, .. } => num_arms,
        }
    }

    pub fn radius(&self) -> f64 {
        match *self {
            Scenario::Grouped { radius, .. } | Scenario::Sphere { radius, .. } => radius,
        }
    }

    pub fn groups(&self) -> GroupStructure {
        match *self {
            Scenario::Grouped {
                num_arms,
                block_dim,
                ..
            } => GroupStructure {
                num_groups: num_arms,
                block_dim,
            },
            Scenario::Sphere { dim, .. } => GroupStructure {
                num_groups: 1,
                block_dim: dim,
            },
        }
    }

    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R, round: usize) -> Result<ActionSet> {
        match *self {
            Scenario::Grouped {
                num_arms,
                block_dim,
                radius,
            } => gen_scenario_one(rng, num_arms, block_dim, radius, round),
            Scenario::Sphere {
                num_arms,
                dim,
                radius,
            } => gen_scenario_two(rng, num_arms, dim, radius, round),
        }
    }
}

/// Linear reward model `R(A) = ⟨Θ⋆, A⟩ + ε`, `ε ~ N(0, σ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEnvironment {
    theta_star: DVector<f64>,
    noise_sigma: f64,
    action_bound: f64,
}

impl LinearEnvironment {
    /// `noise_sigma = 0` gives a noiseless environment.
    pub fn new(theta_star: DVector<f64>, noise_sigma: f64, action_bound: f64) -> Result<Self> {
        if theta_star.is_empty() || theta_star.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(
                "theta_star must be finite and non-empty".into(),
            ));
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise sigma must be non-negative, got {noise_sigma}"
            )));
        }
        if !(action_bound > 0.0) {
            return Err(Error::InvalidParameter(
                "action bound must be positive".into(),
            ));
        }
        Ok(Self {
            theta_star,
            noise_sigma,
            action_bound,
        })
    }

    /// Draws `Θ⋆ ~ N(0, I_dim)`.
    pub fn from_prior<R: Rng + ?Sized>(
        rng: &mut R,
        dim: usize,
        noise_sigma: f64,
        action_bound: f64,
    ) -> Result<Self> {
        let theta = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        Self::new(theta, noise_sigma, action_bound)
    }

    pub fn dim(&self) -> usize {
        self.theta_star.len()
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn action_bound(&self) -> f64 {
        self.action_bound
    }

    pub fn mean_reward(&self, a: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), a.len())?;
        Ok(self.theta_star.dot(a))
    }

    /// Always consumes exactly one normal draw, so the noise stream does not
    /// depend on which action is played.
    pub fn draw_reward<R: Rng + ?Sized>(&self, a: &DVector<f64>, rng: &mut R) -> Result<f64> {
        let mean = self.mean_reward(a)?;
        let eps: f64 = rng.sample(StandardNormal);
        Ok(mean + self.noise_sigma * eps)
    }

    /// Index and value of the best action; lowest index wins ties.
    pub fn oracle_best(&self, set: &ActionSet) -> Result<(usize, f64)> {
        check_dim(self.dim(), set.dim())?;
        let mut best = (0, f64::NEG_INFINITY);
        for (i, a) in set.iter().enumerate() {
            let v = self.theta_star.dot(a);
            if v > best.1 {
                best = (i, v);
            }
        }
        Ok(best)
    }

    /// Best reward minus the second-largest *distinct* reward; `+∞` when all
    /// rewards coincide.
    pub fn gap_of_set(&self, set: &ActionSet) -> Result<f64> {
        check_dim(self.dim(), set.dim())?;
        let values: Vec<f64> = set.iter().map(|a| self.theta_star.dot(a)).collect();
        let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let runner_up = values
            .iter()
            .copied()
            .filter(|&v| v < best)
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(if runner_up == f64::NEG_INFINITY {
            f64::INFINITY
        } else {
            best - runner_up
        })
    }
}
