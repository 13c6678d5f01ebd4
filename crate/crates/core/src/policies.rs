//! Confidence radii, confidence intervals, and the worth-maximizing policies.
//!
//! Every policy here picks the argmax of some per-action worth and breaks ties
//! towards the lowest index:
//!
//! | policy | worth of action `A` |
//! |--------|---------------------|
//! | Greedy | `⟨θ̂, A⟩` |
//! | OFUL   | `U(A) = ⟨θ̂, A⟩ + r‖A‖_Σ` |
//! | TS     | `⟨Θ̃, A⟩` with `Θ̃ ~ N(θ̂, ι²Σ)` |
//! | SG     | `U(A)` for the greedy pick among sieved actions, `L(A)` otherwise |

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::ActionSet;
use crate::error::{check_dim, Error, Result};
use crate::linalg::RidgeState;

/// Which closed-form confidence radius to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadiusKind {
    /// Self-normalized martingale radius for the full space.
    Rho,
    /// `max{ρ, ι·√min{2d + 12 log T, 6 log(2nT)}}`, for inflated sampling.
    RhoPrime,
    /// `√(6 log(2nT))`, valid under a Gaussian prior with Gaussian noise.
    RhoDoublePrime,
    /// Group-aware radius for `k` blocks of dimension `d/k`.
    Eta,
}

impl RadiusKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RadiusKind::Rho => "rho",
            RadiusKind::RhoPrime => "rho-prime",
            RadiusKind::RhoDoublePrime => "rho-double-prime",
            RadiusKind::Eta => "eta",
        }
    }
}

impl fmt::Display for RadiusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RadiusKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rho" => Ok(RadiusKind::Rho),
            "rho-prime" => Ok(RadiusKind::RhoPrime),
            "rho-double-prime" => Ok(RadiusKind::RhoDoublePrime),
            "eta" => Ok(RadiusKind::Eta),
            other => Err(Error::Config(format!("unknown radius kind '{other}'"))),
        }
    }
}

/// Problem constants entering the confidence radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusParams {
    /// Ambient dimension.
    pub dim: usize,
    pub horizon: usize,
    /// Bound on action norms.
    pub action_bound: f64,
    pub sigma: f64,
    pub lambda: f64,
    /// Scale of `‖Θ⋆‖₂` in its sub-Gaussian tail bound.
    pub theta_bound: f64,
    /// Maximum number of actions per round.
    pub max_actions: usize,
    /// Number of coordinate groups; the block dimension is `dim / groups`.
    pub groups: usize,
    pub inflation: f64,
}

impl RadiusParams {
    fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return Err(Error::InvalidParameter(format!(
                "horizon must be at least 2, got {}",
                self.horizon
            )));
        }
        if self.dim == 0 || self.max_actions == 0 || self.groups == 0 {
            return Err(Error::InvalidParameter(
                "dimension, action count and group count must be positive".into(),
            ));
        }
        for (name, v) in [
            ("action_bound", self.action_bound),
            ("sigma", self.sigma),
            ("lambda", self.lambda),
            ("theta_bound", self.theta_bound),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.inflation >= 0.0 && self.inflation.is_finite()) {
            return Err(Error::InvalidParameter(
                "inflation must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// `√(d log(1 + T𝐚²/(dσ²)) + 7 log m) + (𝛉 + √(7 log m))/√λ`
    fn martingale_radius(&self, d: usize, log_term: f64) -> f64 {
        let d = d as f64;
        let t = self.horizon as f64;
        let a2 = self.action_bound * self.action_bound;
        let s2 = self.sigma * self.sigma;
        (d * (1.0 + t * a2 / (d * s2)).ln() + 7.0 * log_term).sqrt()
            + (self.theta_bound + (7.0 * log_term).sqrt()) / self.lambda.sqrt()
    }
}

pub fn confidence_radius(kind: RadiusKind, p: &RadiusParams) -> Result<f64> {
    p.validate()?;
    let t = p.horizon as f64;
    let n = p.max_actions as f64;
    let rho = p.martingale_radius(p.dim, t.ln());
    Ok(match kind {
        RadiusKind::Rho => rho,
        RadiusKind::RhoPrime => {
            let d = p.dim as f64;
            let spread = (2.0 * d + 12.0 * t.ln()).min(6.0 * (2.0 * n * t).ln());
            rho.max(p.inflation * spread.sqrt())
        }
        RadiusKind::RhoDoublePrime => (6.0 * (2.0 * n * t).ln()).sqrt(),
        RadiusKind::Eta => {
            if !p.dim.is_multiple_of(p.groups) {
                return Err(Error::InvalidParameter(format!(
                    "dimension {} is not divisible into {} groups",
                    p.dim, p.groups
                )));
            }
            let k = p.groups as f64;
            p.martingale_radius(p.dim / p.groups, (k * t).ln())
        }
    })
}

/// A confidence interval `[L(A), U(A)]` for one action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

fn check_radius(radius: f64) -> Result<()> {
    if radius >= 0.0 && radius.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "radius must be non-negative, got {radius}"
        )))
    }
}

/// Confidence bounds `⟨θ̂, A⟩ ∓ radius·‖A‖_Σ` tied to one posterior state.
#[derive(Debug, Clone, Copy)]
pub struct ConfidenceBand<'a> {
    state: &'a RidgeState,
    radius: f64,
}

impl<'a> ConfidenceBand<'a> {
    pub fn new(state: &'a RidgeState, radius: f64) -> Result<Self> {
        check_radius(radius)?;
        Ok(Self { state, radius })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn interval(&self, a: &DVector<f64>) -> Result<Interval> {
        let mean = self.state.theta_hat().dot(a);
        let half = self.radius * self.state.mahalanobis_sq(a)?.sqrt();
        Ok(Interval {
            lower: mean - half,
            upper: mean + half,
        })
    }

    pub fn intervals(&self, set: &ActionSet) -> Result<Vec<Interval>> {
        check_dim(self.state.dim(), set.dim())?;
        set.iter().map(|a| self.interval(a)).collect()
    }

    /// Largest lower bound over the set.
    pub fn baseline(&self, set: &ActionSet) -> Result<f64> {
        Ok(self
            .intervals(set)?
            .iter()
            .map(|iv| iv.lower)
            .fold(f64::NEG_INFINITY, f64::max))
    }
}

pub fn confidence_interval(state: &RidgeState, radius: f64, a: &DVector<f64>) -> Result<Interval> {
    ConfidenceBand::new(state, radius)?.interval(a)
}

pub fn baseline(state: &RidgeState, radius: f64, set: &ActionSet) -> Result<f64> {
    ConfidenceBand::new(state, radius)?.baseline(set)
}

/// Index of the largest value, lowest index on ties. NaN never wins.
pub(crate) fn argmax<I: IntoIterator<Item = f64>>(values: I) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_value || (i == 0 && !v.is_nan()) {
            best = i;
            best_value = v;
        }
    }
    best
}

fn estimates(state: &RidgeState, set: &ActionSet) -> Result<Vec<f64>> {
    check_dim(state.dim(), set.dim())?;
    Ok(set.iter().map(|a| state.theta_hat().dot(a)).collect())
}

/// ROFUL: play the action of highest worth.
pub fn roful_select<F>(state: &RidgeState, set: &ActionSet, mut worth: F) -> Result<usize>
where
    F: FnMut(&RidgeState, &ActionSet, usize) -> f64,
{
    check_dim(state.dim(), set.dim())?;
    Ok(argmax((0..set.len()).map(|i| worth(state, set, i))))
}

pub fn select_greedy(state: &RidgeState, set: &ActionSet) -> Result<usize> {
    Ok(argmax(estimates(state, set)?))
}

pub fn select_oful(state: &RidgeState, radius: f64, set: &ActionSet) -> Result<usize> {
    let intervals = ConfidenceBand::new(state, radius)?.intervals(set)?;
    Ok(argmax(intervals.iter().map(|iv| iv.upper)))
}

/// Thompson sampling with posterior inflation `ι`; `ι = 1` is Bayesian TS.
pub fn select_ts<R: Rng + ?Sized>(
    state: &mut RidgeState,
    inflation: f64,
    set: &ActionSet,
    rng: &mut R,
) -> Result<usize> {
    check_dim(state.dim(), set.dim())?;
    let theta = state.sample_posterior(inflation, rng)?;
    Ok(argmax(set.iter().map(|a| theta.dot(a))))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "sieving rate must lie in [0, 1], got {alpha}"
        )))
    }
}

fn sieve_intervals(intervals: &[Interval], alpha: f64) -> Vec<usize> {
    let base = intervals
        .iter()
        .map(|iv| iv.lower)
        .fold(f64::NEG_INFINITY, f64::max);
    let top = intervals
        .iter()
        .map(|iv| iv.upper)
        .fold(f64::NEG_INFINITY, f64::max);
    // min() guards α = 1 against B + (U − B) rounding above U.
    let threshold = (base + alpha * (top - base)).min(top);
    intervals
        .iter()
        .enumerate()
        .filter(|(_, iv)| iv.upper >= threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Indices of actions whose upper bound reaches `B + α(max U − B)`.
pub fn sieve_actions(
    state: &RidgeState,
    radius: f64,
    alpha: f64,
    set: &ActionSet,
) -> Result<Vec<usize>> {
    check_alpha(alpha)?;
    let intervals = ConfidenceBand::new(state, radius)?.intervals(set)?;
    Ok(sieve_intervals(&intervals, alpha))
}

fn sieved_greedy_pick(intervals: &[Interval], means: &[f64], alpha: f64) -> usize {
    let survivors = sieve_intervals(intervals, alpha);
    survivors[argmax(survivors.iter().map(|&i| means[i]))]
}

/// Sieved-Greedy: greedy among the actions that survive the sieve.
pub fn select_sg(state: &RidgeState, radius: f64, alpha: f64, set: &ActionSet) -> Result<usize> {
    check_alpha(alpha)?;
    let intervals = ConfidenceBand::new(state, radius)?.intervals(set)?;
    let means = estimates(state, set)?;
    Ok(sieved_greedy_pick(&intervals, &means, alpha))
}

/// Sieved-Greedy expressed as a ROFUL worth: `U` for its own pick and `L`
/// everywhere else.
pub fn sg_worth(state: &RidgeState, radius: f64, alpha: f64, set: &ActionSet) -> Result<Vec<f64>> {
    let pick = select_sg(state, radius, alpha, set)?;
    let intervals = ConfidenceBand::new(state, radius)?.intervals(set)?;
    Ok(intervals
        .iter()
        .enumerate()
        .map(|(i, iv)| if i == pick { iv.upper } else { iv.lower })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Oful,
    Ts,
    Greedy,
    Sg,
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oful" => Ok(PolicyKind::Oful),
            "ts" => Ok(PolicyKind::Ts),
            "greedy" => Ok(PolicyKind::Greedy),
            "sg" => Ok(PolicyKind::Sg),
            other => Err(Error::Config(format!("unknown policy '{other}'"))),
        }
    }
}

/// Algorithm choice plus its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub radius_kind: RadiusKind,
    /// Posterior inflation `ι` (TS only).
    pub inflation: f64,
    /// Sieving rate `α` (SG only).
    pub alpha: f64,
    pub lambda: f64,
    pub sigma: f64,
    /// Fixed radius replacing the closed form, if set.
    pub radius_override: Option<f64>,
}

impl PolicyConfig {
    fn base(kind: PolicyKind) -> Self {
        Self {
            kind,
            radius_kind: RadiusKind::Rho,
            inflation: 1.0,
            alpha: 0.0,
            lambda: 1.0,
            sigma: 1.0,
            radius_override: None,
        }
    }

    pub fn oful() -> Self {
        Self::base(PolicyKind::Oful)
    }

    pub fn greedy() -> Self {
        Self::base(PolicyKind::Greedy)
    }

    pub fn ts(inflation: f64) -> Self {
        Self {
            inflation,
            ..Self::base(PolicyKind::Ts)
        }
    }

    pub fn sg(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::base(PolicyKind::Sg)
        }
    }

    pub fn with_radius_kind(mut self, kind: RadiusKind) -> Self {
        self.radius_kind = kind;
        self
    }

    pub fn with_prior(mut self, lambda: f64, sigma: f64) -> Self {
        self.lambda = lambda;
        self.sigma = sigma;
        self
    }

    /// Stable identifier, also used to key the policy's random stream.
    pub fn label(&self) -> String {
        let mut label = match self.kind {
            PolicyKind::Oful => "oful".to_string(),
            PolicyKind::Greedy => "greedy".to_string(),
            PolicyKind::Ts if self.inflation == 1.0 => "ts".to_string(),
            PolicyKind::Ts => format!("ts-x{}", self.inflation),
            PolicyKind::Sg => format!("sg-{}", self.alpha),
        };
        if matches!(self.kind, PolicyKind::Oful | PolicyKind::Sg) {
            if let Some(r) = self.radius_override {
                label.push_str(&format!("-r{r}"));
            } else if self.radius_kind != RadiusKind::Rho {
                label.push('-');
                label.push_str(self.radius_kind.as_str());
            }
        }
        label
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if self.kind == PolicyKind::Ts && !(self.inflation > 0.0 && self.inflation.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "TS inflation must be positive, got {}",
                self.inflation
            )));
        }
        if !(self.lambda > 0.0 && self.sigma > 0.0) {
            return Err(Error::InvalidParameter(
                "lambda and sigma must be positive".into(),
            ));
        }
        if let Some(r) = self.radius_override {
            check_radius(r)?;
        }
        Ok(())
    }

    /// The radius this policy plays with under the given problem constants.
    pub fn radius(&self, params: &RadiusParams) -> Result<f64> {
        match self.radius_override {
            Some(r) => Ok(r),
            None => {
                let params = RadiusParams {
                    inflation: self.inflation,
                    sigma: self.sigma,
                    lambda: self.lambda,
                    ..*params
                };
                confidence_radius(self.radius_kind, &params)
            }
        }
    }
}

/// A policy bound to its own posterior state.
#[derive(Debug, Clone)]
pub struct Agent {
    config: PolicyConfig,
    radius: f64,
    state: RidgeState,
}

impl Agent {
    pub fn new(config: PolicyConfig, dim: usize, params: &RadiusParams) -> Result<Self> {
        config.validate()?;
        let radius = config.radius(params)?;
        let state = RidgeState::new(dim, config.lambda, config.sigma)?;
        Ok(Self {
            config,
            radius,
            state,
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn state(&self) -> &RidgeState {
        &self.state
    }

    pub fn select<R: Rng + ?Sized>(&mut self, set: &ActionSet, rng: &mut R) -> Result<usize> {
        match self.config.kind {
            PolicyKind::Greedy => select_greedy(&self.state, set),
            PolicyKind::Oful => select_oful(&self.state, self.radius, set),
            PolicyKind::Ts => select_ts(&mut self.state, self.config.inflation, set, rng),
            PolicyKind::Sg => select_sg(&self.state, self.radius, self.config.alpha, set),
        }
    }

    pub fn observe(&mut self, a: &DVector<f64>, reward: f64) -> Result<()> {
        self.state.update(a, reward)
    }
}
