//! Regret accounting, uncertainty complexity, regret-bound certificates and
//! empirical gap / expansion diagnostics.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::environment::GroupStructure;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{quadratic_form, RidgeState};
use crate::policies::{confidence_radius, PolicyConfig, PolicyKind, RadiusKind, RadiusParams};

/// One simulated round as seen by the analytics layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub chosen: usize,
    pub inst_regret: f64,
    pub gap: f64,
    /// `min{σ², ‖Ã_t‖²_{Σ_{t−1}}}`.
    pub uncertainty: f64,
}

/// Per-round regret of one policy over one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub policy_label: String,
    records: Vec<RoundRecord>,
    cumulative: Vec<f64>,
}

impl RegretTrace {
    pub fn new(policy_label: impl Into<String>) -> Self {
        Self {
            policy_label: policy_label.into(),
            records: Vec::new(),
            cumulative: Vec::new(),
        }
    }

    pub fn with_capacity(policy_label: impl Into<String>, horizon: usize) -> Self {
        Self {
            policy_label: policy_label.into(),
            records: Vec::with_capacity(horizon),
            cumulative: Vec::with_capacity(horizon),
        }
    }

    /// Appends a round. Instantaneous regret must be non-negative.
    pub fn push(&mut self, record: RoundRecord) -> Result<()> {
        if !(record.inst_regret >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "negative instantaneous regret {} at round {}",
                record.inst_regret, record.round
            )));
        }
        let prev = self.cumulative.last().copied().unwrap_or(0.0);
        self.cumulative.push(prev + record.inst_regret);
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn final_regret(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn gaps(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.gap).collect()
    }

    /// `Σ_t V_t(Ã_t)`.
    pub fn total_uncertainty(&self) -> f64 {
        self.records.iter().map(|r| r.uncertainty).sum()
    }
}

/// `V_t(A) = min{σ², ‖A‖²_{Σ_{t−1}}}`, with `state` holding `Σ_{t−1}`.
pub fn uncertainty_v(state: &RidgeState, a: &DVector<f64>) -> Result<f64> {
    let s2 = state.sigma() * state.sigma();
    Ok(state.mahalanobis_sq(a)?.min(s2))
}

/// `2σ²d·log(1 + T𝐚²λ/(dσ²))`.
pub fn uncertainty_complexity_bound(
    dim: usize,
    horizon: usize,
    action_bound: f64,
    lambda: f64,
    sigma: f64,
) -> f64 {
    let d = dim as f64;
    let s2 = sigma * sigma;
    2.0 * s2 * d * (1.0 + horizon as f64 * action_bound * action_bound * lambda / (d * s2)).ln()
}

/// `D` when `‖Θ⋆‖₂ ≤ 1` almost surely.
pub fn bounded_deviation_constant(action_bound: f64) -> f64 {
    4.0 * action_bound * action_bound
}

/// Conservative `D` for a Gaussian `Θ⋆`: `4𝐚²(𝛉 + √(7 log T))²`.
pub fn gaussian_deviation_constant(action_bound: f64, theta_bound: f64, horizon: usize) -> f64 {
    let r = theta_bound + (7.0 * (horizon as f64).ln()).sqrt();
    4.0 * action_bound * action_bound * r * r
}

/// Inputs of the ROFUL regret bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateInputs {
    /// Uncertainty complexity `K`.
    pub complexity: f64,
    /// Optimism parameter `p ∈ (0, 1]`.
    pub optimism: f64,
    /// Deviation constant `D`.
    pub deviation: f64,
    pub horizon: usize,
    /// Gap level `δ`.
    pub delta: f64,
    /// `q_δ ≥ P(Δ_t ≤ δ)`.
    pub q_delta: f64,
}

impl CertificateInputs {
    /// `δ* = √((2K/p + D)/T)`, the minimizer of the gap-dependent bound at
    /// `q_δ = 1`.
    pub fn optimal_delta(complexity: f64, optimism: f64, deviation: f64, horizon: usize) -> f64 {
        ((2.0 * complexity / optimism + deviation) / horizon as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub complexity: f64,
    pub optimism: f64,
    pub deviation: f64,
    pub horizon: usize,
    pub delta: f64,
    pub q_delta: f64,
    /// `2K/(δp) + D/δ + Tδq_δ`
    pub gap_dependent_bound: f64,
    /// `2√((2K/p + D)T)`
    pub gap_independent_bound: f64,
}

pub fn regret_bounds(inputs: &CertificateInputs) -> Result<BoundCertificate> {
    let CertificateInputs {
        complexity,
        optimism,
        deviation,
        horizon,
        delta,
        q_delta,
    } = *inputs;
    if !(complexity > 0.0 && deviation > 0.0 && delta > 0.0 && horizon > 0) {
        return Err(Error::InvalidParameter(
            "K, D, delta and horizon must be positive".into(),
        ));
    }
    if !(optimism > 0.0 && optimism <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "optimism parameter must lie in (0, 1], got {optimism}"
        )));
    }
    if !(0.0..=1.0).contains(&q_delta) {
        return Err(Error::InvalidParameter(format!(
            "q_delta must lie in [0, 1], got {q_delta}"
        )));
    }
    let t = horizon as f64;
    let scaled = 2.0 * complexity / optimism;
    Ok(BoundCertificate {
        complexity,
        optimism,
        deviation,
        horizon,
        delta,
        q_delta,
        gap_dependent_bound: scaled / delta + deviation / delta + t * delta * q_delta,
        gap_independent_bound: 2.0 * ((scaled + deviation) * t).sqrt(),
    })
}

/// How the certificate constants were chosen for one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCertificate {
    pub policy: String,
    /// Radius `r` of the confidence bounds behind `K = 4r²·K₁`.
    pub radius: f64,
    pub certificate: BoundCertificate,
}

/// Gap-independent certificate for a worth-maximizing policy.
///
/// The confidence bounds have width `2r‖A‖_Σ`, so the uncertainty structure
/// `(U − L)²` has complexity `K = 4r²·K₁` with `K₁` the clipped-norm bound of
/// [`uncertainty_complexity_bound`]. The optimism parameter is `1` for OFUL
/// and for TS with `ι = 1` (exact posterior), `Φ(−ρ/ι)/2` for inflated TS
/// (whose bounds use `ρ′`), and `α²` for SG. Greedy is not optimistic and has
/// no certificate.
pub fn policy_certificate(
    policy: &PolicyConfig,
    params: &RadiusParams,
    deviation: f64,
) -> Result<PolicyCertificate> {
    let params = RadiusParams {
        sigma: policy.sigma,
        lambda: policy.lambda,
        inflation: policy.inflation,
        ..*params
    };
    let (radius, optimism) = match policy.kind {
        PolicyKind::Greedy => {
            return Err(Error::InvalidParameter(
                "greedy has no optimism parameter".into(),
            ))
        }
        PolicyKind::Oful => (policy.radius(&params)?, 1.0),
        PolicyKind::Sg => (policy.radius(&params)?, policy.alpha * policy.alpha),
        PolicyKind::Ts if policy.inflation == 1.0 => {
            (confidence_radius(RadiusKind::Rho, &params)?, 1.0)
        }
        PolicyKind::Ts => {
            let rho = confidence_radius(RadiusKind::Rho, &params)?;
            let std_normal = Normal::standard();
            (
                confidence_radius(RadiusKind::RhoPrime, &params)?,
                std_normal.cdf(-rho / policy.inflation) / 2.0,
            )
        }
    };
    let complexity = 4.0
        * radius
        * radius
        * uncertainty_complexity_bound(
            params.dim,
            params.horizon,
            params.action_bound,
            params.lambda,
            params.sigma,
        );
    let delta = CertificateInputs::optimal_delta(complexity, optimism, deviation, params.horizon);
    let certificate = regret_bounds(&CertificateInputs {
        complexity,
        optimism,
        deviation,
        horizon: params.horizon,
        delta,
        q_delta: 1.0,
    })?;
    Ok(PolicyCertificate {
        policy: policy.label(),
        radius,
        certificate,
    })
}

/// Fraction of rounds with `Δ_t ≤ z`.
pub fn empirical_margin(gaps: &[f64], z: f64) -> Result<f64> {
    if gaps.is_empty() {
        return Err(Error::Empty("gap list"));
    }
    if !(z > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "z must be positive, got {z}"
        )));
    }
    let hits = gaps.iter().filter(|&&g| g <= z).count();
    Ok(hits as f64 / gaps.len() as f64)
}

/// Empirical margin curve and its least-squares slope through the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginFit {
    pub delta: f64,
    /// `(z, P̂(Δ ≤ z))` on 20 equally spaced points of `(0, δ]`.
    pub curve: Vec<(f64, f64)>,
    /// Fitted `c₀` in `P(Δ ≤ z) ≤ c₀z`.
    pub c0: f64,
    /// `P̂(Δ ≤ δ)`, an estimate of `q_δ`.
    pub q_delta: f64,
}

pub const MARGIN_GRID_POINTS: usize = 20;

/// Nearest-rank 10th percentile of the finite gaps.
pub fn default_gap_level(gaps: &[f64]) -> Option<f64> {
    let mut finite: Vec<f64> = gaps.iter().copied().filter(|g| g.is_finite()).collect();
    if finite.is_empty() {
        return None;
    }
    finite.sort_by(f64::total_cmp);
    let rank = ((0.1 * finite.len() as f64).ceil() as usize).max(1);
    Some(finite[rank - 1])
}

pub fn fit_margin(gaps: &[f64], delta: Option<f64>) -> Result<MarginFit> {
    if gaps.is_empty() {
        return Err(Error::Empty("gap list"));
    }
    let delta = match delta {
        Some(d) => d,
        None => default_gap_level(gaps).ok_or(Error::Empty("finite gaps"))?,
    };
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gap level must be positive, got {delta}"
        )));
    }
    let mut curve = Vec::with_capacity(MARGIN_GRID_POINTS);
    for i in 1..=MARGIN_GRID_POINTS {
        let z = delta * i as f64 / MARGIN_GRID_POINTS as f64;
        curve.push((z, empirical_margin(gaps, z)?));
    }
    let num: f64 = curve.iter().map(|(z, f)| z * f).sum();
    let den: f64 = curve.iter().map(|(z, _)| z * z).sum();
    let q_delta = curve.last().map(|&(_, f)| f).unwrap_or(0.0);
    Ok(MarginFit {
        delta,
        curve,
        c0: num / den,
        q_delta,
    })
}

/// Subspace on which the covariance is inspected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Restriction {
    Full,
    Block {
        groups: GroupStructure,
        block: usize,
    },
}

/// Largest eigenvalue of `WᵀΣW` for the coordinate restriction `W`.
pub fn restricted_op_norm(cov: &DMatrix<f64>, restriction: &Restriction) -> Result<f64> {
    let sub = match restriction {
        Restriction::Full => cov.clone(),
        Restriction::Block { groups, block } => {
            check_dim(groups.ambient_dim(), cov.nrows())?;
            if *block >= groups.num_groups() {
                return Err(Error::InvalidParameter(format!("no block {block}")));
            }
            let range = groups.block_range(*block);
            cov.view((range.start, range.start), (range.len(), range.len()))
                .into_owned()
        }
    };
    if sub.nrows() == 1 {
        return Ok(sub[(0, 0)]);
    }
    let eig = SymmetricEigen::new(sub);
    Ok(eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionTrace {
    /// Number of observations behind each value.
    pub rounds: Vec<usize>,
    pub op_norms: Vec<f64>,
    /// Median over `t ≥ 1` of `t·‖WᵀΣ_tW‖_op`; `None` without such rounds.
    pub c2: Option<f64>,
}

impl ExpansionTrace {
    pub fn from_series(rounds: Vec<usize>, op_norms: Vec<f64>) -> Self {
        let mut scaled: Vec<f64> = rounds
            .iter()
            .zip(&op_norms)
            .filter(|(&t, _)| t >= 1)
            .map(|(&t, &v)| t as f64 * v)
            .collect();
        scaled.sort_by(f64::total_cmp);
        let c2 = if scaled.is_empty() {
            None
        } else {
            let m = scaled.len();
            Some(if m % 2 == 1 {
                scaled[m / 2]
            } else {
                0.5 * (scaled[m / 2 - 1] + scaled[m / 2])
            })
        };
        Self {
            rounds,
            op_norms,
            c2,
        }
    }

    /// The comparison curve `c₂/t`.
    pub fn reference(&self, t: usize) -> Option<f64> {
        self.c2.map(|c| c / t as f64)
    }
}

pub fn linear_expansion_trace(
    states: &[RidgeState],
    restriction: &Restriction,
) -> Result<ExpansionTrace> {
    let mut rounds = Vec::with_capacity(states.len());
    let mut norms = Vec::with_capacity(states.len());
    for s in states {
        rounds.push(s.count());
        norms.push(restricted_op_norm(s.cov(), restriction)?);
    }
    Ok(ExpansionTrace::from_series(rounds, norms))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chi2Check {
    pub empirical: f64,
    /// `e^{−γ}`
    pub bound: f64,
    pub passes: bool,
}

/// Monte Carlo check of `P(χ²_d ≥ 2d + 3γ) ≤ e^{−γ}`; passes when the
/// empirical frequency is within three binomial standard errors of the bound.
pub fn chi2_tail_check<R: Rng + ?Sized>(
    d: usize,
    gamma: f64,
    num_samples: usize,
    rng: &mut R,
) -> Result<Chi2Check> {
    if d == 0 || num_samples == 0 || !(gamma > 0.0) {
        return Err(Error::InvalidParameter(
            "d, gamma and sample count must be positive".into(),
        ));
    }
    let threshold = 2.0 * d as f64 + 3.0 * gamma;
    let mut hits = 0usize;
    for _ in 0..num_samples {
        let x: f64 = (0..d)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                z * z
            })
            .sum();
        if x >= threshold {
            hits += 1;
        }
    }
    let empirical = hits as f64 / num_samples as f64;
    let bound = (-gamma).exp();
    Ok(Chi2Check {
        empirical,
        bound,
        passes: empirical <= bound + 3.0 * (bound / num_samples as f64).sqrt(),
    })
}

/// `Σ_t min{σ², ‖a_t‖²_{Σ_{t−1}}}` for a fixed action sequence, replayed on a
/// fresh state.
pub fn replay_uncertainty(
    dim: usize,
    lambda: f64,
    sigma: f64,
    actions: &[DVector<f64>],
) -> Result<f64> {
    let mut state = RidgeState::new(dim, lambda, sigma)?;
    let s2 = sigma * sigma;
    let mut total = 0.0;
    for a in actions {
        check_dim(dim, a.len())?;
        total += quadratic_form(state.cov(), a).min(s2);
        state.update(a, 0.0)?;
    }
    Ok(total)
}
