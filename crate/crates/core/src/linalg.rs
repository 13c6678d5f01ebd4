//! Online ridge / Gaussian posterior state.
//!
//! The state keeps both the precision matrix `Σ⁻¹ = I/λ + Σ aaᵀ/σ²` and its
//! inverse `Σ`. The precision is updated by direct addition and the
//! covariance by the Sherman–Morrison identity, so one update costs `O(d²)`.
//! Every [`REFRESH_INTERVAL`] updates the covariance is recomputed from the
//! precision to discard accumulated rounding error.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};

/// Number of rank-1 updates between full re-inversions of the precision.
pub const REFRESH_INTERVAL: usize = 512;

const SYMMETRY_TOL: f64 = 1e-12;

/// Lower-triangular Cholesky factor `L` with `L·Lᵀ = m`.
pub fn cholesky_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n == 0 {
        return Err(Error::Empty("matrix"));
    }
    check_dim(n, m.ncols())?;
    let scale = m.amax().max(1.0);
    for j in 0..n {
        for i in (j + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::InvalidParameter(format!(
                    "matrix not symmetric at ({i}, {j})"
                )));
            }
        }
    }

    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut diag = m[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > 0.0) {
            return Err(Error::NotPositiveDefinite {
                pivot: j,
                value: diag,
            });
        }
        let pivot = diag.sqrt();
        l[(j, j)] = pivot;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / pivot;
        }
    }
    Ok(l)
}

/// In-place rank-1 downdate: turns `L` with `L·Lᵀ = M` into the factor of
/// `M − x·xᵀ`. Returns `false` (leaving `l` unspecified) if the result would
/// not be positive definite.
fn cholesky_downdate(l: &mut DMatrix<f64>, mut x: DVector<f64>) -> bool {
    let n = l.nrows();
    for k in 0..n {
        let lkk = l[(k, k)];
        let r2 = lkk * lkk - x[k] * x[k];
        if !(r2 > 0.0) {
            return false;
        }
        let r = r2.sqrt();
        let c = r / lkk;
        let s = x[k] / lkk;
        l[(k, k)] = r;
        for i in (k + 1)..n {
            let lik = (l[(i, k)] - s * x[i]) / c;
            l[(i, k)] = lik;
            x[i] = c * x[i] - s * lik;
        }
    }
    true
}

/// `aᵀ·m·a`, skipping zero coordinates of `a` when it is sparse.
pub(crate) fn quadratic_form(m: &DMatrix<f64>, a: &DVector<f64>) -> f64 {
    let d = a.len();
    let support: Vec<usize> = (0..d).filter(|&i| a[i] != 0.0).collect();
    let value = if support.len() * 4 < d {
        let mut s = 0.0;
        for &j in &support {
            let mut col = 0.0;
            for &i in &support {
                col += m[(i, j)] * a[i];
            }
            s += a[j] * col;
        }
        s
    } else {
        (0..d).map(|j| a[j] * m.column(j).dot(a)).sum()
    };
    value.max(0.0)
}

/// Running posterior of `Θ⋆` under the Gaussian prior `N(0, λI)` and
/// Gaussian noise of scale `σ`; equivalently, ridge regression.
#[derive(Debug, Clone)]
pub struct RidgeState {
    lambda: f64,
    sigma: f64,
    inv_cov: DMatrix<f64>,
    cov: DMatrix<f64>,
    theta_hat: DVector<f64>,
    /// `Σ⁻¹·θ̂`, i.e. `Σ a·r / σ²`.
    weighted_rewards: DVector<f64>,
    count: usize,
    /// Cholesky factor of `cov`, materialized on first use by the sampler.
    cov_factor: Option<DMatrix<f64>>,
}

impl RidgeState {
    pub fn new(dim: usize, lambda: f64, sigma: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        Ok(Self {
            lambda,
            sigma,
            inv_cov: DMatrix::identity(dim, dim) / lambda,
            cov: DMatrix::identity(dim, dim) * lambda,
            theta_hat: DVector::zeros(dim),
            weighted_rewards: DVector::zeros(dim),
            count: 0,
            cov_factor: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.theta_hat.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn inv_cov(&self) -> &DMatrix<f64> {
        &self.inv_cov
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn theta_hat(&self) -> &DVector<f64> {
        &self.theta_hat
    }

    /// Number of observations absorbed so far.
    pub fn count(&self) -> usize {
        self.count
    }

    /// `‖a‖²_Σ = aᵀΣa`.
    pub fn mahalanobis_sq(&self, a: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), a.len())?;
        Ok(quadratic_form(&self.cov, a))
    }

    /// Returns the state after observing `reward` for action `a`.
    pub fn posterior_update(&self, a: &DVector<f64>, reward: f64) -> Result<RidgeState> {
        let mut next = self.clone();
        next.update(a, reward)?;
        Ok(next)
    }

    /// In-place form of [`posterior_update`](Self::posterior_update).
    pub fn update(&mut self, a: &DVector<f64>, reward: f64) -> Result<()> {
        let d = self.dim();
        check_dim(d, a.len())?;
        if !reward.is_finite() || a.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite observation".into()));
        }
        let sigma2 = self.sigma * self.sigma;
        let support: Vec<usize> = (0..d).filter(|&i| a[i] != 0.0).collect();

        // u = Σ·a
        let mut u = DVector::<f64>::zeros(d);
        for &j in &support {
            u.axpy(a[j], &self.cov.column(j), 1.0);
        }
        let denom = sigma2 + a.dot(&u);

        for &j in &support {
            for &i in &support {
                self.inv_cov[(i, j)] += a[i] * a[j] / sigma2;
            }
        }

        if !support.is_empty() {
            let w = &u / denom;
            for j in 0..d {
                let wj = w[j];
                self.cov.column_mut(j).axpy(-wj, &u, 1.0);
            }
            for j in 0..d {
                for i in (j + 1)..d {
                    let avg = 0.5 * (self.cov[(i, j)] + self.cov[(j, i)]);
                    self.cov[(i, j)] = avg;
                    self.cov[(j, i)] = avg;
                }
            }
            if let Some(factor) = self.cov_factor.as_mut() {
                if !cholesky_downdate(factor, &u / denom.sqrt()) {
                    self.cov_factor = None;
                }
            }
        }

        self.weighted_rewards.axpy(reward / sigma2, a, 1.0);
        self.count += 1;
        if self.count.is_multiple_of(REFRESH_INTERVAL) {
            self.refresh()?;
        } else {
            self.theta_hat = &self.cov * &self.weighted_rewards;
        }
        Ok(())
    }

    /// Recomputes `Σ` (and `θ̂`) from the precision matrix.
    fn refresh(&mut self) -> Result<()> {
        let l = cholesky_factor(&self.inv_cov)?;
        let d = self.dim();
        // Σ = L⁻ᵀ·L⁻¹
        let l_inv = l.solve_lower_triangular(&DMatrix::identity(d, d)).ok_or(
            Error::NotPositiveDefinite {
                pivot: 0,
                value: 0.0,
            },
        )?;
        let mut cov = l_inv.transpose() * &l_inv;
        cov = (&cov + cov.transpose()) * 0.5;
        self.cov = cov;
        self.theta_hat = &self.cov * &self.weighted_rewards;
        if self.cov_factor.is_some() {
            self.cov_factor = Some(cholesky_factor(&self.cov)?);
        }
        Ok(())
    }

    fn ensure_cov_factor(&mut self) -> Result<&DMatrix<f64>> {
        if self.cov_factor.is_none() {
            self.cov_factor = Some(cholesky_factor(&self.cov)?);
        }
        Ok(self.cov_factor.as_ref().expect("factor just computed"))
    }

    /// Draws `Θ̃ ~ N(θ̂, ι²Σ)` as `θ̂ + ι·L·z` with `L` the Cholesky factor
    /// of `Σ` and `z` standard normal. With `ι = 0` no randomness is drawn.
    pub fn sample_posterior<R: Rng + ?Sized>(
        &mut self,
        inflation: f64,
        rng: &mut R,
    ) -> Result<DVector<f64>> {
        if !(inflation >= 0.0 && inflation.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "inflation must be non-negative, got {inflation}"
            )));
        }
        if inflation == 0.0 {
            return Ok(self.theta_hat.clone());
        }
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let mut sample = self.theta_hat.clone();
        let l = self.ensure_cov_factor()?;
        for j in 0..d {
            let zj = inflation * z[j];
            for i in j..d {
                sample[i] += l[(i, j)] * zj;
            }
        }
        Ok(sample)
    }

    /// Cholesky factor of the current covariance (cached).
    pub fn cov_cholesky(&mut self) -> Result<DMatrix<f64>> {
        Ok(self.ensure_cov_factor()?.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use nalgebra::dvector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).amax()
    }

    #[test]
    fn cholesky_identity_and_diagonal() {
        let eye = DMatrix::<f64>::identity(3, 3);
        assert_eq!(cholesky_factor(&eye).unwrap(), eye);
        let l = cholesky_factor(&dmatrix![4.0, 0.0; 0.0, 9.0]).unwrap();
        assert_eq!(l, dmatrix![2.0, 0.0; 0.0, 3.0]);
    }

    #[test]
    fn cholesky_two_by_two_by_hand() {
        // [[2,1],[1,2]]: l11 = √2, l21 = 1/√2, l22 = √(2 − 1/2) = √1.5
        let m = dmatrix![2.0, 1.0; 1.0, 2.0];
        let l = cholesky_factor(&m).unwrap();
        let expected = dmatrix![2f64.sqrt(), 0.0; 1.0 / 2f64.sqrt(), 1.5f64.sqrt()];
        assert!(max_abs_diff(&l, &expected) < 1e-15);
        assert!(max_abs_diff(&(&l * l.transpose()), &m) < 1e-9);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = dmatrix![1.0, 2.0; 2.0, 1.0];
        assert!(matches!(
            cholesky_factor(&m),
            Err(Error::NotPositiveDefinite { pivot: 1, .. })
        ));
        let asym = dmatrix![1.0, 0.5; 0.0, 1.0];
        assert!(cholesky_factor(&asym).is_err());
    }

    #[test]
    fn downdate_matches_refactorization() {
        let m = dmatrix![4.0, 1.0, 0.5; 1.0, 3.0, 0.2; 0.5, 0.2, 2.0];
        let x = dvector![0.5, 0.3, -0.4];
        let mut l = cholesky_factor(&m).unwrap();
        assert!(cholesky_downdate(&mut l, x.clone()));
        let direct = cholesky_factor(&(&m - &x * x.transpose())).unwrap();
        assert!(max_abs_diff(&l, &direct) < 1e-12);
    }

    #[test]
    fn mahalanobis_examples() {
        let s = RidgeState::new(2, 1.0, 1.0).unwrap();
        assert_eq!(s.mahalanobis_sq(&dvector![3.0, 4.0]).unwrap(), 25.0);
        assert_eq!(s.mahalanobis_sq(&dvector![0.0, 0.0]).unwrap(), 0.0);
        let mut s = s;
        s.cov = dmatrix![2.0, 0.0; 0.0, 0.5];
        assert_eq!(s.mahalanobis_sq(&dvector![1.0, 1.0]).unwrap(), 2.5);
        assert!(matches!(
            s.mahalanobis_sq(&dvector![1.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn fresh_state() {
        let s = RidgeState::new(3, 2.0, 1.0).unwrap();
        assert_eq!(s.inv_cov(), &(DMatrix::identity(3, 3) * 0.5));
        assert_eq!(s.cov(), &(DMatrix::identity(3, 3) * 2.0));
        assert_eq!(s.theta_hat(), &DVector::zeros(3));
        assert_eq!(s.count(), 0);
        assert!(RidgeState::new(0, 1.0, 1.0).is_err());
        assert!(RidgeState::new(2, 0.0, 1.0).is_err());
        assert!(RidgeState::new(2, 1.0, -1.0).is_err());
    }

    #[test]
    fn single_update_by_hand() {
        let s = RidgeState::new(2, 1.0, 1.0).unwrap();
        let next = s.posterior_update(&dvector![1.0, 0.0], 1.0).unwrap();
        assert_eq!(next.inv_cov(), &dmatrix![2.0, 0.0; 0.0, 1.0]);
        assert_eq!(next.cov(), &dmatrix![0.5, 0.0; 0.0, 1.0]);
        assert_eq!(next.theta_hat(), &dvector![0.5, 0.0]);
        assert_eq!(next.count(), 1);
        // input untouched
        assert_eq!(s.count(), 0);
    }

    #[test]
    fn zero_reward_keeps_estimate_at_zero() {
        let s = RidgeState::new(2, 1.0, 1.0).unwrap();
        let next = s.posterior_update(&dvector![0.0, 2.0], 0.0).unwrap();
        assert_eq!(next.theta_hat(), &DVector::zeros(2));
        assert_eq!(next.cov()[(0, 0)], 1.0);
        assert!(next.cov()[(1, 1)] < 1.0);
    }

    #[test]
    fn update_rejects_bad_input() {
        let mut s = RidgeState::new(2, 1.0, 1.0).unwrap();
        assert!(s.update(&dvector![1.0, 0.0, 0.0], 1.0).is_err());
        assert!(s.update(&dvector![1.0, 0.0], f64::NAN).is_err());
        assert_eq!(s.count(), 0);
    }

    #[test]
    fn incremental_matches_direct_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = 8;
        let mut s = RidgeState::new(d, 1.0, 1.0).unwrap();
        for _ in 0..50 {
            let a = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let r = rng.sample::<f64, _>(StandardNormal);
            s.update(&a, r).unwrap();
        }
        let direct = s.inv_cov().clone().try_inverse().unwrap();
        assert!(max_abs_diff(s.cov(), &direct) < 1e-8);
        assert!(max_abs_diff(&(s.inv_cov() * s.cov()), &DMatrix::identity(d, d)) < 1e-8);
    }

    #[test]
    fn refresh_interval_keeps_state_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 4;
        let mut s = RidgeState::new(d, 1.0, 0.5).unwrap();
        s.cov_cholesky().unwrap();
        for _ in 0..(REFRESH_INTERVAL + 10) {
            let a = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            s.update(&a, 1.0).unwrap();
        }
        let direct = s.inv_cov().clone().try_inverse().unwrap();
        assert!(max_abs_diff(s.cov(), &direct) < 1e-10);
        let l = s.cov_cholesky().unwrap();
        assert!(max_abs_diff(&(&l * l.transpose()), s.cov()) < 1e-10);
    }

    #[test]
    fn zero_inflation_returns_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = RidgeState::new(2, 1.0, 1.0).unwrap();
        s.update(&dvector![1.0, 2.0], 3.0).unwrap();
        let theta = s.theta_hat().clone();
        assert_eq!(s.sample_posterior(0.0, &mut rng).unwrap(), theta);
        assert!(s.sample_posterior(-1.0, &mut rng).is_err());
    }

    #[test]
    fn sampler_moments_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut s = RidgeState::new(2, 1.0, 1.0).unwrap();
        let n = 100_000;
        let mut sum = [0.0; 2];
        let mut sq = [0.0; 2];
        for _ in 0..n {
            let x = s.sample_posterior(1.0, &mut rng).unwrap();
            for k in 0..2 {
                sum[k] += x[k];
                sq[k] += x[k] * x[k];
            }
        }
        for k in 0..2 {
            let mean = sum[k] / n as f64;
            let var = sq[k] / n as f64 - mean * mean;
            assert!(mean.abs() < 0.02, "mean {mean}");
            assert!((var - 1.0).abs() < 0.05, "var {var}");
        }
    }

    #[test]
    fn sampler_inflated_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut s = RidgeState::new(2, 1.0, 1.0).unwrap();
        s.cov = dmatrix![4.0, 0.0; 0.0, 1.0];
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| s.sample_posterior(2.0, &mut rng).unwrap()[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((var - 16.0).abs() < 0.05 * 16.0, "var {var}");
    }
}
