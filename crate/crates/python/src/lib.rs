//! Python bindings: ridge posterior, confidence radii, policy selection,
//! experiment runs and certificates.

use nalgebra::DVector;
use pyo3::exceptions::{PyIndexError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use linbandit::analytics::{gaussian_deviation_constant, policy_certificate};
use linbandit::harness::{parse_config, run_experiment};
use linbandit::policies::{confidence_radius, select_greedy, select_oful, select_sg, select_ts};
use linbandit::{ActionSet, Error, RadiusKind, RadiusParams, RidgeState};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::Episode { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn action_set(actions: Vec<Vec<f64>>) -> PyResult<ActionSet> {
    let actions = actions.into_iter().map(DVector::from_vec).collect();
    ActionSet::new(1, actions).map_err(to_py)
}

/// Ridge-regression posterior `N(θ̂, Σ)` over the unknown parameter.
#[pyclass(name = "RidgeState")]
struct PyRidgeState {
    inner: RidgeState,
}

#[pymethods]
impl PyRidgeState {
    #[new]
    #[pyo3(signature = (dim, lam = 1.0, sigma = 1.0))]
    fn new(dim: usize, lam: f64, sigma: f64) -> PyResult<Self> {
        Ok(Self {
            inner: RidgeState::new(dim, lam, sigma).map_err(to_py)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn count(&self) -> usize {
        self.inner.count()
    }

    fn update(&mut self, action: Vec<f64>, reward: f64) -> PyResult<()> {
        self.inner
            .update(&DVector::from_vec(action), reward)
            .map_err(to_py)
    }

    fn theta_hat(&self) -> Vec<f64> {
        self.inner.theta_hat().iter().copied().collect()
    }

    fn cov(&self) -> Vec<Vec<f64>> {
        let c = self.inner.cov();
        c.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    fn mahalanobis_sq(&self, action: Vec<f64>) -> PyResult<f64> {
        self.inner
            .mahalanobis_sq(&DVector::from_vec(action))
            .map_err(to_py)
    }

    #[pyo3(signature = (inflation, seed))]
    fn sample_posterior(&mut self, inflation: f64, seed: u64) -> PyResult<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = self
            .inner
            .sample_posterior(inflation, &mut rng)
            .map_err(to_py)?;
        Ok(v.iter().copied().collect())
    }

    /// Index chosen by `policy` ("greedy", "oful", "sg" or "ts") among `actions`.
    #[pyo3(signature = (policy, actions, radius = 0.0, alpha = 0.5, inflation = 1.0, seed = 0))]
    fn select(
        &mut self,
        policy: &str,
        actions: Vec<Vec<f64>>,
        radius: f64,
        alpha: f64,
        inflation: f64,
        seed: u64,
    ) -> PyResult<usize> {
        let set = action_set(actions)?;
        match policy {
            "greedy" => select_greedy(&self.inner, &set),
            "oful" => select_oful(&self.inner, radius, &set),
            "sg" => select_sg(&self.inner, radius, alpha, &set),
            "ts" => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                select_ts(&mut self.inner, inflation, &set, &mut rng)
            }
            other => {
                return Err(PyIndexError::new_err(format!("unknown policy '{other}'")));
            }
        }
        .map_err(to_py)
    }
}

/// Confidence radius of the given kind.
#[pyfunction]
#[pyo3(signature = (kind, dim, horizon, action_bound = 5.0, sigma = 1.0, lam = 1.0,
                    theta_bound = None, max_actions = 10, groups = 1, inflation = 1.0))]
#[allow(clippy::too_many_arguments)]
fn radius(
    kind: &str,
    dim: usize,
    horizon: usize,
    action_bound: f64,
    sigma: f64,
    lam: f64,
    theta_bound: Option<f64>,
    max_actions: usize,
    groups: usize,
    inflation: f64,
) -> PyResult<f64> {
    let kind: RadiusKind = kind.parse().map_err(to_py)?;
    let params = RadiusParams {
        dim,
        horizon,
        action_bound,
        sigma,
        lambda: lam,
        theta_bound: theta_bound.unwrap_or((dim as f64).sqrt()),
        max_actions,
        groups,
        inflation,
    };
    confidence_radius(kind, &params).map_err(to_py)
}

/// Runs an experiment given CLI-style flags and returns
/// `{label: (mean_curve, sd_curve, final_regrets)}`.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn run(args: Vec<String>) -> PyResult<Vec<(String, Vec<f64>, Vec<f64>, Vec<f64>)>> {
    let cfg = parse_config(args).map_err(to_py)?;
    let result = run_experiment(&cfg).map_err(to_py)?;
    Ok(result
        .policies
        .into_iter()
        .map(|p| (p.label, p.mean, p.sd, p.finals))
        .collect())
}

/// Certificates for the policies selected by CLI-style flags, as JSON.
#[pyfunction]
fn bounds(args: Vec<String>) -> PyResult<String> {
    let cfg = parse_config(args).map_err(to_py)?;
    let params = cfg.radius_params();
    let deviation =
        gaussian_deviation_constant(params.action_bound, params.theta_bound, params.horizon);
    let certs = cfg
        .policies
        .iter()
        .filter(|p| p.kind != linbandit::PolicyKind::Greedy)
        .map(|p| policy_certificate(p, &params, deviation))
        .collect::<Result<Vec<_>, _>>()
        .map_err(to_py)?;
    serde_json::to_string(&certs).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn linbandit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRidgeState>()?;
    m.add_function(wrap_pyfunction!(radius, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(bounds, m)?)?;
    Ok(())
}
