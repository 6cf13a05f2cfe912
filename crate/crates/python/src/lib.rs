//! Python bindings: targets, variational families, divergence estimates,
//! fitting, refinement and the three command-line workflows.

use std::path::PathBuf;

use alpha_drs::cli::{cmd_bnn, cmd_divergence_check, cmd_gmm_demo, BnnConfig, CheckConfig, GmmDemoConfig};
use alpha_drs::divergence::{estimate_renyi, estimate_renyi_refined, KlDirection, WeightedBatch};
use alpha_drs::drs::{refine as drs_refine, select_t_low_dim, select_t_quantile, RefinementConfig};
use alpha_drs::rdvi::{fit as rdvi_fit, OptimizerConfig};
use alpha_drs::streams::{substream, Substream};
use alpha_drs::{make_gmm_target, Error, GmmSpec, TargetDensity, VariationalDist};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn kl_from_str(s: &str) -> PyResult<KlDirection> {
    match s {
        "inclusive" => Ok(KlDirection::Inclusive),
        "exclusive" => Ok(KlDirection::Exclusive),
        other => Err(PyValueError::new_err(format!("kl must be inclusive or exclusive, got `{other}`"))),
    }
}

/// Unnormalized target density.
#[pyclass(name = "Target", frozen)]
struct PyTarget {
    inner: TargetDensity,
    gmm: Option<GmmSpec>,
}

#[pymethods]
impl PyTarget {
    /// Equal-weight four-mode mixture.
    #[staticmethod]
    fn four_modes() -> PyResult<Self> {
        Self::gmm(GmmSpec::four_modes())
    }

    #[staticmethod]
    fn mixture(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> PyResult<Self> {
        Self::gmm(GmmSpec {
            weights,
            means,
            variances,
        })
    }

    /// Diagonal Gaussian with known normalizer.
    #[staticmethod]
    fn gaussian(mean: Vec<f64>, var: Vec<f64>) -> PyResult<Self> {
        Ok(PyTarget {
            inner: TargetDensity::gaussian(mean, var).map_err(to_py)?,
            gmm: None,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn log_z(&self) -> Option<f64> {
        self.inner.log_z()
    }

    fn log_unnorm(&self, x: Vec<f64>) -> PyResult<f64> {
        if x.len() != self.inner.dim() {
            return Err(to_py(Error::DimensionMismatch {
                expected: self.inner.dim(),
                got: x.len(),
            }));
        }
        Ok(self.inner.log_unnorm(&x))
    }

    /// Mixture CDF; only defined for mixture targets.
    fn cdf(&self, x: f64) -> PyResult<f64> {
        match &self.gmm {
            Some(spec) => Ok(spec.cdf(x)),
            None => Err(PyValueError::new_err("cdf is only available for mixture targets")),
        }
    }
}

impl PyTarget {
    fn gmm(spec: GmmSpec) -> PyResult<Self> {
        Ok(PyTarget {
            inner: make_gmm_target(&spec).map_err(to_py)?,
            gmm: Some(spec),
        })
    }
}

/// Diagonal Gaussian or Student-t proposal parameterized by mean and log variance.
#[pyclass(name = "VariationalDist", frozen)]
struct PyVariational {
    inner: VariationalDist,
}

#[pymethods]
impl PyVariational {
    #[staticmethod]
    fn gaussian(mu: Vec<f64>, log_var: Vec<f64>) -> PyResult<Self> {
        Ok(PyVariational {
            inner: VariationalDist::gaussian(mu, log_var).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn student_t(nu: f64, mu: Vec<f64>, log_var: Vec<f64>) -> PyResult<Self> {
        Ok(PyVariational {
            inner: VariationalDist::student_t(nu, mu, log_var).map_err(to_py)?,
        })
    }

    #[getter]
    fn mu(&self) -> Vec<f64> {
        self.inner.mu().to_vec()
    }

    #[getter]
    fn log_var(&self) -> Vec<f64> {
        self.inner.log_var().to_vec()
    }

    #[getter]
    fn family(&self) -> String {
        self.inner.family().to_string()
    }

    fn log_q(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.log_q(&x).map_err(to_py)
    }

    /// `count` draws as a list of rows.
    fn sample(&self, count: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let s = self
            .inner
            .sample_reparam(&mut substream(seed, Substream::Eval), count)
            .map_err(to_py)?;
        Ok(s.points.iter_rows().map(|r| r.to_vec()).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "VariationalDist({}, mu={:?}, log_var={:?})",
            self.inner.family(),
            self.inner.mu(),
            self.inner.log_var()
        )
    }
}

/// `(value, std_error)` of `D_α(p‖q)`.
#[pyfunction]
#[pyo3(signature = (target, q, alpha, samples = 3000, seed = 0))]
fn renyi_divergence(target: &PyTarget, q: &PyVariational, alpha: f64, samples: usize, seed: u64) -> PyResult<(f64, f64)> {
    let log_z = target
        .inner
        .log_z()
        .ok_or_else(|| PyValueError::new_err("target normalizer is unknown"))?;
    let batch = WeightedBatch::draw(&q.inner, &target.inner, &mut substream(seed, Substream::Eval), samples)
        .map_err(to_py)?;
    let d = estimate_renyi(alpha, &batch, log_z).map_err(to_py)?;
    Ok((d.value, d.std_error))
}

/// Minimizes the α-objective from `q` and returns the final proposal.
#[pyfunction]
#[pyo3(signature = (target, q, alpha, iterations = 5000, samples = 100, step_size = 1e-2, seed = 0, kl = "inclusive"))]
#[allow(clippy::too_many_arguments)]
fn fit(
    target: &PyTarget,
    q: &PyVariational,
    alpha: f64,
    iterations: usize,
    samples: usize,
    step_size: f64,
    seed: u64,
    kl: &str,
) -> PyResult<PyVariational> {
    let config = OptimizerConfig {
        alpha,
        iterations,
        samples_per_step: samples,
        step_size,
        seed,
        kl_direction: kl_from_str(kl)?,
        ..OptimizerConfig::default()
    };
    let trace = rdvi_fit(&target.inner, &q.inner, &config).map_err(to_py)?;
    Ok(PyVariational { inner: trace.final_q })
}

/// Refinement result: accepted rows, acceptance rate, threshold, and the
/// divergence of the refined law when the normalizer is known.
#[pyclass(name = "Refined", frozen, get_all)]
struct PyRefined {
    samples: Vec<Vec<f64>>,
    acceptance_rate: f64,
    threshold: f64,
    d_pr: Option<(f64, f64)>,
}

/// Runs the rejection sampler. `threshold=None` selects it from the data:
/// `-D̂` when `gamma` is None, otherwise the γ-quantile of proposal `L` values.
#[pyfunction]
#[pyo3(signature = (target, q, alpha, n_accept, threshold = None, gamma = None, softmin_t = 1.0, samples = 3000, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn refine(
    target: &PyTarget,
    q: &PyVariational,
    alpha: f64,
    n_accept: usize,
    threshold: Option<f64>,
    gamma: Option<f64>,
    softmin_t: f64,
    samples: usize,
    seed: u64,
) -> PyResult<PyRefined> {
    let batch = WeightedBatch::draw(&q.inner, &target.inner, &mut substream(seed, Substream::Eval), samples)
        .map_err(to_py)?;
    let t = match (threshold, gamma) {
        (Some(t), _) => t,
        (None, Some(g)) => select_t_quantile(batch.l_vals(), g).map_err(to_py)?,
        (None, None) => {
            let log_z = target
                .inner
                .log_z()
                .ok_or_else(|| PyValueError::new_err("pass threshold or gamma when the normalizer is unknown"))?;
            select_t_low_dim(&estimate_renyi(alpha, &batch, log_z).map_err(to_py)?)
        }
    };
    let config = match gamma {
        Some(g) => RefinementConfig::quantile(alpha, t, g),
        None => RefinementConfig::low_dim(alpha, t),
    }
    .with_softmin(softmin_t);
    let d_pr = match target.inner.log_z() {
        Some(log_z) => {
            let d = estimate_renyi_refined(alpha, &batch, &config, log_z).map_err(to_py)?;
            Some((d.value, d.std_error))
        }
        None => None,
    };
    let set = drs_refine(
        &q.inner,
        &target.inner,
        &config,
        &mut substream(seed, Substream::Refine),
        n_accept,
        None,
    )
    .map_err(to_py)?;
    Ok(PyRefined {
        samples: set.accepted.iter_rows().map(|r| r.to_vec()).collect(),
        acceptance_rate: set.acceptance_rate,
        threshold: t,
        d_pr,
    })
}

/// Mixture demo; writes its files under `out` and returns the table CSV.
#[pyfunction]
#[pyo3(signature = (out, alpha = vec![2.0, 11.0, 16.0, 21.0], seed = 0, iters = 5000, samples = 3000, accept = 10_000))]
fn gmm_demo(out: PathBuf, alpha: Vec<f64>, seed: u64, iters: usize, samples: usize, accept: usize) -> PyResult<String> {
    let cfg = GmmDemoConfig {
        alpha,
        seed,
        iters,
        samples,
        accept,
        out,
        ..GmmDemoConfig::default()
    };
    Ok(cmd_gmm_demo(&cfg).map_err(to_py)?.table_csv())
}

/// Estimator self-check as `(name, passed, detail)` triples.
#[pyfunction]
#[pyo3(signature = (seed = 0, samples = 20_000))]
fn divergence_check(seed: u64, samples: usize) -> PyResult<Vec<(String, bool, String)>> {
    let cfg = CheckConfig {
        seed,
        samples,
        ..CheckConfig::default()
    };
    let report = cmd_divergence_check(&cfg).map_err(to_py)?;
    Ok(report.cases.into_iter().map(|c| (c.name, c.passed, c.detail)).collect())
}

/// BNN benchmark on a numeric table; writes its CSV under `out` and returns it.
#[pyfunction]
#[pyo3(signature = (dataset, out, alpha = vec![1.0, 2.0], seed = 0, runs = 1, iters = 3000, hidden = 50, kl = "exclusive"))]
#[allow(clippy::too_many_arguments)]
fn bnn(
    dataset: PathBuf,
    out: PathBuf,
    alpha: Vec<f64>,
    seed: u64,
    runs: usize,
    iters: usize,
    hidden: usize,
    kl: &str,
) -> PyResult<String> {
    let cfg = BnnConfig {
        alpha,
        seed,
        runs,
        iters,
        hidden,
        kl: kl_from_str(kl)?,
        out,
        ..BnnConfig::new(dataset)
    };
    Ok(cmd_bnn(&cfg).map_err(to_py)?.to_csv())
}

#[pymodule]
fn alpha_drs_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTarget>()?;
    m.add_class::<PyVariational>()?;
    m.add_class::<PyRefined>()?;
    m.add_function(wrap_pyfunction!(renyi_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(refine, m)?)?;
    m.add_function(wrap_pyfunction!(gmm_demo, m)?)?;
    m.add_function(wrap_pyfunction!(divergence_check, m)?)?;
    m.add_function(wrap_pyfunction!(bnn, m)?)?;
    Ok(())
}
