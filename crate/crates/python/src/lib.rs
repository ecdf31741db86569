//! Python bindings. Import as `quasitest`.

use ::quasitest as qt;
use ::quasitest::{BiasSpec, Error};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::DegenerateLaw
        | Error::AllDrawsDead
        | Error::ZeroTotalWeight
        | Error::NoValidCenters
        | Error::ZeroNormalizer
        | Error::ZeroConditionalExpectation { .. }
        | Error::AcceptanceTooLow { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Paired observations, optionally with event indicators.
#[pyclass(name = "Sample", module = "quasitest", frozen)]
#[derive(Clone)]
struct PySample {
    inner: qt::Sample,
}

#[pymethods]
impl PySample {
    #[new]
    #[pyo3(signature = (xs, ys, deltas=None))]
    fn new(xs: Vec<f64>, ys: Vec<f64>, deltas: Option<Vec<bool>>) -> PyResult<Self> {
        let inner = match deltas {
            Some(d) => qt::Sample::censored(&xs, &ys, &d),
            None => qt::Sample::new(&xs, &ys),
        }
        .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn xs(&self) -> Vec<f64> {
        self.inner.xs()
    }

    #[getter]
    fn ys(&self) -> Vec<f64> {
        self.inner.ys()
    }

    #[getter]
    fn deltas(&self) -> Option<Vec<bool>> {
        self.inner.is_censored().then(|| self.inner.observations().iter().map(|o| o.delta == Some(true)).collect())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Sample(n={}, censored={})", self.inner.len(), self.inner.is_censored())
    }
}

/// A discrete distribution on sorted support points.
#[pyclass(name = "DiscreteCDF", module = "quasitest", frozen)]
struct PyDiscreteCDF {
    inner: qt::DiscreteCDF,
}

#[pymethods]
impl PyDiscreteCDF {
    #[new]
    fn new(support: Vec<f64>, mass: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: qt::DiscreteCDF::new(support, mass).map_err(to_py)? })
    }

    #[getter]
    fn support(&self) -> Vec<f64> {
        self.inner.support().to_vec()
    }

    #[getter]
    fn mass(&self) -> Vec<f64> {
        self.inner.mass().to_vec()
    }

    #[getter]
    fn cumulative(&self) -> Vec<f64> {
        self.inner.cumulative().to_vec()
    }

    fn __call__(&self, t: f64) -> f64 {
        qt::cdf_eval(&self.inner, t)
    }

    fn distance(&self, other: &PyDiscreteCDF) -> f64 {
        qt::cdf_distance(&self.inner, &other.inner)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "TestReport", module = "quasitest", frozen)]
struct PyTestReport {
    inner: qt::TestReport,
}

#[pymethods]
impl PyTestReport {
    #[getter]
    fn p_value(&self) -> f64 {
        self.inner.p_value
    }

    #[getter]
    fn statistic_value(&self) -> f64 {
        self.inner.statistic_value
    }

    #[getter]
    fn method(&self) -> String {
        self.inner.method.to_string()
    }

    #[getter]
    fn statistic(&self) -> String {
        self.inner.statistic.to_string()
    }

    #[getter(B)]
    fn b(&self) -> usize {
        self.inner.b
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn centers_used(&self) -> usize {
        self.inner.diagnostics.centers_used
    }

    #[getter]
    fn replicate_statistics(&self) -> Option<Vec<f64>> {
        self.inner.replicate_statistics.clone()
    }

    #[getter]
    fn replicate_weights(&self) -> Option<Vec<f64>> {
        self.inner.replicate_weights.clone()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn __repr__(&self) -> String {
        format!("TestReport(method={}, p_value={})", self.inner.method, self.inner.p_value)
    }
}

fn resolve(sample: &PySample, bias: &str) -> PyResult<(qt::BiasFunction, qt::Sample)> {
    let spec: BiasSpec = bias.parse().map_err(to_py)?;
    spec.resolve(&sample.inner).map_err(to_py)
}

/// Runs a test of quasi-independence.
#[pyfunction]
#[pyo3(signature = (sample, bias="truncation", method="perm-mcmc", statistic="hoeffding", B=1000, seed=0, keep_replicates=false))]
#[allow(non_snake_case)]
fn run_test(
    py: Python<'_>,
    sample: &PySample,
    bias: &str,
    method: &str,
    statistic: &str,
    B: usize,
    seed: u64,
    keep_replicates: bool,
) -> PyResult<PyTestReport> {
    let (bias, s) = resolve(sample, bias)?;
    let mut cfg =
        qt::TestConfig::new(method.parse().map_err(to_py)?, B, seed).with_statistic(statistic.parse().map_err(to_py)?);
    cfg.keep_replicates = keep_replicates;
    let inner = py.allow_threads(|| qt::run_test(&s, &bias, &cfg)).map_err(to_py)?;
    Ok(PyTestReport { inner })
}

/// Estimates both marginals; returns `(F_X, F_Y)`.
#[pyfunction]
#[pyo3(signature = (sample, bias="truncation", estimator="qi"))]
fn estimate_marginals(sample: &PySample, bias: &str, estimator: &str) -> PyResult<(PyDiscreteCDF, PyDiscreteCDF)> {
    let (bias, s) = resolve(sample, bias)?;
    let est: qt::MarginalEstimator = estimator.parse().map_err(to_py)?;
    est.check_applicable(&s, &bias).map_err(to_py)?;
    let (fx, fy) = est.estimate(&s, &bias).map_err(to_py)?;
    Ok((PyDiscreteCDF { inner: fx }, PyDiscreteCDF { inner: fy }))
}

/// Draws `n` observations from `generator` under the given bias.
#[pyfunction]
#[pyo3(signature = (generator, bias, n, seed=0))]
fn draw_biased(generator: &str, bias: &str, n: usize, seed: u64) -> PyResult<PySample> {
    let g: qt::GeneratorSpec = generator.parse().map_err(to_py)?;
    let b = match bias.parse::<BiasSpec>().map_err(to_py)? {
        BiasSpec::Fixed(b) => b,
        BiasSpec::Censoring => return Err(PyValueError::new_err("censoring is not a sampling bias")),
    };
    let mut rng = qt::rng::stream_rng(seed, qt::rng::Stream::Data);
    let d = qt::draw_biased(&qt::BiasedSampler::new(g, b), n, &mut rng).map_err(to_py)?;
    Ok(PySample { inner: d.sample })
}

/// Draws permutations under the biased-sampling null. Returns
/// `(permutations, log_weights)`; `log_weights` is `None` for MCMC.
#[pyfunction]
#[pyo3(signature = (sample, bias="truncation", sampler="mcmc", B=100, seed=0))]
#[allow(non_snake_case)]
fn draw_permutations(
    sample: &PySample,
    bias: &str,
    sampler: &str,
    B: usize,
    seed: u64,
) -> PyResult<(Vec<Vec<usize>>, Option<Vec<f64>>)> {
    let (bias, s) = resolve(sample, bias)?;
    let w = qt::build_weight_matrix(&s, &bias).map_err(to_py)?;
    let d = match sampler.split_once(':') {
        None if sampler == "mcmc" => qt::sample_permutations_mcmc(&w, &qt::McmcConfig::new(B + 1, seed)),
        Some(("is", scheme)) => qt::sis_sample(&w, scheme.parse().map_err(to_py)?, B, seed),
        _ => return Err(PyValueError::new_err(format!("unknown sampler `{sampler}`"))),
    }
    .map_err(to_py)?;
    let perms = d.permutations.iter().map(|p| p.as_slice().to_vec()).collect();
    Ok((perms, d.log_weights))
}

/// Exact permutation law of a small weight matrix given as rows.
#[pyfunction]
fn exact_law(rows: Vec<Vec<f64>>) -> PyResult<Vec<(Vec<usize>, f64)>> {
    let w = qt::WeightMatrix::from_rows(&rows).map_err(to_py)?;
    let law = qt::enumerate_exact_pw(&w).map_err(to_py)?;
    Ok(law.entries.into_iter().map(|(p, q)| (p.as_slice().to_vec(), q)).collect())
}

/// Kaplan-Meier survival estimate evaluated at `at`.
#[pyfunction]
fn kaplan_meier(durations: Vec<f64>, events: Vec<bool>, at: Vec<f64>) -> PyResult<Vec<f64>> {
    let s = qt::kaplan_meier(&durations, &events).map_err(to_py)?;
    Ok(at.iter().map(|&t| s.eval(t)).collect())
}

/// Rejection rate of one test configuration on simulated data.
#[pyfunction]
#[pyo3(signature = (generator, bias="truncation", method="perm-mcmc", statistic="hoeffding", n=100, B=1000, reps=100, alpha=0.05, seed=0))]
#[allow(non_snake_case, clippy::too_many_arguments)]
fn rejection_rate(
    py: Python<'_>,
    generator: &str,
    bias: &str,
    method: &str,
    statistic: &str,
    n: usize,
    B: usize,
    reps: usize,
    alpha: f64,
    seed: u64,
) -> PyResult<(f64, f64, f64)> {
    let g: qt::GeneratorSpec = generator.parse().map_err(to_py)?;
    let b = match bias.parse::<BiasSpec>().map_err(to_py)? {
        BiasSpec::Fixed(b) => b,
        BiasSpec::Censoring => return Err(PyValueError::new_err("censoring is not a sampling bias")),
    };
    let cfg =
        qt::TestConfig::new(method.parse().map_err(to_py)?, B, seed).with_statistic(statistic.parse().map_err(to_py)?);
    let row = qt::PowerRow::new(qt::BiasedSampler::new(g, b), cfg, n);
    let res = py.allow_threads(|| qt::power_table(&[row], alpha, reps));
    let o = &res[0].outcome;
    Ok((o.rate, o.ci_lo, o.ci_hi))
}

#[pymodule]
fn quasitest(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySample>()?;
    m.add_class::<PyDiscreteCDF>()?;
    m.add_class::<PyTestReport>()?;
    m.add_function(wrap_pyfunction!(run_test, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_marginals, m)?)?;
    m.add_function(wrap_pyfunction!(draw_biased, m)?)?;
    m.add_function(wrap_pyfunction!(draw_permutations, m)?)?;
    m.add_function(wrap_pyfunction!(exact_law, m)?)?;
    m.add_function(wrap_pyfunction!(kaplan_meier, m)?)?;
    m.add_function(wrap_pyfunction!(rejection_rate, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
