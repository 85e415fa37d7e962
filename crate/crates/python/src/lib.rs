//! Python bindings: datasets, propensity models, the four estimators and
//! single simulation replicates.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use psppi_core::baselines::{fit_cca as core_cca, fit_ppi_outcome as core_ppi, fit_wcca as core_wcca};
use psppi_core::propensity::{fit_mle, format_spec, parse_spec, MleOptions, PatternLinearPredictorSpec};
use psppi_core::psppi::fit_psppi as core_psppi;
use psppi_core::report::diagnostics_text;
use psppi_core::simulation::{self, PropensityMode, SimConfig};
use psppi_core::zestim::{linear_ee, logistic_ee};
use psppi_core::{
    BaselineFit, CovariancePath, DesignSpec, EstimatingFunction, MeatMode, ObservedDataset, PredictionOracle,
    PropensityModel, PsppiOptions, SolverOptions, VariableSchema,
};

fn err(e: psppi_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse<T: std::str::FromStr<Err = psppi_core::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

fn cells(rows: Vec<Vec<Option<f64>>>) -> Vec<Vec<f64>> {
    rows.into_iter().map(|r| r.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect()).collect()
}

fn to_rows(v: &[Vec<f64>]) -> Vec<Vec<Option<f64>>> {
    v.iter().map(|r| r.iter().map(|&x| (!x.is_nan()).then_some(x)).collect()).collect()
}

/// Observed records; `None` or NaN marks a missing cell.
#[pyclass(name = "Dataset", frozen)]
struct PyDataset {
    inner: ObservedDataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    #[pyo3(signature = (names, rows, auxiliary = Vec::new()))]
    fn new(names: Vec<String>, rows: Vec<Vec<Option<f64>>>, auxiliary: Vec<String>) -> PyResult<Self> {
        let schema = VariableSchema::new(&names, &auxiliary).map_err(err)?;
        let inner = ObservedDataset::from_rows(schema, &cells(rows)).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn n_complete(&self) -> usize {
        self.inner.n_complete()
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.schema().names().to_vec()
    }

    /// Missing variable names of each registered pattern.
    #[getter]
    fn patterns(&self) -> Vec<Vec<String>> {
        let names = self.inner.schema().names();
        self.inner.registry().patterns().iter().map(|p| p.missing_vars().map(|j| names[j].clone()).collect()).collect()
    }

    /// Record counts per registered pattern (complete records excluded).
    #[getter]
    fn pattern_sizes(&self) -> Vec<usize> {
        self.inner.pattern_sizes()
    }

    fn rows(&self) -> Vec<Vec<Option<f64>>> {
        let rows: Vec<Vec<f64>> = (0..self.inner.n()).map(|i| self.inner.row(i).to_vec()).collect();
        to_rows(&rows)
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n={}, complete={}, patterns={})",
            self.inner.n(),
            self.inner.n_complete(),
            self.inner.registry().len()
        )
    }
}

/// Predicted values aligned with a dataset's rows and columns.
#[pyclass(name = "Predictions", frozen)]
struct PyPredictions {
    inner: PredictionOracle,
}

#[pymethods]
impl PyPredictions {
    #[new]
    fn new(rows: Vec<Vec<Option<f64>>>) -> PyResult<Self> {
        Ok(Self { inner: PredictionOracle::from_rows(&cells(rows)).map_err(err)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n_rows()
    }
}

/// Pattern-logit propensity model, known or fitted by maximum likelihood.
#[pyclass(name = "Propensity", frozen)]
struct PyPropensity {
    inner: PropensityModel,
}

#[pymethods]
impl PyPropensity {
    /// Parses a spec; a spec with coefficients is taken as known, otherwise
    /// it is fitted on `dataset`.
    #[staticmethod]
    fn from_spec(text: &str, dataset: &PyDataset) -> PyResult<Self> {
        let file = parse_spec(text, dataset.inner.schema()).map_err(err)?;
        let inner = match file.clone().into_known() {
            Some(known) => known.map_err(err)?,
            None => fit_mle(&file.spec, &dataset.inner, &MleOptions::default()).map_err(err)?,
        };
        Ok(Self { inner })
    }

    /// One intercept per pattern: missingness completely at random.
    #[staticmethod]
    fn mcar(dataset: &PyDataset) -> PyResult<Self> {
        let spec = PatternLinearPredictorSpec::intercept_only(dataset.inner.schema().clone(), dataset.inner.registry())
            .map_err(err)?;
        Ok(Self { inner: fit_mle(&spec, &dataset.inner, &MleOptions::default()).map_err(err)? })
    }

    /// The model generating missingness in simulations.
    #[staticmethod]
    fn simulation_truth() -> Self {
        Self { inner: simulation::truth_model() }
    }

    #[getter]
    fn coefficients(&self) -> Vec<f64> {
        self.inner.coefficients().iter().copied().collect()
    }

    #[getter]
    fn standard_errors(&self) -> Option<Vec<f64>> {
        self.inner.standard_errors()
    }

    #[getter]
    fn is_known(&self) -> bool {
        self.inner.mle_info().is_none()
    }

    /// `(π_1, …, π_K, π_complete)` for a complete record.
    fn evaluate(&self, record: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.evaluate(&record).map_err(err)
    }

    fn spec(&self) -> String {
        format_spec(self.inner.spec(), Some(self.inner.coefficients().as_slice()))
    }
}

/// Linear or logistic regression of `outcome` on `covariates`.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    logistic: bool,
    outcome: String,
    covariates: Vec<String>,
    intercept: bool,
}

impl PyModel {
    fn build(&self, schema: &VariableSchema) -> PyResult<(Box<dyn EstimatingFunction>, Vec<String>)> {
        let covs: Vec<&str> = self.covariates.iter().map(String::as_str).collect();
        let design = DesignSpec::from_names(schema, &self.outcome, &covs, self.intercept).map_err(err)?;
        let names = design.coefficient_names(schema);
        let ee: Box<dyn EstimatingFunction> =
            if self.logistic { Box::new(logistic_ee(design)) } else { Box::new(linear_ee(design)) };
        Ok((ee, names))
    }
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    #[pyo3(signature = (outcome, covariates, intercept = true))]
    fn linear(outcome: String, covariates: Vec<String>, intercept: bool) -> Self {
        Self { logistic: false, outcome, covariates, intercept }
    }

    #[staticmethod]
    #[pyo3(signature = (outcome, covariates, intercept = true))]
    fn logistic(outcome: String, covariates: Vec<String>, intercept: bool) -> Self {
        Self { logistic: true, outcome, covariates, intercept }
    }

    fn __repr__(&self) -> String {
        let family = if self.logistic { "logistic" } else { "linear" };
        format!("Model.{family}({:?}, {:?}, intercept={})", self.outcome, self.covariates, self.intercept)
    }
}

/// Point estimates, standard errors and Wald intervals of one method.
#[pyclass(name = "Fit", frozen, get_all)]
struct PyFit {
    method: String,
    coefficients: Vec<String>,
    theta: Vec<f64>,
    se: Vec<f64>,
    ci: Vec<(f64, f64)>,
    covariance: Vec<Vec<f64>>,
    /// PS-PPI only: the weighted complete-case estimate it starts from.
    theta_wcc: Option<Vec<f64>>,
    /// PS-PPI only: the estimated optimal weight `Ŵ`.
    weight: Option<Vec<Vec<f64>>>,
    /// PS-PPI only: per-pattern sizes, conditioning and covariance path.
    diagnostics: Option<String>,
}

fn matrix_rows(m: &psppi_core::linalg::Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

impl PyFit {
    fn from_baseline(fit: &BaselineFit, names: Vec<String>) -> Self {
        Self {
            method: fit.method.as_str().to_string(),
            coefficients: names,
            theta: fit.theta.iter().copied().collect(),
            se: fit.se(),
            ci: fit.ci.clone(),
            covariance: matrix_rows(&fit.sigma),
            theta_wcc: None,
            weight: None,
            diagnostics: None,
        }
    }
}

#[pymethods]
impl PyFit {
    fn __repr__(&self) -> String {
        let parts: Vec<String> = self
            .coefficients
            .iter()
            .zip(&self.theta)
            .zip(&self.se)
            .map(|((c, t), s)| format!("{c}={t:.4}±{s:.4}"))
            .collect();
        format!("Fit({}: {})", self.method, parts.join(", "))
    }
}

fn options(covariance_path: &str, meat_mode: &str, level: f64) -> PyResult<PsppiOptions> {
    Ok(PsppiOptions {
        path: parse::<CovariancePath>(covariance_path)?,
        solver: SolverOptions { meat_mode: parse::<MeatMode>(meat_mode)?, ..Default::default() },
        level,
        ..Default::default()
    })
}

/// Unweighted complete-case analysis.
#[pyfunction]
#[pyo3(signature = (model, data, level = 0.95))]
fn fit_cca(model: &PyModel, data: &PyDataset, level: f64) -> PyResult<PyFit> {
    let (ee, names) = model.build(data.inner.schema())?;
    let fit = core_cca(ee.as_ref(), &data.inner, &SolverOptions::default(), level).map_err(err)?;
    Ok(PyFit::from_baseline(&fit, names))
}

/// Complete-case analysis weighted by the inverse complete-record propensity.
#[pyfunction]
#[pyo3(signature = (model, data, propensity, meat_mode = "ipw", level = 0.95))]
fn fit_wcca(
    model: &PyModel,
    data: &PyDataset,
    propensity: &PyPropensity,
    meat_mode: &str,
    level: f64,
) -> PyResult<PyFit> {
    let (ee, names) = model.build(data.inner.schema())?;
    let solver = SolverOptions { meat_mode: parse(meat_mode)?, ..Default::default() };
    let fit = core_wcca(ee.as_ref(), &data.inner, &propensity.inner, &solver, level).map_err(err)?;
    Ok(PyFit::from_baseline(&fit, names))
}

/// Prediction-powered inference using only the outcome-missing records.
#[pyfunction]
#[pyo3(signature = (model, data, predictions, covariance_path = "jackknife", meat_mode = "ipw", level = 0.95))]
fn fit_ppi_outcome(
    model: &PyModel,
    data: &PyDataset,
    predictions: &PyPredictions,
    covariance_path: &str,
    meat_mode: &str,
    level: f64,
) -> PyResult<PyFit> {
    let (ee, names) = model.build(data.inner.schema())?;
    let opts = options(covariance_path, meat_mode, level)?;
    let fit = core_ppi(ee.as_ref(), &data.inner, &predictions.inner, &opts).map_err(err)?;
    Ok(PyFit::from_baseline(&fit, names))
}

/// Pattern-stratified prediction-powered estimate over every missingness pattern.
#[pyfunction]
#[pyo3(signature = (model, data, propensity, predictions, covariance_path = "jackknife", meat_mode = "ipw", level = 0.95))]
fn fit_psppi(
    model: &PyModel,
    data: &PyDataset,
    propensity: &PyPropensity,
    predictions: &PyPredictions,
    covariance_path: &str,
    meat_mode: &str,
    level: f64,
) -> PyResult<PyFit> {
    let (ee, names) = model.build(data.inner.schema())?;
    let opts = options(covariance_path, meat_mode, level)?;
    let fit = core_psppi(ee.as_ref(), &data.inner, &propensity.inner, &predictions.inner, &opts).map_err(err)?;
    let mut out = PyFit::from_baseline(&BaselineFit::from(&fit), names);
    out.theta_wcc = Some(fit.theta_wcc.iter().copied().collect());
    out.weight = Some(matrix_rows(&fit.weight));
    out.diagnostics = Some(diagnostics_text(&fit, data.inner.schema(), data.inner.registry()));
    Ok(out)
}

fn sim_config(n: usize, seed: u64, propensity_mode: &str, sigma_pred: f64, lambda_pred: f64) -> PyResult<SimConfig> {
    let cfg = SimConfig {
        n,
        seed,
        reps: 1,
        sigma_pred,
        lambda_pred,
        propensity_mode: parse::<PropensityMode>(propensity_mode)?,
        ..SimConfig::default()
    };
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

/// One simulated replicate as `(dataset, predictions, full_rows)`.
#[pyfunction]
#[pyo3(signature = (n = 5000, seed = 20240601, replicate = 0, sigma_pred = 0.0, lambda_pred = 0.0))]
fn simulate_dataset(
    n: usize,
    seed: u64,
    replicate: usize,
    sigma_pred: f64,
    lambda_pred: f64,
) -> PyResult<(PyDataset, PyPredictions, Vec<Vec<f64>>)> {
    let cfg = sim_config(n, seed, "known", sigma_pred, lambda_pred)?;
    let data = simulation::simulate_dataset(&cfg, replicate).map_err(err)?;
    let oracle = simulation::replicate_oracle(&cfg, replicate, &data.full, sigma_pred, lambda_pred);
    let full = data.full.chunks_exact(simulation::VARIABLES.len()).map(<[f64]>::to_vec).collect();
    Ok((PyDataset { inner: data.dataset }, PyPredictions { inner: oracle }, full))
}

/// Runs every method on one simulated replicate; failed methods are omitted.
#[pyfunction]
#[pyo3(signature = (n = 5000, seed = 20240601, replicate = 0, sigma_pred = 0.0, lambda_pred = 0.0, propensity_mode = "estimated_correct"))]
fn simulate_replicate(
    n: usize,
    seed: u64,
    replicate: usize,
    sigma_pred: f64,
    lambda_pred: f64,
    propensity_mode: &str,
) -> PyResult<Vec<PyFit>> {
    let cfg = sim_config(n, seed, propensity_mode, sigma_pred, lambda_pred)?;
    let result = simulation::run_replicate(&cfg, replicate);
    let names = simulation::sim_design().coefficient_names(&simulation::sim_schema());
    Ok(result
        .estimates
        .iter()
        .filter_map(|(m, est)| {
            let e = est.as_ref().ok()?;
            Some(PyFit {
                method: m.as_str().to_string(),
                coefficients: names.clone(),
                theta: e.theta.clone(),
                se: e.se.clone(),
                ci: e.ci.clone(),
                covariance: Vec::new(),
                theta_wcc: None,
                weight: None,
                diagnostics: None,
            })
        })
        .collect())
}

#[pymodule]
fn psppi(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyPredictions>()?;
    m.add_class::<PyPropensity>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyFit>()?;
    m.add_function(wrap_pyfunction!(fit_cca, m)?)?;
    m.add_function(wrap_pyfunction!(fit_wcca, m)?)?;
    m.add_function(wrap_pyfunction!(fit_ppi_outcome, m)?)?;
    m.add_function(wrap_pyfunction!(fit_psppi, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_replicate, m)?)?;
    Ok(())
}
