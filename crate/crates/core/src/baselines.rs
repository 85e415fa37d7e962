//! Comparator estimators sharing the PS-PPI report schema.

use std::fmt;
use std::str::FromStr;

use crate::data::{Coarsening, ObservedDataset, PredictionSource};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::propensity::{PatternLinearPredictorSpec, PropensityModel};
use crate::psppi::{confidence_intervals, fit_psppi, fit_wcc, PsppiFit, PsppiOptions};
use crate::zestim::{solve_weighted, EstimatingFunction, SolverOptions, WeightedSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Cca,
    Wcca,
    PpiOutcome,
    Psppi,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Cca, Method::Wcca, Method::PpiOutcome, Method::Psppi];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Cca => "cca",
            Method::Wcca => "wcca",
            Method::PpiOutcome => "ppi_outcome",
            Method::Psppi => "psppi",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::SchemaMismatch(format!("unknown method `{s}`")))
    }
}

/// Point estimate, covariance on the estimator scale, and Wald intervals.
#[derive(Debug, Clone)]
pub struct BaselineFit {
    pub method: Method,
    pub theta: Vector,
    pub sigma: Matrix,
    pub ci: Vec<(f64, f64)>,
}

impl BaselineFit {
    pub fn se(&self) -> Vec<f64> {
        (0..self.sigma.nrows()).map(|j| self.sigma[(j, j)].max(0.0).sqrt()).collect()
    }

    pub fn width(&self, j: usize) -> f64 {
        self.ci[j].1 - self.ci[j].0
    }

    fn new(method: Method, theta: Vector, sigma: Matrix, level: f64) -> Result<Self> {
        let ci = confidence_intervals(&theta, &sigma, 1.0, level)?;
        Ok(Self { method, theta, sigma, ci })
    }
}

impl From<&PsppiFit> for BaselineFit {
    fn from(fit: &PsppiFit) -> Self {
        Self {
            method: Method::Psppi,
            theta: fit.theta_psppi.clone(),
            sigma: fit.sigma_psppi.clone(),
            ci: fit.ci.clone(),
        }
    }
}

/// Unweighted complete-case analysis.
pub fn fit_cca(
    ee: &dyn EstimatingFunction,
    ds: &ObservedDataset,
    solver: &SolverOptions,
    level: f64,
) -> Result<BaselineFit> {
    let rows = ds.complete_rows();
    let need = ee.dim() + 1;
    if rows.len() < need {
        return Err(Error::InsufficientData { have: rows.len(), need });
    }
    let mut data = Vec::with_capacity(rows.len() * ds.width());
    for &i in &rows {
        data.extend_from_slice(ds.row(i));
    }
    let sample = WeightedSample::new(ds.width(), data, vec![1.0; rows.len()], rows.len())?;
    let fit = solve_weighted(ee, &sample, None, solver)?;
    BaselineFit::new(Method::Cca, fit.theta.clone(), fit.covariance(), level)
}

/// Complete-case analysis weighted by `1/π̂_∞` with sandwich intervals.
pub fn fit_wcca(
    ee: &dyn EstimatingFunction,
    ds: &ObservedDataset,
    propensity: &PropensityModel,
    solver: &SolverOptions,
    level: f64,
) -> Result<BaselineFit> {
    let wcc = fit_wcc(ee, ds, propensity, solver)?;
    BaselineFit::new(Method::Wcca, wcc.fit.theta.clone(), wcc.fit.covariance(), level)
}

/// Oracle over a row subset, forwarding to the original rows and patterns.
struct Remapped<'a> {
    inner: &'a dyn PredictionSource,
    rows: Vec<usize>,
    pattern: usize,
}

impl PredictionSource for Remapped<'_> {
    fn predict(&self, row: usize, var: usize, _pattern: usize) -> Option<f64> {
        self.inner.predict(self.rows[row], var, self.pattern)
    }
}

/// Outcome-only PPI: records missing any covariate are dropped, the single
/// missing-outcome pattern gets an MCAR propensity from sample fractions,
/// and the PS-PPI machinery runs on what is left.
pub fn fit_ppi_outcome(
    ee: &dyn EstimatingFunction,
    ds: &ObservedDataset,
    oracle: &dyn PredictionSource,
    opts: &PsppiOptions,
) -> Result<BaselineFit> {
    let design =
        ee.design().ok_or_else(|| Error::Config("outcome PPI needs an estimating function with a design".into()))?;
    let outcome = design.outcome;
    let schema = ds.schema();
    let pattern = ds
        .registry()
        .patterns()
        .iter()
        .find(|p| p.missing_vars().eq(std::iter::once(outcome)))
        .ok_or(Error::NoOutcomePattern)?
        .index;
    let rows: Vec<usize> = (0..ds.n())
        .filter(|&i| {
            matches!(ds.coarsening()[i], Coarsening::Complete) || ds.coarsening()[i] == Coarsening::Pattern(pattern)
        })
        .collect();
    let sub = ds.subset(&rows)?;
    let n_unlabeled = sub.pattern_sizes().first().copied().unwrap_or(0);
    if n_unlabeled == 0 {
        return Err(Error::NoOutcomePattern);
    }
    let frac = n_unlabeled as f64 / sub.n() as f64;
    let spec = PatternLinearPredictorSpec::intercept_only(schema.clone(), sub.registry())?;
    let propensity = PropensityModel::known(spec, vec![(frac / (1.0 - frac)).ln()])?;
    let remapped = Remapped { inner: oracle, rows, pattern };
    let fit = fit_psppi(ee, &sub, &propensity, &remapped, opts)?;
    Ok(BaselineFit { method: Method::PpiOutcome, ..BaselineFit::from(&fit) })
}
