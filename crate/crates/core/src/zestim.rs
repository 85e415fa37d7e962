//! Weighted Z-estimation: estimating functions, the root solver, and the
//! bread / meat / sandwich plug-ins.

use crate::data::VariableSchema;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};

/// Which columns of a record feed a regression-type estimating function.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    pub outcome: usize,
    pub covariates: Vec<usize>,
    pub intercept: bool,
}

impl DesignSpec {
    pub fn new(outcome: usize, covariates: Vec<usize>, intercept: bool) -> Self {
        Self { outcome, covariates, intercept }
    }

    /// Resolves variable names against a schema.
    pub fn from_names(schema: &VariableSchema, outcome: &str, covariates: &[&str], intercept: bool) -> Result<Self> {
        let outcome = schema.require(outcome)?;
        let covariates = covariates.iter().map(|c| schema.require(c)).collect::<Result<_>>()?;
        Ok(Self { outcome, covariates, intercept })
    }

    pub fn dim(&self) -> usize {
        self.covariates.len() + usize::from(self.intercept)
    }

    pub fn features(&self, record: &[f64]) -> Vector {
        let mut x = Vector::zeros(self.dim());
        let mut at = 0;
        if self.intercept {
            x[0] = 1.0;
            at = 1;
        }
        for (slot, &j) in self.covariates.iter().enumerate() {
            x[at + slot] = record[j];
        }
        x
    }

    pub fn outcome(&self, record: &[f64]) -> f64 {
        record[self.outcome]
    }

    /// Every record column the design reads.
    pub fn variables(&self) -> Vec<usize> {
        let mut v = vec![self.outcome];
        v.extend(self.covariates.iter().copied());
        v
    }

    pub fn coefficient_names(&self, schema: &VariableSchema) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        if self.intercept {
            names.push("intercept".to_string());
        }
        names.extend(self.covariates.iter().map(|&j| schema.names()[j].clone()));
        names
    }
}

/// A vector-valued estimating function `ψ(record; θ)` with its Jacobian.
pub trait EstimatingFunction: Send + Sync {
    fn dim(&self) -> usize;

    fn psi(&self, record: &[f64], theta: &Vector) -> Vector;

    /// `∂ψ/∂θ` at `(record, θ)`.
    fn jacobian(&self, record: &[f64], theta: &Vector) -> Matrix;

    /// Rejects records outside the model's support.
    fn check_record(&self, _row: usize, _record: &[f64]) -> Result<()> {
        Ok(())
    }

    /// True when ψ is affine in θ, which allows a closed-form root.
    fn is_affine(&self) -> bool {
        false
    }

    fn design(&self) -> Option<&DesignSpec> {
        None
    }

    /// True when the fit at `θ` reproduces this record exactly in a way
    /// that only happens at infinity (e.g. a logistic probability of 0 or 1).
    fn saturated(&self, _record: &[f64], _theta: &Vector) -> bool {
        false
    }

    /// `u` with `∂ψ/∂θ = −u uᵀ` independent of θ, when ψ has that form.
    /// Enables leave-one-out refits by rank-one downdates.
    fn rank_one_factor(&self, _record: &[f64]) -> Option<Vector> {
        None
    }

    fn name(&self) -> &str;
}

/// Least-squares estimating function `ψ = x(y − xᵀθ)`.
#[derive(Debug, Clone)]
pub struct LinearEe {
    design: DesignSpec,
}

pub fn linear_ee(design: DesignSpec) -> LinearEe {
    LinearEe { design }
}

impl EstimatingFunction for LinearEe {
    fn dim(&self) -> usize {
        self.design.dim()
    }

    fn psi(&self, record: &[f64], theta: &Vector) -> Vector {
        let x = self.design.features(record);
        let r = self.design.outcome(record) - x.dot(theta);
        x * r
    }

    fn jacobian(&self, record: &[f64], _theta: &Vector) -> Matrix {
        let x = self.design.features(record);
        -(&x * x.transpose())
    }

    fn is_affine(&self) -> bool {
        true
    }

    fn rank_one_factor(&self, record: &[f64]) -> Option<Vector> {
        Some(self.design.features(record))
    }

    fn design(&self) -> Option<&DesignSpec> {
        Some(&self.design)
    }

    fn name(&self) -> &str {
        "linear"
    }
}

/// Logistic score `ψ = x(y − expit(xᵀθ))`.
#[derive(Debug, Clone)]
pub struct LogisticEe {
    design: DesignSpec,
}

pub fn logistic_ee(design: DesignSpec) -> LogisticEe {
    LogisticEe { design }
}

pub fn expit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

const BINARY_TOL: f64 = 1e-9;

impl EstimatingFunction for LogisticEe {
    fn dim(&self) -> usize {
        self.design.dim()
    }

    fn psi(&self, record: &[f64], theta: &Vector) -> Vector {
        let x = self.design.features(record);
        let mu = expit(x.dot(theta));
        x * (self.design.outcome(record) - mu)
    }

    fn jacobian(&self, record: &[f64], theta: &Vector) -> Matrix {
        let x = self.design.features(record);
        let mu = expit(x.dot(theta));
        -(&x * x.transpose()) * (mu * (1.0 - mu))
    }

    fn check_record(&self, row: usize, record: &[f64]) -> Result<()> {
        let y = self.design.outcome(record);
        if (y - 0.0).abs() > BINARY_TOL && (y - 1.0).abs() > BINARY_TOL {
            return Err(Error::NonBinaryOutcome { row, value: y });
        }
        Ok(())
    }

    fn design(&self) -> Option<&DesignSpec> {
        Some(&self.design)
    }

    fn saturated(&self, record: &[f64], theta: &Vector) -> bool {
        let mu = expit(self.design.features(record).dot(theta));
        mu.min(1.0 - mu) < 1e-8
    }

    fn name(&self) -> &str {
        "logistic"
    }
}

/// Complete records with positive weights. `n_total` is the size of the
/// full dataset the sample was drawn from; it normalizes the plug-ins.
#[derive(Debug, Clone)]
pub struct WeightedSample {
    width: usize,
    data: Vec<f64>,
    weights: Vec<f64>,
    n_total: usize,
}

impl WeightedSample {
    pub fn new(width: usize, data: Vec<f64>, weights: Vec<f64>, n_total: usize) -> Result<Self> {
        if width == 0 || data.len() != width * weights.len() {
            return Err(Error::SchemaMismatch("sample data does not match weights".into()));
        }
        if let Some((row, &value)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidWeight { row, value });
        }
        Ok(Self { width, data, weights, n_total })
    }

    pub fn from_rows(rows: &[Vec<f64>], weights: Vec<f64>, n_total: usize) -> Result<Self> {
        let width = rows.first().map_or(0, |r| r.len());
        Self::new(width, rows.concat(), weights, n_total)
    }

    pub fn unit(rows: &[Vec<f64>]) -> Result<Self> {
        Self::from_rows(rows, vec![1.0; rows.len()], rows.len())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn record(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.data.chunks_exact(self.width).zip(self.weights.iter().copied())
    }

    /// Same sample with record `j` removed.
    pub fn without(&self, j: usize) -> Self {
        let mut data = Vec::with_capacity(self.data.len() - self.width);
        data.extend_from_slice(&self.data[..j * self.width]);
        data.extend_from_slice(&self.data[(j + 1) * self.width..]);
        let mut weights = self.weights.clone();
        weights.remove(j);
        Self { width: self.width, data, weights, n_total: self.n_total }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { weights: self.weights.iter().map(|w| w * c).collect(), ..self.clone() }
    }
}

/// Normalization of the bread and meat plug-ins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeatMode {
    /// `(1/N)Σ w(−ψ̇)` and `(1/N)Σ w²ψψᵀ`, consistent under non-constant weights.
    #[default]
    Ipw,
    /// Unweighted bread and once-weighted meat averaged over the sample.
    Paper,
}

impl std::str::FromStr for MeatMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ipw" => Ok(MeatMode::Ipw),
            "paper" => Ok(MeatMode::Paper),
            other => Err(Error::Config(format!("unknown meat mode `{other}`"))),
        }
    }
}

impl MeatMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MeatMode::Ipw => "ipw",
            MeatMode::Paper => "paper",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub separation_cap: f64,
    pub condition_cap: f64,
    pub step_floor: f64,
    pub meat_mode: MeatMode,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100,
            separation_cap: 1e4,
            condition_cap: 1e12,
            step_floor: 2f64.powi(-20),
            meat_mode: MeatMode::Ipw,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta: Vector,
    pub bread: Matrix,
    pub meat: Matrix,
    /// Variance of the √N-scaled estimator, `N = n_total`.
    pub sandwich: Matrix,
    pub n_total: usize,
    pub converged: bool,
    pub iterations: usize,
    pub score_norm: f64,
}

impl FitResult {
    /// Covariance of the estimator itself.
    pub fn covariance(&self) -> Matrix {
        &self.sandwich / self.n_total as f64
    }
}

/// Root of the weighted estimating equation.
#[derive(Debug, Clone)]
pub struct Root {
    pub theta: Vector,
    pub iterations: usize,
    pub score_norm: f64,
}

pub fn weighted_score<E: EstimatingFunction + ?Sized>(ee: &E, sample: &WeightedSample, theta: &Vector) -> Vector {
    let mut s = Vector::zeros(ee.dim());
    for (rec, w) in sample.iter() {
        s += ee.psi(rec, theta) * w;
    }
    s
}

/// `Σ wᵢ ∂ψ/∂θ` at `θ`.
pub fn weighted_jacobian<E: EstimatingFunction + ?Sized>(ee: &E, sample: &WeightedSample, theta: &Vector) -> Matrix {
    let d = ee.dim();
    let mut h = Matrix::zeros(d, d);
    for (rec, w) in sample.iter() {
        h += ee.jacobian(rec, theta) * w;
    }
    h
}

fn newton_direction(h: &Matrix, score: &Vector, cap: f64) -> Result<Vector> {
    let neg = -h;
    let condition = linalg::condition_number(&neg);
    if condition > cap {
        return Err(Error::SingularDesign { condition });
    }
    let chol = neg.clone().cholesky().ok_or(Error::SingularDesign { condition: f64::INFINITY })?;
    Ok(chol.solve(score))
}

/// Solves `Σ wᵢ ψ(recordᵢ; θ) = 0`.
pub fn solve_root<E: EstimatingFunction + ?Sized>(
    ee: &E,
    sample: &WeightedSample,
    init: Option<&Vector>,
    opts: &SolverOptions,
) -> Result<Root> {
    let d = ee.dim();
    if sample.len() < d + 1 {
        return Err(Error::InsufficientData { have: sample.len(), need: d + 1 });
    }
    if ee.is_affine() {
        let zero = Vector::zeros(d);
        let h = weighted_jacobian(ee, sample, &zero);
        let s0 = weighted_score(ee, sample, &zero);
        let mut theta = newton_direction(&h, &s0, opts.condition_cap)?;
        // One refinement pass against accumulated rounding.
        let s1 = weighted_score(ee, sample, &theta);
        theta += newton_direction(&h, &s1, opts.condition_cap)?;
        let score_norm = linalg::sup_norm(&weighted_score(ee, sample, &theta));
        return Ok(Root { theta, iterations: 1, score_norm });
    }

    let mut theta = init.cloned().unwrap_or_else(|| Vector::zeros(d));
    let mut score = weighted_score(ee, sample, &theta);
    for iter in 0..opts.max_iter {
        let norm = linalg::sup_norm(&score);
        if norm <= opts.tol {
            if sample.iter().all(|(r, _)| ee.saturated(r, &theta)) {
                return Err(Error::Separation { norm: theta.norm() });
            }
            return Ok(Root { theta, iterations: iter, score_norm: norm });
        }
        let h = weighted_jacobian(ee, sample, &theta);
        let step = newton_direction(&h, &score, opts.condition_cap)?;
        let current = score.norm();
        let mut t = 1.0;
        let mut accepted = None;
        while t >= opts.step_floor {
            let cand = &theta + &step * t;
            let cand_score = weighted_score(ee, sample, &cand);
            if cand_score.norm() < current {
                accepted = Some((cand, cand_score));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, cand_score)) => {
                theta = cand;
                score = cand_score;
            }
            None => {
                // Stalled at the rounding floor of the score sum.
                let scale: f64 = sample.iter().map(|(r, w)| w * linalg::sup_norm(&ee.psi(r, &theta))).sum();
                if norm <= 1e-13 * scale.max(1.0) {
                    return Ok(Root { theta, iterations: iter, score_norm: norm });
                }
                return Err(Error::NoConvergence { iterations: iter, score_norm: norm });
            }
        }
        let pn = theta.norm();
        if pn > opts.separation_cap {
            return Err(Error::Separation { norm: pn });
        }
    }
    let norm = linalg::sup_norm(&score);
    if norm <= opts.tol {
        return Ok(Root { theta, iterations: opts.max_iter, score_norm: norm });
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, score_norm: norm })
}

/// Plug-in estimate of `E[−∂ψ/∂θ]` at `θ`.
pub fn estimate_bread<E: EstimatingFunction + ?Sized>(
    ee: &E,
    sample: &WeightedSample,
    theta: &Vector,
    mode: MeatMode,
) -> Matrix {
    let d = ee.dim();
    let mut b = Matrix::zeros(d, d);
    match mode {
        MeatMode::Ipw => {
            for (rec, w) in sample.iter() {
                b -= ee.jacobian(rec, theta) * w;
            }
            b / sample.n_total() as f64
        }
        MeatMode::Paper => {
            for (rec, _) in sample.iter() {
                b -= ee.jacobian(rec, theta);
            }
            b / sample.len() as f64
        }
    }
}

/// Plug-in estimate of the weighted second moment of ψ at `θ`.
pub fn estimate_meat<E: EstimatingFunction + ?Sized>(
    ee: &E,
    sample: &WeightedSample,
    theta: &Vector,
    mode: MeatMode,
) -> Matrix {
    let d = ee.dim();
    let mut m = Matrix::zeros(d, d);
    let (power, denom) = match mode {
        MeatMode::Ipw => (2, sample.n_total() as f64),
        MeatMode::Paper => (1, sample.len() as f64),
    };
    for (rec, w) in sample.iter() {
        let psi = ee.psi(rec, theta);
        m += (&psi * psi.transpose()) * w.powi(power);
    }
    linalg::symmetrize(&(m / denom))
}

/// `bread⁻¹ · meat · bread⁻ᵀ`, symmetrized.
pub fn sandwich_from(bread: &Matrix, meat: &Matrix) -> Result<Matrix> {
    let inv = linalg::inverse(bread).ok_or(Error::SingularBread)?;
    Ok(linalg::symmetrize(&linalg::sandwich(&inv, meat, &inv)))
}

/// Solves the weighted estimating equation and attaches sandwich pieces.
pub fn solve_weighted<E: EstimatingFunction + ?Sized>(
    ee: &E,
    sample: &WeightedSample,
    init: Option<&Vector>,
    opts: &SolverOptions,
) -> Result<FitResult> {
    for (i, (rec, _)) in sample.iter().enumerate() {
        ee.check_record(i, rec)?;
    }
    let root = solve_root(ee, sample, init, opts)?;
    let bread = estimate_bread(ee, sample, &root.theta, opts.meat_mode);
    let meat = estimate_meat(ee, sample, &root.theta, opts.meat_mode);
    let sandwich = sandwich_from(&bread, &meat)?;
    Ok(FitResult {
        theta: root.theta,
        bread,
        meat,
        sandwich,
        n_total: sample.n_total(),
        converged: true,
        iterations: root.iterations,
        score_norm: root.score_norm,
    })
}
