//! The pattern-stratified PPI estimator.
//!
//! `θ̂_PS = θ̂_WCC − Σ_k Ŵ (γ̂_{1,k} − γ̂_{2,k})`, where `γ̂_{1,k}` refits the
//! weighted complete-case problem on complete records masked with pattern
//! `k` and imputed, and `γ̂_{2,k}` fits the imputed pattern-`k` stratum.
//! All covariance blocks are stored on the scale of the estimators.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{Coarsening, ObservedDataset, PredictionSource};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::propensity::PropensityModel;
use crate::zestim::{
    estimate_bread, solve_root, solve_weighted, EstimatingFunction, FitResult, MeatMode, SolverOptions, WeightedSample,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovariancePath {
    #[default]
    Jackknife,
    ClosedForm,
}

impl std::str::FromStr for CovariancePath {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jackknife" => Ok(Self::Jackknife),
            "closed_form" => Ok(Self::ClosedForm),
            other => Err(Error::Config(format!("unknown covariance path `{other}`"))),
        }
    }
}

impl CovariancePath {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Jackknife => "jackknife",
            Self::ClosedForm => "closed_form",
        }
    }
}

/// What to do with a pattern whose stratum is too small to fit `γ̂_{2,k}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SmallStratumPolicy {
    #[default]
    Drop,
    Error,
}

/// How leave-one-out refits are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RefitMode {
    /// Rank-one downdates when ψ allows it, warm-started Newton otherwise.
    #[default]
    Fast,
    /// Full refit of every replicate.
    Naive,
}

#[derive(Debug, Clone, Copy)]
pub struct PsppiOptions {
    pub path: CovariancePath,
    pub solver: SolverOptions,
    pub level: f64,
    pub small_strata: SmallStratumPolicy,
    pub refit: RefitMode,
    /// Condition-number cap on the denominator of `Ŵ`.
    pub condition_cap: f64,
}

impl Default for PsppiOptions {
    fn default() -> Self {
        Self {
            path: CovariancePath::Jackknife,
            solver: SolverOptions::default(),
            level: 0.95,
            small_strata: SmallStratumPolicy::Drop,
            refit: RefitMode::Fast,
            condition_cap: 1e12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CovarianceBundle {
    pub sigma_theta: Matrix,
    pub sigma_theta_gamma1: Vec<Matrix>,
    /// `sigma_gamma1_gamma1[k][l] = Cov(γ̂_{1,k}, γ̂_{1,l})`.
    pub sigma_gamma1_gamma1: Vec<Vec<Matrix>>,
    pub sigma_gamma2: Vec<Matrix>,
    pub path: CovariancePath,
}

impl CovarianceBundle {
    pub fn k(&self) -> usize {
        self.sigma_theta_gamma1.len()
    }

    /// `Σ_k Σ_{θ,γ1k}`.
    pub fn cross_sum(&self) -> Matrix {
        let d = self.sigma_theta.nrows();
        self.sigma_theta_gamma1.iter().fold(Matrix::zeros(d, d), |acc, m| acc + m)
    }

    /// `Σ_k Σ_l Σ_{γ1k,γ1l} + Σ_k Σ_{γ2k}`.
    pub fn denominator(&self) -> Matrix {
        let d = self.sigma_theta.nrows();
        let mut m = Matrix::zeros(d, d);
        for row in &self.sigma_gamma1_gamma1 {
            for b in row {
                m += b;
            }
        }
        for b in &self.sigma_gamma2 {
            m += b;
        }
        m
    }
}

#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    /// Record counts for every registered pattern, in registry order.
    pub pattern_sizes: Vec<usize>,
    pub n_complete: usize,
    pub clipped_complete: usize,
    /// Clipped weights per used pattern.
    pub clipped_pattern: Vec<usize>,
    pub replicates: usize,
    pub dropped_patterns: Vec<usize>,
    pub weight_fallback: bool,
    /// Mean of the jackknife replicates of `θ̂_WCC`.
    pub jackknife_theta_mean: Option<Vector>,
    pub notes: Vec<String>,
}

impl Diagnostics {
    pub fn clipped_total(&self) -> usize {
        self.clipped_complete + self.clipped_pattern.iter().sum::<usize>()
    }
}

#[derive(Debug, Clone)]
pub struct PsppiFit {
    /// Registry indices (1-based) of the patterns in the correction.
    pub patterns: Vec<usize>,
    pub wcc: FitResult,
    pub theta_wcc: Vector,
    pub gamma1: Vec<Vector>,
    pub gamma2: Vec<Vector>,
    pub delta: Vec<Vector>,
    pub weight: Matrix,
    pub theta_psppi: Vector,
    pub sigma_psppi: Matrix,
    pub ci: Vec<(f64, f64)>,
    pub bundle: CovarianceBundle,
    pub path: CovariancePath,
    pub diagnostics: Diagnostics,
}

impl PsppiFit {
    pub fn se(&self) -> Vec<f64> {
        (0..self.sigma_psppi.nrows()).map(|j| self.sigma_psppi[(j, j)].max(0.0).sqrt()).collect()
    }
}

/// The weighted complete-case fit with the sample it was computed on.
#[derive(Debug, Clone)]
pub struct WccFit {
    pub fit: FitResult,
    pub rows: Vec<usize>,
    pub sample: WeightedSample,
    pub clipped: usize,
}

fn propensity_index(propensity: &PropensityModel, ds: &ObservedDataset, k: usize) -> Result<usize> {
    let p = ds.registry().get(k)?;
    propensity
        .spec()
        .find(&p.mask)
        .ok_or_else(|| Error::PropensitySpec(format!("no propensity model for pattern {}", p.describe(ds.schema()))))
}

/// Complete records weighted by `1/π̂_∞`, with the number of clipped weights.
pub fn complete_sample(
    ds: &ObservedDataset,
    propensity: &PropensityModel,
) -> Result<(Vec<usize>, WeightedSample, usize)> {
    let rows = ds.complete_rows();
    let mut data = Vec::with_capacity(rows.len() * ds.width());
    let mut weights = Vec::with_capacity(rows.len());
    let mut clipped = 0;
    for &i in &rows {
        let rec = ds.row(i);
        let w = propensity.complete_weight(rec);
        clipped += w.clipped as usize;
        weights.push(w.value);
        data.extend_from_slice(rec);
    }
    let sample = WeightedSample::new(ds.width(), data, weights, ds.n())?;
    Ok((rows, sample, clipped))
}

/// Weighted complete-case fit over complete records with weights `1/π̂_∞`.
pub fn fit_wcc(
    ee: &dyn EstimatingFunction,
    ds: &ObservedDataset,
    propensity: &PropensityModel,
    solver: &SolverOptions,
) -> Result<WccFit> {
    let d = ee.dim();
    let n_cc = ds.n_complete();
    if n_cc < d + 1 {
        return Err(Error::InsufficientData { have: n_cc, need: d + 1 });
    }
    let (rows, sample, clipped) = complete_sample(ds, propensity)?;
    let fit = solve_weighted(ee, &sample, None, solver)?;
    Ok(WccFit { fit, rows, sample, clipped })
}

/// Complete records masked with pattern `k` and imputed, reusing the
/// complete-case weights.
pub fn gamma1_sample(
    ds: &ObservedDataset,
    wcc: &WccFit,
    oracle: &dyn PredictionSource,
    k: usize,
) -> Result<WeightedSample> {
    let mut data = Vec::with_capacity(wcc.rows.len() * ds.width());
    for &i in &wcc.rows {
        data.extend(ds.mask_and_impute(i, Coarsening::Pattern(k), oracle)?.values);
    }
    WeightedSample::new(ds.width(), data, wcc.sample.weights().to_vec(), ds.n())
}

/// Imputed pattern-`k` records weighted by `1/π̂_k`, with the clipped count.
pub fn gamma2_sample(
    ds: &ObservedDataset,
    propensity: &PropensityModel,
    oracle: &dyn PredictionSource,
    k: usize,
) -> Result<(WeightedSample, usize)> {
    let spec_k = propensity_index(propensity, ds, k)?;
    let rows = ds.rows_with(Coarsening::Pattern(k));
    let mut data = Vec::with_capacity(rows.len() * ds.width());
    let mut weights = Vec::with_capacity(rows.len());
    let mut clipped = 0;
    for &i in &rows {
        let w = propensity.pattern_weight(spec_k, ds.row(i));
        clipped += w.clipped as usize;
        weights.push(w.value);
        data.extend(ds.impute_missing(i, oracle)?.values);
    }
    Ok((WeightedSample::new(ds.width(), data, weights, ds.n())?, clipped))
}

/// `γ̂_{1,k}`: the weighted fit on mask-and-imputed complete records.
pub fn fit_gamma1(
    ee: &dyn EstimatingFunction,
    ds: &ObservedDataset,
    propensity: &PropensityModel,
    oracle: &dyn PredictionSource,
    k: usize,
    solver: &SolverOptions,
) -> Result<FitResult> {
    let wcc = fit_wcc(ee, ds, propensity, solver)?;
    let sample = gamma1_sample(ds, &wcc, oracle, k)?;
    solve_weighted(ee, &sample, Some(&wcc.fit.theta), solver)
}

/// `γ̂_{2,k}`: the weighted fit on the imputed pattern-`k` stratum.
pub fn fit_gamma2(
    ee: &dyn EstimatingFunction,
    ds: &ObservedDataset,
    propensity: &PropensityModel,
    oracle: &dyn PredictionSource,
    k: usize,
    solver: &SolverOptions,
) -> Result<FitResult> {
    let size = ds.rows_with(Coarsening::Pattern(k)).len();
    let need = ee.dim() + 1;
    if size < need {
        return Err(Error::StratumTooSmall { pattern: k, size, need });
    }
    let (sample, _) = gamma2_sample(ds, propensity, oracle, k)?;
    solve_weighted(ee, &sample, None, solver)
}

/// Leave-one-out refits of a single estimating equation.
struct LooSolver<'a> {
    ee: &'a dyn EstimatingFunction,
    sample: &'a WeightedSample,
    theta: &'a Vector,
    /// `(Σ w u uᵀ)⁻¹` when every record has a rank-one Jacobian.
    gram_inv: Option<Matrix>,
    solver: SolverOptions,
}

impl<'a> LooSolver<'a> {
    fn new(
        ee: &'a dyn EstimatingFunction,
        sample: &'a WeightedSample,
        theta: &'a Vector,
        refit: RefitMode,
        solver: SolverOptions,
    ) -> Result<Self> {
        let mut gram_inv = None;
        if refit == RefitMode::Fast {
            let d = ee.dim();
            let mut g = Matrix::zeros(d, d);
            let mut rank_one = true;
            for (rec, w) in sample.iter() {
                match ee.rank_one_factor(rec) {
                    Some(u) => g += (&u * u.transpose()) * w,
                    None => {
                        rank_one = false;
                        break;
                    }
                }
            }
            if rank_one {
                let cond = linalg::condition_number(&g);
                if cond > solver.condition_cap {
                    return Err(Error::SingularDesign { condition: cond });
                }
                gram_inv =
                    Some(linalg::symmetrize(&linalg::inverse(&g).ok_or(Error::SingularDesign { condition: cond })?));
            }
        }
        Ok(Self { ee, sample, theta, gram_inv, solver })
    }

    fn refit(&self, j: usize) -> Result<Vector> {
        match &self.gram_inv {
            Some(ginv) => {
                // (G − w uuᵀ)⁻¹ by Sherman–Morrison, then one exact Newton step.
                let rec = self.sample.record(j);
                let w = self.sample.weight(j);
                let u = self.ee.rank_one_factor(rec).expect("rank-one factor");
                let psi = self.ee.psi(rec, self.theta) * w;
                let v = ginv * &u;
                let h = w * u.dot(&v);
                if !(1.0 - h > 1e-12) {
                    return Err(Error::SingularDesign { condition: f64::INFINITY });
                }
                let step = ginv * &psi + &v * (w * v.dot(&psi) / (1.0 - h));
                Ok(self.theta - step)
            }
            None => {
                let reduced = self.sample.without(j);
                Ok(solve_root(self.ee, &reduced, Some(self.theta), &self.solver)?.theta)
            }
        }
    }
}

/// Output of the delete-1 jackknife.
#[derive(Debug, Clone)]
pub struct JackknifeResult {
    pub sigma_theta: Matrix,
    pub sigma_theta_gamma1: Vec<Matrix>,
    pub sigma_gamma1_gamma1: Vec<Vec<Matrix>>,
    pub replicates: usize,
    pub theta_mean: Vector,
}

/// Delete-1 jackknife over the complete records for `θ̂_WCC` and every
/// `γ̂_{1,k}`. All samples must list the same records in the same order.
pub fn jackknife_covariances(
    ee: &dyn EstimatingFunction,
    theta_sample: &WeightedSample,
    theta_hat: &Vector,
    gamma_samples: &[WeightedSample],
    gamma_hats: &[Vector],
    refit: RefitMode,
    solver: &SolverOptions,
) -> Result<JackknifeResult> {
    let d = ee.dim();
    let n = theta_sample.len();
    if n < d + 2 {
        return Err(Error::InsufficientData { have: n, need: d + 2 });
    }
    if gamma_samples.iter().any(|s| s.len() != n) || gamma_samples.len() != gamma_hats.len() {
        return Err(Error::SchemaMismatch("jackknife samples differ in length".into()));
    }
    let mut solvers = vec![LooSolver::new(ee, theta_sample, theta_hat, refit, *solver)?];
    for (s, g) in gamma_samples.iter().zip(gamma_hats) {
        solvers.push(LooSolver::new(ee, s, g, refit, *solver)?);
    }
    let m = d * solvers.len();

    let reps: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut out = Vec::with_capacity(m);
            for s in &solvers {
                out.extend(s.refit(j)?.iter().copied());
            }
            Ok(out)
        })
        .collect();

    let mut table = Matrix::zeros(n, m);
    for (j, r) in reps.into_iter().enumerate() {
        let r = r.map_err(|e| Error::Replicate { replicate: j, source: Box::new(e) })?;
        table.row_mut(j).copy_from_slice(&r);
    }
    let mean = table.row_mean();
    for mut row in table.row_iter_mut() {
        row -= &mean;
    }
    let nf = n as f64;
    let cov = linalg::symmetrize(&((table.transpose() * &table) * ((nf - 1.0) / nf)));

    let block = |a: usize, b: usize| cov.view((a * d, b * d), (d, d)).into_owned();
    let k = gamma_samples.len();
    Ok(JackknifeResult {
        sigma_theta: block(0, 0),
        sigma_theta_gamma1: (1..=k).map(|a| block(0, a)).collect(),
        sigma_gamma1_gamma1: (1..=k).map(|a| (1..=k).map(|b| block(a, b)).collect()).collect(),
        replicates: n,
        theta_mean: mean.columns(0, d).transpose(),
    })
}

/// Plug-in covariance blocks over the complete records, on the estimator
/// scale (the √N sandwiches divided by `N`).
pub fn closed_form_covariances(
    ee: &dyn EstimatingFunction,
    theta_sample: &WeightedSample,
    theta_hat: &Vector,
    gamma_samples: &[WeightedSample],
    gamma_hats: &[Vector],
    mode: MeatMode,
) -> Result<(Matrix, Vec<Matrix>, Vec<Vec<Matrix>>)> {
    let mut samples = vec![theta_sample];
    samples.extend(gamma_samples.iter());
    let mut thetas = vec![theta_hat];
    thetas.extend(gamma_hats.iter());

    let mut bread_inv = Vec::with_capacity(samples.len());
    for (s, t) in samples.iter().zip(&thetas) {
        let b = estimate_bread(ee, s, t, mode);
        bread_inv.push(linalg::inverse(&b).ok_or(Error::SingularBread)?);
    }
    let n = theta_sample.len();
    let psis: Vec<Vec<Vector>> =
        samples.iter().zip(&thetas).map(|(s, t)| (0..n).map(|i| ee.psi(s.record(i), t)).collect()).collect();
    let (power, denom) = match mode {
        MeatMode::Ipw => (2, theta_sample.n_total() as f64),
        MeatMode::Paper => (1, n as f64),
    };
    let n_total = theta_sample.n_total() as f64;
    let d = ee.dim();
    let block = |a: usize, b: usize| {
        let mut meat = Matrix::zeros(d, d);
        for i in 0..n {
            meat += (&psis[a][i] * psis[b][i].transpose()) * theta_sample.weight(i).powi(power);
        }
        linalg::sandwich(&bread_inv[a], &(meat / denom), &bread_inv[b]) / n_total
    };
    let k = gamma_samples.len();
    let sigma_theta = linalg::symmetrize(&block(0, 0));
    let cross = (1..=k).map(|a| block(0, a)).collect();
    let mut grid: Vec<Vec<Matrix>> = vec![Vec::with_capacity(k); k];
    for a in 1..=k {
        for b in 1..=k {
            let m = if b < a { grid[b - 1][a - 1].transpose() } else { block(a, b) };
            grid[a - 1].push(if a == b { linalg::symmetrize(&m) } else { m });
        }
    }
    Ok((sigma_theta, cross, grid))
}

/// `Ŵ = (Σ_k Σ_{θ,γ1k}) · [Σ_k Σ_l Σ_{γ1k,γ1l} + Σ_k Σ_{γ2k}]⁻¹`.
pub fn optimal_weight(bundle: &CovarianceBundle, condition_cap: f64) -> Result<Matrix> {
    let denom = linalg::symmetrize(&bundle.denominator());
    let cond = linalg::condition_number(&denom);
    if !(cond <= condition_cap) {
        return Err(Error::SingularDenominator { condition: cond });
    }
    let chol = denom.cholesky().ok_or(Error::SingularDenominator { condition: cond })?;
    // D is symmetric, so Ŵᵀ = D⁻¹ Sᵀ.
    Ok(chol.solve(&bundle.cross_sum().transpose()).transpose())
}

/// `θ̂_WCC − Σ_k W (γ̂_{1,k} − γ̂_{2,k})`.
pub fn combine(theta_wcc: &Vector, gamma1: &[Vector], gamma2: &[Vector], weight: &Matrix) -> Vector {
    let mut out = theta_wcc.clone();
    for (g1, g2) in gamma1.iter().zip(gamma2) {
        out -= weight * (g1 - g2);
    }
    out
}

/// Covariance of `θ̂_WCC − Σ_k W Δ̂_k`:
/// `Σ_θ − S Wᵀ − W Sᵀ + W (ΣΣ Σ_{γ1k,γ1l}) Wᵀ + Σ_k W Σ_{γ2k} Wᵀ` with
/// `S = Σ_k Σ_{θ,γ1k}`, symmetrized.
pub fn psppi_variance(bundle: &CovarianceBundle, weight: &Matrix) -> Matrix {
    let s = bundle.cross_sum();
    let wt = weight.transpose();
    let out = &bundle.sigma_theta - &s * &wt - weight * s.transpose() + weight * bundle.denominator() * &wt;
    linalg::symmetrize(&out)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Wald intervals `θ̂_j ± z·sqrt(Σ_jj / n)`; pass `n = 1` for covariances
/// already on the estimator scale.
pub fn confidence_intervals(theta: &Vector, sigma: &Matrix, n: f64, level: f64) -> Result<Vec<(f64, f64)>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("confidence level {level} is not in (0, 1)")));
    }
    let z = normal_quantile(0.5 + level / 2.0);
    (0..theta.len())
        .map(|j| {
            let v = sigma[(j, j)];
            if v < 0.0 || v.is_nan() {
                return Err(Error::NegativeVariance { coordinate: j, value: v });
            }
            let half = z * (v / n).sqrt();
            Ok((theta[j] - half, theta[j] + half))
        })
        .collect()
}

/// Runs the whole estimator: stratum fits, covariance path, `Ŵ`,
/// combination and intervals.
pub fn fit_psppi(
    ee: &dyn EstimatingFunction,
    ds: &ObservedDataset,
    propensity: &PropensityModel,
    oracle: &dyn PredictionSource,
    opts: &PsppiOptions,
) -> Result<PsppiFit> {
    let d = ee.dim();
    let solver = &opts.solver;
    let mut diag = Diagnostics { pattern_sizes: ds.pattern_sizes(), n_complete: ds.n_complete(), ..Default::default() };
    if ds.registry().is_empty() {
        return Err(Error::UnknownPattern("dataset has no incomplete pattern".into()));
    }

    let wcc = fit_wcc(ee, ds, propensity, solver).map_err(|e| e.at("weighted complete-case fit"))?;
    diag.clipped_complete = wcc.clipped;

    let mut patterns = Vec::new();
    let mut gamma2 = Vec::new();
    let mut sigma_gamma2 = Vec::new();
    for (idx, &size) in diag.pattern_sizes.clone().iter().enumerate() {
        let k = idx + 1;
        if size < d + 1 {
            match opts.small_strata {
                SmallStratumPolicy::Error => return Err(Error::StratumTooSmall { pattern: k, size, need: d + 1 }),
                SmallStratumPolicy::Drop => {
                    log::debug!("dropping pattern {k}: {size} records");
                    diag.dropped_patterns.push(k);
                    diag.notes.push(format!("pattern {k} dropped: {size} records, {} required", d + 1));
                    continue;
                }
            }
        }
        let (sample, clipped) = gamma2_sample(ds, propensity, oracle, k).map_err(|e| e.at("pattern stratum fit"))?;
        let fit = solve_weighted(ee, &sample, Some(&wcc.fit.theta), solver).map_err(|e| e.at("pattern stratum fit"))?;
        patterns.push(k);
        diag.clipped_pattern.push(clipped);
        sigma_gamma2.push(fit.covariance());
        gamma2.push(fit.theta);
    }

    let mut gamma_samples = Vec::with_capacity(patterns.len());
    let mut gamma1 = Vec::with_capacity(patterns.len());
    for &k in &patterns {
        let sample = gamma1_sample(ds, &wcc, oracle, k).map_err(|e| e.at("masked complete-case fit"))?;
        let fit =
            solve_weighted(ee, &sample, Some(&wcc.fit.theta), solver).map_err(|e| e.at("masked complete-case fit"))?;
        gamma1.push(fit.theta);
        gamma_samples.push(sample);
    }

    let bundle = match opts.path {
        CovariancePath::Jackknife => {
            let jk =
                jackknife_covariances(ee, &wcc.sample, &wcc.fit.theta, &gamma_samples, &gamma1, opts.refit, solver)
                    .map_err(|e| e.at("jackknife"))?;
            diag.replicates = jk.replicates;
            diag.jackknife_theta_mean = Some(jk.theta_mean);
            CovarianceBundle {
                sigma_theta: jk.sigma_theta,
                sigma_theta_gamma1: jk.sigma_theta_gamma1,
                sigma_gamma1_gamma1: jk.sigma_gamma1_gamma1,
                sigma_gamma2,
                path: opts.path,
            }
        }
        CovariancePath::ClosedForm => {
            let (st, cross, grid) =
                closed_form_covariances(ee, &wcc.sample, &wcc.fit.theta, &gamma_samples, &gamma1, solver.meat_mode)
                    .map_err(|e| e.at("closed-form covariance"))?;
            CovarianceBundle {
                sigma_theta: st,
                sigma_theta_gamma1: cross,
                sigma_gamma1_gamma1: grid,
                sigma_gamma2,
                path: opts.path,
            }
        }
    };

    let weight = if patterns.is_empty() {
        diag.notes.push("no usable pattern; estimator reduces to weighted complete-case".into());
        Matrix::zeros(d, d)
    } else {
        match optimal_weight(&bundle, opts.condition_cap) {
            Ok(w) => w,
            Err(Error::SingularDenominator { condition }) => {
                log::warn!("optimal weight denominator ill-conditioned ({condition:.3e}); using W = 0");
                diag.weight_fallback = true;
                diag.notes.push(format!("weight fallback to zero (condition {condition:.3e})"));
                Matrix::zeros(d, d)
            }
            Err(e) => return Err(e),
        }
    };

    let delta: Vec<Vector> = gamma1.iter().zip(&gamma2).map(|(a, b)| a - b).collect();
    let theta_psppi = combine(&wcc.fit.theta, &gamma1, &gamma2, &weight);
    let sigma_psppi = psppi_variance(&bundle, &weight);
    let ci =
        confidence_intervals(&theta_psppi, &sigma_psppi, 1.0, opts.level).map_err(|e| e.at("confidence intervals"))?;

    Ok(PsppiFit {
        patterns,
        theta_wcc: wcc.fit.theta.clone(),
        wcc: wcc.fit,
        gamma1,
        gamma2,
        delta,
        weight,
        theta_psppi,
        sigma_psppi,
        ci,
        bundle,
        path: opts.path,
        diagnostics: diag,
    })
}
