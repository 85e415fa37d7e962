//! Synthetic nonmonotone-MAR study: data generation, pattern assignment,
//! noisy predictions, replicate runner and Monte Carlo summaries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;

use crate::baselines::{fit_cca, fit_ppi_outcome, fit_wcca, BaselineFit, Method};
use crate::data::{ObservedDataset, PredictionOracle, VariableSchema};
use crate::error::{Error, Result};
use crate::linalg;
use crate::propensity::{fit_mle, MleOptions, PatternLinearPredictorSpec, PatternPredictor, PropensityModel, Term};
use crate::psppi::{fit_psppi, CovariancePath, PsppiOptions};
use crate::report::SummaryRow;
use crate::zestim::{linear_ee, DesignSpec, LinearEe, MeatMode, SolverOptions};

pub const VARIABLES: [&str; 5] = ["Y", "X1", "X2", "Z1", "Z2"];
const Y: usize = 0;
const X1: usize = 1;
const X2: usize = 2;
const Z1: usize = 3;

/// Random stream identifiers within a replicate.
pub mod streams {
    pub const DATA: u64 = 0;
    pub const PATTERN: u64 = 1;
    pub const PRED_NOISE: u64 = 2;
    pub const PRED_BIAS: u64 = 3;
}

/// Generator for `(seed, replicate, stream)`; independent of execution order.
pub fn stream_rng(seed: u64, replicate: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((replicate as u64) << 8) | stream);
    rng
}

pub fn sim_schema() -> VariableSchema {
    VariableSchema::new(&VARIABLES, &["Z1", "Z2"]).expect("static schema")
}

/// `Y ~ 1 + X1 + X2`.
pub fn sim_design() -> DesignSpec {
    DesignSpec::new(Y, vec![X1, X2], true)
}

pub fn sim_model() -> LinearEe {
    linear_ee(sim_design())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropensityMode {
    Known,
    EstimatedCorrect,
    EstimatedMisspecified,
}

impl PropensityMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Known => "known",
            Self::EstimatedCorrect => "estimated_correct",
            Self::EstimatedMisspecified => "estimated_misspecified",
        }
    }
}

impl std::str::FromStr for PropensityMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "known" => Ok(Self::Known),
            "estimated_correct" => Ok(Self::EstimatedCorrect),
            "estimated_misspecified" => Ok(Self::EstimatedMisspecified),
            other => Err(Error::Config(format!("unknown propensity mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub beta: [f64; 3],
    pub sigma: f64,
    pub sigma_tau: f64,
    pub lambda_nu: f64,
    pub sigma_z: f64,
    pub rho: f64,
    pub n: usize,
    pub reps: usize,
    pub sigma_pred: f64,
    pub lambda_pred: f64,
    pub propensity_mode: PropensityMode,
    /// Exponential parameters are means (`λ = 0` is a point mass at 0)
    /// rather than rates.
    pub exp_param_is_mean: bool,
    pub seed: u64,
    pub path: CovariancePath,
    pub meat_mode: MeatMode,
    pub level: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            beta: [1.0, 1.0, 1.0],
            sigma: 0.5,
            sigma_tau: 0.3,
            lambda_nu: 0.02,
            sigma_z: 0.2,
            rho: 0.4,
            n: 5000,
            reps: 500,
            sigma_pred: 0.0,
            lambda_pred: 0.0,
            propensity_mode: PropensityMode::EstimatedCorrect,
            exp_param_is_mean: true,
            seed: 20240601,
            path: CovariancePath::Jackknife,
            meat_mode: MeatMode::Ipw,
            level: 0.95,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        for (name, v) in [
            ("sigma", self.sigma),
            ("sigma_tau", self.sigma_tau),
            ("sigma_z", self.sigma_z),
            ("sigma_pred", self.sigma_pred),
            ("lambda_nu", self.lambda_nu),
            ("lambda_pred", self.lambda_pred),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be finite and non-negative"));
            }
        }
        if !self.exp_param_is_mean && (self.lambda_nu == 0.0 || self.lambda_pred == 0.0) {
            return bad("exponential rates must be positive when exp_param_is_mean = false");
        }
        if !(self.rho.abs() < 1.0) {
            return bad("rho must lie in (-1, 1)");
        }
        if self.n < 50 {
            return bad("n must be at least 50");
        }
        if self.reps < 1 {
            return bad("reps must be at least 1");
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad("level must lie in (0, 1)");
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return bad("beta must be finite");
        }
        Ok(())
    }

    /// A draw from Exponential(λ) under the configured parameterization.
    fn exponential(&self, lambda: f64, e1: f64) -> f64 {
        if self.exp_param_is_mean {
            lambda * e1
        } else {
            e1 / lambda
        }
    }

    fn psppi_options(&self) -> PsppiOptions {
        PsppiOptions {
            path: self.path,
            solver: SolverOptions { meat_mode: self.meat_mode, ..Default::default() },
            level: self.level,
            ..Default::default()
        }
    }
}

/// Full data, row-major `N × 5` over `(Y, X1, X2, Z1, Z2)`.
pub fn generate_full_data<R: Rng>(cfg: &SimConfig, rng: &mut R) -> Vec<f64> {
    let c = (1.0 - cfg.rho * cfg.rho).sqrt();
    let mut out = Vec::with_capacity(cfg.n * 5);
    for _ in 0..cfg.n {
        let n1: f64 = rng.sample(StandardNormal);
        let n2: f64 = rng.sample(StandardNormal);
        let n3: f64 = rng.sample(StandardNormal);
        let e1: f64 = rng.sample(Exp1);
        let n4: f64 = rng.sample(StandardNormal);
        let z1 = cfg.sigma_z * n1;
        let z2 = cfg.sigma_z * (cfg.rho * n1 + c * n2);
        let x1 = 0.1 * z1.exp() + cfg.sigma_tau * n3;
        let x2 = z2.sin() + cfg.exponential(cfg.lambda_nu, e1);
        let y = cfg.beta[0] + cfg.beta[1] * x1 + cfg.beta[2] * x2 + cfg.sigma * n4;
        out.extend_from_slice(&[y, x1, x2, z1, z2]);
    }
    out
}

fn mask(missing: &[usize]) -> Vec<bool> {
    (0..5).map(|j| !missing.contains(&j)).collect()
}

/// Masks of the three study patterns: `Y`; `X2`; `Y` and `X1`.
pub fn study_masks() -> [Vec<bool>; 3] {
    [mask(&[Y]), mask(&[X2]), mask(&[Y, X1])]
}

/// Study label (1..=3) of a pattern mask.
pub fn study_label(m: &[bool]) -> Option<usize> {
    study_masks().iter().position(|s| s.as_slice() == m).map(|i| i + 1)
}

/// Structure of the data-generating propensity model.
pub fn correct_spec() -> PatternLinearPredictorSpec {
    let [m1, m2, m3] = study_masks();
    PatternLinearPredictorSpec::new(
        sim_schema(),
        vec![
            PatternPredictor { mask: m1, terms: vec![Term::Var(X2), Term::Var(Z1), Term::Product(X1, X2)] },
            PatternPredictor {
                mask: m2,
                terms: vec![Term::Var(Y), Term::Var(X1), Term::Var(Z1), Term::Product(X1, Y)],
            },
            PatternPredictor { mask: m3, terms: vec![Term::Var(X2), Term::Var(Z1)] },
        ],
    )
    .expect("static spec")
}

/// Every pattern's logit on `Z1` alone.
pub fn misspecified_spec() -> PatternLinearPredictorSpec {
    let patterns =
        study_masks().into_iter().map(|m| PatternPredictor { mask: m, terms: vec![Term::Var(Z1)] }).collect();
    PatternLinearPredictorSpec::new(sim_schema(), patterns).expect("static spec")
}

pub fn truth_model() -> PropensityModel {
    PropensityModel::known(correct_spec(), vec![-1.0, 0.1, 0.1, 0.1, -1.8, -0.2, 0.1, 0.1, 0.3, -1.0, 0.1, 0.2])
        .expect("static coefficients")
}

/// Draws each record's pattern from the model's categorical distribution
/// and masks the corresponding cells.
pub fn assign_patterns<R: Rng>(full: &[f64], truth: &PropensityModel, rng: &mut R) -> Result<ObservedDataset> {
    let schema = truth.spec().schema().clone();
    let p = schema.len();
    let mut values = Vec::with_capacity(full.len());
    for rec in full.chunks_exact(p) {
        let pi = truth.evaluate(rec)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = None;
        for (k, pk) in pi[..pi.len() - 1].iter().enumerate() {
            acc += pk;
            if u < acc {
                chosen = Some(k);
                break;
            }
        }
        match chosen {
            Some(k) => {
                let m = &truth.spec().patterns()[k].mask;
                values.extend(rec.iter().zip(m).map(|(&v, &o)| if o { v } else { f64::NAN }));
            }
            None => values.extend_from_slice(rec),
        }
    }
    ObservedDataset::new(schema, values)
}

/// Predictions `truth + b + e` for `Y, X1, X2` with `e = σ_pred·N(0,1)` and
/// `b` exponential; the auxiliary columns carry no prediction. The standard
/// draws do not depend on `σ_pred` or `λ_pred`.
pub fn synth_predictions<R: Rng>(
    cfg: &SimConfig,
    full: &[f64],
    sigma_pred: f64,
    lambda_pred: f64,
    noise_rng: &mut R,
    bias_rng: &mut R,
) -> PredictionOracle {
    let mut table = Vec::with_capacity(full.len());
    for rec in full.chunks_exact(5) {
        for &v in &rec[..3] {
            let e: f64 = noise_rng.sample(StandardNormal);
            let b: f64 = bias_rng.sample(Exp1);
            let bias = if lambda_pred == 0.0 && cfg.exp_param_is_mean { 0.0 } else { cfg.exponential(lambda_pred, b) };
            table.push(v + bias + sigma_pred * e);
        }
        table.extend_from_slice(&[f64::NAN, f64::NAN]);
    }
    PredictionOracle::new(5, table).expect("width 5")
}

/// Per-coefficient estimate, standard error and interval.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodEstimate {
    pub theta: Vec<f64>,
    pub se: Vec<f64>,
    pub ci: Vec<(f64, f64)>,
}

impl From<&BaselineFit> for MethodEstimate {
    fn from(f: &BaselineFit) -> Self {
        Self { theta: f.theta.iter().copied().collect(), se: f.se(), ci: f.ci.clone() }
    }
}

#[derive(Debug, Clone)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub sigma_pred: f64,
    pub lambda_pred: f64,
    /// Record counts for complete, then study patterns 1..=3.
    pub pattern_sizes: [usize; 4],
    /// One entry per method, in [`Method::ALL`] order.
    pub estimates: Vec<(Method, std::result::Result<MethodEstimate, String>)>,
    /// `Δ̂_k` for study patterns 1..=3, when PS-PPI used the pattern.
    pub deltas: [Option<Vec<f64>>; 3],
    /// Smallest eigenvalue of `Σ̂_θ − Σ̂_PS-PPI`.
    pub dominance_min_eig: Option<f64>,
}

impl ReplicateResult {
    pub fn estimate(&self, m: Method) -> Option<&MethodEstimate> {
        self.estimates.iter().find(|(k, _)| *k == m).and_then(|(_, r)| r.as_ref().ok())
    }
}

/// Observed data of one replicate together with its full data.
pub struct ReplicateData {
    pub full: Vec<f64>,
    pub dataset: ObservedDataset,
}

pub fn simulate_dataset(cfg: &SimConfig, replicate: usize) -> Result<ReplicateData> {
    let mut data_rng = stream_rng(cfg.seed, replicate, streams::DATA);
    let full = generate_full_data(cfg, &mut data_rng);
    let mut pat_rng = stream_rng(cfg.seed, replicate, streams::PATTERN);
    let dataset = assign_patterns(&full, &truth_model(), &mut pat_rng)?;
    Ok(ReplicateData { full, dataset })
}

pub fn replicate_oracle(
    cfg: &SimConfig,
    replicate: usize,
    full: &[f64],
    sigma_pred: f64,
    lambda_pred: f64,
) -> PredictionOracle {
    let mut noise = stream_rng(cfg.seed, replicate, streams::PRED_NOISE);
    let mut bias = stream_rng(cfg.seed, replicate, streams::PRED_BIAS);
    synth_predictions(cfg, full, sigma_pred, lambda_pred, &mut noise, &mut bias)
}

/// Fitting spec for the configured mode (`None` when the truth is used).
pub fn fitting_spec(mode: PropensityMode) -> Option<PatternLinearPredictorSpec> {
    match mode {
        PropensityMode::Known => None,
        PropensityMode::EstimatedCorrect => Some(correct_spec()),
        PropensityMode::EstimatedMisspecified => Some(misspecified_spec()),
    }
}

pub fn fit_propensity(cfg: &SimConfig, ds: &ObservedDataset) -> Result<PropensityModel> {
    match fitting_spec(cfg.propensity_mode) {
        None => Ok(truth_model()),
        Some(spec) => fit_mle(&spec, ds, &MleOptions::default()),
    }
}

/// Runs one replicate for every `(σ_pred, λ_pred)` setting, sharing the data,
/// pattern draws and propensity fit across settings.
pub fn run_sweep_replicate(cfg: &SimConfig, replicate: usize, settings: &[(f64, f64)]) -> Vec<ReplicateResult> {
    let ee = sim_model();
    let solver = SolverOptions { meat_mode: cfg.meat_mode, ..Default::default() };
    let opts = cfg.psppi_options();
    let fail_all = |msg: String, sizes: [usize; 4]| -> Vec<ReplicateResult> {
        settings
            .iter()
            .map(|&(s, l)| ReplicateResult {
                replicate,
                sigma_pred: s,
                lambda_pred: l,
                pattern_sizes: sizes,
                estimates: Method::ALL.iter().map(|&m| (m, Err(msg.clone()))).collect(),
                deltas: [None, None, None],
                dominance_min_eig: None,
            })
            .collect()
    };

    let data = match simulate_dataset(cfg, replicate) {
        Ok(d) => d,
        Err(e) => return fail_all(format!("data generation: {e}"), [0; 4]),
    };
    let ds = &data.dataset;
    let mut sizes = [ds.n_complete(), 0, 0, 0];
    let labels: Vec<usize> =
        ds.registry().patterns().iter().map(|p| study_label(&p.mask).expect("study pattern")).collect();
    for (k, &n) in ds.pattern_sizes().iter().enumerate() {
        sizes[labels[k]] = n;
    }

    let propensity = fit_propensity(cfg, ds).map_err(|e| format!("propensity: {e}"));
    let cca = fit_cca(&ee, ds, &solver, cfg.level).map_err(|e| e.to_string());
    let wcca = propensity
        .as_ref()
        .map_err(Clone::clone)
        .and_then(|p| fit_wcca(&ee, ds, p, &solver, cfg.level).map_err(|e| e.to_string()));

    settings
        .iter()
        .map(|&(sigma_pred, lambda_pred)| {
            let oracle = replicate_oracle(cfg, replicate, &data.full, sigma_pred, lambda_pred);
            let ppi = fit_ppi_outcome(&ee, ds, &oracle, &opts).map_err(|e| e.to_string());
            let ps = propensity
                .as_ref()
                .map_err(Clone::clone)
                .and_then(|p| fit_psppi(&ee, ds, p, &oracle, &opts).map_err(|e| e.to_string()));
            let mut deltas = [None, None, None];
            let mut dominance = None;
            if let Ok(fit) = &ps {
                for (k, d) in fit.patterns.iter().zip(&fit.delta) {
                    deltas[labels[k - 1] - 1] = Some(d.iter().copied().collect());
                }
                dominance = Some(linalg::min_eigenvalue(&(&fit.bundle.sigma_theta - &fit.sigma_psppi)));
            }
            let est = |r: &std::result::Result<BaselineFit, String>| {
                r.as_ref().map(MethodEstimate::from).map_err(Clone::clone)
            };
            let ps_est = ps.as_ref().map(|f| MethodEstimate::from(&BaselineFit::from(f))).map_err(Clone::clone);
            ReplicateResult {
                replicate,
                sigma_pred,
                lambda_pred,
                pattern_sizes: sizes,
                estimates: vec![
                    (Method::Cca, est(&cca)),
                    (Method::Wcca, est(&wcca)),
                    (Method::PpiOutcome, est(&ppi)),
                    (Method::Psppi, ps_est),
                ],
                deltas,
                dominance_min_eig: dominance,
            }
        })
        .collect()
}

pub fn run_replicate(cfg: &SimConfig, replicate: usize) -> ReplicateResult {
    run_sweep_replicate(cfg, replicate, &[(cfg.sigma_pred, cfg.lambda_pred)]).pop().expect("one setting")
}

/// All replicates for every setting, indexed `[setting][replicate]`.
/// Replicates run on the current rayon pool; results are order-independent.
pub fn run_sweep(cfg: &SimConfig, settings: &[(f64, f64)]) -> Vec<Vec<ReplicateResult>> {
    let per_rep: Vec<Vec<ReplicateResult>> =
        (0..cfg.reps).into_par_iter().map(|r| run_sweep_replicate(cfg, r, settings)).collect();
    let mut out: Vec<Vec<ReplicateResult>> = (0..settings.len()).map(|_| Vec::with_capacity(cfg.reps)).collect();
    for rep in per_rep {
        for (s, r) in rep.into_iter().enumerate() {
            out[s].push(r);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSummary {
    pub bias: f64,
    pub bias_mc_se: f64,
    pub coverage: f64,
    pub coverage_mc_se: f64,
    pub width: f64,
    pub width_mc_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub n_ok: usize,
    pub n_failed: usize,
    pub coefficients: Vec<CoefficientSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSummary {
    pub methods: Vec<MethodSummary>,
    /// Mean record counts for complete, then study patterns 1..=3.
    pub pattern_size_means: [f64; 4],
    pub reps: usize,
}

impl ScenarioSummary {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Bias, coverage and width per method and coefficient, with Monte Carlo
/// standard errors (binomial for coverage).
pub fn summarize(results: &[ReplicateResult], beta_true: &[f64]) -> Result<ScenarioSummary> {
    let mut methods = Vec::new();
    for m in Method::ALL {
        let ok: Vec<&MethodEstimate> = results.iter().filter_map(|r| r.estimate(m)).collect();
        if ok.is_empty() {
            return Err(Error::NoSuccessfulReplicates(m.as_str().to_string()));
        }
        let coefficients = (0..beta_true.len())
            .map(|j| {
                let bias: Vec<f64> = ok.iter().map(|e| e.theta[j] - beta_true[j]).collect();
                let cover: Vec<f64> = ok
                    .iter()
                    .map(|e| f64::from(u8::from(e.ci[j].0 < beta_true[j] && beta_true[j] < e.ci[j].1)))
                    .collect();
                let width: Vec<f64> = ok.iter().map(|e| e.ci[j].1 - e.ci[j].0).collect();
                let (b, b_se) = mean_and_se(&bias);
                let c = cover.iter().sum::<f64>() / cover.len() as f64;
                let (w, w_se) = mean_and_se(&width);
                CoefficientSummary {
                    bias: b,
                    bias_mc_se: b_se,
                    coverage: c,
                    coverage_mc_se: (c * (1.0 - c) / cover.len() as f64).sqrt(),
                    width: w,
                    width_mc_se: w_se,
                }
            })
            .collect();
        methods.push(MethodSummary { method: m, n_ok: ok.len(), n_failed: results.len() - ok.len(), coefficients });
    }
    let mut sizes = [0.0; 4];
    for r in results {
        for (s, &n) in sizes.iter_mut().zip(&r.pattern_sizes) {
            *s += n as f64;
        }
    }
    for s in &mut sizes {
        *s /= results.len().max(1) as f64;
    }
    Ok(ScenarioSummary { methods, pattern_size_means: sizes, reps: results.len() })
}

pub fn summary_rows(
    summary: &ScenarioSummary,
    scenario: &str,
    cfg: &SimConfig,
    coefficient_names: &[String],
) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for ms in &summary.methods {
        for (name, c) in coefficient_names.iter().zip(&ms.coefficients) {
            rows.push(SummaryRow {
                scenario: scenario.to_string(),
                propensity_mode: cfg.propensity_mode.as_str().to_string(),
                sigma_pred: cfg.sigma_pred,
                lambda_pred: cfg.lambda_pred,
                method: ms.method.as_str().to_string(),
                coefficient: name.clone(),
                n_ok: ms.n_ok,
                n_failed: ms.n_failed,
                bias: c.bias,
                bias_mc_se: c.bias_mc_se,
                coverage: c.coverage,
                coverage_mc_se: c.coverage_mc_se,
                width: c.width,
                width_mc_se: c.width_mc_se,
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize) -> SimConfig {
        SimConfig { n, reps: 1, ..Default::default() }
    }

    #[test]
    fn degenerate_z_gives_constant_auxiliaries() {
        let cfg = SimConfig { sigma_z: 0.0, ..small(200) };
        let full = generate_full_data(&cfg, &mut stream_rng(1, 0, 0));
        for r in full.chunks_exact(5) {
            assert_eq!((r[3], r[4]), (0.0, 0.0));
        }
    }

    #[test]
    fn noiseless_design_is_exactly_linear() {
        let cfg = SimConfig { sigma: 0.0, sigma_tau: 0.0, lambda_nu: 0.0, beta: [0.5, -2.0, 3.0], ..small(100) };
        let full = generate_full_data(&cfg, &mut stream_rng(2, 0, 0));
        for r in full.chunks_exact(5) {
            assert!((r[0] - (0.5 - 2.0 * r[1] + 3.0 * r[2])).abs() < 1e-12);
            assert_eq!(r[1], 0.1 * r[3].exp());
        }
    }

    #[test]
    fn streams_are_independent_of_order() {
        let a: u64 = stream_rng(9, 3, streams::PATTERN).random();
        let _: u64 = stream_rng(9, 2, streams::PATTERN).random();
        let b: u64 = stream_rng(9, 3, streams::PATTERN).random();
        assert_eq!(a, b);
        let c: u64 = stream_rng(9, 3, streams::DATA).random();
        assert_ne!(a, c);
    }

    #[test]
    fn saturated_intercepts_keep_every_record() {
        let coefs = vec![-20.0, 0.0, 0.0, 0.0, -20.0, 0.0, 0.0, 0.0, 0.0, -20.0, 0.0, 0.0];
        let truth = PropensityModel::known(correct_spec(), coefs).unwrap();
        let cfg = small(300);
        let full = generate_full_data(&cfg, &mut stream_rng(3, 0, 0));
        let ds = assign_patterns(&full, &truth, &mut stream_rng(3, 0, 1)).unwrap();
        assert_eq!(ds.n_complete(), 300);
        assert!(ds.registry().is_empty());
    }

    #[test]
    fn perfect_predictions_equal_truth() {
        let cfg = small(50);
        let full = generate_full_data(&cfg, &mut stream_rng(4, 0, 0));
        let oracle = replicate_oracle(&cfg, 0, &full, 0.0, 0.0);
        for (i, r) in full.chunks_exact(5).enumerate() {
            for j in 0..3 {
                assert_eq!(oracle.get(i, j), Some(r[j]));
            }
            assert_eq!(oracle.get(i, 3), None);
        }
    }

    #[test]
    fn summary_arithmetic() {
        let est = |w: f64| MethodEstimate { theta: vec![1.0], se: vec![0.0], ci: vec![(1.0 - w / 2.0, 1.0 + w / 2.0)] };
        let results: Vec<ReplicateResult> = [0.02, 0.04]
            .iter()
            .enumerate()
            .map(|(i, &w)| ReplicateResult {
                replicate: i,
                sigma_pred: 0.0,
                lambda_pred: 0.0,
                pattern_sizes: [10, 1, 2, 3],
                estimates: Method::ALL.iter().map(|&m| (m, Ok(est(w)))).collect(),
                deltas: [None, None, None],
                dominance_min_eig: None,
            })
            .collect();
        let s = summarize(&results, &[1.0]).unwrap();
        let c = &s.method(Method::Cca).unwrap().coefficients[0];
        assert!((c.width - 0.03).abs() < 1e-15);
        assert_eq!(c.coverage, 1.0);
        assert_eq!(c.bias, 0.0);
        assert_eq!(c.coverage_mc_se, 0.0);
    }

    #[test]
    fn all_failed_method_is_an_error() {
        let r = ReplicateResult {
            replicate: 0,
            sigma_pred: 0.0,
            lambda_pred: 0.0,
            pattern_sizes: [0; 4],
            estimates: Method::ALL.iter().map(|&m| (m, Err("x".to_string()))).collect(),
            deltas: [None, None, None],
            dominance_min_eig: None,
        };
        assert!(matches!(summarize(&[r], &[1.0]), Err(Error::NoSuccessfulReplicates(_))));
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        assert!(SimConfig { rho: 1.0, ..Default::default() }.validate().is_err());
        assert!(SimConfig { n: 10, ..Default::default() }.validate().is_err());
        assert!(SimConfig { exp_param_is_mean: false, lambda_pred: 0.0, ..Default::default() }.validate().is_err());
    }
}
