//! Pattern-logit propensity models for nonmonotone MAR data.
//!
//! Each incomplete pattern `k` has its own logistic link
//! `π_k = expit(a_k + Σ b_kt · term_t)` whose terms only touch variables
//! observed under `k`; the complete-pattern probability is
//! `π_∞ = 1 − Σ_k π_k`.

use std::fmt::Write as _;

use crate::data::{Coarsening, ObservedDataset, PatternRegistry, VariableSchema};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::zestim::expit;

/// Floor on `π_∞` and on every `π_k` used as a weight denominator.
pub const PI_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Var(usize),
    Product(usize, usize),
}

impl Term {
    pub fn eval(&self, record: &[f64]) -> f64 {
        match *self {
            Term::Var(j) => record[j],
            Term::Product(a, b) => record[a] * record[b],
        }
    }

    pub fn vars(&self) -> Vec<usize> {
        match *self {
            Term::Var(j) => vec![j],
            Term::Product(a, b) => vec![a, b],
        }
    }

    fn render(&self, schema: &VariableSchema) -> String {
        let n = schema.names();
        match *self {
            Term::Var(j) => n[j].clone(),
            Term::Product(a, b) => format!("{}:{}", n[a], n[b]),
        }
    }
}

/// Linear predictor of one pattern: an implicit intercept plus `terms`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternPredictor {
    pub mask: Vec<bool>,
    pub terms: Vec<Term>,
}

impl PatternPredictor {
    fn dim(&self) -> usize {
        1 + self.terms.len()
    }

    fn features(&self, record: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        for (slot, t) in self.terms.iter().enumerate() {
            out[slot + 1] = t.eval(record);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternLinearPredictorSpec {
    schema: VariableSchema,
    patterns: Vec<PatternPredictor>,
    offsets: Vec<usize>,
}

impl PatternLinearPredictorSpec {
    /// Validates MAR compatibility: each pattern's terms read only
    /// variables that pattern observes.
    pub fn new(schema: VariableSchema, patterns: Vec<PatternPredictor>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(patterns.len());
        let mut at = 0;
        for (i, p) in patterns.iter().enumerate() {
            if p.mask.len() != schema.len() {
                return Err(Error::PropensitySpec(format!("pattern {} mask has wrong width", i + 1)));
            }
            if patterns[..i].iter().any(|q| q.mask == p.mask) {
                return Err(Error::PropensitySpec(format!("pattern {} is listed twice", i + 1)));
            }
            for t in &p.terms {
                if let Some(j) = t.vars().into_iter().find(|&j| !p.mask[j]) {
                    return Err(Error::PropensitySpec(format!(
                        "pattern {} term `{}` uses `{}`, which that pattern does not observe",
                        describe_mask(&schema, &p.mask),
                        t.render(&schema),
                        schema.names()[j]
                    )));
                }
            }
            offsets.push(at);
            at += p.dim();
        }
        Ok(Self { schema, patterns, offsets })
    }

    /// Intercept-only spec for every pattern of a registry (MCAR family).
    pub fn intercept_only(schema: VariableSchema, registry: &PatternRegistry) -> Result<Self> {
        let patterns =
            registry.patterns().iter().map(|p| PatternPredictor { mask: p.mask.clone(), terms: vec![] }).collect();
        Self::new(schema, patterns)
    }

    pub fn schema(&self) -> &VariableSchema {
        &self.schema
    }

    pub fn patterns(&self) -> &[PatternPredictor] {
        &self.patterns
    }

    /// Stacked coefficient dimension `d_π`.
    pub fn dim(&self) -> usize {
        self.patterns.iter().map(PatternPredictor::dim).sum()
    }

    fn block(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k] + self.patterns[k].dim()
    }

    pub fn find(&self, mask: &[bool]) -> Option<usize> {
        self.patterns.iter().position(|p| p.mask == mask)
    }

    /// Maps registry pattern `k` (1-based) to its spec entry (0-based).
    pub fn align(&self, registry: &PatternRegistry) -> Result<Vec<usize>> {
        registry
            .patterns()
            .iter()
            .map(|p| {
                self.find(&p.mask).ok_or_else(|| {
                    Error::PropensitySpec(format!("no propensity model for pattern {}", p.describe(&self.schema)))
                })
            })
            .collect()
    }
}

fn describe_mask(schema: &VariableSchema, mask: &[bool]) -> String {
    let miss: Vec<&str> =
        mask.iter().enumerate().filter(|(_, &o)| !o).map(|(j, _)| schema.names()[j].as_str()).collect();
    format!("{{{}}}", miss.join(","))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Known,
    Fitted,
}

/// Diagnostics of a likelihood fit.
#[derive(Debug, Clone)]
pub struct MleInfo {
    pub iterations: usize,
    pub gradient_norm: f64,
    /// Log-likelihood after every accepted iteration, starting at `ω₀`.
    pub loglik_path: Vec<f64>,
    /// Observed information `−∂²ℓ/∂ω²` at the optimum.
    pub information: Matrix,
}

#[derive(Debug, Clone)]
pub struct PropensityModel {
    spec: PatternLinearPredictorSpec,
    coefficients: Vector,
    provenance: Provenance,
    mle: Option<MleInfo>,
}

/// An inverse-probability weight and whether it hit the floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weight {
    pub value: f64,
    pub clipped: bool,
}

impl PropensityModel {
    pub fn known(spec: PatternLinearPredictorSpec, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != spec.dim() {
            return Err(Error::PropensitySpec(format!(
                "expected {} coefficients, got {}",
                spec.dim(),
                coefficients.len()
            )));
        }
        Ok(Self { spec, coefficients: Vector::from_vec(coefficients), provenance: Provenance::Known, mle: None })
    }

    pub fn spec(&self) -> &PatternLinearPredictorSpec {
        &self.spec
    }

    pub fn coefficients(&self) -> &Vector {
        &self.coefficients
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn mle_info(&self) -> Option<&MleInfo> {
        self.mle.as_ref()
    }

    fn linear_predictor(&self, k: usize, record: &[f64]) -> f64 {
        let p = &self.spec.patterns[k];
        let c = &self.coefficients.as_slice()[self.spec.block(k)];
        c[0] + p.terms.iter().zip(&c[1..]).map(|(t, b)| b * t.eval(record)).sum::<f64>()
    }

    /// `π_k(G_k(record))` for spec pattern `k` (0-based); reads only the
    /// variables pattern `k` observes.
    pub fn pi_pattern(&self, k: usize, record: &[f64]) -> f64 {
        expit(self.linear_predictor(k, record))
    }

    /// `π_∞(record)` without the floor check; needs a complete record.
    pub fn pi_complete(&self, record: &[f64]) -> f64 {
        1.0 - (0..self.spec.patterns.len()).map(|k| self.pi_pattern(k, record)).sum::<f64>()
    }

    /// `(π_1, …, π_K, π_∞)` on a complete record.
    pub fn evaluate(&self, record: &[f64]) -> Result<Vec<f64>> {
        let mut out: Vec<f64> = (0..self.spec.patterns.len()).map(|k| self.pi_pattern(k, record)).collect();
        let pi_inf = 1.0 - out.iter().sum::<f64>();
        if !(pi_inf > PI_FLOOR) {
            return Err(Error::InvalidSimplex { pi_complete: pi_inf });
        }
        out.push(pi_inf);
        Ok(out)
    }

    /// `1/π_∞` for a complete record, clipped at `1/ε`.
    pub fn complete_weight(&self, record: &[f64]) -> Weight {
        clip(self.pi_complete(record))
    }

    /// `1/π_k` for a record of spec pattern `k`, clipped at `1/ε`.
    pub fn pattern_weight(&self, k: usize, record: &[f64]) -> Weight {
        clip(self.pi_pattern(k, record))
    }

    /// Standard errors from the observed information, when fitted.
    pub fn standard_errors(&self) -> Option<Vec<f64>> {
        let info = self.mle.as_ref()?.information.clone();
        let cov = info.try_inverse()?;
        Some((0..cov.nrows()).map(|i| cov[(i, i)].max(0.0).sqrt()).collect())
    }
}

fn clip(pi: f64) -> Weight {
    if pi.is_finite() && pi >= PI_FLOOR {
        Weight { value: 1.0 / pi, clipped: false }
    } else {
        Weight { value: 1.0 / PI_FLOOR, clipped: true }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MleOptions {
    pub gradient_tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self { gradient_tol: 1e-8, max_iter: 200, max_halvings: 60 }
    }
}

/// Precomputed design rows for the likelihood.
struct LikelihoodData {
    dim: usize,
    blocks: Vec<std::ops::Range<usize>>,
    /// Complete records: per pattern feature rows (flattened by block).
    complete: Vec<Vec<f64>>,
    /// Incomplete records: (spec pattern, features).
    incomplete: Vec<(usize, Vec<f64>)>,
}

impl LikelihoodData {
    fn build(spec: &PatternLinearPredictorSpec, ds: &ObservedDataset) -> Result<Self> {
        let map = spec.align(ds.registry())?;
        let blocks: Vec<_> = (0..spec.patterns.len()).map(|k| spec.block(k)).collect();
        let dim = spec.dim();
        let mut complete = Vec::new();
        let mut incomplete = Vec::new();
        for (i, &c) in ds.coarsening().iter().enumerate() {
            let rec = ds.row(i);
            match c {
                Coarsening::Complete => {
                    let mut z = vec![0.0; dim];
                    for (k, p) in spec.patterns.iter().enumerate() {
                        p.features(rec, &mut z[blocks[k].clone()]);
                    }
                    complete.push(z);
                }
                Coarsening::Pattern(r) => {
                    let k = map[r - 1];
                    let p = &spec.patterns[k];
                    let mut z = vec![0.0; p.dim()];
                    p.features(rec, &mut z);
                    incomplete.push((k, z));
                }
            }
        }
        Ok(Self { dim, blocks, complete, incomplete })
    }

    fn eta(&self, omega: &[f64], k: usize, z: &[f64]) -> f64 {
        omega[self.blocks[k].clone()].iter().zip(z).map(|(a, b)| a * b).sum()
    }

    /// Log-likelihood, or `None` when some complete record leaves the domain.
    fn loglik(&self, omega: &[f64]) -> Option<f64> {
        let mut ll = 0.0;
        for (k, z) in &self.incomplete {
            let pi = expit(self.eta(omega, *k, z));
            ll += pi.ln();
        }
        for z in &self.complete {
            let mut s = 0.0;
            for (k, b) in self.blocks.iter().enumerate() {
                s += expit(self.eta(omega, k, &z[b.clone()]));
            }
            let pi_inf = 1.0 - s;
            if !(pi_inf > PI_FLOOR) {
                return None;
            }
            ll += pi_inf.ln();
        }
        ll.is_finite().then_some(ll)
    }

    fn derivatives(&self, omega: &[f64]) -> (Vector, Matrix) {
        let mut g = Vector::zeros(self.dim);
        let mut h = Matrix::zeros(self.dim, self.dim);
        for (k, z) in &self.incomplete {
            let b = self.blocks[*k].clone();
            let pi = expit(self.eta(omega, *k, z));
            let zv = Vector::from_column_slice(z);
            g.rows_mut(b.start, b.len()).axpy(1.0 - pi, &zv, 1.0);
            let mut hb = h.view_mut((b.start, b.start), (b.len(), b.len()));
            hb -= (&zv * zv.transpose()) * (pi * (1.0 - pi));
        }
        let kk = self.blocks.len();
        let mut pis = vec![0.0; kk];
        for z in &self.complete {
            for (k, b) in self.blocks.iter().enumerate() {
                pis[k] = expit(self.eta(omega, k, &z[b.clone()]));
            }
            let pi_inf = 1.0 - pis.iter().sum::<f64>();
            for (k, bk) in self.blocks.iter().enumerate() {
                let sk = pis[k] * (1.0 - pis[k]);
                let zk = Vector::from_column_slice(&z[bk.clone()]);
                g.rows_mut(bk.start, bk.len()).axpy(-sk / pi_inf, &zk, 1.0);
                for (l, bl) in self.blocks.iter().enumerate() {
                    let sl = pis[l] * (1.0 - pis[l]);
                    let mut coef = sk * sl / (pi_inf * pi_inf);
                    if k == l {
                        coef += sk * (1.0 - 2.0 * pis[k]) / pi_inf;
                    }
                    let zl = Vector::from_column_slice(&z[bl.clone()]);
                    let mut hb = h.view_mut((bk.start, bl.start), (bk.len(), bl.len()));
                    hb -= (&zk * zl.transpose()) * coef;
                }
            }
        }
        (g, h)
    }
}

/// Analytic score of the pattern-logit log-likelihood at `omega`.
pub fn loglik_gradient(
    spec: &PatternLinearPredictorSpec,
    dataset: &ObservedDataset,
    omega: &[f64],
) -> Result<(Option<f64>, Vector)> {
    let data = LikelihoodData::build(spec, dataset)?;
    Ok((data.loglik(omega), data.derivatives(omega).0))
}

/// Maximum-likelihood fit of the pattern-logit model by damped Newton
/// ascent from the intercept-only fit, falling back to gradient ascent where the Hessian
/// is not negative definite.
pub fn fit_mle(
    spec: &PatternLinearPredictorSpec,
    dataset: &ObservedDataset,
    opts: &MleOptions,
) -> Result<PropensityModel> {
    let registry = dataset.registry();
    if registry.len() != spec.patterns.len() {
        return Err(Error::PropensitySpec(format!(
            "spec has {} patterns, dataset has {}",
            spec.patterns.len(),
            registry.len()
        )));
    }
    let map = spec.align(registry)?;
    let sizes = dataset.pattern_sizes();
    for (r, &k) in map.iter().enumerate() {
        let need = spec.patterns[k].dim();
        if sizes[r] < need {
            return Err(Error::StratumTooSmall { pattern: r + 1, size: sizes[r], need });
        }
    }

    let data = LikelihoodData::build(spec, dataset)?;
    // Start from the MCAR fit, which is always inside the domain.
    let mut omega = vec![0.0; data.dim];
    let n = dataset.n() as f64;
    for (r, &k) in map.iter().enumerate() {
        let f = sizes[r] as f64 / n;
        omega[data.blocks[k].start] = (f / (1.0 - f)).ln();
    }
    let mut ll = data.loglik(&omega).ok_or(Error::LikelihoodBoundary)?;
    let mut path = vec![ll];
    for iter in 0..opts.max_iter {
        let (g, h) = data.derivatives(&omega);
        let gnorm = linalg::sup_norm(&g);
        if gnorm <= opts.gradient_tol {
            return finish(spec, omega, &data, iter, gnorm, path, h);
        }
        let neg_h = -&h;
        let direction = match neg_h.clone().cholesky() {
            Some(ch) => ch.solve(&g),
            None => &g / g.norm().max(1.0),
        };
        let predicted = g.dot(&direction).abs();
        let resolution = 1e-13 * ll.abs().max(1.0) * ((data.complete.len() + data.incomplete.len()) as f64).sqrt();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..opts.max_halvings {
            let cand: Vec<f64> = omega.iter().zip(direction.iter()).map(|(o, d)| o + t * d).collect();
            if let Some(cand_ll) = data.loglik(&cand) {
                // Near the optimum the predicted gain drops below the
                // resolution of the summed log-likelihood; there the step is
                // judged by the score norm instead.
                let flat = ll - cand_ll <= resolution && t * predicted <= resolution;
                if cand_ll >= ll || (flat && linalg::sup_norm(&data.derivatives(&cand).0) < gnorm) {
                    omega = cand;
                    ll = cand_ll;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            // No ascent possible within rounding: accept if the gradient is
            // already negligible relative to the sample size.
            if gnorm <= 1e-10 * (dataset.n() as f64).max(1.0) {
                return finish(spec, omega, &data, iter, gnorm, path, h);
            }
            return Err(Error::NoConvergence { iterations: iter, score_norm: gnorm });
        }
        path.push(ll);
    }
    let (g, _) = data.derivatives(&omega);
    Err(Error::NoConvergence { iterations: opts.max_iter, score_norm: linalg::sup_norm(&g) })
}

fn finish(
    spec: &PatternLinearPredictorSpec,
    omega: Vec<f64>,
    data: &LikelihoodData,
    iterations: usize,
    gradient_norm: f64,
    loglik_path: Vec<f64>,
    hessian: Matrix,
) -> Result<PropensityModel> {
    let model = PropensityModel {
        spec: spec.clone(),
        coefficients: Vector::from_vec(omega),
        provenance: Provenance::Fitted,
        mle: Some(MleInfo { iterations, gradient_norm, loglik_path, information: -hessian }),
    };
    let min_inf = data
        .complete
        .iter()
        .map(|z| {
            let s: f64 = data
                .blocks
                .iter()
                .enumerate()
                .map(|(k, b)| expit(data.eta(model.coefficients.as_slice(), k, &z[b.clone()])))
                .sum();
            1.0 - s
        })
        .fold(f64::INFINITY, f64::min);
    if min_inf <= 10.0 * PI_FLOOR {
        return Err(Error::LikelihoodBoundary);
    }
    Ok(model)
}

/// A parsed spec file: the structure, plus coefficients when every entry
/// carries one.
#[derive(Debug, Clone)]
pub struct SpecFile {
    pub spec: PatternLinearPredictorSpec,
    pub coefficients: Option<Vec<f64>>,
}

impl SpecFile {
    pub fn into_known(self) -> Option<Result<PropensityModel>> {
        let coefs = self.coefficients?;
        Some(PropensityModel::known(self.spec, coefs))
    }
}

#[derive(Default)]
struct Section {
    missing: Option<Vec<String>>,
    intercept: Option<f64>,
    terms: Vec<(Option<f64>, String)>,
    line: usize,
}

/// Parses the propensity spec format:
///
/// ```text
/// [pattern]
/// missing = Y
/// intercept = -1.0
/// term = 0.1 * X2
/// term = 0.1 * X1:X2
/// ```
///
/// Fitting specs omit the intercept line and the `coef *` prefixes.
pub fn parse_spec(text: &str, schema: &VariableSchema) -> Result<SpecFile> {
    let mut sections: Vec<Section> = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if line != "[pattern]" {
                return Err(Error::PropensitySpec(format!("line {}: unknown section {line}", ln + 1)));
            }
            sections.push(Section { line: ln + 1, ..Default::default() });
            continue;
        }
        let sec = sections
            .last_mut()
            .ok_or_else(|| Error::PropensitySpec(format!("line {}: entry outside [pattern]", ln + 1)))?;
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::PropensitySpec(format!("line {}: expected key = value", ln + 1)))?;
        let value = value.trim();
        match key.trim() {
            "missing" => {
                sec.missing = Some(value.split(',').map(|s| s.trim().to_string()).collect());
            }
            "intercept" => {
                sec.intercept = Some(
                    value
                        .parse()
                        .map_err(|_| Error::PropensitySpec(format!("line {}: bad intercept `{value}`", ln + 1)))?,
                );
            }
            "term" => {
                let term = match value.split_once('*') {
                    Some((c, t)) => {
                        let c: f64 = c
                            .trim()
                            .parse()
                            .map_err(|_| Error::PropensitySpec(format!("line {}: bad coefficient `{c}`", ln + 1)))?;
                        (Some(c), t.trim().to_string())
                    }
                    None => (None, value.to_string()),
                };
                sec.terms.push(term);
            }
            other => return Err(Error::PropensitySpec(format!("line {}: unknown key `{other}`", ln + 1))),
        }
    }

    let mut patterns = Vec::with_capacity(sections.len());
    let mut coefs = Vec::new();
    let mut with_coef = 0usize;
    let mut without_coef = 0usize;
    for sec in &sections {
        let missing = sec
            .missing
            .as_ref()
            .ok_or_else(|| Error::PropensitySpec(format!("section at line {} lacks `missing`", sec.line)))?;
        let mut mask = vec![true; schema.len()];
        for m in missing {
            mask[schema.index_of(m).ok_or_else(|| Error::PropensitySpec(format!("unknown variable `{m}`")))?] = false;
        }
        let mut terms = Vec::with_capacity(sec.terms.len());
        match sec.intercept {
            Some(a) => {
                with_coef += 1;
                coefs.push(a);
            }
            None => without_coef += 1,
        }
        for (c, t) in &sec.terms {
            let term = match t.split_once(':') {
                Some((a, b)) => Term::Product(lookup(schema, a)?, lookup(schema, b)?),
                None => Term::Var(lookup(schema, t)?),
            };
            terms.push(term);
            match c {
                Some(c) => {
                    with_coef += 1;
                    coefs.push(*c);
                }
                None => without_coef += 1,
            }
        }
        patterns.push(PatternPredictor { mask, terms });
    }
    if with_coef > 0 && without_coef > 0 {
        return Err(Error::PropensitySpec("either every intercept and term carries a coefficient or none does".into()));
    }
    let spec = PatternLinearPredictorSpec::new(schema.clone(), patterns)?;
    Ok(SpecFile { spec, coefficients: (with_coef > 0).then_some(coefs) })
}

fn lookup(schema: &VariableSchema, name: &str) -> Result<usize> {
    schema.index_of(name.trim()).ok_or_else(|| Error::PropensitySpec(format!("unknown variable `{}`", name.trim())))
}

/// Renders a spec (with coefficients when given) in the spec-file format.
pub fn format_spec(spec: &PatternLinearPredictorSpec, coefficients: Option<&[f64]>) -> String {
    let schema = spec.schema();
    let mut out = String::new();
    for (k, p) in spec.patterns.iter().enumerate() {
        let missing: Vec<&str> =
            p.mask.iter().enumerate().filter(|(_, &o)| !o).map(|(j, _)| schema.names()[j].as_str()).collect();
        let _ = writeln!(out, "[pattern]\nmissing = {}", missing.join(", "));
        let block = spec.block(k);
        if let Some(c) = coefficients {
            let _ = writeln!(out, "intercept = {}", c[block.start]);
        }
        for (t, term) in p.terms.iter().enumerate() {
            match coefficients {
                Some(c) => {
                    let _ = writeln!(out, "term = {} * {}", c[block.start + 1 + t], term.render(schema));
                }
                None => {
                    let _ = writeln!(out, "term = {}", term.render(schema));
                }
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const NA: f64 = f64::NAN;

    fn schema() -> VariableSchema {
        VariableSchema::new(&["Y", "X", "Z"], &["Z"]).unwrap()
    }

    #[test]
    fn mar_violation_is_rejected() {
        let p = PatternPredictor { mask: vec![false, true, true], terms: vec![Term::Var(0)] };
        let err = PatternLinearPredictorSpec::new(schema(), vec![p]).unwrap_err();
        assert!(err.to_string().contains("does not observe"));
    }

    #[test]
    fn mcar_model_evaluates_constant() {
        let spec = PatternLinearPredictorSpec::new(
            schema(),
            vec![PatternPredictor { mask: vec![false, true, true], terms: vec![] }],
        )
        .unwrap();
        let model = PropensityModel::known(spec, vec![(0.25f64 / 0.75).ln()]).unwrap();
        let pi = model.evaluate(&[3.0, -1.0, 2.0]).unwrap();
        assert!((pi[0] - 0.25).abs() < 1e-15);
        assert!((pi[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn saturated_intercepts_leave_complete_pattern() {
        let spec = PatternLinearPredictorSpec::new(
            schema(),
            vec![
                PatternPredictor { mask: vec![false, true, true], terms: vec![Term::Var(2)] },
                PatternPredictor { mask: vec![true, false, true], terms: vec![] },
            ],
        )
        .unwrap();
        let model = PropensityModel::known(spec, vec![-20.0, 0.1, -20.0]).unwrap();
        let pi = model.evaluate(&[1.0, 1.0, 1.0]).unwrap();
        assert!(pi[2] > 1.0 - 1e-8);
    }

    #[test]
    fn invalid_simplex_detected_and_weights_clipped() {
        let spec = PatternLinearPredictorSpec::new(
            schema(),
            vec![
                PatternPredictor { mask: vec![false, true, true], terms: vec![] },
                PatternPredictor { mask: vec![true, false, true], terms: vec![] },
            ],
        )
        .unwrap();
        let model = PropensityModel::known(spec, vec![5.0, 5.0]).unwrap();
        assert!(matches!(model.evaluate(&[0.0, 0.0, 0.0]), Err(Error::InvalidSimplex { .. })));
        let w = model.complete_weight(&[0.0, 0.0, 0.0]);
        assert!(w.clipped);
        assert_eq!(w.value, 1.0 / PI_FLOOR);
    }

    fn mcar_dataset(n: usize, missing: usize) -> ObservedDataset {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let z = (i as f64 * 0.37).sin();
                if i < missing {
                    vec![NA, 1.0, z]
                } else {
                    vec![1.0, 2.0, z]
                }
            })
            .collect();
        ObservedDataset::from_rows(schema(), &rows).unwrap()
    }

    #[test]
    fn bernoulli_mle_is_sample_fraction() {
        let ds = mcar_dataset(100, 30);
        let spec = PatternLinearPredictorSpec::intercept_only(schema(), ds.registry()).unwrap();
        let model = fit_mle(&spec, &ds, &MleOptions::default()).unwrap();
        let pi = model.evaluate(&[0.0, 0.0, 0.0]).unwrap();
        assert!((pi[0] - 0.30).abs() < 1e-8);
    }

    #[test]
    fn multi_pattern_mcar_matches_frequencies() {
        let mut rows = Vec::new();
        for i in 0..200 {
            let z = i as f64 / 200.0;
            rows.push(match i % 7 {
                0 | 1 => vec![NA, 1.0, z],
                2 => vec![1.0, NA, z],
                _ => vec![1.0, 1.0, z],
            });
        }
        let ds = ObservedDataset::from_rows(schema(), &rows).unwrap();
        let spec = PatternLinearPredictorSpec::intercept_only(schema(), ds.registry()).unwrap();
        let model = fit_mle(&spec, &ds, &MleOptions::default()).unwrap();
        let pi = model.evaluate(&[1.0, 1.0, 0.0]).unwrap();
        let sizes = ds.pattern_sizes();
        for k in 0..2 {
            assert!((pi[k] - sizes[k] as f64 / 200.0).abs() < 1e-8);
        }
        let info = model.mle_info().unwrap();
        assert!(info.loglik_path.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn spec_file_round_trip() {
        let text = "\
# known model
[pattern]
missing = Y
intercept = -1
term = 0.1 * Z
term = 0.2 * X:Z

[pattern]
missing = X
intercept = -2
";
        let parsed = parse_spec(text, &schema()).unwrap();
        let coefs = parsed.coefficients.clone().unwrap();
        assert_eq!(coefs, vec![-1.0, 0.1, 0.2, -2.0]);
        assert_eq!(parsed.spec.patterns()[0].terms, vec![Term::Var(2), Term::Product(1, 2)]);
        let again = parse_spec(&format_spec(&parsed.spec, Some(&coefs)), &schema()).unwrap();
        assert_eq!(again.spec, parsed.spec);
        assert_eq!(again.coefficients, Some(coefs));

        let fitting = parse_spec("[pattern]\nmissing = Y\nterm = Z\n", &schema()).unwrap();
        assert!(fitting.coefficients.is_none());
    }

    #[test]
    fn spec_file_rejects_mixed_coefficients() {
        let err = parse_spec("[pattern]\nmissing = Y\nintercept = 1\nterm = Z\n", &schema());
        assert!(err.is_err());
    }

    #[test]
    fn unmatched_pattern_is_named() {
        let ds = mcar_dataset(20, 5);
        let spec = PatternLinearPredictorSpec::new(
            schema(),
            vec![PatternPredictor { mask: vec![true, false, true], terms: vec![] }],
        )
        .unwrap();
        let err = spec.align(ds.registry()).unwrap_err();
        assert!(err.to_string().contains("{Y}"));
    }

    proptest! {
        #[test]
        fn evaluate_is_a_simplex(
            a in prop::collection::vec(-4.0f64..-0.5, 2),
            b in prop::collection::vec(-0.5f64..0.5, 2),
            rec in prop::collection::vec(-1.0f64..1.0, 3),
        ) {
            let spec = PatternLinearPredictorSpec::new(
                schema(),
                vec![
                    PatternPredictor { mask: vec![false, true, true], terms: vec![Term::Var(2)] },
                    PatternPredictor { mask: vec![true, false, true], terms: vec![Term::Product(0, 2)] },
                ],
            ).unwrap();
            let model = PropensityModel::known(spec, vec![a[0], b[0], a[1], b[1]]).unwrap();
            let pi = model.evaluate(&rec).unwrap();
            prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(pi.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }
}
