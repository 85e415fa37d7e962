//! Partially observed rectangular data, missingness patterns, and the
//! mask-and-impute construction.
//!
//! Missing cells are encoded as NaN. Every record carries a [`Coarsening`]
//! label: either the complete pattern or the 1-based index of one of the
//! registered [`MissingnessPattern`]s.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Variable names split into analysis variables (may be missing) and
/// auxiliary variables (always observed).
#[derive(Debug, Clone, PartialEq)]
pub struct VariableSchema {
    names: Vec<String>,
    analysis: Vec<usize>,
    auxiliary: Vec<usize>,
}

impl VariableSchema {
    /// Builds a schema in which every variable not listed in `auxiliary`
    /// is an analysis variable.
    pub fn new<S: AsRef<str>>(names: &[S], auxiliary: &[S]) -> Result<Self> {
        let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        let mut seen = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if seen.insert(n.clone(), i).is_some() {
                return Err(Error::InvalidSchema(format!("duplicate variable `{n}`")));
            }
        }
        let mut aux_idx = Vec::with_capacity(auxiliary.len());
        for a in auxiliary {
            let idx = *seen
                .get(a.as_ref())
                .ok_or_else(|| Error::InvalidSchema(format!("unknown auxiliary `{}`", a.as_ref())))?;
            if !aux_idx.contains(&idx) {
                aux_idx.push(idx);
            }
        }
        aux_idx.sort_unstable();
        let analysis: Vec<usize> = (0..names.len()).filter(|i| !aux_idx.contains(i)).collect();
        if analysis.is_empty() {
            return Err(Error::InvalidSchema("no analysis variables".into()));
        }
        Ok(Self { names, analysis, auxiliary: aux_idx })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn analysis_vars(&self) -> &[usize] {
        &self.analysis
    }

    pub fn auxiliary_vars(&self) -> &[usize] {
        &self.auxiliary
    }

    pub fn is_auxiliary(&self, j: usize) -> bool {
        self.auxiliary.contains(&j)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name).ok_or_else(|| Error::SchemaMismatch(format!("unknown variable `{name}`")))
    }
}

/// Pattern label of a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Coarsening {
    /// 1-based index into the [`PatternRegistry`].
    Pattern(usize),
    Complete,
}

impl Coarsening {
    pub fn is_complete(self) -> bool {
        matches!(self, Coarsening::Complete)
    }
}

impl fmt::Display for Coarsening {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coarsening::Pattern(k) => write!(f, "{k}"),
            Coarsening::Complete => f.write_str("inf"),
        }
    }
}

/// A binary observation mask over all variables (true = observed).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MissingnessPattern {
    pub index: usize,
    pub mask: Vec<bool>,
}

impl MissingnessPattern {
    pub fn missing_vars(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &o)| !o).map(|(j, _)| j)
    }

    pub fn is_observed(&self, j: usize) -> bool {
        self.mask[j]
    }

    /// Human-readable label, e.g. `{Y,X1}` for the missing variables.
    pub fn describe(&self, schema: &VariableSchema) -> String {
        let miss: Vec<&str> = self.missing_vars().map(|j| schema.names()[j].as_str()).collect();
        format!("{{{}}}", miss.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PatternRegistry {
    patterns: Vec<MissingnessPattern>,
}

impl PatternRegistry {
    /// Builds a registry from masks in the given order, validating them
    /// against the schema.
    pub fn from_masks(schema: &VariableSchema, masks: Vec<Vec<bool>>) -> Result<Self> {
        let mut patterns: Vec<MissingnessPattern> = Vec::with_capacity(masks.len());
        for mask in masks {
            validate_mask(schema, &mask)?;
            if patterns.iter().any(|p| p.mask == mask) {
                return Err(Error::InvalidSchema("duplicate pattern mask".into()));
            }
            let index = patterns.len() + 1;
            patterns.push(MissingnessPattern { index, mask });
        }
        Ok(Self { patterns })
    }

    /// Number of incomplete patterns `K`.
    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn patterns(&self) -> &[MissingnessPattern] {
        &self.patterns
    }

    pub fn get(&self, k: usize) -> Result<&MissingnessPattern> {
        k.checked_sub(1).and_then(|i| self.patterns.get(i)).ok_or_else(|| Error::UnknownPattern(k.to_string()))
    }

    pub fn find(&self, mask: &[bool]) -> Option<usize> {
        self.patterns.iter().find(|p| p.mask == mask).map(|p| p.index)
    }

    /// Mask of a coarsening level; `None` for the complete pattern.
    pub fn mask_of(&self, c: Coarsening) -> Result<Option<&[bool]>> {
        match c {
            Coarsening::Complete => Ok(None),
            Coarsening::Pattern(k) => Ok(Some(&self.get(k)?.mask)),
        }
    }
}

fn validate_mask(schema: &VariableSchema, mask: &[bool]) -> Result<()> {
    if mask.len() != schema.len() {
        return Err(Error::InvalidSchema(format!(
            "mask length {} does not match {} variables",
            mask.len(),
            schema.len()
        )));
    }
    if let Some(&j) = schema.auxiliary_vars().iter().find(|&&j| !mask[j]) {
        return Err(Error::InvalidSchema(format!("pattern masks auxiliary variable `{}`", schema.names()[j])));
    }
    if schema.analysis_vars().iter().all(|&j| mask[j]) {
        return Err(Error::InvalidSchema("pattern mask has no missing analysis variable".into()));
    }
    if schema.analysis_vars().iter().all(|&j| !mask[j]) {
        return Err(Error::InvalidSchema("pattern mask hides every analysis variable".into()));
    }
    Ok(())
}

/// Derives the distinct masks of the incomplete records in first-appearance
/// order and labels every record.
pub fn register_patterns(schema: &VariableSchema, values: &[f64]) -> Result<(PatternRegistry, Vec<Coarsening>)> {
    let p = schema.len();
    if p == 0 || values.len() % p != 0 {
        return Err(Error::SchemaMismatch("value matrix does not match schema width".into()));
    }
    let n = values.len() / p;
    let mut masks: Vec<Vec<bool>> = Vec::new();
    let mut lookup: HashMap<Vec<bool>, usize> = HashMap::new();
    let mut coarsening = Vec::with_capacity(n);
    let mut any_complete = false;
    for i in 0..n {
        let row = &values[i * p..(i + 1) * p];
        let mask: Vec<bool> = row.iter().map(|v| !v.is_nan()).collect();
        if let Some(&j) = schema.auxiliary_vars().iter().find(|&&j| !mask[j]) {
            return Err(Error::AuxiliaryMissing { row: i, var: schema.names()[j].clone() });
        }
        if schema.analysis_vars().iter().all(|&j| !mask[j]) {
            return Err(Error::AllMissingRow { row: i });
        }
        if mask.iter().all(|&o| o) {
            any_complete = true;
            coarsening.push(Coarsening::Complete);
            continue;
        }
        let k = match lookup.get(&mask) {
            Some(&k) => k,
            None => {
                masks.push(mask.clone());
                lookup.insert(mask, masks.len());
                masks.len()
            }
        };
        coarsening.push(Coarsening::Pattern(k));
    }
    if !any_complete {
        return Err(Error::EmptyComplete);
    }
    let registry = PatternRegistry::from_masks(schema, masks)?;
    Ok((registry, coarsening))
}

/// Observed sub-vector `G_k(record)`: entries where the mask is 1, in
/// variable order. `None` is the complete pattern (identity).
pub fn coarsen(record: &[f64], mask: Option<&[bool]>) -> Vec<f64> {
    match mask {
        None => record.to_vec(),
        Some(m) => record.iter().zip(m).filter(|(_, &o)| o).map(|(&v, _)| v).collect(),
    }
}

/// Per-cell prediction lookup. `pattern` lets implementations use a
/// different prediction function per stratum; the table oracle ignores it.
pub trait PredictionSource: Sync {
    fn predict(&self, row: usize, var: usize, pattern: usize) -> Option<f64>;
}

/// Dense N×p table of predictions; NaN marks cells without a prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionOracle {
    width: usize,
    table: Vec<f64>,
}

impl PredictionOracle {
    pub fn new(width: usize, table: Vec<f64>) -> Result<Self> {
        if width == 0 || table.len() % width != 0 {
            return Err(Error::SchemaMismatch("prediction table does not match width".into()));
        }
        Ok(Self { width, table })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let width = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::SchemaMismatch("ragged prediction rows".into()));
        }
        Self::new(width, rows.concat())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_rows(&self) -> usize {
        self.table.len() / self.width
    }

    pub fn get(&self, row: usize, var: usize) -> Option<f64> {
        if var >= self.width {
            return None;
        }
        self.table.get(row * self.width + var).copied().filter(|v| !v.is_nan())
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// Restricts the table to the given rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut table = Vec::with_capacity(rows.len() * self.width);
        for &r in rows {
            table.extend_from_slice(&self.table[r * self.width..(r + 1) * self.width]);
        }
        Self { width: self.width, table }
    }
}

impl PredictionSource for PredictionOracle {
    fn predict(&self, row: usize, var: usize, _pattern: usize) -> Option<f64> {
        self.get(row, var)
    }
}

/// A complete record assembled from observed values and predictions for
/// pattern `source_pattern`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputedRecord {
    pub values: Vec<f64>,
    pub source_pattern: Coarsening,
}

/// Immutable dataset with per-record coarsening labels.
#[derive(Debug, Clone)]
pub struct ObservedDataset {
    schema: VariableSchema,
    values: Vec<f64>,
    coarsening: Vec<Coarsening>,
    registry: PatternRegistry,
}

impl ObservedDataset {
    /// Builds the dataset and derives its pattern registry.
    pub fn new(schema: VariableSchema, values: Vec<f64>) -> Result<Self> {
        let (registry, coarsening) = register_patterns(&schema, &values)?;
        Ok(Self { schema, values, coarsening, registry })
    }

    pub fn from_rows(schema: VariableSchema, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.iter().any(|r| r.len() != schema.len()) {
            return Err(Error::SchemaMismatch("row width does not match schema".into()));
        }
        Self::new(schema, rows.concat())
    }

    pub fn schema(&self) -> &VariableSchema {
        &self.schema
    }

    pub fn registry(&self) -> &PatternRegistry {
        &self.registry
    }

    pub fn n(&self) -> usize {
        self.coarsening.len()
    }

    pub fn width(&self) -> usize {
        self.schema.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.width();
        &self.values[i * p..(i + 1) * p]
    }

    pub fn coarsening(&self) -> &[Coarsening] {
        &self.coarsening
    }

    pub fn rows_with(&self, c: Coarsening) -> Vec<usize> {
        self.coarsening.iter().enumerate().filter(|(_, &ci)| ci == c).map(|(i, _)| i).collect()
    }

    pub fn complete_rows(&self) -> Vec<usize> {
        self.rows_with(Coarsening::Complete)
    }

    /// Record counts per pattern `1..=K`.
    pub fn pattern_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.registry.len()];
        for c in &self.coarsening {
            if let Coarsening::Pattern(k) = c {
                sizes[k - 1] += 1;
            }
        }
        sizes
    }

    pub fn n_complete(&self) -> usize {
        self.coarsening.iter().filter(|c| c.is_complete()).count()
    }

    /// New dataset restricted to the given rows; patterns are re-derived.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * self.width());
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        Self::new(self.schema.clone(), values)
    }

    /// `G_k` applied to row `i`'s values, which must be complete when `k`
    /// differs from the row's own pattern.
    pub fn coarsen_row(&self, i: usize, c: Coarsening) -> Result<Vec<f64>> {
        let mask = self.registry.mask_of(c)?;
        Ok(coarsen(self.row(i), mask))
    }

    /// Masks a complete record with pattern `k` and fills the pseudo-missing
    /// cells from the oracle.
    pub fn mask_and_impute<P: PredictionSource + ?Sized>(
        &self,
        i: usize,
        c: Coarsening,
        oracle: &P,
    ) -> Result<ImputedRecord> {
        let record = self.row(i);
        if record.iter().any(|v| v.is_nan()) {
            return Err(Error::SchemaMismatch(format!("record {i} is not complete")));
        }
        self.fill(i, record, c, oracle)
    }

    /// Fills the actually missing cells of an incomplete record.
    pub fn impute_missing<P: PredictionSource + ?Sized>(&self, i: usize, oracle: &P) -> Result<ImputedRecord> {
        let c = self.coarsening[i];
        if c.is_complete() {
            return Err(Error::UnknownPattern(format!("record {i} is complete")));
        }
        self.fill(i, self.row(i), c, oracle)
    }

    fn fill<P: PredictionSource + ?Sized>(
        &self,
        i: usize,
        record: &[f64],
        c: Coarsening,
        oracle: &P,
    ) -> Result<ImputedRecord> {
        let mut values = record.to_vec();
        if let Coarsening::Pattern(k) = c {
            let pattern = self.registry.get(k)?;
            for j in pattern.missing_vars() {
                values[j] = oracle
                    .predict(i, j, k)
                    .ok_or_else(|| Error::OracleMiss { row: i, column: self.schema.names()[j].clone() })?;
            }
        }
        Ok(ImputedRecord { values, source_pattern: c })
    }
}
