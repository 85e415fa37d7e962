//! `estimate`: PS-PPI and baselines on a user-supplied dataset.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use psppi_core::baselines::{fit_cca, fit_ppi_outcome, fit_wcca};
use psppi_core::data::{ObservedDataset, PredictionOracle, VariableSchema};
use psppi_core::io::{read_table, Table};
use psppi_core::propensity::{fit_mle, parse_spec, MleOptions};
use psppi_core::psppi::fit_psppi;
use psppi_core::report::{diagnostics_text, report_rows, write_report, ReportRow};
use psppi_core::zestim::{linear_ee, logistic_ee};
use psppi_core::{BaselineFit, DesignSpec, Error, EstimatingFunction, PsppiOptions, SolverOptions};

use crate::{io_err, out_dir, Cli, CliError, EstimateArgs, RunManifest};

const PATTERN_COLUMN: &str = "__pattern";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Linear,
    Logistic,
}

/// Regression model file:
///
/// ```text
/// family = linear
/// outcome = Y
/// covariates = X1, X2
/// intercept = true
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub family: Family,
    pub outcome: String,
    pub covariates: Vec<String>,
    pub intercept: bool,
}

impl ModelSpec {
    pub fn linear(outcome: &str, covariates: &[&str]) -> Self {
        Self {
            family: Family::Linear,
            outcome: outcome.to_string(),
            covariates: covariates.iter().map(|s| s.to_string()).collect(),
            intercept: true,
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut family = None;
        let mut outcome = None;
        let mut covariates = None;
        let mut intercept = true;
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = || CliError::Core(Error::SchemaMismatch(format!("model spec line {}: `{line}`", ln + 1)));
            let (k, v) = line.split_once('=').ok_or_else(bad)?;
            let v = v.trim();
            match k.trim() {
                "family" => {
                    family = Some(match v {
                        "linear" => Family::Linear,
                        "logistic" => Family::Logistic,
                        _ => return Err(bad()),
                    })
                }
                "outcome" => outcome = Some(v.to_string()),
                "covariates" => {
                    covariates = Some(v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
                }
                "intercept" => {
                    intercept = match v {
                        "true" => true,
                        "false" => false,
                        _ => return Err(bad()),
                    }
                }
                _ => return Err(bad()),
            }
        }
        let missing = |k: &str| CliError::Core(Error::SchemaMismatch(format!("model spec is missing `{k}`")));
        Ok(Self {
            family: family.ok_or_else(|| missing("family"))?,
            outcome: outcome.ok_or_else(|| missing("outcome"))?,
            covariates: covariates.ok_or_else(|| missing("covariates"))?,
            intercept,
        })
    }

    pub fn render(&self) -> String {
        format!(
            "family = {}\noutcome = {}\ncovariates = {}\nintercept = {}\n",
            match self.family {
                Family::Linear => "linear",
                Family::Logistic => "logistic",
            },
            self.outcome,
            self.covariates.join(", "),
            self.intercept
        )
    }

    fn variables(&self) -> Vec<&str> {
        std::iter::once(self.outcome.as_str()).chain(self.covariates.iter().map(String::as_str)).collect()
    }

    pub fn estimating_function(&self, schema: &VariableSchema) -> Result<Box<dyn EstimatingFunction>, CliError> {
        let covs: Vec<&str> = self.covariates.iter().map(String::as_str).collect();
        let design = DesignSpec::from_names(schema, &self.outcome, &covs, self.intercept)?;
        Ok(match self.family {
            Family::Linear => Box::new(linear_ee(design)),
            Family::Logistic => Box::new(logistic_ee(design)),
        })
    }
}

/// Everything `estimate` writes, before it touches the disk.
#[derive(Debug, Clone)]
pub struct EstimateOutput {
    pub rows: Vec<ReportRow>,
    pub diagnostics: String,
}

fn read_csv(path: &Path) -> Result<Table, CliError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let table = read_table(std::io::BufReader::new(file))?;
    Ok(match table.column(PATTERN_COLUMN) {
        Some(_) => table.drop_column(PATTERN_COLUMN),
        None => table,
    })
}

/// Keeps model variables plus fully observed columns (the auxiliaries).
fn select_columns(data: &Table, model: &ModelSpec) -> Result<(Vec<usize>, Vec<String>), CliError> {
    let vars = model.variables();
    for v in &vars {
        if data.column(v).is_none() {
            return Err(Error::SchemaMismatch(format!("model variable `{v}` is not a data column")).into());
        }
    }
    let mut keep = Vec::new();
    let mut auxiliary = Vec::new();
    for (j, name) in data.headers.iter().enumerate() {
        if vars.contains(&name.as_str()) {
            keep.push(j);
        } else if (0..data.n_rows()).all(|i| !data.values[i * data.width() + j].is_nan()) {
            keep.push(j);
            auxiliary.push(name.clone());
        } else {
            warn!("column `{name}` is neither in the model nor fully observed; ignored");
        }
    }
    Ok((keep, auxiliary))
}

fn project(table: &Table, cols: &[usize]) -> Vec<f64> {
    let w = table.width();
    let mut out = Vec::with_capacity(table.n_rows() * cols.len());
    for i in 0..table.n_rows() {
        out.extend(cols.iter().map(|&j| table.values[i * w + j]));
    }
    out
}

pub fn estimate_files(args: &EstimateArgs) -> Result<EstimateOutput, CliError> {
    let data = read_csv(&args.data)?;
    let preds = read_csv(&args.predictions)?;
    if preds.headers != data.headers {
        return Err(Error::SchemaMismatch("prediction header differs from data header".into()).into());
    }
    if preds.n_rows() != data.n_rows() {
        return Err(Error::SchemaMismatch(format!(
            "data has {} rows, predictions have {}",
            data.n_rows(),
            preds.n_rows()
        ))
        .into());
    }
    let model_text = std::fs::read_to_string(&args.model).map_err(io_err(&args.model))?;
    let model = ModelSpec::parse(&model_text)?;
    let (cols, auxiliary) = select_columns(&data, &model)?;
    let names: Vec<&str> = cols.iter().map(|&j| data.headers[j].as_str()).collect();
    let schema = VariableSchema::new(&names, &auxiliary.iter().map(String::as_str).collect::<Vec<_>>())?;
    let ds = ObservedDataset::new(schema.clone(), project(&data, &cols))?;
    let oracle = PredictionOracle::new(cols.len(), project(&preds, &cols))?;
    let ee = model.estimating_function(&schema)?;
    let coef_names = ee.design().expect("regression design").coefficient_names(&schema);
    let opts = PsppiOptions {
        path: args.covariance_path,
        solver: SolverOptions { meat_mode: args.meat_mode, ..Default::default() },
        level: args.level,
        ..Default::default()
    };

    let mut rows = Vec::new();
    let mut diagnostics = String::new();
    let cca = fit_cca(ee.as_ref(), &ds, &opts.solver, opts.level)?;
    rows.extend(report_rows(&cca, &coef_names));
    if ds.registry().is_empty() {
        let note = "no incomplete records: PS-PPI reduces to complete-case analysis, only CCA reported";
        warn!("{note}");
        let _ = writeln!(diagnostics, "n_complete = {}\nnote = {note}", ds.n_complete());
        return Ok(EstimateOutput { rows, diagnostics });
    }

    let spec_text = std::fs::read_to_string(&args.propensity).map_err(io_err(&args.propensity))?;
    let spec_file = parse_spec(&spec_text, &schema)?;
    let propensity = match spec_file.clone().into_known() {
        Some(known) => known?,
        None => {
            info!("fitting propensity model by maximum likelihood");
            fit_mle(&spec_file.spec, &ds, &MleOptions::default())?
        }
    };
    let wcca = fit_wcca(ee.as_ref(), &ds, &propensity, &opts.solver, opts.level)?;
    rows.extend(report_rows(&wcca, &coef_names));
    let mut notes = Vec::new();
    match fit_ppi_outcome(ee.as_ref(), &ds, &oracle, &opts) {
        Ok(fit) => rows.extend(report_rows(&fit, &coef_names)),
        Err(Error::NoOutcomePattern) => notes.push("no outcome-only pattern: ppi_outcome not reported".to_string()),
        Err(e) => return Err(e.into()),
    }
    let ps = fit_psppi(ee.as_ref(), &ds, &propensity, &oracle, &opts)?;
    rows.extend(report_rows(&BaselineFit::from(&ps), &coef_names));

    diagnostics.push_str(&diagnostics_text(&ps, &schema, ds.registry()));
    let _ = writeln!(diagnostics, "propensity = {}", if spec_file.coefficients.is_some() { "known" } else { "fitted" });
    for n in notes {
        let _ = writeln!(diagnostics, "note = {n}");
    }
    Ok(EstimateOutput { rows, diagnostics })
}

pub fn cmd_estimate(args: &EstimateArgs, cli: &Cli, threads: usize) -> Result<(), CliError> {
    let started = Instant::now();
    let out = estimate_files(args)?;
    let dir = out_dir(cli)?;
    let report = dir.join("report.csv");
    let file = std::fs::File::create(&report).map_err(io_err(&report))?;
    write_report(std::io::BufWriter::new(file), &out.rows)?;
    let diag = dir.join("report.diagnostics");
    std::fs::write(&diag, &out.diagnostics).map_err(io_err(&diag))?;
    let mut manifest = RunManifest {
        command: "estimate".into(),
        threads,
        config: vec![
            ("data".into(), args.data.display().to_string()),
            ("predictions".into(), args.predictions.display().to_string()),
            ("propensity".into(), args.propensity.display().to_string()),
            ("model".into(), args.model.display().to_string()),
            ("covariance_path".into(), args.covariance_path.as_str().into()),
            ("meat_mode".into(), args.meat_mode.as_str().into()),
            ("level".into(), args.level.to_string()),
        ],
        artifacts: vec![report.clone(), diag],
        ..Default::default()
    };
    manifest.write(&dir, started)?;
    if !cli.quiet {
        println!("report: {}", report.display());
    }
    Ok(())
}
