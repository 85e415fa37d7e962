//! `simulate`: scenario grid → summary CSV, optional per-replicate CSV and
//! single-replicate export.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use psppi_core::data::Coarsening;
use psppi_core::io::{write_table, Table};
use psppi_core::propensity::format_spec;
use psppi_core::report::{write_report, write_summary, ReportRow};
use psppi_core::simulation::{
    fitting_spec, replicate_oracle, run_replicate, run_sweep, sim_design, sim_schema, simulate_dataset, summarize,
    summary_rows, truth_model, ReplicateResult, SimConfig, VARIABLES,
};

use crate::config::{ConfigFile, Scenario};
use crate::estimate::ModelSpec;
use crate::{io_err, out_dir, Cli, CliError, RunManifest, SimulateArgs};

pub const REPLICATE_HEADER: [&str; 12] = [
    "scenario",
    "propensity_mode",
    "sigma_pred",
    "lambda_pred",
    "replicate",
    "method",
    "coefficient",
    "estimate",
    "se",
    "ci_lo",
    "ci_hi",
    "error",
];

pub fn load_scenario(args: &SimulateArgs) -> Result<(ConfigFile, Scenario), CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(io_err(&args.config))?;
    let mut cfg = ConfigFile::parse(&text)?;
    for s in &args.set {
        cfg.set(s)?;
    }
    if let Some(seed) = args.seed {
        cfg.set(&format!("scenario.seed={seed}"))?;
    }
    if let Some(reps) = args.reps {
        cfg.set(&format!("scenario.reps={reps}"))?;
    }
    if let Some(n) = args.n {
        cfg.set(&format!("scenario.n={n}"))?;
    }
    if let Some(p) = args.covariance_path {
        cfg.set(&format!("estimation.covariance_path={}", p.as_str()))?;
    }
    if let Some(m) = args.meat_mode {
        cfg.set(&format!("estimation.meat_mode={}", m.as_str()))?;
    }
    let scenario = Scenario::from_config(&cfg)?;
    Ok((cfg, scenario))
}

pub fn cmd_simulate(args: &SimulateArgs, cli: &Cli, threads: usize) -> Result<(), CliError> {
    let started = Instant::now();
    let (cfg, scenario) = load_scenario(args)?;
    let dir = out_dir(cli)?;
    let coefficient_names = sim_design().coefficient_names(&sim_schema());
    let settings = scenario.settings();

    let mut summary = Vec::new();
    let mut per_rep: Vec<Vec<String>> = Vec::new();
    let mut failed = Vec::new();
    for &mode in &scenario.modes {
        let base = SimConfig { propensity_mode: mode, ..scenario.base.clone() };
        info!("{}: {} replicates x {} settings ({})", scenario.name, base.reps, settings.len(), mode.as_str());
        let results = run_sweep(&base, &settings);
        for (&(s, l), reps) in settings.iter().zip(&results) {
            let cfg_s = SimConfig { sigma_pred: s, lambda_pred: l, ..base.clone() };
            match summarize(reps, &cfg_s.beta) {
                Ok(sum) => summary.extend(summary_rows(&sum, &scenario.name, &cfg_s, &coefficient_names)),
                Err(e) => {
                    let label = format!("{} sigma_pred={s} lambda_pred={l}: {e}", mode.as_str());
                    warn!("{label}");
                    failed.push(label);
                }
            }
            if args.dump_replicates {
                per_rep.extend(replicate_lines(&scenario.name, &cfg_s, reps, &coefficient_names));
            }
        }
    }

    let mut manifest = RunManifest {
        command: "simulate".into(),
        seed: Some(scenario.base.seed),
        threads,
        config: cfg.echo(),
        ..Default::default()
    };
    let summary_path = dir.join("summary.csv");
    write_summary(create(&summary_path)?, &summary)?;
    manifest.artifacts.push(summary_path.clone());
    if args.dump_replicates {
        let path = dir.join("replicates.csv");
        write_lines(&path, &per_rep)?;
        manifest.artifacts.push(path);
    }
    if args.dump_one {
        let first = SimConfig {
            propensity_mode: scenario.modes[0],
            sigma_pred: settings[0].0,
            lambda_pred: settings[0].1,
            ..scenario.base.clone()
        };
        manifest.artifacts.extend(dump_one(&first, &dir.join("dump"))?);
    }
    let manifest_path = manifest.write(&dir, started)?;
    if !cli.quiet {
        println!("summary: {}", summary_path.display());
        println!("manifest: {}", manifest_path.display());
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::ScenarioFailed(failed))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn fmt(v: f64) -> String {
    psppi_core::io::format_cell(v)
}

fn replicate_lines(scenario: &str, cfg: &SimConfig, reps: &[ReplicateResult], names: &[String]) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    for r in reps {
        for (m, est) in &r.estimates {
            for (j, name) in names.iter().enumerate() {
                let head = vec![
                    scenario.to_string(),
                    cfg.propensity_mode.as_str().to_string(),
                    fmt(r.sigma_pred),
                    fmt(r.lambda_pred),
                    r.replicate.to_string(),
                    m.as_str().to_string(),
                    name.clone(),
                ];
                let tail = match est {
                    Ok(e) => vec![fmt(e.theta[j]), fmt(e.se[j]), fmt(e.ci[j].0), fmt(e.ci[j].1), String::new()],
                    Err(msg) => vec![String::new(), String::new(), String::new(), String::new(), msg.clone()],
                };
                out.push(head.into_iter().chain(tail).collect());
            }
        }
    }
    out
}

fn write_lines(path: &Path, lines: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    w.write_record(REPLICATE_HEADER).map_err(err)?;
    for l in lines {
        w.write_record(l).map_err(err)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Writes replicate 0 as `data.csv`, `predictions.csv`, `propensity.spec`,
/// `model.spec`, plus the in-process `report.csv` for comparison.
pub fn dump_one(cfg: &SimConfig, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let data = simulate_dataset(cfg, 0)?;
    let ds = &data.dataset;
    let mut headers: Vec<String> = VARIABLES.iter().map(|s| s.to_string()).collect();
    headers.push("__pattern".into());
    let mut values = Vec::with_capacity(ds.n() * headers.len());
    for i in 0..ds.n() {
        values.extend_from_slice(ds.row(i));
        values.push(match ds.coarsening()[i] {
            Coarsening::Complete => 0.0,
            Coarsening::Pattern(k) => k as f64,
        });
    }
    let data_path = dir.join("data.csv");
    write_table(create(&data_path)?, &Table { headers, values })?;

    let oracle = replicate_oracle(cfg, 0, &data.full, cfg.sigma_pred, cfg.lambda_pred);
    let pred_path = dir.join("predictions.csv");
    let headers: Vec<String> = VARIABLES.iter().map(|s| s.to_string()).collect();
    write_table(create(&pred_path)?, &Table { headers, values: oracle.table().to_vec() })?;

    let spec_text = match fitting_spec(cfg.propensity_mode) {
        Some(spec) => format_spec(&spec, None),
        None => {
            let truth = truth_model();
            format_spec(truth.spec(), Some(truth.coefficients().as_slice()))
        }
    };
    let spec_path = dir.join("propensity.spec");
    std::fs::write(&spec_path, spec_text).map_err(io_err(&spec_path))?;

    let model_path = dir.join("model.spec");
    let model = ModelSpec::linear("Y", &["X1", "X2"]);
    std::fs::write(&model_path, model.render()).map_err(io_err(&model_path))?;

    let names = sim_design().coefficient_names(&sim_schema());
    let result = run_replicate(cfg, 0);
    let mut rows = Vec::new();
    for (m, est) in &result.estimates {
        if let Ok(e) = est {
            for (j, name) in names.iter().enumerate() {
                rows.push(ReportRow {
                    method: m.as_str().to_string(),
                    coefficient: name.clone(),
                    estimate: e.theta[j],
                    se: e.se[j],
                    ci_lo: e.ci[j].0,
                    ci_hi: e.ci[j].1,
                });
            }
        }
    }
    let report_path = dir.join("report.csv");
    write_report(create(&report_path)?, &rows)?;
    Ok(vec![data_path, pred_path, spec_path, model_path, report_path])
}
