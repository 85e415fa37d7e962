//! Result rows, diagnostics sidecars and scenario summary tables.

use std::fmt::Write as _;
use std::io::{Read, Write};

use crate::baselines::BaselineFit;
use crate::data::VariableSchema;
use crate::error::{Error, Result};
use crate::io::{format_cell, parse_cell};
use crate::psppi::PsppiFit;

pub const REPORT_HEADER: [&str; 6] = ["method", "coefficient", "estimate", "se", "ci_lo", "ci_hi"];

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub coefficient: String,
    pub estimate: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

pub fn report_rows(fit: &BaselineFit, coefficients: &[String]) -> Vec<ReportRow> {
    let se = fit.se();
    coefficients
        .iter()
        .enumerate()
        .map(|(j, name)| ReportRow {
            method: fit.method.as_str().to_string(),
            coefficient: name.clone(),
            estimate: fit.theta[j],
            se: se[j],
            ci_lo: fit.ci[j].0,
            ci_hi: fit.ci[j].1,
        })
        .collect()
}

pub fn write_report<W: Write>(writer: W, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(REPORT_HEADER).map_err(|e| Error::Io(e.to_string()))?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.coefficient.clone(),
            format_cell(r.estimate),
            format_cell(r.se),
            format_cell(r.ci_lo),
            format_cell(r.ci_hi),
        ])
        .map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report<R: Read>(reader: R) -> Result<Vec<ReportRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::SchemaMismatch(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != REPORT_HEADER {
        return Err(Error::SchemaMismatch("unexpected report header".into()));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::SchemaMismatch(e.to_string()))?;
        let num =
            |j: usize| parse_cell(&rec[j]).ok_or_else(|| Error::SchemaMismatch(format!("bad number `{}`", &rec[j])));
        rows.push(ReportRow {
            method: rec[0].to_string(),
            coefficient: rec[1].to_string(),
            estimate: num(2)?,
            se: num(3)?,
            ci_lo: num(4)?,
            ci_hi: num(5)?,
        });
    }
    Ok(rows)
}

/// `key = value` sidecar describing a PS-PPI fit.
pub fn diagnostics_text(fit: &PsppiFit, schema: &VariableSchema, registry: &crate::data::PatternRegistry) -> String {
    let d = &fit.diagnostics;
    let mut out = String::new();
    let _ = writeln!(out, "covariance_path = {}", fit.path.as_str());
    let _ = writeln!(out, "n_complete = {}", d.n_complete);
    for (k, size) in d.pattern_sizes.iter().enumerate() {
        let label = registry.get(k + 1).map(|p| p.describe(schema)).unwrap_or_default();
        let _ = writeln!(out, "pattern_{} = {} {}", k + 1, label, size);
    }
    let used: Vec<String> = fit.patterns.iter().map(|k| k.to_string()).collect();
    let _ = writeln!(out, "patterns_used = {}", used.join(","));
    let dropped: Vec<String> = d.dropped_patterns.iter().map(|k| k.to_string()).collect();
    let _ = writeln!(out, "patterns_dropped = {}", dropped.join(","));
    let _ = writeln!(out, "clipped_weights = {}", d.clipped_total());
    let _ = writeln!(out, "jackknife_replicates = {}", d.replicates);
    let _ = writeln!(out, "weight_fallback = {}", d.weight_fallback);
    for note in &d.notes {
        let _ = writeln!(out, "note = {note}");
    }
    out
}

pub const SUMMARY_HEADER: [&str; 14] = [
    "scenario",
    "propensity_mode",
    "sigma_pred",
    "lambda_pred",
    "method",
    "coefficient",
    "n_ok",
    "n_failed",
    "bias",
    "bias_mc_se",
    "coverage",
    "coverage_mc_se",
    "width",
    "width_mc_se",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: String,
    pub propensity_mode: String,
    pub sigma_pred: f64,
    pub lambda_pred: f64,
    pub method: String,
    pub coefficient: String,
    pub n_ok: usize,
    pub n_failed: usize,
    pub bias: f64,
    pub bias_mc_se: f64,
    pub coverage: f64,
    pub coverage_mc_se: f64,
    pub width: f64,
    pub width_mc_se: f64,
}

pub fn write_summary<W: Write>(writer: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(SUMMARY_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.propensity_mode.clone(),
            format_cell(r.sigma_pred),
            format_cell(r.lambda_pred),
            r.method.clone(),
            r.coefficient.clone(),
            r.n_ok.to_string(),
            r.n_failed.to_string(),
            format_cell(r.bias),
            format_cell(r.bias_mc_se),
            format_cell(r.coverage),
            format_cell(r.coverage_mc_se),
            format_cell(r.width),
            format_cell(r.width_mc_se),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary<R: Read>(reader: R) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::SchemaMismatch(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != SUMMARY_HEADER {
        return Err(Error::SchemaMismatch("unexpected summary header".into()));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::SchemaMismatch(e.to_string()))?;
        let num =
            |j: usize| parse_cell(&rec[j]).ok_or_else(|| Error::SchemaMismatch(format!("bad number `{}`", &rec[j])));
        let int =
            |j: usize| rec[j].parse::<usize>().map_err(|_| Error::SchemaMismatch(format!("bad count `{}`", &rec[j])));
        rows.push(SummaryRow {
            scenario: rec[0].to_string(),
            propensity_mode: rec[1].to_string(),
            sigma_pred: num(2)?,
            lambda_pred: num(3)?,
            method: rec[4].to_string(),
            coefficient: rec[5].to_string(),
            n_ok: int(6)?,
            n_failed: int(7)?,
            bias: num(8)?,
            bias_mc_se: num(9)?,
            coverage: num(10)?,
            coverage_mc_se: num(11)?,
            width: num(12)?,
            width_mc_se: num(13)?,
        });
    }
    if rows.is_empty() {
        return Err(Error::SchemaMismatch("summary has no rows".into()));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_round_trip() {
        let rows = vec![ReportRow {
            method: "psppi".into(),
            coefficient: "X1".into(),
            estimate: 1.0 / 3.0,
            se: 0.1,
            ci_lo: 0.1,
            ci_hi: 0.5,
        }];
        let mut buf = Vec::new();
        write_report(&mut buf, &rows).unwrap();
        assert_eq!(read_report(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn empty_summary_is_rejected() {
        let mut buf = Vec::new();
        write_summary(&mut buf, &[]).unwrap();
        assert!(matches!(read_summary(buf.as_slice()), Err(Error::SchemaMismatch(_))));
        assert!(matches!(read_summary("".as_bytes()), Err(Error::SchemaMismatch(_))));
    }
}
