//! `report`: summary CSV → aligned text tables, one block per scenario,
//! propensity mode and method.

use std::fmt::Write as _;

use psppi_core::report::{read_summary, SummaryRow};

use crate::{io_err, Cli, CliError, ReportArgs};

pub const NOMINAL: f64 = 0.95;

/// Renders rows in first-appearance order of their blocks.
pub fn render(rows: &[SummaryRow]) -> String {
    let mut blocks: Vec<(&str, &str, &str)> = Vec::new();
    for r in rows {
        let key = (r.scenario.as_str(), r.propensity_mode.as_str(), r.method.as_str());
        if !blocks.contains(&key) {
            blocks.push(key);
        }
    }
    let mut out = String::new();
    for (scenario, mode, method) in blocks {
        let _ = writeln!(out, "== {scenario} | {mode} | {method} ==");
        let _ = writeln!(
            out,
            "{:>10} {:>11} {:<12} {:>9} {:>9} {:>10} {:>10} {:>6}",
            "sigma_pred", "lambda_pred", "coefficient", "coverage", "mc_se", "width", "bias", "n_ok"
        );
        for r in rows.iter().filter(|r| r.scenario == scenario && r.propensity_mode == mode && r.method == method) {
            let _ = writeln!(
                out,
                "{:>10} {:>11} {:<12} {:>9.3} {:>9.3} {:>10.4} {:>+10.4} {:>6}",
                r.sigma_pred, r.lambda_pred, r.coefficient, r.coverage, r.coverage_mc_se, r.width, r.bias, r.n_ok
            );
        }
        let _ = writeln!(out, "{:>10} {:>11} {:<12} {:>9.3}", "nominal", "", "", NOMINAL);
        out.push('\n');
    }
    out
}

pub fn cmd_report(args: &ReportArgs, cli: &Cli) -> Result<(), CliError> {
    let file = std::fs::File::open(&args.summary).map_err(io_err(&args.summary))?;
    let rows = read_summary(std::io::BufReader::new(file))?;
    let text = render(&rows);
    if let Some(dir) = &cli.out_dir {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join("report.txt");
        std::fs::write(&path, &text).map_err(io_err(&path))?;
    }
    if !cli.quiet {
        print!("{text}");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, sigma: f64) -> SummaryRow {
        SummaryRow {
            scenario: "s".into(),
            propensity_mode: "known".into(),
            sigma_pred: sigma,
            lambda_pred: 0.0,
            method: method.into(),
            coefficient: "intercept".into(),
            n_ok: 10,
            n_failed: 0,
            bias: 0.0,
            bias_mc_se: 0.0,
            coverage: 0.9,
            coverage_mc_se: 0.01,
            width: 0.1,
            width_mc_se: 0.0,
        }
    }

    #[test]
    fn one_block_per_method_with_nominal_row() {
        let text = render(&[row("cca", 0.0), row("psppi", 0.0), row("psppi", 1.0)]);
        assert_eq!(text.matches("== ").count(), 2);
        assert_eq!(text.matches("nominal").count(), 2);
        assert!(text.contains("0.950"));
    }
}
