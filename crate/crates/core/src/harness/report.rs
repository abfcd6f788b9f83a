//! Tab-separated outputs and the `key=value` run metadata sidecar.
//!
//! All numbers are written with fixed precision so identical results give
//! identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use super::{BatchReport, ExperimentConfig, MechanismSpec, SweepTable, DEFAULT_F, DEFAULT_TAU0};
use crate::error::{Error, Result};
use crate::operators::Portfolio;
use crate::theory::tau_max_tsv;

/// Runtime sweep: `n` followed by one mean/n^2 column per variant.
pub fn sweep_tsv(table: &SweepTable) -> String {
    let mut out = String::from("n");
    for label in &table.labels {
        out.push('\t');
        out.push_str(label);
    }
    out.push('\n');
    for (row, n) in table.ns.iter().enumerate() {
        out.push_str(&n.to_string());
        for col in 0..table.labels.len() {
            out.push_str(&format!("\t{:.6}", table.value(row, col)));
        }
        out.push('\n');
    }
    out
}

/// Single-row runtime table for one batch, in the sweep layout.
pub fn runtime_row_tsv(report: &BatchReport, label: &str) -> String {
    format!("n\t{label}\n{}\t{:.6}\n", report.config.n, report.summary.mean_over_n2)
}

/// tau/n per fitness percent: average over all trials, then the first five
/// trials. `None` unless the batch traced tau.
pub fn tau_trajectory_tsv(report: &BatchReport) -> Option<String> {
    let avg = report.summary.tau_trajectory.as_ref()?;
    let runs: Vec<Vec<f64>> = report
        .trials
        .iter()
        .filter_map(|t| super::tau_curve(&t.tau_samples))
        .take(5)
        .collect();
    let mut out = String::from("pct_lo\tavg_tau_over_n");
    for r in 1..=runs.len() {
        out.push_str(&format!("\trun{r}"));
    }
    out.push('\n');
    for pct in 0..100 {
        out.push_str(&format!("{pct}\t{:.6}", avg[pct]));
        for run in &runs {
            out.push_str(&format!("\t{:.6}", run[pct]));
        }
        out.push('\n');
    }
    Some(out)
}

/// Operator usage in percent of iterations per fitness bucket.
pub fn usage_tsv(report: &BatchReport) -> Option<String> {
    let usage = report.summary.usage_pct.as_ref()?;
    let mut out = String::from("pct_lo");
    for op in report.config.portfolio.operators() {
        out.push_str(&format!("\trls{}_pct", op.m()));
    }
    out.push('\n');
    let buckets = usage.len();
    for (b, row) in usage.iter().enumerate() {
        out.push_str(&format_pct(b as f64 * 100.0 / buckets as f64));
        for v in row {
            out.push_str(&format!("\t{v:.4}"));
        }
        out.push('\n');
    }
    Some(out)
}

fn format_pct(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.4}")
    }
}

/// `tau_max / n` per fitness percent for an ARG batch, aligned with
/// [`tau_trajectory_tsv`].
pub fn tau_max_envelope_tsv(report: &BatchReport) -> Result<Option<String>> {
    let Some(sigma) = report.resolved.sigma else {
        return Ok(None);
    };
    tau_max_tsv(report.config.n, &report.config.portfolio, sigma.sigma).map(Some)
}

/// One line per trial.
pub fn trials_tsv(report: &BatchReport) -> String {
    let n2 = report.config.n as f64 * report.config.n as f64;
    let mut out = String::from("trial\tevaluations\tevals_over_n2\treached_optimum\tfinal_fitness\tfinal_tau\n");
    for t in &report.trials {
        let tau = t.final_tau.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
        out.push_str(&format!(
            "{}\t{}\t{:.6}\t{}\t{}\t{}\n",
            t.trial,
            t.evaluations,
            t.evaluations as f64 / n2,
            u8::from(t.reached_optimum),
            t.final_fitness,
            tau
        ));
    }
    out
}

/// Summary statistics as a two-line TSV.
pub fn summary_tsv(report: &BatchReport) -> String {
    let s = &report.summary;
    let excess = s
        .tau_excess_fraction
        .map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
    format!(
        "n\ttrials\treached\tmean\tstd_dev\tmin\tmax\tmean_over_n2\tstd_error_over_n2\ttau_excess_fraction\n{}\t{}\t{}\t{:.3}\t{:.3}\t{}\t{}\t{:.6}\t{:.6}\t{}\n",
        s.n,
        s.trials,
        s.reached,
        s.mean,
        s.std_dev,
        s.min,
        s.max,
        s.mean_over_n2,
        s.std_error() / (s.n as f64 * s.n as f64),
        excess
    )
}

/// `key=value` description of a run. Everything needed to rebuild the
/// configuration comes first; derived values and `build` are informational.
pub fn metadata(report: &BatchReport, build: &str) -> String {
    let c = &report.config;
    let mut lines = vec![
        format!("n={}", c.n),
        format!("portfolio={}", c.portfolio),
        format!("mechanism={}", c.mechanism.name()),
    ];
    match c.mechanism {
        MechanismSpec::Grg { tau } => lines.push(format!("tau={tau}")),
        MechanismSpec::Arg { sigma, factor, tau0 } => {
            lines.push(format!("sigma_schedule={sigma}"));
            lines.push(format!("F={factor}"));
            lines.push(format!("tau0={tau0}"));
        }
        _ => {}
    }
    lines.extend([
        format!("trials={}", c.trials),
        format!("master_seed={}", c.master_seed),
        format!("buckets={}", c.buckets),
        format!("tau_trace={}", c.tau_trace),
        format!("usage_trace={}", c.usage_trace),
        format!("budget={}", report.resolved.budget),
        format!("engine={}", c.engine),
    ]);
    if let Some(s) = report.resolved.sigma {
        lines.push(format!("resolved_sigma={}", s.sigma));
        lines.push(format!(
            "cstar={}",
            s.cstar.map_or_else(|| "none".to_string(), |v| v.to_string())
        ));
    }
    if let (MechanismSpec::Grg { .. }, Some(tau)) = (c.mechanism, report.resolved.tau) {
        lines.push(format!("resolved_tau={tau}"));
    }
    lines.push(format!("build={build}"));
    let mut out = lines.join("\n");
    out.push('\n');
    out
}

/// Rebuilds a configuration from a metadata sidecar. Unknown and derived
/// keys are ignored.
pub fn config_from_metadata(text: &str) -> Result<ExperimentConfig> {
    let mut values = std::collections::BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Metadata {
            line: idx + 1,
            reason: format!("expected key=value, got {line:?}"),
        })?;
        values.insert(key.trim().to_string(), (idx + 1, value.trim().to_string()));
    }
    let get = |key: &str| values.get(key).map(|(line, v)| (*line, v.as_str()));
    let required = |key: &'static str| get(key).ok_or_else(|| Error::param(key, "missing from metadata"));
    fn parse<T: std::str::FromStr>((line, value): (usize, &str)) -> Result<T> {
        value.parse().map_err(|_| Error::Metadata {
            line,
            reason: format!("invalid value {value:?}"),
        })
    }
    fn parse_with<T: std::str::FromStr<Err = Error>>((line, value): (usize, &str)) -> Result<T> {
        value.parse().map_err(|e: Error| Error::Metadata {
            line,
            reason: e.to_string(),
        })
    }

    let n: usize = parse(required("n")?)?;
    let (line, list) = required("portfolio")?;
    let sizes = list
        .split(',')
        .map(|s| parse::<usize>((line, s.trim())))
        .collect::<Result<Vec<_>>>()?;
    let portfolio = Portfolio::new(&sizes)?;
    let mechanism = match parse_with::<MechanismSpec>(required("mechanism")?)? {
        MechanismSpec::Grg { .. } => MechanismSpec::Grg {
            tau: parse_with(required("tau")?)?,
        },
        MechanismSpec::Arg { .. } => MechanismSpec::Arg {
            sigma: parse_with(required("sigma_schedule")?)?,
            factor: get("F").map_or(Ok(DEFAULT_F), parse)?,
            tau0: get("tau0").map_or(Ok(DEFAULT_TAU0), parse)?,
        },
        other => other,
    };
    let mut config = ExperimentConfig::new(n, portfolio, mechanism);
    if let Some(v) = get("trials") {
        config.trials = parse(v)?;
    }
    if let Some(v) = get("master_seed") {
        config.master_seed = parse(v)?;
    }
    if let Some(v) = get("buckets") {
        config.buckets = parse(v)?;
    }
    if let Some(v) = get("tau_trace") {
        config.tau_trace = parse(v)?;
    }
    if let Some(v) = get("usage_trace") {
        config.usage_trace = parse(v)?;
    }
    if let Some(v) = get("budget") {
        config.eval_budget = Some(parse(v)?);
    }
    if let Some(v) = get("engine") {
        config.engine = parse_with(v)?;
    }
    config.resolve()?;
    Ok(config)
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf> {
    fs::write(&path, contents).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Writes every artifact of a batch into `dir` and returns the paths.
///
/// Always: `trials.tsv`, `summary.tsv`, `runtime.tsv`, `run.meta`.
/// With usage tracing: `usage.tsv`. With tau tracing of ARG/GRG:
/// `tau.tsv`, plus `tau_max.tsv` for ARG.
pub fn write_batch(dir: &Path, report: &BatchReport, label: &str, build: &str) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = vec![
        write(dir.join("trials.tsv"), &trials_tsv(report))?,
        write(dir.join("summary.tsv"), &summary_tsv(report))?,
        write(dir.join("runtime.tsv"), &runtime_row_tsv(report, label))?,
    ];
    if let Some(tsv) = usage_tsv(report) {
        written.push(write(dir.join("usage.tsv"), &tsv)?);
    }
    if let Some(tsv) = tau_trajectory_tsv(report) {
        written.push(write(dir.join("tau.tsv"), &tsv)?);
        if let Some(envelope) = tau_max_envelope_tsv(report)? {
            written.push(write(dir.join("tau_max.tsv"), &envelope)?);
        }
    }
    written.push(write(dir.join("run.meta"), &metadata(report, build))?);
    Ok(written)
}

/// Writes a sweep table to `path`.
pub fn write_sweep(path: &Path, table: &SweepTable) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    write(path.to_path_buf(), &sweep_tsv(table)).map(drop)
}
