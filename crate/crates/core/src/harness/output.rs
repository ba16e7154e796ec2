//! CSV and manifest emission, and the raw-replicate reader used to audit
//! the summaries.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a value
//! read back from a CSV is bit-identical to the one written.

use std::collections::BTreeMap;

use serde_json::json;

use super::config::SimulationConfig;
use super::summary::ReplicationSummary;
use super::ScenarioRun;
use crate::error::{Error, Result};
use crate::scenario::ReplicateOutcome;

pub const SCHEMA_LINE: &str = "# schema=1";

pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| Error::Config(format!("bad number in CSV: {s:?}")))
}

/// Column names and values of one summary row, in canonical order, without
/// duplicates.
fn summary_columns(run: &ScenarioRun, s: &ReplicationSummary) -> Vec<(String, f64)> {
    let mut cols: Vec<(String, f64)> = vec![(run.magnitude_label.to_string(), s.magnitude)];
    cols.extend(s.details.iter().cloned());
    let scalars = [
        ("theta_star", s.theta_star),
        ("replicates", s.replicates as f64),
        ("n_used", s.n_used as f64),
        ("n_failed", s.n_failed as f64),
        ("n_failed_null", s.n_failed_null as f64),
        ("kappa_hat", s.kappa_hat),
        ("kappa_hat_null", s.kappa_hat_null),
        ("normality_diag", s.normality_diag),
        ("ks_statistic", s.ks_statistic),
        ("ks_critical", s.ks_critical),
        ("rho_hat", s.rho_hat),
        ("rho_hat_q", s.rho_hat_q),
        ("sigma2_hat", s.sigma2_hat),
        ("omega2_hat", s.omega2_hat),
        ("omega2_hat_q", s.omega2_hat_q),
        ("shift_mean", s.shift_mean),
        ("shift_se", s.shift_se),
        ("shift_predicted", s.shift_predicted),
        ("power_np", s.power_np),
        ("power_np_theory", s.power_np_theory),
    ];
    cols.extend(scalars.iter().map(|(k, v)| (k.to_string(), *v)));
    for t in &s.tests {
        cols.push((format!("power_{}", t.name), t.power));
        cols.push((format!("critical_{}", t.name), t.critical_value));
    }
    for e in &s.estimators {
        cols.push((format!("bias_{}", e.name), e.bias));
        cols.push((format!("variance_{}", e.name), e.variance));
        cols.push((format!("mse_{}", e.name), e.mse));
        cols.push((format!("bias_se_{}", e.name), e.bias_se));
        cols.push((format!("mse_se_{}", e.name), e.mse_se));
    }
    let mut seen = std::collections::HashSet::new();
    cols.retain(|(k, _)| seen.insert(k.clone()));
    cols
}

/// Columns every reader of a scenario's summary can rely on, in order.
fn leading_columns(run: &ScenarioRun) -> Vec<&'static str> {
    match run.scenario {
        "normal_mean" => vec!["kappa", "power_np", "mse_mle", "mse_ht", "bias_mle", "bias_ht", "rho_hat", "kappa_hat", "n_failed"],
        "tpl" => vec!["gamma", "kappa_hat", "power_np", "mse_mle", "mse_calibrated", "mse_ht", "rho_hat", "n_failed"],
        s if s.starts_with("cc_") => vec![run.magnitude_label, "kappa_hat", "power_joint", "power_conditional", "mse_mle", "mse_weighted", "rho_hat", "n_failed"],
        _ => Vec::new(),
    }
}

fn lookup(cols: &[(String, f64)], s: &ReplicationSummary, name: &str) -> f64 {
    match name {
        "power_joint" => s.power_np,
        "power_conditional" => s.tests.first().map_or(f64::NAN, |t| t.power),
        _ => cols.iter().find(|(k, _)| k == name).map_or(f64::NAN, |(_, v)| *v),
    }
}

/// Header and rows of the summary table.
pub fn summary_table(run: &ScenarioRun) -> (Vec<String>, Vec<Vec<f64>>) {
    let leading = leading_columns(run);
    let mut header: Vec<String> = leading.iter().map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    for (i, s) in run.summaries.iter().enumerate() {
        let cols = summary_columns(run, s);
        if i == 0 {
            header.extend(cols.iter().map(|(k, _)| k.clone()).filter(|k| !leading.contains(&k.as_str())));
        }
        rows.push(header.iter().map(|h| lookup(&cols, s, h)).collect());
    }
    (header, rows)
}

pub fn summary_csv(run: &ScenarioRun) -> String {
    let (header, rows) = summary_table(run);
    let mut out = format!("{SCHEMA_LINE}\n{}\n", header.join(","));
    for row in rows {
        out.push_str(&row.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

/// Parse a summary CSV into name → column values.
pub fn read_summary_csv(text: &str) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().ok_or_else(|| Error::Config("empty summary CSV".into()))?.split(',').collect();
    let mut table: BTreeMap<String, Vec<f64>> = header.iter().map(|h| (h.to_string(), Vec::new())).collect();
    for line in lines {
        for (h, v) in header.iter().zip(line.split(',')) {
            table.get_mut(*h).unwrap().push(parse_f64(v)?);
        }
    }
    Ok(table)
}

pub fn raw_file_name(run: &ScenarioRun, index: usize) -> String {
    format!("{}_raw_{index:02}.csv", run.scenario)
}

fn raw_rows(out: &mut String, law: &str, outcomes: &[Option<ReplicateOutcome>], n_est: usize, n_stat: usize) {
    for (r, o) in outcomes.iter().enumerate() {
        let fields: Vec<String> = match o {
            Some(o) => {
                let status = if o.converged { "ok" } else { "nonconverged" };
                let mut f = vec![law.to_string(), r.to_string(), status.to_string()];
                f.extend(o.estimates.iter().map(|v| fmt_f64(*v)));
                f.push(fmt_f64(o.loglik_ratio));
                f.extend(o.statistics.iter().map(|v| fmt_f64(*v)));
                f.push(o.target.map(fmt_f64).unwrap_or_default());
                f
            }
            None => {
                let mut f = vec![law.to_string(), r.to_string(), "error".to_string()];
                f.extend(std::iter::repeat_n(String::new(), n_est + n_stat + 2));
                f
            }
        };
        out.push_str(&fields.join(","));
        out.push('\n');
    }
}

/// Every replicate at one magnitude: the misspecified-law rows (`Q`) then
/// the working-law rows (`P`).
pub fn raw_csv(run: &ScenarioRun, index: usize) -> String {
    let point = &run.points[index];
    let mut out = format!(
        "{SCHEMA_LINE}\n# scenario={} index={index} magnitude={} theta_star={} scale_n={}\n",
        run.scenario,
        fmt_f64(point.magnitude),
        fmt_f64(point.theta_star),
        fmt_f64(run.scale_n)
    );
    let mut header = vec!["law".to_string(), "replicate".into(), "status".into()];
    header.extend(run.estimator_names.iter().map(|e| format!("est_{e}")));
    header.push("llr".into());
    header.extend(run.tests.iter().map(|t| format!("stat_{}", t.name)));
    header.push("target".into());
    out.push_str(&header.join(","));
    out.push('\n');
    let (ne, ns) = (run.estimator_names.len(), run.tests.len());
    raw_rows(&mut out, "Q", &point.q, ne, ns);
    raw_rows(&mut out, "P", &point.p, ne, ns);
    out
}

/// Replicates read back from a raw CSV.
#[derive(Clone, Debug)]
pub struct RawPoint {
    pub magnitude: f64,
    pub theta_star: f64,
    pub scale_n: f64,
    pub estimator_names: Vec<String>,
    pub test_names: Vec<String>,
    pub q: Vec<Option<ReplicateOutcome>>,
    pub p: Vec<Option<ReplicateOutcome>>,
}

pub fn read_raw_csv(text: &str) -> Result<RawPoint> {
    let bad = |m: &str| Error::Config(format!("raw CSV: {m}"));
    let mut meta = BTreeMap::new();
    let mut lines = text.lines().peekable();
    while let Some(l) = lines.next_if(|l| l.starts_with('#')) {
        for kv in l.trim_start_matches('#').split_whitespace() {
            if let Some((k, v)) = kv.split_once('=') {
                meta.insert(k.to_string(), v.to_string());
            }
        }
    }
    if meta.get("schema").map(String::as_str) != Some("1") {
        return Err(bad("missing schema=1"));
    }
    let get = |k: &str| meta.get(k).ok_or_else(|| bad(&format!("missing {k}"))).and_then(|v| parse_f64(v));
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("no header"))?.split(',').collect();
    let estimator_names: Vec<String> = header.iter().filter_map(|h| h.strip_prefix("est_")).map(String::from).collect();
    let test_names: Vec<String> = header.iter().filter_map(|h| h.strip_prefix("stat_")).map(String::from).collect();
    let (ne, ns) = (estimator_names.len(), test_names.len());
    let (mut q, mut p) = (Vec::new(), Vec::new());
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != header.len() {
            return Err(bad("ragged row"));
        }
        let outcome = match f[2] {
            "error" => None,
            status => {
                let nums = |range: std::ops::Range<usize>| f[range].iter().map(|v| parse_f64(v)).collect::<Result<Vec<_>>>();
                Some(ReplicateOutcome {
                    estimates: nums(3..3 + ne)?,
                    converged: status == "ok",
                    loglik_ratio: parse_f64(f[3 + ne])?,
                    statistics: nums(4 + ne..4 + ne + ns)?,
                    target: match f[4 + ne + ns] {
                        "" => None,
                        v => Some(parse_f64(v)?),
                    },
                })
            }
        };
        match f[0] {
            "Q" => q.push(outcome),
            "P" => p.push(outcome),
            _ => return Err(bad("unknown law")),
        }
    }
    Ok(RawPoint {
        magnitude: get("magnitude")?,
        theta_star: get("theta_star")?,
        scale_n: get("scale_n")?,
        estimator_names,
        test_names,
        q,
        p,
    })
}

/// Run manifest: the resolved configuration, its hash, the seed and versions.
pub fn manifest_json(config: &SimulationConfig, run: &ScenarioRun, files: &[String]) -> Result<String> {
    let m = json!({
        "program": "ntlab",
        "version": env!("CARGO_PKG_VERSION"),
        "csv_schema": 1,
        "scenario": run.scenario,
        "seed": config.seed,
        "replicates": config.replicates,
        "config_sha256": config.hash()?,
        "config": config.to_toml()?,
        "degraded": run.degraded(),
        "files": files,
    });
    serde_json::to_string_pretty(&m).map_err(|e| Error::Config(e.to_string()))
}
