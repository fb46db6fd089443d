//! On-disk artifacts: trace CSVs, the cross-seed summary and run metadata.
//!
//! Floats are written with Rust's `Display`, the shortest decimal that
//! round-trips, so identical runs produce byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use analog_core::analysis::{asymptotic_error, mean_std, p_max, tail_loss, w_max};
use analog_core::TraceRecord;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::runner::ExperimentOutput;

pub const TRACE_HEADER: [&str; 6] = ["k", "loss", "grad_norm_sq", "w_inf", "p_inf", "s_term"];
pub const SUMMARY_HEADER: [&str; 5] = ["variant", "metric", "mean", "std", "n_seeds"];
pub const TRACES_DIR: &str = "traces";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const METADATA_FILE: &str = "metadata.toml";

/// Version string recorded in the metadata.
pub fn version() -> String {
    format!(
        "{} {} ({})",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        env!("ANALOG_GIT_REV")
    )
}

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub variant: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n_seeds: usize,
}

/// Per-trace metrics: tail averages over the last `tail_fraction` of the
/// records, final values, peak saturation, and the trace estimate of `S_K`.
pub fn trace_metrics(trace: &[TraceRecord], tail_fraction: f64) -> Result<Vec<(String, f64)>> {
    let last = trace
        .last()
        .ok_or_else(|| CliError::Runtime("empty trace".into()))?;
    let mut m = vec![
        ("tail_loss".to_string(), tail_loss(trace, tail_fraction)?.0),
        (
            "tail_grad_norm_sq".to_string(),
            asymptotic_error(trace, tail_fraction)?.0,
        ),
        ("final_loss".to_string(), last.loss),
        ("final_grad_norm_sq".to_string(), last.grad_norm_sq),
        ("w_max".to_string(), w_max(trace)),
    ];
    if let Some(p) = p_max(trace) {
        m.push(("p_max".to_string(), p));
    }
    let window = &trace[..trace.len().saturating_sub(1).max(1)];
    m.push((
        "s_k".to_string(),
        window.iter().map(|r| r.s_term).sum::<f64>() / window.len() as f64,
    ));
    Ok(m)
}

/// Per-seed metrics of one variant: `(variant, seed, metrics)`.
pub type SeedMetrics = (String, u64, Vec<(String, f64)>);

/// Groups `(variant, seed, metrics)` into mean/std rows, keeping the order in
/// which variants and metrics first appear.
pub fn aggregate(items: &[SeedMetrics]) -> Vec<SummaryRow> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut values: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for (variant, _, metrics) in items {
        for (metric, v) in metrics {
            let key = (variant.clone(), metric.clone());
            let slot = values.entry(key.clone()).or_default();
            if slot.is_empty() {
                order.push(key);
            }
            slot.push(*v);
        }
    }
    order
        .into_iter()
        .map(|key| {
            let xs = &values[&key];
            let (mean, std) = mean_std(xs);
            SummaryRow {
                variant: key.0,
                metric: key.1,
                mean,
                std,
                n_seeds: xs.len(),
            }
        })
        .collect()
}

/// Summary of an in-memory experiment.
pub fn summarize_output(
    config: &ExperimentConfig,
    output: &ExperimentOutput,
) -> Result<Vec<SummaryRow>> {
    let mut items = Vec::new();
    if !output.lower_bound.is_empty() {
        for row in &output.lower_bound {
            items.push((
                format!("alpha{}", row.alpha),
                row.seed,
                vec![
                    ("avg_grad_norm_sq".to_string(), row.avg_grad_norm_sq),
                    ("four_sigma2_sk".to_string(), row.four_sigma2_sk),
                    ("sigma2_sk".to_string(), row.sigma2_sk()),
                    ("residual".to_string(), row.residual),
                    ("s_k".to_string(), row.s_k),
                    ("w_max".to_string(), row.w_max),
                ],
            ));
        }
    } else if !output.drift.is_empty() {
        for row in &output.drift {
            items.push((
                row.algo.name().to_string(),
                row.seed,
                vec![
                    ("mean_drift".to_string(), row.result.mean),
                    ("drift_std_err".to_string(), row.result.std_err),
                    ("predicted_drift".to_string(), row.result.predicted),
                ],
            ));
        }
    } else {
        for cell in &output.cells {
            let mut m = trace_metrics(&cell.trace, config.sweep.tail_fraction)?;
            m.extend(cell.extras.iter().cloned());
            items.push((cell.variant.clone(), cell.seed, m));
        }
    }
    Ok(aggregate(&items))
}

/// Looks up the mean of `metric` for `variant`.
pub fn summary_mean(rows: &[SummaryRow], variant: &str, metric: &str) -> Result<f64> {
    rows.iter()
        .find(|r| r.variant == variant && r.metric == metric)
        .map(|r| r.mean)
        .ok_or_else(|| CliError::Runtime(format!("summary has no {metric} for {variant}")))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_trace(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRACE_HEADER)?;
    for r in trace {
        w.write_record([
            r.k.to_string(),
            r.loss.to_string(),
            r.grad_norm_sq.to_string(),
            r.w_inf.to_string(),
            opt(r.p_inf),
            r.s_term.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_f64(path: &Path, line: u64, field: &str) -> Result<f64> {
    field.parse().map_err(|_| {
        CliError::Runtime(format!(
            "{}:{line}: not a number: {field:?}",
            path.display()
        ))
    })
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != TRACE_HEADER {
        return Err(CliError::Runtime(format!(
            "schema mismatch in {}: expected {}, found {}",
            path.display(),
            TRACE_HEADER.join(","),
            header.join(",")
        )));
    }
    let mut trace = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        let k = rec[0].parse().map_err(|_| {
            CliError::Runtime(format!("{}:{line}: bad iteration index", path.display()))
        })?;
        let p_inf = if rec[4].is_empty() {
            None
        } else {
            Some(parse_f64(path, line, &rec[4])?)
        };
        trace.push(TraceRecord {
            k,
            loss: parse_f64(path, line, &rec[1])?,
            grad_norm_sq: parse_f64(path, line, &rec[2])?,
            w_inf: parse_f64(path, line, &rec[3])?,
            p_inf,
            s_term: parse_f64(path, line, &rec[5])?,
        });
    }
    Ok(trace)
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.variant.clone(),
            r.metric.clone(),
            r.mean.to_string(),
            r.std.to_string(),
            r.n_seeds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        rows.push(SummaryRow {
            variant: rec[0].to_string(),
            metric: rec[1].to_string(),
            mean: parse_f64(path, line, &rec[2])?,
            std: parse_f64(path, line, &rec[3])?,
            n_seeds: rec[4].parse().map_err(|_| {
                CliError::Runtime(format!("{}:{line}: bad n_seeds", path.display()))
            })?,
        });
    }
    Ok(rows)
}

pub fn trace_file_name(variant: &str, seed: u64) -> String {
    format!("{variant}_seed{seed}.csv")
}

/// Splits `{variant}_seed{n}.csv` back into its parts.
pub fn parse_trace_file_name(name: &str) -> Option<(String, u64)> {
    let stem = name.strip_suffix(".csv")?;
    let (variant, seed) = stem.rsplit_once("_seed")?;
    Some((variant.to_string(), seed.parse().ok()?))
}

#[derive(Serialize)]
struct Metadata<'a> {
    version: String,
    seeds: &'a [u64],
    config: &'a ExperimentConfig,
}

/// Writes traces, the summary, experiment-specific tables and metadata into `dir`.
pub fn write_artifacts(
    config: &ExperimentConfig,
    output: &ExperimentOutput,
    dir: &Path,
) -> Result<Vec<SummaryRow>> {
    let traces = dir.join(TRACES_DIR);
    fs::create_dir_all(&traces)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", traces.display())))?;
    for cell in &output.cells {
        write_trace(
            &traces.join(trace_file_name(&cell.variant, cell.seed)),
            &cell.trace,
        )?;
    }

    if !output.lower_bound.is_empty() {
        let mut w = csv::Writer::from_path(dir.join("lower_bound.csv"))?;
        w.write_record([
            "alpha",
            "seed",
            "avg_grad_norm_sq",
            "four_sigma2_sk",
            "residual",
            "s_k",
            "w_max",
        ])?;
        for r in &output.lower_bound {
            w.write_record([
                r.alpha.to_string(),
                r.seed.to_string(),
                r.avg_grad_norm_sq.to_string(),
                r.four_sigma2_sk.to_string(),
                r.residual.to_string(),
                r.s_k.to_string(),
                r.w_max.to_string(),
            ])?;
        }
        w.flush()?;
    }
    if !output.drift.is_empty() {
        let mut w = csv::Writer::from_path(dir.join("drift.csv"))?;
        w.write_record(["algo", "seed", "n_trials", "mean", "std_err", "predicted"])?;
        for r in &output.drift {
            w.write_record([
                r.algo.name().to_string(),
                r.seed.to_string(),
                r.n_trials.to_string(),
                r.result.mean.to_string(),
                r.result.std_err.to_string(),
                r.result.predicted.to_string(),
            ])?;
        }
        w.flush()?;
    }

    let summary = summarize_output(config, output)?;
    write_summary(&dir.join(SUMMARY_FILE), &summary)?;

    let meta = Metadata {
        version: version(),
        seeds: &config.seeds,
        config,
    };
    let text = toml::to_string(&meta)
        .map_err(|e| CliError::Runtime(format!("serializing metadata: {e}")))?;
    fs::write(dir.join(METADATA_FILE), text)?;
    Ok(summary)
}

/// Reads the resolved config back from a run directory's metadata.
pub fn read_metadata_config(dir: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(dir.join(METADATA_FILE))?;
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::Runtime(format!("{METADATA_FILE}: {e}")))?;
    let config = table
        .remove("config")
        .ok_or_else(|| CliError::Runtime(format!("{METADATA_FILE} has no [config]")))?;
    let text = toml::to_string(&config).map_err(|e| CliError::Runtime(e.to_string()))?;
    ExperimentConfig::from_toml(&text)
}

fn trace_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let dir = if dir.join(TRACES_DIR).is_dir() {
        dir.join(TRACES_DIR)
    } else {
        dir.to_path_buf()
    };
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "csv")
                && p.file_name().is_some_and(|n| n != SUMMARY_FILE)
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Recomputes per-variant trace metrics across seeds from the trace CSVs in
/// `dir` (or `dir/traces`). Every file must follow the trace schema and be
/// named `{variant}_seed{n}.csv`.
pub fn summarize(dir: &Path, tail_fraction: f64) -> Result<Vec<SummaryRow>> {
    let files = trace_files(dir)?;
    if files.is_empty() {
        return Err(CliError::Runtime(format!(
            "no trace CSVs in {}",
            dir.display()
        )));
    }
    let mut items = Vec::with_capacity(files.len());
    for path in &files {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        let (variant, seed) = parse_trace_file_name(name).ok_or_else(|| {
            CliError::Runtime(format!("{name}: expected {{variant}}_seed{{n}}.csv"))
        })?;
        let trace = read_trace(path)?;
        items.push((variant, seed, trace_metrics(&trace, tail_fraction)?));
    }
    // Sort by (variant, seed) so the output does not depend on file naming order.
    items.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
    Ok(aggregate(&items))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(n: usize, v: f64) -> Vec<TraceRecord> {
        (0..n)
            .map(|k| TraceRecord::new(k, v, v, 0.5, None, Some(1.0)))
            .collect()
    }

    #[test]
    fn file_names_round_trip() {
        assert_eq!(
            parse_trace_file_name(&trace_file_name("analog_sgd_alpha0.025", 12)),
            Some(("analog_sgd_alpha0.025".to_string(), 12))
        );
        assert_eq!(parse_trace_file_name("summary.csv"), None);
    }

    #[test]
    fn aggregate_uses_sample_std() {
        let items: Vec<_> = [1.0, 2.0, 3.0]
            .iter()
            .enumerate()
            .map(|(s, &v)| ("v".to_string(), s as u64, vec![("m".to_string(), v)]))
            .collect();
        let rows = aggregate(&items);
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].mean, rows[0].std, rows[0].n_seeds), (2.0, 1.0, 3));
    }

    #[test]
    fn trace_metrics_of_constant_trace() {
        let m = trace_metrics(&constant(600, 2.5), 0.2).unwrap();
        let get = |k: &str| m.iter().find(|(n, _)| n == k).unwrap().1;
        assert_eq!(get("tail_loss"), 2.5);
        assert_eq!(get("w_max"), 0.5);
        assert!((get("s_k") - 1.0 / 3.0).abs() < 1e-12);
        assert!(m.iter().all(|(n, _)| n != "p_max"));
    }

    #[test]
    fn short_traces_are_rejected() {
        assert!(trace_metrics(&constant(10, 1.0), 0.2).is_err());
    }

    #[test]
    fn trace_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t_seed0.csv");
        let mut t = constant(3, 0.1);
        t[1].p_inf = Some(1e-7);
        t[2].s_term = f64::INFINITY;
        write_trace(&path, &t).unwrap();
        assert_eq!(read_trace(&path).unwrap(), t);
    }
}
