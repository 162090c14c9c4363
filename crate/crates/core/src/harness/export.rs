//! CSV and JSON output.
//!
//! A run exports to `<stem>.csv` and/or `<stem>.json`. The CSV has one row
//! per iteration `n = 1..=n_iters`, preceded by `#` comment lines naming the
//! schema version, config hash, seed and every column. The JSON is the full
//! [`RunRecord`], provenance included.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::replicate::{Aggregate, QUANTILES};
use super::run::{RunRecord, RECORD_SCHEMA_VERSION};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::invalid(format!("unknown format `{s}` (expected csv or json)"))),
        }
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(fs::File::create(path)?)
}

fn series_doc(name: &str) -> &'static str {
    let base = name.rsplit('.').next().unwrap_or(name);
    match base {
        "objective" => "F(theta_n), a Monte Carlo estimate when the likelihood is intractable",
        "gap" => "objective minus F*",
        "weighted_gap" => "weighted mean of F(theta_k) over k <= n, minus F*",
        "kkt" => "norm of theta_n - T_gamma(theta_n)",
        "relative_error" => "norm(beta_n - beta_ref) / norm(beta_ref)",
        "sensitivity" => "shared support / reference support",
        "precision" => "shared support / iterate support",
        _ => "",
    }
}

pub fn write_record_csv(record: &RunRecord, path: &Path) -> Result<()> {
    let mut file = create(path)?;
    let m = &record.metrics;
    writeln!(file, "# schema_version: {}", record.schema_version)?;
    writeln!(file, "# config: {} ({})", record.config.name, record.config_hash)?;
    writeln!(file, "# replication: {}, seed: {}", record.replication, record.seed)?;
    if let Some(f) = record.f_star {
        writeln!(file, "# f_star: {f:e}")?;
    }
    writeln!(file, "# n: iteration")?;
    writeln!(file, "# cumulative_samples: Monte Carlo draws up to and including iteration n")?;
    writeln!(file, "# step_size: gamma_n")?;
    for name in m.series.keys() {
        let prefix = if name.starts_with("avg[") { "of the weighted average: " } else { "" };
        writeln!(file, "# {name}: {prefix}{}", series_doc(name))?;
    }
    writeln!(file, "# empty cells are undefined values")?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["n".to_string(), "cumulative_samples".into(), "step_size".into()];
    header.extend(m.series.keys().cloned());
    w.write_record(&header)?;
    for i in 0..m.len() {
        let mut row = vec![
            m.iteration[i].to_string(),
            m.cumulative_samples[i].to_string(),
            cell(record.trace.step_sizes.get(m.iteration[i]).copied()),
        ];
        row.extend(m.series.values().map(|s| cell(s[i])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_record_json(record: &RunRecord, path: &Path) -> Result<()> {
    let mut file = create(path)?;
    serde_json::to_writer_pretty(&mut file, record)?;
    file.flush()?;
    Ok(())
}

pub fn read_record_json(path: &Path) -> Result<RunRecord> {
    let record: RunRecord = serde_json::from_str(&fs::read_to_string(path)?)?;
    if record.schema_version != RECORD_SCHEMA_VERSION {
        return Err(Error::unsupported(format!(
            "record schema version {} (expected {RECORD_SCHEMA_VERSION})",
            record.schema_version
        )));
    }
    Ok(record)
}

/// Writes `<stem>.csv` or `<stem>.json` and returns the path.
pub fn export(record: &RunRecord, format: Format, stem: &Path) -> Result<PathBuf> {
    match format {
        Format::Csv => {
            let path = stem.with_extension("csv");
            write_record_csv(record, &path)?;
            Ok(path)
        }
        Format::Json => {
            let path = stem.with_extension("json");
            write_record_json(record, &path)?;
            Ok(path)
        }
    }
}

pub fn write_aggregate_csv(agg: &Aggregate, path: &Path) -> Result<()> {
    let mut file = create(path)?;
    writeln!(file, "# schema_version: {}", agg.schema_version)?;
    writeln!(file, "# config_hash: {}", agg.config_hash)?;
    writeln!(file, "# replications: {} ({} succeeded)", agg.replications, agg.successes)?;
    writeln!(file, "# <series>.mean and <series>.qXX: pointwise mean and quantiles over replications")?;
    writeln!(file, "# <series>.count: replications with a value at n")?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["n".to_string()];
    for name in agg.series.keys() {
        header.push(format!("{name}.mean"));
        header.extend(QUANTILES.iter().map(|q| format!("{name}.q{:02}", (q * 100.0).round() as u32)));
        header.push(format!("{name}.count"));
    }
    w.write_record(&header)?;
    for (i, n) in agg.iteration.iter().enumerate() {
        let mut row = vec![n.to_string()];
        for s in agg.series.values() {
            row.push(cell(s.mean[i]));
            row.extend(s.quantiles.iter().map(|q| cell(q[i])));
            row.push(s.count[i].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_aggregate(agg: &Aggregate, format: Format, stem: &Path) -> Result<PathBuf> {
    match format {
        Format::Csv => {
            let path = stem.with_extension("csv");
            write_aggregate_csv(agg, &path)?;
            Ok(path)
        }
        Format::Json => {
            let path = stem.with_extension("json");
            let mut file = create(&path)?;
            serde_json::to_writer_pretty(&mut file, agg)?;
            Ok(path)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run::tests_support::small_averaged_lasso;

    #[test]
    fn json_round_trip_and_csv_rows() {
        let dir = tempfile::tempdir().unwrap();
        let config = small_averaged_lasso();
        let record = crate::harness::run_experiment(&config).unwrap();
        let json = export(&record, Format::Json, &dir.path().join("run")).unwrap();
        let back = read_record_json(&json).unwrap();
        assert_eq!(back, record);
        let text = fs::read_to_string(&json).unwrap();
        assert!(text.contains("\"schema_version\": 1"));

        let csv_path = export(&record, Format::Csv, &dir.path().join("sub/run")).unwrap();
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(&csv_path)
            .unwrap();
        let headers = reader.headers().unwrap().clone();
        assert_eq!(&headers[0], "n");
        let rows: Vec<_> = reader.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), config.n_iters);
        assert_eq!(&rows[0][0], "1");
        let text = fs::read_to_string(&csv_path).unwrap();
        assert!(text.starts_with("# schema_version: 1"));
        for h in headers.iter() {
            assert!(text.contains(&format!("# {h}:")), "column {h} undocumented");
        }
        assert!("xml".parse::<Format>().is_err());
    }

    #[test]
    fn aggregate_csv_has_quantile_columns() {
        let dir = tempfile::tempdir().unwrap();
        let out = crate::harness::replicate_and_aggregate(&small_averaged_lasso(), 2).unwrap();
        let path = export_aggregate(&out.aggregate, Format::Csv, &dir.path().join("agg")).unwrap();
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(&path).unwrap();
        let headers = reader.headers().unwrap().clone();
        assert!(headers.iter().any(|h| h == "gap.q95"));
        assert_eq!(reader.records().count(), out.aggregate.iteration.len());
    }
}
