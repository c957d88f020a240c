use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::Method;
use super::runner::ExperimentRecord;
use crate::error::{Error, Result};

/// Mean and standard error of one method at one sweep value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: Method,
    pub value: f64,
    pub trials: usize,
    pub failures: usize,
    pub nmse_mean: Option<f64>,
    pub nmse_se: Option<f64>,
    pub accuracy_mean: Option<f64>,
    pub accuracy_se: Option<f64>,
}

/// Sample mean and `s/√n`; the error needs at least two samples.
pub fn mean_and_se(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = xs.len();
    if n == 0 {
        return (None, None);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (Some(mean), None);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (Some(mean), Some((var / n as f64).sqrt()))
}

/// Group records by (method, value) in first-seen order. Means are taken over
/// trials sorted by index, so the result does not depend on record order.
pub fn aggregate(records: &[ExperimentRecord]) -> Vec<AggregateRow> {
    let mut keys: Vec<(Method, u64)> = Vec::new();
    for r in records {
        let k = (r.method, r.value.to_bits());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(method, bits)| {
            let mut rows: Vec<&ExperimentRecord> = records
                .iter()
                .filter(|r| r.method == method && r.value.to_bits() == bits)
                .collect();
            rows.sort_by_key(|r| r.trial);
            let nmse: Vec<f64> = rows.iter().filter_map(|r| r.nmse).collect();
            let acc: Vec<f64> = rows.iter().filter_map(|r| r.accuracy).collect();
            let (nmse_mean, nmse_se) = mean_and_se(&nmse);
            let (accuracy_mean, accuracy_se) = mean_and_se(&acc);
            AggregateRow {
                method,
                value: f64::from_bits(bits),
                trials: rows.len(),
                failures: rows.iter().filter(|r| r.failed()).count(),
                nmse_mean,
                nmse_se,
                accuracy_mean,
                accuracy_se,
            }
        })
        .collect()
}

/// Files produced by [`emit_csv`].
#[derive(Debug, Clone)]
pub struct OutputFiles {
    pub raw: PathBuf,
    pub aggregate: PathBuf,
    pub timings: PathBuf,
    pub summary: PathBuf,
}

/// Write `raw.csv`, `aggregate.csv`, `timings.csv` and `summary.txt` into
/// `dir`. Wall times only go to the timings file so the others are
/// reproducible byte for byte.
pub fn emit_csv(records: &[ExperimentRecord], sweep_name: &str, dir: impl AsRef<Path>) -> Result<OutputFiles> {
    if records.is_empty() {
        return Err(Error::Config("no records to write".into()));
    }
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let files = OutputFiles {
        raw: dir.join("raw.csv"),
        aggregate: dir.join("aggregate.csv"),
        timings: dir.join("timings.csv"),
        summary: dir.join("summary.txt"),
    };

    let mut w = csv::Writer::from_path(&files.raw)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;

    let agg = aggregate(records);
    let mut w = csv::Writer::from_path(&files.aggregate)?;
    for a in &agg {
        w.serialize(a)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(&files.timings)?;
    w.write_record(["method", "value", "trial", "seconds"])?;
    for r in records {
        w.write_record([r.method.name().to_string(), r.value.to_string(), r.trial.to_string(), format!("{:.6}", r.wall_time)])?;
    }
    w.flush()?;

    std::fs::write(&files.summary, summary_table(&agg, sweep_name))?;
    Ok(files)
}

pub fn read_raw(path: impl AsRef<Path>) -> Result<Vec<ExperimentRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn read_aggregate(path: impl AsRef<Path>) -> Result<Vec<AggregateRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Mean NMSE per method (rows) and sweep value (columns), with failures noted.
pub fn summary_table(agg: &[AggregateRow], sweep_name: &str) -> String {
    let mut methods: Vec<Method> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for a in agg {
        if !methods.contains(&a.method) {
            methods.push(a.method);
        }
        if !values.iter().any(|v| v.to_bits() == a.value.to_bits()) {
            values.push(a.value);
        }
    }
    let mut out = String::new();
    let _ = write!(out, "{:<16}", format!("NMSE / {sweep_name}"));
    for v in &values {
        let _ = write!(out, "{:>12}", v);
    }
    out.push('\n');
    let mut failures = 0;
    for m in &methods {
        let _ = write!(out, "{:<16}", m.name());
        for v in &values {
            let cell = agg
                .iter()
                .find(|a| a.method == *m && a.value.to_bits() == v.to_bits())
                .and_then(|a| a.nmse_mean)
                .map_or("-".to_string(), |x| format!("{x:.4e}"));
            let _ = write!(out, "{cell:>12}");
        }
        out.push('\n');
    }
    for a in agg {
        failures += a.failures;
    }
    let _ = writeln!(out, "failed runs: {failures}");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(method: Method, value: f64, trial: usize, nmse: f64) -> ExperimentRecord {
        ExperimentRecord {
            method,
            value,
            trial,
            seed: trial as u64 * 7,
            nmse: Some(nmse),
            accuracy: (method == Method::Proposed).then_some(0.75),
            iterations: Some(3),
            groups: None,
            checksum: 11,
            error: None,
            wall_time: 0.5,
        }
    }

    #[test]
    fn standard_error_by_hand() {
        // mean 2, sample variance ((1)+(0)+(1))/2 = 1, se = 1/√3
        let (m, se) = mean_and_se(&[1.0, 2.0, 3.0]);
        assert_eq!(m, Some(2.0));
        assert!((se.unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(mean_and_se(&[4.0]), (Some(4.0), None));
    }

    #[test]
    fn constant_column_mean_is_the_constant() {
        let recs: Vec<_> = (0..5).map(|t| rec(Method::Genie, 1.0, t, 0.125)).collect();
        let a = aggregate(&recs);
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].nmse_mean, Some(0.125));
        assert_eq!(a[0].nmse_se, Some(0.0));
        assert_eq!(a[0].accuracy_mean, None);
    }

    #[test]
    fn aggregate_ignores_record_order() {
        let mut recs: Vec<_> = (0..6).map(|t| rec(Method::Proposed, 2.0, t, 0.1 * t as f64 + 0.013)).collect();
        let a = aggregate(&recs);
        recs.reverse();
        recs.swap(1, 4);
        assert_eq!(aggregate(&recs), a);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut recs = vec![rec(Method::Proposed, 30.0, 0, 0.02), rec(Method::JointOmp, 30.0, 0, 0.3)];
        recs.push(ExperimentRecord {
            nmse: None,
            error: Some("boom, with comma".into()),
            wall_time: 0.0,
            ..rec(Method::Genie, 30.0, 0, 0.0)
        });
        let files = emit_csv(&recs, "T", dir.path()).unwrap();
        let back = read_raw(&files.raw).unwrap();
        let expected: Vec<_> = recs
            .iter()
            .map(|r| ExperimentRecord {
                wall_time: 0.0,
                ..r.clone()
            })
            .collect();
        assert_eq!(back, expected);
        assert_eq!(read_aggregate(&files.aggregate).unwrap(), aggregate(&recs));
        let summary = std::fs::read_to_string(&files.summary).unwrap();
        assert!(summary.contains("joint_omp") && summary.contains("failed runs: 1"));
        assert!(emit_csv(&[], "T", dir.path()).is_err());
    }
}
