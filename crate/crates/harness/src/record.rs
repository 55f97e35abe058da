//! Run records: a commented header carrying everything needed to
//! reproduce the run, then `step,metric...` rows.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{HarnessError, Result};

/// Decimal with 12 significant digits (scientific outside 1e-5..1e12).
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let e = x.abs().log10().floor() as i32;
    if (-5..12).contains(&e) {
        let decimals = (11 - e).max(0) as usize;
        let s = format!("{x:.decimals$}");
        // Rounding can carry into a new digit (9.99.. -> 10.0); re-derive.
        let digits = s.chars().filter(|c| c.is_ascii_digit()).collect::<String>();
        let significant = digits.trim_start_matches('0').len();
        if significant > 12 && decimals > 0 {
            let d = decimals - 1;
            return format!("{x:.d$}");
        }
        s
    } else {
        format!("{x:.11e}")
    }
}

/// Metric time series sampled every `log_every` steps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Series {
    pub names: Vec<String>,
    pub rows: Vec<(u64, Vec<f64>)>,
}

impl Series {
    pub fn new(names: &[&str]) -> Self {
        Self {
            names: names.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, step: u64, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.names.len());
        self.rows.push((step, values));
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(self.rows.iter().map(|(_, v)| v[i]).collect())
    }

    pub fn steps(&self) -> Vec<u64> {
        self.rows.iter().map(|(s, _)| *s).collect()
    }

    /// Mean of `name` over rows whose step lies in the final `frac` of
    /// `horizon`.
    pub fn tail_mean(&self, name: &str, horizon: u64, frac: f64) -> f64 {
        let i = self.names.iter().position(|n| n == name).expect("metric exists");
        let start = horizon as f64 * (1.0 - frac);
        let tail: Vec<f64> = self.rows.iter().filter(|(s, _)| *s as f64 > start).map(|(_, v)| v[i]).collect();
        if tail.is_empty() {
            return f64::NAN;
        }
        tail.iter().sum::<f64>() / tail.len() as f64
    }

    pub fn last(&self, name: &str) -> f64 {
        self.column(name).and_then(|c| c.last().copied()).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// Ordered header entries (resolved config, version, seed).
    pub header: Vec<(String, String)>,
    pub series: Series,
    pub summary: Vec<(String, f64)>,
}

impl RunRecord {
    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn summary_value(&self, key: &str) -> Option<f64> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("# continua run record\n");
        for (k, v) in &self.header {
            out.push_str(&format!("# {k} = {v}\n"));
        }
        for (k, v) in &self.summary {
            out.push_str(&format!("# summary.{k} = {}\n", fmt_num(*v)));
        }
        out.push_str("step");
        for n in &self.series.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (step, values) in &self.series.rows {
            out.push_str(&step.to_string());
            for v in values {
                out.push(',');
                out.push_str(&fmt_num(*v));
            }
            out.push('\n');
        }
        out
    }

    /// Writes via a temporary file and rename, so readers never see a
    /// partial record.
    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let malformed = |msg: String| HarnessError::Record {
            path: path.to_path_buf(),
            msg,
        };
        let mut header = Vec::new();
        let mut summary = Vec::new();
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            let Some((k, v)) = line.trim_start_matches('#').split_once(" = ") else { continue };
            let k = k.trim();
            if let Some(name) = k.strip_prefix("summary.") {
                let x = v.trim().parse::<f64>().map_err(|e| malformed(format!("summary {name}: {e}")))?;
                summary.push((name.to_string(), x));
            } else {
                header.push((k.to_string(), v.to_string()));
            }
        }
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let cols: Vec<String> = reader.headers()?.iter().map(String::from).collect();
        if cols.first().map(String::as_str) != Some("step") {
            return Err(malformed("first column must be step".into()));
        }
        let mut series = Series {
            names: cols[1..].to_vec(),
            rows: Vec::new(),
        };
        for rec in reader.records() {
            let rec = rec?;
            let step = rec[0].parse::<u64>().map_err(|e| malformed(format!("step: {e}")))?;
            let values = rec
                .iter()
                .skip(1)
                .map(|x| x.parse::<f64>().map_err(|e| malformed(format!("value {x}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            series.rows.push((step, values));
        }
        Ok(Self { header, series, summary })
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = tmp_path(path);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// One row per run: id, seed, swept parameters, summary metrics.
pub fn summary_csv(rows: &[(String, BTreeMap<String, String>, Vec<(String, f64)>)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let Some((_, first_params, first_metrics)) = rows.first() else {
        return Ok(String::new());
    };
    let mut head = vec!["run".to_string()];
    head.extend(first_params.keys().cloned());
    head.extend(first_metrics.iter().map(|(k, _)| k.clone()));
    w.write_record(&head)?;
    for (id, params, metrics) in rows {
        let mut rec = vec![id.clone()];
        rec.extend(params.values().cloned());
        rec.extend(metrics.iter().map(|(_, v)| fmt_num(*v)));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
