//! Suite reports and their CSV / JSON forms.
//!
//! Floats are written with 17 significant digits (`{:.16e}`), which round-trips
//! every `f64`. Missing values are empty CSV cells and JSON `null`s.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CSV_HEADER: [&str; 13] = [
    "suite", "generator", "claim", "dimension", "N", "e_g", "c_g", "gap", "comono_gap", "oracle", "oracle_dev", "verdict",
    "runtime_ms",
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("row {row}: field `{field}` is not finite ({value})")]
    NonFinite { row: usize, field: &'static str, value: f64 },
    #[error("writing {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown format `{0}` (expected csv or json)")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
    /// Reference rows that calibrate another row's threshold.
    #[serde(rename = "REF")]
    Ref,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Ref => "REF",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, ReportError> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(ReportError::Format(other.to_string())),
        }
    }
}

/// One `(claim, N)` cell of a suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub suite: String,
    pub generator: String,
    pub claim: String,
    pub dimension: usize,
    #[serde(rename = "N")]
    pub steps: usize,
    pub e_g: f64,
    pub c_g: Option<f64>,
    pub gap: Option<f64>,
    pub comono_gap: Option<f64>,
    pub oracle: Option<f64>,
    pub oracle_dev: Option<f64>,
    pub verdict: Verdict,
    pub runtime_ms: f64,
}

impl ReportRow {
    fn numbers(&self) -> [(&'static str, Option<f64>); 7] {
        [
            ("e_g", Some(self.e_g)),
            ("c_g", self.c_g),
            ("gap", self.gap),
            ("comono_gap", self.comono_gap),
            ("oracle", self.oracle),
            ("oracle_dev", self.oracle_dev),
            ("runtime_ms", Some(self.runtime_ms)),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SuiteReport {
    pub rows: Vec<ReportRow>,
}

impl SuiteReport {
    /// PASS when no row failed; REF rows do not count.
    pub fn verdict(&self) -> Verdict {
        Verdict::from_bool(self.rows.iter().all(|r| r.verdict != Verdict::Fail))
    }

    fn check_finite(&self) -> Result<(), ReportError> {
        for (row, r) in self.rows.iter().enumerate() {
            for (field, v) in r.numbers() {
                if let Some(value) = v {
                    if !value.is_finite() {
                        return Err(ReportError::NonFinite { row, field, value });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String, ReportError> {
        self.check_finite()?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            let [e_g, c_g, gap, comono, oracle, dev, runtime] = r.numbers().map(|(_, v)| number(v));
            w.write_record([
                r.suite.as_str(),
                &r.generator,
                &r.claim,
                &r.dimension.to_string(),
                &r.steps.to_string(),
                &e_g,
                &c_g,
                &gap,
                &comono,
                &oracle,
                &dev,
                r.verdict.as_str(),
                &runtime,
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| ReportError::Csv(e.into_error().into()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// CSV with `runtime_ms` zeroed, for reproducibility checks.
    pub fn to_csv_without_runtime(&self) -> Result<String, ReportError> {
        let mut copy = self.clone();
        for r in &mut copy.rows {
            r.runtime_ms = 0.0;
        }
        copy.to_csv()
    }

    pub fn to_json(&self) -> Result<String, ReportError> {
        self.check_finite()?;
        let mut out = String::from("{\n  \"rows\": [");
        for (i, r) in self.rows.iter().enumerate() {
            out.push_str(if i == 0 { "\n" } else { ",\n" });
            let [e_g, c_g, gap, comono, oracle, dev, runtime] = r.numbers().map(|(_, v)| json_number(v));
            out.push_str(&format!(
                "    {{\"suite\": {}, \"generator\": {}, \"claim\": {}, \"dimension\": {}, \"N\": {}, \
                 \"e_g\": {e_g}, \"c_g\": {c_g}, \"gap\": {gap}, \"comono_gap\": {comono}, \"oracle\": {oracle}, \
                 \"oracle_dev\": {dev}, \"verdict\": \"{}\", \"runtime_ms\": {runtime}}}",
                serde_json::to_string(&r.suite)?,
                serde_json::to_string(&r.generator)?,
                serde_json::to_string(&r.claim)?,
                r.dimension,
                r.steps,
                r.verdict,
            ));
        }
        out.push_str(if self.rows.is_empty() { "]\n}\n" } else { "\n  ]\n}\n" });
        Ok(out)
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn render(&self, format: Format) -> Result<String, ReportError> {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }
}

fn number(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

fn json_number(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_else(|| "null".to_string())
}

/// Writes `report` to `path` as CSV or JSON.
pub fn emit_report(report: &SuiteReport, path: &Path, format: Format) -> Result<(), ReportError> {
    let text = report.render(format)?;
    fs::write(path, text).map_err(|source| ReportError::Io { path: path.to_path_buf(), source })
}
