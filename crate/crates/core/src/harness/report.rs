//! Report rows and their CSV/JSON serialization.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ReportFormat;
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 6] = ["setting", "method", "metric", "mean", "std", "n"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub setting: String,
    pub method: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub tool_version: String,
    pub seed: u64,
    /// False when wall-clock `time_s` rows are present.
    pub deterministic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub file: String,
    pub setting: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub provenance: Provenance,
    #[serde(default)]
    pub failures: Vec<Failure>,
}

/// Six significant digits, shortest form, `.` as decimal separator:
/// `0.60792713` -> `0.607927`, `100.0` -> `100`, `1.5e-7` -> `1.5e-7`.
pub fn fmt_sig6(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if v == 0.0 {
        return "0".into();
    }
    // Let the formatter do the rounding, then pick fixed or scientific.
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Value as it appears in an emitted report.
pub fn round_sig6(v: f64) -> f64 {
    fmt_sig6(v).parse().unwrap_or(v)
}

impl EvalReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(CSV_HEADER).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.setting.as_str(),
                r.method.as_str(),
                r.metric.as_str(),
                &fmt_sig6(r.mean),
                &fmt_sig6(r.std),
                &r.n.to_string(),
            ])
            .map_err(csv_err)?;
        }
        let mut out = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
            .expect("utf-8 csv");
        for f in &self.failures {
            let msg = f.error.replace(['\n', '\r'], " ");
            out.push_str(&format!("# failed: {} [{}]: {}\n", f.file, f.setting, msg));
        }
        Ok(out)
    }

    /// Same rows as the CSV (numbers rounded identically) plus provenance.
    pub fn to_json(&self) -> Result<String> {
        let mut rounded = self.clone();
        for r in &mut rounded.rows {
            r.mean = round_sig6(r.mean);
            r.std = round_sig6(r.std);
        }
        let mut s = serde_json::to_string_pretty(&rounded)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid report JSON: {e}")))
    }

    pub fn render(&self, format: ReportFormat) -> Result<String> {
        match format {
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Json => self.to_json(),
        }
    }

    pub fn row(&self, setting: &str, metric: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.setting == setting && r.metric == metric)
    }
}

/// Writes the report to `path` in `format`.
pub fn emit_report(report: &EvalReport, path: &Path, format: ReportFormat) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, report.render(format)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(rows: Vec<ReportRow>) -> EvalReport {
        EvalReport {
            rows,
            provenance: Provenance {
                config_hash: "abc".into(),
                tool_version: "0.1.0".into(),
                seed: 0,
                deterministic: true,
            },
            failures: vec![],
        }
    }

    #[test]
    fn sig6_rule() {
        assert_eq!(fmt_sig6(0.60792713), "0.607927");
        assert_eq!(fmt_sig6(100.0), "100");
        assert_eq!(fmt_sig6(32.13614), "32.1361");
        assert_eq!(fmt_sig6(-0.5), "-0.5");
        assert_eq!(fmt_sig6(0.0), "0");
        assert_eq!(fmt_sig6(999999.7), "1e6");
        assert_eq!(fmt_sig6(123456.4), "123456");
        assert_eq!(fmt_sig6(1.5e-7), "1.5e-7");
        assert_eq!(fmt_sig6(0.0000123456789), "1.23457e-5");
        assert_eq!(fmt_sig6(0.000123456789), "0.000123457");
        assert_eq!(fmt_sig6(f64::NAN), "nan");
    }

    #[test]
    fn empty_report_is_header_only() {
        assert_eq!(report(vec![]).to_csv().unwrap(), "setting,method,metric,mean,std,n\n");
    }

    #[test]
    fn csv_quotes_settings_with_commas() {
        let r = report(vec![ReportRow {
            setting: "cnr:q=75,f=0.5".into(),
            method: "m".into(),
            metric: "psnr".into(),
            mean: 31.234567,
            std: 0.25,
            n: 3,
        }]);
        assert_eq!(
            r.to_csv().unwrap(),
            "setting,method,metric,mean,std,n\n\"cnr:q=75,f=0.5\",m,psnr,31.2346,0.25,3\n"
        );
    }

    #[test]
    fn json_roundtrip() {
        let r = report(vec![ReportRow {
            setting: "none".into(),
            method: "m".into(),
            metric: "ssim".into(),
            mean: 0.60792713,
            std: 0.01,
            n: 4,
        }]);
        let back = EvalReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back.rows[0].mean, 0.607927);
        assert_eq!(EvalReport::from_json(&back.to_json().unwrap()).unwrap(), back);
    }

    #[test]
    fn failures_go_to_footer() {
        let mut r = report(vec![]);
        r.failures.push(Failure {
            file: "a.png".into(),
            setting: "none".into(),
            error: "boom\nline".into(),
        });
        assert!(r.to_csv().unwrap().ends_with("# failed: a.png [none]: boom line\n"));
    }
}
