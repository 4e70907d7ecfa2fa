//! Delegation of learned metrics (FID, LPIPS, BRISQUE, ...) to subprocesses.
//!
//! The command runs as `<cmd> <name> <path_a> <path_b>` and must print exactly
//! one line `{"value": <number>}` on stdout and exit 0.

use std::path::Path;
use std::time::Duration;

use super::{MetricKind, MetricRegistry, MetricValue};
use crate::error::{Error, Result};
use crate::process::{run_backend, DEFAULT_TIMEOUT_S};

fn parse_value(stdout: &str) -> Result<f64> {
    let lines: Vec<&str> = stdout.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.len() != 1 {
        return Err(Error::BackendProtocol(format!(
            "expected one output line, got {}",
            lines.len()
        )));
    }
    let v: serde_json::Value = serde_json::from_str(lines[0].trim())
        .map_err(|e| Error::BackendProtocol(format!("invalid JSON {:?}: {e}", lines[0])))?;
    let obj = v
        .as_object()
        .filter(|o| o.len() == 1)
        .ok_or_else(|| Error::BackendProtocol(format!("expected {{\"value\": n}}, got {v}")))?;
    obj.get("value")
        .and_then(serde_json::Value::as_f64)
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::BackendProtocol(format!("missing numeric \"value\" in {v}")))
}

/// Runs the backend registered for `name` on a file pair (or a directory pair
/// for set-level metrics such as FID).
pub fn external_metric(
    registry: &MetricRegistry,
    name: &str,
    a: &Path,
    b: &Path,
) -> Result<MetricValue> {
    let spec = registry
        .get(name)
        .ok_or_else(|| Error::BackendUnavailable(format!("no backend registered for {name:?}")))?;
    let MetricKind::External {
        cmd,
        set_level,
        timeout_s,
    } = &spec.kind
    else {
        return Err(Error::BackendUnavailable(format!(
            "{name:?} is a native metric"
        )));
    };
    for p in [a, b] {
        let ok = if *set_level { p.is_dir() } else { p.exists() };
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "{name}: input {} is not a {}",
                p.display(),
                if *set_level { "directory" } else { "file" }
            )));
        }
    }
    let t = timeout_s.unwrap_or(DEFAULT_TIMEOUT_S);
    let out = run_backend(cmd, &[Path::new(name), a, b], Some(Duration::from_secs_f64(t)))?;
    Ok(MetricValue {
        name: name.into(),
        value: parse_value(&out.stdout)?,
        higher_is_better: spec.higher_is_better,
    })
}
