use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{mse, psnr, ssim, MetricValue};
use crate::error::{Error, Result};
use crate::imgcore::ImageF;

/// How a metric is computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MetricKind {
    Psnr,
    Ssim,
    Mse,
    /// Subprocess backend; `set_level` metrics (FID) take directory pairs.
    External {
        cmd: String,
        set_level: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        timeout_s: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub name: String,
    pub kind: MetricKind,
    pub higher_is_better: bool,
}

/// Polarity of well-known learned metrics, following the usual table arrows.
pub fn default_polarity(name: &str) -> Option<bool> {
    match name.to_ascii_lowercase().as_str() {
        "psnr" | "ssim" | "sync-c" | "sync_c" => Some(true),
        "mse" | "fid" | "lpips" | "brisque" | "m-lmd" | "m_lmd" | "lmd" => Some(false),
        _ => None,
    }
}

/// Named metrics available to the harness. Names are unique.
#[derive(Clone, Debug, Default)]
pub struct MetricRegistry {
    specs: BTreeMap<String, MetricSpec>,
}

impl MetricRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry holding the native `psnr`, `ssim` and `mse` metrics.
    pub fn with_natives() -> Self {
        let mut r = Self::empty();
        for (name, kind, hib) in [
            ("psnr", MetricKind::Psnr, true),
            ("ssim", MetricKind::Ssim, true),
            ("mse", MetricKind::Mse, false),
        ] {
            r.register(MetricSpec {
                name: name.into(),
                kind,
                higher_is_better: hib,
            })
            .expect("distinct native names");
        }
        r
    }

    pub fn register(&mut self, spec: MetricSpec) -> Result<()> {
        if self.specs.contains_key(&spec.name) {
            return Err(Error::DuplicateMetric(spec.name));
        }
        self.specs.insert(spec.name.clone(), spec);
        Ok(())
    }

    /// Registers a subprocess-backed metric. Polarity defaults to the
    /// well-known arrow for the name, else lower-is-better.
    pub fn register_external(
        &mut self,
        name: &str,
        cmd: &str,
        higher_is_better: Option<bool>,
        timeout_s: Option<f64>,
    ) -> Result<()> {
        if let Some(t) = timeout_s.filter(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::InvalidParameter(format!("{name}: timeout_s {t}")));
        }
        let hib = higher_is_better
            .or_else(|| default_polarity(name))
            .unwrap_or(false);
        self.register(MetricSpec {
            name: name.into(),
            kind: MetricKind::External {
                cmd: cmd.into(),
                set_level: name.eq_ignore_ascii_case("fid"),
                timeout_s,
            },
            higher_is_better: hib,
        })
    }

    pub fn get(&self, name: &str) -> Option<&MetricSpec> {
        self.specs.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.specs.keys().map(String::as_str)
    }

    /// Evaluates a native metric on an image pair.
    pub fn evaluate_native(&self, name: &str, a: &ImageF, b: &ImageF) -> Result<MetricValue> {
        let spec = self
            .get(name)
            .ok_or_else(|| Error::UnknownMetric(name.into()))?;
        match spec.kind {
            MetricKind::Psnr => psnr(a, b),
            MetricKind::Ssim => ssim(a, b),
            MetricKind::Mse => Ok(MetricValue {
                name: spec.name.clone(),
                value: mse(a, b)?,
                higher_is_better: false,
            }),
            MetricKind::External { .. } => Err(Error::InvalidParameter(format!(
                "{name} is an external metric"
            ))),
        }
    }
}
