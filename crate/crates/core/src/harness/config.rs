//! Evaluation config (TOML).
//!
//! ```toml
//! clean_dir = "clean"
//! settings = ["none", "jpeg:q=75", "resize:f=0.5,k=lanczos3", "cnr:q=75,f=0.5", "tiprsr"]
//! seed = 0
//!
//! [protected]
//! dir = "protected"            # or: synth = { kind = "sign", epsilon = "8/255", seed = 1 }
//!
//! [metrics]
//! ids = ["psnr", "ssim", "lpips"]
//! external.lpips.cmd = "python lpips_cli.py"
//!
//! [sr.face]
//! kind = "interp"
//! scale = 2
//!
//! [output]
//! path = "report.csv"
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::MetricRegistry;
use crate::perturbsim::PerturbSpec;
use crate::purify::PurifyParams;
use crate::srbackend::SrBackendSpec;
use crate::transforms::chain::split_args;
use crate::transforms::{ResampleKernel, TransformChain, TransformStep};

/// One row group of the report: how protected images are processed before
/// comparison with the clean image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Setting {
    label: String,
    kind: SettingKind,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SettingKind {
    Chain(TransformChain),
    /// Overrides applied on top of the config's base purification params.
    Tiprsr(Vec<(String, String)>),
}

impl Setting {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> &SettingKind {
        &self.kind
    }

    pub fn is_tiprsr(&self) -> bool {
        matches!(self.kind, SettingKind::Tiprsr(_))
    }
}

impl FromStr for Setting {
    type Err = Error;

    /// `none`, `jpeg:q=..`, `resize:f=..,k=..`, `cnr:q=..,f=..,k=..`,
    /// `tiprsr[:key=value,...]` or any `;`-separated transform chain.
    fn from_str(s: &str) -> Result<Self> {
        let label = s.trim().to_string();
        let (name, args) = split_args(&label)?;
        let kind = match name {
            "tiprsr" => {
                let overrides: Vec<(String, String)> =
                    args.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
                // Fail early on malformed overrides.
                PurifyParams::default().apply_overrides(&args).or_else(|e| match e {
                    Error::ScaleMismatch { .. } => Ok(()),
                    e => Err(e),
                })?;
                SettingKind::Tiprsr(overrides)
            }
            "cnr" => {
                let (mut q, mut f, mut k) = (75u32, 0.5f64, ResampleKernel::default());
                for (key, v) in args {
                    match key {
                        "q" => {
                            q = v
                                .parse()
                                .map_err(|_| Error::InvalidParameter(format!("cnr q={v:?}")))?
                        }
                        "f" => f = crate::transforms::chain::parse_ratio(v)?,
                        "k" => k = v.parse()?,
                        _ => return Err(Error::InvalidParameter(format!("cnr: unknown key {key:?}"))),
                    }
                }
                let chain = TransformChain::compress_and_resize(q, f, k);
                for step in &chain.steps {
                    step.validate()?;
                }
                SettingKind::Chain(chain)
            }
            _ => SettingKind::Chain(label.parse()?),
        };
        Ok(Setting { label, kind })
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

impl TryFrom<String> for Setting {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Setting> for String {
    fn from(s: Setting) -> String {
        s.label
    }
}

impl Setting {
    pub fn chain(chain: TransformChain) -> Self {
        Setting {
            label: if chain.is_identity() {
                "none".into()
            } else {
                chain.to_string()
            },
            kind: SettingKind::Chain(chain),
        }
    }

    pub fn single(step: TransformStep) -> Self {
        Setting::chain(TransformChain::new(vec![step]))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtectedSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<PerturbSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalMetricConfig {
    pub cmd: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub higher_is_better: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    pub ids: Vec<String>,
    #[serde(default)]
    pub external: BTreeMap<String, ExternalMetricConfig>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            ids: vec!["psnr".into(), "ssim".into()],
            external: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(Error::InvalidParameter(format!("report format {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    /// Inferred from the path extension when absent.
    pub format: Option<ReportFormat>,
    /// Emit `time_s` rows for purification settings. Wall-clock values
    /// differ between runs, so byte-reproducible reports need this off.
    pub timing: bool,
    /// Directory receiving each setting's raw output before re-upscaling.
    pub keep_intermediates: Option<PathBuf>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            path: None,
            format: None,
            timing: true,
            keep_intermediates: None,
        }
    }
}

impl OutputConfig {
    pub fn resolved_format(&self) -> ReportFormat {
        self.format.unwrap_or_else(|| match &self.path {
            Some(p) if p.extension().is_some_and(|e| e == "json") => ReportFormat::Json,
            _ => ReportFormat::Csv,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SrConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub face: Option<SrBackendSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub general: Option<SrBackendSpec>,
}

/// Optional downstream generator applied to both clean and processed images
/// before comparison; same subprocess protocol as the mask backend.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub cmd: String,
    #[serde(default = "default_generator_timeout")]
    pub timeout_s: f64,
}

fn default_generator_timeout() -> f64 {
    600.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub clean_dir: PathBuf,
    pub protected: ProtectedSource,
    pub settings: Vec<Setting>,
    #[serde(default)]
    pub metrics: MetricsConfig,
    /// Method label for report rows; defaults to the protected directory
    /// name or a description of the synthetic perturbation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub sr: SrConfig,
    /// Base parameters for `tiprsr` settings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub purify: Option<PurifyParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
}

impl EvalConfig {
    /// Minimal config: one clean directory, one protected source, settings
    /// and native metrics.
    pub fn new(clean_dir: impl Into<PathBuf>, protected: ProtectedSource, settings: Vec<Setting>) -> Self {
        Self {
            clean_dir: clean_dir.into(),
            protected,
            settings,
            metrics: MetricsConfig::default(),
            method: None,
            seed: 0,
            workers: None,
            output: OutputConfig::default(),
            sr: SrConfig::default(),
            purify: None,
            generator: None,
        }
    }

    /// Parses TOML; relative paths resolve against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: EvalConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        fix(&mut cfg.clean_dir);
        if let Some(d) = cfg.protected.dir.as_mut() {
            fix(d);
        }
        if let Some(p) = cfg.output.path.as_mut() {
            fix(p);
        }
        if let Some(p) = cfg.output.keep_intermediates.as_mut() {
            fix(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.into()),
            _ => e.into(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.settings.is_empty() {
            return Err(Error::Config("at least one setting is required".into()));
        }
        if self.metrics.ids.is_empty() {
            return Err(Error::Config("at least one metric is required".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.settings {
            if !seen.insert(s.label()) {
                return Err(Error::Config(format!("duplicate setting {:?}", s.label())));
            }
        }
        match (&self.protected.dir, &self.protected.synth) {
            (Some(_), None) => {}
            (None, Some(spec)) => spec.validate()?,
            _ => {
                return Err(Error::Config(
                    "[protected] needs exactly one of `dir` or `synth`".into(),
                ))
            }
        }
        let reg = self.registry()?;
        for id in &self.metrics.ids {
            if reg.get(id).is_none() {
                return Err(Error::UnknownMetric(id.clone()));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        for s in &self.settings {
            if s.is_tiprsr() {
                self.purify_params(s)?;
            }
        }
        Ok(())
    }

    pub fn registry(&self) -> Result<MetricRegistry> {
        let mut reg = MetricRegistry::with_natives();
        for (name, ext) in &self.metrics.external {
            reg.register_external(name, &ext.cmd, ext.higher_is_better, ext.timeout_s)?;
        }
        Ok(reg)
    }

    /// Resolved purification parameters for a `tiprsr` setting.
    pub fn purify_params(&self, setting: &Setting) -> Result<PurifyParams> {
        let SettingKind::Tiprsr(overrides) = setting.kind() else {
            return Err(Error::InvalidParameter(format!("{} is not a tiprsr setting", setting)));
        };
        let mut p = self.purify.clone().unwrap_or_default();
        if let Some(f) = &self.sr.face {
            p.face_sr = f.clone();
        }
        if let Some(g) = &self.sr.general {
            p.general_sr = g.clone();
        }
        let args: Vec<(&str, &str)> = overrides.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
        p.apply_overrides(&args)?;
        Ok(p)
    }

    pub fn method_label(&self) -> String {
        if let Some(m) = &self.method {
            return m.clone();
        }
        match (&self.protected.dir, &self.protected.synth) {
            (Some(d), _) => d
                .file_name()
                .map_or_else(|| d.display().to_string(), |n| n.to_string_lossy().into_owned()),
            (None, Some(s)) => format!("synth-{}-eps{}", s.kind, super::report::fmt_sig6(s.epsilon)),
            (None, None) => "unknown".into(),
        }
    }

    /// Worker count: `PURIKIT_WORKERS`, then the config, then all cores.
    pub fn effective_workers(&self) -> usize {
        std::env::var("PURIKIT_WORKERS")
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n > 0)
            .or(self.workers)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    /// Hash of every field that can change report values. Worker count and
    /// output destination are excluded.
    pub fn config_hash(&self) -> String {
        #[derive(Serialize)]
        struct View<'a> {
            clean_dir: &'a Path,
            protected: &'a ProtectedSource,
            method: String,
            settings: Vec<(String, Option<PurifyParams>)>,
            metrics: &'a MetricsConfig,
            seed: u64,
            timing: bool,
            generator: &'a Option<GeneratorConfig>,
        }
        let view = View {
            clean_dir: &self.clean_dir,
            protected: &self.protected,
            method: self.method_label(),
            settings: self
                .settings
                .iter()
                .map(|s| {
                    let canonical = match s.kind() {
                        SettingKind::Chain(c) => c.to_string(),
                        SettingKind::Tiprsr(_) => "tiprsr".into(),
                    };
                    (canonical, self.purify_params(s).ok())
                })
                .collect(),
            metrics: &self.metrics,
            seed: self.seed,
            timing: self.output.timing,
            generator: &self.generator,
        };
        let json = serde_json::to_string(&view).expect("serializable view");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
clean_dir = "clean"
settings = ["none", "jpeg:q=75", "cnr:q=75,f=0.5,k=lanczos3", "tiprsr:lambda=0.3"]
seed = 7
workers = 2

[protected]
synth = { kind = "sign", epsilon = "8/255", seed = 1 }

[metrics]
ids = ["psnr", "ssim", "lpips"]
external.lpips.cmd = "lpips-cli"

[sr.face]
kind = "interp"
scale = 2
kernel = "bicubic"

[output]
path = "out/report.json"
"#;

    #[test]
    fn parses_basic_config() {
        let cfg = EvalConfig::from_toml_str(BASIC, Path::new("/data")).unwrap();
        assert_eq!(cfg.clean_dir, Path::new("/data/clean"));
        assert_eq!(cfg.settings.len(), 4);
        assert_eq!(cfg.output.resolved_format(), ReportFormat::Json);
        let p = cfg.purify_params(&cfg.settings[3]).unwrap();
        assert_eq!(p.lambda, 0.3);
        assert_eq!(p.face_sr.to_string(), "interp:k=bicubic,s=2");
        assert!(cfg.method_label().starts_with("synth-sign-eps0.0313725"));
    }

    #[test]
    fn rejects_bad_configs() {
        let base = Path::new("/");
        let no_settings = BASIC.replace(
            r#"settings = ["none", "jpeg:q=75", "cnr:q=75,f=0.5,k=lanczos3", "tiprsr:lambda=0.3"]"#,
            "settings = []",
        );
        assert!(EvalConfig::from_toml_str(&no_settings, base).is_err());
        let unknown_metric = BASIC.replace("\"lpips\"]", "\"lpips\", \"fid\"]");
        assert!(matches!(
            EvalConfig::from_toml_str(&unknown_metric, base),
            Err(Error::UnknownMetric(_))
        ));
        let dup = BASIC.replace("\"jpeg:q=75\"", "\"none\"");
        assert!(EvalConfig::from_toml_str(&dup, base).is_err());
        let typo = BASIC.replace("seed = 7", "sed = 7");
        assert!(EvalConfig::from_toml_str(&typo, base).is_err());
    }

    #[test]
    fn hash_tracks_semantics_only() {
        let base = Path::new("/d");
        let a = EvalConfig::from_toml_str(BASIC, base).unwrap();
        let b = EvalConfig::from_toml_str(&BASIC.replace("workers = 2", "workers = 8"), base).unwrap();
        assert_eq!(a.config_hash(), b.config_hash());
        let c = EvalConfig::from_toml_str(&BASIC.replace("report.json", "r2.json"), base).unwrap();
        assert_eq!(a.config_hash(), c.config_hash());
        let d = EvalConfig::from_toml_str(&BASIC.replace("seed = 7", "seed = 8"), base).unwrap();
        assert_ne!(a.config_hash(), d.config_hash());
        let e = EvalConfig::from_toml_str(&BASIC.replace("lambda=0.3", "lambda=0.4"), base).unwrap();
        assert_ne!(a.config_hash(), e.config_hash());
        let f = EvalConfig::from_toml_str(&BASIC.replace("\"bicubic\"", "\"lanczos3\""), base).unwrap();
        assert_ne!(a.config_hash(), f.config_hash());
    }

    #[test]
    fn setting_parsing() {
        let s: Setting = "cnr:q=90,f=1/2".parse().unwrap();
        match s.kind() {
            SettingKind::Chain(c) => assert_eq!(c.to_string(), "jpeg:q=90;resize:f=0.5,k=lanczos3"),
            _ => panic!(),
        }
        assert!("cnr:q=0".parse::<Setting>().is_err());
        assert!("tiprsr:bogus=1".parse::<Setting>().is_err());
        assert!("none".parse::<Setting>().is_ok());
        assert_eq!(Setting::chain(TransformChain::identity()).label(), "none");
    }
}
