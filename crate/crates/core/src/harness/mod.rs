//! Config-driven batch evaluation: apply each setting to every protected
//! image, compare against the paired clean image, aggregate per
//! (setting, metric).
//!
//! Metrics are computed at clean-image resolution; outputs of settings that
//! change the size are re-upscaled with Lanczos-3 first.

pub mod config;
pub mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

pub use config::{EvalConfig, ProtectedSource, ReportFormat, Setting, SettingKind};
pub use report::{emit_report, fmt_sig6, EvalReport, Failure, Provenance, ReportRow};

use crate::error::{Error, Result};
use crate::imgcore::{load_image, save_image, ImageF};
use crate::metrics::{external_metric, MetricKind, MetricRegistry};
use crate::perturbsim::{generate, PerturbSpec};
use crate::process::{global_cap, run_backend};
use crate::purify::{purify, PurifyParams};
use crate::transforms::{resample, ResampleKernel};

/// Name of the per-image purification wall-clock row.
pub const TIME_METRIC: &str = "time_s";

/// Image files considered by the harness.
fn list_images(dir: &Path) -> Result<Vec<String>> {
    if !dir.is_dir() {
        return Err(Error::FileNotFound(dir.into()));
    }
    let mut names: Vec<String> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.to_ascii_lowercase().ends_with(".png"))
        .collect();
    names.sort();
    Ok(names)
}

/// Pairs clean and protected files by name; any unmatched name is an error.
pub fn pair_files(clean: &Path, protected: &Path) -> Result<Vec<String>> {
    let a = list_images(clean)?;
    let b = list_images(protected)?;
    let only_clean: Vec<&String> = a.iter().filter(|n| b.binary_search(n).is_err()).collect();
    let only_prot: Vec<&String> = b.iter().filter(|n| a.binary_search(n).is_err()).collect();
    if !only_clean.is_empty() || !only_prot.is_empty() {
        return Err(Error::Pairing(format!(
            "unmatched files: clean-only {only_clean:?}, protected-only {only_prot:?}"
        )));
    }
    if a.is_empty() {
        return Err(Error::Pairing(format!("no PNG files in {}", clean.display())));
    }
    Ok(a)
}

/// Per-file seed for synthetic perturbations, stable under file reordering.
fn file_seed(global: u64, spec_seed: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update(spec_seed.to_le_bytes());
    h.update(name.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

enum Prepared {
    Chain(crate::transforms::TransformChain),
    Purify(Box<PurifyParams>),
}

struct Job<'a> {
    cfg: &'a EvalConfig,
    registry: MetricRegistry,
    settings: Vec<(String, Prepared)>,
    /// Per-pair metrics in config order (set-level ones are handled apart).
    pair_metrics: Vec<String>,
    set_metrics: Vec<String>,
    scratch: Option<tempfile::TempDir>,
}

/// Values produced for one (file, setting).
type Values = Vec<(String, f64)>;

struct PairOutcome {
    per_setting: Vec<std::result::Result<Values, String>>,
    pair_error: Option<String>,
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' || c == '=' { c } else { '_' })
        .collect()
}

fn run_generator(cfg: &config::GeneratorConfig, img: &ImageF) -> Result<ImageF> {
    let dir = tempfile::tempdir()?;
    let input = dir.path().join("input.png");
    let output = dir.path().join("output.png");
    save_image(img, &input)?;
    run_backend(&cfg.cmd, &[&input, &output], Some(Duration::from_secs_f64(cfg.timeout_s)))?;
    load_image(&output).map_err(|e| Error::BackendFailed {
        code: Some(0),
        stderr: format!("generator output unreadable: {e}"),
    })
}

impl Job<'_> {
    fn load_pair(&self, name: &str) -> Result<(ImageF, ImageF)> {
        let clean = load_image(self.cfg.clean_dir.join(name))?;
        let prot = match (&self.cfg.protected.dir, &self.cfg.protected.synth) {
            (Some(d), _) => load_image(d.join(name))?,
            (None, Some(spec)) => {
                let s = PerturbSpec {
                    seed: file_seed(self.cfg.seed, spec.seed, name),
                    ..*spec
                };
                generate(&clean, &s)?
            }
            (None, None) => unreachable!("validated config"),
        };
        Ok((clean, prot))
    }

    fn process_setting(&self, idx: usize, name: &str, clean_ref: &ImageF, prot: &ImageF) -> Result<Values> {
        let (label, prep) = &self.settings[idx];
        let mut values = Vec::new();
        let raw = match prep {
            Prepared::Chain(c) => c.apply(prot)?,
            Prepared::Purify(p) => {
                let out = purify(prot, p, self.cfg.output.timing)?;
                if let Some(t) = &out.trace {
                    values.push((TIME_METRIC.to_string(), t.total_s()));
                }
                out.image
            }
        };
        if let Some(dir) = &self.cfg.output.keep_intermediates {
            let d = dir.join(sanitize(label));
            std::fs::create_dir_all(&d)?;
            save_image(&raw, d.join(name))?;
        }
        let mut processed = match &self.cfg.generator {
            Some(g) => run_generator(g, &raw)?,
            None => raw,
        };
        if processed.dims() != clean_ref.dims() {
            processed = resample(&processed, clean_ref.width(), clean_ref.height(), ResampleKernel::Lanczos(3))?;
        }
        if processed.channels() != clean_ref.channels() {
            processed = processed.to_rgb();
        }
        let needs_files = self.pair_metrics.iter().any(|m| {
            matches!(self.registry.get(m).map(|s| &s.kind), Some(MetricKind::External { .. }))
        });
        let tmp = if needs_files { Some(tempfile::tempdir()?) } else { None };
        let files = match &tmp {
            Some(t) => {
                let a = t.path().join("processed.png");
                let b = t.path().join("clean.png");
                save_image(&processed, &a)?;
                save_image(clean_ref, &b)?;
                Some((a, b))
            }
            None => None,
        };
        for m in &self.pair_metrics {
            let v = match (&self.registry.get(m).expect("validated").kind, &files) {
                (MetricKind::External { .. }, Some((a, b))) => external_metric(&self.registry, m, a, b)?.value,
                _ => self.registry.evaluate_native(m, &processed, clean_ref)?.value,
            };
            values.push((m.clone(), v));
        }
        if let Some(scratch) = &self.scratch {
            let d = scratch.path().join(format!("s{idx}"));
            std::fs::create_dir_all(&d)?;
            save_image(&processed, d.join(name))?;
        }
        Ok(values)
    }

    fn process_pair(&self, name: &str) -> PairOutcome {
        let loaded = self.load_pair(name).and_then(|(clean, prot)| {
            let reference = match &self.cfg.generator {
                Some(g) => run_generator(g, &clean)?,
                None => clean,
            };
            if let Some(scratch) = &self.scratch {
                let d = scratch.path().join("clean");
                std::fs::create_dir_all(&d)?;
                save_image(&reference, d.join(name))?;
            }
            Ok((reference, prot))
        });
        match loaded {
            Err(e) => PairOutcome {
                per_setting: Vec::new(),
                pair_error: Some(e.to_string()),
            },
            Ok((reference, prot)) => PairOutcome {
                per_setting: (0..self.settings.len())
                    .map(|i| self.process_setting(i, name, &reference, &prot).map_err(|e| e.to_string()))
                    .collect(),
                pair_error: None,
            },
        }
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Evaluates every setting on every pair. Results do not depend on the
/// worker count.
pub fn run_eval(cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let files = match &cfg.protected.dir {
        Some(d) => pair_files(&cfg.clean_dir, d)?,
        None => {
            let f = list_images(&cfg.clean_dir)?;
            if f.is_empty() {
                return Err(Error::Pairing(format!("no PNG files in {}", cfg.clean_dir.display())));
            }
            f
        }
    };
    let registry = cfg.registry()?;
    let is_set_level =
        |m: &String| matches!(registry.get(m).map(|s| &s.kind), Some(MetricKind::External { set_level: true, .. }));
    let set_metrics: Vec<String> = cfg.metrics.ids.iter().filter(|m| is_set_level(m)).cloned().collect();
    let pair_metrics: Vec<String> = cfg.metrics.ids.iter().filter(|m| !is_set_level(m)).cloned().collect();
    let settings = cfg
        .settings
        .iter()
        .map(|s| {
            let prep = match s.kind() {
                SettingKind::Chain(c) => Prepared::Chain(c.clone()),
                SettingKind::Tiprsr(_) => Prepared::Purify(Box::new(cfg.purify_params(s)?)),
            };
            Ok((s.label().to_string(), prep))
        })
        .collect::<Result<Vec<_>>>()?;
    let job = Job {
        cfg,
        scratch: if set_metrics.is_empty() { None } else { Some(tempfile::tempdir()?) },
        registry,
        settings,
        pair_metrics,
        set_metrics,
    };

    let workers = cfg.effective_workers();
    global_cap().set_limit(workers);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    // Indexed collect keeps filename order regardless of scheduling.
    let outcomes: Vec<PairOutcome> = pool.install(|| files.par_iter().map(|f| job.process_pair(f)).collect());

    let method = cfg.method_label();
    let mut acc: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    let mut failures = Vec::new();
    for (name, out) in files.iter().zip(&outcomes) {
        if let Some(e) = &out.pair_error {
            failures.push(Failure {
                file: name.clone(),
                setting: "*".into(),
                error: e.clone(),
            });
            continue;
        }
        for ((label, _), res) in job.settings.iter().zip(&out.per_setting) {
            match res {
                Ok(values) => {
                    for (metric, v) in values {
                        acc.entry((label.clone(), metric.clone())).or_default().push(*v);
                    }
                }
                Err(e) => failures.push(Failure {
                    file: name.clone(),
                    setting: label.clone(),
                    error: e.clone(),
                }),
            }
        }
    }

    if let Some(scratch) = &job.scratch {
        let clean_set = scratch.path().join("clean");
        for (i, (label, _)) in job.settings.iter().enumerate() {
            let dir = scratch.path().join(format!("s{i}"));
            let n = list_images(&dir).map(|v| v.len()).unwrap_or(0);
            if n == 0 {
                continue;
            }
            for m in &job.set_metrics {
                match external_metric(&job.registry, m, &dir, &clean_set) {
                    Ok(v) => {
                        acc.insert((label.clone(), m.clone()), vec![v.value; n]);
                    }
                    Err(e) => failures.push(Failure {
                        file: "*".into(),
                        setting: label.clone(),
                        error: format!("{m}: {e}"),
                    }),
                }
            }
        }
    }

    let rows = acc
        .into_iter()
        .map(|((setting, metric), v)| {
            let (mean, std) = mean_std(&v);
            ReportRow {
                setting,
                method: method.clone(),
                metric,
                mean,
                std,
                n: v.len(),
            }
        })
        .collect();
    let timed = cfg.output.timing && cfg.settings.iter().any(Setting::is_tiprsr);
    Ok(EvalReport {
        rows,
        provenance: Provenance {
            config_hash: cfg.config_hash(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed: cfg.seed,
            deterministic: !timed,
        },
        failures,
    })
}

/// [`run_eval`] for configs that include at least one `tiprsr` setting.
pub fn run_purify_eval(cfg: &EvalConfig) -> Result<EvalReport> {
    if !cfg.settings.iter().any(Setting::is_tiprsr) {
        return Err(Error::Config("purification eval needs a `tiprsr` setting".into()));
    }
    run_eval(cfg)
}

/// Runs the config and writes the report to `cfg.output.path` if set.
pub fn run_and_emit(cfg: &EvalConfig) -> Result<(EvalReport, Option<PathBuf>)> {
    let report = run_eval(cfg)?;
    if let Some(p) = &cfg.output.path {
        emit_report(&report, p, cfg.output.resolved_format())?;
    }
    Ok((report, cfg.output.path.clone()))
}
