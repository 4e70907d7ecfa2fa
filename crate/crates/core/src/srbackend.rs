//! Super-resolution backends for the face and general roles of the purifier.
//!
//! Built-in backends are `identity` (scale 1) and `interp` (a plain resample).
//! External backends run as `<cmd> <input_png> <output_png> <scale>` and must
//! write a PNG of exactly the scaled size.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imgcore::{encode_png, load_png, luma, to_float, to_u8, ImageF};
use crate::process::run_backend;
use crate::transforms::chain::split_args;
use crate::transforms::{resample, ResampleKernel};

pub use crate::process::DEFAULT_TIMEOUT_S;

#[derive(Clone, Debug, PartialEq)]
pub enum SrKind {
    Identity,
    Interp { kernel: ResampleKernel },
    External { cmd: String, timeout_s: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SrSpecFields", into = "SrSpecFields")]
pub struct SrBackendSpec {
    kind: SrKind,
    scale: u32,
    /// Content-addressed result cache for external backends.
    cache_dir: Option<PathBuf>,
}

/// Flat form used by config files (`kind`, `cmd`, `scale`, `timeout_s`, ...).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SrSpecFields {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kernel: Option<ResampleKernel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cmd: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    timeout_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cache_dir: Option<PathBuf>,
}

impl TryFrom<SrSpecFields> for SrBackendSpec {
    type Error = Error;

    fn try_from(f: SrSpecFields) -> Result<Self> {
        let spec = match f.kind.as_str() {
            "identity" => SrBackendSpec::identity(),
            "interp" => SrBackendSpec::interp(f.kernel.unwrap_or_default(), f.scale.unwrap_or(2))?,
            "external" => {
                let cmd = f
                    .cmd
                    .ok_or_else(|| Error::Config("external SR backend needs `cmd`".into()))?;
                SrBackendSpec::external(
                    cmd,
                    f.scale.unwrap_or(2),
                    f.timeout_s.unwrap_or(DEFAULT_TIMEOUT_S),
                )?
            }
            other => return Err(Error::Config(format!("unknown SR backend kind {other:?}"))),
        };
        if spec.kind == SrKind::Identity && f.scale.is_some_and(|s| s != 1) {
            return Err(Error::InvalidParameter("identity SR requires scale 1".into()));
        }
        Ok(spec.with_cache_dir(f.cache_dir))
    }
}

impl From<SrBackendSpec> for SrSpecFields {
    fn from(s: SrBackendSpec) -> Self {
        let mut f = SrSpecFields {
            kind: String::new(),
            scale: Some(s.scale),
            kernel: None,
            cmd: None,
            timeout_s: None,
            cache_dir: s.cache_dir,
        };
        match s.kind {
            SrKind::Identity => f.kind = "identity".into(),
            SrKind::Interp { kernel } => {
                f.kind = "interp".into();
                f.kernel = Some(kernel);
            }
            SrKind::External { cmd, timeout_s } => {
                f.kind = "external".into();
                f.cmd = Some(cmd);
                f.timeout_s = Some(timeout_s);
            }
        }
        f
    }
}

impl SrBackendSpec {
    pub fn identity() -> Self {
        Self {
            kind: SrKind::Identity,
            scale: 1,
            cache_dir: None,
        }
    }

    pub fn interp(kernel: ResampleKernel, scale: u32) -> Result<Self> {
        let s = Self {
            kind: SrKind::Interp {
                kernel: kernel.validate()?,
            },
            scale,
            cache_dir: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn external(cmd: impl Into<String>, scale: u32, timeout_s: f64) -> Result<Self> {
        let s = Self {
            kind: SrKind::External {
                cmd: cmd.into(),
                timeout_s,
            },
            scale,
            cache_dir: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_cache_dir(mut self, dir: Option<PathBuf>) -> Self {
        self.cache_dir = dir;
        self
    }

    pub fn kind(&self) -> &SrKind {
        &self.kind
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            SrKind::Identity if self.scale != 1 => {
                Err(Error::InvalidParameter("identity SR requires scale 1".into()))
            }
            _ if self.scale == 0 => Err(Error::InvalidParameter("SR scale must be >= 1".into())),
            SrKind::External { timeout_s, cmd } => {
                if !(timeout_s.is_finite() && *timeout_s > 0.0) {
                    Err(Error::InvalidParameter(format!("SR timeout {timeout_s}")))
                } else if cmd.trim().is_empty() {
                    Err(Error::InvalidParameter("empty SR command".into()))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

impl Default for SrBackendSpec {
    fn default() -> Self {
        Self::interp(ResampleKernel::default(), 2).expect("valid default")
    }
}

impl fmt::Display for SrBackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            SrKind::Identity => f.write_str("identity"),
            SrKind::Interp { kernel } => write!(f, "interp:k={kernel},s={}", self.scale),
            SrKind::External { cmd, timeout_s } => {
                write!(f, "external:s={},t={timeout_s}:{cmd}", self.scale)
            }
        }
    }
}

impl FromStr for SrBackendSpec {
    type Err = Error;

    /// `identity`, `interp[:k=lanczos3,s=2]`, `external:<cmd>` or
    /// `external:s=2,t=60:<cmd>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("external:") {
            let (mut scale, mut timeout) = (2, DEFAULT_TIMEOUT_S);
            let mut cmd = rest;
            if let Some((opts, tail)) = rest.split_once(':') {
                if opts.split(',').all(|kv| kv.starts_with("s=") || kv.starts_with("t=")) {
                    for kv in opts.split(',') {
                        let v = &kv[2..];
                        let bad = || Error::InvalidParameter(format!("SR option {kv:?}"));
                        if kv.starts_with("s=") {
                            scale = v.parse().map_err(|_| bad())?;
                        } else {
                            timeout = v.parse().map_err(|_| bad())?;
                        }
                    }
                    cmd = tail;
                }
            }
            return SrBackendSpec::external(cmd, scale, timeout);
        }
        let (name, args) = split_args(s)?;
        match name {
            "identity" if args.is_empty() => Ok(SrBackendSpec::identity()),
            "interp" => {
                let (mut kernel, mut scale) = (ResampleKernel::default(), 2);
                for (k, v) in args {
                    match k {
                        "k" | "kernel" => kernel = v.parse()?,
                        "s" | "scale" => {
                            scale = v
                                .parse()
                                .map_err(|_| Error::InvalidParameter(format!("SR scale {v:?}")))?
                        }
                        _ => return Err(Error::InvalidParameter(format!("interp: unknown key {k:?}"))),
                    }
                }
                SrBackendSpec::interp(kernel, scale)
            }
            _ => Err(Error::InvalidParameter(format!("unknown SR backend {s:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SrResult {
    pub image: ImageF,
    pub elapsed_s: f64,
}

fn check_scale(img: &ImageF, out: &ImageF, scale: u32) -> Result<()> {
    let s = scale as usize;
    let expected = (img.width() * s, img.height() * s);
    if out.dims() != expected {
        return Err(Error::ScaleContractViolated {
            expected,
            actual: out.dims(),
        });
    }
    Ok(())
}

/// Brings a backend's output to the input's channel layout.
fn match_channels(img: &ImageF, channels: usize) -> ImageF {
    match (img.channels(), channels) {
        (a, b) if a == b => img.clone(),
        (1, 3) => img.to_rgb(),
        _ => luma(img),
    }
}

fn run_external(png: &[u8], cmd: &str, scale: u32, timeout_s: f64) -> Result<ImageF> {
    let dir = tempfile::tempdir()?;
    let input = dir.path().join("input.png");
    let output = dir.path().join("output.png");
    std::fs::write(&input, png)?;
    let scale_arg = scale.to_string();
    let args: [&Path; 3] = [&input, &output, Path::new(&scale_arg)];
    let timeout = Some(Duration::from_secs_f64(timeout_s));
    match run_backend(cmd, &args, timeout) {
        Err(Error::BackendTimeout(_)) => {
            log::warn!("SR backend timed out after {timeout_s} s, retrying once");
            run_backend(cmd, &args, timeout)?;
        }
        r => {
            r?;
        }
    }
    let out = load_png(&output).map_err(|e| Error::BackendFailed {
        code: Some(0),
        stderr: format!("SR backend output unreadable: {e}"),
    })?;
    Ok(to_float(&out))
}

fn cache_path(dir: &Path, png: &[u8], spec: &SrBackendSpec) -> PathBuf {
    let mut h = Sha256::new();
    h.update(png);
    h.update([0u8]);
    h.update(spec.to_string().as_bytes());
    dir.join(format!("{}.png", hex::encode(h.finalize())))
}

/// Upscales `img` by `spec.scale()`, enforcing the exact output size.
pub fn upscale(img: &ImageF, spec: &SrBackendSpec) -> Result<SrResult> {
    spec.validate()?;
    let start = Instant::now();
    let image = match &spec.kind {
        SrKind::Identity => img.clone(),
        SrKind::Interp { kernel } => {
            let s = spec.scale as usize;
            resample(img, img.width() * s, img.height() * s, *kernel)?
        }
        SrKind::External { cmd, timeout_s } => {
            let png = encode_png(&to_u8(img))?;
            let cached = spec.cache_dir.as_ref().map(|d| cache_path(d, &png, spec));
            let hit = cached
                .as_ref()
                .filter(|p| p.is_file())
                .and_then(|p| load_png(p).ok())
                .map(|u| to_float(&u));
            let out = match hit {
                Some(img) => img,
                None => {
                    let out = run_external(&png, cmd, spec.scale, *timeout_s)?;
                    if let Some(p) = &cached {
                        store_cache(p, &out);
                    }
                    out
                }
            };
            match_channels(&out, img.channels())
        }
    };
    check_scale(img, &image, spec.scale)?;
    Ok(SrResult {
        image,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}

/// Write-then-rename so concurrent readers never see a partial file.
fn store_cache(path: &Path, img: &ImageF) {
    let Some(dir) = path.parent() else { return };
    let write = || -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let tmp = tempfile::NamedTempFile::new_in(dir)?;
        std::fs::write(tmp.path(), encode_png(&to_u8(img))?)?;
        tmp.persist(path).map_err(|e| Error::Io(e.error))?;
        Ok(())
    };
    if let Err(e) = write() {
        log::warn!("could not write SR cache entry {}: {e}", path.display());
    }
}

/// Both SR roles must invert the down-sampling factor exactly.
pub fn validate_pipeline_scales(face: &SrBackendSpec, general: &SrBackendSpec, down_factor: u32) -> Result<()> {
    for (role, spec) in [("face", face), ("general", general)] {
        if spec.scale != down_factor {
            return Err(Error::ScaleMismatch {
                role: role.into(),
                expected: down_factor,
                actual: spec.scale,
            });
        }
    }
    Ok(())
}
