//! Region-wise purification.
//!
//! Face path: `x_f = blend(SR_f(Down(J(x̂))), x̂, λ)`.
//! Background path: `x_g = Down(SR_g(x̂))`.
//! Fusion: `x' = m * x_f + (1 - m) * x_g` with `m` the (feathered) face mask.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{save_image, ImageF};
use crate::masking::{build_mask, default_feather_radius, feather, MaskSource, RegionMask};
use crate::srbackend::{upscale, validate_pipeline_scales, SrBackendSpec};
use crate::transforms::chain::split_args;
use crate::transforms::{jpeg_roundtrip, resample, ResampleKernel, Subsampling};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlendMode {
    /// `(1 - λ) * s + λ * x̂`
    #[default]
    Convex,
    /// `clamp(s + λ * x̂)`
    Literal,
}

impl fmt::Display for BlendMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlendMode::Convex => "convex",
            BlendMode::Literal => "literal",
        })
    }
}

impl FromStr for BlendMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "convex" => Ok(BlendMode::Convex),
            "literal" => Ok(BlendMode::Literal),
            _ => Err(Error::InvalidParameter(format!("unknown blend mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PurifyParams {
    pub lambda: f64,
    /// `None` skips the JPEG stage entirely.
    pub jpeg_q: Option<u32>,
    pub subsampling: Subsampling,
    pub down_factor: u32,
    pub down_kernel: ResampleKernel,
    pub blend_mode: BlendMode,
    pub face_sr: SrBackendSpec,
    pub general_sr: SrBackendSpec,
    pub mask_source: MaskSource,
    /// `None` picks `max(2, width / 64)`; `Some(0.0)` disables feathering.
    pub feather_radius: Option<f64>,
    /// Skip feathering regardless of `feather_radius`.
    pub hard_mask: bool,
}

impl Default for PurifyParams {
    fn default() -> Self {
        Self {
            lambda: 0.2,
            jpeg_q: Some(75),
            subsampling: Subsampling::default(),
            down_factor: 2,
            down_kernel: ResampleKernel::default(),
            blend_mode: BlendMode::Convex,
            face_sr: SrBackendSpec::default(),
            general_sr: SrBackendSpec::default(),
            mask_source: MaskSource::default(),
            feather_radius: None,
            hard_mask: false,
        }
    }
}

impl PurifyParams {
    /// Configuration under which purification is the identity map: no JPEG,
    /// factor 1, identity SR, λ = 0, an all-ones mask and no feathering.
    pub fn degenerate() -> Self {
        Self {
            lambda: 0.0,
            jpeg_q: None,
            down_factor: 1,
            face_sr: SrBackendSpec::identity(),
            general_sr: SrBackendSpec::identity(),
            mask_source: MaskSource::Ellipse {
                cx: 0.5,
                cy: 0.5,
                rx: 1.0,
                ry: 1.0,
            },
            feather_radius: Some(0.0),
            hard_mask: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidParameter(format!("lambda {} not in [0, 1]", self.lambda)));
        }
        if let Some(q) = self.jpeg_q {
            if !(1..=100).contains(&q) {
                return Err(Error::QualityOutOfRange(q));
            }
        }
        if self.down_factor == 0 {
            return Err(Error::InvalidParameter("down factor must be >= 1".into()));
        }
        if let Some(r) = self.feather_radius {
            if !(r.is_finite() && r >= 0.0) {
                return Err(Error::InvalidParameter(format!("feather radius {r}")));
            }
        }
        self.down_kernel.validate()?;
        self.face_sr.validate()?;
        self.general_sr.validate()?;
        self.mask_source.validate()?;
        validate_pipeline_scales(&self.face_sr, &self.general_sr, self.down_factor)
    }

    /// Applies `key=value` overrides as used by the `tiprsr:...` setting
    /// syntax. Changing `d` re-scales built-in interp backends to match.
    pub fn apply_overrides(&mut self, args: &[(&str, &str)]) -> Result<()> {
        let bad = |k: &str, v: &str| Error::InvalidParameter(format!("tiprsr {k}={v:?}"));
        for &(k, v) in args {
            match k {
                "lambda" | "l" => self.lambda = v.parse().map_err(|_| bad(k, v))?,
                "q" | "jpeg_q" => {
                    self.jpeg_q = if v == "none" {
                        None
                    } else {
                        Some(v.parse().map_err(|_| bad(k, v))?)
                    }
                }
                "s" | "subsampling" => self.subsampling = v.parse()?,
                "d" | "down" => {
                    let d: u32 = v.parse().map_err(|_| bad(k, v))?;
                    self.down_factor = d;
                    for sr in [&mut self.face_sr, &mut self.general_sr] {
                        if let crate::srbackend::SrKind::Interp { kernel } = sr.kind() {
                            *sr = if d == 1 {
                                SrBackendSpec::identity()
                            } else {
                                SrBackendSpec::interp(*kernel, d)?
                            };
                        }
                    }
                }
                "k" | "kernel" => self.down_kernel = v.parse()?,
                "blend" => self.blend_mode = v.parse()?,
                "feather" => self.feather_radius = Some(v.parse().map_err(|_| bad(k, v))?),
                "hard" => self.hard_mask = v.parse().map_err(|_| bad(k, v))?,
                _ => return Err(Error::InvalidParameter(format!("tiprsr: unknown key {k:?}"))),
            }
        }
        self.validate()
    }

    /// Parses `tiprsr[:lambda=..,q=..,d=..,k=..,blend=..]` on top of `self`.
    pub fn parse_setting(&self, s: &str) -> Result<Self> {
        let (name, args) = split_args(s)?;
        if name != "tiprsr" {
            return Err(Error::InvalidParameter(format!("not a tiprsr setting: {s:?}")));
        }
        let mut p = self.clone();
        p.apply_overrides(&args)?;
        Ok(p)
    }
}

/// Intermediate images and per-stage wall-clock times.
#[derive(Clone, Debug)]
pub struct PurifyTrace {
    /// After JPEG and down-sampling (reduced resolution).
    pub x_jd: ImageF,
    pub x_f: ImageF,
    pub x_g: ImageF,
    pub mask: RegionMask,
    pub timings: Vec<(String, f64)>,
}

impl PurifyTrace {
    /// Writes `x_jd.png`, `x_f.png`, `x_g.png` and `mask.png` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        save_image(&self.x_jd, dir.join("x_jd.png"))?;
        save_image(&self.x_f, dir.join("x_f.png"))?;
        save_image(&self.x_g, dir.join("x_g.png"))?;
        save_image(&self.mask.to_image(), dir.join("mask.png"))
    }

    pub fn total_s(&self) -> f64 {
        self.timings.iter().find(|(k, _)| k == "total").map_or(0.0, |t| t.1)
    }
}

#[derive(Clone, Debug)]
pub struct PurifyOutput {
    pub image: ImageF,
    pub trace: Option<PurifyTrace>,
}

struct FaceOut {
    x_jd: ImageF,
    x_f: ImageF,
    t_jd: f64,
    t_sr: f64,
}

fn face_path_inner(xhat: &ImageF, p: &PurifyParams) -> Result<FaceOut> {
    let (w, h) = xhat.dims();
    let start = Instant::now();
    let j = match p.jpeg_q {
        Some(q) => jpeg_roundtrip(xhat, q, p.subsampling)?,
        None => xhat.clone(),
    };
    let d = p.down_factor as usize;
    let x_jd = resample(&j, (w / d).max(1), (h / d).max(1), p.down_kernel)?;
    let t_jd = start.elapsed().as_secs_f64();
    let sr = upscale(&x_jd, &p.face_sr)?;
    // Sizes not divisible by d come back a few pixels short.
    let s = resample(&sr.image, w, h, p.down_kernel)?;
    let lambda = p.lambda;
    let x_f = match p.blend_mode {
        BlendMode::Convex => s.zip_map(xhat, |s, x| (1.0 - lambda) * s + lambda * x)?,
        BlendMode::Literal => s.zip_map(xhat, |s, x| s + lambda * x)?,
    };
    Ok(FaceOut {
        x_jd,
        x_f,
        t_jd,
        t_sr: sr.elapsed_s,
    })
}

/// Face path: compress, down-sample, face SR, then blend with `x̂` by λ.
pub fn face_path(xhat: &ImageF, p: &PurifyParams) -> Result<ImageF> {
    p.validate()?;
    Ok(face_path_inner(xhat, p)?.x_f)
}

fn background_path_inner(xhat: &ImageF, p: &PurifyParams) -> Result<(ImageF, f64)> {
    let sr = upscale(xhat, &p.general_sr)?;
    let x_g = resample(&sr.image, xhat.width(), xhat.height(), p.down_kernel)?;
    Ok((x_g, sr.elapsed_s))
}

/// Background path: general SR, then down-sample back to input size.
pub fn background_path(xhat: &ImageF, p: &PurifyParams) -> Result<ImageF> {
    p.validate()?;
    Ok(background_path_inner(xhat, p)?.0)
}

/// The mask actually used for fusion: built from `x̂`, then feathered.
pub fn fusion_mask(xhat: &ImageF, p: &PurifyParams) -> Result<RegionMask> {
    let m = build_mask(xhat, &p.mask_source)?;
    Ok(if p.hard_mask {
        m
    } else {
        let r = p
            .feather_radius
            .unwrap_or_else(|| default_feather_radius(xhat.width()));
        feather(&m, r)
    })
}

/// Per-sample `m * a + (1 - m) * b`, broadcast over channels.
pub fn fuse(mask: &RegionMask, a: &ImageF, b: &ImageF) -> Result<ImageF> {
    a.ensure_same_shape(b)?;
    if mask.dims() != a.dims() {
        return Err(Error::MaskShapeMismatch {
            expected: a.dims(),
            actual: mask.dims(),
        });
    }
    let n = mask.data().len();
    let m = mask.data();
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .enumerate()
        .map(|(i, (&fa, &fb))| {
            let mi = m[i % n];
            mi * fa + (1.0 - mi) * fb
        })
        .collect();
    Ok(ImageF::from_planar_clamped(a.width(), a.height(), a.channels(), data))
}

/// Full purification with the mask built from `p.mask_source`.
pub fn purify(xhat: &ImageF, p: &PurifyParams, trace: bool) -> Result<PurifyOutput> {
    p.validate()?;
    let start = Instant::now();
    let mask = fusion_mask(xhat, p)?;
    let t_mask = start.elapsed().as_secs_f64();
    let mut out = run(xhat, p, mask, trace, start)?;
    if let Some(t) = out.trace.as_mut() {
        t.timings.insert(0, ("mask".into(), t_mask));
    }
    Ok(out)
}

/// Purification with a caller-supplied fusion mask (used as is).
pub fn purify_with_mask(xhat: &ImageF, p: &PurifyParams, mask: &RegionMask, trace: bool) -> Result<PurifyOutput> {
    p.validate()?;
    if mask.dims() != xhat.dims() {
        return Err(Error::MaskShapeMismatch {
            expected: xhat.dims(),
            actual: mask.dims(),
        });
    }
    run(xhat, p, mask.clone(), trace, Instant::now())
}

fn run(xhat: &ImageF, p: &PurifyParams, mask: RegionMask, trace: bool, start: Instant) -> Result<PurifyOutput> {
    let (face, bg) = rayon::join(|| face_path_inner(xhat, p), || background_path_inner(xhat, p));
    let face = face?;
    let (x_g, t_g) = bg?;
    let t_fuse = Instant::now();
    let image = fuse(&mask, &face.x_f, &x_g)?;
    let t_fuse = t_fuse.elapsed().as_secs_f64();
    let trace = trace.then(|| PurifyTrace {
        timings: vec![
            ("jpeg_down".into(), face.t_jd),
            ("face_sr".into(), face.t_sr),
            ("general_sr".into(), t_g),
            ("fuse".into(), t_fuse),
            ("total".into(), start.elapsed().as_secs_f64()),
        ],
        x_jd: face.x_jd,
        x_f: face.x_f,
        x_g,
        mask,
    });
    Ok(PurifyOutput { image, trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_image(w: usize, h: usize) -> ImageF {
        ImageF::from_fn(w, h, 3, |c, x, y| {
            (((x * 7 + y * 3 + c * 11) % 23) as f64 / 22.0) * 0.8 + 0.1
        })
        .unwrap()
    }

    #[test]
    fn degenerate_is_identity() {
        let img = test_image(33, 20);
        let out = purify(&img, &PurifyParams::degenerate(), false).unwrap();
        assert_eq!(out.image, img);
    }

    #[test]
    fn lambda_extremes() {
        let img = test_image(32, 24);
        let mut p = PurifyParams {
            lambda: 1.0,
            ..PurifyParams::default()
        };
        assert_eq!(face_path(&img, &p).unwrap(), img);
        p.lambda = 0.0;
        let s = face_path(&img, &p).unwrap();
        let d = resample(
            &jpeg_roundtrip(&img, 75, Subsampling::default()).unwrap(),
            16,
            12,
            ResampleKernel::default(),
        )
        .unwrap();
        let up = upscale(&d, &p.face_sr).unwrap().image;
        assert_eq!(s, up);
    }

    #[test]
    fn literal_blend_saturates() {
        let img = ImageF::filled(8, 8, 3, 0.9).unwrap();
        let p = PurifyParams {
            jpeg_q: None,
            blend_mode: BlendMode::Literal,
            ..PurifyParams::default()
        };
        let f = face_path(&img, &p).unwrap();
        assert!(f.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn constant_background_path() {
        let img = ImageF::filled(16, 10, 3, 0.37).unwrap();
        let g = background_path(&img, &PurifyParams::default()).unwrap();
        assert!(g.data().iter().all(|&v| (v - 0.37).abs() < 1e-12));
    }

    #[test]
    fn mask_extremes_select_paths() {
        let img = test_image(24, 24);
        let p = PurifyParams::default();
        let ones = RegionMask::constant(24, 24, 1.0).unwrap();
        let zeros = RegionMask::constant(24, 24, 0.0).unwrap();
        let a = purify_with_mask(&img, &p, &ones, true).unwrap();
        let t = a.trace.unwrap();
        assert_eq!(a.image, t.x_f);
        let b = purify_with_mask(&img, &p, &zeros, true).unwrap();
        assert_eq!(b.image, b.trace.unwrap().x_g);
    }

    #[test]
    fn trace_does_not_change_output() {
        let img = test_image(40, 30);
        let p = PurifyParams::default();
        let a = purify(&img, &p, false).unwrap();
        let b = purify(&img, &p, true).unwrap();
        assert_eq!(a.image, b.image);
        let t = b.trace.unwrap();
        assert_eq!(t.x_jd.dims(), (20, 15));
        assert_eq!(t.mask.dims(), (40, 30));
        assert!(t.total_s() > 0.0);
    }

    #[test]
    fn odd_sizes_return_input_resolution() {
        let img = test_image(31, 17);
        let out = purify(&img, &PurifyParams::default(), false).unwrap();
        assert_eq!(out.image.dims(), (31, 17));
    }

    #[test]
    fn invalid_params() {
        let p = PurifyParams {
            lambda: 1.5,
            ..PurifyParams::default()
        };
        assert!(p.validate().is_err());
        let p = PurifyParams {
            down_factor: 4,
            ..PurifyParams::default()
        };
        assert!(matches!(p.validate(), Err(Error::ScaleMismatch { .. })));
    }

    #[test]
    fn setting_overrides() {
        let p = PurifyParams::default()
            .parse_setting("tiprsr:lambda=0.5,q=90,d=3,blend=literal")
            .unwrap();
        assert_eq!(p.lambda, 0.5);
        assert_eq!(p.jpeg_q, Some(90));
        assert_eq!(p.face_sr.scale(), 3);
        assert_eq!(p.blend_mode, BlendMode::Literal);
        assert_eq!(PurifyParams::default().parse_setting("tiprsr").unwrap(), PurifyParams::default());
        assert!(PurifyParams::default().parse_setting("tiprsr:x=1").is_err());
    }
}
