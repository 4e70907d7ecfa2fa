//! Soft face-region masks: file, external segmentation backend or a centered
//! ellipse fallback, plus Gaussian feathering.
//!
//! Mask value 1 routes a pixel to the face path, 0 to the background path.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{load_png, luma, save_image, to_float, ImageF};
use crate::process::{run_backend, DEFAULT_TIMEOUT_S};
use crate::transforms::chain::split_args;

/// Single-channel mask in `[0, 1]` at image resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionMask {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RegionMask {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidDimensions(format!(
                "mask {width}x{height} with {} samples",
                data.len()
            )));
        }
        if data.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidParameter("NaN in mask".into()));
        }
        Ok(Self {
            width,
            height,
            data: data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Takes the single plane of a gray image (or the shared plane of an RGB
    /// image whose channels agree; otherwise its luma).
    pub fn from_image(img: &ImageF) -> Self {
        let plane = if img.channels() == 1
            || (img.plane(0) == img.plane(1) && img.plane(1) == img.plane(2))
        {
            img.plane(0).to_vec()
        } else {
            luma(img).plane(0).to_vec()
        };
        Self {
            width: img.width(),
            height: img.height(),
            data: plane,
        }
    }

    pub fn to_image(&self) -> ImageF {
        ImageF::new(self.width, self.height, 1, self.data.clone()).expect("valid mask")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Where the face mask comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MaskSource {
    /// Grayscale PNG at image resolution, 255 = face.
    File { path: PathBuf },
    /// Segmentation backend run as `<cmd> <input_png> <output_png>`.
    External {
        cmd: String,
        /// Seconds before the backend is killed; defaults to 300.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        timeout_s: Option<f64>,
    },
    /// Axis-aligned ellipse; center and radii are fractions of width/height.
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
}

impl Default for MaskSource {
    fn default() -> Self {
        MaskSource::Ellipse {
            cx: 0.5,
            cy: 0.5,
            rx: 0.35,
            ry: 0.45,
        }
    }
}

impl fmt::Display for MaskSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaskSource::File { path } => write!(f, "file:{}", path.display()),
            MaskSource::External { cmd, .. } => write!(f, "external:{cmd}"),
            MaskSource::Ellipse { cx, cy, rx, ry } => {
                write!(f, "ellipse:cx={cx},cy={cy},rx={rx},ry={ry}")
            }
        }
    }
}

impl FromStr for MaskSource {
    type Err = Error;

    /// `ellipse[:cx=..,cy=..,rx=..,ry=..]`, `file:<path>` or `external:<cmd>`.
    fn from_str(s: &str) -> Result<Self> {
        if let Some(p) = s.strip_prefix("file:") {
            return Ok(MaskSource::File { path: p.into() });
        }
        if let Some(c) = s.strip_prefix("external:") {
            return Ok(MaskSource::External {
                cmd: c.into(),
                timeout_s: None,
            });
        }
        let (name, args) = split_args(s)?;
        if name != "ellipse" {
            return Err(Error::InvalidParameter(format!("unknown mask source {s:?}")));
        }
        let MaskSource::Ellipse {
            mut cx,
            mut cy,
            mut rx,
            mut ry,
        } = MaskSource::default()
        else {
            unreachable!()
        };
        for (k, v) in args {
            let v: f64 = v
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("ellipse {k}={v:?}")))?;
            match k {
                "cx" => cx = v,
                "cy" => cy = v,
                "rx" => rx = v,
                "ry" => ry = v,
                _ => return Err(Error::InvalidParameter(format!("ellipse: unknown key {k:?}"))),
            }
        }
        let src = MaskSource::Ellipse { cx, cy, rx, ry };
        src.validate()?;
        Ok(src)
    }
}

impl MaskSource {
    pub fn validate(&self) -> Result<()> {
        if let MaskSource::External { timeout_s: Some(t), .. } = *self {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidParameter(format!("mask backend timeout_s {t}")));
            }
        }
        if let MaskSource::Ellipse { cx, cy, rx, ry } = *self {
            let frac = |v: f64| v > 0.0 && v <= 1.0;
            if !(frac(cx) && frac(cy) && frac(rx) && frac(ry)) {
                return Err(Error::InvalidEllipse(format!(
                    "cx={cx}, cy={cy}, rx={rx}, ry={ry} must lie in (0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Binary ellipse mask evaluated at pixel centers.
pub fn ellipse_mask(width: usize, height: usize, cx: f64, cy: f64, rx: f64, ry: f64) -> Result<RegionMask> {
    MaskSource::Ellipse { cx, cy, rx, ry }.validate()?;
    let (w, h) = (width as f64, height as f64);
    let mut data = Vec::with_capacity(width * height);
    for y in 0..height {
        // (2y + 1 - 2cy*h) / (2h) keeps the mask mirror-symmetric when cx = 0.5.
        let dy = (2.0 * y as f64 + 1.0 - 2.0 * cy * h) / (2.0 * h * ry);
        for x in 0..width {
            let dx = (2.0 * x as f64 + 1.0 - 2.0 * cx * w) / (2.0 * w * rx);
            data.push(if dx * dx + dy * dy <= 1.0 { 1.0 } else { 0.0 });
        }
    }
    RegionMask::new(width, height, data)
}

fn check_dims(mask: &RegionMask, img: &ImageF) -> Result<()> {
    if mask.dims() != img.dims() {
        return Err(Error::MaskShapeMismatch {
            expected: img.dims(),
            actual: mask.dims(),
        });
    }
    Ok(())
}

fn load_mask_file(path: &Path) -> Result<RegionMask> {
    Ok(RegionMask::from_image(&to_float(&load_png(path)?)))
}

/// Builds the face mask for `img` from `source`.
pub fn build_mask(img: &ImageF, source: &MaskSource) -> Result<RegionMask> {
    source.validate()?;
    match source {
        MaskSource::Ellipse { cx, cy, rx, ry } => {
            ellipse_mask(img.width(), img.height(), *cx, *cy, *rx, *ry)
        }
        MaskSource::File { path } => {
            let m = load_mask_file(path)?;
            check_dims(&m, img)?;
            Ok(m)
        }
        MaskSource::External { cmd, timeout_s } => {
            let dir = tempfile::tempdir()?;
            let input = dir.path().join("input.png");
            let output = dir.path().join("mask.png");
            save_image(img, &input)?;
            let t = timeout_s.unwrap_or(DEFAULT_TIMEOUT_S);
            run_backend(cmd, &[&input, &output], Some(Duration::from_secs_f64(t)))?;
            let m = load_mask_file(&output).map_err(|e| Error::BackendFailed {
                code: Some(0),
                stderr: format!("mask backend output unreadable: {e}"),
            })?;
            if m.dims() != img.dims() {
                return Err(Error::BackendFailed {
                    code: Some(0),
                    stderr: format!(
                        "mask backend wrote {}x{}, expected {}x{}",
                        m.width,
                        m.height,
                        img.width(),
                        img.height()
                    ),
                });
            }
            Ok(m)
        }
    }
}

/// Default feather radius for an image of width `width`: `max(2, width / 64)`.
pub fn default_feather_radius(width: usize) -> f64 {
    (width / 64).max(2) as f64
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-r..=r)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Gaussian blur with `sigma = radius / 2`, separable, clamp-to-edge.
/// Radius 0 returns the mask unchanged.
pub fn feather(mask: &RegionMask, radius: f64) -> RegionMask {
    if radius <= 0.0 || !radius.is_finite() {
        return mask.clone();
    }
    let k = gaussian_kernel(radius / 2.0);
    let r = (k.len() / 2) as i64;
    let (w, h) = mask.dims();
    let clampi = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, wt)| wt * mask.data[y * w + clampi(x as i64 + i as i64 - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, wt)| wt * tmp[clampi(y as i64 + i as i64 - r, h) * w + x])
                .sum::<f64>()
                .clamp(0.0, 1.0);
        }
    }
    RegionMask {
        width: w,
        height: h,
        data: out,
    }
}

/// Per-sample `1 - m`.
pub fn complement(mask: &RegionMask) -> RegionMask {
    RegionMask {
        width: mask.width,
        height: mask.height,
        data: mask.data.iter().map(|&m| 1.0 - m).collect(),
    }
}
