//! Separable resampling with nearest, bilinear, bicubic and Lanczos kernels.
//!
//! Output pixel `i` maps to source coordinate `(i + 0.5) * in / out - 0.5`.
//! When downscaling, the kernel is stretched by `in / out` so that its
//! support covers the whole footprint of the output pixel. Taps outside the
//! image are clamped to the edge and weights are renormalized per pixel.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::ImageF;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ResampleKernel {
    Nearest,
    Bilinear,
    /// Keys cubic with `a = -0.5`.
    Bicubic,
    Lanczos(u32),
}

impl Default for ResampleKernel {
    fn default() -> Self {
        ResampleKernel::Lanczos(3)
    }
}

#[inline]
pub fn sinc(t: f64) -> f64 {
    if t == 0.0 {
        1.0
    } else {
        let x = std::f64::consts::PI * t;
        x.sin() / x
    }
}

impl ResampleKernel {
    /// Kernel support radius at unit scale.
    pub fn radius(self) -> f64 {
        match self {
            ResampleKernel::Nearest => 0.5,
            ResampleKernel::Bilinear => 1.0,
            ResampleKernel::Bicubic => 2.0,
            ResampleKernel::Lanczos(a) => f64::from(a),
        }
    }

    /// Kernel weight at offset `t` (unit scale).
    pub fn weight(self, t: f64) -> f64 {
        let at = t.abs();
        match self {
            ResampleKernel::Nearest => {
                if (-0.5..0.5).contains(&t) {
                    1.0
                } else {
                    0.0
                }
            }
            ResampleKernel::Bilinear => (1.0 - at).max(0.0),
            ResampleKernel::Bicubic => {
                const A: f64 = -0.5;
                if at <= 1.0 {
                    ((A + 2.0) * at - (A + 3.0)) * at * at + 1.0
                } else if at < 2.0 {
                    ((A * at - 5.0 * A) * at + 8.0 * A) * at - 4.0 * A
                } else {
                    0.0
                }
            }
            ResampleKernel::Lanczos(a) => {
                let a = f64::from(a);
                if at < a {
                    sinc(t) * sinc(t / a)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn validate(self) -> Result<Self> {
        match self {
            ResampleKernel::Lanczos(0) => Err(Error::InvalidParameter(
                "lanczos window must be positive".into(),
            )),
            k => Ok(k),
        }
    }
}

impl fmt::Display for ResampleKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResampleKernel::Nearest => f.write_str("nearest"),
            ResampleKernel::Bilinear => f.write_str("bilinear"),
            ResampleKernel::Bicubic => f.write_str("bicubic"),
            ResampleKernel::Lanczos(a) => write!(f, "lanczos{a}"),
        }
    }
}

impl FromStr for ResampleKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "nearest" => Ok(ResampleKernel::Nearest),
            "bilinear" | "linear" => Ok(ResampleKernel::Bilinear),
            "bicubic" | "cubic" => Ok(ResampleKernel::Bicubic),
            "lanczos" => Ok(ResampleKernel::Lanczos(3)),
            _ => {
                let a = s
                    .strip_prefix("lanczos")
                    .and_then(|rest| rest.parse::<u32>().ok())
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown kernel {s:?}")))?;
                ResampleKernel::Lanczos(a).validate()
            }
        }
    }
}

impl TryFrom<String> for ResampleKernel {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ResampleKernel> for String {
    fn from(k: ResampleKernel) -> String {
        k.to_string()
    }
}

/// Contributions of source samples to one output sample.
#[derive(Clone, Debug)]
struct Taps {
    weights: Vec<f64>,
    /// Source index per weight (clamped).
    indices: Vec<usize>,
}

/// Per-output-sample taps for a 1-D resize from `n_in` to `n_out` samples.
fn compute_taps(n_in: usize, n_out: usize, kernel: ResampleKernel) -> Vec<Taps> {
    if n_in == n_out {
        return (0..n_out)
            .map(|i| Taps {
                weights: vec![1.0],
                indices: vec![i],
            })
            .collect();
    }
    let ratio = n_in as f64 / n_out as f64;
    if kernel == ResampleKernel::Nearest {
        return (0..n_out)
            .map(|i| {
                let center = (i as f64 + 0.5) * ratio - 0.5;
                let idx = (center + 0.5).floor().clamp(0.0, (n_in - 1) as f64) as usize;
                Taps {
                    weights: vec![1.0],
                    indices: vec![idx],
                }
            })
            .collect();
    }
    let scale = ratio.max(1.0);
    let support = kernel.radius() * scale;
    (0..n_out)
        .map(|i| {
            let center = (i as f64 + 0.5) * ratio - 0.5;
            let lo = (center - support).ceil() as i64;
            let hi = (center + support).floor() as i64;
            let mut weights = Vec::with_capacity((hi - lo + 1) as usize);
            let mut indices = Vec::with_capacity(weights.capacity());
            for j in lo..=hi {
                let w = kernel.weight((j as f64 - center) / scale);
                if w != 0.0 {
                    weights.push(w);
                    indices.push(j.clamp(0, n_in as i64 - 1) as usize);
                }
            }
            let sum: f64 = weights.iter().sum();
            if sum != 0.0 {
                for w in &mut weights {
                    *w /= sum;
                }
            }
            Taps {
                weights,
                indices,
            }
        })
        .collect()
}

/// Resizes `img` to `out_w x out_h` (horizontal pass then vertical pass).
pub fn resample(img: &ImageF, out_w: usize, out_h: usize, kernel: ResampleKernel) -> Result<ImageF> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidDimensions(format!("{out_w}x{out_h}")));
    }
    let kernel = kernel.validate()?;
    let (w, h) = img.dims();
    if (w, h) == (out_w, out_h) {
        return Ok(img.clone());
    }
    let xt = compute_taps(w, out_w, kernel);
    let yt = compute_taps(h, out_h, kernel);
    let ch = img.channels();
    let mut out = Vec::with_capacity(out_w * out_h * ch);
    let mut tmp = vec![0.0; out_w * h];
    for c in 0..ch {
        let src = img.plane(c);
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            for (x, t) in xt.iter().enumerate() {
                tmp[y * out_w + x] = t
                    .indices
                    .iter()
                    .zip(&t.weights)
                    .map(|(&j, &wt)| wt * row[j])
                    .sum();
            }
        }
        for t in &yt {
            for x in 0..out_w {
                let v: f64 = t
                    .indices
                    .iter()
                    .zip(&t.weights)
                    .map(|(&j, &wt)| wt * tmp[j * out_w + x])
                    .sum();
                out.push(v);
            }
        }
    }
    Ok(ImageF::from_planar_clamped(out_w, out_h, ch, out))
}

/// Target dimensions for scaling by `factor`: `floor(dim * factor)`, at least 1.
pub fn scaled_dims(w: usize, h: usize, factor: f64) -> Result<(usize, usize)> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(Error::InvalidParameter(format!("scale factor {factor}")));
    }
    // Nudge so that exact products such as 0.5 * 128 do not floor to 63.
    let f = |d: usize| (((d as f64) * factor + 1e-9).floor() as usize).max(1);
    Ok((f(w), f(h)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lanczos3_weight_at_half() {
        let w = ResampleKernel::Lanczos(3).weight(0.5);
        assert!((w - 0.607_927_1).abs() < 1e-7, "{w}");
        assert_eq!(ResampleKernel::Lanczos(3).weight(0.0), 1.0);
        assert!(ResampleKernel::Lanczos(3).weight(2.0).abs() < 1e-15);
        assert_eq!(ResampleKernel::Lanczos(3).weight(3.0), 0.0);
    }

    #[test]
    fn bicubic_is_interpolating() {
        let k = ResampleKernel::Bicubic;
        assert_eq!(k.weight(0.0), 1.0);
        assert!(k.weight(1.0).abs() < 1e-15);
        assert!(k.weight(2.0).abs() < 1e-15);
    }

    #[test]
    fn kernel_parse_roundtrip() {
        for k in [
            ResampleKernel::Nearest,
            ResampleKernel::Bilinear,
            ResampleKernel::Bicubic,
            ResampleKernel::Lanczos(3),
            ResampleKernel::Lanczos(2),
        ] {
            assert_eq!(k.to_string().parse::<ResampleKernel>().unwrap(), k);
        }
        assert!("lanczos0".parse::<ResampleKernel>().is_err());
        assert!("box".parse::<ResampleKernel>().is_err());
    }

    #[test]
    fn identity_size_is_exact() {
        let img = ImageF::from_fn(7, 5, 3, |c, x, y| ((c * 31 + x * 7 + y * 13) % 17) as f64 / 16.0)
            .unwrap();
        for k in [
            ResampleKernel::Nearest,
            ResampleKernel::Bilinear,
            ResampleKernel::Bicubic,
            ResampleKernel::Lanczos(3),
        ] {
            assert_eq!(resample(&img, 7, 5, k).unwrap(), img);
        }
    }

    #[test]
    fn weights_are_normalized() {
        for (n_in, n_out) in [(16, 8), (7, 13), (5, 11), (128, 64), (3, 1)] {
            for t in compute_taps(n_in, n_out, ResampleKernel::Lanczos(3)) {
                assert!((t.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_target_rejected() {
        let img = ImageF::filled(4, 4, 1, 0.5).unwrap();
        assert!(matches!(
            resample(&img, 0, 4, ResampleKernel::Bilinear),
            Err(Error::InvalidDimensions(_))
        ));
    }

    #[test]
    fn scaled_dims_floor() {
        assert_eq!(scaled_dims(128, 128, 0.5).unwrap(), (64, 64));
        assert_eq!(scaled_dims(7, 5, 0.5).unwrap(), (3, 2));
        assert_eq!(scaled_dims(1, 1, 0.5).unwrap(), (1, 1));
        assert_eq!(scaled_dims(64, 32, 2.0).unwrap(), (128, 64));
        assert!(scaled_dims(4, 4, 0.0).is_err());
    }
}
