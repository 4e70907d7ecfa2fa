//! Ordered transformation chains: `jpeg:q=75`, `resize:f=0.5,k=lanczos3`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::jpeg::{jpeg_roundtrip, Subsampling};
use super::resample::{resample, scaled_dims, ResampleKernel};
use crate::error::{Error, Result};
use crate::imgcore::ImageF;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TransformStep {
    /// Encode then decode at the given quality.
    Jpeg {
        quality: u32,
        subsampling: Subsampling,
    },
    /// Resize each axis to `floor(dim * factor)`.
    Resize {
        factor: f64,
        kernel: ResampleKernel,
    },
}

impl TransformStep {
    pub fn jpeg(quality: u32) -> Self {
        TransformStep::Jpeg {
            quality,
            subsampling: Subsampling::default(),
        }
    }

    pub fn resize(factor: f64, kernel: ResampleKernel) -> Self {
        TransformStep::Resize { factor, kernel }
    }

    pub fn apply(&self, img: &ImageF) -> Result<ImageF> {
        match *self {
            TransformStep::Jpeg {
                quality,
                subsampling,
            } => jpeg_roundtrip(img, quality, subsampling),
            TransformStep::Resize { factor, kernel } => {
                let (w, h) = scaled_dims(img.width(), img.height(), factor)?;
                resample(img, w, h, kernel)
            }
        }
    }

    pub fn changes_resolution(&self) -> bool {
        matches!(self, TransformStep::Resize { factor, .. } if *factor != 1.0)
    }

    pub fn validate(self) -> Result<Self> {
        match self {
            TransformStep::Jpeg { quality, .. } if !(1..=100).contains(&quality) => {
                Err(Error::QualityOutOfRange(quality))
            }
            TransformStep::Resize { factor, .. } if !(factor.is_finite() && factor > 0.0) => {
                Err(Error::InvalidParameter(format!("resize factor {factor}")))
            }
            TransformStep::Resize { kernel, .. } => kernel.validate().map(|_| self),
            _ => Ok(self),
        }
    }
}

/// Parses `0.5` or `1/2`.
pub fn parse_ratio(s: &str) -> Result<f64> {
    let bad = || Error::InvalidParameter(format!("not a number: {s:?}"));
    let v = match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|_| bad())?;
            let d: f64 = d.trim().parse().map_err(|_| bad())?;
            n / d
        }
        None => s.trim().parse().map_err(|_| bad())?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}

/// Splits `name:k=v,k=v` into the name and its key/value pairs.
pub(crate) fn split_args(s: &str) -> Result<(&str, Vec<(&str, &str)>)> {
    let (name, rest) = s.split_once(':').unwrap_or((s, ""));
    let mut args = Vec::new();
    for kv in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("expected key=value in {s:?}")))?;
        args.push((k.trim(), v.trim()));
    }
    Ok((name.trim(), args))
}

impl FromStr for TransformStep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = split_args(s)?;
        let step = match name {
            "jpeg" => {
                let mut quality = 75;
                let mut subsampling = Subsampling::default();
                for (k, v) in args {
                    match k {
                        "q" => {
                            quality = v.parse().map_err(|_| {
                                Error::InvalidParameter(format!("jpeg quality {v:?}"))
                            })?
                        }
                        "s" | "sub" => subsampling = v.parse()?,
                        _ => return Err(Error::InvalidParameter(format!("jpeg: unknown key {k:?}"))),
                    }
                }
                TransformStep::Jpeg {
                    quality,
                    subsampling,
                }
            }
            "resize" => {
                let mut factor = 0.5;
                let mut kernel = ResampleKernel::default();
                for (k, v) in args {
                    match k {
                        "f" => factor = parse_ratio(v)?,
                        "k" => kernel = v.parse()?,
                        _ => {
                            return Err(Error::InvalidParameter(format!(
                                "resize: unknown key {k:?}"
                            )))
                        }
                    }
                }
                TransformStep::Resize { factor, kernel }
            }
            _ => return Err(Error::InvalidParameter(format!("unknown step {name:?}"))),
        };
        step.validate()
    }
}

impl fmt::Display for TransformStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransformStep::Jpeg {
                quality,
                subsampling,
            } => {
                write!(f, "jpeg:q={quality}")?;
                if *subsampling != Subsampling::default() {
                    write!(f, ",s={}", subsampling)?;
                }
                Ok(())
            }
            TransformStep::Resize { factor, kernel } => write!(f, "resize:f={factor},k={kernel}"),
        }
    }
}

impl TryFrom<String> for TransformStep {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TransformStep> for String {
    fn from(s: TransformStep) -> String {
        s.to_string()
    }
}

/// Steps applied strictly in list order. An empty chain is the identity.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TransformChain {
    pub steps: Vec<TransformStep>,
}

impl TransformChain {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn new(steps: Vec<TransformStep>) -> Self {
        Self { steps }
    }

    /// JPEG at `quality` followed by a resize.
    pub fn compress_and_resize(quality: u32, factor: f64, kernel: ResampleKernel) -> Self {
        Self::new(vec![
            TransformStep::jpeg(quality),
            TransformStep::resize(factor, kernel),
        ])
    }

    pub fn is_identity(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn changes_resolution(&self) -> bool {
        self.steps.iter().any(TransformStep::changes_resolution)
    }

    pub fn apply(&self, img: &ImageF) -> Result<ImageF> {
        let mut cur = img.clone();
        for step in &self.steps {
            cur = step.apply(&cur)?;
        }
        Ok(cur)
    }
}

pub fn apply_chain(img: &ImageF, chain: &TransformChain) -> Result<ImageF> {
    chain.apply(img)
}

impl fmt::Display for TransformChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.steps.is_empty() {
            return f.write_str("identity");
        }
        for (i, s) in self.steps.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

impl FromStr for TransformChain {
    type Err = Error;

    /// Steps separated by `;` (or `|`); `identity` or an empty string is the empty chain.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "identity" || s == "none" {
            return Ok(Self::identity());
        }
        let steps = s
            .split([';', '|'])
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { steps })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_step_syntax() {
        assert_eq!(
            "jpeg:q=75".parse::<TransformStep>().unwrap(),
            TransformStep::jpeg(75)
        );
        assert_eq!(
            "resize:f=0.5,k=lanczos3".parse::<TransformStep>().unwrap(),
            TransformStep::resize(0.5, ResampleKernel::Lanczos(3))
        );
        assert_eq!(
            "resize:f=1/2".parse::<TransformStep>().unwrap(),
            TransformStep::resize(0.5, ResampleKernel::Lanczos(3))
        );
        assert!("jpeg:q=0".parse::<TransformStep>().is_err());
        assert!("jpeg:q=101".parse::<TransformStep>().is_err());
        assert!("resize:f=-1".parse::<TransformStep>().is_err());
        assert!("blur:r=2".parse::<TransformStep>().is_err());
    }

    #[test]
    fn chain_display_roundtrip() {
        let c = TransformChain::compress_and_resize(75, 0.5, ResampleKernel::Lanczos(3));
        assert_eq!(c.to_string(), "jpeg:q=75;resize:f=0.5,k=lanczos3");
        assert_eq!(c.to_string().parse::<TransformChain>().unwrap(), c);
        assert!("identity".parse::<TransformChain>().unwrap().is_identity());
    }

    #[test]
    fn empty_chain_is_identity() {
        let img = ImageF::from_fn(5, 4, 3, |c, x, y| (c + x + y) as f64 / 10.0).unwrap();
        assert_eq!(apply_chain(&img, &TransformChain::identity()).unwrap(), img);
    }

    #[test]
    fn serde_as_strings() {
        let c = TransformChain::compress_and_resize(75, 0.5, ResampleKernel::Lanczos(3));
        let j = serde_json::to_string(&c).unwrap();
        assert_eq!(j, r#"["jpeg:q=75","resize:f=0.5,k=lanczos3"]"#);
        let back: TransformChain = serde_json::from_str(&j).unwrap();
        assert_eq!(back, c);
    }
}
