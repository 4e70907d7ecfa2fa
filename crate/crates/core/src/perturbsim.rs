//! Synthetic l∞-bounded perturbations standing in for protective noise.
//!
//! `x̂ = clamp(x + η)` with `|η| <= ε` per sample. Structured kinds
//! (checkerboard, sinusoid) ignore the seed.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::ImageF;
use crate::metrics::{attenuation_ratio, perturbation_stats, transform_at_reference, PerturbationStats};
use crate::transforms::chain::{parse_ratio, split_args};
use crate::transforms::{ResampleKernel, TransformChain};

pub const MAX_EPSILON: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Varies along x (vertical stripes).
    H,
    /// Varies along y.
    V,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PerturbKind {
    /// Independent uniform samples in `[-ε, ε]`.
    Uniform,
    /// Independent `±ε` with equal probability.
    Sign,
    /// `±ε` squares of side `period / 2`; period 2 is the Nyquist pattern.
    Checkerboard { period: u32 },
    Sinusoid { period: u32, orientation: Orientation },
}

impl fmt::Display for PerturbKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PerturbKind::Uniform => f.write_str("uniform"),
            PerturbKind::Sign => f.write_str("sign"),
            PerturbKind::Checkerboard { period } => write!(f, "checkerboard:p={period}"),
            PerturbKind::Sinusoid { period, orientation } => {
                let o = match orientation {
                    Orientation::H => "h",
                    Orientation::V => "v",
                };
                write!(f, "sinusoid:p={period},o={o}")
            }
        }
    }
}

impl FromStr for PerturbKind {
    type Err = Error;

    /// `uniform`, `sign`, `checkerboard[:p=2]`, `sinusoid[:p=64,o=h|v]`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = split_args(s)?;
        let mut period = None;
        let mut orientation = Orientation::H;
        for (k, v) in &args {
            match *k {
                "p" | "period" => {
                    period = Some(
                        v.parse::<u32>()
                            .map_err(|_| Error::InvalidParameter(format!("period {v:?}")))?,
                    )
                }
                "o" | "orientation" => {
                    orientation = match *v {
                        "h" => Orientation::H,
                        "v" => Orientation::V,
                        _ => return Err(Error::InvalidParameter(format!("orientation {v:?}"))),
                    }
                }
                _ => return Err(Error::InvalidParameter(format!("{name}: unknown key {k:?}"))),
            }
        }
        let kind = match name {
            "uniform" | "sign" if !args.is_empty() => {
                return Err(Error::InvalidParameter(format!("{name} takes no options")))
            }
            "uniform" => PerturbKind::Uniform,
            "sign" => PerturbKind::Sign,
            "checkerboard" => PerturbKind::Checkerboard {
                period: period.unwrap_or(2),
            },
            "sinusoid" => PerturbKind::Sinusoid {
                period: period.unwrap_or(64),
                orientation,
            },
            _ => return Err(Error::InvalidParameter(format!("unknown perturbation {name:?}"))),
        };
        kind.validate()?;
        Ok(kind)
    }
}

impl TryFrom<String> for PerturbKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PerturbKind> for String {
    fn from(k: PerturbKind) -> String {
        k.to_string()
    }
}

impl PerturbKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PerturbKind::Checkerboard { period } | PerturbKind::Sinusoid { period, .. } if period < 2 => {
                Err(Error::InvalidParameter(format!("period {period} must be >= 2")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec {
    pub kind: PerturbKind,
    #[serde(deserialize_with = "de_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Accepts a number or a string such as `"8/255"`.
fn de_epsilon<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Eps {
        Num(f64),
        Text(String),
    }
    let e = match Eps::deserialize(d)? {
        Eps::Num(v) => v,
        Eps::Text(s) => parse_ratio(&s).map_err(serde::de::Error::custom)?,
    };
    check_epsilon(e).map_err(serde::de::Error::custom)?;
    Ok(e)
}

/// Parses `0.03` or `8/255` and checks the `(0, 0.25]` budget.
pub fn parse_epsilon(s: &str) -> Result<f64> {
    let e = parse_ratio(s)?;
    check_epsilon(e)?;
    Ok(e)
}

fn check_epsilon(e: f64) -> Result<()> {
    if e > 0.0 && e <= MAX_EPSILON {
        Ok(())
    } else {
        Err(Error::EpsilonOutOfRange(e))
    }
}

impl PerturbSpec {
    pub fn new(kind: PerturbKind, epsilon: f64, seed: u64) -> Result<Self> {
        let s = Self { kind, epsilon, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        check_epsilon(self.epsilon)?;
        self.kind.validate()
    }
}

/// The raw (pre-clamp) perturbation, planar like [`ImageF`].
pub fn noise(width: usize, height: usize, channels: usize, spec: &PerturbSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let eps = spec.epsilon;
    let n = width * height * channels;
    let out = match spec.kind {
        PerturbKind::Uniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            (0..n).map(|_| rng.random_range(-eps..=eps)).collect()
        }
        PerturbKind::Sign => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            (0..n).map(|_| if rng.random::<bool>() { eps } else { -eps }).collect()
        }
        PerturbKind::Checkerboard { period } => {
            let p = period as usize;
            (0..n)
                .map(|i| {
                    let (x, y) = (i % width, (i / width) % height);
                    if ((2 * x) / p + (2 * y) / p).is_multiple_of(2) {
                        eps
                    } else {
                        -eps
                    }
                })
                .collect()
        }
        PerturbKind::Sinusoid { period, orientation } => {
            let p = f64::from(period);
            (0..n)
                .map(|i| {
                    let t = match orientation {
                        Orientation::H => i % width,
                        Orientation::V => (i / width) % height,
                    };
                    eps * (2.0 * PI * t as f64 / p).sin()
                })
                .collect()
        }
    };
    Ok(out)
}

/// `clamp(x + η)`; bit-identical for identical `(x, spec)`.
pub fn generate(x: &ImageF, spec: &PerturbSpec) -> Result<ImageF> {
    let eta = noise(x.width(), x.height(), x.channels(), spec)?;
    let data = x.data().iter().zip(&eta).map(|(a, e)| a + e).collect();
    Ok(ImageF::from_planar_clamped(x.width(), x.height(), x.channels(), data))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualRow {
    pub chain: String,
    pub attenuation_ratio: f64,
    /// Largest surviving difference `|T(x̂) - T(x)|` at input resolution.
    pub linf_after: f64,
}

fn residual_row(x: &ImageF, xhat: &ImageF, chain: &TransformChain) -> Result<ResidualRow> {
    let k = ResampleKernel::default();
    let ratio = attenuation_ratio(x, xhat, chain, k)?;
    let tx = transform_at_reference(x, chain, k)?;
    let txhat = transform_at_reference(xhat, chain, k)?;
    Ok(ResidualRow {
        chain: chain.to_string(),
        attenuation_ratio: ratio,
        linf_after: perturbation_stats(&tx, &txhat)?.linf,
    })
}

/// One row per chain, preceded by the identity chain as a sanity row.
pub fn residual_report(x: &ImageF, xhat: &ImageF, chains: &[TransformChain]) -> Result<Vec<ResidualRow>> {
    x.ensure_same_shape(xhat)?;
    let identity = TransformChain::identity();
    std::iter::once(&identity)
        .chain(chains.iter().filter(|c| !c.is_identity()))
        .map(|c| residual_row(x, xhat, c))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub stats: PerturbationStats,
    pub attenuation_ratio: f64,
    pub linf_after: f64,
}

/// Generates `kind` at each ε (same seed) and measures it under `chain`.
pub fn sweep_epsilon(
    x: &ImageF,
    kind: PerturbKind,
    epsilons: &[f64],
    chain: &TransformChain,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if epsilons.is_empty() {
        return Err(Error::InvalidParameter("empty epsilon list".into()));
    }
    epsilons
        .iter()
        .map(|&epsilon| {
            let xhat = generate(x, &PerturbSpec::new(kind, epsilon, seed)?)?;
            let row = residual_row(x, &xhat, chain)?;
            Ok(SweepRow {
                epsilon,
                stats: perturbation_stats(x, &xhat)?,
                attenuation_ratio: row.attenuation_ratio,
                linf_after: row.linf_after,
            })
        })
        .collect()
}
