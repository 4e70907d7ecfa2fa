//! Baseline JPEG codec with IJG quality scaling.

mod dct;
mod decoder;
mod encoder;
mod huffman;
mod quant;

pub use decoder::jpeg_decode;
pub use encoder::jpeg_encode;
pub use quant::{
    quality_scale, quant_tables_for_quality, QuantTables, BASE_CHROMINANCE, BASE_LUMINANCE,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::ImageF;

/// Chroma subsampling used by the encoder for three-channel input.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subsampling {
    #[serde(rename = "4:4:4")]
    S444,
    #[default]
    #[serde(rename = "4:2:0")]
    S420,
}

impl fmt::Display for Subsampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subsampling::S444 => "4:4:4",
            Subsampling::S420 => "4:2:0",
        })
    }
}

impl FromStr for Subsampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "444" | "4:4:4" => Ok(Subsampling::S444),
            "420" | "4:2:0" => Ok(Subsampling::S420),
            _ => Err(Error::InvalidParameter(format!("subsampling {s:?}"))),
        }
    }
}

/// Encode at `quality` then decode; the "JPEG" transformation.
pub fn jpeg_roundtrip(img: &ImageF, quality: u32, subsampling: Subsampling) -> Result<ImageF> {
    jpeg_decode(&jpeg_encode(img, quality, subsampling)?)
}
