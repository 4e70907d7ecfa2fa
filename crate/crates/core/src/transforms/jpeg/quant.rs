//! Quality-factor scaling of the Annex K quantization tables.

use crate::error::{Error, Result};

/// Annex K.1 luminance table, natural (row-major) order.
pub const BASE_LUMINANCE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Annex K.2 chrominance table, natural order.
pub const BASE_CHROMINANCE: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, //
    18, 21, 26, 66, 99, 99, 99, 99, //
    24, 26, 56, 99, 99, 99, 99, 99, //
    47, 66, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99,
];

/// Luminance and chrominance quantizers in natural order, every entry in `1..=255`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantTables {
    pub luminance: [u16; 64],
    pub chrominance: [u16; 64],
}

impl QuantTables {
    /// Entry at `(row, col)` of the luminance table.
    pub fn luma(&self, row: usize, col: usize) -> u16 {
        self.luminance[row * 8 + col]
    }

    pub fn chroma(&self, row: usize, col: usize) -> u16 {
        self.chrominance[row * 8 + col]
    }
}

/// IJG percentage scale for a quality factor.
pub fn quality_scale(q: u32) -> Result<u32> {
    if !(1..=100).contains(&q) {
        return Err(Error::QualityOutOfRange(q));
    }
    Ok(if q < 50 { 5000 / q } else { 200 - 2 * q })
}

fn scale_table(base: &[u16; 64], scale: u32) -> [u16; 64] {
    let mut out = [0u16; 64];
    for (o, &b) in out.iter_mut().zip(base) {
        let v = (u32::from(b) * scale + 50) / 100;
        *o = v.clamp(1, 255) as u16;
    }
    out
}

/// Tables for quality `q` using the libjpeg scaling rule (baseline-limited to 255).
pub fn quant_tables_for_quality(q: u32) -> Result<QuantTables> {
    let scale = quality_scale(q)?;
    Ok(QuantTables {
        luminance: scale_table(&BASE_LUMINANCE, scale),
        chrominance: scale_table(&BASE_CHROMINANCE, scale),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q50_is_identity() {
        let t = quant_tables_for_quality(50).unwrap();
        assert_eq!(t.luminance, BASE_LUMINANCE);
        assert_eq!(t.chrominance, BASE_CHROMINANCE);
    }

    #[test]
    fn q75_and_q1_corners() {
        assert_eq!(quant_tables_for_quality(75).unwrap().luma(0, 0), 8);
        assert_eq!(quant_tables_for_quality(1).unwrap().luma(0, 0), 255);
        assert!(quant_tables_for_quality(100)
            .unwrap()
            .luminance
            .iter()
            .all(|&v| v == 1));
    }

    #[test]
    fn out_of_range() {
        assert!(matches!(
            quant_tables_for_quality(0),
            Err(Error::QualityOutOfRange(0))
        ));
        assert!(quant_tables_for_quality(101).is_err());
    }

    #[test]
    fn monotone_in_quality() {
        let all: Vec<_> = (1..=100)
            .map(|q| quant_tables_for_quality(q).unwrap())
            .collect();
        for w in all.windows(2) {
            for i in 0..64 {
                assert!(w[0].luminance[i] >= w[1].luminance[i]);
                assert!(w[0].chrominance[i] >= w[1].chrominance[i]);
            }
        }
    }
}
