//! Baseline sequential JFIF encoder (8-bit, Annex K Huffman tables).

use super::dct::{self, ZIGZAG};
use super::huffman::{self, EncodeTable, HuffSpec};
use super::quant::quant_tables_for_quality;
use super::Subsampling;
use crate::error::{Error, Result};
use crate::imgcore::{quantize_sample, ImageF};

struct BitWriter {
    out: Vec<u8>,
    acc: u32,
    nbits: u32,
}

impl BitWriter {
    fn new(out: Vec<u8>) -> Self {
        Self {
            out,
            acc: 0,
            nbits: 0,
        }
    }

    fn put(&mut self, code: u16, len: u8) {
        debug_assert!(len <= 16);
        self.acc = (self.acc << len) | (u32::from(code) & ((1u32 << len) - 1));
        self.nbits += u32::from(len);
        while self.nbits >= 8 {
            let byte = (self.acc >> (self.nbits - 8)) as u8;
            self.out.push(byte);
            if byte == 0xFF {
                self.out.push(0x00);
            }
            self.nbits -= 8;
            self.acc &= (1 << self.nbits) - 1;
        }
    }

    /// Pads the final partial byte with 1-bits.
    fn finish(mut self) -> Vec<u8> {
        if self.nbits > 0 {
            let pad = 8 - self.nbits;
            self.put((1u16 << pad) - 1, pad as u8);
        }
        self.out
    }
}

/// One component plane padded to whole MCUs, stored as level-shifted samples.
struct Plane {
    width: usize,
    data: Vec<f64>,
}

impl Plane {
    fn block(&self, bx: usize, by: usize) -> dct::Block {
        let mut b = [0.0; 64];
        for y in 0..8 {
            let row = (by * 8 + y) * self.width + bx * 8;
            b[y * 8..y * 8 + 8].copy_from_slice(&self.data[row..row + 8]);
        }
        b
    }
}

/// Pads `src` (w x h) to `pw x ph` by replicating the last column and row.
fn pad_replicate(src: &[f64], w: usize, h: usize, pw: usize, ph: usize) -> Vec<f64> {
    let mut out = vec![0.0; pw * ph];
    for y in 0..ph {
        let sy = y.min(h - 1);
        for x in 0..pw {
            out[y * pw + x] = src[sy * w + x.min(w - 1)];
        }
    }
    out
}

/// 2x2 box downsampling with libjpeg's alternating rounding bias.
fn downsample_h2v2(src: &[u8], w: usize, h: usize) -> (Vec<u8>, usize, usize) {
    let (ow, oh) = (w.div_ceil(2), h.div_ceil(2));
    let at = |x: usize, y: usize| u32::from(src[y.min(h - 1) * w + x.min(w - 1)]);
    let mut out = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        let mut bias = 1u32;
        for x in 0..ow {
            let s = at(2 * x, 2 * y)
                + at(2 * x + 1, 2 * y)
                + at(2 * x, 2 * y + 1)
                + at(2 * x + 1, 2 * y + 1);
            out.push(((s + bias) >> 2) as u8);
            bias ^= 3;
        }
    }
    (out, ow, oh)
}

/// Converts an interleaved 8-bit RGB pixel to rounded JFIF YCbCr.
fn ycc(r: u8, g: u8, b: u8) -> [u8; 3] {
    let (r, g, b) = (f64::from(r), f64::from(g), f64::from(b));
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let cb = -0.168_735_891_647_856_4 * r - 0.331_264_108_352_143_6 * g + 0.5 * b + 128.0;
    let cr = 0.5 * r - 0.418_687_589_158_345_2 * g - 0.081_312_410_841_654_8 * b + 128.0;
    [y, cb, cr].map(|v| v.round().clamp(0.0, 255.0) as u8)
}

struct ComponentSpec {
    id: u8,
    h: u8,
    v: u8,
    table: usize,
}

/// Encodes `img` as a baseline JFIF stream at quality `quality`.
///
/// Gray images produce a single-component stream; `subsampling` only affects
/// three-channel input. Output is byte-deterministic.
pub fn jpeg_encode(img: &ImageF, quality: u32, subsampling: Subsampling) -> Result<Vec<u8>> {
    let tables = quant_tables_for_quality(quality)?;
    let (w, h) = img.dims();
    if w > 65535 || h > 65535 {
        return Err(Error::Encode(format!(
            "dimensions {w}x{h} exceed 65535"
        )));
    }
    let ch = img.channels();

    // 8-bit component samples at full resolution.
    let n = w * h;
    let comps_full: Vec<Vec<u8>> = if ch == 1 {
        vec![img.plane(0).iter().map(|&v| quantize_sample(v)).collect()]
    } else {
        let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
        let mut planes = vec![vec![0u8; n]; 3];
        for i in 0..n {
            let p = ycc(
                quantize_sample(r[i]),
                quantize_sample(g[i]),
                quantize_sample(b[i]),
            );
            for c in 0..3 {
                planes[c][i] = p[c];
            }
        }
        planes
    };

    let sub420 = ch == 3 && subsampling == Subsampling::S420;
    let specs: Vec<ComponentSpec> = if ch == 1 {
        vec![ComponentSpec {
            id: 1,
            h: 1,
            v: 1,
            table: 0,
        }]
    } else {
        let hv = if sub420 { 2 } else { 1 };
        vec![
            ComponentSpec {
                id: 1,
                h: hv,
                v: hv,
                table: 0,
            },
            ComponentSpec {
                id: 2,
                h: 1,
                v: 1,
                table: 1,
            },
            ComponentSpec {
                id: 3,
                h: 1,
                v: 1,
                table: 1,
            },
        ]
    };
    let hmax = specs.iter().map(|s| s.h as usize).max().unwrap_or(1);
    let vmax = specs.iter().map(|s| s.v as usize).max().unwrap_or(1);
    let mcux = w.div_ceil(8 * hmax);
    let mcuy = h.div_ceil(8 * vmax);

    let planes: Vec<Plane> = specs
        .iter()
        .zip(&comps_full)
        .map(|(s, full)| {
            let (data, cw, chh) = if (s.h as usize) < hmax || (s.v as usize) < vmax {
                downsample_h2v2(full, w, h)
            } else {
                (full.clone(), w, h)
            };
            let pw = mcux * s.h as usize * 8;
            let ph = mcuy * s.v as usize * 8;
            let shifted: Vec<f64> = data.iter().map(|&v| f64::from(v) - 128.0).collect();
            Plane {
                width: pw,
                data: pad_replicate(&shifted, cw, chh, pw, ph),
            }
        })
        .collect();

    let qt = [tables.luminance, tables.chrominance];
    let dc_specs = [huffman::std_dc_luminance(), huffman::std_dc_chrominance()];
    let ac_specs = [huffman::std_ac_luminance(), huffman::std_ac_chrominance()];
    let dc_enc: Vec<EncodeTable> = dc_specs.iter().map(EncodeTable::new).collect();
    let ac_enc: Vec<EncodeTable> = ac_specs.iter().map(EncodeTable::new).collect();
    let ntables = if ch == 1 { 1 } else { 2 };

    let mut out = Vec::with_capacity(n / 4 + 1024);
    out.extend_from_slice(&[0xFF, 0xD8]);
    // APP0 JFIF 1.01, no thumbnail, 1:1 aspect.
    out.extend_from_slice(&[
        0xFF, 0xE0, 0x00, 0x10, b'J', b'F', b'I', b'F', 0x00, 0x01, 0x01, 0x00, 0x00, 0x01, 0x00,
        0x01, 0x00, 0x00,
    ]);
    for (t, table) in qt.iter().enumerate().take(ntables) {
        out.extend_from_slice(&[0xFF, 0xDB, 0x00, 67, t as u8]);
        out.extend(ZIGZAG.iter().map(|&i| table[i] as u8));
    }
    let sof_len = 8 + 3 * specs.len();
    out.extend_from_slice(&[0xFF, 0xC0]);
    out.extend_from_slice(&(sof_len as u16).to_be_bytes());
    out.push(8);
    out.extend_from_slice(&(h as u16).to_be_bytes());
    out.extend_from_slice(&(w as u16).to_be_bytes());
    out.push(specs.len() as u8);
    for s in &specs {
        out.extend_from_slice(&[s.id, (s.h << 4) | s.v, s.table as u8]);
    }
    for t in 0..ntables {
        write_dht(&mut out, t as u8, &dc_specs[t]);
        write_dht(&mut out, 0x10 | t as u8, &ac_specs[t]);
    }
    let sos_len = 6 + 2 * specs.len();
    out.extend_from_slice(&[0xFF, 0xDA]);
    out.extend_from_slice(&(sos_len as u16).to_be_bytes());
    out.push(specs.len() as u8);
    for s in &specs {
        out.extend_from_slice(&[s.id, ((s.table as u8) << 4) | s.table as u8]);
    }
    out.extend_from_slice(&[0x00, 0x3F, 0x00]);

    let mut bw = BitWriter::new(out);
    let mut pred = vec![0i32; specs.len()];
    for my in 0..mcuy {
        for mx in 0..mcux {
            for (ci, s) in specs.iter().enumerate() {
                for by in 0..s.v as usize {
                    for bx in 0..s.h as usize {
                        let block = planes[ci]
                            .block(mx * s.h as usize + bx, my * s.v as usize + by);
                        let coeffs = dct::forward(&block);
                        let q = &qt[s.table];
                        let mut zz = [0i32; 64];
                        for (k, &nat) in ZIGZAG.iter().enumerate() {
                            zz[k] = (coeffs[nat] / f64::from(q[nat])).round() as i32;
                        }
                        encode_block(
                            &mut bw,
                            &zz,
                            &mut pred[ci],
                            &dc_enc[s.table],
                            &ac_enc[s.table],
                        );
                    }
                }
            }
        }
    }
    let mut out = bw.finish();
    out.extend_from_slice(&[0xFF, 0xD9]);
    Ok(out)
}

fn write_dht(out: &mut Vec<u8>, class_id: u8, spec: &HuffSpec) {
    let len = 2 + 1 + 16 + spec.vals.len();
    out.extend_from_slice(&[0xFF, 0xC4]);
    out.extend_from_slice(&(len as u16).to_be_bytes());
    out.push(class_id);
    out.extend_from_slice(&spec.bits);
    out.extend_from_slice(&spec.vals);
}

/// Magnitude category and the low-order bits that encode `v` within it.
#[inline]
fn category(v: i32) -> (u8, u16) {
    let mag = v.unsigned_abs();
    let cat = (32 - mag.leading_zeros()) as u8;
    let bits = if v < 0 { v - 1 } else { v };
    (cat, (bits as u32 & ((1u32 << cat) - 1)) as u16)
}

fn encode_block(
    bw: &mut BitWriter,
    zz: &[i32; 64],
    pred: &mut i32,
    dc: &EncodeTable,
    ac: &EncodeTable,
) {
    let diff = zz[0] - *pred;
    *pred = zz[0];
    let (cat, bits) = category(diff);
    let (code, len) = dc.code(cat);
    bw.put(code, len);
    if cat > 0 {
        bw.put(bits, cat);
    }
    let mut run = 0u8;
    for &v in &zz[1..] {
        if v == 0 {
            run += 1;
            continue;
        }
        while run >= 16 {
            let (code, len) = ac.code(0xF0);
            bw.put(code, len);
            run -= 16;
        }
        let (cat, bits) = category(v);
        let (code, len) = ac.code((run << 4) | cat);
        bw.put(code, len);
        bw.put(bits, cat);
        run = 0;
    }
    if run > 0 {
        let (code, len) = ac.code(0x00);
        bw.put(code, len);
    }
}
