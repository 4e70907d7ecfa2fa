//! Baseline / extended-sequential Huffman JPEG decoder.
//!
//! Reconstruction follows libjpeg's default path: the integer "islow" IDCT,
//! triangle ("fancy") chroma upsampling for 2x horizontal and 2x2
//! subsampling, replication for other factors, and rounded JFIF color
//! conversion.

use super::dct::{self, ZIGZAG};
use super::huffman::DecodeTable;
use crate::error::{Error, Result};
use crate::imgcore::ImageF;

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedStream(msg.into())
}

#[derive(Clone, Debug)]
struct Component {
    id: u8,
    h: usize,
    v: usize,
    tq: usize,
    /// Block grid covering whole MCUs.
    blocks_w: usize,
    blocks_h: usize,
    coeffs: Vec<[i32; 64]>,
}

#[derive(Default)]
struct Frame {
    width: usize,
    height: usize,
    components: Vec<Component>,
    hmax: usize,
    vmax: usize,
    mcux: usize,
    mcuy: usize,
}

struct Decoder<'a> {
    data: &'a [u8],
    pos: usize,
    qt: [Option<[u16; 64]>; 4],
    dc: [Option<DecodeTable>; 4],
    ac: [Option<DecodeTable>; 4],
    restart_interval: usize,
    frame: Option<Frame>,
    scans: usize,
}

impl<'a> Decoder<'a> {
    fn u8(&mut self) -> Result<u8> {
        let b = *self
            .data
            .get(self.pos)
            .ok_or_else(|| malformed("unexpected end of stream"))?;
        self.pos += 1;
        Ok(b)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes([self.u8()?, self.u8()?]))
    }

    /// Reads a marker segment payload (after the length field).
    fn segment(&mut self) -> Result<&'a [u8]> {
        let len = self.u16()? as usize;
        if len < 2 || self.pos + len - 2 > self.data.len() {
            return Err(malformed("segment length exceeds stream"));
        }
        let s = &self.data[self.pos..self.pos + len - 2];
        self.pos += len - 2;
        Ok(s)
    }

    fn next_marker(&mut self) -> Result<u8> {
        // Skip fill bytes and any stray data between segments.
        loop {
            let b = self.u8()?;
            if b != 0xFF {
                continue;
            }
            let mut m = self.u8()?;
            while m == 0xFF {
                m = self.u8()?;
            }
            if m != 0x00 {
                return Ok(m);
            }
        }
    }

    fn parse_dqt(&mut self, seg: &[u8]) -> Result<()> {
        let mut i = 0;
        while i < seg.len() {
            let pq = seg[i] >> 4;
            let tq = (seg[i] & 0x0F) as usize;
            i += 1;
            if tq > 3 {
                return Err(malformed("quantization table id > 3"));
            }
            let size = if pq == 0 { 64 } else { 128 };
            if i + size > seg.len() {
                return Err(malformed("short DQT segment"));
            }
            let mut table = [0u16; 64];
            for k in 0..64 {
                let v = if pq == 0 {
                    u16::from(seg[i + k])
                } else {
                    u16::from_be_bytes([seg[i + 2 * k], seg[i + 2 * k + 1]])
                };
                table[ZIGZAG[k]] = v;
            }
            i += size;
            self.qt[tq] = Some(table);
        }
        Ok(())
    }

    fn parse_dht(&mut self, seg: &[u8]) -> Result<()> {
        let mut i = 0;
        while i < seg.len() {
            if i + 17 > seg.len() {
                return Err(malformed("short DHT segment"));
            }
            let tc = seg[i] >> 4;
            let th = (seg[i] & 0x0F) as usize;
            if tc > 1 || th > 3 {
                return Err(malformed("bad Huffman table class/id"));
            }
            let mut bits = [0u8; 16];
            bits.copy_from_slice(&seg[i + 1..i + 17]);
            let total: usize = bits.iter().map(|&b| b as usize).sum();
            i += 17;
            if i + total > seg.len() {
                return Err(malformed("short DHT segment"));
            }
            let table = DecodeTable::new(&bits, seg[i..i + total].to_vec())?;
            i += total;
            if tc == 0 {
                self.dc[th] = Some(table);
            } else {
                self.ac[th] = Some(table);
            }
        }
        Ok(())
    }

    fn parse_sof(&mut self, seg: &[u8]) -> Result<()> {
        if self.frame.is_some() {
            return Err(malformed("multiple frames"));
        }
        if seg.len() < 6 {
            return Err(malformed("short SOF segment"));
        }
        if seg[0] != 8 {
            return Err(Error::UnsupportedJpegFeature(format!(
                "{}-bit precision",
                seg[0]
            )));
        }
        let height = u16::from_be_bytes([seg[1], seg[2]]) as usize;
        let width = u16::from_be_bytes([seg[3], seg[4]]) as usize;
        let nc = seg[5] as usize;
        if width == 0 || height == 0 {
            return Err(Error::UnsupportedJpegFeature(
                "zero or deferred (DNL) dimensions".into(),
            ));
        }
        if nc != 1 && nc != 3 {
            return Err(Error::UnsupportedJpegFeature(format!("{nc} components")));
        }
        if seg.len() < 6 + 3 * nc {
            return Err(malformed("short SOF segment"));
        }
        let mut comps = Vec::with_capacity(nc);
        for k in 0..nc {
            let c = &seg[6 + 3 * k..9 + 3 * k];
            let (h, v) = ((c[1] >> 4) as usize, (c[1] & 0x0F) as usize);
            if !(1..=4).contains(&h) || !(1..=4).contains(&v) || c[2] > 3 {
                return Err(malformed("bad component sampling/table"));
            }
            comps.push(Component {
                id: c[0],
                h,
                v,
                tq: c[2] as usize,
                blocks_w: 0,
                blocks_h: 0,
                coeffs: Vec::new(),
            });
        }
        let hmax = comps.iter().map(|c| c.h).max().unwrap_or(1);
        let vmax = comps.iter().map(|c| c.v).max().unwrap_or(1);
        let mcux = width.div_ceil(8 * hmax);
        let mcuy = height.div_ceil(8 * vmax);
        for c in &mut comps {
            c.blocks_w = mcux * c.h;
            c.blocks_h = mcuy * c.v;
            c.coeffs = vec![[0; 64]; c.blocks_w * c.blocks_h];
        }
        self.frame = Some(Frame {
            width,
            height,
            components: comps,
            hmax,
            vmax,
            mcux,
            mcuy,
        });
        Ok(())
    }

    fn parse_sos(&mut self, seg: &[u8]) -> Result<()> {
        let frame = self
            .frame
            .as_mut()
            .ok_or_else(|| malformed("SOS before SOF"))?;
        let ns = *seg.first().ok_or_else(|| malformed("empty SOS"))? as usize;
        if ns == 0 || ns > 4 || seg.len() < 1 + 2 * ns + 3 {
            return Err(malformed("bad SOS header"));
        }
        let mut scomps = Vec::with_capacity(ns);
        for k in 0..ns {
            let id = seg[1 + 2 * k];
            let t = seg[2 + 2 * k];
            let ci = frame
                .components
                .iter()
                .position(|c| c.id == id)
                .ok_or_else(|| malformed("scan references unknown component"))?;
            let (td, ta) = ((t >> 4) as usize, (t & 0x0F) as usize);
            if td > 3 || ta > 3 {
                return Err(malformed("bad scan table ids"));
            }
            scomps.push((ci, td, ta));
        }
        let ss = seg[1 + 2 * ns];
        let se = seg[2 + 2 * ns];
        let ahal = seg[3 + 2 * ns];
        if ss != 0 || se != 63 || ahal != 0 {
            return Err(Error::UnsupportedJpegFeature(
                "spectral selection / successive approximation".into(),
            ));
        }
        let mut dc = Vec::with_capacity(ns);
        let mut ac = Vec::with_capacity(ns);
        for &(_, td, ta) in &scomps {
            dc.push(
                self.dc[td]
                    .clone()
                    .ok_or_else(|| malformed("missing DC Huffman table"))?,
            );
            ac.push(
                self.ac[ta]
                    .clone()
                    .ok_or_else(|| malformed("missing AC Huffman table"))?,
            );
        }

        let mut bits = BitReader {
            data: self.data,
            pos: self.pos,
            acc: 0,
            nbits: 0,
        };
        let mut pred = vec![0i32; ns];
        // Units in this scan: MCUs if interleaved, single blocks otherwise.
        let (units_w, units_h) = if ns == 1 {
            let c = &frame.components[scomps[0].0];
            let cw = (frame.width * c.h).div_ceil(frame.hmax);
            let ch = (frame.height * c.v).div_ceil(frame.vmax);
            (cw.div_ceil(8), ch.div_ceil(8))
        } else {
            (frame.mcux, frame.mcuy)
        };
        let total = units_w * units_h;
        for unit in 0..total {
            if self.restart_interval > 0 && unit > 0 && unit % self.restart_interval == 0 {
                bits.restart()?;
                pred.iter_mut().for_each(|p| *p = 0);
            }
            let (ux, uy) = (unit % units_w, unit / units_w);
            for (k, &(ci, _, _)) in scomps.iter().enumerate() {
                let comp = &mut frame.components[ci];
                let (nh, nv) = if ns == 1 { (1, 1) } else { (comp.h, comp.v) };
                for by in 0..nv {
                    for bx in 0..nh {
                        let (gx, gy) = (ux * nh + bx, uy * nv + by);
                        let idx = gy * comp.blocks_w + gx;
                        decode_block(
                            &mut bits,
                            &dc[k],
                            &ac[k],
                            &mut pred[k],
                            &mut comp.coeffs[idx],
                        )?;
                    }
                }
            }
        }
        self.pos = bits.pos;
        self.scans += 1;
        Ok(())
    }
}

struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
    acc: u32,
    nbits: u32,
}

impl BitReader<'_> {
    fn fill_byte(&mut self) -> Result<()> {
        let b = *self
            .data
            .get(self.pos)
            .ok_or_else(|| malformed("truncated entropy-coded data"))?;
        if b == 0xFF {
            match self.data.get(self.pos + 1) {
                Some(0x00) => self.pos += 2,
                Some(_) => return Err(malformed("marker inside entropy-coded data")),
                None => return Err(malformed("truncated entropy-coded data")),
            }
        } else {
            self.pos += 1;
        }
        self.acc = (self.acc << 8) | u32::from(b);
        self.nbits += 8;
        Ok(())
    }

    #[inline]
    fn bit(&mut self) -> Result<u32> {
        if self.nbits == 0 {
            self.fill_byte()?;
        }
        self.nbits -= 1;
        Ok((self.acc >> self.nbits) & 1)
    }

    fn bits(&mut self, n: u8) -> Result<u32> {
        let mut v = 0;
        for _ in 0..n {
            v = (v << 1) | self.bit()?;
        }
        Ok(v)
    }

    /// Discards the partial byte and consumes the expected RSTn marker.
    fn restart(&mut self) -> Result<()> {
        self.nbits = 0;
        self.acc = 0;
        while self.data.get(self.pos) == Some(&0xFF) && self.data.get(self.pos + 1) == Some(&0xFF)
        {
            self.pos += 1;
        }
        match (self.data.get(self.pos), self.data.get(self.pos + 1)) {
            (Some(0xFF), Some(m)) if (0xD0..=0xD7).contains(m) => {
                self.pos += 2;
                Ok(())
            }
            (None, _) | (Some(_), None) => Err(malformed("truncated before restart marker")),
            _ => Err(malformed("missing restart marker")),
        }
    }
}

#[inline]
fn extend(v: u32, cat: u8) -> i32 {
    if cat == 0 {
        return 0;
    }
    let v = v as i32;
    if v < (1 << (cat - 1)) {
        v - (1 << cat) + 1
    } else {
        v
    }
}

fn decode_block(
    bits: &mut BitReader<'_>,
    dc: &DecodeTable,
    ac: &DecodeTable,
    pred: &mut i32,
    out: &mut [i32; 64],
) -> Result<()> {
    let cat = dc.decode(|| bits.bit())?;
    if cat > 11 {
        return Err(malformed("DC category out of range"));
    }
    let diff = extend(bits.bits(cat)?, cat);
    *pred += diff;
    out[0] = *pred;
    let mut k = 1;
    while k < 64 {
        let rs = ac.decode(|| bits.bit())?;
        let (run, size) = ((rs >> 4) as usize, rs & 0x0F);
        if size == 0 {
            if run == 15 {
                k += 16;
                continue;
            }
            break;
        }
        k += run;
        if k > 63 {
            return Err(malformed("AC run past end of block"));
        }
        out[ZIGZAG[k]] = extend(bits.bits(size)?, size);
        k += 1;
    }
    if k > 64 {
        return Err(malformed("AC run past end of block"));
    }
    Ok(())
}

/// Reconstructs one component plane (`blocks_w*8` x `blocks_h*8`) as 8-bit samples.
fn reconstruct(comp: &Component, qt: &[u16; 64]) -> Vec<u8> {
    let pw = comp.blocks_w * 8;
    let mut out = vec![0u8; pw * comp.blocks_h * 8];
    for by in 0..comp.blocks_h {
        for bx in 0..comp.blocks_w {
            let px = dct::inverse_islow(&comp.coeffs[by * comp.blocks_w + bx], qt);
            for y in 0..8 {
                let row = (by * 8 + y) * pw + bx * 8;
                out[row..row + 8].copy_from_slice(&px[y * 8..y * 8 + 8]);
            }
        }
    }
    out
}

/// Upsamples a component plane to `w x h` full-resolution samples.
#[allow(clippy::too_many_arguments)]
fn upsample(
    plane: &[u8],
    stride: usize,
    comp_w: usize,
    comp_h: usize,
    hf: usize,
    vf: usize,
    w: usize,
    h: usize,
) -> Vec<u8> {
    let at = |x: usize, y: usize| i32::from(plane[y.min(comp_h - 1) * stride + x.min(comp_w - 1)]);
    let mut out = vec![0u8; w * h];
    match (hf, vf) {
        (1, 1) => {
            for y in 0..h {
                out[y * w..(y + 1) * w].copy_from_slice(&plane[y * stride..y * stride + w]);
            }
        }
        (2, 1) => {
            for y in 0..h {
                for x in 0..w {
                    let sx = x / 2;
                    let cur = at(sx, y) * 3;
                    let v = if comp_w == 1 {
                        at(sx, y)
                    } else if x % 2 == 0 {
                        if sx == 0 {
                            at(0, y)
                        } else {
                            (cur + at(sx - 1, y) + 1) >> 2
                        }
                    } else if sx + 1 >= comp_w {
                        at(sx, y)
                    } else {
                        (cur + at(sx + 1, y) + 2) >> 2
                    };
                    out[y * w + x] = v as u8;
                }
            }
        }
        (2, 2) => {
            for y in 0..h {
                let sy = y / 2;
                // Nearer row weighted 3, farther row 1; edges replicate.
                let other = if y % 2 == 0 {
                    sy.saturating_sub(1)
                } else {
                    (sy + 1).min(comp_h - 1)
                };
                let colsum = |sx: usize| at(sx, sy) * 3 + at(sx, other);
                for x in 0..w {
                    let sx = x / 2;
                    let this = colsum(sx);
                    let v = if x % 2 == 0 {
                        if sx == 0 {
                            (this * 4 + 8) >> 4
                        } else {
                            (this * 3 + colsum(sx - 1) + 8) >> 4
                        }
                    } else if sx + 1 >= comp_w {
                        (this * 4 + 7) >> 4
                    } else {
                        (this * 3 + colsum(sx + 1) + 7) >> 4
                    };
                    out[y * w + x] = v as u8;
                }
            }
        }
        _ => {
            for y in 0..h {
                for x in 0..w {
                    out[y * w + x] = at(x / hf, y / vf) as u8;
                }
            }
        }
    }
    out
}

/// Fixed-point (16-bit fraction) JFIF YCbCr -> RGB, matching libjpeg's tables.
fn ycc_to_rgb(y: u8, cb: u8, cr: u8) -> [u8; 3] {
    const ONE_HALF: i32 = 1 << 15;
    const fn fix(x: f64) -> i32 {
        (x * 65536.0 + 0.5) as i32
    }
    let (y, cb, cr) = (i32::from(y), i32::from(cb) - 128, i32::from(cr) - 128);
    let r = y + ((fix(1.402) * cr + ONE_HALF) >> 16);
    let g = y + ((-fix(0.34414) * cb + ONE_HALF - fix(0.71414) * cr) >> 16);
    let b = y + ((fix(1.772) * cb + ONE_HALF) >> 16);
    [r, g, b].map(|v| v.clamp(0, 255) as u8)
}

/// Decodes a baseline (or extended sequential Huffman) JPEG into a float image.
pub fn jpeg_decode(bytes: &[u8]) -> Result<ImageF> {
    let mut d = Decoder {
        data: bytes,
        pos: 0,
        qt: [None; 4],
        dc: [None, None, None, None],
        ac: [None, None, None, None],
        restart_interval: 0,
        frame: None,
        scans: 0,
    };
    if d.u8()? != 0xFF || d.u8()? != 0xD8 {
        return Err(malformed("missing SOI marker"));
    }
    loop {
        let marker = d.next_marker()?;
        match marker {
            0xC0 | 0xC1 => {
                let seg = d.segment()?;
                d.parse_sof(seg)?;
            }
            0xC2 => return Err(Error::UnsupportedJpegFeature("progressive".into())),
            0xC3 | 0xC5..=0xC7 => {
                return Err(Error::UnsupportedJpegFeature(
                    "lossless or hierarchical".into(),
                ))
            }
            0xC9..=0xCB | 0xCD..=0xCF => {
                return Err(Error::UnsupportedJpegFeature("arithmetic coding".into()))
            }
            0xC4 => {
                let seg = d.segment()?;
                d.parse_dht(seg)?;
            }
            0xCC => {
                return Err(Error::UnsupportedJpegFeature("arithmetic coding".into()));
            }
            0xDB => {
                let seg = d.segment()?;
                d.parse_dqt(seg)?;
            }
            0xDD => {
                let seg = d.segment()?;
                if seg.len() < 2 {
                    return Err(malformed("short DRI segment"));
                }
                d.restart_interval = u16::from_be_bytes([seg[0], seg[1]]) as usize;
            }
            0xDA => {
                let seg = d.segment()?;
                d.parse_sos(seg)?;
            }
            0xD9 => break,
            0xD0..=0xD7 => {}
            0xD8 => return Err(malformed("unexpected SOI")),
            _ => {
                // APPn, COM, DNL and other skippable segments.
                d.segment()?;
            }
        }
    }
    let frame = d.frame.take().ok_or_else(|| malformed("no frame header"))?;
    if d.scans == 0 {
        return Err(malformed("no scan data"));
    }

    let (w, h) = (frame.width, frame.height);
    let mut planes = Vec::with_capacity(frame.components.len());
    for comp in &frame.components {
        let qt = d.qt[comp.tq]
            .as_ref()
            .ok_or_else(|| malformed("missing quantization table"))?;
        let samples = reconstruct(comp, qt);
        let comp_w = (w * comp.h).div_ceil(frame.hmax);
        let comp_h = (h * comp.v).div_ceil(frame.vmax);
        let (hf, vf) = (frame.hmax / comp.h, frame.vmax / comp.v);
        if frame.hmax % comp.h != 0 || frame.vmax % comp.v != 0 {
            return Err(Error::UnsupportedJpegFeature(
                "non-integral sampling ratio".into(),
            ));
        }
        planes.push(upsample(
            &samples,
            comp.blocks_w * 8,
            comp_w,
            comp_h,
            hf,
            vf,
            w,
            h,
        ));
    }

    let n = w * h;
    if planes.len() == 1 {
        let data = planes[0].iter().map(|&v| f64::from(v) / 255.0).collect();
        return ImageF::new(w, h, 1, data);
    }
    let mut data = vec![0.0; 3 * n];
    for i in 0..n {
        let [r, g, b] = ycc_to_rgb(planes[0][i], planes[1][i], planes[2][i]);
        data[i] = f64::from(r) / 255.0;
        data[n + i] = f64::from(g) / 255.0;
        data[2 * n + i] = f64::from(b) / 255.0;
    }
    ImageF::new(w, h, 3, data)
}
