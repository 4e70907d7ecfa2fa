//! Image containers, u8/float conversion, JFIF color conversion and lossless file I/O.
//!
//! [`ImageF`] is the working representation for every algorithm in the crate:
//! planar samples in `[0, 1]`, one plane per channel, each plane row-major.
//! [`ImageU8`] is the storage form used for file round-trips.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Planar floating-point image with samples in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageF {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

/// 8-bit image with interleaved samples (`RGBRGB...` or gray).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageU8 {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

/// Side information reported by [`load_png_with_info`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PngInfo {
    /// The file carried an alpha channel (or tRNS chunk) that was discarded.
    pub alpha_dropped: bool,
}

fn check_dims(width: usize, height: usize, channels: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions(format!("{width}x{height}")));
    }
    if channels != 1 && channels != 3 {
        return Err(Error::InvalidDimensions(format!(
            "{channels} channels (expected 1 or 3)"
        )));
    }
    Ok(())
}

impl ImageF {
    /// Builds an image from planar data. Samples are clamped into `[0, 1]`;
    /// NaN is rejected.
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height, channels)?;
        if data.len() != width * height * channels {
            return Err(Error::InvalidDimensions(format!(
                "data length {} != {width}x{height}x{channels}",
                data.len()
            )));
        }
        if data.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidParameter("NaN sample".into()));
        }
        let mut img = Self {
            width,
            height,
            channels,
            data,
        };
        img.clamp_in_place();
        Ok(img)
    }

    /// Constant-valued image.
    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Builds an image by evaluating `f(channel, x, y)` at every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        check_dims(width, height, channels)?;
        let mut data = Vec::with_capacity(width * height * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, x, y));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// True if `other` has the same width, height and channel count.
    pub fn same_shape(&self, other: &ImageF) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub(crate) fn ensure_same_shape(&self, other: &ImageF) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    /// Applies `f` to every sample and clamps the result.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageF {
        let mut out = ImageF {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        };
        out.clamp_in_place();
        out
    }

    /// Combines two same-shaped images sample by sample and clamps the result.
    pub fn zip_map(&self, other: &ImageF, f: impl Fn(f64, f64) -> f64) -> Result<ImageF> {
        self.ensure_same_shape(other)?;
        let mut out = ImageF {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        };
        out.clamp_in_place();
        Ok(out)
    }

    /// Expands a gray image to three identical planes; RGB images are cloned.
    pub fn to_rgb(&self) -> ImageF {
        if self.channels == 3 {
            return self.clone();
        }
        let mut data = Vec::with_capacity(self.data.len() * 3);
        for _ in 0..3 {
            data.extend_from_slice(&self.data);
        }
        ImageF {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
        }
    }

    /// Clamps every sample into `[0, 1]`; NaN becomes 0.
    fn clamp_in_place(&mut self) {
        for v in &mut self.data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
    }

    /// Builds an image from planar data produced inside the crate that is known
    /// to be finite; samples are clamped.
    pub(crate) fn from_planar_clamped(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> ImageF {
        debug_assert_eq!(data.len(), width * height * channels);
        let mut img = ImageF {
            width,
            height,
            channels,
            data,
        };
        img.clamp_in_place();
        img
    }
}

impl ImageU8 {
    /// Builds an image from interleaved samples.
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height, channels)?;
        if data.len() != width * height * channels {
            return Err(Error::InvalidDimensions(format!(
                "data length {} != {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Interleaved samples.
    pub fn data(&self) -> &[u8] {
        &self.data
    }
}

/// `f = s / 255`.
pub fn to_float(img: &ImageU8) -> ImageF {
    let (w, h, ch) = (img.width, img.height, img.channels);
    let mut data = vec![0.0; w * h * ch];
    for (i, px) in img.data.chunks_exact(ch).enumerate() {
        for (c, &s) in px.iter().enumerate() {
            data[c * w * h + i] = f64::from(s) / 255.0;
        }
    }
    ImageF {
        width: w,
        height: h,
        channels: ch,
        data,
    }
}

/// Quantizes one sample: `round(f * 255)` with ties away from zero.
#[inline]
pub fn quantize_sample(f: f64) -> u8 {
    round_scaled(f * 255.0)
}

#[inline]
pub(crate) fn round_scaled(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// `s = round(f * 255)`, ties away from zero.
pub fn to_u8(img: &ImageF) -> ImageU8 {
    let (w, h, ch) = (img.width, img.height, img.channels);
    let n = w * h;
    let mut data = vec![0u8; n * ch];
    for c in 0..ch {
        for (i, &v) in img.plane(c).iter().enumerate() {
            data[i * ch + c] = quantize_sample(v);
        }
    }
    ImageU8 {
        width: w,
        height: h,
        channels: ch,
        data,
    }
}

const KR: f64 = 0.299;
const KB: f64 = 0.114;
const KG: f64 = 1.0 - KR - KB;

/// Full-range JFIF RGB -> YCbCr; chroma is centered on 0.5.
pub fn rgb_to_ycbcr(img: &ImageF) -> Result<ImageF> {
    if img.channels != 3 {
        return Err(Error::WrongChannelCount {
            expected: 3,
            actual: img.channels,
        });
    }
    let n = img.width * img.height;
    let mut data = vec![0.0; 3 * n];
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    for i in 0..n {
        let y = KR * r[i] + KG * g[i] + KB * b[i];
        data[i] = y;
        data[n + i] = 0.5 * (b[i] - y) / (1.0 - KB) + 0.5;
        data[2 * n + i] = 0.5 * (r[i] - y) / (1.0 - KR) + 0.5;
    }
    Ok(ImageF::from_planar_clamped(img.width, img.height, 3, data))
}

/// Inverse of [`rgb_to_ycbcr`].
pub fn ycbcr_to_rgb(img: &ImageF) -> Result<ImageF> {
    if img.channels != 3 {
        return Err(Error::WrongChannelCount {
            expected: 3,
            actual: img.channels,
        });
    }
    let n = img.width * img.height;
    let mut data = vec![0.0; 3 * n];
    let (y, cb, cr) = (img.plane(0), img.plane(1), img.plane(2));
    for i in 0..n {
        let r = y[i] + 2.0 * (1.0 - KR) * (cr[i] - 0.5);
        let b = y[i] + 2.0 * (1.0 - KB) * (cb[i] - 0.5);
        data[i] = r;
        data[n + i] = (y[i] - KR * r - KB * b) / KG;
        data[2 * n + i] = b;
    }
    Ok(ImageF::from_planar_clamped(img.width, img.height, 3, data))
}

/// Single-channel luma plane (JFIF weights). Gray images are returned as-is.
pub fn luma(img: &ImageF) -> ImageF {
    if img.channels == 1 {
        return img.clone();
    }
    let n = img.width * img.height;
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let data = (0..n)
        .map(|i| KR * r[i] + KG * g[i] + KB * b[i])
        .collect();
    ImageF::from_planar_clamped(img.width, img.height, 1, data)
}

/// Loads an 8-bit gray or RGB PNG. Alpha is dropped (logged as a warning).
pub fn load_png(path: impl AsRef<Path>) -> Result<ImageU8> {
    let path = path.as_ref();
    let (img, info) = load_png_with_info(path)?;
    if info.alpha_dropped {
        log::warn!("{}: alpha channel dropped", path.display());
    }
    Ok(img)
}

/// Like [`load_png`], also reporting whether alpha was discarded.
pub fn load_png_with_info(path: impl AsRef<Path>) -> Result<(ImageU8, PngInfo)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    decode_png(BufReader::new(file))
}

/// Decodes a PNG from an in-memory buffer.
pub fn decode_png_bytes(bytes: &[u8]) -> Result<(ImageU8, PngInfo)> {
    decode_png(std::io::Cursor::new(bytes))
}

fn decode_png<R: std::io::BufRead + std::io::Seek>(reader: R) -> Result<(ImageU8, PngInfo)> {
    use png::{BitDepth, ColorType};

    let bad = |e: png::DecodingError| Error::UnsupportedFormat(e.to_string());
    let mut probe = png::Decoder::new(reader);
    probe.set_transformations(png::Transformations::EXPAND);
    let mut reader = probe.read_info().map_err(bad)?;
    let info = reader.info();
    if info.bit_depth == BitDepth::Sixteen {
        return Err(Error::UnsupportedFormat("16-bit PNG".into()));
    }
    if info.color_type == ColorType::Indexed && info.trns.is_some() {
        return Err(Error::UnsupportedFormat(
            "palette PNG with transparency".into(),
        ));
    }
    let has_trns = info.trns.is_some();
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::UnsupportedFormat("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(bad)?;
    if frame.bit_depth != BitDepth::Eight {
        return Err(Error::UnsupportedFormat(format!(
            "bit depth {:?}",
            frame.bit_depth
        )));
    }
    let (w, h) = (frame.width as usize, frame.height as usize);
    let src_ch = frame.color_type.samples();
    let (channels, alpha) = match frame.color_type {
        ColorType::Grayscale => (1, false),
        ColorType::Rgb => (3, false),
        ColorType::GrayscaleAlpha => (1, true),
        ColorType::Rgba => (3, true),
        ColorType::Indexed => {
            return Err(Error::UnsupportedFormat("unexpanded palette".into()));
        }
    };
    let line = frame.line_size;
    let mut data = Vec::with_capacity(w * h * channels);
    for row in buf.chunks(line).take(h) {
        for px in row[..w * src_ch].chunks_exact(src_ch) {
            data.extend_from_slice(&px[..channels]);
        }
    }
    let img = ImageU8::new(w, h, channels, data)?;
    Ok((
        img,
        PngInfo {
            alpha_dropped: alpha || has_trns,
        },
    ))
}

/// Encodes to PNG bytes. Output is deterministic for identical input.
pub fn encode_png(img: &ImageU8) -> Result<Vec<u8>> {
    check_dims(img.width, img.height, img.channels)?;
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        enc.set_color(if img.channels == 3 {
            png::ColorType::Rgb
        } else {
            png::ColorType::Grayscale
        });
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        writer
            .write_image_data(&img.data)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    Ok(out)
}

pub fn save_png(img: &ImageU8, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_png(img)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Binary PPM (P6) for RGB or PGM (P5) for gray; debugging dumps only.
pub fn save_ppm(img: &ImageU8, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let magic = if img.channels == 3 { "P6" } else { "P5" };
    write!(w, "{magic}\n{} {}\n255\n", img.width, img.height)?;
    w.write_all(&img.data)?;
    w.flush()?;
    Ok(())
}

/// Loads a PNG straight into the float representation.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageF> {
    Ok(to_float(&load_png(path)?))
}

/// Quantizes and writes a float image as PNG.
pub fn save_image(img: &ImageF, path: impl AsRef<Path>) -> Result<()> {
    save_png(&to_u8(img), path)
}
