//! PNG and raw `FMAP` encoding for images and scalar maps.
//!
//! `FMAP` layout: magic `FMAP`, `u32` height, `u32` width, `u32` reserved (0),
//! then `height * width` little-endian `f32` samples in row-major order.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{DynamicImage, ExtendedColorType, ImageEncoder};

use super::{ImageF, ScalarMap};
use crate::error::{Error, Result};

pub const FMAP_MAGIC: &[u8; 4] = b"FMAP";
const FMAP_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

fn codec_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Codec {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn read_png(path: impl AsRef<Path>) -> Result<ImageF> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png_inner(&bytes).map_err(|e| codec_err(path, e))
}

pub fn decode_png(bytes: &[u8]) -> Result<ImageF> {
    decode_png_inner(bytes).map_err(|e| codec_err(Path::new("<memory>"), e))
}

fn decode_png_inner(bytes: &[u8]) -> std::result::Result<ImageF, String> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| e.to_string())?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, data): (usize, Vec<f64>) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw().into_iter().map(from_u8).collect()),
        DynamicImage::ImageLuma16(b) => (1, b.into_raw().into_iter().map(from_u16).collect()),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw().into_iter().map(from_u8).collect()),
        DynamicImage::ImageRgb16(b) => (3, b.into_raw().into_iter().map(from_u16).collect()),
        // Alpha is discarded.
        DynamicImage::ImageLumaA8(b) => (1, b.into_raw().chunks_exact(2).map(|p| from_u8(p[0])).collect()),
        DynamicImage::ImageLumaA16(b) => (1, b.into_raw().chunks_exact(2).map(|p| from_u16(p[0])).collect()),
        DynamicImage::ImageRgba8(b) => (
            3,
            b.into_raw()
                .chunks_exact(4)
                .flat_map(|p| [from_u8(p[0]), from_u8(p[1]), from_u8(p[2])])
                .collect(),
        ),
        DynamicImage::ImageRgba16(b) => (
            3,
            b.into_raw()
                .chunks_exact(4)
                .flat_map(|p| [from_u16(p[0]), from_u16(p[1]), from_u16(p[2])])
                .collect(),
        ),
        other => return Err(format!("unsupported pixel layout {:?}", other.color())),
    };
    ImageF::new(h, w, channels, data).map_err(|e| e.to_string())
}

#[inline]
fn from_u8(v: u8) -> f64 {
    f64::from(v) / 255.0
}

#[inline]
fn from_u16(v: u16) -> f64 {
    f64::from(v) / 65535.0
}

#[inline]
fn quantize(v: f64, max: f64) -> f64 {
    (v.clamp(0.0, 1.0) * max).round()
}

/// Encodes an image as PNG; samples are clamped to `[0, 1]` and rounded.
pub fn encode_png(img: &ImageF, depth: BitDepth) -> Result<Vec<u8>> {
    let color = match (img.channels(), depth) {
        (1, BitDepth::Eight) => ExtendedColorType::L8,
        (1, BitDepth::Sixteen) => ExtendedColorType::L16,
        (3, BitDepth::Eight) => ExtendedColorType::Rgb8,
        (3, BitDepth::Sixteen) => ExtendedColorType::Rgb16,
        (c, _) => return Err(Error::invalid(format!("cannot encode {c} channels as PNG"))),
    };
    let raw: Vec<u8> = match depth {
        BitDepth::Eight => img.data().iter().map(|&v| quantize(v, 255.0) as u8).collect(),
        // The encoder takes native-endian 16-bit samples.
        BitDepth::Sixteen => img
            .data()
            .iter()
            .flat_map(|&v| (quantize(v, 65535.0) as u16).to_ne_bytes())
            .collect(),
    };
    encode_raw_png(&raw, img.width(), img.height(), color)
}

pub(crate) fn encode_raw_png(
    raw: &[u8],
    width: usize,
    height: usize,
    color: ExtendedColorType,
) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    PngEncoder::new(&mut buf)
        .write_image(raw, width as u32, height as u32, color)
        .map_err(|e| codec_err(Path::new("<memory>"), e))?;
    Ok(buf.into_inner())
}

pub fn write_png(img: &ImageF, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_png(img, depth)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes a map as 16-bit grayscale PNG (`round(x * 65535)`).
pub fn write_map_png16(map: &ScalarMap, path: impl AsRef<Path>) -> Result<()> {
    let img = ImageF::new(map.height(), map.width(), 1, map.data().to_vec())?;
    write_png(&img, path, BitDepth::Sixteen)
}

pub fn encode_fmap(map: &ScalarMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(FMAP_HEADER_LEN + map.len() * 4);
    out.extend_from_slice(FMAP_MAGIC);
    out.extend_from_slice(&(map.height() as u32).to_le_bytes());
    out.extend_from_slice(&(map.width() as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for &v in map.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_fmap(bytes: &[u8]) -> Result<ScalarMap> {
    if bytes.len() < FMAP_HEADER_LEN || &bytes[..4] != FMAP_MAGIC {
        return Err(Error::invalid("not an FMAP stream"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (h, w) = (word(4), word(8));
    let expected = FMAP_HEADER_LEN + h * w * 4;
    if bytes.len() != expected {
        return Err(Error::invalid(format!(
            "FMAP payload is {} bytes, expected {expected} for {h}x{w}",
            bytes.len()
        )));
    }
    let data = bytes[FMAP_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    ScalarMap::new(h, w, data)
}

pub fn write_fmap(map: &ScalarMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_fmap(map)).map_err(|e| Error::io(path, e))
}

pub fn read_fmap(path: impl AsRef<Path>) -> Result<ScalarMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_fmap(&bytes).map_err(|e| codec_err(path, e))
}

/// Loads a scalar map from either an `FMAP` file or a grayscale PNG.
pub fn read_map(path: impl AsRef<Path>) -> Result<ScalarMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(FMAP_MAGIC) {
        return decode_fmap(&bytes).map_err(|e| codec_err(path, e));
    }
    let img = decode_png_inner(&bytes).map_err(|e| codec_err(path, e))?;
    if img.channels() != 1 {
        return Err(codec_err(path, "expected a single-channel map"));
    }
    Ok(img.channel(0))
}
