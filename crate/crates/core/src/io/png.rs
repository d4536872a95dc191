//! Masks as 8-bit grayscale PNGs (pixel value = class id, 255 = ignore) and
//! images as 8-bit RGB PNGs.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use png::{BitDepth, ColorType};

use super::files::write_atomic;
use crate::error::{Error, Result};
use crate::model::Image;
use crate::raster::SemanticMask;

fn decode(path: &Path) -> Result<(png::OutputInfo, Vec<u8>)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = png::Decoder::new(BufReader::new(f))
        .read_info()
        .map_err(|e| Error::Png(format!("{}: {e}", path.display())))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Png(format!("{}: image too large", path.display())))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Png(format!("{}: {e}", path.display())))?;
    buf.truncate(info.buffer_size());
    if info.bit_depth != BitDepth::Eight {
        return Err(Error::Png(format!("{}: expected 8-bit samples, got {:?}", path.display(), info.bit_depth)));
    }
    Ok((info, buf))
}

fn encode(width: usize, height: usize, color: ColorType, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(BitDepth::Eight);
        let mut w = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
        w.write_image_data(data).map_err(|e| Error::Png(e.to_string()))?;
        w.finish().map_err(|e| Error::Png(e.to_string()))?;
    }
    Ok(out)
}

pub fn read_mask_png(path: &Path, resolution_m: f64) -> Result<SemanticMask> {
    let (info, buf) = decode(path)?;
    if info.color_type != ColorType::Grayscale {
        return Err(Error::InvalidMask(format!("{}: expected grayscale, got {:?}", path.display(), info.color_type)));
    }
    SemanticMask::new(info.height as usize, info.width as usize, buf, resolution_m)
}

pub fn mask_png_bytes(mask: &SemanticMask) -> Result<Vec<u8>> {
    encode(mask.width(), mask.height(), ColorType::Grayscale, mask.cells())
}

pub fn write_mask_png(path: &Path, mask: &SemanticMask) -> Result<()> {
    write_atomic(path, &mask_png_bytes(mask)?)
}

/// RGB or RGBA; alpha is dropped.
pub fn read_image_png(path: &Path) -> Result<Image> {
    let (info, buf) = decode(path)?;
    let channels = match info.color_type {
        ColorType::Rgb => 3,
        ColorType::Rgba => 4,
        other => return Err(Error::Png(format!("{}: expected RGB, got {other:?}", path.display()))),
    };
    let data = buf.chunks(channels).flat_map(|p| p[..3].iter().map(|&v| v as f64 / 255.0)).collect();
    Image::new(info.height as usize, info.width as usize, data)
}

pub fn write_image_png(path: &Path, image: &Image) -> Result<()> {
    let data: Vec<u8> = image.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    write_atomic(path, &encode(image.width, image.height, ColorType::Rgb, &data)?)
}
