use std::io::Cursor;
use std::path::Path;

use png::{BitDepth, ColorType};

use super::{read_file, write_atomic};
use crate::error::{Error, Result};
use crate::grid::{ClassMap, Grid, LabelMap, RgbImage};

/// Largest id a 16-bit label PNG can hold.
pub const MAX_LABEL_ID: u32 = u16::MAX as u32;

struct Decoded {
    width: usize,
    height: usize,
    color: ColorType,
    depth: BitDepth,
    data: Vec<u8>,
}

fn decode(path: &Path) -> Result<Decoded> {
    let bytes = read_file(path)?;
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::format(path, format!("not a readable PNG: {e}")))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format(path, "image too large"))?;
    let mut data = vec![0u8; size];
    let info = reader
        .next_frame(&mut data)
        .map_err(|e| Error::format(path, format!("corrupt PNG data: {e}")))?;
    data.truncate(info.buffer_size());
    Ok(Decoded {
        width: info.width as usize,
        height: info.height as usize,
        color: info.color_type,
        depth: info.bit_depth,
        data,
    })
}

fn expect_format(path: &Path, d: &Decoded, color: ColorType, depth: BitDepth, what: &str) -> Result<()> {
    if d.color != color {
        return Err(Error::format(
            path,
            format!("{what} must be {color:?} PNG, found {:?} (wrong channel count)", d.color),
        ));
    }
    if d.depth != depth {
        return Err(Error::format(
            path,
            format!("{what} must have bit depth {}, found {}", depth as u8, d.depth as u8),
        ));
    }
    Ok(())
}

fn encode(path: &Path, width: usize, height: usize, color: ColorType, depth: BitDepth, data: &[u8]) -> Result<()> {
    let mut bytes = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut bytes, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut w = enc
            .write_header()
            .map_err(|e| Error::format(path, format!("PNG encoding failed: {e}")))?;
        w.write_image_data(data)
            .map_err(|e| Error::format(path, format!("PNG encoding failed: {e}")))?;
    }
    write_atomic(path, &bytes)
}

pub fn read_label_map(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    let d = decode(path)?;
    expect_format(path, &d, ColorType::Grayscale, BitDepth::Sixteen, "label map")?;
    let ids = d
        .data
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]) as u32)
        .collect();
    Grid::from_vec(d.height, d.width, 1, ids)
}

pub fn write_label_map(map: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if map.channels() != 1 {
        return Err(Error::shape("1 channel", map.channels()));
    }
    let mut data = Vec::with_capacity(map.as_slice().len() * 2);
    for &id in map.as_slice() {
        if id > MAX_LABEL_ID {
            return Err(Error::format(
                path,
                format!(
                    "instance id {id} exceeds {MAX_LABEL_ID}, the largest value a 16-bit PNG holds; \
                     renumber instances consecutively from 1 before writing"
                ),
            ));
        }
        data.extend_from_slice(&(id as u16).to_be_bytes());
    }
    encode(path, map.width(), map.height(), ColorType::Grayscale, BitDepth::Sixteen, &data)
}

pub fn read_class_map(path: impl AsRef<Path>) -> Result<ClassMap> {
    let path = path.as_ref();
    let d = decode(path)?;
    expect_format(path, &d, ColorType::Grayscale, BitDepth::Eight, "class map")?;
    Grid::from_vec(d.height, d.width, 1, d.data)
}

pub fn write_class_map(map: &ClassMap, path: impl AsRef<Path>) -> Result<()> {
    if map.channels() != 1 {
        return Err(Error::shape("1 channel", map.channels()));
    }
    encode(path.as_ref(), map.width(), map.height(), ColorType::Grayscale, BitDepth::Eight, map.as_slice())
}

pub fn read_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let d = decode(path)?;
    expect_format(path, &d, ColorType::Rgb, BitDepth::Eight, "image")?;
    Grid::from_vec(d.height, d.width, 3, d.data)
}

pub fn write_rgb(image: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    if image.channels() != 3 {
        return Err(Error::shape("3 channels", image.channels()));
    }
    encode(path.as_ref(), image.width(), image.height(), ColorType::Rgb, BitDepth::Eight, image.as_slice())
}
