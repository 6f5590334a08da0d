//! 8-bit PNG in and out. Values map by `v / 255` on load and
//! `round(v * 255)` on save.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};
use srvd_core::ImageTensor;

use crate::error::{Error, IoContext, Result};

fn image_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Reads a gray or RGB PNG. Alpha is dropped, palettes are expanded and
/// 16-bit samples are reduced to 8.
pub fn load_png(path: &Path) -> Result<ImageTensor> {
    let file = File::open(path).at(path)?;
    let mut dec = png::Decoder::new(BufReader::new(file));
    dec.set_transformations(Transformations::EXPAND | Transformations::STRIP_16);
    let mut reader = dec
        .read_info()
        .map_err(|e| image_err(path, e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| image_err(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| image_err(path, e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let (stride, channels) = match info.color_type {
        ColorType::Grayscale => (1, 1),
        ColorType::GrayscaleAlpha => (2, 1),
        ColorType::Rgb => (3, 3),
        ColorType::Rgba => (4, 3),
        ColorType::Indexed => return Err(image_err(path, "palette was not expanded")),
    };
    if info.bit_depth != BitDepth::Eight {
        return Err(image_err(
            path,
            format!("unsupported bit depth {:?}", info.bit_depth),
        ));
    }
    let row = info.line_size;
    let img = ImageTensor::from_fn(channels, h, w, |c, y, x| {
        buf[y * row + x * stride + c] as f64 / 255.0
    })?;
    Ok(img)
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn save_png(path: &Path, img: &ImageTensor) -> Result<()> {
    let (c, h, w) = (img.channels(), img.height(), img.width());
    let mut bytes = Vec::with_capacity(c * h * w);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                bytes.push(quantize(img.at(ch, y, x)));
            }
        }
    }
    let file = File::create(path).at(path)?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    enc.set_color(if c == 1 {
        ColorType::Grayscale
    } else {
        ColorType::Rgb
    });
    enc.set_depth(BitDepth::Eight);
    let mut writer = enc
        .write_header()
        .map_err(|e| image_err(path, e.to_string()))?;
    writer
        .write_image_data(&bytes)
        .map_err(|e| image_err(path, e.to_string()))?;
    writer.finish().map_err(|e| image_err(path, e.to_string()))
}
