//! Grayscale PNG export with a normalization sidecar.
//!
//! Pixels are min–max scaled to the full integer range of the chosen bit
//! depth. A constant image maps to mid-gray. The bounds are written to
//! `<png path>.txt` as `key=value` lines so pixel values can be recovered
//! to within one quantization step.

use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::volume::EnFaceImage;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub min: f64,
    pub max: f64,
    pub bit_depth: u8,
}

impl Normalization {
    fn full_scale(&self) -> f64 {
        if self.bit_depth == 8 {
            255.0
        } else {
            65535.0
        }
    }

    fn quantize(&self, v: f64) -> u16 {
        let full = self.full_scale();
        if self.max > self.min {
            ((v - self.min) / (self.max - self.min) * full).round() as u16
        } else {
            (full / 2.0).round() as u16
        }
    }

    /// Value represented by a stored pixel level.
    pub fn dequantize(&self, q: u16) -> f64 {
        if self.max > self.min {
            self.min + f64::from(q) / self.full_scale() * (self.max - self.min)
        } else {
            self.min
        }
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / self.full_scale()
    }
}

pub fn sidecar_path(png: &Path) -> PathBuf {
    let mut s = png.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}

pub fn export_png(
    img: &EnFaceImage,
    path: impl AsRef<Path>,
    bit_depth: u8,
) -> Result<Normalization> {
    let path = path.as_ref();
    if bit_depth != 8 && bit_depth != 16 {
        return Err(Error::InvalidParameter(format!(
            "bit depth must be 8 or 16, got {bit_depth}"
        )));
    }
    let data = img.data();
    let min = data.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let norm = Normalization {
        min,
        max,
        bit_depth,
    };
    let (w, h) = (img.width() as u32, img.height() as u32);
    if bit_depth == 8 {
        let buf = ImageBuffer::from_fn(w, h, |x, y| {
            Luma([norm.quantize(data[[x as usize, y as usize]]) as u8])
        });
        buf.save_with_format(path, image::ImageFormat::Png)?;
    } else {
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(w, h, |x, y| {
            Luma([norm.quantize(data[[x as usize, y as usize]])])
        });
        buf.save_with_format(path, image::ImageFormat::Png)?;
    }
    fs::write(
        sidecar_path(path),
        format!("min={min:e}\nmax={max:e}\nbit_depth={bit_depth}\n"),
    )?;
    Ok(norm)
}

pub fn read_sidecar(png: impl AsRef<Path>) -> Result<Normalization> {
    let path = sidecar_path(png.as_ref());
    let text = fs::read_to_string(&path)?;
    let mut min = None;
    let mut max = None;
    let mut bit_depth = None;
    for line in text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
    {
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::InvalidData(format!("{}: malformed line {line:?}", path.display()))
        })?;
        let bad =
            |e: &dyn std::fmt::Display| Error::InvalidData(format!("{}: {k}: {e}", path.display()));
        match k.trim() {
            "min" => min = Some(v.trim().parse::<f64>().map_err(|e| bad(&e))?),
            "max" => max = Some(v.trim().parse::<f64>().map_err(|e| bad(&e))?),
            "bit_depth" => bit_depth = Some(v.trim().parse::<u8>().map_err(|e| bad(&e))?),
            _ => {}
        }
    }
    match (min, max, bit_depth) {
        (Some(min), Some(max), Some(bit_depth)) => Ok(Normalization {
            min,
            max,
            bit_depth,
        }),
        _ => Err(Error::InvalidData(format!(
            "{}: missing min, max or bit_depth",
            path.display()
        ))),
    }
}

/// Reads an exported PNG back into pixel values using its sidecar.
pub fn read_png(path: impl AsRef<Path>) -> Result<EnFaceImage> {
    let path = path.as_ref();
    let norm = read_sidecar(path)?;
    let img = image::open(path)?.into_luma16();
    let scale = if norm.bit_depth == 8 { 257 } else { 1 };
    let (w, h) = img.dimensions();
    let data = Array2::from_shape_fn((w as usize, h as usize), |(x, y)| {
        norm.dequantize(img.get_pixel(x as u32, y as u32)[0] / scale)
    });
    EnFaceImage::new(data)
}
