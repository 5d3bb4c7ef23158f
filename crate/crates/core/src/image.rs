//! Plain interleaved image buffers and PNG/PFM file helpers.
//!
//! Everything in the pipeline works on [`Image<T>`]: row-major, interleaved
//! channels, no padding. Masks are `Image<bool>` with one channel.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<T>,
}

pub type RgbImage = Image<u8>;
pub type GrayImage = Image<f64>;
pub type Mask = Image<bool>;

impl<T: Copy> Image<T> {
    pub fn new(width: usize, height: usize, channels: usize, fill: T) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![fill; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::MismatchedInput(format!(
                "buffer of {} values for {width}x{height}x{channels}",
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

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        (y * self.width + x) * self.channels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> T {
        self.data[self.idx(x, y) + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: T) {
        let i = self.idx(x, y) + c;
        self.data[i] = v;
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[T] {
        let i = self.idx(x, y);
        &self.data[i..i + self.channels]
    }

    pub fn same_shape<U>(&self, other: &Image<U>) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn same_size<U>(&self, other: &Image<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Extract channel `c` as a single-channel image.
    pub fn channel(&self, c: usize) -> Image<T> {
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    pub fn map<U, F: Fn(T) -> U>(&self, f: F) -> Image<U> {
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl Image<bool> {
    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn to_u8(&self) -> Image<u8> {
        self.map(|b| if b { 255 } else { 0 })
    }
}

impl Image<u8> {
    /// Convert to floats in [0, 1].
    pub fn to_unit(&self) -> Image<f64> {
        self.map(|v| v as f64 / 255.0)
    }
}

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|e| codec_err(path, e))?.to_rgb8();
    let (w, h) = img.dimensions();
    Image::from_vec(w as usize, h as usize, 3, img.into_raw())
}

pub fn write_rgb(path: &Path, img: &RgbImage) -> Result<()> {
    assert_eq!(img.channels, 3);
    ensure_parent(path)?;
    image::save_buffer(
        path,
        &img.data,
        img.width as u32,
        img.height as u32,
        image::ExtendedColorType::Rgb8,
    )
    .map_err(|e| codec_err(path, e))
}

pub fn write_gray8(path: &Path, img: &Image<u8>) -> Result<()> {
    assert_eq!(img.channels, 1);
    ensure_parent(path)?;
    image::save_buffer(
        path,
        &img.data,
        img.width as u32,
        img.height as u32,
        image::ExtendedColorType::L8,
    )
    .map_err(|e| codec_err(path, e))
}

/// Read an 8-bit mask; any nonzero value is `true`.
pub fn read_mask(path: &Path) -> Result<Mask> {
    let img = image::open(path).map_err(|e| codec_err(path, e))?.to_luma8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| v != 0).collect();
    Image::from_vec(w as usize, h as usize, 1, data)
}

/// Read an 8-bit mask and reject anything that is not strictly 0/255.
pub fn read_binary_mask(path: &Path) -> Result<Mask> {
    let img = image::open(path).map_err(|e| codec_err(path, e))?.to_luma8();
    if let Some(v) = img.as_raw().iter().find(|&&v| v != 0 && v != 255) {
        return Err(Error::MismatchedInput(format!(
            "mask {} is not binary (value {v})",
            path.display()
        )));
    }
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| v != 0).collect();
    Image::from_vec(w as usize, h as usize, 1, data)
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    write_gray8(path, &mask.to_u8())
}

/// Write a float image as little-endian PFM (1 or 3 channels). Non-finite
/// values are written as-is.
pub fn write_pfm(path: &Path, img: &GrayImage) -> Result<()> {
    let tag = match img.channels {
        1 => "Pf",
        3 => "PF",
        c => {
            return Err(Error::MismatchedInput(format!(
                "PFM supports 1 or 3 channels, got {c}"
            )))
        }
    };
    ensure_parent(path)?;
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        write!(w, "{tag}\n{} {}\n-1.0\n", img.width, img.height)?;
        // PFM rows run bottom to top.
        for y in (0..img.height).rev() {
            for x in 0..img.width {
                for &v in img.pixel(x, y) {
                    w.write_all(&(v as f32).to_le_bytes())?;
                }
            }
        }
        w.flush()
    };
    write(&mut w).map_err(|e| Error::io(path, e))
}

pub(crate) fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    Ok(())
}

fn codec_err(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(source) => Error::io(path, source),
        other => Error::Image {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    }
}

/// Encode an RGB or gray image as PNG bytes in memory.
pub fn encode_png(img: &Image<u8>) -> Result<Vec<u8>> {
    use image::ImageEncoder;
    let color = match img.channels {
        1 => image::ExtendedColorType::L8,
        3 => image::ExtendedColorType::Rgb8,
        c => return Err(Error::MismatchedInput(format!("cannot PNG-encode {c} channels"))),
    };
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out)
        .write_image(&img.data, img.width as u32, img.height as u32, color)
        .map_err(|e| Error::Image {
            path: "<memory>".into(),
            message: e.to_string(),
        })?;
    Ok(out)
}

pub fn decode_png_rgb(bytes: &[u8]) -> Result<RgbImage> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Image {
            path: "<memory>".into(),
            message: e.to_string(),
        })?
        .to_rgb8();
    let (w, h) = img.dimensions();
    Image::from_vec(w as usize, h as usize, 3, img.into_raw())
}
