//! 8-bit image grids and their on-disk containers (binary PGM/PPM and raw bytes).

use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};

use crate::error::{Error, Result};

/// `H × W × C` grid of byte pixels, row-major with channels innermost.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<u8>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "image extents must be positive, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Shape(format!(
                "unsupported channel count {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{height}x{width}x{channels} image needs {} bytes, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::new(height, width, channels, vec![0; height * width * channels])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> u8,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for i in 0..height {
            for j in 0..width {
                for c in 0..channels {
                    data.push(f(i, j, c));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of coded symbols, `H·W·C`.
    pub fn dimensions(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    /// Pixel `(i, j)` (0-indexed) as a channel slice.
    pub fn pixel(&self, i: usize, j: usize) -> &[u8] {
        let o = (i * self.width + j) * self.channels;
        &self.data[o..o + self.channels]
    }

    pub fn pixel_mut(&mut self, i: usize, j: usize) -> &mut [u8] {
        let o = (i * self.width + j) * self.channels;
        &mut self.data[o..o + self.channels]
    }

    pub fn get(&self, i: usize, j: usize, c: usize) -> u8 {
        self.data[(i * self.width + j) * self.channels + c]
    }

    pub fn set(&mut self, i: usize, j: usize, c: usize, v: u8) {
        self.data[(i * self.width + j) * self.channels + c] = v;
    }

    /// Parses a binary PGM (P5) or PPM (P6) file with maxval 255.
    pub fn from_pnm(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Pnm)
            .map_err(|e| Error::Image(e.to_string()))?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        match img {
            DynamicImage::ImageLuma8(buf) => Self::new(h, w, 1, buf.into_raw()),
            DynamicImage::ImageRgb8(buf) => Self::new(h, w, 3, buf.into_raw()),
            other => Err(Error::Image(format!(
                "only 8-bit grayscale or RGB netpbm images are supported, got {:?}",
                other.color()
            ))),
        }
    }

    /// PGM for one channel, PPM for three.
    pub fn to_pnm(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        let (subtype, color) = match self.channels {
            1 => (
                PnmSubtype::Graymap(SampleEncoding::Binary),
                ExtendedColorType::L8,
            ),
            _ => (
                PnmSubtype::Pixmap(SampleEncoding::Binary),
                ExtendedColorType::Rgb8,
            ),
        };
        PnmEncoder::new(&mut out)
            .with_subtype(subtype)
            .write_image(&self.data, self.width as u32, self.height as u32, color)
            .map_err(|e| Error::Image(e.to_string()))?;
        Ok(out)
    }

    /// Headerless bytes; the caller supplies the geometry.
    pub fn from_raw(bytes: Vec<u8>, height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::new(height, width, channels, bytes)
    }

    /// Reads a netpbm file, or a raw file when `raw` carries `(height, width, channels)`.
    pub fn read(path: impl AsRef<Path>, raw: Option<(usize, usize, usize)>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        match raw {
            Some((h, w, c)) => Self::from_raw(bytes, h, w, c),
            None => Self::from_pnm(&bytes),
        }
    }

    /// Writes raw bytes for a `.raw` extension, netpbm otherwise.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("raw") => self.data.clone(),
            _ => self.to_pnm()?,
        };
        std::fs::write(path, bytes)?;
        Ok(())
    }
}
