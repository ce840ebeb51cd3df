//! Dense float rasters, the `IMGF` format and 8-bit image files.

use std::path::Path;

use crate::io::{self, ByteReader, ByteWriter};
use crate::{Error, Result};

pub const IMGF_MAGIC: &[u8; 4] = b"IMGF";

/// Value written to depth files for pixels without a valid depth.
pub const INVALID_DEPTH: f32 = -1.0;

/// A `height x width x channels` raster, row-major with interleaved channels.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        Raster {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::Structural(format!(
                "raster {width}x{height}x{channels} needs {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Raster {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds a raster by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, &mut [f32]),
    ) -> Self {
        let mut r = Self::new(width, height, channels);
        for y in 0..height {
            for x in 0..width {
                f(x, y, r.pixel_mut(x, y));
            }
        }
        r
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

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn same_shape(&self, other: &Raster) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn ensure_same_shape(&self, other: &Raster) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Structural(format!(
                "raster shapes differ: {}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )));
        }
        Ok(())
    }

    /// Snaps every value to the nearest 8-bit level, exactly as a PNG round
    /// trip would.
    pub fn quantized(&self) -> Raster {
        let data = self
            .data
            .iter()
            .map(|&v| quantize_u8(v) as f32 / 255.0)
            .collect();
        Raster { data, ..*self }
    }

    pub fn to_imgf_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new(IMGF_MAGIC, self.data.len() * 4);
        w.u32(self.width as u32);
        w.u32(self.height as u32);
        w.u32(self.channels as u32);
        w.f32s(self.data.iter().copied());
        w.into_bytes()
    }

    pub fn from_imgf_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::open(bytes, IMGF_MAGIC)?;
        let width = io::dim(r.offset(), r.u32()?, "width")?;
        let height = io::dim(r.offset(), r.u32()?, "height")?;
        let channels = io::dim(r.offset(), r.u32()?, "channels")?;
        let n = width
            .checked_mul(height)
            .and_then(|v| v.checked_mul(channels))
            .ok_or_else(|| Error::format(r.offset(), "raster size overflows"))?;
        let data = r.f32s(n)?;
        r.finish()?;
        Ok(Raster {
            width,
            height,
            channels,
            data,
        })
    }
}

/// Linear quantisation to 8 bits with round-half-even.
pub fn quantize_u8(v: f32) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * 255.0).round_ties_even() as u8
}

/// Writes a float raster in the `IMGF` format.
pub fn write_raster(raster: &Raster, path: &Path) -> Result<()> {
    io::write_atomic(path, &raster.to_imgf_bytes())
}

pub fn read_raster(path: &Path) -> Result<Raster> {
    Raster::from_imgf_bytes(&io::read_bytes(path)?)
}

/// Writes a depth raster, replacing NaN (invalid) pixels with [`INVALID_DEPTH`].
pub fn write_depth(depth: &Raster, path: &Path) -> Result<()> {
    let mut d = depth.clone();
    for v in d.data_mut() {
        if v.is_nan() {
            *v = INVALID_DEPTH;
        }
    }
    write_raster(&d, path)
}

/// Writes an RGB (3-channel) or grey (1-channel) raster as an 8-bit image.
///
/// The container is picked from the extension: `.ppm`/`.pgm` give binary
/// netpbm, anything else PNG.
pub fn write_image(raster: &Raster, path: &Path) -> Result<()> {
    let color = match raster.channels() {
        1 => image::ExtendedColorType::L8,
        3 => image::ExtendedColorType::Rgb8,
        c => {
            return Err(Error::Structural(format!(
                "8-bit images need 1 or 3 channels, got {c}"
            )))
        }
    };
    let bytes: Vec<u8> = raster.data().iter().map(|&v| quantize_u8(v)).collect();
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("ppm") | Some("pgm") | Some("pnm") => image::ImageFormat::Pnm,
        _ => image::ImageFormat::Png,
    };
    let mut encoded = std::io::Cursor::new(Vec::new());
    image::write_buffer_with_format(
        &mut encoded,
        &bytes,
        raster.width() as u32,
        raster.height() as u32,
        color,
        format,
    )
    .map_err(|e| Error::Image {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    io::write_atomic(path, encoded.get_ref())
}

/// Reads an 8-bit image as a 3-channel raster with values in `[0, 1]`.
pub fn read_image(path: &Path) -> Result<Raster> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb
        .into_raw()
        .into_iter()
        .map(|b| b as f32 / 255.0)
        .collect();
    Raster::from_data(w as usize, h as usize, 3, data)
}
