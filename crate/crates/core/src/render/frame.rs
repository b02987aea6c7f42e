use crate::error::{Error, Result};

/// An 8-bit raster, row-major, interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("unsupported channel count {channels}")));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::invalid(format!(
                "pixel buffer of {} bytes does not match {width}x{height}x{channels}",
                pixels.len()
            )));
        }
        Ok(Frame {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Self {
        Frame {
            width,
            height,
            channels,
            pixels: vec![value; width * height * channels],
        }
    }

    pub fn gray(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        Self::new(width, height, 1, pixels)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    /// Luma with the fixed 0.299/0.587/0.114 weights; identity for gray frames.
    pub fn luma(&self) -> Vec<f64> {
        match self.channels {
            1 => self.pixels.iter().map(|&p| p as f64).collect(),
            _ => self
                .pixels
                .chunks_exact(3)
                .map(|px| 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64)
                .collect(),
        }
    }

    /// Grayscale copy, rounding luma to the nearest level.
    pub fn to_gray(&self) -> Frame {
        if self.channels == 1 {
            return self.clone();
        }
        let pixels = self
            .luma()
            .into_iter()
            .map(|l| l.round().clamp(0.0, 255.0) as u8)
            .collect();
        Frame {
            width: self.width,
            height: self.height,
            channels: 1,
            pixels,
        }
    }

    pub fn same_shape(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }
}
