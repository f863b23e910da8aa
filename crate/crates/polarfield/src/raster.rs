//! Pixel containers: single images and per-light frame stacks.
//!
//! Storage is f32 (the on-disk PFM precision) so that a pipeline stage,
//! dumped and reloaded, continues bit-for-bit identically to one that never
//! touched disk. Per-pixel math happens in f64 and is materialized back to
//! f32 at stage boundaries.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RasterError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },
}

/// Row-major, channel-interleaved float image (1 or 3 channels).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Image {
        assert!(channels == 1 || channels == 3, "1 or 3 channels only");
        Image { width, height, channels, data: vec![0.0; width * height * channels] }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Image, RasterError> {
        if data.len() != width * height * channels {
            return Err(RasterError::DimensionMismatch {
                expected: format!("{} values", width * height * channels),
                got: format!("{} values", data.len()),
            });
        }
        assert!(channels == 1 || channels == 3, "1 or 3 channels only");
        Ok(Image { width, height, channels, data })
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

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    fn offset(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        (y * self.width + x) * self.channels
    }

    /// RGB value at (x, y); single-channel images broadcast.
    pub fn rgb(&self, x: usize, y: usize) -> [f64; 3] {
        let o = self.offset(x, y);
        if self.channels == 3 {
            [self.data[o] as f64, self.data[o + 1] as f64, self.data[o + 2] as f64]
        } else {
            let v = self.data[o] as f64;
            [v, v, v]
        }
    }

    pub fn gray(&self, x: usize, y: usize) -> f64 {
        let o = self.offset(x, y);
        self.data[o] as f64
    }

    pub fn set_rgb(&mut self, x: usize, y: usize, v: [f64; 3]) {
        let o = self.offset(x, y);
        match self.channels {
            3 => {
                self.data[o] = v[0] as f32;
                self.data[o + 1] = v[1] as f32;
                self.data[o + 2] = v[2] as f32;
            }
            _ => self.data[o] = v[0] as f32,
        }
    }

    pub fn set_gray(&mut self, x: usize, y: usize, v: f64) {
        let o = self.offset(x, y);
        self.data[o] = v as f32;
    }

    /// Per-pixel mutable chunks in row-major order; the unit of parallelism
    /// for deterministic per-pixel writes.
    pub fn pixels_mut(&mut self) -> std::slice::ChunksMut<'_, f32> {
        self.data.chunks_mut(self.channels)
    }

    pub fn same_shape(&self, o: &Image) -> bool {
        self.width == o.width && self.height == o.height && self.channels == o.channels
    }
}

/// A stack of N same-shaped frames, one per light.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    frames: Vec<Image>,
}

impl FrameStack {
    pub fn new(frames: Vec<Image>) -> Result<FrameStack, RasterError> {
        if let Some(first) = frames.first() {
            for f in &frames[1..] {
                if !f.same_shape(first) {
                    return Err(RasterError::DimensionMismatch {
                        expected: format!("{}x{}x{}", first.width, first.height, first.channels),
                        got: format!("{}x{}x{}", f.width, f.height, f.channels),
                    });
                }
            }
        }
        Ok(FrameStack { frames })
    }

    pub fn zeros(n: usize, width: usize, height: usize, channels: usize) -> FrameStack {
        FrameStack { frames: (0..n).map(|_| Image::zeros(width, height, channels)).collect() }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames.first().map_or(0, Image::width)
    }

    pub fn height(&self) -> usize {
        self.frames.first().map_or(0, Image::height)
    }

    pub fn frame(&self, k: usize) -> &Image {
        &self.frames[k]
    }

    pub fn frame_mut(&mut self, k: usize) -> &mut Image {
        &mut self.frames[k]
    }

    pub fn frames(&self) -> &[Image] {
        &self.frames
    }

    /// The length-N RGB sequence seen by one pixel.
    pub fn signal_at(&self, x: usize, y: usize) -> Vec<[f64; 3]> {
        self.frames.iter().map(|f| f.rgb(x, y)).collect()
    }

    pub fn write_signal(&mut self, x: usize, y: usize, samples: &[[f64; 3]]) {
        assert_eq!(samples.len(), self.frames.len());
        for (frame, s) in self.frames.iter_mut().zip(samples) {
            frame.set_rgb(x, y, *s);
        }
    }
}

/// Rec. 709 luma; the scalar collapse used for all specular fits.
pub fn luminance(rgb: [f64; 3]) -> f64 {
    0.2126 * rgb[0] + 0.7152 * rgb[1] + 0.0722 * rgb[2]
}
