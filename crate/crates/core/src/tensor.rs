//! Dense channel-last grids used for latent textures, latent images and
//! scalar per-texel buffers.

use crate::error::{shape_err, Result};

/// Row-major, channel-last `height × width × channels` grid of `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

/// Shared texture map holding diffusion latents (or RGB) in UV space.
pub type LatentTexture = Grid;
/// Image rendered from a camera.
pub type LatentImage = Grid;

impl Grid {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(shape_err(format!(
                "{} values for a {height}x{width}x{channels} grid",
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

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for row in 0..height {
            for col in 0..width {
                for ch in 0..channels {
                    data.push(f(row, col, ch));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of cells (`height × width`), not counting channels.
    #[inline]
    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// Channel vector of one cell, addressed by flat cell index.
    #[inline]
    pub fn cell(&self, index: usize) -> &[f32] {
        let c = self.channels;
        &self.data[index * c..(index + 1) * c]
    }

    #[inline]
    pub fn cell_mut(&mut self, index: usize) -> &mut [f32] {
        let c = self.channels;
        &mut self.data[index * c..(index + 1) * c]
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: f32) {
        self.data[(row * self.width + col) * self.channels + ch] = value;
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.dims() == other.dims()
    }

    pub fn ensure_same_shape(&self, other: &Grid, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(shape_err(format!(
                "{what}: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, mut f: impl FnMut(f32) -> f32) -> Grid {
        Grid {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f32) -> Grid {
        self.map(|v| v * s)
    }

    /// Largest absolute elementwise difference. Shapes must match.
    pub fn max_abs_diff(&self, other: &Grid) -> f32 {
        debug_assert!(self.same_shape(other));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    /// Inner product accumulated in `f64`.
    pub fn dot(&self, other: &Grid) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum()
    }

    /// Nearest-neighbour resize of the spatial dimensions.
    pub fn resize_nearest(&self, height: usize, width: usize) -> Grid {
        let c = self.channels;
        let mut out = Grid::zeros(height, width, c);
        for row in 0..height {
            let src_row = (row * self.height) / height;
            for col in 0..width {
                let src_col = (col * self.width) / width;
                let src = (src_row * self.width + src_col) * c;
                let dst = (row * width + col) * c;
                out.data[dst..dst + c].copy_from_slice(&self.data[src..src + c]);
            }
        }
        out
    }

    /// Extracts a single channel as a one-channel grid.
    pub fn channel(&self, ch: usize) -> Grid {
        let mut out = Grid::zeros(self.height, self.width, 1);
        for (i, v) in out.data.iter_mut().enumerate() {
            *v = self.data[i * self.channels + ch];
        }
        out
    }

    /// Converts to channel-height-width order.
    pub fn to_chw(&self) -> Vec<f32> {
        let (h, w, c) = self.dims();
        let mut out = vec![0.0; h * w * c];
        for i in 0..h * w {
            for ch in 0..c {
                out[ch * h * w + i] = self.data[i * c + ch];
            }
        }
        out
    }

    pub fn from_chw(channels: usize, height: usize, width: usize, chw: &[f32]) -> Result<Grid> {
        if chw.len() != channels * height * width {
            return Err(shape_err(format!(
                "{} values for a {channels}x{height}x{width} tensor",
                chw.len()
            )));
        }
        let mut out = Grid::zeros(height, width, channels);
        for i in 0..height * width {
            for ch in 0..channels {
                out.data[i * channels + ch] = chw[ch * height * width + i];
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chw_round_trip() {
        let g = Grid::from_fn(3, 5, 4, |r, c, ch| (r * 100 + c * 10 + ch) as f32);
        let chw = g.to_chw();
        assert_eq!(chw[0], 0.0);
        assert_eq!(chw[15], 1.0);
        assert_eq!(Grid::from_chw(4, 3, 5, &chw).unwrap(), g);
    }

    #[test]
    fn nearest_upsample_by_two_replicates_blocks() {
        let g = Grid::from_fn(2, 2, 1, |r, c, _| (r * 2 + c) as f32);
        let up = g.resize_nearest(4, 4);
        assert_eq!(up.get(0, 1, 0), 0.0);
        assert_eq!(up.get(1, 3, 0), 1.0);
        assert_eq!(up.get(3, 0, 0), 2.0);
        assert_eq!(up.get(2, 2, 0), 3.0);
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Grid::from_vec(2, 2, 2, vec![0.0; 7]).is_err());
    }
}
