//! Single-channel floating point images.

use std::path::Path;

use image::{ImageBuffer, Luma};

use crate::{Error, Result};

/// Row-major grayscale image. Pixel `(x, y)` is stored at `y * width + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Raster {
    pub fn new(width: usize, height: usize, fill: f32) -> Self {
        Self { width, height, data: vec![fill; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "{} values for a {width}x{height} raster",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    /// Pixel lookup with coordinates clamped to the border.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    /// Bilinear interpolation with border replication outside the frame.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f32 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = (x - x0) as f32;
        let fy = (y - y0) as f32;
        let (xi, yi) = (x0 as isize, y0 as isize);
        if fx == 0.0 && fy == 0.0 {
            return self.get_clamped(xi, yi);
        }
        let v00 = self.get_clamped(xi, yi);
        let v10 = self.get_clamped(xi + 1, yi);
        let v01 = self.get_clamped(xi, yi + 1);
        let v11 = self.get_clamped(xi + 1, yi + 1);
        let top = v00 + (v10 - v00) * fx;
        let bottom = v01 + (v11 - v01) * fx;
        top + (bottom - top) * fy
    }

    pub fn map_inplace(&mut self, f: impl Fn(f32) -> f32) {
        self.data.iter_mut().for_each(|v| *v = f(*v));
    }

    pub fn clamp(&mut self, lo: f32, hi: f32) {
        self.map_inplace(|v| v.clamp(lo, hi));
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len().max(1) as f64
    }

    /// Copy of the `w`×`h` window whose top-left pixel is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Raster {
        let mut out = Raster::new(w, h, 0.0);
        for y in 0..h {
            let src = &self.data[(y0 + y) * self.width + x0..][..w];
            out.data[y * w..(y + 1) * w].copy_from_slice(src);
        }
        out
    }

    /// Separable convolution with a symmetric 1-D kernel, replicating borders.
    pub fn convolve_separable(&self, kernel: &[f32]) -> Raster {
        let r = (kernel.len() / 2) as isize;
        let (w, h) = (self.width, self.height);
        let mut tmp = Raster::new(w, h, 0.0);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0f32;
                for (k, &kv) in kernel.iter().enumerate() {
                    acc += kv * self.get_clamped(x as isize + k as isize - r, y as isize);
                }
                tmp.data[y * w + x] = acc;
            }
        }
        let mut out = Raster::new(w, h, 0.0);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0f32;
                for (k, &kv) in kernel.iter().enumerate() {
                    acc += kv * tmp.get_clamped(x as isize, y as isize + k as isize - r);
                }
                out.data[y * w + x] = acc;
            }
        }
        out
    }

    /// Reads a grayscale PNG (8 or 16 bit) and maps it to `[0, 1]`.
    pub fn read_png(path: &Path) -> Result<Raster> {
        let img = image::open(path).map_err(|source| Error::Image { path: path.into(), source })?;
        let gray = img.into_luma16();
        let (w, h) = gray.dimensions();
        let data = gray.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect();
        Raster::from_vec(w as usize, h as usize, data)
    }

    /// Encodes as a 16-bit grayscale PNG; values are clipped to `[0, 1]` and
    /// mapped linearly onto `[0, 65535]`.
    pub fn to_png16(&self) -> Vec<u8> {
        let raw: Vec<u16> =
            self.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16).collect();
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, raw)
                .expect("buffer size matches dimensions");
        let mut bytes = Vec::new();
        buf.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
            .expect("in-memory PNG encoding cannot fail");
        bytes
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_png16())
    }
}

/// Normalized Gaussian kernel of odd length `size`.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f32> {
    let r = (size / 2) as f64;
    let raw: Vec<f64> =
        (0..size).map(|i| (-(i as f64 - r).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|v| (v / sum) as f32).collect()
}

/// Odd kernel length covering ±3σ.
pub fn gaussian_kernel_size(sigma: f64) -> usize {
    2 * (3.0 * sigma).ceil().max(1.0) as usize + 1
}
