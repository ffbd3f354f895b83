//! Image rasters: loading, grayscale conversion, resizing, and PGM output.

use std::path::Path;

use crate::numerics::Tensor;
use crate::{Error, Result};

/// A grayscale image with values in [0, 1].
#[derive(Debug, Clone)]
pub struct GrayRaster {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayRaster {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Input(format!("zero-dimension raster {width}×{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::Input(format!(
                "raster {width}×{height} wants {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(GrayRaster { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }
}

/// An RGB image with per-channel values in [0, 1], stored channel-major.
#[derive(Debug, Clone)]
pub struct RgbRaster {
    width: usize,
    height: usize,
    /// 3 × height × width.
    channels: Vec<f64>,
}

impl RgbRaster {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Channel-mean grayscale view.
    pub fn to_gray(&self) -> GrayRaster {
        let hw = self.width * self.height;
        let pixels = (0..hw)
            .map(|i| (self.channels[i] + self.channels[hw + i] + self.channels[2 * hw + i]) / 3.0)
            .collect();
        GrayRaster { width: self.width, height: self.height, pixels }
    }

    /// Bilinear resize to `size`×`size`, then pack as a [3×size×size] tensor.
    pub fn to_model_tensor(&self, size: usize) -> Result<Tensor> {
        let hw = self.width * self.height;
        let mut data = Vec::with_capacity(3 * size * size);
        for c in 0..3 {
            let plane = &self.channels[c * hw..(c + 1) * hw];
            data.extend(bilinear_resize(plane, self.width, self.height, size, size));
        }
        Tensor::new(vec![3, size, size], data)
    }
}

/// Load a PNG or PGM image file.
pub fn load_image(path: &Path) -> Result<RgbRaster> {
    let img = image::open(path)
        .map_err(|e| Error::Input(format!("cannot read image {}: {e}", path.display())))?;
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::Input(format!("zero-dimension raster in {}", path.display())));
    }
    let hw = w * h;
    let mut channels = vec![0.0; 3 * hw];
    for (i, px) in rgb.pixels().enumerate() {
        channels[i] = px.0[0] as f64 / 255.0;
        channels[hw + i] = px.0[1] as f64 / 255.0;
        channels[2 * hw + i] = px.0[2] as f64 / 255.0;
    }
    Ok(RgbRaster { width: w, height: h, channels })
}

/// Write an 8-bit binary PGM (P5). Values are clamped to [0, 1] and scaled.
pub fn write_pgm(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::Input(format!(
            "PGM {width}×{height} wants {} values, got {}",
            width * height,
            values.len()
        )));
    }
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend(values.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Bilinear interpolation with half-pixel sample alignment.
pub fn bilinear_resize(
    src: &[f64],
    src_w: usize,
    src_h: usize,
    dst_w: usize,
    dst_h: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; dst_w * dst_h];
    let sx = src_w as f64 / dst_w as f64;
    let sy = src_h as f64 / dst_h as f64;
    for dy in 0..dst_h {
        let fy = ((dy as f64 + 0.5) * sy - 0.5).clamp(0.0, (src_h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(src_h - 1);
        let wy = fy - y0 as f64;
        for dx in 0..dst_w {
            let fx = ((dx as f64 + 0.5) * sx - 0.5).clamp(0.0, (src_w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(src_w - 1);
            let wx = fx - x0 as f64;
            let top = src[y0 * src_w + x0] * (1.0 - wx) + src[y0 * src_w + x1] * wx;
            let bottom = src[y1 * src_w + x0] * (1.0 - wx) + src[y1 * src_w + x1] * wx;
            out[dy * dst_w + dx] = top * (1.0 - wy) + bottom * wy;
        }
    }
    out
}
