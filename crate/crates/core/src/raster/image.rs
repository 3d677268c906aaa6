use std::path::Path as FsPath;

use crate::error::{Error, Result};
use crate::svg::Rgb;

/// Row-major image with 3 (RGB) or 4 (RGBA) channels of scalars in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        assert!(channels == 3 || channels == 4, "images have 3 or 4 channels");
        Image { width, height, channels, data: vec![0.0; width * height * channels] }
    }

    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        let mut img = Image::new(width, height, 3);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&color.0);
        }
        img
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if !(channels == 3 || channels == 4) || data.len() != width * height * channels {
            return Err(Error::contract(format!(
                "image data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Image { width, height, channels, data })
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        (y * self.width + x) * self.channels
    }

    #[inline]
    pub fn rgb(&self, x: usize, y: usize) -> Rgb {
        let i = self.index(x, y);
        Rgb([self.data[i], self.data[i + 1], self.data[i + 2]])
    }

    #[inline]
    pub fn alpha(&self, x: usize, y: usize) -> f64 {
        if self.channels == 4 {
            self.data[self.index(x, y) + 3]
        } else {
            1.0
        }
    }

    pub fn set_rgb(&mut self, x: usize, y: usize, c: Rgb) {
        let i = self.index(x, y);
        self.data[i..i + 3].copy_from_slice(&c.0);
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Drop alpha by compositing over `background`.
    pub fn to_rgb(&self, background: Rgb) -> Image {
        if self.channels == 3 {
            return self.clone();
        }
        let mut out = Image::new(self.width, self.height, 3);
        for (src, dst) in self.data.chunks_exact(4).zip(out.data.chunks_exact_mut(3)) {
            let a = src[3];
            for c in 0..3 {
                dst[c] = a * src[c] + (1.0 - a) * background.0[c];
            }
        }
        out
    }

    /// Box-filter resampling (exact area overlap); alpha is resampled like color.
    pub fn resized(&self, width: usize, height: usize) -> Image {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let ch = self.channels;
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let spans = |n_out: usize, scale: f64, n_in: usize| -> Vec<Vec<(usize, f64)>> {
            (0..n_out)
                .map(|o| {
                    let lo = o as f64 * scale;
                    let hi = ((o + 1) as f64 * scale).min(n_in as f64);
                    let mut v = Vec::new();
                    let mut i = lo.floor() as usize;
                    while (i as f64) < hi && i < n_in {
                        let w = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                        if w > 0.0 {
                            v.push((i, w));
                        }
                        i += 1;
                    }
                    let total: f64 = v.iter().map(|(_, w)| w).sum();
                    v.iter_mut().for_each(|(_, w)| *w /= total);
                    v
                })
                .collect()
        };
        let xs = spans(width, sx, self.width);
        let ys = spans(height, sy, self.height);
        let mut out = Image::new(width, height, ch);
        for (oy, yspan) in ys.iter().enumerate() {
            for (ox, xspan) in xs.iter().enumerate() {
                let o = (oy * width + ox) * ch;
                for &(iy, wy) in yspan {
                    for &(ix, wx) in xspan {
                        let i = (iy * self.width + ix) * ch;
                        for c in 0..ch {
                            out.data[o + c] += wx * wy * self.data[i + c];
                        }
                    }
                }
            }
        }
        out
    }

    /// Read an 8-bit PNG; gray is expanded to RGB, values map by `x / 255`.
    pub fn load_png(path: impl AsRef<FsPath>) -> Result<Image> {
        let dynamic = ::image::open(path.as_ref())?;
        let (channels, raw, w, h) = if dynamic.color().has_alpha() {
            let buf = dynamic.to_rgba8();
            (4, buf.as_raw().clone(), buf.width(), buf.height())
        } else {
            let buf = dynamic.to_rgb8();
            (3, buf.as_raw().clone(), buf.width(), buf.height())
        };
        let data = raw.iter().map(|&v| v as f64 / 255.0).collect();
        Image::from_data(w as usize, h as usize, channels, data)
    }

    /// 8-bit quantized bytes, `round(x * 255)`.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }

    /// The image as it reads back from an 8-bit PNG.
    pub fn quantized(&self) -> Image {
        let data = self.to_u8().iter().map(|&v| v as f64 / 255.0).collect();
        Image { data, ..self.clone() }
    }

    pub fn save_png(&self, path: impl AsRef<FsPath>) -> Result<()> {
        let color =
            if self.channels == 4 { ::image::ExtendedColorType::Rgba8 } else { ::image::ExtendedColorType::Rgb8 };
        ::image::save_buffer(path.as_ref(), &self.to_u8(), self.width as u32, self.height as u32, color)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_roundtrip_quantizes() {
        let dir = std::env::temp_dir().join(format!("svgcustom-png-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let file = dir.join("a.png");
        let mut img = Image::filled(5, 4, Rgb::new(0.5, 0.25, 1.0));
        img.set_rgb(1, 2, Rgb::new(0.0, 1.0, 0.0));
        img.save_png(&file).unwrap();
        let back = Image::load_png(&file).unwrap();
        assert_eq!(back.channels, 3);
        assert_eq!(back.to_u8(), img.to_u8());
        assert_eq!(back.rgb(1, 2), Rgb::new(0.0, 1.0, 0.0));
        assert!((back.rgb(0, 0).0[0] - 128.0 / 255.0).abs() < 1e-12);
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn resize_preserves_mean() {
        let mut img = Image::new(6, 6, 3);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = (i % 7) as f64 / 7.0;
        }
        let mean = |im: &Image| im.data.iter().sum::<f64>() / im.data.len() as f64;
        for (w, h) in [(3, 3), (4, 5), (12, 12)] {
            let r = img.resized(w, h);
            assert!((mean(&r) - mean(&img)).abs() < 1e-12, "{w}x{h}");
        }
    }
}
