//! PNG images as colour point clouds in `[0, 1]³`.

use std::path::Path;

use image::{ColorType, ImageFormat, RgbImage};
use rand::seq::index;
use rand_chacha::ChaCha8Rng;

use crate::error::{CliError, CliResult};
use crate::output::write_atomic;

pub struct ColourImage {
    pub width: u32,
    pub height: u32,
    /// Row-major pixels.
    pub pixels: Vec<Vec<f64>>,
}

pub fn to_unit(v: u8) -> f64 {
    v as f64 / 255.0
}

pub fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

impl ColourImage {
    pub fn load(path: &Path) -> CliResult<Self> {
        let img = image::open(path).map_err(|source| CliError::Image {
            path: path.to_path_buf(),
            source,
        })?;
        if img.color() != ColorType::Rgb8 {
            return Err(CliError::NotRgb {
                path: path.to_path_buf(),
                found: format!("{:?}", img.color()),
            });
        }
        let rgb = img.into_rgb8();
        let pixels = rgb.pixels().map(|p| p.0.iter().map(|&c| to_unit(c)).collect()).collect();
        Ok(Self {
            width: rgb.width(),
            height: rgb.height(),
            pixels,
        })
    }

    /// Clamps to `[0, 1]` and rounds to 8 bits.
    pub fn save(&self, path: &Path) -> CliResult<()> {
        let mut buf = Vec::with_capacity(self.pixels.len() * 3);
        for p in &self.pixels {
            buf.extend(p.iter().map(|&v| to_byte(v)));
        }
        let img = RgbImage::from_raw(self.width, self.height, buf)
            .ok_or_else(|| CliError::Usage(format!("pixel count does not match {}x{}", self.width, self.height)))?;
        let mut bytes = Vec::new();
        img.write_to(&mut std::io::Cursor::new(&mut bytes), ImageFormat::Png)
            .map_err(|source| CliError::Image {
                path: path.to_path_buf(),
                source,
            })?;
        write_atomic(path, |w| w.write_all(&bytes).map_err(crate::error::io_err(path)))?;
        Ok(())
    }

    /// Up to `budget` distinct pixels, drawn uniformly without replacement.
    pub fn subsample(&self, budget: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        if budget >= self.pixels.len() {
            return self.pixels.clone();
        }
        let mut picked = index::sample(rng, self.pixels.len(), budget).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| self.pixels[i].clone()).collect()
    }
}
