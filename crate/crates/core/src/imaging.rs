//! Scan enhancement: grayscale conversion, bilateral denoising and Otsu binarization.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("image has a zero dimension ({width}x{height})")]
    Empty { width: u32, height: u32 },
    #[error("pixel buffer length {len} does not match {width}x{height}")]
    BadBuffer { width: u32, height: u32, len: usize },
    #[error("invalid bilateral parameters: {0}")]
    BadParams(String),
    #[error("image i/o: {0}")]
    Io(#[from] image::ImageError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::Empty { width, height });
        }
        if pixels.len() != width as usize * height as usize {
            return Err(ImagingError::BadBuffer {
                width,
                height,
                len: pixels.len(),
            });
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Result<Self, ImagingError> {
        Self::new(width, height, vec![value; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Row-major intensities.
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn into_image(self) -> image::GrayImage {
        image::GrayImage::from_raw(self.width, self.height, self.pixels)
            .expect("dimensions checked at construction")
    }
}

/// Converts with BT.601 luma weights, rounding to the nearest level.
pub fn to_grayscale(rgb: &image::RgbImage) -> Result<GrayImage, ImagingError> {
    let (width, height) = rgb.dimensions();
    let pixels = rgb
        .pixels()
        .map(|p| {
            let [r, g, b] = p.0;
            let y = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
            y.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayImage::new(width, height, pixels)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilateralParams {
    pub sigma_spatial: f64,
    pub sigma_range: f64,
    pub radius: u32,
}

impl BilateralParams {
    /// Window half-width defaults to `ceil(3 * sigma_spatial)`.
    pub fn new(sigma_spatial: f64, sigma_range: f64, radius: Option<u32>) -> Result<Self, ImagingError> {
        if !(sigma_spatial > 0.0 && sigma_spatial.is_finite()) {
            return Err(ImagingError::BadParams(format!(
                "sigma_spatial must be positive, got {sigma_spatial}"
            )));
        }
        if !(sigma_range > 0.0 && sigma_range.is_finite()) {
            return Err(ImagingError::BadParams(format!(
                "sigma_range must be positive, got {sigma_range}"
            )));
        }
        let radius = radius.unwrap_or_else(|| (3.0 * sigma_spatial).ceil() as u32);
        if radius == 0 {
            return Err(ImagingError::BadParams("radius must be at least 1".into()));
        }
        Ok(BilateralParams {
            sigma_spatial,
            sigma_range,
            radius,
        })
    }
}

impl Default for BilateralParams {
    fn default() -> Self {
        BilateralParams::new(2.0, 30.0, None).expect("valid defaults")
    }
}

/// Edge-preserving smoothing; out-of-image coordinates are clamped to the border.
pub fn bilateral_filter(img: &GrayImage, p: &BilateralParams) -> GrayImage {
    let r = p.radius as i64;
    let (w, h) = (img.width as i64, img.height as i64);
    let spatial_denom = 2.0 * p.sigma_spatial * p.sigma_spatial;
    let range_denom = 2.0 * p.sigma_range * p.sigma_range;

    let side = (2 * r + 1) as usize;
    let mut spatial = Vec::with_capacity(side * side);
    for dy in -r..=r {
        for dx in -r..=r {
            spatial.push((-((dx * dx + dy * dy) as f64) / spatial_denom).exp());
        }
    }
    let range: Vec<f64> = (0..256)
        .map(|d| (-((d * d) as f64) / range_denom).exp())
        .collect();

    let mut out = Vec::with_capacity(img.pixels.len());
    for y in 0..h {
        for x in 0..w {
            let center = img.pixels[(y * w + x) as usize];
            let mut num = 0.0;
            let mut den = 0.0;
            let mut k = 0;
            for dy in -r..=r {
                let yy = (y + dy).clamp(0, h - 1);
                for dx in -r..=r {
                    let xx = (x + dx).clamp(0, w - 1);
                    let v = img.pixels[(yy * w + xx) as usize];
                    let wgt = spatial[k] * range[center.abs_diff(v) as usize];
                    num += wgt * v as f64;
                    den += wgt;
                    k += 1;
                }
            }
            // The center weight is 1, so den >= 1.
            out.push((num / den).round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage {
        width: img.width,
        height: img.height,
        pixels: out,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OtsuResult {
    pub threshold: u8,
    /// 0 where the input is `<= threshold`, 255 elsewhere.
    pub binary: GrayImage,
}

/// Global threshold maximizing between-class variance, smallest `t` on ties.
pub fn otsu_threshold(img: &GrayImage) -> OtsuResult {
    let mut hist = [0u64; 256];
    for &p in &img.pixels {
        hist[p as usize] += 1;
    }
    let distinct: Vec<usize> = (0..256).filter(|&i| hist[i] > 0).collect();
    let threshold = if distinct.len() == 1 {
        distinct[0] as u8
    } else {
        best_threshold(&hist)
    };
    let binary = img
        .pixels
        .iter()
        .map(|&p| if p <= threshold { 0 } else { 255 })
        .collect();
    OtsuResult {
        threshold,
        binary: GrayImage {
            width: img.width,
            height: img.height,
            pixels: binary,
        },
    }
}

fn best_threshold(hist: &[u64; 256]) -> u8 {
    let total: u64 = hist.iter().sum();
    let total_sum: u128 = hist
        .iter()
        .enumerate()
        .map(|(i, &c)| i as u128 * c as u128)
        .sum();
    let mut n0: u64 = 0;
    let mut s0: u128 = 0;
    let mut best_t = 0u8;
    let mut best = f64::NEG_INFINITY;
    for (t, &count) in hist.iter().enumerate().take(255) {
        n0 += count;
        s0 += t as u128 * count as u128;
        let n1 = total - n0;
        // omega0 * omega1 * (mu0 - mu1)^2 == (n1*s0 - n0*s1)^2 / (N^2 * n0 * n1);
        // the common 1/N^2 factor does not affect the argmax.
        let score = if n0 == 0 || n1 == 0 {
            0.0
        } else {
            let s1 = total_sum - s0;
            let diff = (n1 as i128 * s0 as i128 - n0 as i128 * s1 as i128) as f64;
            diff * diff / (n0 as f64 * n1 as f64)
        };
        if score > best {
            best = score;
            best_t = t as u8;
        }
    }
    best_t
}

/// grayscale -> bilateral -> Otsu.
pub fn enhance(rgb: &image::RgbImage, p: &BilateralParams) -> Result<OtsuResult, ImagingError> {
    let gray = to_grayscale(rgb)?;
    Ok(otsu_threshold(&bilateral_filter(&gray, p)))
}

/// Reads any supported raster (PNG, PGM/PPM) as RGB.
pub fn read_rgb(path: &Path) -> Result<image::RgbImage, ImagingError> {
    Ok(image::open(path)?.to_rgb8())
}

/// Writes an 8-bit binary PGM (P5).
pub fn write_pgm(img: &GrayImage, path: &Path) -> Result<(), ImagingError> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    std::fs::write(path, out).map_err(|e| ImagingError::Io(image::ImageError::IoError(e)))
}

/// Writes PGM for `.pgm` paths, otherwise whatever format the extension selects.
pub fn write_gray(img: &GrayImage, path: &Path) -> Result<(), ImagingError> {
    let is_pgm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        write_pgm(img, path)
    } else {
        Ok(img.clone().into_image().save(path)?)
    }
}
