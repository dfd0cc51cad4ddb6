//! Face images: pixel normalization, cropping and PNG I/O.

use std::path::Path;

use image::imageops::{self, FilterType};
use image::{Rgb, RgbImage};

use crate::error::{Error, Result};

pub const FACE_SIZE: usize = 64;
pub const FACE_CHANNELS: usize = 3;
pub const FACE_LEN: usize = FACE_CHANNELS * FACE_SIZE * FACE_SIZE;

/// Channel-major RGB image with values in `[-1, 1]`. The side length is
/// 64 for the corpus; smaller sides exist for miniature test networks.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceImage {
    size: usize,
    values: Vec<f32>,
}

impl FaceImage {
    pub fn new(size: usize, values: Vec<f32>) -> Result<Self> {
        if size == 0 || values.len() != FACE_CHANNELS * size * size {
            return Err(Error::InvalidImage(format!(
                "expected {FACE_CHANNELS}x{size}x{size} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidImage(format!("value {i} is not finite")));
        }
        Ok(FaceImage { size, values })
    }

    /// Clamp arbitrary network output into the pixel range.
    pub fn from_network(size: usize, values: &[f32]) -> Result<Self> {
        Self::new(size, values.iter().map(|v| v.clamp(-1.0, 1.0)).collect())
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn shape(&self) -> [usize; 3] {
        [FACE_CHANNELS, self.size, self.size]
    }
}

/// `(b - 127.5) / 127.5` for channel-major bytes.
pub fn normalize_pixels(raw: &[u8]) -> Result<FaceImage> {
    normalize_pixels_sized(raw, FACE_SIZE)
}

pub fn normalize_pixels_sized(raw: &[u8], size: usize) -> Result<FaceImage> {
    if raw.len() != FACE_CHANNELS * size * size {
        return Err(Error::InvalidImage(format!(
            "expected {} bytes for {FACE_CHANNELS}x{size}x{size}, got {}",
            FACE_CHANNELS * size * size,
            raw.len()
        )));
    }
    FaceImage::new(size, raw.iter().map(|&b| (b as f32 - 127.5) / 127.5).collect())
}

/// `round(127.5 v + 127.5)` with halves rounded up, clamped to bytes.
pub fn denormalize_pixels(img: &FaceImage) -> Vec<u8> {
    img.values
        .iter()
        .map(|&v| (127.5 * v as f64 + 127.5 + 0.5).floor().clamp(0.0, 255.0) as u8)
        .collect()
}

pub fn to_rgb_image(img: &FaceImage) -> RgbImage {
    let bytes = denormalize_pixels(img);
    let s = img.size;
    RgbImage::from_fn(s as u32, s as u32, |x, y| {
        let at = |c: usize| bytes[c * s * s + y as usize * s + x as usize];
        Rgb([at(0), at(1), at(2)])
    })
}

fn rgb_to_chw(img: &RgbImage) -> Vec<u8> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = vec![0u8; FACE_CHANNELS * w * h];
    for (x, y, p) in img.enumerate_pixels() {
        for c in 0..FACE_CHANNELS {
            out[c * w * h + y as usize * w + x as usize] = p[c];
        }
    }
    out
}

/// Largest centered square, bilinear-resized to 64x64, then normalized.
pub fn center_crop_resize(img: &RgbImage) -> Result<FaceImage> {
    let (w, h) = img.dimensions();
    if (w as usize) < FACE_SIZE || (h as usize) < FACE_SIZE {
        return Err(Error::InvalidImage(format!("{w}x{h} image is smaller than {FACE_SIZE}x{FACE_SIZE}")));
    }
    let side = w.min(h);
    let square = imageops::crop_imm(img, (w - side) / 2, (h - side) / 2, side, side).to_image();
    let resized = if side as usize == FACE_SIZE {
        square
    } else {
        imageops::resize(&square, FACE_SIZE as u32, FACE_SIZE as u32, FilterType::Triangle)
    };
    normalize_pixels(&rgb_to_chw(&resized))
}

pub fn read_face_png(path: &Path) -> Result<FaceImage> {
    let img = image::open(path)?.to_rgb8();
    center_crop_resize(&img)
}

pub fn write_face_png(path: &Path, img: &FaceImage) -> Result<()> {
    to_rgb_image(img).save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Tile images into a grid with a 2-pixel gutter. Rows may be ragged.
pub fn compose_grid(rows: &[Vec<FaceImage>]) -> Result<RgbImage> {
    const GAP: u32 = 2;
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let size = rows.iter().flatten().map(FaceImage::size).max().unwrap_or(0) as u32;
    if cols == 0 || size == 0 {
        return Err(Error::InvalidImage("empty grid".into()));
    }
    let width = cols as u32 * (size + GAP) + GAP;
    let height = rows.len() as u32 * (size + GAP) + GAP;
    let mut canvas = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    for (r, row) in rows.iter().enumerate() {
        for (c, face) in row.iter().enumerate() {
            let tile = to_rgb_image(face);
            let x = GAP + c as u32 * (size + GAP);
            let y = GAP + r as u32 * (size + GAP);
            imageops::replace(&mut canvas, &tile, x as i64, y as i64);
        }
    }
    Ok(canvas)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        let mut raw = vec![0u8; FACE_LEN];
        raw[1] = 255;
        let img = normalize_pixels(&raw).unwrap();
        assert_eq!(img.values()[0], -1.0);
        assert_eq!(img.values()[1], 1.0);
        assert_eq!((127.5f32 - 127.5) / 127.5, 0.0);
        let mid = FaceImage::new(FACE_SIZE, vec![0.0; FACE_LEN]).unwrap();
        assert!(denormalize_pixels(&mid).iter().all(|&b| b == 128));
        let top = FaceImage::new(FACE_SIZE, vec![1.0; FACE_LEN]).unwrap();
        assert!(denormalize_pixels(&top).iter().all(|&b| b == 255));
        let bottom = FaceImage::new(FACE_SIZE, vec![-1.0; FACE_LEN]).unwrap();
        assert!(denormalize_pixels(&bottom).iter().all(|&b| b == 0));
    }

    #[test]
    fn every_byte_round_trips() {
        let raw: Vec<u8> = (0..FACE_LEN).map(|i| (i % 256) as u8).collect();
        assert_eq!(denormalize_pixels(&normalize_pixels(&raw).unwrap()), raw);
    }

    #[test]
    fn wrong_shape_is_rejected() {
        assert!(normalize_pixels(&[0u8; 10]).is_err());
    }

    #[test]
    fn exact_size_is_identity() {
        let img = RgbImage::from_fn(64, 64, |x, y| Rgb([x as u8 * 3, y as u8 * 2, (x + y) as u8]));
        let face = center_crop_resize(&img).unwrap();
        assert_eq!(to_rgb_image(&face), img);
    }

    #[test]
    fn constant_stays_constant() {
        let img = RgbImage::from_pixel(128, 128, Rgb([10, 200, 77]));
        let back = to_rgb_image(&center_crop_resize(&img).unwrap());
        assert!(back.pixels().all(|p| *p == Rgb([10, 200, 77])));
    }

    #[test]
    fn wide_image_uses_center_square() {
        let img = RgbImage::from_fn(100, 80, |x, _| Rgb([(x * 2) as u8, 0, 0]));
        let face = to_rgb_image(&center_crop_resize(&img).unwrap());
        let expected = imageops::resize(&imageops::crop_imm(&img, 10, 0, 80, 80).to_image(), 64, 64, FilterType::Triangle);
        assert_eq!(face, expected);
        let left = face.get_pixel(0, 32)[0] as i32;
        let right = face.get_pixel(63, 32)[0] as i32;
        assert!((left - 20).abs() <= 2 && (right - 178).abs() <= 2, "{left} {right}");
    }

    #[test]
    fn small_image_is_rejected() {
        assert!(center_crop_resize(&RgbImage::new(63, 100)).is_err());
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let raw: Vec<u8> = (0..FACE_LEN).map(|i| (i * 7 % 256) as u8).collect();
        let face = normalize_pixels(&raw).unwrap();
        let p = dir.path().join("f.png");
        write_face_png(&p, &face).unwrap();
        assert_eq!(read_face_png(&p).unwrap(), face);
    }
}
