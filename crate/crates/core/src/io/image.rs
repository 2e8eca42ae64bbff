use std::path::Path;

use image::{DynamicImage, GrayImage, Luma};

use crate::error::{Error, Result};
use crate::field::ScalarField;

#[inline]
fn luminance(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

fn to_field(img: DynamicImage, path: &Path) -> Result<ScalarField> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma8(b) => b.pixels().map(|p| p[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA8(b) => b.pixels().map(|p| p[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(b) => b.pixels().map(|p| p[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageLumaA16(b) => b.pixels().map(|p| p[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageRgb8(b) => b
            .pixels()
            .map(|p| luminance(p[0] as f64, p[1] as f64, p[2] as f64) / 255.0)
            .collect(),
        DynamicImage::ImageRgba8(b) => b
            .pixels()
            .map(|p| luminance(p[0] as f64, p[1] as f64, p[2] as f64) / 255.0)
            .collect(),
        DynamicImage::ImageRgb16(b) => b
            .pixels()
            .map(|p| luminance(p[0] as f64, p[1] as f64, p[2] as f64) / 65535.0)
            .collect(),
        DynamicImage::ImageRgba16(b) => b
            .pixels()
            .map(|p| luminance(p[0] as f64, p[1] as f64, p[2] as f64) / 65535.0)
            .collect(),
        other => {
            return Err(Error::format(
                path,
                format!("unsupported pixel format {:?}", other.color()),
            ))
        }
    };
    ScalarField::new(w, h, data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

/// Reads an 8- or 16-bit grayscale or RGB PNG/PNM image as luminance in
/// `[0, 1]`.
pub fn read_image(path: impl AsRef<Path>) -> Result<ScalarField> {
    let path = path.as_ref();
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let img = reader
        .decode()
        .map_err(|e| Error::format(path, e.to_string()))?;
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::format(path, "image has no pixels"));
    }
    to_field(img, path)
}

/// Writes `f` as an 8-bit grayscale PNG, clamping to `[0, 1]`.
pub fn write_png_gray(path: impl AsRef<Path>, f: &ScalarField) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = f.dims();
    let img = GrayImage::from_fn(w as u32, h as u32, |x, y| {
        Luma([(f.get(x as usize, y as usize).clamp(0.0, 1.0) * 255.0).round() as u8])
    });
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::format(path, other.to_string()),
        })
}
