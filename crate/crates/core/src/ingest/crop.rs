use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::{BBox, IngestConfig, IngestError};

/// Pixel rectangle `(x, y, w, h)` in source-image coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Crop {
    pub crop_id: String,
    pub image_id: String,
    pub source: PixelRect,
    pub side: u32,
    /// `side * side * 3` interleaved RGB values.
    pub pixels: Vec<u8>,
}

impl Crop {
    pub fn to_image(&self) -> RgbImage {
        RgbImage::from_raw(self.side, self.side, self.pixels.clone()).expect("crop buffer matches side")
    }
}

fn round_half_up(v: f64) -> u32 {
    (v + 0.5).floor().max(0.0) as u32
}

/// Converts a normalized box to pixels, rounding each coordinate half-up on
/// its own and clipping the size to the image bounds.
pub fn pixel_rect(bbox: &BBox, width: u32, height: u32) -> PixelRect {
    let x = round_half_up(bbox.x_min * f64::from(width)).min(width);
    let y = round_half_up(bbox.y_min * f64::from(height)).min(height);
    let w = round_half_up(bbox.width * f64::from(width)).min(width - x);
    let h = round_half_up(bbox.height * f64::from(height)).min(height - y);
    PixelRect { x, y, w, h }
}

/// Corner-aligned source coordinate for output index `i`.
#[inline]
fn source_pos(i: u32, src_len: u32, dst_len: u32) -> f64 {
    if src_len <= 1 || dst_len <= 1 {
        0.0
    } else {
        (f64::from(i) * f64::from(src_len - 1)) / f64::from(dst_len - 1)
    }
}

/// Cuts the box out of `image` and resamples it to a `crop_side` square with
/// bilinear interpolation. Aspect ratio is not preserved.
pub fn crop_and_resize(
    image: &RgbImage,
    bbox: &BBox,
    cfg: &IngestConfig,
    image_id: &str,
    k: usize,
) -> Result<Crop, IngestError> {
    let (iw, ih) = image.dimensions();
    if iw == 0 || ih == 0 {
        return Err(IngestError::DegenerateCrop { image_id: image_id.to_owned(), w: iw, h: ih });
    }
    let rect = pixel_rect(bbox, iw, ih);
    if rect.w == 0 || rect.h == 0 {
        return Err(IngestError::DegenerateCrop { image_id: image_id.to_owned(), w: rect.w, h: rect.h });
    }
    let side = cfg.crop_side;
    let mut pixels = Vec::with_capacity((side * side * 3) as usize);
    let px = |x: u32, y: u32| image.get_pixel(rect.x + x, rect.y + y).0;
    for oy in 0..side {
        let sy = source_pos(oy, rect.h, side);
        let y0 = sy.floor() as u32;
        let y1 = (y0 + 1).min(rect.h - 1);
        let fy = sy - f64::from(y0);
        for ox in 0..side {
            let sx = source_pos(ox, rect.w, side);
            let x0 = sx.floor() as u32;
            let x1 = (x0 + 1).min(rect.w - 1);
            let fx = sx - f64::from(x0);
            let (p00, p10, p01, p11) = (px(x0, y0), px(x1, y0), px(x0, y1), px(x1, y1));
            for c in 0..3 {
                let top = f64::from(p00[c]) * (1.0 - fx) + f64::from(p10[c]) * fx;
                let bottom = f64::from(p01[c]) * (1.0 - fx) + f64::from(p11[c]) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                pixels.push((v + 0.5).floor().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Ok(Crop {
        crop_id: format!("{image_id}_{k}"),
        image_id: image_id.to_owned(),
        source: rect,
        side,
        pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn cfg(side: u32) -> IngestConfig {
        IngestConfig { confidence_threshold: 0.9, crop_side: side }
    }

    #[test]
    fn quarter_box_on_400px_image() {
        let r = pixel_rect(&BBox::new(0.25, 0.25, 0.5, 0.5).unwrap(), 400, 400);
        assert_eq!(r, PixelRect { x: 100, y: 100, w: 200, h: 200 });
    }

    #[test]
    fn half_pixel_rounds_up() {
        // 0.25 * 10 = 2.5 -> 3
        let r = pixel_rect(&BBox::new(0.25, 0.0, 0.25, 0.5).unwrap(), 10, 10);
        assert_eq!((r.x, r.w), (3, 3));
    }

    #[test]
    fn uniform_source_gives_uniform_crop() {
        let img = RgbImage::from_pixel(123, 77, Rgb([128, 64, 200]));
        let crop = crop_and_resize(&img, &BBox::new(0.1, 0.2, 0.37, 0.5).unwrap(), &cfg(256), "g", 0).unwrap();
        assert_eq!(crop.pixels.len(), 256 * 256 * 3);
        assert!(crop.pixels.chunks(3).all(|p| p == [128, 64, 200]));
    }

    #[test]
    fn identity_resize_copies_pixels() {
        let img = RgbImage::from_fn(256, 256, |x, y| Rgb([(x % 256) as u8, (y % 256) as u8, ((x * 7 + y * 3) % 256) as u8]));
        let crop = crop_and_resize(&img, &BBox::new(0.0, 0.0, 1.0, 1.0).unwrap(), &cfg(256), "id", 2).unwrap();
        assert_eq!(crop.pixels, img.as_raw().clone());
        assert_eq!(crop.crop_id, "id_2");
    }

    #[test]
    fn single_pixel_source_fills_output() {
        let mut img = RgbImage::from_pixel(100, 100, Rgb([0, 0, 0]));
        img.put_pixel(50, 50, Rgb([9, 8, 7]));
        let crop = crop_and_resize(&img, &BBox::new(0.5, 0.5, 0.01, 0.01).unwrap(), &cfg(8), "p", 0).unwrap();
        assert!(crop.pixels.chunks(3).all(|p| p == [9, 8, 7]));
    }

    #[test]
    fn degenerate_rect_rejected() {
        let img = RgbImage::from_pixel(10, 10, Rgb([1, 1, 1]));
        let err = crop_and_resize(&img, &BBox::new(0.5, 0.5, 0.01, 0.3).unwrap(), &cfg(8), "d", 0).unwrap_err();
        assert!(matches!(err, IngestError::DegenerateCrop { w: 0, .. }));
    }

    #[test]
    fn output_size_is_constant() {
        let img = RgbImage::from_fn(300, 200, |x, y| Rgb([x as u8, y as u8, 0]));
        for b in [(0.0, 0.0, 1.0, 1.0), (0.3, 0.3, 0.05, 0.6), (0.9, 0.1, 0.1, 0.1)] {
            let c = crop_and_resize(&img, &BBox::new(b.0, b.1, b.2, b.3).unwrap(), &cfg(32), "s", 0).unwrap();
            assert_eq!(c.pixels.len(), 32 * 32 * 3);
        }
    }

    #[test]
    fn gradient_is_interpolated_linearly() {
        // 2-pixel-wide ramp 0 -> 255 resampled to 8 columns.
        let img = RgbImage::from_fn(2, 1, |x, _| if x == 0 { Rgb([0, 0, 0]) } else { Rgb([255, 255, 255]) });
        let c = crop_and_resize(&img, &BBox::new(0.0, 0.0, 1.0, 1.0).unwrap(), &cfg(8), "r", 0).unwrap();
        let row: Vec<u8> = c.pixels.chunks(3).take(8).map(|p| p[0]).collect();
        let expected: Vec<u8> = (0..8).map(|i| ((i as f64 * 255.0 / 7.0) + 0.5).floor() as u8).collect();
        assert_eq!(row, expected);
    }
}
