//! PNG encoding of masks, renders and debug channels.

use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat, Luma, Rgba, RgbaImage};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::raster::RenderOutputs;
use crate::selection::Mask2D;

pub fn mask_to_image(mask: &Mask2D) -> GrayImage {
    GrayImage::from_fn(mask.width(), mask.height(), |x, y| {
        Luma([if mask.get(x, y) { 255 } else { 0 }])
    })
}

/// Grey levels of 128 and above read as foreground.
pub fn mask_from_image(img: &GrayImage, camera: Camera) -> Result<Mask2D> {
    if img.width() != camera.width || img.height() != camera.height {
        return Err(Error::argument(format!(
            "mask image is {}x{}, camera is {}x{}",
            img.width(),
            img.height(),
            camera.width,
            camera.height
        )));
    }
    Mask2D::from_bits(camera, img.pixels().map(|p| p.0[0] >= 128).collect())
}

pub fn load_mask(path: impl AsRef<Path>, camera: Camera) -> Result<Mask2D> {
    let img = image::open(path)?.to_luma8();
    mask_from_image(&img, camera)
}

pub fn save_mask(mask: &Mask2D, path: impl AsRef<Path>) -> Result<()> {
    mask_to_image(mask).save_with_format(path, ImageFormat::Png)?;
    Ok(())
}

pub fn decode_mask_png(bytes: &[u8], camera: Camera) -> Result<Mask2D> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_luma8();
    mask_from_image(&img, camera)
}

pub fn encode_png_gray(img: &GrayImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn encode_png_rgba(img: &RgbaImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// 8-bit RGBA of a render; colour is un-premultiplied where alpha > 0.
pub fn rgba_image(out: &RenderOutputs) -> RgbaImage {
    RgbaImage::from_fn(out.width, out.height, |x, y| {
        let p = out.rgba[(y * out.width + x) as usize];
        let a = p[3];
        let un = |c: f64| if a > 0.0 { c / a } else { 0.0 };
        Rgba([to_u8(un(p[0])), to_u8(un(p[1])), to_u8(un(p[2])), to_u8(a)])
    })
}

/// Depth as grey levels, nearest rendered depth white, empty pixels black.
pub fn depth_image(out: &RenderOutputs) -> GrayImage {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for &d in out.depth.iter().filter(|&&d| d > 0.0) {
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let span = (hi - lo).max(1e-12);
    GrayImage::from_fn(out.width, out.height, |x, y| {
        let d = out.depth[(y * out.width + x) as usize];
        Luma([if d > 0.0 {
            55 + (200.0 * (1.0 - (d - lo) / span)).round() as u8
        } else {
            0
        }])
    })
}

/// Writes the colour, alpha and depth channels next to `stem`
/// (`stem_rgba.png`, `stem_alpha.png`, `stem_depth.png`).
pub fn dump_channels(out: &RenderOutputs, stem: impl AsRef<Path>) -> Result<()> {
    let stem = stem.as_ref().to_string_lossy().into_owned();
    rgba_image(out).save_with_format(format!("{stem}_rgba.png"), ImageFormat::Png)?;
    let alpha = GrayImage::from_fn(out.width, out.height, |x, y| {
        Luma([to_u8(out.alpha((y * out.width + x) as usize))])
    });
    alpha.save_with_format(format!("{stem}_alpha.png"), ImageFormat::Png)?;
    depth_image(out).save_with_format(format!("{stem}_depth.png"), ImageFormat::Png)?;
    Ok(())
}
