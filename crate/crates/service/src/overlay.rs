//! Images returned by the render and job-frame endpoints.

use gsseg_core::raster::RenderOutputs;
use gsseg_core::{image_io, Mask2D, Result, Selection3D};
use image::{Rgba, RgbaImage};
use serde::Deserialize;

/// Hue of the 3D selection overlay.
pub const SELECTION_TINT: [f64; 3] = [1.0, 0.55, 0.0];
/// Hue of the active 2D mask overlay.
pub const MASK_TINT: [f64; 3] = [0.1, 0.45, 1.0];
/// Hue of tracked masks on job frames.
pub const TRACK_TINT: [f64; 3] = [0.1, 0.9, 0.3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Rgb,
    Alpha,
    Depth,
    SelectionOverlay,
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Colour composited over black.
fn rgb(out: &RenderOutputs) -> Vec<[f64; 3]> {
    out.rgba.iter().map(|p| [p[0], p[1], p[2]]).collect()
}

fn tint(pixels: &mut [[f64; 3]], amount: impl Fn(usize) -> f64, hue: [f64; 3]) {
    for (p, px) in pixels.iter_mut().enumerate() {
        let a = amount(p).clamp(0.0, 1.0);
        for c in 0..3 {
            px[c] = px[c] * (1.0 - a) + hue[c] * a;
        }
    }
}

fn to_image(w: u32, h: u32, pixels: &[[f64; 3]]) -> RgbaImage {
    RgbaImage::from_fn(w, h, |x, y| {
        let p = pixels[(y * w + x) as usize];
        Rgba([to_u8(p[0]), to_u8(p[1]), to_u8(p[2]), 255])
    })
}

fn gray(w: u32, h: u32, level: impl Fn(usize) -> u8) -> RgbaImage {
    RgbaImage::from_fn(w, h, |x, y| {
        let l = level((y * w + x) as usize);
        Rgba([l, l, l, 255])
    })
}

/// One channel of a render. The selection overlay tints each pixel by the
/// share of its weight that comes from selected Gaussians, and the active
/// mask (when drawn in this view) in a second hue.
pub fn channel_image(
    out: &RenderOutputs,
    ch: Channel,
    selection: &Selection3D,
    mask: Option<&Mask2D>,
) -> Result<RgbaImage> {
    let (w, h) = (out.width, out.height);
    Ok(match ch {
        Channel::Rgb => to_image(w, h, &rgb(out)),
        Channel::Alpha => gray(w, h, |p| to_u8(out.alpha(p))),
        Channel::Depth => {
            let d = image_io::depth_image(out);
            gray(w, h, |p| d.as_raw()[p])
        }
        Channel::SelectionOverlay => {
            let indicator: Vec<f64> = selection
                .bits
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect();
            let share = out.weights.features(&indicator, 1)?;
            let mut px = rgb(out);
            tint(&mut px, |p| 0.65 * share[p], SELECTION_TINT);
            if let Some(m) = mask {
                tint(&mut px, |p| if m.bits[p] { 0.4 } else { 0.0 }, MASK_TINT);
            }
            to_image(w, h, &px)
        }
    })
}

/// Channels side by side, left to right in request order.
pub fn tile(images: &[RgbaImage]) -> RgbaImage {
    let h = images.iter().map(|i| i.height()).max().unwrap_or(0);
    let w = images.iter().map(|i| i.width()).sum();
    let mut out = RgbaImage::new(w, h);
    let mut x0 = 0;
    for img in images {
        image::imageops::replace(&mut out, img, x0 as i64, 0);
        x0 += img.width();
    }
    out
}

/// A job frame with its tracked mask tinted in.
pub fn frame_image(frame: &RgbaImage, mask: Option<&Mask2D>) -> RgbaImage {
    let mut out = frame.clone();
    if let Some(m) = mask {
        for (p, px) in out.pixels_mut().enumerate() {
            if m.bits[p] {
                for (ch, tint) in px.0.iter_mut().zip(TRACK_TINT) {
                    *ch = to_u8(*ch as f64 / 255.0 * 0.55 + tint * 0.45);
                }
                px.0[3] = 255;
            }
        }
    }
    out
}
