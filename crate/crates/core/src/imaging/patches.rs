use alloc::format;
use alloc::vec::Vec;

use super::{ImageTensor, LabeledScene};
use crate::boxes::BoundingBox;
use crate::error::{arg_err, dim_err, Result};

/// Tiles a scene into square patches.
///
/// A box belongs to a patch iff its center lies in the half-open patch
/// rectangle; it is then clipped to the patch and renormalized.
pub fn extract_patches(
    scene: &LabeledScene,
    patch_size: usize,
    stride: usize,
) -> Result<Vec<LabeledScene>> {
    let img = &scene.image;
    let (c, h, w) = (img.channels(), img.height(), img.width());
    if stride == 0 || patch_size == 0 {
        return Err(arg_err!("patch size and stride must be positive"));
    }
    if patch_size > h || patch_size > w {
        return Err(dim_err!("patch {patch_size} larger than {h}x{w} image"));
    }
    let (fw, fh, p) = (w as f64, h as f64, patch_size as f64);
    let mut out = Vec::new();
    for y0 in (0..=h - patch_size).step_by(stride) {
        for x0 in (0..=w - patch_size).step_by(stride) {
            let pix = ImageTensor::from_fn(c, patch_size, patch_size, |ch, y, x| {
                img.at(ch, y0 + y, x0 + x)
            })?;
            let (px0, py0) = (x0 as f64, y0 as f64);
            let mut boxes = Vec::new();
            for b in &scene.boxes {
                let (cx, cy) = (b.cx * fw, b.cy * fh);
                if cx < px0 || cx >= px0 + p || cy < py0 || cy >= py0 + p {
                    continue;
                }
                let (x1, y1, x2, y2) = b.corners();
                let nx1 = ((x1 * fw - px0) / p).clamp(0.0, 1.0);
                let ny1 = ((y1 * fh - py0) / p).clamp(0.0, 1.0);
                let nx2 = ((x2 * fw - px0) / p).clamp(0.0, 1.0);
                let ny2 = ((y2 * fh - py0) / p).clamp(0.0, 1.0);
                if nx2 > nx1 && ny2 > ny1 {
                    let mut nb =
                        BoundingBox::from_corners(nx1, ny1, nx2, ny2).with_class(b.class_id);
                    nb.confidence = b.confidence;
                    boxes.push(nb);
                }
            }
            out.push(LabeledScene {
                image: pix,
                boxes,
                source_id: format!("{}@{x0},{y0}", scene.source_id),
            });
        }
    }
    Ok(out)
}
