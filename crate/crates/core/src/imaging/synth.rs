use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{ImageTensor, LabeledScene};
use crate::boxes::{iou, BoundingBox};
use crate::error::{arg_err, Error, Result};
use crate::math::sin;
use crate::rng::{stream, uniform};

const MAX_ATTEMPTS: usize = 500;

/// Geometry of rendered vehicles. Sides are in LR pixels; the scene is
/// rendered at HR, `lr_scale` times larger.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    pub min_side: f64,
    pub max_side: f64,
    pub min_aspect: f64,
    pub max_aspect: f64,
    pub lr_scale: usize,
    pub max_iou: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            min_side: 4.0,
            max_side: 16.0,
            min_aspect: 1.2,
            max_aspect: 2.5,
            lr_scale: 4,
            max_iou: 0.1,
        }
    }
}

struct Vehicle {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
    body: [f64; 3],
    roof: [f64; 3],
}

/// A deterministic square scene with `n_vehicles` rectangles on a smooth
/// textured background, plus exact ground-truth boxes.
pub fn synthesize_scene(seed: u64, size: usize, n_vehicles: usize) -> Result<LabeledScene> {
    synthesize_scene_with(seed, size, n_vehicles, &SynthParams::default())
}

pub fn synthesize_scene_with(
    seed: u64,
    size: usize,
    n_vehicles: usize,
    p: &SynthParams,
) -> Result<LabeledScene> {
    if size < 64 {
        return Err(arg_err!("scene size {size} below 64"));
    }
    if n_vehicles > 32 {
        return Err(arg_err!("at most 32 vehicles per scene, got {n_vehicles}"));
    }
    let mut rng = stream(seed, 0x5343_454E_45);
    let s = size as f64;

    // low-frequency background per channel
    let base: [f64; 3] = core::array::from_fn(|_| uniform(&mut rng, 0.35, 0.6));
    let waves: Vec<(usize, f64, f64, f64, f64)> = (0..6)
        .map(|i| {
            let amp = if i < 3 { 0.05 } else { 0.015 };
            let max_f = if i < 3 { 2.0 } else { 5.0 };
            (
                i % 3,
                uniform(&mut rng, -max_f, max_f),
                uniform(&mut rng, -max_f, max_f),
                uniform(&mut rng, 0.0, core::f64::consts::TAU),
                amp,
            )
        })
        .collect();

    let scale = p.lr_scale as f64;
    let mut vehicles: Vec<Vehicle> = Vec::with_capacity(n_vehicles);
    let mut boxes: Vec<BoundingBox> = Vec::with_capacity(n_vehicles);
    for k in 0..n_vehicles {
        let mut placed = false;
        for _ in 0..MAX_ATTEMPTS {
            let aspect = uniform(&mut rng, p.min_aspect, p.max_aspect);
            let short_hi = (p.max_side / aspect).max(p.min_side);
            let short =
                crate::math::round(uniform(&mut rng, p.min_side, short_hi) * scale) as usize;
            let long = crate::math::round(short as f64 * aspect) as usize;
            if short == 0 || long > size || (long as f64) > p.max_side * scale {
                continue;
            }
            let (w, h) = if rng.random::<bool>() {
                (long, short)
            } else {
                (short, long)
            };
            let x0 = rng.random_range(0..=size - w);
            let y0 = rng.random_range(0..=size - h);
            let b = BoundingBox::new(
                (x0 as f64 + w as f64 / 2.0) / s,
                (y0 as f64 + h as f64 / 2.0) / s,
                w as f64 / s,
                h as f64 / s,
            );
            if boxes.iter().any(|o| iou(o, &b) > p.max_iou) {
                continue;
            }
            let bright = rng.random::<bool>();
            let lum = if bright {
                uniform(&mut rng, 0.85, 0.95)
            } else {
                uniform(&mut rng, 0.05, 0.15)
            };
            let body: [f64; 3] =
                core::array::from_fn(|_| (lum + uniform(&mut rng, -0.04, 0.04)).clamp(0.0, 1.0));
            let roof_lum = if bright { lum - 0.3 } else { lum + 0.3 };
            let roof = [roof_lum; 3];
            vehicles.push(Vehicle {
                x0,
                y0,
                w,
                h,
                body,
                roof,
            });
            boxes.push(b);
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::Generation(format!(
                "could not place vehicle {} of {n_vehicles} in a {size}px scene",
                k + 1
            )));
        }
    }

    let channels = 3;
    let mut data = vec![0.0; channels * size * size];
    for c in 0..channels {
        for y in 0..size {
            for x in 0..size {
                let (u, v) = (x as f64 / s, y as f64 / s);
                let mut val = base[c];
                for &(ch, fx, fy, ph, amp) in &waves {
                    let a = if ch == c { amp } else { 0.5 * amp };
                    val += a * sin(core::f64::consts::TAU * (fx * u + fy * v) + ph);
                }
                data[(c * size + y) * size + x] = val.clamp(0.0, 1.0);
            }
        }
    }
    for v in &vehicles {
        let (ix, iy) = (v.w / 4, v.h / 4);
        for c in 0..channels {
            for y in v.y0..v.y0 + v.h {
                for x in v.x0..v.x0 + v.w {
                    let inner = x >= v.x0 + ix
                        && x < v.x0 + v.w - ix
                        && y >= v.y0 + iy
                        && y < v.y0 + v.h - iy;
                    data[(c * size + y) * size + x] = if inner { v.roof[c] } else { v.body[c] };
                }
            }
        }
    }
    let image = ImageTensor::new(channels, size, size, data)?;
    LabeledScene::new(image, boxes, format!("synth-{seed}"))
}
