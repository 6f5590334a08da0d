use alloc::vec;
use alloc::vec::Vec;

use super::ImageTensor;
use crate::error::{arg_err, dim_err, Result};
use crate::math::floor;

const A: f64 = -0.5;

/// Catmull-Rom cubic convolution kernel (`a = -0.5`).
pub fn cubic_kernel(x: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// Taps for one output coordinate: `(first input index, weights)`, edges
/// clamped into `[0, n)`.
struct Taps {
    index: Vec<usize>,
    weight: Vec<f64>,
}

/// Antialiased taps: the kernel is stretched by `factor` so every input
/// pixel under the footprint contributes.
fn taps(n_out: usize, n_in: usize, factor: usize) -> Vec<Taps> {
    let f = factor as f64;
    let support = 2.0 * f;
    (0..n_out)
        .map(|i| {
            let center = (i as f64 + 0.5) * f - 0.5;
            let lo = floor(center - support) as isize + 1;
            let hi = floor(center + support) as isize;
            let mut index = Vec::new();
            let mut weight = Vec::new();
            for j in lo..=hi {
                let w = cubic_kernel((center - j as f64) / f);
                if w == 0.0 {
                    continue;
                }
                index.push(j.clamp(0, n_in as isize - 1) as usize);
                weight.push(w);
            }
            let s: f64 = weight.iter().sum();
            weight.iter_mut().for_each(|w| *w /= s);
            Taps { index, weight }
        })
        .collect()
}

/// Upsampling taps: unstretched kernel, four neighbours per output.
fn up_taps(n_out: usize, n_in: usize, factor: usize) -> Vec<Taps> {
    let f = factor as f64;
    (0..n_out)
        .map(|i| {
            let center = (i as f64 + 0.5) / f - 0.5;
            let base = floor(center) as isize;
            let mut index = Vec::with_capacity(4);
            let mut weight = Vec::with_capacity(4);
            for j in base - 1..=base + 2 {
                index.push(j.clamp(0, n_in as isize - 1) as usize);
                weight.push(cubic_kernel(center - j as f64));
            }
            Taps { index, weight }
        })
        .collect()
}

fn resample_plane(src: &[f64], h: usize, w: usize, tx: &[Taps], ty: &[Taps], dst: &mut [f64]) {
    let wo = tx.len();
    let mut rows = vec![0.0; h * wo];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for (x, t) in tx.iter().enumerate() {
            rows[y * wo + x] = t
                .index
                .iter()
                .zip(&t.weight)
                .map(|(&j, &k)| k * line[j])
                .sum();
        }
    }
    for (y, t) in ty.iter().enumerate() {
        for x in 0..wo {
            dst[y * wo + x] = t
                .index
                .iter()
                .zip(&t.weight)
                .map(|(&j, &k)| k * rows[j * wo + x])
                .sum();
        }
    }
}

/// Unclamped bicubic upscale of one `h x w` plane by `factor`.
pub fn bicubic_upscale_plane(src: &[f64], h: usize, w: usize, factor: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w * factor * factor];
    resample_plane(
        src,
        h,
        w,
        &up_taps(w * factor, w, factor),
        &up_taps(h * factor, h, factor),
        &mut out,
    );
    out
}

/// Bicubic upscale by an integer factor, same alignment and borders as the
/// downscale, output clamped to `[0, 1]`.
pub fn bicubic_upscale(img: &ImageTensor, factor: usize) -> Result<ImageTensor> {
    if factor == 0 {
        return Err(arg_err!("upscale factor must be at least 1"));
    }
    let (c, h, w) = (img.channels(), img.height(), img.width());
    let mut out = Vec::with_capacity(c * h * w * factor * factor);
    for ch in 0..c {
        out.extend(
            bicubic_upscale_plane(img.plane(ch), h, w, factor)
                .into_iter()
                .map(|v| v.clamp(0.0, 1.0)),
        );
    }
    ImageTensor::new(c, h * factor, w * factor, out)
}

/// Bicubic downscale by an integer factor with half-pixel alignment,
/// clamp-to-edge borders, and output clamped to `[0, 1]`.
pub fn bicubic_downscale(img: &ImageTensor, factor: usize) -> Result<ImageTensor> {
    if factor == 0 {
        return Err(arg_err!("downscale factor must be at least 1"));
    }
    let (c, h, w) = (img.channels(), img.height(), img.width());
    if h % factor != 0 || w % factor != 0 {
        return Err(dim_err!("{h}x{w} image not divisible by factor {factor}"));
    }
    if factor == 1 {
        return Ok(img.clone());
    }
    let (ho, wo) = (h / factor, w / factor);
    let tx = taps(wo, w, factor);
    let ty = taps(ho, h, factor);
    let mut out = vec![0.0; c * ho * wo];
    for ch in 0..c {
        let dst = &mut out[ch * ho * wo..(ch + 1) * ho * wo];
        resample_plane(img.plane(ch), h, w, &tx, &ty, dst);
        dst.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }
    ImageTensor::new(c, ho, wo, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_shape() {
        assert_eq!(cubic_kernel(0.0), 1.0);
        assert_eq!(cubic_kernel(1.0), 0.0);
        assert_eq!(cubic_kernel(2.0), 0.0);
        assert!((cubic_kernel(0.5) - 0.5625).abs() < 1e-15);
        assert!((cubic_kernel(1.5) + 0.0625).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let img = ImageTensor::filled(1, 10, 10, 0.5).unwrap();
        assert!(matches!(
            bicubic_downscale(&img, 0),
            Err(crate::Error::Argument(_))
        ));
        assert!(matches!(
            bicubic_downscale(&img, 4),
            Err(crate::Error::Dimension(_))
        ));
        assert_eq!(bicubic_downscale(&img, 1).unwrap(), img);
        assert_eq!(bicubic_upscale(&img, 1).unwrap(), img);
    }

    #[test]
    fn upscale_keeps_constants_and_ramps() {
        let img = ImageTensor::filled(3, 5, 7, 0.3).unwrap();
        let u = bicubic_upscale(&img, 4).unwrap();
        assert_eq!((u.height(), u.width()), (20, 28));
        assert!(u.data().iter().all(|v| (v - 0.3).abs() < 1e-12));
        // cubic convolution reproduces linear functions away from the border
        let r = ImageTensor::from_fn(1, 4, 16, |_, _, x| 0.05 * x as f64).unwrap();
        let u = bicubic_upscale(&r, 2).unwrap();
        for x in 4..28 {
            assert!((u.at(0, 3, x) - 0.05 * ((x as f64 + 0.5) / 2.0 - 0.5)).abs() < 1e-12);
        }
    }
}
