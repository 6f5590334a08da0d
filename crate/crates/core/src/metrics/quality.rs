use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg_err, dim_err, Result};
use crate::imaging::ImageTensor;
use crate::math::{exp, log10, powf, round};

/// Five-scale exponents of multi-scale SSIM, finest first.
pub const MSSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;
const UQI_WINDOW: usize = 8;
/// Noise variance of the VIF channel model, on the 0..255 scale.
pub const VIF_SIGMA_N_SQ: f64 = 2.0;
const VIF_FLOOR: f64 = 1e-10;

fn same_shape(a: &ImageTensor, b: &ImageTensor) -> Result<()> {
    if (a.channels(), a.height(), a.width()) != (b.channels(), b.height(), b.width()) {
        return Err(dim_err!(
            "image shapes differ: {}x{}x{} vs {}x{}x{}",
            a.channels(),
            a.height(),
            a.width(),
            b.channels(),
            b.height(),
            b.width()
        ));
    }
    Ok(())
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// `10 log10(1 / MSE)` on `[0, 1]` images; `+inf` when identical.
pub fn psnr(reference: &ImageTensor, test: &ImageTensor) -> Result<f64> {
    same_shape(reference, test)?;
    let m = mse(reference.data(), test.data());
    Ok(if m == 0.0 {
        f64::INFINITY
    } else {
        10.0 * log10(1.0 / m)
    })
}

/// PSNR after quantizing both images to 8 bits, with `MAX = 255`.
pub fn psnr_8bit(reference: &ImageTensor, test: &ImageTensor) -> Result<f64> {
    same_shape(reference, test)?;
    let q = |v: &f64| round(v * 255.0);
    let a: Vec<f64> = reference.data().iter().map(q).collect();
    let b: Vec<f64> = test.data().iter().map(q).collect();
    let m = mse(&a, &b);
    Ok(if m == 0.0 {
        f64::INFINITY
    } else {
        10.0 * log10(255.0 * 255.0 / m)
    })
}

/// Normalized 1D Gaussian taps.
pub fn gaussian_taps(n: usize, sigma: f64) -> Vec<f64> {
    let c = (n as f64 - 1.0) / 2.0;
    let mut g: Vec<f64> = (0..n)
        .map(|i| exp(-((i as f64 - c) * (i as f64 - c)) / (2.0 * sigma * sigma)))
        .collect();
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// A single-channel row-major image.
#[derive(Clone)]
struct Plane {
    h: usize,
    w: usize,
    v: Vec<f64>,
}

impl Plane {
    fn of(img: &ImageTensor, c: usize, scale: f64) -> Plane {
        Plane {
            h: img.height(),
            w: img.width(),
            v: img.plane(c).iter().map(|x| x * scale).collect(),
        }
    }

    fn mul(&self, o: &Plane) -> Plane {
        Plane {
            h: self.h,
            w: self.w,
            v: self.v.iter().zip(&o.v).map(|(a, b)| a * b).collect(),
        }
    }

    /// Separable filtering keeping only fully covered positions.
    fn filter_valid(&self, k: &[f64]) -> Plane {
        let n = k.len();
        let (ho, wo) = (self.h + 1 - n, self.w + 1 - n);
        let mut tmp = vec![0.0; self.h * wo];
        for y in 0..self.h {
            let row = &self.v[y * self.w..(y + 1) * self.w];
            for x in 0..wo {
                tmp[y * wo + x] = k.iter().zip(&row[x..x + n]).map(|(a, b)| a * b).sum();
            }
        }
        let mut out = vec![0.0; ho * wo];
        for y in 0..ho {
            for x in 0..wo {
                out[y * wo + x] = k
                    .iter()
                    .enumerate()
                    .map(|(i, a)| a * tmp[(y + i) * wo + x])
                    .sum();
            }
        }
        Plane {
            h: ho,
            w: wo,
            v: out,
        }
    }

    /// Separable filtering at every position, borders clamped to the edge.
    fn filter_same(&self, k: &[f64]) -> Plane {
        let r = (k.len() / 2) as isize;
        let (h, w) = (self.h as isize, self.w as isize);
        let mut tmp = vec![0.0; self.v.len()];
        for y in 0..h {
            for x in 0..w {
                tmp[(y * w + x) as usize] = k
                    .iter()
                    .enumerate()
                    .map(|(i, a)| {
                        a * self.v[(y * w + (x + i as isize - r).clamp(0, w - 1)) as usize]
                    })
                    .sum();
            }
        }
        let mut out = vec![0.0; self.v.len()];
        for y in 0..h {
            for x in 0..w {
                out[(y * w + x) as usize] = k
                    .iter()
                    .enumerate()
                    .map(|(i, a)| a * tmp[((y + i as isize - r).clamp(0, h - 1) * w + x) as usize])
                    .sum();
            }
        }
        Plane {
            h: self.h,
            w: self.w,
            v: out,
        }
    }

    /// 2x2 box average; odd trailing rows/columns dropped.
    fn downsample_avg(&self) -> Plane {
        let (ho, wo) = (self.h / 2, self.w / 2);
        let mut v = vec![0.0; ho * wo];
        for y in 0..ho {
            for x in 0..wo {
                let i = 2 * y * self.w + 2 * x;
                v[y * wo + x] = 0.25
                    * (self.v[i] + self.v[i + 1] + self.v[i + self.w] + self.v[i + self.w + 1]);
            }
        }
        Plane { h: ho, w: wo, v }
    }

    /// Every second pixel starting at the origin.
    fn decimate(&self) -> Plane {
        let (ho, wo) = (self.h.div_ceil(2), self.w.div_ceil(2));
        let mut v = Vec::with_capacity(ho * wo);
        for y in 0..ho {
            for x in 0..wo {
                v.push(self.v[2 * y * self.w + 2 * x]);
            }
        }
        Plane { h: ho, w: wo, v }
    }
}

/// Local means, variances and covariance under a window.
struct Moments {
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    sxx: Vec<f64>,
    syy: Vec<f64>,
    sxy: Vec<f64>,
}

fn moments(x: &Plane, y: &Plane, k: &[f64]) -> Moments {
    let mu_x = x.filter_valid(k).v;
    let mu_y = y.filter_valid(k).v;
    let exx = x.mul(x).filter_valid(k).v;
    let eyy = y.mul(y).filter_valid(k).v;
    let exy = x.mul(y).filter_valid(k).v;
    let sxx = exx.iter().zip(&mu_x).map(|(e, m)| e - m * m).collect();
    let syy = eyy.iter().zip(&mu_y).map(|(e, m)| e - m * m).collect();
    let sxy = exy
        .iter()
        .zip(mu_x.iter().zip(&mu_y))
        .map(|(e, (a, b))| e - a * b)
        .collect();
    Moments {
        mu_x,
        mu_y,
        sxx,
        syy,
        sxy,
    }
}

/// Number of scales such that the coarsest keeps at least one full window.
pub fn mssim_scales(min_dim: usize) -> usize {
    let mut n = 0;
    let mut d = min_dim;
    while n < MSSIM_WEIGHTS.len() && d >= SSIM_WINDOW {
        n += 1;
        d /= 2;
    }
    n
}

/// `x^w` extended to negative `x` as `-|x|^w`.
fn signed_pow(x: f64, w: f64) -> f64 {
    if x < 0.0 {
        -powf(-x, w)
    } else {
        powf(x, w)
    }
}

fn mssim_plane(x: Plane, y: Plane, scales: usize, weights: &[f64]) -> f64 {
    let k = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let (mut x, mut y) = (x, y);
    let mut acc = 1.0;
    for (s, &w) in weights.iter().enumerate().take(scales) {
        let m = moments(&x, &y, &k);
        let n = m.mu_x.len() as f64;
        let mut cs = 0.0;
        let mut ssim = 0.0;
        for i in 0..m.mu_x.len() {
            let c = (2.0 * m.sxy[i] + C2) / (m.sxx[i] + m.syy[i] + C2);
            let l = (2.0 * m.mu_x[i] * m.mu_y[i] + C1)
                / (m.mu_x[i] * m.mu_x[i] + m.mu_y[i] * m.mu_y[i] + C1);
            cs += c;
            ssim += l * c;
        }
        let term = if s + 1 == scales { ssim / n } else { cs / n };
        acc *= signed_pow(term, w);
        if s + 1 < scales {
            x = x.downsample_avg();
            y = y.downsample_avg();
        }
    }
    acc
}

/// Multi-scale SSIM averaged over channels.
///
/// Contrast-structure terms at every scale, luminance at the coarsest, with
/// the canonical exponents truncated and renormalized when the image is too
/// small for five scales.
pub fn mssim(reference: &ImageTensor, test: &ImageTensor) -> Result<f64> {
    same_shape(reference, test)?;
    let scales = mssim_scales(reference.height().min(reference.width()));
    if scales == 0 {
        return Err(arg_err!(
            "image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        ));
    }
    let total: f64 = MSSIM_WEIGHTS[..scales].iter().sum();
    let weights: Vec<f64> = MSSIM_WEIGHTS[..scales].iter().map(|w| w / total).collect();
    let c = reference.channels();
    let mut sum = 0.0;
    for ch in 0..c {
        sum += mssim_plane(
            Plane::of(reference, ch, 1.0),
            Plane::of(test, ch, 1.0),
            scales,
            &weights,
        );
    }
    Ok(sum / c as f64)
}

/// Universal quality index over 8x8 windows at stride 1, averaged over
/// windows and channels. Windows with a zero denominator are skipped.
pub fn uqi(reference: &ImageTensor, test: &ImageTensor) -> Result<f64> {
    same_shape(reference, test)?;
    let (h, w) = (reference.height(), reference.width());
    if h < UQI_WINDOW || w < UQI_WINDOW {
        return Err(arg_err!(
            "image smaller than the {UQI_WINDOW}x{UQI_WINDOW} window"
        ));
    }
    let n = (UQI_WINDOW * UQI_WINDOW) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..reference.channels() {
        let (a, b) = (reference.plane(c), test.plane(c));
        // summed-area tables of x, y, x^2, y^2, xy
        let sat = |f: &dyn Fn(usize) -> f64| {
            let mut t = vec![0.0; (h + 1) * (w + 1)];
            for y in 0..h {
                let mut row = 0.0;
                for x in 0..w {
                    row += f(y * w + x);
                    t[(y + 1) * (w + 1) + x + 1] = t[y * (w + 1) + x + 1] + row;
                }
            }
            t
        };
        let tables = [
            sat(&|i| a[i]),
            sat(&|i| b[i]),
            sat(&|i| a[i] * a[i]),
            sat(&|i| b[i] * b[i]),
            sat(&|i| a[i] * b[i]),
        ];
        let boxsum = |t: &[f64], y: usize, x: usize| {
            let (y1, x1) = (y + UQI_WINDOW, x + UQI_WINDOW);
            t[y1 * (w + 1) + x1] - t[y * (w + 1) + x1] - t[y1 * (w + 1) + x] + t[y * (w + 1) + x]
        };
        for y in 0..=h - UQI_WINDOW {
            for x in 0..=w - UQI_WINDOW {
                let [sx, sy, sxx, syy, sxy] = tables.each_ref().map(|t| boxsum(t, y, x));
                let (mx, my) = (sx / n, sy / n);
                let vx = sxx / n - mx * mx;
                let vy = syy / n - my * my;
                let cxy = sxy / n - mx * my;
                let den = (vx + vy) * (mx * mx + my * my);
                if den != 0.0 {
                    total += 4.0 * cxy * mx * my / den;
                    count += 1;
                }
            }
        }
    }
    Ok(if count == 0 {
        1.0
    } else {
        total / count as f64
    })
}

/// Pixel-domain visual information fidelity over four scales, pooled over
/// channels. Computed on the 0..255 scale.
pub fn vif(reference: &ImageTensor, test: &ImageTensor) -> Result<f64> {
    same_shape(reference, test)?;
    if reference.height().min(reference.width()) < 32 {
        return Err(arg_err!("VIF needs images of at least 32x32"));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for c in 0..reference.channels() {
        let mut x = Plane::of(reference, c, 255.0);
        let mut y = Plane::of(test, c, 255.0);
        for scale in 1..=4u32 {
            let n = (1usize << (4 - scale + 1)) + 1;
            let k = gaussian_taps(n, n as f64 / 5.0);
            if scale > 1 {
                x = x.filter_same(&k).decimate();
                y = y.filter_same(&k).decimate();
            }
            let m = moments(&x, &y, &k);
            for i in 0..m.mu_x.len() {
                let s1 = m.sxx[i].max(0.0);
                let s2 = m.syy[i].max(0.0);
                let s12 = m.sxy[i];
                let (mut g, mut sv) = if s1 < VIF_FLOOR {
                    (0.0, s2)
                } else {
                    (s12 / s1, s2 - (s12 / s1) * s12)
                };
                if s2 < VIF_FLOOR {
                    g = 0.0;
                    sv = 0.0;
                }
                if g < 0.0 {
                    sv = s2;
                    g = 0.0;
                }
                let sv = sv.max(0.0);
                let s1 = if s1 < VIF_FLOOR { 0.0 } else { s1 };
                num += log10(1.0 + g * g * s1 / (sv + VIF_SIGMA_N_SQ));
                den += log10(1.0 + s1 / VIF_SIGMA_N_SQ);
            }
        }
    }
    Ok(if den == 0.0 { 1.0 } else { num / den })
}
