//! Straightforward reference implementations used to cross-check the
//! library. Each one favours the literal definition over speed.

#![allow(dead_code)]

use srvd_core::{BoundingBox, ImageTensor};

type Plane = Vec<Vec<f64>>;

fn plane(img: &ImageTensor, c: usize, scale: f64) -> Plane {
    (0..img.height())
        .map(|y| (0..img.width()).map(|x| scale * img.at(c, y, x)).collect())
        .collect()
}

/// 2D Gaussian window normalized over its own support.
fn window(n: usize, sigma: f64) -> Plane {
    let c = (n as f64 - 1.0) / 2.0;
    let mut w: Plane = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    (-((i as f64 - c).powi(2) + (j as f64 - c).powi(2)) / (2.0 * sigma * sigma))
                        .exp()
                })
                .collect()
        })
        .collect();
    let s: f64 = w.iter().flatten().sum();
    w.iter_mut().flatten().for_each(|v| *v /= s);
    w
}

/// Weighted local statistics at one window position.
struct Local {
    mx: f64,
    my: f64,
    vx: f64,
    vy: f64,
    cxy: f64,
}

fn local(x: &Plane, y: &Plane, w: &Plane, top: usize, left: usize) -> Local {
    let n = w.len();
    let (mut mx, mut my) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            mx += w[i][j] * x[top + i][left + j];
            my += w[i][j] * y[top + i][left + j];
        }
    }
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let (dx, dy) = (x[top + i][left + j] - mx, y[top + i][left + j] - my);
            vx += w[i][j] * dx * dx;
            vy += w[i][j] * dy * dy;
            cxy += w[i][j] * dx * dy;
        }
    }
    Local {
        mx,
        my,
        vx,
        vy,
        cxy,
    }
}

fn positions(p: &Plane, n: usize) -> impl Iterator<Item = (usize, usize)> {
    let (h, w) = (p.len(), p[0].len());
    (0..=h - n).flat_map(move |t| (0..=w - n).map(move |l| (t, l)))
}

fn halve(p: &Plane) -> Plane {
    (0..p.len() / 2)
        .map(|y| {
            (0..p[0].len() / 2)
                .map(|x| {
                    (p[2 * y][2 * x]
                        + p[2 * y][2 * x + 1]
                        + p[2 * y + 1][2 * x]
                        + p[2 * y + 1][2 * x + 1])
                        / 4.0
                })
                .collect()
        })
        .collect()
}

pub fn psnr(a: &ImageTensor, b: &ImageTensor) -> f64 {
    let n = a.data().len() as f64;
    let mse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Multi-scale SSIM: 11x11 Gaussian windows (sigma 1.5), 2x2 averaging
/// between scales, contrast-structure at every scale and luminance at the
/// last, exponents truncated to the usable scales and renormalized.
pub fn mssim(a: &ImageTensor, b: &ImageTensor) -> f64 {
    const EXPONENTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
    let (c1, c2) = (1e-4, 9e-4);
    let w = window(11, 1.5);
    let mut scales = 0;
    let mut d = a.height().min(a.width());
    while scales < 5 && d >= 11 {
        scales += 1;
        d /= 2;
    }
    let total: f64 = EXPONENTS[..scales].iter().sum();
    let mut sum = 0.0;
    for c in 0..a.channels() {
        let (mut x, mut y) = (plane(a, c, 1.0), plane(b, c, 1.0));
        let mut value = 1.0;
        for s in 0..scales {
            let (mut cs, mut full, mut count) = (0.0, 0.0, 0.0);
            for (t, l) in positions(&x, 11) {
                let m = local(&x, &y, &w, t, l);
                let structure = (2.0 * m.cxy + c2) / (m.vx + m.vy + c2);
                cs += structure;
                full += structure * (2.0 * m.mx * m.my + c1) / (m.mx * m.mx + m.my * m.my + c1);
                count += 1.0;
            }
            let term = if s + 1 == scales {
                full / count
            } else {
                cs / count
            };
            let e = EXPONENTS[s] / total;
            value *= term.signum() * term.abs().powf(e);
            x = halve(&x);
            y = halve(&y);
        }
        sum += value;
    }
    sum / a.channels() as f64
}

/// Universal quality index, 8x8 uniform windows at stride 1.
pub fn uqi(a: &ImageTensor, b: &ImageTensor) -> f64 {
    let (mut total, mut count) = (0.0, 0usize);
    let w = vec![vec![1.0 / 64.0; 8]; 8];
    for c in 0..a.channels() {
        let (x, y) = (plane(a, c, 1.0), plane(b, c, 1.0));
        for (t, l) in positions(&x, 8) {
            let m = local(&x, &y, &w, t, l);
            let den = (m.vx + m.vy) * (m.mx * m.mx + m.my * m.my);
            if den != 0.0 {
                total += 4.0 * m.cxy * m.mx * m.my / den;
                count += 1;
            }
        }
    }
    if count == 0 {
        1.0
    } else {
        total / count as f64
    }
}

/// Clamped-border convolution followed by keeping even rows and columns.
fn blur_decimate(p: &Plane, w: &Plane) -> Plane {
    let (h, wd, n) = (p.len() as isize, p[0].len() as isize, w.len() as isize);
    let r = n / 2;
    let at = |y: isize, x: isize| p[y.clamp(0, h - 1) as usize][x.clamp(0, wd - 1) as usize];
    (0..h)
        .step_by(2)
        .map(|y| {
            (0..wd)
                .step_by(2)
                .map(|x| {
                    let mut s = 0.0;
                    for i in 0..n {
                        for j in 0..n {
                            s += w[i as usize][j as usize] * at(y + i - r, x + j - r);
                        }
                    }
                    s
                })
                .collect()
        })
        .collect()
}

/// Pixel-domain VIF over four scales on the 0..255 range, noise variance 2,
/// numerator and denominator pooled over scales and channels.
pub fn vif(a: &ImageTensor, b: &ImageTensor) -> f64 {
    let sigma_nsq = 2.0;
    let tiny = 1e-10;
    let (mut num, mut den) = (0.0, 0.0);
    for c in 0..a.channels() {
        let (mut x, mut y) = (plane(a, c, 255.0), plane(b, c, 255.0));
        for scale in 1..=4 {
            let n = (1usize << (5 - scale)) + 1;
            let w = window(n, n as f64 / 5.0);
            if scale > 1 {
                x = blur_decimate(&x, &w);
                y = blur_decimate(&y, &w);
            }
            for (t, l) in positions(&x, n) {
                let m = local(&x, &y, &w, t, l);
                let mut s1 = m.vx.max(0.0);
                let s2 = m.vy.max(0.0);
                let mut g = m.cxy / (s1 + tiny);
                let mut sv = s2 - g * m.cxy;
                if s1 < tiny {
                    g = 0.0;
                    sv = s2;
                    s1 = 0.0;
                }
                if s2 < tiny {
                    g = 0.0;
                    sv = 0.0;
                }
                if g < 0.0 {
                    sv = s2;
                    g = 0.0;
                }
                let sv = sv.max(tiny);
                num += (1.0 + g * g * s1 / (sv + sigma_nsq)).log10();
                den += (1.0 + s1 / sigma_nsq).log10();
            }
        }
    }
    if den == 0.0 {
        1.0
    } else {
        num / den
    }
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = ((a.cx + a.w / 2.0).min(b.cx + b.w / 2.0) - (a.cx - a.w / 2.0).max(b.cx - b.w / 2.0))
        .max(0.0);
    let iy = ((a.cy + a.h / 2.0).min(b.cy + b.h / 2.0) - (a.cy - a.h / 2.0).max(b.cy - b.h / 2.0))
        .max(0.0);
    let inter = ix * iy;
    let union = a.w * a.h + b.w * b.h - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Repeatedly take the most confident survivor and strike out everything
/// that overlaps it too much.
pub fn nms(boxes: &[BoundingBox], threshold: f64) -> Vec<BoundingBox> {
    let mut pool: Vec<(usize, BoundingBox)> = boxes.iter().copied().enumerate().collect();
    let mut kept = Vec::new();
    while !pool.is_empty() {
        let mut best = 0;
        for k in 1..pool.len() {
            let (s, b) = (pool[k].1.score(), pool[best].1.score());
            if s > b || (s == b && pool[k].0 < pool[best].0) {
                best = k;
            }
        }
        let (_, top) = pool.remove(best);
        pool.retain(|(_, b)| iou(&top, b) <= threshold);
        kept.push(top);
    }
    kept
}

/// Eleven-point interpolated AP by sweeping every confidence threshold:
/// at each threshold count TP and FP among detections at or above it, then
/// average over recall levels the best precision reaching that recall.
pub fn ap_sweep(matched: &[(f64, bool)], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return if matched.is_empty() { 1.0 } else { 0.0 };
    }
    let mut ops: Vec<(usize, f64)> = Vec::new();
    for &(t, _) in matched {
        let tp = matched.iter().filter(|m| m.0 >= t && m.1).count();
        let all = matched.iter().filter(|m| m.0 >= t).count();
        ops.push((tp, tp as f64 / all as f64));
    }
    let mut sum = 0.0;
    for level in 0..=10usize {
        let best = ops
            .iter()
            .filter(|(tp, _)| tp * 10 >= level * n_gt)
            .map(|o| o.1)
            .fold(0.0, f64::max);
        sum += best;
    }
    sum / 11.0
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auc_pairwise(scores: &[(f64, bool)]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for p in scores.iter().filter(|s| s.1) {
        for n in scores.iter().filter(|s| !s.1) {
            pairs += 1.0;
            wins += if p.0 > n.0 {
                1.0
            } else if p.0 == n.0 {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / pairs
}
