//! Convolution kernels via im2col + GEMM.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{dim_err, Result};
use crate::tensor::{gemm, MatRef, Shape, Tensor};

/// Stride and (possibly asymmetric) zero padding of a square-kernel
/// convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub pad_bottom: usize,
    pub pad_right: usize,
}

impl ConvSpec {
    pub const fn same(stride: usize, pad: usize) -> Self {
        ConvSpec {
            stride,
            pad_top: pad,
            pad_left: pad,
            pad_bottom: pad,
            pad_right: pad,
        }
    }

    pub const fn asymmetric(stride: usize, before: usize, after: usize) -> Self {
        ConvSpec {
            stride,
            pad_top: before,
            pad_left: before,
            pad_bottom: after,
            pad_right: after,
        }
    }

    pub fn output_hw(&self, h: usize, w: usize, k: usize) -> Result<(usize, usize)> {
        let ph = h + self.pad_top + self.pad_bottom;
        let pw = w + self.pad_left + self.pad_right;
        if self.stride == 0 || ph < k || pw < k {
            return Err(dim_err!("kernel {k} does not fit padded input {ph}x{pw}"));
        }
        Ok(((ph - k) / self.stride + 1, (pw - k) / self.stride + 1))
    }

    fn is_pointwise(&self, k: usize) -> bool {
        k == 1
            && self.stride == 1
            && self.pad_top == 0
            && self.pad_left == 0
            && self.pad_bottom == 0
            && self.pad_right == 0
    }
}

struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    ho: usize,
    wo: usize,
    spec: ConvSpec,
}

fn im2col(x: &[f64], g: &Geometry, cols: &mut [f64]) {
    let hw_out = g.ho * g.wo;
    let s = g.spec.stride;
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * hw_out..(row + 1) * hw_out];
                for oy in 0..g.ho {
                    let iy = (oy * s + ky) as isize - g.spec.pad_top as isize;
                    let out_row = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        out_row.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in out_row.iter_mut().enumerate() {
                        let ix = (ox * s + kx) as isize - g.spec.pad_left as isize;
                        *v = if ix < 0 || ix >= g.w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], g: &Geometry, dx: &mut [f64]) {
    let hw_out = g.ho * g.wo;
    let s = g.spec.stride;
    for c in 0..g.c {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let src = &cols[row * hw_out..(row + 1) * hw_out];
                for oy in 0..g.ho {
                    let iy = (oy * s + ky) as isize - g.spec.pad_top as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.wo {
                        let ix = (ox * s + kx) as isize - g.spec.pad_left as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

fn geometry(x: Shape, w: Shape, spec: ConvSpec) -> Result<Geometry> {
    if w.c != x.c || w.h != w.w {
        return Err(dim_err!(
            "conv weight {:?} incompatible with input {:?}",
            w,
            x
        ));
    }
    let (ho, wo) = spec.output_hw(x.h, x.w, w.h)?;
    Ok(Geometry {
        c: x.c,
        h: x.h,
        w: x.w,
        k: w.h,
        ho,
        wo,
        spec,
    })
}

/// `y = conv(x, w) + b`; `w` is `(out, in, k, k)`, `b` has `out` values.
pub fn conv2d(x: &Tensor, w: &Tensor, b: Option<&Tensor>, spec: ConvSpec) -> Result<Tensor> {
    let xs = x.shape();
    let ws = w.shape();
    let g = geometry(xs, ws, spec)?;
    let co = ws.n;
    let ckk = g.c * g.k * g.k;
    let hw_out = g.ho * g.wo;
    let mut y = Tensor::zeros(Shape::new(xs.n, co, g.ho, g.wo));
    let pointwise = spec.is_pointwise(g.k);
    let mut cols = if pointwise {
        Vec::new()
    } else {
        vec![0.0; ckk * hw_out]
    };
    for n in 0..xs.n {
        let out = y.sample_mut(n);
        if let Some(b) = b {
            for (oc, chunk) in out.chunks_mut(hw_out).enumerate() {
                chunk.fill(b.data()[oc]);
            }
        }
        let beta = if b.is_some() { 1.0 } else { 0.0 };
        let input = if pointwise {
            x.sample(n)
        } else {
            im2col(x.sample(n), &g, &mut cols);
            &cols
        };
        gemm(
            MatRef::new(w.data(), co, ckk),
            MatRef::new(input, ckk, hw_out),
            beta,
            out,
        );
    }
    Ok(y)
}

/// Gradients of [`conv2d`] with respect to input, weight and bias.
pub fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
    spec: ConvSpec,
    want_dx: bool,
    want_dw: bool,
    want_db: bool,
) -> Result<(Option<Tensor>, Option<Tensor>, Option<Vec<f64>>)> {
    let xs = x.shape();
    let ws = w.shape();
    let g = geometry(xs, ws, spec)?;
    let co = ws.n;
    let ckk = g.c * g.k * g.k;
    let hw_out = g.ho * g.wo;
    let pointwise = spec.is_pointwise(g.k);
    let mut dx = want_dx.then(|| Tensor::zeros(xs));
    let mut dw = want_dw.then(|| Tensor::zeros(ws));
    let mut db = want_db.then(|| vec![0.0; co]);
    let mut cols = if pointwise || !want_dw {
        Vec::new()
    } else {
        vec![0.0; ckk * hw_out]
    };
    let mut dcols = if want_dx && !pointwise {
        vec![0.0; ckk * hw_out]
    } else {
        Vec::new()
    };
    for n in 0..xs.n {
        let dyn_ = dy.sample(n);
        if let Some(db) = db.as_mut() {
            for (oc, chunk) in dyn_.chunks(hw_out).enumerate() {
                db[oc] += chunk.iter().sum::<f64>();
            }
        }
        if let Some(dw) = dw.as_mut() {
            let input: &[f64] = if pointwise {
                x.sample(n)
            } else {
                im2col(x.sample(n), &g, &mut cols);
                &cols
            };
            gemm(
                MatRef::new(dyn_, co, hw_out),
                MatRef::t(input, ckk, hw_out),
                1.0,
                dw.data_mut(),
            );
        }
        if let Some(dx) = dx.as_mut() {
            if pointwise {
                gemm(
                    MatRef::t(w.data(), co, ckk),
                    MatRef::new(dyn_, co, hw_out),
                    1.0,
                    dx.sample_mut(n),
                );
            } else {
                gemm(
                    MatRef::t(w.data(), co, ckk),
                    MatRef::new(dyn_, co, hw_out),
                    0.0,
                    &mut dcols,
                );
                col2im(&dcols, &g, dx.sample_mut(n));
            }
        }
    }
    Ok((dx, dw, db))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, uniform};

    fn rand_tensor(shape: Shape, seed: u64) -> Tensor {
        let mut r = stream(seed, 0);
        Tensor::from_fn(shape, |_, _, _, _| uniform(&mut r, -1.0, 1.0))
    }

    /// Direct-definition convolution.
    fn naive(x: &Tensor, w: &Tensor, b: &Tensor, spec: ConvSpec) -> Tensor {
        let xs = x.shape();
        let ws = w.shape();
        let (ho, wo) = spec.output_hw(xs.h, xs.w, ws.h).unwrap();
        Tensor::from_fn(Shape::new(xs.n, ws.n, ho, wo), |n, oc, oy, ox| {
            let mut acc = b.data()[oc];
            for c in 0..xs.c {
                for ky in 0..ws.h {
                    for kx in 0..ws.w {
                        let iy = (oy * spec.stride + ky) as isize - spec.pad_top as isize;
                        let ix = (ox * spec.stride + kx) as isize - spec.pad_left as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < xs.h && (ix as usize) < xs.w {
                            acc += w.at(oc, c, ky, kx) * x.at(n, c, iy as usize, ix as usize);
                        }
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn matches_direct_definition() {
        for (spec, k) in [
            (ConvSpec::same(1, 1), 3),
            (ConvSpec::same(2, 1), 4),
            (ConvSpec::asymmetric(1, 1, 2), 4),
            (ConvSpec::same(1, 0), 1),
            (ConvSpec::same(2, 1), 3),
        ] {
            let x = rand_tensor(Shape::new(2, 3, 9, 8), 1);
            let w = rand_tensor(Shape::new(5, 3, k, k), 2);
            let b = rand_tensor(Shape::new(1, 5, 1, 1), 3);
            let got = conv2d(&x, &w, Some(&b), spec).unwrap();
            let want = naive(&x, &w, &b, spec);
            assert_eq!(got.shape(), want.shape());
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_is_adjoint() {
        // conv is linear in x and in w: <dy, y> = <dx, x> = <dw, w>
        for (spec, k) in [
            (ConvSpec::same(1, 1), 3),
            (ConvSpec::same(2, 1), 4),
            (ConvSpec::asymmetric(1, 1, 2), 4),
            (ConvSpec::same(1, 0), 1),
        ] {
            let x = rand_tensor(Shape::new(2, 3, 7, 6), 4);
            let w = rand_tensor(Shape::new(4, 3, k, k), 5);
            let y = conv2d(&x, &w, None, spec).unwrap();
            let dy = rand_tensor(y.shape(), 6);
            let (dx, dw, db) = conv2d_backward(&x, &w, &dy, spec, true, true, true).unwrap();
            let dx = dx.unwrap();
            let dw = dw.unwrap();
            let dot = |a: &Tensor, b: &Tensor| {
                a.data()
                    .iter()
                    .zip(b.data())
                    .map(|(p, q)| p * q)
                    .sum::<f64>()
            };
            let lhs = dot(&dy, &y);
            assert!((lhs - dot(&dx, &x)).abs() < 1e-9);
            assert!((lhs - dot(&dw, &w)).abs() < 1e-9);
            let db = db.unwrap();
            for oc in 0..4 {
                let s: f64 = (0..2)
                    .map(|n| {
                        dy.sample(n)[oc * y.shape().plane()..(oc + 1) * y.shape().plane()]
                            .iter()
                            .sum::<f64>()
                    })
                    .sum();
                assert!((db[oc] - s).abs() < 1e-12);
            }
        }
    }
}
