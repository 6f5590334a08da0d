use alloc::vec::Vec;

use super::{bicubic_downscale, ImageTensor, PairedSample};
use crate::boxes::BoundingBox;
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Augment {
    FlipH,
    FlipV,
    Sharpen,
}

fn flip(img: &ImageTensor, horizontal: bool) -> ImageTensor {
    let (h, w) = (img.height(), img.width());
    ImageTensor::from_fn(img.channels(), h, w, |c, y, x| {
        if horizontal {
            img.at(c, y, w - 1 - x)
        } else {
            img.at(c, h - 1 - y, x)
        }
    })
    .expect("flip keeps values in range")
}

/// 3x3 sharpening (center 5, edge neighbours -1), clamp-to-edge borders,
/// output clamped to `[0, 1]`.
pub fn sharpen(img: &ImageTensor) -> ImageTensor {
    let (h, w) = (img.height() as isize, img.width() as isize);
    let px = |c: usize, y: isize, x: isize| {
        img.at(c, y.clamp(0, h - 1) as usize, x.clamp(0, w - 1) as usize)
    };
    ImageTensor::from_fn(img.channels(), h as usize, w as usize, |c, y, x| {
        let (y, x) = (y as isize, x as isize);
        let v = 5.0 * px(c, y, x)
            - px(c, y - 1, x)
            - px(c, y + 1, x)
            - px(c, y, x - 1)
            - px(c, y, x + 1);
        v.clamp(0.0, 1.0)
    })
    .expect("clamped")
}

/// Applies one augmentation to a pair. Flips move pixels and labels
/// together; sharpening changes HR only and re-derives LR from it so the
/// pair stays consistent.
pub fn augment(sample: &PairedSample, op: Augment) -> Result<PairedSample> {
    match op {
        Augment::FlipH | Augment::FlipV => {
            let horizontal = op == Augment::FlipH;
            let labels: Vec<BoundingBox> = sample
                .labels
                .iter()
                .map(|b| {
                    if horizontal {
                        BoundingBox {
                            cx: 1.0 - b.cx,
                            ..*b
                        }
                    } else {
                        BoundingBox {
                            cy: 1.0 - b.cy,
                            ..*b
                        }
                    }
                })
                .collect();
            PairedSample::new(
                flip(&sample.hr, horizontal),
                flip(&sample.lr, horizontal),
                labels,
            )
        }
        Augment::Sharpen => {
            let hr = sharpen(&sample.hr);
            let lr = bicubic_downscale(&hr, 4)?;
            PairedSample::new(hr, lr, sample.labels.clone())
        }
    }
}
